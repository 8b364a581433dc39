//! The four commands. Each returns an [`Exit`] or a [`CliError`]; printing
//! goes to the writer passed in so tests can capture it.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::artifacts::{self, file_digest, read_json, read_jsonl, write_json_atomic, write_jsonl, FileSink, RunDir};
use super::config::{ConfigError, RunConfig};
use super::manifest::{RunManifest, RunStatus};
use crate::bench::{
    apply_patch, compute_metrics, creativity_ratio, error_budget_exceeded, load_probes_with, run_suite, scan_probes,
    CreativityReport, LoadOptions, MetricsError, MetricsReport, PatchError, PatchList, ProbeError, ResultRecord,
    SuiteOptions,
};
use crate::clock::{Clock, SystemClock};
use crate::gateway::{Gateway, GatewayError, UreqTransport};
use crate::interpret::{cause_report, classify_cause, needs_classification, CauseLabel, CauseReport};
use crate::persona::{Catalog, CatalogLoadError, ExemplarError, ExemplarStore, PersonaError, PersonaSet};
use crate::propagation::PolicyTag;
use crate::protocol::{replay, Answer, DatasetTag, DebateConfig, Mode, ProbeItem, ProtocolError, Split, Turn};
use crate::runner::Engine;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing credentials: set the environment variable(s) {}", .0.join(", "))]
    MissingCredentials(Vec<String>),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Catalog(#[from] CatalogLoadError),
    #[error(transparent)]
    Exemplar(#[from] ExemplarError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0} already holds a run; use `resume` to continue it")]
    ExistingRun(PathBuf),
    #[error("no run manifest in {0}")]
    NoManifest(PathBuf),
    #[error("dataset changed since the run started (manifest hash {expected}, file hash {found}); refusing to mix datasets")]
    HashMismatch { expected: String, found: String },
    #[error("no results in {0}")]
    NoResults(PathBuf),
    #[error("{0}; run the suite on a POPE-C probe file to get a creativity ratio")]
    Metrics(#[from] MetricsError),
    #[error("replaying transcript of {item}: {source}")]
    Replay {
        item: String,
        #[source]
        source: ProtocolError,
    },
    #[error("{0}")]
    Usage(String),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok,
    /// Validation found violations.
    Invalid,
    /// The suite ran but the error budget was exceeded.
    SuiteFailed,
}

impl Exit {
    pub fn code(self) -> i32 {
        match self {
            Exit::Ok => 0,
            Exit::Invalid => 1,
            Exit::SuiteFailed => 2,
        }
    }
}

/// Where credentials and time come from.
pub struct Runtime<'a> {
    pub env: &'a dyn Fn(&str) -> Option<String>,
    pub clock: Arc<dyn Clock>,
}

fn process_env(var: &str) -> Option<String> {
    std::env::var(var).ok()
}

impl Runtime<'static> {
    pub fn process() -> Self {
        Self {
            env: &process_env,
            clock: Arc::new(SystemClock),
        }
    }
}

/// Command-line values that replace config file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub image_root: Option<PathBuf>,
    pub patch: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub split: Option<Split>,
    pub policy_r2: Option<PolicyTag>,
    pub policy_r3: Option<PolicyTag>,
    pub personas: Option<String>,
    pub no_exemplars: bool,
    pub parallel: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = &$src {
                    $dst = v.clone().into();
                }
            };
        }
        set!(self.dataset, config.dataset.path);
        set!(self.image_root, config.dataset.image_root);
        set!(self.patch, config.dataset.patch);
        set!(self.split, config.dataset.split);
        set!(self.mode, config.debate.mode);
        set!(self.policy_r2, config.debate.propagation_policy_round2);
        set!(self.policy_r3, config.debate.propagation_policy_round3);
        set!(self.personas, config.personas.set);
        set!(self.parallel, config.output.parallel);
        set!(self.out, config.output.dir);
        if self.no_exemplars {
            config.debate.exemplar_enabled = false;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    /// Stop after this many items, leaving the run resumable.
    pub max_items: Option<usize>,
}

/// Debate settings with the persona set resolved.
fn debate_config(config: &RunConfig) -> DebateConfig {
    let mut debate = config.debate.clone();
    debate.persona_set = config.persona_set().to_string();
    debate
}

pub fn build_engine(config: &RunConfig, rt: &Runtime<'_>) -> Result<Engine, CliError> {
    let missing = config.missing_credentials(rt.env);
    if !missing.is_empty() {
        return Err(CliError::MissingCredentials(missing));
    }
    let gateway = Gateway::new();
    for spec in &config.backends.specs {
        let transport = Arc::new(UreqTransport::new(Duration::from_secs(spec.timeout_secs)));
        gateway.register_backend_with(spec.clone(), rt.env, transport)?;
    }
    let catalog = match &config.personas.prompts_dir {
        Some(dir) => Catalog::load_dir(dir)?,
        None => Catalog::builtin().clone(),
    };
    let exemplars = match &config.personas.exemplars {
        Some(path) => ExemplarStore::load(path)?,
        None => ExemplarStore::builtin().clone(),
    };
    Ok(Engine::new(Arc::new(gateway), config.assignment()?)
        .with_catalog(catalog)
        .with_personas(PersonaSet::load(config.persona_set())?)
        .with_exemplars(Some(exemplars))
        .with_clock(rt.clock.clone())
        .with_char_budget(config.personas.prompt_char_budget))
}

struct Dataset {
    items: Vec<ProbeItem>,
    hash: String,
    patch_hash: Option<String>,
}

fn load_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    let path = config
        .dataset
        .path
        .as_ref()
        .ok_or_else(|| CliError::Usage("no dataset given (dataset.path or --dataset)".into()))?;
    let hash = file_digest(path).map_err(io_err(format!("reading {}", path.display())))?;
    let opts = LoadOptions {
        image_root: config.dataset.image_root.clone(),
        default_tag: None,
    };
    let set = load_probes_with(path, config.dataset.split, &opts)?;
    let (items, patch_hash) = match &config.dataset.patch {
        Some(p) => {
            let patch = PatchList::load(p)?;
            let (items, summary) = apply_patch(&set.items, &patch)?;
            tracing::info!(
                corrected = summary.corrected.len(),
                excluded = summary.excluded.len(),
                "applied patch"
            );
            (items, Some(file_digest(p).map_err(io_err(format!("reading {}", p.display())))?))
        }
        None => (set.items, None),
    };
    Ok(Dataset {
        items,
        hash,
        patch_hash,
    })
}

pub fn run(opts: &RunOptions, rt: &Runtime<'_>, out: &mut dyn Write) -> Result<Exit, CliError> {
    let mut config = match &opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    opts.overrides.apply(&mut config);
    config.validate()?;
    let out_dir = config
        .output
        .dir
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory given (output.dir or --out)".into()))?;
    let dir = RunDir::new(&out_dir);
    if dir.file(artifacts::MANIFEST).exists() {
        return Err(CliError::ExistingRun(out_dir));
    }
    let engine = build_engine(&config, rt)?;
    let data = load_dataset(&config)?;
    dir.create().map_err(io_err(format!("creating {}", out_dir.display())))?;
    let manifest = RunManifest::new(&config, data.hash, data.patch_hash, data.items.len(), rt.clock.now());
    write_json_atomic(&dir.file(artifacts::MANIFEST), &manifest).map_err(io_err("writing manifest"))?;
    execute(&engine, &data.items, &config, manifest, &dir, BTreeMap::new(), opts.max_items, rt, out)
}

pub fn resume(out_dir: &Path, parallel: Option<usize>, rt: &Runtime<'_>, out: &mut dyn Write) -> Result<Exit, CliError> {
    let dir = RunDir::new(out_dir);
    let manifest_path = dir.file(artifacts::MANIFEST);
    if !manifest_path.exists() {
        return Err(CliError::NoManifest(out_dir.to_path_buf()));
    }
    let mut manifest: RunManifest = read_json(&manifest_path).map_err(io_err("reading manifest"))?;
    let mut config = manifest.config.clone();
    if let Some(n) = parallel {
        config.output.parallel = n;
    }
    let data = load_dataset(&config)?;
    if data.hash != manifest.dataset_hash {
        return Err(CliError::HashMismatch {
            expected: manifest.dataset_hash.clone(),
            found: data.hash,
        });
    }
    if data.patch_hash != manifest.patch_hash {
        return Err(CliError::HashMismatch {
            expected: manifest.patch_hash.clone().unwrap_or_else(|| "none".into()),
            found: data.patch_hash.unwrap_or_else(|| "none".into()),
        });
    }
    let results_path = dir.file(artifacts::RESULTS);
    let previous: Vec<ResultRecord> = if results_path.exists() {
        read_jsonl(&results_path).map_err(io_err("reading results"))?
    } else {
        Vec::new()
    };
    let wanted: HashMap<&str, ()> = data.items.iter().map(|i| (i.id.as_str(), ())).collect();
    let completed: BTreeMap<String, ResultRecord> = previous
        .into_iter()
        .filter(|r| wanted.contains_key(r.item_id.as_str()))
        .map(|r| (r.item_id.clone(), r))
        .collect();
    if manifest.status != RunStatus::Running && completed.len() == data.items.len() {
        writeln!(out, "run already complete; nothing to do").map_err(io_err("writing output"))?;
        return Ok(match manifest.status {
            RunStatus::Failed => Exit::SuiteFailed,
            _ => Exit::Ok,
        });
    }
    // drop a torn final line before appending to the file again
    let kept: Vec<&ResultRecord> = data.items.iter().filter_map(|i| completed.get(&i.id)).collect();
    write_jsonl(&results_path, &kept).map_err(io_err("rewriting results"))?;
    writeln!(
        out,
        "resuming: {} of {} items already done",
        completed.len(),
        data.items.len()
    )
    .map_err(io_err("writing output"))?;
    let engine = build_engine(&config, rt)?;
    manifest.resumed_at.push(rt.clock.now());
    write_json_atomic(&manifest_path, &manifest).map_err(io_err("writing manifest"))?;
    execute(&engine, &data.items, &config, manifest, &dir, completed, None, rt, out)
}

#[allow(clippy::too_many_arguments)]
fn execute(
    engine: &Engine,
    items: &[ProbeItem],
    config: &RunConfig,
    mut manifest: RunManifest,
    dir: &RunDir,
    completed: BTreeMap<String, ResultRecord>,
    max_items: Option<usize>,
    rt: &Runtime<'_>,
    out: &mut dyn Write,
) -> Result<Exit, CliError> {
    let sink = FileSink::open(dir).map_err(io_err("opening results"))?;
    let opts = SuiteOptions {
        parallel: config.output.parallel,
        completed,
        limit: max_items,
    };
    let records = run_suite(engine, items, &debate_config(config), &opts, &sink);
    drop(sink);
    if records.len() < items.len() {
        writeln!(
            out,
            "stopped after {} of {} items; run `resume` to finish",
            records.len(),
            items.len()
        )
        .map_err(io_err("writing output"))?;
        return Ok(Exit::Ok);
    }
    write_jsonl(&dir.file(artifacts::RESULTS), &records).map_err(io_err("writing results"))?;
    let summary = MetricsSummary::compute(config.debate.mode, &records);
    write_json_atomic(&dir.file(artifacts::METRICS_JSON), &summary).map_err(io_err("writing metrics"))?;
    let text = summary.to_text();
    artifacts::write_atomic(&dir.file(artifacts::METRICS_TXT), text.as_bytes()).map_err(io_err("writing metrics"))?;
    out.write_all(text.as_bytes()).map_err(io_err("writing output"))?;
    manifest.finished_at = Some(rt.clock.now());
    manifest.status = if summary.error_budget_exceeded {
        RunStatus::Failed
    } else {
        RunStatus::Complete
    };
    write_json_atomic(&dir.file(artifacts::MANIFEST), &manifest).map_err(io_err("writing manifest"))?;
    if summary.error_budget_exceeded {
        writeln!(
            out,
            "suite failed: {} of {} items errored",
            summary.overall.counts.errors, summary.overall.counts.total
        )
        .map_err(io_err("writing output"))?;
        return Ok(Exit::SuiteFailed);
    }
    Ok(Exit::Ok)
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mode: Mode,
    pub overall: MetricsReport,
    pub by_split: BTreeMap<Split, MetricsReport>,
    pub by_dataset: BTreeMap<DatasetTag, MetricsReport>,
    pub error_budget_exceeded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub creativity: Option<CreativityReport>,
}

impl MetricsSummary {
    pub fn compute(mode: Mode, records: &[ResultRecord]) -> Self {
        let mut by_split: BTreeMap<Split, Vec<ResultRecord>> = BTreeMap::new();
        let mut by_dataset: BTreeMap<DatasetTag, Vec<ResultRecord>> = BTreeMap::new();
        for r in records {
            by_split.entry(r.split).or_default().push(r.clone());
            by_dataset.entry(r.dataset).or_default().push(r.clone());
        }
        let overall = compute_metrics(records);
        Self {
            mode,
            error_budget_exceeded: error_budget_exceeded(&overall.counts),
            overall,
            by_split: by_split.iter().map(|(k, v)| (*k, compute_metrics(v))).collect(),
            by_dataset: by_dataset.iter().map(|(k, v)| (*k, compute_metrics(v))).collect(),
            creativity: creativity_ratio(records).ok().filter(|_| !records.is_empty()),
        }
    }

    pub fn to_text(&self) -> String {
        let mode = self.mode.label();
        let mut rows = vec![(format!("{mode} overall"), self.overall)];
        if self.by_split.len() > 1 {
            rows.extend(self.by_split.iter().map(|(s, m)| (format!("{mode} {}", s.as_str()), *m)));
        }
        if self.by_dataset.len() > 1 {
            rows.extend(self.by_dataset.iter().map(|(d, m)| (format!("{mode} {}", d.as_str()), *m)));
        }
        let c = &self.overall.counts;
        let mut text = MetricsReport::table(&rows);
        text.push_str(&format!(
            "TP {}  FP {}  TN {}  FN {}  errors {}  total {}\n",
            c.tp, c.fp, c.tn, c.fn_, c.errors, c.total
        ));
        if let Some(cr) = &self.creativity {
            text.push_str(&creativity_line(cr));
        }
        text
    }
}

fn creativity_line(cr: &CreativityReport) -> String {
    let ratio = cr.ratio.map_or("-".to_string(), |r| format!("{r:.2}"));
    format!(
        "Creativity-ratio {ratio} ({} of {} answered Yes, {} errors)\n",
        cr.yes, cr.answered, cr.errors
    )
}

/// Contents of `causes.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausesFile {
    pub labels: Vec<(String, CauseLabel)>,
    pub report: CauseReport,
}

pub fn report(
    out_dir: &Path,
    creativity: bool,
    causes: bool,
    rt: &Runtime<'_>,
    out: &mut dyn Write,
) -> Result<Exit, CliError> {
    let dir = RunDir::new(out_dir);
    let results_path = dir.file(artifacts::RESULTS);
    if !results_path.exists() {
        return Err(CliError::NoResults(out_dir.to_path_buf()));
    }
    let records: Vec<ResultRecord> = read_jsonl(&results_path).map_err(io_err("reading results"))?;
    if records.is_empty() {
        return Err(CliError::NoResults(out_dir.to_path_buf()));
    }
    let manifest: Option<RunManifest> = read_json(&dir.file(artifacts::MANIFEST)).ok();
    let mode = manifest.as_ref().map(|m| m.config.debate.mode).unwrap_or(records[0].mode);
    let summary = MetricsSummary::compute(mode, &records);
    let mut text = summary.to_text();
    if creativity && summary.creativity.is_none() {
        creativity_ratio(&records)?;
    }
    if causes {
        let file = match read_json::<CausesFile>(&dir.file(artifacts::CAUSES)) {
            Ok(f) => f,
            Err(_) => {
                let manifest = manifest.ok_or_else(|| CliError::NoManifest(out_dir.to_path_buf()))?;
                let f = classify_run(&dir, &manifest.config, &records, rt)?;
                write_json_atomic(&dir.file(artifacts::CAUSES), &f).map_err(io_err("writing causes"))?;
                f
            }
        };
        text.push('\n');
        text.push_str(&file.report.to_text());
    }
    out.write_all(text.as_bytes()).map_err(io_err("writing output"))?;
    Ok(Exit::Ok)
}

fn classify_run(dir: &RunDir, config: &RunConfig, records: &[ResultRecord], rt: &Runtime<'_>) -> Result<CausesFile, CliError> {
    let engine = build_engine(config, rt)?;
    let data = load_dataset(config)?;
    let debate = debate_config(config);
    let items: HashMap<&str, &ProbeItem> = data.items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut labels = Vec::new();
    for r in records.iter().filter(|r| !r.is_error()) {
        let Some(item) = items.get(r.item_id.as_str()) else { continue };
        let turns: Vec<Turn> = read_jsonl(&dir.transcript(&r.item_id)).map_err(io_err(format!("reading transcript of {}", r.item_id)))?;
        let outcome = replay((*item).clone(), debate.clone(), &turns).map_err(|source| CliError::Replay {
            item: r.item_id.clone(),
            source,
        })?;
        if needs_classification(item, &outcome) {
            labels.push((r.item_id.clone(), classify_cause(&engine, item, &outcome)));
        }
    }
    let report = cause_report(&labels);
    Ok(CausesFile { labels, report })
}

pub fn validate(
    dataset: &Path,
    patch: Option<&Path>,
    image_root: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Exit, CliError> {
    let text = fs::read_to_string(dataset).map_err(io_err(format!("reading {}", dataset.display())))?;
    let name = dataset.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let opts = LoadOptions {
        image_root: image_root.map(Path::to_path_buf),
        default_tag: None,
    };
    let (set, violations) = scan_probes(&text, name, &opts);
    let mut report = String::new();
    let mut bad = violations.len();
    report.push_str(&format!("{}: {} valid items\n", dataset.display(), set.items.len()));
    for v in &violations {
        report.push_str(&format!("violation: {v}\n"));
    }
    report.push_str("balance:\n");
    let mut per_split: BTreeMap<Split, (usize, usize)> = BTreeMap::new();
    for item in &set.items {
        let e = per_split.entry(item.split).or_default();
        match item.gold_label {
            Answer::Yes => e.0 += 1,
            Answer::No => e.1 += 1,
        }
    }
    for (split, (yes, no)) in &per_split {
        let share = 100.0 * *yes as f64 / (*yes + *no) as f64;
        report.push_str(&format!("  {:<12} yes {yes:>6}  no {no:>6}  yes share {share:.2}%\n", split.as_str()));
    }
    if let Some(share) = set.yes_share() {
        report.push_str(&format!("  {:<12} yes {:>6}  no {:>6}  yes share {share:.2}%\n", "all", set.yes, set.no));
    }
    for w in &set.warnings {
        report.push_str(&format!("warning: {w}\n"));
    }
    if let Some(p) = patch {
        let patch = PatchList::load(p)?;
        let unknown = patch.unknown_ids(&set.items);
        if let Err(e) = patch.validate() {
            bad += 1;
            report.push_str(&format!("violation: {e}\n"));
        }
        for id in &unknown {
            bad += 1;
            report.push_str(&format!("violation: patch names unknown item {id}\n"));
        }
        if bad == 0 {
            let (_, summary) = apply_patch(&set.items, &patch)?;
            report.push_str(&format!(
                "patch dry run: {} corrected, {} excluded\n",
                summary.corrected.len(),
                summary.excluded.len()
            ));
            for (id, old, new) in &summary.corrected {
                report.push_str(&format!("  correct {id}: {old} -> {new}\n"));
            }
            for (id, reason) in &summary.excluded {
                report.push_str(&format!("  exclude {id}: {reason}\n"));
            }
        }
    }
    report.push_str(&format!("{bad} violation(s)\n"));
    out.write_all(report.as_bytes()).map_err(io_err("writing output"))?;
    Ok(if bad == 0 { Exit::Ok } else { Exit::Invalid })
}
