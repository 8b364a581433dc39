//! Line-delimited probe files: `{question_id, image, text, label, split}` per
//! line, with optional `object` and `dataset` fields.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::protocol::{Answer, DatasetTag, ProbeItem, Split, ValidationError};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: ValidationError,
    },
    #[error("line {line}: duplicate item id {id} (first seen on line {first_line})")]
    Duplicate { id: String, line: usize, first_line: usize },
}

impl ProbeError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ProbeError::Io { .. } => None,
            ProbeError::Parse { line, .. } | ProbeError::Invalid { line, .. } | ProbeError::Duplicate { line, .. } => {
                Some(*line)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawProbe {
    question_id: Value,
    image: String,
    text: String,
    label: String,
    #[serde(default)]
    split: Option<String>,
    #[serde(default)]
    object: Option<String>,
    #[serde(default)]
    dataset: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Directory relative image paths are joined onto.
    pub image_root: Option<PathBuf>,
    /// Tag for lines without a `dataset` field; POPE when absent.
    pub default_tag: Option<DatasetTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub items: Vec<ProbeItem>,
    /// Items per split in the whole file, before filtering.
    pub split_counts: BTreeMap<Split, usize>,
    pub yes: usize,
    pub no: usize,
    pub warnings: Vec<String>,
}

impl ProbeSet {
    /// Share of Yes gold labels among the returned items, in percent.
    pub fn yes_share(&self) -> Option<f64> {
        let n = self.yes + self.no;
        (n > 0).then(|| 100.0 * self.yes as f64 / n as f64)
    }
}

static QUESTION: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)^\s*is there (?:an?|any) (.+?) in the (?:image|picture|photo)\s*\?").unwrap());

/// Object named by a question of the form "Is there a/an X in the image?".
pub fn object_from_question(text: &str) -> Option<String> {
    QUESTION.captures(text).map(|c| c[1].trim().to_string())
}

fn split_from_name(name: &str) -> Option<Split> {
    let lower = name.to_ascii_lowercase();
    Split::ALL.into_iter().find(|s| lower.contains(s.as_str()))
}

fn resolve_image(image: &str, root: Option<&Path>) -> String {
    let is_remote = image.contains("://");
    match root {
        Some(root) if !is_remote && Path::new(image).is_relative() => root.join(image).display().to_string(),
        _ => image.to_string(),
    }
}

pub fn load_probes(path: &Path, split_filter: Option<Split>) -> Result<ProbeSet, ProbeError> {
    load_probes_with(path, split_filter, &LoadOptions::default())
}

pub fn load_probes_with(path: &Path, split_filter: Option<Split>, opts: &LoadOptions) -> Result<ProbeSet, ProbeError> {
    let text = fs::read_to_string(path).map_err(|source| ProbeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    parse_probes(&text, name, split_filter, opts)
}

/// Parse probe lines; `source_name` supplies the split when lines carry none.
/// Fails on the first bad line.
pub fn parse_probes(
    text: &str,
    source_name: &str,
    split_filter: Option<Split>,
    opts: &LoadOptions,
) -> Result<ProbeSet, ProbeError> {
    let (all, mut errors) = parse_lines(text, source_name, opts, true);
    if !errors.is_empty() {
        return Err(errors.remove(0));
    }
    Ok(summarize(all, split_filter))
}

/// Like [`parse_probes`] but keeps going, returning every violation along
/// with the set of lines that were valid.
pub fn scan_probes(text: &str, source_name: &str, opts: &LoadOptions) -> (ProbeSet, Vec<ProbeError>) {
    let (all, errors) = parse_lines(text, source_name, opts, false);
    (summarize(all, None), errors)
}

fn parse_line(raw_line: &str, line: usize, file_split: Option<Split>, opts: &LoadOptions) -> Result<ProbeItem, ProbeError> {
    let parse_err = |message: String| ProbeError::Parse { line, message };
    let raw: RawProbe = serde_json::from_str(raw_line).map_err(|e| parse_err(e.to_string()))?;
    let id = match &raw.question_id {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(parse_err("question_id must be a string or an integer".into())),
    };
    let gold = Answer::parse(&raw.label).ok_or_else(|| parse_err(format!("label {:?} is not yes/no", raw.label)))?;
    let split = match raw.split.as_deref() {
        Some(s) => Split::parse(s).ok_or_else(|| parse_err(format!("unknown split {s:?}")))?,
        None => file_split.ok_or_else(|| parse_err("no split field and none in the file name".into()))?,
    };
    let dataset_tag = match raw.dataset.as_deref() {
        Some(d) => DatasetTag::parse(d).ok_or_else(|| parse_err(format!("unknown dataset tag {d:?}")))?,
        None => opts.default_tag.unwrap_or(DatasetTag::Pope),
    };
    let object_name = match raw.object {
        Some(o) => o,
        None => object_from_question(&raw.text)
            .ok_or_else(|| parse_err(format!("cannot find the object in {:?}", raw.text)))?,
    };
    let item = ProbeItem {
        id,
        image_ref: resolve_image(&raw.image, opts.image_root.as_deref()),
        object_name,
        question_text: raw.text,
        gold_label: gold,
        split,
        dataset_tag,
    };
    item.validate().map_err(|source| ProbeError::Invalid { line, source })?;
    Ok(item)
}

fn parse_lines(text: &str, source_name: &str, opts: &LoadOptions, stop_early: bool) -> (Vec<ProbeItem>, Vec<ProbeError>) {
    let file_split = split_from_name(source_name);
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut all = Vec::new();
    let mut errors = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line(raw_line, line, file_split, opts).and_then(|item| match seen.get(&item.id) {
            Some(&first_line) => Err(ProbeError::Duplicate {
                id: item.id,
                line,
                first_line,
            }),
            None => Ok(item),
        });
        match parsed {
            Ok(item) => {
                seen.insert(item.id.clone(), line);
                all.push(item);
            }
            Err(e) => {
                errors.push(e);
                if stop_early {
                    break;
                }
            }
        }
    }
    (all, errors)
}

fn summarize(all: Vec<ProbeItem>, split_filter: Option<Split>) -> ProbeSet {
    let mut split_counts = BTreeMap::new();
    for item in &all {
        *split_counts.entry(item.split).or_insert(0) += 1;
    }
    let items: Vec<ProbeItem> = all
        .into_iter()
        .filter(|i| split_filter.map_or(true, |s| i.split == s))
        .collect();
    let yes = items.iter().filter(|i| i.gold_label == Answer::Yes).count();
    let no = items.len() - yes;
    let mut set = ProbeSet {
        items,
        split_counts,
        yes,
        no,
        warnings: Vec::new(),
    };
    let creative = set.items.iter().all(|i| i.dataset_tag == DatasetTag::PopeC);
    if let Some(share) = set.yes_share() {
        if !creative && (share - 50.0).abs() > 2.0 {
            let msg = format!("gold labels are unbalanced: {share:.2}% Yes over {} items", set.items.len());
            tracing::warn!("{msg}");
            set.warnings.push(msg);
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: usize, label: &str, split: &str) -> String {
        format!(
            r#"{{"question_id": {id}, "image": "COCO_{id}.jpg", "text": "Is there a dog in the image?", "label": "{label}", "split": "{split}"}}"#
        )
    }

    #[test]
    fn balanced_file_loads_without_warning() {
        let text: Vec<String> = (0..3000)
            .map(|i| line(i, if i % 2 == 0 { "yes" } else { "no" }, ["random", "popular", "adversarial"][i % 3]))
            .collect();
        let set = parse_probes(&text.join("\n"), "pope.jsonl", None, &LoadOptions::default()).unwrap();
        assert_eq!(set.items.len(), 3000);
        assert!(set.warnings.is_empty());
        assert_eq!(set.split_counts[&Split::Random], 1000);
        assert_eq!(set.items[0].object_name, "dog");
    }

    #[test]
    fn malformed_line_is_named() {
        let text = format!("{}\n{{not json\n{}", line(1, "yes", "random"), line(2, "no", "random"));
        let err = parse_probes(&text, "x.jsonl", None, &LoadOptions::default()).unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().starts_with("line 2:"));
    }

    #[test]
    fn split_filter_and_inference() {
        let text = [line(1, "yes", "random"), line(2, "no", "adversarial"), line(3, "yes", "adversarial"), line(4, "no", "popular")].join("\n");
        let set = parse_probes(&text, "x.jsonl", Some(Split::Adversarial), &LoadOptions::default()).unwrap();
        assert_eq!(set.items.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), vec!["2", "3"]);
        assert_eq!(set.split_counts.values().sum::<usize>(), 4);

        let bare = r#"{"question_id": "a", "image": "i.jpg", "text": "Is there an apple in the image?", "label": "no"}"#;
        let set = parse_probes(bare, "coco_pope_popular.json", None, &LoadOptions::default()).unwrap();
        assert_eq!(set.items[0].split, Split::Popular);
        assert_eq!(set.items[0].object_name, "apple");
        assert!(parse_probes(bare, "probes.jsonl", None, &LoadOptions::default()).is_err());
    }

    #[test]
    fn duplicates_and_imbalance() {
        let text = [line(1, "yes", "random"), line(1, "no", "random")].join("\n");
        assert!(matches!(
            parse_probes(&text, "x", None, &LoadOptions::default()),
            Err(ProbeError::Duplicate { line: 2, first_line: 1, .. })
        ));
        let text = [line(1, "yes", "random"), line(2, "yes", "random"), line(3, "no", "random")].join("\n");
        let set = parse_probes(&text, "x", None, &LoadOptions::default()).unwrap();
        assert_eq!(set.warnings.len(), 1);
    }

    #[test]
    fn image_root_and_tags() {
        let opts = LoadOptions { image_root: Some(PathBuf::from("/data/coco")), default_tag: Some(DatasetTag::PopeC) };
        let text = r#"{"question_id": 7, "image": "a.jpg", "text": "Is there a bed in the image?", "label": "yes", "split": "random"}"#;
        let set = parse_probes(text, "x", None, &opts).unwrap();
        assert_eq!(set.items[0].image_ref, "/data/coco/a.jpg");
        assert_eq!(set.items[0].dataset_tag, DatasetTag::PopeC);
        let bad = text.replace("\"yes\"", "\"no\"");
        assert!(matches!(parse_probes(&bad, "x", None, &opts), Err(ProbeError::Invalid { .. })));
        let url = text.replace("a.jpg", "https://h/a.jpg");
        assert_eq!(parse_probes(&url, "x", None, &opts).unwrap().items[0].image_ref, "https://h/a.jpg");
    }
}
