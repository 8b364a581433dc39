use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::Arc;

use mmdebate::bench::load_probes;
use mmdebate::clock::FixedClock;
use mmdebate::gateway::{BackendSpec, Gateway};
use mmdebate::protocol::{DebateConfig, Mode, ProbeItem};
use mmdebate::runner::AgentAssignment;
use mmdebate::Engine;
use mmdebate_ffi::*;
use serde_json::{json, Value};

fn debates_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/debates")
}

fn probes() -> Vec<ProbeItem> {
    load_probes(&debates_dir().join("probes.jsonl"), None).unwrap().items
}

fn engine() -> Engine {
    let gateway = Gateway::new();
    gateway
        .register_backend(BackendSpec::scripted("script", debates_dir().join("script.json")))
        .unwrap();
    Engine::new(Arc::new(gateway), AgentAssignment::all("script")).with_clock(Arc::new(FixedClock::default()))
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> Option<String> {
    let p = mmd_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

/// Take ownership of a library string.
unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    mmd_string_free(p);
    s
}

fn new_debate(item: &ProbeItem, config: Option<&DebateConfig>) -> *mut MmdDebate {
    let item = c(&serde_json::to_string(item).unwrap());
    let config = config.map(|cfg| c(&serde_json::to_string(cfg).unwrap()));
    let mut h = ptr::null_mut();
    let status = unsafe { mmd_debate_new(item.as_ptr(), config.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut h) };
    assert_eq!(status, MmdStatus::Ok, "{:?}", last_error());
    h
}

fn next_action(h: *mut MmdDebate) -> Result<Value, MmdStatus> {
    let mut out = ptr::null_mut();
    match unsafe { mmd_debate_next_action(h, &mut out) } {
        MmdStatus::Ok => Ok(serde_json::from_str(&unsafe { take(out) }).unwrap()),
        other => Err(other),
    }
}

#[test]
fn every_fixture_debate_replays_through_the_handle() {
    let engine = engine();
    for mode in [Mode::Mad, Mode::Sro] {
        let config = DebateConfig::with_mode(mode);
        for item in probes() {
            let Ok(outcome) = engine.run_debate(&item, &config, &mut |_| Ok(())) else { continue };
            let h = new_debate(&item, Some(&config));
            for turn in &outcome.transcript {
                let action = next_action(h).unwrap();
                assert_ne!(action["kind"], "halt", "{}", item.id);
                let t = c(&serde_json::to_string(turn).unwrap());
                assert_eq!(unsafe { mmd_debate_apply_turn(h, t.as_ptr()) }, MmdStatus::Ok, "{:?}", last_error());
                assert_eq!(last_error(), None);
            }
            let mut out = ptr::null_mut();
            assert_eq!(unsafe { mmd_debate_outcome(h, ptr::null(), &mut out) }, MmdStatus::Ok, "{:?}", last_error());
            let got: Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
            let mut want = serde_json::to_value(&outcome).unwrap();
            want["cause"] = Value::Null;
            assert_eq!(got, want, "{} {mode:?}", item.id);
            assert_eq!(unsafe { mmd_debate_is_done(h) }, 1);
            assert_eq!(next_action(h), Err(MmdStatus::Finished));
            // a second call hands back the stored outcome
            let mut again = ptr::null_mut();
            assert_eq!(unsafe { mmd_debate_outcome(h, ptr::null(), &mut again) }, MmdStatus::Ok);
            assert_eq!(serde_json::from_str::<Value>(&unsafe { take(again) }).unwrap(), got);
            unsafe { mmd_debate_free(h) };
        }
    }
}

#[test]
fn rejected_turns_leave_the_handle_unchanged() {
    let item = probes().remove(0);
    let h = new_debate(&item, None);
    let state = |h| {
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { mmd_debate_state(h, &mut out) }, MmdStatus::Ok);
        unsafe { take(out) }
    };
    let before = state(h);
    let outcome = engine().run_debate(&item, &DebateConfig::default(), &mut |_| Ok(())).unwrap();
    let mut judge_turn = serde_json::to_value(&outcome.transcript[0]).unwrap();
    judge_turn["role"] = json!("judge");
    judge_turn["message_kind"] = json!("judge_ask");
    let t = c(&judge_turn.to_string());
    assert_eq!(unsafe { mmd_debate_apply_turn(h, t.as_ptr()) }, MmdStatus::Protocol);
    assert!(last_error().unwrap().contains("unexpected turn"));
    assert_eq!(state(h), before);
    assert_eq!(unsafe { mmd_debate_is_done(h) }, 0);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mmd_debate_outcome(h, ptr::null(), &mut out) }, MmdStatus::Protocol);
    assert!(out.is_null());
    unsafe { mmd_debate_free(h) };
}

#[test]
fn judge_without_a_decision_is_reported() {
    let engine = engine();
    let config = DebateConfig::default();
    let (item, outcome) = probes()
        .into_iter()
        .find_map(|item| {
            let outcome = engine.run_debate(&item, &config, &mut |_| Ok(())).ok()?;
            outcome.judge_used.then_some((item, outcome))
        })
        .expect("a fixture debate that reaches the judge");
    let h = new_debate(&item, Some(&config));
    let undecided = c(r#"{"value":"unsure","rationale":"Hard to say."}"#);
    let mut out = ptr::null_mut();
    // too early: the debaters are still talking
    assert_eq!(unsafe { mmd_debate_outcome(h, undecided.as_ptr(), &mut out) }, MmdStatus::Protocol);
    let judge_at = outcome.transcript.iter().position(|t| t.role.as_str() == "judge").unwrap();
    for turn in &outcome.transcript[..judge_at] {
        let t = c(&serde_json::to_string(turn).unwrap());
        assert_eq!(unsafe { mmd_debate_apply_turn(h, t.as_ptr()) }, MmdStatus::Ok, "{:?}", last_error());
    }
    assert_eq!(next_action(h).unwrap()["kind"], "invoke_judge");
    assert_eq!(unsafe { mmd_debate_outcome(h, undecided.as_ptr(), &mut out) }, MmdStatus::JudgeUndecided);
    assert!(out.is_null());
    assert_eq!(unsafe { mmd_debate_is_done(h) }, 0);
    let decided = c(r#"{"value":"no","rationale":"No."}"#);
    assert_eq!(unsafe { mmd_debate_outcome(h, decided.as_ptr(), &mut out) }, MmdStatus::Ok);
    let got: Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(got["verdict"], "no");
    assert_eq!(got["judge_used"], true);
    unsafe { mmd_debate_free(h) };
    assert_eq!(unsafe { mmd_debate_is_done(ptr::null()) }, 0);
}

#[test]
fn bad_arguments_map_to_status_codes() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mmd_debate_new(ptr::null(), ptr::null(), &mut h) }, MmdStatus::NullArgument);
    assert_eq!(last_error().as_deref(), Some("item_json is null"));
    let junk = c("{not json");
    assert_eq!(unsafe { mmd_debate_new(junk.as_ptr(), ptr::null(), &mut h) }, MmdStatus::InvalidJson);
    assert!(last_error().unwrap().starts_with("item_json:"));
    let mut item = serde_json::to_value(probes().remove(0)).unwrap();
    item["object_name"] = json!("");
    let empty = c(&item.to_string());
    assert_eq!(unsafe { mmd_debate_new(empty.as_ptr(), ptr::null(), &mut h) }, MmdStatus::InvalidArgument);
    assert!(h.is_null());
    let bad_utf8 = [0xffu8, 0xfe, 0];
    let mut stance = MmdStance::Unsure;
    assert_eq!(unsafe { mmd_parse_stance(bad_utf8.as_ptr().cast(), &mut stance) }, MmdStatus::InvalidUtf8);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mmd_debate_next_action(ptr::null_mut(), &mut out) }, MmdStatus::NullArgument);
    // success clears the message
    let yes = c("Yes.");
    assert_eq!(unsafe { mmd_parse_stance(yes.as_ptr(), &mut stance) }, MmdStatus::Ok);
    assert_eq!(last_error(), None);
    unsafe { mmd_string_free(ptr::null_mut()) };
    unsafe { mmd_debate_free(ptr::null_mut()) };
}

#[test]
fn stance_and_region_lookups() {
    for (text, want) in [
        ("Yes, there is a clock on the wall.", MmdStance::Yes),
        ("No. The image shows a dashboard.", MmdStance::No),
        ("It is difficult to determine from the image.", MmdStance::Unsure),
    ] {
        let t = c(text);
        let mut got = MmdStance::Unsure;
        assert_eq!(unsafe { mmd_parse_stance(t.as_ptr(), &mut got) }, MmdStatus::Ok);
        assert_eq!(got, want, "{text}");
    }
    for ((x, y), want) in [
        ((0.5, 0.5), MmdRegion::Center),
        ((0.1, 0.1), MmdRegion::TopLeft),
        ((0.9, 0.1), MmdRegion::TopRight),
        ((0.1, 0.9), MmdRegion::BottomLeft),
        ((0.9, 0.9), MmdRegion::BottomRight),
    ] {
        let mut got = MmdRegion::Center;
        assert_eq!(unsafe { mmd_region_of(x, y, &mut got) }, MmdStatus::Ok);
        assert_eq!(got, want);
    }
    let mut got = MmdRegion::Center;
    assert_eq!(unsafe { mmd_region_of(1.5, 0.2, &mut got) }, MmdStatus::InvalidArgument);
    assert_eq!(unsafe { mmd_region_of(f64::NAN, 0.2, &mut got) }, MmdStatus::InvalidArgument);
    assert_eq!(unsafe { mmd_region_of(0.2, 0.2, ptr::null_mut()) }, MmdStatus::NullArgument);
}

fn record(i: usize, predicted: &str, gold: &str, dataset: &str) -> Value {
    json!({
        "item_id": format!("r{i}"), "predicted": predicted, "gold": gold, "outcome_ref": "",
        "mode": "mad", "error": null, "dataset": dataset, "split": "random"
    })
}

#[test]
fn metrics_and_creativity() {
    // 3 TP, 1 FP, 2 TN, 2 FN
    let rows: Vec<Value> = [("yes", "yes"), ("yes", "yes"), ("yes", "yes"), ("yes", "no"), ("no", "no"), ("no", "no"), ("no", "yes"), ("no", "yes")]
        .iter()
        .enumerate()
        .map(|(i, (p, g))| record(i, p, g, "POPE"))
        .collect();
    let input = c(&Value::Array(rows).to_string());
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mmd_metrics_compute(input.as_ptr(), &mut out) }, MmdStatus::Ok, "{:?}", last_error());
    let m: Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(m["accuracy"], 62.5);
    assert_eq!(m["precision"], 75.0);
    assert_eq!(m["recall"], 60.0);
    assert!((m["f1"].as_f64().unwrap() - 200.0 / 3.0).abs() < 1e-9);
    assert_eq!(m["yes_ratio"], 50.0);

    let creative: Vec<Value> = (0..13).map(|i| record(i, if i < 9 { "yes" } else { "no" }, "yes", "POPE-C")).collect();
    let input = c(&Value::Array(creative).to_string());
    let mut ratio = 0.0;
    assert_eq!(unsafe { mmd_creativity_ratio(input.as_ptr(), &mut ratio) }, MmdStatus::Ok, "{:?}", last_error());
    assert!((ratio - 900.0 / 13.0).abs() < 1e-9);
    let empty = c("[]");
    assert_eq!(unsafe { mmd_creativity_ratio(empty.as_ptr(), &mut ratio) }, MmdStatus::Ok);
    assert!(ratio.is_nan());
    let pope = c(&json!([record(0, "yes", "yes", "POPE")]).to_string());
    assert_eq!(unsafe { mmd_creativity_ratio(pope.as_ptr(), &mut ratio) }, MmdStatus::InvalidArgument);
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(mmd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
