use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn blowup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blowup")).args(args).output().unwrap()
}

fn synth_mixed(dir: &Path) -> String {
    let out = dir.join("synth");
    let o = blowup(&[
        "synth", "--seed", "11", "--kind", "affine-subspace-union", "--ambient", "5", "--dims", "1,2", "--samples", "300",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("cloud.csv").display().to_string()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn synth_requires_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blowup(&["synth", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn synth_writes_cloud_truth_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    synth_mixed(tmp.path());
    let dir = tmp.path().join("synth");
    for f in ["cloud.csv", "truth.json", "report.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let r = report(&dir);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "synth");
    assert_eq!(r["cloud"]["points"], 601);
    assert_eq!(r["config"]["seed"], 11);
}

#[test]
fn raw_output_round_trips_through_detect() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("raw");
    let o = blowup(&["synth", "--seed", "3", "--samples", "200", "--ambient", "4", "--format", "raw-f32", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let cloud = out.join("cloud.f32");
    assert_eq!(&fs::read(&cloud).unwrap()[..4], b"EMB1");
    let det = tmp.path().join("det");
    let o = blowup(&["detect", "--input", cloud.to_str().unwrap(), "--out", det.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&det)["cloud"]["points"], 200);
}

#[test]
fn invalid_parameters_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = synth_mixed(tmp.path());
    let out = tmp.path().join("bad");
    let out = out.to_str().unwrap();
    for args in [
        vec!["detect", "--input", &cloud, "--epsilon=-1", "--out", out],
        vec!["detect", "--input", &cloud, "--estimator", "window:4", "--out", out],
        vec!["detect", "--input", "/nonexistent/cloud.csv", "--out", out],
        vec!["blowup", "--input", &cloud, "--center", "100000", "--out", out],
        vec!["blowup", "--input", &cloud, "--lambda", "0", "--out", out],
        vec!["context-map", "--input", &cloud, "--tokens", "1,2,99999", "--out", out],
    ] {
        let o = blowup(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error"));
    }
}

#[test]
fn malformed_input_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("ragged.csv");
    fs::write(&csv, "1,2,3\n4,5\n").unwrap();
    let o = blowup(&["detect", "--input", csv.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let raw = tmp.path().join("short.f64");
    fs::write(&raw, b"EMB1\x02\x00\x00\x00\x02\x00\x00\x00\x08\x00\x00\x00").unwrap();
    let o = blowup(&["detect", "--input", raw.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn detect_writes_requested_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = synth_mixed(tmp.path());
    let out = tmp.path().join("all");
    let o = blowup(&["detect", "--input", &cloud, "--profiles", "all", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let profile = fs::read_to_string(out.join("profiles/point_0.csv")).unwrap();
    assert!(profile.starts_with("r,V,dim\n"));
    assert_eq!(profile.lines().count(), 33);
    let out = tmp.path().join("none");
    blowup(&["detect", "--input", &cloud, "--profiles", "none", "--out", out.to_str().unwrap()]);
    assert!(!out.join("profiles").exists());
}

#[test]
fn verify_theorem_exit_code_follows_the_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = synth_mixed(tmp.path());
    let out = tmp.path().join("verify");
    let o = blowup(&["verify-theorem1", "--input", &cloud, "--center", "0", "--out", out.to_str().unwrap()]);
    let r = report(&out);
    let holds = r["summary"]["theorem_holds"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if holds { 0 } else { 3 }));
    assert_eq!(r["centers"][0]["center_id"], 0);
    assert_eq!(r["centers"][0]["status"], "resolved");
    assert!(out.join("profiles/center_0.csv").exists());
    // plain blowup reports the same outcome without failing the process
    let out = tmp.path().join("blowup");
    let o = blowup(&["blowup", "--input", &cloud, "--center", "0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(report(&out)["summary"]["theorem_holds"], holds);
}

#[test]
fn context_map_embeds_every_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = synth_mixed(tmp.path());
    let out = tmp.path().join("ctx");
    let seq = tmp.path().join("seq.txt");
    fs::write(&seq, "4 0 310\n12, 0 7\n").unwrap();
    let o = blowup(&["context-map", "--input", &cloud, "--sequence", seq.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let ctx = r["context"].as_array().unwrap();
    assert_eq!(ctx.len(), 6);
    assert_eq!(ctx[1]["token"], 0);
    assert_eq!(ctx[1]["context_size"], 3);
    let singular: Vec<u64> = r["locus"]["singular_ids"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    for e in ctx {
        let token = e["token"].as_u64().unwrap();
        if let Some(rep) = e.get("representation").filter(|v| !v.is_null()) {
            let desing = rep["variant"] == "desingularized";
            assert_eq!(desing, singular.contains(&token), "{e}");
        }
    }
}

#[test]
fn report_replays_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = synth_mixed(tmp.path());
    let out = tmp.path().join("det");
    assert!(blowup(&["detect", "--input", &cloud, "--threads", "1", "--out", out.to_str().unwrap()]).status.success());
    let replay = tmp.path().join("replay");
    let o = blowup(&["report", "--report", out.join("report.json").to_str().unwrap(), "--threads", "3", "--out", replay.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("replay: identical"));
}

#[test]
fn tampered_report_fails_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = synth_mixed(tmp.path());
    let out = tmp.path().join("det");
    assert!(blowup(&["detect", "--input", &cloud, "--out", out.to_str().unwrap()]).status.success());
    let mut r = report(&out);
    r["summary"]["singular_count"] = serde_json::json!(123456);
    let path = tmp.path().join("tampered.json");
    fs::write(&path, serde_json::to_string(&r).unwrap()).unwrap();
    let o = blowup(&["report", "--report", path.to_str().unwrap(), "--out", tmp.path().join("re").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replay differs"));
}

#[test]
fn reports_match_the_shipped_schema_outline() {
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/schema/report.schema.json")).unwrap()).unwrap();
    let keys_of = |v: &serde_json::Value| -> BTreeSet<String> { v.as_object().unwrap().keys().cloned().collect() };
    let names = |v: &serde_json::Value| -> BTreeSet<String> {
        v.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect()
    };
    let required = names(&schema["required"]);
    let config_required = names(&schema["$defs"]["run_config"]["required"]);
    let commands = schema["$defs"]["command"]["enum"].as_array().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let cloud = synth_mixed(tmp.path());
    let mut reports = vec![report(&tmp.path().join("synth"))];
    for cmd in ["detect", "blowup", "context-map"] {
        let out = tmp.path().join(cmd);
        let mut args = vec![cmd, "--input", &cloud, "--out", out.to_str().unwrap()];
        if cmd == "context-map" {
            args.extend(["--tokens", "0,1,2"]);
        }
        assert!(blowup(&args).status.success());
        reports.push(report(&out));
    }
    for r in reports {
        assert_eq!(r["schema_version"], schema["properties"]["schema_version"]["const"]);
        assert_eq!(keys_of(&r), required);
        assert!(commands.contains(&r["command"]));
        assert_eq!(keys_of(&r["config"]), config_required);
    }
}
