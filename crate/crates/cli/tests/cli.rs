use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BASE: &str = "ACTIVITY com.example.Main 1a2b 320x480
FrameLayout@100 bounds=0,0,320,480 policy=pass
 Button@101 bounds=40,100,160,160 policy=listener
 ImageButton@102 bounds=40,300,160,360 policy=listener
";

const SHIFTED: &str = "ACTIVITY com.example.Main 7f00 320x480
FrameLayout@200 bounds=0,0,320,480 policy=pass
 Button@201 bounds=40,100,160,160 policy=listener
 ImageButton@202 bounds=170,300,290,360 policy=listener
";

const WITHOUT_IMAGE_BUTTON: &str = "ACTIVITY com.example.Main 7f00 320x480
FrameLayout@200 bounds=0,0,320,480 policy=pass
 Button@201 bounds=40,100,160,160 policy=listener
";

fn puppet(args: &[&str], dir: &Path) -> Output {
    puppet_env(args, dir, None)
}

fn puppet_env(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_puppet"));
    cmd.args(args).current_dir(dir);
    match threads {
        Some(n) => cmd.env("PUPPET_THREADS", n),
        None => cmd.env_remove("PUPPET_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn ok_json(out: Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn write(dir: &Path, name: &str, text: &str) {
    let p = dir.join(name);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, text).unwrap();
}

/// `taps` Down/Up pairs at each point, 100 ms apart.
fn taps(points: &[(u32, u32)], per_point: usize) -> String {
    let mut out = String::from("# timestamp,event_type,action,x,y,key_code\n");
    let mut t = 0;
    for &(x, y) in points {
        for _ in 0..per_point {
            out += &format!("{t},0,1,{x},{y},0\n");
            out += &format!("{},0,0,{x},{y},0\n", t + 50);
            t += 100;
        }
    }
    out
}

fn workspace() -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "base/0.hier", BASE);
    write(d, "shifted/0.hier", SHIFTED);
    write(d, "missing/0.hier", WITHOUT_IMAGE_BUTTON);
    tmp
}

fn record(d: &Path, events: &str, out: &str) -> Value {
    write(d, "events.csv", events);
    ok_json(puppet(
        &["record", "--events", "events.csv", "--dumps", "base", "--app-id", "com.example", "--out", out],
        d,
    ))
}

fn replay(d: &Path, trace: &str, dumps: &str, extra: &[&str]) -> Value {
    let mut args = vec!["replay", "--trace", trace, "--dumps", dumps, "--out-report", "report.json", "--out-events", "emitted"];
    args.extend_from_slice(extra);
    ok_json(puppet(&args, d))
}

#[test]
fn record_then_self_replay_scores_one() {
    let tmp = workspace();
    let d = tmp.path();
    let rec = record(d, &taps(&[(100, 130), (60, 320)], 3), "t.trace");
    assert_eq!(rec["steps"], 12);
    let report = replay(d, "t.trace", "base", &[]);
    assert_eq!(report["score"], 1.0);
    assert_eq!(report["executed_steps"], 12);
    let saved: Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(saved, report);
    let touches = fs::read_to_string(d.join("emitted/event1.csv")).unwrap();
    assert_eq!(touches.lines().filter(|l| !l.starts_with('#')).count(), 12);
}

#[test]
fn record_is_idempotent() {
    let tmp = workspace();
    let d = tmp.path();
    record(d, &taps(&[(100, 130)], 4), "a.trace");
    record(d, &taps(&[(100, 130)], 4), "b.trace");
    assert_eq!(fs::read(d.join("a.trace")).unwrap(), fs::read(d.join("b.trace")).unwrap());
}

#[test]
fn empty_event_log_gives_empty_trace() {
    let tmp = workspace();
    let rec = record(tmp.path(), "", "empty.trace");
    assert_eq!(rec["steps"], 0);
    let report = replay(tmp.path(), "empty.trace", "base", &[]);
    assert_eq!(report["score"], 1.0);
}

#[test]
fn missing_dump_directory_is_a_domain_error() {
    let tmp = workspace();
    let d = tmp.path();
    write(d, "events.csv", &taps(&[(1, 1)], 1));
    let out = puppet(&["record", "--events", "events.csv", "--dumps", "nowhere", "--app-id", "a", "--out", "t"], d);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("nowhere"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = workspace();
    assert_eq!(puppet(&["replay", "--trace"], tmp.path()).status.code(), Some(2));
    assert_eq!(puppet(&["frobnicate"], tmp.path()).status.code(), Some(2));
    let out = puppet_env(&["hash", "x.pgm"], tmp.path(), Some("zero"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failure_at_step_eleven_scores_half() {
    let tmp = workspace();
    let d = tmp.path();
    record(d, &taps(&[(100, 130), (60, 320)], 5), "t.trace");
    let report = replay(d, "t.trace", "missing", &[]);
    assert_eq!(report["total_steps"], 20);
    assert_eq!(report["executed_steps"], 10);
    assert_eq!(report["score"], 0.5);
    assert_eq!(report["failure"]["step"], 10);
    assert_eq!(report["failure"]["reason"]["kind"], "path_not_found");
}

fn inside(x: u64, y: u64, (l, t, r, b): (u64, u64, u64, u64)) -> bool {
    (l..=r).contains(&x) && (t..=b).contains(&y)
}

#[test]
fn shifted_button_ratio_vs_raw() {
    let tmp = workspace();
    let d = tmp.path();
    record(d, &taps(&[(60, 320), (150, 350)], 2), "t.trace");
    let button = (170, 300, 290, 360);

    let views = replay(d, "t.trace", "shifted", &[]);
    assert_eq!(views["score"], 1.0);
    for e in views["emitted"]["touch"].as_array().unwrap() {
        assert!(inside(e["x"].as_u64().unwrap(), e["y"].as_u64().unwrap(), button), "{e}");
    }

    let raw = replay(d, "t.trace", "shifted", &["--raw"]);
    let outside = raw["emitted"]["touch"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| !inside(e["x"].as_u64().unwrap(), e["y"].as_u64().unwrap(), button))
        .count();
    assert!(outside >= 1);
    let off_target = raw["warnings"].as_array().unwrap().iter().filter(|w| w["kind"] == "off_target").count();
    assert_eq!(off_target, outside);
}

#[test]
fn speed_scales_emitted_timestamps() {
    let tmp = workspace();
    let d = tmp.path();
    record(d, &taps(&[(100, 130)], 2), "t.trace");
    let report = replay(d, "t.trace", "base", &["--speed", "2"]);
    let ts: Vec<u64> = report["emitted"]["touch"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["timestamp"].as_u64().unwrap())
        .collect();
    assert_eq!(ts, vec![0, 25, 50, 75]);
}

fn constant_pgm(w: u32, h: u32, v: u8) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(std::iter::repeat_n(v, (w * h) as usize));
    out
}

#[test]
fn hash_of_constant_image_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("grey.pgm"), constant_pgm(64, 96, 128)).unwrap();
    let v = ok_json(puppet(&["hash", "grey.pgm"], tmp.path()));
    assert_eq!(v[0]["hash"], "0000000000000000");
}

fn small_corpus(d: &Path) {
    ok_json(puppet(
        &["corpus", "--out", "corpus", "--families", "5", "--variants", "2", "--width", "160", "--height", "240"],
        d,
    ));
}

#[test]
fn index_query_finds_itself_and_exact_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_corpus(d);
    ok_json(puppet(&["index-build", "--corpus", "corpus", "--out", "index.txt"], d));
    let q = "corpus/fam003-v01/main.pgm";
    let v = ok_json(puppet(
        &["index-query", "--index", "index.txt", "--image", q, "--k", "3", "--corpus", "corpus", "--exclude-app", "fam003-v01"],
        d,
    ));
    assert_eq!(v["md5_matches"][0]["app_id"], "fam003-v01");
    let first = &v["queries"][0]["neighbors"][0];
    assert_eq!(first["app_id"], "fam003-v01");
    assert_eq!(first["distance"], 0);
    assert_eq!(v["similar_app"]["app_id"].as_str().unwrap().get(..6), Some("fam003"));
}

#[test]
fn empty_index_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("index.txt"), "PHIDX 1\n").unwrap();
    fs::write(d.join("q.pgm"), constant_pgm(64, 96, 9)).unwrap();
    let out = puppet(&["index-query", "--index", "index.txt", "--image", "q.pgm"], d);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cluster_and_homogeneity_on_generated_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_corpus(d);
    ok_json(puppet(&["index-build", "--corpus", "corpus", "--out", "index.txt"], d));
    let c = ok_json(puppet(&["cluster", "--index", "index.txt", "--eps", "10", "--out", "clusters.txt"], d));
    assert!(c["num_clusters"].as_u64().unwrap() >= 1);
    let h = ok_json(puppet(
        &["homogeneity", "--index", "index.txt", "--clusters", "clusters.txt", "--labels", "corpus/labels.csv"],
        d,
    ));
    assert!(h["pure_fraction"].as_f64().unwrap() >= 0.85);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_corpus(d);
    let mut outputs = Vec::new();
    for n in ["1", "4"] {
        let idx = format!("index{n}.txt");
        ok_json(puppet_env(&["index-build", "--corpus", "corpus", "--out", &idx], d, Some(n)));
        let sweep = puppet_env(&["sweep", "--index", &idx, "--eps-max", "30"], d, Some(n));
        outputs.push((fs::read(d.join(&idx)).unwrap(), sweep.stdout));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn generated_session_replays_on_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_corpus(d);
    ok_json(puppet(&["session", "--corpus", "corpus", "--family", "2", "--out", "base"], d));
    ok_json(puppet(&["session", "--corpus", "corpus", "--family", "2", "--variant", "2", "--taps", "1", "--out", "var"], d));
    let rec = ok_json(puppet(
        &["record", "--events", "base/events.csv", "--dumps", "base/dumps", "--app-id", "fam002-v00", "--out", "t.trace"],
        d,
    ));
    assert_eq!(rec["steps"], 20);
    assert_eq!(replay(d, "t.trace", "var/dumps", &[])["score"], 1.0);
    let out = puppet(&["session", "--corpus", "corpus", "--family", "9", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dispatch_reports_consumer() {
    let tmp = workspace();
    let v = ok_json(puppet(&["dispatch", "--dump", "base/0.hier", "--x", "100", "--y", "130"], tmp.path()));
    assert_eq!(v["target"], "FrameLayout:0/Button:0");
    assert_eq!(v["consumer"]["kind"], "view");
    let v = ok_json(puppet(&["dispatch", "--dump", "base/0.hier", "--x", "5", "--y", "5"], tmp.path()));
    assert_eq!(v["consumer"]["kind"], "activity");
}
