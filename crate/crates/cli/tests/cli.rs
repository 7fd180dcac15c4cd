use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sftformer::data_io::{build_windows, read_sequence};
use tempfile::TempDir;

const TINY: &str = r#"
seed = 3
[model]
t_in = 4
t_out = 4
height = 16
width = 16
channels = 8
blocks = 1
window_size = 2
heads = 2
norm_groups = 2
d_feb = 4
temporal_heads = 2
se_reduction = 2
[train]
steps = 6
batch_size = 2
max_lr = 1e-3
[data]
stride = 4
[eval]
thresholds = [{pixel = 0.3}, {pixel = 0.5}]
"#;

fn run(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sftformer"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
        let f = Self { dir };
        ok(&run(&[
            &"synth", &"--seed", &"1", &"--count", &"3", &"--frames", &"12", &"--size", &"16",
            &"--config", &f.config(), &"--out", &f.data(),
        ]));
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> PathBuf {
        self.path("tiny.toml")
    }

    fn data(&self) -> PathBuf {
        self.path("data")
    }

    fn train(&self, out: &str) -> PathBuf {
        let out = self.path(out);
        ok(&run(&[&"train", &"--data", &self.data(), &"--config", &self.config(), &"--out", &out]));
        out
    }
}

fn log_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run_manifest.json")).unwrap()).unwrap()
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run_manifest.json" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_requested_sequences_deterministically() {
    let f = Fixture::new();
    let names: Vec<_> = fs::read_dir(f.data()).unwrap().map(|e| e.unwrap().file_name()).collect();
    let seqs = names.iter().filter(|n| n.to_string_lossy().starts_with("seq_")).count();
    assert_eq!(seqs, 3);
    let again = f.path("again");
    ok(&run(&[
        &"synth", &"--seed", &"1", &"--count", &"3", &"--frames", &"12", &"--size", &"16",
        &"--config", &f.config(), &"--out", &again,
    ]));
    assert_eq!(tree_bytes(&f.data()), tree_bytes(&again));
    let s = read_sequence(&f.data().join("seq_00000")).unwrap();
    assert_eq!((s.len(), s.height(), s.width()), (12, 16, 16));
    assert_eq!(manifest(&f.data())["command"], "synth");
}

#[test]
fn synth_rejects_size_that_breaks_window_divisibility() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[&"synth", &"--seed", &"1", &"--count", &"1", &"--size", &"48", &"--out", &dir.path().join("x")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("divisible"), "{}", stderr(&out));
}

#[test]
fn train_lowers_loss_and_resume_continues_the_counter() {
    let f = Fixture::new();
    let run_dir = f.train("run");
    let log = log_lines(&run_dir.join("train_log.jsonl"));
    assert_eq!(log.len(), 6);
    let first = log[0]["loss"].as_f64().unwrap();
    let last = log[5]["loss"].as_f64().unwrap();
    assert!(last < first, "loss {first} -> {last}");
    assert!(run_dir.join("checkpoint.bin").is_file());
    assert_eq!(manifest(&run_dir)["command"], "train");

    let out = run(&[
        &"train", &"--data", &f.data(), &"--resume", &run_dir.join("checkpoint.bin"), &"--steps", &"9",
        &"--out", &run_dir,
    ]);
    ok(&out);
    let log = log_lines(&run_dir.join("train_log.jsonl"));
    let steps: Vec<u64> = log.iter().map(|r| r["step"].as_u64().unwrap()).collect();
    assert_eq!(steps, (0..9).collect::<Vec<_>>());
}

#[test]
fn train_reports_missing_data_as_usage_error() {
    let f = Fixture::new();
    let out = run(&[&"train", &"--data", &f.path("nope"), &"--config", &f.config(), &"--out", &f.path("r")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope"), "{}", stderr(&out));
}

#[test]
fn eval_reports_every_threshold_and_lead_for_both_predictors() {
    let f = Fixture::new();
    let run_dir = f.train("run");
    let ckpt = run_dir.join("checkpoint.bin");
    let ev = f.path("ev");
    ok(&run(&[&"eval", &"--data", &f.data(), &"--checkpoint", &ckpt, &"--out", &ev]));
    let rows = log_lines(&ev.join("report.jsonl"));
    assert_eq!(rows.len(), 2 * 2 * 4);
    for pred in ["model", "persistence"] {
        for tau in [0.3, 0.5] {
            let mut leads: Vec<u64> = rows
                .iter()
                .filter(|r| r["predictor"] == pred && r["threshold_pixel"].as_f64() == Some(tau))
                .map(|r| r["lead_time"].as_u64().unwrap())
                .collect();
            leads.sort();
            assert_eq!(leads, vec![1, 2, 3, 4], "{pred} {tau}");
        }
    }
    let csv = fs::read_to_string(ev.join("curves.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + rows.len());
    for name in ["summary.json", "curve_csi.svg", "curve_gss.svg", "curve_hss.svg", "run_manifest.json"] {
        assert!(ev.join(name).is_file(), "{name}");
    }

    let ev2 = f.path("ev2");
    ok(&run(&[&"eval", &"--data", &f.data(), &"--checkpoint", &ckpt, &"--out", &ev2]));
    assert_eq!(fs::read(ev.join("report.jsonl")).unwrap(), fs::read(ev2.join("report.jsonl")).unwrap());
}

#[test]
fn eval_persistence_counts_match_a_pixel_loop() {
    let f = Fixture::new();
    let run_dir = f.train("run");
    let ev = f.path("ev");
    ok(&run(&[&"eval", &"--data", &f.data(), &"--checkpoint", &run_dir.join("checkpoint.bin"), &"--out", &ev]));
    let rows = log_lines(&ev.join("report.jsonl"));

    // persistence repeats the last observed frame; count by hand per lead
    let mut counts = [[[0u64; 4]; 4]; 2];
    for i in 0..3 {
        let seq = read_sequence(&f.data().join(format!("seq_{i:05}"))).unwrap().to_normalized();
        for w in build_windows(&seq, 8, 4, 4).unwrap() {
            let last = w.input.frame(3).to_vec();
            for lead in 0..4 {
                let truth = w.target.frame(lead);
                for (k, tau) in [0.3f32, 0.5].into_iter().enumerate() {
                    for (&p, &t) in last.iter().zip(truth) {
                        let idx = match (p >= tau, t >= tau) {
                            (true, true) => 0,
                            (true, false) => 1,
                            (false, true) => 2,
                            (false, false) => 3,
                        };
                        counts[k][lead][idx] += 1;
                    }
                }
            }
        }
    }
    for r in rows.iter().filter(|r| r["predictor"] == "persistence") {
        let k = if r["threshold_pixel"].as_f64() == Some(0.3) { 0 } else { 1 };
        let lead = r["lead_time"].as_u64().unwrap() as usize - 1;
        let got = ["tp", "fp", "fn", "tn"].map(|c| r[c].as_u64().unwrap());
        assert_eq!(got, counts[k][lead], "threshold {k} lead {lead}");
    }
}

#[test]
fn eval_rejects_incompatible_checkpoint() {
    let f = Fixture::new();
    let run_dir = f.train("run");
    let other = f.path("other.toml");
    fs::write(&other, TINY.replace("channels = 8", "channels = 16")).unwrap();
    let out = run(&[
        &"eval", &"--data", &f.data(), &"--checkpoint", &run_dir.join("checkpoint.bin"), &"--config", &other,
        &"--out", &f.path("ev"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    let ckpt_hash = manifest(&run_dir)["model_hash"].as_str().unwrap().to_string();
    assert!(err.contains(&ckpt_hash), "{err}");
    let hexes = err.split(|c: char| !c.is_ascii_hexdigit()).filter(|w| w.len() == 64).count();
    assert!(hexes >= 2, "{err}");
}

#[test]
fn predict_writes_forecast_container_and_grid() {
    let f = Fixture::new();
    let run_dir = f.train("run");
    let pr = f.path("pr");
    ok(&run(&[
        &"predict", &"--input", &f.data().join("seq_00000"), &"--checkpoint", &run_dir.join("checkpoint.bin"),
        &"--out", &pr,
    ]));
    let y = read_sequence(&pr.join("prediction")).unwrap();
    assert_eq!((y.len(), y.height(), y.width()), (4, 16, 16));
    assert!(y.frames().data().iter().all(|v| (0.0..=1.0).contains(v)));
    // input, truth and forecast rows of four 16x16 frames
    let (w, h) = image::image_dimensions(pr.join("grid.png")).unwrap();
    assert_eq!((w, h), (4 * 16, 3 * 16));
    assert_eq!(manifest(&pr)["command"], "predict");
}

#[test]
fn predict_rejects_short_input() {
    let f = Fixture::new();
    let run_dir = f.train("run");
    let short = f.path("short");
    ok(&run(&[
        &"synth", &"--seed", &"2", &"--count", &"1", &"--frames", &"3", &"--size", &"16", &"--config",
        &f.config(), &"--out", &short,
    ]));
    let out = run(&[
        &"predict", &"--input", &short.join("seq_00000"), &"--checkpoint", &run_dir.join("checkpoint.bin"),
        &"--out", &f.path("pr"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("t_in"), "{}", stderr(&out));
}

#[test]
fn gradcheck_prints_a_verdict_per_selection() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[&"gradcheck", &"--select", &"swin_block", &"--select", &"reconstruct_odd", &"--out", &dir.path()]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 2, "{stdout}");
    assert!(dir.path().join("gradcheck.json").is_file());
    assert_eq!(manifest(dir.path())["command"], "gradcheck");

    let bad = run(&[&"gradcheck", &"--select", &"nonsense"]);
    assert_eq!(bad.status.code(), Some(2));
}
