use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_impactlab");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("IMPACTLAB_THREADS").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn help_lists_every_enum_value() {
    let train = stdout(&run(&["train", "--help"]));
    for v in ["sushi", "vase", "box", "survival", "starting", "inaction", "stepwise", "none", "ur", "rr", "au", "truncation", "absolute", "desk", "full"] {
        assert!(train.contains(v), "train --help misses {v}");
    }
    let sweep = stdout(&run(&["sweep", "--help"]));
    for v in ["ur-d", "ur-u", "rr-d-trunc", "rr-d-abs", "rr-u-trunc", "rr-u-abs", "au-d-trunc", "au-d-abs"] {
        assert!(sweep.contains(v), "sweep --help misses {v}");
    }
}

#[test]
fn invalid_enums_are_usage_errors() {
    for args in [
        &["train", "--env", "maze"][..],
        &["train", "--env", "box", "--baseline", "yesterday"],
        &["train", "--env", "box", "--measure", "rrr"],
        &["train", "--env", "box", "--summary", "squared"],
        &["sweep", "--variants", "rr-x-trunc"],
        &["train", "--env", "box", "--preset", "huge"],
        &["train", "--env", "box", "--bogus-flag"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--env", "box", "--set", "agent.alpah=0.2", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`agent.alpah`"), "{}", stderr(&o));

    let o = run(&["train", "--env", "box", "--set", "penalty.beta=lots", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`penalty.beta`"), "{}", stderr(&o));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[agent]\nalpha = 0.1\nanneal = 3\n").unwrap();
    let o = run(&["train", "--env", "box", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`agent.anneal`"), "{}", stderr(&o));

    fs::write(&cfg, "[agent\nalpha = 0.1\n").unwrap();
    let o = run(&["train", "--env", "box", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run(&["train", "--env", "box", "--measure", "au", "--undiscounted"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("attainable utility"), "{}", stderr(&o));
}

#[test]
fn train_matches_golden_trace_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train", "--env", "vase", "--baseline", "inaction", "--measure", "rr", "--discounted", "--beta", "3", "--seed", "1",
        "--out", path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let golden = include_str!("golden/train_vase_inaction_rr_d_beta3_seed1.csv");
    assert!(trace == golden, "trace differs from the recorded golden file");

    let o = run(&["replay", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let tampered = trace.replacen("0,1,20,50", "0,1,20,49", 1);
    assert_ne!(tampered, trace);
    fs::write(dir.path().join("trace.csv"), tampered).unwrap();
    let o = run(&["replay", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn config_file_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[agent]\nanneal_episodes = 40\nhold_episodes = 10\n[penalty]\nmeasure = \"ur\"\nbeta = 1.0\n").unwrap();
    let out = dir.path().join("run");
    let o = run(&["train", "--env", "sushi", "--config", path(&cfg), "--beta", "2", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let written = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(written.contains("anneal_episodes = 40"));
    assert!(written.contains("measure = \"ur\""));
    assert!(written.contains("beta = 2.0"));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 51);
}

#[test]
fn sweep_writes_csv_and_svg_then_report_regenerates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("box");
    let o = run(&["sweep", "--env", "box", "--preset", "desk", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["results.csv", "summary.csv", "report.json", "box.svg", "config.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("env,baseline,measure,discount,summary,beta,seed,final_perf\n"));
    // header, the unpenalised cell at beta 0, then 3 baselines x 8 variants x 8 betas, 5 seeds each
    assert_eq!(csv.lines().count(), 1 + 5 + 24 * 8 * 5);
    let svg = fs::read_to_string(out.join("box.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    let again = dir.path().join("again");
    let o = run(&["report", path(&out.join("report.json")), "--out", path(&again)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["results.csv", "summary.csv", "box.svg"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn thread_cap_is_read_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--env", "survival", "--seeds", "1", "--betas", "1", "--variants", "ur-d", "--out", path(dir.path())];
    let bad = Command::new(BIN).args(args).env("IMPACTLAB_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("IMPACTLAB_THREADS"));
    let one = Command::new(BIN).args(args).env("IMPACTLAB_THREADS", "1").output().unwrap();
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    let single = fs::read(dir.path().join("results.csv")).unwrap();
    let many = Command::new(BIN).args(args).env("IMPACTLAB_THREADS", "3").output().unwrap();
    assert_eq!(many.status.code(), Some(0));
    assert_eq!(single, fs::read(dir.path().join("results.csv")).unwrap());
}

#[test]
fn validate_passes_on_a_clean_build() {
    let o = run(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("all 16 checks passed"));
}

#[test]
fn custom_layout_is_recorded_for_replay() {
    let dir = tempfile::tempdir().unwrap();
    let layout = dir.path().join("wide.txt");
    fs::write(&layout, "#######\n# A####\n# X   #\n##    #\n###  G#\n#######\n").unwrap();
    let out = dir.path().join("run");
    let o = run(&["train", "--env", "box", "--layout", path(&layout), "--anneal-episodes", "50", "--hold-episodes", "10", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("layout.txt").is_file());
    let o = run(&["replay", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    fs::write(&layout, "#####\n# A #\n#   #\n#####\n").unwrap();
    let o = run(&["train", "--env", "box", "--layout", path(&layout), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
