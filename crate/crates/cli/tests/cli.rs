use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUBJECTS: usize = 6;
const DURATION_S: f64 = 300.0;
const SHIFT_S: f64 = 5.0;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stresskit"));
    c.env_remove("STRESSKIT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> Output {
    let subjects = SUBJECTS.to_string();
    let duration = DURATION_S.to_string();
    let mut args = vec!["synth", "--out", p(dir), "--subjects", &subjects, "--duration", &duration];
    args.extend_from_slice(extra);
    run(&args)
}

/// Synthetic dataset plus its feature cache.
fn cache(root: &Path) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    let feat = root.join("feat");
    assert_eq!(code(&synth(&data, &[])), 0);
    let shift = SHIFT_S.to_string();
    let o = run(&["extract", "--data", p(&data), "--out", p(&feat), "--window-shift", &shift]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (data, feat)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_lists_config_keys() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for key in [
        "data_dir",
        "seed",
        "jobs",
        "model",
        "signals",
        "train_fraction",
        "window.window_size_s",
        "window.window_shift_s",
        "eda.normalization",
        "eda.cvx.alpha",
        "bvp.hti_bin_ms",
        "nn.learning_rate",
        "nn.batch_size",
        "nn.dropout",
        "rf.n_trees",
        "rf.max_features",
        "synth.n_subjects",
    ] {
        assert!(text.contains(&format!("  {key} = ")), "missing {key}");
    }
    assert!(text.contains("STRESSKIT_SEED"));
}

#[test]
fn usage_errors_exit_64() {
    let o = run(&["extract", "--no-such-flag"]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(code(&run(&["train", "--set", "nn.bogus=1"])), 64);
    assert_eq!(code(&run(&["train", "--model", "svm"])), 64);
}

#[test]
fn synth_is_reproducible_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(code(&synth(&a, &["--seed", "7"])), 0);
    let o = bin()
        .env("STRESSKIT_SEED", "7")
        .args(["synth", "--out", p(&b), "--subjects", "6", "--duration", "300"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(code(&synth(&c, &[])), 0);
    let subjects = fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(subjects, SUBJECTS);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_ne!(dir_bytes(&a), dir_bytes(&c));
}

#[test]
fn extract_row_count_follows_window_arithmetic_and_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, feat) = cache(tmp.path());
    // four equal blocks; baseline, stress and amusement are labelled, meditation is not
    let block = DURATION_S / 4.0;
    let per_block = ((block - 60.0) / SHIFT_S).floor() as usize + 1;
    let expected = SUBJECTS * 3 * per_block;
    let text = fs::read_to_string(feat.join("features.csv")).unwrap();
    assert_eq!(text.lines().count() - 1, expected);
    for f in ["drops.csv", "dictionary.json", "cache.json"] {
        assert!(feat.join(f).is_file(), "{f}");
    }
    let dict: serde_json::Value = serde_json::from_str(&fs::read_to_string(feat.join("dictionary.json")).unwrap()).unwrap();
    assert!(dict.to_string().contains("eda_mean"));

    let before = fs::read(feat.join("features.csv")).unwrap();
    let shift = SHIFT_S.to_string();
    let o = run(&["extract", "--data", p(&data), "--out", p(&feat), "--window-shift", &shift, "--force"]);
    assert_eq!(code(&o), 0);
    assert_eq!(before, fs::read(feat.join("features.csv")).unwrap());

    let o = run(&["extract", "--data", p(&tmp.path().join("missing")), "--out", p(&feat)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing"));
}

#[test]
fn train_evaluate_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, feat) = cache(tmp.path());
    let res = tmp.path().join("res");
    let o = run(&[
        "train", "--features", p(&feat), "--out", p(&res), "--model", "nn", "--signals", "fusion", "--set",
        "nn.max_epochs=15",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("nn_fusion.json")).unwrap()).unwrap();
    assert_eq!(report["subjects"].as_array().unwrap().len(), SUBJECTS);
    assert_eq!(fs::read_dir(res.join("models/nn_fusion")).unwrap().count(), SUBJECTS);

    let o = run(&["train", "--features", p(&feat), "--out", p(&res), "--signals", "st", "--model", "rf", "--set", "rf.n_trees=25"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rf: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("rf_st.json")).unwrap()).unwrap();
    assert_eq!(rf["config"]["model"], "rf");
    assert_eq!(rf["config"]["signals"], "st");
    assert_eq!(rf["config"]["rf"]["n_trees"], 25);
    assert_eq!(rf["config"]["window"]["window_size_s"], 60.0);

    // scoring the saved forests reproduces the training-time report
    let again = tmp.path().join("again");
    let o = run(&[
        "evaluate", "--features", p(&feat), "--out", p(&again), "--model", "rf", "--signals", "st", "--set", "rf.n_trees=25",
        "--models", p(&res.join("models/rf_st")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(res.join("rf_st.csv")).unwrap(),
        fs::read(again.join("rf_st.csv")).unwrap()
    );

    let o = run(&["report", "--out", p(&res)]);
    assert_eq!(code(&o), 0);
    let summary = fs::read_to_string(res.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn config_file_with_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    let data = tmp.path().join("from_file");
    fs::write(
        &cfg,
        format!("# synthetic cohort\ndata_dir = {}\nsynth.n_subjects = 2\nsynth.duration_s = 240\n", data.display()),
    )
    .unwrap();
    let o = run(&["synth", "--config", p(&cfg), "--subjects", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_dir(&data).unwrap().count(), 3);

    fs::write(&cfg, "nn.dropout = lots\n").unwrap();
    let o = run(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("run.cfg:1"));
}

#[test]
fn training_failure_names_the_fold() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, feat) = cache(tmp.path());
    // keep two subjects; one of them with stress windows only
    let text = fs::read_to_string(feat.join("features.csv")).unwrap();
    let mut lines = text.lines();
    let mut out = vec![lines.next().unwrap().to_string()];
    for l in lines {
        let f: Vec<&str> = l.splitn(4, ',').collect();
        if (f[0] == "S01" && f[2] == "1") || f[0] == "S02" {
            out.push(l.to_string());
        }
    }
    fs::write(feat.join("features.csv"), out.join("\n") + "\n").unwrap();
    let o = run(&["train", "--features", p(&feat), "--out", p(&tmp.path().join("res")), "--set", "nn.max_epochs=2"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("fold S02"), "{}", stderr(&o));

    let o = run(&["train", "--features", p(&tmp.path().join("nowhere"))]);
    assert_eq!(code(&o), 2);
}
