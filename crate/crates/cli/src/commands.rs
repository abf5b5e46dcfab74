use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stresskit::data::{load_dataset, write_subject};
use stresskit::dictionary::dictionary_json;
use stresskit::eval::{
    labels, loso_folds, run_experiment, run_folds, signal_matrix, subject_result, write_report,
    EvalError, EvalReport, FittedModel, ModelKind, SignalSet,
};
use stresskit::forest::{load_forest, save_forest};
use stresskit::nn::{load_checkpoint, save_checkpoint};
use stresskit::synth::synth_dataset;
use stresskit::windowing::{
    build_dataset_matrix, cache_key, dataset_hash, load_matrix, save_drop_log, save_matrix,
    FeatureRow, PipelineConfig,
};

use crate::config::RunConfig;
use crate::{EXIT_INPUT, EXIT_TRAINING};

pub const FEATURES_FILE: &str = "features.csv";
pub const DROPS_FILE: &str = "drops.csv";
pub const DICTIONARY_FILE: &str = "dictionary.json";
pub const CACHE_FILE: &str = "cache.json";

#[derive(Debug)]
pub enum CmdError {
    Input(String),
    Training(String),
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::Input(_) => EXIT_INPUT,
            CmdError::Training(_) => EXIT_TRAINING,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Input(m) | CmdError::Training(m) => f.write_str(m),
        }
    }
}

fn input(e: impl fmt::Display) -> CmdError {
    CmdError::Input(e.to_string())
}

fn from_eval(e: EvalError) -> CmdError {
    match e {
        EvalError::TooFewSubjects(_) | EvalError::SingleClassData | EvalError::Io { .. } => input(e),
        other => CmdError::Training(other.to_string()),
    }
}

fn create_dir(p: &Path) -> Result<(), CmdError> {
    fs::create_dir_all(p).map_err(|e| input(format!("{}: {e}", p.display())))
}

fn write(p: &Path, body: impl AsRef<[u8]>) -> Result<(), CmdError> {
    fs::write(p, body).map_err(|e| input(format!("{}: {e}", p.display())))
}

pub fn synth(cfg: &RunConfig) -> Result<(), CmdError> {
    let root = PathBuf::from(&cfg.data_dir);
    create_dir(&root)?;
    let records = synth_dataset(&cfg.synth());
    for rec in &records {
        write_subject(rec, root.join(&rec.subject_id)).map_err(input)?;
    }
    println!("wrote {} subjects to {}", records.len(), root.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CacheManifest {
    key: String,
    dataset_hash: String,
    rows: usize,
    dropped: usize,
    pipeline: PipelineConfig,
}

pub fn extract(cfg: &RunConfig, force: bool) -> Result<(), CmdError> {
    let out = PathBuf::from(&cfg.features_dir);
    let records = load_dataset(&cfg.data_dir).map_err(input)?;
    if records.is_empty() {
        return Err(input(format!("{}: no subject directories", cfg.data_dir)));
    }
    let pipeline = cfg.pipeline();
    let hash = dataset_hash(&records);
    let key = cache_key(&hash, &pipeline);

    let manifest_path = out.join(CACHE_FILE);
    if !force && out.join(FEATURES_FILE).is_file() {
        if let Ok(text) = fs::read_to_string(&manifest_path) {
            if let Ok(m) = serde_json::from_str::<CacheManifest>(&text) {
                if m.key == key {
                    println!("feature cache up to date: {} rows, {} dropped windows", m.rows, m.dropped);
                    return Ok(());
                }
            }
        }
    }

    let matrix = build_dataset_matrix(&records, &pipeline).map_err(input)?;
    create_dir(&out)?;
    save_matrix(out.join(FEATURES_FILE), &matrix.rows).map_err(input)?;
    save_drop_log(out.join(DROPS_FILE), &matrix.dropped).map_err(input)?;
    let dict = serde_json::to_string_pretty(&dictionary_json()).expect("dictionary serialises");
    write(&out.join(DICTIONARY_FILE), dict)?;
    let manifest = CacheManifest {
        key,
        dataset_hash: hash,
        rows: matrix.rows.len(),
        dropped: matrix.dropped.len(),
        pipeline,
    };
    write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serialises"),
    )?;
    println!(
        "{} subjects: {} rows, {} dropped windows -> {}",
        records.len(),
        manifest.rows,
        manifest.dropped,
        out.display()
    );
    Ok(())
}

fn load_rows(cfg: &RunConfig) -> Result<Vec<FeatureRow>, CmdError> {
    let path = Path::new(&cfg.features_dir).join(FEATURES_FILE);
    if !path.is_file() {
        return Err(input(format!(
            "{}: feature cache not found (run `stresskit extract` first)",
            path.display()
        )));
    }
    load_matrix(&path).map_err(input)
}

fn tag(model: ModelKind, signals: SignalSet) -> String {
    format!("{model}_{signals}")
}

fn print_summary(r: &EvalReport) {
    for s in &r.subjects {
        println!(
            "  {:<8} windows {:>5}  acc {:.4}  bal_acc {:.4}",
            s.subject_id, s.n_windows, s.accuracy, s.balanced_accuracy
        );
    }
    println!(
        "{} {}: balanced accuracy {:.4} ± {:.4}, accuracy {:.4} ± {:.4} (population std over {} subjects)",
        r.config.model,
        r.config.signals,
        r.aggregate.balanced_accuracy.mean,
        r.aggregate.balanced_accuracy.std,
        r.aggregate.accuracy.mean,
        r.aggregate.accuracy.std,
        r.subjects.len()
    );
}

pub fn train(cfg: &RunConfig) -> Result<(), CmdError> {
    let rows = load_rows(cfg)?;
    let exp = cfg.experiment();
    let results = run_folds(&rows, &exp).map_err(from_eval)?;
    let name = tag(exp.model, exp.signals);
    let out = PathBuf::from(&cfg.output_dir);
    let models_dir = out.join("models").join(&name);
    create_dir(&models_dir)?;
    for (r, model) in &results {
        let p = models_dir.join(format!("{}.json", r.subject_id));
        match model {
            FittedModel::Nn(m) => save_checkpoint(&p, m).map_err(input)?,
            FittedModel::Rf(f) => save_forest(&p, f).map_err(input)?,
        }
    }
    let report = EvalReport::from_subjects(exp, results.into_iter().map(|(r, _)| r).collect());
    write_report(&out, &name, &report).map_err(from_eval)?;
    print_summary(&report);
    println!("checkpoints in {}", models_dir.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, models: Option<&Path>) -> Result<(), CmdError> {
    let rows = load_rows(cfg)?;
    let exp = cfg.experiment();
    let report = match models {
        None => run_experiment(&rows, &exp).map_err(from_eval)?,
        Some(dir) => {
            let folds = loso_folds(&rows).map_err(from_eval)?;
            let mut subjects = Vec::with_capacity(folds.len());
            for f in &folds {
                let test: Vec<FeatureRow> = f.test.iter().map(|&i| rows[i].clone()).collect();
                let p = dir.join(format!("{}.json", f.subject_id));
                let pred = match exp.model {
                    ModelKind::Nn => {
                        let m = load_checkpoint(&p).map_err(input)?;
                        m.predict(&test)
                            .map_err(|e| CmdError::Training(format!("fold {}: {e}", f.subject_id)))?
                            .0
                    }
                    ModelKind::Rf => {
                        let forest = load_forest(&p).map_err(input)?;
                        forest.predict(&signal_matrix(&test, exp.signals)).0
                    }
                };
                subjects.push(subject_result(&f.subject_id, &labels(&test), &pred));
            }
            EvalReport::from_subjects(exp.clone(), subjects)
        }
    };
    write_report(&cfg.output_dir, &tag(exp.model, exp.signals), &report).map_err(from_eval)?;
    print_summary(&report);
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<(), CmdError> {
    let dir = Path::new(&cfg.output_dir);
    let entries = fs::read_dir(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    let mut reports: Vec<EvalReport> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter_map(|p| serde_json::from_str(&fs::read_to_string(p).ok()?).ok())
        .collect();
    if reports.is_empty() {
        return Err(input(format!("{}: no evaluation reports", dir.display())));
    }
    let order = |r: &EvalReport| {
        (
            r.config.model == ModelKind::Rf,
            SignalSet::ALL.iter().position(|s| *s == r.config.signals),
        )
    };
    reports.sort_by_key(order);
    let mut csv = String::from("model,signals,subjects,balanced_accuracy_mean,balanced_accuracy_std,accuracy_mean,accuracy_std\n");
    println!("{:<6} {:<7} {:>8}  {:>17}  {:>17}", "model", "signals", "subjects", "balanced acc", "accuracy");
    for r in &reports {
        let (ba, acc) = (r.aggregate.balanced_accuracy, r.aggregate.accuracy);
        println!(
            "{:<6} {:<7} {:>8}  {:.4} ± {:.4}  {:.4} ± {:.4}",
            r.config.model.to_string(),
            r.config.signals.to_string(),
            r.subjects.len(),
            ba.mean,
            ba.std,
            acc.mean,
            acc.std
        );
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.config.model,
            r.config.signals,
            r.subjects.len(),
            ba.mean,
            ba.std,
            acc.mean,
            acc.std
        ));
    }
    write(&dir.join("summary.csv"), csv)?;
    println!("std is the population standard deviation over subjects");
    Ok(())
}
