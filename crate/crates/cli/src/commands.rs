//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fairtone_core::annotate::{
    agreement, annotate_dataset, distribution_report, load_manifest, read_annotation_csv,
    write_annotation_csv, AgreementReport, AnnotateConfig,
};
use fairtone_core::evalbias::{
    evaluate_model, example_scores, gen_synthetic_biased, run_experiment, EvalReport, ProbeConfig,
    SyntheticBiasSpec,
};
use fairtone_core::unlearn::{gradcheck, EpochStats, Method, TrainConfig};
use fairtone_core::{Model, Scalar};

use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_manifest_at(path: &Path) -> Result<fairtone_core::annotate::DatasetManifest, CliError> {
    load_manifest(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_annotations_at(path: &Path) -> Result<Vec<fairtone_core::annotate::AnnotationRecord>, CliError> {
    read_annotation_csv(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    write_text(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// `annotate`: batch-label a manifest, write the CSV and the distribution
/// report, print the histogram.
pub fn cmd_annotate(
    manifest_path: &Path,
    config: &AnnotateConfig,
    out_path: &Path,
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    let manifest = load_manifest_at(manifest_path)?;
    for reject in &manifest.rejects {
        eprintln!("manifest line {} rejected: {}", reject.line, reject.reason);
    }
    let records = annotate_dataset(&manifest, config);
    let report = distribution_report(&records);

    let mut csv_bytes = Vec::new();
    write_annotation_csv(&records, &mut csv_bytes).map_err(runtime)?;
    std::fs::write(out_path, &csv_bytes)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", out_path.display())))?;

    let default_report = out_path.with_extension("report.json");
    let report_path = report_path.unwrap_or(&default_report);
    write_json(report_path, &report)?;

    print!("{}", report.to_text_histogram());
    println!("annotations: {}", out_path.display());
    println!("report:      {}", report_path.display());

    let ok = report.total - report.failures;
    if report.total > 0 && ok == 0 {
        return Err(CliError::Runtime("every row failed annotation".into()));
    }
    Ok(())
}

/// `report`: distribution report from an existing annotation CSV.
pub fn cmd_report(annotations_path: &Path, json_path: Option<&Path>) -> Result<(), CliError> {
    let records = read_annotations_at(annotations_path)?;
    let report = distribution_report(&records);
    print!("{}", report.to_text_histogram());
    let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    println!("{json}");
    if let Some(path) = json_path {
        write_json(path, &report)?;
    }
    Ok(())
}

fn print_agreement(report: &AgreementReport) {
    println!(
        "agreement: {:.4} ({} of {} within ±{})",
        report.accuracy, report.n_within_tolerance, report.n_compared, report.tolerance
    );
    println!("confusion (rows: human 1..6, cols: auto 1..6):");
    for (i, row) in report.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:5}")).collect();
        println!("  {} | {}", i + 1, cells.join(" "));
    }
}

/// `agree`: score an annotation CSV against the manifest's human labels.
pub fn cmd_agree(
    annotations_path: &Path,
    manifest_path: &Path,
    tolerance: u8,
) -> Result<(), CliError> {
    let records = read_annotations_at(annotations_path)?;
    let manifest = load_manifest_at(manifest_path)?;
    let report = agreement(&records, &manifest, tolerance).map_err(runtime)?;
    print_agreement(&report);
    Ok(())
}

fn example_csv(examples: &[fairtone_core::Example]) -> String {
    let dim = examples.first().map_or(0, |e| e.x.len());
    let mut out = String::new();
    let header: Vec<String> = (0..dim).map(|d| format!("x{d}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",y,b\n");
    for e in examples {
        let xs: Vec<String> = e.x.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&format!("{},{},{}\n", xs.join(","), e.y, e.b));
    }
    out
}

/// `synth`: generate the synthetic dataset and write both splits plus the
/// spec echo.
pub fn cmd_synth(spec: &SyntheticBiasSpec, out_dir: &Path) -> Result<(), CliError> {
    let data = gen_synthetic_biased::<Scalar>(spec).map_err(runtime)?;
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("train.csv"), &example_csv(&data.train))?;
    write_text(&out_dir.join("test.csv"), &example_csv(&data.test))?;
    write_json(&out_dir.join("spec.json"), spec)?;
    println!(
        "wrote {} train and {} test examples to {}",
        data.train.len(),
        data.test.len(),
        out_dir.display()
    );
    Ok(())
}

/// Everything needed to reload and re-evaluate a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub spec: SyntheticBiasSpec,
    pub train_config: TrainConfig,
    pub model: Model,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HistoryFile {
    spec: SyntheticBiasSpec,
    train_config: TrainConfig,
    epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvalFile {
    method: Method,
    train_seed: u64,
    data_seed: u64,
    report: EvalReport,
}

/// `train`: generate data from the spec, train the method, evaluate on the
/// test split; writes `model.json`, `history.json` and `eval.json`.
pub fn cmd_train(
    spec: &SyntheticBiasSpec,
    config: &TrainConfig,
    probe: &ProbeConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    let result = run_experiment::<Scalar>(spec, config, probe).map_err(runtime)?;
    ensure_dir(out_dir)?;
    let checkpoint = ModelCheckpoint {
        spec: *spec,
        train_config: config.clone(),
        model: result.outcome.model,
    };
    write_json(&out_dir.join("model.json"), &checkpoint)?;
    write_json(
        &out_dir.join("history.json"),
        &HistoryFile {
            spec: *spec,
            train_config: config.clone(),
            epochs: result.outcome.history,
        },
    )?;
    let eval = EvalFile {
        method: config.method,
        train_seed: config.seed,
        data_seed: spec.seed,
        report: result.report,
    };
    write_json(&out_dir.join("eval.json"), &eval)?;
    println!("{}", serde_json::to_string_pretty(&eval).map_err(runtime)?);
    println!("outputs in {}", out_dir.display());
    Ok(())
}

/// `eval`: reload a checkpoint, regenerate the dataset from a spec, and
/// re-evaluate; optionally dumps per-example scores.
pub fn cmd_eval(
    model_path: &Path,
    spec_override: Option<&SyntheticBiasSpec>,
    probe: &ProbeConfig,
    out_path: Option<&Path>,
    scores_path: Option<&Path>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(model_path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", model_path.display())))?;
    let checkpoint: ModelCheckpoint = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("bad checkpoint {}: {e}", model_path.display())))?;
    let spec = spec_override.copied().unwrap_or(checkpoint.spec);
    let data = gen_synthetic_biased::<Scalar>(&spec).map_err(runtime)?;

    let report = evaluate_model(&checkpoint.model, &data.test, probe).map_err(runtime)?;
    let eval = EvalFile {
        method: checkpoint.train_config.method,
        train_seed: checkpoint.train_config.seed,
        data_seed: spec.seed,
        report,
    };
    println!("{}", serde_json::to_string_pretty(&eval).map_err(runtime)?);
    if let Some(path) = out_path {
        write_json(path, &eval)?;
    }
    if let Some(path) = scores_path {
        let rows = example_scores(&checkpoint.model, &data.test).map_err(runtime)?;
        let mut csv = String::from("index,score,y,b\n");
        for r in &rows {
            csv.push_str(&format!("{},{:.6},{},{}\n", r.index, r.score, r.y, r.b));
        }
        write_text(path, &csv)?;
    }
    Ok(())
}

/// `gradcheck`: finite-difference check of every method's gradients.
pub fn cmd_gradcheck(seed: u64, tolerance: f64) -> Result<(), CliError> {
    let results = gradcheck::run_standard_check::<Scalar>(seed).map_err(runtime)?;
    let mut worst = 0.0f64;
    for r in &results {
        println!(
            "{:9} max relative error {:.3e} over {} parameters",
            r.method.to_string(),
            r.max_rel_err,
            r.checked
        );
        worst = worst.max(r.max_rel_err);
    }
    if worst < tolerance {
        println!("gradcheck passed (worst {worst:.3e} < {tolerance:e})");
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradcheck failed: worst relative error {worst:.3e} >= {tolerance:e}"
        )))
    }
}

/// Resolves the output path for a run, creating the directory lazily.
pub fn out_dir_or_default(dir: &Option<PathBuf>) -> PathBuf {
    dir.clone().unwrap_or_else(|| PathBuf::from("."))
}
