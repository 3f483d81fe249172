//! Dataset ingestion, batch annotation, distribution and agreement reports.
//!
//! A dataset is described by a CSV manifest (`image_id,path` required,
//! `human_fitzpatrick,diagnosis` optional). Batch annotation runs the
//! skin-tone estimator over every row, never aborts on a bad row, and is
//! deterministic: rerunning over the same manifest, config and image bytes
//! reproduces the output byte for byte, regardless of worker count.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::color::{Fitzpatrick, Rgb8};
use crate::imageproc::{estimate_skin_tone, RasterImage, SkinToneConfig};
use crate::Scalar;

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub image_id: String,
    pub path: PathBuf,
    pub human_fitzpatrick: Option<Fitzpatrick>,
    pub diagnosis: Option<String>,
}

/// A manifest row that failed validation, kept for reporting instead of
/// being silently dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    /// 1-based line number in the CSV file.
    pub line: u64,
    pub reason: String,
}

/// Parsed dataset manifest: accepted rows plus rejects.
#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub rejects: Vec<RejectedRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("failed to read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest is missing required column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("manifest has no header row")]
    Empty,
}

/// Loads a CSV manifest. `image_id` and `path` columns are required;
/// `human_fitzpatrick` and `diagnosis` are picked up when present and any
/// other column is ignored. Relative image paths resolve against the
/// manifest's directory. Malformed rows land in `rejects` with a reason.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let file = std::fs::File::open(path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(ManifestError::Empty);
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("image_id");
    let path_col = col("path");
    let missing: Vec<String> = [("image_id", id_col), ("path", path_col)]
        .iter()
        .filter(|(_, idx)| idx.is_none())
        .map(|(name, _)| name.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ManifestError::MissingColumns(missing));
    }
    let (id_col, path_col) = (id_col.unwrap(), path_col.unwrap());
    let fitz_col = col("human_fitzpatrick");
    let diag_col = col("diagnosis");

    let mut manifest = DatasetManifest::default();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2; // header is line 1
        let reject = |reason: String, rejects: &mut Vec<RejectedRow>| {
            rejects.push(RejectedRow { line, reason });
        };
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                reject(format!("unparseable row: {e}"), &mut manifest.rejects);
                continue;
            }
        };
        let image_id = record.get(id_col).unwrap_or("").trim().to_string();
        if image_id.is_empty() {
            reject("empty image_id".into(), &mut manifest.rejects);
            continue;
        }
        if !seen.insert(image_id.clone()) {
            reject(format!("duplicate image_id '{image_id}'"), &mut manifest.rejects);
            continue;
        }
        let raw_path = record.get(path_col).unwrap_or("").trim();
        if raw_path.is_empty() {
            reject(format!("row '{image_id}': empty path"), &mut manifest.rejects);
            continue;
        }
        let human_fitzpatrick = match fitz_col.map(|c| record.get(c).unwrap_or("").trim()) {
            None | Some("") => None,
            Some(text) => match text.parse::<u8>().ok().and_then(|v| Fitzpatrick::try_from(v).ok())
            {
                Some(f) => Some(f),
                None => {
                    reject(
                        format!("row '{image_id}': human_fitzpatrick '{text}' not in 1..=6"),
                        &mut manifest.rejects,
                    );
                    continue;
                }
            },
        };
        let diagnosis = diag_col
            .map(|c| record.get(c).unwrap_or("").trim())
            .filter(|d| !d.is_empty())
            .map(str::to_string);
        let resolved = {
            let p = Path::new(raw_path);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        manifest.rows.push(ManifestRow {
            image_id,
            path: resolved,
            human_fitzpatrick,
            diagnosis,
        });
    }
    Ok(manifest)
}

/// Successful per-image annotation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub ita: Scalar,
    pub fitzpatrick: Fitzpatrick,
    pub patch_x: usize,
    pub patch_y: usize,
    pub masked_fraction: Scalar,
}

/// Outcome of annotating one manifest row.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordStatus {
    Ok(Annotation),
    Failed { reason: String },
}

/// One output row of a batch annotation run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub status: RecordStatus,
}

impl AnnotationRecord {
    pub fn ok(&self) -> Option<&Annotation> {
        match &self.status {
            RecordStatus::Ok(a) => Some(a),
            RecordStatus::Failed { .. } => None,
        }
    }
}

/// Batch annotation configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotateConfig {
    pub tone: SkinToneConfig,
    /// Number of worker threads for the per-image fan-out.
    pub workers: usize,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self { tone: SkinToneConfig::default(), workers: 1 }
    }
}

fn load_image(path: &Path) -> Result<RasterImage, String> {
    let decoded = image::open(path).map_err(|e| format!("cannot load image: {e}"))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels = rgb.pixels().map(|p| Rgb8::new(p.0[0], p.0[1], p.0[2])).collect();
    RasterImage::from_pixels(w, h, pixels).map_err(|e| e.to_string())
}

fn annotate_row(row: &ManifestRow, tone: &SkinToneConfig) -> AnnotationRecord {
    let status = match load_image(&row.path) {
        Err(reason) => RecordStatus::Failed { reason },
        Ok(image) => match estimate_skin_tone::<Scalar>(&image, tone) {
            Err(e) => RecordStatus::Failed { reason: e.to_string() },
            Ok(estimate) => RecordStatus::Ok(Annotation {
                ita: estimate.ita.degrees(),
                fitzpatrick: estimate.fitzpatrick,
                patch_x: estimate.chosen_patch.x,
                patch_y: estimate.chosen_patch.y,
                masked_fraction: estimate.masked_fraction,
            }),
        },
    };
    AnnotationRecord { image_id: row.image_id.clone(), status }
}

/// Annotates every manifest row. Per-row failures (unreadable files,
/// undersized images) become `Failed` records and never abort the batch.
/// The output order always follows the manifest, whatever `workers` says.
pub fn annotate_dataset(manifest: &DatasetManifest, config: &AnnotateConfig) -> Vec<AnnotationRecord> {
    let rows = &manifest.rows;
    let workers = config.workers.max(1).min(rows.len().max(1));
    if workers <= 1 || rows.len() <= 1 {
        return rows.iter().map(|row| annotate_row(row, &config.tone)).collect();
    }

    let slots: Mutex<Vec<Option<AnnotationRecord>>> = Mutex::new(vec![None; rows.len()]);
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::Relaxed);
                if index >= rows.len() {
                    break;
                }
                let record = annotate_row(&rows[index], &config.tone);
                slots.lock().expect("annotation slot lock")[index] = Some(record);
            });
        }
    });
    slots
        .into_inner()
        .expect("annotation slot lock")
        .into_iter()
        .map(|slot| slot.expect("every row annotated"))
        .collect()
}

/// Fixed annotation CSV schema. ITA and the masked fraction print with
/// four decimals so reruns diff cleanly.
pub const ANNOTATION_CSV_HEADER: &str =
    "image_id,ita,fitzpatrick,patch_x,patch_y,masked_fraction,status";

/// Writes records in the fixed CSV schema.
pub fn write_annotation_csv<W: Write>(records: &[AnnotationRecord], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "image_id",
        "ita",
        "fitzpatrick",
        "patch_x",
        "patch_y",
        "masked_fraction",
        "status",
    ])?;
    for record in records {
        match &record.status {
            RecordStatus::Ok(a) => writer.write_record([
                record.image_id.as_str(),
                &format!("{:.4}", a.ita),
                &a.fitzpatrick.to_string(),
                &a.patch_x.to_string(),
                &a.patch_y.to_string(),
                &format!("{:.4}", a.masked_fraction),
                "ok",
            ])?,
            RecordStatus::Failed { reason } => writer.write_record([
                record.image_id.as_str(),
                "",
                "",
                "",
                "",
                "",
                &format!("failed: {reason}"),
            ])?,
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads records back from the fixed CSV schema.
pub fn read_annotation_csv(path: &Path) -> Result<Vec<AnnotationRecord>, ManifestError> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let expect: Vec<&str> = ANNOTATION_CSV_HEADER.split(',').collect();
    let missing: Vec<String> = expect
        .iter()
        .filter(|name| !headers.iter().any(|h| h == **name))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ManifestError::MissingColumns(missing));
    }
    let idx = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (id_i, ita_i, fitz_i, px_i, py_i, mf_i, status_i) = (
        idx("image_id"),
        idx("ita"),
        idx("fitzpatrick"),
        idx("patch_x"),
        idx("patch_y"),
        idx("masked_fraction"),
        idx("status"),
    );
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let image_id = field(id_i);
        let status_text = field(status_i);
        let status = if status_text == "ok" {
            let parse_err = |what: &str| {
                ManifestError::MissingColumns(vec![format!("bad {what} for '{image_id}'")])
            };
            RecordStatus::Ok(Annotation {
                ita: field(ita_i).parse().map_err(|_| parse_err("ita"))?,
                fitzpatrick: field(fitz_i)
                    .parse::<u8>()
                    .ok()
                    .and_then(|v| Fitzpatrick::try_from(v).ok())
                    .ok_or_else(|| parse_err("fitzpatrick"))?,
                patch_x: field(px_i).parse().map_err(|_| parse_err("patch_x"))?,
                patch_y: field(py_i).parse().map_err(|_| parse_err("patch_y"))?,
                masked_fraction: field(mf_i).parse().map_err(|_| parse_err("masked_fraction"))?,
            })
        } else {
            let reason = status_text.strip_prefix("failed: ").unwrap_or(&status_text).to_string();
            RecordStatus::Failed { reason }
        };
        records.push(AnnotationRecord { image_id, status });
    }
    Ok(records)
}

/// Histogram of automated labels over a batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    /// Counts for types 1 through 6, in order.
    pub counts: [u64; 6],
    /// All records seen.
    pub total: u64,
    /// Records that failed annotation.
    pub failures: u64,
}

impl DistributionReport {
    pub fn count_for(&self, fitz: Fitzpatrick) -> u64 {
        self.counts[(fitz.as_u8() - 1) as usize]
    }

    /// Plain-text bar chart, one line per type.
    pub fn to_text_histogram(&self) -> String {
        let labelled: u64 = self.counts.iter().sum();
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut out = format!(
            "Fitzpatrick distribution ({labelled} labelled, {} failed)\n",
            self.failures
        );
        for (i, &count) in self.counts.iter().enumerate() {
            let width = ((count * 40) / max) as usize;
            out.push_str(&format!("  type {} | {} {}\n", i + 1, "#".repeat(width), count));
        }
        out
    }
}

/// Counts automated labels per Fitzpatrick type over the ok records.
pub fn distribution_report(records: &[AnnotationRecord]) -> DistributionReport {
    let mut counts = [0u64; 6];
    let mut failures = 0u64;
    for record in records {
        match &record.status {
            RecordStatus::Ok(a) => counts[(a.fitzpatrick.as_u8() - 1) as usize] += 1,
            RecordStatus::Failed { .. } => failures += 1,
        }
    }
    DistributionReport { counts, total: records.len() as u64, failures }
}

/// Agreement between automated and human labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_compared: u64,
    pub n_within_tolerance: u64,
    /// `n_within_tolerance / n_compared`.
    pub accuracy: f64,
    /// `confusion[human - 1][auto - 1]` counts.
    pub confusion: [[u64; 6]; 6],
    pub tolerance: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("no rows have both an automated and a human label")]
    NoComparableRows,
}

/// Scores automated labels against the manifest's human labels. A
/// prediction counts as correct when `|auto - human| <= tolerance`. Rows
/// lacking either label are skipped, not treated as disagreement.
pub fn agreement(
    records: &[AnnotationRecord],
    manifest: &DatasetManifest,
    tolerance: u8,
) -> Result<AgreementReport, AgreementError> {
    let human: BTreeMap<&str, Fitzpatrick> = manifest
        .rows
        .iter()
        .filter_map(|row| row.human_fitzpatrick.map(|f| (row.image_id.as_str(), f)))
        .collect();
    let mut report = AgreementReport {
        n_compared: 0,
        n_within_tolerance: 0,
        accuracy: 0.0,
        confusion: [[0; 6]; 6],
        tolerance,
    };
    for record in records {
        let (Some(annotation), Some(&truth)) =
            (record.ok(), human.get(record.image_id.as_str()))
        else {
            continue;
        };
        let auto = annotation.fitzpatrick.as_u8();
        let human_v = truth.as_u8();
        report.n_compared += 1;
        if auto.abs_diff(human_v) <= tolerance {
            report.n_within_tolerance += 1;
        }
        report.confusion[(human_v - 1) as usize][(auto - 1) as usize] += 1;
    }
    if report.n_compared == 0 {
        return Err(AgreementError::NoComparableRows);
    }
    report.accuracy = report.n_within_tolerance as f64 / report.n_compared as f64;
    Ok(report)
}
