//! The four subcommands: fuse, eval, transform, ablate.
//!
//! Every command validates the full configuration before opening any input
//! file, writes deterministic outputs (key-sorted JSON, fixed ordering),
//! and reports I/O and validation failures through [`CliError`] so the
//! exit-code contract holds.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use fusebox_core::detections::{
    parse_ground_truth, parse_predictions, CategoryId, GroundTruth, PredictionSet,
};
use fusebox_core::eval::{evaluate, EvalConfig};
use fusebox_core::fusion::fuse;
use fusebox_core::tta::{adjust_hsv, map_predictions, read_png, resize_image, write_png, ManifestEntry};

use crate::config::RunConfig;
use crate::error::CliError;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn load_ground_truth(path: &Path) -> Result<GroundTruth, CliError> {
    let bytes = read_file(path)?;
    parse_ground_truth(&bytes).map_err(|source| CliError::Parse {
        path: path.to_owned(),
        source,
    })
}

struct LoadedInput {
    label: String,
    path: PathBuf,
    transform: Option<String>,
    bytes: Vec<u8>,
    digest: String,
}

fn load_inputs(config: &RunConfig) -> Result<Vec<LoadedInput>, CliError> {
    config
        .inputs
        .iter()
        .map(|input| {
            let bytes = read_file(&input.path)?;
            let digest = hex::encode(Sha256::digest(&bytes));
            Ok(LoadedInput {
                label: input.label.clone(),
                path: input.path.clone(),
                transform: input.transform.clone(),
                bytes,
                digest,
            })
        })
        .collect()
}

/// The category universe: the ground-truth file when declared, otherwise
/// the union of category ids seen across the input files.
fn resolve_categories(
    config: &RunConfig,
    inputs: &[LoadedInput],
) -> Result<BTreeSet<CategoryId>, CliError> {
    if let Some(gt_path) = &config.ground_truth {
        return Ok(load_ground_truth(gt_path)?.category_ids());
    }
    let mut categories = BTreeSet::new();
    for input in inputs {
        let records: Vec<Value> =
            serde_json::from_slice(&input.bytes).map_err(|e| CliError::Parse {
                path: input.path.clone(),
                source: e.into(),
            })?;
        for record in records {
            if let Some(cat) = record
                .get("category_id")
                .and_then(Value::as_u64)
                .and_then(|n| u32::try_from(n).ok())
            {
                categories.insert(CategoryId(cat));
            }
        }
    }
    Ok(categories)
}

/// Parses every input against the shared category set and applies the
/// declared inverse TTA mapping.
fn parse_inputs(
    config: &RunConfig,
    inputs: &[LoadedInput],
    categories: &BTreeSet<CategoryId>,
) -> Result<Vec<PredictionSet>, CliError> {
    inputs
        .iter()
        .map(|input| {
            let set = parse_predictions(&input.bytes, categories, &input.label).map_err(
                |source| CliError::Parse {
                    path: input.path.clone(),
                    source,
                },
            )?;
            Ok(match &input.transform {
                Some(label) => {
                    let spec = config
                        .transform_spec(label)
                        .expect("transform references validated with the config");
                    map_predictions(&set, spec)
                }
                None => set,
            })
        })
        .collect()
}

fn timestamp_field(no_timestamp: bool) -> Option<String> {
    if no_timestamp {
        None
    } else {
        Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
    }
}

pub fn cmd_fuse(
    config: &RunConfig,
    out: Option<PathBuf>,
    no_timestamp: bool,
) -> Result<(), CliError> {
    if config.inputs.is_empty() {
        return Err(CliError::Config("fuse requires at least one input".into()));
    }
    let inputs = load_inputs(config)?;
    let categories = resolve_categories(config, &inputs)?;
    let sets = parse_inputs(config, &inputs, &categories)?;
    let fused = fuse(&sets, &config.fusion).map_err(|e| CliError::Validation(e.to_string()))?;

    let out_path = out
        .or_else(|| config.output.fused.clone())
        .unwrap_or_else(|| PathBuf::from("fused.json"));
    write_text(
        &out_path,
        &format!("{}\n", fusebox_core::detections::emit_predictions(&fused)),
    )?;

    let meta_path = config
        .output
        .metadata
        .clone()
        .unwrap_or_else(|| out_path.with_extension("meta.json"));
    let input_meta: Vec<Value> = inputs
        .iter()
        .zip(&sets)
        .map(|(input, set)| {
            json!({
                "label": input.label,
                "path": input.path.display().to_string(),
                "transform": input.transform,
                "sha256": input.digest,
                "detections": set.len(),
            })
        })
        .collect();
    let mut metadata = json!({
        "tool": "fusebox",
        "version": TOOL_VERSION,
        "command": "fuse",
        "fusion": config.fusion,
        "transforms": config.transforms,
        "inputs": input_meta,
        "output": {
            "path": out_path.display().to_string(),
            "detections": fused.len(),
        },
    });
    if let Some(ts) = timestamp_field(no_timestamp) {
        metadata["timestamp"] = json!(ts);
    }
    write_text(
        &meta_path,
        &format!("{}\n", serde_json::to_string_pretty(&metadata).unwrap()),
    )?;

    println!(
        "fused {} detections from {} inputs -> {}",
        fused.len(),
        sets.len(),
        out_path.display()
    );
    Ok(())
}

pub fn cmd_eval(
    predictions: &Path,
    ground_truth: &Path,
    eval_config: &EvalConfig,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let gt = load_ground_truth(ground_truth)?;
    let bytes = read_file(predictions)?;
    let label = predictions
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "predictions".into());
    let set = parse_predictions(&bytes, &gt.category_ids(), &label).map_err(|source| {
        CliError::Parse {
            path: predictions.to_owned(),
            source,
        }
    })?;
    let report =
        evaluate(&set, &gt, eval_config).map_err(|e| CliError::Validation(e.to_string()))?;
    print!("{}", report.render_table());
    if let Some(path) = out {
        write_text(
            &path,
            &format!("{}\n", serde_json::to_string_pretty(&report.to_json()).unwrap()),
        )?;
    }
    Ok(())
}

pub fn cmd_transform(
    images: &Path,
    out_dir: &Path,
    label: &str,
    config: &RunConfig,
) -> Result<(), CliError> {
    let spec = config
        .transform_spec(label)
        .ok_or_else(|| CliError::Config(format!("undeclared transform \"{label}\"")))?;

    let mut files: Vec<PathBuf> = fs::read_dir(images)
        .map_err(|source| CliError::Io {
            path: images.to_owned(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();

    fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_owned(),
        source,
    })?;

    let mut manifest = Vec::new();
    let mut failed = 0usize;
    for file in &files {
        let name = file
            .file_name()
            .expect("directory entries have names")
            .to_string_lossy()
            .into_owned();
        let dest = out_dir.join(&name);
        let result = if spec.is_identity() {
            // the identity transform copies the file byte-exactly rather
            // than re-encoding
            fs::copy(file, &dest).map(|_| ()).map_err(Into::into)
        } else {
            read_png(file)
                .and_then(|img| resize_image(&img, spec))
                .map(|img| adjust_hsv(&img, spec))
                .and_then(|img| write_png(&dest, &img))
        };
        match result {
            Ok(()) => manifest.push(ManifestEntry {
                file: name,
                spec: *spec,
            }),
            Err(e) => {
                log::error!("{}: {e}", file.display());
                eprintln!("error: {}: {e}", file.display());
                failed += 1;
            }
        }
    }

    write_text(
        &out_dir.join("manifest.json"),
        &format!("{}\n", serde_json::to_string_pretty(&manifest).unwrap()),
    )?;
    println!(
        "transformed {} of {} images -> {}",
        manifest.len(),
        files.len(),
        out_dir.display()
    );
    if failed > 0 {
        return Err(CliError::PartialFailure {
            failed,
            total: files.len(),
        });
    }
    Ok(())
}

pub fn cmd_ablate(
    config: &RunConfig,
    out: Option<PathBuf>,
    no_timestamp: bool,
) -> Result<(), CliError> {
    let gt_path = config.ground_truth.as_ref().ok_or_else(|| {
        CliError::Config("ablate requires ground_truth in the config".into())
    })?;
    if config.inputs.is_empty() {
        return Err(CliError::Config("ablate requires at least one input".into()));
    }

    let gt = load_ground_truth(gt_path)?;
    let categories = gt.category_ids();
    let inputs = load_inputs(config)?;
    let sets = parse_inputs(config, &inputs, &categories)?;

    let mut rows: Vec<(String, f64)> = Vec::with_capacity(sets.len() + 1);
    for (input, set) in inputs.iter().zip(&sets) {
        let report =
            evaluate(set, &gt, &config.eval).map_err(|e| CliError::Validation(e.to_string()))?;
        rows.push((input.label.clone(), report.map_overall));
    }
    let fused = fuse(&sets, &config.fusion).map_err(|e| CliError::Validation(e.to_string()))?;
    let fused_report =
        evaluate(&fused, &gt, &config.eval).map_err(|e| CliError::Validation(e.to_string()))?;
    rows.push(("fusion".into(), fused_report.map_overall));

    let width = rows
        .iter()
        .map(|(label, _)| label.len())
        .chain(std::iter::once("method".len()))
        .max()
        .unwrap();
    println!("{:<width$}  result", "method");
    for (label, map) in &rows {
        println!("{label:<width$}  {map:.3}");
    }

    if let Some(path) = out {
        let mut report = json!({
            "tool": "fusebox",
            "version": TOOL_VERSION,
            "command": "ablate",
            "fusion": config.fusion,
            "eval": config.eval,
            "rows": rows
                .iter()
                .map(|(label, map)| json!({"label": label, "map": map}))
                .collect::<Vec<_>>(),
        });
        if let Some(ts) = timestamp_field(no_timestamp) {
            report["timestamp"] = json!(ts);
        }
        write_text(
            &path,
            &format!("{}\n", serde_json::to_string_pretty(&report).unwrap()),
        )?;
    }
    Ok(())
}
