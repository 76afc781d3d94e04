//! Run configuration: one JSON document describing the fusion and eval
//! parameters, declared transforms, input prediction files, and output
//! paths. Individual CLI flags override fields after loading.
//!
//! Relative paths inside the config resolve against the config file's
//! directory, so a run directory can be moved as a unit.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fusebox_core::eval::EvalConfig;
use fusebox_core::fusion::FusionConfig;
use fusebox_core::tta::TransformSpec;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fusion: FusionConfig,
    pub eval: EvalConfig,
    pub transforms: Vec<TransformEntry>,
    pub inputs: Vec<InputEntry>,
    pub ground_truth: Option<PathBuf>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformEntry {
    pub label: String,
    #[serde(flatten)]
    pub spec: TransformSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEntry {
    pub label: String,
    pub path: PathBuf,
    /// Label of a declared transform whose inverse maps this input's boxes
    /// back to original coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub fused: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config: RunConfig =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!(
                "{}: {e}",
                path.display()
            )))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for input in &mut self.inputs {
            resolve(&mut input.path);
        }
        if let Some(gt) = &mut self.ground_truth {
            resolve(gt);
        }
        if let Some(p) = &mut self.output.fused {
            resolve(p);
        }
        if let Some(p) = &mut self.output.metadata {
            resolve(p);
        }
        if let Some(p) = &mut self.output.report {
            resolve(p);
        }
    }

    /// Structural validation: unique labels, resolvable transform
    /// references, and legal fusion/eval/transform parameters. Runs before
    /// any input file is opened.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut labels = BTreeSet::new();
        for t in &self.transforms {
            if !labels.insert(&t.label) {
                return Err(CliError::Config(format!(
                    "duplicate transform label \"{}\"",
                    t.label
                )));
            }
            t.spec
                .validate()
                .map_err(|e| CliError::Config(format!("transform \"{}\": {e}", t.label)))?;
        }
        let mut input_labels = BTreeSet::new();
        for input in &self.inputs {
            if !input_labels.insert(&input.label) {
                return Err(CliError::Config(format!(
                    "duplicate input label \"{}\"",
                    input.label
                )));
            }
            if let Some(wanted) = &input.transform {
                if !self.transforms.iter().any(|t| &t.label == wanted) {
                    return Err(CliError::Config(format!(
                        "input \"{}\" references undeclared transform \"{wanted}\"",
                        input.label
                    )));
                }
            }
        }
        self.fusion
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.eval
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn transform_spec(&self, label: &str) -> Option<&TransformSpec> {
        self.transforms
            .iter()
            .find(|t| t.label == label)
            .map(|t| &t.spec)
    }
}
