//! The JSON run configuration. Relative paths resolve against the directory
//! holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sevlogit::domain::{SegmentKey, SeverityClass};
use sevlogit::estimate::EstimationOptions;
use sevlogit::inference::EffectMode;
use sevlogit::ingest::SchemaSpec;
use sevlogit::model::ModelSpec;
use sevlogit::synth::DgpSpec;

use crate::error::{CliError, CliResult};

/// Models fitted on pooled data for the partition tests.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PooledModels {
    pub full: Option<ModelSpec>,
    pub rural: Option<ModelSpec>,
    pub urban: Option<ModelSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub dgp: DgpSpec,
    pub n: usize,
    /// Where to write the CSV; defaults to `input`.
    pub output: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_retention() -> f64 {
    0.90
}

fn default_test_confidence() -> f64 {
    0.99
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Required unless `synth` is given, in which case the generated layout is used.
    pub schema: Option<SchemaSpec>,
    /// Template for every model without its own entry.
    pub model: ModelSpec,
    /// Per-segment specs keyed by label, e.g. `rural-dark_lighted`.
    #[serde(default)]
    pub segment_models: BTreeMap<String, ModelSpec>,
    #[serde(default)]
    pub pooled_models: PooledModels,
    #[serde(default)]
    pub estimation: EstimationOptions,
    #[serde(default = "default_retention")]
    pub retention_confidence: f64,
    #[serde(default = "default_test_confidence")]
    pub test_confidence: f64,
    #[serde(default)]
    pub marginal_effects: EffectMode,
    /// Alternative dropped for the Hausman–McFadden IIA screen; no screen when absent.
    pub hausman_omit: Option<SeverityClass>,
    pub synth: Option<SynthConfig>,
}

/// A config with its paths resolved.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: RunConfig,
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub schema: SchemaSpec,
    pub segment_models: BTreeMap<SegmentKey, ModelSpec>,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path, e))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::config(path, e))?;
        LoadedConfig::resolve(path, config)
    }

    pub fn resolve(path: &Path, config: RunConfig) -> CliResult<LoadedConfig> {
        let base = path.parent().unwrap_or(Path::new("."));
        let fail = |m: String| CliError::config(path, m);
        let schema = match (&config.schema, &config.synth) {
            (Some(s), _) => s.clone(),
            (None, Some(synth)) => SchemaSpec::for_dataset(&synth.dgp.schema().map_err(|e| fail(e.to_string()))?),
            (None, None) => {
                return Err(fail(
                    "no `schema` given and no `synth` section to derive one from".into(),
                ))
            }
        };
        schema.validate().map_err(|e| fail(e.to_string()))?;
        let covariates = schema.covariate_schema().map_err(|e| fail(e.to_string()))?;

        let mut segment_models = BTreeMap::new();
        for (label, spec) in &config.segment_models {
            let key: SegmentKey = label.parse().map_err(|e| fail(format!("segment_models: {e}")))?;
            segment_models.insert(key, spec.clone());
        }
        let pooled = &config.pooled_models;
        let mut specs: Vec<(String, &ModelSpec)> = vec![("model".into(), &config.model)];
        specs.extend(
            config
                .segment_models
                .iter()
                .map(|(k, s)| (format!("segment_models.{k}"), s)),
        );
        for (name, spec) in [
            ("full", &pooled.full),
            ("rural", &pooled.rural),
            ("urban", &pooled.urban),
        ] {
            if let Some(s) = spec {
                specs.push((format!("pooled_models.{name}"), s));
            }
        }
        for (name, spec) in specs {
            spec.validate().map_err(|e| fail(format!("{name}: {e}")))?;
            if let Some(c) = spec.covariates().into_iter().find(|c| covariates.index_of(c).is_none()) {
                return Err(fail(format!("{name}: covariate {c:?} is not derived by the schema")));
            }
        }
        if config.estimation.n_draws == 0 {
            return Err(fail("estimation.n_draws must be at least 1".into()));
        }
        for (name, c) in [
            ("retention_confidence", config.retention_confidence),
            ("test_confidence", config.test_confidence),
        ] {
            if !(c > 0.0 && c < 1.0) {
                return Err(fail(format!("{name} must be in (0, 1), got {c}")));
            }
        }
        if let Some(omit) = config.hausman_omit {
            if omit == config.model.base {
                return Err(fail("hausman_omit cannot be the base alternative".into()));
            }
        }
        if let Some(synth) = &config.synth {
            synth.dgp.validate().map_err(|e| fail(format!("synth.dgp: {e}")))?;
            if synth.n == 0 {
                return Err(fail("synth.n must be at least 1".into()));
            }
        }
        Ok(LoadedConfig {
            path: path.to_path_buf(),
            input: base.join(&config.input),
            output_dir: base.join(&config.output_dir),
            schema,
            segment_models,
            config,
        })
    }

    pub fn segment_spec(&self, key: &SegmentKey) -> &ModelSpec {
        self.segment_models.get(key).unwrap_or(&self.config.model)
    }

    /// Spec for `full`, `rural` or `urban`.
    pub fn pooled_spec(&self, label: &str) -> &ModelSpec {
        let p = &self.config.pooled_models;
        let spec = match label {
            "full" => &p.full,
            "rural" => &p.rural,
            "urban" => &p.urban,
            _ => &None,
        };
        spec.as_ref().unwrap_or(&self.config.model)
    }

    pub fn synth_output(&self) -> Option<PathBuf> {
        let base = self.path.parent().unwrap_or(Path::new("."));
        let synth = self.config.synth.as_ref()?;
        Some(
            synth
                .output
                .as_ref()
                .map_or_else(|| self.input.clone(), |p| base.join(p)),
        )
    }
}
