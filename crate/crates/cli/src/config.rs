//! Run configuration: a TOML file whose keys may be overridden from the
//! command line with dotted flags such as `--train.learning_rate 5e-4`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use carbonlace::case::{short_digest, GridCase, Partition};
use carbonlace::sls::{BoundMode, ExperimentConfig, SearchConfig};
use carbonlace::training::{DatasetConfig, ModelSpec, ShiftJitter, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Case file, or `builtin:case30` / `builtin:case14_tight` / `builtin:case2`.
    pub case: String,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub zones: ZoneSection,
    #[serde(default)]
    pub sls: SlsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_samples: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub jitter: f64,
    pub test_fraction: f64,
    pub seed: u64,
    /// Bus IDs whose loads receive a zero-sum shift perturbation.
    pub shift_buses: Vec<usize>,
    pub shift_cap: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        DatasetSection {
            n_samples: d.n_samples,
            scale_min: d.scale_range.0,
            scale_max: d.scale_range.1,
            jitter: d.jitter,
            test_fraction: d.test_fraction,
            seed: d.seed,
            shift_buses: Vec::new(),
            shift_cap: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub output_scale: Option<f64>,
    pub seed: u64,
    /// Input normalization: `"dataset"` (train mean and deviation) or
    /// `"nominal"` (divide by nominal loads).
    pub normalization: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelSpec::default();
        ModelSection {
            hidden: m.hidden,
            dropout_rate: m.dropout_rate,
            output_scale: m.output_scale,
            seed: m.seed,
            normalization: "dataset".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub final_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub epsilon: Option<f64>,
    pub stage_threshold: f64,
    pub patience: usize,
    pub seed: u64,
    pub drop_degenerate_labels: bool,
    pub last_stage: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            final_learning_rate: t.final_learning_rate,
            batch_size: t.batch_size,
            gamma1: t.gamma1,
            gamma2: t.gamma2,
            gamma3: t.gamma3,
            epsilon: t.epsilon,
            stage_threshold: t.stage_threshold,
            patience: t.patience,
            seed: t.seed,
            drop_degenerate_labels: t.drop_degenerate_labels,
            last_stage: t.last_stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub k: usize,
    pub seed: u64,
    /// Use the clusters stored in the case file instead of k-means.
    pub from_case: bool,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            k: 4,
            seed: 0,
            from_case: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZoneSection {
    /// Expected zone count; must match the case's zone map.
    pub k: usize,
}

impl Default for ZoneSection {
    fn default() -> Self {
        ZoneSection { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlsSection {
    /// Bus IDs of the flexible loads.
    pub buses: Vec<usize>,
    /// `"cap"` (MW) or `"fraction"` of each base load.
    pub bound_mode: String,
    pub bound: f64,
    pub n_profiles: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub jitter: f64,
    pub seed: u64,
    pub include_opt: bool,
    /// Any of `ACE`, `LMCE`, `LACE-R`, `CEF`, `LACE-S`, `ZACE-S`.
    pub signals: Vec<String>,
    pub lace_r_segments: usize,
}

impl Default for SlsSection {
    fn default() -> Self {
        SlsSection {
            buses: vec![2, 7, 8, 12, 19, 21],
            bound_mode: "cap".into(),
            bound: 5.0,
            n_profiles: 1000,
            scale_min: 1.1,
            scale_max: 1.3,
            jitter: 0.05,
            seed: 0,
            include_opt: true,
            signals: ["LMCE", "LACE-R", "CEF", "LACE-S"].map(String::from).to_vec(),
            lace_r_segments: carbonlace::metrics::LACE_R_SEGMENTS,
        }
    }
}

/// A dotted `section.key` override taken from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: String,
    pub raw: String,
}

/// Splits `--a.b value` and `--a.b=value` flags out of `args`.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<Override>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !name.contains('.') {
            rest.push(a);
            continue;
        }
        let raw = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| ConfigError(format!("--{name} needs a value")))?,
        };
        overrides.push(Override { path: name, raw });
    }
    Ok((rest, overrides))
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply(table: &mut toml::Table, ov: &Override) -> Result<()> {
    let mut parts: Vec<&str> = ov.path.split('.').collect();
    let last = parts.pop().unwrap();
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("--{}: `{p}` is not a section", ov.path)))?;
    }
    let mut value = parse_value(&ov.raw);
    // Integers are accepted where a float is expected.
    if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (cur.get(last), &value) {
        value = toml::Value::Float(*i as f64);
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` and applies `overrides` on top of the file's values and
    /// the built-in defaults.
    pub fn load(path: &Path, overrides: &[Override]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str_with(&text, overrides, path.parent())
    }

    pub fn from_str_with(text: &str, overrides: &[Override], base: Option<&Path>) -> Result<RunConfig> {
        let file: toml::Table = toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        // Materialize defaults so that overrides see typed values.
        let parsed: RunConfig = toml::Value::Table(file)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("config: {e}")))?;
        let mut table = toml::Table::try_from(&parsed).expect("config serializes");
        for ov in overrides {
            apply(&mut table, ov)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("override: {e}")))?;
        if let Some(base) = base {
            if !cfg.case.starts_with("builtin:") && Path::new(&cfg.case).is_relative() {
                cfg.case = base.join(&cfg.case).to_string_lossy().into_owned();
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = base.join(&cfg.output_dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| -> Result<()> { Err(ConfigError(m).into()) };
        if !self.case.starts_with("builtin:") && !Path::new(&self.case).exists() {
            return bad(format!("case file {} does not exist", self.case));
        }
        let d = &self.dataset;
        if !(d.scale_min > 0.0 && d.scale_max >= d.scale_min) {
            return bad("dataset scale range must satisfy 0 < min ≤ max".into());
        }
        if !(0.0..1.0).contains(&d.test_fraction) {
            return bad("dataset.test_fraction must lie in [0, 1)".into());
        }
        if !["dataset", "nominal"].contains(&self.model.normalization.as_str()) {
            return bad(format!("model.normalization `{}` is not dataset|nominal", self.model.normalization));
        }
        if !["cap", "fraction"].contains(&self.sls.bound_mode.as_str()) {
            return bad(format!("sls.bound_mode `{}` is not cap|fraction", self.sls.bound_mode));
        }
        for s in &self.sls.signals {
            if !["ACE", "LMCE", "LACE-R", "CEF", "LACE-S", "ZACE-S"].contains(&s.as_str()) {
                return bad(format!("unknown signal `{s}`"));
            }
        }
        self.train_config().validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    /// Digest of the settings that affect results. The case path and output
    /// directory are excluded; the case enters through its own hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.case.clear();
        c.output_dir = PathBuf::new();
        short_digest(toml::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            final_learning_rate: t.final_learning_rate,
            batch_size: t.batch_size,
            gamma1: t.gamma1,
            gamma2: t.gamma2,
            gamma3: t.gamma3,
            epsilon: t.epsilon,
            stage_threshold: t.stage_threshold,
            patience: t.patience,
            dropout_rate: self.model.dropout_rate,
            seed: t.seed,
            drop_degenerate_labels: t.drop_degenerate_labels,
            last_stage: t.last_stage,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            hidden: self.model.hidden.clone(),
            dropout_rate: self.model.dropout_rate,
            output_scale: self.model.output_scale,
            seed: self.model.seed,
        }
    }

    pub fn dataset_config(&self, case: &GridCase) -> Result<DatasetConfig> {
        let d = &self.dataset;
        let shift = if d.shift_buses.is_empty() {
            None
        } else {
            Some(ShiftJitter {
                flexible: load_indices(case, &d.shift_buses)?,
                cap: d.shift_cap,
            })
        };
        Ok(DatasetConfig {
            n_samples: d.n_samples,
            scale_range: (d.scale_min, d.scale_max),
            jitter: d.jitter,
            shift,
            test_fraction: d.test_fraction,
            seed: d.seed,
        })
    }

    pub fn experiment_config(&self, case: &GridCase) -> Result<ExperimentConfig> {
        let s = &self.sls;
        let mode = match s.bound_mode.as_str() {
            "cap" => BoundMode::Cap(s.bound),
            _ => BoundMode::Fraction(s.bound),
        };
        Ok(ExperimentConfig {
            flexible: load_indices(case, &s.buses)?,
            mode,
            n_profiles: s.n_profiles,
            scale_range: (s.scale_min, s.scale_max),
            jitter: s.jitter,
            seed: s.seed,
            search: SearchConfig::default(),
            include_opt: s.include_opt,
        })
    }

    /// Zone map of the case, checked against `zones.k`.
    pub fn zones(&self, case: &GridCase) -> Result<Partition> {
        let z = case
            .zones
            .clone()
            .ok_or_else(|| ConfigError("the case has no zone map".into()))?;
        if z.count != self.zones.k {
            bail!(ConfigError(format!("zones.k = {} but the case defines {} zones", self.zones.k, z.count)));
        }
        Ok(z)
    }
}

/// Maps bus IDs to load indices.
pub fn load_indices(case: &GridCase, buses: &[usize]) -> Result<Vec<usize>> {
    buses
        .iter()
        .map(|&b| {
            case.load_index_at_bus(b)
                .ok_or_else(|| ConfigError(format!("bus {b} carries no load")).into())
        })
        .collect()
}
