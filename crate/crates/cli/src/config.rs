use std::fmt;
use std::path::{Path, PathBuf};

use bikt_core::generator::PriorKind;
use bikt_core::graph::SbmSpec;
use bikt_core::models::PropagationKind;
use bikt_core::train::{EpochConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Bikt,
    Supervised,
    Investigate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDataset {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    pub files: Option<FileDataset>,
    pub sbm: Option<SbmSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitBlock {
    pub train_frac: f64,
    pub val_frac: f64,
    pub stratified: bool,
    /// Split seed; each run seed is used when absent.
    pub seed: Option<u64>,
    pub inductive: bool,
    pub holdout_frac: Option<f64>,
}

impl Default for SplitBlock {
    fn default() -> Self {
        Self {
            train_frac: 0.025,
            val_frac: 0.025,
            stratified: true,
            seed: None,
            inductive: false,
            holdout_frac: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub layers: usize,
    pub hidden: usize,
    pub propagation: PropagationKind,
    pub dropout: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 64,
            propagation: PropagationKind::GcnSym,
            dropout: 0.5,
        }
    }
}

impl ModelBlock {
    pub fn hidden_dims(&self) -> Vec<usize> {
        vec![self.hidden; self.layers.saturating_sub(1)]
    }
}

/// Training hyperparameters; the seed comes from `seeds` and dropout
/// from the model block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub alpha: f64,
    pub beta: f64,
    pub k: Option<usize>,
    pub iterations: usize,
    pub epochs: EpochConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub gen_lr: f64,
    pub lambda_ms: f64,
    pub label_prior: PriorKind,
    pub mmd_samples_per_node: usize,
    pub warm_start_generators: bool,
    pub refresh_pseudo_labels: bool,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            alpha: d.alpha,
            beta: d.beta,
            k: d.k,
            iterations: d.iterations,
            epochs: d.epochs,
            lr: d.lr,
            weight_decay: d.weight_decay,
            gen_lr: d.gen_lr,
            lambda_ms: d.lambda_ms,
            label_prior: d.label_prior,
            mmd_samples_per_node: d.mmd_samples_per_node,
            warm_start_generators: d.warm_start_generators,
            refresh_pseudo_labels: d.refresh_pseudo_labels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub split: SplitBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub train: TrainBlock,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A problem with one config field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn field(field: impl Into<String>, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            alpha: t.alpha,
            beta: t.beta,
            k: t.k,
            iterations: t.iterations,
            epochs: t.epochs,
            lr: t.lr,
            weight_decay: t.weight_decay,
            dropout: self.model.dropout,
            gen_lr: t.gen_lr,
            lambda_ms: t.lambda_ms,
            label_prior: t.label_prior,
            mmd_samples_per_node: t.mmd_samples_per_node,
            warm_start_generators: t.warm_start_generators,
            refresh_pseudo_labels: t.refresh_pseudo_labels,
            seed,
        }
    }

    /// Cross-field checks on a config that already parsed.
    pub fn problems(&self) -> Vec<FieldError> {
        let mut out = Vec::new();
        if self.seeds.is_empty() {
            out.push(field("seeds", "must list at least one seed"));
        }
        match (&self.dataset.files, &self.dataset.sbm) {
            (Some(_), Some(_)) => out.push(field("dataset", "specify exactly one of `files` and `sbm`, not both")),
            (None, None) => out.push(field("dataset", "specify one of `files` or `sbm`")),
            (None, Some(s)) => {
                if s.classes < 2 {
                    out.push(field("dataset.sbm.classes", "must be >= 2"));
                }
                for (name, p) in [("dataset.sbm.intra_p", s.intra_p), ("dataset.sbm.inter_p", s.inter_p)] {
                    if !(0.0..=1.0).contains(&p) {
                        out.push(field(name, format!("must lie in [0, 1], got {p}")));
                    }
                }
                if !(s.feat_noise >= 0.0 && s.feat_noise.is_finite()) {
                    out.push(field("dataset.sbm.feat_noise", "must be a finite number >= 0"));
                }
                if s.feat_dim == 0 {
                    out.push(field("dataset.sbm.feat_dim", "must be >= 1"));
                }
            }
            (Some(_), None) => {}
        }
        let sp = &self.split;
        for (name, v) in [("split.train_frac", sp.train_frac), ("split.val_frac", sp.val_frac)] {
            if !(0.0..1.0).contains(&v) {
                out.push(field(name, format!("must lie in [0, 1), got {v}")));
            }
        }
        if sp.train_frac + sp.val_frac >= 1.0 {
            out.push(field("split", "train_frac + val_frac must be < 1"));
        }
        match (sp.inductive, sp.holdout_frac) {
            (true, None) => out.push(field("split.holdout_frac", "required when split.inductive is true")),
            (true, Some(h)) if !(h > 0.0 && h < 1.0) => {
                out.push(field("split.holdout_frac", format!("must lie in (0, 1), got {h}")))
            }
            _ => {}
        }
        let min_layers = if self.mode == RunMode::Supervised { 1 } else { 2 };
        if self.model.layers < min_layers {
            out.push(field("model.layers", format!("must be >= {min_layers} for this mode")));
        }
        if self.model.hidden == 0 {
            out.push(field("model.hidden", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            out.push(field("model.dropout", format!("must lie in [0, 1), got {}", self.model.dropout)));
        }
        for (name, msg) in self.train_config(0).problems() {
            if name != "dropout" {
                out.push(field(format!("train.{name}"), msg));
            }
        }
        out
    }

    /// Resolves dataset paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(f) = &mut self.dataset.files {
            for p in [&mut f.edges, &mut f.features, &mut f.labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

/// Parses and validates a config document, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<FieldError>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        let name = if path == "." || path.is_empty() {
            missing_field(&msg).unwrap_or_else(|| "config".into())
        } else {
            match missing_field(&msg) {
                Some(f) => format!("{path}.{f}"),
                None => path,
            }
        };
        vec![field(name, msg)]
    })?;
    let problems = cfg.problems();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(problems)
    }
}

fn missing_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("missing field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Hex SHA-256 of the config as canonical JSON (sorted keys), excluding
/// the output directory.
pub fn config_hash(cfg: &RunConfig) -> String {
    use sha2::{Digest, Sha256};
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output_dir");
    }
    format!("{:x}", Sha256::digest(v.to_string().as_bytes()))
}

/// A validated config with seed override applied, its hash and resolved paths.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
}

/// Loads a config file. `seed_override` replaces the seed list; dataset
/// paths are taken relative to the file's directory.
pub fn load_config(path: &Path, seed_override: Option<&str>) -> Result<LoadedConfig, Vec<FieldError>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![field("config", format!("{}: {e}", path.display()))])?;
    let mut config = parse_config(&text)?;
    if let Some(raw) = seed_override {
        let seed = raw
            .trim()
            .parse::<u64>()
            .map_err(|_| vec![field("BIKT_SEED_OVERRIDE", format!("expected an integer seed, got {raw:?}"))])?;
        config.seeds = vec![seed];
    }
    let hash = config_hash(&config);
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(LoadedConfig { config, hash })
}
