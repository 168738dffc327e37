use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::PriorKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochConfig {
    pub base: usize,
    pub gnn: usize,
    pub mlp: usize,
    pub gen: usize,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            base: 200,
            gnn: 200,
            mlp: 200,
            gen: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Knowledge-infusion weight.
    pub alpha: f64,
    /// Pseudo-supervision weight.
    pub beta: f64,
    /// Generated samples per step; `None` means twice the training set.
    pub k: Option<usize>,
    pub iterations: usize,
    pub epochs: EpochConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub gen_lr: f64,
    pub lambda_ms: f64,
    pub label_prior: PriorKind,
    pub mmd_samples_per_node: usize,
    pub warm_start_generators: bool,
    pub refresh_pseudo_labels: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            k: None,
            iterations: 3,
            epochs: EpochConfig::default(),
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            gen_lr: 1e-3,
            lambda_ms: 1.0,
            label_prior: PriorKind::Uniform,
            mmd_samples_per_node: 4,
            warm_start_generators: false,
            refresh_pseudo_labels: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Field-level problems, each as `(field, message)`.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut nonneg = |name, v: f64| {
            if !(v >= 0.0 && v.is_finite()) {
                out.push((name, format!("must be a finite number >= 0, got {v}")));
            }
        };
        nonneg("alpha", self.alpha);
        nonneg("beta", self.beta);
        nonneg("weight_decay", self.weight_decay);
        nonneg("lambda_ms", self.lambda_ms);
        for (name, v) in [("lr", self.lr), ("gen_lr", self.gen_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push((name, format!("must be a finite number > 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(("dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        for (name, v) in [
            ("epochs.base", self.epochs.base),
            ("epochs.gnn", self.epochs.gnn),
            ("epochs.mlp", self.epochs.mlp),
            ("epochs.gen", self.epochs.gen),
        ] {
            if v == 0 {
                out.push((name, "must be >= 1".into()));
            }
        }
        if self.k == Some(0) {
            out.push(("k", "must be >= 1".into()));
        }
        if self.mmd_samples_per_node == 0 {
            out.push(("mmd_samples_per_node", "must be >= 1".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().first() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::Config(format!("{field}: {msg}"))),
        }
    }
}
