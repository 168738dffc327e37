use std::fmt;

use serde::{Deserialize, Serialize};

use crate::generator::MmdCheckpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseId {
    BaseGnn,
    GenGnn,
    Mlp,
    GenMlp,
    Gnn,
    /// Baseline MLP trained from scratch.
    MlpRe,
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::BaseGnn => "BASE_GNN",
            Self::GenGnn => "GEN_GNN",
            Self::Mlp => "MLP",
            Self::GenMlp => "GEN_MLP",
            Self::Gnn => "GNN",
            Self::MlpRe => "MLP_RE",
        })
    }
}

/// Coefficients of the terms active in a phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    /// Supervised CE; for generator phases the CE of generated samples.
    pub loss_sl: f64,
    pub loss_ki: f64,
    pub loss_ps: f64,
    /// Mode-seeking term, generator phases only.
    pub loss_div: f64,
    pub val_acc: Option<f64>,
}

impl EpochRecord {
    pub fn recomposed(&self, w: &LossWeights) -> f64 {
        self.loss_sl + w.alpha * self.loss_ki + w.beta * self.loss_ps - w.lambda_ms * self.loss_div
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: PhaseId,
    pub iteration: usize,
    pub weights: LossWeights,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
    pub mmd: Vec<MmdCheckpoint>,
    pub checkpoint: Option<String>,
    pub wall_clock_s: f64,
}

impl PhaseRecord {
    pub fn new(phase: PhaseId, iteration: usize, weights: LossWeights) -> Self {
        Self {
            phase,
            iteration,
            weights,
            epochs: Vec::new(),
            best_epoch: None,
            best_val_acc: None,
            mmd: Vec::new(),
            checkpoint: None,
            wall_clock_s: 0.0,
        }
    }

    /// Largest gap between a logged total and its weighted components.
    pub fn reconciliation_error(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| (e.loss_total - e.recomposed(&self.weights)).abs())
            .fold(0.0, f64::max)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss_total).collect()
    }
}
