use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{self, streams};
use crate::scalar::Scalar;

/// Parameters of a planted-partition graph with Gaussian class features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub n: usize,
    pub classes: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub feat_dim: usize,
    pub feat_noise: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn generate<T: Scalar>(&self) -> Result<Graph<T>> {
        synth_sbm(
            self.n,
            self.classes,
            self.intra_p,
            self.inter_p,
            self.feat_dim,
            self.feat_noise,
            self.seed,
        )
    }
}

/// Class `c` owns a contiguous block of `feat_dim / classes` coordinates
/// set to 1. With fewer dimensions than classes, `c` owns `c % feat_dim`.
fn class_mean_coord(j: usize, c: usize, classes: usize, feat_dim: usize) -> bool {
    if feat_dim >= classes {
        let block = feat_dim / classes;
        j / block == c
    } else {
        j == c % feat_dim
    }
}

pub fn synth_sbm<T: Scalar>(
    n: usize,
    classes: usize,
    intra_p: f64,
    inter_p: f64,
    feat_dim: usize,
    feat_noise: f64,
    seed: u64,
) -> Result<Graph<T>> {
    if classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
    }
    for (name, p) in [("intra_p", intra_p), ("inter_p", inter_p)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
        }
    }
    if feat_noise < 0.0 || !feat_noise.is_finite() {
        return Err(Error::Config(format!("feature noise {feat_noise} must be finite and >= 0")));
    }

    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng::stream(seed, streams::SBM_LABELS));

    let mut edges = Vec::new();
    let mut erng = rng::stream(seed, streams::SBM_EDGES);
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { intra_p } else { inter_p };
            if erng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut features = rng::standard_normal::<T, _>(&mut rng::stream(seed, streams::SBM_FEATURES), n, feat_dim);
    let noise = T::lit(feat_noise);
    for (i, &c) in labels.iter().enumerate() {
        for (j, x) in features.row_mut(i).iter_mut().enumerate() {
            *x *= noise;
            if class_mean_coord(j, c, classes, feat_dim) {
                *x += T::one();
            }
        }
    }
    Graph::from_edges(edges, features, labels, classes)
}
