//! Correct-set bookkeeping, subset accuracies and seed aggregation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HomophilyReport;
use crate::models::{Model, Propagation};
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::train::{init_model, train_supervised, PhaseId, PhaseRecord, TrainConfig, TrainData};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub nodes: Vec<usize>,
    pub predicted: Vec<usize>,
    pub correct: BTreeSet<usize>,
}

impl PredictionSet {
    /// Argmax predictions (ties to the lowest class) restricted to `nodes`.
    pub fn from_logits<T: Scalar>(logits: &Matrix<T>, labels: &[usize], nodes: &[usize]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Evaluation("no nodes to evaluate".into()));
        }
        if let Some(&v) = nodes.iter().find(|&&v| v >= logits.rows() || v >= labels.len()) {
            return Err(Error::Index(format!("node {v} outside the evaluated graph")));
        }
        let argmax = logits.argmax_rows();
        let predicted: Vec<usize> = nodes.iter().map(|&v| argmax[v]).collect();
        let correct = nodes
            .iter()
            .zip(&predicted)
            .filter(|&(&v, &p)| labels[v] == p)
            .map(|(&v, _)| v)
            .collect();
        Ok(Self {
            nodes: nodes.to_vec(),
            predicted,
            correct,
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.correct.len() as f64 / self.nodes.len() as f64
    }

    fn subset(&self, members: &BTreeSet<usize>) -> Option<SubsetAccuracy> {
        let n = self.nodes.iter().filter(|v| members.contains(v)).count();
        (n > 0).then(|| SubsetAccuracy {
            accuracy: self.correct.intersection(members).count() as f64 / n as f64,
            n,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n: usize,
    pub assortative: Option<SubsetAccuracy>,
    pub disassortative: Option<SubsetAccuracy>,
    pub middle: Option<SubsetAccuracy>,
    /// `None` for classes absent from the evaluated nodes.
    pub per_class: Vec<Option<SubsetAccuracy>>,
}

impl EvalReport {
    pub fn new(pred: &PredictionSet, labels: &[usize], num_classes: usize) -> Self {
        let per_class = (0..num_classes)
            .map(|c| {
                let members: BTreeSet<usize> = pred.nodes.iter().copied().filter(|&v| labels[v] == c).collect();
                pred.subset(&members)
            })
            .collect();
        Self {
            accuracy: pred.accuracy(),
            n: pred.nodes.len(),
            assortative: None,
            disassortative: None,
            middle: None,
            per_class,
        }
    }

    /// Flat metric map used for aggregation; absent subsets are omitted.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::from([("accuracy".to_string(), self.accuracy)]);
        for (name, s) in [
            ("assortative_accuracy", self.assortative),
            ("disassortative_accuracy", self.disassortative),
            ("middle_accuracy", self.middle),
        ] {
            if let Some(s) = s {
                m.insert(name.to_string(), s.accuracy);
            }
        }
        m
    }
}

/// Evaluates `model` on `nodes`. For inductive runs pass the model over
/// the full graph.
pub fn eval_model<T: Scalar>(
    model: &Model<T>,
    features: &Matrix<T>,
    labels: &[usize],
    nodes: &[usize],
) -> Result<(PredictionSet, EvalReport)> {
    let logits = model.eval(features)?.logits;
    let pred = PredictionSet::from_logits(&logits, labels, nodes)?;
    let classes = logits.cols();
    let report = EvalReport::new(&pred, labels, classes);
    Ok((pred, report))
}

/// The trained GNN's parameters evaluated under identity propagation.
pub fn mlp_share_eval<T: Scalar>(
    gnn: &Model<T>,
    features: &Matrix<T>,
    labels: &[usize],
    nodes: &[usize],
) -> Result<(PredictionSet, EvalReport)> {
    eval_model(&gnn.derive_mlp(), features, labels, nodes)
}

/// A fresh identity-propagation model trained with the GNN's settings.
pub fn train_mlp_re<T: Scalar>(
    hidden: &[usize],
    num_classes: usize,
    data: &TrainData<'_, T>,
    cfg: &TrainConfig,
) -> Result<(Model<T>, PhaseRecord)> {
    let model = init_model(
        data.features.cols(),
        hidden,
        num_classes,
        Propagation::identity(data.features.rows()),
        cfg,
    )?;
    let mut record = train_supervised(&model, data, cfg)?;
    record.phase = PhaseId::MlpRe;
    Ok((model, record))
}

/// `(|C_a ∪ C_b|, |C_a ∩ C_b|) / |evaluated|`.
pub fn union_intersection(a: &PredictionSet, b: &PredictionSet) -> Result<(f64, f64)> {
    let sa: BTreeSet<usize> = a.nodes.iter().copied().collect();
    let sb: BTreeSet<usize> = b.nodes.iter().copied().collect();
    if sa != sb {
        return Err(Error::Evaluation("prediction sets cover different nodes".into()));
    }
    let n = sa.len() as f64;
    Ok((
        a.correct.union(&b.correct).count() as f64 / n,
        a.correct.intersection(&b.correct).count() as f64 / n,
    ))
}

/// Adds assortative, disassortative and middle-band accuracies.
pub fn assortativity_eval(pred: &PredictionSet, labels: &[usize], num_classes: usize, h: &HomophilyReport) -> EvalReport {
    let mut report = EvalReport::new(pred, labels, num_classes);
    let set = |v: Vec<usize>| v.into_iter().collect::<BTreeSet<usize>>();
    report.assortative = pred.subset(&set(h.assortative.clone()));
    report.disassortative = pred.subset(&set(h.disassortative.clone()));
    report.middle = pred.subset(&set(h.middle()));
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample (n - 1) standard deviation.
    pub std: f64,
    pub n: usize,
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// Mean and sample standard deviation of `values`, independent of order.
pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.len() < 2 {
        return Err(Error::SampleSize(format!("need at least 2 runs, got {}", values.len())));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    Ok(MeanStd {
        mean,
        std: (sq.iter().sum::<f64>() / (n - 1.0)).sqrt(),
        n: v.len(),
    })
}

/// Per-metric mean and sample standard deviation across runs.
pub fn aggregate_runs(runs: &[BTreeMap<String, f64>]) -> Result<BTreeMap<String, MeanStd>> {
    let Some(first) = runs.first() else {
        return Err(Error::SampleSize("no runs to aggregate".into()));
    };
    for (i, r) in runs.iter().enumerate() {
        if !r.keys().eq(first.keys()) {
            return Err(Error::Aggregation(format!("run {i} reports a different metric set than run 0")));
        }
    }
    first
        .keys()
        .map(|k| {
            let values: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            Ok((k.clone(), mean_std(&values)?))
        })
        .collect()
}
