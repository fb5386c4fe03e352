//! The three model families share the quantum front end (one compiled
//! circuit per sentence, read out as a 2-outcome distribution) and differ in
//! the classical map from a pair of distributions to a prediction.

pub mod cluster;
pub mod kl;
pub mod xor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Label;

pub use cluster::{
    cluster_sample, cluster_words, epsilon, load_embeddings, order_energy, parse_embeddings,
    Assignment, ClusterParams, Embeddings, EnergyDirection, OrderEmbedding, SampleMode,
};
pub use kl::{kl_divergence, kl_predict, KlReadout, DEFAULT_KL_EPS};
pub use xor::DenseHead;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("missing embedding for words: {0:?}")]
    MissingEmbedding(Vec<String>),
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("embedding dimensions differ for word {0}")]
    EmbeddingDim(String),
    #[error("embedding file line {line}: {reason}")]
    EmbeddingFile { line: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Kl,
    Xor,
    Cluster,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kl => "kl",
            ModelKind::Xor => "xor",
            ModelKind::Cluster => "cluster",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kl" => Ok(ModelKind::Kl),
            "xor" => Ok(ModelKind::Xor),
            "cluster" => Ok(ModelKind::Cluster),
            _ => Err(format!("unknown model {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Relatedness,
    Inference,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Relatedness => "relatedness",
            Task::Inference => "inference",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relatedness" => Ok(Task::Relatedness),
            "inference" => Ok(Task::Inference),
            _ => Err(format!("unknown task {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prediction {
    Score(f64),
    Logits([f64; 3]),
}

impl Prediction {
    pub fn class(&self) -> Option<Label> {
        match self {
            Prediction::Score(_) => None,
            Prediction::Logits(l) => {
                let mut best = 0;
                for k in 1..3 {
                    if l[k] > l[best] {
                        best = k;
                    }
                }
                Label::from_index(best)
            }
        }
    }

    pub fn score(&self) -> Option<f64> {
        match self {
            Prediction::Score(s) => Some(*s),
            Prediction::Logits(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Score(f64),
    Class(Label),
}

pub fn softmax(logits: &[f64; 3]) -> [f64; 3] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|x| x / z)
}

/// Per-example loss and its gradient with respect to the prediction.
/// Squared error for scores, natural-log cross-entropy for logits.
pub fn example_loss(pred: &Prediction, target: &Target) -> (f64, Prediction) {
    match (pred, target) {
        (Prediction::Score(s), Target::Score(t)) => ((s - t).powi(2), Prediction::Score(2.0 * (s - t))),
        (Prediction::Logits(l), Target::Class(c)) => {
            let p = softmax(l);
            let k = c.index();
            let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + l.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            let mut g = p;
            g[k] -= 1.0;
            (lse - l[k], Prediction::Logits(g))
        }
        _ => panic!("prediction and target shapes differ"),
    }
}

/// Mean loss over a batch.
pub fn losses(preds: &[Prediction], targets: &[Target]) -> f64 {
    assert_eq!(preds.len(), targets.len());
    if preds.is_empty() {
        return 0.0;
    }
    preds
        .iter()
        .zip(targets)
        .map(|(p, t)| example_loss(p, t).0)
        .sum::<f64>()
        / preds.len() as f64
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softplus_inv(y: f64) -> f64 {
    y.exp_m1().ln()
}

/// Affine map from two asymmetric divergence features to a prediction:
/// class logits `W·f + b`, or a relatedness score `exp(−γ·(f₁ + f₂))` with
/// `γ = exp(log_gamma)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Readout {
    Classes { w: [[f64; 2]; 3], b: [f64; 3] },
    Scale { log_gamma: f64 },
}

impl Readout {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Inference => Readout::Classes {
                w: [[0.0; 2]; 3],
                b: [0.0; 3],
            },
            Task::Relatedness => Readout::Scale { log_gamma: 0.0 },
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Readout::Classes { .. } => 9,
            Readout::Scale { .. } => 1,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Readout::Classes { w, b } => w.iter().flatten().chain(b).copied().collect(),
            Readout::Scale { log_gamma } => vec![*log_gamma],
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        match self {
            Readout::Classes { w, b } => {
                for r in 0..3 {
                    w[r] = [p[2 * r], p[2 * r + 1]];
                }
                b.copy_from_slice(&p[6..9]);
            }
            Readout::Scale { log_gamma } => *log_gamma = p[0],
        }
    }

    pub fn forward(&self, f: [f64; 2]) -> Prediction {
        match self {
            Readout::Classes { w, b } => {
                Prediction::Logits(std::array::from_fn(|r| w[r][0] * f[0] + w[r][1] * f[1] + b[r]))
            }
            Readout::Scale { log_gamma } => {
                Prediction::Score((-log_gamma.exp() * (f[0] + f[1])).exp())
            }
        }
    }

    /// Given `dL/dprediction`, return `(dL/dparams, dL/df)`.
    pub fn backward(&self, f: [f64; 2], dpred: &Prediction) -> (Vec<f64>, [f64; 2]) {
        match (self, dpred) {
            (Readout::Classes { w, .. }, Prediction::Logits(g)) => {
                let mut grads = Vec::with_capacity(9);
                for r in 0..3 {
                    grads.push(g[r] * f[0]);
                    grads.push(g[r] * f[1]);
                }
                grads.extend_from_slice(g);
                let df = std::array::from_fn(|i| (0..3).map(|r| w[r][i] * g[r]).sum());
                (grads, df)
            }
            (Readout::Scale { log_gamma }, Prediction::Score(g)) => {
                let gamma = log_gamma.exp();
                let s = (-gamma * (f[0] + f[1])).exp();
                let dlog = g * s * (-gamma * (f[0] + f[1]));
                (vec![dlog], [-gamma * s * g; 2])
            }
            _ => panic!("readout and gradient shapes differ"),
        }
    }
}

/// The classical part of a model: everything after the circuit readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "lowercase")]
pub enum Head {
    Kl { readout: Readout, eps: f64 },
    Xor { net: DenseHead },
    Order { embed: OrderEmbedding, readout: Readout },
}

impl Head {
    pub fn for_model(kind: ModelKind, task: Task) -> Self {
        match kind {
            ModelKind::Kl => Head::Kl {
                readout: Readout::for_task(task),
                eps: DEFAULT_KL_EPS,
            },
            ModelKind::Xor => Head::Xor {
                net: DenseHead::new(task),
            },
            ModelKind::Cluster => Head::Order {
                embed: OrderEmbedding::default(),
                readout: Readout::for_task(task),
            },
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Head::Kl { readout, .. } => readout.n_params(),
            Head::Xor { net } => net.n_params(),
            Head::Order { embed, readout } => embed.n_params() + readout.n_params(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Head::Kl { readout, .. } => readout.params(),
            Head::Xor { net } => net.params(),
            Head::Order { embed, readout } => {
                let mut p = embed.params();
                p.extend(readout.params());
                p
            }
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        match self {
            Head::Kl { readout, .. } => readout.set_params(p),
            Head::Xor { net } => net.set_params(p),
            Head::Order { embed, readout } => {
                let n = embed.n_params();
                embed.set_params(&p[..n]);
                readout.set_params(&p[n..]);
            }
        }
    }

    pub fn predict(&self, premise: &[f64], hypothesis: &[f64]) -> Prediction {
        match self {
            Head::Kl { readout, eps } => kl_predict(premise, hypothesis, readout, *eps),
            Head::Xor { net } => net.predict(premise, hypothesis),
            Head::Order { embed, readout } => {
                let (ep, eh) = (embed.embed(premise), embed.embed(hypothesis));
                readout.forward(embed.energies(&ep, &eh))
            }
        }
    }

    pub fn loss(&self, premise: &[f64], hypothesis: &[f64], target: &Target) -> f64 {
        example_loss(&self.predict(premise, hypothesis), target).0
    }

    /// Loss on one pair and its gradient with respect to the head parameters.
    pub fn loss_grad(&self, premise: &[f64], hypothesis: &[f64], target: &Target) -> (f64, Vec<f64>) {
        match self {
            Head::Kl { readout, eps } => {
                let f = kl::features(premise, hypothesis, *eps);
                let (loss, dpred) = example_loss(&readout.forward(f), target);
                (loss, readout.backward(f, &dpred).0)
            }
            Head::Xor { net } => net.loss_grad(premise, hypothesis, target),
            Head::Order { embed, readout } => {
                let (zp, ep) = embed.forward(premise);
                let (zh, eh) = embed.forward(hypothesis);
                let f = embed.energies(&ep, &eh);
                let (loss, dpred) = example_loss(&readout.forward(f), target);
                let (g_read, df) = readout.backward(f, &dpred);
                let (dep, deh) = embed.energy_backward(&ep, &eh, df);
                let mut g = embed.backward(premise, &zp, &dep);
                for (x, y) in g.iter_mut().zip(embed.backward(hypothesis, &zh, &deh)) {
                    *x += y;
                }
                g.extend(g_read);
                (loss, g)
            }
        }
    }
}
