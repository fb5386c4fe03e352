//! Full-batch Adam training. Gradients are central finite differences through
//! the circuits, backprop through the classical head, and the
//! reparameterization chain rule for cluster-shared angles.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{compile, AnsatzConfig, CircuitError, ParamStore, ResolvedCircuit, SlotKey};
use crate::data::{Example, Label};
use crate::exec::Exec;
use crate::metrics::{self, FitKind, JointCounts};
use crate::models::{
    cluster_words, epsilon, example_loss, sigmoid, softmax, softplus_inv, ClusterParams, Embeddings,
    EnergyDirection, Head, ModelError, ModelKind, OrderEmbedding, Prediction, SampleMode, Target,
    Task, DEFAULT_KL_EPS,
};
use crate::pregroup::{parse, Lexicon, ParseError, PregroupType};
use crate::simulator::{distribution, simulate_with_cap, SimError, DEFAULT_FD_STEP, DEFAULT_MAX_QUBITS};

pub const DEFAULT_EPOCHS: usize = 60;
pub const DEFAULT_K: usize = 10;
pub const INIT_SPREAD: f64 = 0.1;
pub const JITTER: f64 = 0.01;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("cannot parse {sentence:?}: {source}")]
    Parse { sentence: String, source: ParseError },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("zero postselection probability at epoch {epoch} persisted after re-jitter")]
    ZeroPost { epoch: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("sentence {0:?} was not compiled into the corpus")]
    MissingSentence(String),
    #[error("words not seen in training and without a cluster fallback: {0:?}")]
    Unseen(Vec<String>),
    #[error("invalid config: {0}")]
    Config(String),
}

impl TrainError {
    /// Numeric failures as opposed to bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::ZeroPost { .. }
                | TrainError::NonFinite { .. }
                | TrainError::Sim(SimError::ZeroNorm | SimError::NonFinite { .. })
        )
    }
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}
fn default_lr_quantum() -> f64 {
    0.05
}
fn default_lr_classical() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}
fn default_max_qubits() -> usize {
    DEFAULT_MAX_QUBITS
}
fn default_mi_bins() -> usize {
    4
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_order_dim() -> usize {
    crate::models::cluster::DEFAULT_ORDER_DIM
}
fn default_kl_eps() -> f64 {
    DEFAULT_KL_EPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub task: Task,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Circuit angles and cluster μ/ρ.
    #[serde(default = "default_lr_quantum")]
    pub lr_quantum: f64,
    /// Dense head, order embedding and readout weights.
    #[serde(default = "default_lr_classical")]
    pub lr_classical: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_max_qubits")]
    pub max_qubits: usize,
    /// Equal-width bins for relatedness mutual information.
    #[serde(default = "default_mi_bins")]
    pub mi_bins: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    #[serde(default = "default_order_dim")]
    pub order_dim: usize,
    #[serde(default)]
    pub energy_direction: EnergyDirection,
    #[serde(default = "default_kl_eps")]
    pub kl_eps: f64,
    #[serde(default)]
    pub exec: Exec,
}

impl TrainConfig {
    pub fn new(model: ModelKind, task: Task) -> Self {
        TrainConfig {
            model,
            task,
            epochs: DEFAULT_EPOCHS,
            lr_quantum: default_lr_quantum(),
            lr_classical: default_lr_classical(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            seed: 0,
            fd_step: DEFAULT_FD_STEP,
            max_qubits: DEFAULT_MAX_QUBITS,
            mi_bins: default_mi_bins(),
            k: DEFAULT_K,
            ansatz: AnsatzConfig::default(),
            order_dim: default_order_dim(),
            energy_direction: EnergyDirection::default(),
            kl_eps: DEFAULT_KL_EPS,
            exec: Exec::default(),
        }
    }

    /// `lr = 0` is allowed so a run can be frozen.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr_quantum >= 0.0 && self.lr_classical >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if !(self.fd_step > 0.0) {
            return bad("fd_step must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.mi_bins < 2 {
            return bad("mi_bins must be at least 2");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.order_dim == 0 {
            return bad("order_dim must be at least 1");
        }
        if self.ansatz.layers == 0 {
            return bad("ansatz layers must be at least 1");
        }
        Ok(())
    }
}

/// Every distinct sentence of a run, compiled once against a shared store.
#[derive(Clone, Debug)]
pub struct Corpus {
    sentences: Vec<Vec<String>>,
    index: HashMap<Vec<String>, usize>,
    circuits: Vec<ResolvedCircuit>,
    cap: usize,
}

impl Corpus {
    /// Parse and compile each sentence to `target`, allocating slots in
    /// `store`. Circuits are resolved once the store is final.
    pub fn build<'a, I>(
        lexicon: &Lexicon,
        sentences: I,
        target: &PregroupType,
        ansatz: &AnsatzConfig,
        store: &mut ParamStore,
        cap: usize,
    ) -> Result<Corpus, TrainError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut uniq: Vec<Vec<String>> = Vec::new();
        let mut index = HashMap::new();
        let mut compiled = Vec::new();
        for tokens in sentences {
            if index.contains_key(tokens) {
                continue;
            }
            let diagram = parse(tokens, lexicon, target).map_err(|source| TrainError::Parse {
                sentence: tokens.join(" "),
                source,
            })?;
            let circuit = compile(&diagram, ansatz, store)?;
            if circuit.n_qubits > cap {
                return Err(SimError::TooManyQubits {
                    got: circuit.n_qubits,
                    cap,
                }
                .into());
            }
            index.insert(tokens.to_vec(), uniq.len());
            uniq.push(tokens.to_vec());
            compiled.push(circuit);
        }
        let circuits = compiled
            .iter()
            .map(|c| c.resolve(store))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Corpus {
            sentences: uniq,
            index,
            circuits,
            cap,
        })
    }

    /// Premises and hypotheses of every example, in order.
    pub fn from_examples(
        lexicon: &Lexicon,
        sets: &[&[Example]],
        ansatz: &AnsatzConfig,
        store: &mut ParamStore,
        cap: usize,
    ) -> Result<Corpus, TrainError> {
        let tokens = sets
            .iter()
            .flat_map(|s| s.iter())
            .flat_map(|e| [e.premise.as_slice(), e.hypothesis.as_slice()]);
        Corpus::build(lexicon, tokens, &PregroupType::sentence(), ansatz, store, cap)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentence(&self, i: usize) -> &[String] {
        &self.sentences[i]
    }

    pub fn circuit(&self, i: usize) -> &ResolvedCircuit {
        &self.circuits[i]
    }

    pub fn id_of(&self, tokens: &[String]) -> Option<usize> {
        self.index.get(tokens).copied()
    }

    pub fn pairs(&self, examples: &[Example], task: Task) -> Result<Vec<Pair>, TrainError> {
        let find = |t: &[String]| self.id_of(t).ok_or_else(|| TrainError::MissingSentence(t.join(" ")));
        examples
            .iter()
            .map(|e| {
                Ok(Pair {
                    premise: find(&e.premise)?,
                    hypothesis: find(&e.hypothesis)?,
                    target: match task {
                        Task::Relatedness => Target::Score(e.relatedness),
                        Task::Inference => Target::Class(e.label),
                    },
                })
            })
            .collect()
    }

    /// Output distribution of sentence `i`, optionally with one angle replaced.
    pub fn distribution(&self, i: usize, theta: &[f64], over: Option<(usize, f64)>) -> Result<Vec<f64>, SimError> {
        let bound = self.circuits[i]
            .bind_override(theta, over)
            .expect("corpus circuits are resolved against the model store");
        distribution(&simulate_with_cap(&bound, self.cap)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pair {
    pub premise: usize,
    pub hypothesis: usize,
    pub target: Target,
}

/// Trainable state. Serialized as the model parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub task: Task,
    pub ansatz: AnsatzConfig,
    /// Per-slot angles. For the cluster model these are derived from
    /// `cluster` and are not trainable.
    pub store: ParamStore,
    pub head: Head,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterParams>,
}

impl Model {
    /// Seeded initialization. Draw order: slot angles, head weights, ε seed.
    pub fn init(cfg: &TrainConfig, mut store: ParamStore, embeddings: Option<&Embeddings>) -> Result<Model, TrainError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for t in store.theta.iter_mut() {
            *t = rng.random_range(0.0..TAU);
        }
        let mut head = Head::for_model(cfg.model, cfg.task);
        match &mut head {
            Head::Kl { eps, .. } => *eps = cfg.kl_eps,
            Head::Order { embed, .. } => *embed = OrderEmbedding::new(cfg.order_dim, cfg.energy_direction),
            Head::Xor { .. } => {}
        }
        let weights: Vec<f64> = (0..head.n_params()).map(|_| rng.random_range(-0.5..=0.5)).collect();
        head.set_params(&weights);
        let eps_seed: u64 = rng.random();

        let cluster = match cfg.model {
            ModelKind::Cluster => {
                let embeddings = embeddings.ok_or_else(|| TrainError::Config("cluster model needs embeddings".into()))?;
                Some(init_clusters(&store, embeddings, cfg.k, cfg.seed, eps_seed)?)
            }
            _ => None,
        };
        Ok(Model {
            kind: cfg.model,
            task: cfg.task,
            ansatz: cfg.ansatz,
            store,
            head,
            cluster,
        })
    }

    pub fn load(path: &Path) -> Result<Model, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let mut m: Model = serde_json::from_str(&text).map_err(std::io::Error::other)?;
        m.store.reindex();
        Ok(m)
    }

    /// Trainable vector: angles or cluster `(μ, ρ)` first, then head weights.
    pub fn trainable(&self) -> Vec<f64> {
        let mut p = match &self.cluster {
            Some(c) => c.mu.iter().chain(&c.rho).flatten().copied().collect(),
            None => self.store.theta.clone(),
        };
        p.extend(self.head.params());
        p
    }

    pub fn set_trainable(&mut self, p: &[f64]) {
        let q = self.n_quantum();
        match &mut self.cluster {
            Some(c) => {
                let mut it = p[..q].iter().copied();
                for row in c.mu.iter_mut().chain(c.rho.iter_mut()) {
                    row.iter_mut().for_each(|x| *x = it.next().expect("trainable length"));
                }
            }
            None => self.store.theta.copy_from_slice(&p[..q]),
        }
        self.head.set_params(&p[q..]);
    }

    /// Length of the quantum (angle or μ/ρ) prefix of the trainable vector.
    pub fn n_quantum(&self) -> usize {
        match &self.cluster {
            Some(c) => c.n_params(),
            None => self.store.len(),
        }
    }

    /// P, the number of trainable parameters.
    pub fn n_params(&self) -> usize {
        self.n_quantum() + self.head.n_params()
    }

    pub fn learning_rates(&self, cfg: &TrainConfig) -> Vec<f64> {
        let mut lr = vec![cfg.lr_quantum; self.n_quantum()];
        lr.resize(self.n_params(), cfg.lr_classical);
        lr
    }

    /// `(cluster, role)` of every slot; `None` outside the cluster model.
    fn slot_clusters(&self) -> Vec<Option<(usize, usize)>> {
        self.store
            .symbols
            .iter()
            .map(|k| {
                let c = self.cluster.as_ref()?.assignment.cluster_of(&k.word())?;
                Some((c, k.role))
            })
            .collect()
    }

    /// Circuit angles under `mode`. Only the cluster model samples.
    pub fn angles(&self, mode: SampleMode) -> Vec<f64> {
        let Some(params) = &self.cluster else {
            return self.store.theta.clone();
        };
        self.store
            .symbols
            .iter()
            .zip(self.slot_clusters())
            .zip(&self.store.theta)
            .map(|((key, slot), &fallback)| match slot {
                Some((c, r)) => {
                    let mu = params.mu[c][r];
                    match mode {
                        SampleMode::Eval => mu,
                        SampleMode::Train(epoch) => mu + params.std(c, r) * epsilon(params.eps_seed, epoch, &key.word(), r),
                    }
                }
                None => fallback,
            })
            .collect()
    }

    /// Copy evaluation-mode angles into the store so the saved file shows
    /// the circuit that is actually evaluated.
    pub fn sync_store(&mut self) {
        if self.cluster.is_some() {
            self.store.theta = self.angles(SampleMode::Eval);
        }
    }
}

fn init_clusters(
    store: &ParamStore,
    embeddings: &Embeddings,
    k: usize,
    seed: u64,
    eps_seed: u64,
) -> Result<ClusterParams, TrainError> {
    let mut words: Vec<(String, PregroupType)> = Vec::new();
    let mut seen = BTreeSet::new();
    for key in &store.symbols {
        if seen.insert((key.token.clone(), key.ty.clone())) {
            let ty: PregroupType = key
                .ty
                .parse()
                .map_err(|e| TrainError::Config(format!("bad slot type {:?}: {e}", key.ty)))?;
            words.push((key.token.clone(), ty));
        }
    }
    let assignment = cluster_words(embeddings, &words, k, seed)?;
    let n = assignment.len();
    let mut roles = vec![0usize; n];
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut counts: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (key, &theta) in store.symbols.iter().zip(&store.theta) {
        let c = assignment.cluster_of(&key.word()).expect("every slot word is clustered");
        roles[c] = roles[c].max(key.role + 1);
        if sums[c].len() <= key.role {
            sums[c].resize(key.role + 1, 0.0);
            counts[c].resize(key.role + 1, 0);
        }
        sums[c][key.role] += theta;
        counts[c][key.role] += 1;
    }
    // μ is the per-cluster mean of the warm-up angles already in the store
    let mu: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            (0..roles[c])
                .map(|r| {
                    let k = counts[c].get(r).copied().unwrap_or(0);
                    if k == 0 {
                        0.0
                    } else {
                        sums[c][r] / k as f64
                    }
                })
                .collect()
        })
        .collect();
    let rho = roles.iter().map(|&r| vec![softplus_inv(INIT_SPREAD); r]).collect();
    Ok(ClusterParams {
        assignment,
        mu,
        rho,
        eps_seed,
    })
}

/// Evaluate `f` on every sentence that appears in `pairs`.
fn sentence_dists(
    corpus: &Corpus,
    pairs: &[Pair],
    theta: &[f64],
    exec: Exec,
) -> Result<HashMap<usize, Vec<f64>>, (SimError, Vec<usize>)> {
    let used: Vec<usize> = pairs
        .iter()
        .flat_map(|p| [p.premise, p.hypothesis])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let results = exec.map(&used, |&s| corpus.distribution(s, theta, None));
    let mut out = HashMap::with_capacity(used.len());
    let mut failed = Vec::new();
    let mut first_err = None;
    for (&s, r) in used.iter().zip(results) {
        match r {
            Ok(d) => {
                out.insert(s, d);
            }
            Err(e) => {
                failed.push(s);
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        None => Ok(out),
        Some(e) => Err((e, failed)),
    }
}

pub fn predictions(
    model: &Model,
    corpus: &Corpus,
    pairs: &[Pair],
    mode: SampleMode,
    exec: Exec,
) -> Result<Vec<Prediction>, TrainError> {
    let theta = model.angles(mode);
    let dists = sentence_dists(corpus, pairs, &theta, exec).map_err(|(e, _)| e)?;
    Ok(pairs
        .iter()
        .map(|p| model.head.predict(&dists[&p.premise], &dists[&p.hypothesis]))
        .collect())
}

/// Mean loss over `pairs`.
pub fn batch_loss(model: &Model, corpus: &Corpus, pairs: &[Pair], mode: SampleMode, exec: Exec) -> Result<f64, TrainError> {
    let preds = predictions(model, corpus, pairs, mode, exec)?;
    let targets: Vec<Target> = pairs.iter().map(|p| p.target).collect();
    Ok(crate::models::losses(&preds, &targets))
}

/// Mean loss and its gradient over [`Model::trainable`].
///
/// Each circuit angle is probed by re-simulating only the sentences that use
/// it and re-scoring only the pairs that touch those sentences, which equals
/// the dense central difference of the batch loss.
pub fn batch_gradient(
    model: &Model,
    corpus: &Corpus,
    pairs: &[Pair],
    mode: SampleMode,
    h: f64,
    exec: Exec,
) -> Result<(f64, Vec<f64>), TrainError> {
    if !(h > 0.0) {
        return Err(SimError::BadStep(h).into());
    }
    let n = pairs.len().max(1) as f64;
    let theta = model.angles(mode);
    let dists = sentence_dists(corpus, pairs, &theta, exec).map_err(|(e, _)| e)?;

    let mut loss = 0.0;
    let mut g_head = vec![0.0; model.head.n_params()];
    for p in pairs {
        let (l, g) = model.head.loss_grad(&dists[&p.premise], &dists[&p.hypothesis], &p.target);
        loss += l;
        for (a, b) in g_head.iter_mut().zip(g) {
            *a += b;
        }
    }
    loss /= n;
    g_head.iter_mut().for_each(|g| *g /= n);
    if !loss.is_finite() {
        return Err(SimError::NonFinite { coordinate: 0 }.into());
    }

    let mut sentence_pairs: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, p) in pairs.iter().enumerate() {
        sentence_pairs.entry(p.premise).or_default().push(k);
        if p.hypothesis != p.premise {
            sentence_pairs.entry(p.hypothesis).or_default().push(k);
        }
    }
    let mut slot_sentences: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut used: Vec<usize> = sentence_pairs.keys().copied().collect();
    used.sort_unstable();
    for &s in &used {
        for &i in corpus.circuit(s).slots() {
            slot_sentences.entry(i).or_default().push(s);
        }
    }
    let probes: Vec<(usize, Vec<usize>)> = slot_sentences.into_iter().collect();
    let g_probe = exec.map(&probes, |(i, sents)| -> Result<f64, SimError> {
        let touched: BTreeSet<usize> = sents.iter().flat_map(|s| sentence_pairs[s].iter().copied()).collect();
        let side = |sign: f64| -> Result<f64, SimError> {
            let over = Some((*i, theta[*i] + sign * h));
            let mut local: HashMap<usize, Vec<f64>> = HashMap::with_capacity(sents.len());
            for &s in sents {
                local.insert(s, corpus.distribution(s, &theta, over)?);
            }
            let get = |s: usize| local.get(&s).unwrap_or(&dists[&s]);
            Ok(touched
                .iter()
                .map(|&k| {
                    let p = &pairs[k];
                    model.head.loss(get(p.premise), get(p.hypothesis), &p.target)
                })
                .sum())
        };
        let (plus, minus) = (side(1.0)?, side(-1.0)?);
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(SimError::NonFinite { coordinate: *i });
        }
        Ok((plus - minus) / (2.0 * h * n))
    });
    let mut g_theta = vec![0.0; theta.len()];
    for ((i, _), g) in probes.iter().zip(g_probe) {
        g_theta[*i] = g?;
    }

    let mut grad = match &model.cluster {
        None => g_theta,
        Some(params) => {
            // θ = μ + softplus(ρ)·ε: ∂θ/∂μ = 1, ∂θ/∂ρ = ε·σ(ρ)
            let mut g_mu: Vec<Vec<f64>> = params.mu.iter().map(|m| vec![0.0; m.len()]).collect();
            let mut g_rho = g_mu.clone();
            for ((key, slot), g) in model.store.symbols.iter().zip(model.slot_clusters()).zip(&g_theta) {
                let Some((c, r)) = slot else { continue };
                g_mu[c][r] += g;
                if let SampleMode::Train(epoch) = mode {
                    let eps = epsilon(params.eps_seed, epoch, &key.word(), r);
                    g_rho[c][r] += g * eps * sigmoid(params.rho[c][r]);
                }
            }
            g_mu.into_iter().chain(g_rho).flatten().collect()
        }
    };
    grad.extend(g_head);
    Ok((loss, grad))
}

/// Adam with per-coordinate learning rates.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: Vec<f64>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let n = lr.len();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.lr.len());
        assert_eq!(grad.len(), self.lr.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr[i] * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mutual information on the training split, evaluation mode.
    pub i: f64,
    pub i_dev: f64,
    pub d_i: Option<f64>,
    pub igpp: Option<f64>,
    pub iggp: Option<f64>,
    /// Norm of the gradient used for this epoch's update.
    pub grad_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub n: usize,
    pub mse: Option<f64>,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub ce: Option<f64>,
    pub mi: f64,
    pub logl: f64,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub model: ModelKind,
    pub task: Task,
    pub seed: u64,
    pub params: usize,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub retries: usize,
    pub test: Option<TestMetrics>,
}

pub const RUNLOG_HEADER: &str = "epoch,train_loss,val_loss,I,dI,igpp,iggp,grad_norm";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl RunLog {
    /// Largest IGPP over epochs `t ≥ 1`.
    pub fn peak_igpp(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.igpp).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(RUNLOG_HEADER);
        s.push('\n');
        for r in &self.records {
            writeln!(
                s,
                "{},{:e},{:e},{:e},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.i,
                cell(r.d_i),
                cell(r.igpp),
                cell(r.iggp),
                cell(r.grad_norm)
            )
            .expect("writing to a String");
        }
        s
    }
}

/// Joint counts of targets against predictions: classes for inference,
/// `bins` equal-width bins for relatedness.
pub fn joint_counts(preds: &[Prediction], pairs: &[Pair], bins: usize) -> JointCounts {
    match pairs.first().map(|p| p.target) {
        Some(Target::Class(_)) => {
            let t: Vec<usize> = pairs
                .iter()
                .map(|p| match p.target {
                    Target::Class(c) => c.index(),
                    Target::Score(_) => unreachable!("mixed targets"),
                })
                .collect();
            let y: Vec<usize> = preds.iter().map(|p| p.class().map_or(0, Label::index)).collect();
            JointCounts::from_labels(3, &t, &y)
        }
        _ => {
            let t: Vec<f64> = pairs
                .iter()
                .map(|p| match p.target {
                    Target::Score(s) => s,
                    Target::Class(_) => unreachable!("mixed targets"),
                })
                .collect();
            let y: Vec<f64> = preds.iter().map(|p| p.score().unwrap_or(0.0)).collect();
            JointCounts::from_scores(bins, &t, &y)
        }
    }
}

/// Task metrics plus LogL/AIC/BIC with `k = params`.
pub fn test_metrics(preds: &[Prediction], pairs: &[Pair], params: usize, bins: usize) -> TestMetrics {
    let n = pairs.len();
    let counts = joint_counts(preds, pairs, bins);
    let mi = metrics::mutual_information(&counts);
    let (mse, macro_f1, accuracy, ce, logl) = match pairs.first().map(|p| p.target) {
        Some(Target::Class(_)) => {
            let ce = pairs
                .iter()
                .zip(preds)
                .map(|(p, y)| example_loss(y, &p.target).0)
                .sum::<f64>()
                / n as f64;
            (
                None,
                Some(metrics::macro_f1(&counts)),
                Some(metrics::accuracy(&counts)),
                Some(ce),
                metrics::log_likelihood(FitKind::CrossEntropy, ce, n),
            )
        }
        _ => {
            let t: Vec<f64> = pairs
                .iter()
                .map(|p| match p.target {
                    Target::Score(s) => s,
                    Target::Class(_) => unreachable!("mixed targets"),
                })
                .collect();
            let y: Vec<f64> = preds.iter().map(|p| p.score().unwrap_or(0.0)).collect();
            let mse = metrics::mse(&y, &t);
            (Some(mse), None, None, None, metrics::log_likelihood(FitKind::Mse, mse, n))
        }
    };
    TestMetrics {
        n,
        mse,
        macro_f1,
        accuracy,
        ce,
        mi,
        logl,
        aic: metrics::aic(params, logl),
        bic: metrics::bic(params, n, logl),
    }
}

#[derive(Clone, Debug, Default)]
pub struct SplitPairs {
    pub train: Vec<Pair>,
    pub dev: Vec<Pair>,
    pub test: Vec<Pair>,
}

impl SplitPairs {
    pub fn new(corpus: &Corpus, train: &[Example], dev: &[Example], test: &[Example], task: Task) -> Result<Self, TrainError> {
        Ok(SplitPairs {
            train: corpus.pairs(train, task)?,
            dev: corpus.pairs(dev, task)?,
            test: corpus.pairs(test, task)?,
        })
    }
}

/// Add `U[−JITTER, JITTER]` to the quantum parameters behind `sentences`.
fn jitter(model: &mut Model, corpus: &Corpus, sentences: &[usize], rng: &mut impl Rng) {
    let slots: BTreeSet<usize> = sentences.iter().flat_map(|&s| corpus.circuit(s).slots().iter().copied()).collect();
    let map = model.slot_clusters();
    match &mut model.cluster {
        None => {
            for i in slots {
                model.store.theta[i] += rng.random_range(-JITTER..=JITTER);
            }
        }
        Some(params) => {
            let targets: BTreeSet<(usize, usize)> = slots.iter().filter_map(|&i| map[i]).collect();
            for (c, r) in targets {
                params.mu[c][r] += rng.random_range(-JITTER..=JITTER);
            }
        }
    }
}

struct EvalRow {
    train_loss: f64,
    val_loss: f64,
    i: f64,
    i_dev: f64,
}

fn evaluate(model: &Model, corpus: &Corpus, data: &SplitPairs, cfg: &TrainConfig, epoch: usize) -> Result<EvalRow, TrainError> {
    let run = |pairs: &[Pair]| -> Result<(f64, f64), TrainError> {
        if pairs.is_empty() {
            return Ok((0.0, 0.0));
        }
        let preds = predictions(model, corpus, pairs, SampleMode::Eval, cfg.exec).map_err(|e| match e {
            TrainError::Sim(SimError::ZeroNorm) => TrainError::ZeroPost { epoch },
            e => e,
        })?;
        let targets: Vec<Target> = pairs.iter().map(|p| p.target).collect();
        let loss = crate::models::losses(&preds, &targets);
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { epoch });
        }
        Ok((loss, metrics::mutual_information(&joint_counts(&preds, pairs, cfg.mi_bins))))
    };
    let (train_loss, i) = run(&data.train)?;
    let (val_loss, i_dev) = run(&data.dev)?;
    Ok(EvalRow {
        train_loss,
        val_loss,
        i,
        i_dev,
    })
}

/// Train for `cfg.epochs` full-batch steps. Row `t` of the log describes the
/// model after `t` updates (row 0 is the initialization). On return `model`
/// holds the parameters of the epoch with the lowest dev loss, and the log
/// carries test metrics for them.
pub fn train(model: &mut Model, corpus: &Corpus, data: &SplitPairs, cfg: &TrainConfig) -> Result<RunLog, TrainError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::Config("empty training split".into()));
    }
    let p = model.n_params();
    let mut adam = Adam::new(model.learning_rates(cfg), cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6a09_e667_f3bc_c908);
    let mut retries = 0;

    let row0 = evaluate(model, corpus, data, cfg, 0)?;
    let mut records = vec![EpochRecord {
        epoch: 0,
        train_loss: row0.train_loss,
        val_loss: row0.val_loss,
        i: row0.i,
        i_dev: row0.i_dev,
        d_i: None,
        igpp: None,
        iggp: None,
        grad_norm: None,
    }];
    let mut best = (0, row0.val_loss, model.trainable());

    for epoch in 1..=cfg.epochs {
        let mode = SampleMode::Train(epoch as u64);
        let mut attempt = 0;
        let (loss, grad) = loop {
            match batch_gradient(model, corpus, &data.train, mode, cfg.fd_step, cfg.exec) {
                Ok(r) => break r,
                Err(TrainError::Sim(SimError::ZeroNorm)) if attempt == 0 => {
                    attempt += 1;
                    retries += 1;
                    let theta = model.angles(mode);
                    let failed = match sentence_dists(corpus, &data.train, &theta, cfg.exec) {
                        Err((_, failed)) => failed,
                        // a probe point failed rather than the base point
                        Ok(_) => (0..corpus.len()).collect(),
                    };
                    log::warn!("epoch {epoch}: zero postselection probability, re-jittering {} sentences", failed.len());
                    jitter(model, corpus, &failed, &mut jitter_rng);
                }
                Err(TrainError::Sim(SimError::ZeroNorm)) => return Err(TrainError::ZeroPost { epoch }),
                Err(TrainError::Sim(SimError::NonFinite { .. })) => return Err(TrainError::NonFinite { epoch }),
                Err(e) => return Err(e),
            }
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite { epoch });
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut params = model.trainable();
        adam.step(&mut params, &grad);
        model.set_trainable(&params);

        let row = evaluate(model, corpus, data, cfg, epoch)?;
        let d_i = row.i - records.last().expect("row 0 exists").i;
        records.push(EpochRecord {
            epoch,
            train_loss: row.train_loss,
            val_loss: row.val_loss,
            i: row.i,
            i_dev: row.i_dev,
            d_i: Some(d_i),
            igpp: Some(metrics::igpp(d_i, p)),
            iggp: metrics::iggp(d_i, p, grad_norm),
            grad_norm: Some(grad_norm),
        });
        log::debug!("epoch {epoch}: loss {loss:.5} val {:.5} I {:.4}", row.val_loss, row.i);
        if row.val_loss < best.1 {
            best = (epoch, row.val_loss, params);
        }
    }

    model.set_trainable(&best.2);
    let test = if data.test.is_empty() {
        None
    } else {
        let preds = predictions(model, corpus, &data.test, SampleMode::Eval, cfg.exec)?;
        Some(test_metrics(&preds, &data.test, p, cfg.mi_bins))
    };
    model.sync_store();
    Ok(RunLog {
        model: cfg.model,
        task: cfg.task,
        seed: cfg.seed,
        params: p,
        records,
        best_epoch: best.0,
        retries,
        test,
    })
}

/// Predict one pair with a trained model, compiling phrases against
/// `target`. Words unseen in training are an error for the KL and XOR
/// models; the cluster model maps them to the nearest centroid of their
/// type group when an embedding is available.
pub fn predict_pair(
    model: &Model,
    lexicon: &Lexicon,
    premise: &[String],
    hypothesis: &[String],
    target: &PregroupType,
    embeddings: Option<&Embeddings>,
    cap: usize,
) -> Result<Prediction, TrainError> {
    let mut m = model.clone();
    let known = m.store.len();
    let corpus = Corpus::build(lexicon, [premise, hypothesis], target, &m.ansatz, &mut m.store, cap)?;
    if m.store.len() > known {
        let new: Vec<SlotKey> = m.store.symbols[known..].to_vec();
        let mut words: Vec<String> = new.iter().map(SlotKey::word).collect();
        words.dedup();
        match (&mut m.cluster, embeddings) {
            (Some(params), Some(emb)) => {
                let mut unresolved = Vec::new();
                for key in &new {
                    let word = key.word();
                    if params.assignment.cluster_of(&word).is_some() {
                        continue;
                    }
                    let ty: Result<PregroupType, _> = key.ty.parse();
                    let c = match (ty, emb.get(&key.token)) {
                        (Ok(ty), Some(v)) => params.assignment.nearest(&ty, v),
                        _ => None,
                    };
                    match c {
                        Some(c) if key.role < params.mu[c].len() => {
                            params.assignment.members.insert(word, c);
                        }
                        _ => unresolved.push(word),
                    }
                }
                if !unresolved.is_empty() {
                    unresolved.dedup();
                    return Err(TrainError::Unseen(unresolved));
                }
            }
            _ => return Err(TrainError::Unseen(words)),
        }
    }
    let pair = Pair {
        premise: corpus.id_of(premise).expect("just compiled"),
        hypothesis: corpus.id_of(hypothesis).expect("just compiled"),
        target: Target::Score(0.0),
    };
    let theta = m.angles(SampleMode::Eval);
    let d = |s| corpus.distribution(s, &theta, None);
    Ok(m.head.predict(&d(pair.premise)?, &d(pair.hypothesis)?))
}

/// Class probabilities for a logits prediction.
pub fn class_probs(pred: &Prediction) -> Option<[f64; 3]> {
    match pred {
        Prediction::Logits(l) => Some(softmax(l)),
        Prediction::Score(_) => None,
    }
}
