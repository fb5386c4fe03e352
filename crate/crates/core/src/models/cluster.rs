//! Cluster-shared Gaussian parameters and the order-embedding readout.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sigmoid, softplus, ModelError};
use crate::circuit::SlotKey;
use crate::pregroup::PregroupType;

pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;
pub const DEFAULT_ORDER_DIM: usize = 4;

pub type Embeddings = HashMap<String, Vec<f64>>;

/// Reads `word v1 v2 … vd` lines. Blank lines and `#` comments are skipped.
pub fn load_embeddings(path: &Path) -> Result<Embeddings, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::EmbeddingFile {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })?;
    parse_embeddings(&text)
}

pub fn parse_embeddings(text: &str) -> Result<Embeddings, ModelError> {
    let mut out = Embeddings::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| ModelError::EmbeddingFile { line: i + 1, reason };
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line").to_lowercase();
        let v = parts
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err(bad(format!("no vector for {word:?}")));
        }
        if *dim.get_or_insert(v.len()) != v.len() {
            return Err(ModelError::EmbeddingDim(word));
        }
        out.insert(word, v);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    #[serde(rename = "type")]
    pub ty: PregroupType,
    pub centroid: Vec<f64>,
    /// Word keys (`token__type`) in sorted order.
    pub words: Vec<String>,
}

/// Total map from word keys to cluster ids. Cluster ids are dense and
/// ordered by type group, then by k-means index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub clusters: Vec<Cluster>,
    pub members: BTreeMap<String, usize>,
}

impl Assignment {
    pub fn cluster_of(&self, word_key: &str) -> Option<usize> {
        self.members.get(word_key).copied()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Closest centroid among clusters of type `ty`.
    pub fn nearest(&self, ty: &PregroupType, v: &[f64]) -> Option<usize> {
        self.clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| &c.ty == ty && c.centroid.len() == v.len())
            .map(|(i, c)| (i, sq_dist(&c.centroid, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Groups words by pregroup type and runs seeded k-means++ inside each group
/// with `k' = min(k, group size)`.
pub fn cluster_words(
    embeddings: &Embeddings,
    words: &[(String, PregroupType)],
    k: usize,
    seed: u64,
) -> Result<Assignment, ModelError> {
    if k == 0 {
        return Err(ModelError::ZeroClusters);
    }
    let mut missing: Vec<String> = words
        .iter()
        .filter(|(t, _)| !embeddings.contains_key(t))
        .map(|(t, _)| t.clone())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(ModelError::MissingEmbedding(missing));
    }
    let mut groups: BTreeMap<String, (PregroupType, Vec<(String, &str)>)> = BTreeMap::new();
    for (token, ty) in words {
        let entry = groups.entry(ty.to_string()).or_insert_with(|| (ty.clone(), Vec::new()));
        entry.1.push((SlotKey::word_key(token, ty), token.as_str()));
    }
    let mut out = Assignment::default();
    for (g, (ty, mut members)) in groups.into_values().enumerate() {
        members.sort();
        members.dedup();
        let points: Vec<&[f64]> = members.iter().map(|(_, t)| embeddings[*t].as_slice()).collect();
        let kk = k.min(points.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (g as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (centroids, labels) = kmeans(&points, kk, &mut rng);
        let base = out.clusters.len();
        for (c, centroid) in centroids.into_iter().enumerate() {
            let words = members
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|((key, _), _)| key.clone())
                .collect();
            out.clusters.push(Cluster {
                ty: ty.clone(),
                centroid,
                words,
            });
        }
        for ((key, _), l) in members.iter().zip(&labels) {
            out.members.insert(key.clone(), base + l);
        }
    }
    // drop clusters emptied by k-means and renumber
    if out.clusters.iter().any(|c| c.words.is_empty()) {
        let mut remap = Vec::with_capacity(out.clusters.len());
        let mut kept = Vec::new();
        for c in out.clusters.drain(..) {
            remap.push(kept.len());
            if !c.words.is_empty() {
                kept.push(c);
            }
        }
        out.clusters = kept;
        for v in out.members.values_mut() {
            *v = remap[*v];
        }
    }
    Ok(out)
}

fn kmeans(points: &[&[f64]], k: usize, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].to_vec()];
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| sq_dist(c, p)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // duplicates only: take the first point not already a centroid
            (0..points.len())
                .find(|&i| centroids.iter().all(|c| c.as_slice() != points[i]))
                .unwrap_or(0)
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        };
        centroids.push(points[next].to_vec());
    }
    let mut labels = vec![0; points.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            *l = (0..k)
                .min_by(|&a, &b| sq_dist(&centroids[a], p).total_cmp(&sq_dist(&centroids[b], p)))
                .expect("k >= 1");
        }
        let mut shift: f64 = 0.0;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64]> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| *p).collect();
            if members.is_empty() {
                continue;
            }
            let mean: Vec<f64> = (0..centroid.len())
                .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                .collect();
            shift = shift.max(sq_dist(&mean, centroid).sqrt());
            *centroid = mean;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    (centroids, labels)
}

/// Per-cluster Gaussian over slot roles. Cluster `c` has `mu[c].len()` roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub assignment: Assignment,
    pub mu: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub eps_seed: u64,
}

impl ClusterParams {
    pub fn std(&self, c: usize, r: usize) -> f64 {
        softplus(self.rho[c][r])
    }

    pub fn n_params(&self) -> usize {
        self.mu.iter().map(|m| 2 * m.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Eval,
    Train(u64),
}

/// Standard normal draw keyed by `(seed, epoch, word, role)`, independent of
/// call order.
pub fn epsilon(seed: u64, epoch: u64, word: &str, role: usize) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(epoch.to_le_bytes());
    h.update((word.len() as u64).to_le_bytes());
    h.update(word.as_bytes());
    h.update((role as u64).to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    StandardNormal.sample(&mut ChaCha8Rng::from_seed(key))
}

/// `θ = μ_c[r] + softplus(ρ_c[r])·ε`, with `ε = 0` in eval mode. `None` if the
/// word has no cluster or the role is out of range.
pub fn cluster_sample(params: &ClusterParams, word_key: &str, role: usize, mode: SampleMode) -> Option<f64> {
    let c = params.assignment.cluster_of(word_key)?;
    let mu = *params.mu.get(c)?.get(role)?;
    Some(match mode {
        SampleMode::Eval => mu,
        SampleMode::Train(epoch) => mu + params.std(c, role) * epsilon(params.eps_seed, epoch, word_key, role),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyDirection {
    /// First feature is `E(p→h) = ‖max(0, e_h − e_p)‖²`.
    #[default]
    PremiseToHypothesis,
    HypothesisToPremise,
}

/// `E(p→h) = ‖max(0, e_h − e_p)‖²`: zero when the hypothesis sits below the
/// premise in every coordinate.
pub fn order_energy(e_p: &[f64], e_h: &[f64]) -> f64 {
    e_p.iter().zip(e_h).map(|(p, h)| (h - p).max(0.0).powi(2)).sum()
}

/// `e(v) = softplus(V·v + c)`, `V` stored row-major as `dim × 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderEmbedding {
    pub v: Vec<[f64; 2]>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub direction: EnergyDirection,
}

impl Default for OrderEmbedding {
    fn default() -> Self {
        OrderEmbedding::new(DEFAULT_ORDER_DIM, EnergyDirection::default())
    }
}

impl OrderEmbedding {
    pub fn new(dim: usize, direction: EnergyDirection) -> Self {
        OrderEmbedding {
            v: vec![[0.0; 2]; dim],
            c: vec![0.0; dim],
            direction,
        }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn n_params(&self) -> usize {
        3 * self.dim()
    }

    pub fn params(&self) -> Vec<f64> {
        self.v.iter().flatten().chain(&self.c).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let d = self.dim();
        for (k, row) in self.v.iter_mut().enumerate() {
            *row = [p[2 * k], p[2 * k + 1]];
        }
        self.c.copy_from_slice(&p[2 * d..3 * d]);
    }

    /// Pre-activation and embedding of a 2-entry distribution.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = self
            .v
            .iter()
            .zip(&self.c)
            .map(|(row, c)| row[0] * x[0] + row[1] * x[1] + c)
            .collect();
        let e = z.iter().map(|&z| softplus(z)).collect();
        (z, e)
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).1
    }

    /// Parameter gradient given `dL/de`, laid out like [`OrderEmbedding::params`].
    pub fn backward(&self, x: &[f64], z: &[f64], de: &[f64]) -> Vec<f64> {
        let dz: Vec<f64> = z.iter().zip(de).map(|(&z, &g)| g * sigmoid(z)).collect();
        let mut g: Vec<f64> = dz.iter().flat_map(|&d| [d * x[0], d * x[1]]).collect();
        g.extend(&dz);
        g
    }

    /// The two readout features, ordered by `direction`.
    pub fn energies(&self, e_p: &[f64], e_h: &[f64]) -> [f64; 2] {
        let (fwd, back) = (order_energy(e_p, e_h), order_energy(e_h, e_p));
        match self.direction {
            EnergyDirection::PremiseToHypothesis => [fwd, back],
            EnergyDirection::HypothesisToPremise => [back, fwd],
        }
    }

    /// `(dL/de_p, dL/de_h)` given `dL/dfeatures`.
    pub fn energy_backward(&self, e_p: &[f64], e_h: &[f64], df: [f64; 2]) -> (Vec<f64>, Vec<f64>) {
        let [d_fwd, d_back] = match self.direction {
            EnergyDirection::PremiseToHypothesis => df,
            EnergyDirection::HypothesisToPremise => [df[1], df[0]],
        };
        let mut dp = vec![0.0; e_p.len()];
        let mut dh = vec![0.0; e_h.len()];
        for k in 0..e_p.len() {
            let d = e_h[k] - e_p[k];
            let (a, b) = (2.0 * d.max(0.0), 2.0 * (-d).max(0.0));
            dh[k] = d_fwd * a - d_back * b;
            dp[k] = -d_fwd * a + d_back * b;
        }
        (dp, dh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{softplus_inv, test_util::numeric_grad};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::Rng;

    fn noun_words(tokens: &[&str]) -> Vec<(String, PregroupType)> {
        tokens.iter().map(|t| (t.to_string(), PregroupType::noun())).collect()
    }

    fn blobs() -> (Embeddings, Vec<(String, PregroupType)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut emb = Embeddings::new();
        let mut names = Vec::new();
        for (b, centre) in [(0, [0.0, 0.0]), (1, [10.0, 10.0])] {
            for i in 0..12 {
                let name = format!("b{b}w{i}");
                let v = vec![
                    centre[0] + 0.3 * rng.sample::<f64, _>(StandardNormal),
                    centre[1] + 0.3 * rng.sample::<f64, _>(StandardNormal),
                ];
                emb.insert(name.clone(), v);
                names.push(name);
            }
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        (emb, noun_words(&refs))
    }

    #[test]
    fn recovers_blobs() {
        let (emb, words) = blobs();
        for seed in 0..5 {
            let a = cluster_words(&emb, &words, 2, seed).unwrap();
            assert_eq!(a.len(), 2);
            for c in &a.clusters {
                let first = &c.words[0][..2];
                assert!(c.words.iter().all(|w| &w[..2] == first), "impure cluster");
            }
        }
    }

    #[test]
    fn k_extremes_and_type_separation() {
        let (emb, mut words) = blobs();
        let one = cluster_words(&emb, &words, 1, 0).unwrap();
        assert_eq!(one.len(), 1);
        let all = cluster_words(&emb, &words, 100, 0).unwrap();
        assert_eq!(all.len(), words.len());
        // same token under another type never shares a cluster with nouns
        words.push(("b0w0".into(), "n n.l".parse().unwrap()));
        let mixed = cluster_words(&emb, &words, 1, 0).unwrap();
        assert_eq!(mixed.len(), 2);
        let adj = mixed.cluster_of("b0w0__n_n.l").unwrap();
        assert_eq!(mixed.clusters[adj].words, vec!["b0w0__n_n.l".to_string()]);
    }

    #[test]
    fn missing_embeddings_are_listed() {
        let (emb, mut words) = blobs();
        words.extend(noun_words(&["zebra", "aardvark"]));
        assert_eq!(
            cluster_words(&emb, &words, 2, 0),
            Err(ModelError::MissingEmbedding(vec!["aardvark".into(), "zebra".into()]))
        );
        assert_eq!(cluster_words(&emb, &words[..2], 0, 0), Err(ModelError::ZeroClusters));
    }

    #[test]
    fn clustering_is_deterministic() {
        let (emb, words) = blobs();
        assert_eq!(cluster_words(&emb, &words, 3, 9).unwrap(), cluster_words(&emb, &words, 3, 9).unwrap());
    }

    fn params_one_cluster(rho: f64) -> ClusterParams {
        let (emb, words) = blobs();
        let assignment = cluster_words(&emb, &words, 1, 0).unwrap();
        ClusterParams {
            assignment,
            mu: vec![vec![0.4, -1.2, 2.0]],
            rho: vec![vec![rho; 3]],
            eps_seed: 11,
        }
    }

    #[test]
    fn sampling() {
        let p = params_one_cluster(softplus_inv(0.1));
        assert_eq!(cluster_sample(&p, "b0w3__n", 1, SampleMode::Eval), Some(-1.2));
        let a = cluster_sample(&p, "b0w3__n", 1, SampleMode::Train(4));
        assert_eq!(a, cluster_sample(&p, "b0w3__n", 1, SampleMode::Train(4)));
        assert_ne!(a, cluster_sample(&p, "b0w3__n", 1, SampleMode::Train(5)));
        assert_eq!(cluster_sample(&p, "nobody__n", 0, SampleMode::Eval), None);
        assert_eq!(cluster_sample(&p, "b0w3__n", 3, SampleMode::Eval), None);
    }

    #[test]
    fn sample_variance_matches_spread() {
        let p = params_one_cluster(0.3);
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|t| cluster_sample(&p, "b1w2__n", 0, SampleMode::Train(t)).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = softplus(0.3).powi(2);
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn energy_examples() {
        assert_eq!(order_energy(&[1.0, 2.0, 0.5, 0.0], &[0.5, 2.0, 0.0, 0.0]), 0.0);
        assert_eq!(order_energy(&[0.0; 4], &[1.0, 1.0, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn embedding_gradient() {
        let mut e = OrderEmbedding::default();
        let p: Vec<f64> = (0..e.n_params()).map(|i| ((i * 7) as f64).cos()).collect();
        e.set_params(&p);
        assert_eq!(e.params(), p);
        let x = [0.3, 0.7];
        let w = [0.5, -1.0, 2.0, 0.25];
        let (z, _) = e.forward(&x);
        let analytic = e.backward(&x, &z, &w);
        let numeric = numeric_grad(
            |q| {
                let mut ee = e.clone();
                ee.set_params(q);
                ee.embed(&x).iter().zip(&w).map(|(a, b)| a * b).sum()
            },
            &p,
            1e-6,
        );
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-8);
        }
    }

    #[test]
    fn parse_embedding_file() {
        let e = parse_embeddings("# dims\ncat 0.1 0.2\nDog 1 2\n").unwrap();
        assert_eq!(e["dog"], vec![1.0, 2.0]);
        assert!(matches!(parse_embeddings("cat 0.1 x"), Err(ModelError::EmbeddingFile { line: 1, .. })));
        assert_eq!(parse_embeddings("a 1 2\nb 1"), Err(ModelError::EmbeddingDim("b".into())));
    }

    proptest! {
        #[test]
        fn energy_sum_zero_iff_equal(
            p in proptest::collection::vec(0.0f64..3.0, 4),
            h in proptest::collection::vec(0.0f64..3.0, 4),
        ) {
            let s = order_energy(&p, &h) + order_energy(&h, &p);
            prop_assert_eq!(s == 0.0, p == h);
            prop_assert_eq!(order_energy(&p, &p) + order_energy(&p, &p), 0.0);
            prop_assert!(OrderEmbedding::default().embed(&[p[0], p[1]]).iter().all(|&e| e >= 0.0));
        }
    }
}
