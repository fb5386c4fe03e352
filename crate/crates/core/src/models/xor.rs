//! Dense head over the concatenated sentence distributions.

use serde::{Deserialize, Serialize};

use super::{example_loss, sigmoid, Prediction, Target, Task};

pub const INPUT: usize = 4;
pub const HIDDEN: usize = 8;

/// A 4-8-out network, tanh hidden layer, identity output. Relatedness
/// passes the single output through a sigmoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseHead {
    pub w1: Vec<[f64; INPUT]>,
    pub b1: Vec<f64>,
    pub w2: Vec<[f64; HIDDEN]>,
    pub b2: Vec<f64>,
}

impl DenseHead {
    pub fn new(task: Task) -> Self {
        let out = match task {
            Task::Relatedness => 1,
            Task::Inference => 3,
        };
        DenseHead {
            w1: vec![[0.0; INPUT]; HIDDEN],
            b1: vec![0.0; HIDDEN],
            w2: vec![[0.0; HIDDEN]; out],
            b2: vec![0.0; out],
        }
    }

    pub fn outputs(&self) -> usize {
        self.b2.len()
    }

    pub fn n_params(&self) -> usize {
        HIDDEN * INPUT + HIDDEN + self.outputs() * HIDDEN + self.outputs()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend(self.w1.iter().flatten());
        p.extend(&self.b1);
        p.extend(self.w2.iter().flatten());
        p.extend(&self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for row in &mut self.w1 {
            row.iter_mut().for_each(|w| *w = it.next().expect("param count"));
        }
        self.b1.iter_mut().for_each(|b| *b = it.next().expect("param count"));
        for row in &mut self.w2 {
            row.iter_mut().for_each(|w| *w = it.next().expect("param count"));
        }
        self.b2.iter_mut().for_each(|b| *b = it.next().expect("param count"));
    }

    fn input(premise: &[f64], hypothesis: &[f64]) -> [f64; INPUT] {
        [premise[0], premise[1], hypothesis[0], hypothesis[1]]
    }

    fn hidden(&self, x: &[f64; INPUT]) -> [f64; HIDDEN] {
        std::array::from_fn(|j| {
            let z: f64 = self.b1[j] + (0..INPUT).map(|i| self.w1[j][i] * x[i]).sum::<f64>();
            z.tanh()
        })
    }

    fn raw(&self, a: &[f64; HIDDEN]) -> Vec<f64> {
        self.w2
            .iter()
            .zip(&self.b2)
            .map(|(row, b)| b + row.iter().zip(a).map(|(w, h)| w * h).sum::<f64>())
            .collect()
    }

    fn finish(&self, raw: &[f64]) -> Prediction {
        if raw.len() == 1 {
            Prediction::Score(sigmoid(raw[0]))
        } else {
            Prediction::Logits([raw[0], raw[1], raw[2]])
        }
    }

    pub fn predict(&self, premise: &[f64], hypothesis: &[f64]) -> Prediction {
        let x = Self::input(premise, hypothesis);
        self.finish(&self.raw(&self.hidden(&x)))
    }

    /// Backpropagated loss gradient, laid out like [`DenseHead::params`].
    pub fn loss_grad(&self, premise: &[f64], hypothesis: &[f64], target: &Target) -> (f64, Vec<f64>) {
        let x = Self::input(premise, hypothesis);
        let a = self.hidden(&x);
        let raw = self.raw(&a);
        let pred = self.finish(&raw);
        let (loss, dpred) = example_loss(&pred, target);
        let draw: Vec<f64> = match (pred, dpred) {
            (Prediction::Score(s), Prediction::Score(g)) => vec![g * s * (1.0 - s)],
            (_, Prediction::Logits(g)) => g.to_vec(),
            _ => unreachable!("prediction kinds agree"),
        };
        let mut da = [0.0; HIDDEN];
        for (row, g) in self.w2.iter().zip(&draw) {
            for j in 0..HIDDEN {
                da[j] += row[j] * g;
            }
        }
        let dz: [f64; HIDDEN] = std::array::from_fn(|j| da[j] * (1.0 - a[j] * a[j]));
        let mut grads = Vec::with_capacity(self.n_params());
        for dzj in dz {
            grads.extend(x.iter().map(|xi| dzj * xi));
        }
        grads.extend(dz);
        for g in &draw {
            grads.extend(a.iter().map(|aj| g * aj));
        }
        grads.extend(&draw);
        (loss, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use crate::models::test_util::numeric_grad;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_weights_give_half() {
        let head = DenseHead::new(Task::Relatedness);
        assert_eq!(head.predict(&[0.3, 0.7], &[0.9, 0.1]), Prediction::Score(0.5));
        assert_eq!(head.n_params(), 32 + 8 + 8 + 1);
        assert_eq!(DenseHead::new(Task::Inference).n_params(), 32 + 8 + 24 + 3);
    }

    #[test]
    fn deterministic() {
        let mut head = DenseHead::new(Task::Inference);
        let p: Vec<f64> = (0..head.n_params()).map(|i| (i as f64 * 0.37).sin()).collect();
        head.set_params(&p);
        assert_eq!(head.predict(&[0.4, 0.6], &[0.4, 0.6]), head.predict(&[0.4, 0.6], &[0.4, 0.6]));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for task in [Task::Relatedness, Task::Inference] {
            for _ in 0..20 {
                let mut head = DenseHead::new(task);
                let params: Vec<f64> = (0..head.n_params()).map(|_| rng.random_range(-1.5..1.5)).collect();
                head.set_params(&params);
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                let (p, h) = ([a, 1.0 - a], [b, 1.0 - b]);
                let target = match task {
                    Task::Relatedness => Target::Score(rng.random()),
                    Task::Inference => Target::Class(Label::from_index(rng.random_range(0..3)).unwrap()),
                };
                let (_, analytic) = head.loss_grad(&p, &h, &target);
                let numeric = numeric_grad(
                    |x| {
                        let mut hh = head.clone();
                        hh.set_params(x);
                        hh.loss_grad(&p, &h, &target).0
                    },
                    &params,
                    1e-5,
                );
                for (x, y) in analytic.iter().zip(&numeric) {
                    assert!((x - y).abs() <= 1e-5, "{x} vs {y}");
                }
            }
        }
    }
}
