//! Dense statevector simulation with postselection, and central
//! finite-difference gradients.
//!
//! Qubit ordering is little-endian: qubit `q` is bit `q` of the basis index.
//! Gate conventions:
//! `RX(θ) = exp(−iθX/2)`, `RZ(θ) = exp(−iθZ/2)`,
//! `CRZ(θ) = diag(1, 1, e^{−iθ/2}, e^{+iθ/2})` on (control, target).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{BoundCircuit, BoundGate};
use crate::exec::Exec;

pub const DEFAULT_MAX_QUBITS: usize = 16;
pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("circuit has {got} qubits, cap is {cap}")]
    TooManyQubits { got: usize, cap: usize },
    #[error("postselection probability is zero")]
    ZeroNorm,
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error("non-finite loss at coordinate {coordinate}")]
    NonFinite { coordinate: usize },
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

type Mat2 = [[Complex64; 2]; 2];

fn gate_matrix(g: &BoundGate) -> Option<Mat2> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match *g {
        BoundGate::H(_) => Some([
            [Complex64::new(r, 0.0), Complex64::new(r, 0.0)],
            [Complex64::new(r, 0.0), Complex64::new(-r, 0.0)],
        ]),
        BoundGate::Rx(_, t) => {
            let (s, c) = (t / 2.0).sin_cos();
            Some([
                [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
            ])
        }
        BoundGate::Rz(_, t) => Some([
            [Complex64::from_polar(1.0, -t / 2.0), ZERO],
            [ZERO, Complex64::from_polar(1.0, t / 2.0)],
        ]),
        _ => None,
    }
}

fn apply_single(amps: &mut [Complex64], pos: usize, m: &Mat2) {
    let bit = 1usize << pos;
    for i in 0..amps.len() {
        if i & bit == 0 {
            let (a0, a1) = (amps[i], amps[i | bit]);
            amps[i] = m[0][0] * a0 + m[0][1] * a1;
            amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
        }
    }
}

/// Apply `g` with its logical qubits mapped to state positions by `pos`.
fn apply_gate(amps: &mut [Complex64], g: &BoundGate, pos: impl Fn(usize) -> usize) {
    match *g {
        BoundGate::H(q) | BoundGate::Rx(q, _) | BoundGate::Rz(q, _) => {
            apply_single(amps, pos(q), &gate_matrix(g).expect("single-qubit gate"));
        }
        BoundGate::Crz {
            control,
            target,
            theta,
        } => {
            let (cb, tb) = (1usize << pos(control), 1usize << pos(target));
            let lo = Complex64::from_polar(1.0, -theta / 2.0);
            let hi = Complex64::from_polar(1.0, theta / 2.0);
            for (i, a) in amps.iter_mut().enumerate() {
                if i & cb != 0 {
                    *a *= if i & tb == 0 { lo } else { hi };
                }
            }
        }
        BoundGate::Cnot { control, target } => {
            let (cb, tb) = (1usize << pos(control), 1usize << pos(target));
            for i in 0..amps.len() {
                if i & cb != 0 && i & tb == 0 {
                    amps.swap(i, i | tb);
                }
            }
        }
    }
}

/// Full `2^n` statevector, initialized to |0…0⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn apply(&mut self, g: &BoundGate) {
        apply_gate(&mut self.amps, g, |q| q);
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Unnormalized amplitudes on the output qubits after postselection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostselectedOutput {
    #[serde(with = "complex_pairs")]
    pub amps: Vec<Complex64>,
    pub p_post: f64,
}

mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|c| (c.re, c.im)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs: Vec<(f64, f64)> = Vec::deserialize(d)?;
        Ok(pairs.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
    }
}

pub fn simulate(circuit: &BoundCircuit) -> Result<PostselectedOutput, SimError> {
    simulate_with_cap(circuit, DEFAULT_MAX_QUBITS)
}

/// Simulate from |0…0⟩ and project postselected qubits onto |0⟩.
///
/// Qubits enter the state at their first gate and postselected qubits are
/// projected out right after their last gate, so memory tracks the widest
/// live cut of the circuit rather than its total width. The result is the
/// same as simulating all qubits and projecting at the end.
pub fn simulate_with_cap(circuit: &BoundCircuit, cap: usize) -> Result<PostselectedOutput, SimError> {
    let n = circuit.n_qubits;
    if n > cap {
        return Err(SimError::TooManyQubits { got: n, cap });
    }
    let mut last_use = vec![None; n];
    for (gi, g) in circuit.gates.iter().enumerate() {
        let (qs, k) = g.qubits();
        for &q in &qs[..k] {
            last_use[q] = Some(gi);
        }
    }
    let mut postselected = vec![false; n];
    for &q in &circuit.postselect {
        postselected[q] = true;
    }

    let mut pos: Vec<Option<usize>> = vec![None; n];
    let mut live: Vec<usize> = Vec::new();
    let mut amps = vec![Complex64::new(1.0, 0.0)];

    let activate = |q: usize, pos: &mut Vec<Option<usize>>, live: &mut Vec<usize>, amps: &mut Vec<Complex64>| {
        if pos[q].is_none() {
            pos[q] = Some(live.len());
            live.push(q);
            let len = amps.len();
            amps.resize(2 * len, ZERO);
        }
    };

    for (gi, g) in circuit.gates.iter().enumerate() {
        let (qs, k) = g.qubits();
        for &q in &qs[..k] {
            activate(q, &mut pos, &mut live, &mut amps);
        }
        apply_gate(&mut amps, g, |q| pos[q].expect("active qubit"));
        for &q in &qs[..k] {
            if postselected[q] && last_use[q] == Some(gi) && pos[q].is_some() {
                let p = pos[q].take().expect("active qubit");
                let low = (1usize << p) - 1;
                amps = (0..amps.len() / 2)
                    .map(|i| amps[(i & low) | ((i & !low) << 1)])
                    .collect();
                live.remove(p);
                for &other in &live[p..] {
                    pos[other] = pos[other].map(|x| x - 1);
                }
            }
        }
    }
    for &q in &circuit.outputs {
        activate(q, &mut pos, &mut live, &mut amps);
    }

    let m = circuit.outputs.len();
    let out: Vec<Complex64> = (0..1usize << m)
        .map(|o| {
            let idx = circuit
                .outputs
                .iter()
                .enumerate()
                .filter(|&(k, _)| o >> k & 1 == 1)
                .map(|(_, &q)| 1usize << pos[q].expect("output active"))
                .sum::<usize>();
            amps[idx]
        })
        .collect();
    let p_post = out.iter().map(|a| a.norm_sqr()).sum();
    Ok(PostselectedOutput { amps: out, p_post })
}

/// Normalized outcome distribution over the output bitstrings.
pub fn distribution(out: &PostselectedOutput) -> Result<Vec<f64>, SimError> {
    if !(out.p_post > 0.0) || !out.p_post.is_finite() {
        return Err(SimError::ZeroNorm);
    }
    Ok(out.amps.iter().map(|a| a.norm_sqr() / out.p_post).collect())
}

/// Central finite differences `(L(θ+h·e_i) − L(θ−h·e_i)) / 2h`, one
/// coordinate per task.
pub fn loss_gradient<F>(loss: F, theta: &[f64], h: f64, exec: Exec) -> Result<Vec<f64>, SimError>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if !(h > 0.0) {
        return Err(SimError::BadStep(h));
    }
    exec.map_range(theta.len(), |i| {
        let mut probe = theta.to_vec();
        probe[i] = theta[i] + h;
        let plus = loss(&probe);
        probe[i] = theta[i] - h;
        let minus = loss(&probe);
        if plus.is_finite() && minus.is_finite() {
            Ok((plus - minus) / (2.0 * h))
        } else {
            Err(SimError::NonFinite { coordinate: i })
        }
    })
    .into_iter()
    .collect()
}
