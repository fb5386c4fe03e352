//! Reference implementations used only by tests: a dense-matrix circuit
//! evaluator and an interval-DP pregroup recognizer.

#![allow(dead_code)]

use num_complex::Complex64;
use qnli_core::circuit::{BoundCircuit, BoundGate};
use qnli_core::pregroup::{Atom, Base, Diagram, Lexicon, PregroupType};
use rand::Rng;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn single(g: &BoundGate) -> [[C; 2]; 2] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match *g {
        BoundGate::H(_) => [[c(r, 0.0), c(r, 0.0)], [c(r, 0.0), c(-r, 0.0)]],
        BoundGate::Rx(_, t) => {
            // exp(-i t X / 2)
            let (s, co) = ((t / 2.0).sin(), (t / 2.0).cos());
            [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
        }
        BoundGate::Rz(_, t) => [
            [C::from_polar(1.0, -t / 2.0), c(0.0, 0.0)],
            [c(0.0, 0.0), C::from_polar(1.0, t / 2.0)],
        ],
        _ => unreachable!(),
    }
}

fn identity() -> [[C; 2]; 2] {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}

/// Kronecker product of per-qubit 2x2 operators; qubit q is bit q of the index.
fn kron(ops: &[[[C; 2]; 2]]) -> Vec<Vec<C>> {
    let dim = 1usize << ops.len();
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    ops.iter()
                        .enumerate()
                        .map(|(q, op)| op[i >> q & 1][j >> q & 1])
                        .product()
                })
                .collect()
        })
        .collect()
}

fn add(a: &mut [Vec<C>], b: &[Vec<C>]) {
    for (ra, rb) in a.iter_mut().zip(b) {
        for (x, y) in ra.iter_mut().zip(rb) {
            *x += y;
        }
    }
}

/// The full 2^n x 2^n unitary of one gate.
pub fn gate_unitary(n: usize, g: &BoundGate) -> Vec<Vec<C>> {
    let p0 = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
    let p1 = [[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
    match *g {
        BoundGate::H(q) | BoundGate::Rx(q, _) | BoundGate::Rz(q, _) => {
            let mut ops = vec![identity(); n];
            ops[q] = single(g);
            kron(&ops)
        }
        BoundGate::Crz { control, target, theta } => {
            let u = [
                [C::from_polar(1.0, -theta / 2.0), c(0.0, 0.0)],
                [c(0.0, 0.0), C::from_polar(1.0, theta / 2.0)],
            ];
            controlled(n, control, target, u, p0, p1)
        }
        BoundGate::Cnot { control, target } => {
            let x = [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
            controlled(n, control, target, x, p0, p1)
        }
    }
}

fn controlled(
    n: usize,
    control: usize,
    target: usize,
    u: [[C; 2]; 2],
    p0: [[C; 2]; 2],
    p1: [[C; 2]; 2],
) -> Vec<Vec<C>> {
    let mut a = vec![identity(); n];
    a[control] = p0;
    let mut b = vec![identity(); n];
    b[control] = p1;
    b[target] = u;
    let mut m = kron(&a);
    add(&mut m, &kron(&b));
    m
}

/// Multiply every gate matrix onto |0...0>, then read the amplitudes with
/// postselected qubits at 0. Output index bit k is `outputs[k]`.
pub fn dense_output(circ: &BoundCircuit) -> (Vec<C>, f64) {
    let n = circ.n_qubits;
    let dim = 1usize << n;
    let mut state = vec![c(0.0, 0.0); dim];
    state[0] = c(1.0, 0.0);
    for g in &circ.gates {
        let u = gate_unitary(n, g);
        state = (0..dim)
            .map(|i| (0..dim).map(|j| u[i][j] * state[j]).sum())
            .collect();
    }
    let out: Vec<C> = (0..1usize << circ.outputs.len())
        .map(|o| {
            let idx: usize = circ
                .outputs
                .iter()
                .enumerate()
                .filter(|&(k, _)| o >> k & 1 == 1)
                .map(|(_, &q)| 1usize << q)
                .sum();
            state[idx]
        })
        .collect();
    let p = out.iter().map(|a| a.norm_sqr()).sum();
    (out, p)
}

pub fn random_gate<R: Rng>(rng: &mut R, n: usize) -> BoundGate {
    let q = rng.random_range(0..n);
    let t = rng.random_range(-2.0 * std::f64::consts::PI..2.0 * std::f64::consts::PI);
    let kinds = if n >= 2 { 5 } else { 3 };
    match rng.random_range(0..kinds) {
        0 => BoundGate::H(q),
        1 => BoundGate::Rx(q, t),
        2 => BoundGate::Rz(q, t),
        k => {
            let mut other = rng.random_range(0..n - 1);
            if other >= q {
                other += 1;
            }
            if k == 3 {
                BoundGate::Crz { control: q, target: other, theta: t }
            } else {
                BoundGate::Cnot { control: q, target: other }
            }
        }
    }
}

/// Random circuit on `n` qubits. Each qubit is postselected with
/// probability `p_post`, and at least one qubit stays an output.
pub fn random_circuit<R: Rng>(rng: &mut R, n: usize, gates: usize, p_post: f64) -> BoundCircuit {
    let gates = (0..gates).map(|_| random_gate(rng, n)).collect();
    let mut postselect = Vec::new();
    let mut outputs = Vec::new();
    for q in 0..n {
        if rng.random_bool(p_post) {
            postselect.push(q);
        } else {
            outputs.push(q);
        }
    }
    if outputs.is_empty() {
        outputs.push(postselect.pop().expect("n >= 1"));
    }
    BoundCircuit { n_qubits: n, gates, postselect, outputs }
}

/// `x^z` followed by `x^(z+1)` contracts.
fn contracts(left: (Base, i32), right: (Base, i32)) -> bool {
    left.0 == right.0 && right.1 == left.1 + 1
}

fn key(a: &Atom) -> (Base, i32) {
    (a.base, a.z)
}

/// Replay the diagram's cups as adjacent contractions on the concatenated
/// word types. Succeeds iff every cup can fire between neighbours at some
/// point and what is left equals `target`.
pub fn check_diagram(d: &Diagram, target: &PregroupType) -> Result<(), String> {
    let atoms: Vec<(Base, i32)> = d.words.iter().flat_map(|w| w.ty.atoms().iter().map(key)).collect();
    if atoms.len() != d.wires.len() || atoms.iter().zip(&d.wires).any(|(a, w)| *a != key(&w.atom)) {
        return Err("wires do not match word types".into());
    }
    let mut live: Vec<usize> = (0..atoms.len()).collect();
    let mut pending: Vec<(usize, usize)> = d.cups.clone();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|&(i, j)| {
            let pi = live.iter().position(|&x| x == i);
            let adjacent = pi.is_some_and(|p| live.get(p + 1) == Some(&j));
            if adjacent && contracts(atoms[i], atoms[j]) {
                let p = pi.unwrap();
                live.drain(p..p + 2);
                false
            } else {
                true
            }
        });
        if pending.len() == before {
            return Err(format!("cups {pending:?} never become adjacent contractions"));
        }
    }
    if live != d.open_wires {
        return Err(format!("left {live:?}, diagram says open {:?}", d.open_wires));
    }
    let rest: Vec<(Base, i32)> = live.iter().map(|&k| atoms[k]).collect();
    let want: Vec<(Base, i32)> = target.atoms().iter().map(key).collect();
    if rest != want {
        return Err(format!("reduces to {rest:?}, not the target"));
    }
    Ok(())
}

/// Whether `atoms` reduces to `target` by adjacent contractions, decided by
/// interval dynamic programming rather than search.
pub fn reduces_to(atoms: &[(Base, i32)], target: &[(Base, i32)]) -> bool {
    let n = atoms.len();
    // empty[i][j]: atoms[i..j] reduces to nothing
    let mut empty = vec![vec![false; n + 1]; n + 1];
    for i in 0..=n {
        empty[i][i] = true;
    }
    for len in (2..=n).step_by(2) {
        for i in 0..=n - len {
            let j = i + len;
            // atoms[i] pairs with some atoms[m]; inside and outside both vanish
            empty[i][j] = (i + 1..j).step_by(2).any(|m| {
                contracts(atoms[i], atoms[m]) && empty[i + 1][m] && empty[m + 1][j]
            });
        }
    }
    // reach[k][i]: the first k target atoms are produced by atoms[..i]
    let mut reach = vec![vec![false; n + 1]; target.len() + 1];
    reach[0] = (0..=n).map(|i| empty[0][i]).collect();
    for k in 0..target.len() {
        for i in 0..n {
            if reach[k][i] && atoms[i] == target[k] {
                for j in i + 1..=n {
                    if empty[i + 1][j] {
                        reach[k + 1][j] = true;
                    }
                }
            }
        }
    }
    reach[target.len()][n]
}

/// Some type assignment of `tokens` reduces to `target`.
pub fn grammatical(tokens: &[String], lexicon: &Lexicon, target: &PregroupType) -> bool {
    let cands: Vec<&[PregroupType]> = match tokens.iter().map(|t| lexicon.get(t)).collect::<Option<_>>() {
        Some(c) => c,
        None => return false,
    };
    let want: Vec<(Base, i32)> = target.atoms().iter().map(key).collect();
    let mut choice = vec![0usize; tokens.len()];
    loop {
        let atoms: Vec<(Base, i32)> = choice
            .iter()
            .zip(&cands)
            .flat_map(|(&c, ts)| ts[c].atoms().iter().map(key))
            .collect();
        if reduces_to(&atoms, &want) {
            return true;
        }
        let mut k = 0;
        loop {
            if k == choice.len() {
                return false;
            }
            choice[k] += 1;
            if choice[k] < cands[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}
