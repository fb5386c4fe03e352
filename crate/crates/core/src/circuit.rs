//! Diagram → parameterized circuit compilation under an IQP-style ansatz,
//! and the symbol table of trainable angles.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pregroup::{Diagram, PregroupType};

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("invalid diagram: {0}")]
    InvalidDiagram(String),
    #[error("unresolved parameter slot {0}")]
    UnresolvedSlot(String),
    #[error("theta has {got} entries, store has {expected}")]
    Arity { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum GateKind {
    H,
    RX,
    RZ,
    CRZ,
    CNOT,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Const(f64),
    Slot(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<Param>,
}

/// Symbolic circuit. Every qubit is either postselected on ⟨0| or an output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub postselect: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// A gate with its angle resolved to a number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundGate {
    H(usize),
    Rx(usize, f64),
    Rz(usize, f64),
    Crz { control: usize, target: usize, theta: f64 },
    Cnot { control: usize, target: usize },
}

impl BoundGate {
    pub fn qubits(&self) -> ([usize; 2], usize) {
        match *self {
            BoundGate::H(q) | BoundGate::Rx(q, _) | BoundGate::Rz(q, _) => ([q, q], 1),
            BoundGate::Crz { control, target, .. } | BoundGate::Cnot { control, target } => {
                ([control, target], 2)
            }
        }
    }
}

/// Fully numeric circuit, ready for simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCircuit {
    pub n_qubits: usize,
    pub gates: Vec<BoundGate>,
    pub postselect: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// A slot is keyed by the word's surface token and type, so every occurrence
/// of the same `(token, type)` shares angles.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotKey {
    pub token: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub role: usize,
}

impl SlotKey {
    pub fn word_key(token: &str, ty: &PregroupType) -> String {
        format!("{token}__{}", ty.to_string().replace(' ', "_"))
    }

    pub fn name(&self) -> String {
        format!("{}__{}__{}", self.token, self.ty.replace(' ', "_"), self.role)
    }

    pub fn word(&self) -> String {
        format!("{}__{}", self.token, self.ty.replace(' ', "_"))
    }
}

/// Flat angle vector plus slot table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub theta: Vec<f64>,
    pub symbols: Vec<SlotKey>,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Index of `key`, allocating a zero-valued slot if new.
    pub fn slot(&mut self, key: SlotKey) -> usize {
        let name = key.name();
        if let Some(&i) = self.lookup.get(&name) {
            return i;
        }
        let i = self.theta.len();
        self.theta.push(0.0);
        self.symbols.push(key);
        self.lookup.insert(name, i);
        i
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    /// Rebuild the name lookup, e.g. after deserialization.
    pub fn reindex(&mut self) {
        self.lookup = self
            .symbols
            .iter()
            .enumerate()
            .map(|(i, k)| (k.name(), i))
            .collect();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzConfig {
    /// IQP layers for multi-qubit word boxes.
    pub layers: usize,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        AnsatzConfig { layers: 1 }
    }
}

impl AnsatzConfig {
    /// Trainable slots for a word box of `k` qubits.
    pub fn slots_for(&self, k: usize) -> usize {
        match k {
            0 => 0,
            1 => 3,
            k => self.layers * (k - 1),
        }
    }
}

/// One qubit per wire. Gates are emitted word by word; each cup is emitted
/// right after the word holding its right end, which lets the simulator
/// retire postselected qubits early. Gates on disjoint qubits commute, so
/// this is equivalent to emitting all word boxes before all cups.
pub fn compile(
    diagram: &Diagram,
    cfg: &AnsatzConfig,
    store: &mut ParamStore,
) -> Result<Circuit, CircuitError> {
    diagram.validate().map_err(CircuitError::InvalidDiagram)?;
    let spans = diagram.word_spans();
    let mut gates = Vec::new();
    let mut cups = diagram.cups.clone();
    cups.sort_by_key(|&(_, j)| j);
    let mut next_cup = 0;

    for (word, span) in diagram.words.iter().zip(&spans) {
        let ty = word.ty.to_string();
        let mut slot = |role: usize| {
            let key = SlotKey {
                token: word.token.clone(),
                ty: ty.clone(),
                role,
            };
            let name = key.name();
            store.slot(key);
            Some(Param::Slot(name))
        };
        let qubits: Vec<usize> = span.clone().collect();
        match qubits.len() {
            1 => {
                let q = qubits[0];
                for (role, kind) in [GateKind::RX, GateKind::RZ, GateKind::RX].into_iter().enumerate() {
                    gates.push(Gate {
                        kind,
                        qubits: vec![q],
                        param: slot(role),
                    });
                }
            }
            k => {
                for layer in 0..cfg.layers {
                    for &q in &qubits {
                        gates.push(Gate {
                            kind: GateKind::H,
                            qubits: vec![q],
                            param: None,
                        });
                    }
                    for pair in 0..k - 1 {
                        gates.push(Gate {
                            kind: GateKind::CRZ,
                            qubits: vec![qubits[pair], qubits[pair + 1]],
                            param: slot(layer * (k - 1) + pair),
                        });
                    }
                }
            }
        }
        while next_cup < cups.len() && cups[next_cup].1 < span.end {
            let (i, j) = cups[next_cup];
            gates.push(Gate {
                kind: GateKind::CNOT,
                qubits: vec![i, j],
                param: None,
            });
            gates.push(Gate {
                kind: GateKind::H,
                qubits: vec![i],
                param: None,
            });
            next_cup += 1;
        }
    }

    let mut postselect: Vec<usize> = diagram.cups.iter().flat_map(|&(i, j)| [i, j]).collect();
    postselect.sort_unstable();
    Ok(Circuit {
        n_qubits: diagram.wires.len(),
        gates,
        postselect,
        outputs: diagram.open_wires.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ResolvedParam {
    None,
    Const(f64),
    Index(usize),
}

/// A circuit whose slots have been looked up in a [`ParamStore`] once, so
/// binding against many angle vectors is cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedCircuit {
    n_qubits: usize,
    gates: Vec<(GateKind, [usize; 2], ResolvedParam)>,
    postselect: Vec<usize>,
    outputs: Vec<usize>,
    arity: usize,
    slots: Vec<usize>,
}

impl Circuit {
    pub fn resolve(&self, store: &ParamStore) -> Result<ResolvedCircuit, CircuitError> {
        let mut slots = Vec::new();
        let gates = self
            .gates
            .iter()
            .map(|g| {
                let p = match &g.param {
                    None => ResolvedParam::None,
                    Some(Param::Const(a)) => ResolvedParam::Const(*a),
                    Some(Param::Slot(name)) => {
                        let i = store
                            .index_of(name)
                            .ok_or_else(|| CircuitError::UnresolvedSlot(name.clone()))?;
                        slots.push(i);
                        ResolvedParam::Index(i)
                    }
                };
                let q = [g.qubits[0], *g.qubits.get(1).unwrap_or(&g.qubits[0])];
                Ok((g.kind, q, p))
            })
            .collect::<Result<Vec<_>, CircuitError>>()?;
        slots.sort_unstable();
        slots.dedup();
        Ok(ResolvedCircuit {
            n_qubits: self.n_qubits,
            gates,
            postselect: self.postselect.clone(),
            outputs: self.outputs.clone(),
            arity: store.len(),
            slots,
        })
    }

    /// Substitute the store's current angles into every slot.
    pub fn bind(&self, store: &ParamStore) -> Result<BoundCircuit, CircuitError> {
        self.resolve(store)?.bind(&store.theta)
    }

    pub fn symbol_names(&self) -> Vec<&str> {
        self.gates
            .iter()
            .filter_map(|g| match &g.param {
                Some(Param::Slot(s)) => Some(s.as_str()),
                _ => None,
            })
            .collect()
    }
}

impl ResolvedCircuit {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Distinct theta indices this circuit reads, ascending.
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn bind(&self, theta: &[f64]) -> Result<BoundCircuit, CircuitError> {
        self.bind_override(theta, None)
    }

    /// Bind with `theta[i]` replaced by `v` when `over = Some((i, v))`.
    pub fn bind_override(
        &self,
        theta: &[f64],
        over: Option<(usize, f64)>,
    ) -> Result<BoundCircuit, CircuitError> {
        if theta.len() != self.arity {
            return Err(CircuitError::Arity {
                expected: self.arity,
                got: theta.len(),
            });
        }
        let angle = |p: ResolvedParam| match p {
            ResolvedParam::None => 0.0,
            ResolvedParam::Const(a) => a,
            ResolvedParam::Index(i) => match over {
                Some((j, v)) if j == i => v,
                _ => theta[i],
            },
        };
        let gates = self
            .gates
            .iter()
            .map(|&(kind, [a, b], p)| match kind {
                GateKind::H => BoundGate::H(a),
                GateKind::RX => BoundGate::Rx(a, angle(p)),
                GateKind::RZ => BoundGate::Rz(a, angle(p)),
                GateKind::CRZ => BoundGate::Crz {
                    control: a,
                    target: b,
                    theta: angle(p),
                },
                GateKind::CNOT => BoundGate::Cnot {
                    control: a,
                    target: b,
                },
            })
            .collect();
        Ok(BoundCircuit {
            n_qubits: self.n_qubits,
            gates,
            postselect: self.postselect.clone(),
            outputs: self.outputs.clone(),
        })
    }
}
