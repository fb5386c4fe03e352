//! Pregroup types, lexicon files and a deterministic lexicalized reducer that
//! turns a token sequence into a planar string diagram.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Base {
    #[serde(rename = "n")]
    N,
    #[serde(rename = "s")]
    S,
}

/// A basic type with its adjoint order: `z < 0` left adjoints, `z > 0` right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub base: Base,
    pub z: i32,
}

impl Atom {
    pub const fn new(base: Base, z: i32) -> Self {
        Atom { base, z }
    }

    /// `x^z · x^(z+1) → 1`
    pub fn cancels_with(self, right: Atom) -> bool {
        self.base == right.base && right.z == self.z + 1
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.base {
            Base::N => "n",
            Base::S => "s",
        })?;
        let suffix = if self.z < 0 { ".l" } else { ".r" };
        for _ in 0..self.z.unsigned_abs() {
            f.write_str(suffix)?;
        }
        Ok(())
    }
}

impl FromStr for Atom {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut chars = s.chars();
        let base = match chars.next() {
            Some('n') => Base::N,
            Some('s') => Base::S,
            _ => return Err(format!("bad atom {s:?}: base must be n or s")),
        };
        let rest: &str = chars.as_str();
        let mut z = 0i32;
        let mut tail = rest;
        while !tail.is_empty() {
            if let Some(t) = tail.strip_prefix(".l").or_else(|| tail.strip_prefix('ˡ')) {
                z -= 1;
                tail = t;
            } else if let Some(t) = tail.strip_prefix(".r").or_else(|| tail.strip_prefix('ʳ')) {
                z += 1;
                tail = t;
            } else {
                return Err(format!("bad atom {s:?}: unexpected {tail:?}"));
            }
        }
        Ok(Atom { base, z })
    }
}

/// An ordered product of atoms, e.g. `n.r s n.l` for a transitive verb.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PregroupType(pub Vec<Atom>);

impl PregroupType {
    pub fn atom(base: Base) -> Self {
        PregroupType(vec![Atom::new(base, 0)])
    }

    pub fn noun() -> Self {
        Self::atom(Base::N)
    }

    pub fn sentence() -> Self {
        Self::atom(Base::S)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PregroupType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for PregroupType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let atoms = s
            .split(|c: char| c.is_whitespace() || c == '·')
            .filter(|t| !t.is_empty())
            .map(Atom::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        if atoms.is_empty() {
            return Err("empty type".into());
        }
        Ok(PregroupType(atoms))
    }
}

impl From<PregroupType> for String {
    fn from(t: PregroupType) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for PregroupType {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Surface token → candidate types, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: HashMap<String, Vec<PregroupType>>,
    order: Vec<String>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: &str, ty: PregroupType) {
        let slot = self.entries.entry(token.to_string()).or_insert_with(|| {
            self.order.push(token.to_string());
            Vec::new()
        });
        slot.push(ty);
    }

    pub fn get(&self, token: &str) -> Option<&[PregroupType]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `(token, type)` pairs in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &PregroupType)> {
        self.order
            .iter()
            .flat_map(move |t| self.entries[t].iter().map(move |ty| (t.as_str(), ty)))
    }

    pub fn parse_str(text: &str) -> Result<Self, LexiconError> {
        let mut lex = Lexicon::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, ty) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| LexiconError::Malformed {
                    line: i + 1,
                    reason: format!("missing type for {line:?}"),
                })?;
            let ty: PregroupType = ty.parse().map_err(|reason| LexiconError::Malformed {
                line: i + 1,
                reason,
            })?;
            lex.insert(token, ty);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Serialize back to the line format.
    pub fn to_text(&self) -> String {
        self.entries()
            .map(|(t, ty)| format!("{t} {ty}\n"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub token: String,
    #[serde(rename = "type")]
    pub ty: PregroupType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wire {
    pub word: usize,
    pub atom: Atom,
}

/// Word boxes, one wire per atom in reading order, planar cups and open wires.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagram {
    pub words: Vec<Word>,
    pub wires: Vec<Wire>,
    pub cups: Vec<(usize, usize)>,
    pub open_wires: Vec<usize>,
}

impl Diagram {
    /// Wire index range owned by each word.
    pub fn word_spans(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.words
            .iter()
            .map(|w| {
                let r = start..start + w.ty.len();
                start = r.end;
                r
            })
            .collect()
    }

    /// Check the structural invariants: cups well-typed, disjoint, planar,
    /// and every wire either cupped or open.
    pub fn validate(&self) -> Result<(), String> {
        let mut used = vec![false; self.wires.len()];
        for &(i, j) in &self.cups {
            if i >= j || j >= self.wires.len() {
                return Err(format!("bad cup ({i}, {j})"));
            }
            if !self.wires[i].atom.cancels_with(self.wires[j].atom) {
                return Err(format!("cup ({i}, {j}) joins non-cancelling atoms"));
            }
            for k in [i, j] {
                if std::mem::replace(&mut used[k], true) {
                    return Err(format!("wire {k} used twice"));
                }
            }
        }
        for &k in &self.open_wires {
            if k >= self.wires.len() || std::mem::replace(&mut used[k], true) {
                return Err(format!("open wire {k} invalid or already used"));
            }
        }
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(format!("wire {k} neither cupped nor open"));
        }
        for &(a, b) in &self.cups {
            for &(c, d) in &self.cups {
                if a < c && c < b && b < d {
                    return Err(format!("cups ({a}, {b}) and ({c}, {d}) cross"));
                }
            }
            if let Some(k) = self.open_wires.iter().find(|&&k| a < k && k < b) {
                return Err(format!("open wire {k} enclosed by cup ({a}, {b})"));
            }
        }
        Ok(())
    }

    pub fn output_type(&self) -> PregroupType {
        PregroupType(self.open_wires.iter().map(|&k| self.wires[k].atom).collect())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("out-of-vocabulary token {0:?}")]
    Oov(String),
    #[error("no reduction to {target}; best partial reduction: {best}")]
    NoReduction { target: String, best: String },
    #[error("empty sentence")]
    Empty,
}

struct Reducer<'a> {
    atoms: &'a [Atom],
    target: &'a [Atom],
    failed: HashSet<(usize, Vec<usize>)>,
    best: Option<Vec<Atom>>,
}

impl Reducer<'_> {
    /// Shift-reduce with backtracking; reduce is tried before shift.
    fn search(
        &mut self,
        pos: usize,
        stack: &mut Vec<usize>,
        cups: &mut Vec<(usize, usize)>,
    ) -> bool {
        if pos == self.atoms.len() {
            let rest: Vec<Atom> = stack.iter().map(|&k| self.atoms[k]).collect();
            if rest == self.target {
                return true;
            }
            if self.best.as_ref().is_none_or(|b| rest.len() < b.len()) {
                self.best = Some(rest);
            }
            return false;
        }
        // Open wires can never be cupped later, so a stack deeper than the
        // remaining input plus the target cannot succeed.
        if stack.len() > self.atoms.len() - pos + self.target.len() {
            return false;
        }
        if self.failed.contains(&(pos, stack.clone())) {
            return false;
        }
        if let Some(&top) = stack.last() {
            if self.atoms[top].cancels_with(self.atoms[pos]) {
                stack.pop();
                cups.push((top, pos));
                if self.search(pos + 1, stack, cups) {
                    return true;
                }
                cups.pop();
                stack.push(top);
            }
        }
        stack.push(pos);
        if self.search(pos + 1, stack, cups) {
            return true;
        }
        stack.pop();
        self.failed.insert((pos, stack.clone()));
        false
    }
}

/// Reduce `tokens` to `target`. Type assignments are tried in lexicographic
/// order of lexicon entries; the first one admitting a reduction wins.
pub fn parse(
    tokens: &[String],
    lexicon: &Lexicon,
    target: &PregroupType,
) -> Result<Diagram, ParseError> {
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let candidates: Vec<&[PregroupType]> = tokens
        .iter()
        .map(|t| lexicon.get(t).ok_or_else(|| ParseError::Oov(t.clone())))
        .collect::<Result<_, _>>()?;

    let mut choice = vec![0usize; tokens.len()];
    let mut best: Option<Vec<Atom>> = None;
    loop {
        let types: Vec<&PregroupType> = choice
            .iter()
            .zip(&candidates)
            .map(|(&c, cands)| &cands[c])
            .collect();
        let mut atoms = Vec::new();
        let mut wires = Vec::new();
        for (w, ty) in types.iter().enumerate() {
            for &a in ty.atoms() {
                atoms.push(a);
                wires.push(Wire { word: w, atom: a });
            }
        }
        let mut reducer = Reducer {
            atoms: &atoms,
            target: target.atoms(),
            failed: HashSet::new(),
            best: None,
        };
        let mut stack = Vec::new();
        let mut cups = Vec::new();
        if reducer.search(0, &mut stack, &mut cups) {
            cups.sort_unstable();
            return Ok(Diagram {
                words: tokens
                    .iter()
                    .zip(types)
                    .map(|(t, ty)| Word {
                        token: t.clone(),
                        ty: ty.clone(),
                    })
                    .collect(),
                wires,
                cups,
                open_wires: stack,
            });
        }
        if let Some(b) = reducer.best {
            if best.as_ref().is_none_or(|cur| b.len() < cur.len()) {
                best = Some(b);
            }
        }
        // odometer, last token varies fastest
        let mut i = tokens.len();
        loop {
            if i == 0 {
                let best = best.map(|b| PregroupType(b).to_string()).unwrap_or_default();
                return Err(ParseError::NoReduction {
                    target: target.to_string(),
                    best,
                });
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < candidates[i].len() {
                break;
            }
            choice[i] = 0;
        }
    }
}
