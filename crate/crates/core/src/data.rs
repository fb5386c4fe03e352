//! SICK-format ingestion, bidirectional expansion and seeded splitting.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_WORDS: usize = 11;
pub const DEFAULT_RATIOS: [u32; 3] = [70, 15, 15];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("only {available} qualifying rows, {requested} requested")]
    Insufficient { available: usize, requested: usize },
    #[error("set of {groups} example groups is too small for ratios {ratios:?}")]
    TooSmall { groups: usize, ratios: [u32; 3] },
    #[error("split ratios {0:?} do not sum to 100")]
    BadRatios([u32; 3]),
    #[error("example set is already bidirectionally expanded")]
    AlreadyExpanded,
    #[error("duplicate example id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Inference label, serialized as its integer code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Contradiction = 0,
    Neutral = 1,
    Entailment = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Contradiction, Label::Neutral, Label::Entailment];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    /// Accepts SICK judgment strings (case-insensitive) and integer codes.
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" | "2" => Some(Label::Entailment),
            "neutral" | "1" => Some(Label::Neutral),
            "contradiction" | "0" => Some(Label::Contradiction),
            _ => None,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        Label::from_index(v as usize).ok_or_else(|| format!("invalid label code {v}"))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub premise: Vec<String>,
    pub hypothesis: Vec<String>,
    pub relatedness: f64,
    pub label: Label,
    #[serde(default)]
    pub reversed_of: Option<String>,
}

impl Example {
    /// Id of the original pair this example descends from.
    pub fn root_id(&self) -> &str {
        self.reversed_of.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: PathBuf,
    pub max_words: usize,
    pub n: usize,
    pub seed: u64,
    pub expanded: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExampleSet {
    pub examples: Vec<Example>,
    pub provenance: Provenance,
}

impl ExampleSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn check_unique_ids(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for e in &self.examples {
            if !seen.insert(e.id.as_str()) {
                return Err(DataError::DuplicateId(e.id.clone()));
            }
        }
        Ok(())
    }
}

/// A row rejected during ingestion.
#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

/// Lowercase, split on whitespace, strip trailing punctuation.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(|t| {
            t.trim_end_matches(['.', ',', '!', '?', ';', ':'])
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Map a 1–5 relatedness score onto [0, 1].
pub fn normalize_score(score: f64) -> f64 {
    (score - 1.0) / 4.0
}

pub fn denormalize_score(relatedness: f64) -> f64 {
    relatedness * 4.0 + 1.0
}

struct Columns {
    id: Option<usize>,
    a: usize,
    b: usize,
    score: usize,
    label: usize,
    width: usize,
}

fn locate_columns(header: &str, path: &str) -> Result<Columns, DataError> {
    let names: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |cands: &[&str]| {
        names
            .iter()
            .position(|n| cands.iter().any(|c| n.eq_ignore_ascii_case(c)))
    };
    let need = |cands: &[&str]| {
        find(cands).ok_or_else(|| DataError::Malformed {
            path: path.to_string(),
            line: 1,
            reason: format!("missing column {}", cands[0]),
        })
    };
    Ok(Columns {
        id: find(&["pair_ID", "id"]),
        a: need(&["sentence_A"])?,
        b: need(&["sentence_B"])?,
        score: need(&["relatedness_score"])?,
        label: need(&["entailment_label", "entailment_judgment", "label"])?,
        width: names.len(),
    })
}

/// Load a SICK TSV and draw `n` qualifying rows uniformly with `seed`.
pub fn load_sick(
    path: &Path,
    max_words: usize,
    n: usize,
    seed: u64,
) -> Result<ExampleSet, DataError> {
    load_sick_filtered(path, max_words, n, seed, |_| Ok(())).map(|(set, _)| set)
}

/// Like [`load_sick`], with an extra acceptance predicate (lexicon coverage,
/// parseability, ...). Rows failing the length filter or the predicate are
/// returned as exclusions, in file order.
pub fn load_sick_filtered<F>(
    path: &Path,
    max_words: usize,
    n: usize,
    seed: u64,
    accept: F,
) -> Result<(ExampleSet, Vec<Exclusion>), DataError>
where
    F: Fn(&Example) -> Result<(), String>,
{
    let display = path.display().to_string();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(DataError::Malformed {
                path: display,
                line: 1,
                reason: "empty file".into(),
            })
        }
    };
    let cols = locate_columns(header.trim_start_matches('\u{feff}'), &display)?;

    let mut qualifying = Vec::new();
    let mut excluded = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let malformed = |reason: String| DataError::Malformed {
            path: display.clone(),
            line: line_no,
            reason,
        };
        if fields.len() != cols.width {
            return Err(malformed(format!(
                "expected {} columns, found {}",
                cols.width,
                fields.len()
            )));
        }
        let score: f64 = fields[cols.score]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("unparsable score {:?}", fields[cols.score])))?;
        if !(1.0..=5.0).contains(&score) {
            return Err(malformed(format!("score {score} outside 1..5")));
        }
        let label = Label::parse(fields[cols.label])
            .ok_or_else(|| malformed(format!("unknown label {:?}", fields[cols.label])))?;
        let id = cols
            .id
            .map(|c| fields[c].trim().to_string())
            .unwrap_or_else(|| (line_no - 1).to_string());
        let example = Example {
            id,
            premise: tokenize(fields[cols.a]),
            hypothesis: tokenize(fields[cols.b]),
            relatedness: normalize_score(score),
            label,
            reversed_of: None,
        };
        let longest = example.premise.len().max(example.hypothesis.len());
        let verdict = if longest > max_words {
            Err(format!("sentence of {longest} words exceeds {max_words}"))
        } else if example.premise.is_empty() || example.hypothesis.is_empty() {
            Err("empty sentence".to_string())
        } else {
            accept(&example)
        };
        match verdict {
            Ok(()) => qualifying.push(example),
            Err(reason) => excluded.push(Exclusion {
                line: line_no,
                id: example.id,
                reason,
            }),
        }
    }

    if n == 0 || qualifying.len() < n {
        return Err(DataError::Insufficient {
            available: qualifying.len(),
            requested: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, qualifying.len(), n).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<Example>> = qualifying.into_iter().map(Some).collect();
    let examples: Vec<Example> = picked
        .into_iter()
        .map(|i| slots[i].take().expect("index sampled once"))
        .collect();

    let set = ExampleSet {
        examples,
        provenance: Provenance {
            source: path.to_path_buf(),
            max_words,
            n,
            seed,
            expanded: false,
        },
    };
    set.check_unique_ids()?;
    Ok((set, excluded))
}

/// Append a reversed copy of every pair. Entailment reverses to neutral;
/// neutral and contradiction keep their label.
pub fn expand_bidirectional(set: &ExampleSet) -> Result<ExampleSet, DataError> {
    if set.provenance.expanded || set.examples.iter().any(|e| e.reversed_of.is_some()) {
        return Err(DataError::AlreadyExpanded);
    }
    let mut examples = set.examples.clone();
    examples.extend(set.examples.iter().map(|e| Example {
        id: format!("{}_rev", e.id),
        premise: e.hypothesis.clone(),
        hypothesis: e.premise.clone(),
        relatedness: e.relatedness,
        label: match e.label {
            Label::Entailment => Label::Neutral,
            other => other,
        },
        reversed_of: Some(e.id.clone()),
    }));
    let out = ExampleSet {
        examples,
        provenance: Provenance {
            expanded: true,
            ..set.provenance.clone()
        },
    };
    out.check_unique_ids()?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

/// Seeded shuffle then contiguous partition. Reversed copies travel with
/// their original, and partition sizes are computed over original pairs.
pub fn split(set: &ExampleSet, ratios: [u32; 3], seed: u64) -> Result<Splits, DataError> {
    if ratios.iter().sum::<u32>() != 100 {
        return Err(DataError::BadRatios(ratios));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&Example>> = HashMap::new();
    for e in &set.examples {
        let root = e.root_id();
        groups
            .entry(root)
            .or_insert_with(|| {
                order.push(root);
                Vec::new()
            })
            .push(e);
    }
    let g = order.len();
    let n_train = (g as f64 * ratios[0] as f64 / 100.0).round() as usize;
    let n_dev = (g as f64 * ratios[1] as f64 / 100.0).round() as usize;
    if n_train == 0 || n_dev == 0 || n_train + n_dev >= g {
        return Err(DataError::TooSmall { groups: g, ratios });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let collect = |roots: &[&str]| -> Vec<Example> {
        roots
            .iter()
            .flat_map(|r| groups[r].iter().map(|e| (*e).clone()))
            .collect()
    };
    Ok(Splits {
        train: collect(&order[..n_train]),
        dev: collect(&order[n_train..n_train + n_dev]),
        test: collect(&order[n_train + n_dev..]),
    })
}

pub fn write_jsonl<W: Write>(mut w: W, examples: &[Example]) -> Result<(), DataError> {
    for e in examples {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Example>, DataError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Example = serde_json::from_str(&line).map_err(|err| DataError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            reason: err.to_string(),
        })?;
        if !(0.0..=1.0).contains(&e.relatedness) {
            return Err(DataError::Malformed {
                path: path.display().to_string(),
                line: i + 1,
                reason: format!("relatedness {} outside [0, 1]", e.relatedness),
            });
        }
        out.push(e);
    }
    Ok(out)
}
