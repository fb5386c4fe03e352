//! Commands behind the `qnli` binary: ingest, train, eval, probe, report.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use qnli_core::circuit::{AnsatzConfig, ParamStore};
use qnli_core::data::{self, DataError, Example, Exclusion, Label};
use qnli_core::models::{load_embeddings, Embeddings, ModelError, ModelKind, Prediction, SampleMode, Task};
use qnli_core::pregroup::{Lexicon, LexiconError, PregroupType};
use qnli_core::training::{
    self, Corpus, Model, RunLog, SplitPairs, TrainConfig, TrainError,
};
use qnli_core::Exec;

pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_INSUFFICIENT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn malformed(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_MALFORMED,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::Insufficient { .. } | DataError::TooSmall { .. } => EXIT_INSUFFICIENT,
            _ => EXIT_MALFORMED,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError {
            code: if e.is_numeric() { EXIT_NUMERIC } else { EXIT_MALFORMED },
            message: e.to_string(),
        }
    }
}

impl From<LexiconError> for CliError {
    fn from(e: LexiconError) -> Self {
        CliError::malformed(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::malformed(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::malformed(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::malformed(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "qnli", version, about = "Few-shot compositional NLI on simulated quantum circuits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, sample, expand and split a SICK-format TSV.
    Ingest(IngestArgs),
    /// Train one model and write its run log, parameters and summary.
    Train(TrainArgs),
    /// Score a trained model on one split of an ingested dataset.
    Eval(EvalArgs),
    /// Predict labels for hand-written phrase or sentence pairs.
    Probe(ProbeArgs),
    /// Compare run summaries side by side.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub sick: PathBuf,
    #[arg(long, default_value = "data/lexicon.txt")]
    pub lexicon: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = data::DEFAULT_MAX_WORDS)]
    pub max_words: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = qnli_core::simulator::DEFAULT_MAX_QUBITS)]
    pub max_qubits: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding train/dev/test.jsonl.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr_quantum: Option<f64>,
    #[arg(long)]
    pub lr_classical: Option<f64>,
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub max_qubits: Option<usize>,
    /// Run gradient probes and forward passes on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Model parameter file written by `train`.
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 4)]
    pub mi_bins: usize,
    #[arg(long, default_value_t = qnli_core::simulator::DEFAULT_MAX_QUBITS)]
    pub max_qubits: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Lines of `phrase A <TAB> phrase B <TAB> gold`.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub model_file: PathBuf,
    /// Lets the cluster model place unseen words at their nearest centroid.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = qnli_core::simulator::DEFAULT_MAX_QUBITS)]
    pub max_qubits: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub summaries: Vec<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => ingest(&a).map(|_| ()),
        Command::Train(a) => train(&a).map(|_| ()),
        Command::Eval(a) => {
            let m = eval(&a)?;
            let text = serde_json::to_string_pretty(&m)?;
            match &a.out {
                Some(p) => fs::write(p, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Probe(a) => {
            let csv = probe(&a)?;
            match &a.out {
                Some(p) => fs::write(p, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Report(a) => {
            let (csv, text) = report(&a.summaries)?;
            if let Some(p) = &a.csv {
                fs::write(p, csv)?;
            }
            print!("{text}");
            Ok(())
        }
    }
}

fn load_lexicon(path: &Path) -> Result<Lexicon, CliError> {
    Lexicon::load(path).map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: PathBuf,
    pub n: usize,
    pub max_words: usize,
    pub max_qubits: usize,
    pub seed: u64,
    pub ratios: [u32; 3],
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub excluded: usize,
}

/// Why a pair cannot be used: either sentence fails to parse to `s` or its
/// circuit is wider than the qubit cap.
fn usable(lexicon: &Lexicon, ansatz: &AnsatzConfig, cap: usize, e: &Example) -> Result<(), String> {
    let mut store = ParamStore::new();
    Corpus::build(
        lexicon,
        [e.premise.as_slice(), e.hypothesis.as_slice()],
        &PregroupType::sentence(),
        ansatz,
        &mut store,
        cap,
    )
    .map(|_| ())
    .map_err(|err| err.to_string())
}

pub fn ingest(a: &IngestArgs) -> Result<IngestReport, CliError> {
    let lexicon = load_lexicon(&a.lexicon)?;
    let ansatz = AnsatzConfig { layers: a.layers };
    let (set, excluded) = data::load_sick_filtered(&a.sick, a.max_words, a.n, a.seed, |e| {
        usable(&lexicon, &ansatz, a.max_qubits, e)
    })?;
    let expanded = data::expand_bidirectional(&set)?;
    let splits = data::split(&expanded, data::DEFAULT_RATIOS, a.seed)?;
    fs::create_dir_all(&a.out)?;
    for (name, part) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let mut buf = Vec::new();
        data::write_jsonl(&mut buf, part)?;
        fs::write(a.out.join(format!("{name}.jsonl")), buf)?;
    }
    fs::write(a.out.join("excluded.txt"), exclusion_text(&excluded))?;
    let report = IngestReport {
        source: a.sick.clone(),
        n: a.n,
        max_words: a.max_words,
        max_qubits: a.max_qubits,
        seed: a.seed,
        ratios: data::DEFAULT_RATIOS,
        train: splits.train.len(),
        dev: splits.dev.len(),
        test: splits.test.len(),
        excluded: excluded.len(),
    };
    fs::write(a.out.join("ingest.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    log::info!(
        "ingested {} pairs: {}/{}/{} after expansion, {} rows excluded",
        a.n,
        report.train,
        report.dev,
        report.test,
        report.excluded
    );
    Ok(report)
}

fn exclusion_text(excluded: &[Exclusion]) -> String {
    let mut s = String::from("line\tid\treason\n");
    for x in excluded {
        s.push_str(&format!("{}\t{}\t{}\n", x.line, x.id, x.reason));
    }
    s
}

/// A full training run: inputs, outputs and the optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub lexicon: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    pub output: PathBuf,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Merge a config file (if any) with flag overrides.
    pub fn resolve(a: &TrainArgs) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &a.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<ExperimentConfig>(&text)
                    .map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?
            }
            None => {
                let need = |v: Option<&PathBuf>, flag: &str| {
                    v.cloned().ok_or_else(|| CliError::malformed(format!("--{flag} is required without --config")))
                };
                let model = a.model.ok_or_else(|| CliError::malformed("--model is required without --config"))?;
                let task = a.task.ok_or_else(|| CliError::malformed("--task is required without --config"))?;
                ExperimentConfig {
                    dataset: need(a.data.as_ref(), "data")?,
                    lexicon: need(a.lexicon.as_ref(), "lexicon")?,
                    embeddings: None,
                    output: need(a.out.as_ref(), "out")?,
                    train: TrainConfig::new(model, task),
                }
            }
        };
        if let Some(v) = &a.data {
            cfg.dataset = v.clone();
        }
        if let Some(v) = &a.lexicon {
            cfg.lexicon = v.clone();
        }
        if let Some(v) = &a.embeddings {
            cfg.embeddings = Some(v.clone());
        }
        if let Some(v) = &a.out {
            cfg.output = v.clone();
        }
        let t = &mut cfg.train;
        if let Some(v) = a.model {
            t.model = v;
        }
        if let Some(v) = a.task {
            t.task = v;
        }
        if let Some(v) = a.epochs {
            t.epochs = v;
        }
        if let Some(v) = a.seed {
            t.seed = v;
        }
        if let Some(v) = a.k {
            t.k = v;
        }
        if let Some(v) = a.layers {
            t.ansatz.layers = v;
        }
        if let Some(v) = a.lr_quantum {
            t.lr_quantum = v;
        }
        if let Some(v) = a.lr_classical {
            t.lr_classical = v;
        }
        if let Some(v) = a.fd_step {
            t.fd_step = v;
        }
        if let Some(v) = a.max_qubits {
            t.max_qubits = v;
        }
        if a.sequential {
            t.exec = Exec::Sequential;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<(), CliError> {
        let mut paths = vec![&self.dataset, &self.lexicon];
        if self.train.model == ModelKind::Cluster {
            match &self.embeddings {
                Some(p) => paths.push(p),
                None => return Err(CliError::malformed("the cluster model needs --embeddings")),
            }
        }
        for p in paths {
            if !p.exists() {
                return Err(CliError::malformed(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Fields of `summary.json`. Metrics that do not apply to the task are null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: ModelKind,
    pub task: Task,
    pub seed: u64,
    #[serde(rename = "P")]
    pub p: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub test_mse: Option<f64>,
    pub test_macro_f1: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub test_ce: Option<f64>,
    pub test_mi: Option<f64>,
    pub peak_igpp: Option<f64>,
    pub logl: Option<f64>,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub retries: usize,
}

impl Summary {
    pub fn from_log(log: &RunLog, epochs: usize, sizes: [usize; 3]) -> Summary {
        let t = log.test.as_ref();
        let finite = |v: f64| v.is_finite().then_some(v);
        Summary {
            model: log.model,
            task: log.task,
            seed: log.seed,
            p: log.params,
            epochs,
            best_epoch: log.best_epoch,
            n_train: sizes[0],
            n_dev: sizes[1],
            n_test: sizes[2],
            test_mse: t.and_then(|t| t.mse),
            test_macro_f1: t.and_then(|t| t.macro_f1),
            test_accuracy: t.and_then(|t| t.accuracy),
            test_ce: t.and_then(|t| t.ce),
            test_mi: t.map(|t| t.mi),
            peak_igpp: log.peak_igpp(),
            logl: t.and_then(|t| finite(t.logl)),
            aic: t.and_then(|t| finite(t.aic)),
            bic: t.and_then(|t| finite(t.bic)),
            retries: log.retries,
        }
    }
}

pub struct TrainOutcome {
    pub config: ExperimentConfig,
    pub log: RunLog,
    pub summary: Summary,
}

fn read_split(dir: &Path, name: &str) -> Result<Vec<Example>, CliError> {
    Ok(data::read_jsonl(&dir.join(format!("{name}.jsonl")))?)
}

pub fn train(a: &TrainArgs) -> Result<TrainOutcome, CliError> {
    let cfg = ExperimentConfig::resolve(a)?;
    cfg.check_paths()?;
    let lexicon = load_lexicon(&cfg.lexicon)?;
    let (tr, dv, te) = (
        read_split(&cfg.dataset, "train")?,
        read_split(&cfg.dataset, "dev")?,
        read_split(&cfg.dataset, "test")?,
    );
    let embeddings: Option<Embeddings> = match (&cfg.embeddings, cfg.train.model) {
        (Some(p), ModelKind::Cluster) => Some(load_embeddings(p)?),
        _ => None,
    };
    let t = &cfg.train;
    let mut store = ParamStore::new();
    let corpus = Corpus::from_examples(&lexicon, &[&tr, &dv, &te], &t.ansatz, &mut store, t.max_qubits)?;
    let pairs = SplitPairs::new(&corpus, &tr, &dv, &te, t.task)?;
    let mut model = Model::init(t, store, embeddings.as_ref())?;
    log::info!(
        "training {} on {} with P = {} over {} sentences",
        t.model.name(),
        t.task.name(),
        model.n_params(),
        corpus.len()
    );
    let log = training::train(&mut model, &corpus, &pairs, t)?;
    let summary = Summary::from_log(&log, t.epochs, [tr.len(), dv.len(), te.len()]);

    fs::create_dir_all(&cfg.output)?;
    fs::write(cfg.output.join("runlog.csv"), log.to_csv())?;
    fs::write(cfg.output.join("runlog.json"), serde_json::to_string_pretty(&log)? + "\n")?;
    fs::write(cfg.output.join("model.json"), serde_json::to_string(&model)? + "\n")?;
    fs::write(cfg.output.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(cfg.output.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    Ok(TrainOutcome {
        config: cfg,
        log,
        summary,
    })
}

pub fn eval(a: &EvalArgs) -> Result<training::TestMetrics, CliError> {
    let lexicon = load_lexicon(&a.lexicon)?;
    let mut model = Model::load(&a.model_file)?;
    let examples = read_split(&a.data, &a.split)?;
    let known = model.store.len();
    let corpus = Corpus::from_examples(&lexicon, &[&examples], &model.ansatz, &mut model.store, a.max_qubits)?;
    if model.store.len() != known {
        let unseen: Vec<String> = model.store.symbols[known..].iter().map(|k| k.word()).collect();
        return Err(TrainError::Unseen(unseen).into());
    }
    let pairs = corpus.pairs(&examples, model.task)?;
    if pairs.is_empty() {
        return Err(CliError {
            code: EXIT_INSUFFICIENT,
            message: format!("split {} is empty", a.split),
        });
    }
    let preds = training::predictions(&model, &corpus, &pairs, SampleMode::Eval, Exec::default())?;
    Ok(training::test_metrics(&preds, &pairs, model.n_params(), a.mi_bins))
}

/// One parsed line of a probe file.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbePair {
    pub a: String,
    pub b: String,
    pub gold: String,
}

pub fn read_probe_pairs(path: &Path) -> Result<Vec<ProbePair>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(CliError::malformed(format!(
                "{}:{}: expected 3 tab-separated columns, found {}",
                path.display(),
                i + 1,
                cols.len()
            )));
        }
        out.push(ProbePair {
            a: cols[0].to_string(),
            b: cols[1].to_string(),
            gold: cols[2].to_string(),
        });
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn format_prediction(p: &Prediction) -> String {
    match p {
        Prediction::Logits(_) => p.class().map(|c: Label| c.index().to_string()).unwrap_or_default(),
        Prediction::Score(s) => format!("{s:.3}"),
    }
}

/// Both phrases must reduce to the same type: sentence first, then noun.
pub fn probe(a: &ProbeArgs) -> Result<String, CliError> {
    let lexicon = load_lexicon(&a.lexicon)?;
    let model = Model::load(&a.model_file)?;
    let embeddings = a.embeddings.as_deref().map(load_embeddings).transpose()?;
    let pairs = read_probe_pairs(&a.pairs)?;
    let mut csv = String::from("A,B,Gold,Pred\n");
    for p in &pairs {
        let (ta, tb) = (data::tokenize(&p.a), data::tokenize(&p.b));
        let mut result = Err(TrainError::Config("no target type".into()));
        for target in [PregroupType::sentence(), PregroupType::noun()] {
            result = training::predict_pair(&model, &lexicon, &ta, &tb, &target, embeddings.as_ref(), a.max_qubits);
            if !matches!(result, Err(TrainError::Parse { .. })) {
                break;
            }
        }
        let pred = match result {
            Ok(pred) => format_prediction(&pred),
            Err(e) => {
                log::warn!("{} / {}: {e}", p.a, p.b);
                "ERR".to_string()
            }
        };
        csv.push_str(&format!("{},{},{},{}\n", csv_field(&p.a), csv_field(&p.b), csv_field(&p.gold), pred));
    }
    Ok(csv)
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "model",
    "task",
    "DoF",
    "relatedness_mse",
    "inference_macro_f1",
    "ce",
    "peak_igpp",
    "logl",
    "aic",
    "bic",
];

const MISSING: &str = "–";

/// Rows sorted by model name, then task and seed. Fields absent from a
/// summary render as `–`.
pub fn report(paths: &[PathBuf]) -> Result<(String, String), CliError> {
    if paths.is_empty() {
        return Err(CliError::malformed("report needs at least one summary"));
    }
    let mut rows: Vec<(String, String, u64, Vec<String>)> = Vec::new();
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))?;
        let s = |key: &str| -> String {
            match v.get(key) {
                Some(serde_json::Value::String(x)) => x.clone(),
                Some(serde_json::Value::Number(n)) => match n.as_u64() {
                    Some(u) => u.to_string(),
                    None => format!("{:.4e}", n.as_f64().unwrap_or(f64::NAN)),
                },
                _ => MISSING.to_string(),
            }
        };
        let cells = vec![
            s("model"),
            s("task"),
            s("P"),
            s("test_mse"),
            s("test_macro_f1"),
            s("test_ce"),
            s("peak_igpp"),
            s("logl"),
            s("aic"),
            s("bic"),
        ];
        let seed = v.get("seed").and_then(serde_json::Value::as_u64).unwrap_or(0);
        rows.push((cells[0].clone(), cells[1].clone(), seed, cells));
    }
    rows.sort_by(|a, b| (&a.0, &a.1, a.2).cmp(&(&b.0, &b.1, b.2)));

    let mut csv = REPORT_COLUMNS.join(",") + "\n";
    for (_, _, _, cells) in &rows {
        csv.push_str(&cells.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    let widths: Vec<usize> = (0..REPORT_COLUMNS.len())
        .map(|i| {
            rows.iter()
                .map(|r| r.3[i].chars().count())
                .chain([REPORT_COLUMNS[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut text = line(REPORT_COLUMNS.to_vec());
    for (_, _, _, cells) in &rows {
        text.push_str(&line(cells.iter().map(String::as_str).collect()));
    }
    Ok((csv, text))
}
