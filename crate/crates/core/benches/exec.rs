//! Sequential vs parallel execution of the per-pair forward pass and the
//! sparse finite-difference gradient on a 100-pair fixture subset.

use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qnli_core::circuit::{AnsatzConfig, ParamStore};
use qnli_core::data;
use qnli_core::models::{load_embeddings, ModelKind, SampleMode, Task};
use qnli_core::pregroup::{Lexicon, PregroupType};
use qnli_core::training::{self, Corpus, Model, Pair, TrainConfig};
use qnli_core::Exec;

fn setup(kind: ModelKind) -> (Model, Corpus, Vec<Pair>) {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let lexicon = Lexicon::load(&root.join("data/lexicon.txt")).unwrap();
    let embeddings = load_embeddings(&root.join("data/embeddings.txt")).unwrap();
    let ansatz = AnsatzConfig::default();
    let (set, _) = data::load_sick_filtered(&root.join("data/sick_fixture.tsv"), 11, 100, 0, |e| {
        let mut store = ParamStore::new();
        Corpus::build(&lexicon, [e.premise.as_slice(), e.hypothesis.as_slice()], &PregroupType::sentence(), &ansatz, &mut store, 16)
            .map(|_| ())
            .map_err(|x| x.to_string())
    })
    .unwrap();
    let examples = data::expand_bidirectional(&set).unwrap().examples;
    let cfg = TrainConfig::new(kind, Task::Inference);
    let mut store = ParamStore::new();
    let corpus = Corpus::from_examples(&lexicon, &[&examples], &cfg.ansatz, &mut store, cfg.max_qubits).unwrap();
    let pairs = corpus.pairs(&examples, cfg.task).unwrap();
    let model = Model::init(&cfg, store, Some(&embeddings)).unwrap();
    (model, corpus, pairs)
}

fn bench(c: &mut Criterion) {
    let modes = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];
    for kind in [ModelKind::Kl, ModelKind::Cluster] {
        let (model, corpus, pairs) = setup(kind);
        let mut g = c.benchmark_group(format!("{}_forward", kind.name()));
        for (name, exec) in modes {
            g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
                b.iter(|| training::predictions(black_box(&model), &corpus, &pairs, SampleMode::Eval, exec).unwrap())
            });
        }
        g.finish();

        let mut g = c.benchmark_group(format!("{}_gradient", kind.name()));
        g.sample_size(10);
        for (name, exec) in modes {
            g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
                b.iter(|| training::batch_gradient(black_box(&model), &corpus, &pairs, SampleMode::Train(1), 1e-3, exec).unwrap())
            });
        }
        g.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
