//! Sequential vs. data-parallel throughput of the hot loops.

use std::hint::black_box;

use abbrexp::corpus::{target_tags, ExampleSource, TrainingExample, DEFAULT_MAX_LEN};
use abbrexp::morphdict::{AbbrevTable, MorphDict};
use abbrexp::nn::{ModelConfig, ModelParams};
use abbrexp::par::Execution;
use abbrexp::synth::{generate_corpus, GrammarSpec};
use abbrexp::tagset::{TagVocab, VocabKind};
use abbrexp::train::{evaluate, group_gradient};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

struct Fixture {
    sentences: Vec<abbrexp::corpus::Sentence>,
    dict: MorphDict,
    abbrevs: AbbrevTable,
    input: TagVocab,
    output: TagVocab,
    examples: Vec<TrainingExample>,
    params: ModelParams,
}

fn fixture() -> Fixture {
    let spec = GrammarSpec::default_spec();
    let corpus = generate_corpus(&spec, 2000).unwrap();
    let input = TagVocab::build(
        corpus
            .sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.tag.to_string())),
        VocabKind::Input,
    )
    .unwrap();
    let output = TagVocab::build(
        target_tags(
            &corpus.sentences,
            &corpus.abbrevs,
            &corpus.dict,
            DEFAULT_MAX_LEN,
        ),
        VocabKind::Output,
    )
    .unwrap();
    let (examples, _) = ExampleSource {
        abbrevs: &corpus.abbrevs,
        dict: &corpus.dict,
        input_vocab: &input,
        output_vocab: &output,
        max_len: DEFAULT_MAX_LEN,
    }
    .generate(&corpus.sentences, Execution::Sequential);
    let params = ModelParams::init(&ModelConfig::new(input.len(), output.len())).unwrap();
    Fixture {
        sentences: corpus.sentences,
        dict: corpus.dict,
        abbrevs: corpus.abbrevs,
        input,
        output,
        examples,
        params,
    }
}

fn benches(c: &mut Criterion) {
    let f = fixture();

    let mut group = c.benchmark_group("group_gradient");
    group.sample_size(10);
    let batch: Vec<&TrainingExample> = f.examples.iter().take(32).collect();
    let seeds: Vec<u64> = (0..batch.len() as u64).collect();
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 32), &exec, |b, &exec| {
            b.iter(|| group_gradient(black_box(&f.params), &batch, &seeds, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    let subset = &f.examples[..256];
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, subset.len()), &exec, |b, &exec| {
            b.iter(|| evaluate(black_box(&f.params), subset, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("generate_examples");
    let source = ExampleSource {
        abbrevs: &f.abbrevs,
        dict: &f.dict,
        input_vocab: &f.input,
        output_vocab: &f.output,
        max_len: DEFAULT_MAX_LEN,
    };
    for (name, exec) in MODES {
        group.bench_with_input(
            BenchmarkId::new(name, f.sentences.len()),
            &exec,
            |b, &exec| b.iter(|| source.generate(black_box(&f.sentences), exec)),
        );
    }
    group.finish();
}

criterion_group!(throughput, benches);
criterion_main!(throughput);
