//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use abbrexp::corpus::{
    generate_examples, read_corpus, split_train_validation, target_tags, write_corpus, Sentence,
    Strictness, Token, TrainingExample, DEFAULT_MAX_LEN,
};
use abbrexp::eval::{error_analysis, evaluate_baseline, evaluate_network, fit_baseline};
use abbrexp::morphdict::{AbbrevId, AbbrevTable, MorphDict};
use abbrexp::nn::{gradient_check, load_model, save_model, ModelConfig, ModelParams};
use abbrexp::par::Execution;
use abbrexp::synth::{generate_corpus, oracle_tag, GrammarSpec};
use abbrexp::tagset::{
    format_tag, parse_tag, AttributeSchema, Tag, TagVocab, VocabKind, MASK_TOKEN,
};
use abbrexp::train::{train, TrainOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_abbrexp"))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = bin()
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "{} exited with {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

const LEXICON: [&str; 8] = [
    "--dict",
    "dict.tsv",
    "--abbrevs",
    "abbrevs.tsv",
    "--input-vocab",
    "in.voc",
    "--output-vocab",
    "out.voc",
];

fn with_lexicon<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend(LEXICON);
    v
}

/// Synthetic data shared by criteria 4 and 7.
struct Trained {
    dir: TempDir,
    spec: GrammarSpec,
    held_out: Vec<Sentence>,
}

fn tags_of(sentences: &[Sentence]) -> impl Iterator<Item = String> + '_ {
    sentences
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.tag.to_string()))
}

// 1 -------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    println!("      reference figures on the original corpora, not reproducible without them:");
    println!("        sentences train / validation / evaluation: 521,251 / 5,265 / 3,491");
    println!("        network accuracy train / validation / evaluation: 84.5% / 85.7% / 74.2%");
    println!("        baseline accuracy train / validation / evaluation: 42.8% / 42.6% / 40.3%");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "synth",
            "--out",
            "train",
            "--sentences",
            "600",
            "--seed",
            "21",
        ],
        vec![
            "synth",
            "--out",
            "test",
            "--sentences",
            "200",
            "--seed",
            "22",
        ],
    ];
    for s in &steps {
        if let Err(e) = run_cli(d, s) {
            return outcome(false, e);
        }
    }
    for f in ["dict.tsv", "abbrevs.tsv"] {
        fs::copy(d.join("train").join(f), d.join(f)).unwrap();
    }
    let small = ["--hidden", "16", "--embedding-dim", "8", "--fc-units", "16"];
    let mut train_args = with_lexicon(&[
        "train",
        "--corpus",
        "train/corpus.txt",
        "--model",
        "m.bin",
        "--epochs",
        "2",
    ]);
    train_args.extend(small);
    let pipeline: Vec<Vec<&str>> = vec![
        with_lexicon(&["vocab", "--corpus", "train/corpus.txt"]),
        with_lexicon(&[
            "gen",
            "--corpus",
            "train/corpus.txt",
            "--out",
            "examples.tsv",
        ]),
        train_args,
        with_lexicon(&[
            "baseline",
            "--corpus",
            "train/corpus.txt",
            "--out",
            "baseline.tsv",
        ]),
        with_lexicon(&[
            "eval",
            "--corpus",
            "test/corpus.txt",
            "--model",
            "m.bin",
            "--baseline",
            "baseline.tsv",
            "--out",
            "report.tsv",
        ]),
    ];
    for s in &pipeline {
        if let Err(e) = run_cli(d, s) {
            return outcome(false, e);
        }
    }
    let mut marked = read_corpus(
        BufReader::new(fs::File::open(d.join("test/corpus.txt")).unwrap()),
        Strictness::Strict,
    )
    .unwrap()
    .sentences;
    let spec = GrammarSpec::default_spec();
    let (marked, _) = mark(&mut marked, &spec, 20);
    write_file(&d.join("marked.txt"), &marked);
    let expanded = match run_cli(
        d,
        &with_lexicon(&["expand", "--corpus", "marked.txt", "--model", "m.bin"]),
    ) {
        Ok(out) => out,
        Err(e) => return outcome(false, e),
    };
    let produced = [
        "in.voc",
        "out.voc",
        "examples.tsv",
        "m.bin",
        "m.bin.history.tsv",
        "baseline.tsv",
        "report.tsv",
    ]
    .iter()
    .all(|f| d.join(f).is_file());
    outcome(
        produced && expanded.lines().count() == marked.len(),
        "synth, vocab, gen, train, baseline, eval, expand all ran on files in the documented formats; figures above are out-of-repo targets",
    )
}

// 2 -------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut worst: f64 = 0.0;
    let mut params_checked = 0;
    let configs = 8;
    for _ in 0..configs {
        let config = ModelConfig {
            embedding_dim: rng.gen_range(1..=4),
            recurrent_layers: rng.gen_range(1..=2),
            hidden_per_direction: rng.gen_range(1..=5),
            fc_units: rng.gen_range(1..=6),
            seed: rng.gen(),
            ..ModelConfig::new(rng.gen_range(2..=10), rng.gen_range(2..=6))
        };
        let len = rng.gen_range(1..=8);
        let params = ModelParams::init(&config).unwrap();
        let input: Vec<usize> = (0..len)
            .map(|_| rng.gen_range(0..config.input_vocab_size))
            .collect();
        let target = rng.gen_range(0..config.output_vocab_size);
        let masks = params.sample_masks(len, &mut rng);
        let report = gradient_check(&params, &input, target, &masks, 1e-5).unwrap();
        worst = worst.max(report.max_relative_error);
        params_checked += report.checked;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "{configs} random configs, {params_checked} parameters, max relative error {worst:.2e} (< 1e-4), {:.1}s (< 60s)",
            elapsed.as_secs_f64()
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn synthetic_examples(
    spec: &GrammarSpec,
    sentences: usize,
) -> (
    Vec<Sentence>,
    MorphDict,
    AbbrevTable,
    TagVocab,
    TagVocab,
    Vec<TrainingExample>,
) {
    let c = generate_corpus(spec, sentences).unwrap();
    let input = TagVocab::build(tags_of(&c.sentences), VocabKind::Input).unwrap();
    let output = TagVocab::build(
        target_tags(&c.sentences, &c.abbrevs, &c.dict, DEFAULT_MAX_LEN),
        VocabKind::Output,
    )
    .unwrap();
    let (ex, _) = generate_examples(
        &c.sentences,
        &c.abbrevs,
        &c.dict,
        &input,
        &output,
        DEFAULT_MAX_LEN,
    );
    (c.sentences, c.dict, c.abbrevs, input, output, ex)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let spec = GrammarSpec::default_spec().with_seed(0xC3);
    let (_, _, _, input, output, ex) = synthetic_examples(&spec, 200);
    let train_set = &ex[..50];
    let valid_set = &ex[50..70];
    let config = ModelConfig::new(input.len(), output.len());
    let options = TrainOptions {
        max_epochs: 200,
        seed: 3,
        ..TrainOptions::default()
    };
    let (_, history) = train(&config, &options, train_set, valid_set).unwrap();
    let (epoch, best) = history
        .epochs
        .iter()
        .map(|e| (e.epoch, e.train_accuracy))
        .find(|&(_, a)| a >= 0.99)
        .unwrap_or((
            0,
            history
                .epochs
                .iter()
                .map(|e| e.train_accuracy)
                .fold(0.0, f64::max),
        ));
    let elapsed = start.elapsed();
    let reached = epoch > 0;
    outcome(
        reached && elapsed < Duration::from_secs(300),
        if reached {
            format!(
                "default-shaped model, 50 examples: training accuracy {best:.3} (>= 0.99) first at epoch {epoch} of 200, {:.1}s (< 300s)",
                elapsed.as_secs_f64()
            )
        } else {
            format!("training accuracy peaked at {best:.3} within 200 epochs")
        },
    )
}

// 4 -------------------------------------------------------------------------

fn criterion_4() -> (Outcome, Option<Trained>) {
    let start = Instant::now();
    let spec = GrammarSpec::default_spec();
    let (_, dict, abbrevs, input, output, ex) = synthetic_examples(&spec.with_seed(0xC4), 9000);
    if ex.len() < 5500 {
        return (
            outcome(false, format!("only {} examples generated", ex.len())),
            None,
        );
    }
    let (train_set, valid_set) = split_train_validation(&ex[..5500], 500.0 / 5500.0, 4).unwrap();

    let eval_corpus = generate_corpus(&spec.with_seed(0xE4), 2000).unwrap();
    let (eval_ex, skips) = generate_examples(
        &eval_corpus.sentences,
        &abbrevs,
        &dict,
        &input,
        &output,
        DEFAULT_MAX_LEN,
    );
    if eval_ex.len() < 1000 || skips.skipped_sentences() > 0 {
        return (
            outcome(false, "evaluation corpus too small or had skips"),
            None,
        );
    }
    let eval_set = &eval_ex[..1000];

    let config = ModelConfig::new(input.len(), output.len());
    let options = TrainOptions {
        max_epochs: 8,
        seed: 4,
        ..TrainOptions::default()
    };
    let (params, _) = train(&config, &options, &train_set, &valid_set).unwrap();
    let schema = spec.schema();
    let net = evaluate_network(&params, eval_set, &output, &schema, Execution::default())
        .unwrap()
        .accuracy()
        .unwrap();
    let baseline = fit_baseline(&train_set, &output).unwrap();
    let base = evaluate_baseline(&baseline, eval_set, &output, &schema)
        .accuracy()
        .unwrap();
    let expected = spec.expected_baseline_accuracy();
    let elapsed = start.elapsed();
    let pass = net >= 0.95
        && (base - expected).abs() <= 0.03
        && net - base >= 0.20
        && elapsed < Duration::from_secs(900)
        && train_set.len() == 5000
        && valid_set.len() == 500;

    // artifacts for the expansion criterion
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut buf = Vec::new();
    save_model(&params, &input, &output, &mut buf).unwrap();
    fs::write(d.join("m.bin"), buf).unwrap();
    let put = |name: &str, f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = Vec::new();
        f(&mut b);
        fs::write(d.join(name), b).unwrap();
    };
    put("in.voc", &|b| input.write(b).unwrap());
    put("out.voc", &|b| output.write(b).unwrap());
    put("dict.tsv", &|b| dict.write(b).unwrap());
    put("abbrevs.tsv", &|b| abbrevs.write(b).unwrap());

    let detail = format!(
        "5000/500/1000 examples: network {:.1}% (>= 95%), baseline {:.1}% vs analytic {:.1}% (within 3 points), margin {:.1} points (>= 20), {:.0}s (< 900s)",
        100.0 * net,
        100.0 * base,
        100.0 * expected,
        100.0 * (net - base),
        elapsed.as_secs_f64()
    );
    // held-out sentences for expansion come from yet another seed
    let held_out = generate_corpus(&spec.with_seed(0x7E), 800)
        .unwrap()
        .sentences;
    (
        outcome(pass, detail),
        Some(Trained {
            dir,
            spec,
            held_out,
        }),
    )
}

// 5 -------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    if let Err(e) = run_cli(
        d,
        &["synth", "--out", "s", "--sentences", "300", "--seed", "55"],
    ) {
        return outcome(false, e);
    }
    for f in ["dict.tsv", "abbrevs.tsv"] {
        fs::copy(d.join("s").join(f), d.join(f)).unwrap();
    }
    if let Err(e) = run_cli(d, &with_lexicon(&["vocab", "--corpus", "s/corpus.txt"])) {
        return outcome(false, e);
    }
    for model in ["a.bin", "b.bin"] {
        let args = with_lexicon(&[
            "train",
            "--corpus",
            "s/corpus.txt",
            "--model",
            model,
            "--epochs",
            "3",
            "--seed",
            "17",
        ]);
        if let Err(e) = run_cli(d, &args) {
            return outcome(false, e);
        }
    }
    let history_a = fs::read(d.join("a.bin.history.tsv")).unwrap();
    let history_b = fs::read(d.join("b.bin.history.tsv")).unwrap();
    let load = |name: &str| {
        load_model(fs::File::open(d.join(name)).unwrap())
            .unwrap()
            .params
    };
    let (a, b) = (load("a.bin"), load("b.bin"));
    let vocab = a.config().input_vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let mut identical = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=DEFAULT_MAX_LEN);
        let mut input: Vec<usize> = (0..len).map(|_| rng.gen_range(1..vocab)).collect();
        input[rng.gen_range(0..len)] = 0;
        let (ka, pa) = a.predict(&input).unwrap();
        let (kb, pb) = b.predict(&input).unwrap();
        let same = ka == kb && pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits());
        identical += same as usize;
    }
    outcome(
        history_a == history_b && identical == 1000,
        format!(
            "two seeded train runs: history files {}, predictions identical on {identical}/1000 random inputs",
            if history_a == history_b { "byte-identical" } else { "differ" }
        ),
    )
}

// 6 -------------------------------------------------------------------------

const SEGMENT_CHARS: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', 'q', 'ą', 'ę', 'ł', 'ż', '0', '1', '9', '_', '-', '.', '<', '>',
    '+',
];

fn random_segment(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(1..=6);
    (0..len)
        .map(|_| *SEGMENT_CHARS.choose(rng).unwrap())
        .collect()
}

fn random_tag(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=5);
    (0..n)
        .map(|_| random_segment(rng))
        .collect::<Vec<_>>()
        .join(":")
}

fn prop_tag_round_trip(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let n = 10_000;
    for _ in 0..n {
        let s = random_tag(rng);
        let tag = parse_tag(&s).map_err(|e| format!("{s}: {e}"))?;
        if format_tag(&tag) != s || s.parse::<Tag>().map(|t| t != tag).unwrap_or(true) {
            return Err(format!("round trip changed {s:?}"));
        }
    }
    Ok(format!("{n} tags round-tripped"))
}

fn prop_vocab_bijection(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let cases = 300;
    for _ in 0..cases {
        let mut tags: Vec<String> = (0..rng.gen_range(1..60)).map(|_| random_tag(rng)).collect();
        for kind in [VocabKind::Input, VocabKind::Output] {
            let v = TagVocab::build(tags.iter().cloned(), kind).map_err(|e| e.to_string())?;
            for (i, e) in v.entries().iter().enumerate() {
                if v.encode(e).ok() != Some(i) || v.decode(i) != Some(e.as_str()) {
                    return Err(format!("entry {e:?} does not round-trip"));
                }
            }
            if v.encode("unseen:tag:!").is_ok() {
                return Err("unknown tag was encoded".into());
            }
            let mut shuffled = tags.clone();
            shuffled.shuffle(rng);
            let w = TagVocab::build(shuffled, kind).map_err(|e| e.to_string())?;
            if w.entries() != v.entries() {
                return Err("vocabulary depends on input order".into());
            }
        }
        tags.clear();
    }
    Ok(format!("{cases} multisets, both vocabulary kinds"))
}

fn prop_corpus_round_trip(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let cases = 300;
    for _ in 0..cases {
        let sentences: Vec<Sentence> = (0..rng.gen_range(0..8))
            .map(|_| Sentence {
                tokens: (0..rng.gen_range(1..12))
                    .map(|_| {
                        let tag = parse_tag(&random_tag(rng)).unwrap();
                        Token::new(&random_segment(rng), &random_segment(rng), tag)
                    })
                    .collect(),
            })
            .collect();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &sentences).map_err(|e| e.to_string())?;
        let back = read_corpus(&buf[..], Strictness::Strict).map_err(|e| e.to_string())?;
        if back.sentences != sentences {
            return Err("corpus changed after write/read".into());
        }
    }
    Ok(format!("{cases} random corpora"))
}

fn prop_model_save_load(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let cases = 10;
    for _ in 0..cases {
        let config = ModelConfig {
            embedding_dim: rng.gen_range(1..=8),
            recurrent_layers: rng.gen_range(1..=2),
            hidden_per_direction: rng.gen_range(1..=8),
            fc_units: rng.gen_range(1..=8),
            seed: rng.gen(),
            ..ModelConfig::new(6, 4)
        };
        let params = ModelParams::init(&config).unwrap();
        let input_vocab = TagVocab::build(["a", "b", "c", "d", "e"], VocabKind::Input).unwrap();
        let output_vocab = TagVocab::build(["w", "x", "y", "z"], VocabKind::Output).unwrap();
        let mut buf = Vec::new();
        save_model(&params, &input_vocab, &output_vocab, &mut buf).map_err(|e| e.to_string())?;
        let loaded = load_model(&buf[..]).map_err(|e| e.to_string())?;
        loaded
            .check_vocabs(&input_vocab, &output_vocab)
            .map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let input: Vec<usize> = (0..rng.gen_range(1..10))
                .map(|_| rng.gen_range(0..6))
                .collect();
            let (_, p) = params.predict(&input).unwrap();
            let (_, q) = loaded.params.predict(&input).unwrap();
            if p.iter().zip(&q).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err("prediction changed after save/load".into());
            }
        }
    }
    Ok(format!("{cases} models x 100 inputs bitwise identical"))
}

fn prop_split_partition(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let cases = 500;
    for _ in 0..cases {
        let n = rng.gen_range(1..200);
        let fraction = rng.gen_range(0.01..0.99);
        let items: Vec<usize> = (0..n).collect();
        let (train, valid) =
            split_train_validation(&items, fraction, rng.gen()).map_err(|e| e.to_string())?;
        let mut all: Vec<usize> = train.iter().chain(&valid).copied().collect();
        all.sort_unstable();
        if all != items {
            return Err(format!("n={n} fraction={fraction}: not a partition"));
        }
    }
    Ok(format!("{cases} random splits"))
}

fn prop_baseline_mode_optimality() -> Result<String, String> {
    // every corpus of up to 4 examples over 2 abbreviations x 3 tags
    let output = TagVocab::build(["t0", "t1", "t2"], VocabKind::Output).unwrap();
    let schema = AttributeSchema::default();
    let mut corpora = 0;
    for n in 1..=4u32 {
        for code in 0..6usize.pow(n) {
            let mut c = code;
            let examples: Vec<TrainingExample> = (0..n)
                .map(|_| {
                    let cell = c % 6;
                    c /= 6;
                    TrainingExample {
                        input_indices: vec![0],
                        mask_position: 0,
                        target_index: cell % 3,
                        abbrev_id: AbbrevId((cell / 3) as u32),
                    }
                })
                .collect();
            let model = fit_baseline(&examples, &output).map_err(|e| e.to_string())?;
            let got = evaluate_baseline(&model, &examples, &output, &schema)
                .overall
                .correct;
            let mut best = 0;
            for assign in 0..9usize {
                let pick = [assign % 3, assign / 3];
                let correct = examples
                    .iter()
                    .filter(|e| pick[e.abbrev_id.0 as usize] == e.target_index)
                    .count();
                best = best.max(correct);
            }
            if got != best {
                return Err(format!(
                    "corpus {code} of size {n}: baseline {got}, optimum {best}"
                ));
            }
            corpora += 1;
        }
    }
    Ok(format!("{corpora} exhaustive corpora"))
}

fn prop_error_analysis() -> Result<String, String> {
    let mut tags = Vec::new();
    for n in ["sg", "pl"] {
        for c in ["nom", "gen", "acc"] {
            for g in ["m3", "f"] {
                tags.push(format!("subst:{n}:{c}:{g}"));
                tags.push(format!("adj:{n}:{c}:{g}:pos"));
            }
        }
    }
    tags.push("adv".into());
    let schema = AttributeSchema::default();
    let parsed: Vec<Tag> = tags.iter().map(|t| parse_tag(t).unwrap()).collect();
    let mut pairs = 0;
    for a in &parsed {
        for b in &parsed {
            let counts = error_analysis([(a, b)], &schema);
            // positional reading of the constructed tags
            let seg = |t: &Tag, i: usize| t.attributes().get(i).cloned();
            let diff = |i| seg(a, i) != seg(b, i);
            let (dn, dc, dg) = (diff(0), diff(1), diff(2));
            let wrong = a != b;
            let expected = (
                wrong as usize,
                (wrong && dn) as usize,
                (wrong && dc) as usize,
                (wrong && dg) as usize,
                (wrong && !dn && !dc && !dg) as usize,
                (wrong && dn && !dc && !dg) as usize,
                (wrong && !dn && dc && !dg) as usize,
                (wrong && !dn && !dc && dg) as usize,
            );
            let got = (
                counts.errors,
                counts.number,
                counts.case,
                counts.gender,
                counts.other,
                counts.only_number,
                counts.only_case,
                counts.only_gender,
            );
            if got != expected {
                return Err(format!("{a} vs {b}: got {got:?}, expected {expected:?}"));
            }
            pairs += 1;
        }
    }
    Ok(format!("{pairs} constructed pairs"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
    let results: Vec<(&str, Result<String, String>)> = vec![
        ("tag round trip", prop_tag_round_trip(&mut rng)),
        ("vocabulary bijection", prop_vocab_bijection(&mut rng)),
        ("corpus round trip", prop_corpus_round_trip(&mut rng)),
        ("model save/load", prop_model_save_load(&mut rng)),
        ("split partition", prop_split_partition(&mut rng)),
        ("baseline mode optimality", prop_baseline_mode_optimality()),
        ("error-analysis categories", prop_error_analysis()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in results {
        match r {
            Ok(d) => parts.push(format!("{name}: {d}")),
            Err(e) => {
                pass = false;
                parts.push(format!("{name} FAILED: {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

// 7 -------------------------------------------------------------------------

/// Replaces the first abbreviatable noun of up to `limit` sentences with its
/// abbreviation marked `<MASK>`; returns those sentences and the oracle tags
/// with the lexemes they inflect.
fn mark(
    sentences: &mut [Sentence],
    spec: &GrammarSpec,
    limit: usize,
) -> (Vec<Sentence>, Vec<(String, String)>) {
    let mut marked = Vec::new();
    let mut truth = Vec::new();
    for s in sentences.iter() {
        if marked.len() == limit {
            break;
        }
        let Some((pos, tag)) =
            (0..s.len()).find_map(|i| oracle_tag(spec, s, i).ok().map(|t| (i, t)))
        else {
            continue;
        };
        let lexeme = s.tokens[pos].lexeme.clone();
        let abbrev = spec
            .abbreviatable_noun(&lexeme)
            .unwrap()
            .abbrev
            .clone()
            .unwrap();
        let mut m = s.clone();
        m.tokens[pos] = Token::new(
            &format!("{abbrev}."),
            &abbrev,
            parse_tag(MASK_TOKEN).unwrap(),
        );
        // the oracle sees only the context, never the masked token's tag
        let again = oracle_tag(spec, &m, pos).unwrap();
        assert_eq!(again, tag);
        marked.push(m);
        truth.push((lexeme, tag.to_string()));
    }
    (marked, truth)
}

fn write_file(path: &Path, sentences: &[Sentence]) {
    let mut buf = Vec::new();
    write_corpus(&mut buf, sentences).unwrap();
    fs::write(path, buf).unwrap();
}

fn criterion_7(trained: Option<Trained>) -> Outcome {
    let Some(mut t) = trained else {
        return outcome(false, "no model: criterion 4 did not produce one");
    };
    let d = t.dir.path();
    let dict =
        MorphDict::read(BufReader::new(fs::File::open(d.join("dict.tsv")).unwrap())).unwrap();
    let (marked, truth) = mark(&mut t.held_out, &t.spec, 500);
    write_file(&d.join("marked.txt"), &marked);
    let out = match run_cli(
        d,
        &with_lexicon(&["expand", "--corpus", "marked.txt", "--model", "m.bin"]),
    ) {
        Ok(o) => o,
        Err(e) => return outcome(false, e),
    };
    let dictionary_forms: BTreeMap<&str, ()> = dict
        .lexemes()
        .flat_map(|l| dict.inflected_forms(l).into_iter().map(|(_, f)| (f, ())))
        .collect();
    let lines: Vec<&str> = out.lines().collect();
    if lines.len() != marked.len() {
        return outcome(
            false,
            format!("{} outputs for {} sentences", lines.len(), marked.len()),
        );
    }
    let mut correct = 0;
    let mut outside = 0;
    for (line, (lexeme, tag)) in lines.iter().zip(&truth) {
        let form = line.split('\t').next().unwrap_or("");
        if !dictionary_forms.contains_key(form) {
            outside += 1;
        }
        if dict.forms(lexeme, tag).iter().any(|f| f == form) {
            correct += 1;
        }
    }
    let rate = correct as f64 / marked.len() as f64;
    outcome(
        rate >= 0.95 && outside == 0,
        format!(
            "{correct}/{} held-out sentences expanded to the oracle form ({:.1}% >= 95%), {outside} forms outside the dictionary",
            marked.len(),
            100.0 * rate
        ),
    )
}

fn report(n: usize, title: &str, start: Instant, o: &Outcome) {
    println!(
        "{} criterion {n} ({title}) [{:.1}s]: {}",
        if o.pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        o.detail
    );
}

fn main() -> ExitCode {
    // libtest-style filtering: `cargo test -- <name>` runs nothing here
    // unless the name matches.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    println!("acceptance suite");
    let mut outcomes = Vec::new();

    let t = Instant::now();
    let o = criterion_1();
    report(1, "pipeline on user-format files", t, &o);
    outcomes.push(o.pass);

    let t = Instant::now();
    let o = criterion_2();
    report(2, "gradient check", t, &o);
    outcomes.push(o.pass);

    let t = Instant::now();
    let o = criterion_3();
    report(3, "overfit oracle", t, &o);
    outcomes.push(o.pass);

    let t = Instant::now();
    let (o, trained) = criterion_4();
    report(4, "synthetic end-to-end", t, &o);
    outcomes.push(o.pass);

    let t = Instant::now();
    let o = criterion_5();
    report(5, "determinism", t, &o);
    outcomes.push(o.pass);

    let t = Instant::now();
    let o = criterion_6();
    report(6, "property suites", t, &o);
    outcomes.push(o.pass);

    let t = Instant::now();
    let o = criterion_7(trained);
    report(7, "expansion contract", t, &o);
    outcomes.push(o.pass);

    let passed = outcomes.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    if passed == outcomes.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
