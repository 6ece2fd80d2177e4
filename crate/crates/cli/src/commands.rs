use std::io::Write;
use std::path::Path;
use std::time::Instant;

use abbrexp::corpus::{
    split_train_validation, target_tags, write_corpus, write_examples, ExampleSource, Sentence,
    SkipReport, TrainingExample,
};
use abbrexp::eval::{evaluate_baseline, evaluate_network, fit_baseline, BaselineModel};
use abbrexp::morphdict::{AbbrevTable, DictError, MorphDict};
use abbrexp::nn::{gradient_check, save_model, ModelConfig, ModelParams};
use abbrexp::par::Execution;
use abbrexp::synth::{generate_corpus, GrammarSpec};
use abbrexp::tagset::{parse_tag, TagVocab, VocabKind, MASK_TOKEN};
use abbrexp::train::{train_with_progress, TrainOptions};
use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::files::{self, check_paths, write_atomic};
use crate::{
    BaselineArgs, EvalArgs, ExpandArgs, GenArgs, GradcheckArgs, Lexicon, NumericFailure, SynthArgs,
    TrainArgs, VocabArgs, Vocabs,
};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const GRADCHECK_EPSILON: f64 = 1e-5;

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

struct Resources {
    dict: MorphDict,
    abbrevs: AbbrevTable,
}

fn load_lexicon(l: &Lexicon) -> Result<Resources> {
    Ok(Resources {
        dict: files::dict(&l.dict)?,
        abbrevs: files::abbrevs(&l.abbrevs)?,
    })
}

fn load_vocabs(v: &Vocabs) -> Result<(TagVocab, TagVocab)> {
    Ok((
        files::vocab(&v.input_vocab, VocabKind::Input)?,
        files::vocab(&v.output_vocab, VocabKind::Output)?,
    ))
}

fn examples(
    sentences: &[Sentence],
    res: &Resources,
    input: &TagVocab,
    output: &TagVocab,
    max_len: usize,
    exec: Execution,
) -> (Vec<TrainingExample>, SkipReport) {
    ExampleSource {
        abbrevs: &res.abbrevs,
        dict: &res.dict,
        input_vocab: input,
        output_vocab: output,
        max_len,
    }
    .generate(sentences, exec)
}

fn report_skips(what: &str, r: &SkipReport) {
    eprintln!(
        "{what}: {} sentences, {} with abbreviatable words, {} examples; skipped {} too long, {} with unknown input tags, {} with unknown target tags; {} dictionary misses",
        r.sentences,
        r.sentences_with_matches,
        r.examples,
        r.long_sentences,
        r.unknown_input_tag_sentences,
        r.unknown_target_tag_sentences,
        r.dictionary_misses
    );
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if let Some(g) = &a.grammar {
        check_paths(&[g], &[])?;
    }
    if !a.out.is_dir() {
        std::fs::create_dir_all(&a.out)
            .with_context(|| format!("cannot create {}", a.out.display()))?;
    }
    let mut spec = match &a.grammar {
        Some(g) => {
            GrammarSpec::read(files::open(g)?).with_context(|| format!("in {}", g.display()))?
        }
        None => GrammarSpec::default_spec(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let corpus = generate_corpus(&spec, a.sentences)?;
    let tokens: usize = corpus.sentences.iter().map(Sentence::len).sum();
    write_atomic(&a.out.join("corpus.txt"), |w| {
        write_corpus(w, &corpus.sentences)
    })?;
    write_atomic(&a.out.join("dict.tsv"), |w| corpus.dict.write(w))?;
    write_atomic(&a.out.join("abbrevs.tsv"), |w| corpus.abbrevs.write(w))?;
    println!(
        "wrote {} sentences ({tokens} tokens), {} dictionary entries, {} abbreviations to {}",
        corpus.sentences.len(),
        corpus.dict.len(),
        corpus.abbrevs.len(),
        a.out.display()
    );
    Ok(())
}

pub fn vocab(a: &VocabArgs) -> Result<()> {
    check_paths(
        &[&a.corpus, &a.lexicon.dict, &a.lexicon.abbrevs],
        &[&a.vocabs.input_vocab, &a.vocabs.output_vocab],
    )?;
    let sentences = files::corpus(&a.corpus)?;
    let res = load_lexicon(&a.lexicon)?;
    let input = TagVocab::build(
        sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.tag.to_string())),
        VocabKind::Input,
    )
    .context("input vocabulary")?;
    let output = TagVocab::build(
        target_tags(&sentences, &res.abbrevs, &res.dict, a.max_len),
        VocabKind::Output,
    )
    .context("output vocabulary")?;
    write_atomic(&a.vocabs.input_vocab, |w| input.write(w))?;
    write_atomic(&a.vocabs.output_vocab, |w| output.write(w))?;
    println!(
        "input vocabulary: {} tags (with {MASK_TOKEN}); output vocabulary: {} tags",
        input.len(),
        output.len()
    );
    Ok(())
}

pub fn gen(a: &GenArgs) -> Result<()> {
    check_paths(
        &[
            &a.corpus,
            &a.lexicon.dict,
            &a.lexicon.abbrevs,
            &a.vocabs.input_vocab,
            &a.vocabs.output_vocab,
        ],
        &[&a.out],
    )?;
    let sentences = files::corpus(&a.corpus)?;
    let res = load_lexicon(&a.lexicon)?;
    let (input, output) = load_vocabs(&a.vocabs)?;
    let (ex, report) = examples(
        &sentences,
        &res,
        &input,
        &output,
        a.max_len,
        Execution::default(),
    );
    report_skips("examples", &report);
    write_atomic(&a.out, |w| {
        write_examples(w, &ex, &res.abbrevs, &input, &output)
    })?;
    println!(
        "wrote {} examples from {} sentences ({} skipped) to {}",
        ex.len(),
        report.sentences,
        report.skipped_sentences(),
        a.out.display()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let history_path = files::history_path(&a.model);
    check_paths(
        &[
            &a.corpus,
            &a.lexicon.dict,
            &a.lexicon.abbrevs,
            &a.vocabs.input_vocab,
            &a.vocabs.output_vocab,
        ],
        &[&a.model, &history_path],
    )?;
    let exec = execution(a.sequential);
    let sentences = files::corpus(&a.corpus)?;
    let res = load_lexicon(&a.lexicon)?;
    let (input, output) = load_vocabs(&a.vocabs)?;
    let (ex, report) = examples(&sentences, &res, &input, &output, a.max_len, exec);
    report_skips("training corpus", &report);
    let unknown = report.unknown_input_tag_sentences + report.unknown_target_tag_sentences;
    if unknown > 0 {
        bail!("{unknown} training sentences contain tags missing from the vocabularies");
    }
    let (train_set, valid_set) = split_train_validation(&ex, a.valid_fraction, a.seed)?;

    let config = ModelConfig {
        embedding_dim: a.embedding_dim,
        recurrent_layers: a.layers,
        hidden_per_direction: a.hidden,
        fc_units: a.fc_units,
        seed: a.seed,
        ..ModelConfig::new(input.len(), output.len())
    };
    let options = TrainOptions {
        max_epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        seed: a.seed,
        patience: a.patience,
        execution: exec,
    };
    eprintln!(
        "training on {} examples, validating on {}",
        train_set.len(),
        valid_set.len()
    );
    let start = Instant::now();
    let (params, history) = train_with_progress(&config, &options, &train_set, &valid_set, |s| {
        eprintln!("{}\t{:.1}s", s.log_line(), start.elapsed().as_secs_f64());
    })?;
    write_atomic(&a.model, |w| {
        save_model(&params, &input, &output, w).map_err(std::io::Error::other)
    })?;
    write_atomic(&history_path, |w| history.write_tsv(w))?;
    let best = history.best().expect("at least one epoch");
    println!(
        "trained {} epochs; best epoch {}: valid loss {:.6}, valid accuracy {:.4}; model {}",
        history.epochs.len(),
        best.epoch,
        best.valid_loss,
        best.valid_accuracy,
        a.model.display()
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut inputs = vec![
        a.corpus.as_path(),
        &a.lexicon.dict,
        &a.lexicon.abbrevs,
        &a.vocabs.input_vocab,
        &a.vocabs.output_vocab,
        &a.model,
    ];
    inputs.extend(a.baseline.as_deref());
    inputs.extend(a.schema.as_deref());
    let outputs: Vec<&Path> = a.out.as_deref().into_iter().collect();
    check_paths(&inputs, &outputs)?;
    let exec = execution(a.sequential);
    let (input, output) = load_vocabs(&a.vocabs)?;
    let loaded = files::model(&a.model)?;
    loaded.check_vocabs(&input, &output)?;
    let res = load_lexicon(&a.lexicon)?;
    let schema = files::schema(a.schema.as_deref())?;
    let sentences = files::corpus(&a.corpus)?;
    let (ex, skips) = examples(&sentences, &res, &input, &output, a.max_len, exec);
    report_skips("evaluation corpus", &skips);
    if a.strict && skips.unknown_input_tag_sentences + skips.unknown_target_tag_sentences > 0 {
        bail!("evaluation corpus contains tags missing from the vocabularies");
    }
    if ex.is_empty() {
        bail!("no evaluation examples in {}", a.corpus.display());
    }
    let mut report = evaluate_network(&loaded.params, &ex, &output, &schema, exec)?;
    report.skipped_sentences = skips.skipped_sentences();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    report.write_text(&mut out, &res.abbrevs)?;
    if let Some(path) = &a.out {
        write_atomic(path, |w| report.write_tsv(w, &res.abbrevs))?;
    }
    let net = report.accuracy().unwrap_or(0.0);
    if let Some(path) = &a.baseline {
        let model = BaselineModel::read(files::open(path)?, &res.abbrevs, &output)
            .with_context(|| format!("in {}", path.display()))?;
        let base = evaluate_baseline(&model, &ex, &output, &schema);
        writeln!(
            out,
            "baseline accuracy {:.4} ({}/{})",
            base.accuracy().unwrap_or(0.0),
            base.overall.correct,
            base.overall.total
        )?;
    }
    writeln!(
        out,
        "network accuracy {net:.4} ({}/{}) on {}",
        report.overall.correct,
        report.overall.total,
        a.corpus.display()
    )?;
    Ok(())
}

pub fn baseline(a: &BaselineArgs) -> Result<()> {
    let mut inputs = vec![
        a.corpus.as_path(),
        &a.lexicon.dict,
        &a.lexicon.abbrevs,
        &a.vocabs.input_vocab,
        &a.vocabs.output_vocab,
    ];
    inputs.extend(a.eval_corpus.as_deref());
    inputs.extend(a.schema.as_deref());
    check_paths(&inputs, &[&a.out])?;
    let res = load_lexicon(&a.lexicon)?;
    let (input, output) = load_vocabs(&a.vocabs)?;
    let schema = files::schema(a.schema.as_deref())?;
    let sentences = files::corpus(&a.corpus)?;
    let (train_ex, report) = examples(
        &sentences,
        &res,
        &input,
        &output,
        a.max_len,
        Execution::default(),
    );
    report_skips("training corpus", &report);
    let model = fit_baseline(&train_ex, &output)?;
    write_atomic(&a.out, |w| model.write(w, &res.abbrevs, &output))?;
    let train_acc = evaluate_baseline(&model, &train_ex, &output, &schema)
        .accuracy()
        .unwrap_or(0.0);
    let mut line = format!(
        "baseline over {} abbreviations: training accuracy {train_acc:.4} ({} examples)",
        model.len(),
        train_ex.len()
    );
    if let Some(path) = &a.eval_corpus {
        let sentences = files::corpus(path)?;
        let (ex, skips) = examples(
            &sentences,
            &res,
            &input,
            &output,
            a.max_len,
            Execution::default(),
        );
        report_skips("evaluation corpus", &skips);
        let acc = evaluate_baseline(&model, &ex, &output, &schema)
            .accuracy()
            .unwrap_or(0.0);
        line += &format!("; evaluation accuracy {acc:.4} ({} examples)", ex.len());
    }
    println!("{line}");
    Ok(())
}

fn random_case(rng: &mut ChaCha8Rng, config: &ModelConfig, len: usize) -> (Vec<usize>, usize) {
    let input = (0..len)
        .map(|_| rng.gen_range(0..config.input_vocab_size))
        .collect();
    (input, rng.gen_range(0..config.output_vocab_size))
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let tiny = ModelConfig {
        embedding_dim: 3,
        recurrent_layers: 2,
        hidden_per_direction: 4,
        fc_units: 6,
        seed: a.seed,
        ..ModelConfig::new(7, 5)
    };
    let mut cases = vec![(tiny, 5)];
    for _ in 0..a.configs {
        let config = ModelConfig {
            embedding_dim: rng.gen_range(1..=4),
            recurrent_layers: rng.gen_range(1..=2),
            hidden_per_direction: rng.gen_range(1..=5),
            fc_units: rng.gen_range(1..=6),
            seed: rng.gen(),
            ..ModelConfig::new(rng.gen_range(2..=10), rng.gen_range(2..=6))
        };
        cases.push((config, rng.gen_range(1..=8)));
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (k, (config, len)) in cases.iter().enumerate() {
        let params = ModelParams::init(config)?;
        let (input, target) = random_case(&mut rng, config, *len);
        let masks = params.sample_masks(*len, &mut rng);
        let r = gradient_check(&params, &input, target, &masks, GRADCHECK_EPSILON)?;
        eprintln!(
            "case {k}: vocab {} embed {} layers {} hidden {} fc {} out {} T {len}: {} parameters, max relative error {:.3e} ({})",
            config.input_vocab_size,
            config.embedding_dim,
            config.recurrent_layers,
            config.hidden_per_direction,
            config.fc_units,
            config.output_vocab_size,
            r.checked,
            r.max_relative_error,
            r.worst_tensor
        );
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
    }
    println!(
        "max relative error {worst:.3e} over {checked} parameters in {} configurations (tolerance {GRADCHECK_TOLERANCE:e})",
        cases.len()
    );
    if worst.is_nan() || worst >= GRADCHECK_TOLERANCE {
        return Err(NumericFailure(format!(
            "max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
        ))
        .into());
    }
    Ok(())
}

fn is_marked(tag: &str) -> bool {
    tag == MASK_TOKEN || parse_tag(tag).is_ok_and(|t| t.grammatical_class() == "brev")
}

pub fn expand(a: &ExpandArgs) -> Result<()> {
    let outputs: Vec<&Path> = a.out.as_deref().into_iter().collect();
    check_paths(
        &[
            &a.corpus,
            &a.lexicon.dict,
            &a.lexicon.abbrevs,
            &a.vocabs.input_vocab,
            &a.vocabs.output_vocab,
            &a.model,
        ],
        &outputs,
    )?;
    let (input, output) = load_vocabs(&a.vocabs)?;
    let loaded = files::model(&a.model)?;
    loaded.check_vocabs(&input, &output)?;
    let res = load_lexicon(&a.lexicon)?;
    let sentences = files::corpus(&a.corpus)?;
    let mask = input.mask_index().expect("input vocabulary has a mask");

    let mut lines = Vec::with_capacity(sentences.len());
    let mut fallbacks = 0;
    for (n, s) in sentences.iter().enumerate() {
        let n = n + 1;
        let marked: Vec<usize> = (0..s.len())
            .filter(|&i| is_marked(&s.tokens[i].tag.to_string()))
            .collect();
        let [pos] = marked[..] else {
            bail!(
                "sentence {n}: expected one marked token, found {}",
                marked.len()
            );
        };
        let tok = &s.tokens[pos];
        let id = res
            .abbrevs
            .lookup(&tok.surface)
            .or_else(|| res.abbrevs.lookup(&tok.lexeme))
            .ok_or_else(|| DictError::UnknownAbbrev(tok.surface.clone()))
            .with_context(|| format!("sentence {n}"))?;
        let mut indices = Vec::with_capacity(s.len());
        for (i, t) in s.tokens.iter().enumerate() {
            if i == pos {
                indices.push(mask);
            } else {
                let tag = t.tag.to_string();
                indices.push(
                    input
                        .encode(&tag)
                        .with_context(|| format!("sentence {n}"))?,
                );
            }
        }
        let (k, probs) = loaded.params.predict(&indices)?;
        let tag_str = output
            .decode(k)
            .expect("prediction within the output vocabulary");
        let tag = parse_tag(tag_str)?;
        let abbrev = &res.abbrevs.get(id).expect("id from lookup").abbrev;
        let form = match res.dict.expand(&res.abbrevs, abbrev, &tag) {
            Ok(e) => e.form,
            Err(DictError::NoSuchForm { lexeme, tag }) => {
                eprintln!(
                    "warning: sentence {n}: no form of {lexeme} tagged {tag}; using the base form"
                );
                fallbacks += 1;
                lexeme
            }
            Err(e) => return Err(e).with_context(|| format!("sentence {n}")),
        };
        lines.push(format!("{form}\t{tag_str}\t{:.6}", probs[k]));
    }
    let fill = |w: &mut dyn Write| -> std::io::Result<()> {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        w.flush()
    };
    match &a.out {
        Some(path) => {
            write_atomic(path, fill)?;
            eprintln!(
                "expanded {} abbreviations ({fallbacks} base-form fallbacks) into {}",
                lines.len(),
                path.display()
            );
        }
        None => {
            fill(&mut std::io::stdout().lock())?;
            eprintln!(
                "expanded {} abbreviations ({fallbacks} base-form fallbacks)",
                lines.len()
            );
        }
    }
    Ok(())
}
