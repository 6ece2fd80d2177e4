//! Vertical-format corpora and masked training examples.
//!
//! The vertical format has one token per line as
//! `surface<TAB>lexeme<TAB>tag`, a blank line between sentences and
//! `#`-prefixed comment lines.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::morphdict::{AbbrevId, AbbrevTable, MorphDict};
use crate::par::{self, Execution};
use crate::tagset::{parse_tag, Tag, TagVocab, MASK_TOKEN};

/// Default sentence length limit, in tokens.
pub const DEFAULT_MAX_LEN: usize = 30;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("empty example set")]
    EmptySet,
    #[error("validation fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("example line {line}: {reason}")]
    BadExample { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub lexeme: String,
    pub tag: Tag,
}

impl Token {
    pub fn new(surface: &str, lexeme: &str, tag: Tag) -> Token {
        Token {
            surface: surface.to_owned(),
            lexeme: lexeme.to_owned(),
            tag,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strictness {
    Strict,
    /// Malformed lines are dropped and counted.
    Lenient,
}

#[derive(Clone, Debug, Default)]
pub struct ReadCorpus {
    pub sentences: Vec<Sentence>,
    pub malformed_lines: usize,
}

fn parse_token(line: &str) -> Result<Token, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [surface, lexeme, tag] = fields[..] else {
        return Err(format!(
            "expected 3 tab-separated fields, got {}",
            fields.len()
        ));
    };
    if surface.is_empty() || lexeme.is_empty() {
        return Err("empty surface or lexeme".into());
    }
    let tag = parse_tag(tag).map_err(|e| e.to_string())?;
    Ok(Token::new(surface, lexeme, tag))
}

/// Reads a whole vertical-format corpus.
pub fn read_corpus<R: BufRead>(
    reader: R,
    strictness: Strictness,
) -> Result<ReadCorpus, CorpusError> {
    let mut out = ReadCorpus::default();
    let mut current = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !current.is_empty() {
                out.sentences.push(Sentence {
                    tokens: std::mem::take(&mut current),
                });
            }
            continue;
        }
        match parse_token(line) {
            Ok(tok) => current.push(tok),
            Err(reason) => match strictness {
                Strictness::Strict => {
                    return Err(CorpusError::Parse {
                        line: idx + 1,
                        reason,
                    })
                }
                Strictness::Lenient => out.malformed_lines += 1,
            },
        }
    }
    if !current.is_empty() {
        out.sentences.push(Sentence { tokens: current });
    }
    Ok(out)
}

pub fn write_sentence<W: Write>(writer: &mut W, sentence: &Sentence) -> std::io::Result<()> {
    for tok in &sentence.tokens {
        writeln!(writer, "{}\t{}\t{}", tok.surface, tok.lexeme, tok.tag)?;
    }
    writeln!(writer)
}

pub fn write_corpus<W: Write>(mut writer: W, sentences: &[Sentence]) -> std::io::Result<()> {
    for s in sentences {
        write_sentence(&mut writer, s)?;
    }
    writer.flush()
}

/// One supervised instance: a tag sequence with a single masked position.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrainingExample {
    pub input_indices: Vec<usize>,
    pub mask_position: usize,
    pub target_index: usize,
    pub abbrev_id: AbbrevId,
}

/// Why sentences or tokens produced no examples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub sentences: usize,
    pub sentences_with_matches: usize,
    pub long_sentences: usize,
    pub unknown_input_tag_sentences: usize,
    pub unknown_target_tag_sentences: usize,
    /// Tokens whose lexeme is abbreviatable but whose tag is missing from the dictionary.
    pub dictionary_misses: usize,
    pub examples: usize,
}

impl SkipReport {
    fn merge(&mut self, other: &SkipReport) {
        self.sentences += other.sentences;
        self.sentences_with_matches += other.sentences_with_matches;
        self.long_sentences += other.long_sentences;
        self.unknown_input_tag_sentences += other.unknown_input_tag_sentences;
        self.unknown_target_tag_sentences += other.unknown_target_tag_sentences;
        self.dictionary_misses += other.dictionary_misses;
        self.examples += other.examples;
    }

    pub fn skipped_sentences(&self) -> usize {
        self.long_sentences + self.unknown_input_tag_sentences + self.unknown_target_tag_sentences
    }
}

pub struct ExampleSource<'a> {
    pub abbrevs: &'a AbbrevTable,
    pub dict: &'a MorphDict,
    pub input_vocab: &'a TagVocab,
    pub output_vocab: &'a TagVocab,
    pub max_len: usize,
}

/// Positions of a sentence whose token is a dictionary-confirmed form of an
/// abbreviatable lexeme, with the matching table entry.
pub fn abbreviatable_positions(
    sentence: &Sentence,
    abbrevs: &AbbrevTable,
    dict: &MorphDict,
) -> (Vec<(usize, AbbrevId)>, usize) {
    let mut matches = Vec::new();
    let mut misses = 0;
    for (pos, tok) in sentence.tokens.iter().enumerate() {
        if let Some(id) = abbrevs.by_base_form(&tok.lexeme) {
            if dict.contains(&tok.lexeme, &tok.tag.to_string()) {
                matches.push((pos, id));
            } else {
                misses += 1;
            }
        }
    }
    (matches, misses)
}

impl ExampleSource<'_> {
    fn sentence_examples(&self, sentence: &Sentence) -> (Vec<TrainingExample>, SkipReport) {
        let mut report = SkipReport {
            sentences: 1,
            ..SkipReport::default()
        };
        let (matches, misses) = abbreviatable_positions(sentence, self.abbrevs, self.dict);
        report.dictionary_misses = misses;
        if matches.is_empty() {
            return (Vec::new(), report);
        }
        report.sentences_with_matches = 1;
        if sentence.len() > self.max_len {
            report.long_sentences = 1;
            return (Vec::new(), report);
        }
        let tags: Vec<String> = sentence.tokens.iter().map(|t| t.tag.to_string()).collect();
        let Ok(encoded) = tags
            .iter()
            .map(|t| self.input_vocab.encode(t))
            .collect::<Result<Vec<_>, _>>()
        else {
            report.unknown_input_tag_sentences = 1;
            return (Vec::new(), report);
        };
        let Ok(targets) = matches
            .iter()
            .map(|&(pos, _)| self.output_vocab.encode(&tags[pos]))
            .collect::<Result<Vec<_>, _>>()
        else {
            report.unknown_target_tag_sentences = 1;
            return (Vec::new(), report);
        };
        let mask = self.input_vocab.mask_index().unwrap_or(0);
        let examples: Vec<TrainingExample> = matches
            .iter()
            .zip(targets)
            .map(|(&(pos, abbrev_id), target_index)| {
                let mut input_indices = encoded.clone();
                input_indices[pos] = mask;
                TrainingExample {
                    input_indices,
                    mask_position: pos,
                    target_index,
                    abbrev_id,
                }
            })
            .collect();
        report.examples = examples.len();
        (examples, report)
    }

    /// Emits one example per dictionary-confirmed abbreviatable token.
    ///
    /// Sentences over `max_len` tokens, or with any tag unknown to the
    /// vocabularies, are skipped whole and counted in the report.
    pub fn generate(
        &self,
        sentences: &[Sentence],
        exec: Execution,
    ) -> (Vec<TrainingExample>, SkipReport) {
        let per_sentence = par::map(exec, sentences, |s| self.sentence_examples(s));
        let mut examples = Vec::new();
        let mut report = SkipReport::default();
        for (ex, r) in per_sentence {
            examples.extend(ex);
            report.merge(&r);
        }
        (examples, report)
    }
}

/// Shorthand for [`ExampleSource::generate`].
pub fn generate_examples(
    sentences: &[Sentence],
    abbrevs: &AbbrevTable,
    dict: &MorphDict,
    input_vocab: &TagVocab,
    output_vocab: &TagVocab,
    max_len: usize,
) -> (Vec<TrainingExample>, SkipReport) {
    ExampleSource {
        abbrevs,
        dict,
        input_vocab,
        output_vocab,
        max_len,
    }
    .generate(sentences, Execution::default())
}

/// Target tags of every dictionary-confirmed abbreviatable token, in corpus order.
pub fn target_tags(
    sentences: &[Sentence],
    abbrevs: &AbbrevTable,
    dict: &MorphDict,
    max_len: usize,
) -> Vec<String> {
    sentences
        .iter()
        .filter(|s| s.len() <= max_len)
        .flat_map(|s| {
            abbreviatable_positions(s, abbrevs, dict)
                .0
                .into_iter()
                .map(move |(pos, _)| s.tokens[pos].tag.to_string())
        })
        .collect()
}

/// Seeded shuffle followed by a split; validation gets `round(fraction * n)`.
pub fn split_train_validation<T: Clone>(
    examples: &[T],
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(CorpusError::BadFraction(validation_fraction));
    }
    if examples.is_empty() {
        return Err(CorpusError::EmptySet);
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = (validation_fraction * examples.len() as f64).round() as usize;
    let n_valid = n_valid.min(examples.len());
    let valid = order[..n_valid]
        .iter()
        .map(|&i| examples[i].clone())
        .collect();
    let train = order[n_valid..]
        .iter()
        .map(|&i| examples[i].clone())
        .collect();
    Ok((train, valid))
}

/// Writes examples as `abbrev<TAB>mask_position<TAB>target_tag<TAB>tags`,
/// with the tags space-separated and the mask token at the masked slot.
pub fn write_examples<W: Write>(
    mut writer: W,
    examples: &[TrainingExample],
    abbrevs: &AbbrevTable,
    input_vocab: &TagVocab,
    output_vocab: &TagVocab,
) -> std::io::Result<()> {
    for ex in examples {
        let abbrev = abbrevs
            .get(ex.abbrev_id)
            .map(|e| e.abbrev.as_str())
            .unwrap_or("?");
        let target = output_vocab.decode(ex.target_index).unwrap_or("?");
        let tags: Vec<&str> = ex
            .input_indices
            .iter()
            .map(|&i| input_vocab.decode(i).unwrap_or("?"))
            .collect();
        writeln!(
            writer,
            "{abbrev}\t{}\t{target}\t{}",
            ex.mask_position,
            tags.join(" ")
        )?;
    }
    writer.flush()
}

pub fn read_examples<R: BufRead>(
    reader: R,
    abbrevs: &AbbrevTable,
    input_vocab: &TagVocab,
    output_vocab: &TagVocab,
) -> Result<Vec<TrainingExample>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| CorpusError::BadExample {
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [abbrev, pos, target, tags] = fields[..] else {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        };
        let abbrev_id = abbrevs
            .lookup(abbrev)
            .ok_or_else(|| bad(format!("unknown abbreviation {abbrev:?}")))?;
        let mask_position: usize = pos
            .parse()
            .map_err(|_| bad(format!("bad position {pos:?}")))?;
        let target_index = output_vocab
            .encode(target)
            .map_err(|e| bad(e.to_string()))?;
        let input_indices = tags
            .split(' ')
            .map(|t| input_vocab.encode(t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(e.to_string()))?;
        let masks = tags.split(' ').filter(|t| *t == MASK_TOKEN).count();
        if masks != 1 || input_indices.get(mask_position) != input_vocab.mask_index().as_ref() {
            return Err(bad(
                "exactly one mask token expected at the masked position".into(),
            ));
        }
        out.push(TrainingExample {
            input_indices,
            mask_position,
            target_index,
            abbrev_id,
        });
    }
    Ok(out)
}
