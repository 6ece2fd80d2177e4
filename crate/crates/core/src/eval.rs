//! Most-frequent-tag baseline, accuracy reports and the confusion taxonomy.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::corpus::TrainingExample;
use crate::morphdict::{AbbrevId, AbbrevTable};
use crate::nn::{ModelError, ModelParams};
use crate::par::{self, Execution};
use crate::tagset::{parse_tag, Attribute, AttributeSchema, Tag, TagVocab};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("baseline line {line}: {reason}")]
    BadBaselineFile { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Predicts, per abbreviation, the tag it carried most often in training.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BaselineModel {
    modes: BTreeMap<AbbrevId, usize>,
}

impl BaselineModel {
    /// Modal target per abbreviation; ties go to the lexicographically
    /// smallest tag string.
    pub fn fit(
        examples: &[TrainingExample],
        output_vocab: &TagVocab,
    ) -> Result<BaselineModel, EvalError> {
        if examples.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        let mut counts: HashMap<(AbbrevId, usize), usize> = HashMap::new();
        for ex in examples {
            *counts.entry((ex.abbrev_id, ex.target_index)).or_default() += 1;
        }
        let tag_name = |i: usize| output_vocab.decode(i).unwrap_or("");
        let mut best: BTreeMap<AbbrevId, (usize, usize)> = BTreeMap::new();
        for ((abbrev, target), n) in counts {
            let slot = best.entry(abbrev).or_insert((target, n));
            let better = n > slot.1 || (n == slot.1 && tag_name(target) < tag_name(slot.0));
            if better {
                *slot = (target, n);
            }
        }
        Ok(BaselineModel {
            modes: best.into_iter().map(|(a, (t, _))| (a, t)).collect(),
        })
    }

    pub fn predict(&self, abbrev: AbbrevId) -> Option<usize> {
        self.modes.get(&abbrev).copied()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `abbrev<TAB>tag` lines.
    pub fn write<W: Write>(
        &self,
        mut w: W,
        abbrevs: &AbbrevTable,
        output_vocab: &TagVocab,
    ) -> std::io::Result<()> {
        for (&id, &tag) in &self.modes {
            let abbrev = abbrevs.get(id).map(|e| e.abbrev.as_str()).unwrap_or("?");
            writeln!(w, "{abbrev}\t{}", output_vocab.decode(tag).unwrap_or("?"))?;
        }
        w.flush()
    }

    pub fn read<R: BufRead>(
        r: R,
        abbrevs: &AbbrevTable,
        output_vocab: &TagVocab,
    ) -> Result<BaselineModel, EvalError> {
        let mut modes = BTreeMap::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| EvalError::BadBaselineFile {
                line: idx + 1,
                reason,
            };
            let (abbrev, tag) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected abbrev<TAB>tag".into()))?;
            let id = abbrevs
                .lookup(abbrev)
                .ok_or_else(|| bad(format!("unknown abbreviation {abbrev:?}")))?;
            let tag = output_vocab.encode(tag).map_err(|e| bad(e.to_string()))?;
            modes.insert(id, tag);
        }
        Ok(BaselineModel { modes })
    }
}

/// Shorthand for [`BaselineModel::fit`].
pub fn fit_baseline(
    examples: &[TrainingExample],
    output_vocab: &TagVocab,
) -> Result<BaselineModel, EvalError> {
    BaselineModel::fit(examples, output_vocab)
}

/// Error counts by attribute. A wrong prediction may count in several
/// categories; the `only_*` fields count errors differing in that
/// attribute alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub errors: usize,
    pub number: usize,
    pub case: usize,
    pub gender: usize,
    /// Tags differ, but not in number, case or gender.
    pub other: usize,
    pub only_number: usize,
    pub only_case: usize,
    pub only_gender: usize,
}

impl ConfusionCounts {
    pub fn record(&mut self, truth: &Tag, predicted: &Tag, schema: &AttributeSchema) {
        if truth == predicted {
            return;
        }
        self.errors += 1;
        let differs: Vec<Attribute> = Attribute::ALL
            .into_iter()
            .filter(|&a| schema.tag_attribute(truth, a) != schema.tag_attribute(predicted, a))
            .collect();
        for a in &differs {
            match a {
                Attribute::Number => self.number += 1,
                Attribute::Case => self.case += 1,
                Attribute::Gender => self.gender += 1,
            }
        }
        match differs[..] {
            [] => self.other += 1,
            [Attribute::Number] => self.only_number += 1,
            [Attribute::Case] => self.only_case += 1,
            [Attribute::Gender] => self.only_gender += 1,
            _ => {}
        }
    }
}

pub fn error_analysis<'a, I>(pairs: I, schema: &AttributeSchema) -> ConfusionCounts
where
    I: IntoIterator<Item = (&'a Tag, &'a Tag)>,
{
    let mut counts = ConfusionCounts::default();
    for (truth, predicted) in pairs {
        counts.record(truth, predicted, schema);
    }
    counts
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub overall: Tally,
    pub per_abbrev: BTreeMap<AbbrevId, Tally>,
    pub confusions: ConfusionCounts,
    /// Examples the predictor could not cover (baseline: unseen abbreviation).
    pub uncovered: usize,
    /// Sentences dropped before evaluation, e.g. for unknown tags.
    pub skipped_sentences: usize,
}

/// One evaluated example; `predicted` is `None` when not covered.
#[derive(Clone, Copy, Debug)]
pub struct Outcome {
    pub abbrev: AbbrevId,
    pub truth: usize,
    pub predicted: Option<usize>,
}

impl EvalReport {
    pub fn from_outcomes(
        outcomes: &[Outcome],
        output_vocab: &TagVocab,
        schema: &AttributeSchema,
    ) -> EvalReport {
        let mut report = EvalReport::default();
        let tags: Vec<Option<Tag>> = output_vocab
            .entries()
            .iter()
            .map(|t| parse_tag(t).ok())
            .collect();
        for o in outcomes {
            let ok = o.predicted == Some(o.truth);
            for tally in [
                &mut report.overall,
                report.per_abbrev.entry(o.abbrev).or_default(),
            ] {
                tally.total += 1;
                tally.correct += ok as usize;
            }
            match o.predicted {
                None => report.uncovered += 1,
                Some(p) if !ok => {
                    if let (Some(Some(t)), Some(Some(q))) = (tags.get(o.truth), tags.get(p)) {
                        report.confusions.record(t, q, schema);
                    }
                }
                Some(_) => {}
            }
        }
        report
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.overall.accuracy()
    }

    fn abbrev_name(abbrevs: &AbbrevTable, id: AbbrevId) -> String {
        abbrevs
            .get(id)
            .map(|e| e.abbrev.clone())
            .unwrap_or_else(|| format!("#{}", id.0))
    }

    fn rows(&self, abbrevs: &AbbrevTable) -> Vec<(&'static str, String, usize, usize)> {
        let total = self.overall.total;
        let c = &self.confusions;
        let mut rows = vec![("overall", "all".to_owned(), self.overall.correct, total)];
        for (&id, t) in &self.per_abbrev {
            rows.push(("abbrev", Self::abbrev_name(abbrevs, id), t.correct, t.total));
        }
        for (name, n) in [
            ("errors", c.errors),
            ("number", c.number),
            ("case", c.case),
            ("gender", c.gender),
            ("other", c.other),
        ] {
            rows.push(("confusion", name.to_owned(), n, total));
        }
        for (name, n) in [
            ("number", c.only_number),
            ("case", c.only_case),
            ("gender", c.only_gender),
        ] {
            rows.push(("exclusive", name.to_owned(), n, total));
        }
        rows.push(("coverage", "uncovered".to_owned(), self.uncovered, total));
        rows.push(("skipped", "sentences".to_owned(), self.skipped_sentences, 0));
        rows
    }

    /// Machine-readable form: `kind<TAB>key<TAB>count<TAB>total<TAB>fraction`.
    ///
    /// For confusion rows the fraction is the share of all examples lost to
    /// that category; `NA` marks an undefined fraction.
    pub fn write_tsv<W: Write>(&self, mut w: W, abbrevs: &AbbrevTable) -> std::io::Result<()> {
        writeln!(w, "kind\tkey\tcount\ttotal\tfraction")?;
        for (kind, key, count, total) in self.rows(abbrevs) {
            let frac = if total > 0 {
                format!("{:.6}", count as f64 / total as f64)
            } else {
                "NA".to_owned()
            };
            writeln!(w, "{kind}\t{key}\t{count}\t{total}\t{frac}")?;
        }
        w.flush()
    }

    /// Human-readable aligned table.
    pub fn write_text<W: Write>(&self, mut w: W, abbrevs: &AbbrevTable) -> std::io::Result<()> {
        let rows = self.rows(abbrevs);
        let key_width = rows
            .iter()
            .map(|r| r.1.chars().count())
            .max()
            .unwrap_or(0)
            .max(3);
        for (kind, key, count, total) in rows {
            let pct = if total > 0 {
                format!("{:>7.2}%", 100.0 * count as f64 / total as f64)
            } else {
                format!("{:>8}", "-")
            };
            let pad = key_width - key.chars().count();
            writeln!(
                w,
                "{kind:<10} {key}{:pad$} {count:>8} / {total:<8} {pct}",
                ""
            )?;
        }
        w.flush()
    }
}

pub fn evaluate_baseline(
    model: &BaselineModel,
    examples: &[TrainingExample],
    output_vocab: &TagVocab,
    schema: &AttributeSchema,
) -> EvalReport {
    let outcomes: Vec<Outcome> = examples
        .iter()
        .map(|ex| Outcome {
            abbrev: ex.abbrev_id,
            truth: ex.target_index,
            predicted: model.predict(ex.abbrev_id),
        })
        .collect();
    EvalReport::from_outcomes(&outcomes, output_vocab, schema)
}

pub fn evaluate_network(
    params: &ModelParams,
    examples: &[TrainingExample],
    output_vocab: &TagVocab,
    schema: &AttributeSchema,
    exec: Execution,
) -> Result<EvalReport, EvalError> {
    let predictions = par::map(exec, examples, |ex| {
        params.predict(&ex.input_indices).map(|(p, _)| p)
    });
    let outcomes = examples
        .iter()
        .zip(predictions)
        .map(|(ex, p)| {
            Ok(Outcome {
                abbrev: ex.abbrev_id,
                truth: ex.target_index,
                predicted: Some(p?),
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(EvalReport::from_outcomes(&outcomes, output_vocab, schema))
}
