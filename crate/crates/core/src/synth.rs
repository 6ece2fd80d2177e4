//! Synthetic inflected-language corpora with deterministic agreement.
//!
//! A [`GrammarSpec`] lists noun lexemes with full inflection tables,
//! agreeing modifiers, verbs, prepositions, fixed filler words and sentence
//! templates. Every noun is preceded by at least one modifier carrying the
//! noun's number, case and gender, so its tag is recoverable from context
//! alone.
//!
//! The spec file is line-oriented `key=value` grouped into sections; a
//! section header may repeat (`[noun]`, `[template]`, ...). See
//! `data/default.grammar`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{write_corpus, Sentence, Token, DEFAULT_MAX_LEN};
use crate::morphdict::{AbbrevEntry, AbbrevTable, MorphDict};
use crate::tagset::{parse_tag, Attribute, AttributeSchema, Tag};

pub const DEFAULT_GRAMMAR: &str = include_str!("../data/default.grammar");

/// Grammatical class of every noun token.
pub const NOUN_CLASS: &str = "subst";
pub const PREP_CLASS: &str = "prep";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid grammar spec: {0}")]
    InvalidSpec(String),
    #[error("invalid grammar spec, line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("position {position}: {candidates} tags are consistent with the context")]
    AmbiguousContext { position: usize, candidates: usize },
    #[error("position {0} does not hold an abbreviatable noun")]
    NotAbbreviatable(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid<T>(reason: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::InvalidSpec(reason.into()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Noun {
    pub lexeme: String,
    pub gender: String,
    pub abbrev: Option<String>,
    /// Surface forms in numbers x cases order.
    pub forms: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Modifier {
    pub lexeme: String,
    pub class: String,
    /// Segments appended after the gender, e.g. `pos`.
    pub suffix: Vec<String>,
    /// Per gender, surface forms in numbers x cases order.
    pub forms: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verb {
    pub lexeme: String,
    pub class: String,
    pub suffix: Vec<String>,
    /// One form per number.
    pub forms: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillerWord {
    pub surface: String,
    pub lexeme: String,
    pub tag: Tag,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Modifiers followed by a noun.
    NounPhrase { modifiers: usize },
    /// Preposition followed by a noun phrase in the governed case.
    PrepPhrase { modifiers: usize },
    /// Verb agreeing in number with the nearest preceding noun.
    Verb,
    /// Any filler word of the given class.
    Filler(String),
}

impl Slot {
    fn parse(s: &str) -> Result<Slot, String> {
        let phrase = |rest: &str| -> Result<usize, String> {
            if rest.is_empty() {
                Ok(1)
            } else {
                rest.parse().map_err(|_| format!("bad slot {s:?}"))
            }
        };
        if let Some(class) = s.strip_prefix("fill:") {
            return Ok(Slot::Filler(class.to_owned()));
        }
        if s == "verb" {
            return Ok(Slot::Verb);
        }
        if let Some(rest) = s.strip_prefix("np") {
            return Ok(Slot::NounPhrase {
                modifiers: phrase(rest)?,
            });
        }
        if let Some(rest) = s.strip_prefix("pp") {
            return Ok(Slot::PrepPhrase {
                modifiers: phrase(rest)?,
            });
        }
        Err(format!("unknown slot {s:?}"))
    }

    fn len(&self) -> usize {
        match self {
            Slot::NounPhrase { modifiers } => modifiers + 1,
            Slot::PrepPhrase { modifiers } => modifiers + 2,
            Slot::Verb | Slot::Filler(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrammarSpec {
    pub seed: u64,
    pub numbers: Vec<String>,
    pub cases: Vec<String>,
    pub genders: Vec<String>,
    pub nouns: Vec<Noun>,
    pub modifiers: Vec<Modifier>,
    pub verbs: Vec<Verb>,
    pub preps: Vec<String>,
    pub words: Vec<FillerWord>,
    pub templates: Vec<Vec<Slot>>,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<(usize, String, String)>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(_, _, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, SynthError> {
        self.get(key).ok_or_else(|| SynthError::Parse {
            line: self.line,
            reason: format!("[{}] needs {key}=", self.name),
        })
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), SynthError> {
        for (line, key, _) in &self.entries {
            let ok = allowed
                .iter()
                .any(|a| a == key || (a.ends_with('.') && key.starts_with(a)));
            if !ok {
                return Err(SynthError::Parse {
                    line: *line,
                    reason: format!("unknown key {key:?} in [{}]", self.name),
                });
            }
        }
        Ok(())
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>, SynthError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            sections.push(Section {
                name: name.trim().to_owned(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let bad = |reason: &str| SynthError::Parse {
            line,
            reason: reason.into(),
        };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| bad("expected key=value"))?;
        let section = sections
            .last_mut()
            .ok_or_else(|| bad("key outside of a section"))?;
        let key = key.trim().to_owned();
        if section.entries.iter().any(|(_, k, _)| *k == key) {
            return Err(bad("duplicate key in section"));
        }
        section.entries.push((line, key, value.trim().to_owned()));
    }
    Ok(sections)
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(|v| v.trim().to_owned()).collect()
}

fn segments(value: &str) -> Vec<String> {
    value
        .split(':')
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

impl GrammarSpec {
    /// The bundled grammar: 2 genders, 2 numbers, 4 cases, 12 nouns.
    pub fn default_spec() -> GrammarSpec {
        GrammarSpec::parse(DEFAULT_GRAMMAR).expect("bundled grammar is valid")
    }

    pub fn read<R: BufRead>(mut reader: R) -> Result<GrammarSpec, SynthError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        GrammarSpec::parse(&text)
    }

    /// Parses and validates a spec.
    pub fn parse(text: &str) -> Result<GrammarSpec, SynthError> {
        let sections = split_sections(text)?;
        let mut spec = GrammarSpec {
            seed: 0,
            numbers: Vec::new(),
            cases: Vec::new(),
            genders: Vec::new(),
            nouns: Vec::new(),
            modifiers: Vec::new(),
            verbs: Vec::new(),
            preps: Vec::new(),
            words: Vec::new(),
            templates: Vec::new(),
        };
        let mut noun_paradigms: BTreeMap<String, (String, Vec<String>)> = BTreeMap::new();
        let mut modifier_paradigms: BTreeMap<String, BTreeMap<String, Vec<String>>> =
            BTreeMap::new();
        let mut seen_grammar = false;
        for s in &sections {
            let bad = |reason: String| SynthError::Parse {
                line: s.line,
                reason,
            };
            match s.name.as_str() {
                "grammar" => {
                    if seen_grammar {
                        return Err(bad("repeated [grammar] section".into()));
                    }
                    seen_grammar = true;
                    s.check_keys(&["seed", "numbers", "cases", "genders"])?;
                    spec.seed = s
                        .get("seed")
                        .unwrap_or("0")
                        .parse()
                        .map_err(|_| bad("seed must be an unsigned integer".into()))?;
                    spec.numbers = list(s.require("numbers")?);
                    spec.cases = list(s.require("cases")?);
                    spec.genders = list(s.require("genders")?);
                }
                "noun-paradigm" => {
                    s.check_keys(&["name", "gender", "endings"])?;
                    let name = s.require("name")?.to_owned();
                    let entry = (s.require("gender")?.to_owned(), list(s.require("endings")?));
                    if noun_paradigms.insert(name.clone(), entry).is_some() {
                        return Err(bad(format!("duplicate paradigm {name:?}")));
                    }
                }
                "modifier-paradigm" => {
                    s.check_keys(&["name", "endings."])?;
                    let name = s.require("name")?.to_owned();
                    let endings = s
                        .entries
                        .iter()
                        .filter_map(|(_, k, v)| {
                            k.strip_prefix("endings.").map(|g| (g.to_owned(), list(v)))
                        })
                        .collect();
                    if modifier_paradigms.insert(name.clone(), endings).is_some() {
                        return Err(bad(format!("duplicate paradigm {name:?}")));
                    }
                }
                "noun" => {
                    s.check_keys(&["lexeme", "stem", "paradigm", "abbrev"])?;
                    let paradigm = s.require("paradigm")?;
                    let (gender, endings) = noun_paradigms
                        .get(paradigm)
                        .ok_or_else(|| bad(format!("unknown paradigm {paradigm:?}")))?;
                    let stem = s.require("stem")?;
                    spec.nouns.push(Noun {
                        lexeme: s.require("lexeme")?.to_owned(),
                        gender: gender.clone(),
                        abbrev: s.get("abbrev").map(str::to_owned),
                        forms: endings.iter().map(|e| format!("{stem}{e}")).collect(),
                    });
                }
                "modifier" => {
                    s.check_keys(&["lexeme", "stem", "paradigm", "class", "suffix"])?;
                    let paradigm = s.require("paradigm")?;
                    let endings = modifier_paradigms
                        .get(paradigm)
                        .ok_or_else(|| bad(format!("unknown paradigm {paradigm:?}")))?;
                    let stem = s.require("stem")?;
                    spec.modifiers.push(Modifier {
                        lexeme: s.require("lexeme")?.to_owned(),
                        class: s.require("class")?.to_owned(),
                        suffix: segments(s.get("suffix").unwrap_or("")),
                        forms: endings
                            .iter()
                            .map(|(g, es)| {
                                (g.clone(), es.iter().map(|e| format!("{stem}{e}")).collect())
                            })
                            .collect(),
                    });
                }
                "verb" => {
                    s.check_keys(&["lexeme", "forms", "class", "suffix"])?;
                    spec.verbs.push(Verb {
                        lexeme: s.require("lexeme")?.to_owned(),
                        class: s.require("class")?.to_owned(),
                        suffix: segments(s.get("suffix").unwrap_or("")),
                        forms: list(s.require("forms")?),
                    });
                }
                "prep" => {
                    s.check_keys(&["lexeme"])?;
                    spec.preps.push(s.require("lexeme")?.to_owned());
                }
                "word" => {
                    s.check_keys(&["surface", "lexeme", "tag"])?;
                    let tag = parse_tag(s.require("tag")?).map_err(|e| bad(e.to_string()))?;
                    spec.words.push(FillerWord {
                        surface: s.require("surface")?.to_owned(),
                        lexeme: s.require("lexeme")?.to_owned(),
                        tag,
                    });
                }
                "template" => {
                    s.check_keys(&["slots"])?;
                    let slots = s
                        .require("slots")?
                        .split_whitespace()
                        .map(Slot::parse)
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(bad)?;
                    spec.templates.push(slots);
                }
                other => return Err(bad(format!("unknown section [{other}]"))),
            }
        }
        if !seen_grammar {
            return invalid("missing [grammar] section");
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(&self, seed: u64) -> GrammarSpec {
        GrammarSpec {
            seed,
            ..self.clone()
        }
    }

    /// Attribute value sets of this grammar, for tag attribute extraction.
    pub fn schema(&self) -> AttributeSchema {
        AttributeSchema::new(
            self.numbers.clone(),
            self.cases.clone(),
            self.genders.clone(),
        )
    }

    pub fn noun_tag(&self, number: &str, case: &str, gender: &str) -> Tag {
        Tag::new(NOUN_CLASS, vec![number.into(), case.into(), gender.into()])
            .expect("validated segments")
    }

    fn modifier_tag(&self, m: &Modifier, number: &str, case: &str, gender: &str) -> Tag {
        let mut attrs = vec![number.to_owned(), case.to_owned(), gender.to_owned()];
        attrs.extend(m.suffix.iter().cloned());
        Tag::new(m.class.clone(), attrs).expect("validated segments")
    }

    fn verb_tag(&self, v: &Verb, number: &str) -> Tag {
        let mut attrs = vec![number.to_owned()];
        attrs.extend(v.suffix.iter().cloned());
        Tag::new(v.class.clone(), attrs).expect("validated segments")
    }

    fn prep_tag(&self, case: &str) -> Tag {
        Tag::new(PREP_CLASS, vec![case.to_owned()]).expect("validated segments")
    }

    /// Distinct tags each noun can carry.
    pub fn tag_variants_per_noun(&self) -> usize {
        self.numbers.len() * self.cases.len()
    }

    /// Accuracy of the most-frequent-tag-per-abbreviation baseline.
    ///
    /// Number and case are drawn uniformly and independently of the noun, so
    /// every tag of a noun has probability `1 / variants` and any mode the
    /// baseline picks is correct with that probability.
    pub fn expected_baseline_accuracy(&self) -> f64 {
        1.0 / self.tag_variants_per_noun() as f64
    }

    pub fn template_len(template: &[Slot]) -> usize {
        template.iter().map(Slot::len).sum()
    }

    fn modifier_classes(&self) -> BTreeSet<&str> {
        self.modifiers.iter().map(|m| m.class.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let mut values = BTreeSet::new();
        for (name, set) in [
            ("numbers", &self.numbers),
            ("cases", &self.cases),
            ("genders", &self.genders),
        ] {
            if set.is_empty() {
                return invalid(format!("{name} is empty"));
            }
            for v in set {
                if v.is_empty() || v.contains([':', ' ', '\t']) {
                    return invalid(format!("bad {name} value {v:?}"));
                }
                // overlapping sets would make attribute extraction ambiguous
                if !values.insert(v.as_str()) {
                    return invalid(format!("value {v:?} appears in two attribute sets"));
                }
            }
        }
        let cells = self.tag_variants_per_noun();
        let surface_ok = |s: &str| !s.is_empty() && !s.contains(char::is_whitespace);

        if self.nouns.is_empty() {
            return invalid("no nouns");
        }
        let mut lexemes = BTreeSet::new();
        let mut abbrevs = BTreeSet::new();
        for n in &self.nouns {
            if !lexemes.insert(n.lexeme.as_str()) {
                return invalid(format!("duplicate noun {:?}", n.lexeme));
            }
            if !self.genders.contains(&n.gender) {
                return invalid(format!(
                    "noun {:?}: unknown gender {:?}",
                    n.lexeme, n.gender
                ));
            }
            if n.forms.len() != cells {
                return invalid(format!(
                    "noun {:?}: expected {cells} endings, got {}",
                    n.lexeme,
                    n.forms.len()
                ));
            }
            if let Some(a) = &n.abbrev {
                if !surface_ok(a) || a.ends_with('.') || !abbrevs.insert(a.as_str()) {
                    return invalid(format!(
                        "noun {:?}: bad or duplicate abbreviation {a:?}",
                        n.lexeme
                    ));
                }
            }
        }
        if abbrevs.is_empty() {
            return invalid("no abbreviatable noun");
        }
        for m in &self.modifiers {
            for g in &self.genders {
                match m.forms.get(g) {
                    Some(f) if f.len() == cells => {}
                    _ => {
                        return invalid(format!(
                            "modifier {:?}: needs {cells} endings for gender {g}",
                            m.lexeme
                        ))
                    }
                }
            }
            if m.forms.len() != self.genders.len() {
                return invalid(format!(
                    "modifier {:?}: endings for an unknown gender",
                    m.lexeme
                ));
            }
        }
        for v in &self.verbs {
            if v.forms.len() != self.numbers.len() {
                return invalid(format!("verb {:?}: expected one form per number", v.lexeme));
            }
        }
        let modifier_classes = self.modifier_classes();
        let mut other_classes: BTreeSet<&str> = [NOUN_CLASS, PREP_CLASS].into();
        other_classes.extend(self.verbs.iter().map(|v| v.class.as_str()));
        other_classes.extend(self.words.iter().map(|w| w.tag.grammatical_class()));
        if let Some(c) = modifier_classes.intersection(&other_classes).next() {
            return invalid(format!("modifier class {c:?} is also used by other words"));
        }
        let all_surfaces = self
            .nouns
            .iter()
            .flat_map(|n| n.forms.iter())
            .chain(
                self.modifiers
                    .iter()
                    .flat_map(|m| m.forms.values().flatten()),
            )
            .chain(self.verbs.iter().flat_map(|v| v.forms.iter()))
            .chain(self.preps.iter())
            .chain(self.words.iter().flat_map(|w| [&w.surface, &w.lexeme]));
        for s in all_surfaces {
            if !surface_ok(s) {
                return invalid(format!("bad surface form {s:?}"));
            }
        }
        // tags are built from these segments
        let tag_segments = self
            .modifiers
            .iter()
            .flat_map(|m| std::iter::once(&m.class).chain(&m.suffix))
            .chain(
                self.verbs
                    .iter()
                    .flat_map(|v| std::iter::once(&v.class).chain(&v.suffix)),
            );
        for seg in tag_segments {
            if parse_tag(seg).is_err() {
                return invalid(format!("bad tag segment {seg:?}"));
            }
        }

        if self.templates.is_empty() {
            return invalid("no templates");
        }
        for (i, t) in self.templates.iter().enumerate() {
            let name = format!("template {}", i + 1);
            if t.is_empty() {
                return invalid(format!("{name} is empty"));
            }
            let len = GrammarSpec::template_len(t);
            if len > DEFAULT_MAX_LEN {
                return invalid(format!(
                    "{name} has {len} tokens, more than {DEFAULT_MAX_LEN}"
                ));
            }
            let mut seen_noun = false;
            for slot in t {
                match slot {
                    Slot::NounPhrase { modifiers } | Slot::PrepPhrase { modifiers } => {
                        if *modifiers == 0 {
                            return invalid(format!(
                                "{name}: a noun without modifiers has no agreement context"
                            ));
                        }
                        if self.modifiers.is_empty() {
                            return invalid("noun phrases need at least one modifier");
                        }
                        if matches!(slot, Slot::PrepPhrase { .. }) && self.preps.is_empty() {
                            return invalid(format!("{name}: no prepositions defined"));
                        }
                        seen_noun = true;
                    }
                    Slot::Verb => {
                        if self.verbs.is_empty() {
                            return invalid(format!("{name}: no verbs defined"));
                        }
                        if !seen_noun {
                            return invalid(format!("{name}: verb before any noun"));
                        }
                    }
                    Slot::Filler(class) => {
                        if !self
                            .words
                            .iter()
                            .any(|w| w.tag.grammatical_class() == class)
                        {
                            return invalid(format!("{name}: no filler words of class {class:?}"));
                        }
                    }
                }
            }
        }

        // Agreement determinism: every single modifier form must leave
        // exactly one tag of every noun of its gender.
        for noun in self.nouns.iter() {
            for m in &self.modifiers {
                for number in &self.numbers {
                    for case in &self.cases {
                        let ctx = Token::new(
                            "x",
                            &m.lexeme,
                            self.modifier_tag(m, number, case, &noun.gender),
                        );
                        let n = self.consistent_tags(noun, std::slice::from_ref(&ctx)).len();
                        if n != 1 {
                            return invalid(format!(
                                "modifier {:?} {number}:{case} admits {n} tags of noun {:?}",
                                m.lexeme, noun.lexeme
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Tags from `noun`'s inflection table that agree with every modifier
    /// immediately to the left of the noun.
    fn consistent_tags(&self, noun: &Noun, left: &[Token]) -> Vec<Tag> {
        let classes = self.modifier_classes();
        let modifiers: Vec<&Token> = left
            .iter()
            .rev()
            .take_while(|t| classes.contains(t.tag.grammatical_class()))
            .collect();
        let schema = self.schema();
        let mut out = Vec::new();
        for number in &self.numbers {
            for case in &self.cases {
                let agrees = modifiers.iter().all(|t| {
                    schema.tag_attribute(&t.tag, Attribute::Number) == Some(number)
                        && schema.tag_attribute(&t.tag, Attribute::Case) == Some(case)
                        && schema.tag_attribute(&t.tag, Attribute::Gender) == Some(&noun.gender)
                });
                if agrees {
                    out.push(self.noun_tag(number, case, &noun.gender));
                }
            }
        }
        out
    }

    /// The noun whose lexeme or abbreviation is `word`, if abbreviatable.
    pub fn abbreviatable_noun(&self, word: &str) -> Option<&Noun> {
        let bare = word.strip_suffix('.').unwrap_or(word);
        self.nouns
            .iter()
            .find(|n| n.abbrev.is_some() && (n.lexeme == word || n.abbrev.as_deref() == Some(bare)))
    }

    /// Dictionary holding every noun's full inflection table.
    pub fn dictionary(&self) -> MorphDict {
        let mut dict = MorphDict::new();
        for n in &self.nouns {
            let mut forms = n.forms.iter();
            for number in &self.numbers {
                for case in &self.cases {
                    let form = forms.next().expect("validated table size");
                    dict.insert(form, &n.lexeme, &self.noun_tag(number, case, &n.gender));
                }
            }
        }
        dict
    }

    pub fn abbrev_table(&self) -> AbbrevTable {
        let entries = self
            .nouns
            .iter()
            .filter_map(|n| {
                n.abbrev.as_ref().map(|a| AbbrevEntry {
                    abbrev: a.clone(),
                    base_form: n.lexeme.clone(),
                    note: None,
                })
            })
            .collect();
        AbbrevTable::new(entries).expect("validated abbreviations")
    }
}

/// Output of [`generate_corpus`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthCorpus {
    pub sentences: Vec<Sentence>,
    pub dict: MorphDict,
    pub abbrevs: AbbrevTable,
}

impl SynthCorpus {
    pub fn corpus_source(&self) -> String {
        let mut buf = Vec::new();
        write_corpus(&mut buf, &self.sentences).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 tokens")
    }

    pub fn dict_source(&self) -> String {
        let mut buf = Vec::new();
        self.dict.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 forms")
    }

    pub fn abbrev_source(&self) -> String {
        let mut buf = Vec::new();
        self.abbrevs.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 entries")
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

struct Generator<'a> {
    spec: &'a GrammarSpec,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn noun_phrase(&mut self, modifiers: usize, case: usize, tokens: &mut Vec<Token>) -> usize {
        let spec = self.spec;
        let noun = pick(&mut self.rng, &spec.nouns);
        let number = self.rng.gen_range(0..spec.numbers.len());
        let cell = number * spec.cases.len() + case;
        let (num, cs) = (&spec.numbers[number], &spec.cases[case]);
        for _ in 0..modifiers {
            let m = pick(&mut self.rng, &spec.modifiers);
            let form = &m.forms[&noun.gender][cell];
            tokens.push(Token::new(
                form,
                &m.lexeme,
                spec.modifier_tag(m, num, cs, &noun.gender),
            ));
        }
        tokens.push(Token::new(
            &noun.forms[cell],
            &noun.lexeme,
            spec.noun_tag(num, cs, &noun.gender),
        ));
        number
    }

    fn sentence(&mut self) -> Sentence {
        let spec = self.spec;
        let template = pick(&mut self.rng, &spec.templates);
        let mut tokens = Vec::with_capacity(GrammarSpec::template_len(template));
        let mut last_number = None;
        for slot in template {
            match slot {
                Slot::NounPhrase { modifiers } => {
                    let case = self.rng.gen_range(0..spec.cases.len());
                    last_number = Some(self.noun_phrase(*modifiers, case, &mut tokens));
                }
                Slot::PrepPhrase { modifiers } => {
                    let prep = pick(&mut self.rng, &spec.preps);
                    let case = self.rng.gen_range(0..spec.cases.len());
                    tokens.push(Token::new(prep, prep, spec.prep_tag(&spec.cases[case])));
                    last_number = Some(self.noun_phrase(*modifiers, case, &mut tokens));
                }
                Slot::Verb => {
                    let v = pick(&mut self.rng, &spec.verbs);
                    let number = last_number.expect("validated: verb follows a noun");
                    tokens.push(Token::new(
                        &v.forms[number],
                        &v.lexeme,
                        spec.verb_tag(v, &spec.numbers[number]),
                    ));
                }
                Slot::Filler(class) => {
                    let n = spec
                        .words
                        .iter()
                        .filter(|w| w.tag.grammatical_class() == class)
                        .count();
                    let k = self.rng.gen_range(0..n);
                    let w = spec
                        .words
                        .iter()
                        .filter(|w| w.tag.grammatical_class() == class)
                        .nth(k)
                        .expect("k < n");
                    tokens.push(Token::new(&w.surface, &w.lexeme, w.tag.clone()));
                }
            }
        }
        Sentence { tokens }
    }
}

/// Generates `n_sentences` sentences from `spec`, plus the dictionary and
/// abbreviation table they are annotated against. Deterministic in
/// `spec.seed`.
pub fn generate_corpus(spec: &GrammarSpec, n_sentences: usize) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let mut generator = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    let sentences = (0..n_sentences).map(|_| generator.sentence()).collect();
    Ok(SynthCorpus {
        sentences,
        dict: spec.dictionary(),
        abbrevs: spec.abbrev_table(),
    })
}

/// The unique tag the grammar allows at `position`, derived from the
/// surrounding tokens only; the token's own tag is never consulted. The
/// token is matched by lexeme or by abbreviation.
pub fn oracle_tag(
    spec: &GrammarSpec,
    sentence: &Sentence,
    position: usize,
) -> Result<Tag, SynthError> {
    let token = sentence
        .tokens
        .get(position)
        .ok_or(SynthError::NotAbbreviatable(position))?;
    let noun = spec
        .abbreviatable_noun(&token.lexeme)
        .or_else(|| spec.abbreviatable_noun(&token.surface))
        .ok_or(SynthError::NotAbbreviatable(position))?;
    let mut tags = spec.consistent_tags(noun, &sentence.tokens[..position]);
    if tags.len() != 1 {
        return Err(SynthError::AmbiguousContext {
            position,
            candidates: tags.len(),
        });
    }
    Ok(tags.remove(0))
}
