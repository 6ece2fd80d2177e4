//! Morphosyntactic tags, attribute value sets and dense tag vocabularies.
//!
//! Tags use the colon-separated surface syntax of NKJP-style tagsets:
//! the first segment is the grammatical class, the remaining segments are
//! attribute values (`subst:sg:gen:m3`, `brev:pun`).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Spelling of the reserved input token that replaces the tag to be inferred.
pub const MASK_TOKEN: &str = "<MASK>";

#[derive(Debug, Error)]
pub enum TagError {
    #[error("empty tag")]
    EmptyTag,
    #[error("malformed tag {0:?}")]
    MalformedTag(String),
    #[error("cannot build a vocabulary from an empty tag set")]
    EmptyTagSet,
    #[error("tag {0:?} is not in the vocabulary")]
    UnknownTag(String),
    #[error("vocabulary line {line}: {reason}")]
    BadVocabFile { line: usize, reason: String },
    #[error("schema line {line}: {reason}")]
    BadSchema { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A parsed morphosyntactic tag.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag {
    class: String,
    attributes: Vec<String>,
}

fn check_segment(segment: &str, whole: &str) -> Result<(), TagError> {
    if segment.is_empty() || segment.chars().any(|c| c == ':' || c.is_whitespace()) {
        return Err(TagError::MalformedTag(whole.to_owned()));
    }
    Ok(())
}

impl Tag {
    pub fn new<S: Into<String>>(class: S, attributes: Vec<String>) -> Result<Tag, TagError> {
        let tag = Tag {
            class: class.into(),
            attributes,
        };
        let whole = tag.to_string();
        check_segment(&tag.class, &whole)?;
        for attr in &tag.attributes {
            check_segment(attr, &whole)?;
        }
        Ok(tag)
    }

    pub fn grammatical_class(&self) -> &str {
        &self.class
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    /// All segments, class first.
    pub fn segments(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.class.as_str()).chain(self.attributes.iter().map(String::as_str))
    }
}

/// Parses a colon-separated tag string.
pub fn parse_tag(s: &str) -> Result<Tag, TagError> {
    if s.is_empty() {
        return Err(TagError::EmptyTag);
    }
    let mut segments = s.split(':');
    let class = segments.next().unwrap_or_default();
    check_segment(class, s)?;
    let attributes = segments
        .map(|seg| check_segment(seg, s).map(|()| seg.to_owned()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tag {
        class: class.to_owned(),
        attributes,
    })
}

/// Formats a tag back to its surface string; the inverse of [`parse_tag`].
pub fn format_tag(tag: &Tag) -> String {
    tag.to_string()
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.class)?;
        for attr in &self.attributes {
            write!(f, ":{attr}")?;
        }
        Ok(())
    }
}

impl FromStr for Tag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tag(s)
    }
}

/// Attributes used by the error taxonomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    Number,
    Case,
    Gender,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Number, Attribute::Case, Attribute::Gender];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Number => "number",
            Attribute::Case => "case",
            Attribute::Gender => "gender",
        }
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "number" => Ok(Attribute::Number),
            "case" => Ok(Attribute::Case),
            "gender" => Ok(Attribute::Gender),
            other => Err(format!("unknown attribute {other:?}")),
        }
    }
}

/// Closed value sets per attribute, e.g. `number = {sg, pl}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeSchema {
    values: BTreeMap<Attribute, Vec<String>>,
}

impl Default for AttributeSchema {
    /// The NKJP value sets for number, case and gender.
    fn default() -> Self {
        let set = |vals: &[&str]| vals.iter().map(|v| v.to_string()).collect::<Vec<_>>();
        let mut values = BTreeMap::new();
        values.insert(Attribute::Number, set(&["sg", "pl"]));
        values.insert(
            Attribute::Case,
            set(&["nom", "gen", "dat", "acc", "inst", "loc", "voc"]),
        );
        values.insert(Attribute::Gender, set(&["m1", "m2", "m3", "f", "n"]));
        AttributeSchema { values }
    }
}

impl AttributeSchema {
    pub fn new(number: Vec<String>, case: Vec<String>, gender: Vec<String>) -> AttributeSchema {
        let values = BTreeMap::from([
            (Attribute::Number, number),
            (Attribute::Case, case),
            (Attribute::Gender, gender),
        ]);
        AttributeSchema { values }
    }

    /// Reads `attribute=value1,value2,...` lines; `#` starts a comment.
    ///
    /// Attributes absent from the file have empty value sets.
    pub fn read<R: BufRead>(reader: R) -> Result<AttributeSchema, TagError> {
        let mut values = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let bad = |reason: String| TagError::BadSchema {
                line: lineno,
                reason,
            };
            let (key, vals) = content
                .split_once('=')
                .ok_or_else(|| bad("expected attribute=values".into()))?;
            let attr: Attribute = key.trim().parse().map_err(bad)?;
            let vals: Vec<String> = vals
                .split(',')
                .map(|v| v.trim().to_owned())
                .filter(|v| !v.is_empty())
                .collect();
            if values.insert(attr, vals).is_some() {
                return Err(bad(format!("duplicate attribute {}", attr.name())));
            }
        }
        Ok(AttributeSchema { values })
    }

    pub fn values(&self, attribute: Attribute) -> &[String] {
        self.values
            .get(&attribute)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// First attribute segment of `tag` that belongs to `attribute`'s value set.
    pub fn tag_attribute<'t>(&self, tag: &'t Tag, attribute: Attribute) -> Option<&'t str> {
        let set = self.values(attribute);
        tag.attributes()
            .iter()
            .map(String::as_str)
            .find(|seg| set.iter().any(|v| v == seg))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabKind {
    /// Network input tags; index 0 is the mask token.
    Input,
    /// Prediction targets; no mask token.
    Output,
}

/// Dense bijection between tag strings and indices `0..len`.
#[derive(Clone, Debug)]
pub struct TagVocab {
    kind: VocabKind,
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for TagVocab {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.entries == other.entries
    }
}

impl TagVocab {
    fn from_entries(kind: VocabKind, entries: Vec<String>) -> Result<TagVocab, TagError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(TagError::BadVocabFile {
                    line: i + 1,
                    reason: format!("duplicate entry {e:?}"),
                });
            }
        }
        Ok(TagVocab {
            kind,
            entries,
            index,
        })
    }

    /// Builds a vocabulary from tag counts.
    ///
    /// Tags are ordered by descending count, ties broken lexicographically.
    /// Input vocabularies get the mask token at index 0.
    pub fn build<I, S>(tags: I, kind: VocabKind) -> Result<TagVocab, TagError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for tag in tags {
            let tag = tag.as_ref();
            if tag == MASK_TOKEN {
                continue;
            }
            *counts.entry(tag.to_owned()).or_default() += 1;
        }
        if counts.is_empty() {
            return Err(TagError::EmptyTagSet);
        }
        let mut ordered: Vec<(String, usize)> = counts.into_iter().collect();
        ordered.sort_by(|(a, ca), (b, cb)| cb.cmp(ca).then_with(|| a.cmp(b)));
        let mut entries = Vec::with_capacity(ordered.len() + 1);
        if kind == VocabKind::Input {
            entries.push(MASK_TOKEN.to_owned());
        }
        entries.extend(ordered.into_iter().map(|(t, _)| t));
        TagVocab::from_entries(kind, entries)
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mask_index(&self) -> Option<usize> {
        match self.kind {
            VocabKind::Input => Some(0),
            VocabKind::Output => None,
        }
    }

    pub fn encode(&self, tag: &str) -> Result<usize, TagError> {
        self.index
            .get(tag)
            .copied()
            .ok_or_else(|| TagError::UnknownTag(tag.to_owned()))
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.index.contains_key(tag)
    }

    pub fn decode(&self, index: usize) -> Option<&str> {
        self.entries.get(index).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// SHA-256 over the kind and the entries in index order.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(match self.kind {
            VocabKind::Input => b"input\n".as_slice(),
            VocabKind::Output => b"output\n".as_slice(),
        });
        for e in &self.entries {
            hasher.update(e.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().into()
    }

    /// One tag per line, in index order.
    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(writer, "{e}")?;
        }
        writer.flush()
    }

    pub fn read<R: BufRead>(reader: R, kind: VocabKind) -> Result<TagVocab, TagError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            let bad = |reason: String| TagError::BadVocabFile {
                line: idx + 1,
                reason,
            };
            if line.is_empty() {
                return Err(bad("empty line".into()));
            }
            let is_mask = line == MASK_TOKEN;
            match (kind, idx == 0, is_mask) {
                (VocabKind::Input, true, false) => {
                    return Err(bad(format!("first line must be {MASK_TOKEN}")))
                }
                (VocabKind::Input, false, true) | (VocabKind::Output, _, true) => {
                    return Err(bad(format!("unexpected {MASK_TOKEN}")))
                }
                _ => {}
            }
            if !is_mask {
                parse_tag(line).map_err(|e| bad(e.to_string()))?;
            }
            entries.push(line.to_owned());
        }
        if entries.iter().all(|e| e == MASK_TOKEN) {
            return Err(TagError::EmptyTagSet);
        }
        TagVocab::from_entries(kind, entries)
    }
}
