//! Morphological dictionary and abbreviation table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::tagset::{parse_tag, Tag};

#[derive(Debug, Error)]
pub enum DictError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unknown abbreviation {0:?}")]
    UnknownAbbrev(String),
    #[error("no dictionary form of {lexeme:?} with tag {tag}")]
    NoSuchForm { lexeme: String, tag: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Splits a data line into tab-separated fields, ignoring comments and blanks.
fn data_fields(line: &str) -> Option<Vec<&str>> {
    let line = line.trim_end_matches('\r');
    if line.is_empty() || line.starts_with('#') {
        return None;
    }
    Some(line.split('\t').collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbbrevEntry {
    pub abbrev: String,
    pub base_form: String,
    pub note: Option<String>,
}

/// Index of an entry in its [`AbbrevTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbbrevId(pub u32);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbbrevTable {
    entries: Vec<AbbrevEntry>,
    by_abbrev: HashMap<String, AbbrevId>,
    by_base: HashMap<String, AbbrevId>,
}

impl AbbrevTable {
    pub fn new(entries: Vec<AbbrevEntry>) -> Result<AbbrevTable, DictError> {
        let mut table = AbbrevTable::default();
        for (i, entry) in entries.into_iter().enumerate() {
            let bad = |reason: String| DictError::Parse {
                line: i + 1,
                reason,
            };
            if entry.abbrev.is_empty() || entry.base_form.is_empty() {
                return Err(bad("empty abbreviation or base form".into()));
            }
            if entry.abbrev.ends_with('.') {
                return Err(bad(format!(
                    "abbreviation {:?} carries a period",
                    entry.abbrev
                )));
            }
            table.push(entry).map_err(bad)?;
        }
        Ok(table)
    }

    fn push(&mut self, entry: AbbrevEntry) -> Result<(), String> {
        let id = AbbrevId(self.entries.len() as u32);
        if self.by_abbrev.contains_key(&entry.abbrev) {
            return Err(format!("duplicate abbreviation {:?}", entry.abbrev));
        }
        self.by_abbrev.insert(entry.abbrev.clone(), id);
        // several abbreviations may share a base form; the first one wins
        self.by_base.entry(entry.base_form.clone()).or_insert(id);
        self.entries.push(entry);
        Ok(())
    }

    /// Reads `abbrev<TAB>base_form[<TAB>note]` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<AbbrevTable, DictError> {
        let mut table = AbbrevTable::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let Some(fields) = data_fields(&line) else {
                continue;
            };
            let bad = |reason: String| DictError::Parse {
                line: idx + 1,
                reason,
            };
            if !(2..=3).contains(&fields.len()) {
                return Err(bad(format!("expected 2 or 3 fields, got {}", fields.len())));
            }
            let (abbrev, base) = (fields[0], fields[1]);
            if abbrev.is_empty() || base.is_empty() {
                return Err(bad("empty field".into()));
            }
            if abbrev.ends_with('.') {
                return Err(bad(format!("abbreviation {abbrev:?} carries a period")));
            }
            let note = fields
                .get(2)
                .filter(|n| !n.is_empty())
                .map(|n| n.to_string());
            table
                .push(AbbrevEntry {
                    abbrev: abbrev.to_owned(),
                    base_form: base.to_owned(),
                    note,
                })
                .map_err(bad)?;
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for e in &self.entries {
            match &e.note {
                Some(note) => writeln!(writer, "{}\t{}\t{}", e.abbrev, e.base_form, note)?,
                None => writeln!(writer, "{}\t{}", e.abbrev, e.base_form)?,
            }
        }
        writer.flush()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[AbbrevEntry] {
        &self.entries
    }

    pub fn get(&self, id: AbbrevId) -> Option<&AbbrevEntry> {
        self.entries.get(id.0 as usize)
    }

    /// Looks up an abbreviation; a single trailing period is ignored.
    pub fn lookup(&self, abbrev: &str) -> Option<AbbrevId> {
        let key = abbrev.strip_suffix('.').unwrap_or(abbrev);
        self.by_abbrev.get(key).copied()
    }

    pub fn by_base_form(&self, lexeme: &str) -> Option<AbbrevId> {
        self.by_base.get(lexeme).copied()
    }
}

/// Result of resolving an abbreviation to a surface form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expansion {
    pub form: String,
    pub base_form: String,
    /// More than one form shares the requested tag; `form` is the smallest.
    pub ambiguous: bool,
}

/// `(lexeme, tag) -> form` mappings in both directions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MorphDict {
    forward: BTreeMap<String, BTreeSet<(String, String)>>,
    reverse: HashMap<(String, String), Vec<String>>,
}

impl MorphDict {
    pub fn new() -> MorphDict {
        MorphDict::default()
    }

    /// Adds one entry; duplicates are ignored. Returns whether it was new.
    pub fn insert(&mut self, form: &str, lexeme: &str, tag: &Tag) -> bool {
        let tag = tag.to_string();
        let fresh = self
            .forward
            .entry(lexeme.to_owned())
            .or_default()
            .insert((tag.clone(), form.to_owned()));
        if fresh {
            let forms = self.reverse.entry((lexeme.to_owned(), tag)).or_default();
            let pos = forms
                .binary_search_by(|f| f.as_str().cmp(form))
                .unwrap_or_else(|p| p);
            forms.insert(pos, form.to_owned());
        }
        fresh
    }

    /// Reads `form<TAB>lemma<TAB>tag` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<MorphDict, DictError> {
        let mut dict = MorphDict::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let Some(fields) = data_fields(&line) else {
                continue;
            };
            let bad = |reason: String| DictError::Parse {
                line: idx + 1,
                reason,
            };
            let [form, lexeme, tag] = fields[..] else {
                return Err(bad(format!("expected 3 fields, got {}", fields.len())));
            };
            if form.is_empty() || lexeme.is_empty() {
                return Err(bad("empty field".into()));
            }
            let tag = parse_tag(tag).map_err(|e| bad(e.to_string()))?;
            dict.insert(form, lexeme, &tag);
        }
        Ok(dict)
    }

    /// Writes entries grouped by lexeme, in sorted order.
    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for (lexeme, entries) in &self.forward {
            for (tag, form) in entries {
                writeln!(writer, "{form}\t{lexeme}\t{tag}")?;
            }
        }
        writer.flush()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Number of distinct `(form, lexeme, tag)` entries.
    pub fn len(&self) -> usize {
        self.forward.values().map(BTreeSet::len).sum()
    }

    /// All `(tag, form)` pairs of a lexeme; empty when unknown.
    pub fn inflected_forms(&self, lexeme: &str) -> Vec<(&str, &str)> {
        self.forward
            .get(lexeme)
            .map(|set| set.iter().map(|(t, f)| (t.as_str(), f.as_str())).collect())
            .unwrap_or_default()
    }

    /// Surface forms of `lexeme` carrying exactly `tag`, sorted.
    pub fn forms(&self, lexeme: &str, tag: &str) -> &[String] {
        self.reverse
            .get(&(lexeme.to_owned(), tag.to_owned()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, lexeme: &str, tag: &str) -> bool {
        !self.forms(lexeme, tag).is_empty()
    }

    pub fn lexemes(&self) -> impl Iterator<Item = &str> {
        self.forward.keys().map(String::as_str)
    }

    /// Resolves `abbrev` to the form of its base lexeme carrying `predicted`.
    pub fn expand(
        &self,
        table: &AbbrevTable,
        abbrev: &str,
        predicted: &Tag,
    ) -> Result<Expansion, DictError> {
        let id = table
            .lookup(abbrev)
            .ok_or_else(|| DictError::UnknownAbbrev(abbrev.to_owned()))?;
        let base = &table.entries[id.0 as usize].base_form;
        let tag = predicted.to_string();
        match self.forms(base, &tag) {
            [] => Err(DictError::NoSuchForm {
                lexeme: base.clone(),
                tag,
            }),
            forms => Ok(Expansion {
                form: forms[0].clone(),
                base_form: base.clone(),
                ambiguous: forms.len() > 1,
            }),
        }
    }
}
