//! Reading inputs and writing outputs atomically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use abbrexp::corpus::{read_corpus, Sentence, Strictness};
use abbrexp::morphdict::{AbbrevTable, MorphDict};
use abbrexp::nn::{load_model, LoadedModel};
use abbrexp::tagset::{AttributeSchema, TagVocab, VocabKind};
use anyhow::{Context, Result};
use tempfile::NamedTempFile;

use crate::UsageError;

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

/// Fails unless every input exists and every output's directory does.
pub fn check_paths(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for p in inputs {
        if !p.is_file() {
            return Err(UsageError(format!("input file {} does not exist", p.display())).into());
        }
    }
    for p in outputs {
        let dir = parent_dir(p);
        if !dir.is_dir() {
            return Err(
                UsageError(format!("output directory {} does not exist", dir.display())).into(),
            );
        }
    }
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes through a temporary file in the target directory, renamed into
/// place only after `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let tmp = NamedTempFile::new_in(parent_dir(path))
        .with_context(|| format!("cannot create a temporary file next to {}", path.display()))?;
    let mut w = BufWriter::new(tmp);
    fill(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
    let tmp = w.into_inner().map_err(|e| e.into_error())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot rename into {}", path.display()))?;
    Ok(())
}

pub fn history_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".history.tsv");
    PathBuf::from(name)
}

pub fn corpus(path: &Path) -> Result<Vec<Sentence>> {
    let read = read_corpus(open(path)?, Strictness::Strict)
        .with_context(|| format!("in {}", path.display()))?;
    Ok(read.sentences)
}

pub fn dict(path: &Path) -> Result<MorphDict> {
    MorphDict::read(open(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn abbrevs(path: &Path) -> Result<AbbrevTable> {
    AbbrevTable::read(open(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn vocab(path: &Path, kind: VocabKind) -> Result<TagVocab> {
    TagVocab::read(open(path)?, kind).with_context(|| format!("in {}", path.display()))
}

pub fn schema(path: Option<&Path>) -> Result<AttributeSchema> {
    match path {
        Some(p) => AttributeSchema::read(open(p)?).with_context(|| format!("in {}", p.display())),
        None => Ok(AttributeSchema::default()),
    }
}

pub fn model(path: &Path) -> Result<LoadedModel> {
    load_model(open(path)?).with_context(|| format!("in {}", path.display()))
}
