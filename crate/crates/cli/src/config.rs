//! `--config` files: `key=value` lines named like the long flags.
//!
//! Values are spliced into the argument list right after the subcommand, so
//! flags given on the command line come later and win. Keys that belong to
//! other subcommands are ignored; keys no subcommand knows are an error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value", idx + 1);
        };
        let key = key.trim().trim_start_matches("--").to_owned();
        if out.iter().any(|(k, _)| *k == key) {
            bail!("config line {}: duplicate key {key}", idx + 1);
        }
        out.push((key, value.trim().to_owned()));
    }
    Ok(out)
}

/// Value of `--config` if present before any `--` separator.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter().skip(1);
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Index of the subcommand name in `args`.
fn subcommand_index(args: &[OsString], cmd: &Command) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" {
            i += 2;
            continue;
        }
        if cmd.find_subcommand(s.as_ref()).is_some() {
            return Some(i);
        }
        if !s.starts_with('-') {
            return None;
        }
        i += 1;
    }
    None
}

/// Returns `args` with config-file values inserted.
pub fn merge(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let entries = parse(&text).with_context(|| format!("in {}", path.display()))?;
    let Some(at) = subcommand_index(&args, cmd) else {
        return Ok(args);
    };
    let sub = cmd
        .find_subcommand(args[at].to_string_lossy().as_ref())
        .expect("found above");

    let known: BTreeSet<&str> = cmd
        .get_subcommands()
        .flat_map(|c| c.get_arguments())
        .filter_map(|a| a.get_long())
        .collect();
    let mut inject = Vec::new();
    for (key, value) in &entries {
        if key == "config" {
            bail!("config files cannot include other config files");
        }
        if !known.contains(key.as_str()) {
            bail!("unknown config key {key:?}");
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key)) else {
            continue;
        };
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" => inject.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => bail!("config key {key}: expected true or false, got {other:?}"),
            }
        } else {
            inject.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let mut merged = args;
    merged.splice(at + 1..at + 1, inject);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Arg;

    fn cmd() -> Command {
        Command::new("t")
            .arg(Arg::new("config").long("config").global(true))
            .subcommand(
                Command::new("train")
                    .args_override_self(true)
                    .arg(Arg::new("epochs").long("epochs"))
                    .arg(Arg::new("lr").long("lr"))
                    .arg(Arg::new("fast").long("fast").action(ArgAction::SetTrue)),
            )
            .subcommand(Command::new("eval").arg(Arg::new("model").long("model")))
    }

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parse_lines() {
        let e = parse("# c\nepochs = 3\n\n--lr=0.1\n").unwrap();
        assert_eq!(
            e,
            [("epochs".into(), "3".into()), ("lr".into(), "0.1".into())]
        );
        assert!(parse("epochs\n").is_err());
        assert!(parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "epochs=3\nlr=0.5\nmodel=m.bin\nfast=true\n").unwrap();
        let p = path.to_str().unwrap();
        let args = merge(os(&["t", "--config", p, "train", "--epochs", "9"]), &cmd()).unwrap();
        let m = cmd().try_get_matches_from(args).unwrap();
        let (_, sub) = m.subcommand().unwrap();
        assert_eq!(sub.get_one::<String>("epochs").unwrap(), "9");
        assert_eq!(sub.get_one::<String>("lr").unwrap(), "0.5");
        assert!(sub.get_flag("fast"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "epoch=3\n").unwrap();
        let p = path.to_str().unwrap();
        assert!(merge(os(&["t", "train", "--config", p]), &cmd()).is_err());
    }
}
