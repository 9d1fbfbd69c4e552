//! Resolution of run settings: command line or `TEMT_*` environment, then the
//! `--config` file, then built-in defaults. Every resolved value is recorded so the
//! run report can echo it with its source.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::ArgMatches;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Flag,
    Env,
    File,
    Default,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Flag => "flag",
            Source::Env => "env",
            Source::File => "config",
            Source::Default => "default",
        })
    }
}

/// Parses a flat `key=value` file. `#` starts a comment line; keys may use `-` or `_`.
pub fn parse_config_file(
    text: &str,
    path: &Path,
    known: &BTreeSet<String>,
) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected key=value",
                path.display(),
                i + 1
            )));
        };
        let key = k.trim().replace('_', "-");
        if !known.contains(&key) {
            return Err(CliError::Usage(format!(
                "{}:{}: unknown setting `{}`",
                path.display(),
                i + 1,
                k.trim()
            )));
        }
        if out.insert(key, v.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!(
                "{}:{}: `{}` set twice",
                path.display(),
                i + 1,
                k.trim()
            )));
        }
    }
    Ok(out)
}

pub struct Resolver<'m> {
    matches: &'m ArgMatches,
    file: BTreeMap<String, String>,
    echo: Vec<(String, String, Source)>,
}

impl<'m> Resolver<'m> {
    pub fn new(matches: &'m ArgMatches, file: BTreeMap<String, String>) -> Self {
        Self {
            matches,
            file,
            echo: Vec::new(),
        }
    }

    fn cli_raw(&self, id: &str) -> Option<(Vec<String>, Source)> {
        let source = match self.matches.value_source(id)? {
            ValueSource::CommandLine => Source::Flag,
            ValueSource::EnvVariable => Source::Env,
            _ => return None,
        };
        let vals = self
            .matches
            .get_raw(id)?
            .map(|v| v.to_string_lossy().into_owned())
            .collect();
        Some((vals, source))
    }

    fn record(&mut self, id: &str, value: String, source: Source) {
        self.echo.push((id.replace('_', "-"), value, source));
    }

    /// Raw string for `id` and where it came from, if any layer sets it.
    fn lookup(&self, id: &str) -> Option<(String, Source)> {
        if let Some((vals, src)) = self.cli_raw(id) {
            return Some((vals.join(","), src));
        }
        self.file
            .get(&id.replace('_', "-"))
            .map(|v| (v.clone(), Source::File))
    }

    /// `cli` is the value clap parsed for `id`, if the flag or its variable was given.
    pub fn get<T>(&mut self, id: &str, cli: Option<T>, default: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.optional(id, cli)? {
            Some(v) => Ok(v),
            None => {
                let v = parse(id, default, Source::Default)?;
                self.record(id, default.to_string(), Source::Default);
                Ok(v)
            }
        }
    }

    pub fn optional<T>(&mut self, id: &str, cli: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let Some((raw, src)) = self.lookup(id) else {
            return Ok(None);
        };
        let v = match cli {
            Some(v) if src != Source::File => v,
            _ => parse(id, &raw, src)?,
        };
        self.record(id, raw, src);
        Ok(Some(v))
    }

    pub fn required_path(&mut self, id: &str, cli: Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.optional(id, cli)?.ok_or_else(|| {
            CliError::Usage(format!(
                "`--{}` is required (flag, TEMT_{} or `{}` in the config file)",
                id.replace('_', "-"),
                id.to_uppercase(),
                id.replace('_', "-")
            ))
        })
    }

    /// Repeated on the command line, comma-separated in the config file.
    pub fn list<T>(&mut self, id: &str, cli: Vec<T>, default: &str) -> Result<Vec<T>, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let (raw, src) = self
            .lookup(id)
            .unwrap_or_else(|| (default.to_string(), Source::Default));
        let vals = if !cli.is_empty() && matches!(src, Source::Flag | Source::Env) {
            cli
        } else {
            raw.split(',')
                .map(|s| parse(id, s.trim(), src))
                .collect::<Result<Vec<T>, _>>()?
        };
        self.record(id, raw, src);
        Ok(vals)
    }

    pub fn echo(&self) -> &[(String, String, Source)] {
        &self.echo
    }
}

fn parse<T>(id: &str, raw: &str, src: Source) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    raw.parse().map_err(|e| {
        CliError::Usage(format!(
            "invalid value `{raw}` for `{}` ({src}): {e}",
            id.replace('_', "-")
        ))
    })
}

/// Text encoder selection: `hash:<seed>` or `table:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncoderSpec {
    Hash(u64),
    Table(PathBuf),
}

impl FromStr for EncoderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("hash", seed)) => seed
                .parse()
                .map(EncoderSpec::Hash)
                .map_err(|_| format!("bad hash seed `{seed}`")),
            Some(("table", path)) if !path.is_empty() => Ok(EncoderSpec::Table(PathBuf::from(path))),
            _ => Err("expected hash:<seed> or table:<path>".into()),
        }
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderSpec::Hash(seed) => write!(f, "hash:{seed}"),
            EncoderSpec::Table(p) => write!(f, "table:{}", p.display()),
        }
    }
}
