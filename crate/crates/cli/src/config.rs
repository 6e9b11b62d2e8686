//! `key = value` configuration files merged into the command line.
//!
//! Keys are flag names (`common-n` or `common_n`). A key is applied only when
//! the selected subcommand has that flag and it was not given explicitly, so
//! command-line flags always win. Keys belonging to other subcommands are
//! ignored, which lets one file serve a whole pipeline.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Arg, Command};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(vocabsel::Error::Malformed {
                line: n + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!(vocabsel::Error::Malformed {
                line: n + 1,
                reason: "empty key".to_string(),
            });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config` in `args`, if any.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(p.into());
        }
    }
    None
}

fn find_long<'a>(cmd: &'a Command, long: &str) -> Option<&'a Arg> {
    cmd.get_arguments().find(|a| a.get_long() == Some(long))
}

fn given(args: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("--{long}=");
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&prefix))
}

/// Appends config-file values for flags missing from `args`.
pub fn merge(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(vocabsel::Error::Io)
        .with_context(|| format!("cannot read config file {}", Path::new(&path).display()))?;
    let entries = parse(&text)?;

    let global_values = ["--config", "--threads"];
    let mut sub_name = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if global_values.contains(&a.as_ref()) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            sub_name = Some(a.into_owned());
            break;
        }
    }
    let Some(sub) = sub_name.as_deref().and_then(|n| cmd.find_subcommand(n)) else {
        return Ok(args);
    };

    let mut out = args.clone();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let arg = find_long(sub, &key).or_else(|| find_long(cmd, &key));
        let Some(arg) = arg else {
            if cmd.get_subcommands().any(|c| find_long(c, &key).is_some()) {
                continue;
            }
            bail!(vocabsel::Error::InvalidParameter {
                name: "config",
                reason: format!("unknown key `{key}`"),
            });
        };
        if given(&args, &key) {
            continue;
        }
        if arg.get_action().takes_values() {
            out.push(format!("--{key}").into());
            out.push(value.into());
        } else if matches!(value.as_str(), "true" | "yes" | "1") {
            out.push(format!("--{key}").into());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse("# pipeline\ncommon_n = 1000\n\nk=50 # per word\n").unwrap();
        assert_eq!(e, vec![("common-n".into(), "1000".into()), ("k".into(), "50".into())]);
        assert!(parse("just a line").is_err());
        assert!(parse("= 3").is_err());
    }
}
