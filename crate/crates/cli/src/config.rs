//! `key=value` config files and run manifests.
//!
//! Config keys are the long flag names of the chosen subcommand. A config
//! file is expanded into flags placed before the command-line flags, and keys
//! also given on the command line are dropped, so flags always win. The run
//! manifest is written in the same format and can be passed back as
//! `--config` to repeat a run.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{ArgMatches, Command};

use crate::util::CliError;

const RESERVED: &[&str] = &["config", "help", "version"];

/// Parses a config file body into ordered `(key, value, line)` entries.
pub fn parse_config(text: &str) -> Result<Vec<(String, String, usize)>, CliError> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!("config line {}: expected key=value", i + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", i + 1)));
        }
        if let Some((_, _, first)) = out.iter().find(|(k, _, _)| k == key) {
            return Err(CliError::usage(format!(
                "config line {}: `{key}` already set on line {first}",
                i + 1
            )));
        }
        out.push((key.to_string(), value.to_string(), i + 1));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn given_on_command_line(args: &[OsString], key: &str) -> bool {
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s.strip_prefix("--")
            .is_some_and(|rest| rest == key || rest.starts_with(&format!("{key}=")))
    })
}

/// Expands `--config FILE` into flags for the subcommand named in `raw[1]`.
pub fn expand_config(cli: &Command, raw: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    if raw.len() < 2 {
        return Ok(raw);
    }
    let user = &raw[2..];
    let Some(path) = config_path(user) else {
        return Ok(raw);
    };
    let name = raw[1].to_string_lossy().to_string();
    let Some(sub) = cli.find_subcommand(&name) else {
        return Ok(raw);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value, line) in parse_config(&text)? {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && !RESERVED.contains(&key.as_str()))
            .ok_or_else(|| {
                CliError::usage(format!(
                    "{}:{line}: unknown key `{key}` for `{name}`",
                    path.display()
                ))
            })?;
        if given_on_command_line(user, &key) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}={value}").into());
        } else {
            match value.as_str() {
                "true" => injected.push(format!("--{key}").into()),
                "false" => {}
                _ => {
                    return Err(CliError::usage(format!(
                        "{}:{line}: `{key}` takes true or false",
                        path.display()
                    )))
                }
            }
        }
    }
    let mut out = raw[..2].to_vec();
    out.extend(injected);
    out.extend(user.iter().cloned());
    Ok(out)
}

/// The resolved settings of one run, as `key=value` lines.
pub fn manifest(sub: &Command, matches: &ArgMatches, out_dir: &Path, extra: &[(&str, String)]) -> String {
    let mut text = format!(
        "# ccemb {} run manifest\n# command={}\n",
        env!("CARGO_PKG_VERSION"),
        sub.get_name()
    );
    for (k, v) in extra {
        text.push_str(&format!("# resolved {k}={v}\n"));
    }
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if RESERVED.contains(&long) {
            continue;
        }
        if long == "out" {
            text.push_str(&format!("out={}\n", out_dir.display()));
            continue;
        }
        if let Some(raw) = matches.get_raw(arg.get_id().as_str()) {
            let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            text.push_str(&format!("{long}={}\n", values.join(",")));
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_duplicates() {
        let entries = parse_config("# hi\nM = 8\n\nK=16\n").unwrap();
        assert_eq!(entries[0], ("M".into(), "8".into(), 2));
        assert_eq!(entries[1].0, "K");
        assert!(parse_config("M=1\nM=2\n").is_err());
        assert!(parse_config("just words\n").is_err());
    }

    #[test]
    fn finds_config_path() {
        let args: Vec<OsString> = ["--M", "4", "--config", "a.cfg"].iter().map(Into::into).collect();
        assert_eq!(config_path(&args), Some("a.cfg".into()));
        let args: Vec<OsString> = ["--config=b.cfg"].iter().map(Into::into).collect();
        assert_eq!(config_path(&args), Some("b.cfg".into()));
        assert!(given_on_command_line(&args, "config"));
        assert!(!given_on_command_line(&args, "conf"));
    }
}
