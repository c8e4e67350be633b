//! `--config FILE` support: file entries become flags placed before the user's own,
//! so explicit flags win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::commands::UsageError;

/// Replaces `--config PATH` (or `--config=PATH`) with the flags the file spells out.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        match arg.to_str() {
            Some("--config") => match iter.next() {
                Some(path) => config = Some(path),
                None => return Err(UsageError("--config needs a file path".into()).into()),
            },
            Some(s) if s.starts_with("--config=") => {
                config = Some(OsString::from(&s["--config=".len()..]))
            }
            _ => rest.push(arg),
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
    let flags = parse(&text).with_context(|| format!("in config file {}", path.display()))?;

    // flags go right after the subcommand name
    let Some(sub) = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
    else {
        return Err(UsageError("--config needs a subcommand".into()).into());
    };
    let at = sub + 2;
    let mut out: Vec<OsString> = rest[..at].to_vec();
    out.extend(flags.into_iter().map(OsString::from));
    out.extend_from_slice(&rest[at..]);
    Ok(out)
}

fn parse(text: &str) -> Result<Vec<String>> {
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(UsageError(format!(
                "line {}: expected `key = value`",
                n + 1
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') {
            bail!(UsageError(format!("line {}: bad key `{key}`", n + 1)));
        }
        match value {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            _ => {
                flags.push(format!("--{key}"));
                flags.push(value.to_string());
            }
        }
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn file_flags_precede_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\nmode = ddpm\nhetero = true\nfull = false\n\n",
        )
        .unwrap();
        let args = os(&[
            "rpd",
            "train",
            "--config",
            path.to_str().unwrap(),
            "--mode",
            "vpred",
        ]);
        let out = expand(args).unwrap();
        assert_eq!(
            out,
            os(&["rpd", "train", "--mode", "ddpm", "--hetero", "--mode", "vpred"])
        );
    }

    #[test]
    fn malformed_line_is_rejected() {
        assert!(parse("mode ddpm").is_err());
        assert!(parse("--mode = ddpm").is_err());
    }

    #[test]
    fn without_config_args_are_untouched() {
        let args = os(&["rpd", "verify", "--draws", "10"]);
        assert_eq!(expand(args.clone()).unwrap(), args);
    }
}
