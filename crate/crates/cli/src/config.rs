//! `--config FILE`: one `key = value` per line, `#` starts a comment line.
//! Keys are the subcommand's long flag names (`_` and `-` are
//! interchangeable). File entries are spliced in ahead of the command-line
//! flags, so flags given on the command line win.

use std::collections::HashSet;
use std::ffi::OsString;

use clap::CommandFactory;

use crate::{Cli, CliError};

/// Parsed entries as `(line, key, value)`, keys normalised to flag form.
pub fn parse_config(text: &str) -> Result<Vec<(usize, String, String)>, CliError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected `key = value`",
                i + 1
            )));
        };
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key or value", i + 1)));
        }
        if !seen.insert(key.clone()) {
            return Err(CliError::Usage(format!("config line {}: duplicate key `{key}`", i + 1)));
        }
        out.push((i + 1, key, value.to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Expand a `--config` file into explicit flags. Unknown keys are errors.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(sub_pos) = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1)
    else {
        return Ok(args);
    };
    let Some(path) = config_path(&args[sub_pos + 1..]) else {
        return Ok(args);
    };
    let sub = args[sub_pos].to_string_lossy().into_owned();
    let cmd = Cli::command();
    // Leave unknown subcommands for clap to report.
    let Some(sc) = cmd.find_subcommand(&sub) else {
        return Ok(args);
    };
    let known: HashSet<&str> = sc
        .get_arguments()
        .filter_map(|a| a.get_long())
        .filter(|l| !matches!(*l, "config" | "help"))
        .collect();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.to_string_lossy())))?;
    let mut spliced = Vec::new();
    for (line, key, value) in parse_config(&text)? {
        if !known.contains(key.as_str()) {
            return Err(CliError::Usage(format!(
                "config file {} line {line}: unknown key `{key}` for `{sub}`",
                path.to_string_lossy()
            )));
        }
        spliced.push(OsString::from(format!("--{key}={value}")));
    }
    let mut out = args[..=sub_pos].to_vec();
    out.extend(spliced);
    out.extend_from_slice(&args[sub_pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_normalises_keys() {
        let e = parse_config("# c\n\nlong_only = true\n  scales=1,2 \n").unwrap();
        assert_eq!(
            e,
            vec![
                (3, "long-only".into(), "true".into()),
                (4, "scales".into(), "1,2".into())
            ]
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_config("scales 1,2").is_err());
        assert!(parse_config("a = 1\na = 2").is_err());
        assert!(parse_config("a =").is_err());
    }

    #[test]
    fn splices_before_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.cfg");
        std::fs::write(&cfg, "lookback = 200\n").unwrap();
        let args = os(&[
            "multiscale",
            "backtest",
            "--config",
            cfg.to_str().unwrap(),
            "--lookback",
            "300",
        ]);
        let out = expand_config(args).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s[2], "--lookback=200");
        assert_eq!(s.last().unwrap(), "300");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.cfg");
        std::fs::write(&cfg, "lookbak = 200\n").unwrap();
        let err = expand_config(os(&["multiscale", "backtest", "--config", cfg.to_str().unwrap()])).unwrap_err();
        assert!(err.to_string().contains("unknown key `lookbak`"));
    }
}
