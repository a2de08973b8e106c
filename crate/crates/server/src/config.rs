//! Flat `key = value` config files. Keys are long flag names of the chosen
//! subcommand; values given on the command line win.

use std::ffi::OsString;
use std::path::PathBuf;

/// Parse `key = value` lines. Blank lines and lines starting with `#` are
/// ignored; values may be wrapped in double quotes.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("config line {}: expected `key = value`", i + 1));
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", i + 1));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        out.push((key, value.to_string()));
    }
    Ok(out)
}

/// Value of `--config` in raw arguments, if any.
pub fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Insert config entries as flags right after the subcommand name so that
/// later command-line occurrences override them. `args[0]` is the program
/// and `args[1]` the subcommand.
pub fn merge_into_args(
    sub: &clap::Command,
    args: &[OsString],
    entries: &[(String, String)],
) -> Result<Vec<OsString>, String> {
    let mut flags = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err("config files cannot include other config files".into());
        }
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            return Err(format!(
                "unknown config key {key:?} for `{}`",
                sub.get_name()
            ));
        };
        if arg.get_action().takes_values() {
            flags.push(OsString::from(format!("--{key}")));
            flags.push(OsString::from(value));
        } else {
            match value.as_str() {
                "true" => flags.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => {
                    return Err(format!(
                        "config key {key:?} expects true or false, got {other:?}"
                    ))
                }
            }
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines() {
        let c = parse_config("# comment\n\nmin_len = 3\nout = \"a b\"\nseed=7\n").unwrap();
        assert_eq!(
            c,
            [
                ("min-len".to_string(), "3".to_string()),
                ("out".to_string(), "a b".to_string()),
                ("seed".to_string(), "7".to_string())
            ]
        );
        assert!(parse_config("novalue\n").is_err());
        assert!(parse_config(" = 3\n").is_err());
    }

    #[test]
    fn finds_config_flag() {
        let a: Vec<OsString> = ["taboo", "eval", "--config", "x.conf"]
            .map(OsString::from)
            .to_vec();
        assert_eq!(config_path(&a), Some(PathBuf::from("x.conf")));
        let b: Vec<OsString> = ["taboo", "eval", "--config=y"].map(OsString::from).to_vec();
        assert_eq!(config_path(&b), Some(PathBuf::from("y")));
    }
}
