//! `key = value` config files merged in front of the command-line flags.
//!
//! A file line `N = 64,128` becomes `--N 64,128`. File flags are inserted
//! right after the subcommand, so flags given on the command line come
//! later and override them.

use std::fs;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("--config needs a path")]
    MissingPath,
}

/// Parses the body of a config file into `(key, value)` pairs. Blank lines
/// and `#` comments are skipped; values may be quoted.
pub fn parse_pairs(text: &str, path: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: path.to_string(),
                line: i + 1,
            });
        };
        let key = k.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                path: path.to_string(),
                line: i + 1,
            });
        }
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.push((key.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Removes `--config <path>` (or `--config=<path>`) from `args` and splices
/// the file's flags in after the first of `subcommands` found.
pub fn expand_args(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>, ConfigError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or(ConfigError::MissingPath)?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).map_err(|source| ConfigError::Read {
        path: path.clone(),
        source,
    })?;
    let mut flags = Vec::new();
    for (k, v) in parse_pairs(&text, &path)? {
        flags.push(format!("--{k}"));
        flags.push(v);
    }
    let at = rest
        .iter()
        .position(|a| subcommands.contains(&a.as_str()))
        .map_or(rest.len(), |p| p + 1);
    let tail = rest.split_off(at);
    rest.extend(flags);
    rest.extend(tail);
    Ok(rest)
}
