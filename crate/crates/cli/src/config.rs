//! `key = value` configuration files, expanded into command-line flags.
//!
//! Keys are flag names without the leading dashes. `true`/`false` toggle
//! boolean flags. Lines starting with `#` or `;` and `[section]` headers
//! are ignored. Expanded flags are placed before the user's own flags, so
//! the latter win.

use std::path::Path;

use epirecon::{Error, Result};

pub fn parse(text: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().trim_start_matches('-').replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(Error::Parse(format!("config line {}: empty key", i + 1)));
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

pub fn load(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

/// Pulls `--config PATH` out of `argv` and splices the file's flags in
/// right after the subcommand name.
pub fn expand(argv: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(
                it.next()
                    .ok_or_else(|| Error::Parse("--config needs a path".into()))?,
            );
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let extra = load(Path::new(&path))?;
    let at = rest
        .iter()
        .position(|a| subcommands.contains(&a.as_str()))
        .map(|i| i + 1)
        .unwrap_or(rest.len());
    rest.splice(at..at, extra);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_booleans() {
        let args = parse("# comment\n[run]\nmodel = sirs\ntiming = true\nfd = false\nx0=0.9,0.1\n").unwrap();
        assert_eq!(args, ["--model", "sirs", "--timing", "--x0", "0.9,0.1"]);
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse("model sirs\n").is_err());
    }
}
