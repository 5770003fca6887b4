//! `--config` files: one `key = value` per line, `#` starts a comment.
//!
//! Keys are flag names without the leading dashes. Entries are spliced in
//! right after the subcommand name; flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use crate::CliError;

const SUBCOMMANDS: [&str; 6] = ["generate", "cluster", "eval", "sweep", "compare", "cost"];

pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<OsString>, CliError> {
    let mut args = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected `key = value`",
                origin.display(),
                n + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() || key == "config" {
            return Err(CliError::Usage(format!(
                "{}:{}: invalid key",
                origin.display(),
                n + 1
            )));
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            v => {
                args.push(format!("--{key}").into());
                args.push(v.into());
            }
        }
    }
    Ok(args)
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
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Returns `args` with the referenced config file's entries inserted.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)?;
    let extra = parse_config(&text, path)?;
    let Some(pos) = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    // List-valued flags append, so drop config keys the user also passed.
    let given: Vec<String> = args[pos + 1..]
        .iter()
        .filter_map(|a| {
            let a = a.to_string_lossy();
            let name = a.strip_prefix("--")?;
            Some(name.split('=').next().unwrap_or(name).to_string())
        })
        .collect();
    let mut out = args[..=pos].to_vec();
    let mut extra = extra.into_iter().peekable();
    while let Some(flag) = extra.next() {
        let value = extra.next_if(|v| !v.to_string_lossy().starts_with("--"));
        let name = flag.to_string_lossy();
        if given
            .iter()
            .any(|g| name.strip_prefix("--") == Some(g.as_str()))
        {
            continue;
        }
        out.push(flag);
        out.extend(value);
    }
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
