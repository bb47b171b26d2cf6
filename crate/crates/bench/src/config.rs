//! `key = value` configuration files. Keys are CLI flag names without the
//! leading dashes; a key may repeat, and a value may hold a comma list.
//! Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};

pub type Config = BTreeMap<String, Vec<String>>;

pub fn parse_config(text: &str) -> anyhow::Result<Config> {
    let mut out = Config::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value", n + 1);
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        let vals = out.entry(key).or_default();
        vals.extend(v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()));
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> anyhow::Result<Config> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Turns config entries into command-line arguments for every key the
/// command line does not already set. `flags` lists the boolean switches,
/// which take no value.
pub fn config_args(cfg: &Config, given: &[String], flags: &[&str]) -> Vec<String> {
    let present = |key: &str| {
        let long = format!("--{key}");
        given.iter().any(|a| *a == long || a.starts_with(&format!("{long}=")))
    };
    let mut args = Vec::new();
    for (key, vals) in cfg {
        if present(key) {
            continue;
        }
        if flags.contains(&key.as_str()) {
            if vals.iter().any(|v| matches!(v.as_str(), "true" | "1" | "yes")) {
                args.push(format!("--{key}"));
            }
            continue;
        }
        for v in vals {
            args.push(format!("--{key}"));
            args.push(v.clone());
        }
    }
    args
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_comments_and_repeats() {
        let c = parse_config("# grid\ntask = circle\nsparsity = 0.5, 0.1\nsparsity=planted\nepochs_per_round=3\n").unwrap();
        assert_eq!(c["task"], ["circle"]);
        assert_eq!(c["sparsity"], ["0.5", "0.1", "planted"]);
        assert_eq!(c["epochs-per-round"], ["3"]);
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn flags_override_config() {
        let c = parse_config("task = relu\ndepth = 4\nanneal = true\n").unwrap();
        let given = vec!["--task".to_string(), "circle".to_string()];
        assert_eq!(config_args(&c, &given, &["anneal"]), ["--anneal", "--depth", "4"]);
    }
}
