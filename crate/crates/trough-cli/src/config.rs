//! Configuration resolution.
//!
//! Every subcommand reads the same configuration: built-in defaults,
//! overlaid by an optional TOML file, overlaid by `--set key=value`
//! overrides, overlaid by the dedicated shorthand flags. The resolved
//! value is validated before any work starts, so a broken configuration
//! fails with exit code 2 no matter which subcommand received it.

use std::path::PathBuf;

use trough::pipeline::PipelineConfig;
use trough::{Error, Result};

/// The configuration-bearing flags, collected from the command line.
#[derive(Debug, Default)]
pub struct ConfigArgs {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Build the effective configuration from `args`.
pub fn resolve(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut table = match &args.config {
        Some(path) => std::fs::read_to_string(path)?
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => toml::Table::new(),
    };
    for spec in &args.overrides {
        apply_set(&mut table, spec)?;
    }
    let mut cfg: PipelineConfig =
        table.try_into().map_err(|e| Error::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Apply one `key.path=value` override to the raw table. The value is
/// parsed as a TOML literal where possible and kept as a string otherwise,
/// so `--set twc.width=40` assigns an integer while `--set out_dir=run2`
/// assigns a path.
fn apply_set(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override \"{spec}\" is not key=value")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::Config(format!("override \"{spec}\" has an empty key")));
    }
    let value = parse_value(raw.trim());

    let keys: Vec<&str> = path.split('.').collect();
    let mut node = table;
    for key in &keys[..keys.len() - 1] {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override \"{spec}\": \"{key}\" is not a table"))
        })?;
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(overrides: &[&str]) -> ConfigArgs {
        ConfigArgs {
            overrides: overrides.iter().map(|s| s.to_string()).collect(),
            ..ConfigArgs::default()
        }
    }

    #[test]
    fn no_inputs_give_the_default_configuration() {
        let cfg = resolve(&ConfigArgs::default()).unwrap();
        assert_eq!(cfg.twc_keep, PipelineConfig::default().twc_keep);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn overrides_parse_their_natural_types() {
        let cfg = resolve(&args(&[
            "twc.width=44",
            "ssc.mse_max=1.5",
            "out_dir=elsewhere",
            "mtm.target_n_override=34",
        ]))
        .unwrap();
        assert_eq!(cfg.twc.width, 44);
        assert_eq!(cfg.ssc.mse_max, 1.5);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.mtm.target_n_override, Some(34));
    }

    #[test]
    fn shorthand_flags_win_over_overrides() {
        let mut a = args(&["seed=3", "workers=1"]);
        a.seed = Some(9);
        a.out = Some(PathBuf::from("flagged"));
        let cfg = resolve(&a).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.workers, 1);
        assert_eq!(cfg.out_dir, PathBuf::from("flagged"));
    }

    #[test]
    fn file_then_override_then_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 1\ntwc_keep = 100\nmtm_keep = 50\n").unwrap();
        let mut a = args(&["twc_keep=200"]);
        a.config = Some(path);
        let cfg = resolve(&a).unwrap();
        assert_eq!(cfg.twc_keep, 200);
        assert_eq!(cfg.mtm_keep, 50);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn unknown_keys_and_broken_values_are_config_errors() {
        for bad in [
            args(&["no_such_key=1"]),
            args(&["twc.width=wide"]),
            args(&["seedless"]),
            args(&["=5"]),
            args(&["seed.depth=1"]),
            args(&["twc_keep=1", "mtm_keep=5"]),
        ] {
            match resolve(&bad) {
                Err(Error::Config(_)) => {}
                other => panic!("expected a config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn missing_config_files_surface_as_io_errors() {
        let mut a = ConfigArgs::default();
        a.config = Some(PathBuf::from("/no/such/config.toml"));
        assert!(matches!(resolve(&a), Err(Error::Io(_))));
    }
}
