//! Scenario resolution: builtin names or JSON files on disk.

use std::path::Path;

use breachsim_core::env::{EnvConfig, VulnRegime};

use crate::error::CliError;

/// Resolve a `--scenario` argument: a path to a scenario JSON file, or one of
/// the builtin names (`volt_typhoon`,
/// `volt_typhoon_zeroday_<fixed|submartingale>_<n>[_known]`).
pub fn load_scenario_config(path: &Path) -> Result<EnvConfig, CliError> {
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: EnvConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{} does not parse: {e}", path.display())))?;
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        return Ok(cfg);
    }
    let name = path.to_string_lossy();
    builtin_scenario(&name).ok_or_else(|| {
        CliError::config(format!(
            "scenario `{name}` is neither a file nor a builtin name"
        ))
    })
}

fn builtin_scenario(name: &str) -> Option<EnvConfig> {
    if name == "volt_typhoon" {
        return Some(EnvConfig::volt_typhoon());
    }
    let rest = name.strip_prefix("volt_typhoon_zeroday_")?;
    let (rest, known) = match rest.strip_suffix("_known") {
        Some(r) => (r, true),
        None => (rest, false),
    };
    let (regime, n) = if let Some(n) = rest.strip_prefix("fixed_") {
        (VulnRegime::Fixed, n)
    } else if let Some(n) = rest.strip_prefix("submartingale_") {
        (VulnRegime::Submartingale, n)
    } else {
        return None;
    };
    let candidates: usize = n.parse().ok()?;
    Some(EnvConfig::volt_typhoon_zero_day(regime, candidates, known))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn builtin_names_resolve() {
        let cfg = load_scenario_config(&PathBuf::from("volt_typhoon")).unwrap();
        assert_eq!(cfg.devices, 10);
        let cfg = load_scenario_config(&PathBuf::from("volt_typhoon_zeroday_fixed_5")).unwrap();
        assert_eq!(cfg.zero_day.unwrap().candidates, 5);
        assert!(!cfg.zero_day.unwrap().known);
        let cfg =
            load_scenario_config(&PathBuf::from("volt_typhoon_zeroday_submartingale_3_known"))
                .unwrap();
        assert!(cfg.zero_day.unwrap().known);
    }

    #[test]
    fn file_scenarios_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        let cfg = EnvConfig::volt_typhoon();
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        let loaded = load_scenario_config(&path).unwrap();
        assert_eq!(loaded, cfg);
        // invalid config fails with exit code 1 semantics
        let mut bad = EnvConfig::volt_typhoon();
        bad.domain_controllers = 99;
        std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
        assert_eq!(load_scenario_config(&path).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn unknown_name_is_a_config_error() {
        let err = load_scenario_config(&PathBuf::from("not_a_thing")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
