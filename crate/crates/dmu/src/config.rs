//! TOML config files and run manifests.

use std::path::Path;

use dmu_core::scene::{self, ScenarioSpec};
use dmu_core::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "DMU_OUT_DIR";
pub const MANIFEST: &str = "manifest.json";

fn parse_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = io::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{}: not UTF-8", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let cfg: TrainConfig = parse_toml(path)?;
    cfg.validate().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

/// A scenario file has the same structure as a serialized `ScenarioSpec`.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = parse_toml(path)?;
    spec.validate().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

pub fn scenario_toml(spec: &ScenarioSpec) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))
}

/// Preset by name, or a scenario file.
pub fn resolve_scenario(preset: Option<&str>, file: Option<&Path>) -> Result<ScenarioSpec> {
    match (preset, file) {
        (_, Some(f)) => load_scenario(f),
        (Some(p), None) => scene::preset(p)
            .ok_or_else(|| Error::Config(format!("unknown preset `{p}` (known: {})", scene::PRESETS.join(", ")))),
        (None, None) => Err(Error::Config("either --preset or --scenario is required".into())),
    }
}

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a C,
    pub dmu_version: &'static str,
    pub checkpoint_version: u32,
}

pub fn write_manifest<C: Serialize>(out: &Path, command: &str, seed: u64, config: &C) -> Result<()> {
    let m = RunManifest {
        command,
        seed,
        config,
        dmu_version: env!("CARGO_PKG_VERSION"),
        checkpoint_version: io::checkpoint::VERSION,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))?;
    io::write_text(&out.join(MANIFEST), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_config_from_toml() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.toml");
        std::fs::write(&p, "scenario = \"laptop\"\nepochs = 3\nlr = 0.001\n[noise]\ndropout_prob = 0.1\ngaussian_sigma = 0.0\n").unwrap();
        let c = load_train_config(&p).unwrap();
        assert_eq!((c.scenario.as_str(), c.epochs, c.batch), ("laptop", 3, 35));
        assert_eq!(c.noise.dropout_prob, 0.1);
    }

    #[test]
    fn every_bad_field_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.toml");
        std::fs::write(&p, "scenario = \"nope\"\nepochs = 0\nbatch = 4\n").unwrap();
        let msg = load_train_config(&p).unwrap_err().to_string();
        for field in ["scenario", "epochs", "batch"] {
            assert!(msg.contains(field), "{msg}");
        }
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(matches!(load_train_config(&p), Err(Error::Config(_))));
    }

    #[test]
    fn scenario_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in scene::PRESETS {
            let spec = scene::preset(name).unwrap();
            let p = dir.path().join(format!("{name}.toml"));
            std::fs::write(&p, scenario_toml(&spec).unwrap()).unwrap();
            assert_eq!(load_scenario(&p).unwrap(), spec, "{name}");
        }
    }
}
