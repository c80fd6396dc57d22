//! Config files: an optional base `preset`, a partial `[model]` table merged
//! over it and a `[train]` table. Command-line flags are applied last.

use std::path::Path;

use serde::Serialize;
use s2cformer::config::ModelConfig;
use s2cformer::training::{Checkpoint, TrainConfig};
use s2cformer::Model;
use toml::{Table, Value};

use crate::error::{io_err, CliError, CliResult};

pub const DEFAULT_PRESET: &str = "hybrid-s";

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub model: Table,
    pub train: Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut table: Table = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let take_table = |t: &mut Table, key: &str| -> CliResult<Table> {
            match t.remove(key) {
                None => Ok(Table::new()),
                Some(Value::Table(tab)) => Ok(tab),
                Some(_) => Err(CliError::Usage(format!("{}: [{key}] must be a table", path.display()))),
            }
        };
        let model = take_table(&mut table, "model")?;
        let train = take_table(&mut table, "train")?;
        let preset = match table.remove("preset") {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => return Err(CliError::Usage(format!("{}: preset must be a string", path.display()))),
        };
        if let Some(key) = table.keys().next() {
            return Err(CliError::Usage(format!("{}: unknown key {key:?}", path.display())));
        }
        Ok(Self {
            preset,
            model,
            train,
        })
    }
}

/// Recursively overlay `patch` onto `base`.
pub fn merge(base: &mut Table, patch: &Table) {
    for (k, v) in patch {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(p)) => merge(b, p),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn to_table<T: Serialize>(v: &T) -> Table {
    match Value::try_from(v).expect("config serializes") {
        Value::Table(t) => t,
        _ => unreachable!("configs serialize to tables"),
    }
}

pub fn resolve_model(file: &ConfigFile, preset_flag: Option<&str>) -> CliResult<ModelConfig> {
    let preset = preset_flag.or(file.preset.as_deref()).unwrap_or(DEFAULT_PRESET);
    let base = ModelConfig::preset(preset).map_err(|e| CliError::Usage(e.to_string()))?;
    if file.model.is_empty() {
        return Ok(base);
    }
    let mut t = to_table(&base);
    merge(&mut t, &file.model);
    Ok(ModelConfig::from_toml_str(&toml::to_string(&t).expect("table serializes"))?)
}

pub fn resolve_train(file: &ConfigFile, flags: &Table) -> CliResult<TrainConfig> {
    let mut t = to_table(&TrainConfig::default());
    merge(&mut t, &file.train);
    merge(&mut t, flags);
    let cfg: TrainConfig = Value::Table(t)
        .try_into()
        .map_err(|e| CliError::Usage(format!("train config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn model_table(cfg: &ModelConfig) -> Table {
    to_table(cfg)
}

pub fn train_table(cfg: &TrainConfig) -> Table {
    to_table(cfg)
}

/// A trained checkpoint, or a freshly initialized model from preset/config.
pub struct ModelSource<'a> {
    pub checkpoint: Option<&'a Path>,
    pub preset: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub seed: u64,
}

impl ModelSource<'_> {
    pub fn load(&self) -> CliResult<(Model, Table)> {
        if let Some(ck) = self.checkpoint {
            if self.preset.is_some() || self.config.is_some() {
                return Err(CliError::Usage("--checkpoint excludes --preset and --config".into()));
            }
            let (model, step, _) = Checkpoint::load(ck)?.into_model()?;
            let mut t = Table::new();
            t.insert("checkpoint".into(), Value::String(ck.display().to_string()));
            t.insert("step".into(), Value::Integer(step as i64));
            t.insert("model".into(), Value::Table(model_table(&model.config)));
            return Ok((model, t));
        }
        let file = ConfigFile::load(self.config)?;
        let cfg = resolve_model(&file, self.preset)?;
        let mut t = Table::new();
        t.insert("init_seed".into(), Value::Integer(self.seed as i64));
        t.insert("model".into(), Value::Table(model_table(&cfg)));
        Ok((Model::new(cfg, self.seed)?, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_merge_keeps_untouched_keys() {
        let mut base: Table = toml::from_str("a = 1\n[b]\nx = 1\ny = 2").unwrap();
        let patch: Table = toml::from_str("[b]\ny = 3").unwrap();
        merge(&mut base, &patch);
        assert_eq!(base["a"].as_integer(), Some(1));
        assert_eq!(base["b"]["x"].as_integer(), Some(1));
        assert_eq!(base["b"]["y"].as_integer(), Some(3));
    }

    #[test]
    fn model_overrides_apply_over_preset() {
        let file = ConfigFile {
            preset: Some("desk".into()),
            model: toml::from_str("window_size = 4").unwrap(),
            ..ConfigFile::default()
        };
        let cfg = resolve_model(&file, None).unwrap();
        assert_eq!(cfg.window_size, 4);
        assert_eq!(cfg.variant_name, "desk");
        assert!(matches!(resolve_model(&file, Some("foo")), Err(CliError::Usage(_))));
    }

    #[test]
    fn flags_beat_file_values() {
        let file = ConfigFile {
            train: toml::from_str("steps = 10\nlambda = 0.05").unwrap(),
            ..ConfigFile::default()
        };
        let flags: Table = toml::from_str("steps = 3").unwrap();
        let cfg = resolve_train(&file, &flags).unwrap();
        assert_eq!((cfg.steps, cfg.lambda), (3, 0.05));
    }
}
