use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sdwec::baselines::WmvWeighting;
use sdwec::evaluation::{
    default_pool_size, default_presets, default_repetitions, ExperimentConfig, NamedParams, SingleTree,
};
use sdwec::tree::TreeConfig;

/// Every key accepted in a config file, with its default, as shown by `--help`.
pub const CONFIG_KEYS: &str = "\
Config file keys (JSON; unknown keys are rejected; relative paths resolve
against the config file's directory):
  dataset                        CSV file (required)
  schema                         JSON schema [default: <dataset>.json]
  pool_size                      number of bagged trees [default: 200]
  tree.max_depth                 tree depth limit [default: null (unlimited)]
  tree.min_leaf                  minimum rows per leaf [default: 1]
  presets                        list of {name, params} [default: A and B]
  presets[].params.lambda        data-fidelity weight
  presets[].params.beta          non-negativity penalty
  presets[].params.gamma         smoothing sharpness
  presets[].params.epsilon       relaxation floor
  presets[].params.max_iter      iterations [default: 25]
  presets[].params.threshold_target
                                 penalty level used for zeroing [default: 0.001]
  presets[].params.early_stop    stop on a stalled iterate [default: false]
  presets[].params.threshold_rule
                                 zero_anchor | final_anchor [default: zero_anchor]
  repetitions                    random 80/10/10 splits [default: 10]
  base_seed                      seed of repetition 0 [default: 0]
  wmv_weighting                  log_odds | accuracy [default: log_odds]
  single_tree                    best_of_pool | full_train [default: best_of_pool]
  output_dir                     where reports go [default: results]
  verbosity                      error | warn | info | debug | trace [default: info]
  threads                        worker threads [default: min(repetitions, cores)]
  save_model                     also write model.json for repetition 0 [default: false]

Preset A is lambda=0.1 beta=35 gamma=5 epsilon=0.1; preset B is lambda=10
beta=15 gamma=15 epsilon=1. `--override sdwec.KEY=VALUE` sets KEY on every
preset; any other dotted path (e.g. tree.max_depth=8, presets.0.name=X) is set
directly.

Exit status: 0 success, 1 configuration error, 2 runtime failure.
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default = "default_presets")]
    pub presets: Vec<NamedParams>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub wmv_weighting: WmvWeighting,
    #[serde(default)]
    pub single_tree: SingleTree,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_verbosity")]
    pub verbosity: String,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub save_model: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_verbosity() -> String {
    "info".into()
}

impl CliConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            dataset: self.dataset.clone(),
            schema: self.schema.clone(),
            pool_size: self.pool_size,
            tree: self.tree,
            presets: self.presets.clone(),
            repetitions: self.repetitions,
            base_seed: self.base_seed,
            wmv_weighting: self.wmv_weighting,
            single_tree: self.single_tree,
        }
    }

    pub fn log_level(&self) -> Result<log::LevelFilter, String> {
        self.verbosity
            .parse()
            .map_err(|_| format!("unknown verbosity `{}`", self.verbosity))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        if let Some(s) = &mut self.schema {
            fix(s);
        }
        fix(&mut self.output_dir);
    }
}

/// Reads `path`, applies `overrides` (`key=value`) and parses strictly.
pub fn load(path: &Path, overrides: &[String]) -> Result<CliConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut config: CliConfig =
        serde_json::from_value(value).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    config.resolve_paths(base);
    config.log_level()?;
    config.experiment().validate().map_err(|e| e.to_string())?;
    if config.threads == Some(0) {
        return Err("threads must be at least 1".into());
    }
    if !config.dataset.is_file() {
        return Err(format!("dataset file not found: {}", config.dataset.display()));
    }
    let schema = config.schema.clone().unwrap_or_else(|| config.dataset.with_extension("json"));
    if !schema.is_file() {
        return Err(format!("schema file not found: {}", schema.display()));
    }
    Ok(config)
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(format!("override `{spec}` has an empty key"));
    }
    let value = parse_value(raw.trim());
    if let Some(field) = key.strip_prefix("sdwec.") {
        let obj = root.as_object_mut().ok_or("config is not a JSON object")?;
        let presets = obj
            .entry("presets")
            .or_insert_with(|| serde_json::to_value(default_presets()).expect("presets serialize"));
        let list = presets.as_array_mut().ok_or("`presets` is not a list")?;
        for p in list {
            let params = p
                .get_mut("params")
                .and_then(Value::as_object_mut)
                .ok_or("preset without a `params` object")?;
            params.insert(field.to_string(), value.clone());
        }
        return Ok(());
    }
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| format!("override `{key}`: `{part}` is not a list index"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("override `{key}`: index {idx} out of range ({len} items)"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("override `{key}`: `{part}` is inside a scalar")),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Comma-separated positive integers.
pub fn parse_sizes(raw: &str) -> Result<Vec<usize>, String> {
    let sizes = raw
        .split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(format!("`{t}` is not a positive integer size")),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.is_empty() {
        return Err("no sizes given".into());
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_paths() {
        let mut v = json!({"dataset": "x.csv", "tree": {"min_leaf": 1}});
        apply_override(&mut v, "tree.max_depth=4").unwrap();
        apply_override(&mut v, "repetitions=3").unwrap();
        apply_override(&mut v, "dataset=other.csv").unwrap();
        assert_eq!(v["tree"]["max_depth"], 4);
        assert_eq!(v["repetitions"], 3);
        assert_eq!(v["dataset"], "other.csv");
        apply_override(&mut v, "sdwec.lambda=10").unwrap();
        assert_eq!(v["presets"][0]["params"]["lambda"], 10);
        assert_eq!(v["presets"][1]["params"]["lambda"], 10);
        apply_override(&mut v, "presets.1.name=C").unwrap();
        assert_eq!(v["presets"][1]["name"], "C");
        assert!(apply_override(&mut v, "presets.9.name=C").is_err());
        assert!(apply_override(&mut v, "repetitions.x=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_sizes("100, 200,500").unwrap(), vec![100, 200, 500]);
        assert!(parse_sizes("100,abc").is_err());
        assert!(parse_sizes("0").is_err());
        assert!(parse_sizes("").is_err());
    }

    #[test]
    fn strict_keys() {
        let ok: CliConfig = serde_json::from_value(json!({"dataset": "d.csv"})).unwrap();
        assert_eq!(ok.experiment(), ExperimentConfig::new("d.csv"));
        assert_eq!(ok.output_dir, PathBuf::from("results"));
        assert!(serde_json::from_value::<CliConfig>(json!({"dataset": "d.csv", "pool": 3})).is_err());
        assert!(serde_json::from_value::<CliConfig>(json!({"dataset": "d.csv", "tree": {"depth": 3}})).is_err());
    }
}
