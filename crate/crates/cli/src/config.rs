//! Run configuration: built-in defaults, optionally overridden by a TOML
//! key-value file, then by command-line flags.
//!
//! ```toml
//! seed = 42
//! agent = "faulty:0.3:0.5"
//! catalog = "default"      # or a path to a scenario DSL file
//! output_dir = "out"
//! jobs = 4
//!
//! [model]                  # numbers, or exact "p/q" strings
//! max_acceleration = "28/5"
//!
//! [search]
//! max_steps = 30
//! accel_menu = ["-23/5", 0, 2]
//!
//! [sim]
//! dt = 0.05
//!
//! [concretize]
//! merge_drives = true
//! ```

use std::path::{Path, PathBuf};

use lanecov_core::concretize::ConcretizeOptions;
use lanecov_core::rational::parse_q;
use lanecov_core::search::SearchConfig;
use lanecov_core::sim::{EgoAgentSpec, SimConfig};
use lanecov_core::{ModelParams, Q};
use serde_json::Value;

pub const DEFAULT_OUTPUT_DIR: &str = "lanecov-out";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone)]
pub struct Config {
    pub params: ModelParams,
    pub search: SearchConfig,
    pub sim: SimConfig,
    pub concretize: ConcretizeOptions,
    pub agent: EgoAgentSpec,
    /// `default` or a DSL file path.
    pub catalog: String,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        let params = ModelParams::default();
        Self {
            search: SearchConfig::default_for(&params),
            sim: SimConfig::from_params(&params),
            params,
            concretize: ConcretizeOptions::default(),
            agent: EgoAgentSpec::OracleACC,
            catalog: "default".into(),
            output_dir: None,
            seed: DEFAULT_SEED,
            jobs: None,
        }
    }
}

const TOP_KEYS: [&str; 9] = ["seed", "agent", "catalog", "output_dir", "jobs", "model", "search", "sim", "concretize"];

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
        if let Some(k) = table.keys().find(|k| !TOP_KEYS.contains(&k.as_str())) {
            return Err(format!("unknown key `{k}`"));
        }
        let mut cfg = Config::default();

        if let Some(model) = section(&table, "model")? {
            let merged = merge(serde_json::to_value(&cfg.params).expect("params serialize"), model, "model")?;
            cfg.params = serde_json::from_value(merged).map_err(|e| format!("model: {e}"))?;
        }
        cfg.params.validate().map_err(|e| e.to_string())?;
        cfg.search = SearchConfig::default_for(&cfg.params);
        cfg.sim = SimConfig::from_params(&cfg.params);

        if let Some(search) = section(&table, "search")? {
            for (k, v) in search {
                let key = format!("search.{k}");
                match k.as_str() {
                    "max_steps" => cfg.search.max_steps = int(v, &key)?,
                    "node_budget" => cfg.search.node_budget = int(v, &key)?,
                    "rng_seed" => cfg.search.rng_seed = int(v, &key)?,
                    "allow_lane_actions" => {
                        cfg.search.allow_lane_actions = v.as_bool().ok_or(format!("{key} must be a boolean"))?
                    }
                    "accel_menu" => {
                        let arr = v.as_array().ok_or(format!("{key} must be an array"))?;
                        cfg.search.accel_menu = arr.iter().map(|x| rational(x, &key)).collect::<Result<_, _>>()?;
                    }
                    _ => return Err(format!("unknown key `{key}`")),
                }
            }
        }
        cfg.search.validate(&cfg.params).map_err(|e| e.to_string())?;

        if let Some(sim) = section(&table, "sim")? {
            let merged = merge(serde_json::to_value(&cfg.sim).expect("sim serializes"), sim, "sim")?;
            cfg.sim = serde_json::from_value(merged).map_err(|e| format!("sim: {e}"))?;
        }
        cfg.sim.validate().map_err(|e| e.to_string())?;

        if let Some(c) = section(&table, "concretize")? {
            let merged = merge(serde_json::to_value(&cfg.concretize).expect("options serialize"), c, "concretize")?;
            cfg.concretize = serde_json::from_value(merged).map_err(|e| format!("concretize: {e}"))?;
        }

        if let Some(v) = table.get("seed") {
            cfg.seed = int(v, "seed")?;
        }
        if let Some(v) = table.get("jobs") {
            cfg.jobs = Some(int(v, "jobs")?);
        }
        if let Some(v) = table.get("agent") {
            cfg.agent = EgoAgentSpec::parse(v.as_str().ok_or("agent must be a string")?)?;
        }
        if let Some(v) = table.get("catalog") {
            cfg.catalog = v.as_str().ok_or("catalog must be a string")?.to_string();
        }
        if let Some(v) = table.get("output_dir") {
            cfg.output_dir = Some(PathBuf::from(v.as_str().ok_or("output_dir must be a string")?));
        }
        Ok(cfg)
    }
}

fn section<'a>(table: &'a toml::Table, name: &str) -> Result<Option<&'a toml::Table>, String> {
    match table.get(name) {
        None => Ok(None),
        Some(toml::Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(format!("`{name}` must be a table")),
    }
}

fn int<T: TryFrom<i64>>(v: &toml::Value, key: &str) -> Result<T, String> {
    v.as_integer()
        .and_then(|i| T::try_from(i).ok())
        .ok_or_else(|| format!("{key} must be a non-negative integer in range"))
}

fn rational(v: &toml::Value, key: &str) -> Result<Q, String> {
    let text = match v {
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::String(s) => s.clone(),
        _ => return Err(format!("{key} must be a number or a \"p/q\" string")),
    };
    parse_q(&text).map_err(|_| format!("{key}: cannot read `{text}` as an exact number"))
}

/// Overrides the fields of a serialized default with values from `table`.
/// Each override must name an existing field and match its kind; rational
/// fields (serialized as strings) accept numbers too.
fn merge(mut defaults: Value, table: &toml::Table, name: &str) -> Result<Value, String> {
    let obj = defaults.as_object_mut().expect("struct serializes to an object");
    for (k, v) in table {
        let key = format!("{name}.{k}");
        let slot = obj.get_mut(k).ok_or_else(|| format!("unknown key `{key}`"))?;
        *slot = match (&*slot, v) {
            (Value::String(_), _) => {
                let q = rational(v, &key)?;
                Value::String(lanecov_core::rational::fmt_pq(&q))
            }
            (Value::Bool(_), toml::Value::Boolean(b)) => Value::Bool(*b),
            (Value::Number(_), toml::Value::Integer(i)) => Value::from(*i),
            (Value::Number(n), toml::Value::Float(f)) if n.is_f64() => Value::from(*f),
            _ => return Err(format!("{key} has the wrong type")),
        };
    }
    Ok(defaults)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lanecov_core::rational::qr;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c.params, ModelParams::default());
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.catalog, "default");
    }

    #[test]
    fn overrides_apply_in_order() {
        let c = Config::from_toml(
            "seed = 7\nagent = \"faulty:0.3:0.5\"\njobs = 2\n[model]\nmax_acceleration = 4.5\n[search]\nmax_steps = 12\naccel_menu = [\"-23/5\", 0]\n[sim]\ndt = 0.1\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.jobs, Some(2));
        assert_eq!(c.params.max_acceleration, qr(9, 2));
        assert_eq!(c.sim.max_acceleration, 4.5);
        assert_eq!(c.sim.dt, 0.1);
        assert_eq!(c.search.max_steps, 12);
        assert_eq!(c.search.accel_menu, vec![qr(-23, 5), qr(0, 1)]);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(Config::from_toml("colour = 1").unwrap_err().contains("colour"));
        assert!(Config::from_toml("[sim]\nwarp = 2.0").unwrap_err().contains("sim.warp"));
        assert!(Config::from_toml("[model]\nmax_braking = 3").is_err());
        assert!(Config::from_toml("[sim]\ndt = \"fast\"").is_err());
        assert!(Config::from_toml("agent = \"human\"").is_err());
        assert!(Config::from_toml("[search]\naccel_menu = [100]").is_err());
    }
}
