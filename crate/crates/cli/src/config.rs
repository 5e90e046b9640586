//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use mega_core::data::SyntheticKind;
use mega_core::merge::Pairing;
use mega_core::{GaConfig, ModelSpec, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: PathBuf, line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    Value {
        key: &'static str,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

macro_rules! config_keys {
    ($($key:ident),* $(,)?) => {
        /// Every recognised config key, in documentation order.
        pub const KEYS: &[&str] = &[$(stringify!($key)),*];

        /// Each config key doubles as a `--key value` flag; flags win over
        /// the file.
        #[derive(Args, Clone, Debug, Default)]
        pub struct Overrides {
            /// Config file of `key = value` lines
            #[arg(long, global = true, value_name = "PATH")]
            pub config: Option<PathBuf>,
            $(
                #[arg(long = stringify!($key), global = true, value_name = "VALUE", hide = true)]
                pub $key: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

config_keys!(
    seed,
    layers,
    dataset,
    data_path,
    label_column,
    n_samples,
    noise,
    data_seed,
    val_fraction,
    test_fraction,
    batch_size,
    epochs,
    learning_rate,
    adam_beta1,
    adam_beta2,
    adam_epsilon,
    population_size,
    generations,
    parents_per_generation,
    mutation_rate,
    mutation_sigma,
    tournament_size,
    elite_count,
    seed_endpoints,
    pairing,
);

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic {
        kind: SyntheticKind,
        n_samples: usize,
        noise: f64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
}

/// Fully resolved configuration for one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub spec: ModelSpec,
    pub data: DataSource,
    /// Seeds dataset generation and the split. Kept apart from `seed` so
    /// parents trained under different seeds see identical partitions.
    pub data_seed: u64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub train: TrainConfig,
    pub ga: GaConfig,
    pub pairing: Pairing,
}

fn defaults() -> BTreeMap<&'static str, String> {
    let train = TrainConfig::default();
    let ga = GaConfig::default();
    [
        ("seed", "0".to_string()),
        ("layers", "2-16-16-2".into()),
        ("dataset", "two_moons".into()),
        ("label_column", "label".into()),
        ("n_samples", "1000".into()),
        ("noise", "0.3".into()),
        ("data_seed", "0".into()),
        ("val_fraction", "0.1".into()),
        ("test_fraction", "0".into()),
        ("batch_size", train.batch_size.to_string()),
        ("epochs", train.epochs.to_string()),
        ("learning_rate", train.learning_rate.to_string()),
        ("adam_beta1", train.adam_beta1.to_string()),
        ("adam_beta2", train.adam_beta2.to_string()),
        ("adam_epsilon", train.adam_epsilon.to_string()),
        ("population_size", ga.population_size.to_string()),
        ("generations", ga.generations.to_string()),
        (
            "parents_per_generation",
            ga.parents_per_generation.to_string(),
        ),
        ("mutation_rate", ga.mutation_rate.to_string()),
        ("mutation_sigma", ga.mutation_sigma.to_string()),
        ("tournament_size", ga.tournament_size.to_string()),
        ("elite_count", ga.elite_count.to_string()),
        ("seed_endpoints", ga.seed_endpoints.to_string()),
        ("pairing", "adjacent".into()),
    ]
    .into_iter()
    .collect()
}

fn canonical_key(raw: &str) -> Result<&'static str, ConfigError> {
    let normalized = raw.trim().replace('-', "_");
    KEYS.iter()
        .find(|k| **k == normalized)
        .copied()
        .ok_or_else(|| ConfigError::UnknownKey(raw.trim().to_string()))
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(
    text: &str,
    path: &Path,
) -> Result<Vec<(&'static str, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        out.push((canonical_key(key)?, value.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(
    map: &BTreeMap<&'static str, String>,
    key: &'static str,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let value = &map[key];
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key,
        value: value.clone(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn resolve(overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut map = defaults();
        if let Some(path) = &overrides.config {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.clone(),
                source,
            })?;
            map.extend(parse_config_text(&text, path)?);
        }
        map.extend(overrides.pairs());
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<&'static str, String>) -> Result<Self, ConfigError> {
        let data = match map["dataset"].as_str() {
            "csv" => DataSource::Csv {
                path: map
                    .get("data_path")
                    .map(PathBuf::from)
                    .ok_or_else(|| ConfigError::Invalid("dataset = csv needs data_path".into()))?,
                label_column: map["label_column"].clone(),
            },
            _ => DataSource::Synthetic {
                kind: parse(map, "dataset")?,
                n_samples: parse(map, "n_samples")?,
                noise: parse(map, "noise")?,
            },
        };
        let seed: u64 = parse(map, "seed")?;
        let train = TrainConfig {
            batch_size: parse(map, "batch_size")?,
            epochs: parse(map, "epochs")?,
            learning_rate: parse(map, "learning_rate")?,
            adam_beta1: parse(map, "adam_beta1")?,
            adam_beta2: parse(map, "adam_beta2")?,
            adam_epsilon: parse(map, "adam_epsilon")?,
            seed,
        };
        let ga = GaConfig {
            population_size: parse(map, "population_size")?,
            generations: parse(map, "generations")?,
            parents_per_generation: parse(map, "parents_per_generation")?,
            mutation_rate: parse(map, "mutation_rate")?,
            mutation_sigma: parse(map, "mutation_sigma")?,
            tournament_size: parse(map, "tournament_size")?,
            elite_count: parse(map, "elite_count")?,
            seed,
            seed_endpoints: parse(map, "seed_endpoints")?,
            parallel_fitness: true,
        };
        let pairing = match map["pairing"].as_str() {
            "adjacent" => Pairing::Adjacent,
            other => match other.strip_prefix("shuffled:").map(str::parse::<u64>) {
                Some(Ok(s)) => Pairing::Shuffled(s),
                _ => {
                    return Err(ConfigError::Value {
                        key: "pairing",
                        value: other.to_string(),
                        reason: "expected `adjacent` or `shuffled:<seed>`".into(),
                    })
                }
            },
        };
        let cfg = RunConfig {
            seed,
            spec: parse(map, "layers")?,
            data,
            data_seed: parse(map, "data_seed")?,
            val_fraction: parse(map, "val_fraction")?,
            test_fraction: parse(map, "test_fraction")?,
            train,
            ga,
            pairing,
        };
        cfg.train
            .validate()
            .and_then(|_| cfg.ga.validate())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_with(file: Option<&str>, flags: Overrides) -> Result<RunConfig, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let mut flags = flags;
        if let Some(text) = file {
            let path = dir.path().join("run.cfg");
            std::fs::write(&path, text).unwrap();
            flags.config = Some(path);
        }
        RunConfig::resolve(&flags)
    }

    #[test]
    fn defaults_follow_reference_settings() {
        let cfg = resolve_with(None, Overrides::default()).unwrap();
        assert_eq!(cfg.ga.population_size, 20);
        assert_eq!(cfg.ga.generations, 20);
        assert_eq!(cfg.ga.parents_per_generation, 4);
        assert_eq!(cfg.ga.mutation_rate, 0.02);
        assert_eq!(cfg.train.batch_size, 256);
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.val_fraction, 0.1);
        assert_eq!(cfg.spec.to_string(), "2-16-16-2");
    }

    #[test]
    fn flags_beat_file() {
        let file = "# parents\nseed = 3\nepochs=7\nlearning-rate = 0.05\n";
        let flags = Overrides {
            seed: Some("56".into()),
            ..Overrides::default()
        };
        let cfg = resolve_with(Some(file), flags).unwrap();
        assert_eq!(cfg.seed, 56);
        assert_eq!(cfg.train.seed, 56);
        assert_eq!(cfg.ga.seed, 56);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.learning_rate, 0.05);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(matches!(
            resolve_with(Some("colour = blue\n"), Overrides::default()),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            resolve_with(Some("just text\n"), Overrides::default()),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            resolve_with(Some("epochs = many\n"), Overrides::default()),
            Err(ConfigError::Value { key: "epochs", .. })
        ));
        assert!(matches!(
            resolve_with(Some("parents_per_generation = 3\n"), Overrides::default()),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            resolve_with(Some("dataset = csv\n"), Overrides::default()),
            Err(ConfigError::Invalid(_))
        ));
        assert!(resolve_with(Some("dataset = spirals\n"), Overrides::default()).is_err());
    }

    #[test]
    fn pairing_values() {
        let cfg = resolve_with(Some("pairing = shuffled:9\n"), Overrides::default()).unwrap();
        assert_eq!(cfg.pairing, Pairing::Shuffled(9));
        assert!(resolve_with(Some("pairing = random\n"), Overrides::default()).is_err());
    }

    #[test]
    fn every_key_has_a_default_or_is_optional() {
        let d = defaults();
        for key in KEYS {
            assert!(d.contains_key(key) || *key == "data_path", "{key}");
        }
    }
}
