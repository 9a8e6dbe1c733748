//! Line-oriented `key=value` configuration: training hyperparameters,
//! experiment file layout, and the three-domain generation spec.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::Array1;

use crate::data::{DomainSpec, DomainTag, DomainTransform};
use crate::error::{Error, Result};
use crate::losses::CollaborativeForm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Branches never exchange signals; β is treated as 0.
    Ind,
    /// Collaborative refinement across branches via momentum-teacher scores.
    Col,
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ind" => Ok(TrainMode::Ind),
            "col" => Ok(TrainMode::Col),
            other => Err(Error::Config(format!("mode must be ind or col, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Ind => "ind",
            TrainMode::Col => "col",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub batch_p: usize,
    pub batch_k: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub prototype_momentum: f64,
    pub mode: TrainMode,
    pub criteria_enabled: bool,
    pub use_pretraining: bool,
    pub col_form: CollaborativeForm,
    pub seed: u64,
    pub threads: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub cluster_eps: Option<f64>,
    pub min_pts: usize,
    pub shrink_factor: f64,
    pub enlarge_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            pretrain_epochs: 10,
            batch_p: 16,
            batch_k: 4,
            base_lr: 0.00035,
            weight_decay: 0.0005,
            lambda: 0.999,
            alpha: 0.5,
            beta: 0.01,
            tau: 0.05,
            prototype_momentum: 0.2,
            mode: TrainMode::Col,
            criteria_enabled: true,
            use_pretraining: true,
            col_form: CollaborativeForm::Bce,
            seed: 0,
            threads: 1,
            hidden_dims: vec![128],
            output_dim: 64,
            cluster_eps: None,
            min_pts: 4,
            shrink_factor: 0.9,
            enlarge_factor: 1.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must be in [0,1)".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0,1]")));
            }
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be > 0".into()));
        }
        if self.batch_p < 2 || self.batch_k < 2 {
            return Err(Error::Config("need batch_p >= 2 and batch_k >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.prototype_momentum) {
            return Err(Error::Config("prototype_momentum must be in [0,1]".into()));
        }
        if self.output_dim == 0 || self.threads == 0 {
            return Err(Error::Config("output_dim and threads must be positive".into()));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0 && self.enlarge_factor > 1.0) {
            return Err(Error::Config(
                "need 0 < shrink_factor < 1 < enlarge_factor".into(),
            ));
        }
        Ok(())
    }

    /// Applies `key=value` overrides on top of `self`; unknown keys error.
    pub fn apply_map(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in map {
            self.apply(key, value)?;
        }
        self.validate()
    }

    /// Applies a single config-file entry; unknown keys are rejected.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, value)?,
            "batch_p" => self.batch_p = num(key, value)?,
            "batch_k" => self.batch_k = num(key, value)?,
            "base_lr" => self.base_lr = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "prototype_momentum" => self.prototype_momentum = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "criteria_enabled" => self.criteria_enabled = parse_bool(key, value)?,
            "use_pretraining" => self.use_pretraining = parse_bool(key, value)?,
            "col_form" => {
                self.col_form = match value {
                    "bce" => CollaborativeForm::Bce,
                    "verbatim" => CollaborativeForm::Verbatim,
                    other => {
                        return Err(Error::Config(format!(
                            "col_form must be bce or verbatim, got {other:?}"
                        )))
                    }
                }
            }
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "hidden_dims" => {
                self.hidden_dims = value
                    .split(',')
                    .map(|p| num::<usize>(key, p.trim()))
                    .collect::<Result<_>>()?
            }
            "output_dim" => self.output_dim = num(key, value)?,
            "cluster_eps" => {
                self.cluster_eps = if value == "auto" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "min_pts" => self.min_pts = num(key, value)?,
            "shrink_factor" => self.shrink_factor = num(key, value)?,
            "enlarge_factor" => self.enlarge_factor = num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key: {other}"))),
        }
        Ok(())
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Config(format!("bad boolean for {key}: {other:?}"))),
    }
}

/// Dataset paths, output directory, and training hyperparameters for one
/// experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synthetic_path: PathBuf,
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_str_kv(text: &str) -> Result<ExperimentConfig> {
        let mut map = parse_kv(text)?;
        let mut take_path = |key: &str| -> Result<PathBuf> {
            map.remove(key)
                .map(PathBuf::from)
                .ok_or_else(|| Error::Config(format!("missing required key: {key}")))
        };
        let synthetic_path = take_path("synthetic_path")?;
        let source_path = take_path("source_path")?;
        let target_path = take_path("target_path")?;
        let out_dir = take_path("out_dir")?;
        let mut train = TrainConfig::default();
        train.apply_map(&map)?;
        Ok(ExperimentConfig {
            synthetic_path,
            source_path,
            target_path,
            out_dir,
            train,
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(Error::Io)?;
        ExperimentConfig::from_str_kv(&text)
    }
}

/// Parses line-oriented `key=value` text with `#` comments and blank lines.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("duplicate key: {key}"),
            });
        }
    }
    Ok(map)
}

/// Parses the three-domain generation spec: keys are `<domain>.<field>` with
/// domain in {synthetic, source, target}. Returns specs in that order.
pub fn parse_domain_specs(text: &str) -> Result<[DomainSpec; 3]> {
    let map = parse_kv(text)?;
    let domains = [
        ("synthetic", DomainTag::Synthetic),
        ("source", DomainTag::Source),
        ("target", DomainTag::Target),
    ];
    // Reject keys that belong to no domain so typos fail loudly.
    for key in map.keys() {
        let known = domains.iter().any(|(name, _)| {
            key.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix('.'))
                .is_some()
        });
        if !known {
            return Err(Error::Config(format!("unknown spec key: {key}")));
        }
    }
    let mut specs = Vec::with_capacity(3);
    for (name, tag) in domains {
        specs.push(parse_one_domain(&map, name, tag)?);
    }
    Ok([specs.remove(0), specs.remove(0), specs.remove(0)])
}

fn parse_one_domain(
    map: &BTreeMap<String, String>,
    name: &str,
    tag: DomainTag,
) -> Result<DomainSpec> {
    let get = |field: &str| map.get(&format!("{name}.{field}"));
    let require = |field: &str| -> Result<&String> {
        get(field).ok_or_else(|| Error::Config(format!("missing required key: {name}.{field}")))
    };
    fn num<T: FromStr>(name: &str, field: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::Config(format!("bad value for {name}.{field}: {value:?}")))
    }
    let opt_num = |field: &str, default: f64| -> Result<f64> {
        match get(field) {
            Some(v) => num(name, field, v),
            None => Ok(default),
        }
    };

    let num_identities: usize = num(name, "num_identities", require("num_identities")?)?;
    let samples_per_identity: usize =
        num(name, "samples_per_identity", require("samples_per_identity")?)?;
    let num_cameras: usize = num(name, "num_cameras", require("num_cameras")?)?;
    let input_dim: usize = num(name, "input_dim", require("input_dim")?)?;
    let rng_seed: u64 = num(name, "rng_seed", require("rng_seed")?)?;

    let vector = |field: &str, default: f64| -> Result<Array1<f64>> {
        match get(field) {
            None => Ok(Array1::from_elem(input_dim, default)),
            Some(v) => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| num(name, field, p.trim()))
                    .collect::<Result<_>>()?;
                match parts.len() {
                    1 => Ok(Array1::from_elem(input_dim, parts[0])),
                    n if n == input_dim => Ok(Array1::from_vec(parts)),
                    n => Err(Error::Config(format!(
                        "{name}.{field}: expected 1 or {input_dim} values, got {n}"
                    ))),
                }
            }
        }
    };

    Ok(DomainSpec {
        num_identities,
        samples_per_identity,
        num_cameras,
        input_dim,
        identity_spread: opt_num("identity_spread", 0.1)?,
        camera_shift_scale: opt_num("camera_shift_scale", 0.05)?,
        transform: DomainTransform {
            rotation_seed: match get("rotation_seed") {
                Some(v) => num(name, "rotation_seed", v)?,
                None => 0,
            },
            scale: vector("scale", 1.0)?,
            offset: vector("offset", 0.0)?,
        },
        rng_seed,
        domain: tag,
    })
}
