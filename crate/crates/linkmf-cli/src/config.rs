//! Run configuration: a key=value config file merged with command-line
//! flags, flags winning. The file format is one `key = value` per line,
//! `#` comments and blank lines ignored.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use linkmf::{AuprMode, Hyperparameters, WeightScheme};

use crate::UsageError;

const KNOWN_KEYS: &[&str] = &[
    "interactions",
    "sim_go",
    "sim_ppi",
    "out",
    "model",
    "d",
    "lambda",
    "alpha",
    "beta",
    "gamma",
    "max_iter",
    "weight_scheme",
    "c",
    "k1",
    "k2",
    "seed",
    "n_folds",
    "block_size",
    "log_every",
    "early_stop",
    "aupr_mode",
    "top_k",
];

/// Raw key=value pairs from a config file.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(UsageError(format!(
                    "{}:{}: expected 'key = value', found '{line}'",
                    path.display(),
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!(UsageError(format!(
                    "{}:{}: unknown config key '{key}'",
                    path.display(),
                    idx + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                UsageError(format!("config key '{key}' has unparseable value '{raw}'")).into()
            }),
        }
    }

    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }
}

/// Fully resolved settings for the train/cv/rank commands.
#[derive(Debug)]
pub struct RunConfig {
    pub interactions: PathBuf,
    pub sim_go: Option<PathBuf>,
    pub sim_ppi: Option<PathBuf>,
    pub out: PathBuf,
    pub hyper: Hyperparameters,
    pub scheme: WeightScheme,
    pub k1: usize,
    pub k2: usize,
    pub n_folds: usize,
    pub block_size: usize,
    pub log_every: usize,
    pub early_stop: Option<f64>,
    pub aupr_mode: AuprMode,
    pub dump_knn: bool,
    pub dump_curves: bool,
}

pub fn resolve_scheme(kind: &str, c: f64) -> Result<WeightScheme> {
    let scheme = match kind {
        "uniform" => WeightScheme::uniform(c),
        "linear" => WeightScheme::linear(c),
        "loglinear" => WeightScheme::loglinear(c),
        other => {
            bail!(UsageError(format!(
                "unknown weight scheme '{other}' (expected uniform, linear or loglinear)"
            )))
        }
    };
    scheme.map_err(|e| UsageError(e.to_string()).into())
}

pub fn resolve_aupr_mode(raw: &str) -> Result<AuprMode> {
    raw.parse::<AuprMode>()
        .map_err(|e| UsageError(e.to_string()).into())
}

impl crate::CommonOpts {
    /// Merge flags over the config file over the defaults.
    pub fn resolve(&self) -> Result<RunConfig> {
        let cfg = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let defaults = Hyperparameters::default();

        let interactions = self
            .interactions
            .clone()
            .or_else(|| cfg.get_path("interactions"))
            .ok_or_else(|| UsageError("missing required --interactions".into()))?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.get_path("out"))
            .ok_or_else(|| UsageError("missing required --out".into()))?;

        let hyper = Hyperparameters {
            d: self.d.or(cfg.get("d")?).unwrap_or(defaults.d),
            lambda: self
                .lambda
                .or(cfg.get("lambda")?)
                .unwrap_or(defaults.lambda),
            alpha: self.alpha.or(cfg.get("alpha")?).unwrap_or(defaults.alpha),
            beta: self.beta.or(cfg.get("beta")?).unwrap_or(defaults.beta),
            gamma: self.gamma.or(cfg.get("gamma")?).unwrap_or(defaults.gamma),
            max_iter: self
                .max_iter
                .or(cfg.get("max_iter")?)
                .unwrap_or(defaults.max_iter),
            seed: self.seed.or(cfg.get("seed")?).unwrap_or(defaults.seed),
        };
        hyper.validate().map_err(|e| UsageError(e.to_string()))?;

        let scheme_kind = self
            .weight_scheme
            .clone()
            .or(cfg.get("weight_scheme")?)
            .unwrap_or_else(|| "uniform".to_string());
        let c = self.c.or(cfg.get("c")?).unwrap_or(50.0);
        let scheme = resolve_scheme(&scheme_kind, c)?;

        let aupr_raw = self
            .aupr_mode
            .clone()
            .or(cfg.get("aupr_mode")?)
            .unwrap_or_else(|| "ap".to_string());
        let aupr_mode = resolve_aupr_mode(&aupr_raw)?;

        let n_folds = self.n_folds.or(cfg.get("n_folds")?).unwrap_or(5);
        if n_folds < 2 {
            bail!(UsageError(format!(
                "cannot cross-validate with {n_folds} fold(s); need at least 2"
            )));
        }

        Ok(RunConfig {
            interactions,
            sim_go: self.sim_go.clone().or_else(|| cfg.get_path("sim_go")),
            sim_ppi: self.sim_ppi.clone().or_else(|| cfg.get_path("sim_ppi")),
            out,
            hyper,
            scheme,
            k1: self.k1.or(cfg.get("k1")?).unwrap_or(100),
            k2: self.k2.or(cfg.get("k2")?).unwrap_or(100),
            n_folds,
            block_size: self
                .block_size
                .or(cfg.get("block_size")?)
                .unwrap_or(linkmf::factor::DEFAULT_BLOCK_SIZE),
            log_every: self.log_every.or(cfg.get("log_every")?).unwrap_or(10),
            early_stop: self.early_stop.or(cfg.get("early_stop")?),
            aupr_mode,
            dump_knn: self.dump_knn,
            dump_curves: self.dump_curves,
        })
    }
}

/// Thread cap: the flag wins over LINKMF_THREADS.
pub fn configure_threads(flag: Option<usize>) -> Result<()> {
    let from_env = std::env::var("LINKMF_THREADS")
        .ok()
        .map(|raw| {
            raw.parse::<usize>()
                .map_err(|_| UsageError(format!("LINKMF_THREADS has unparseable value '{raw}'")))
        })
        .transpose()?;
    if let Some(n) = flag.or(from_env) {
        if n == 0 {
            bail!(UsageError("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("failed to configure the thread pool")?;
    }
    Ok(())
}
