//! Run configuration: command-line flags over config file over defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use hgcae::manifold::ManifoldKind;
use hgcae::model::{Activation, ModelConfig};
use hgcae::train::{TaskMode, TrainConfig};
use serde::Serialize;

use crate::args::{self, CommandSpec};

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Flag,
    File,
    Default,
}

/// Reads a `key = value` file. Blank lines and `#` comments are skipped;
/// a bare key (no `=`) sets a boolean option.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => (line, "true"),
        };
        let k = k.trim_start_matches("--");
        if args::option(k).is_none() {
            return Err(usage(format!(
                "{}:{}: unknown key {k:?}",
                path.display(),
                i + 1
            )));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Fully resolved, validated settings for one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub edges: Option<PathBuf>,
    pub attrs: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub seeds: usize,
    pub knn_k: usize,
    pub normalize: bool,
    pub percent: f64,
    pub bins: usize,
    /// `input_dim` is a placeholder until the attributes are loaded.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Resolved string value of every option, with where it came from.
    pub settings: BTreeMap<String, String>,
    pub sources: BTreeMap<String, Source>,
}

fn defaults() -> BTreeMap<&'static str, String> {
    let m = ModelConfig::new(ManifoldKind::PoincareBall, 1);
    let t = TrainConfig::default();
    BTreeMap::from([
        ("k", "10".to_string()),
        ("manifold", m.manifold.to_string()),
        ("dims", format!("{},{}", m.hidden_dim, m.latent_dim)),
        ("activation", m.activation.to_string()),
        ("lambda", m.lambda.to_string()),
        ("fermi-r", m.fermi_r.to_string()),
        ("fermi-t", m.fermi_t.to_string()),
        ("lr", t.lr.to_string()),
        ("epochs", t.epochs.to_string()),
        ("patience", t.patience.to_string()),
        ("mode", t.mode.to_string()),
        ("seed", t.seed.to_string()),
        ("seeds", "3".to_string()),
        ("learn-k", "true".to_string()),
        ("no-attention", "false".to_string()),
        ("no-recx", "false".to_string()),
        ("no-normalize", "false".to_string()),
        ("percent", "10".to_string()),
        ("bins", "50".to_string()),
    ])
}

struct Lookup<'a> {
    values: &'a BTreeMap<String, String>,
}

impl Lookup<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, UsageError>
    where
        T::Err: fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| usage(format!("invalid value {v:?} for --{key}: {e}")))
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    fn bool(&self, key: &str) -> Result<bool, UsageError> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

fn parse_dims(s: &str) -> Result<(usize, usize), UsageError> {
    let bad = || {
        usage(format!(
            "invalid value {s:?} for --dims: expected HIDDEN,LATENT"
        ))
    };
    let (h, l) = s.split_once(',').ok_or_else(bad)?;
    let h = h.trim().parse().map_err(|_| bad())?;
    let l = l.trim().parse().map_err(|_| bad())?;
    Ok((h, l))
}

/// Merges flags, config file and defaults, then type-checks and validates
/// everything that can be checked without loading data.
pub fn resolve(
    spec: &CommandSpec,
    flags: Vec<(String, String)>,
    file: Vec<(String, String)>,
) -> Result<RunConfig, UsageError> {
    let keys = spec.keys();
    let defaults = defaults();
    let mut values = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for (k, v) in file {
        if keys.contains(&k.as_str()) {
            values.insert(k.clone(), v);
            sources.insert(k, Source::File);
        } else {
            log::debug!("config key {k:?} is not used by `{}`", spec.name);
        }
    }
    for (k, v) in flags {
        values.insert(k.clone(), v);
        sources.insert(k, Source::Flag);
    }
    for k in &keys {
        if let (false, Some(d)) = (values.contains_key(*k), defaults.get(k)) {
            values.insert(k.to_string(), d.clone());
            sources.insert(k.to_string(), Source::Default);
        }
    }
    for k in spec.required {
        if !values.contains_key(*k) {
            return Err(usage(format!("`{}` requires --{k}", spec.name)));
        }
    }

    let l = Lookup { values: &values };
    let manifold: ManifoldKind = l
        .get::<String>("manifold")?
        .unwrap_or_else(|| "poincare".into())
        .parse()
        .map_err(|e| usage(format!("--manifold: {e}")))?;
    let mut model = ModelConfig::new(manifold, 1);
    if let Some(d) = l.get::<String>("dims")? {
        (model.hidden_dim, model.latent_dim) = parse_dims(&d)?;
    }
    if let Some(a) = l.get::<String>("activation")? {
        model.activation = a
            .parse::<Activation>()
            .map_err(|e| usage(format!("--activation: {e}")))?;
    }
    model.lambda = l.get("lambda")?.unwrap_or(model.lambda);
    model.fermi_r = l.get("fermi-r")?.unwrap_or(model.fermi_r);
    model.fermi_t = l.get("fermi-t")?.unwrap_or(model.fermi_t);
    model.use_attention = !l.bool("no-attention")?;
    model.reconstruct_x = !l.bool("no-recx")?;
    match l.get::<f64>("fixed-k")? {
        Some(k) => {
            if sources.get("learn-k") != Some(&Source::Default) && l.bool("learn-k")? {
                return Err(usage("--fixed-k and --learn-k are mutually exclusive"));
            }
            model.learn_curvature = false;
            model.curvature = k;
        }
        None => model.learn_curvature = l.bool("learn-k")?,
    }
    if spec.model {
        model
            .validate()
            .map_err(|e| usage(format!("invalid model settings: {e}")))?;
    }

    let mut train = TrainConfig::default();
    train.lr = l.get("lr")?.unwrap_or(train.lr);
    train.epochs = l.get("epochs")?.unwrap_or(train.epochs);
    train.patience = l.get("patience")?.unwrap_or(train.patience);
    train.seed = l.get("seed")?.unwrap_or(train.seed);
    if let Some(m) = l.get::<String>("mode")? {
        train.mode = m
            .parse::<TaskMode>()
            .map_err(|e| usage(format!("--mode: {e}")))?;
    }
    if spec.model {
        train
            .validate()
            .map_err(|e| usage(format!("invalid training settings: {e}")))?;
    }

    let cfg = RunConfig {
        command: spec.name.to_string(),
        edges: l.path("edges"),
        attrs: l.path("attrs"),
        labels: l.path("labels"),
        features: l.path("features"),
        split: l.path("split"),
        checkpoint: l.path("checkpoint"),
        out: l.path("out").expect("out is required by every command"),
        seed: train.seed,
        seeds: l.get("seeds")?.unwrap_or(3),
        knn_k: l.get("k")?.unwrap_or(10),
        normalize: !l.bool("no-normalize")?,
        percent: l.get("percent")?.unwrap_or(10.0),
        bins: l.get("bins")?.unwrap_or(50),
        model,
        train,
        settings: values.clone(),
        sources,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    fn validate(&self) -> Result<(), UsageError> {
        if self.knn_k == 0 {
            return Err(usage("--k must be >= 1"));
        }
        if self.seeds == 0 {
            return Err(usage("--seeds must be >= 1"));
        }
        if !(self.percent > 0.0 && self.percent <= 100.0) {
            return Err(usage(format!(
                "--percent must be in (0, 100], got {}",
                self.percent
            )));
        }
        if self.bins == 0 {
            return Err(usage("--bins must be >= 1"));
        }
        for (key, path) in [
            ("edges", &self.edges),
            ("attrs", &self.attrs),
            ("labels", &self.labels),
            ("features", &self.features),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(usage(format!("--{key}: file not found: {}", p.display())));
                }
            }
        }
        if let Some(p) = &self.split {
            if !p.is_dir() {
                return Err(usage(format!(
                    "--split: directory not found: {}",
                    p.display()
                )));
            }
        }
        std::fs::create_dir_all(&self.out)
            .map_err(|e| usage(format!("--out: cannot create {}: {e}", self.out.display())))?;
        let probe = self.out.join(".hgcae-write-probe");
        std::fs::write(&probe, b"")
            .and_then(|()| std::fs::remove_file(&probe))
            .map_err(|e| {
                usage(format!(
                    "--out: {} is not writable: {e}",
                    self.out.display()
                ))
            })?;
        Ok(())
    }
}
