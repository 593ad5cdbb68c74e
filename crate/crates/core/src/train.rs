//! Full-batch training with Adam.
//!
//! Link-prediction mode passes messages over the training edges only,
//! resamples one negative per training edge every epoch and keeps the
//! parameters with the best validation AUC. Clustering mode uses every edge
//! and keeps the final parameters.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Adam, AdamConfig, EdgeIndex, Tape, Tensor};
use crate::eval::{average_precision, roc_auc};
use crate::graphio::{sample_negatives_with, EdgeSplit, Graph};
use crate::model::{forward, loss, Model, ModelConfig, ParamVars};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    LinkPrediction,
    Clustering,
}

impl FromStr for TaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "link_prediction" | "lp" => Ok(TaskMode::LinkPrediction),
            "clustering" | "nc" => Ok(TaskMode::Clustering),
            _ => Err(Error::contract(format!("unknown task mode {s:?}"))),
        }
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskMode::LinkPrediction => "link_prediction",
            TaskMode::Clustering => "clustering",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Epochs without a validation AUC improvement before stopping.
    pub patience: usize,
    pub mode: TaskMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            lr: 0.01,
            seed: 0,
            patience: 50,
            mode: TaskMode::LinkPrediction,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if self.patience == 0 {
            return Err(Error::contract("patience must be >= 1"));
        }
        Ok(())
    }
}

/// One row of the metric trace. Losses are those of the epoch's gradient
/// step; validation AUC and curvatures are measured after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub rec_a: f64,
    pub rec_x: f64,
    pub val_auc: Option<f64>,
    pub val_ap: Option<f64>,
    pub curvatures: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Epoch whose parameters `model` holds (0 = initial parameters).
    pub epoch: usize,
    pub trace: Vec<EpochRecord>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub diverged: Option<String>,
}

type Pairs = Vec<(usize, usize)>;

struct Prepared {
    nbhd: Arc<EdgeIndex>,
    positives: Vec<(usize, usize)>,
    exclude: HashSet<(usize, usize)>,
    /// Validation positives and negatives.
    validation: Option<(Pairs, Pairs)>,
}

fn prepare(graph: &Graph, split: Option<&EdgeSplit>, mode: TaskMode) -> Result<Prepared> {
    let n = graph.num_nodes();
    match mode {
        TaskMode::LinkPrediction => {
            let split =
                split.ok_or_else(|| Error::contract("link prediction needs an edge split"))?;
            if split.num_nodes != n {
                return Err(Error::contract(format!(
                    "split has {} nodes, graph has {n}",
                    split.num_nodes
                )));
            }
            Ok(Prepared {
                nbhd: Arc::new(EdgeIndex::neighborhoods(n, &split.train)?),
                positives: split.train.clone(),
                exclude: split.held_out_negatives(),
                validation: Some((split.val.clone(), split.val_neg.clone())),
            })
        }
        TaskMode::Clustering => Ok(Prepared {
            nbhd: Arc::new(EdgeIndex::neighborhoods(n, graph.edges())?),
            positives: graph.edges().to_vec(),
            exclude: HashSet::new(),
            validation: None,
        }),
    }
}

fn validation_scores(
    model: &Model,
    prep: &Prepared,
    x: &Array2<f64>,
) -> Result<Option<(f64, f64)>> {
    let Some((pos, neg)) = &prep.validation else {
        return Ok(None);
    };
    if pos.is_empty() || neg.is_empty() {
        return Ok(None);
    }
    let latent = model.encode(&prep.nbhd, x)?;
    let sp = model.score_pairs(&latent, pos)?;
    let sn = model.score_pairs(&latent, neg)?;
    Ok(Some((roc_auc(&sp, &sn)?, average_precision(&sp, &sn)?)))
}

/// Runs one gradient evaluation; returns (loss, rec_a, rec_x, gradients).
fn gradient_step(
    model: &Model,
    prep: &Prepared,
    x: &Array2<f64>,
    negatives: &[(usize, usize)],
) -> Result<(f64, f64, f64, Vec<Tensor>)> {
    let n = x.nrows();
    let pos = Arc::new(EdgeIndex::new(n, &prep.positives)?);
    let neg = Arc::new(EdgeIndex::new(n, negatives)?);
    let mut t = Tape::new();
    let params = ParamVars::bind(&mut t, model, true);
    let xv = t.constant(x.clone());
    let fwd = forward(&mut t, &model.config, &params, &prep.nbhd, xv)?;
    let l = loss(&mut t, &model.config, &fwd, xv, &pos, &neg)?;
    t.backward(l.total)?;
    let grads = params
        .all()
        .into_iter()
        .map(|v| {
            t.grad(v)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(t.shape(v)))
        })
        .collect();
    Ok((
        t.scalar_value(l.total),
        t.scalar_value(l.rec_a),
        t.scalar_value(l.rec_x),
        grads,
    ))
}

/// Trains a freshly initialised model.
///
/// `graph` is the full graph; in link-prediction mode `split` must be
/// given and only its training edges are used for message passing and as
/// positives. Everything random derives from `train_config.seed`.
pub fn train(
    graph: &Graph,
    split: Option<&EdgeSplit>,
    x: &Array2<f64>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = Model::init(model_config.clone(), train_config.seed)?;
    train_from(model, graph, split, x, train_config)
}

/// Like [`train`], starting from given parameters.
pub fn train_from(
    mut model: Model,
    graph: &Graph,
    split: Option<&EdgeSplit>,
    x: &Array2<f64>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.config.validate()?;
    if x.nrows() != graph.num_nodes() || x.ncols() != model.config.input_dim {
        return Err(Error::contract(format!(
            "attributes are {:?}, expected {} x {}",
            x.dim(),
            graph.num_nodes(),
            model.config.input_dim
        )));
    }
    let prep = prepare(graph, split, cfg.mode)?;
    if prep.positives.is_empty() {
        return Err(Error::contract("no training edges"));
    }
    // 1:1 with positives unless the graph has fewer sampleable non-edges
    let available = graph.num_non_edges().saturating_sub(prep.exclude.len());
    let num_negatives = prep.positives.len().min(available);
    if num_negatives < prep.positives.len() {
        log::warn!(
            "only {available} non-edges available; sampling {num_negatives} negatives per epoch"
        );
    }
    let names = model.param_names();
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });

    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY);
    let mut diverged = None;
    for epoch in 1..=cfg.epochs {
        let mut r = rng::indexed_stream(cfg.seed, "negatives", epoch as u64);
        let negatives = sample_negatives_with(graph, num_negatives, &prep.exclude, &mut r)?;
        let step = gradient_step(&model, &prep, x, &negatives).and_then(|(l, a, xr, grads)| {
            let mut params = model.tensors();
            adam.step(&mut params, &grads, &names)?;
            Ok((l, a, xr, params))
        });
        let (l, rec_a, rec_x, params) = match step {
            Ok(s) => s,
            Err(Error::Numeric(msg)) => {
                log::warn!("epoch {epoch}: {msg}; keeping the last good parameters");
                diverged = Some(format!("epoch {epoch}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let previous = model.clone();
        model.set_tensors(&params)?;
        let val = match validation_scores(&model, &prep, x) {
            Ok(v) => v,
            Err(Error::Numeric(msg)) => {
                diverged = Some(format!("epoch {epoch}: {msg}"));
                model = previous;
                break;
            }
            Err(e) => return Err(e),
        };
        trace.push(EpochRecord {
            epoch,
            loss: l,
            rec_a,
            rec_x,
            val_auc: val.map(|v| v.0),
            val_ap: val.map(|v| v.1),
            curvatures: model.curvatures(),
        });
        log::debug!("epoch {epoch}: loss {l:.6} val {val:?}");
        if let Some((auc, _)) = val {
            if auc > best.2 {
                best = (model.clone(), epoch, auc);
            } else if epoch - best.1 >= cfg.patience {
                break;
            }
        }
    }

    let (model, epoch) = match cfg.mode {
        TaskMode::LinkPrediction if best.2.is_finite() => (best.0, best.1),
        _ => {
            let last = trace.last().map_or(0, |r| r.epoch);
            (model, last)
        }
    };
    Ok(TrainOutcome {
        model,
        epoch,
        trace,
        diverged,
    })
}

/// Metric trace as CSV: `epoch,loss,rec_a,rec_x,val_auc,val_ap,k_0,…`.
/// Validation columns are empty in clustering mode.
pub fn write_trace_csv(path: &Path, trace: &[EpochRecord]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let layers = trace.first().map_or(0, |r| r.curvatures.len());
    let ks: Vec<String> = (0..layers).map(|l| format!(",k_{l}")).collect();
    writeln!(w, "epoch,loss,rec_a,rec_x,val_auc,val_ap{}", ks.concat()).map_err(io)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in trace {
        let ks: Vec<String> = r.curvatures.iter().map(|k| format!(",{k}")).collect();
        writeln!(
            w,
            "{},{},{},{},{},{}{}",
            r.epoch,
            r.loss,
            r.rec_a,
            r.rec_x,
            opt(r.val_auc),
            opt(r.val_ap),
            ks.concat()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
