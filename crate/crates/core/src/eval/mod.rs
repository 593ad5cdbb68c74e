//! Link-prediction metrics, clustering in tangent space and HDO ranking.

mod cluster;
mod hdo;
mod ranking;

pub use cluster::{
    clustering_metrics, kmeans, kmeans_with_restarts, max_weight_assignment, ClusteringMetrics,
    KMeansResult, KMEANS_RESTARTS,
};
pub use hdo::{
    hdo_rank, histogram, median, selection_size, write_histogram_csv, EmbeddingTable, HdoMode,
    HistogramBin,
};
pub use ranking::{average_precision, roc_auc};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use crate::diffcore::EdgeIndex;
use crate::graphio::EdgeSplit;
use crate::model::{Model, NodeStates};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkMetrics {
    pub auc: f64,
    pub ap: f64,
}

/// AUC and AP of Fermi-Dirac scores for given positive and negative pairs.
pub fn score_link_pairs(
    model: &Model,
    latent: &NodeStates,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
) -> Result<LinkMetrics> {
    let sp = model.score_pairs(latent, pos)?;
    let sn = model.score_pairs(latent, neg)?;
    Ok(LinkMetrics {
        auc: roc_auc(&sp, &sn)?,
        ap: average_precision(&sp, &sn)?,
    })
}

/// Test-set AUC/AP: encodes with message passing over the training edges
/// only and scores the held-out test positives and negatives.
pub fn link_prediction_eval(
    model: &Model,
    split: &EdgeSplit,
    x: &Array2<f64>,
) -> Result<LinkMetrics> {
    let nbhd = Arc::new(EdgeIndex::neighborhoods(split.num_nodes, &split.train)?);
    let latent = model.encode(&nbhd, x)?;
    score_link_pairs(model, &latent, &split.test, &split.test_neg)
}

/// k-means on `log_o` of the latent rows, compared with `truth`.
pub fn cluster_latent(
    latent: &NodeStates,
    truth: &[usize],
    k: usize,
    seed: u64,
) -> Result<(KMeansResult, ClusteringMetrics)> {
    if truth.len() != latent.num_nodes() {
        return Err(Error::contract(format!(
            "{} labels for {} nodes",
            truth.len(),
            latent.num_nodes()
        )));
    }
    let tangent = latent.log0();
    let km = kmeans(tangent.view(), k, seed)?;
    let m = clustering_metrics(&km.labels, truth)?;
    Ok((km, m))
}

/// Number of distinct labels.
pub fn num_classes(labels: &[usize]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Writes `name: value` lines to `<stem>.txt` and a flat JSON object to `<stem>.json`.
pub fn write_metrics(dir: &Path, stem: &str, metrics: &BTreeMap<String, f64>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let txt: String = metrics
        .iter()
        .map(|(k, v)| format!("{k}: {v:.6}\n"))
        .collect();
    let p = dir.join(format!("{stem}.txt"));
    std::fs::write(&p, txt).map_err(|e| Error::io(&p, e))?;
    let p = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(metrics).map_err(|e| Error::contract(e.to_string()))?;
    std::fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))
}
