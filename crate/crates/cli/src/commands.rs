//! Subcommand implementations. Each writes its artifacts under `--out`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use hgcae::diffcore::EdgeIndex;
use hgcae::eval::{
    self, clustering_metrics, hdo_rank, histogram, kmeans, link_prediction_eval, median,
    write_histogram_csv, write_metrics, EmbeddingTable, HdoMode,
};
use hgcae::graphio::{
    self, build_mutual_knn, l2_normalize_rows, read_matrix_csv, read_split, split_edges,
    write_edge_list, write_split, EdgeSplit, Graph, SplitFractions,
};
use hgcae::model::{Checkpoint, Model, ModelConfig, NodeStates};
use hgcae::train::{self, write_trace_csv, TaskMode, TrainConfig};
use hgcae::{Error, Result};
use ndarray::Array2;
use serde::Serialize;

use crate::config::RunConfig;

pub fn dispatch(cfg: &RunConfig) -> Result<()> {
    match cfg.command.as_str() {
        "knn-graph" => knn_graph(cfg),
        "split" => split(cfg),
        "train" => train_cmd(cfg),
        "eval-lp" => eval_lp(cfg),
        "eval-cluster" => eval_cluster(cfg),
        "embed" => embed(cfg),
        "hdo" => hdo(cfg),
        "ablate" => ablate(cfg),
        other => unreachable!("unknown command {other}"),
    }
}

fn path<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> &'a Path {
    p.as_deref()
        .unwrap_or_else(|| panic!("--{key} is validated as required"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).expect("serialisable value");
    write_text(path, &(s + "\n"))
}

fn write_ids(path: &Path, ids: &[usize]) -> Result<()> {
    let s: String = ids.iter().map(|i| format!("{i}\n")).collect();
    write_text(path, &s)
}

/// Graph plus the attribute matrix fed to the model. Without `--attrs`
/// the identity matrix is used.
struct Inputs {
    graph: Graph,
    x: Array2<f64>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let edges = path(&cfg.edges, "edges");
    let attrs = cfg.attrs.as_deref().map(read_matrix_csv).transpose()?;
    let labels = cfg
        .labels
        .as_deref()
        .map(|p| graphio::load_labels(p, attrs.as_ref().map(|a| a.nrows())))
        .transpose()?;
    let n = attrs
        .as_ref()
        .map(|a| a.nrows())
        .or(labels.as_ref().map(|l| l.len()));
    let (graph, report) = match n {
        Some(n) => graphio::load_edge_list_sized(edges, n)?,
        None => graphio::load_edge_list(edges)?,
    };
    log::info!(
        "graph: {} nodes, {} edges ({} duplicates, {} self-loops dropped)",
        graph.num_nodes(),
        graph.num_edges(),
        report.duplicates,
        report.self_loops
    );
    let x = match attrs {
        Some(mut a) => {
            if cfg.normalize {
                l2_normalize_rows(&mut a);
            }
            a
        }
        None => Array2::eye(graph.num_nodes()),
    };
    let graph = graph.with_attributes(x.clone())?;
    Ok(Inputs { graph, x })
}

fn load_model(cfg: &RunConfig, inputs: &Inputs) -> Result<Model> {
    let p = path(&cfg.checkpoint, "checkpoint");
    let model = Checkpoint::load(p)?.to_model()?;
    if model.config.input_dim != inputs.x.ncols() {
        return Err(Error::Contract(format!(
            "checkpoint {} expects {} input columns, the attributes have {}",
            p.display(),
            model.config.input_dim,
            inputs.x.ncols()
        )));
    }
    Ok(model)
}

fn load_split_for(cfg: &RunConfig, graph: &Graph) -> Result<Option<EdgeSplit>> {
    let Some(dir) = &cfg.split else {
        return Ok(None);
    };
    let split = read_split(dir)?;
    if split.num_nodes != graph.num_nodes() {
        return Err(Error::Contract(format!(
            "split in {} has {} nodes, the graph has {}",
            dir.display(),
            split.num_nodes,
            graph.num_nodes()
        )));
    }
    Ok(Some(split))
}

/// Latent states with message passing over the split's training edges when
/// a split is given, over all edges otherwise.
fn encode(model: &Model, inputs: &Inputs, split: Option<&EdgeSplit>) -> Result<NodeStates> {
    let edges = split.map_or(inputs.graph.edges(), |s| s.train.as_slice());
    let nbhd = Arc::new(EdgeIndex::neighborhoods(inputs.graph.num_nodes(), edges)?);
    model.encode(&nbhd, &inputs.x)
}

fn knn_graph(cfg: &RunConfig) -> Result<()> {
    let f = read_matrix_csv(path(&cfg.features, "features"))?;
    let g = build_mutual_knn(f.view(), cfg.knn_k)?;
    log::info!(
        "mutual {}-NN graph: {} nodes, {} edges",
        cfg.knn_k,
        g.num_nodes(),
        g.num_edges()
    );
    write_edge_list(&cfg.out.join("edges.txt"), g.edges())?;
    println!("{} nodes, {} edges", g.num_nodes(), g.num_edges());
    Ok(())
}

fn split(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let s = split_edges(&inputs.graph, SplitFractions::default(), cfg.seed)?;
    write_split(&cfg.out, &s)?;
    println!(
        "train {} / val {} / test {} edges",
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    Ok(())
}

fn model_config(cfg: &RunConfig, inputs: &Inputs) -> ModelConfig {
    ModelConfig {
        input_dim: inputs.x.ncols(),
        ..cfg.model.clone()
    }
}

fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let split = match (cfg.train.mode, load_split_for(cfg, &inputs.graph)?) {
        (TaskMode::LinkPrediction, None) => {
            let s = split_edges(&inputs.graph, SplitFractions::default(), cfg.seed)?;
            write_split(&cfg.out.join("split"), &s)?;
            Some(s)
        }
        (_, s) => s,
    };
    let out = train::train(
        &inputs.graph,
        split.as_ref(),
        &inputs.x,
        &model_config(cfg, &inputs),
        &cfg.train,
    )?;
    Checkpoint::from_model(&out.model, out.epoch, cfg.seed)
        .save(&cfg.out.join("checkpoint.json"))?;
    write_trace_csv(&cfg.out.join("trace.csv"), &out.trace)?;

    let mut m = BTreeMap::new();
    m.insert("epoch".to_string(), out.epoch as f64);
    m.insert("epochs_run".to_string(), out.trace.len() as f64);
    if let Some(last) = out.trace.last() {
        m.insert("final_loss".to_string(), last.loss);
    }
    if let Some(r) = out.epoch.checked_sub(1).and_then(|i| out.trace.get(i)) {
        if let (Some(auc), Some(ap)) = (r.val_auc, r.val_ap) {
            m.insert("val_auc".to_string(), auc);
            m.insert("val_ap".to_string(), ap);
        }
    }
    for (l, k) in out.model.curvatures().iter().enumerate() {
        m.insert(format!("k_{l}"), *k);
    }
    write_metrics(&cfg.out, "train", &m)?;
    print!("{}", render(&m));
    if let Some(msg) = out.diverged {
        return Err(Error::Numeric(format!(
            "training diverged at {msg}; the last good parameters were saved"
        )));
    }
    Ok(())
}

fn render(m: &BTreeMap<String, f64>) -> String {
    m.iter().map(|(k, v)| format!("{k}: {v:.6}\n")).collect()
}

fn eval_lp(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let model = load_model(cfg, &inputs)?;
    let split = load_split_for(cfg, &inputs.graph)?.expect("--split is required");
    let lm = link_prediction_eval(&model, &split, &inputs.x)?;
    let m = BTreeMap::from([("auc".to_string(), lm.auc), ("ap".to_string(), lm.ap)]);
    write_metrics(&cfg.out, "link_prediction", &m)?;
    print!("{}", render(&m));
    Ok(())
}

fn eval_cluster(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let model = load_model(cfg, &inputs)?;
    let labels = graphio::load_labels(path(&cfg.labels, "labels"), Some(inputs.graph.num_nodes()))?;
    let k = eval::num_classes(&labels);
    let latent = encode(&model, &inputs, None)?;
    let (km, cm) = eval::cluster_latent(&latent, &labels, k, cfg.seed)?;
    // same protocol on the raw attributes, for reference
    let base = clustering_metrics(&kmeans(inputs.x.view(), k, cfg.seed)?.labels, &labels)?;
    let m = BTreeMap::from([
        ("acc".to_string(), cm.acc),
        ("nmi".to_string(), cm.nmi),
        ("ari".to_string(), cm.ari),
        ("attrs_acc".to_string(), base.acc),
        ("attrs_nmi".to_string(), base.nmi),
        ("attrs_ari".to_string(), base.ari),
        ("clusters".to_string(), k as f64),
    ]);
    write_metrics(&cfg.out, "clustering", &m)?;
    write_ids(&cfg.out.join("clusters.txt"), &km.labels)?;
    print!("{}", render(&m));
    Ok(())
}

fn embed(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let model = load_model(cfg, &inputs)?;
    let split = load_split_for(cfg, &inputs.graph)?;
    let latent = encode(&model, &inputs, split.as_ref())?;
    let table = EmbeddingTable::from_states(&latent)?;
    table.write_csv(&cfg.out.join("embeddings.csv"))?;
    println!("{} embeddings written", table.len());
    Ok(())
}

fn hdo(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let model = load_model(cfg, &inputs)?;
    let split = load_split_for(cfg, &inputs.graph)?;
    let latent = encode(&model, &inputs, split.as_ref())?;
    let table = EmbeddingTable::from_states(&latent)?;
    table.write_csv(&cfg.out.join("embeddings.csv"))?;
    write_histogram_csv(
        &cfg.out.join("hdo_histogram.csv"),
        &histogram(&table.hdo, cfg.bins)?,
    )?;
    for mode in [HdoMode::High, HdoMode::Middle, HdoMode::Low] {
        let ids = hdo_rank(&table.hdo, mode, cfg.percent)?;
        write_ids(&cfg.out.join(format!("hdo_{mode}.txt")), &ids)?;
        println!("{mode}: {} nodes", ids.len());
    }
    println!("median hdo: {:.6}", median(&table.hdo));
    Ok(())
}

/// One row of the ablation matrix.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Variant {
    pub name: &'static str,
    pub attention: bool,
    pub reconstruct_x: bool,
    /// `None` learns the curvature.
    pub fixed_k: Option<f64>,
}

/// Curvature standing in for flat space: the geometry is close to
/// Euclidean over the range the embeddings occupy.
pub const EUCLIDEAN_LIKE_K: f64 = -1e-4;

pub const VARIANTS: [Variant; 6] = [
    Variant {
        name: "baseline-like",
        attention: false,
        reconstruct_x: false,
        fixed_k: Some(EUCLIDEAN_LIKE_K),
    },
    Variant {
        name: "+recX",
        attention: false,
        reconstruct_x: true,
        fixed_k: Some(EUCLIDEAN_LIKE_K),
    },
    Variant {
        name: "+hyperbolic",
        attention: false,
        reconstruct_x: true,
        fixed_k: Some(-1.0),
    },
    Variant {
        name: "+attention",
        attention: true,
        reconstruct_x: false,
        fixed_k: Some(-1.0),
    },
    Variant {
        name: "full-fixed-k",
        attention: true,
        reconstruct_x: true,
        fixed_k: Some(-1.0),
    },
    Variant {
        name: "full",
        attention: true,
        reconstruct_x: true,
        fixed_k: None,
    },
];

#[derive(Debug, Clone, Serialize)]
struct AblationRun {
    variant: &'static str,
    seed: u64,
    test_auc: f64,
    test_ap: f64,
    epoch: usize,
    diverged: bool,
}

fn ablate(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.seed + i).collect();
    let splits = seeds
        .iter()
        .map(|&s| split_edges(&inputs.graph, SplitFractions::default(), s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..VARIANTS.len())
        .flat_map(|v| (0..seeds.len()).map(move |s| (v, s)))
        .collect();
    let runs = hgcae::par::map_tasks(jobs.len(), |j| -> Result<AblationRun> {
        let (v, s) = jobs[j];
        let var = VARIANTS[v];
        let mut mc = model_config(cfg, &inputs);
        mc.use_attention = var.attention;
        mc.reconstruct_x = var.reconstruct_x;
        match var.fixed_k {
            Some(k) => {
                mc.learn_curvature = false;
                mc.curvature = k;
            }
            None => {
                mc.learn_curvature = true;
                mc.curvature = -1.0;
            }
        }
        let tc = TrainConfig {
            seed: seeds[s],
            mode: TaskMode::LinkPrediction,
            ..cfg.train.clone()
        };
        let out = train::train(&inputs.graph, Some(&splits[s]), &inputs.x, &mc, &tc)?;
        let lm = link_prediction_eval(&out.model, &splits[s], &inputs.x)?;
        log::info!("{} seed {}: test AUC {:.4}", var.name, seeds[s], lm.auc);
        Ok(AblationRun {
            variant: var.name,
            seed: seeds[s],
            test_auc: lm.auc,
            test_ap: lm.ap,
            epoch: out.epoch,
            diverged: out.diverged.is_some(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from("variant,seed,test_auc,test_ap,epoch,diverged\n");
    for r in &runs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.variant, r.seed, r.test_auc, r.test_ap, r.epoch, r.diverged
        );
    }
    write_text(&cfg.out.join("ablation_runs.csv"), &csv)?;

    let mut summary = String::from("variant,attention,recx,curvature,median_auc,median_ap\n");
    let mut table = format!(
        "{:<14} {:>9} {:>5} {:>11} {:>10} {:>10}\n",
        "variant", "attention", "recX", "K", "AUC", "AP"
    );
    for var in VARIANTS {
        let rs: Vec<&AblationRun> = runs.iter().filter(|r| r.variant == var.name).collect();
        let auc = median(&rs.iter().map(|r| r.test_auc).collect::<Vec<_>>());
        let ap = median(&rs.iter().map(|r| r.test_ap).collect::<Vec<_>>());
        let k = var.fixed_k.map_or("learned".to_string(), |k| k.to_string());
        let _ = writeln!(
            summary,
            "{},{},{},{k},{auc},{ap}",
            var.name, var.attention, var.reconstruct_x
        );
        let yn = |b: bool| if b { "yes" } else { "no" };
        let _ = writeln!(
            table,
            "{:<14} {:>9} {:>5} {:>11} {:>10.4} {:>10.4}",
            var.name,
            yn(var.attention),
            yn(var.reconstruct_x),
            k,
            auc,
            ap
        );
    }
    write_text(&cfg.out.join("ablation.csv"), &summary)?;
    write_text(&cfg.out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    argv: Vec<String>,
    settings: &'a BTreeMap<String, String>,
    sources: &'a BTreeMap<String, crate::config::Source>,
    seed: u64,
    versions: BTreeMap<&'static str, &'static str>,
    parallel: bool,
}

/// Writes `run.json`: the resolved settings (usable as a config file),
/// where each came from, and the program versions.
pub fn write_provenance(cfg: &RunConfig) -> Result<()> {
    let p = Provenance {
        command: &cfg.command,
        argv: std::env::args().collect(),
        settings: &cfg.settings,
        sources: &cfg.sources,
        seed: cfg.seed,
        versions: BTreeMap::from([
            ("hgcae-cli", env!("CARGO_PKG_VERSION")),
            ("hgcae", hgcae::VERSION),
            ("checkpoint-format", hgcae::model::CHECKPOINT_FORMAT),
        ]),
        parallel: hgcae::par::is_parallel(),
    };
    write_json(&cfg.out.join("run.json"), &p)
}
