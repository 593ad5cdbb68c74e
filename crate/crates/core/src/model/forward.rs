//! Forward pass and loss on a [`Tape`], plus tape-free wrappers for
//! inference and for the individual layer operations.

use std::sync::Arc;

use ndarray::{s, Array2};

use super::{Activation, LayerParams, Model, ModelConfig, NodeStates, CURVATURE_FLOOR};
use crate::diffcore::geom::{self, Points};
use crate::diffcore::{EdgeIndex, Tape, Var};
use crate::graphio::Graph;
use crate::manifold::{self, Curvature, ManifoldKind, MAX_ABS_CURVATURE};
use crate::{Error, Result};

/// Tape handles of one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub w: Var,
    pub b: Var,
    pub beta: Var,
    pub gamma: Var,
    pub c_raw: Var,
}

#[derive(Debug, Clone)]
pub struct ParamVars {
    pub layers: Vec<LayerVars>,
}

impl ParamVars {
    /// Places the model's parameters on the tape, as leaves that collect
    /// gradients when `trainable`, as constants otherwise.
    pub fn bind(t: &mut Tape, model: &Model, trainable: bool) -> Self {
        let vars: Vec<Var> = model
            .tensors()
            .into_iter()
            .map(|v| if trainable { t.param(v) } else { t.constant(v) })
            .collect();
        Self::from_vars(&vars).expect("five tensors per layer")
    }

    /// Groups a flat list in [`Model::tensors`] order.
    pub fn from_vars(vars: &[Var]) -> Result<Self> {
        if vars.is_empty() || !vars.len().is_multiple_of(5) {
            return Err(Error::contract("expected five parameter vars per layer"));
        }
        let layers = vars
            .chunks(5)
            .map(|c| LayerVars {
                w: c[0],
                b: c[1],
                beta: c[2],
                gamma: c[3],
                c_raw: c[4],
            })
            .collect();
        Ok(ParamVars { layers })
    }

    pub fn all(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|l| [l.w, l.b, l.beta, l.gamma, l.c_raw])
            .collect()
    }
}

/// Tape outputs of a full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// `c = -K` per layer, `1×1` each.
    pub curvatures: Vec<Var>,
    /// Encoder output, at the curvature of the second layer.
    pub latent: Points,
    /// Attribute reconstruction, `N × d_in`.
    pub xhat: Var,
    /// Per-edge attention weights of each layer (`None` when attention is off).
    pub attention: Vec<Option<Var>>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub rec_a: Var,
    pub rec_x: Var,
}

fn curvature_var(t: &mut Tape, cfg: &ModelConfig, lv: &LayerVars) -> Var {
    if cfg.learn_curvature {
        let sp = t.softplus(lv.c_raw);
        let c = t.add_scalar(sp, CURVATURE_FLOOR);
        t.clamp_max(c, MAX_ABS_CURVATURE)
    } else {
        t.scalar(-cfg.curvature)
    }
}

fn activate(t: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => t.relu(x),
        Activation::Tanh => t.tanh(x),
        Activation::Identity => x,
    }
}

fn check_points(t: &Tape, p: Points, what: &str) -> Result<()> {
    let vars = match p {
        Points::Ball(x) => vec![x],
        Points::Hyperboloid { time, space } => vec![time, space],
    };
    if vars
        .iter()
        .all(|&v| t.value(v).iter().all(|x| x.is_finite()))
    {
        Ok(())
    } else {
        Err(Error::numeric(format!("{what}: non-finite node states")))
    }
}

/// Attention logits `-β d²(exp_o yᵢ, exp_o yⱼ) - γ` normalized over each neighborhood.
fn attention_on_tape(
    t: &mut Tape,
    kind: ManifoldKind,
    y: Var,
    beta: Var,
    gamma: Var,
    c: Var,
    nbhd: &Arc<EdgeIndex>,
) -> Result<Var> {
    let py = geom::exp0(t, kind, y, c)?;
    let d2 = geom::sq_dist_edges(t, py, c, nbhd)?;
    let l = t.mul(d2, beta)?;
    let l = t.neg(l);
    let l = t.sub(l, gamma)?;
    t.segment_softmax(l, nbhd.clone())
}

fn uniform_weights(nbhd: &EdgeIndex) -> Array2<f64> {
    Array2::from_shape_fn((nbhd.len(), 1), |(e, _)| {
        1.0 / nbhd.out_degree(nbhd.src()[e]) as f64
    })
}

/// One message-passing layer at curvature `c`:
/// `zᵢ = exp_o(Σⱼ αᵢⱼ (W log_o(hⱼ) + b))`.
fn layer_on_tape(
    t: &mut Tape,
    lv: &LayerVars,
    h: Points,
    c: Var,
    nbhd: &Arc<EdgeIndex>,
    use_attention: bool,
) -> Result<(Points, Option<Var>)> {
    let kind = h.kind();
    let u = geom::log0(t, h, c)?;
    let wt = t.transpose(lv.w);
    let y = t.matmul(u, wt)?;
    let y = t.add(y, lv.b)?;
    let (alpha, att) = if use_attention {
        let a = attention_on_tape(t, kind, y, lv.beta, lv.gamma, c, nbhd)?;
        (a, Some(a))
    } else {
        (t.constant(uniform_weights(nbhd)), None)
    };
    let m = t.spmm(alpha, y, nbhd.clone())?;
    Ok((geom::exp0(t, kind, m, c)?, att))
}

/// Applies `σ` (when given) and moves the points from curvature `c_in` to `c_out`.
fn transition_on_tape(
    t: &mut Tape,
    z: Points,
    c_in: Var,
    c_out: Var,
    act: Option<Activation>,
) -> Result<Points> {
    let kind = z.kind();
    let v = match (z, act) {
        (_, None) => geom::log0(t, z, c_in)?,
        (Points::Ball(p), Some(a)) => {
            let q = activate(t, p, a);
            geom::ball_log0(t, q, c_in)?
        }
        (Points::Hyperboloid { time, space }, Some(a)) => {
            let b = geom::hyp_to_ball(t, time, space, c_in)?;
            let b = activate(t, b, a);
            let (_, s) = geom::ball_to_hyp(t, b, c_in)?;
            geom::hyp_log0(t, s, c_in)?
        }
    };
    geom::exp0(t, kind, v, c_out)
}

/// Layers `from..to` starting at points `h` (already at the curvature of layer `from`).
#[allow(clippy::too_many_arguments)]
fn run_layers(
    t: &mut Tape,
    cfg: &ModelConfig,
    p: &ParamVars,
    cs: &[Var],
    mut h: Points,
    nbhd: &Arc<EdgeIndex>,
    range: std::ops::Range<usize>,
    attention: &mut Vec<Option<Var>>,
) -> Result<Points> {
    let last = p.layers.len() - 1;
    for l in range.clone() {
        let (z, att) = layer_on_tape(t, &p.layers[l], h, cs[l], nbhd, cfg.use_attention)?;
        check_points(t, z, &format!("layer {l}"))?;
        attention.push(att);
        if l + 1 == range.end || l == last {
            return Ok(z);
        }
        h = transition_on_tape(t, z, cs[l], cs[l + 1], Some(cfg.activation))?;
    }
    Ok(h)
}

/// Full forward pass from Euclidean attributes `x` (`N × d_in`) over the
/// neighborhood index `nbhd` (self-loops included).
pub fn forward(
    t: &mut Tape,
    cfg: &ModelConfig,
    p: &ParamVars,
    nbhd: &Arc<EdgeIndex>,
    x: Var,
) -> Result<ForwardVars> {
    if p.layers.len() != super::NUM_LAYERS {
        return Err(Error::contract("the model has exactly four layers"));
    }
    if !t.value(x).iter().all(|v| v.is_finite()) {
        return Err(Error::contract("input attributes are not finite"));
    }
    let cs: Vec<Var> = p
        .layers
        .iter()
        .map(|lv| curvature_var(t, cfg, lv))
        .collect();
    let h = geom::exp0(t, cfg.manifold, x, cs[0])?;
    let mut attention = Vec::with_capacity(super::NUM_LAYERS);
    let enc = super::NUM_ENCODER_LAYERS;
    let latent = run_layers(t, cfg, p, &cs, h, nbhd, 0..enc, &mut attention)?;
    // no activation on the encoder output, only the curvature change
    let h = transition_on_tape(t, latent, cs[enc - 1], cs[enc], None)?;
    let out = run_layers(
        t,
        cfg,
        p,
        &cs,
        h,
        nbhd,
        enc..super::NUM_LAYERS,
        &mut attention,
    )?;
    let xhat = geom::log0(t, out, cs[super::NUM_LAYERS - 1])?;
    Ok(ForwardVars {
        curvatures: cs,
        latent,
        xhat,
        attention,
    })
}

/// `L = L_REC-A + λ L_REC-X`.
///
/// `L_REC-A` is the mean binary cross-entropy of the Fermi-Dirac edge
/// probabilities over `pos` (label 1) and `neg` (label 0) pairs;
/// `L_REC-X = ‖X - X̂‖² / N`.
pub fn loss(
    t: &mut Tape,
    cfg: &ModelConfig,
    fwd: &ForwardVars,
    x: Var,
    pos: &Arc<EdgeIndex>,
    neg: &Arc<EdgeIndex>,
) -> Result<LossVars> {
    let count = pos.len() + neg.len();
    if count == 0 {
        return Err(Error::contract(
            "loss needs at least one positive or negative pair",
        ));
    }
    let c = fwd.curvatures[super::NUM_ENCODER_LAYERS - 1];
    let logit = |t: &mut Tape, pairs: &Arc<EdgeIndex>| -> Result<Var> {
        let d2 = geom::sq_dist_edges(t, fwd.latent, c, pairs)?;
        let z = t.add_scalar(d2, -cfg.fermi_r);
        Ok(t.scale(z, 1.0 / cfg.fermi_t))
    };
    // -log p = softplus(z), -log(1 - p) = softplus(-z)
    let zp = logit(t, pos)?;
    let lp = t.softplus(zp);
    let sp = t.sum(lp);
    let zn = logit(t, neg)?;
    let zn = t.neg(zn);
    let ln = t.softplus(zn);
    let sn = t.sum(ln);
    let s = t.add(sp, sn)?;
    let rec_a = t.scale(s, 1.0 / count as f64);

    let diff = t.sub(x, fwd.xhat)?;
    let sq = t.square(diff);
    let sq = t.sum(sq);
    let rec_x = t.scale(sq, 1.0 / t.shape(x).0.max(1) as f64);

    for (name, v) in [("L_REC-A", rec_a), ("L_REC-X", rec_x)] {
        if !t.scalar_value(v).is_finite() {
            return Err(Error::numeric(format!("{name} is not finite")));
        }
    }
    let weighted = t.scale(rec_x, cfg.effective_lambda());
    let total = t.add(rec_a, weighted)?;
    Ok(LossVars {
        total,
        rec_a,
        rec_x,
    })
}

/// `[exp((d² - r)/t) + 1]⁻¹`, evaluated without overflow.
pub fn fermi_dirac_prob(d2: f64, r: f64, t: f64) -> f64 {
    let z = (d2 - r) / t;
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

fn states_on_tape(t: &mut Tape, h: &NodeStates) -> Points {
    match h.kind() {
        ManifoldKind::PoincareBall => Points::Ball(t.constant(h.coords().clone())),
        ManifoldKind::Hyperboloid => {
            let time = t.constant(h.coords().slice(s![.., 0..1]).to_owned());
            let space = t.constant(h.coords().slice(s![.., 1..]).to_owned());
            Points::Hyperboloid { time, space }
        }
    }
}

fn states_from_tape(t: &Tape, p: Points, k: Curvature) -> Result<NodeStates> {
    match p {
        Points::Ball(x) => NodeStates::new(p.kind(), k, t.value(x).clone()),
        Points::Hyperboloid { time, space } => {
            let coords = ndarray::concatenate(
                ndarray::Axis(1),
                &[t.value(time).view(), t.value(space).view()],
            )
            .map_err(|e| Error::contract(e.to_string()))?;
            NodeStates::new(p.kind(), k, coords)
        }
    }
}

fn constant_layer(t: &mut Tape, l: &LayerParams) -> LayerVars {
    LayerVars {
        w: t.constant(l.w.clone()),
        b: t.constant(l.b.clone()),
        beta: t.scalar(l.beta),
        gamma: t.scalar(l.gamma),
        c_raw: t.scalar(l.c_raw),
    }
}

/// Lifts Euclidean attribute rows onto the manifold with `exp_o`.
pub fn lift_input(x: &Array2<f64>, kind: ManifoldKind, k: Curvature) -> Result<NodeStates> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::contract("input attributes are not finite"));
    }
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let c = t.scalar(k.abs());
    let p = geom::exp0(&mut t, kind, xv, c)?;
    states_from_tape(&t, p, k)
}

/// Attention weights of a layer, one per edge of `nbhd`, for tangent rows
/// `y` at curvature `k`.
pub fn attention_weights(
    y: &Array2<f64>,
    nbhd: &Arc<EdgeIndex>,
    beta: f64,
    gamma: f64,
    kind: ManifoldKind,
    k: Curvature,
) -> Result<Vec<f64>> {
    let mut t = Tape::new();
    let yv = t.constant(y.clone());
    let (b, g, c) = (t.scalar(beta), t.scalar(gamma), t.scalar(k.abs()));
    let a = attention_on_tape(&mut t, kind, yv, b, g, c, nbhd)?;
    Ok(t.value(a).column(0).to_vec())
}

/// Pre-activation output of one layer, at the curvature of `h`.
pub fn message_pass(
    h: &NodeStates,
    layer: &LayerParams,
    nbhd: &Arc<EdgeIndex>,
    use_attention: bool,
) -> Result<NodeStates> {
    if layer.d_in() != h.dim() {
        return Err(Error::contract(format!(
            "layer expects dimension {}, states have {}",
            layer.d_in(),
            h.dim()
        )));
    }
    let mut t = Tape::new();
    let lv = constant_layer(&mut t, layer);
    let c = t.scalar(h.curvature().abs());
    let hp = states_on_tape(&mut t, h);
    let (z, _) = layer_on_tape(&mut t, &lv, hp, c, nbhd, use_attention)?;
    check_points(&t, z, "message pass")?;
    states_from_tape(&t, z, h.curvature())
}

/// `exp_o^{K'}(log_o^{K}(σ(z)))`; on the hyperboloid `σ` acts on ball
/// coordinates. `act = None` only changes the curvature.
pub fn activation_transition(
    z: &NodeStates,
    k_next: Curvature,
    act: Option<Activation>,
) -> Result<NodeStates> {
    let mut t = Tape::new();
    let c_in = t.scalar(z.curvature().abs());
    let c_out = t.scalar(k_next.abs());
    let p = states_on_tape(&mut t, z);
    let out = transition_on_tape(&mut t, p, c_in, c_out, act)?;
    states_from_tape(&t, out, k_next)
}

impl Model {
    /// Neighborhood index (neighbors plus self) of a graph.
    pub fn neighborhoods(graph: &Graph) -> Result<Arc<EdgeIndex>> {
        Ok(Arc::new(EdgeIndex::neighborhoods(
            graph.num_nodes(),
            graph.edges(),
        )?))
    }

    fn check_input(&self, nbhd: &EdgeIndex, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim || x.nrows() != nbhd.num_nodes() {
            return Err(Error::contract(format!(
                "attributes are {:?}, model expects N={} rows of width {}",
                x.dim(),
                nbhd.num_nodes(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    fn latent_curvature(&self) -> Result<Curvature> {
        Curvature::new(self.curvatures()[super::NUM_ENCODER_LAYERS - 1])
    }

    /// Latent node states (encoder output).
    pub fn encode(&self, nbhd: &Arc<EdgeIndex>, x: &Array2<f64>) -> Result<NodeStates> {
        Ok(self.reconstruct(nbhd, x)?.0)
    }

    /// Latent states and attribute reconstruction.
    pub fn reconstruct(
        &self,
        nbhd: &Arc<EdgeIndex>,
        x: &Array2<f64>,
    ) -> Result<(NodeStates, Array2<f64>)> {
        self.check_input(nbhd, x)?;
        let mut t = Tape::new();
        let p = ParamVars::bind(&mut t, self, false);
        let xv = t.constant(x.clone());
        let fwd = forward(&mut t, &self.config, &p, nbhd, xv)?;
        let latent = states_from_tape(&t, fwd.latent, self.latent_curvature()?)?;
        Ok((latent, t.value(fwd.xhat).clone()))
    }

    /// Runs the decoder layers on given latent states.
    pub fn decode_attributes(
        &self,
        latent: &NodeStates,
        nbhd: &Arc<EdgeIndex>,
    ) -> Result<Array2<f64>> {
        let enc = super::NUM_ENCODER_LAYERS;
        if latent.dim() != self.config.latent_dim || latent.num_nodes() != nbhd.num_nodes() {
            return Err(Error::contract("latent states do not match the model"));
        }
        let mut t = Tape::new();
        let p = ParamVars::bind(&mut t, self, false);
        let cs: Vec<Var> = p
            .layers
            .iter()
            .map(|lv| curvature_var(&mut t, &self.config, lv))
            .collect();
        let c_latent = t.scalar(latent.curvature().abs());
        let h = states_on_tape(&mut t, latent);
        let h = transition_on_tape(&mut t, h, c_latent, cs[enc], None)?;
        let mut att = Vec::new();
        let out = run_layers(
            &mut t,
            &self.config,
            &p,
            &cs,
            h,
            nbhd,
            enc..super::NUM_LAYERS,
            &mut att,
        )?;
        let xhat = geom::log0(&mut t, out, cs[super::NUM_LAYERS - 1])?;
        Ok(t.value(xhat).clone())
    }

    /// Fermi-Dirac edge probabilities for node pairs of the latent states.
    pub fn score_pairs(&self, latent: &NodeStates, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|&(i, j)| {
                if i >= latent.num_nodes() || j >= latent.num_nodes() {
                    return Err(Error::contract(format!("pair ({i}, {j}) out of range")));
                }
                let d = manifold::distance(&latent.point(i), &latent.point(j))?;
                Ok(fermi_dirac_prob(
                    d * d,
                    self.config.fermi_r,
                    self.config.fermi_t,
                ))
            })
            .collect()
    }
}
