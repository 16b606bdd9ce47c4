//! Heat-kernel filter network: forward pass, hand-derived backward pass,
//! normalized-Lipschitz losses, an integral-Lipschitz soft penalty, and a
//! small Adam trainer.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::spectral::{
    certify_filter, freq_response_deriv, FilterCertificate, HeatOp, LambdaGrid,
};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Relu,
    Abs,
    Identity,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Abs => x.abs(),
            Nonlinearity::Identity => x,
        }
    }

    /// Subgradient; at 0 both relu and abs use 0.
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Node,
    Graph,
}

/// Soft constraint driving filters toward the integral-Lipschitz bound
/// |hhat'(lambda)| <= c_l / lambda^{d+1} on a frequency grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBudget {
    pub c_l: f64,
    pub d: usize,
    pub grid: LambdaGrid,
    pub weight: f64,
}

/// One filter bank: taps[f_out][f_in][k].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub taps: Vec<Vec<Vec<f64>>>,
}

impl Layer {
    pub fn f_out(&self) -> usize {
        self.taps.len()
    }

    pub fn f_in(&self) -> usize {
        self.taps[0].len()
    }

    pub fn k(&self) -> usize {
        self.taps[0][0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub layers: Vec<Layer>,
    pub nonlinearity: Nonlinearity,
    /// out_width x F_last
    pub readout_w: DMatrix<f64>,
    pub readout_b: DVector<f64>,
    pub lipschitz_budget: Option<LipschitzBudget>,
}

impl GnnModel {
    /// `widths` = [F_0, F_1, ..., F_last]; symmetric-uniform init scaled by
    /// 1/sqrt(fan_in), deterministic per seed.
    pub fn new(
        widths: &[usize],
        k: usize,
        nonlinearity: Nonlinearity,
        out_width: usize,
        seed: u64,
    ) -> Self {
        assert!(widths.len() >= 2 && k >= 1 && out_width >= 1);
        assert!(widths.iter().all(|&w| w >= 1));
        let mut rng = rng_from_seed(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (f_in, f_out) = (w[0], w[1]);
                let scale = 1.0 / ((f_in * k) as f64).sqrt();
                Layer {
                    taps: (0..f_out)
                        .map(|_| {
                            (0..f_in)
                                .map(|_| (0..k).map(|_| rng.gen_range(-scale..scale)).collect())
                                .collect()
                        })
                        .collect(),
                }
            })
            .collect();
        let f_last = *widths.last().unwrap();
        let rscale = 1.0 / (f_last as f64).sqrt();
        let readout_w = DMatrix::from_fn(out_width, f_last, |_, _| rng.gen_range(-rscale..rscale));
        let readout_b = DVector::zeros(out_width);
        GnnModel {
            layers,
            nonlinearity,
            readout_w,
            readout_b,
            lipschitz_budget: None,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].f_in()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Certificates for every filter, in (layer, f_out, f_in) order.
    pub fn certify(&self, d: usize, grid: LambdaGrid) -> Vec<FilterCertificate> {
        self.layers
            .iter()
            .flat_map(|l| l.taps.iter().flatten())
            .map(|taps| certify_filter(taps, d, grid))
            .collect()
    }

    fn param_count(&self) -> usize {
        let taps: usize = self
            .layers
            .iter()
            .map(|l| l.f_out() * l.f_in() * l.k())
            .sum();
        taps + self.readout_w.len() + self.readout_b.len()
    }

    fn pack(&self, out: &mut Vec<f64>) {
        out.clear();
        for l in &self.layers {
            for fo in &l.taps {
                for fi in fo {
                    out.extend_from_slice(fi);
                }
            }
        }
        out.extend(self.readout_w.iter());
        out.extend(self.readout_b.iter());
    }

    fn unpack(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for l in &mut self.layers {
            for fo in &mut l.taps {
                for fi in fo {
                    for t in fi.iter_mut() {
                        *t = *it.next().unwrap();
                    }
                }
            }
        }
        for w in self.readout_w.iter_mut() {
            *w = *it.next().unwrap();
        }
        for b in self.readout_b.iter_mut() {
            *b = *it.next().unwrap();
        }
        assert!(it.next().is_none());
    }
}

struct LayerCache {
    /// heat chains of the layer input: chains[k] = e^{-kL} x, n x f_in
    chains: Vec<DMatrix<f64>>,
    /// pre-activations, n x f_out
    pre: DMatrix<f64>,
}

pub struct ForwardCache {
    layers: Vec<LayerCache>,
    /// features entering the readout, n x F_last
    features: DMatrix<f64>,
    task: Task,
    n: usize,
}

/// Run the network. Node task returns n x out_width, graph task 1 x
/// out_width (node-mean pooling before the readout).
pub fn forward(
    model: &GnnModel,
    op: &dyn HeatOp,
    x: &DMatrix<f64>,
    task: Task,
) -> Result<(DMatrix<f64>, ForwardCache)> {
    if x.ncols() != model.input_width() {
        return Err(Error::Shape(format!(
            "input has {} channels, model expects {}",
            x.ncols(),
            model.input_width()
        )));
    }
    if x.nrows() != op.n() {
        return Err(Error::Shape(format!(
            "input has {} nodes, operator has {}",
            x.nrows(),
            op.n()
        )));
    }
    let n = x.nrows();
    let mut cur = x.clone();
    let mut caches = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let k = layer.k();
        let mut chains = Vec::with_capacity(k);
        chains.push(cur.clone());
        for _ in 1..k {
            let next = op.heat(1, chains.last().unwrap());
            chains.push(next);
        }
        let mut pre = DMatrix::zeros(n, layer.f_out());
        for (o, per_in) in layer.taps.iter().enumerate() {
            let mut col = DVector::zeros(n);
            for (f, taps) in per_in.iter().enumerate() {
                for (kk, &h) in taps.iter().enumerate() {
                    if h != 0.0 {
                        col.axpy(h, &chains[kk].column(f), 1.0);
                    }
                }
            }
            pre.set_column(o, &col);
        }
        cur = pre.map(|v| model.nonlinearity.apply(v));
        caches.push(LayerCache { chains, pre });
    }
    let output = match task {
        Task::Node => {
            let mut out = &cur * model.readout_w.transpose();
            for mut row in out.row_iter_mut() {
                row += model.readout_b.transpose();
            }
            out
        }
        Task::Graph => {
            let pooled = RowDVector::from_fn(cur.ncols(), |_, j| cur.column(j).mean());
            let mut out = &pooled * model.readout_w.transpose();
            out += model.readout_b.transpose();
            DMatrix::from_rows(&[out])
        }
    };
    Ok((
        output,
        ForwardCache {
            layers: caches,
            features: cur,
            task,
            n,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// same nesting as model.layers[*].taps
    pub taps: Vec<Vec<Vec<Vec<f64>>>>,
    pub readout_w: DMatrix<f64>,
    pub readout_b: DVector<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &GnnModel) -> Self {
        Gradients {
            taps: model
                .layers
                .iter()
                .map(|l| vec![vec![vec![0.0; l.k()]; l.f_in()]; l.f_out()])
                .collect(),
            readout_w: DMatrix::zeros(model.readout_w.nrows(), model.readout_w.ncols()),
            readout_b: DVector::zeros(model.readout_b.len()),
        }
    }

    fn pack(&self, out: &mut Vec<f64>) {
        out.clear();
        for l in &self.taps {
            for fo in l {
                for fi in fo {
                    out.extend_from_slice(fi);
                }
            }
        }
        out.extend(self.readout_w.iter());
        out.extend(self.readout_b.iter());
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for l in &self.taps {
            for fo in l {
                for fi in fo {
                    for &g in fi {
                        m = m.max(g.abs());
                    }
                }
            }
        }
        for g in self.readout_w.iter().chain(self.readout_b.iter()) {
            m = m.max(g.abs());
        }
        m
    }
}

/// Exact gradients for every tap and the readout, given the upstream
/// gradient of the scalar objective with respect to the network output.
pub fn backward(
    model: &GnnModel,
    op: &dyn HeatOp,
    cache: &ForwardCache,
    upstream: &DMatrix<f64>,
) -> Result<Gradients> {
    let expected_rows = match cache.task {
        Task::Node => cache.n,
        Task::Graph => 1,
    };
    if upstream.nrows() != expected_rows || upstream.ncols() != model.readout_w.nrows() {
        return Err(Error::Shape(format!(
            "upstream gradient is {}x{}, expected {}x{}",
            upstream.nrows(),
            upstream.ncols(),
            expected_rows,
            model.readout_w.nrows()
        )));
    }
    if cache.layers.len() != model.layers.len() || cache.layers[0].chains[0].nrows() != op.n() {
        return Err(Error::Shape("cache does not match model/operator".into()));
    }
    let mut grads = Gradients::zeros_like(model);
    // readout
    let d_features: DMatrix<f64> = match cache.task {
        Task::Node => {
            grads.readout_w = upstream.transpose() * &cache.features;
            for i in 0..model.readout_b.len() {
                grads.readout_b[i] = upstream.column(i).sum();
            }
            upstream * &model.readout_w
        }
        Task::Graph => {
            let pooled =
                RowDVector::from_fn(cache.features.ncols(), |_, j| cache.features.column(j).mean());
            grads.readout_w = upstream.transpose() * DMatrix::from_rows(&[pooled]);
            for i in 0..model.readout_b.len() {
                grads.readout_b[i] = upstream[(0, i)];
            }
            let d_pooled = upstream * &model.readout_w; // 1 x F_last
            let scale = 1.0 / cache.n as f64;
            DMatrix::from_fn(cache.n, cache.features.ncols(), |_, j| {
                scale * d_pooled[(0, j)]
            })
        }
    };
    // layers, back to front
    let mut d_out = d_features;
    for li in (0..model.layers.len()).rev() {
        let layer = &model.layers[li];
        let lc = &cache.layers[li];
        let d_pre = DMatrix::from_fn(d_out.nrows(), d_out.ncols(), |i, j| {
            d_out[(i, j)] * model.nonlinearity.deriv(lc.pre[(i, j)])
        });
        // tap gradients: g[o][f][k] = <d_pre[:,o], chains[k][:,f]>
        for o in 0..layer.f_out() {
            for f in 0..layer.f_in() {
                for kk in 0..layer.k() {
                    grads.taps[li][o][f][kk] = d_pre.column(o).dot(&lc.chains[kk].column(f));
                }
            }
        }
        // input gradient: dx[:,f] = sum_k e^{-kL} sum_o taps[o][f][k] d_pre[:,o]
        // (heat operator is symmetric, so the adjoint is itself)
        let k = layer.k();
        let mut up_chains = Vec::with_capacity(k);
        up_chains.push(d_pre);
        for _ in 1..k {
            let next = op.heat(1, up_chains.last().unwrap());
            up_chains.push(next);
        }
        let mut d_in = DMatrix::zeros(cache.n, layer.f_in());
        for f in 0..layer.f_in() {
            let mut col = DVector::zeros(cache.n);
            for o in 0..layer.f_out() {
                for (kk, chain) in up_chains.iter().enumerate() {
                    let h = layer.taps[o][f][kk];
                    if h != 0.0 {
                        col.axpy(h, &chain.column(o), 1.0);
                    }
                }
            }
            d_in.set_column(f, &col);
        }
        d_out = d_in;
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    L1,
    Huber { delta: f64 },
    /// Binary cross entropy on logits. Violates the normalized-Lipschitz
    /// zero-diagonal assumption the generalization bound needs; runs using
    /// it are labeled accordingly.
    CrossEntropy,
}

/// Mean-per-row loss and its gradient with respect to the prediction.
pub fn loss(kind: LossKind, pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.nrows() as f64;
    let mut grad = DMatrix::zeros(pred.nrows(), pred.ncols());
    let mut total = 0.0;
    for i in 0..pred.nrows() {
        for j in 0..pred.ncols() {
            let (a, y) = (pred[(i, j)], target[(i, j)]);
            let (v, g) = match kind {
                LossKind::L1 => ((a - y).abs(), (a - y).signum() * if a == y { 0.0 } else { 1.0 }),
                LossKind::Huber { delta } => {
                    let r = a - y;
                    if r.abs() <= delta {
                        (0.5 * r * r, r)
                    } else {
                        (delta * (r.abs() - 0.5 * delta), delta * r.signum())
                    }
                }
                LossKind::CrossEntropy => {
                    if !(0.0..=1.0).contains(&y) {
                        return Err(Error::config(format!(
                            "cross-entropy target must lie in [0,1], got {y}"
                        )));
                    }
                    // numerically stable softplus(a) - y*a
                    let sp = if a > 0.0 {
                        a + (-a).exp().ln_1p()
                    } else {
                        a.exp().ln_1p()
                    };
                    let sig = 1.0 / (1.0 + (-a).exp());
                    (sp - y * a, sig - y)
                }
            };
            total += v;
            grad[(i, j)] = g / n;
        }
    }
    Ok((total / n, grad))
}

/// Squared-hinge penalty on the integral-Lipschitz derivative bound over
/// the budget grid, with exact subgradients for every tap.
pub fn lipschitz_penalty(model: &GnnModel, budget: &LipschitzBudget) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(model);
    let mut value = 0.0;
    for (li, layer) in model.layers.iter().enumerate() {
        for (o, per_in) in layer.taps.iter().enumerate() {
            for (f, taps) in per_in.iter().enumerate() {
                for lam in budget.grid.points() {
                    let w = lam.powi(budget.d as i32 + 1);
                    let dh = freq_response_deriv(taps, lam);
                    let excess = w * dh.abs() - budget.c_l;
                    if excess > 0.0 {
                        value += budget.weight * excess * excess;
                        let sign = dh.signum();
                        let e = (-lam).exp();
                        let mut pow = 1.0;
                        for kk in 1..taps.len() {
                            pow *= e;
                            // d|dh|/dh_k = sign * (-k e^{-k lam})
                            let d_excess = w * sign * (-(kk as f64) * pow);
                            grads.taps[li][o][f][kk] += 2.0 * budget.weight * excess * d_excess;
                        }
                    }
                }
            }
        }
    }
    (value, grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize) -> Result<Self> {
        if learning_rate < 0.0 || epochs == 0 {
            return Err(Error::config(format!(
                "training needs learning_rate >= 0 and epochs >= 1, got {learning_rate}, {epochs}"
            )));
        }
        Ok(TrainConfig {
            learning_rate,
            epochs,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        })
    }
}

/// One training graph: operator, node features, targets.
pub struct GraphExample<'a> {
    pub op: &'a dyn HeatOp,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

/// Full-batch Adam on a single graph; returns the trained model and the
/// per-epoch training risk (loss plus penalty).
pub fn train(
    model: &GnnModel,
    op: &dyn HeatOp,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    task: Task,
    config: &TrainConfig,
    loss_kind: LossKind,
) -> Result<(GnnModel, Vec<f64>)> {
    let data = [GraphExample {
        op,
        x: x.clone(),
        y: y.clone(),
    }];
    train_multi(model, &data, task, config, loss_kind)
}

/// Full-batch Adam over a collection of graphs (losses averaged across
/// graphs each epoch).
pub fn train_multi(
    model: &GnnModel,
    data: &[GraphExample<'_>],
    task: Task,
    config: &TrainConfig,
    loss_kind: LossKind,
) -> Result<(GnnModel, Vec<f64>)> {
    assert!(!data.is_empty());
    let mut m = model.clone();
    let np = m.param_count();
    let mut flat = Vec::with_capacity(np);
    let mut gflat = vec![0.0f64; np];
    let mut one = Vec::with_capacity(np);
    let mut pflat = Vec::with_capacity(np);
    let mut mom1 = vec![0.0f64; np];
    let mut mom2 = vec![0.0f64; np];
    let mut curve = Vec::with_capacity(config.epochs);
    let scale = 1.0 / data.len() as f64;
    for epoch in 0..config.epochs {
        gflat.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for ex in data {
            let (pred, cache) = forward(&m, ex.op, &ex.x, task)?;
            let (v, dpred) = loss(loss_kind, &pred, &ex.y)?;
            let grads = backward(&m, ex.op, &cache, &dpred)?;
            grads.pack(&mut one);
            for (g, o) in gflat.iter_mut().zip(&one) {
                *g += scale * o;
            }
            value += scale * v;
        }
        let mut total = value;
        if let Some(budget) = &m.lipschitz_budget {
            let (pv, pg) = lipschitz_penalty(&m, budget);
            total += pv;
            pg.pack(&mut pflat);
            for (g, p) in gflat.iter_mut().zip(&pflat) {
                *g += p;
            }
        }
        if !total.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        curve.push(total);
        m.pack(&mut flat);
        let t = (epoch + 1) as f64;
        let bc1 = 1.0 - config.beta1.powf(t);
        let bc2 = 1.0 - config.beta2.powf(t);
        for i in 0..np {
            mom1[i] = config.beta1 * mom1[i] + (1.0 - config.beta1) * gflat[i];
            mom2[i] = config.beta2 * mom2[i] + (1.0 - config.beta2) * gflat[i] * gflat[i];
            let mhat = mom1[i] / bc1;
            let vhat = mom2[i] / bc2;
            flat[i] -= config.learning_rate * mhat / (vhat.sqrt() + config.adam_eps);
        }
        m.unpack(&flat);
    }
    Ok((m, curve))
}

/// Maximum relative error of analytic gradients against central finite
/// differences over every parameter (step 1e-6).
pub fn gradient_check(
    model: &GnnModel,
    op: &dyn HeatOp,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    task: Task,
    loss_kind: LossKind,
) -> Result<f64> {
    let (pred, cache) = forward(model, op, x, task)?;
    let (_, dpred) = loss(loss_kind, &pred, y)?;
    let grads = backward(model, op, &cache, &dpred)?;
    let mut gflat = Vec::new();
    grads.pack(&mut gflat);
    let mut flat = Vec::new();
    model.pack(&mut flat);
    let mut probe = model.clone();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let scale = gflat.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-8);
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + h;
        probe.unpack(&flat);
        let (p1, _) = forward(&probe, op, x, task)?;
        let (v1, _) = loss(loss_kind, &p1, y)?;
        flat[i] = orig - h;
        probe.unpack(&flat);
        let (p2, _) = forward(&probe, op, x, task)?;
        let (v2, _) = loss(loss_kind, &p2, y)?;
        flat[i] = orig;
        let fd = (v1 - v2) / (2.0 * h);
        worst = worst.max((fd - gflat[i]).abs() / scale);
    }
    Ok(worst)
}

/// Versioned model checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model: GnnModel,
    pub certificates: Vec<FilterCertificate>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(model: GnnModel, d: usize, grid: LambdaGrid) -> Self {
        let certificates = model.certify(d, grid);
        Checkpoint {
            schema_version: CHECKPOINT_VERSION,
            model,
            certificates,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.schema_version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "checkpoint schema version {} unsupported (expected {})",
                ckpt.schema_version, CHECKPOINT_VERSION
            )));
        }
        Ok(ckpt)
    }
}
