//! Generalization-gap laboratory: risk estimators, gap measurement under
//! controlled mismatch, parameter sweeps, bound-shape fitting, the
//! graph-classification harness, and the cross-manifold extension.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geograph::{build_graph, default_epsilon, gaussian_jitter, GeometricGraph, PointCloud};
use crate::gnn::{
    forward, train, train_multi, GnnModel, GraphExample, LipschitzBudget, LossKind, Nonlinearity,
    Task, TrainConfig,
};
use crate::manifold::{
    deform, lipschitz_target, synth_bandlimited, DeformationField, DeformationMap, ManifoldFn,
    ManifoldModel, TeacherSpec,
};
use crate::rng::derive_seed;
use crate::spectral::{
    eigendecompose, DecompositionMode, HeatOp, LambdaGrid, SparseHeat, SpectralBasis,
};

pub const CSV_SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalSpec {
    pub coefficients: Vec<(usize, f64)>,
    pub cutoff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSpec {
    pub teacher: TeacherSpec,
    /// Lipschitz budget for the target; certification failure aborts.
    pub c_g: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSpec {
    /// training sizes swept over
    pub n_list: Vec<usize>,
    /// epsilon rule: scale * (ln(c/delta) / n)^(1/(d+4))
    pub epsilon_scale: f64,
    pub epsilon_c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    /// hidden widths, excluding the input width (always 1 signal channel
    /// for node-level runs)
    pub hidden: Vec<usize>,
    pub taps: usize,
    pub nonlinearity: Nonlinearity,
    pub lipschitz_budget: Option<LipschitzBudget>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSpec {
    pub n_eval: usize,
    pub delta: f64,
    pub trials: usize,
    pub master_seed: u64,
    /// Monte-Carlo replicates for the statistical risk
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MismatchSpec {
    pub field: DeformationField,
    pub gamma_list: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub manifold: ManifoldModel,
    pub signal: SignalSpec,
    pub target: TargetSpec,
    pub mismatch: MismatchSpec,
    pub graph: GraphSpec,
    pub model: ModelSpec,
    pub train: TrainSpec,
    pub eval: EvalSpec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let max_n = self.graph.n_list.iter().copied().max().unwrap_or(0);
        if self.graph.n_list.is_empty() {
            return Err(Error::config("graph.n_list must be nonempty"));
        }
        if self.eval.n_eval < 4 * max_n {
            return Err(Error::config(format!(
                "eval.n_eval = {} must be at least 4 * max training size = {}",
                self.eval.n_eval,
                4 * max_n
            )));
        }
        if self.eval.trials < 1 {
            return Err(Error::config("eval.trials must be >= 1"));
        }
        if !(self.eval.delta > 0.0 && self.eval.delta < 1.0) {
            return Err(Error::config(format!(
                "eval.delta must lie in (0,1), got {}",
                self.eval.delta
            )));
        }
        if self.eval.replicates < 1 {
            return Err(Error::config("eval.replicates must be >= 1"));
        }
        if self.mismatch.gamma_list.is_empty() {
            return Err(Error::config("mismatch.gamma_list must be nonempty"));
        }
        if self.mismatch.gamma_list.iter().any(|g| *g < 0.0) {
            return Err(Error::config("gamma values must be nonnegative"));
        }
        Ok(())
    }

    /// Short stable fingerprint of the full configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn epsilon_for(&self, n: usize) -> Result<f64> {
        default_epsilon(
            n,
            self.manifold.intrinsic_dim(),
            self.eval.delta,
            self.graph.epsilon_c,
            self.graph.epsilon_scale,
        )
    }
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapRecord {
    pub config_fingerprint: String,
    pub n: usize,
    /// certified mismatch size (max of displacement and distortion suprema)
    pub gamma: f64,
    /// realized integral-Lipschitz constant (max over trained filters)
    pub c_l: f64,
    pub depth: usize,
    pub width: usize,
    pub seed: u64,
    pub empirical_risk: f64,
    pub statistical_risk: f64,
    pub stderr: f64,
    pub gap: f64,
}

impl GapRecord {
    pub fn csv_header() -> &'static str {
        "config_fingerprint,n,gamma,c_l,depth,width,seed,empirical_risk,statistical_risk,stderr,gap"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.config_fingerprint,
            self.n,
            self.gamma,
            self.c_l,
            self.depth,
            self.width,
            self.seed,
            self.empirical_risk,
            self.statistical_risk,
            self.stderr,
            self.gap
        )
    }
}

pub fn records_to_csv(records: &[GapRecord]) -> String {
    let mut out = format!("# schema v{CSV_SCHEMA_VERSION}\n{}\n", GapRecord::csv_header());
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Risk estimators
// ---------------------------------------------------------------------------

/// Mean training loss over graph nodes.
pub fn empirical_risk(
    model: &GnnModel,
    op: &dyn HeatOp,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    loss_kind: LossKind,
) -> Result<f64> {
    let (pred, _) = forward(model, op, x, Task::Node)?;
    Ok(crate::gnn::loss(loss_kind, &pred, y)?.0)
}

/// Heat operator for evaluation-only graphs. Forward passes need a
/// handful of heat applies, so the time-sliced exponential beats an
/// O(n^3) eigendecomposition at every size; the tight tolerance keeps it
/// interchangeable with the spectral path to ~1e-13.
fn heat_backend(graph: &GeometricGraph) -> Box<dyn HeatOp> {
    Box::new(SparseHeat::new(graph.laplacian(), 1e-13))
}

fn eval_signals(
    f: &impl ManifoldFn,
    g: &impl ManifoldFn,
    cloud: &PointCloud,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = cloud.n();
    let x = DMatrix::from_fn(n, 1, |i, _| f.eval(cloud.point(i)));
    let y = DMatrix::from_fn(n, 1, |i, _| g.eval(cloud.point(i)));
    (x, y)
}

/// Monte-Carlo estimate of the statistical risk over the mismatched
/// manifold: fresh samples, deformed, evaluation graph built on the
/// deformed points with the trained taps transferred unchanged.
///
/// The first replicate samples with the caller's seed verbatim, so a
/// degenerate call (identity deformation, n_eval equal to the training
/// size, one replicate, shared seed) reproduces the empirical risk.
#[allow(clippy::too_many_arguments)]
pub fn statistical_risk_mc(
    model: &GnnModel,
    manifold: &ManifoldModel,
    tau: &DeformationMap,
    f: &impl ManifoldFn,
    g: &impl ManifoldFn,
    loss_kind: LossKind,
    n_eval: usize,
    epsilon: f64,
    replicates: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    assert!(replicates >= 1);
    let d = manifold.intrinsic_dim();
    let mut means = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let rep_seed = if r == 0 {
            seed
        } else {
            crate::rng::derive_seed_indexed(seed, "replicate", r as u64)
        };
        let fresh = manifold.sample_points(n_eval, rep_seed);
        let cloud = tau.apply_cloud(&fresh);
        let graph = build_graph(&cloud, epsilon, d)?;
        if !graph.connected {
            return Err(Error::Numeric(format!(
                "evaluation graph (n={n_eval}, eps={epsilon}) is disconnected"
            )));
        }
        let op = heat_backend(&graph);
        let (x, y) = eval_signals(f, g, &cloud);
        means.push(empirical_risk(model, op.as_ref(), &x, &y, loss_kind)?);
    }
    let mean = means.iter().sum::<f64>() / replicates as f64;
    if !mean.is_finite() {
        return Err(Error::Numeric("statistical risk diverged".into()));
    }
    let stderr = if replicates == 1 {
        0.0
    } else {
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
            / (replicates as f64 - 1.0);
        (var / replicates as f64).sqrt()
    };
    Ok((mean, stderr))
}

// ---------------------------------------------------------------------------
// Gap measurement
// ---------------------------------------------------------------------------

/// One resolved sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub gamma: f64,
    /// integral-Lipschitz budget; None trains unconstrained
    pub constrained: bool,
    pub depth_width: Option<(usize, usize)>,
}

fn model_for(config: &ExperimentConfig, cell: &Cell, seed: u64) -> GnnModel {
    let mut widths = vec![1usize];
    match cell.depth_width {
        Some((depth, width)) => widths.extend(std::iter::repeat(width).take(depth)),
        None => widths.extend(&config.model.hidden),
    }
    let mut model = GnnModel::new(
        &widths,
        config.model.taps,
        config.model.nonlinearity,
        1,
        derive_seed(seed, &["init"]),
    );
    if cell.constrained {
        model.lipschitz_budget = config.model.lipschitz_budget;
    }
    model
}

/// Train on a fresh graph, evaluate both risks, emit the record.
/// Deterministic given (config, cell, trial seed).
pub fn measure_gap(config: &ExperimentConfig, cell: &Cell, trial_seed: u64) -> Result<GapRecord> {
    config.validate()?;
    let m = &config.manifold;
    let d = m.intrinsic_dim();
    let f = synth_bandlimited(m, &config.signal.coefficients, config.signal.cutoff)?;
    let g = lipschitz_target(
        m,
        config.target.c_g,
        &f,
        &config.target.teacher,
        256,
        derive_seed(config.eval.master_seed, &["target-cert"]),
    )?;
    let tau = deform(
        m,
        config.mismatch.field.clone(),
        cell.gamma,
        200,
        derive_seed(config.eval.master_seed, &["deform-cert"]),
    )?;
    let train_seed = derive_seed(trial_seed, &["train-cloud"]);
    let cloud = m.sample_points(cell.n, train_seed);
    let epsilon = config.epsilon_for(cell.n)?;
    let graph = build_graph(&cloud, epsilon, d)?;
    if !graph.connected {
        return Err(Error::Numeric(format!(
            "training graph (n={}, eps={epsilon}) is disconnected",
            cell.n
        )));
    }
    let basis = eigendecompose(&graph.laplacian(), DecompositionMode::Full)?;
    let (x, y) = eval_signals(&f, &g, &cloud);
    let model = model_for(config, cell, trial_seed);
    let tc = TrainConfig::new(config.train.learning_rate, config.train.epochs)?;
    let loss_kind = LossKind::Huber { delta: 1.0 };
    let (trained, _) = train(&model, &basis, &x, &y, Task::Node, &tc, loss_kind)?;
    let emp = empirical_risk(&trained, &basis, &x, &y, loss_kind)?;
    // evaluation size scales with the cell: 4x the training size, capped
    // by the configured maximum
    let n_eval = config.eval.n_eval.min(4 * cell.n);
    let (stat, stderr) = statistical_risk_mc(
        &trained,
        m,
        &tau,
        &f,
        &g,
        loss_kind,
        n_eval,
        config.epsilon_for(n_eval)?,
        config.eval.replicates,
        derive_seed(trial_seed, &["eval-clouds"]),
    )?;
    let grid = config
        .model
        .lipschitz_budget
        .map(|b| b.grid)
        .unwrap_or(LambdaGrid {
            min: 0.01,
            max: 20.0,
            steps: 400,
        });
    let c_l = trained
        .certify(d, grid)
        .iter()
        .map(|c| c.c_l)
        .fold(0.0f64, f64::max);
    let widths: Vec<usize> = trained.layers.iter().map(|l| l.f_out()).collect();
    Ok(GapRecord {
        config_fingerprint: config.fingerprint(),
        n: cell.n,
        gamma: tau.certified_gamma_dist.max(tau.certified_gamma_jac),
        c_l,
        depth: trained.depth(),
        width: widths.iter().copied().max().unwrap_or(1),
        seed: trial_seed,
        empirical_risk: emp,
        statistical_risk: stat,
        stderr,
        gap: (stat - emp).abs(),
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFailure {
    pub n: usize,
    pub gamma: f64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<GapRecord>,
    pub failures: Vec<SweepFailure>,
}

/// Full factorial over n_list x gamma_list x trials. Cells run in
/// parallel; output ordering is canonical (n, gamma, seed) regardless of
/// execution order.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut cells = Vec::new();
    for &n in &config.graph.n_list {
        for &gamma in &config.mismatch.gamma_list {
            for t in 0..config.eval.trials {
                let seed =
                    crate::rng::derive_seed_indexed(config.eval.master_seed, "trial", t as u64);
                cells.push((n, gamma, seed));
            }
        }
    }
    let outcomes: Vec<_> = cells
        .par_iter()
        .map(|&(n, gamma, seed)| {
            let cell = Cell {
                n,
                gamma,
                constrained: config.model.lipschitz_budget.is_some(),
                depth_width: None,
            };
            (n, gamma, seed, measure_gap(config, &cell, seed))
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (n, gamma, seed, outcome) in outcomes {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(SweepFailure {
                n,
                gamma,
                seed,
                message: e.to_string(),
            }),
        }
    }
    records.sort_by(|a, b| {
        (a.n, a.gamma.to_bits(), a.seed).cmp(&(b.n, b.gamma.to_bits(), b.seed))
    });
    failures.sort_by(|a, b| (a.n, a.gamma.to_bits(), a.seed).cmp(&(b.n, b.gamma.to_bits(), b.seed)));
    Ok(SweepResult { records, failures })
}

/// Mean gap per (n, gamma) cell, sorted by cell key.
pub fn cell_means(records: &[GapRecord]) -> Vec<(usize, f64, f64, f64)> {
    let mut groups: Vec<((usize, u64), Vec<f64>)> = Vec::new();
    for r in records {
        let key = (r.n, r.gamma.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.gap),
            None => groups.push((key, vec![r.gap])),
        }
    }
    groups.sort_by_key(|(k, _)| *k);
    groups
        .into_iter()
        .map(|((n, gb), gaps)| {
            let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let std = if gaps.len() > 1 {
                (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>()
                    / (gaps.len() as f64 - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            (n, f64::from_bits(gb), mean, std)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Bound-shape fit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundFit {
    /// nonnegative coefficients for the four bound terms:
    /// eps(N)/sqrt(N), sqrt(log(1/delta))/N, (log N / N)^(1/d), gamma
    pub coefficients: [f64; 4],
    pub r_squared: f64,
    pub d: usize,
    pub delta: f64,
}

/// Regressor row for a given (n, gamma) under the epsilon rule.
pub fn bound_regressors(n: usize, gamma: f64, d: usize, delta: f64, eps: f64) -> [f64; 4] {
    let nf = n as f64;
    [
        eps / nf.sqrt(),
        (1.0 / delta).ln().sqrt() / nf,
        (nf.ln() / nf).powf(1.0 / d as f64),
        gamma,
    ]
}

/// Nonnegative least squares of per-cell mean gaps on the four bound-shape
/// regressors (active-set method).
pub fn bound_shape_fit(
    records: &[GapRecord],
    d: usize,
    delta: f64,
    epsilon_rule: impl Fn(usize) -> Result<f64>,
) -> Result<BoundFit> {
    let cells = cell_means(records);
    if cells.len() < 8 {
        return Err(Error::config(format!(
            "bound fit needs at least 8 distinct (n, gamma) cells, got {}",
            cells.len()
        )));
    }
    let rows = cells.len();
    let mut a = DMatrix::zeros(rows, 4);
    let mut b = DVector::zeros(rows);
    for (i, (n, gamma, mean_gap, _)) in cells.iter().enumerate() {
        let reg = bound_regressors(*n, *gamma, d, delta, epsilon_rule(*n)?);
        for j in 0..4 {
            a[(i, j)] = reg[j];
        }
        b[i] = *mean_gap;
    }
    let coeffs = nnls(&a, &b)?;
    let pred = &a * &coeffs;
    let resid = &b - &pred;
    let mean_b = b.mean();
    let ss_tot: f64 = b.iter().map(|v| (v - mean_b).powi(2)).sum();
    let ss_res: f64 = resid.iter().map(|v| v * v).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(BoundFit {
        coefficients: [coeffs[0], coeffs[1], coeffs[2], coeffs[3]],
        r_squared,
        d,
        delta,
    })
}

/// Lawson–Hanson active-set nonnegative least squares.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let nvar = a.ncols();
    let mut passive = vec![false; nvar];
    let mut x = DVector::zeros(nvar);
    let tol = 1e-12 * a.amax().max(1.0);
    for _outer in 0..(10 * nvar.max(4)) {
        let resid = b - a * &x;
        let w = a.transpose() * &resid;
        // most violated KKT multiplier among the active (zero) variables
        let mut best = None;
        for j in 0..nvar {
            if !passive[j] && w[j] > tol {
                if best.map_or(true, |(_, bw)| w[j] > bw) {
                    best = Some((j, w[j]));
                }
            }
        }
        let Some((j_in, _)) = best else {
            return Ok(x); // KKT satisfied
        };
        passive[j_in] = true;
        // inner loop: solve on the passive set, clip negatives
        loop {
            let idx: Vec<usize> = (0..nvar).filter(|&j| passive[j]).collect();
            let ap = a.select_columns(idx.iter());
            let ls = lstsq(&ap, b)?;
            if ls.iter().all(|&v| v > tol) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = ls[k];
                }
                break;
            }
            // step toward ls until the first passive variable hits zero
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if ls[k] <= tol {
                    let denom = x[j] - ls[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (ls[k] - x[j]);
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    Err(Error::Numeric(
        "nonnegative least squares failed to converge".into(),
    ))
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let min_sv = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if max_sv == 0.0 || min_sv / max_sv < 1e-12 {
        return Err(Error::Numeric(format!(
            "rank-deficient least squares: condition number {:.3e}",
            if min_sv > 0.0 { max_sv / min_sv } else { f64::INFINITY }
        )));
    }
    svd.solve(b, 1e-14)
        .map_err(|e| Error::Numeric(format!("least squares solve failed: {e}")))
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

// ---------------------------------------------------------------------------
// Graph-level harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphLevelConfig {
    pub classes: Vec<ManifoldModel>,
    /// points per cloud
    pub n_k: usize,
    pub graphs_per_class: usize,
    pub eval_graphs_per_class: usize,
    /// coordinate jitter applied to evaluation clouds (the mismatch)
    pub jitter_gamma: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
    pub taps: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphLevelRecord {
    pub config_fingerprint: String,
    pub train_accuracy: f64,
    /// empirical risk restricted to each class's training graphs
    pub per_class_risk: Vec<f64>,
    pub empirical_risk: f64,
    pub statistical_risk: f64,
    pub stderr: f64,
    pub gap: f64,
    pub gamma: f64,
}

struct GraphLevelData {
    bases: Vec<SpectralBasis>,
    xs: Vec<DMatrix<f64>>,
    ys: Vec<DMatrix<f64>>,
}

fn build_class_graphs(
    cfg: &GraphLevelConfig,
    per_class: usize,
    jitter: f64,
    seed_label: &str,
) -> Result<GraphLevelData> {
    let ambient = cfg
        .classes
        .iter()
        .map(|m| m.ambient_dim())
        .max()
        .expect("at least one class");
    let mut bases = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (label, m) in cfg.classes.iter().enumerate() {
        for g in 0..per_class {
            let seed = derive_seed(cfg.master_seed, &[seed_label, &label.to_string(), &g.to_string()]);
            let cloud = m.sample_points(cfg.n_k, seed);
            let cloud = if jitter > 0.0 {
                gaussian_jitter(&cloud, jitter, derive_seed(seed, &["jitter"]))?
            } else {
                cloud
            };
            let graph = build_graph(&cloud, cfg.epsilon, m.intrinsic_dim())?;
            let basis = eigendecompose(&graph.laplacian(), DecompositionMode::Full)?;
            let padded = cloud.pad_to_dim(ambient);
            let x = DMatrix::from_fn(cfg.n_k, ambient, |i, j| padded.point(i)[j]);
            bases.push(basis);
            xs.push(x);
            ys.push(DMatrix::from_element(1, 1, label as f64));
        }
    }
    Ok(GraphLevelData { bases, xs, ys })
}

/// Binary graph classification: trains with node-mean pooling, measures
/// the loss gap between the training graphs and fresh jittered clouds.
pub fn graph_level_gap(cfg: &GraphLevelConfig) -> Result<GraphLevelRecord> {
    if cfg.classes.len() < 2 {
        return Err(Error::config("graph-level runs need at least 2 classes"));
    }
    if cfg.classes.len() > 2 {
        return Err(Error::Unsupported(
            "graph-level harness is binary (one logit); use pairwise runs".into(),
        ));
    }
    let ambient = cfg.classes.iter().map(|m| m.ambient_dim()).max().unwrap();
    let train_data = build_class_graphs(cfg, cfg.graphs_per_class, 0.0, "train")?;
    let examples: Vec<GraphExample<'_>> = train_data
        .bases
        .iter()
        .zip(&train_data.xs)
        .zip(&train_data.ys)
        .map(|((b, x), y)| GraphExample {
            op: b as &dyn HeatOp,
            x: x.clone(),
            y: y.clone(),
        })
        .collect();
    let mut widths = vec![ambient];
    widths.extend(&cfg.hidden);
    let model = GnnModel::new(
        &widths,
        cfg.taps,
        Nonlinearity::Relu,
        1,
        derive_seed(cfg.master_seed, &["init"]),
    );
    let tc = TrainConfig::new(cfg.learning_rate, cfg.epochs)?;
    let loss_kind = LossKind::CrossEntropy;
    let (trained, _) = train_multi(&model, &examples, Task::Graph, &tc, loss_kind)?;
    // training accuracy and empirical risk
    let mut correct = 0usize;
    let mut emp = 0.0;
    let mut per_class_risk = vec![0.0; cfg.classes.len()];
    for ((b, x), y) in train_data.bases.iter().zip(&train_data.xs).zip(&train_data.ys) {
        let (logit, _) = forward(&trained, b, x, Task::Graph)?;
        let prob = 1.0 / (1.0 + (-logit[(0, 0)]).exp());
        if (prob - y[(0, 0)]).abs() < 0.5 {
            correct += 1;
        }
        let l = crate::gnn::loss(loss_kind, &logit, y)?.0;
        emp += l;
        per_class_risk[y[(0, 0)] as usize] += l / cfg.graphs_per_class as f64;
    }
    let n_train = train_data.bases.len();
    emp /= n_train as f64;
    // statistical risk on fresh jittered clouds, replicate = one fresh set
    let replicates = 4;
    let mut means = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let data = build_class_graphs(
            cfg,
            cfg.eval_graphs_per_class,
            cfg.jitter_gamma,
            &format!("eval-{r}"),
        )?;
        let mut total = 0.0;
        for ((b, x), y) in data.bases.iter().zip(&data.xs).zip(&data.ys) {
            let (logit, _) = forward(&trained, b, x, Task::Graph)?;
            total += crate::gnn::loss(loss_kind, &logit, y)?.0;
        }
        means.push(total / data.bases.len() as f64);
    }
    let stat = means.iter().sum::<f64>() / replicates as f64;
    let var = means.iter().map(|m| (m - stat).powi(2)).sum::<f64>() / (replicates as f64 - 1.0);
    let fingerprint = {
        let json = serde_json::to_string(cfg).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(6).map(|b| format!("{b:02x}")).collect()
    };
    Ok(GraphLevelRecord {
        config_fingerprint: fingerprint,
        train_accuracy: correct as f64 / n_train as f64,
        per_class_risk,
        empirical_risk: emp,
        statistical_risk: stat,
        stderr: (var / replicates as f64).sqrt(),
        gap: (stat - emp).abs(),
        gamma: cfg.jitter_gamma,
    })
}

// ---------------------------------------------------------------------------
// Cross-manifold (out-of-distribution) gap
// ---------------------------------------------------------------------------

/// Train on the source manifold, evaluate the statistical risk on the
/// target manifold, and attach the spectral-distance proxy between
/// training-size graphs of each.
pub fn ood_gap(
    config: &ExperimentConfig,
    target_manifold: &ManifoldModel,
    cell: &Cell,
    trial_seed: u64,
) -> Result<(GapRecord, f64)> {
    let mut record = {
        // in-distribution record on the source, identity deformation
        let mut c = config.clone();
        c.mismatch = MismatchSpec {
            field: DeformationField::Rotation,
            gamma_list: vec![0.0],
        };
        let cell0 = Cell {
            gamma: 0.0,
            ..*cell
        };
        measure_gap(&c, &cell0, trial_seed)?
    };
    // replace the statistical risk with the target-manifold evaluation
    let m1 = &config.manifold;
    let f = synth_bandlimited(m1, &config.signal.coefficients, config.signal.cutoff)?;
    let g = lipschitz_target(
        m1,
        config.target.c_g,
        &f,
        &config.target.teacher,
        256,
        derive_seed(config.eval.master_seed, &["target-cert"]),
    )?;
    // retrain identically to recover the trained model
    let d = m1.intrinsic_dim();
    let cloud = m1.sample_points(cell.n, derive_seed(trial_seed, &["train-cloud"]));
    let graph = build_graph(&cloud, config.epsilon_for(cell.n)?, d)?;
    let basis = eigendecompose(&graph.laplacian(), DecompositionMode::Full)?;
    let (x, y) = eval_signals(&f, &g, &cloud);
    let model = model_for(config, cell, trial_seed);
    let tc = TrainConfig::new(config.train.learning_rate, config.train.epochs)?;
    let loss_kind = LossKind::Huber { delta: 1.0 };
    let (trained, _) = train(&model, &basis, &x, &y, Task::Node, &tc, loss_kind)?;
    let tau2 = DeformationMap::identity(*target_manifold);
    let (stat, stderr) = statistical_risk_mc(
        &trained,
        target_manifold,
        &tau2,
        &f,
        &g,
        loss_kind,
        config.eval.n_eval.min(4 * cell.n),
        config.epsilon_for(config.eval.n_eval.min(4 * cell.n))?,
        config.eval.replicates,
        derive_seed(trial_seed, &["ood-eval"]),
    )?;
    record.statistical_risk = stat;
    record.stderr = stderr;
    record.gap = (stat - record.empirical_risk).abs();
    // spectral-distance proxy between training-size graphs
    let cloud2 = target_manifold.sample_points(cell.n, derive_seed(trial_seed, &["ood-cloud"]));
    let graph2 = build_graph(
        &cloud2,
        config.epsilon_for(cell.n)?,
        target_manifold.intrinsic_dim(),
    )?;
    let basis2 = eigendecompose(&graph2.laplacian(), DecompositionMode::Full)?;
    let m_shared = 20.min(basis.m()).min(basis2.m());
    let proxy = crate::spectral::spectral_distance(&basis, &basis2, m_shared);
    Ok((record, proxy))
}

/// Convenience: a small, fast default configuration for the unit circle
/// teacher-student problem. Integration suites tighten or scale it.
pub fn circle_teacher_config(master_seed: u64) -> ExperimentConfig {
    let m = ManifoldModel::circle(1.0);
    let lam5 = m.eigenpair(5).unwrap().eigenvalue;
    ExperimentConfig {
        manifold: m,
        signal: SignalSpec {
            coefficients: vec![(1, 0.4), (2, 1.0), (3, -0.6), (4, 0.3), (5, 0.2)],
            cutoff: lam5 * 1.01,
        },
        target: TargetSpec {
            teacher: TeacherSpec {
                taps: vec![0.4, 0.4, 0.2],
                threshold: None,
            },
            c_g: 10.0,
        },
        // a rigid rotation leaves the uniform sampling law invariant, so
        // the default mismatch is a measure-warping gradient flow
        mismatch: MismatchSpec {
            field: DeformationField::EigenGradients(vec![(1, 1.0), (2, 0.6)]),
            gamma_list: vec![0.0, 0.05, 0.1, 0.2],
        },
        graph: GraphSpec {
            n_list: vec![100, 200, 400, 800],
            epsilon_scale: 2.0,
            epsilon_c: 1.0,
        },
        model: ModelSpec {
            hidden: vec![2],
            taps: 4,
            nonlinearity: Nonlinearity::Relu,
            lipschitz_budget: None,
        },
        train: TrainSpec {
            learning_rate: 0.01,
            epochs: 120,
        },
        eval: EvalSpec {
            n_eval: 3200,
            delta: 0.1,
            trials: 10,
            master_seed,
            replicates: 8,
        },
    }
}
