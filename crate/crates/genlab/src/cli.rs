//! Command-line surface: config parsing, run manifests, artifact emission.
//!
//! Every run directory gets exactly one `manifest.json` written before any
//! result file; reruns require `--overwrite` and replace files atomically
//! (temp file + rename). CSV is the output contract, SVG plots are
//! decorative extras behind `--svg`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::{
    bound_shape_fit, cell_means, graph_level_gap, records_to_csv, sweep, ExperimentConfig,
    GraphLevelConfig, SweepResult,
};
use crate::geograph::io::{load_point_cloud, save_point_cloud, CloudFormat};
use crate::gnn::{gradient_check, Checkpoint, GnnModel, LossKind, Nonlinearity, Task};
use crate::manifold::ManifoldModel;
use crate::rng::derive_seed;
use crate::spectral::{
    eigendecompose, ratio_pattern_error, weyl_check, DecompositionMode, LambdaGrid,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_NAME: &str = "manifest.json";

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "genlab",
    version,
    about = "Generalization-gap laboratory for heat-kernel graph filters on sampled manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Override the config's master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: GENLAB_WORKERS env, then all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also emit SVG plots
    #[arg(long)]
    pub svg: bool,
    /// Replace an existing run directory
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Node-level gap sweep: train on sampled graphs, measure both risks
    GapNode(RunArgs),
    /// Graph-level classification gap (one row per class plus aggregate)
    GapGraph(RunArgs),
    /// Full sweep plus bound-shape fit report
    Sweep(RunArgs),
    /// Print filter certificates for a saved checkpoint
    Certify {
        /// Checkpoint JSON file
        #[arg(long)]
        config: PathBuf,
        /// Intrinsic dimension for the integral-Lipschitz exponent
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0.01)]
        lambda_min: f64,
        #[arg(long, default_value_t = 20.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        /// Emit JSON instead of the text table
        #[arg(long)]
        json: bool,
    },
    /// Eigenvalue-ratio convergence table and growth-law slope vs N
    Converge(RunArgs),
    /// Finite-difference gradient check for an architecture spec
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Parse a point-cloud file (OFF or XYZ-CSV), print a summary,
    /// optionally convert by extension of --out
    Ingest {
        /// Input cloud file
        input: PathBuf,
        /// Optional output file; format chosen by extension
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------------------
// Manifest and atomic writes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// sha256 of the `config` field below, recomputable
    pub config_checksum: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub output_files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, master_seed: u64) -> Self {
        let checksum = checksum_value(&config);
        RunManifest {
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config_checksum: checksum,
            config,
            master_seed,
            started_unix: unix_now(),
            finished_unix: None,
            output_files: Vec::new(),
        }
    }

    pub fn verify_checksum(&self) -> bool {
        checksum_value(&self.config) == self.config_checksum
    }
}

pub fn checksum_value(v: &serde_json::Value) -> String {
    let text = serde_json::to_string(v).expect("value serializes");
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Write via a temp file in the same directory and rename into place.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into())
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Prepare the run directory: refuse a second run without --overwrite,
/// then write the manifest before any result file.
fn open_run_dir(args: &RunArgs, manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let manifest_path = args.out.join(MANIFEST_NAME);
    if manifest_path.exists() && !args.overwrite {
        return Err(Error::config(format!(
            "{} already contains a run manifest; pass --overwrite to replace it",
            args.out.display()
        )));
    }
    atomic_write(&manifest_path, &serde_json::to_string_pretty(manifest)?)
}

fn close_run_dir(out: &Path, mut manifest: RunManifest, files: Vec<String>) -> Result<()> {
    manifest.finished_unix = Some(unix_now());
    manifest.output_files = files;
    atomic_write(
        &out.join(MANIFEST_NAME),
        &serde_json::to_string_pretty(&manifest)?,
    )
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: format!("{} in {}", e, path.display()),
    })
}

fn worker_pool(requested: Option<usize>) -> Result<rayon::ThreadPool> {
    let workers = requested
        .or_else(|| {
            std::env::var("GENLAB_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0); // 0 = rayon default
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))
}

// ---------------------------------------------------------------------------
// SVG plot
// ---------------------------------------------------------------------------

/// Polyline plot of mean gap vs log N, one series per gamma.
pub fn svg_gap_plot(cells: &[(usize, f64, f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const M: f64 = 50.0;
    let palette = ["#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d68910", "#16a085"];
    let xs: Vec<f64> = cells.iter().map(|c| (c.0 as f64).ln()).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.2).collect();
    let (xmin, xmax) = min_max(&xs);
    let (ymin, ymax) = min_max(&ys);
    let xspan = (xmax - xmin).max(1e-12);
    let yspan = (ymax - ymin).max(1e-12);
    let px = |x: f64| M + (x - xmin) / xspan * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - ymin) / yspan * (H - 2.0 * M);
    let mut gammas: Vec<f64> = cells.iter().map(|c| c.1).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">log N</text>\n\
         <text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\" \
         text-anchor=\"middle\">mean gap</text>\n",
        H - M,
        W - M,
        H - M,
        H - M,
        W / 2.0,
        H - 12.0,
        H / 2.0,
        H / 2.0,
    );
    for (gi, gamma) in gammas.iter().enumerate() {
        let color = palette[gi % palette.len()];
        let mut series: Vec<(usize, f64)> = cells
            .iter()
            .filter(|c| c.1 == *gamma)
            .map(|c| (c.0, c.2))
            .collect();
        series.sort_by_key(|(n, _)| *n);
        let pts: Vec<String> = series
            .iter()
            .map(|(n, g)| format!("{:.2},{:.2}", px((*n as f64).ln()), py(*g)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">gamma = {gamma}</text>\n",
            W - M - 110.0,
            M + 16.0 * gi as f64,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn min_max(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

fn run_node_sweep(args: &RunArgs, with_fit: bool) -> Result<()> {
    let mut config: ExperimentConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.eval.master_seed = seed;
    }
    config.validate()?;
    let command = if with_fit { "sweep" } else { "gap-node" };
    let manifest = RunManifest::new(
        command,
        serde_json::to_value(&config)?,
        config.eval.master_seed,
    );
    open_run_dir(args, &manifest)?;
    let pool = worker_pool(args.workers)?;
    let result: SweepResult = pool.install(|| sweep(&config))?;
    let mut files = Vec::new();
    let csv_path = args.out.join("gaps.csv");
    atomic_write(&csv_path, &records_to_csv(&result.records))?;
    files.push("gaps.csv".into());
    if !result.failures.is_empty() {
        atomic_write(
            &args.out.join("failures.json"),
            &serde_json::to_string_pretty(&result.failures)?,
        )?;
        files.push("failures.json".into());
        eprintln!(
            "warning: {} of {} cells failed; see failures.json",
            result.failures.len(),
            result.failures.len() + result.records.len()
        );
    }
    if with_fit {
        let fit = bound_shape_fit(
            &result.records,
            config.manifold.intrinsic_dim(),
            config.eval.delta,
            |n| config.epsilon_for(n),
        )?;
        let report = format!(
            "bound-shape fit (nonnegative least squares on per-cell mean gaps)\n\
             terms: eps(N)/sqrt(N), sqrt(log(1/delta))/N, (log N / N)^(1/d), gamma\n\
             coefficients: {:.6e} {:.6e} {:.6e} {:.6e}\n\
             r_squared: {:.6}\nd: {}\ndelta: {}\n",
            fit.coefficients[0],
            fit.coefficients[1],
            fit.coefficients[2],
            fit.coefficients[3],
            fit.r_squared,
            fit.d,
            fit.delta,
        );
        atomic_write(&args.out.join("bound_fit.txt"), &report)?;
        files.push("bound_fit.txt".into());
        print!("{report}");
    }
    if args.svg {
        let cells = cell_means(&result.records);
        atomic_write(&args.out.join("gaps.svg"), &svg_gap_plot(&cells))?;
        files.push("gaps.svg".into());
    }
    println!(
        "{} rows -> {} ({} failures)",
        result.records.len(),
        csv_path.display(),
        result.failures.len()
    );
    close_run_dir(&args.out, manifest, files)
}

fn run_gap_graph(args: &RunArgs) -> Result<()> {
    let mut config: GraphLevelConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let manifest = RunManifest::new(
        "gap-graph",
        serde_json::to_value(&config)?,
        config.master_seed,
    );
    open_run_dir(args, &manifest)?;
    let pool = worker_pool(args.workers)?;
    let rec = pool.install(|| graph_level_gap(&config))?;
    let mut csv = String::from(
        "# schema v1\nconfig_fingerprint,scope,train_accuracy,empirical_risk,statistical_risk,stderr,gap,gamma\n",
    );
    for (k, risk) in rec.per_class_risk.iter().enumerate() {
        csv.push_str(&format!(
            "{},class{k},,{risk},,,,{}\n",
            rec.config_fingerprint, rec.gamma
        ));
    }
    csv.push_str(&format!(
        "{},aggregate,{},{},{},{},{},{}\n",
        rec.config_fingerprint,
        rec.train_accuracy,
        rec.empirical_risk,
        rec.statistical_risk,
        rec.stderr,
        rec.gap,
        rec.gamma
    ));
    atomic_write(&args.out.join("graph_gaps.csv"), &csv)?;
    println!(
        "train accuracy {:.3}, gap {:.5} (stderr {:.5})",
        rec.train_accuracy, rec.gap, rec.stderr
    );
    close_run_dir(&args.out, manifest, vec!["graph_gaps.csv".into()])
}

fn run_certify(
    path: &Path,
    dim: usize,
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    json: bool,
) -> Result<()> {
    let grid = LambdaGrid::new(lambda_min, lambda_max, steps)?;
    let ckpt = Checkpoint::load(path)?;
    let certs = ckpt.model.certify(dim, grid);
    if json {
        println!("{}", serde_json::to_string_pretty(&certs)?);
    } else {
        println!("filter  c_h           c_l");
        for (i, c) in certs.iter().enumerate() {
            println!("{i:<7} {:<13.6e} {:.6e}", c.c_h, c.c_l);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeConfig {
    pub manifold: ManifoldModel,
    pub n_list: Vec<usize>,
    pub seed: u64,
    /// k^2 groups compared (circle: multiplicity 2)
    pub kmax: usize,
    pub multiplicity: usize,
    pub delta: f64,
    pub epsilon_scale: f64,
    pub epsilon_c: f64,
    /// eigenvalue index window for the growth-law slope fit
    pub weyl_window: (usize, usize),
}

/// Convergence table row: worst ratio error and growth-law slope at one N.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeRow {
    pub n: usize,
    pub epsilon: f64,
    pub max_ratio_error: f64,
    pub weyl_slope: f64,
    pub weyl_r_squared: f64,
}

pub fn converge_table(cfg: &ConvergeConfig) -> Result<Vec<ConvergeRow>> {
    if cfg.n_list.is_empty() {
        return Err(Error::config("converge needs a nonempty n_list"));
    }
    let d = cfg.manifold.intrinsic_dim();
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let epsilon = crate::geograph::default_epsilon(
            n,
            d,
            cfg.delta,
            cfg.epsilon_c,
            cfg.epsilon_scale,
        )?;
        let cloud = cfg.manifold.sample_points(n, derive_seed(cfg.seed, &["cloud", &n.to_string()]));
        let graph = crate::geograph::build_graph(&cloud, epsilon, d)?;
        let wanted = (cfg.weyl_window.1 + 1).max(1 + cfg.multiplicity * cfg.kmax) + 5;
        let basis = eigendecompose(&graph.laplacian(), DecompositionMode::Lowest(wanted.min(n)))?;
        let errors = ratio_pattern_error(&basis.eigenvalues, 1, cfg.multiplicity, cfg.kmax)?;
        let (slope, r2) = weyl_check(&basis, cfg.weyl_window)?;
        rows.push(ConvergeRow {
            n,
            epsilon,
            max_ratio_error: errors.iter().copied().fold(0.0, f64::max),
            weyl_slope: slope,
            weyl_r_squared: r2,
        });
    }
    Ok(rows)
}

fn run_converge(args: &RunArgs) -> Result<()> {
    let mut cfg: ConvergeConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let manifest = RunManifest::new("converge", serde_json::to_value(&cfg)?, cfg.seed);
    open_run_dir(args, &manifest)?;
    let rows = converge_table(&cfg)?;
    let mut csv =
        String::from("# schema v1\nn,epsilon,max_ratio_error,weyl_slope,weyl_r_squared\n");
    println!("n       epsilon    max_ratio_err  weyl_slope  r^2");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n, r.epsilon, r.max_ratio_error, r.weyl_slope, r.weyl_r_squared
        ));
        println!(
            "{:<7} {:<10.4} {:<14.5} {:<11.4} {:.4}",
            r.n, r.epsilon, r.max_ratio_error, r.weyl_slope, r.weyl_r_squared
        );
    }
    atomic_write(&args.out.join("converge.csv"), &csv)?;
    close_run_dir(&args.out, manifest, vec!["converge.csv".into()])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub widths: Vec<usize>,
    pub taps: usize,
    pub nonlinearity: Nonlinearity,
    pub out_width: usize,
    pub task: Task,
    pub n: usize,
    pub seed: u64,
}

pub fn gradcheck_run(cfg: &GradcheckConfig) -> Result<f64> {
    use nalgebra::DMatrix;
    let m = ManifoldModel::circle(1.0);
    let cloud = m.sample_points(cfg.n, derive_seed(cfg.seed, &["cloud"]));
    let epsilon = crate::geograph::default_epsilon(cfg.n, 1, 0.1, 1.0, 2.0)?;
    let graph = crate::geograph::build_graph(&cloud, epsilon, 1)?;
    let basis = eigendecompose(&graph.laplacian(), DecompositionMode::Full)?;
    let model = GnnModel::new(
        &cfg.widths,
        cfg.taps,
        cfg.nonlinearity,
        cfg.out_width,
        derive_seed(cfg.seed, &["init"]),
    );
    let f_in = cfg.widths[0];
    let mut rng = crate::rng::rng_from_seed(derive_seed(cfg.seed, &["data"]));
    use rand::Rng;
    let x = DMatrix::from_fn(cfg.n, f_in, |_, _| rng.gen_range(-1.0..1.0));
    let rows = match cfg.task {
        Task::Node => cfg.n,
        Task::Graph => 1,
    };
    let y = DMatrix::from_fn(rows, cfg.out_width, |_, _| rng.gen_range(-1.0..1.0));
    gradient_check(&model, &basis, &x, &y, cfg.task, LossKind::Huber { delta: 1.0 })
}

fn run_gradcheck(path: &Path) -> Result<()> {
    let cfg: GradcheckConfig = read_config(path)?;
    let err = gradcheck_run(&cfg)?;
    println!("max relative gradient error: {err:.3e}");
    if err > 1e-5 {
        return Err(Error::Numeric(format!(
            "gradient check failed: {err:.3e} > 1e-5"
        )));
    }
    Ok(())
}

fn cloud_format_of(path: &Path) -> Result<CloudFormat> {
    match path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .as_deref()
    {
        Some("off") => Ok(CloudFormat::Off),
        Some("csv") | Some("xyz") => Ok(CloudFormat::XyzCsv),
        other => Err(Error::config(format!(
            "cannot infer cloud format from extension {other:?} of {}; use .off, .csv, or .xyz",
            path.display()
        ))),
    }
}

fn run_ingest(input: &Path, out: Option<&Path>) -> Result<()> {
    let cloud = load_point_cloud(input, cloud_format_of(input)?)?;
    let mut lo = vec![f64::INFINITY; cloud.dim()];
    let mut hi = vec![f64::NEG_INFINITY; cloud.dim()];
    for i in 0..cloud.n() {
        for (j, &v) in cloud.point(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    println!(
        "{}: {} points, dim {}, bounds {:?} .. {:?}",
        input.display(),
        cloud.n(),
        cloud.dim(),
        lo,
        hi
    );
    if let Some(out) = out {
        save_point_cloud(out, &cloud, cloud_format_of(out)?)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GapNode(args) => run_node_sweep(&args, false),
        Command::Sweep(args) => run_node_sweep(&args, true),
        Command::GapGraph(args) => run_gap_graph(&args),
        Command::Certify {
            config,
            dim,
            lambda_min,
            lambda_max,
            steps,
            json,
        } => run_certify(&config, dim, lambda_min, lambda_max, steps, json),
        Command::Converge(args) => run_converge(&args),
        Command::Gradcheck { config } => run_gradcheck(&config),
        Command::Ingest { input, out } => run_ingest(&input, out.as_deref()),
    }
}

/// Parse argv, run, and map errors to exit codes (2 = config/parse,
/// 1 = runtime).
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_checksum_recomputable() {
        let config = serde_json::json!({"a": 1, "b": [1.5, 2.5]});
        let m = RunManifest::new("sweep", config, 7);
        assert!(m.verify_checksum());
        let mut tampered = m.clone();
        tampered.config["a"] = serde_json::json!(2);
        assert!(!tampered.verify_checksum());
    }

    #[test]
    fn manifest_round_trip() {
        let m = RunManifest::new("gap-node", serde_json::json!({"n": 10}), 3);
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert!(back.verify_checksum());
        assert_eq!(back.master_seed, 3);
        assert_eq!(back.command, "gap-node");
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        atomic_write(&path, "first").unwrap();
        atomic_write(&path, "second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn svg_plot_has_one_series_per_gamma() {
        let cells = vec![
            (100, 0.0, 0.5, 0.01),
            (200, 0.0, 0.4, 0.01),
            (100, 0.1, 0.7, 0.01),
            (200, 0.1, 0.6, 0.01),
        ];
        let svg = svg_gap_plot(&cells);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn cli_grammar_parses() {
        use clap::Parser;
        let cli = Cli::parse_from([
            "genlab", "sweep", "--config", "c.json", "--out", "runs/a", "--seed", "9",
            "--workers", "2", "--svg", "--overwrite",
        ]);
        match cli.command {
            Command::Sweep(a) => {
                assert_eq!(a.seed, Some(9));
                assert_eq!(a.workers, Some(2));
                assert!(a.svg && a.overwrite);
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["genlab", "no-such"]).is_err());
    }

    #[test]
    fn gradcheck_default_architecture_passes() {
        let cfg = GradcheckConfig {
            widths: vec![1, 3, 2],
            taps: 3,
            nonlinearity: Nonlinearity::Relu,
            out_width: 1,
            task: Task::Node,
            n: 24,
            seed: 6,
        };
        let err = gradcheck_run(&cfg).unwrap();
        assert!(err <= 1e-5, "gradient error {err}");
    }

    #[test]
    fn converge_rejects_empty_n_list() {
        let cfg = ConvergeConfig {
            manifold: ManifoldModel::circle(1.0),
            n_list: vec![],
            seed: 1,
            kmax: 3,
            multiplicity: 2,
            delta: 0.1,
            epsilon_scale: 2.0,
            epsilon_c: 1.0,
            weyl_window: (3, 9),
        };
        let e = converge_table(&cfg).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
