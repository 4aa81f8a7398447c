//! Command-line front end: dataset generation, search, training, offline
//! analysis of feature matrices, the GD-recursion check, and curve reports.
//!
//! Every JSON artifact carries the resolved config and seed. Exit codes: 0
//! success, 1 validation, 2 numeric, 3 I/O.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{generate, split_paths, write_split};
use crate::error::{KcrError, Result};
use crate::kernel::{
    akc, approx_tails, gram, kc_exact, kcr_bounds, nystrom, spectrum_of_features, tnn_exact, GdClosedForm, Landmarks,
};
use crate::kernel::gd_linear_probe;
use crate::model::{load_checkpoint, save_checkpoint, KcrNet};
use crate::numerics::{Matrix, Rng};
use crate::selection::Architecture;
use crate::training::{
    curves, evaluate, parse_csv, run_retrain, run_search, target_rank, to_csv, ExperimentConfig, SearchOutcome,
};

/// Relative deviation allowed between the iterated and closed-form residuals.
pub const GD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "kcr", version, about = "Kernel-complexity-regularized channel pruning for small vision transformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config; unspecified keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

/// Run-level overrides shared by `search` and `train`.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub kcr_weight: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Landmark count for the Nyström factors.
    #[arg(long)]
    pub landmarks: Option<usize>,
    #[arg(long)]
    pub x: Option<f64>,
    /// Retraining epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Warm-up epochs without the regularizer.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Search epochs.
    #[arg(long)]
    pub search_epochs: Option<usize>,
    /// Directory with `train-*`/`val-*` IDX files; replaces the synthetic generator.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes the synthetic dataset as IDX files.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_val: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        image_side: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Runs the architecture search on the supernet.
    Search {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Searches (unless an architecture is given), then retrains from scratch.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        /// architecture.json from a previous search; skips the search phase.
        #[arg(long)]
        architecture: Option<PathBuf>,
    },
    /// Spectrum, kernel complexity and bounds of a feature matrix.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Numeric CSV, one sample per row.
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        features: Option<PathBuf>,
        /// Checkpoint manifest; features are extracted from the config's training set.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        landmarks: Option<usize>,
        #[arg(long)]
        x: Option<f64>,
        /// Use every sample as a landmark.
        #[arg(long, conflicts_with = "landmarks")]
        full_landmarks: bool,
        /// Training residual entering the bounds when analyzing a bare CSV.
        #[arg(long, default_value_t = 0.0)]
        residual: f64,
    },
    /// Checks the linear-probe recursion against its spectral closed form.
    GdVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        /// Step size as a multiple of `1/λ̂₁`; replaces `--eta`.
        #[arg(long, conflicts_with = "eta")]
        eta_rel: Option<f64>,
        #[arg(long, default_value_t = 50)]
        t: usize,
    },
    /// Turns a metrics CSV into plot-ready curves.
    Report {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out-dir>/metrics.csv`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

/// What a command produced: a stdout summary and its exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Value,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Self { summary, exit_code: 0 }
    }
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::GenData { common, .. }
            | Command::Search { common, .. }
            | Command::Train { common, .. }
            | Command::Analyze { common, .. }
            | Command::GdVerify { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

pub fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    let run = &mut cfg.run;
    if let Some(v) = o.kcr_weight {
        run.kcr_weight = v;
    }
    if let Some(v) = o.lambda {
        run.lambda = v;
    }
    if let Some(v) = o.gamma {
        run.gamma = v;
    }
    if let Some(v) = o.landmarks {
        run.m_land = v;
    }
    if let Some(v) = o.x {
        run.x = v;
    }
    if let Some(v) = o.epochs {
        run.t_train = v;
    }
    if let Some(v) = o.warmup {
        run.t_warm = v;
    }
    if let Some(v) = o.search_epochs {
        run.t_search = v;
    }
    if let Some(d) = &o.data_dir {
        cfg.data.dir = Some(d.clone());
    }
    cfg.validate()
}

/// Sets the worker count from `KCR_THREADS`, once per process.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("KCR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| KcrError::Config(format!("KCR_THREADS must be a positive integer, got {v:?}")))?;
    // a pool that already exists keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| KcrError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text.as_bytes())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| KcrError::io(dir, e))
}

fn envelope(cfg: &ExperimentConfig, body: Value) -> Value {
    let mut v = json!({ "schema": 1, "seed": cfg.seed, "config": cfg });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    v
}

pub fn run(command: &Command) -> Result<Outcome> {
    let common = command.common();
    let mut cfg = resolve_config(common)?;
    let out = &common.out_dir;
    match command {
        Command::GenData { n_train, n_val, classes, image_side, noise, .. } => {
            let s = &mut cfg.data.synthetic;
            if let Some(v) = n_train {
                s.n_train = *v;
            }
            if let Some(v) = n_val {
                s.n_val = *v;
            }
            if let Some(v) = classes {
                s.classes = *v;
            }
            if let Some(v) = image_side {
                s.image_side = *v;
            }
            if let Some(v) = noise {
                s.noise = *v;
            }
            s.validate()?;
            gen_data(&cfg, out)
        }
        Command::Search { overrides, .. } => {
            apply_overrides(&mut cfg, overrides)?;
            cmd_search(&cfg, out)
        }
        Command::Train { overrides, architecture, .. } => {
            apply_overrides(&mut cfg, overrides)?;
            cmd_train(&cfg, out, architecture.as_deref())
        }
        Command::Analyze { features, checkpoint, gamma, landmarks, x, full_landmarks, residual, .. } => {
            if let Some(g) = gamma {
                cfg.run.gamma = *g;
            }
            if let Some(v) = x {
                cfg.run.x = *v;
            }
            if let Some(m) = landmarks {
                cfg.run.m_land = *m;
            }
            cfg.run.validate()?;
            let req = AnalyzeRequest {
                features: features.as_deref(),
                checkpoint: checkpoint.as_deref(),
                full_landmarks: *full_landmarks,
                landmarks_given: landmarks.is_some(),
                residual: *residual,
            };
            cmd_analyze(&cfg, out, &req)
        }
        Command::GdVerify { n, d, classes, eta, eta_rel, t, .. } => {
            cmd_gd_verify(&cfg, &GdRequest { n: *n, d: *d, classes: *classes, eta: *eta, eta_rel: *eta_rel, t: *t })
        }
        Command::Report { metrics, .. } => {
            let path = metrics.clone().unwrap_or_else(|| out.join("metrics.csv"));
            cmd_report(&cfg, out, &path)
        }
    }
}

fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    ensure_dir(out)?;
    let (train, val) = generate(&cfg.data.synthetic, cfg.seed)?;
    write_split(out, "train", &train)?;
    write_split(out, "val", &val)?;
    let mut files = Vec::new();
    for split in ["train", "val"] {
        let (img, lab) = split_paths(out, split);
        for p in [img, lab] {
            files.push(p.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
    }
    let summary = envelope(cfg, json!({ "dataset": cfg.data.synthetic, "files": files }));
    write_json(&out.join("dataset.json"), &summary)?;
    Ok(Outcome::ok(envelope(cfg, json!({ "dir": out.display().to_string(), "files": files }))))
}

fn write_run_artifacts(
    cfg: &ExperimentConfig,
    out: &Path,
    architecture: &Architecture,
    net: &KcrNet,
    records: &[crate::training::EpochRecord],
) -> Result<Value> {
    ensure_dir(out)?;
    write_json(&out.join("architecture.json"), &envelope(cfg, json!({ "architecture": architecture })))?;
    save_checkpoint(net, cfg.seed, &out.join("checkpoint.json"))?;
    write(&out.join("metrics.csv"), to_csv(records).as_bytes())?;
    let bounds: Vec<_> = records.iter().map(|r| json!({ "phase": r.phase, "report": r.bound })).collect();
    write_json(&out.join("bounds.json"), &envelope(cfg, json!({ "bounds": bounds })))?;
    let last = records.last();
    Ok(envelope(
        cfg,
        json!({
            "out_dir": out.display().to_string(),
            "widths": architecture.blocks.iter().map(|b| b.d_tilde).collect::<Vec<_>>(),
            "total_flops": architecture.total_flops,
            "epochs": records.len(),
            "final_val_acc": last.map(|r| r.val_acc),
            "final_akc": last.map(|r| r.akc),
        }),
    ))
}

fn cmd_search(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let splits = cfg.load_data()?;
    let search = run_search(cfg, &splits)?;
    let summary = write_run_artifacts(cfg, out, &search.architecture, &search.supernet, &search.records)?;
    Ok(Outcome::ok(summary))
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path, architecture: Option<&Path>) -> Result<Outcome> {
    let splits = cfg.load_data()?;
    let search = match architecture {
        Some(p) => SearchOutcome::from_architecture(cfg, read_architecture(p)?)?,
        None => run_search(cfg, &splits)?,
    };
    let result = run_retrain(cfg, &splits, &search)?;
    let summary = write_run_artifacts(cfg, out, &result.architecture, &result.net, &result.records)?;
    Ok(Outcome::ok(summary))
}

/// Reads an `architecture.json`, either bare or wrapped with its config.
pub fn read_architecture(path: &Path) -> Result<Architecture> {
    let text = fs::read_to_string(path).map_err(|e| KcrError::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| KcrError::Schema(format!("{}: {e}", path.display())))?;
    let inner = v.get("architecture").cloned().unwrap_or(v);
    serde_json::from_value(inner).map_err(|e| KcrError::Schema(format!("{}: {e}", path.display())))
}

/// Parses a numeric CSV into a matrix. A first line with no numeric cell is a header.
pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let row = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if k == 0 && cells.iter().all(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        let mut vals = Vec::with_capacity(cells.len());
        for (j, c) in cells.iter().enumerate() {
            let v: f64 = c
                .parse()
                .map_err(|_| KcrError::Parse { row, msg: format!("column {}: {c:?} is not a number", j + 1) })?;
            if !v.is_finite() {
                return Err(KcrError::Parse { row, msg: format!("column {}: non-finite value", j + 1) });
            }
            vals.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != vals.len() {
                return Err(KcrError::Parse { row, msg: format!("{} columns, expected {}", vals.len(), first.len()) });
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(KcrError::Parse { row: 1, msg: "no data rows".into() });
    }
    Matrix::from_rows(&rows)
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyzeRequest<'a> {
    pub features: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub full_landmarks: bool,
    pub landmarks_given: bool,
    pub residual: f64,
}

/// One line of `spectrum.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub r: usize,
    pub eigenvalue: f64,
    pub tnn_exact: f64,
    pub tnn_approx: f64,
    pub delta: f64,
}

/// Exact and approximate tail curves and complexity of a feature matrix.
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub n: usize,
    pub d: usize,
    pub landmarks: usize,
    pub kc_exact: f64,
    pub kc_h: usize,
    pub akc: f64,
    pub akc_h: usize,
    pub rank: usize,
    pub tnn_exact_at_rank: f64,
    pub tnn_approx_at_rank: f64,
    pub max_abs_delta: f64,
    pub bound: crate::kernel::BoundReport,
    #[serde(skip)]
    pub rows: Vec<SpectrumRow>,
}

/// Full analysis; `landmarks = None` uses every sample.
pub fn analyze_features(
    features: &Matrix,
    landmarks: Option<usize>,
    gamma: f64,
    x: f64,
    residual: f64,
    seed: u64,
) -> Result<Analysis> {
    let (n, d) = features.shape();
    let spec = spectrum_of_features(features)?;
    let (kc, kc_h) = kc_exact(&spec);
    let mut rng = Rng::new(seed, 4);
    let lm = match landmarks {
        None => Landmarks::All,
        Some(m) => Landmarks::Sample(m),
    };
    let m = landmarks.unwrap_or(n);
    let factors = nystrom(features, lm, m.min(d), &mut rng)?;
    let (akc_value, akc_h) = akc(features, &factors)?;
    let tails = approx_tails(features, &factors)?;
    let rows: Vec<SpectrumRow> = (1..=spec.r0)
        .map(|r| {
            let exact = tnn_exact(&spec, r)?;
            let approx = tails[r.min(tails.len() - 1)];
            Ok(SpectrumRow { r, eigenvalue: spec.eigenvalues[r - 1], tnn_exact: exact, tnn_approx: approx, delta: approx - exact })
        })
        .collect::<Result<_>>()?;
    let rank = target_rank(gamma, n, d).min(spec.r0);
    let at = rows.iter().find(|row| row.r == rank).copied();
    let bound = kcr_bounds(residual, akc_value, n, x).with_exact_kc(kc);
    Ok(Analysis {
        n,
        d,
        landmarks: factors.landmark_indices.len(),
        kc_exact: kc,
        kc_h,
        akc: akc_value,
        akc_h,
        rank,
        tnn_exact_at_rank: at.map_or(0.0, |a| a.tnn_exact),
        tnn_approx_at_rank: at.map_or(0.0, |a| a.tnn_approx),
        max_abs_delta: rows.iter().map(|r| r.delta.abs()).fold(0.0, f64::max),
        bound,
        rows,
    })
}

pub fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    let mut s = String::from("r,eigenvalue,tnn_exact,tnn_approx,delta\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.r, r.eigenvalue, r.tnn_exact, r.tnn_approx, r.delta
        ));
    }
    s
}

fn cmd_analyze(cfg: &ExperimentConfig, out: &Path, req: &AnalyzeRequest<'_>) -> Result<Outcome> {
    let (features, residual, source) = match (req.features, req.checkpoint) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| KcrError::io(p, e))?;
            (parse_matrix_csv(&text)?, req.residual, p.display().to_string())
        }
        (None, Some(p)) => {
            let (net, _) = load_checkpoint(p)?;
            if net.config != cfg.model {
                return Err(KcrError::Config("checkpoint model differs from the config's model section".into()));
            }
            let splits = cfg.load_data()?;
            let feats = net.extract_features(&splits.train.images, cfg.run.eval_chunk)?;
            let train = evaluate(&net, &splits.train, cfg.run.eval_chunk)?;
            (feats, train.sq_loss, p.display().to_string())
        }
        (None, None) => return Err(KcrError::Argument("analyze needs --features or --checkpoint".into())),
    };
    let n = features.rows();
    let landmarks = if req.full_landmarks {
        None
    } else if req.landmarks_given || cfg.run.m_land <= n {
        Some(cfg.run.m_land)
    } else {
        None
    };
    let analysis = analyze_features(&features, landmarks, cfg.run.gamma, cfg.run.x, residual, cfg.seed)?;
    ensure_dir(out)?;
    write(&out.join("spectrum.csv"), spectrum_csv(&analysis.rows).as_bytes())?;
    let summary = envelope(cfg, json!({ "source": source, "analysis": analysis }));
    write_json(&out.join("bounds.json"), &summary)?;
    Ok(Outcome::ok(summary))
}

#[derive(Debug, Clone, Copy)]
pub struct GdRequest {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub eta: f64,
    pub eta_rel: Option<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GdReport {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub t: usize,
    pub eta: f64,
    pub lambda_max: f64,
    pub stable: bool,
    pub max_rel_deviation: f64,
    pub pass: bool,
}

/// Random Gaussian features with random one-hot labels.
pub fn gd_instance(n: usize, d: usize, classes: usize, rng: &mut Rng) -> (Matrix, Matrix) {
    let f = Matrix::from_fn(n, d, |_, _| rng.normal());
    let labels: Vec<usize> = (0..n).map(|_| (rng.uniform() * classes as f64) as usize % classes).collect();
    let y = Matrix::from_fn(n, classes, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
    (f, y)
}

/// Largest relative gap between the iterated residuals and the closed form.
///
/// Residuals are compared relative to the closed form, with `1e-12 ‖Y‖²` as
/// the floor so annihilated directions do not divide by zero.
pub fn gd_max_deviation(features: &Matrix, labels: &Matrix, eta: f64, t: usize) -> Result<f64> {
    let k_n = gram(features, true)?;
    let closed = GdClosedForm::new(&k_n, labels)?;
    let (_, iterated) = gd_linear_probe(features, labels, eta, t)?;
    let floor = 1e-12 * labels.frobenius_sq();
    Ok(iterated
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let c = closed.residual(eta, k);
            (r - c).abs() / c.abs().max(floor)
        })
        .fold(0.0, f64::max))
}

pub fn gd_verify(req: &GdRequest, seed: u64) -> Result<GdReport> {
    if req.n == 0 || req.d == 0 || req.classes == 0 {
        return Err(KcrError::Argument("n, d and classes must be >= 1".into()));
    }
    let (f, y) = gd_instance(req.n, req.d, req.classes, &mut Rng::new(seed, 0));
    let closed = GdClosedForm::new(&gram(&f, true)?, &y)?;
    let lambda_max = closed.max_eigenvalue();
    let eta = match req.eta_rel {
        Some(c) if lambda_max > 0.0 => c / lambda_max,
        Some(_) => return Err(KcrError::DegenerateKernel("eta-rel needs a nonzero spectrum".into())),
        None => req.eta,
    };
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(KcrError::Argument(format!("step size must be > 0, got {eta}")));
    }
    let stable = closed.is_stable(eta);
    if !stable {
        eprintln!("warning: eta * lambda_max = {:.3} >= 2; the recursion does not contract", eta * lambda_max);
    }
    let dev = gd_max_deviation(&f, &y, eta, req.t)?;
    Ok(GdReport {
        n: req.n,
        d: req.d,
        classes: req.classes,
        t: req.t,
        eta,
        lambda_max,
        stable,
        max_rel_deviation: dev,
        pass: dev <= GD_TOLERANCE,
    })
}

fn cmd_gd_verify(cfg: &ExperimentConfig, req: &GdRequest) -> Result<Outcome> {
    let report = gd_verify(req, cfg.seed)?;
    let code = if report.pass { 0 } else { 2 };
    Ok(Outcome { summary: envelope(cfg, json!({ "gd_verify": report })), exit_code: code })
}

fn cmd_report(cfg: &ExperimentConfig, out: &Path, metrics: &Path) -> Result<Outcome> {
    let text = fs::read_to_string(metrics).map_err(|e| KcrError::io(metrics, e))?;
    let rows = parse_csv(&text)?;
    let c = curves(&rows);
    ensure_dir(out)?;
    let summary = envelope(cfg, json!({ "metrics": metrics.display().to_string(), "curves": c }));
    write_json(&out.join("curves.json"), &summary)?;
    Ok(Outcome::ok(envelope(
        cfg,
        json!({
            "curves": out.join("curves.json").display().to_string(),
            "epochs": c.epoch.len(),
            "upper_val_correlation": c.upper_val_correlation,
        }),
    )))
}

/// Parses `args`, runs the command, prints the summary, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = init_threads().and_then(|_| run(&cli.command));
    match result {
        Ok(o) => {
            println!("{}", serde_json::to_string_pretty(&o.summary).expect("summary serializes"));
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
