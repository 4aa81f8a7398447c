//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Criteria 6 through 10 run the full desk-scale experiment (a few searches and
//! three retrainings on 2048 synthetic images) and take several minutes.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use kcr::kernel::{
    approx_tails, gd_linear_probe, gram, kcr_bounds, kc_exact, nystrom, spectrum_of_features, BoundReport,
    GdClosedForm, KernelSpectrum, Landmarks,
};
use kcr::model::{KcrNet, LossSpec, Mode, ModelConfig, SoftNoise};
use kcr::numerics::{finite_diff_grad, max_rel_error, DEFAULT_FD_STEP};
use kcr::selection::{apply_mask, flops_block, gather, scatter, Architecture, ChannelSelector, HardMask};
use kcr::training::{
    curves, kcr_batch_loss, parse_csv, refresh_bank, run_retrain, run_search, to_csv, EpochRecord,
    ExperimentConfig, LandmarkState,
};
use kcr::{Matrix, Rng};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Uniform integer in `0..k`.
fn below(rng: &mut Rng, k: usize) -> usize {
    ((rng.uniform() * k as f64) as usize).min(k - 1)
}

fn gd_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = Rng::new(2024, 0);
    let mut worst = 0.0f64;
    let mut iterations = 0;
    for _ in 0..100 {
        let n = 2 + below(&mut rng, 31);
        let d = 1 + below(&mut rng, 8);
        let c = 1 + below(&mut rng, 4);
        let t = below(&mut rng, 101);
        let f = Matrix::from_fn(n, d, |_, _| rng.normal());
        let labels: Vec<usize> = (0..n).map(|_| below(&mut rng, c)).collect();
        let y = Matrix::from_fn(n, c, |i, j| f64::from(u8::from(labels[i] == j)));
        let closed = GdClosedForm::new(&gram(&f, true).map_err(|e| e.to_string())?, &y).map_err(|e| e.to_string())?;
        let eta = (0.05 + 0.95 * rng.uniform()) / closed.max_eigenvalue();
        let (_, iterated) = gd_linear_probe(&f, &y, eta, t).map_err(|e| e.to_string())?;
        let floor = 1e-12 * y.frobenius_sq();
        for (step, &r) in iterated.iter().enumerate() {
            let want = closed.residual(eta, step);
            worst = worst.max((r - want).abs() / want.max(floor));
            iterations += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-8 && elapsed < Duration::from_secs(5),
        format!("max rel deviation {worst:.2e} over {iterations} iterates, {elapsed:.2?}"),
    )
}

/// Independent minimization: every tail summed afresh from the smallest eigenvalue.
fn brute_force_kc(values: &[f64], n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for h in 0..=values.len() {
        let mut tail = 0.0;
        for i in (h..values.len()).rev() {
            tail += values[i];
        }
        best = best.min(h as f64 / n as f64 + (tail / n as f64).sqrt());
    }
    best
}

fn kc_correctness() -> Verdict {
    let mut rng = Rng::new(77, 0);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = 1 + below(&mut rng, 40);
        let r0 = 1 + below(&mut rng, n);
        let decay = 0.2 + 0.8 * rng.uniform();
        let raw: Vec<f64> = (0..r0)
            .map(|i| if rng.uniform() < 0.2 { 0.0 } else { rng.uniform() * decay.powi(i as i32) })
            .collect();
        let spec = KernelSpectrum::from_eigenvalues(raw, n).map_err(|e| e.to_string())?;
        if kc_exact(&spec).0 != brute_force_kc(&spec.eigenvalues, n) {
            mismatches += 1;
        }
    }
    let worked = KernelSpectrum::from_eigenvalues(vec![0.8, 0.2, 0.0, 0.0], 4).map_err(|e| e.to_string())?;
    let (kc, h) = kc_exact(&worked);
    let identity = KernelSpectrum::from_eigenvalues(vec![1.0; 4], 4).map_err(|e| e.to_string())?;
    let (kc_id, _) = kc_exact(&identity);
    check(
        mismatches == 0 && (kc - 0.47361).abs() < 5e-6 && h == 1 && kc_id == 1.0,
        format!("{mismatches} mismatches in 1000 spectra; worked {kc:.5} at h={h}; identity {kc_id}"),
    )
}

fn nystrom_exactness() -> Verdict {
    let mut rng = Rng::new(31, 0);
    let mut worst = 0.0f64;
    let mut half_errors = Vec::new();
    for case in 0..100 {
        let n = 2 + below(&mut rng, 63);
        let d = 1 + below(&mut rng, 16);
        // every fourth matrix is rank deficient
        let f = if case % 4 == 0 && d.min(n) > 1 {
            let k = 1 + below(&mut rng, d.min(n) - 1);
            let a = Matrix::from_fn(n, k, |_, _| rng.normal());
            let b = Matrix::from_fn(k, d, |_, _| rng.normal());
            a.matmul(&b).map_err(|e| e.to_string())?
        } else {
            Matrix::from_fn(n, d, |_, _| rng.normal())
        };
        let spec = spectrum_of_features(&f).map_err(|e| e.to_string())?;
        let exact = spec.suffix_sums();
        let trace = spec.trace();
        let fac = nystrom(&f, Landmarks::All, n.min(d), &mut Rng::new(case, 4)).map_err(|e| e.to_string())?;
        let tails = approx_tails(&f, &fac).map_err(|e| e.to_string())?;
        for (r, &e) in exact.iter().enumerate() {
            let a = tails[r.min(tails.len() - 1)];
            worst = worst.max((a - e).abs() / trace);
        }
        let m = (n / 2).max(1);
        let fac = nystrom(&f, Landmarks::Sample(m), m.min(d), &mut Rng::new(case, 5)).map_err(|e| e.to_string())?;
        let tails = approx_tails(&f, &fac).map_err(|e| e.to_string())?;
        let rel = exact
            .iter()
            .enumerate()
            .map(|(r, &e)| (tails[r.min(tails.len() - 1)] - e).abs() / trace)
            .fold(0.0, f64::max);
        half_errors.push(rel);
    }
    let finite = half_errors.iter().all(|e| e.is_finite());
    let mean = half_errors.iter().sum::<f64>() / half_errors.len() as f64;
    let max = half_errors.iter().copied().fold(0.0, f64::max);
    check(
        worst <= 1e-6 && finite,
        format!("all landmarks: max |delta|/tr {worst:.2e}; half landmarks (reported): mean {mean:.3e}, max {max:.3e}"),
    )
}

fn gradient_soundness() -> Verdict {
    let start = Instant::now();
    let cfg = ModelConfig {
        image_side: 8,
        patch: 4,
        dim: 8,
        heads: 2,
        depth: 1,
        classes: 3,
        d_min: 2,
        pos_embed: true,
        ..ModelConfig::default()
    };
    let mut rng = Rng::new(4, 0);
    let mut net = KcrNet::supernet(&cfg, 1.5, &mut rng).map_err(|e| e.to_string())?;
    net.params.head = Matrix::from_fn(8, 3, |_, _| rng.normal() * 0.3);
    for s in net.selectors.iter_mut().flatten() {
        s.alpha.iter_mut().for_each(|a| *a = 0.5 * rng.normal());
    }
    let n = 12;
    let images = Matrix::from_fn(n, 64, |_, _| rng.uniform());
    let all_labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let feats = net.extract_features(&images, 8).map_err(|e| e.to_string())?;
    let bank = refresh_bank(feats, &mut LandmarkState::new(6, Rng::new(4, 4)), 0.25, 1).map_err(|e| e.to_string())?;
    let idx = [1usize, 4, 7, 10];
    let x = images.select_rows(&idx);
    let labels: Vec<usize> = idx.iter().map(|&i| all_labels[i]).collect();
    let noise = SoftNoise::draw(&net, &mut Rng::new(4, 3)).map_err(|e| e.to_string())?;
    let reg = |f: &Matrix| kcr_batch_loss(&idx, f, Some(&bank), 1);

    let specs = [
        ("ce", LossSpec::default()),
        ("ce+cost", LossSpec { cost_lambda: 0.4, ..LossSpec::default() }),
        ("ce+kcr", LossSpec { kcr_weight: 0.8, regularizer: Some(&reg), cost_lambda: 0.0 }),
        ("all", LossSpec { kcr_weight: 0.8, regularizer: Some(&reg), cost_lambda: 0.4 }),
    ];
    let mut worst = (0.0f64, String::new());
    for (label, spec) in specs {
        let loss = |m: &KcrNet| {
            m.loss_and_grad(&x, &labels, Mode::Soft(&noise), spec).map(|r| r.0.total).unwrap_or(f64::NAN)
        };
        let (_, g) = net.loss_and_grad(&x, &labels, Mode::Soft(&noise), spec).map_err(|e| e.to_string())?;
        let tensors: Vec<Matrix> = net.params.tensors().into_iter().cloned().collect();
        let analytic = g.params.tensors();
        for (i, name) in net.params.names().iter().enumerate() {
            let fd = finite_diff_grad(
                |m| {
                    let mut probe = net.clone();
                    *probe.params.tensors_mut()[i] = m.clone();
                    loss(&probe)
                },
                &tensors[i],
                DEFAULT_FD_STEP,
            )
            .map_err(|e| e.to_string())?;
            let err = max_rel_error(analytic[i], &fd, 1e-6);
            if !(err <= worst.0) {
                worst = (err, format!("{label}/{name}"));
            }
        }
        let alpha = Matrix::row_vector(&net.selectors[0].as_ref().map(|s| s.alpha.clone()).unwrap_or_default());
        let fd = finite_diff_grad(
            |m| {
                let mut probe = net.clone();
                if let Some(s) = probe.selectors[0].as_mut() {
                    s.alpha = m.data().to_vec();
                }
                loss(&probe)
            },
            &alpha,
            DEFAULT_FD_STEP,
        )
        .map_err(|e| e.to_string())?;
        let got = Matrix::row_vector(g.alpha[0].as_deref().unwrap_or(&[]));
        let err = max_rel_error(&got, &fd, 1e-6);
        if !(err <= worst.0) {
            worst = (err, format!("{label}/alpha"));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst.0 <= 1e-4 && elapsed < Duration::from_secs(60),
        format!("max rel error {:.2e} ({}), {elapsed:.2?}", worst.0, worst.1),
    )
}

fn mask_semantics() -> Verdict {
    let cfg = ModelConfig { image_side: 8, patch: 4, dim: 16, heads: 2, depth: 2, classes: 3, d_min: 3, ..ModelConfig::default() };
    let mut forward_gap = 0.0f64;
    for seed in 0..5 {
        let mut rng = Rng::new(seed, 9);
        let mut net = KcrNet::supernet(&cfg, 1.0, &mut rng).map_err(|e| e.to_string())?;
        net.params.head = Matrix::from_fn(16, 3, |_, _| rng.normal());
        for s in net.selectors.iter_mut().flatten() {
            s.alpha.iter_mut().for_each(|a| *a = rng.normal());
        }
        let masks: Vec<Vec<f64>> = net.selectors.iter().flatten().map(|s| s.harden().as_f64()).collect();
        let x = Matrix::from_fn(5, 64, |_, _| rng.uniform());
        let (lh, fh) = net.forward(&x, Mode::Hard).map_err(|e| e.to_string())?;
        let (ls, fs) = net.forward(&x, Mode::Masked(&masks)).map_err(|e| e.to_string())?;
        let gap = |a: &Matrix, b: &Matrix| a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        forward_gap = forward_gap.max(gap(&lh, &ls)).max(gap(&fh, &fs));
    }

    let mut rng = Rng::new(12, 0);
    let mut scatter_exact = true;
    for _ in 0..200 {
        let width = 1 + below(&mut rng, 24);
        let z = Matrix::from_fn(1 + below(&mut rng, 6), width, |_, _| rng.normal());
        let mask = HardMask::new((0..width).map(|_| u8::from(rng.uniform() < 0.5)).collect());
        let round = scatter(&gather(&z, &mask).map_err(|e| e.to_string())?, &mask, width).map_err(|e| e.to_string())?;
        scatter_exact &= round == apply_mask(&z, &mask.as_f64()).map_err(|e| e.to_string())?;
    }

    let sel = ChannelSelector::new(1, 0.0, 1.0, 1).map_err(|e| e.to_string())?;
    let mut rng = Rng::new(5, 3);
    let mean = (0..10_000).map(|_| sel.soft_mask(&mut rng)[0]).sum::<f64>() / 1e4;
    check(
        forward_gap <= 1e-10 && scatter_exact && (mean - 0.5).abs() <= 0.02,
        format!("hard/soft gap {forward_gap:.2e}; scatter∘gather exact: {scatter_exact}; mean mask at alpha 0 {mean:.4}"),
    )
}

fn unpruned_flops(cfg: &ExperimentConfig) -> u64 {
    cfg.model.depth as u64 * flops_block(cfg.model.mlp_layers, cfg.model.dim)
}

struct Experiment {
    cfg: ExperimentConfig,
    n_train: usize,
    grid: Vec<(f64, Architecture, Vec<EpochRecord>)>,
    searched: Architecture,
    regularized: Vec<EpochRecord>,
    control: Vec<EpochRecord>,
    elapsed: Duration,
}

fn run_experiment() -> Result<Experiment, String> {
    let cfg = ExperimentConfig::default();
    let splits = cfg.load_data().map_err(|e| e.to_string())?;
    let mut grid = Vec::new();
    for lambda in [0.1, 0.3, 0.5] {
        let mut c = cfg.clone();
        c.run.lambda = lambda;
        let s = run_search(&c, &splits).map_err(|e| e.to_string())?;
        eprintln!("  search lambda {lambda}: {} flops", s.architecture.total_flops);
        grid.push((lambda, s.architecture, s.records));
    }
    let start = Instant::now();
    let search = run_search(&cfg, &splits).map_err(|e| e.to_string())?;
    let mut regularized = Vec::new();
    let mut control = Vec::new();
    for (weight, out) in [(1.0, &mut regularized), (0.0, &mut control)] {
        let mut c = cfg.clone();
        c.run.kcr_weight = weight;
        *out = run_retrain(&c, &splits, &search).map_err(|e| e.to_string())?.records;
        eprintln!("  retrain kcr_weight {weight}: done after {:.0?}", start.elapsed());
    }
    Ok(Experiment {
        n_train: splits.train.len(),
        cfg,
        grid,
        searched: search.architecture,
        regularized,
        control,
        elapsed: start.elapsed(),
    })
}

fn flops_model(exp: &Experiment) -> Verdict {
    let block = flops_block(2, 64);
    let mut rng = Rng::new(6, 0);
    let mut sums_match = true;
    for _ in 0..50 {
        let depth = 1 + below(&mut rng, 6);
        let width = 1 + below(&mut rng, 64);
        let layers = 1 + below(&mut rng, 3);
        let masks: Vec<HardMask> =
            (0..depth).map(|_| HardMask::new((0..width).map(|_| u8::from(rng.uniform() < 0.6)).collect())).collect();
        let arch = Architecture::from_masks(&masks, layers);
        let sum: u64 = masks.iter().map(|m| layers as u64 * (2 * (m.d_tilde() * m.d_tilde()) as u64 + m.d_tilde() as u64)).sum();
        sums_match &= arch.total_flops == sum && arch.blocks.iter().map(|b| b.flops).sum::<u64>() == sum;
    }
    let flops: Vec<u64> = exp.grid.iter().map(|g| g.1.total_flops).collect();
    let monotone = flops.windows(2).all(|w| w[1] <= w[0]);
    check(
        block == 16512 && sums_match && monotone,
        format!("flops_block(2, 64) = {block}; totals are block sums: {sums_match}; lambda grid flops {flops:?}"),
    )
}

fn last_regularized(records: &[EpochRecord]) -> Option<&EpochRecord> {
    records.last().filter(|r| r.phase == kcr::training::Phase::Regularized)
}

fn directional(exp: &Experiment) -> Verdict {
    let (Some(reg), Some(ctl)) = (last_regularized(&exp.regularized), last_regularized(&exp.control)) else {
        return Err("runs did not end in a regularized epoch".into());
    };
    let full = unpruned_flops(&exp.cfg);
    let akc_ok = reg.akc < ctl.akc;
    let flops_ok = exp.searched.total_flops < full;
    let acc_ok = reg.val_acc >= ctl.val_acc - 0.02;
    let time_ok = exp.elapsed < Duration::from_secs(30 * 60);
    check(
        akc_ok && flops_ok && acc_ok && time_ok,
        format!(
            "A-KC {:.5} vs control {:.5}; flops {} vs unpruned {full}; val acc {:.4} vs control {:.4}; {:.0?}",
            reg.akc, ctl.akc, exp.searched.total_flops, reg.val_acc, ctl.val_acc, exp.elapsed
        ),
    )
}

fn kcr_binary(args: &[&str]) -> Result<serde_json::Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kcr")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("kcr {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())
}

fn bound_curves(exp: &Experiment, dir: &Path) -> Verdict {
    let csv = dir.join("metrics.csv");
    std::fs::write(&csv, to_csv(&exp.regularized)).map_err(|e| e.to_string())?;
    let out = dir.join("report");
    let summary = kcr_binary(&["report", "--metrics", csv.to_str().unwrap_or_default(), "--out-dir", out.to_str().unwrap_or_default()])?;
    let corr = summary["upper_val_correlation"].as_f64();
    let local = curves(&parse_csv(&to_csv(&exp.regularized)).map_err(|e| e.to_string())?);
    check(
        corr.is_some_and(|c| c >= 0.5),
        format!("Pearson(upper, val_sq) = {corr:?} over {} regularized epochs (seed {})", local.regularized_epochs, exp.cfg.seed),
    )
}

fn determinism(exp: &Experiment, dir: &Path) -> Verdict {
    let out = dir.join("rerun");
    kcr_binary(&["train", "--seed", &exp.cfg.seed.to_string(), "--out-dir", out.to_str().unwrap_or_default()])?;
    let rerun = std::fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())?;
    let first = to_csv(&exp.regularized).into_bytes();
    let same = rerun == first;
    check(same, format!("rerun metrics.csv {} bytes, byte-identical: {same}", rerun.len()))
}

fn bound_identity(reports: &[(BoundReport, usize)]) -> Verdict {
    let mut bad = 0;
    for (b, n) in reports {
        let w = b.akc + b.x / *n as f64;
        let exact_ends = b.upper == b.train_residual + w && b.lower == b.train_residual - w;
        // the ends are exact; their difference carries one rounding of each end
        let slack = 2.0 * f64::EPSILON * b.upper.abs().max(b.lower.abs());
        if !exact_ends || ((b.upper - b.lower) - 2.0 * w).abs() > slack {
            bad += 1;
        }
    }
    check(bad == 0 && !reports.is_empty(), format!("{} reports, {bad} violations", reports.len()))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: &str, v: Verdict| match v {
        Ok(d) => println!("PASS criterion {id}: {d}"),
        Err(d) => {
            failures += 1;
            println!("FAIL criterion {id}: {d}");
        }
    };
    report("1 (gd recursion)", gd_oracle());
    report("2 (kernel complexity)", kc_correctness());
    report("3 (nystrom exactness)", nystrom_exactness());
    report("4 (gradients)", gradient_soundness());
    report("5 (mask semantics)", mask_semantics());

    eprintln!("running the desk-scale experiment...");
    match run_experiment() {
        Err(e) => {
            for id in ["6", "7", "8", "9", "10"] {
                report(id, Err(format!("experiment failed: {e}")));
            }
        }
        Ok(exp) => {
            let dir = match tempfile::tempdir() {
                Ok(d) => d,
                Err(e) => {
                    println!("FAIL: no temporary directory: {e}");
                    return ExitCode::FAILURE;
                }
            };
            report("6 (flops model)", flops_model(&exp));
            report("7 (directional experiment)", directional(&exp));
            report("8 (bound curves)", bound_curves(&exp, dir.path()));
            report("9 (determinism)", determinism(&exp, dir.path()));

            let mut reports: Vec<(BoundReport, usize)> = exp
                .grid
                .iter()
                .flat_map(|g| g.2.iter())
                .chain(&exp.regularized)
                .chain(&exp.control)
                .map(|r| (r.bound, exp.n_train))
                .collect();
            let mut rng = Rng::new(8, 0);
            for _ in 0..1000 {
                let n = 1 + below(&mut rng, 5000);
                reports.push((kcr_bounds(100.0 * rng.uniform(), rng.uniform(), n, 3.0 * rng.uniform()), n));
            }
            report("10 (bound identity)", bound_identity(&reports));
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
