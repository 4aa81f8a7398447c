//! Writes a metrics CSV for a short run and reshapes it into plot-ready curves.
//!
//! Usage: `cargo run --release --example bound_curves [out_dir]`

use std::path::PathBuf;

use kcr::training::{curves, parse_csv, run_pipeline, to_csv, ExperimentConfig};

fn main() -> kcr::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/bound_curves".into()));
    std::fs::create_dir_all(&out).map_err(|e| kcr::KcrError::io(&out, e))?;

    let mut cfg = ExperimentConfig::default();
    cfg.data.synthetic.n_train = 512;
    cfg.data.synthetic.n_val = 256;
    cfg.model.dim = 32;
    cfg.model.depth = 2;
    cfg.model.d_min = 4;
    cfg.run.t_search = 2;
    cfg.run.t_train = 12;
    cfg.run.t_warm = 4;
    cfg.run.m_land = 64;
    let splits = cfg.load_data()?;
    let result = run_pipeline(&cfg, &splits)?;

    let csv = to_csv(&result.records);
    let path = out.join("metrics.csv");
    std::fs::write(&path, &csv).map_err(|e| kcr::KcrError::io(&path, e))?;
    let c = curves(&parse_csv(&csv)?);
    let path = out.join("curves.json");
    std::fs::write(&path, serde_json::to_string_pretty(&c)?).map_err(|e| kcr::KcrError::io(&path, e))?;

    println!("{:>3} {:>12} {:>10} {:>10} {:>10} {:>10}", "ep", "phase", "train_sq", "lower", "upper", "val_sq");
    for i in 0..c.epoch.len() {
        println!(
            "{:>3} {:>12} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            c.epoch[i], c.phase[i].to_string(), c.train_sq[i], c.lower[i], c.upper[i], c.val_sq[i]
        );
    }
    match c.upper_val_correlation {
        Some(r) => println!("\ncorr(upper, val_sq) over {} regularized epochs: {r:.4}", c.regularized_epochs),
        None => println!("\ncorrelation undefined"),
    }
    println!("wrote {}", out.display());
    Ok(())
}
