//! A short search followed by retraining with and without the regularizer,
//! sharing the searched architecture.

use kcr::training::{run_retrain, run_search, ExperimentConfig};

fn main() -> kcr::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.data.synthetic.n_train = 512;
    cfg.data.synthetic.n_val = 256;
    cfg.model.dim = 32;
    cfg.model.depth = 2;
    cfg.model.d_min = 4;
    cfg.run.t_search = 4;
    cfg.run.t_train = 8;
    cfg.run.t_warm = 3;
    cfg.run.m_land = 64;
    cfg.validate()?;
    let splits = cfg.load_data()?;

    let search = run_search(&cfg, &splits)?;
    let widths: Vec<usize> = search.architecture.blocks.iter().map(|b| b.d_tilde).collect();
    println!("searched widths {widths:?}, {} MLP flops", search.architecture.total_flops);

    for w in [1.0, 0.0] {
        let mut c = cfg.clone();
        c.run.kcr_weight = w;
        let out = run_retrain(&c, &splits, &search)?;
        println!("\nkcr_weight = {w}");
        println!("{:>3} {:>12} {:>10} {:>9} {:>9} {:>8}", "ep", "phase", "ce", "kcr", "akc", "val_acc");
        for r in out.records.iter().skip(search.records.len()) {
            println!("{:>3} {:>12} {:>10.4} {:>9.4} {:>9.5} {:>8.3}", r.epoch, r.phase.to_string(), r.ce, r.kcr, r.akc, r.val_acc);
        }
    }
    Ok(())
}
