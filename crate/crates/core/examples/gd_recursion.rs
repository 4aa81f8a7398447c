//! Linear-probe gradient descent on fixed features against the spectral
//! closed form `‖(I − η K_n)ᵗ Y‖_F²`.

use kcr::cli::gd_instance;
use kcr::kernel::{gd_linear_probe, gram, GdClosedForm};
use kcr::Rng;

fn main() -> kcr::Result<()> {
    let (f, y) = gd_instance(32, 8, 4, &mut Rng::new(7, 0));
    let closed = GdClosedForm::new(&gram(&f, true)?, &y)?;
    let lmax = closed.max_eigenvalue();
    println!("lambda_max = {lmax:.6}");

    for rel in [0.5, 1.0, 1.9] {
        let eta = rel / lmax;
        let (_, iterated) = gd_linear_probe(&f, &y, eta, 40)?;
        println!("\neta = {rel} / lambda_max  (stable: {})", closed.is_stable(eta));
        println!("{:>4} {:>14} {:>14} {:>10}", "t", "iterated", "closed", "rel.dev");
        for t in [0, 1, 2, 5, 10, 20, 40] {
            let c = closed.residual(eta, t);
            let dev = (iterated[t] - c).abs() / c.max(1e-300);
            println!("{t:>4} {:>14.8} {:>14.8} {dev:>10.2e}", iterated[t], c);
        }
    }

    // past 2/λ̂₁ the top direction grows by (1 − ηλ̂₁)² per step
    match gd_linear_probe(&f, &y, 3.0 / lmax, 100) {
        Err(e) => println!("\neta = 3 / lambda_max: {e}"),
        Ok(_) => println!("\neta = 3 / lambda_max unexpectedly converged"),
    }
    Ok(())
}
