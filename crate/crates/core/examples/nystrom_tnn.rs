//! Exact versus Nyström-approximated tail sums on features with a decaying
//! spectrum, for a few landmark counts.

use kcr::kernel::{akc, approx_tails, kc_exact, nystrom, spectrum_of_features, tnn_exact, Landmarks};
use kcr::{Matrix, Rng};

fn main() -> kcr::Result<()> {
    let (n, d) = (400, 16);
    let mut rng = Rng::new(3, 0);
    let f = Matrix::from_fn(n, d, |_, j| rng.normal() * 0.7f64.powi(j as i32));
    let spec = spectrum_of_features(&f)?;
    let (kc, kc_h) = kc_exact(&spec);
    println!("n = {n}, d = {d}, KC = {kc:.5} (h = {kc_h})");

    let ranks = [1usize, 2, 4, 8];
    print!("{:>10}", "landmarks");
    for r in ranks {
        print!(" {:>12}", format!("tail r={r}"));
    }
    println!(" {:>10}", "A-KC");
    print!("{:>10}", "exact");
    for r in ranks {
        print!(" {:>12.5}", tnn_exact(&spec, r)?);
    }
    println!(" {kc:>10.5}");

    for m in [16usize, 32, 64, 400] {
        let lm = if m == n { Landmarks::All } else { Landmarks::Sample(m) };
        let fac = nystrom(&f, lm, m.min(d), &mut Rng::new(9, 4))?;
        let tails = approx_tails(&f, &fac)?;
        let (a, _) = akc(&f, &fac)?;
        print!("{m:>10}");
        for r in ranks {
            print!(" {:>12.5}", tails[r.min(tails.len() - 1)]);
        }
        println!(" {a:>10.5}");
    }
    Ok(())
}
