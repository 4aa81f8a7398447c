//! Kernel complexity and truncated nuclear norms of a few small spectra.

use kcr::kernel::{kc_exact, kcr_bounds, spectrum_of_features, tnn_exact, KernelSpectrum};
use kcr::Matrix;

fn show(name: &str, spec: &KernelSpectrum) -> kcr::Result<()> {
    let (kc, h) = kc_exact(spec);
    let tnn: Vec<String> = (0..=spec.r0).map(|r| tnn_exact(spec, r).map(|v| format!("{v:.3}"))).collect::<kcr::Result<_>>()?;
    println!("{name:<28} eig {:?}  KC {kc:.5} (h = {h})  tnn[r] {}", spec.eigenvalues, tnn.join(" "));
    Ok(())
}

fn main() -> kcr::Result<()> {
    show("zero kernel", &KernelSpectrum::from_eigenvalues(vec![0.0; 4], 4)?)?;
    show("identity K_n, n = 4", &KernelSpectrum::from_eigenvalues(vec![1.0; 4], 4)?)?;
    show("(0.8, 0.2, 0, 0), n = 4", &KernelSpectrum::from_eigenvalues(vec![0.8, 0.2, 0.0, 0.0], 4)?)?;

    // features whose gram is diag(0.8, 0.2, 0, 0) after dividing by n
    let f = Matrix::from_rows(&[
        vec![3.2f64.sqrt(), 0.0],
        vec![0.0, 0.8f64.sqrt()],
        vec![0.0, 0.0],
        vec![0.0, 0.0],
    ])?;
    let spec = spectrum_of_features(&f)?;
    show("from features", &spec)?;

    // the same spectrum spread over more samples: complexity falls with n
    for n in [4usize, 16, 64, 256] {
        let mut eig = vec![0.8, 0.2];
        eig.resize(n.min(8), 0.0);
        let s = KernelSpectrum::from_eigenvalues(eig, n)?;
        let (kc, _) = kc_exact(&s);
        let b = kcr_bounds(0.1, kc, n, 1.0);
        println!("n = {n:>3}: KC {kc:.4}  bounds [{:.4}, {:.4}]", b.lower, b.upper);
    }
    Ok(())
}
