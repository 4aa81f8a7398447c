//! Reverse-mode gradients of the composite loss against central differences.

use kcr::model::{KcrNet, LossSpec, Mode, ModelConfig, SoftNoise};
use kcr::numerics::{finite_diff_grad, max_rel_error, DEFAULT_FD_STEP};
use kcr::{Matrix, Rng};

fn main() -> kcr::Result<()> {
    let cfg = ModelConfig {
        image_side: 8,
        patch: 4,
        dim: 8,
        heads: 2,
        depth: 1,
        classes: 2,
        d_min: 2,
        pos_embed: true,
        ..ModelConfig::default()
    };
    let mut rng = Rng::new(1, 0);
    let mut net = KcrNet::supernet(&cfg, 1.0, &mut rng)?;
    // a nonzero head so the backbone receives gradient
    net.params.head = Matrix::from_fn(8, 2, |_, _| rng.normal() * 0.3);
    let x = Matrix::from_fn(3, 64, |_, _| rng.uniform());
    let labels = [0, 1, 1];
    let noise = SoftNoise::draw(&net, &mut Rng::new(2, 3))?;
    let reg = |f: &Matrix| Ok((0.5 * f.frobenius_sq(), f.clone()));
    let spec = LossSpec { kcr_weight: 0.5, regularizer: Some(&reg), cost_lambda: 0.2 };

    let (parts, grads) = net.loss_and_grad(&x, &labels, Mode::Soft(&noise), spec)?;
    println!("ce {:.5}  kcr {:.5}  cost {:.5}  total {:.5}\n", parts.ce, parts.kcr, parts.cost, parts.total);
    let loss = |n: &KcrNet| n.loss_and_grad(&x, &labels, Mode::Soft(&noise), spec).map(|r| r.0.total).unwrap_or(f64::NAN);

    let names = net.params.names();
    let tensors: Vec<Matrix> = net.params.tensors().into_iter().cloned().collect();
    let analytic = grads.params.tensors();
    for (i, name) in names.iter().enumerate() {
        let fd = finite_diff_grad(
            |m| {
                let mut probe = net.clone();
                *probe.params.tensors_mut()[i] = m.clone();
                loss(&probe)
            },
            &tensors[i],
            DEFAULT_FD_STEP,
        )?;
        println!("{name:<24} rel err {:.2e}", max_rel_error(analytic[i], &fd, 1e-6));
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
    )?;
    let got = Matrix::row_vector(grads.alpha[0].as_deref().unwrap_or(&[]));
    println!("{:<24} rel err {:.2e}", "blocks.0.alpha", max_rel_error(&got, &fd, 1e-6));
    Ok(())
}
