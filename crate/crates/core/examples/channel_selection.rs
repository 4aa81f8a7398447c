//! Gumbel-sigmoid soft masks, hardening, and the FLOPs model of a pruned MLP.

use kcr::selection::{flops_block, Architecture, ChannelSelector, CostModel};
use kcr::Rng;

fn main() -> kcr::Result<()> {
    let mut sel = ChannelSelector::new(8, 0.0, 4.5, 2)?;
    sel.alpha = vec![2.0, 1.0, 0.5, 0.0, -0.2, -0.5, -1.0, -3.0];
    let mut rng = Rng::new(5, 3);

    for tau in [4.5, 1.0, 0.1] {
        sel.tau = tau;
        let soft = sel.soft_mask(&mut rng);
        let mean = sel.expected_mask();
        println!("tau {tau:<4} soft {:?}", soft.iter().map(|g| format!("{g:.2}")).collect::<Vec<_>>());
        println!("         mean {:?}", mean.iter().map(|g| format!("{g:.2}")).collect::<Vec<_>>());
    }

    let hard = sel.harden();
    println!("\nhard mask {:?}, width {}", hard.g, hard.d_tilde());

    let cost = CostModel::new(vec![(2, &sel)], 0.3);
    println!("hard flops {}  soft cost {:.1}  search term {:.4}", cost.hard_flops(), cost.soft_cost(), cost.search_cost_term()?);
    println!("d_alpha of lambda ln(cost): {:?}", cost.search_cost_grad()[0].iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>());

    let arch = Architecture::from_masks(&[hard.clone(), hard], 2);
    println!("\ntwo blocks: {} flops = 2 x {}", arch.total_flops, flops_block(2, 4));
    println!("full-width 64-channel block: {}", flops_block(2, 64));
    Ok(())
}
