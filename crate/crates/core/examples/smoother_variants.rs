//! One sweep of every smoother variant from the same state.

use patchmg::dof_map::DofVector;
use patchmg::smoothers::{smooth, Direction, LevelContext, SmootherConfig, SmootherKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> patchmg::Result<()> {
    let ctx = LevelContext::new(2, 3, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u0 = DofVector::random(ctx.grid, &mut rng);
    let b = DofVector::random(ctx.grid, &mut rng);
    let r0 = ctx.operator.global_residual(&u0, &b).norm_l2();
    println!("{} DoFs, initial residual {r0:.4e}", ctx.n_dofs());

    let mut reference: Option<DofVector> = None;
    for kind in SmootherKind::ALL {
        let config = match kind {
            SmootherKind::Batched => SmootherConfig::new(kind).with_batch_size(8),
            SmootherKind::Richardson => SmootherConfig::new(kind).with_omega(1e-3),
            _ => SmootherConfig::new(kind),
        };
        let schedule = config.schedule(2, ctx.level())?;
        let mut u = u0.clone();
        let stats = smooth(&ctx, &config, &schedule, &mut u, &b, Direction::Forward)?;
        let r = ctx.operator.global_residual(&u, &b).norm_l2();
        let diff = reference.as_ref().map_or(0.0, |v| v.max_abs_diff(&u));
        if kind == SmootherKind::Naive {
            reference = Some(u);
        }
        println!(
            "{:<20} residual {r:.4e}  cell applies {:>6}  global residuals {:>4}  |u - naive| {diff:.1e}",
            kind.name(),
            stats.cell_applies,
            stats.global_residuals
        );
    }
    Ok(())
}
