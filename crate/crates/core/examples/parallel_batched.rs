//! Batched smoother on several threads; results are bitwise identical to
//! the serial sweep for every thread count.

use std::time::Instant;

use patchmg::dof_map::DofVector;
use patchmg::smoothers::{smooth, Direction, LevelContext, SmootherConfig, SmootherKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> patchmg::Result<()> {
    let ctx = LevelContext::new(2, 4, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u0 = DofVector::random(ctx.grid, &mut rng);
    let b = DofVector::random(ctx.grid, &mut rng);
    for nb in [4, 64] {
        let base = SmootherConfig::new(SmootherKind::Batched).with_batch_size(nb);
        let schedule = base.schedule(2, ctx.level())?;
        let mut serial = u0.clone();
        smooth(&ctx, &base, &schedule, &mut serial, &b, Direction::Forward)?;
        for threads in [1, 2, 4] {
            let config = base.with_threads(threads);
            let mut u = u0.clone();
            let t = Instant::now();
            smooth(&ctx, &config, &schedule, &mut u, &b, Direction::Forward)?;
            println!(
                "n_B={nb:<3} threads={threads}  {:.3} ms  identical to serial: {}",
                t.elapsed().as_secs_f64() * 1e3,
                u == serial
            );
        }
    }
    Ok(())
}
