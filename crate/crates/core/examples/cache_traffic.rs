//! Simulated memory traffic of one sweep through an LRU cache.

use patchmg::bench::default_cache_lines;
use patchmg::mesh::PatchOrdering;
use patchmg::smoothers::{LevelContext, SmootherConfig, SmootherKind};
use patchmg::traffic::{simulate_sweep, CacheConfig, DEFAULT_LINE_ELEMS};

fn main() -> patchmg::Result<()> {
    let ctx = LevelContext::new(2, 5, 5)?;
    let lines = default_cache_lines(ctx.n_dofs(), DEFAULT_LINE_ELEMS);
    let cache = CacheConfig::new(lines, DEFAULT_LINE_ELEMS)?;
    println!("{} DoFs, cache of {lines} lines x {DEFAULT_LINE_ELEMS} doubles", ctx.n_dofs());

    for ordering in [PatchOrdering::ZCurve, PatchOrdering::Hierarchical] {
        for kind in [SmootherKind::Combined, SmootherKind::SeparatedColorized, SmootherKind::CombinedColorized] {
            let config = SmootherConfig::new(kind).with_ordering(ordering);
            let schedule = config.schedule(2, ctx.level())?;
            let r = simulate_sweep(&ctx, &config, &schedule, &cache, false)?;
            println!("{:<14} {:<20} {:>7.2} doubles/DoF", ordering.name(), kind.name(), r.doubles_per_dof);
        }
    }
    for nb in [1, 4, 16, 64, 256] {
        let config = SmootherConfig::new(SmootherKind::Batched).with_batch_size(nb);
        let schedule = config.schedule(2, ctx.level())?;
        let r = simulate_sweep(&ctx, &config, &schedule, &cache, false)?;
        println!("batched n_B={nb:<4}                   {:>7.2} doubles/DoF", r.doubles_per_dof);
    }
    Ok(())
}
