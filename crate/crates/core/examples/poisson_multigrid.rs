//! Solve -Δu = 1 on the unit square with homogeneous Dirichlet data.
//!
//! Usage: `cargo run --release --example poisson_multigrid -- [degree] [level]`

use patchmg::dof_map::DofVector;
use patchmg::multigrid::{unit_rhs, MultigridSolver, SolveConfig};

fn main() -> patchmg::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let degree = args.next().transpose().ok().flatten().unwrap_or(3);
    let level = args.next().transpose().ok().flatten().unwrap_or(5);

    let mut solver = MultigridSolver::new(2, degree, level, SolveConfig::default())?;
    let grid = solver.finest().grid;
    let b = unit_rhs(grid)?;
    let mut u = DofVector::zeros(grid);
    let report = solver.solve(&mut u, &b)?;

    println!("p={degree} level={level}: {} DoFs", grid.len());
    for (k, r) in report.residuals.iter().enumerate() {
        println!("  it {k:>2}  |r| = {r:.3e}");
    }
    let centre = grid.index(&[grid.nodes_per_dim() / 2, grid.nodes_per_dim() / 2]);
    // series value of the exact solution at the centre: 0.0736713...
    println!("u(0.5, 0.5) = {:.8}", u.as_slice()[centre]);
    let t = report.timings;
    println!(
        "time {:.3}s (smoothing {:.3}, residual {:.3}, transfer {:.3}, coarse {:.4})",
        t.total(),
        t.smoothing,
        t.residual,
        t.transfer,
        t.coarse
    );
    Ok(())
}
