//! Self-checks behind `patchmg validate`: every fast kernel against a
//! brute-force reference on small levels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dense_oracle::{assemble_dense, dense_cell_matrix, dense_patch_matrix, discrete_solution, from_interior, to_interior};
use crate::dof_map::DofVector;
use crate::error::Result;
use crate::fdm::{apply_fdm, build_fdm};
use crate::laplace::{cell_apply, LaplaceOperator};
use crate::multigrid::{unit_rhs, MultigridSolver, SolveConfig, Transfer};
use crate::smoothers::{local_solve, smooth, Direction, LevelContext, SmootherConfig, SmootherKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Negates the cell operator everywhere it is built; every suite that
    /// compares against an independent reference must then fail.
    pub inject_sign_flip: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), passed: 0, failed: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
            self.failures.push(what());
        }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

impl ValidationReport {
    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let tag = if s.ok() { "ok  " } else { "FAIL" };
            out.push_str(&format!("{tag} {:<22} {:>3} passed {:>3} failed\n", s.name, s.passed, s.failed));
            for f in &s.failures {
                out.push_str(&format!("       {f}\n"));
            }
        }
        out.push_str(if self.passed { "validation passed\n" } else { "validation FAILED\n" });
        out
    }
}

fn context(d: usize, p: usize, l: usize, opts: &ValidateOptions) -> Result<LevelContext> {
    let mut ctx = LevelContext::new(d, p, l)?;
    if opts.inject_sign_flip {
        ctx.inject_sign_flip();
    }
    Ok(ctx)
}

fn rel(err: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn cell_operator(opts: &ValidateOptions, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = SuiteResult::new("cell_operator");
    for d in [2, 3] {
        for p in 1..=5 {
            let ctx = context(d, p, 0, opts)?;
            let data = ctx.operator.cell_data();
            let dense = dense_cell_matrix(d, p, data.cell_size())?;
            let u = DofVector::random(ctx.grid, rng).into_vec();
            let u = &u[..data.n_dofs()];
            let want = dense.matvec(u);
            let e = rel(max_diff(&cell_apply(data, u), &want), max_abs(&want));
            s.check(e < 1e-12, || format!("d={d} p={p}: relative error {e:.2e}"));
        }
    }
    Ok(s)
}

fn vmult_dense(opts: &ValidateOptions, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = SuiteResult::new("vmult_dense");
    for (d, p, l) in [(2, 1, 2), (2, 3, 1), (2, 5, 1), (3, 2, 1), (3, 1, 2)] {
        let ctx = context(d, p, l, opts)?;
        let u = DofVector::random(ctx.grid, rng);
        let a = assemble_dense(d, p, l)?;
        let want = from_interior(ctx.grid, &a.matvec(&to_interior(&u)))?;
        let e = rel(ctx.operator.apply(&u).max_abs_diff(&want), want.norm_inf());
        s.check(e < 1e-12, || format!("d={d} p={p} l={l}: relative error {e:.2e}"));
    }
    Ok(s)
}

fn fdm_inverse(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = SuiteResult::new("fdm_inverse");
    for d in [2, 3] {
        for p in 1..=4 {
            let h = 0.25;
            let a = dense_patch_matrix(p, h, d)?;
            let fdm = build_fdm(p, h, d)?;
            let x: Vec<f64> = (0..a.size()).map(|_| rand::Rng::gen_range(rng, -1.0..1.0)).collect();
            let back = apply_fdm(&fdm, &a.matvec(&x))?;
            let e = rel(max_diff(&back, &x), max_abs(&x));
            s.check(e < 1e-10, || format!("d={d} p={p}: relative error {e:.2e}"));
        }
    }
    Ok(s)
}

fn sweep(ctx: &LevelContext, config: SmootherConfig, u: &DofVector, b: &DofVector) -> Result<DofVector> {
    let schedule = config.schedule(ctx.grid.dim(), ctx.level())?;
    let mut u = u.clone();
    smooth(ctx, &config, &schedule, &mut u, b, Direction::Forward)?;
    Ok(u)
}

fn smoother_equivalence(opts: &ValidateOptions, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = SuiteResult::new("smoother_equivalence");
    for (d, p, l) in [(2, 2, 2), (3, 1, 1)] {
        let ctx = context(d, p, l, opts)?;
        let u = DofVector::random(ctx.grid, rng);
        let b = DofVector::random(ctx.grid, rng);
        let scale = u.norm_inf().max(1.0);
        let naive = sweep(&ctx, SmootherConfig::new(SmootherKind::Naive), &u, &b)?;
        let combined = sweep(&ctx, SmootherConfig::new(SmootherKind::Combined), &u, &b)?;
        let e = naive.max_abs_diff(&combined) / scale;
        s.check(e < 1e-12, || format!("d={d} p={p} l={l}: naive vs combined {e:.2e}"));
        let sep = sweep(&ctx, SmootherConfig::new(SmootherKind::SeparatedColorized), &u, &b)?;
        let cc = sweep(&ctx, SmootherConfig::new(SmootherKind::CombinedColorized), &u, &b)?;
        let e = sep.max_abs_diff(&cc) / scale;
        s.check(e < 1e-12, || format!("d={d} p={p} l={l}: separated vs combined colorized {e:.2e}"));
        let big = sweep(&ctx, SmootherConfig::new(SmootherKind::Batched).with_batch_size(1 << 20), &u, &b)?;
        s.check(big == cc, || format!("d={d} p={p} l={l}: single batch differs from colorized"));
    }
    Ok(s)
}

fn parallel_determinism(opts: &ValidateOptions, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = SuiteResult::new("parallel_determinism");
    let ctx = context(2, 2, 3, opts)?;
    let u = DofVector::random(ctx.grid, rng);
    let b = DofVector::random(ctx.grid, rng);
    for nb in [1, 4, 32] {
        let base = SmootherConfig::new(SmootherKind::Batched).with_batch_size(nb);
        let serial = sweep(&ctx, base, &u, &b)?;
        for t in [2, 3, 4] {
            let par = sweep(&ctx, base.with_threads(t), &u, &b)?;
            s.check(par == serial, || format!("n_B={nb} threads={t}: not bitwise equal to serial"));
        }
    }
    Ok(s)
}

fn transfer_adjoint(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = SuiteResult::new("transfer_adjoint");
    for (d, p, l) in [(2, 1, 1), (2, 3, 1), (3, 2, 0)] {
        let coarse = LevelContext::new(d, p, l)?.grid;
        let t = Transfer::new(coarse)?;
        let mut x = DofVector::random(coarse, rng);
        x.zero_boundary();
        let mut y = DofVector::random(*t.fine(), rng);
        y.zero_boundary();
        let lhs = t.prolongate(&x)?.dot(&y);
        let rhs = x.dot(&t.restrict(&y)?);
        let e = (lhs - rhs).abs() / lhs.abs().max(1.0);
        s.check(e < 1e-12, || format!("d={d} p={p} l={l}: <Px,y> - <x,P^T y> = {e:.2e}"));
        let fine_op = LaplaceOperator::new(*t.fine())?;
        let galerkin = t.restrict(&fine_op.apply(&t.prolongate(&x)?))?;
        let want = LaplaceOperator::new(coarse)?.apply(&x);
        let e = rel(galerkin.max_abs_diff(&want), want.norm_inf());
        s.check(e < 1e-11, || format!("d={d} p={p} l={l}: P^T A P differs from the coarse operator by {e:.2e}"));
    }
    Ok(s)
}

fn projection(opts: &ValidateOptions, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = SuiteResult::new("projection");
    for (d, p, l) in [(2, 3, 1), (3, 2, 1)] {
        let ctx = context(d, p, l, opts)?;
        let mut u = DofVector::random(ctx.grid, rng);
        let b = DofVector::random(ctx.grid, rng);
        let scale = b.norm_inf();
        for patch in ctx.patch_list()? {
            let r = ctx.operator.global_residual(&u, &b);
            local_solve(&ctx, &patch, &r, &mut u)?;
            let local = ctx.operator.patch_residual(&ctx.patches, &patch, &u, &b);
            let e = max_abs(&local) / scale;
            s.check(e < 1e-10, || format!("d={d} p={p} l={l} patch {patch}: local residual {e:.2e}"));
        }
    }
    Ok(s)
}

fn multigrid(opts: &ValidateOptions) -> Result<SuiteResult> {
    let mut s = SuiteResult::new("multigrid");
    for (d, p, l) in [(2, 2, 2), (2, 4, 1), (3, 1, 2)] {
        let mut solver = MultigridSolver::new(d, p, l, SolveConfig { max_iterations: 30, ..SolveConfig::default() })?;
        if opts.inject_sign_flip {
            solver.inject_sign_flip();
        }
        let b = unit_rhs(solver.finest().grid)?;
        let mut u = DofVector::zeros(solver.finest().grid);
        let report = solver.solve(&mut u, &b)?;
        s.check(report.converged && report.iterations <= 20, || {
            format!("d={d} p={p} l={l}: {} iterations, converged={}", report.iterations, report.converged)
        });
        let exact = discrete_solution(&b)?;
        let e = rel(u.max_abs_diff(&exact), exact.norm_inf());
        s.check(e < 1e-9, || format!("d={d} p={p} l={l}: distance to direct solution {e:.2e}"));
    }
    Ok(s)
}

/// Runs every suite. Errors are reserved for setup failures; numerical
/// mismatches are reported in the result.
pub fn cmd_validate(opts: &ValidateOptions) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let suites = vec![
        cell_operator(opts, &mut rng)?,
        vmult_dense(opts, &mut rng)?,
        fdm_inverse(&mut rng)?,
        smoother_equivalence(opts, &mut rng)?,
        parallel_determinism(opts, &mut rng)?,
        transfer_adjoint(&mut rng)?,
        projection(opts, &mut rng)?,
        multigrid(opts)?,
    ];
    Ok(ValidationReport { schema_version: SCHEMA_VERSION, passed: suites.iter().all(SuiteResult::ok), suites })
}
