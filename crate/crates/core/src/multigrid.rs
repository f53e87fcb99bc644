//! Level transfers, the V-cycle and the outer stationary iteration.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dof_map::{zero_boundary, DofVector, GridLayout};
use crate::error::{invalid, Result};
use crate::reference_element::{default_shape_data, gauss_lobatto_points, lagrange_value};
use crate::smoothers::{local_update, Direction, LevelContext, Smoother, SmootherConfig, SmootherKind};
use crate::tensor::{apply_along, cube};

/// Embedding of the coarse 1D basis into the two child cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation1D {
    pub degree: usize,
    /// `(p+1) × (p+1)` row-major: row `a` = fine support point, column `b` =
    /// coarse basis function.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Prolongation1D {
    pub fn new(degree: usize) -> Result<Self> {
        let s = gauss_lobatto_points(degree)?;
        let n = degree + 1;
        let build = |shift: f64| {
            let mut e = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    e[a * n + b] = lagrange_value(&s, b, shift + 0.5 * s[a]);
                }
            }
            e
        };
        Ok(Self { degree, left: build(0.0), right: build(0.5) })
    }

    pub fn child(&self, right: bool) -> &[f64] {
        if right {
            &self.right
        } else {
            &self.left
        }
    }
}

fn transpose(m: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = m[i * n + j];
        }
    }
    t
}

/// Prolongation from level `ℓ` to `ℓ+1` and its transpose.
#[derive(Debug, Clone)]
pub struct Transfer {
    coarse: GridLayout,
    fine: GridLayout,
    embed: Prolongation1D,
    embed_t: [Vec<f64>; 2],
    coarse_offsets: Vec<usize>,
    fine_offsets: Vec<usize>,
    /// Per local cell DoF, its per-direction indices.
    local_index: Vec<[usize; 3]>,
}

impl Transfer {
    pub fn new(coarse: GridLayout) -> Result<Self> {
        let fine = GridLayout::new(coarse.dim(), coarse.degree(), coarse.level() + 1)?;
        let p = coarse.degree();
        let embed = Prolongation1D::new(p)?;
        let n = p + 1;
        let local_index = (0..n.pow(coarse.dim() as u32))
            .map(|mut lin| {
                let mut e = [0; 3];
                for ek in e.iter_mut().take(coarse.dim()) {
                    *ek = lin % n;
                    lin /= n;
                }
                e
            })
            .collect();
        Ok(Self {
            embed_t: [transpose(&embed.left, n), transpose(&embed.right, n)],
            embed,
            coarse_offsets: coarse.cell_offsets(),
            fine_offsets: fine.cell_offsets(),
            local_index,
            coarse,
            fine,
        })
    }

    pub fn coarse(&self) -> &GridLayout {
        &self.coarse
    }

    pub fn fine(&self) -> &GridLayout {
        &self.fine
    }

    /// Whether the fine cell at `corner` writes local DoF `k`.
    fn owns(&self, corner: &[usize; 3], k: usize) -> bool {
        let (p, last) = (self.fine.degree(), self.fine.cells_per_dim() - 1);
        let e = &self.local_index[k];
        (0..self.fine.dim()).all(|d| e[d] < p || corner[d] == last)
    }

    fn children(&self) -> impl Iterator<Item = ([usize; 3], usize, [usize; 3])> + '_ {
        let d = self.coarse.dim();
        self.coarse.cell_corners().flat_map(move |c| {
            (0..1usize << d).map(move |bits| {
                let mut f = [0; 3];
                for k in 0..d {
                    f[k] = 2 * c[k] + ((bits >> k) & 1);
                }
                (c, bits, f)
            })
        })
    }

    fn apply_child(&self, mats: [&[f64]; 2], bits: usize, src: &mut Vec<f64>, tmp: &mut Vec<f64>) {
        let (d, n) = (self.coarse.dim(), self.coarse.degree() + 1);
        let shape = cube(d, n);
        for axis in 0..d {
            apply_along(mats[(bits >> axis) & 1], n, n, axis, shape, src, tmp);
            std::mem::swap(src, tmp);
        }
    }

    pub fn prolongate(&self, coarse: &DofVector) -> Result<DofVector> {
        let mut fine = DofVector::zeros(self.fine);
        self.prolongate_into(coarse, &mut fine)?;
        Ok(fine)
    }

    /// `fine = P coarse`; every fine DoF is written by exactly one fine cell.
    pub fn prolongate_into(&self, coarse: &DofVector, fine: &mut DofVector) -> Result<()> {
        self.check(coarse, fine)?;
        let mats = [self.embed.left.as_slice(), self.embed.right.as_slice()];
        let nd = self.coarse_offsets.len();
        let (mut a, mut t) = (vec![0.0; nd], vec![0.0; nd]);
        let (cu, fu) = (coarse.as_slice(), fine.as_mut_slice());
        for (c, bits, f) in self.children() {
            let cb = self.coarse.cell_base(&c[..self.coarse.dim()]);
            for (x, off) in a.iter_mut().zip(&self.coarse_offsets) {
                *x = cu[cb + off];
            }
            self.apply_child(mats, bits, &mut a, &mut t);
            let fb = self.fine.cell_base(&f[..self.fine.dim()]);
            for (k, (x, off)) in a.iter().zip(&self.fine_offsets).enumerate() {
                if self.owns(&f, k) {
                    fu[fb + off] = *x;
                }
            }
        }
        zero_boundary(&self.fine, fu);
        Ok(())
    }

    pub fn restrict(&self, fine: &DofVector) -> Result<DofVector> {
        let mut coarse = DofVector::zeros(self.coarse);
        self.restrict_into(fine, &mut coarse)?;
        Ok(coarse)
    }

    /// `coarse = Pᵀ fine` on the boundary-constrained spaces.
    pub fn restrict_into(&self, fine: &DofVector, coarse: &mut DofVector) -> Result<()> {
        self.check(coarse, fine)?;
        let mats = [self.embed_t[0].as_slice(), self.embed_t[1].as_slice()];
        let nd = self.coarse_offsets.len();
        let (mut a, mut t) = (vec![0.0; nd], vec![0.0; nd]);
        let (fu, cu) = (fine.as_slice(), coarse.as_mut_slice());
        cu.fill(0.0);
        for (c, bits, f) in self.children() {
            let fb = self.fine.cell_base(&f[..self.fine.dim()]);
            for (k, (x, off)) in a.iter_mut().zip(&self.fine_offsets).enumerate() {
                let g = fb + off;
                *x = if self.owns(&f, k) && !self.fine.is_boundary(g) { fu[g] } else { 0.0 };
            }
            self.apply_child(mats, bits, &mut a, &mut t);
            let cb = self.coarse.cell_base(&c[..self.coarse.dim()]);
            for (x, off) in a.iter().zip(&self.coarse_offsets) {
                cu[cb + off] += x;
            }
        }
        zero_boundary(&self.coarse, cu);
        Ok(())
    }

    fn check(&self, coarse: &DofVector, fine: &DofVector) -> Result<()> {
        if coarse.layout() != &self.coarse || fine.layout() != &self.fine {
            return invalid(format!(
                "transfer {}→{} called with vectors on levels {} and {}",
                self.coarse.level(),
                self.fine.level(),
                coarse.level(),
                fine.level()
            ));
        }
        Ok(())
    }
}

/// Free-function form of [`Transfer::prolongate`].
pub fn prolongate(coarse: &DofVector) -> Result<DofVector> {
    Transfer::new(*coarse.layout())?.prolongate(coarse)
}

/// Free-function form of [`Transfer::restrict`]; the result lives on
/// `fine.level() − 1`.
pub fn restrict(fine: &DofVector) -> Result<DofVector> {
    let l = fine.layout();
    if l.level() == 0 {
        return invalid("cannot restrict from level 0");
    }
    Transfer::new(GridLayout::new(l.dim(), l.degree(), l.level() - 1)?)?.restrict(fine)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostOrder {
    Forward,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub post_order: PostOrder,
    /// Relative residual reduction `‖r_k‖ / ‖r_0‖` to reach.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub smoother: SmootherConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            pre_smooth: 1,
            post_smooth: 1,
            post_order: PostOrder::Reversed,
            tolerance: 1e-12,
            max_iterations: 100,
            smoother: SmootherConfig::new(SmootherKind::CombinedColorized),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return invalid(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.pre_smooth + self.post_smooth == 0 {
            return invalid("at least one smoothing step is required");
        }
        if self.smoother.kind == SmootherKind::Naive {
            return invalid("the naive smoother is a test oracle and cannot drive the multigrid solver");
        }
        Ok(())
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub smoothing: f64,
    pub residual: f64,
    pub transfer: f64,
    pub coarse: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.smoothing + self.residual + self.transfer + self.coarse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// `‖r_k‖₂` for `k = 0..=iterations`.
    pub residuals: Vec<f64>,
    pub timings: Timings,
    /// Smoothing sweeps on the finest level.
    pub fine_sweeps: usize,
    /// Residual evaluations on the finest level.
    pub fine_residuals: usize,
}

impl SolveReport {
    pub fn initial_residual(&self) -> f64 {
        self.residuals[0]
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("at least the initial residual")
    }

    pub fn relative_residual(&self) -> f64 {
        let r0 = self.initial_residual();
        if r0 == 0.0 {
            0.0
        } else {
            self.final_residual() / r0
        }
    }
}

struct Level {
    ctx: LevelContext,
    smoother: Option<Smoother>,
    /// From the next coarser level to this one.
    transfer: Option<Transfer>,
}

/// Geometric multigrid on levels `0..=max_level`.
pub struct MultigridSolver {
    config: SolveConfig,
    levels: Vec<Level>,
}

impl MultigridSolver {
    pub fn new(dim: usize, degree: usize, max_level: usize, config: SolveConfig) -> Result<Self> {
        config.validate()?;
        let mut levels = Vec::with_capacity(max_level + 1);
        for l in 0..=max_level {
            let ctx = LevelContext::new(dim, degree, l)?;
            let smoother = if l > 0 { Some(Smoother::new(&ctx, config.smoother)?) } else { None };
            let transfer = if l > 0 { Some(Transfer::new(levels_grid(&levels, l - 1))?) } else { None };
            levels.push(Level { ctx, smoother, transfer });
        }
        Ok(Self { config, levels })
    }

    #[doc(hidden)]
    pub fn inject_sign_flip(&mut self) {
        for level in &mut self.levels {
            level.ctx.inject_sign_flip();
        }
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> &LevelContext {
        &self.levels[l].ctx
    }

    pub fn finest(&self) -> &LevelContext {
        &self.levels[self.max_level()].ctx
    }

    /// One V-cycle on `level`, improving `u` in place.
    pub fn v_cycle(&mut self, level: usize, u: &mut DofVector, b: &DofVector) -> Result<Timings> {
        if level > self.max_level() {
            return invalid(format!("level {level} exceeds the hierarchy ({})", self.max_level()));
        }
        for v in [&*u, b] {
            if v.layout() != &self.levels[level].ctx.grid {
                return invalid("vector does not belong to the requested level");
            }
        }
        let mut t = Timings::default();
        self.cycle(level, u, b, &mut t)?;
        Ok(t)
    }

    fn cycle(&mut self, l: usize, u: &mut DofVector, b: &DofVector, t: &mut Timings) -> Result<()> {
        let (pre, post) = (self.config.pre_smooth, self.config.post_smooth);
        let post_dir = match self.config.post_order {
            PostOrder::Forward => Direction::Forward,
            PostOrder::Reversed => Direction::Reverse,
        };
        if l == 0 {
            let start = Instant::now();
            let ctx = &self.levels[0].ctx;
            local_update(ctx, &ctx.patch_list()?[0], u, b)?;
            t.coarse += start.elapsed().as_secs_f64();
            return Ok(());
        }
        self.smooth(l, u, b, pre, Direction::Forward, t)?;

        let start = Instant::now();
        let r = self.levels[l].ctx.operator.global_residual(u, b);
        t.residual += start.elapsed().as_secs_f64();

        let start = Instant::now();
        let transfer = self.levels[l].transfer.as_ref().expect("transfer on levels > 0");
        let bc = transfer.restrict(&r)?;
        t.transfer += start.elapsed().as_secs_f64();

        let mut uc = DofVector::zeros(*bc.layout());
        self.cycle(l - 1, &mut uc, &bc, t)?;

        let start = Instant::now();
        let transfer = self.levels[l].transfer.as_ref().expect("transfer on levels > 0");
        let correction = transfer.prolongate(&uc)?;
        u.axpy(1.0, &correction);
        t.transfer += start.elapsed().as_secs_f64();

        self.smooth(l, u, b, post, post_dir, t)
    }

    fn smooth(
        &mut self,
        l: usize,
        u: &mut DofVector,
        b: &DofVector,
        steps: usize,
        dir: Direction,
        t: &mut Timings,
    ) -> Result<()> {
        let Level { ctx, smoother, .. } = &mut self.levels[l];
        let smoother = smoother.as_mut().expect("smoother on levels > 0");
        let start = Instant::now();
        for _ in 0..steps {
            smoother.sweep(ctx, u, b, dir)?;
        }
        t.smoothing += start.elapsed().as_secs_f64();
        Ok(())
    }

    /// Stationary iteration `u ← u + V(b − A u)` on the finest level until
    /// `‖r_k‖₂ ≤ tol · ‖r_0‖₂` or the iteration limit.
    pub fn solve(&mut self, u: &mut DofVector, b: &DofVector) -> Result<SolveReport> {
        let top = self.max_level();
        let mut timings = Timings::default();
        let start = Instant::now();
        let mut norm = self.finest().operator.global_residual(u, b).norm_l2();
        timings.residual += start.elapsed().as_secs_f64();
        let r0 = norm;
        let mut residuals = vec![r0];
        let mut iterations = 0;
        let (mut sweeps, mut fine_residuals) = (0, 1);
        while norm > self.config.tolerance * r0 && iterations < self.config.max_iterations {
            let t = self.v_cycle(top, u, b)?;
            timings.smoothing += t.smoothing;
            timings.residual += t.residual;
            timings.transfer += t.transfer;
            timings.coarse += t.coarse;
            if top > 0 {
                sweeps += self.config.pre_smooth + self.config.post_smooth;
                fine_residuals += 1;
            }
            let start = Instant::now();
            norm = self.finest().operator.global_residual(u, b).norm_l2();
            timings.residual += start.elapsed().as_secs_f64();
            fine_residuals += 1;
            residuals.push(norm);
            iterations += 1;
            if !norm.is_finite() {
                break;
            }
        }
        Ok(SolveReport {
            iterations,
            converged: norm <= self.config.tolerance * r0,
            residuals,
            timings,
            fine_sweeps: sweeps,
            fine_residuals,
        })
    }
}

fn levels_grid(levels: &[Level], l: usize) -> GridLayout {
    levels[l].ctx.grid
}

/// `b_i = ∫ f φ_i` by cell-wise Gauss quadrature; boundary entries zero.
pub fn assemble_rhs(grid: GridLayout, f: impl Fn(&[f64]) -> f64) -> Result<DofVector> {
    let (d, p) = (grid.dim(), grid.degree());
    let shape = default_shape_data(p)?;
    let (n, nq) = (p + 1, shape.n_q());
    let h = grid.cell_size();
    let mut bt = vec![0.0; n * nq];
    for b in 0..n {
        for q in 0..nq {
            bt[b * nq + q] = shape.value(b, q);
        }
    }
    let qp = &shape.quadrature.points;
    let w = &shape.quadrature.weights;
    let total = nq.pow(d as u32);
    let offsets = grid.cell_offsets();
    let mut out = DofVector::zeros(grid);
    let data = out.as_mut_slice();
    let mut a = vec![0.0; total.max(offsets.len())];
    let mut t = vec![0.0; a.len()];
    for corner in grid.cell_corners() {
        for (lin, x) in a.iter_mut().enumerate().take(total) {
            let mut pos = [0.0; 3];
            let mut weight = h.powi(d as i32);
            let mut rem = lin;
            for k in 0..d {
                let q = rem % nq;
                rem /= nq;
                pos[k] = (corner[k] as f64 + qp[q]) * h;
                weight *= w[q];
            }
            *x = weight * f(&pos[..d]);
        }
        let mut s = cube(d, nq);
        for axis in 0..d {
            apply_along(&bt, n, nq, axis, s, &a, &mut t);
            s[axis] = n;
            std::mem::swap(&mut a, &mut t);
        }
        let base = grid.cell_base(&corner[..d]);
        for (x, off) in a.iter().zip(&offsets) {
            data[base + off] += x;
        }
    }
    zero_boundary(&grid, data);
    Ok(out)
}

/// Right-hand side for `f ≡ 1`.
pub fn unit_rhs(grid: GridLayout) -> Result<DofVector> {
    assemble_rhs(grid, |_| 1.0)
}
