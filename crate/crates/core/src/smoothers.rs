//! Multiplicative vertex-patch smoothers over a [`Schedule`], and the
//! Richardson baseline.

use std::fmt;
use std::str::FromStr;
use std::sync::Barrier;

use serde::{Deserialize, Serialize};

use crate::dof_map::{DofVector, GridLayout, PatchLayout};
use crate::error::{invalid, Error, Result};
use crate::fdm::{build_fdm, FdmDecomposition};
use crate::instrument::{AccessObserver, ArrayId, NoObserver, SharedSolution, SolutionAccess};
use crate::laplace::{LaplaceOperator, PatchScratch};
use crate::mesh::{MeshHierarchy, PatchId, PatchOrdering, Schedule, COLOR_BY_COLOR};

/// Largest level size on which the naive smoother may run.
pub const NAIVE_MAX_DOFS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    /// Global residual before every local solve.
    Naive,
    /// Local residual and local solve fused, one patch at a time.
    Combined,
    /// One global residual per color, then all local solves of the color.
    SeparatedColorized,
    /// Fused local updates, color by color.
    CombinedColorized,
    /// Fused local updates in batches of a color, parallel within an entry.
    Batched,
    Richardson,
}

impl SmootherKind {
    pub const ALL: [SmootherKind; 6] = [
        SmootherKind::Naive,
        SmootherKind::Combined,
        SmootherKind::SeparatedColorized,
        SmootherKind::CombinedColorized,
        SmootherKind::Batched,
        SmootherKind::Richardson,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SmootherKind::Naive => "naive",
            SmootherKind::Combined => "combined",
            SmootherKind::SeparatedColorized => "separated_colorized",
            SmootherKind::CombinedColorized => "combined_colorized",
            SmootherKind::Batched => "batched",
            SmootherKind::Richardson => "richardson",
        }
    }

    pub fn is_patch_smoother(&self) -> bool {
        !matches!(self, SmootherKind::Richardson)
    }
}

impl fmt::Display for SmootherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SmootherKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        SmootherKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown smoother variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub kind: SmootherKind,
    pub ordering: PatchOrdering,
    /// Patches per color in one batch; [`COLOR_BY_COLOR`] for a single batch.
    pub batch_size: usize,
    pub threads: usize,
    /// Relaxation weight, Richardson only.
    pub omega: f64,
}

impl SmootherConfig {
    pub fn new(kind: SmootherKind) -> Self {
        Self { kind, ordering: PatchOrdering::ZCurve, batch_size: COLOR_BY_COLOR, threads: 1, omega: 0.0 }
    }

    pub fn with_ordering(mut self, ordering: PatchOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn schedule(&self, dim: usize, level: usize) -> Result<Schedule> {
        let batch = if self.kind == SmootherKind::Batched { self.batch_size } else { COLOR_BY_COLOR };
        Schedule::new(&MeshHierarchy::new(dim, level)?, level, self.ordering, batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Forward,
    /// Every loop of the sweep traversed backwards.
    Reverse,
}

/// Work counters of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepStats {
    pub patches: u64,
    pub cell_applies: u64,
    pub global_residuals: u64,
}

/// Everything level-constant the smoothers need.
#[derive(Debug, Clone)]
pub struct LevelContext {
    pub grid: GridLayout,
    pub operator: LaplaceOperator,
    pub patches: PatchLayout,
    pub fdm: FdmDecomposition,
}

impl LevelContext {
    pub fn new(dim: usize, degree: usize, level: usize) -> Result<Self> {
        let grid = GridLayout::new(dim, degree, level)?;
        Ok(Self {
            grid,
            operator: LaplaceOperator::new(grid)?,
            patches: PatchLayout::new(grid),
            fdm: build_fdm(degree, grid.cell_size(), dim)?,
        })
    }

    pub fn level(&self) -> usize {
        self.grid.level()
    }

    /// Fault injection for mutation testing of the validation suite.
    #[doc(hidden)]
    pub fn inject_sign_flip(&mut self) {
        self.operator.inject_sign_flip();
    }

    pub fn n_dofs(&self) -> usize {
        self.grid.len()
    }

    pub fn scratch(&self) -> PatchScratch {
        PatchScratch::new(&self.operator, &self.patches)
    }

    pub fn patch_list(&self) -> Result<Vec<PatchId>> {
        MeshHierarchy::new(self.grid.dim(), self.level())?.enumerate_patches(self.level())
    }

    fn check_vector(&self, v: &DofVector) -> Result<()> {
        if v.layout() != &self.grid {
            return invalid(format!(
                "vector on level {} does not match level {}",
                v.level(),
                self.level()
            ));
        }
        Ok(())
    }

    fn check_patch(&self, patch: &PatchId) -> Result<()> {
        if patch.level() != self.level() || patch.dim() != self.grid.dim() {
            return invalid(format!("patch {patch} does not belong to this level"));
        }
        Ok(())
    }
}

fn scatter_correction<S, O>(ctx: &LevelContext, base: usize, correction: &[f64], u: &mut S, obs: &mut O)
where
    S: SolutionAccess + ?Sized,
    O: AccessObserver,
{
    for &(off, i) in ctx.patches.masked_scatter() {
        u.add(base + off, correction[i]);
        if O::ENABLED {
            obs.write(ArrayId::Solution, base + off);
        }
    }
}

pub(crate) fn local_update_core<S, O>(
    ctx: &LevelContext,
    patch: &PatchId,
    u: &mut S,
    b: &[f64],
    ws: &mut PatchScratch,
    obs: &mut O,
) where
    S: SolutionAccess + ?Sized,
    O: AccessObserver,
{
    ctx.operator.patch_residual_core(&ctx.patches, patch, &*u, b, ws, obs);
    ctx.fdm.apply_into(&ws.residual, &mut ws.correction, &mut ws.fdm_a);
    scatter_correction(ctx, ctx.patches.base(patch), &ws.correction, u, obs);
}

pub(crate) fn local_solve_core<O: AccessObserver>(
    ctx: &LevelContext,
    patch: &PatchId,
    r: &[f64],
    u: &mut [f64],
    ws: &mut PatchScratch,
    obs: &mut O,
) {
    let base = ctx.patches.base(patch);
    for (x, off) in ws.residual.iter_mut().zip(ctx.patches.interior_offsets()) {
        *x = r[base + off];
        if O::ENABLED {
            obs.read(ArrayId::Residual, base + off);
        }
    }
    ctx.fdm.apply_into(&ws.residual, &mut ws.correction, &mut ws.fdm_a);
    scatter_correction(ctx, base, &ws.correction, u, obs);
}

/// `u += Π_jᵀ A_j⁻¹ Π_j r`.
pub fn local_solve(ctx: &LevelContext, patch: &PatchId, r: &DofVector, u: &mut DofVector) -> Result<()> {
    ctx.check_patch(patch)?;
    ctx.check_vector(r)?;
    ctx.check_vector(u)?;
    let mut ws = ctx.scratch();
    local_solve_core(ctx, patch, r.as_slice(), u.as_mut_slice(), &mut ws, &mut NoObserver);
    Ok(())
}

/// `u += Π_jᵀ A_j⁻¹ (Π_j b − Π_j Ā_j Π̄_j u)`.
pub fn local_update(ctx: &LevelContext, patch: &PatchId, u: &mut DofVector, b: &DofVector) -> Result<()> {
    ctx.check_patch(patch)?;
    ctx.check_vector(u)?;
    ctx.check_vector(b)?;
    let mut ws = ctx.scratch();
    local_update_core(ctx, patch, u.as_mut_slice(), b.as_slice(), &mut ws, &mut NoObserver);
    Ok(())
}

/// `u += ω (b − A u)`.
pub fn richardson(ctx: &LevelContext, u: &mut DofVector, b: &DofVector, omega: f64) -> Result<()> {
    ctx.check_vector(u)?;
    ctx.check_vector(b)?;
    if !(omega >= 0.0) {
        return invalid(format!("relaxation weight must be non-negative, got {omega}"));
    }
    let mut r = vec![0.0; ctx.n_dofs()];
    richardson_core(ctx, u.as_mut_slice(), b.as_slice(), omega, &mut r, &mut NoObserver);
    Ok(())
}

fn richardson_core<O: AccessObserver>(
    ctx: &LevelContext,
    u: &mut [f64],
    b: &[f64],
    omega: f64,
    r: &mut [f64],
    obs: &mut O,
) -> u64 {
    let cells = ctx.operator.residual_observed(u, b, r, obs);
    for (i, (x, ri)) in u.iter_mut().zip(r.iter()).enumerate() {
        *x += omega * ri;
        if O::ENABLED {
            obs.read(ArrayId::Residual, i);
            obs.write(ArrayId::Solution, i);
        }
    }
    cells
}

/// Checks that `schedule` can drive `config` on the level of `ctx`.
pub fn validate_schedule(ctx: &LevelContext, config: &SmootherConfig, schedule: &Schedule) -> Result<()> {
    if schedule.level() != ctx.level() || schedule.dim() != ctx.grid.dim() {
        return invalid(format!(
            "schedule for dim={} level={} used on dim={} level={}",
            schedule.dim(),
            schedule.level(),
            ctx.grid.dim(),
            ctx.level()
        ));
    }
    if config.threads == 0 {
        return invalid("thread count must be at least 1");
    }
    match config.kind {
        SmootherKind::Naive if ctx.n_dofs() > NAIVE_MAX_DOFS => invalid(format!(
            "naive smoother limited to {NAIVE_MAX_DOFS} DoFs, level has {}",
            ctx.n_dofs()
        )),
        SmootherKind::SeparatedColorized | SmootherKind::CombinedColorized
            if !schedule.is_color_by_color() =>
        {
            invalid(format!(
                "{} requires a single-batch schedule, got {} batches",
                config.kind,
                schedule.n_batches()
            ))
        }
        SmootherKind::Richardson if !(config.omega >= 0.0) => {
            invalid(format!("relaxation weight must be non-negative, got {}", config.omega))
        }
        _ => Ok(()),
    }
}

fn ordered<T>(items: &[T], dir: Direction) -> Box<dyn Iterator<Item = &T> + '_> {
    match dir {
        Direction::Forward => Box::new(items.iter()),
        Direction::Reverse => Box::new(items.iter().rev()),
    }
}

/// Work arrays reused across sweeps.
#[derive(Debug, Clone)]
pub struct SmootherWorkspace {
    patch: PatchScratch,
    residual: Vec<f64>,
}

impl SmootherWorkspace {
    pub fn new(ctx: &LevelContext) -> Self {
        Self { patch: ctx.scratch(), residual: vec![0.0; ctx.n_dofs()] }
    }
}

/// Sequential sweep, reporting accesses to `obs`. Batched schedules run in
/// their sequential-equivalent order.
pub(crate) fn sweep_sequential<O: AccessObserver>(
    ctx: &LevelContext,
    config: &SmootherConfig,
    schedule: &Schedule,
    ws: &mut SmootherWorkspace,
    u: &mut [f64],
    b: &[f64],
    dir: Direction,
    obs: &mut O,
) -> SweepStats {
    let before = ws.patch.cell_applies;
    let mut stats = SweepStats::default();
    let SmootherWorkspace { patch: pws, residual } = ws;
    match config.kind {
        SmootherKind::Naive => {
            for patch in ordered(schedule.global_order(), dir) {
                stats.cell_applies += ctx.operator.residual_observed(u, b, residual, obs);
                stats.global_residuals += 1;
                local_solve_core(ctx, patch, residual, u, pws, obs);
                stats.patches += 1;
            }
        }
        SmootherKind::Combined => {
            for patch in ordered(schedule.global_order(), dir) {
                local_update_core(ctx, patch, u, b, pws, obs);
                stats.patches += 1;
            }
        }
        SmootherKind::SeparatedColorized => {
            let colors: Vec<usize> = (0..schedule.n_colors()).collect();
            for &k in ordered(&colors, dir) {
                stats.cell_applies += ctx.operator.residual_observed(u, b, residual, obs);
                stats.global_residuals += 1;
                for patch in ordered(schedule.entry(0, k), dir) {
                    local_solve_core(ctx, patch, residual, u, pws, obs);
                    stats.patches += 1;
                }
            }
        }
        SmootherKind::CombinedColorized | SmootherKind::Batched => {
            let entries: Vec<&[PatchId]> = schedule.entries().map(|(_, _, e)| e).collect();
            for entry in ordered(&entries, dir) {
                for patch in ordered(entry, dir) {
                    local_update_core(ctx, patch, u, b, pws, obs);
                    stats.patches += 1;
                }
            }
        }
        SmootherKind::Richardson => {
            stats.cell_applies += richardson_core(ctx, u, b, config.omega, residual, obs);
            stats.global_residuals += 1;
        }
    }
    stats.cell_applies += pws.cell_applies - before;
    stats
}

/// Contiguous share `t` of `n` items split over `parts` workers.
fn chunk(n: usize, parts: usize, t: usize) -> std::ops::Range<usize> {
    let (q, r) = (n / parts, n % parts);
    let start = t * q + t.min(r);
    start..start + q + usize::from(t < r)
}

fn sweep_parallel(
    ctx: &LevelContext,
    schedule: &Schedule,
    threads: usize,
    u: &mut [f64],
    b: &[f64],
    dir: Direction,
) -> SweepStats {
    let mut entries: Vec<&[PatchId]> = schedule.entries().map(|(_, _, e)| e).collect();
    if dir == Direction::Reverse {
        entries.reverse();
    }
    let shared = SharedSolution::new(u);
    let barrier = Barrier::new(threads);
    let (entries, barrier) = (&entries, &barrier);
    let cell_applies: u64 = std::thread::scope(|s| {
        let workers: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    let mut sol = shared;
                    let mut ws = ctx.scratch();
                    for entry in entries {
                        let share = &entry[chunk(entry.len(), threads, t)];
                        for patch in ordered(share, dir) {
                            local_update_core(ctx, patch, &mut sol, b, &mut ws, &mut NoObserver);
                        }
                        barrier.wait();
                    }
                    ws.cell_applies
                })
            })
            .collect();
        workers.into_iter().map(|w| w.join().expect("smoother worker panicked")).sum()
    });
    SweepStats {
        patches: schedule.n_patches() as u64,
        cell_applies,
        global_residuals: 0,
    }
}

/// One smoothing sweep `u ← S(u, b)` driven by `schedule`.
pub fn smooth(
    ctx: &LevelContext,
    config: &SmootherConfig,
    schedule: &Schedule,
    u: &mut DofVector,
    b: &DofVector,
    dir: Direction,
) -> Result<SweepStats> {
    let mut ws = SmootherWorkspace::new(ctx);
    smooth_with(ctx, config, schedule, &mut ws, u, b, dir)
}

pub fn smooth_with(
    ctx: &LevelContext,
    config: &SmootherConfig,
    schedule: &Schedule,
    ws: &mut SmootherWorkspace,
    u: &mut DofVector,
    b: &DofVector,
    dir: Direction,
) -> Result<SweepStats> {
    ctx.check_vector(u)?;
    ctx.check_vector(b)?;
    validate_schedule(ctx, config, schedule)?;
    if config.kind == SmootherKind::Batched && config.threads > 1 {
        return Ok(sweep_parallel(ctx, schedule, config.threads, u.as_mut_slice(), b.as_slice(), dir));
    }
    Ok(sweep_sequential(ctx, config, schedule, ws, u.as_mut_slice(), b.as_slice(), dir, &mut NoObserver))
}

/// A configured smoother bound to one level.
#[derive(Debug, Clone)]
pub struct Smoother {
    config: SmootherConfig,
    schedule: Schedule,
    workspace: SmootherWorkspace,
}

impl Smoother {
    pub fn new(ctx: &LevelContext, config: SmootherConfig) -> Result<Self> {
        let schedule = config.schedule(ctx.grid.dim(), ctx.level())?;
        Self::with_schedule(ctx, config, schedule)
    }

    pub fn with_schedule(ctx: &LevelContext, config: SmootherConfig, schedule: Schedule) -> Result<Self> {
        validate_schedule(ctx, &config, &schedule)?;
        Ok(Self { config, schedule, workspace: SmootherWorkspace::new(ctx) })
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.config
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn sweep(
        &mut self,
        ctx: &LevelContext,
        u: &mut DofVector,
        b: &DofVector,
        dir: Direction,
    ) -> Result<SweepStats> {
        smooth_with(ctx, &self.config, &self.schedule, &mut self.workspace, u, b, dir)
    }
}
