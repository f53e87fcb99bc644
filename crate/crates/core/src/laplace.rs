//! Matrix-free Laplace operator: per-cell action by sum factorization,
//! global matrix-vector product and residual, and the patch-local residual
//! used by the combined smoothers.

use crate::dof_map::{zero_boundary, DofVector, GridLayout, PatchLayout};
use crate::error::{invalid, Result};
use crate::instrument::{AccessObserver, ArrayId, NoObserver, SolutionAccess};
use crate::mesh::PatchId;
use crate::reference_element::default_shape_data;
use crate::tensor::{apply_along, cube, shape_len, with_axis, Lane};

/// Cells evaluated together by the global operator loops.
pub const CELL_LANES: usize = 4;

/// Reference-cell data shared by all cells of a level.
#[derive(Debug, Clone)]
pub struct CellOperatorData {
    dim: usize,
    degree: usize,
    n_q: usize,
    cell_size: f64,
    /// `n_q × (p+1)`: basis values at quadrature points.
    values: Vec<f64>,
    gradients: Vec<f64>,
    /// `(p+1) × n_q` transposes.
    values_t: Vec<f64>,
    gradients_t: Vec<f64>,
    /// Quadrature weight × `h^d` × `h^-2` at every tensor quadrature point.
    quad_factor: Vec<f64>,
    sign: f64,
}

impl CellOperatorData {
    pub fn new(dim: usize, degree: usize, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) {
            return invalid(format!("cell size must be positive, got {cell_size}"));
        }
        let shape = default_shape_data(degree)?;
        let n = degree + 1;
        let nq = shape.n_q();
        let mut values = vec![0.0; nq * n];
        let mut gradients = vec![0.0; nq * n];
        let mut values_t = vec![0.0; nq * n];
        let mut gradients_t = vec![0.0; nq * n];
        for q in 0..nq {
            for b in 0..n {
                values[q * n + b] = shape.value(b, q);
                gradients[q * n + b] = shape.gradient(b, q);
                values_t[b * nq + q] = shape.value(b, q);
                gradients_t[b * nq + q] = shape.gradient(b, q);
            }
        }
        let scale = cell_size.powi(dim as i32 - 2);
        let w = &shape.quadrature.weights;
        let total = nq.pow(dim as u32);
        let quad_factor = (0..total)
            .map(|mut lin| {
                let mut f = scale;
                for _ in 0..dim {
                    f *= w[lin % nq];
                    lin /= nq;
                }
                f
            })
            .collect();
        Ok(Self {
            dim,
            degree,
            n_q: nq,
            cell_size,
            values,
            gradients,
            values_t,
            gradients_t,
            quad_factor,
            sign: 1.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn n_dofs(&self) -> usize {
        (self.degree + 1).pow(self.dim as u32)
    }

    /// Fault injection for mutation testing of the validation suite.
    #[doc(hidden)]
    pub fn flip_sign(&mut self) {
        self.sign = -self.sign;
    }

    /// `out = K_cell · u`, evaluated through the quadrature points.
    pub fn apply(&self, u: &[f64], out: &mut [f64], scratch: &mut CellScratch) {
        let CellScratch { a, b } = scratch;
        self.apply_generic(u, out, a, b);
    }

    pub(crate) fn apply_generic<T: Lane>(&self, u: &[T], out: &mut [T], a: &mut Vec<T>, b: &mut Vec<T>) {
        let (d, n, nq) = (self.dim, self.degree + 1, self.n_q);
        debug_assert_eq!(u.len(), self.n_dofs());
        out.fill(T::ZERO);
        // Constants are in the kernel; removing the cell mean first keeps
        // round-off proportional to the variation of u instead of its size.
        let mean = u.iter().fold(T::ZERO, |s, &x| s.add_scaled(1.0, x)).scaled(1.0 / u.len() as f64);
        for i in 0..d {
            // forward basis change: gradient component i at quadrature points
            for (x, &y) in a.iter_mut().zip(u) {
                *x = y.add_scaled(-1.0, mean);
            }
            let mut shape = cube(d, n);
            for axis in 0..d {
                let mat = if axis == i { &self.gradients } else { &self.values };
                apply_along(mat, nq, n, axis, shape, a, b);
                shape = with_axis(shape, axis, nq);
                std::mem::swap(a, b);
            }
            for (x, &f) in a.iter_mut().zip(&self.quad_factor) {
                *x = x.scaled(f);
            }
            // transposed basis change back to the nodes
            for axis in 0..d {
                let mat = if axis == i { &self.gradients_t } else { &self.values_t };
                apply_along(mat, n, nq, axis, shape, a, b);
                shape = with_axis(shape, axis, n);
                std::mem::swap(a, b);
            }
            let len = shape_len(shape);
            for (o, &x) in out.iter_mut().zip(&a[..len]) {
                *o = o.add_scaled(self.sign, x);
            }
        }
    }

    fn scratch_len(&self) -> usize {
        (self.degree + 1).max(self.n_q).pow(self.dim as u32)
    }
}

/// Work arrays for [`CellOperatorData::apply`].
#[derive(Debug, Clone)]
pub struct CellScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl CellScratch {
    pub fn new(data: &CellOperatorData) -> Self {
        let len = data.scratch_len();
        Self { a: vec![0.0; len], b: vec![0.0; len] }
    }
}

/// Convenience wrapper allocating its own scratch space.
pub fn cell_apply(data: &CellOperatorData, u_cell: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; data.n_dofs()];
    data.apply(u_cell, &mut out, &mut CellScratch::new(data));
    out
}

/// Work arrays for one patch evaluation.
#[derive(Debug, Clone)]
pub struct PatchScratch {
    pub(crate) cell: CellScratch,
    pub(crate) cell_in: Vec<f64>,
    pub(crate) cell_out: Vec<f64>,
    pub(crate) closure: Vec<f64>,
    pub(crate) residual: Vec<f64>,
    pub(crate) correction: Vec<f64>,
    pub(crate) fdm_a: Vec<f64>,
    pub(crate) cell_applies: u64,
}

impl PatchScratch {
    pub fn new(op: &LaplaceOperator, patches: &PatchLayout) -> Self {
        let nd = op.cell.n_dofs();
        let ni = patches.interior_len();
        Self {
            cell: CellScratch::new(&op.cell),
            cell_in: vec![0.0; nd],
            cell_out: vec![0.0; nd],
            closure: vec![0.0; patches.closure_len()],
            residual: vec![0.0; ni],
            correction: vec![0.0; ni],
            fdm_a: vec![0.0; ni],
            cell_applies: 0,
        }
    }

    /// Number of cell operator evaluations since construction.
    pub fn cell_applies(&self) -> u64 {
        self.cell_applies
    }
}

/// Matrix-free `A_ℓ` on one level.
#[derive(Debug, Clone)]
pub struct LaplaceOperator {
    grid: GridLayout,
    cell: CellOperatorData,
    cell_offsets: Vec<usize>,
}

impl LaplaceOperator {
    pub fn new(grid: GridLayout) -> Result<Self> {
        let cell = CellOperatorData::new(grid.dim(), grid.degree(), grid.cell_size())?;
        Ok(Self { cell_offsets: grid.cell_offsets(), grid, cell })
    }

    pub fn grid(&self) -> &GridLayout {
        &self.grid
    }

    pub fn cell_data(&self) -> &CellOperatorData {
        &self.cell
    }

    #[doc(hidden)]
    pub fn inject_sign_flip(&mut self) {
        self.cell.flip_sign();
    }

    fn cell_linear_index(&self, corner: &[usize]) -> usize {
        let m = self.grid.cells_per_dim();
        corner.iter().rev().fold(0, |acc, &c| acc * m + c)
    }

    /// `dst = A u`; boundary entries of `dst` are zero afterwards.
    pub fn vmult(&self, u: &DofVector, dst: &mut DofVector) {
        self.check(u);
        self.check(dst);
        self.vmult_observed(u.as_slice(), dst.as_mut_slice(), ArrayId::Solution, &mut NoObserver);
    }

    pub fn apply(&self, u: &DofVector) -> DofVector {
        let mut dst = DofVector::zeros(self.grid);
        self.vmult(u, &mut dst);
        dst
    }

    fn check(&self, v: &DofVector) {
        assert_eq!(v.layout(), &self.grid, "vector belongs to a different level");
    }

    /// Adds `sign · A u` into `dst` cell by cell, without boundary fix-up.
    /// Cells are evaluated [`CELL_LANES`] at a time. Returns the number of
    /// cell evaluations.
    fn accumulate_cells<O: AccessObserver>(
        &self,
        u: &[f64],
        dst: &mut [f64],
        sign: f64,
        dst_id: ArrayId,
        obs: &mut O,
    ) -> u64 {
        let nd = self.cell.n_dofs();
        let len = self.cell.scratch_len();
        let mut a = vec![[0.0; CELL_LANES]; len];
        let mut b = vec![[0.0; CELL_LANES]; len];
        let mut cell_in = vec![[0.0; CELL_LANES]; nd];
        let mut cell_out = vec![[0.0; CELL_LANES]; nd];
        let mut bases = [0usize; CELL_LANES];
        let corners: Vec<_> = self.grid.cell_corners().collect();
        for group in corners.chunks(CELL_LANES) {
            for (lane, corner) in group.iter().enumerate() {
                let base = self.grid.cell_base(corner);
                bases[lane] = base;
                if O::ENABLED && obs.metadata() {
                    let cl = self.cell_linear_index(&corner[..self.grid.dim()]);
                    for k in 0..nd {
                        obs.read(ArrayId::Metadata, cl * nd + k);
                    }
                }
                for (x, off) in cell_in.iter_mut().zip(&self.cell_offsets) {
                    x[lane] = u[base + off];
                    if O::ENABLED {
                        obs.read(ArrayId::Solution, base + off);
                    }
                }
            }
            for x in cell_in.iter_mut() {
                x[group.len()..].fill(0.0);
            }
            self.cell.apply_generic(&cell_in, &mut cell_out, &mut a, &mut b);
            for (lane, &base) in bases.iter().enumerate().take(group.len()) {
                for (y, off) in cell_out.iter().zip(&self.cell_offsets) {
                    dst[base + off] += sign * y[lane];
                    if O::ENABLED {
                        obs.write(dst_id, base + off);
                    }
                }
            }
        }
        corners.len() as u64
    }

    pub(crate) fn vmult_observed<O: AccessObserver>(
        &self,
        u: &[f64],
        dst: &mut [f64],
        dst_id: ArrayId,
        obs: &mut O,
    ) -> u64 {
        dst.fill(0.0);
        if O::ENABLED {
            for i in 0..dst.len() {
                obs.write(dst_id, i);
            }
        }
        let count = self.accumulate_cells(u, dst, 1.0, dst_id, obs);
        zero_boundary(&self.grid, dst);
        count
    }

    /// `r = b − A u`; boundary entries of `r` are zero.
    pub fn residual(&self, u: &DofVector, b: &DofVector, r: &mut DofVector) {
        self.check(u);
        self.check(b);
        self.check(r);
        self.residual_observed(u.as_slice(), b.as_slice(), r.as_mut_slice(), &mut NoObserver);
    }

    pub fn global_residual(&self, u: &DofVector, b: &DofVector) -> DofVector {
        let mut r = DofVector::zeros(self.grid);
        self.residual(u, b, &mut r);
        r
    }

    pub(crate) fn residual_observed<O: AccessObserver>(
        &self,
        u: &[f64],
        b: &[f64],
        r: &mut [f64],
        obs: &mut O,
    ) -> u64 {
        r.copy_from_slice(b);
        if O::ENABLED {
            for i in 0..r.len() {
                obs.read(ArrayId::Rhs, i);
                obs.write(ArrayId::Residual, i);
            }
        }
        let count = self.accumulate_cells(u, r, -1.0, ArrayId::Residual, obs);
        zero_boundary(&self.grid, r);
        count
    }

    /// Local residual `Π_j b − Π_j Ā_j Π̄_j u` of one patch, in interior
    /// lexicographic order.
    pub fn patch_residual(
        &self,
        patches: &PatchLayout,
        patch: &PatchId,
        u: &DofVector,
        b: &DofVector,
    ) -> Vec<f64> {
        let mut ws = PatchScratch::new(self, patches);
        self.patch_residual_core(patches, patch, u.as_slice(), b.as_slice(), &mut ws, &mut NoObserver);
        ws.residual
    }

    /// Gathers the patch cells, evaluates them, sums the contributions in
    /// closure order and keeps the interior part; result in `ws.residual`.
    pub(crate) fn patch_residual_core<S, O>(
        &self,
        patches: &PatchLayout,
        patch: &PatchId,
        u: &S,
        b: &[f64],
        ws: &mut PatchScratch,
        obs: &mut O,
    ) where
        S: SolutionAccess + ?Sized,
        O: AccessObserver,
    {
        let base = patches.base(patch);
        let nd = self.cell.n_dofs();
        ws.closure.fill(0.0);
        for c in 0..patches.n_cells() {
            let offsets = patches.cell_offsets(c);
            if O::ENABLED && obs.metadata() {
                let d = self.grid.dim();
                let mut corner = [0usize; 3];
                for k in 0..d {
                    corner[k] = patch.vertex[k] as usize - 1 + ((c >> k) & 1);
                }
                let cl = self.cell_linear_index(&corner[..d]);
                for k in 0..nd {
                    obs.read(ArrayId::Metadata, cl * nd + k);
                }
            }
            for (x, off) in ws.cell_in.iter_mut().zip(offsets) {
                *x = u.load(base + off);
                if O::ENABLED {
                    obs.read(ArrayId::Solution, base + off);
                }
            }
            self.cell.apply(&ws.cell_in, &mut ws.cell_out, &mut ws.cell);
            ws.cell_applies += 1;
            for (y, &pos) in ws.cell_out.iter().zip(patches.cell_closure_positions(c)) {
                ws.closure[pos] += y;
            }
        }
        for ((r, &off), &pos) in ws
            .residual
            .iter_mut()
            .zip(patches.interior_offsets())
            .zip(patches.interior_positions())
        {
            *r = b[base + off] - ws.closure[pos];
            if O::ENABLED {
                obs.read(ArrayId::Rhs, base + off);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference_element::cell_matrices_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constants_are_in_the_kernel() {
        for (d, p) in [(1, 1), (2, 3), (3, 2), (3, 5)] {
            let data = CellOperatorData::new(d, p, 0.3).unwrap();
            let u = vec![2.5; data.n_dofs()];
            let out = cell_apply(&data, &u);
            let norm = (u.len() as f64).sqrt() * 2.5;
            assert!(out.iter().all(|v| v.abs() < 1e-13 * norm), "d={d} p={p}");
        }
    }

    #[test]
    fn linear_1d_cell() {
        let data = CellOperatorData::new(1, 1, 1.0).unwrap();
        let out = cell_apply(&data, &[0.0, 1.0]);
        assert!((out[0] + 1.0).abs() < 1e-15 && (out[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_kronecker_cell_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3] {
            for p in 1..=5 {
                let h = 0.25;
                let (m, k) = cell_matrices_1d(p, h).unwrap();
                // Σ_i M ⊗ … ⊗ K(position i) ⊗ … ⊗ M, x fastest (rightmost)
                let mut dense = None;
                for i in 0..d {
                    let mut term = if i == d - 1 { k.clone() } else { m.clone() };
                    for j in (0..d - 1).rev() {
                        term = term.kron(if j == i { &k } else { &m });
                    }
                    dense = Some(match dense {
                        None => term,
                        Some(acc) => term.add(&acc),
                    });
                }
                let dense = dense.unwrap();
                let data = CellOperatorData::new(d, p, h).unwrap();
                let u: Vec<f64> = (0..data.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let got = cell_apply(&data, &u);
                let want = dense.matvec(&u);
                let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12 * scale, "d={d} p={p}");
                }
            }
        }
    }

    #[test]
    fn one_dimensional_vmult() {
        let grid = GridLayout::new(1, 1, 0).unwrap();
        let op = LaplaceOperator::new(grid).unwrap();
        let u = DofVector::from_vec(grid, vec![0.0, 1.0, 0.0]).unwrap();
        let au = op.apply(&u);
        assert!((au.as_slice()[1] - 4.0).abs() < 1e-14);
        assert_eq!(au.as_slice()[0], 0.0);
        assert_eq!(op.apply(&DofVector::zeros(grid)), DofVector::zeros(grid));
    }

    #[test]
    fn residual_basics() {
        let grid = GridLayout::new(2, 2, 1).unwrap();
        let op = LaplaceOperator::new(grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = DofVector::random(grid, &mut rng);
        let zero = DofVector::zeros(grid);
        assert_eq!(op.global_residual(&zero, &b), b);

        let u1 = DofVector::random(grid, &mut rng);
        let u2 = DofVector::random(grid, &mut rng);
        let mut sum = u1.clone();
        sum.axpy(1.0, &u2);
        let lhs = op.global_residual(&sum, &b);
        let mut rhs = op.global_residual(&u1, &b);
        rhs.axpy(-1.0, &op.apply(&u2));
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        assert!(lhs.boundary_is_zero());
    }

    #[test]
    fn patch_residual_matches_global() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (d, p, l) in [(2, 3, 1), (3, 2, 1), (2, 1, 2)] {
            let grid = GridLayout::new(d, p, l).unwrap();
            let op = LaplaceOperator::new(grid).unwrap();
            let patches = PatchLayout::new(grid);
            let u = DofVector::random(grid, &mut rng);
            let b = DofVector::random(grid, &mut rng);
            let r = op.global_residual(&u, &b);
            let hier = crate::mesh::MeshHierarchy::new(d, l).unwrap();
            for patch in hier.enumerate_patches(l).unwrap() {
                let local = op.patch_residual(&patches, &patch, &u, &b);
                let sets = patches.index_sets(&patch);
                for (x, &g) in local.iter().zip(&sets.interior) {
                    assert!((x - r.as_slice()[g]).abs() < 1e-12);
                }
            }
            let zero = DofVector::zeros(grid);
            let p0 = hier.enumerate_patches(l).unwrap()[0];
            assert!(op.patch_residual(&patches, &p0, &zero, &zero).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn symmetric_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (d, p, l) in [(2, 4, 2), (3, 3, 1), (2, 1, 3)] {
            let grid = GridLayout::new(d, p, l).unwrap();
            let op = LaplaceOperator::new(grid).unwrap();
            let u = DofVector::random(grid, &mut rng);
            let w = DofVector::random(grid, &mut rng);
            let (a, b) = (op.apply(&u).dot(&w), u.dot(&op.apply(&w)));
            assert!((a - b).abs() < 1e-11 * a.abs().max(b.abs()));
            assert!(op.apply(&u).dot(&u) > 0.0);
        }
    }
}
