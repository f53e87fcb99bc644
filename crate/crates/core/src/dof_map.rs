//! Degree-of-freedom numbering on one level and the patch projection
//! machinery (closure and interior index sets, gather, masked scatter).
//!
//! Nodes are numbered lexicographically with x running fastest. Boundary
//! nodes are stored explicitly and pinned to zero.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::mesh::{MeshHierarchy, PatchId, MAX_DIM};

/// `(p·2^(ℓ+1) + 1)^d`
pub fn n_dofs(dim: usize, degree: usize, level: usize) -> u64 {
    let n = (degree as u64) * (1u64 << (level + 1)) + 1;
    n.pow(dim as u32)
}

/// Structured node layout of one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    dim: usize,
    degree: usize,
    level: usize,
    nodes_per_dim: usize,
    strides: [usize; MAX_DIM],
    len: usize,
}

impl GridLayout {
    pub fn new(dim: usize, degree: usize, level: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return invalid(format!("dimension must be 1, 2 or 3, got {dim}"));
        }
        if degree == 0 {
            return invalid("polynomial degree must be >= 1");
        }
        let total = n_dofs(dim, degree, level);
        if total > (1u64 << 34) {
            return invalid(format!("{total} unknowns exceed the addressable range"));
        }
        let n = degree * MeshHierarchy::cells_per_dim(level) + 1;
        let mut strides = [0; MAX_DIM];
        let mut s = 1;
        for stride in strides.iter_mut().take(dim) {
            *stride = s;
            s *= n;
        }
        Ok(Self { dim, degree, level, nodes_per_dim: n, strides, len: s })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.nodes_per_dim
    }

    pub fn cells_per_dim(&self) -> usize {
        MeshHierarchy::cells_per_dim(self.level)
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_dim().pow(self.dim as u32)
    }

    pub fn cell_size(&self) -> f64 {
        MeshHierarchy::cell_size(self.level)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn strides(&self) -> [usize; MAX_DIM] {
        self.strides
    }

    pub fn index(&self, node: &[usize]) -> usize {
        node.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn node(&self, mut index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for c in out.iter_mut().take(self.dim) {
            *c = index % self.nodes_per_dim;
            index /= self.nodes_per_dim;
        }
        out
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let last = self.nodes_per_dim - 1;
        self.node(index)[..self.dim].iter().any(|&c| c == 0 || c == last)
    }

    /// Global index of the first node of the cell with lower corner `cell`.
    pub fn cell_base(&self, cell: &[usize]) -> usize {
        cell.iter().zip(&self.strides).map(|(c, s)| c * self.degree * s).sum()
    }

    /// Global index of the lower-left closure node of `patch`.
    pub fn patch_base(&self, patch: &PatchId) -> usize {
        patch
            .coords()
            .iter()
            .zip(&self.strides)
            .map(|(&v, s)| (v as usize - 1) * self.degree * s)
            .sum()
    }

    /// Offsets (relative to the cell base) of the `(p+1)^d` cell DoFs in
    /// lexicographic cell-local order.
    pub fn cell_offsets(&self) -> Vec<usize> {
        box_offsets(self.dim, self.degree + 1, 0, &self.strides)
    }

    /// Lower corners of all cells in lexicographic order.
    pub fn cell_corners(&self) -> impl Iterator<Item = [usize; MAX_DIM]> + '_ {
        let m = self.cells_per_dim();
        let dim = self.dim;
        (0..self.n_cells()).map(move |mut lin| {
            let mut c = [0; MAX_DIM];
            for ck in c.iter_mut().take(dim) {
                *ck = lin % m;
                lin /= m;
            }
            c
        })
    }

    /// Physical coordinates of a node.
    pub fn node_position(&self, index: usize, support_points: &[f64]) -> [f64; MAX_DIM] {
        let node = self.node(index);
        let h = self.cell_size();
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim {
            let (cell, local) = (node[k] / self.degree, node[k] % self.degree);
            x[k] = h * (cell as f64 + support_points[local]);
        }
        x
    }
}

/// Offsets of an axis-aligned box of `n^dim` nodes, starting at local
/// coordinate `start` in every direction.
fn box_offsets(dim: usize, n: usize, start: usize, strides: &[usize; MAX_DIM]) -> Vec<usize> {
    let total = n.pow(dim as u32);
    (0..total)
        .map(|mut lin| {
            let mut off = 0;
            for s in strides.iter().take(dim) {
                off += (lin % n + start) * s;
                lin /= n;
            }
            off
        })
        .collect()
}

/// Coefficient vector of one level, including the (zero) boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DofVector {
    layout: GridLayout,
    data: Vec<f64>,
}

impl DofVector {
    pub fn zeros(layout: GridLayout) -> Self {
        Self { layout, data: vec![0.0; layout.len()] }
    }

    /// Random interior values in `[-1, 1)`, boundary zero.
    pub fn random<R: Rng + ?Sized>(layout: GridLayout, rng: &mut R) -> Self {
        let mut v = Self::zeros(layout);
        for x in v.data.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        v.zero_boundary();
        v
    }

    pub fn from_vec(layout: GridLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.len() {
            return invalid(format!("vector length {} != {}", data.len(), layout.len()));
        }
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn level(&self) -> usize {
        self.layout.level
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn zero_boundary(&mut self) {
        zero_boundary(&self.layout, &mut self.data);
    }

    pub fn boundary_is_zero(&self) -> bool {
        (0..self.data.len()).all(|i| !self.layout.is_boundary(i) || self.data[i] == 0.0)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Sets every boundary entry of `data` to zero.
pub(crate) fn zero_boundary(layout: &GridLayout, data: &mut [f64]) {
    let n = layout.nodes_per_dim;
    let strides = layout.strides;
    // Each face: coordinate k fixed at 0 or n-1, others free.
    for k in 0..layout.dim {
        for fixed in [0, n - 1] {
            let face = n.pow(layout.dim as u32 - 1);
            for lin in 0..face {
                let mut rest = lin;
                let mut idx = fixed * strides[k];
                for j in 0..layout.dim {
                    if j == k {
                        continue;
                    }
                    idx += (rest % n) * strides[j];
                    rest /= n;
                }
                data[idx] = 0.0;
            }
        }
    }
}

/// Level-constant patch index tables, relative to the patch base node.
///
/// All patches of a level are congruent, so closure, interior and
/// per-cell index sets differ only by the base offset.
#[derive(Debug, Clone)]
pub struct PatchLayout {
    grid: GridLayout,
    closure: Vec<usize>,
    interior: Vec<usize>,
    interior_pos: Vec<usize>,
    closure_is_interior: Vec<bool>,
    cell_closure_pos: Vec<Vec<usize>>,
    cell_offsets: Vec<Vec<usize>>,
    write_mask: Vec<Vec<bool>>,
    /// `(offset, interior index)` of every owned interior DoF, cell by cell.
    masked_scatter: Vec<(usize, usize)>,
}

impl PatchLayout {
    pub fn new(grid: GridLayout) -> Self {
        let (d, p) = (grid.dim, grid.degree);
        let nc = 2 * p + 1;
        let local_strides = {
            let mut s = [0; MAX_DIM];
            let mut acc = 1;
            for sk in s.iter_mut().take(d) {
                *sk = acc;
                acc *= nc;
            }
            s
        };
        let closure = box_offsets(d, nc, 0, &grid.strides);
        let interior = box_offsets(d, nc - 2, 1, &grid.strides);
        let interior_pos = box_offsets(d, nc - 2, 1, &local_strides);
        let mut closure_is_interior = vec![false; closure.len()];
        for &pos in &interior_pos {
            closure_is_interior[pos] = true;
        }

        let n_cells = 1usize << d;
        let cell_dofs = (p + 1).pow(d as u32);
        let mut cell_closure_pos = Vec::with_capacity(n_cells);
        let mut write_mask = Vec::with_capacity(n_cells);
        for bits in 0..n_cells {
            let mut positions = Vec::with_capacity(cell_dofs);
            let mut mask = Vec::with_capacity(cell_dofs);
            for mut lin in 0..cell_dofs {
                let mut pos = 0;
                let mut owner = 0usize;
                for k in 0..d {
                    let a = ((bits >> k) & 1) * p + lin % (p + 1);
                    lin /= p + 1;
                    pos += a * local_strides[k];
                    // smallest containing cell takes the lower half, ties included
                    if a > p {
                        owner |= 1 << k;
                    }
                }
                positions.push(pos);
                mask.push(owner == bits);
            }
            cell_closure_pos.push(positions);
            write_mask.push(mask);
        }
        let cell_offsets: Vec<Vec<usize>> = cell_closure_pos
            .iter()
            .map(|ps| ps.iter().map(|&pos| closure[pos]).collect())
            .collect();

        let mut interior_index = vec![usize::MAX; closure.len()];
        for (i, &pos) in interior_pos.iter().enumerate() {
            interior_index[pos] = i;
        }
        let mut masked_scatter = Vec::with_capacity(interior.len());
        for c in 0..n_cells {
            for (k, &pos) in cell_closure_pos[c].iter().enumerate() {
                if write_mask[c][k] && closure_is_interior[pos] {
                    masked_scatter.push((cell_offsets[c][k], interior_index[pos]));
                }
            }
        }

        Self {
            grid,
            closure,
            interior,
            interior_pos,
            closure_is_interior,
            cell_closure_pos,
            cell_offsets,
            write_mask,
            masked_scatter,
        }
    }

    pub fn grid(&self) -> &GridLayout {
        &self.grid
    }

    pub fn closure_len(&self) -> usize {
        self.closure.len()
    }

    pub fn interior_len(&self) -> usize {
        self.interior.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_offsets.len()
    }

    pub fn closure_offsets(&self) -> &[usize] {
        &self.closure
    }

    pub fn interior_offsets(&self) -> &[usize] {
        &self.interior
    }

    /// Position of each interior DoF within the closure ordering.
    pub fn interior_positions(&self) -> &[usize] {
        &self.interior_pos
    }

    pub fn cell_offsets(&self, cell: usize) -> &[usize] {
        &self.cell_offsets[cell]
    }

    pub fn cell_closure_positions(&self, cell: usize) -> &[usize] {
        &self.cell_closure_pos[cell]
    }

    pub(crate) fn masked_scatter(&self) -> &[(usize, usize)] {
        &self.masked_scatter
    }

    pub fn base(&self, patch: &PatchId) -> usize {
        self.grid.patch_base(patch)
    }

    /// Explicit index sets of one patch.
    pub fn index_sets(&self, patch: &PatchId) -> PatchIndexSets {
        let base = self.base(patch);
        let shift = |v: &[usize]| v.iter().map(|o| base + o).collect::<Vec<_>>();
        PatchIndexSets {
            closure: shift(&self.closure),
            interior: shift(&self.interior),
            cell_dofs: self.cell_offsets.iter().map(|c| shift(c)).collect(),
            cell_closure_pos: self.cell_closure_pos.clone(),
            write_mask: self.write_mask.clone(),
            closure_is_interior: self.closure_is_interior.clone(),
        }
    }
}

/// Global index sets of one vertex patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchIndexSets {
    /// `(2p+1)^d` indices, lexicographic patch-local order.
    pub closure: Vec<usize>,
    /// `(2p-1)^d` indices of DoFs whose basis functions vanish on the
    /// patch boundary.
    pub interior: Vec<usize>,
    /// Per cell (lexicographic), the `(p+1)^d` global indices.
    pub cell_dofs: Vec<Vec<usize>>,
    /// Per cell, the closure position of each cell DoF.
    pub cell_closure_pos: Vec<Vec<usize>>,
    /// Per cell, whether the cell owns the DoF (lexicographically smallest
    /// containing cell).
    pub write_mask: Vec<Vec<bool>>,
    pub closure_is_interior: Vec<bool>,
}

pub fn patch_index_sets(patch: &PatchId, degree: usize) -> Result<PatchIndexSets> {
    let grid = GridLayout::new(patch.dim(), degree, patch.level())?;
    Ok(PatchLayout::new(grid).index_sets(patch))
}

pub fn gather(v: &[f64], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| v[i]).collect()
}

/// Writes `local[i]` to `v[indices[i]]`.
pub fn scatter_set(v: &mut [f64], indices: &[usize], local: &[f64]) {
    for (&i, &x) in indices.iter().zip(local) {
        v[i] = x;
    }
}

/// Adds a closure-ordered local array into `v`, cell by cell, using the
/// write mask so that each DoF is touched once. Only patch-interior DoFs
/// are written.
pub fn scatter_add_masked(v: &mut [f64], sets: &PatchIndexSets, local: &[f64]) {
    debug_assert_eq!(local.len(), sets.closure.len());
    for (c, dofs) in sets.cell_dofs.iter().enumerate() {
        for (k, &g) in dofs.iter().enumerate() {
            let pos = sets.cell_closure_pos[c][k];
            if sets.write_mask[c][k] && sets.closure_is_interior[pos] {
                v[g] += local[pos];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dof_counts_from_large_runs() {
        assert_eq!(n_dofs(2, 3, 10), 37_761_025);
        assert_eq!(n_dofs(2, 5, 10), 104_878_081);
        assert_eq!(n_dofs(3, 5, 6), 263_374_721);
    }

    #[test]
    fn one_dimensional_patch() {
        let sets = patch_index_sets(&PatchId::new(0, &[1]).unwrap(), 1).unwrap();
        assert_eq!(sets.closure, vec![0, 1, 2]);
        assert_eq!(sets.interior, vec![1]);
    }

    #[test]
    fn index_set_sizes() {
        let sets = patch_index_sets(&PatchId::new(2, &[3, 4, 5]).unwrap(), 5).unwrap();
        assert_eq!(sets.closure.len(), 1331);
        assert_eq!(sets.interior.len(), 729);
        assert_eq!(sets.cell_dofs.len(), 8);
        assert!(sets.cell_dofs.iter().all(|c| c.len() == 216));
    }

    #[test]
    fn corner_patch_interior_on_five_by_five_grid() {
        let sets = patch_index_sets(&PatchId::new(1, &[1, 1]).unwrap(), 1).unwrap();
        assert_eq!(sets.interior, vec![6]);
    }

    #[test]
    fn index_set_invariants() {
        for (dim, p) in [(1, 3), (2, 1), (2, 4), (3, 2)] {
            let level = 2;
            let patch = PatchId::new(level, &vec![3; dim]).unwrap();
            let sets = patch_index_sets(&patch, p).unwrap();
            assert!(sets.interior.iter().all(|i| sets.closure.contains(i)));
            // closure = union of cell dofs, lexicographic after dedup
            let mut union: Vec<usize> = sets.cell_dofs.iter().flatten().copied().collect();
            union.sort_unstable();
            union.dedup();
            assert_eq!(union, sets.closure);
            // every closure dof owned exactly once
            let mut owners = vec![0; sets.closure.len()];
            for (c, mask) in sets.write_mask.iter().enumerate() {
                for (k, &m) in mask.iter().enumerate() {
                    if m {
                        owners[sets.cell_closure_pos[c][k]] += 1;
                    }
                    assert_eq!(sets.closure[sets.cell_closure_pos[c][k]], sets.cell_dofs[c][k]);
                }
            }
            assert!(owners.iter().all(|&o| o == 1));
        }
    }

    #[test]
    fn gather_scatter_identities() {
        let grid = GridLayout::new(2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = DofVector::random(grid, &mut rng);
        let sets = PatchLayout::new(grid).index_sets(&PatchId::new(1, &[2, 3]).unwrap());

        let mut w = v.as_slice().to_vec();
        scatter_add_masked(&mut w, &sets, &vec![0.0; sets.closure.len()]);
        assert_eq!(w, v.as_slice());

        let local = gather(v.as_slice(), &sets.closure);
        scatter_add_masked(&mut w, &sets, &local);
        for i in 0..w.len() {
            let expect = if sets.interior.contains(&i) { 2.0 * v.as_slice()[i] } else { v.as_slice()[i] };
            assert_eq!(w[i], expect);
        }

        let mut z = vec![0.0; grid.len()];
        let arbitrary: Vec<f64> = (0..sets.closure.len()).map(|i| i as f64).collect();
        scatter_set(&mut z, &sets.closure, &arbitrary);
        assert_eq!(gather(&z, &sets.closure), arbitrary);
    }

    #[test]
    fn all_ones_scatter_hits_single_interior_dof() {
        let grid = GridLayout::new(2, 1, 1).unwrap();
        let sets = PatchLayout::new(grid).index_sets(&PatchId::new(1, &[2, 2]).unwrap());
        let mut v = vec![0.0; grid.len()];
        scatter_add_masked(&mut v, &sets, &vec![1.0; sets.closure.len()]);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert_eq!(v[12], 1.0);
    }

    #[test]
    fn boundary_zeroing() {
        let grid = GridLayout::new(3, 2, 0).unwrap();
        let mut v = DofVector::zeros(grid);
        v.fill(1.0);
        v.zero_boundary();
        assert!(v.boundary_is_zero());
        let interior = (grid.nodes_per_dim() - 2).pow(3);
        assert_eq!(v.as_slice().iter().sum::<f64>(), interior as f64);
    }
}
