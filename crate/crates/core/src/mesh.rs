//! Nested uniform Cartesian meshes on the unit hypercube, vertex-patch
//! enumeration, patch orderings, parity coloring and batch construction.
//!
//! Level `ℓ` has `2^(ℓ+1)` cells per direction, so level 0 carries exactly
//! one interior vertex. A vertex patch is addressed by the integer
//! coordinates of its (interior) center vertex.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshHierarchy {
    dim: usize,
    max_level: usize,
}

impl MeshHierarchy {
    /// `dim` is 2 or 3 for production runs; 1 is accepted as a test harness.
    pub fn new(dim: usize, max_level: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return invalid(format!("dimension must be 1, 2 or 3, got {dim}"));
        }
        if max_level > 20 {
            return invalid(format!("level {max_level} is out of the supported range"));
        }
        Ok(Self { dim, max_level })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn n_levels(&self) -> usize {
        self.max_level + 1
    }

    pub fn cells_per_dim(level: usize) -> usize {
        1 << (level + 1)
    }

    pub fn cell_size(level: usize) -> f64 {
        1.0 / Self::cells_per_dim(level) as f64
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.max_level {
            return invalid(format!("level {level} exceeds finest level {}", self.max_level));
        }
        Ok(())
    }

    pub fn n_patches(&self, level: usize) -> usize {
        (Self::cells_per_dim(level) - 1).pow(self.dim as u32)
    }

    /// All interior vertices of `level` in lexicographic order (x fastest).
    pub fn enumerate_patches(&self, level: usize) -> Result<Vec<PatchId>> {
        self.check_level(level)?;
        let m = Self::cells_per_dim(level) - 1;
        let total = m.pow(self.dim as u32);
        let mut out = Vec::with_capacity(total);
        for lin in 0..total {
            let mut vertex = [0u32; MAX_DIM];
            let mut rest = lin;
            for v in vertex.iter_mut().take(self.dim) {
                *v = (rest % m) as u32 + 1;
                rest /= m;
            }
            out.push(PatchId { level: level as u32, dim: self.dim as u8, vertex });
        }
        Ok(out)
    }
}

/// A vertex patch: the `2^d` cells around an interior vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchId {
    pub level: u32,
    pub dim: u8,
    /// Vertex coordinates in `1..2^(level+1)`; unused entries are 0.
    pub vertex: [u32; MAX_DIM],
}

impl PatchId {
    pub fn new(level: usize, vertex: &[u32]) -> Result<Self> {
        let dim = vertex.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return invalid(format!("patch vertex must have 1..=3 coordinates, got {dim}"));
        }
        let m = MeshHierarchy::cells_per_dim(level) as u32;
        if vertex.iter().any(|&v| v == 0 || v >= m) {
            return invalid(format!("vertex {vertex:?} is not interior on level {level}"));
        }
        let mut coords = [0; MAX_DIM];
        coords[..dim].copy_from_slice(vertex);
        Ok(Self { level: level as u32, dim: dim as u8, vertex: coords })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn level(&self) -> usize {
        self.level as usize
    }

    pub fn coords(&self) -> &[u32] {
        &self.vertex[..self.dim()]
    }

    /// Color by coordinate parity: `Σ_k (v_k mod 2)·2^k`.
    pub fn color(&self) -> usize {
        self.coords().iter().enumerate().map(|(k, &v)| ((v & 1) as usize) << k).sum()
    }

    /// Morton code of the zero-based coordinates, x in the lowest bit.
    pub fn morton_code(&self) -> u64 {
        let d = self.dim();
        let mut code = 0u64;
        for bit in 0..(64 / d).min(21) {
            for (k, &v) in self.coords().iter().enumerate() {
                let z = (v - 1) as u64;
                code |= ((z >> bit) & 1) << (bit * d + k);
            }
        }
        code
    }

    /// Coarsest level on which this vertex already exists.
    pub fn coarsest_level(&self) -> usize {
        let shift = self.coords().iter().map(|v| v.trailing_zeros()).min().unwrap_or(0);
        self.level().saturating_sub(shift as usize)
    }

    /// Two patches share a cell iff their vertices differ by at most one in
    /// every coordinate.
    pub fn shares_cell_with(&self, other: &PatchId) -> bool {
        self.coords().iter().zip(other.coords()).all(|(&a, &b)| a.abs_diff(b) <= 1)
    }

    /// Lower-corner coordinates of the `2^d` cells of the patch.
    pub fn cells(&self) -> Vec<[u32; MAX_DIM]> {
        let d = self.dim();
        (0..1usize << d)
            .map(|bits| {
                let mut c = [0; MAX_DIM];
                for k in 0..d {
                    c[k] = self.vertex[k] - 1 + ((bits >> k) & 1) as u32;
                }
                c
            })
            .collect()
    }
}

impl fmt::Display for PatchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.coords().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Global traversal order of the vertex patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchOrdering {
    ZCurve,
    Hierarchical,
}

impl PatchOrdering {
    pub const ALL: [PatchOrdering; 2] = [PatchOrdering::ZCurve, PatchOrdering::Hierarchical];

    pub fn name(&self) -> &'static str {
        match self {
            PatchOrdering::ZCurve => "z_curve",
            PatchOrdering::Hierarchical => "hierarchical",
        }
    }

    pub fn permutation(&self, patches: &[PatchId]) -> Vec<usize> {
        match self {
            PatchOrdering::ZCurve => morton_order(patches),
            PatchOrdering::Hierarchical => hierarchical_order(patches),
        }
    }
}

impl fmt::Display for PatchOrdering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatchOrdering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z_curve" | "z-curve" | "zcurve" | "morton" => Ok(PatchOrdering::ZCurve),
            "hierarchical" => Ok(PatchOrdering::Hierarchical),
            _ => invalid(format!("unknown ordering '{s}' (expected z_curve or hierarchical)")),
        }
    }
}

/// Permutation sorting `patches` along the Z-curve.
pub fn morton_order(patches: &[PatchId]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..patches.len()).collect();
    perm.sort_by_key(|&i| patches[i].morton_code());
    perm
}

/// Coarse-level vertices first, each level group in Z-curve order.
pub fn hierarchical_order(patches: &[PatchId]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..patches.len()).collect();
    perm.sort_by_key(|&i| (patches[i].coarsest_level(), patches[i].morton_code()));
    perm
}

pub fn n_colors(dim: usize) -> usize {
    1 << dim
}

pub fn color_patches(patches: &[PatchId]) -> Vec<usize> {
    patches.iter().map(PatchId::color).collect()
}

/// Batch size that keeps every color in a single batch.
pub const COLOR_BY_COLOR: usize = usize::MAX;

/// Ordered batches of colored patch lists driving every smoother loop.
///
/// `batches[b][k]` is the `b`-th run of at most `batch_size` patches of
/// color `k`, taken from the global order.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    dim: usize,
    level: usize,
    ordering: PatchOrdering,
    batch_size: usize,
    order: Vec<PatchId>,
    batches: Vec<Vec<Vec<PatchId>>>,
}

/// Builds the schedule for `patches` (one level) with batches of `batch_size`
/// patches per color.
pub fn make_schedule(
    patches: &[PatchId],
    ordering: PatchOrdering,
    batch_size: usize,
) -> Result<Schedule> {
    if batch_size == 0 {
        return invalid("batch size must be at least 1");
    }
    let first = patches.first().ok_or_else(|| Error::InvalidArgument("no patches".into()))?;
    let (dim, level) = (first.dim(), first.level());
    if patches.iter().any(|p| p.dim() != dim || p.level() != level) {
        return invalid("patches of a schedule must share dimension and level");
    }
    let order: Vec<PatchId> =
        ordering.permutation(patches).into_iter().map(|i| patches[i]).collect();

    let nc = n_colors(dim);
    let mut by_color: Vec<Vec<PatchId>> = vec![Vec::new(); nc];
    for p in &order {
        by_color[p.color()].push(*p);
    }
    let max_color = by_color.iter().map(Vec::len).max().unwrap_or(0);
    let n_batches = max_color.div_ceil(batch_size.min(max_color.max(1))).max(1);
    let mut batches = vec![vec![Vec::new(); nc]; n_batches];
    for (k, list) in by_color.iter().enumerate() {
        for (b, run) in list.chunks(batch_size.min(list.len().max(1))).enumerate() {
            batches[b][k] = run.to_vec();
        }
    }
    Ok(Schedule { dim, level, ordering, batch_size, order, batches })
}

impl Schedule {
    pub fn new(
        hierarchy: &MeshHierarchy,
        level: usize,
        ordering: PatchOrdering,
        batch_size: usize,
    ) -> Result<Self> {
        make_schedule(&hierarchy.enumerate_patches(level)?, ordering, batch_size)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn ordering(&self) -> PatchOrdering {
        self.ordering
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn n_colors(&self) -> usize {
        n_colors(self.dim)
    }

    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn n_patches(&self) -> usize {
        self.order.len()
    }

    /// Patches in global order (colors ignored).
    pub fn global_order(&self) -> &[PatchId] {
        &self.order
    }

    pub fn batches(&self) -> &[Vec<Vec<PatchId>>] {
        &self.batches
    }

    pub fn entry(&self, batch: usize, color: usize) -> &[PatchId] {
        &self.batches[batch][color]
    }

    /// `(batch, color, patches)` in execution order.
    pub fn entries(&self) -> impl DoubleEndedIterator<Item = (usize, usize, &[PatchId])> + '_ {
        self.batches.iter().enumerate().flat_map(|(b, colors)| {
            colors.iter().enumerate().map(move |(k, list)| (b, k, list.as_slice()))
        })
    }

    pub fn max_color_size(&self) -> usize {
        (0..self.n_colors())
            .map(|k| self.batches.iter().map(|b| b[k].len()).sum::<usize>())
            .max()
            .unwrap_or(0)
    }

    /// True when every color is processed in a single batch.
    pub fn is_color_by_color(&self) -> bool {
        self.batches.len() == 1
    }

    /// Patches of one color across all batches, in execution order.
    pub fn color_sequence(&self, color: usize) -> Vec<PatchId> {
        self.batches.iter().flat_map(|b| b[color].iter().copied()).collect()
    }

    /// Diagnostic text: one line per `(batch, color)` listing vertex
    /// coordinates in execution order.
    pub fn to_diagnostic_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# schedule dim={} level={} ordering={} batch_size={} batches={}",
            self.dim,
            self.level,
            self.ordering,
            if self.batch_size == COLOR_BY_COLOR { "all".to_string() } else { self.batch_size.to_string() },
            self.n_batches()
        );
        for (b, k, list) in self.entries() {
            let _ = write!(out, "batch {b} color {k}:");
            for p in list {
                let _ = write!(out, " {p}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid(level: usize, v: &[u32]) -> PatchId {
        PatchId::new(level, v).unwrap()
    }

    #[test]
    fn patch_counts() {
        let h2 = MeshHierarchy::new(2, 3).unwrap();
        let l0 = h2.enumerate_patches(0).unwrap();
        assert_eq!(l0, vec![pid(0, &[1, 1])]);
        let l1 = h2.enumerate_patches(1).unwrap();
        assert_eq!(l1.len(), 9);
        assert!(l1.iter().all(|p| p.coords().iter().all(|&c| (1..=3).contains(&c))));
        let h3 = MeshHierarchy::new(3, 1).unwrap();
        assert_eq!(h3.enumerate_patches(1).unwrap().len(), 27);
        assert!(matches!(h2.enumerate_patches(4), Err(Error::InvalidArgument(_))));
        assert!(MeshHierarchy::new(4, 1).is_err());
    }

    #[test]
    fn cells_per_dim_doubles() {
        for l in 0..6 {
            assert_eq!(MeshHierarchy::cells_per_dim(l + 1), 2 * MeshHierarchy::cells_per_dim(l));
        }
    }

    #[test]
    fn morton_ranks_of_unit_square() {
        let ps = [pid(1, &[1, 1]), pid(1, &[2, 1]), pid(1, &[1, 2]), pid(1, &[2, 2])];
        let codes: Vec<u64> = ps.iter().map(PatchId::morton_code).collect();
        assert_eq!(codes, vec![0, 1, 2, 3]);
    }

    #[test]
    fn morton_order_level_one() {
        let h = MeshHierarchy::new(2, 1).unwrap();
        let ps = h.enumerate_patches(1).unwrap();
        let perm = morton_order(&ps);
        let first: Vec<PatchId> = perm[..4].iter().map(|&i| ps[i]).collect();
        assert_eq!(first, vec![pid(1, &[1, 1]), pid(1, &[2, 1]), pid(1, &[1, 2]), pid(1, &[2, 2])]);
        let sorted: Vec<PatchId> = perm.iter().map(|&i| ps[i]).collect();
        let again: Vec<PatchId> = morton_order(&sorted).iter().map(|&i| sorted[i]).collect();
        assert_eq!(sorted, again);
    }

    #[test]
    fn hierarchical_puts_coarse_vertices_first() {
        let h = MeshHierarchy::new(2, 2).unwrap();
        let ps = h.enumerate_patches(1).unwrap();
        let order: Vec<PatchId> = hierarchical_order(&ps).iter().map(|&i| ps[i]).collect();
        assert_eq!(order[0], pid(1, &[2, 2]));
        let pos = |p: PatchId| order.iter().position(|&q| q == p).unwrap();
        assert!(pos(pid(1, &[2, 2])) < pos(pid(1, &[1, 1])));

        let ps0 = h.enumerate_patches(0).unwrap();
        assert_eq!(hierarchical_order(&ps0), morton_order(&ps0));

        let ps2 = h.enumerate_patches(2).unwrap();
        let mut groups = [0usize; 3];
        for p in &ps2 {
            groups[p.coarsest_level()] += 1;
        }
        assert_eq!(groups, [1, 8, 40]);
    }

    #[test]
    fn parity_colors() {
        assert_eq!(pid(3, &[3, 5]).color(), 3);
        assert_eq!(pid(3, &[2, 5]).color(), 2);
        assert_eq!(n_colors(2), 4);
        assert_eq!(n_colors(3), 8);
        let h = MeshHierarchy::new(2, 0).unwrap();
        let colors = color_patches(&h.enumerate_patches(0).unwrap());
        assert_eq!(colors, vec![3]);
    }

    #[test]
    fn batch_runs_with_short_tail() {
        let h = MeshHierarchy::new(2, 2).unwrap();
        // color 0 on level 2: even coordinates {2,4,6}^2 -> 9 patches
        let s = Schedule::new(&h, 2, PatchOrdering::ZCurve, 4).unwrap();
        let runs: Vec<usize> = s.batches().iter().map(|b| b[0].len()).collect();
        assert_eq!(runs, vec![4, 4, 1, 0]);
        assert_eq!(s.n_batches(), 4); // largest color has 16 patches
        assert!(matches!(
            Schedule::new(&h, 2, PatchOrdering::ZCurve, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn large_batch_is_color_by_color() {
        let h = MeshHierarchy::new(2, 2).unwrap();
        let a = Schedule::new(&h, 2, PatchOrdering::ZCurve, 16).unwrap();
        let b = Schedule::new(&h, 2, PatchOrdering::ZCurve, COLOR_BY_COLOR).unwrap();
        assert!(a.is_color_by_color() && b.is_color_by_color());
        assert_eq!(a.batches(), b.batches());
        let one = Schedule::new(&h, 2, PatchOrdering::ZCurve, 1).unwrap();
        assert!(one.entries().all(|(_, _, l)| l.len() <= 1));
    }

    #[test]
    fn single_patch_schedule() {
        let h = MeshHierarchy::new(3, 0).unwrap();
        let s = Schedule::new(&h, 0, PatchOrdering::Hierarchical, 8).unwrap();
        assert_eq!(s.n_batches(), 1);
        assert_eq!(s.n_patches(), 1);
        assert_eq!(s.entry(0, 7).len(), 1);
    }
}
