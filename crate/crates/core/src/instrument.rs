//! Hooks through which the numerical kernels report vector accesses, and
//! the solution-vector access abstraction shared by the serial and the
//! thread-parallel smoothers.

use serde::{Deserialize, Serialize};

/// Arrays whose element accesses are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ArrayId {
    Solution = 0,
    Rhs = 1,
    Residual = 2,
    /// Per-cell DoF index tables.
    Metadata = 3,
}

impl ArrayId {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(ArrayId::Solution),
            1 => Some(ArrayId::Rhs),
            2 => Some(ArrayId::Residual),
            3 => Some(ArrayId::Metadata),
            _ => None,
        }
    }
}

/// Receives the element accesses of a kernel. `ENABLED = false` lets the
/// compiler drop every hook.
pub trait AccessObserver {
    const ENABLED: bool;
    /// Whether index-table reads are reported.
    fn metadata(&self) -> bool {
        false
    }
    fn read(&mut self, array: ArrayId, index: usize);
    fn write(&mut self, array: ArrayId, index: usize);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl AccessObserver for NoObserver {
    const ENABLED: bool = false;
    #[inline(always)]
    fn read(&mut self, _: ArrayId, _: usize) {}
    #[inline(always)]
    fn write(&mut self, _: ArrayId, _: usize) {}
}

/// Element-wise read and additive write access to the solution vector.
pub(crate) trait SolutionAccess {
    fn load(&self, index: usize) -> f64;
    fn add(&mut self, index: usize, value: f64);
}

impl SolutionAccess for [f64] {
    #[inline(always)]
    fn load(&self, index: usize) -> f64 {
        self[index]
    }
    #[inline(always)]
    fn add(&mut self, index: usize, value: f64) {
        self[index] += value;
    }
}

/// Solution vector shared by the workers of one colored loop.
///
/// Safe only while concurrently running patches write pairwise disjoint
/// index sets that no other running patch reads; same-color patches of a
/// schedule satisfy this.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SharedSolution {
    ptr: *mut f64,
    len: usize,
}

unsafe impl Send for SharedSolution {}
unsafe impl Sync for SharedSolution {}

impl SharedSolution {
    pub(crate) fn new(data: &mut [f64]) -> Self {
        Self { ptr: data.as_mut_ptr(), len: data.len() }
    }
}

impl SolutionAccess for SharedSolution {
    #[inline(always)]
    fn load(&self, index: usize) -> f64 {
        assert!(index < self.len);
        // SAFETY: in bounds; no concurrent writer touches `index` (see type docs).
        unsafe { self.ptr.add(index).read() }
    }
    #[inline(always)]
    fn add(&mut self, index: usize, value: f64) {
        assert!(index < self.len);
        // SAFETY: in bounds; this worker is the only one accessing `index`.
        unsafe {
            let p = self.ptr.add(index);
            p.write(p.read() + value);
        }
    }
}
