//! Exact inverse of the patch-interior Laplace matrix by fast
//! diagonalization, applied direction by direction.

use crate::error::{invalid, Result};
use crate::reference_element::{generalized_eigendecomposition, patch_matrices_1d};
use crate::tensor::{apply_along, cube};

#[derive(Debug, Clone, PartialEq)]
pub struct FdmDecomposition {
    dim: usize,
    n: usize,
    /// `n × n` row-major eigenvector matrix `T` (columns are eigenvectors).
    vectors: Vec<f64>,
    vectors_t: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// `1 / Σ_i λ_{k_i}` over the tensor index `k`, x fastest.
    inv_eigsum: Vec<f64>,
}

pub fn build_fdm(degree: usize, cell_size: f64, dim: usize) -> Result<FdmDecomposition> {
    if !(1..=3).contains(&dim) {
        return invalid(format!("dimension must be 1, 2 or 3, got {dim}"));
    }
    if !(cell_size > 0.0) {
        return invalid(format!("cell size must be positive, got {cell_size}"));
    }
    let pm = patch_matrices_1d(degree, cell_size)?;
    let eig = generalized_eigendecomposition(&pm.stiffness, &pm.mass)?;
    let n = eig.values.len();
    let vectors = eig.vectors.as_slice().to_vec();
    let vectors_t = eig.vectors.transpose().as_slice().to_vec();
    let total = n.pow(dim as u32);
    let inv_eigsum = (0..total)
        .map(|mut lin| {
            let mut s = 0.0;
            for _ in 0..dim {
                s += eig.values[lin % n];
                lin /= n;
            }
            1.0 / s
        })
        .collect();
    Ok(FdmDecomposition { dim, n, vectors, vectors_t, eigenvalues: eig.values, inv_eigsum })
}

impl FdmDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior DoFs per direction, `2p − 1`.
    pub fn n_1d(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.inv_eigsum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_eigsum.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue_sums(&self) -> Vec<f64> {
        self.inv_eigsum.iter().map(|v| 1.0 / v).collect()
    }

    pub fn inverse_eigenvalue_sums(&self) -> &[f64] {
        &self.inv_eigsum
    }

    /// `dst = (⊗T) diag(1/Σλ) (⊗Tᵀ) src` using two work arrays of length
    /// [`len`](Self::len).
    pub fn apply_into(&self, src: &[f64], dst: &mut [f64], work: &mut [f64]) {
        let (d, n) = (self.dim, self.n);
        let shape = cube(d, n);
        debug_assert_eq!(src.len(), self.len());
        // The result ends up in `dst` after 2d ping-pong steps.
        dst.copy_from_slice(src);
        for axis in 0..d {
            apply_along(&self.vectors_t, n, n, axis, shape, dst, work);
            dst.copy_from_slice(work);
        }
        for (x, s) in dst.iter_mut().zip(&self.inv_eigsum) {
            *x *= s;
        }
        for axis in 0..d {
            apply_along(&self.vectors, n, n, axis, shape, dst, work);
            dst.copy_from_slice(work);
        }
    }
}

pub fn apply_fdm(fdm: &FdmDecomposition, r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != fdm.len() {
        return invalid(format!("local residual has {} entries, expected {}", r.len(), fdm.len()));
    }
    let mut dst = vec![0.0; r.len()];
    let mut work = vec![0.0; r.len()];
    fdm.apply_into(r, &mut dst, &mut work);
    Ok(dst)
}
