//! Brute-force references built from explicit Kronecker products of the 1D
//! cell matrices. Nothing here uses the sum-factorized kernels.

use crate::dof_map::{DofVector, GridLayout};
use crate::error::{invalid, Error, Result};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::reference_element::{cell_matrices_1d, patch_matrices_1d};

/// Largest interior size [`assemble_dense`] accepts.
pub const DENSE_MAX_DOFS: usize = 20_000;

/// `Σ_i M ⊗ … ⊗ K ⊗ … ⊗ M` with `K` in slot `i`; the last factor runs
/// fastest, matching x-fastest numbering.
pub fn kronecker_sum(mass: &DenseMatrix, stiffness: &DenseMatrix, dim: usize) -> DenseMatrix {
    let factor = |axis: usize, i: usize| if axis == i { stiffness } else { mass };
    let mut total: Option<DenseMatrix> = None;
    for i in 0..dim {
        let mut term = factor(dim - 1, i).clone();
        for axis in (0..dim - 1).rev() {
            term = term.kron(factor(axis, i));
        }
        total = Some(match total {
            None => term,
            Some(t) => t.add(&term),
        });
    }
    total.expect("dim >= 1")
}

/// Dense `(p+1)^d` cell stiffness matrix.
pub fn dense_cell_matrix(dim: usize, degree: usize, cell_size: f64) -> Result<DenseMatrix> {
    let (m, k) = cell_matrices_1d(degree, cell_size)?;
    Ok(kronecker_sum(&m, &k, dim))
}

/// Interior matrix of one vertex patch, `(2p−1)^d` square.
pub fn dense_patch_matrix(degree: usize, cell_size: f64, dim: usize) -> Result<DenseMatrix> {
    if !(1..=3).contains(&dim) {
        return invalid(format!("dimension must be 1, 2 or 3, got {dim}"));
    }
    let pm = patch_matrices_1d(degree, cell_size)?;
    Ok(kronecker_sum(&pm.mass, &pm.stiffness, dim))
}

/// Global indices of the non-boundary DoFs, ascending.
pub fn interior_indices(grid: &GridLayout) -> Vec<usize> {
    (0..grid.len()).filter(|&i| !grid.is_boundary(i)).collect()
}

pub fn to_interior(v: &DofVector) -> Vec<f64> {
    interior_indices(v.layout()).into_iter().map(|i| v.as_slice()[i]).collect()
}

pub fn from_interior(grid: GridLayout, x: &[f64]) -> Result<DofVector> {
    let idx = interior_indices(&grid);
    if idx.len() != x.len() {
        return invalid(format!("expected {} interior values, got {}", idx.len(), x.len()));
    }
    let mut v = DofVector::zeros(grid);
    for (&i, &xi) in idx.iter().zip(x) {
        v.as_mut_slice()[i] = xi;
    }
    Ok(v)
}

/// Assembled `A_ℓ` on the interior DoFs (Dirichlet rows and columns
/// eliminated), interior DoFs in ascending global order.
pub fn assemble_dense(dim: usize, degree: usize, level: usize) -> Result<DenseMatrix> {
    let grid = GridLayout::new(dim, degree, level)?;
    let interior = interior_indices(&grid);
    if interior.len() > DENSE_MAX_DOFS {
        return Err(Error::Resource(format!(
            "{} interior DoFs exceed the dense oracle cap of {DENSE_MAX_DOFS}",
            interior.len()
        )));
    }
    let mut position = vec![usize::MAX; grid.len()];
    for (k, &i) in interior.iter().enumerate() {
        position[i] = k;
    }
    let cell = dense_cell_matrix(dim, degree, grid.cell_size())?;
    let offsets = grid.cell_offsets();
    let n = interior.len();
    let mut data = vec![0.0; n * n];
    for corner in grid.cell_corners() {
        let base = grid.cell_base(&corner[..dim]);
        for (a, oa) in offsets.iter().enumerate() {
            let row = position[base + oa];
            if row == usize::MAX {
                continue;
            }
            for (b, ob) in offsets.iter().enumerate() {
                let col = position[base + ob];
                if col != usize::MAX {
                    data[row * n + col] += cell[(a, b)];
                }
            }
        }
    }
    DenseMatrix::from_row_major(n, data)
}

/// `A_ℓ u` cell by cell with dense cell matrices, for levels too large to
/// assemble.
pub fn kronecker_apply(u: &DofVector) -> Result<DofVector> {
    let grid = *u.layout();
    let cell = dense_cell_matrix(grid.dim(), grid.degree(), grid.cell_size())?;
    let offsets = grid.cell_offsets();
    let mut out = DofVector::zeros(grid);
    let (src, dst) = (u.as_slice(), out.as_mut_slice());
    let mut local = vec![0.0; offsets.len()];
    for corner in grid.cell_corners() {
        let base = grid.cell_base(&corner[..grid.dim()]);
        for (x, o) in local.iter_mut().zip(&offsets) {
            *x = src[base + o];
        }
        for (a, oa) in offsets.iter().enumerate() {
            dst[base + oa] += cell.row(a).iter().zip(&local).map(|(c, x)| c * x).sum::<f64>();
        }
    }
    out.zero_boundary();
    Ok(out)
}

/// Cholesky solve of an SPD system.
pub fn direct_solve(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != a.size() {
        return invalid(format!("matrix has size {}, right-hand side {}", a.size(), rhs.len()));
    }
    Ok(Cholesky::new(a)?.solve(rhs))
}

/// Exact discrete solution of `A_ℓ u = b` via the assembled matrix.
pub fn discrete_solution(b: &DofVector) -> Result<DofVector> {
    let g = b.layout();
    let a = assemble_dense(g.dim(), g.degree(), g.level())?;
    from_interior(*g, &direct_solve(&a, &to_interior(b))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::LaplaceOperator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_dimensional_harness() {
        let a = assemble_dense(1, 1, 0).unwrap();
        assert_eq!(a.size(), 1);
        assert!((a[(0, 0)] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn linear_patch() {
        let a = dense_patch_matrix(1, 0.5, 2).unwrap();
        assert!((a[(0, 0)] - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_positive_definite() {
        for (d, p, l) in [(2, 1, 2), (2, 5, 1), (3, 2, 1), (2, 3, 2)] {
            let a = assemble_dense(d, p, l).unwrap();
            assert!(a.asymmetry() < 1e-12 * a.max_abs());
            assert!(a.cholesky().is_ok());
        }
    }

    #[test]
    fn cap_enforced() {
        assert!(matches!(assemble_dense(3, 5, 2), Err(Error::Resource(_))));
    }

    #[test]
    fn identity_solve() {
        let x = direct_solve(&DenseMatrix::identity(3), &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 0.5]);
        let bad = DenseMatrix::from_row_major(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(direct_solve(&bad, &[1.0, 1.0]), Err(Error::Decomposition(_))));
    }

    #[test]
    fn both_references_agree_with_vmult() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let grid = GridLayout::new(2, 3, 2).unwrap();
        let u = DofVector::random(grid, &mut rng);
        let a = assemble_dense(2, 3, 2).unwrap();
        let dense = from_interior(grid, &a.matvec(&to_interior(&u))).unwrap();
        let kron = kronecker_apply(&u).unwrap();
        let fast = LaplaceOperator::new(grid).unwrap().apply(&u);
        let scale = dense.norm_inf();
        assert!(dense.max_abs_diff(&kron) < 1e-12 * scale);
        assert!(dense.max_abs_diff(&fast) < 1e-11 * scale);
    }

    #[test]
    fn residual_of_exact_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let grid = GridLayout::new(2, 2, 2).unwrap();
        let b = DofVector::random(grid, &mut rng);
        let u = discrete_solution(&b).unwrap();
        let r = LaplaceOperator::new(grid).unwrap().global_residual(&u, &b);
        assert!(r.norm_inf() < 1e-10 * b.norm_inf());
    }
}
