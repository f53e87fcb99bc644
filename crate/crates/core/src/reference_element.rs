//! One-dimensional building blocks on the reference interval `[0, 1]`:
//! Gauss quadrature, Lagrange shape data on Gauss–Lobatto support points,
//! cell and vertex-patch matrices, and the generalized eigendecomposition
//! behind fast diagonalization.

use crate::error::{invalid, Error, Result};
use crate::linalg::{Cholesky, DenseMatrix};

/// Quadrature rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Legendre polynomial `P_n(x)` and `P_{n-1}(x)`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Gauss–Legendre rule with `n` points, mapped to `[0, 1]`.
pub fn gauss_quadrature(n: usize) -> Result<Quadrature1D> {
    if n == 0 {
        return invalid("quadrature needs at least one point");
    }
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, p_prev) = legendre_pair(n, x);
            let dp = nf * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, p_prev) = legendre_pair(n, x);
        let dp = nf * (x * p - p_prev) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push((0.5 * (1.0 + x), 0.5 * w));
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize to remove Newton round-off asymmetry.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[i].0 + 1.0 - nodes[j].0);
        let w = 0.5 * (nodes[i].1 + nodes[j].1);
        nodes[i] = (x, w);
        nodes[j] = (1.0 - x, w);
    }
    if n % 2 == 1 {
        nodes[n / 2].0 = 0.5;
    }
    Ok(Quadrature1D {
        points: nodes.iter().map(|n| n.0).collect(),
        weights: nodes.iter().map(|n| n.1).collect(),
    })
}

/// Gauss–Lobatto points on `[0, 1]` for polynomial degree `p`
/// (`p + 1` points, endpoints included).
pub fn gauss_lobatto_points(p: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return invalid("Gauss-Lobatto points need degree >= 1");
    }
    let pf = p as f64;
    let mut pts = vec![0.0; p + 1];
    pts[p] = 1.0;
    for i in 1..p {
        // Roots of P'_p on [-1, 1], Newton from the Chebyshev-Lobatto guess.
        let mut x = -(std::f64::consts::PI * i as f64 / pf).cos();
        for _ in 0..100 {
            let (lp, lp_prev) = legendre_pair(p, x);
            let d1 = pf * (x * lp - lp_prev) / (x * x - 1.0);
            let d2 = (2.0 * x * d1 - pf * (pf + 1.0) * lp) / (1.0 - x * x);
            let dx = d1 / d2;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        pts[i] = 0.5 * (1.0 + x);
    }
    pts.sort_by(f64::total_cmp);
    for i in 0..(p + 1) / 2 {
        let j = p - i;
        let x = 0.5 * (pts[i] + 1.0 - pts[j]);
        pts[i] = x;
        pts[j] = 1.0 - x;
    }
    if p % 2 == 0 {
        pts[p / 2] = 0.5;
    }
    Ok(pts)
}

/// Value of the Lagrange polynomial for `support[b]` at `x`.
pub fn lagrange_value(support: &[f64], b: usize, x: f64) -> f64 {
    support
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != b)
        .map(|(_, &sa)| (x - sa) / (support[b] - sa))
        .product()
}

/// Derivative of the Lagrange polynomial for `support[b]` at `x`.
pub fn lagrange_derivative(support: &[f64], b: usize, x: f64) -> f64 {
    let sb = support[b];
    let mut sum = 0.0;
    for (m, &sm) in support.iter().enumerate() {
        if m == b {
            continue;
        }
        let mut term = 1.0 / (sb - sm);
        for (a, &sa) in support.iter().enumerate() {
            if a != b && a != m {
                term *= (x - sa) / (sb - sa);
            }
        }
        sum += term;
    }
    sum
}

/// Lagrange basis of degree `p` on Gauss–Lobatto support points, tabulated
/// at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct ShapeData1D {
    pub degree: usize,
    pub support_points: Vec<f64>,
    pub quadrature: Quadrature1D,
    /// `values[b * n_q + q] = φ_b(x_q)`
    pub values: Vec<f64>,
    /// `gradients[b * n_q + q] = φ'_b(x_q)`
    pub gradients: Vec<f64>,
}

impl ShapeData1D {
    pub fn n_dofs(&self) -> usize {
        self.degree + 1
    }

    pub fn n_q(&self) -> usize {
        self.quadrature.len()
    }

    pub fn value(&self, b: usize, q: usize) -> f64 {
        self.values[b * self.n_q() + q]
    }

    pub fn gradient(&self, b: usize, q: usize) -> f64 {
        self.gradients[b * self.n_q() + q]
    }
}

pub fn shape_data_1d(p: usize, quad: &Quadrature1D) -> Result<ShapeData1D> {
    let support = gauss_lobatto_points(p)?;
    let nq = quad.len();
    let mut values = Vec::with_capacity((p + 1) * nq);
    let mut gradients = Vec::with_capacity((p + 1) * nq);
    for b in 0..=p {
        for &x in &quad.points {
            values.push(lagrange_value(&support, b, x));
            gradients.push(lagrange_derivative(&support, b, x));
        }
    }
    Ok(ShapeData1D {
        degree: p,
        support_points: support,
        quadrature: quad.clone(),
        values,
        gradients,
    })
}

/// Shape data with the default `p + 1` point Gauss rule.
pub fn default_shape_data(p: usize) -> Result<ShapeData1D> {
    if p == 0 {
        return invalid("polynomial degree must be >= 1");
    }
    shape_data_1d(p, &gauss_quadrature(p + 1)?)
}

/// 1D cell mass and stiffness matrices on a cell of size `h`.
pub fn cell_matrices_1d(p: usize, h: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    if !(h > 0.0) {
        return invalid(format!("cell size must be positive, got {h}"));
    }
    let shape = default_shape_data(p)?;
    let n = p + 1;
    let w = &shape.quadrature.weights;
    let mass = DenseMatrix::from_fn(n, |a, b| {
        h * (0..w.len()).map(|q| w[q] * (shape.value(a, q) * shape.value(b, q))).sum::<f64>()
    });
    let stiffness = DenseMatrix::from_fn(n, |a, b| {
        (0..w.len()).map(|q| w[q] * (shape.gradient(a, q) * shape.gradient(b, q))).sum::<f64>() / h
    });
    Ok((mass, stiffness))
}

/// Interior mass and stiffness matrices of a 1D vertex patch (two cells of
/// size `h`, patch-boundary nodes eliminated).
#[derive(Debug, Clone)]
pub struct PatchMatrices1D {
    pub degree: usize,
    pub cell_size: f64,
    pub mass: DenseMatrix,
    pub stiffness: DenseMatrix,
}

pub fn patch_matrices_1d(p: usize, h: f64) -> Result<PatchMatrices1D> {
    let (mc, kc) = cell_matrices_1d(p, h)?;
    let full = 2 * p + 1;
    let mut m = DenseMatrix::zeros(full);
    let mut k = DenseMatrix::zeros(full);
    for cell in 0..2 {
        let off = cell * p;
        for a in 0..=p {
            for b in 0..=p {
                m[(off + a, off + b)] += mc[(a, b)];
                k[(off + a, off + b)] += kc[(a, b)];
            }
        }
    }
    let n = 2 * p - 1;
    Ok(PatchMatrices1D {
        degree: p,
        cell_size: h,
        mass: DenseMatrix::from_fn(n, |i, j| m[(i + 1, j + 1)]),
        stiffness: DenseMatrix::from_fn(n, |i, j| k[(i + 1, j + 1)]),
    })
}

/// Solution of `K T = M T diag(Λ)` normalized so that `Tᵀ M T = I`.
/// Column `k` of `vectors` is the eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigenPairs {
    pub vectors: DenseMatrix,
    pub values: Vec<f64>,
}

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns the
/// eigenvalues (unsorted) and the orthogonal matrix whose columns are the
/// eigenvectors.
fn jacobi_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.size();
    let mut a = a.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

pub fn generalized_eigendecomposition(
    stiffness: &DenseMatrix,
    mass: &DenseMatrix,
) -> Result<GeneralizedEigenPairs> {
    let n = mass.size();
    if stiffness.size() != n {
        return invalid("mass and stiffness sizes differ");
    }
    let chol = Cholesky::new(mass)?;
    // C = L⁻¹ K L⁻ᵀ, built column by column.
    let mut c = DenseMatrix::zeros(n);
    let mut tmp = DenseMatrix::zeros(n);
    for j in 0..n {
        let mut col: Vec<f64> = (0..n).map(|i| stiffness[(i, j)]).collect();
        chol.forward_substitute(&mut col);
        for i in 0..n {
            tmp[(i, j)] = col[i];
        }
    }
    // tmp = L⁻¹ K; C = tmp L⁻ᵀ = (L⁻¹ tmpᵀ)ᵀ.
    for i in 0..n {
        let mut row: Vec<f64> = (0..n).map(|j| tmp[(i, j)]).collect();
        chol.forward_substitute(&mut row);
        for j in 0..n {
            c[(i, j)] = row[j];
        }
    }
    let c = c.add(&c.transpose()).scaled(0.5);
    let (values, q) = jacobi_eigen(&c);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut vectors = DenseMatrix::zeros(n);
    for (col, &k) in order.iter().enumerate() {
        let mut x: Vec<f64> = (0..n).map(|i| q[(i, k)]).collect();
        chol.backward_substitute(&mut x);
        // Fix the sign so the largest component is positive.
        let pivot = x.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * x[i];
        }
    }
    let values: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Decomposition(format!(
            "non-positive generalized eigenvalue {bad:e}"
        )));
    }
    Ok(GeneralizedEigenPairs { vectors, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_rule() {
        let q = gauss_quadrature(1).unwrap();
        assert_eq!(q.points, vec![0.5]);
        assert_eq!(q.weights, vec![1.0]);
    }

    #[test]
    fn two_point_rule() {
        let q = gauss_quadrature(2).unwrap();
        let s = 3f64.sqrt() / 6.0;
        assert!((q.points[0] - (0.5 - s)).abs() < 1e-15);
        assert!((q.points[1] - (0.5 + s)).abs() < 1e-15);
        assert!((q.weights[0] - 0.5).abs() < 1e-15 && (q.weights[1] - 0.5).abs() < 1e-15);
        // exact integration of x² and x³
        assert!((q.integrate(|x| x * x) - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.integrate(|x| x * x * x) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn three_point_rule_integrates_quintic() {
        let q = gauss_quadrature(3).unwrap();
        assert!((q.integrate(|x| x.powi(5)) - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn zero_points_rejected() {
        assert!(matches!(gauss_quadrature(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn quadrature_exactness_up_to_eight_points() {
        for n in 1..=8 {
            let q = gauss_quadrature(n).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(q.points.windows(2).all(|w| w[0] < w[1]));
            assert!(q.points[0] > 0.0 && q.points[n - 1] < 1.0);
            for k in 0..=(2 * n - 1) {
                let exact = 1.0 / (k as f64 + 1.0);
                let err = (q.integrate(|x| x.powi(k as i32)) - exact).abs();
                assert!(err < 1e-13, "n={n} k={k} err={err}");
            }
        }
    }

    #[test]
    fn lobatto_points_known_values() {
        assert_eq!(gauss_lobatto_points(1).unwrap(), vec![0.0, 1.0]);
        assert_eq!(gauss_lobatto_points(2).unwrap(), vec![0.0, 0.5, 1.0]);
        let p3 = gauss_lobatto_points(3).unwrap();
        let inner = 0.5 * (1.0 - 1.0 / 5f64.sqrt());
        assert!((p3[1] - inner).abs() < 1e-15);
    }

    #[test]
    fn linear_hats_at_midpoint() {
        let q = Quadrature1D { points: vec![0.5], weights: vec![1.0] };
        let s = shape_data_1d(1, &q).unwrap();
        assert_eq!(s.value(0, 0), 0.5);
        assert_eq!(s.value(1, 0), 0.5);
    }

    #[test]
    fn quadratic_middle_basis() {
        let q = Quadrature1D { points: vec![0.25], weights: vec![1.0] };
        let s = shape_data_1d(2, &q).unwrap();
        assert!((s.value(1, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity_and_nodality() {
        for p in 1..=6 {
            let s = default_shape_data(p).unwrap();
            for q in 0..s.n_q() {
                let v: f64 = (0..=p).map(|b| s.value(b, q)).sum();
                let g: f64 = (0..=p).map(|b| s.gradient(b, q)).sum();
                assert!((v - 1.0).abs() < 1e-12 && g.abs() < 1e-12);
            }
            for a in 0..=p {
                for b in 0..=p {
                    let d = lagrange_value(&s.support_points, b, s.support_points[a]);
                    assert_eq!(d, if a == b { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        for p in 1..=5 {
            let s = default_shape_data(p).unwrap();
            let f = |x: f64| (0..=p).map(|k| (k as f64 + 1.0) * x.powi(k as i32)).sum::<f64>();
            for q in 0..s.n_q() {
                let interp: f64 =
                    (0..=p).map(|b| f(s.support_points[b]) * s.value(b, q)).sum();
                assert!((interp - f(s.quadrature.points[q])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_cell_matrices() {
        let (m, k) = cell_matrices_1d(1, 1.0).unwrap();
        let expect_k = [[1.0, -1.0], [-1.0, 1.0]];
        let expect_m = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((k[(i, j)] - expect_k[i][j]).abs() < 1e-14);
                assert!((m[(i, j)] - expect_m[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cell_matrix_scaling_and_row_sums() {
        for p in 1..=5 {
            let (m1, k1) = cell_matrices_1d(p, 1.0).unwrap();
            let h = 0.125;
            let (mh, kh) = cell_matrices_1d(p, h).unwrap();
            for i in 0..=p {
                let row: f64 = k1.row(i).iter().sum();
                assert!(row.abs() < 1e-13);
                for j in 0..=p {
                    assert!((kh[(i, j)] - k1[(i, j)] / h).abs() < 1e-13 * (1.0 / h));
                    assert!((mh[(i, j)] - h * m1[(i, j)]).abs() < 1e-13);
                }
            }
        }
        assert!(matches!(cell_matrices_1d(1, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(cell_matrices_1d(1, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn linear_patch_matrices() {
        let pm = patch_matrices_1d(1, 0.5).unwrap();
        assert_eq!(pm.stiffness.size(), 1);
        assert!((pm.stiffness[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((pm.mass[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        let p5 = patch_matrices_1d(5, 0.1).unwrap();
        assert_eq!(p5.mass.size(), 9);
        assert_eq!(p5.stiffness.asymmetry(), 0.0);
        assert_eq!(p5.mass.asymmetry(), 0.0);
    }

    #[test]
    fn linear_generalized_eigenpair() {
        let pm = patch_matrices_1d(1, 0.5).unwrap();
        let e = generalized_eigendecomposition(&pm.stiffness, &pm.mass).unwrap();
        assert!((e.values[0] - 12.0).abs() < 1e-12);
        assert!((e.vectors[(0, 0)] - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn eigenpairs_satisfy_defining_relations() {
        for p in 1..=5 {
            let pm = patch_matrices_1d(p, 0.25).unwrap();
            let (k, m) = (&pm.stiffness, &pm.mass);
            let e = generalized_eigendecomposition(k, m).unwrap();
            let t = &e.vectors;
            let n = t.size();
            let tmt = t.transpose().matmul(&m.matmul(t));
            let kt = k.matmul(t);
            let mt = m.matmul(t);
            for i in 0..n {
                for j in 0..n {
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((tmt[(i, j)] - id).abs() < 1e-10, "p={p}");
                    let lhs = kt[(i, j)];
                    let rhs = mt[(i, j)] * e.values[j];
                    assert!((lhs - rhs).abs() < 1e-10 * k.norm(), "p={p}");
                }
            }
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            assert!(e.values.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn eigen_inverse_matches_dense_inverse() {
        // T diag(1/λ) Tᵀ is K⁻¹ when Tᵀ M T = I and Tᵀ K T = Λ.
        for p in 1..=5 {
            let pm = patch_matrices_1d(p, 0.5).unwrap();
            let e = generalized_eigendecomposition(&pm.stiffness, &pm.mass).unwrap();
            let n = e.values.len();
            let inv = DenseMatrix::from_fn(n, |i, j| {
                (0..n).map(|k| e.vectors[(i, k)] * e.vectors[(j, k)] / e.values[k]).sum()
            });
            let prod = inv.matmul(&pm.stiffness);
            for i in 0..n {
                for j in 0..n {
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((prod[(i, j)] - id).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn non_spd_mass_is_a_decomposition_error() {
        let k = DenseMatrix::identity(2);
        let m = DenseMatrix::from_row_major(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            generalized_eigendecomposition(&k, &m),
            Err(Error::Decomposition(_))
        ));
    }
}
