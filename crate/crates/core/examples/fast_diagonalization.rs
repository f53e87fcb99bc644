//! Exact patch solves by fast diagonalization, checked against the
//! assembled patch matrix.

use patchmg::dense_oracle::dense_patch_matrix;
use patchmg::fdm::{apply_fdm, build_fdm};

fn main() -> patchmg::Result<()> {
    let (p, h) = (4, 1.0 / 16.0);
    for d in [2, 3] {
        let a = dense_patch_matrix(p, h, d)?;
        let fdm = build_fdm(p, h, d)?;
        let x: Vec<f64> = (0..a.size()).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let y = apply_fdm(&fdm, &a.matvec(&x))?;
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let sums = fdm.eigenvalue_sums();
        let (lo, hi) = sums.iter().fold((f64::MAX, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        println!(
            "d={d} p={p}: {} unknowns, |A^-1 A x - x|_inf = {err:.2e}, spectrum [{lo:.3e}, {hi:.3e}]",
            fdm.len()
        );
    }
    Ok(())
}
