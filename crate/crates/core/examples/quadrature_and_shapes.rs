//! Gauss and Gauss–Lobatto rules, Lagrange bases and the 1D cell matrices.

use patchmg::reference_element::{cell_matrices_1d, gauss_lobatto_points, gauss_quadrature, lagrange_value};

fn main() -> patchmg::Result<()> {
    let q = gauss_quadrature(4)?;
    println!("4-point Gauss rule on [0,1]");
    for (x, w) in q.points.iter().zip(&q.weights) {
        println!("  x = {x:.15}  w = {w:.15}");
    }
    // exact up to degree 7
    println!("  int x^7 = {:.15} (exact 0.125)", q.integrate(|x| x.powi(7)));

    let p = 3;
    let s = gauss_lobatto_points(p)?;
    println!("\nGauss-Lobatto support points, p = {p}: {s:?}");
    let x = 0.3;
    let sum: f64 = (0..=p).map(|b| lagrange_value(&s, b, x)).sum();
    println!("partition of unity at x = {x}: {sum:.15}");

    let (m, k) = cell_matrices_1d(1, 1.0)?;
    println!("\nlinear element, h = 1");
    println!("  mass      [{:.4} {:.4}; {:.4} {:.4}]", m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    println!("  stiffness [{:.4} {:.4}; {:.4} {:.4}]", k[(0, 0)], k[(0, 1)], k[(1, 0)], k[(1, 1)]);
    Ok(())
}
