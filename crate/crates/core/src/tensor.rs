//! Direction-by-direction application of small dense matrices to tensors
//! stored with the first index running fastest.

/// Shape of a tensor of rank ≤ 3; unused trailing extents are 1.
pub(crate) type Shape = [usize; 3];

pub(crate) fn shape_len(shape: Shape) -> usize {
    shape[0] * shape[1] * shape[2]
}

/// Element of a tensor: a scalar, or a group of lanes processed together.
pub(crate) trait Lane: Copy {
    const ZERO: Self;
    /// `self + a · x`
    fn add_scaled(self, a: f64, x: Self) -> Self;
    fn scaled(self, a: f64) -> Self;
}

impl Lane for f64 {
    const ZERO: Self = 0.0;
    #[inline(always)]
    fn add_scaled(self, a: f64, x: Self) -> Self {
        self + a * x
    }
    #[inline(always)]
    fn scaled(self, a: f64) -> Self {
        self * a
    }
}

impl<const L: usize> Lane for [f64; L] {
    const ZERO: Self = [0.0; L];
    #[inline(always)]
    fn add_scaled(mut self, a: f64, x: Self) -> Self {
        for (s, xi) in self.iter_mut().zip(x) {
            *s += a * xi;
        }
        self
    }
    #[inline(always)]
    fn scaled(mut self, a: f64) -> Self {
        for s in self.iter_mut() {
            *s *= a;
        }
        self
    }
}

/// `dst = (I ⊗ … ⊗ A ⊗ … ⊗ I) src` with `A` (row-major, `rows × cols`)
/// acting along `axis`. `shape` is the input shape, with
/// `shape[axis] == cols`; the output has `rows` entries along `axis`.
pub(crate) fn apply_along<T: Lane>(
    mat: &[f64],
    rows: usize,
    cols: usize,
    axis: usize,
    shape: Shape,
    src: &[T],
    dst: &mut [T],
) {
    debug_assert_eq!(shape[axis], cols);
    debug_assert_eq!(mat.len(), rows * cols);
    let stride: usize = shape[..axis].iter().product();
    let outer: usize = shape[axis + 1..].iter().product();
    debug_assert!(src.len() >= stride * cols * outer);
    debug_assert!(dst.len() >= stride * rows * outer);

    if stride == 1 {
        for o in 0..outer {
            let s = &src[o * cols..(o + 1) * cols];
            let d = &mut dst[o * rows..(o + 1) * rows];
            for (r, dr) in d.iter_mut().enumerate() {
                let row = &mat[r * cols..(r + 1) * cols];
                *dr = row.iter().zip(s).fold(T::ZERO, |acc, (&a, &x)| acc.add_scaled(a, x));
            }
        }
        return;
    }

    for o in 0..outer {
        let s_block = &src[o * cols * stride..(o + 1) * cols * stride];
        let d_block = &mut dst[o * rows * stride..(o + 1) * rows * stride];
        for r in 0..rows {
            let d = &mut d_block[r * stride..(r + 1) * stride];
            d.fill(T::ZERO);
            for c in 0..cols {
                let a = mat[r * cols + c];
                let s = &s_block[c * stride..(c + 1) * stride];
                for (di, &si) in d.iter_mut().zip(s) {
                    *di = di.add_scaled(a, si);
                }
            }
        }
    }
}

pub(crate) fn with_axis(mut shape: Shape, axis: usize, extent: usize) -> Shape {
    shape[axis] = extent;
    shape
}

/// Shape of a `dim`-dimensional cube tensor with `n` entries per direction.
pub(crate) fn cube(dim: usize, n: usize) -> Shape {
    let mut s = [1; 3];
    for e in s.iter_mut().take(dim) {
        *e = n;
    }
    s
}
