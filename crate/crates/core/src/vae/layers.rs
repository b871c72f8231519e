//! Convolution kernels over NHWC activations stored as `(n*h*w, c)` matrices.

use ndarray::{Array1, Array2, Axis};

/// Batch of feature maps; row `(b*h + y)*w + x` holds the channels of one pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Act {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Array2<f64>,
}

impl Act {
    pub fn channels(&self) -> usize {
        self.data.ncols()
    }
}

/// Geometry of a 'same'-padded square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_side: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_side(&self) -> usize {
        self.in_side.div_ceil(self.stride)
    }

    /// Leading padding; the trailing side absorbs any odd remainder.
    pub fn pad(&self) -> usize {
        let total = ((self.out_side() - 1) * self.stride + self.kernel).saturating_sub(self.in_side);
        total / 2
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    /// Source pixel of kernel tap `(ky, kx)` for output `(oy, ox)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad())?;
        let x = (ox * self.stride + kx).checked_sub(self.pad())?;
        (y < self.in_side && x < self.in_side).then_some((y, x))
    }
}

/// Unfolds input patches into rows: `(n*oh*ow, k*k*in_c)`.
pub fn im2col(x: &Act, g: &ConvGeom) -> Array2<f64> {
    debug_assert_eq!((x.h, x.w, x.channels()), (g.in_side, g.in_side, g.in_c));
    let os = g.out_side();
    let mut cols = Array2::zeros((x.n * os * os, g.patch_len()));
    let src = x.data.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("standard layout");
    let c = g.in_c;
    for b in 0..x.n {
        for oy in 0..os {
            for ox in 0..os {
                let row = ((b * os + oy) * os + ox) * g.patch_len();
                for ky in 0..g.kernel {
                    for kx in 0..g.kernel {
                        if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                            let s = ((b * g.in_side + y) * g.in_side + xx) * c;
                            let d = row + (ky * g.kernel + kx) * c;
                            dst[d..d + c].copy_from_slice(&src[s..s + c]);
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back onto the input grid.
pub fn col2im(cols: &Array2<f64>, n: usize, g: &ConvGeom) -> Act {
    let os = g.out_side();
    debug_assert_eq!(cols.dim(), (n * os * os, g.patch_len()));
    let c = g.in_c;
    let mut data = Array2::zeros((n * g.in_side * g.in_side, c));
    let src = cols.as_slice().expect("standard layout");
    let dst = data.as_slice_mut().expect("standard layout");
    for b in 0..n {
        for oy in 0..os {
            for ox in 0..os {
                let row = ((b * os + oy) * os + ox) * g.patch_len();
                for ky in 0..g.kernel {
                    for kx in 0..g.kernel {
                        if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                            let d = ((b * g.in_side + y) * g.in_side + xx) * c;
                            let s = row + (ky * g.kernel + kx) * c;
                            for i in 0..c {
                                dst[d + i] += src[s + i];
                            }
                        }
                    }
                }
            }
        }
    }
    Act {
        n,
        h: g.in_side,
        w: g.in_side,
        data,
    }
}

pub fn add_bias(m: &mut Array2<f64>, b: &Array1<f64>) {
    m.rows_mut().into_iter().for_each(|mut r| r += b);
}

pub fn bias_grad(dy: &Array2<f64>) -> Array1<f64> {
    dy.sum_axis(Axis(0))
}

pub fn relu(m: &mut Array2<f64>) {
    m.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes gradient entries where the forward ReLU output was zero.
pub fn relu_backward(grad: &mut Array2<f64>, out: &Array2<f64>) {
    ndarray::Zip::from(grad).and(out).for_each(|g, &o| {
        if o <= 0.0 {
            *g = 0.0;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_halves_sides() {
        for (side, out) in [(28, 14), (14, 7), (8, 4), (4, 2), (7, 4)] {
            let g = ConvGeom {
                in_side: side,
                in_c: 1,
                out_c: 1,
                kernel: 3,
                stride: 2,
            };
            assert_eq!(g.out_side(), out);
        }
        let g = ConvGeom {
            in_side: 28,
            in_c: 1,
            out_c: 1,
            kernel: 3,
            stride: 1,
        };
        assert_eq!((g.out_side(), g.pad()), (28, 1));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom {
            in_side: 6,
            in_c: 2,
            out_c: 1,
            kernel: 3,
            stride: 2,
        };
        let n = 2;
        let x = Act {
            n,
            h: 6,
            w: 6,
            data: Array2::from_shape_fn((n * 36, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0),
        };
        let os = g.out_side();
        let y = Array2::from_shape_fn((n * os * os, g.patch_len()), |(i, j)| {
            ((i * 5 + j * 13) % 7) as f64 - 3.0
        });
        let lhs = (&im2col(&x, &g) * &y).sum();
        let rhs = (&x.data * &col2im(&y, n, &g).data).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
