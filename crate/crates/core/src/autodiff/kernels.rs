//! Plain loops for the dense contractions. Row-major throughout.

use crate::scalar::Scalar;

/// `out (m×n) += a (m×k) · b (k×n)`
pub(crate) fn gemm<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out (m×n) += aᵀ · b` with `a (k×m)`, `b (k×n)`.
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == T::zero() {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += api * bv;
            }
        }
    }
}

/// `out (m×n) += a · bᵀ` with `a (m×k)`, `b (n×k)`.
pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * n + j] += acc;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Unfolds one image `(c_in, h, w)` into columns `(c_in·k·k, h_out·w_out)`.
pub(crate) fn im2col<T: Scalar>(img: &[T], g: &ConvGeom, cols: &mut [T]) {
    let npos = g.positions();
    for c in 0..g.c_in {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let r = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[r * npos..(r + 1) * npos];
                for oy in 0..g.h_out {
                    let iy = (oy + ky) as isize - g.pad as isize;
                    for ox in 0..g.w_out {
                        let ix = (ox + kx) as isize - g.pad as isize;
                        dst[oy * g.w_out + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                            img[(c * g.h + iy as usize) * g.w + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub(crate) fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, img: &mut [T]) {
    let npos = g.positions();
    for c in 0..g.c_in {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let r = (c * g.k + ky) * g.k + kx;
                let src = &cols[r * npos..(r + 1) * npos];
                for oy in 0..g.h_out {
                    let iy = (oy + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.w_out {
                        let ix = (ox + kx) as isize - g.pad as isize;
                        if ix < 0 || ix as usize >= g.w {
                            continue;
                        }
                        img[(c * g.h + iy as usize) * g.w + ix as usize] += src[oy * g.w_out + ox];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [1.0f64, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3×2
        let mut out = [0.0; 4];
        gemm(&a, &b, &mut out, 2, 3, 2);
        assert_eq!(out, [0.5, 7.0, 2.0, 16.0]);

        // aᵀ stored as 3×2
        let at = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut out2 = [0.0; 4];
        gemm_tn(&at, &b, &mut out2, 2, 3, 2);
        assert_eq!(out, out2);

        // bᵀ stored as 2×3
        let bt = [1.0f64, -1.0, 0.5, 0.0, 2.0, 1.0];
        let mut out3 = [0.0; 4];
        gemm_nt(&a, &bt, &mut out3, 2, 3, 2);
        assert_eq!(out, out3);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom { c_in: 2, h: 4, w: 3, k: 3, pad: 1, h_out: 4, w_out: 3 };
        let img: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let cols_probe: Vec<f64> = (0..g.patch() * g.positions()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; cols_probe.len()];
        im2col(&img, &g, &mut cols);
        let mut back = vec![0.0; img.len()];
        col2im(&cols_probe, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&cols_probe).map(|(a, b)| a * b).sum();
        let rhs: f64 = img.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
