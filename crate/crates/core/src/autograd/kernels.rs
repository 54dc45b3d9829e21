//! Dense loops behind the graph ops. All routines accumulate into `out`.

use super::tensor::Element;

/// out[m×n] += a[m×k] · b[k×n]
pub(crate) fn matmul_nn<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

/// out[m×k] += a[m×n] · b[k×n]ᵀ
pub(crate) fn matmul_nt<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc = acc + x * y;
            }
            out[i * k + p] = out[i * k + p] + acc;
        }
    }
}

/// out[k×n] += a[m×k]ᵀ · b[m×n]
pub(crate) fn matmul_tn<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }
    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }
    /// Rows of the column matrix: C·K·K.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
}

/// Unfolds one image [C×H×W] into columns [C·K·K × Ho·Wo].
pub(crate) fn im2col<T: Element>(img: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let pad = g.padding as isize;
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        dst[oy * wo + ox] = if iy >= 0
                            && ix >= 0
                            && (iy as usize) < g.height
                            && (ix as usize) < g.width
                        {
                            img[(c * g.height + iy as usize) * g.width + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Folds columns back into an image gradient, summing overlaps.
pub(crate) fn col2im<T: Element>(cols: &[T], g: &ConvGeom, img: &mut [T]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let pad = g.padding as isize;
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy as usize >= g.height {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        if ix < 0 || ix as usize >= g.width {
                            continue;
                        }
                        let idx = (c * g.height + iy as usize) * g.width + ix as usize;
                        img[idx] = img[idx] + src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

/// Index of the first maximum in each non-overlapping `size×size` window of a
/// [planes×H×W] block. Output is [planes×(H/size)×(W/size)].
pub(crate) fn maxpool_argmax<T: Element>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    size: usize,
) -> Vec<usize> {
    let (ho, wo) = (h / size, w / size);
    let mut idx = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                idx.push(best);
            }
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f64; 4];
        matmul_nn(&a, &b, &mut c, 2, 3, 2);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);

        // bᵀ as 2x3, then a · (bᵀ)ᵀ
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c2 = [0.0f64; 4];
        matmul_nt(&a, &bt, &mut c2, 2, 3, 2);
        assert_eq!(c, c2);

        // aᵀ stored 3x2; aᵀᵀ · b
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c3 = [0.0f64; 4];
        matmul_tn(&at, &b, &mut c3, 3, 2, 2);
        assert_eq!(c, c3);
    }

    #[test]
    fn im2col_identity_kernel() {
        let g = ConvGeom {
            channels: 1,
            height: 2,
            width: 2,
            kernel: 1,
            stride: 1,
            padding: 0,
        };
        let img = [1.0f32, 2.0, 3.0, 4.0];
        let mut cols = [0.0f32; 4];
        im2col(&img, &g, &mut cols);
        assert_eq!(cols, img);
        let mut back = [0.0f32; 4];
        col2im(&cols, &g, &mut back);
        assert_eq!(back, img);
    }

    #[test]
    fn padded_geometry() {
        let g = ConvGeom {
            channels: 3,
            height: 32,
            width: 32,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        assert_eq!((g.out_height(), g.out_width()), (16, 16));
        assert_eq!(g.patch_len(), 27);
    }
}
