//! 2-D cross-correlation and 2×2 max pooling, forward and backward.
//!
//! Convolution lowers to a matrix product over an im2col buffer of shape
//! (C_in·K·K) × (H'·W'). Kernels are not flipped.

use super::kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of (K−1)/2 on every side; output keeps H×W.
    Same,
    /// No padding; output is (H−K+1)×(W−K+1).
    Valid,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(c_in: usize, h: usize, w: usize, k: usize, padding: Padding) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel size {k} is even")));
        }
        let (pad, oh, ow) = match padding {
            Padding::Same => ((k - 1) / 2, h, w),
            Padding::Valid => {
                if h < k || w < k {
                    return Err(Error::shape(format!(
                        "{h}x{w} input is smaller than {k}x{k} kernel under valid padding"
                    )));
                }
                (0, h - k + 1, w - k + 1)
            }
        };
        Ok(ConvGeom {
            c_in,
            h,
            w,
            k,
            pad,
            oh,
            ow,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    pub fn im2col<T: Scalar>(&self, input: &[T]) -> Vec<T> {
        let (k, pad, oh, ow) = (self.k, self.pad as isize, self.oh, self.ow);
        if k == 1 && pad == 0 {
            return input.to_vec();
        }
        let mut col = vec![T::zero(); self.col_rows() * self.out_pixels()];
        for ci in 0..self.c_in {
            let plane = &input[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = ox as isize + kx as isize - pad;
                            if ix >= 0 && ix < self.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    /// Scatter-adds a column buffer back onto an input-shaped gradient.
    pub fn col2im_acc<T: Scalar>(&self, col: &[T], out: &mut [T]) {
        let (k, pad, oh, ow) = (self.k, self.pad as isize, self.oh, self.ow);
        if k == 1 && pad == 0 {
            for (o, &c) in out.iter_mut().zip(col) {
                *o += c;
            }
            return;
        }
        for ci in 0..self.c_in {
            let plane = &mut out[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &col[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..ow {
                            let ix = ox as isize + kx as isize - pad;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `out += kernels ⊛ input` for one sample; `out` is C_out×H'×W'.
    pub fn forward_acc<T: Scalar>(&self, input: &[T], kernels: &[T], c_out: usize, out: &mut [T]) {
        let col = self.im2col(input);
        gemm_acc(
            kernels,
            &col,
            out,
            c_out,
            self.col_rows(),
            self.out_pixels(),
        );
    }

    /// Accumulates kernel and input gradients for one sample.
    pub fn backward_acc<T: Scalar>(
        &self,
        input: &[T],
        kernels: &[T],
        c_out: usize,
        upstream: &[T],
        d_kernels: &mut [T],
        d_input: Option<&mut [T]>,
    ) {
        let col = self.im2col(input);
        let (rows, pix) = (self.col_rows(), self.out_pixels());
        gemm_nt_acc(upstream, &col, d_kernels, c_out, pix, rows);
        if let Some(d_input) = d_input {
            let mut d_col = vec![T::zero(); rows * pix];
            gemm_tn_acc(kernels, upstream, &mut d_col, c_out, rows, pix);
            self.col2im_acc(&d_col, d_input);
        }
    }
}

fn conv_shapes<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    pad: Padding,
) -> Result<(ConvGeom, usize)> {
    if input.rank() != 3 || kernels.rank() != 4 {
        return Err(Error::shape(format!(
            "conv2d expects C×H×W input and C_out×C_in×K×K kernels, got {:?} and {:?}",
            input.dims(),
            kernels.dims()
        )));
    }
    let (c_in, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let (c_out, kc, kh, kw) = (
        kernels.dims()[0],
        kernels.dims()[1],
        kernels.dims()[2],
        kernels.dims()[3],
    );
    if kc != c_in || kh != kw {
        return Err(Error::shape(format!(
            "kernels {:?} do not fit input {:?}",
            kernels.dims(),
            input.dims()
        )));
    }
    Ok((ConvGeom::new(c_in, h, w, kh, pad)?, c_out))
}

/// Cross-correlation of a C_in×H×W input with C_out×C_in×K×K kernels plus a
/// per-channel bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    pad: Padding,
) -> Result<Tensor<T>> {
    let (geom, c_out) = conv_shapes(input, kernels, pad)?;
    if bias.dims() != [c_out] {
        return Err(Error::shape(format!(
            "bias {:?} does not match {c_out} output channels",
            bias.dims()
        )));
    }
    let pix = geom.out_pixels();
    let mut out = vec![T::zero(); c_out * pix];
    for (co, &b) in bias.data().iter().enumerate() {
        out[co * pix..(co + 1) * pix]
            .iter_mut()
            .for_each(|v| *v = b);
    }
    geom.forward_acc(input.data(), kernels.data(), c_out, &mut out);
    Ok(Tensor::from_parts(vec![c_out, geom.oh, geom.ow], out))
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub d_input: Tensor<T>,
    pub d_kernels: Tensor<T>,
    pub d_bias: Tensor<T>,
}

/// Gradients of `⟨conv2d(input, kernels, bias), upstream⟩` with respect to
/// every argument.
pub fn conv2d_grad<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    upstream: &Tensor<T>,
    pad: Padding,
) -> Result<ConvGrads<T>> {
    let (geom, c_out) = conv_shapes(input, kernels, pad)?;
    if upstream.dims() != [c_out, geom.oh, geom.ow] {
        return Err(Error::shape(format!(
            "upstream {:?} does not match conv output [{c_out}, {}, {}]",
            upstream.dims(),
            geom.oh,
            geom.ow
        )));
    }
    let mut d_input = input.zeros_like();
    let mut d_kernels = kernels.zeros_like();
    geom.backward_acc(
        input.data(),
        kernels.data(),
        c_out,
        upstream.data(),
        d_kernels.data_mut(),
        Some(d_input.data_mut()),
    );
    let pix = geom.out_pixels();
    let d_bias = (0..c_out)
        .map(|co| {
            upstream.data()[co * pix..(co + 1) * pix]
                .iter()
                .copied()
                .sum()
        })
        .collect();
    Ok(ConvGrads {
        d_input,
        d_kernels,
        d_bias: Tensor::from_parts(vec![c_out], d_bias),
    })
}

#[derive(Clone, Debug)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    /// Flat input index of the winning element of each output cell.
    pub argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2 over a C×H×W tensor. Ties go to the first
/// element in row-major order within the block.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>) -> Result<PoolOutput<T>> {
    if input.rank() != 3 {
        return Err(Error::shape(format!(
            "maxpool2d expects C×H×W, got {:?}",
            input.dims()
        )));
    }
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!(
            "maxpool2d needs even H and W, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_parts(vec![c, oh, ow], out),
        argmax,
    })
}

/// Routes `upstream` to the recorded argmax positions; zero elsewhere.
pub fn maxpool2d_backward<T: Scalar>(
    input_dims: &[usize],
    argmax: &[usize],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    if upstream.len() != argmax.len() {
        return Err(Error::shape(format!(
            "upstream has {} elements, argmax map has {}",
            upstream.len(),
            argmax.len()
        )));
    }
    let mut d = Tensor::zeros(input_dims)?;
    for (&idx, &g) in argmax.iter().zip(upstream.data()) {
        d.data_mut()[idx] += g;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_kernel_is_identity() {
        let x = Tensor::<f32>::from_fn(&[1, 3, 3], |i| i as f32 - 4.0).unwrap();
        let mut k = Tensor::<f32>::zeros(&[1, 1, 3, 3]).unwrap();
        k.data_mut()[4] = 1.0;
        let b = Tensor::<f32>::zeros(&[1]).unwrap();
        assert_eq!(conv2d(&x, &k, &b, Padding::Same).unwrap(), x);
    }

    #[test]
    fn ones_kernel_counts_overlap() {
        let x = Tensor::<f32>::full(&[1, 3, 3], 1.0).unwrap();
        let k = Tensor::<f32>::full(&[1, 1, 3, 3], 1.0).unwrap();
        let b = Tensor::<f32>::zeros(&[1]).unwrap();
        let y = conv2d(&x, &k, &b, Padding::Same).unwrap();
        assert_eq!(y.get(&[0, 1, 1]), Some(9.0));
        for corner in [[0, 0, 0], [0, 0, 2], [0, 2, 0], [0, 2, 2]] {
            assert_eq!(y.get(&corner), Some(4.0));
        }
        let v = conv2d(&x, &k, &b, Padding::Valid).unwrap();
        assert_eq!(v.dims(), &[1, 1, 1]);
        assert_eq!(v.data(), &[9.0]);
    }

    #[test]
    fn conv_errors() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2]).unwrap();
        let even = Tensor::<f32>::zeros(&[1, 1, 2, 2]).unwrap();
        let b = Tensor::<f32>::zeros(&[1]).unwrap();
        assert!(conv2d(&x, &even, &b, Padding::Same).is_err());
        let k3 = Tensor::<f32>::zeros(&[1, 1, 3, 3]).unwrap();
        assert!(conv2d(&x, &k3, &b, Padding::Valid).is_err());
        let up = Tensor::<f32>::zeros(&[1, 3, 3]).unwrap();
        assert!(conv2d_grad(&x, &k3, &up, Padding::Same).is_err());
    }

    #[test]
    fn conv_grad_is_linear_in_upstream() {
        let x =
            Tensor::<f64>::from_fn(&[2, 4, 4], |i| ((i * 37) % 11) as f64 / 11.0 - 0.5).unwrap();
        let k =
            Tensor::<f64>::from_fn(&[3, 2, 3, 3], |i| ((i * 17) % 13) as f64 / 13.0 - 0.5).unwrap();
        let zero = Tensor::<f64>::zeros(&[3, 4, 4]).unwrap();
        let g = conv2d_grad(&x, &k, &zero, Padding::Same).unwrap();
        assert!(g
            .d_input
            .data()
            .iter()
            .chain(g.d_kernels.data())
            .chain(g.d_bias.data())
            .all(|&v| v == 0.0));

        let up = Tensor::<f64>::from_fn(&[3, 4, 4], |i| ((i * 7) % 5) as f64 - 2.0).unwrap();
        let g1 = conv2d_grad(&x, &k, &up, Padding::Same).unwrap();
        let g2 = conv2d_grad(&x, &k, &up.scale(2.0), Padding::Same).unwrap();
        assert_eq!(g1.d_input.scale(2.0), g2.d_input);
        assert_eq!(g1.d_kernels.scale(2.0), g2.d_kernels);
        assert_eq!(g1.d_bias.scale(2.0), g2.d_bias);
    }

    #[test]
    fn maxpool_cases() {
        let x = Tensor::<f32>::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2d(&x).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
        let c = Tensor::<f32>::full(&[2, 4, 4], 0.25).unwrap();
        let pc = maxpool2d(&c).unwrap();
        assert!(pc.output.data().iter().all(|&v| v == 0.25));
        let odd = Tensor::<f32>::zeros(&[1, 3, 4]).unwrap();
        assert!(maxpool2d(&odd).is_err());

        let up = Tensor::<f32>::full(&[1, 1, 1], 1.0).unwrap();
        let d = maxpool2d_backward(x.dims(), &p.argmax, &up).unwrap();
        assert_eq!(d.data(), &[0.0, 0.0, 0.0, 1.0]);
    }
}
