//! 2D convolution and its transpose, lowered to GEMM through im2col.
//!
//! Conv weights are `[out_channels, in_channels, k, k]`. Transposed
//! convolution weights are `[in_channels, out_channels, k, k]`, so a conv's
//! weight tensor used unchanged in `deconv2d_forward` computes the exact
//! adjoint of that conv.

use super::real::{gemm, MatRef};
use super::{LayerGrads, LayerParams, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl Geometry {
    /// Geometry of a convolution over a `channels x height x width` image.
    fn conv(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidInput("stride must be positive".into()));
        }
        if height + 2 * padding < kernel || width + 2 * padding < kernel {
            return Err(Error::InvalidInput(format!(
                "kernel {kernel} larger than padded input {height}x{width} (padding {padding})"
            )));
        }
        Ok(Geometry {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_height: (height + 2 * padding - kernel) / stride + 1,
            out_width: (width + 2 * padding - kernel) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }
}

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

pub fn deconv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input - 1) * stride + kernel - 2 * padding
}

fn im2col<T: Real>(img: &[T], g: &Geometry, cols: &mut [T]) {
    let k = g.kernel;
    let n_cols = g.col_cols();
    for c in 0..g.channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * n_cols..(row + 1) * n_cols];
                for oy in 0..g.out_height {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * g.out_width..(oy + 1) * g.out_width];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &img[(c * g.height + iy as usize) * g.width..][..g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *v = if ix < 0 || ix >= g.width as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-add of columns back to the image; adjoint of [`im2col`].
fn col2im<T: Real>(cols: &[T], g: &Geometry, img: &mut [T]) {
    let k = g.kernel;
    let n_cols = g.col_cols();
    for c in 0..g.channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * n_cols..(row + 1) * n_cols];
                for oy in 0..g.out_height {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut img[(c * g.height + iy as usize) * g.width..][..g.width];
                    for ox in 0..g.out_width {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * g.out_width + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Views rank-3 input as a batch of one. Returns (batch, c, h, w, was_rank3).
fn nchw(t: &Tensor<impl Real>, op: &'static str) -> Result<(usize, usize, usize, usize, bool)> {
    match *t.shape() {
        [c, h, w] => Ok((1, c, h, w, true)),
        [n, c, h, w] => Ok((n, c, h, w, false)),
        _ => Err(Error::shape(op, &[0, 0, 0, 0], t.shape())),
    }
}

fn sample<T: Real>(t: &Tensor<T>, n: usize, b: usize) -> &[T] {
    let stride = t.len() / n;
    &t.data()[b * stride..(b + 1) * stride]
}

fn sample_mut<T: Real>(t: &mut Tensor<T>, n: usize, b: usize) -> &mut [T] {
    let stride = t.len() / n;
    &mut t.data_mut()[b * stride..(b + 1) * stride]
}

fn out_shape(n: usize, c: usize, h: usize, w: usize, rank3: bool) -> Vec<usize> {
    if rank3 {
        vec![c, h, w]
    } else {
        vec![n, c, h, w]
    }
}

fn square_kernel<T: Real>(params: &LayerParams<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    match *params.weight.shape() {
        [a, b, k, k2] if k == k2 && params.bias.len() > 0 => Ok((a, b, k)),
        _ => Err(Error::shape(op, &[0, 0, 0, 0], params.weight.shape())),
    }
}

fn check_bias<T: Real>(params: &LayerParams<T>, len: usize, op: &'static str) -> Result<()> {
    if params.bias.shape() != [len] {
        return Err(Error::shape(op, &[len], params.bias.shape()));
    }
    Ok(())
}

/// Strided, zero-padded 2D convolution. Input `[N,C,H,W]` or `[C,H,W]`.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    params: &LayerParams<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w, rank3) = nchw(input, "conv2d")?;
    let (c_out, c_in, k) = square_kernel(params, "conv2d")?;
    if c_in != c {
        return Err(Error::shape("conv2d", &[c_out, c, k, k], params.weight.shape()));
    }
    check_bias(params, c_out, "conv2d bias")?;
    let g = Geometry::conv(c, h, w, k, stride, padding)?;
    let plane = g.col_cols();
    let mut out = Tensor::zeros(&out_shape(n, c_out, g.out_height, g.out_width, rank3));
    let mut cols = vec![T::zero(); g.col_rows() * plane];
    let wmat = MatRef::new(params.weight.data(), c_out, g.col_rows());
    for b in 0..n {
        im2col(sample(input, n, b), &g, &mut cols);
        let dst = sample_mut(&mut out, n, b);
        for (co, row) in dst.chunks_mut(plane).enumerate() {
            row.fill(params.bias.data()[co]);
        }
        gemm(T::one(), wmat, MatRef::new(&cols, g.col_rows(), plane), T::one(), dst);
    }
    Ok(out)
}

/// Backward pass of [`conv2d_forward`]. Returns the input gradient (when
/// requested) and the parameter gradients.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    params: &LayerParams<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, LayerGrads<T>)> {
    let (n, c, h, w, rank3) = nchw(input, "conv2d_backward")?;
    let (c_out, c_in, k) = square_kernel(params, "conv2d_backward")?;
    if c_in != c {
        return Err(Error::shape("conv2d_backward", &[c_out, c, k, k], params.weight.shape()));
    }
    let g = Geometry::conv(c, h, w, k, stride, padding)?;
    let expect = out_shape(n, c_out, g.out_height, g.out_width, rank3);
    if grad_out.shape() != expect.as_slice() {
        return Err(Error::shape("conv2d_backward grad", &expect, grad_out.shape()));
    }
    let plane = g.col_cols();
    let rows = g.col_rows();
    let mut grads = params.zero_grads();
    let mut grad_in = need_input_grad.then(|| Tensor::zeros(input.shape()));
    let mut cols = vec![T::zero(); rows * plane];
    let wmat = MatRef::new(params.weight.data(), c_out, rows);
    for b in 0..n {
        let go = sample(grad_out, n, b);
        im2col(sample(input, n, b), &g, &mut cols);
        gemm(
            T::one(),
            MatRef::new(go, c_out, plane),
            MatRef::new(&cols, rows, plane).t(),
            T::one(),
            grads.weight.data_mut(),
        );
        for (co, row) in go.chunks(plane).enumerate() {
            grads.bias.data_mut()[co] += row.iter().copied().sum::<T>();
        }
        if let Some(gi) = grad_in.as_mut() {
            gemm(T::one(), wmat.t(), MatRef::new(go, c_out, plane), T::zero(), &mut cols);
            col2im(&cols, &g, sample_mut(gi, n, b));
        }
    }
    Ok((grad_in, grads))
}

/// Transposed convolution, the adjoint of a conv with the same weights and
/// geometry. Output spatial size is `(in - 1) * stride - 2 * padding + k`.
pub fn deconv2d_forward<T: Real>(
    input: &Tensor<T>,
    params: &LayerParams<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w, rank3) = nchw(input, "deconv2d")?;
    let (c_in, c_out, k) = square_kernel(params, "deconv2d")?;
    if c_in != c {
        return Err(Error::shape("deconv2d", &[c, c_out, k, k], params.weight.shape()));
    }
    check_bias(params, c_out, "deconv2d bias")?;
    if stride == 0 || (h.max(1) - 1) * stride + k < 2 * padding + 1 || (w.max(1) - 1) * stride + k < 2 * padding + 1 {
        return Err(Error::InvalidInput("deconv2d geometry yields empty output".into()));
    }
    let (ho, wo) = (deconv_output_size(h, k, stride, padding), deconv_output_size(w, k, stride, padding));
    let g = Geometry::conv(c_out, ho, wo, k, stride, padding)?;
    debug_assert_eq!((g.out_height, g.out_width), (h, w));
    let rows = g.col_rows();
    let plane = g.col_cols();
    let mut out = Tensor::zeros(&out_shape(n, c_out, ho, wo, rank3));
    let mut cols = vec![T::zero(); rows * plane];
    let wmat = MatRef::new(params.weight.data(), c_in, rows);
    for b in 0..n {
        gemm(T::one(), wmat.t(), MatRef::new(sample(input, n, b), c_in, plane), T::zero(), &mut cols);
        let dst = sample_mut(&mut out, n, b);
        col2im(&cols, &g, dst);
        for (co, chan) in dst.chunks_mut(ho * wo).enumerate() {
            let bias = params.bias.data()[co];
            chan.iter_mut().for_each(|v| *v += bias);
        }
    }
    Ok(out)
}

/// Backward pass of [`deconv2d_forward`].
pub fn deconv2d_backward<T: Real>(
    input: &Tensor<T>,
    params: &LayerParams<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, LayerGrads<T>)> {
    let (n, c, h, w, rank3) = nchw(input, "deconv2d_backward")?;
    let (c_in, c_out, k) = square_kernel(params, "deconv2d_backward")?;
    if c_in != c {
        return Err(Error::shape("deconv2d_backward", &[c, c_out, k, k], params.weight.shape()));
    }
    let (ho, wo) = (deconv_output_size(h, k, stride, padding), deconv_output_size(w, k, stride, padding));
    let expect = out_shape(n, c_out, ho, wo, rank3);
    if grad_out.shape() != expect.as_slice() {
        return Err(Error::shape("deconv2d_backward grad", &expect, grad_out.shape()));
    }
    let g = Geometry::conv(c_out, ho, wo, k, stride, padding)?;
    let rows = g.col_rows();
    let plane = g.col_cols();
    let mut grads = params.zero_grads();
    let mut grad_in = need_input_grad.then(|| Tensor::zeros(input.shape()));
    let mut cols = vec![T::zero(); rows * plane];
    let wmat = MatRef::new(params.weight.data(), c_in, rows);
    for b in 0..n {
        let go = sample(grad_out, n, b);
        im2col(go, &g, &mut cols);
        let cmat = MatRef::new(&cols, rows, plane);
        gemm(T::one(), MatRef::new(sample(input, n, b), c_in, plane), cmat.t(), T::one(), grads.weight.data_mut());
        for (co, chan) in go.chunks(ho * wo).enumerate() {
            grads.bias.data_mut()[co] += chan.iter().copied().sum::<T>();
        }
        if let Some(gi) = grad_in.as_mut() {
            gemm(T::one(), wmat, cmat, T::zero(), sample_mut(gi, n, b));
        }
    }
    Ok((grad_in, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::{check_layer_gradients, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(shape: [usize; 4], bias: usize, seed: u64) -> LayerParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LayerParams::new(random_tensor(&shape, &mut rng), random_tensor(&[bias], &mut rng));
        p.bias.scale(0.5);
        p
    }

    #[test]
    fn stride_two_halves_resolution() {
        let x = Tensor::<f32>::zeros(&[30, 112, 112]);
        let p = LayerParams::new(Tensor::zeros(&[8, 30, 3, 3]), Tensor::zeros(&[8]));
        let y = conv2d_forward(&x, &p, 2, 1).unwrap();
        assert_eq!(y.shape(), &[8, 56, 56]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = Tensor::<f32>::from_fn(&[2, 1, 3, 4], |i| i as f32 - 5.0);
        let p = LayerParams::new(Tensor::full(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1]));
        let y = conv2d_forward(&x, &p, 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn channel_mismatch_reports_both_shapes() {
        let x = Tensor::<f32>::zeros(&[3, 8, 8]);
        let p = LayerParams::new(Tensor::zeros(&[4, 2, 3, 3]), Tensor::zeros(&[4]));
        let msg = conv2d_forward(&x, &p, 1, 1).unwrap_err().to_string();
        assert!(msg.contains("[4, 2, 3, 3]") && msg.contains("[4, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn deconv_doubles_resolution() {
        let x = Tensor::<f32>::zeros(&[16, 14, 14]);
        let p = LayerParams::new(Tensor::zeros(&[16, 8, 4, 4]), Tensor::zeros(&[8]));
        assert_eq!(deconv2d_forward(&x, &p, 2, 1).unwrap().shape(), &[8, 28, 28]);
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(k, s, p, hw) in &[(3, 2, 1, 9), (4, 2, 1, 8), (3, 1, 1, 5), (5, 3, 2, 10)] {
            let weight = params([3, 2, k, k], 3, 5).weight;
            let conv = LayerParams::new(weight.clone(), Tensor::zeros(&[3]));
            let deconv = LayerParams::new(weight, Tensor::zeros(&[2]));
            let x = random_tensor(&[2, 2, hw, hw], &mut rng);
            let cx = conv2d_forward(&x, &conv, s, p).unwrap();
            let y = random_tensor(cx.shape(), &mut rng);
            let dy = deconv2d_forward(&y, &deconv, s, p).unwrap();
            assert_eq!(dy.shape(), x.shape());
            let (lhs, rhs) = (cx.dot(&y), x.dot(&dy));
            assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(1.0), "k{k} s{s}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&[2, 4, 5, 5], &mut rng);
        let p = params([3, 4, 3, 3], 3, 4);
        let report = check_layer_gradients(
            &x,
            &p,
            |x, p| conv2d_forward(x, p, 2, 1).unwrap(),
            |x, p, g| {
                let (gi, gp) = conv2d_backward(x, p, g, 2, 1, true).unwrap();
                (gi.unwrap(), gp)
            },
            &mut rng,
        );
        assert!(report.max_rel_error < 1e-3, "{report:?}");
    }

    #[test]
    fn deconv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&[2, 3, 4, 4], &mut rng);
        let p = params([3, 2, 4, 4], 2, 6);
        let report = check_layer_gradients(
            &x,
            &p,
            |x, p| deconv2d_forward(x, p, 2, 1).unwrap(),
            |x, p, g| {
                let (gi, gp) = deconv2d_backward(x, p, g, 2, 1, true).unwrap();
                (gi.unwrap(), gp)
            },
            &mut rng,
        );
        assert!(report.max_rel_error < 1e-3, "{report:?}");
    }
}
