//! Forward and backward kernels. Convolution is valid (unpadded)
//! cross-correlation; kernels are stored (out, in, kh, kw) row-major and FC
//! matrices (out, in).

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use super::NetError;

pub fn conv_output_dim(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > input {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

fn check_len(expected: usize, actual: usize) -> Result<(), NetError> {
    if expected == actual {
        Ok(())
    } else {
        Err(NetError::ShapeMismatch { expected, actual })
    }
}

/// out[o][i][j] = bias[o] + sum_c sum_u sum_v k[o][c][u][v] * in[c][i*s+u][j*s+v]
pub fn conv_forward(
    input: &Tensor,
    kernels: &[f64],
    bias: &[f64],
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
) -> Result<Tensor, NetError> {
    let (cin, h, w) = input.shape();
    let cout = bias.len();
    check_len(cout * cin * kernel_h * kernel_w, kernels.len())?;
    let oh = conv_output_dim(h, kernel_h, stride).ok_or(NetError::KernelDoesNotFit)?;
    let ow = conv_output_dim(w, kernel_w, stride).ok_or(NetError::KernelDoesNotFit)?;
    let mut out = Tensor::zeros(cout, oh, ow);
    for o in 0..cout {
        let plane = &mut out.data[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(bias[o]);
        for c in 0..cin {
            let src = input.plane(c);
            let kbase = ((o * cin) + c) * kernel_h * kernel_w;
            for u in 0..kernel_h {
                for v in 0..kernel_w {
                    let k = kernels[kbase + u * kernel_w + v];
                    if k == 0.0 {
                        continue;
                    }
                    for i in 0..oh {
                        let row = &src[(i * stride + u) * w + v..];
                        let dst = &mut plane[i * ow..(i + 1) * ow];
                        if stride == 1 {
                            for (d, s) in dst.iter_mut().zip(&row[..ow]) {
                                *d += k * s;
                            }
                        } else {
                            for (j, d) in dst.iter_mut().enumerate() {
                                *d += k * row[j * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv_backward(
    input: &Tensor,
    kernels: &[f64],
    grad_out: &Tensor,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
) -> Result<ConvGrads, NetError> {
    let (cin, h, w) = input.shape();
    let (cout, oh, ow) = grad_out.shape();
    check_len(cout * cin * kernel_h * kernel_w, kernels.len())?;
    if conv_output_dim(h, kernel_h, stride) != Some(oh) || conv_output_dim(w, kernel_w, stride) != Some(ow) {
        return Err(NetError::ShapeMismatch { expected: oh * ow, actual: grad_out.len() / cout.max(1) });
    }
    let mut gin = Tensor::zeros(cin, h, w);
    let mut gk = vec![0.0; kernels.len()];
    let mut gb = vec![0.0; cout];
    for o in 0..cout {
        let g = grad_out.plane(o);
        gb[o] = g.iter().sum();
        for c in 0..cin {
            let src = input.plane(c);
            let kbase = ((o * cin) + c) * kernel_h * kernel_w;
            let gplane = &mut gin.data[c * h * w..(c + 1) * h * w];
            for u in 0..kernel_h {
                for v in 0..kernel_w {
                    let k = kernels[kbase + u * kernel_w + v];
                    let mut acc = 0.0;
                    for i in 0..oh {
                        let grow = &g[i * ow..(i + 1) * ow];
                        let off = (i * stride + u) * w + v;
                        if stride == 1 {
                            let srow = &src[off..off + ow];
                            let drow = &mut gplane[off..off + ow];
                            for j in 0..ow {
                                acc += grow[j] * srow[j];
                                drow[j] += k * grow[j];
                            }
                        } else {
                            for (j, gv) in grow.iter().enumerate() {
                                acc += gv * src[off + j * stride];
                                gplane[off + j * stride] += k * gv;
                            }
                        }
                    }
                    gk[kbase + u * kernel_w + v] = acc;
                }
            }
        }
    }
    Ok(ConvGrads { input: gin, kernels: gk, bias: gb })
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient passes where the forward input was positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, x) in g.data.iter_mut().zip(&input.data) {
        if *x <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Window maximum per channel, plus the flat input index of each maximum
/// (first one in row-major order on ties).
pub fn maxpool_forward(input: &Tensor, size: usize, stride: usize) -> Result<(Tensor, Vec<usize>), NetError> {
    let (c, h, w) = input.shape();
    let oh = conv_output_dim(h, size, stride).ok_or(NetError::KernelDoesNotFit)?;
    let ow = conv_output_dim(w, size, stride).ok_or(NetError::KernelDoesNotFit)?;
    let mut out = Tensor::zeros(c, oh, ow);
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for u in 0..size {
                    for v in 0..size {
                        let idx = base + (i * stride + u) * w + j * stride + v;
                        if input.data[idx] > best {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (ch * oh + i) * ow + j;
                out.data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool_backward(input_shape: (usize, usize, usize), argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let (c, h, w) = input_shape;
    let mut g = Tensor::zeros(c, h, w);
    for (gv, &idx) in grad_out.data.iter().zip(argmax) {
        g.data[idx] += gv;
    }
    g
}

/// out = matrix * flatten(input) + bias, with `matrix` stored (out, in).
pub fn fc_forward(input: &Tensor, matrix: &[f64], bias: &[f64]) -> Result<Tensor, NetError> {
    let n_in = input.len();
    let n_out = bias.len();
    check_len(n_out * n_in, matrix.len())?;
    let out = (0..n_out)
        .map(|o| {
            let row = &matrix[o * n_in..(o + 1) * n_in];
            bias[o] + row.iter().zip(&input.data).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Ok(Tensor::flat(out))
}

pub struct FcGrads {
    pub input: Tensor,
    pub matrix: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn fc_backward(input: &Tensor, matrix: &[f64], grad_out: &Tensor) -> Result<FcGrads, NetError> {
    let n_in = input.len();
    let n_out = grad_out.len();
    check_len(n_out * n_in, matrix.len())?;
    let mut gin = Tensor::zeros(input.channels, input.height, input.width);
    let mut gm = vec![0.0; matrix.len()];
    for o in 0..n_out {
        let g = grad_out.data[o];
        let row = &matrix[o * n_in..(o + 1) * n_in];
        let grow = &mut gm[o * n_in..(o + 1) * n_in];
        for k in 0..n_in {
            grow[k] = g * input.data[k];
            gin.data[k] += g * row[k];
        }
    }
    Ok(FcGrads { input: gin, matrix: gm, bias: grad_out.data.clone() })
}

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64, NetError> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, NetError> {
    check_len(pred.len(), target.len())?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::new(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_conv(x: &Tensor, k: &[f64], b: &[f64], kh: usize, kw: usize, s: usize) -> Tensor {
        let (cin, h, w) = x.shape();
        let oh = (h - kh) / s + 1;
        let ow = (w - kw) / s + 1;
        let mut out = Tensor::zeros(b.len(), oh, ow);
        for o in 0..b.len() {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b[o];
                    for c in 0..cin {
                        for u in 0..kh {
                            for v in 0..kw {
                                acc += k[((o * cin + c) * kh + u) * kw + v] * x.at(c, i * s + u, j * s + v);
                            }
                        }
                    }
                    out.data[(o * oh + i) * ow + j] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, 1, 5, 4);
        assert_eq!(conv_forward(&x, &[1.0], &[0.0], 1, 1, 1).unwrap(), x);
        let out = conv_forward(&x, &[0.0; 9], &[2.5], 3, 3, 1).unwrap();
        assert!(out.data.iter().all(|&v| v == 2.5));
        assert_eq!(out.shape(), (1, 3, 2));
    }

    #[test]
    fn conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, 1, 6, 6);
        let k: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = [0.3, -0.2];
        let fast = conv_forward(&x, &k, &b, 3, 3, 1).unwrap();
        let slow = naive_conv(&x, &k, &b, 3, 3, 1);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-12);
        }
        let fast = conv_forward(&x, &k, &b, 3, 3, 2).unwrap();
        let slow = naive_conv(&x, &k, &b, 3, 3, 2);
        assert_eq!(fast.shape(), (2, 2, 2));
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Tensor::zeros(1, 3, 3);
        assert_eq!(conv_forward(&x, &[0.0; 16], &[0.0], 4, 4, 1), Err(NetError::KernelDoesNotFit));
        assert!(matches!(conv_forward(&x, &[0.0; 5], &[0.0], 2, 2, 1), Err(NetError::ShapeMismatch { .. })));
        assert_eq!(conv_forward(&x, &[0.0; 4], &[0.0], 2, 2, 0), Err(NetError::KernelDoesNotFit));
    }

    #[test]
    fn relu_cases() {
        let t = Tensor::flat(vec![-3.0, 0.0, 2.0]);
        assert_eq!(relu(&t).data, vec![0.0, 0.0, 2.0]);
        let neg = Tensor::flat(vec![-1.0, -0.5]);
        assert!(relu(&neg).data.iter().all(|&v| v == 0.0));
        let pos = Tensor::flat(vec![1.0, 0.5]);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn maxpool_cases() {
        let t = Tensor::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, arg) = maxpool_forward(&t, 2, 2).unwrap();
        assert_eq!(out.data, vec![4.0]);
        assert_eq!(arg, vec![3]);
        let c = Tensor::new(2, 4, 4, vec![0.7; 32]).unwrap();
        let (out, _) = maxpool_forward(&c, 2, 2).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.7));
        // Odd input: the last row and column are dropped.
        let (out, _) = maxpool_forward(&Tensor::zeros(1, 5, 5), 2, 2).unwrap();
        assert_eq!(out.shape(), (1, 2, 2));
    }

    #[test]
    fn fc_cases() {
        let x = Tensor::flat(vec![1.0, -2.0, 3.0]);
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(fc_forward(&x, &eye, &[0.0; 3]).unwrap().data, x.data);
        assert_eq!(fc_forward(&x, &[0.0; 6], &[4.0, 5.0]).unwrap().data, vec![4.0, 5.0]);
        assert!(fc_forward(&x, &[0.0; 5], &[0.0; 2]).is_err());
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0, 2.0], &[0.0, 4.0]).unwrap(), 2.5);
        assert_eq!(mse_grad(&[1.0, 2.0], &[0.0, 4.0]).unwrap(), vec![1.0, -2.0]);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }
}
