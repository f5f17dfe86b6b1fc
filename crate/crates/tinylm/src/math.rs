//! Dense kernels over row-major slices.

use crate::Scalar;

/// `out = x · w` for `x: rows×din`, `w: din×dout`.
pub(crate) fn matmul<F: Scalar>(x: &[F], w: &[F], rows: usize, din: usize, dout: usize, out: &mut [F]) {
    debug_assert_eq!(x.len(), rows * din);
    debug_assert_eq!(w.len(), din * dout);
    out.fill(F::zero());
    for r in 0..rows {
        let xr = &x[r * din..(r + 1) * din];
        let or = &mut out[r * dout..(r + 1) * dout];
        for (i, &xi) in xr.iter().enumerate() {
            if xi == F::zero() {
                continue;
            }
            let wr = &w[i * dout..(i + 1) * dout];
            for (o, &wv) in or.iter_mut().zip(wr) {
                *o += xi * wv;
            }
        }
    }
}

/// `out = x · eᵀ` for `x: rows×d`, `e: n×d`.
pub(crate) fn matmul_bt<F: Scalar>(x: &[F], e: &[F], rows: usize, d: usize, n: usize, out: &mut [F]) {
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        for j in 0..n {
            out[r * n + j] = dot(xr, &e[j * d..(j + 1) * d]);
        }
    }
}

/// `dw += xᵀ · dy`.
pub(crate) fn acc_weight_grad<F: Scalar>(x: &[F], dy: &[F], rows: usize, din: usize, dout: usize, dw: &mut [F]) {
    for r in 0..rows {
        let xr = &x[r * din..(r + 1) * din];
        let dyr = &dy[r * dout..(r + 1) * dout];
        for (i, &xi) in xr.iter().enumerate() {
            if xi == F::zero() {
                continue;
            }
            let row = &mut dw[i * dout..(i + 1) * dout];
            for (g, &d) in row.iter_mut().zip(dyr) {
                *g += xi * d;
            }
        }
    }
}

/// `dx += dy · wᵀ`.
pub(crate) fn acc_input_grad<F: Scalar>(dy: &[F], w: &[F], rows: usize, din: usize, dout: usize, dx: &mut [F]) {
    for r in 0..rows {
        let dyr = &dy[r * dout..(r + 1) * dout];
        let dxr = &mut dx[r * din..(r + 1) * din];
        for (i, g) in dxr.iter_mut().enumerate() {
            *g += dot(dyr, &w[i * dout..(i + 1) * dout]);
        }
    }
}

pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) struct NormCache<F> {
    pub xhat: Vec<F>,
    pub rstd: Vec<F>,
}

pub(crate) fn layer_norm<F: Scalar>(
    x: &[F],
    gain: &[F],
    bias: &[F],
    rows: usize,
    d: usize,
    eps: f64,
    out: &mut [F],
) -> NormCache<F> {
    let mut xhat = vec![F::zero(); rows * d];
    let mut rstd = vec![F::zero(); rows];
    let n = F::lit(d as f64);
    let eps = F::lit(eps);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().copied().sum::<F>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let rs = F::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (xr[j] - mean) * rs;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gain[j] + bias[j];
        }
    }
    NormCache { xhat, rstd }
}

/// Accumulates gain/bias gradients and adds the input gradient into `dx`.
pub(crate) fn layer_norm_backward<F: Scalar>(
    cache: &NormCache<F>,
    gain: &[F],
    dy: &[F],
    rows: usize,
    d: usize,
    dgain: &mut [F],
    dbias: &mut [F],
    dx: &mut [F],
) {
    let n = F::lit(d as f64);
    let mut dxhat = vec![F::zero(); d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let mut sum = F::zero();
        let mut sum_xh = F::zero();
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
            sum += dxhat[j];
            sum_xh += dxhat[j] * xh[j];
        }
        let scale = cache.rstd[r] / n;
        for j in 0..d {
            dx[r * d + j] += scale * (n * dxhat[j] - sum - xh[j] * sum_xh);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub(crate) fn gelu<F: Scalar>(x: F) -> F {
    let c = F::lit(GELU_C);
    let a = F::lit(GELU_A);
    let half = F::lit(0.5);
    half * x * (F::one() + (c * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::lit(GELU_C);
    let a = F::lit(GELU_A);
    let half = F::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + F::lit(3.0) * a * x * x)
}

/// In-place softmax over the first `len` entries of `row`.
pub(crate) fn softmax_prefix<F: Scalar>(row: &mut [F], len: usize) {
    let max = row[..len].iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in &mut row[..len] {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in &mut row[..len] {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-3.0f64, -1.0, -0.2, 0.0, 0.5, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn matmul_small() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let w = [1.0, 0.0, 2.0, 0.0, 1.0, 3.0];
        let mut out = [0.0; 6];
        matmul(&x, &w, 2, 2, 3, &mut out);
        assert_eq!(out, [1.0, 2.0, 8.0, 3.0, 4.0, 18.0]);
        let mut out_t = [0.0; 6];
        // eᵀ with e = wᵀ (3×2)
        let e = [1.0, 0.0, 0.0, 1.0, 2.0, 3.0];
        matmul_bt(&x, &e, 2, 2, 3, &mut out_t);
        assert_eq!(out, out_t);
    }
}
