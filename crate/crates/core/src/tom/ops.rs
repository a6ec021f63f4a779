//! Dense kernels over row-major `f64` buffers.

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// `c = a[m,k] * b[k,n] (+ c if accumulate)`
pub(crate) fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: dimensions and strides match the slice lengths asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c[k,n] += a[m,k]^T * b[m,n]`
pub(crate) fn matmul_at_b_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    // SAFETY: a is read transposed via swapped strides; bounds as asserted.
    unsafe {
        matrixmultiply::dgemm(
            k, m, n, 1.0,
            a.as_ptr(), 1, k as isize,
            b.as_ptr(), n as isize, 1,
            1.0, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c[m,k] = a[m,n] * b[k,n]^T (+ c if accumulate)`
pub(crate) fn matmul_a_bt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize, accumulate: bool) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: b is read transposed via swapped strides; bounds as asserted.
    unsafe {
        matrixmultiply::dgemm(
            m, n, k, 1.0,
            a.as_ptr(), n as isize, 1,
            b.as_ptr(), 1, n as isize,
            beta, c.as_mut_ptr(), k as isize, 1,
        );
    }
}

pub(crate) fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub(crate) fn bias_grad_acc(dy: &[f64], db: &mut [f64]) {
    for row in dy.chunks(db.len()) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
}

/// Layer norm over rows of width `gamma.len()`. Writes the output and the
/// normalized input, returns per-row reciprocal standard deviations.
pub(crate) fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], out: &mut [f64], xhat: &mut [f64]) -> Vec<f64> {
    let h = gamma.len();
    let mut rstds = Vec::with_capacity(x.len() / h);
    for ((row, o), xh) in x.chunks(h).zip(out.chunks_mut(h)).zip(xhat.chunks_mut(h)) {
        let mean = row.iter().sum::<f64>() / h as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        for c in 0..h {
            xh[c] = (row[c] - mean) * rstd;
            o[c] = gamma[c] * xh[c] + beta[c];
        }
        rstds.push(rstd);
    }
    rstds
}

/// Backward of [`layer_norm`]; accumulates into `dx`, `dgamma`, `dbeta`.
pub(crate) fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    rstds: &[f64],
    gamma: &[f64],
    dx: &mut [f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) {
    let h = gamma.len();
    let mut dxhat = vec![0.0; h];
    for (r, &rstd) in rstds.iter().enumerate() {
        let dyr = &dy[r * h..(r + 1) * h];
        let xhr = &xhat[r * h..(r + 1) * h];
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for c in 0..h {
            dgamma[c] += dyr[c] * xhr[c];
            dbeta[c] += dyr[c];
            dxhat[c] = dyr[c] * gamma[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhr[c];
        }
        mean_d /= h as f64;
        mean_dx /= h as f64;
        let dxr = &mut dx[r * h..(r + 1) * h];
        for c in 0..h {
            dxr[c] += rstd * (dxhat[c] - mean_d - xhr[c] * mean_dx);
        }
    }
}

/// Tanh-approximated GELU.
pub(crate) fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

pub(crate) fn gelu_grad(u: f64) -> f64 {
    let inner = GELU_C * (u + 0.044715 * u * u * u);
    let th = inner.tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
