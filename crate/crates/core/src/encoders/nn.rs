//! Small numeric kernels shared by the encoders.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

pub const LN_EPS: f64 = 1e-5;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `acc += a ⊗ b` (outer product).
pub fn add_outer(mut acc: ArrayViewMut2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            acc.row_mut(i).scaled_add(ai, &b);
        }
    }
}

/// `acc += aᵀ · b` for row-major activations `a` (T×m) and `b` (T×n).
pub fn add_at_b(mut acc: ArrayViewMut2<f64>, a: ArrayView2<f64>, b: ArrayView2<f64>) {
    acc += &a.t().dot(&b);
}

pub fn add_row_sums(mut acc: ArrayViewMut1<f64>, m: ArrayView2<f64>) {
    acc += &m.sum_axis(Axis(0));
}

/// Row-wise log-sum-exp-stable softmax.
pub fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("contiguous row"));
    }
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Cached values of a row-wise layer norm.
pub struct LayerNormCache {
    pub xhat: Array2<f64>,
    pub rstd: Array1<f64>,
}

pub fn layer_norm(x: ArrayView2<f64>, gain: ArrayView1<f64>, bias: ArrayView1<f64>) -> (Array2<f64>, LayerNormCache) {
    let (t, d) = x.dim();
    let mut xhat = Array2::zeros((t, d));
    let mut rstd = Array1::zeros(t);
    for i in 0..t {
        let row = x.row(i);
        let mu = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        xhat.row_mut(i).assign(&row.mapv(|v| (v - mu) * r));
    }
    let y = &xhat * &gain + bias;
    (y, LayerNormCache { xhat, rstd })
}

/// Returns `dx`; accumulates gain and bias gradients.
pub fn layer_norm_backward(
    dy: ArrayView2<f64>,
    cache: &LayerNormCache,
    gain: ArrayView1<f64>,
    mut dgain: ArrayViewMut1<f64>,
    mut dbias: ArrayViewMut1<f64>,
) -> Array2<f64> {
    let (t, d) = dy.dim();
    dgain += &(&dy * &cache.xhat).sum_axis(Axis(0));
    dbias += &dy.sum_axis(Axis(0));
    let dxhat = &dy * &gain;
    let mut dx = Array2::zeros((t, d));
    for i in 0..t {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_g = g.sum() / d as f64;
        let mean_gx = g.dot(&xh) / d as f64;
        dx.row_mut(i).assign(&((&g - mean_g - &xh.mapv(|v| v * mean_gx)) * cache.rstd[i]));
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn softmax_and_lse_agree() {
        let mut v = vec![1.0, 2.0, 3.0];
        let lse = log_sum_exp(&v);
        softmax_in_place(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((v[2].ln() - (3.0 - lse)).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_gradient_matches_differences() {
        let x = array![[0.3, -1.2, 0.7, 2.0], [1.0, 1.5, -0.5, 0.0]];
        let g = array![1.1, 0.9, -0.4, 1.3];
        let b = array![0.1, 0.0, 0.2, -0.3];
        let w = array![[0.5, -1.0, 2.0, 0.3], [-0.7, 0.2, 0.1, 1.4]];
        let f = |x: &Array2<f64>| (&layer_norm(x.view(), g.view(), b.view()).0 * &w).sum();
        let (_, cache) = layer_norm(x.view(), g.view(), b.view());
        let mut dg = Array1::zeros(4);
        let mut db = Array1::zeros(4);
        let dx = layer_norm_backward(w.view(), &cache, g.view(), dg.view_mut(), db.view_mut());
        for i in 0..2 {
            for j in 0..4 {
                let mut p = x.clone();
                p[[i, j]] += 1e-6;
                let mut m = x.clone();
                m[[i, j]] -= 1e-6;
                let num = (f(&p) - f(&m)) / 2e-6;
                assert!((num - dx[[i, j]]).abs() < 1e-7, "{num} vs {}", dx[[i, j]]);
            }
        }
    }
}
