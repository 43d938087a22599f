//! L2-regularized logistic regression trained by full-batch gradient descent.
//!
//! Loss: `mean(softplus(z) - y*z) + reg/2 * |w|^2` with `z = w.x + b`; the
//! bias is not penalized.

use super::value::FeatureMatrix;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn margin(x: &FeatureMatrix, row: usize, w: &[f64], b: f64) -> f64 {
    x.row(row).iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b
}

pub fn loss(x: &FeatureMatrix, y: &[f64], w: &[f64], b: f64, reg: f64) -> f64 {
    let n = x.rows.max(1) as f64;
    let data: f64 = (0..x.rows)
        .map(|i| {
            let z = margin(x, i, w, b);
            softplus(z) - y[i] * z
        })
        .sum();
    data / n + 0.5 * reg * w.iter().map(|v| v * v).sum::<f64>()
}

/// Analytic gradient `(dL/dw, dL/db)`.
pub fn gradient(x: &FeatureMatrix, y: &[f64], w: &[f64], b: f64, reg: f64) -> (Vec<f64>, f64) {
    let n = x.rows.max(1) as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (i, yi) in y.iter().enumerate().take(x.rows) {
        let err = sigmoid(margin(x, i, w, b)) - yi;
        for (g, a) in gw.iter_mut().zip(x.row(i)) {
            *g += err * a;
        }
        gb += err;
    }
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g / n + reg * wj;
    }
    (gw, gb / n)
}

/// Gradient descent from zero weights; returns `(weights, bias)`.
pub fn train(x: &FeatureMatrix, y: &[f64], reg: f64, iters: usize, lr: f64) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    for _ in 0..iters {
        let (gw, gb) = gradient(x, y, &w, b, reg);
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= lr * g;
        }
        b -= lr * gb;
    }
    (w, b)
}
