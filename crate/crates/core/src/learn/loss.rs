//! Image losses and their gradients with respect to the estimate.

use crate::error::Result;
use crate::image::ImageGrid;

/// Sum of squared differences (not normalized by the pixel count).
pub fn loss_mse(estimate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    estimate.same_shape(reference)?;
    Ok(estimate
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

pub fn grad_mse(estimate: &ImageGrid, reference: &ImageGrid, out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(estimate.values()).zip(reference.values()) {
        *o += 2.0 * (a - b);
    }
}

/// Visits the forward differences of the error image along rows (first
/// dimension) and columns. The last difference along each axis is zero
/// under replicate boundaries and is skipped.
fn for_each_difference(h: usize, w: usize, err: &[f64], mut visit: impl FnMut(usize, usize, f64)) {
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            if i + 1 < h {
                visit(p, p + w, err[p + w] - err[p]);
            }
            if j + 1 < w {
                visit(p, p + 1, err[p + 1] - err[p]);
            }
        }
    }
}

fn error_image(estimate: &ImageGrid, reference: &ImageGrid) -> Vec<f64> {
    estimate
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| a - b)
        .collect()
}

/// Gradient-difference loss `||D1 x - D1 y||_1 + ||D2 x - D2 y||_1`.
pub fn loss_gdl(estimate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    estimate.same_shape(reference)?;
    let err = error_image(estimate, reference);
    let mut total = 0.0;
    for_each_difference(estimate.height(), estimate.width(), &err, |_, _, d| total += d.abs());
    Ok(total)
}

/// Subgradient of [`loss_gdl`], taking `sign(0) = 0`.
pub fn grad_gdl(estimate: &ImageGrid, reference: &ImageGrid, scale: f64, out: &mut [f64]) {
    let err = error_image(estimate, reference);
    for_each_difference(estimate.height(), estimate.width(), &err, |lo, hi, d| {
        let s = if d > 0.0 {
            scale
        } else if d < 0.0 {
            -scale
        } else {
            0.0
        };
        out[hi] += s;
        out[lo] -= s;
    });
}

/// `MSE + lambda * GDL` and its gradient.
pub fn combined_loss(estimate: &ImageGrid, reference: &ImageGrid, lambda: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; estimate.values().len()];
    let mut loss = loss_mse(estimate, reference)?;
    grad_mse(estimate, reference, &mut grad);
    if lambda != 0.0 {
        loss += lambda * loss_gdl(estimate, reference)?;
        grad_gdl(estimate, reference, lambda, &mut grad);
    }
    Ok((loss, grad))
}
