//! Image-quality metrics: PSNR, NMSE and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

fn check(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    a.same_shape(b)
}

/// Dynamic range `max - min` of the reference.
pub fn peak(reference: &ImageGrid) -> f64 {
    let (lo, hi) = reference.min_max();
    hi - lo
}

pub fn mse(estimate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    check(estimate, reference)?;
    let sum: f64 = estimate
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.values().len() as f64)
}

/// `10 log10(peak^2 / mse)` with `peak = max(ref) - min(ref)`.
/// Identical images give `f64::INFINITY`.
pub fn psnr(estimate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    let p = peak(reference);
    if p == 0.0 {
        return Err(Error::invalid("PSNR is undefined for a constant reference"));
    }
    let e = mse(estimate, reference)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p * p / e).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmseForm {
    /// `||x - y|| / ||y||`
    #[default]
    Root,
    /// `||x - y||^2 / ||y||^2`
    Squared,
}

pub fn nmse(estimate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    nmse_with(estimate, reference, NmseForm::Root)
}

pub fn nmse_with(estimate: &ImageGrid, reference: &ImageGrid, form: NmseForm) -> Result<f64> {
    check(estimate, reference)?;
    let num: f64 = estimate
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = reference.values().iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::invalid("NMSE is undefined for an all-zero reference"));
    }
    Ok(match form {
        NmseForm::Root => (num / den).sqrt(),
        NmseForm::Squared => num / den,
    })
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Window-averaged SSIM components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimTerms {
    pub ssim: f64,
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 = 0.01, K2 = 0.03) over all
/// fully-contained windows, with the dynamic range taken from the reference.
pub fn ssim_terms(estimate: &ImageGrid, reference: &ImageGrid) -> Result<SsimTerms> {
    check(estimate, reference)?;
    let (h, w) = (reference.height(), reference.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}"
        )));
    }
    let range = peak(reference);
    let range = if range > 0.0 { range } else { 1.0 };
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let c3 = c2 / 2.0;
    let g = gaussian_window();
    let x = estimate.values();
    let y = reference.values();
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut acc = [0.0f64; 4];
    for r in 0..oh {
        for c in 0..ow {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, gi) in g.iter().enumerate() {
                let row = (r + i) * w + c;
                for (j, gj) in g.iter().enumerate() {
                    let wt = gi * gj;
                    let a = x[row + j];
                    let b = y[row + j];
                    mx += wt * a;
                    my += wt * b;
                    sxx += wt * a * a;
                    syy += wt * b * b;
                    sxy += wt * a * b;
                }
            }
            let vx = (sxx - mx * mx).max(0.0);
            let vy = (syy - my * my).max(0.0);
            let cov = sxy - mx * my;
            let lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            let con = (2.0 * (vx * vy).sqrt() + c2) / (vx + vy + c2);
            let st = (cov + c3) / ((vx * vy).sqrt() + c3);
            let full = lum * (2.0 * cov + c2) / (vx + vy + c2);
            acc[0] += full;
            acc[1] += lum;
            acc[2] += con;
            acc[3] += st;
        }
    }
    let n = (oh * ow) as f64;
    Ok(SsimTerms {
        ssim: acc[0] / n,
        luminance: acc[1] / n,
        contrast: acc[2] / n,
        structure: acc[3] / n,
    })
}

pub fn ssim(estimate: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    Ok(ssim_terms(estimate, reference)?.ssim)
}

/// Metrics of one reconstruction against its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub nmse: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn compute(estimate: &ImageGrid, reference: &ImageGrid) -> Result<Self> {
        Ok(MetricReport {
            psnr_db: psnr(estimate, reference)?,
            nmse: nmse(estimate, reference)?,
            ssim: ssim(estimate, reference)?,
        })
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub psnr_db: MeanStd,
    pub nmse: MeanStd,
    pub ssim: MeanStd,
}

pub fn summarize(reports: &[MetricReport]) -> MetricSummary {
    let col = |f: fn(&MetricReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    MetricSummary {
        psnr_db: MeanStd::of(&col(|r| r.psnr_db)),
        nmse: MeanStd::of(&col(|r| r.nmse)),
        ssim: MeanStd::of(&col(|r| r.ssim)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;
    use crate::projector::add_uniform_noise;
    use crate::rng;
    use rand::RngExt;

    fn random(grid: GridSpec, seed: u64) -> ImageGrid {
        let mut rng = rng::seeded(seed);
        ImageGrid::from_values(grid, (0..grid.len()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let grid = GridSpec::square(16, 1.0).unwrap();
        let a = random(grid, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let p = peak(&a);
        let mut b = a.clone();
        b.values_mut().iter_mut().for_each(|v| *v += p / 10.0);
        assert!((psnr(&b, &a).unwrap() - 20.0).abs() < 1e-12);
        let c = random(grid, 2);
        let mse: f64 = c.values().iter().zip(a.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 256.0;
        let expect = 10.0 * (p * p / mse).log10();
        assert!((psnr(&c, &a).unwrap() - expect).abs() < 1e-12);
        assert!(psnr(&a, &ImageGrid::zeros(grid)).is_err());
    }

    #[test]
    fn nmse_examples() {
        let grid = GridSpec::square(12, 1.0).unwrap();
        let a = random(grid, 3);
        assert_eq!(nmse(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        assert!((nmse(&b, &a).unwrap() - 1.0).abs() < 1e-15);
        let c = random(grid, 4);
        let num: f64 = c.values().iter().zip(a.values()).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = a.values().iter().map(|y| y * y).sum();
        assert!((nmse(&c, &a).unwrap() - (num / den).sqrt()).abs() < 1e-12);
        assert!((nmse_with(&c, &a, NmseForm::Squared).unwrap() - num / den).abs() < 1e-12);
        // scale invariance
        let mut c3 = c.clone();
        c3.values_mut().iter_mut().for_each(|v| *v *= -3.0);
        let mut a3 = a.clone();
        a3.values_mut().iter_mut().for_each(|v| *v *= -3.0);
        assert!((nmse(&c3, &a3).unwrap() - nmse(&c, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_examples() {
        let grid = GridSpec::square(24, 1.0).unwrap();
        let a = random(grid, 5);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mut neg = a.clone();
        neg.values_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
        assert!(ssim(&neg, &a).unwrap() < 0.0);
        let mut shifted = a.clone();
        shifted.values_mut().iter_mut().for_each(|v| *v += 0.3);
        let t = ssim_terms(&shifted, &a).unwrap();
        assert!(t.luminance < 1.0);
        assert!((t.structure - 1.0).abs() < 1e-9);
        assert!((t.contrast - 1.0).abs() < 1e-9);
        assert!((t.ssim - t.luminance).abs() < 1e-9);
        assert!(ssim(&ImageGrid::zeros(GridSpec::square(8, 1.0).unwrap()), &ImageGrid::zeros(GridSpec::square(8, 1.0).unwrap())).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let grid = GridSpec::square(32, 1.0).unwrap();
        let a = random(grid, 6);
        let levels = [0.01, 0.02, 0.05, 0.1, 0.2];
        let means: Vec<f64> = levels
            .iter()
            .map(|&amp| {
                (0..10)
                    .map(|s| psnr(&add_uniform_noise(&a, amp, 100 + s), &a).unwrap())
                    .sum::<f64>()
                    / 10.0
            })
            .collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    }

    #[test]
    fn summary_statistics() {
        let s = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
