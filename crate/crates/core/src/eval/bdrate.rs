//! Bjøntegaard delta rate.
//!
//! Each curve is fitted with a least-squares cubic `ln R = p(q)`; the fits
//! are integrated by the trapezoidal rule over the common quality interval
//! and the mean log-rate difference is reported as a percentage.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::RdCurve;
use crate::error::{Error, Result};

pub const BD_MIN_POINTS: usize = 4;
pub const BD_SAMPLES: usize = 1000;

/// Quality measure against which rates are compared. Larger is better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QualityAxis {
    Psnr,
    NegIdse,
    NegFeatDist,
}

impl QualityAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            QualityAxis::Psnr => "psnr",
            QualityAxis::NegIdse => "neg-idse",
            QualityAxis::NegFeatDist => "neg-featdist",
        }
    }
}

impl fmt::Display for QualityAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psnr" => Ok(QualityAxis::Psnr),
            "neg-idse" | "idse" => Ok(QualityAxis::NegIdse),
            "neg-featdist" | "featdist" | "fd" => Ok(QualityAxis::NegFeatDist),
            _ => Err(Error::invalid(format!("unknown quality axis {s:?}"))),
        }
    }
}

/// `(rate, quality)` pairs of `curve` on `axis`.
pub fn curve_points(curve: &RdCurve, axis: QualityAxis) -> Result<Vec<(f64, f64)>> {
    curve
        .points
        .iter()
        .map(|p| {
            let q = match axis {
                QualityAxis::Psnr => Some(p.psnr_db),
                QualityAxis::NegIdse => p.idse.map(|v| -v),
                QualityAxis::NegFeatDist => p.feat_dist.map(|v| -v),
            };
            q.map(|q| (p.bits as f64, q))
                .ok_or_else(|| Error::invalid(format!("curve {:?} has no {axis} values", curve.label)))
        })
        .collect()
}

/// BD-rate of `test` against `anchor` in percent; negative means `test` saves rate.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve, axis: QualityAxis) -> Result<f64> {
    bd_rate_points(&curve_points(anchor, axis)?, &curve_points(test, axis)?)
}

pub fn bd_rate_points(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> Result<f64> {
    check_curve(anchor)?;
    check_curve(test)?;
    let range = |c: &[(f64, f64)]| {
        c.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, q)| (lo.min(q), hi.max(q)))
    };
    let (a_lo, a_hi) = range(anchor);
    let (t_lo, t_hi) = range(test);
    let (lo, hi) = (a_lo.max(t_lo), a_hi.min(t_hi));
    if !(hi > lo) {
        return Err(Error::invalid("rate-quality curves do not overlap in quality"));
    }
    // fit in a centred, scaled variable for conditioning
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let pa = fit_cubic(anchor, mid, half)?;
    let pt = fit_cubic(test, mid, half)?;
    let n = BD_SAMPLES;
    let h = 2.0 / (n - 1) as f64;
    let mut integral = 0.0;
    for k in 0..n {
        let u = -1.0 + k as f64 * h;
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        integral += w * (eval_poly(&pt, u) - eval_poly(&pa, u));
    }
    let mean = integral * h / 2.0;
    Ok(mean.exp_m1() * 100.0)
}

fn check_curve(c: &[(f64, f64)]) -> Result<()> {
    if c.len() < BD_MIN_POINTS {
        return Err(Error::invalid(format!(
            "BD-rate needs at least {BD_MIN_POINTS} points, got {}",
            c.len()
        )));
    }
    if c.iter().any(|&(r, q)| !(r > 0.0 && r.is_finite() && q.is_finite())) {
        return Err(Error::invalid("rates must be positive and qualities finite"));
    }
    let mut by_rate = c.to_vec();
    by_rate.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = by_rate
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, q)| (lo.min(q), hi.max(q)));
    if !(hi > lo) {
        return Err(Error::invalid("curve has no quality spread"));
    }
    let tol = 0.01 * (hi - lo);
    let mut best = f64::NEG_INFINITY;
    for &(_, q) in &by_rate {
        if q < best - tol {
            return Err(Error::invalid("quality is not monotone in rate"));
        }
        best = best.max(q);
    }
    Ok(())
}

fn fit_cubic(c: &[(f64, f64)], mid: f64, half: f64) -> Result<[f64; 4]> {
    let a = DMatrix::from_fn(c.len(), 4, |i, j| ((c[i].1 - mid) / half).powi(j as i32));
    let b = DVector::from_iterator(c.len(), c.iter().map(|&(r, _)| r.ln()));
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Numeric(format!("cubic fit failed: {e}")))?;
    Ok([x[0], x[1], x[2], x[3]])
}

fn eval_poly(p: &[f64; 4], u: f64) -> f64 {
    ((p[3] * u + p[2]) * u + p[1]) * u + p[0]
}
