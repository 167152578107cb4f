//! Experiments on the quality of the linearized, localized metric.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featnet::{Extent, FeatureExtractor, Linearization};
use crate::image::{ImagePlane, BLOCK_SIZE};
use crate::rdo::{encode_image, Metric, RdoConfig};
use crate::scalar::{norm_sq, Real};

/// Side of the regions compared against their 16x16 sub-blocks.
pub const REGION_SIZE: usize = 128;
pub const MIN_REGIONS: usize = 20;

/// Pearson correlation; errors when either sample has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("correlation needs two equally long samples of size >= 2"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numeric("correlation undefined: a sample has zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn crop<T: Real>(plane: &ImagePlane, x0: usize, y0: usize, w: usize, h: usize) -> Vec<T> {
    let s = plane.samples();
    let stride = plane.stride();
    let mut out = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        out.extend(s[y * stride + x0..y * stride + x0 + w].iter().map(|&v| T::lit(f64::from(v))));
    }
    out
}

fn feature_sq_dist<T: Real, E: FeatureExtractor<T>>(net: &E, a: &[T], b: &[T], e: Extent) -> Result<f64> {
    let fa = net.forward(a, e)?;
    let fb = net.forward(b, e)?;
    Ok(fa.iter().zip(&fb).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>().to_f64_lossy())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorPoint {
    pub qp: i32,
    /// Mean over blocks with nonzero feature distance of `|IDSE - FD| / FD`.
    pub mean_rel_error: f64,
    pub blocks: usize,
}

/// Compares, per block, the exact-Jacobian IDSE `‖J e_i‖²` with the true
/// feature distance `‖f(x + e_i) - f(x)‖²`, where `e_i` is the SSE-RDO
/// coding error restricted to block `i`, at each QP.
pub fn taylor_regime<T: Real, E: FeatureExtractor<T>>(net: &E, plane: &ImagePlane, qps: &[i32]) -> Result<Vec<TaylorPoint>> {
    let extent = Extent::new(plane.height(), plane.width());
    let x = plane.to_real::<T>();
    let tape = net.linearize(&x, extent)?;
    let f0 = tape.output().to_vec();
    let grid = plane.grid();
    qps.iter()
        .map(|&qp| {
            let enc = encode_image::<T, E>(plane, &RdoConfig::new(Metric::Sse, qp), None, None)?;
            let rec = enc.reconstruction.to_real::<T>();
            let errs: Vec<Option<f64>> = (0..grid.n_b())
                .into_par_iter()
                .map(|i| {
                    let mut e = vec![T::zero(); x.len()];
                    for p in grid.pixel_indices(i)? {
                        e[p] = rec[p] - x[p];
                    }
                    let idse = norm_sq(&tape.jvp(&e)?).to_f64_lossy();
                    let xp: Vec<T> = x.iter().zip(&e).map(|(&a, &b)| a + b).collect();
                    let f1 = net.forward(&xp, extent)?;
                    let fd = f1
                        .iter()
                        .zip(&f0)
                        .map(|(&p, &q)| (p - q) * (p - q))
                        .sum::<T>()
                        .to_f64_lossy();
                    Ok((fd > 0.0).then(|| (idse - fd).abs() / fd))
                })
                .collect::<Result<_>>()?;
            let used: Vec<f64> = errs.into_iter().flatten().collect();
            let mean_rel_error = if used.is_empty() {
                0.0
            } else {
                used.iter().sum::<f64>() / used.len() as f64
            };
            Ok(TaylorPoint {
                qp,
                mean_rel_error,
                blocks: used.len(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregationReport {
    pub r: f64,
    /// `(region feature distance, sum of block feature distances)` per (region, QP).
    pub samples: Vec<(f64, f64)>,
    pub regions: usize,
}

/// Correlation between the feature distance of each 128x128 region and the
/// sum of the block-wise feature distances of its 64 macroblocks, across
/// regions and the SSE-RDO reconstructions at `qps`.
pub fn aggregation_correlation<T: Real, E: FeatureExtractor<T>>(
    net: &E,
    plane: &ImagePlane,
    qps: &[i32],
) -> Result<AggregationReport> {
    let (cols, rows) = (plane.width() / REGION_SIZE, plane.height() / REGION_SIZE);
    let regions = cols * rows;
    if regions < MIN_REGIONS {
        return Err(Error::invalid(format!(
            "image yields {regions} regions of {REGION_SIZE}x{REGION_SIZE}, need {MIN_REGIONS}"
        )));
    }
    let re = Extent::new(REGION_SIZE, REGION_SIZE);
    let be = Extent::new(BLOCK_SIZE, BLOCK_SIZE);
    let per = REGION_SIZE / BLOCK_SIZE;
    let mut samples = Vec::with_capacity(regions * qps.len());
    for &qp in qps {
        let enc = encode_image::<T, E>(plane, &RdoConfig::new(Metric::Sse, qp), None, None)?;
        let rec = &enc.reconstruction;
        let pts: Vec<(f64, f64)> = (0..regions)
            .into_par_iter()
            .map(|r| {
                let (x0, y0) = ((r % cols) * REGION_SIZE, (r / cols) * REGION_SIZE);
                let whole = feature_sq_dist(
                    net,
                    &crop::<T>(plane, x0, y0, REGION_SIZE, REGION_SIZE),
                    &crop::<T>(rec, x0, y0, REGION_SIZE, REGION_SIZE),
                    re,
                )?;
                let mut parts = 0.0;
                for b in 0..per * per {
                    let (bx, by) = (x0 + (b % per) * BLOCK_SIZE, y0 + (b / per) * BLOCK_SIZE);
                    parts += feature_sq_dist(
                        net,
                        &crop::<T>(plane, bx, by, BLOCK_SIZE, BLOCK_SIZE),
                        &crop::<T>(rec, bx, by, BLOCK_SIZE, BLOCK_SIZE),
                        be,
                    )?;
                }
                Ok((whole, parts))
            })
            .collect::<Result<_>>()?;
        samples.extend(pts);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
    let r = pearson(&xs, &ys)?;
    Ok(AggregationReport { r, samples, regions })
}
