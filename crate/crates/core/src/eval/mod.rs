//! QP sweeps, rate-distortion curves and the experiments built on them.

pub mod bdrate;
pub mod corpus;
pub mod csv;
pub mod experiments;
pub mod flops;

pub use bdrate::{bd_rate, bd_rate_points, curve_points, QualityAxis};
pub use corpus::{synthetic_corpus, synthetic_image};
pub use experiments::{aggregation_correlation, pearson, taylor_regime};
pub use flops::{flop_estimate, FlopEstimate};

use crate::codec::Transforms;
use crate::error::{Error, Result};
use crate::featnet::{Extent, FeatureExtractor};
use crate::image::ImagePlane;
use crate::jacobian::SketchedJacobian;
use crate::rdo::{encode_image, Encoded, Metric, RdoConfig};
use crate::scalar::Real;
use crate::sketch::{SketchParams, GENERATOR_ID};

/// The QP ladder of the monotonicity and BD-rate experiments.
pub const SWEEP_QPS: [i32; 6] = [26, 28, 30, 32, 34, 36];

#[derive(Clone, Debug, PartialEq)]
pub struct RdPoint {
    pub qp: i32,
    pub bits: u64,
    pub bpp: f64,
    pub psnr_db: f64,
    /// Block-localized sketched IDSE of the reconstruction.
    pub idse: Option<f64>,
    /// `‖f(x) - f(x̂)‖²` over the whole decoded image.
    pub feat_dist: Option<f64>,
    /// Extractor FLOPs (two per multiply-accumulate) the encoder spent.
    pub encode_flops: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    pub label: String,
    pub metric: Metric,
    pub sketch: Option<SketchParams>,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    /// Merges per-image curves of one configuration by summing bits and
    /// distortions and averaging PSNR, point by point.
    pub fn aggregate(label: &str, curves: &[RdCurve]) -> Result<RdCurve> {
        let first = curves.first().ok_or_else(|| Error::invalid("no curves to aggregate"))?;
        let n = first.points.len();
        if curves
            .iter()
            .any(|c| c.points.len() != n || c.points.iter().zip(&first.points).any(|(a, b)| a.qp != b.qp))
        {
            return Err(Error::invalid("curves use different QP ladders"));
        }
        let k = curves.len() as f64;
        let sum_opt = |f: &dyn Fn(&RdPoint) -> Option<f64>, j: usize| -> Option<f64> {
            curves.iter().map(|c| f(&c.points[j])).sum()
        };
        let points = (0..n)
            .map(|j| RdPoint {
                qp: first.points[j].qp,
                bits: curves.iter().map(|c| c.points[j].bits).sum(),
                bpp: curves.iter().map(|c| c.points[j].bpp).sum::<f64>() / k,
                psnr_db: curves.iter().map(|c| c.points[j].psnr_db).sum::<f64>() / k,
                idse: sum_opt(&|p| p.idse, j),
                feat_dist: sum_opt(&|p| p.feat_dist, j),
                encode_flops: curves.iter().map(|c| c.points[j].encode_flops).sum(),
            })
            .collect();
        Ok(RdCurve {
            label: label.to_string(),
            metric: first.metric,
            sketch: first.sketch,
            points,
        })
    }
}

/// `‖f(a) - f(b)‖²` over whole padded planes.
pub fn feature_distance<T: Real, E: FeatureExtractor<T>>(net: &E, a: &ImagePlane, b: &ImagePlane) -> Result<T> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::shape("planes differ in size"));
    }
    let e = Extent::new(a.height(), a.width());
    let fa = net.forward(&a.to_real::<T>(), e)?;
    let fb = net.forward(&b.to_real::<T>(), e)?;
    Ok(fa.iter().zip(&fb).map(|(&p, &q)| (p - q) * (p - q)).sum())
}

/// One sweep point per QP plus the encodes behind them.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub curve: RdCurve,
    pub encodes: Vec<Encoded>,
}

/// Encodes `plane` at every QP in `qps` (strictly increasing).
///
/// With a `net` the sketched Jacobian is computed once, reused by every
/// point, and IDSE and feature distances are reported for every metric.
pub fn sweep<T: Real, E: FeatureExtractor<T>>(
    plane: &ImagePlane,
    base: &RdoConfig,
    qps: &[i32],
    net: Option<&E>,
    label: &str,
) -> Result<Sweep> {
    if qps.is_empty() {
        return Err(Error::invalid("empty QP list"));
    }
    if qps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("QPs must be strictly increasing"));
    }
    let mut cfg = base.clone();
    cfg.qp = qps[0];
    cfg.validate()?;
    let transforms = Transforms::<T>::new();
    let (sj, jacobian_flops) = match net {
        Some(n) => {
            let before = n.op_counts();
            let sj = SketchedJacobian::compute(n, plane, base.sketch, &transforms)?;
            (Some(sj), 2 * n.op_counts().since(&before).total_macs())
        }
        None => (None, 0),
    };
    let mut points = Vec::with_capacity(qps.len());
    let mut encodes = Vec::with_capacity(qps.len());
    for &qp in qps {
        cfg.qp = qp;
        let before = net.map(|n| n.op_counts());
        let enc = encode_image(plane, &cfg, net, sj.as_ref())?;
        let encode_flops = match (cfg.metric, net, before) {
            (Metric::Idse, _, _) => jacobian_flops,
            (Metric::Fd, Some(n), Some(b)) => 2 * n.op_counts().since(&b).total_macs(),
            _ => 0,
        };
        let feat_dist = match net {
            Some(n) => Some(feature_distance(n, plane, &enc.reconstruction)?.to_f64_lossy()),
            None => None,
        };
        points.push(RdPoint {
            qp,
            bits: enc.totals.bits,
            bpp: enc.totals.bpp,
            psnr_db: enc.totals.psnr_db,
            idse: enc.totals.idse,
            feat_dist,
            encode_flops,
        });
        encodes.push(enc);
    }
    Ok(Sweep {
        curve: RdCurve {
            label: label.to_string(),
            metric: base.metric,
            sketch: net.map(|_| base.sketch),
            points,
        },
        encodes,
    })
}

/// Generator string recorded next to every seed in emitted artifacts.
pub fn generator_id() -> &'static str {
    GENERATOR_ID
}
