//! CSV and gnuplot artifacts.
//!
//! Curve files have the header
//!
//! ```text
//! label,metric,sketch,ell,seed,generator,qp,bits,bpp,psnr_db,idse,feat_dist,encode_flops
//! ```
//!
//! with one row per point. `sketch`, `ell`, `seed` and `generator` are empty
//! when no sketch was used, `idse` and `feat_dist` when not measured. Reals
//! are written with nine significant digits (`{:.8e}`).
//!
//! Decision files have the header `index,mode,distortion,rate_bits,cost`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{RdCurve, RdPoint};
use crate::error::{Error, Result};
use crate::rdo::{BlockDecision, Metric};
use crate::sketch::{SketchKind, SketchParams, GENERATOR_ID};

pub const CURVE_HEADER: [&str; 13] = [
    "label",
    "metric",
    "sketch",
    "ell",
    "seed",
    "generator",
    "qp",
    "bits",
    "bpp",
    "psnr_db",
    "idse",
    "feat_dist",
    "encode_flops",
];

pub const DECISION_HEADER: [&str; 5] = ["index", "mode", "distortion", "rate_bits", "cost"];

fn real(v: f64) -> String {
    format!("{v:.8e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

pub fn curves_to_csv(curves: &[RdCurve]) -> Result<Vec<u8>> {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER)?;
    for c in curves {
        let (kind, ell, seed, generator) = match c.sketch {
            Some(s) => (s.kind.to_string(), s.ell.to_string(), s.seed.to_string(), GENERATOR_ID.to_string()),
            None => Default::default(),
        };
        for p in &c.points {
            w.write_record([
                c.label.clone(),
                c.metric.to_string(),
                kind.clone(),
                ell.clone(),
                seed.clone(),
                generator.clone(),
                p.qp.to_string(),
                p.bits.to_string(),
                real(p.bpp),
                real(p.psnr_db),
                opt_real(p.idse),
                opt_real(p.feat_dist),
                p.encode_flops.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_curves_csv(curves: &[RdCurve], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, curves_to_csv(curves)?)?;
    Ok(())
}

fn field(rec: &::csv::StringRecord, k: usize) -> &str {
    rec.get(k).unwrap_or("")
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format("curve csv", format!("bad {what} value {s:?}")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, what).map(Some)
    }
}

/// Parses a curve file; consecutive rows with the same label form one curve.
pub fn parse_curves_csv(bytes: &[u8]) -> Result<Vec<RdCurve>> {
    let mut r = ::csv::Reader::from_reader(bytes);
    if r.headers()?.iter().ne(CURVE_HEADER) {
        return Err(Error::format("curve csv", "unexpected header"));
    }
    let mut curves: Vec<RdCurve> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = field(&rec, 0);
        let metric: Metric = field(&rec, 1).parse()?;
        let sketch = if field(&rec, 2).is_empty() {
            None
        } else {
            Some(SketchParams::new(
                field(&rec, 2).parse::<SketchKind>()?,
                parse(field(&rec, 3), "ell")?,
                parse(field(&rec, 4), "seed")?,
            ))
        };
        let point = RdPoint {
            qp: parse(field(&rec, 6), "qp")?,
            bits: parse(field(&rec, 7), "bits")?,
            bpp: parse(field(&rec, 8), "bpp")?,
            psnr_db: parse(field(&rec, 9), "psnr_db")?,
            idse: parse_opt(field(&rec, 10), "idse")?,
            feat_dist: parse_opt(field(&rec, 11), "feat_dist")?,
            encode_flops: parse(field(&rec, 12), "encode_flops")?,
        };
        match curves.last_mut() {
            Some(c) if c.label == label && c.metric == metric && c.sketch == sketch => c.points.push(point),
            _ => curves.push(RdCurve {
                label: label.to_string(),
                metric,
                sketch,
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

pub fn read_curves_csv(path: impl AsRef<Path>) -> Result<Vec<RdCurve>> {
    parse_curves_csv(&fs::read(path)?)
}

pub fn decisions_to_csv(decisions: &[BlockDecision]) -> Result<Vec<u8>> {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(DECISION_HEADER)?;
    for d in decisions {
        w.write_record([
            d.index.to_string(),
            d.mode.to_string(),
            real(d.distortion),
            d.bits.to_string(),
            real(d.cost),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_decisions_csv(decisions: &[BlockDecision], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, decisions_to_csv(decisions)?)?;
    Ok(())
}

/// Gnuplot data: one index block per curve, columns `qp bits bpp psnr idse feat_dist`.
pub fn curves_to_dat(curves: &[RdCurve]) -> Vec<u8> {
    let mut out = Vec::new();
    for (k, c) in curves.iter().enumerate() {
        if k > 0 {
            out.extend_from_slice(b"\n\n");
        }
        writeln!(out, "# {} ({})", c.label, c.metric).unwrap();
        writeln!(out, "# qp bits bpp psnr_db idse feat_dist").unwrap();
        for p in &c.points {
            let na = |v: Option<f64>| v.map(real).unwrap_or_else(|| "NaN".into());
            writeln!(
                out,
                "{} {} {} {} {} {}",
                p.qp,
                p.bits,
                real(p.bpp),
                real(p.psnr_db),
                na(p.idse),
                na(p.feat_dist)
            )
            .unwrap();
        }
    }
    out
}
