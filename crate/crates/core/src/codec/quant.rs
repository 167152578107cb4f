use crate::error::{Error, Result};
use crate::scalar::Real;

pub const QP_MIN: i32 = 0;
pub const QP_MAX: i32 = 51;

/// Largest level magnitude the quantizer accepts.
pub const MAX_LEVEL: i32 = 1 << 23;

/// Uniform mid-tread quantizer driven by a QP.
///
/// The step doubles every 6 QP: `step = 2^((qp - 4) / 6)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantParams {
    qp: i32,
    step: f64,
}

impl QuantParams {
    pub fn new(qp: i32) -> Result<Self> {
        if !(QP_MIN..=QP_MAX).contains(&qp) {
            return Err(Error::invalid(format!("qp {qp} outside [{QP_MIN}, {QP_MAX}]")));
        }
        // exact powers of two across every whole octave
        let q = qp - 4;
        let step = (f64::from(q.rem_euclid(6)) / 6.0).exp2() * 2f64.powi(q.div_euclid(6));
        Ok(QuantParams { qp, step })
    }

    pub fn qp(&self) -> i32 {
        self.qp
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `round(c / step)`, ties away from zero.
    pub fn quantize<T: Real>(&self, coeffs: &[T], levels: &mut [i32]) -> Result<()> {
        let step = T::lit(self.step);
        for (l, &c) in levels.iter_mut().zip(coeffs) {
            let v = (c / step).round();
            if !(v.abs() <= T::lit(f64::from(MAX_LEVEL))) {
                return Err(Error::Numeric(format!("level {v} exceeds quantizer range")));
            }
            *l = v.to_f64_lossy() as i32;
        }
        Ok(())
    }

    pub fn dequantize<T: Real>(&self, levels: &[i32], out: &mut [T]) {
        let step = T::lit(self.step);
        for (o, &l) in out.iter_mut().zip(levels) {
            *o = T::lit(f64::from(l)) * step;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_mapping() {
        assert_eq!(QuantParams::new(4).unwrap().step(), 1.0);
        assert_eq!(QuantParams::new(28).unwrap().step(), 16.0);
        assert_eq!(QuantParams::new(10).unwrap().step(), 2.0);
        let mut prev = 0.0;
        for qp in QP_MIN..=QP_MAX {
            let q = QuantParams::new(qp).unwrap();
            assert!(q.step() > prev);
            assert!((q.step() - 2f64.powf((qp as f64 - 4.0) / 6.0)).abs() < 1e-12 * q.step());
            prev = q.step();
        }
        for qp in QP_MIN..=QP_MAX - 6 {
            let a = QuantParams::new(qp).unwrap().step();
            assert_eq!(QuantParams::new(qp + 6).unwrap().step(), 2.0 * a);
        }
        assert!(QuantParams::new(52).is_err());
        assert!(QuantParams::new(-1).is_err());
    }

    #[test]
    fn rounding_rules() {
        let q = QuantParams::new(28).unwrap();
        let mut l = [0i32; 4];
        q.quantize(&[0.0f64, 40.0, 16.0 * 3.5, -16.0 * 3.5], &mut l).unwrap();
        assert_eq!(l, [0, 3, 4, -4]);
        let mut back = [0.0f64; 4];
        q.dequantize(&l, &mut back);
        assert_eq!(back, [0.0, 48.0, 64.0, -64.0]);
        let q1 = QuantParams::new(4).unwrap();
        assert_eq!(q1.step(), 1.0);
        let mut l1 = [0i32; 1];
        q1.quantize(&[3.5f64], &mut l1).unwrap();
        assert_eq!(l1, [4]);
        assert!(q1.quantize(&[1e9f64], &mut l1).is_err());
        assert!(q1.quantize(&[f64::NAN], &mut l1).is_err());
    }

    #[test]
    fn error_bounded_by_half_step() {
        for qp in [0, 7, 28, 51] {
            let q = QuantParams::new(qp).unwrap();
            let c: Vec<f64> = (0..200).map(|k| (k as f64 * 7.31).sin() * 900.0).collect();
            let mut l = vec![0; 200];
            let mut r = vec![0.0; 200];
            q.quantize(&c, &mut l).unwrap();
            q.dequantize(&l, &mut r);
            for (a, b) in c.iter().zip(&r) {
                assert!((a - b).abs() <= q.step() / 2.0 + 1e-9);
            }
        }
    }
}
