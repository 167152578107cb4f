use super::{Extent, FeatureExtractor, FeatureShape, Linearization, OpCounts, OpStats};
use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Explicit linear extractor `f(x) = W x` on a fixed input extent.
///
/// Its Jacobian is `W` everywhere, so it gives exact references for the
/// Taylor and sketching identities.
#[derive(Debug)]
pub struct DenseLinear<T> {
    extent: Extent,
    n_f: usize,
    /// `n_f x n_p`, row-major.
    matrix: Vec<T>,
    stats: OpStats,
}

impl<T: Real> DenseLinear<T> {
    pub fn new(extent: Extent, n_f: usize, matrix: Vec<T>) -> Result<Self> {
        if n_f == 0 || matrix.len() != n_f * extent.pixels() {
            return Err(Error::shape(format!(
                "matrix has {} entries, expected {} x {}",
                matrix.len(),
                n_f,
                extent.pixels()
            )));
        }
        Ok(DenseLinear {
            extent,
            n_f,
            matrix,
            stats: OpStats::default(),
        })
    }

    /// Rows are unit vectors picking the listed pixels.
    pub fn selector(extent: Extent, pixels: &[usize]) -> Result<Self> {
        let n_p = extent.pixels();
        let mut m = vec![T::zero(); pixels.len() * n_p];
        for (r, &p) in pixels.iter().enumerate() {
            if p >= n_p {
                return Err(Error::invalid(format!("pixel {p} outside {n_p}-pixel input")));
            }
            m[r * n_p + p] = T::one();
        }
        Self::new(extent, pixels.len(), m)
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.matrix[r * self.extent.pixels()..][..self.extent.pixels()]
    }

    fn check(&self, input: &[T], extent: Extent) -> Result<()> {
        if extent != self.extent || input.len() != extent.pixels() {
            return Err(Error::shape("input does not match the linear extractor extent"));
        }
        Ok(())
    }

    fn apply(&self, v: &[T]) -> Vec<T> {
        (0..self.n_f).map(|r| dot(self.row(r), v)).collect()
    }

    fn macs(&self) -> u64 {
        (self.n_f * self.extent.pixels()) as u64
    }
}

pub struct DenseLinearTape<'a, T> {
    f: &'a DenseLinear<T>,
    output: Vec<T>,
}

impl<T: Real> FeatureExtractor<T> for DenseLinear<T> {
    type Tape<'a> = DenseLinearTape<'a, T>;

    fn output_shape(&self, extent: Extent) -> Result<FeatureShape> {
        if extent != self.extent {
            return Err(Error::shape("extent does not match the linear extractor"));
        }
        Ok(FeatureShape {
            channels: self.n_f,
            height: 1,
            width: 1,
        })
    }

    fn linearize<'a>(&'a self, input: &[T], extent: Extent) -> Result<DenseLinearTape<'a, T>> {
        self.check(input, extent)?;
        self.stats.forward(self.macs());
        Ok(DenseLinearTape {
            f: self,
            output: self.apply(input),
        })
    }

    fn op_counts(&self) -> OpCounts {
        self.stats.snapshot()
    }
}

impl<T: Real> Linearization<T> for DenseLinearTape<'_, T> {
    fn output(&self) -> &[T] {
        &self.output
    }

    fn feature_shape(&self) -> FeatureShape {
        FeatureShape {
            channels: self.f.n_f,
            height: 1,
            width: 1,
        }
    }

    fn input_len(&self) -> usize {
        self.f.extent.pixels()
    }

    fn vjp(&self, cotangent: &[T]) -> Result<Vec<T>> {
        if cotangent.len() != self.f.n_f {
            return Err(Error::shape("cotangent length mismatch"));
        }
        let mut out = vec![T::zero(); self.input_len()];
        for (r, &c) in cotangent.iter().enumerate() {
            if c != T::zero() {
                for (o, &w) in out.iter_mut().zip(self.f.row(r)) {
                    *o += c * w;
                }
            }
        }
        self.f.stats.backward(self.f.macs());
        Ok(out)
    }

    fn jvp(&self, direction: &[T]) -> Result<Vec<T>> {
        if direction.len() != self.input_len() {
            return Err(Error::shape("direction length mismatch"));
        }
        self.f.stats.tangent(self.f.macs());
        Ok(self.f.apply(direction))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vjp_is_transpose() {
        let e = Extent::new(2, 2);
        let f = DenseLinear::new(e, 3, (0..12).map(|v| v as f64).collect()).unwrap();
        let v = [1.0, -2.0, 0.5];
        let g = f.vjp(&[0.0; 4], e, &v).unwrap();
        for p in 0..4 {
            let expect: f64 = (0..3).map(|r| v[r] * f.row(r)[p]).sum();
            assert_eq!(g[p], expect);
        }
        assert!(f.vjp(&[0.0; 4], e, &[0.0; 4]).is_err());
    }

    #[test]
    fn selector_picks_pixels() {
        let e = Extent::new(4, 4);
        let f = DenseLinear::<f64>::selector(e, &[0, 5]).unwrap();
        let x: Vec<f64> = (0..16).map(|v| v as f64).collect();
        assert_eq!(f.forward(&x, e).unwrap(), vec![0.0, 5.0]);
        assert!(DenseLinear::<f64>::selector(e, &[16]).is_err());
    }
}
