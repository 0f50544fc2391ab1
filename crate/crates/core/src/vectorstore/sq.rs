use super::{EmbeddingVector, VectorError};
use crate::num::Scalar;

pub const SQ_BITS: u32 = 8;
/// Highest code value.
pub const SQ_LEVELS: u8 = u8::MAX;

/// Per-dimension range shared by every vector in an index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarQuantParams<S> {
    pub min: Vec<S>,
    pub max: Vec<S>,
}

impl<S: Scalar> ScalarQuantParams<S> {
    /// Per-dimension min/max over `vectors`.
    pub fn fit(vectors: &[EmbeddingVector<S>]) -> Result<Self, VectorError> {
        let first = vectors.first().ok_or(VectorError::EmptyIndex)?;
        let mut min = first.clone();
        let mut max = first.clone();
        for v in &vectors[1..] {
            if v.len() != min.len() {
                return Err(VectorError::DimensionMismatch {
                    expected: min.len(),
                    actual: v.len(),
                });
            }
            for (i, &x) in v.iter().enumerate() {
                min[i] = min[i].min(x);
                max[i] = max[i].max(x);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn check(&self, len: usize) -> Result<(), VectorError> {
        if len != self.dim() {
            return Err(VectorError::DimensionMismatch {
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// `round((v - min) / (max - min) * 255)` clamped to `[0, 255]`, halves away from zero.
pub fn sq_quantize<S: Scalar>(
    v: &[S],
    params: &ScalarQuantParams<S>,
) -> Result<Vec<u8>, VectorError> {
    params.check(v.len())?;
    let levels = S::of(f64::from(SQ_LEVELS));
    Ok(v.iter()
        .zip(params.min.iter().zip(&params.max))
        .map(|(&x, (&lo, &hi))| {
            let range = hi - lo;
            if range <= S::zero() {
                return 0;
            }
            let t = ((x - lo) / range * levels).round();
            t.max(S::zero()).min(levels).to_u8().unwrap_or(0)
        })
        .collect())
}

pub fn sq_dequantize<S: Scalar>(
    codes: &[u8],
    params: &ScalarQuantParams<S>,
) -> Result<EmbeddingVector<S>, VectorError> {
    params.check(codes.len())?;
    let levels = S::of(f64::from(SQ_LEVELS));
    Ok(codes
        .iter()
        .zip(params.min.iter().zip(&params.max))
        .map(|(&c, (&lo, &hi))| {
            if hi <= lo {
                lo
            } else {
                lo + S::of(f64::from(c)) / levels * (hi - lo)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize) -> ScalarQuantParams<f64> {
        ScalarQuantParams {
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }

    #[test]
    fn hand_computed_codes() {
        let codes = sq_quantize(&[0.0, 0.5, 1.0], &unit(3)).unwrap();
        assert_eq!(codes, [0, 128, 255]);
    }

    #[test]
    fn min_vector_round_trips_exactly() {
        let params = ScalarQuantParams {
            min: vec![-1.5, 0.25],
            max: vec![2.0, 0.75],
        };
        let codes = sq_quantize(&params.min.clone(), &params).unwrap();
        assert_eq!(codes, [0, 0]);
        assert_eq!(sq_dequantize(&codes, &params).unwrap(), params.min);
    }

    #[test]
    fn out_of_range_values_clamp() {
        assert_eq!(sq_quantize(&[-3.0, 7.0], &unit(2)).unwrap(), [0, 255]);
    }

    #[test]
    fn degenerate_range_maps_to_min() {
        let params = ScalarQuantParams {
            min: vec![0.3],
            max: vec![0.3],
        };
        let codes = sq_quantize(&[0.3], &params).unwrap();
        assert_eq!(codes, [0]);
        assert_eq!(sq_dequantize(&codes, &params).unwrap(), [0.3]);
    }

    #[test]
    fn fit_takes_columnwise_extremes() {
        let params = ScalarQuantParams::fit(&[vec![1.0, -2.0], vec![-1.0, 5.0]]).unwrap();
        assert_eq!(params.min, [-1.0, -2.0]);
        assert_eq!(params.max, [1.0, 5.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert!(matches!(
            sq_quantize(&[0.0], &unit(2)),
            Err(VectorError::DimensionMismatch { .. })
        ));
    }
}
