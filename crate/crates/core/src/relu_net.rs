//! Bias-free ReLU feature maps `f(x) = W^q σ(W^{q-1} … σ(W^1 x))` and their
//! complexity `C(f) = ∏ ||W^i||_F`.

use rayon::prelude::*;

use crate::data_io::{ClassSamples, EmbeddingDataset, ReluNetWeights};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone)]
pub struct FeatureMap {
    weights: ReluNetWeights,
}

impl FeatureMap {
    pub fn new(weights: ReluNetWeights) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &ReluNetWeights {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.weights.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.output_dim()
    }

    pub fn depth(&self) -> usize {
        self.weights.depth()
    }

    /// ReLU after every layer except the last.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let layers = self.weights.layers();
        let mut h = x.to_vec();
        for (i, w) in layers.iter().enumerate() {
            h = w.mat_vec(&h)?;
            if i + 1 < layers.len() {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Product of layer Frobenius norms.
    pub fn complexity(&self) -> f64 {
        self.weights
            .layers()
            .iter()
            .map(Matrix::frobenius_norm)
            .product()
    }

    /// Applies `forward` to every sample, keeping class structure.
    pub fn embed_dataset(&self, raw: &EmbeddingDataset) -> Result<EmbeddingDataset> {
        if raw.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: raw.dim(),
            });
        }
        let classes = raw
            .classes()
            .iter()
            .map(|c| {
                let rows: Vec<Vec<f64>> = (0..c.count())
                    .into_par_iter()
                    .map(|i| self.forward(c.samples.row(i)))
                    .collect::<Result<_>>()?;
                let mut samples = Matrix::from_rows(&rows)?;
                if rows.is_empty() {
                    samples = Matrix::zeros(0, self.output_dim());
                }
                Ok(ClassSamples {
                    id: c.id.clone(),
                    samples,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        EmbeddingDataset::new(self.output_dim(), classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(layers: Vec<Matrix>) -> FeatureMap {
        FeatureMap::new(ReluNetWeights::new(layers).unwrap())
    }

    #[test]
    fn forward_examples() {
        let f = map(vec![Matrix::identity(2).scaled(2.0)]);
        assert_eq!(f.forward(&[1.0, 1.0]).unwrap(), vec![2.0, 2.0]);

        let g = map(vec![Matrix::identity(2), Matrix::identity(2)]);
        assert_eq!(g.forward(&[-1.0, 1.0]).unwrap(), vec![0.0, 1.0]);

        // no ReLU after the last layer
        let h = map(vec![Matrix::identity(2).scaled(-1.0)]);
        assert_eq!(h.forward(&[1.0, 2.0]).unwrap(), vec![-1.0, -2.0]);

        let deep = map(vec![
            Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[[2.0, -1.0]]).unwrap(),
        ]);
        assert_eq!(deep.forward(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0]);
        assert!(deep.forward(&[1.0]).is_err());
    }

    #[test]
    fn complexity_examples() {
        let f = map(vec![Matrix::identity(2).scaled(2.0)]);
        assert!((f.complexity() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        let g = map(vec![Matrix::identity(2), Matrix::identity(2)]);
        assert!((g.complexity() - 2.0).abs() < 1e-15);
        let z = map(vec![Matrix::identity(2), Matrix::zeros(2, 2)]);
        assert_eq!(z.complexity(), 0.0);
    }

    #[test]
    fn embed_identity_and_zero() {
        let raw = EmbeddingDataset::from_class_rows(vec![
            ("a", vec![vec![-1.0, 2.0], vec![0.5, 0.25]]),
            ("b", vec![vec![3.0, -4.0]]),
        ])
        .unwrap();
        let id = map(vec![Matrix::identity(2)]);
        assert_eq!(id.embed_dataset(&raw).unwrap(), raw);

        let zero = map(vec![Matrix::zeros(3, 2)]);
        let out = zero.embed_dataset(&raw).unwrap();
        assert_eq!(out.dim(), 3);
        assert!(out
            .classes()
            .iter()
            .all(|c| c.samples.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn embed_dimension_mismatch() {
        let raw =
            EmbeddingDataset::from_class_rows(vec![("a", vec![vec![1.0]]), ("b", vec![vec![2.0]])])
                .unwrap();
        assert!(map(vec![Matrix::identity(2)]).embed_dataset(&raw).is_err());
    }
}
