//! Linear soft-margin SVM baseline, trained by stochastic subgradient
//! descent on the primal objective
//!
//!   lambda/2 * ||w||^2 + mean_i max(0, 1 - y_i (w . x_i + b))
//!
//! with the step size 1/(lambda * t). Targets use the {-1, +1} convention
//! internally (normal maps to -1); the bias term is not regularized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureVector;
use crate::numerics::{NumericsError, Rng, Vector};

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            epochs: 10,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vector,
    pub bias: f64,
    pub lambda: f64,
}

fn signed_target(fv: &FeatureVector) -> f64 {
    if fv.y {
        1.0
    } else {
        -1.0
    }
}

/// Fit by per-sample subgradient steps, reshuffling each epoch with the
/// seeded generator. Deterministic for a given seed.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN lambda must fail validation
pub fn svm_fit(dataset: &[FeatureVector], config: &SvmConfig) -> Result<SvmModel, SvmError> {
    if dataset.is_empty() {
        return Err(SvmError::EmptyDataset);
    }
    if !(config.lambda > 0.0) {
        return Err(SvmError::InvalidConfig("lambda must be > 0".into()));
    }
    if config.epochs == 0 {
        return Err(SvmError::InvalidConfig("epochs must be >= 1".into()));
    }
    let dim = dataset[0].x.len();
    if dataset.iter().any(|fv| fv.x.len() != dim) {
        return Err(SvmError::InvalidConfig(
            "dataset vectors have differing dimensionality".into(),
        ));
    }

    let mut rng = Rng::new(config.seed);
    let mut weights = Vector::zeros(dim);
    let mut bias = 0.0;
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut t: u64 = 1;

    for _ in 0..config.epochs {
        rng.shuffle(&mut indices);
        for &i in &indices {
            let fv = &dataset[i];
            let y = signed_target(fv);
            let eta = 1.0 / (config.lambda * t as f64);
            let margin = weights.dot(&fv.x)? + bias;
            let shrink = 1.0 - eta * config.lambda;
            if y * margin < 1.0 {
                for (w, x) in weights.data_mut().iter_mut().zip(fv.x.iter()) {
                    *w = shrink * *w + eta * y * x;
                }
                bias += eta * y;
            } else {
                for w in weights.data_mut() {
                    *w *= shrink;
                }
            }
            t += 1;
        }
    }

    Ok(SvmModel {
        weights,
        bias,
        lambda: config.lambda,
    })
}

/// Predicted class and raw margin. The positive (attack) class requires a
/// strictly positive margin; an exact zero scores as normal.
pub fn svm_predict(model: &SvmModel, x: &Vector) -> Result<(bool, f64), SvmError> {
    let margin = model.weights.dot(x)? + model.bias;
    Ok((margin > 0.0, margin))
}

/// Primal objective: lambda/2 ||w||^2 + mean hinge loss.
pub fn svm_objective(model: &SvmModel, dataset: &[FeatureVector]) -> Result<f64, SvmError> {
    let norm_sq: f64 = model.weights.iter().map(|w| w * w).sum();
    let mut hinge = 0.0;
    for fv in dataset {
        let margin = model.weights.dot(&fv.x)? + model.bias;
        hinge += (1.0 - signed_target(fv) * margin).max(0.0);
    }
    Ok(model.lambda / 2.0 * norm_sq + hinge / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AttackCategory;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn sample(x: Vec<f64>, y: bool) -> FeatureVector {
        FeatureVector {
            x: Vector::from_vec(x),
            y,
            category: if y {
                AttackCategory::Dos
            } else {
                AttackCategory::Normal
            },
        }
    }

    /// Attack iff x1 > x2, with a margin band so the problem is cleanly
    /// separable.
    fn separable_2d(n: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|_| {
                let a = rng.next_f64() * 2.0 - 1.0;
                let offset = 0.2 + rng.next_f64();
                if rng.next_f64() < 0.5 {
                    sample(vec![a + offset, a - offset], true)
                } else {
                    sample(vec![a - offset, a + offset], false)
                }
            })
            .collect()
    }

    #[test]
    fn fits_separable_data_perfectly() {
        let dataset = separable_2d(200, 10);
        let model = svm_fit(&dataset, &SvmConfig::default()).unwrap();
        let correct = dataset
            .iter()
            .filter(|fv| svm_predict(&model, &fv.x).unwrap().0 == fv.y)
            .count();
        assert_eq!(correct, dataset.len());
    }

    #[test]
    fn zero_model_hinge_is_one() {
        let model = SvmModel {
            weights: Vector::zeros(2),
            bias: 0.0,
            lambda: 1e-4,
        };
        let dataset = vec![sample(vec![3.0, -1.0], true)];
        let obj = svm_objective(&model, &dataset).unwrap();
        assert_eq!(obj, 1.0);
    }

    #[test]
    fn fit_is_deterministic() {
        let dataset = separable_2d(100, 4);
        let a = svm_fit(&dataset, &SvmConfig::default()).unwrap();
        let b = svm_fit(&dataset, &SvmConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_margin_predicts_normal() {
        let model = SvmModel {
            weights: Vector::from_vec(vec![1.0, 0.0]),
            bias: 0.0,
            lambda: 1e-4,
        };
        let (class, margin) = svm_predict(&model, &Vector::from_vec(vec![0.0, 5.0])).unwrap();
        assert_eq!(margin, 0.0);
        assert!(!class);
    }

    #[test]
    fn unit_weight_on_basis_vector() {
        let model = SvmModel {
            weights: Vector::from_vec(vec![1.0, 0.0]),
            bias: 0.0,
            lambda: 1e-4,
        };
        let (class, margin) = svm_predict(&model, &Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(margin, 1.0);
        assert!(class);
    }

    #[test]
    fn predictions_match_brute_force_sign() {
        let dataset = separable_2d(100, 77);
        let model = svm_fit(&dataset, &SvmConfig::default()).unwrap();
        for fv in &dataset {
            // independent scalar-loop margin
            let mut margin = model.bias;
            for (w, x) in model.weights.iter().zip(fv.x.iter()) {
                margin += w * x;
            }
            let expected = margin > 0.0;
            assert_eq!(svm_predict(&model, &fv.x).unwrap().0, expected);
        }
    }

    #[test]
    fn objective_non_increasing_over_epochs() {
        let dataset = separable_2d(150, 5);
        let mut previous = f64::INFINITY;
        for epochs in 1..=8 {
            let config = SvmConfig {
                epochs,
                ..SvmConfig::default()
            };
            let model = svm_fit(&dataset, &config).unwrap();
            let objective = svm_objective(&model, &dataset).unwrap();
            assert!(
                objective <= previous + 1e-9,
                "epoch {epochs}: {objective} > {previous}"
            );
            previous = objective;
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(
            svm_fit(&[], &SvmConfig::default()),
            Err(SvmError::EmptyDataset)
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = SvmModel {
            weights: Vector::zeros(3),
            bias: 0.0,
            lambda: 1e-4,
        };
        assert!(matches!(
            svm_predict(&model, &Vector::zeros(2)),
            Err(SvmError::Numerics(_))
        ));
    }

    proptest! {
        #[test]
        fn prediction_is_scale_covariant(alpha in 0.001f64..1000.0) {
            let dataset = separable_2d(50, 9);
            let model = svm_fit(&dataset, &SvmConfig::default()).unwrap();
            let scaled = SvmModel {
                weights: model.weights.scale(alpha),
                bias: model.bias * alpha,
                lambda: model.lambda,
            };
            for fv in &dataset {
                prop_assert_eq!(
                    svm_predict(&model, &fv.x).unwrap().0,
                    svm_predict(&scaled, &fv.x).unwrap().0
                );
            }
        }
    }
}
