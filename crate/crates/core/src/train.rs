//! Mini-batch training with SGD or Adam, deterministic for a given seed, plus
//! per-row reconstruction losses for scoring.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    backward_accumulate, forward_into, loss, Gradients, Parameters, Workspace,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scale::FeatureMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl TrainConfig {
    /// The hyperparameters reported for the original experiment: 60 epochs,
    /// batch 8, learning rate 1e-6, plain SGD.
    pub fn paper_profile(seed: u64) -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e-6,
            optimizer: Optimizer::Sgd,
            seed,
        }
    }

    /// Profile used by the acceptance scenario: Adam with a practical
    /// learning rate; same architecture as the paper profile.
    pub fn tuned_profile(seed: u64) -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1.5e-3,
            optimizer: Optimizer::adam(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e-6,
            optimizer: Optimizer::adam(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub wall_time_seconds: f64,
}

struct AdamState<F> {
    m_weights: Vec<Vec<F>>,
    v_weights: Vec<Vec<F>>,
    m_biases: Vec<Vec<F>>,
    v_biases: Vec<Vec<F>>,
    step: u32,
}

impl<F: Scalar> AdamState<F> {
    fn zeros_like(params: &Parameters<F>) -> Self {
        let weights = || {
            params
                .layers
                .iter()
                .map(|l| vec![F::zero(); l.weights.len()])
                .collect::<Vec<_>>()
        };
        let biases = || {
            params
                .layers
                .iter()
                .map(|l| vec![F::zero(); l.biases.len()])
                .collect::<Vec<_>>()
        };
        AdamState {
            m_weights: weights(),
            v_weights: weights(),
            m_biases: biases(),
            v_biases: biases(),
            step: 0,
        }
    }
}

/// Step-constant Adam coefficients, including the bias-correction
/// denominators `1 - βᵗ` for the current step.
struct AdamCoeffs<F> {
    lr: F,
    beta1: F,
    beta2: F,
    epsilon: F,
    bias1: F,
    bias2: F,
}

fn adam_update<F: Scalar>(value: &mut F, grad: F, m: &mut F, v: &mut F, c: &AdamCoeffs<F>) {
    *m = c.beta1 * *m + (F::one() - c.beta1) * grad;
    *v = c.beta2 * *v + (F::one() - c.beta2) * grad * grad;
    let m_hat = *m / c.bias1;
    let v_hat = *v / c.bias2;
    *value -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
}

fn apply_update<F: Scalar>(
    params: &mut Parameters<F>,
    grads: &Gradients<F>,
    config: &TrainConfig,
    adam: &mut Option<AdamState<F>>,
) {
    let lr = F::from_f64_lossy(config.learning_rate);
    match config.optimizer {
        Optimizer::Sgd => {
            for (layer, (dw, db)) in params
                .layers
                .iter_mut()
                .zip(grads.d_weights.iter().zip(&grads.d_biases))
            {
                for (w, &g) in layer.weights.iter_mut().zip(dw) {
                    *w -= lr * g;
                }
                for (b, &g) in layer.biases.iter_mut().zip(db) {
                    *b -= lr * g;
                }
            }
        }
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let state = adam.as_mut().expect("adam state allocated");
            state.step += 1;
            let coeffs = AdamCoeffs {
                lr,
                beta1: F::from_f64_lossy(beta1),
                beta2: F::from_f64_lossy(beta2),
                epsilon: F::from_f64_lossy(epsilon),
                bias1: F::one() - F::from_f64_lossy(beta1.powi(state.step as i32)),
                bias2: F::one() - F::from_f64_lossy(beta2.powi(state.step as i32)),
            };
            for (idx, layer) in params.layers.iter_mut().enumerate() {
                for (i, w) in layer.weights.iter_mut().enumerate() {
                    adam_update(
                        w,
                        grads.d_weights[idx][i],
                        &mut state.m_weights[idx][i],
                        &mut state.v_weights[idx][i],
                        &coeffs,
                    );
                }
                for (i, b) in layer.biases.iter_mut().enumerate() {
                    adam_update(
                        b,
                        grads.d_biases[idx][i],
                        &mut state.m_biases[idx][i],
                        &mut state.v_biases[idx][i],
                        &coeffs,
                    );
                }
            }
        }
    }
}

/// Trains for `config.epochs` full passes with a seed-derived batch order
/// reshuffled every epoch. Aborts with epoch/batch coordinates if a loss goes
/// non-finite.
pub fn train<F: Scalar>(
    params: &Parameters<F>,
    train: &FeatureMatrix<F>,
    val: &FeatureMatrix<F>,
    config: &TrainConfig,
) -> Result<(Parameters<F>, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::data("training matrix is empty"));
    }
    if val.is_empty() {
        return Err(Error::data("validation matrix is empty"));
    }
    for (name, m) in [("training", train), ("validation", val)] {
        if m.n_cols() != params.input_dim() {
            return Err(Error::data(format!(
                "{name} matrix width {} does not match model input dim {}",
                m.n_cols(),
                params.input_dim()
            )));
        }
    }

    let started = Instant::now();
    let mut params = params.clone();
    let mut grads = Gradients::zeros_like(&params);
    let mut ws = Workspace::for_params(&params);
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState::zeros_like(&params)),
        Optimizer::Sgd => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = train.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut train_losses = Vec::with_capacity(config.epochs);
    let mut val_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss_sum = 0.0f64;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            grads.zero();
            let mut batch_loss = F::zero();
            for &row in batch {
                let x = train.row(row);
                forward_into(&params, x, &mut ws).map_err(|e| match e {
                    Error::Numeric { context } => Error::Numeric {
                        context: format!("epoch {epoch}, batch {batch_idx}: {context}"),
                    },
                    other => other,
                })?;
                batch_loss += loss(x, ws.output());
                backward_accumulate(&params, x, &mut ws, &mut grads);
            }
            let scale = F::from_f64_lossy(1.0 / batch.len() as f64);
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric {
                    context: format!("epoch {epoch}, batch {batch_idx}: loss"),
                });
            }
            grads.scale(scale);
            apply_update(&mut params, &grads, config, &mut adam);
            epoch_loss_sum += batch_loss.to_f64_lossy() * batch.len() as f64;
        }
        train_losses.push(epoch_loss_sum / n as f64);

        let mut val_sum = 0.0f64;
        for row in val.rows() {
            forward_into(&params, row, &mut ws).map_err(|e| match e {
                Error::Numeric { context } => Error::Numeric {
                    context: format!("epoch {epoch}, validation: {context}"),
                },
                other => other,
            })?;
            val_sum += loss(row, ws.output()).to_f64_lossy();
        }
        val_losses.push(val_sum / val.n_rows() as f64);
    }

    let report = TrainReport {
        train_losses,
        val_losses,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

/// Model outputs for every row, keyed like the input matrix.
pub fn reconstructions<F: Scalar>(
    params: &Parameters<F>,
    m: &FeatureMatrix<F>,
) -> Result<FeatureMatrix<F>> {
    let mut ws = Workspace::for_params(params);
    let mut out = FeatureMatrix::new(m.n_cols());
    for (key, row) in m.row_keys().iter().zip(m.rows()) {
        forward_into(params, row, &mut ws)?;
        out.push_row(*key, ws.output());
    }
    Ok(out)
}

/// One MSE per row, order preserved.
pub fn reconstruction_losses<F: Scalar>(
    params: &Parameters<F>,
    m: &FeatureMatrix<F>,
) -> Result<Vec<F>> {
    if !m.is_empty() && m.n_cols() != params.input_dim() {
        return Err(Error::data(format!(
            "matrix width {} does not match model input dim {}",
            m.n_cols(),
            params.input_dim()
        )));
    }
    let mut ws = Workspace::for_params(params);
    let mut out = Vec::with_capacity(m.n_rows());
    for row in m.rows() {
        forward_into(params, row, &mut ws)?;
        out.push(loss(row, ws.output()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{forward, gradients, init, Activation, ModelConfig, OutputActivation};
    use crate::time::Timestamp;

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix<f64> {
        let keys = (0..rows.len())
            .map(|i| Timestamp::from_epoch_minute(i as i64))
            .collect();
        FeatureMatrix::from_rows(rows, keys).unwrap()
    }

    fn toy_params(seed: u64) -> Parameters<f64> {
        Parameters::init_from_dims(
            &[2, 3, 1, 3, 2],
            Activation::Relu,
            OutputActivation::Sigmoid,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_is_invalid_config() {
        let params = toy_params(1);
        let m = matrix(vec![vec![0.1, 0.9], vec![0.4, 0.6]]);
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::paper_profile(1)
        };
        let err = train(&params, &m, &m, &config).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
    }

    #[test]
    fn single_sgd_step_matches_hand_computation() {
        let params = toy_params(9);
        let m = matrix(vec![vec![0.2, 0.7]]);
        let config = TrainConfig {
            epochs: 1,
            batch_size: 1,
            learning_rate: 0.05,
            optimizer: Optimizer::Sgd,
            seed: 4,
        };
        let (trained, report) = train(&params, &m, &m, &config).unwrap();
        let grads = gradients(&params, [m.row(0)]).unwrap();
        for (idx, layer) in trained.layers.iter().enumerate() {
            for (i, &w) in layer.weights.iter().enumerate() {
                let expected = params.layers[idx].weights[i] - 0.05 * grads.d_weights[idx][i];
                assert!((w - expected).abs() < 1e-12, "weight {idx}/{i}");
            }
            for (i, &b) in layer.biases.iter().enumerate() {
                let expected = params.layers[idx].biases[i] - 0.05 * grads.d_biases[idx][i];
                assert!((b - expected).abs() < 1e-12, "bias {idx}/{i}");
            }
        }
        assert_eq!(report.train_losses.len(), 1);
        assert_eq!(report.val_losses.len(), 1);
        // pre-update loss is what the report records for the first batch
        let pass = forward(&params, m.row(0)).unwrap();
        let expected_loss = loss(m.row(0), pass.reconstruction());
        assert!((report.train_losses[0] - expected_loss).abs() < 1e-12);
    }

    #[test]
    fn single_sgd_step_on_one_weight_network_matches_arithmetic() {
        // w=2, b=0.1, x=0.5, linear output:
        //   xhat = 1.1, dL/dxhat = 2(1.1-0.5) = 1.2, dW = 1.2*0.5 = 0.6, db = 1.2
        //   lr 0.1: w' = 1.94, b' = -0.02
        let mut params =
            Parameters::init_from_dims(&[1, 1], Activation::Relu, OutputActivation::Linear, 0)
                .unwrap();
        params.layers[0].weights = vec![2.0];
        params.layers[0].biases = vec![0.1];
        let m = matrix(vec![vec![0.5]]);
        let config = TrainConfig {
            epochs: 1,
            batch_size: 1,
            learning_rate: 0.1,
            optimizer: Optimizer::Sgd,
            seed: 0,
        };
        let (trained, report) = train(&params, &m, &m, &config).unwrap();
        assert!((trained.layers[0].weights[0] - 1.94).abs() < 1e-12);
        assert!((trained.layers[0].biases[0] - (-0.02)).abs() < 1e-12);
        assert!((report.train_losses[0] - 0.36).abs() < 1e-12);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let params = toy_params(2);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 / 40.0).sin().abs(), (i as f64 / 40.0)])
            .collect();
        let m = matrix(rows);
        let (t, v) = crate::scale::split(&m, 0.75, crate::scale::SplitMode::Chronological).unwrap();
        let config = TrainConfig {
            epochs: 5,
            batch_size: 4,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            seed: 77,
        };
        let (a, ra) = train(&params, &t, &v, &config).unwrap();
        let (b, rb) = train(&params, &t, &v, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.train_losses, rb.train_losses);
        assert_eq!(ra.val_losses, rb.val_losses);
    }

    #[test]
    fn losses_stay_finite_and_nonnegative() {
        let params = toy_params(3);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64 / 30.0, 1.0 - i as f64 / 30.0])
            .collect();
        let m = matrix(rows);
        let config = TrainConfig {
            epochs: 8,
            batch_size: 8,
            learning_rate: 1e-2,
            optimizer: Optimizer::adam(),
            seed: 5,
        };
        let (_, report) = train(&params, &m, &m, &config).unwrap();
        assert_eq!(report.train_losses.len(), 8);
        for &l in report.train_losses.iter().chain(&report.val_losses) {
            assert!(l.is_finite() && l >= 0.0);
        }
    }

    #[test]
    fn non_finite_abort_reports_epoch_and_batch() {
        // one huge sgd step sends relu/linear activations to infinity on the
        // next forward pass
        let params =
            Parameters::init_from_dims(&[2, 3, 2], Activation::Relu, OutputActivation::Linear, 1)
                .unwrap();
        let m = matrix(vec![vec![0.4, 0.6], vec![0.2, 0.9], vec![0.7, 0.1]]);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 1,
            learning_rate: 1e200,
            optimizer: Optimizer::Sgd,
            seed: 2,
        };
        let err = train(&params, &m, &m, &config).unwrap_err();
        match err {
            Error::Numeric { context } => {
                assert!(context.contains("epoch"), "{context}");
                assert!(
                    context.contains("batch") || context.contains("validation"),
                    "{context}"
                );
            }
            other => panic!("expected numerical abort, got {other}"),
        }
    }

    #[test]
    fn adam_step_with_zero_gradient_leaves_parameters_unchanged() {
        // identity network with linear output reconstructs its input exactly,
        // so every gradient is zero
        let mut params =
            Parameters::init_from_dims(&[2, 2], Activation::Relu, OutputActivation::Linear, 0)
                .unwrap();
        params.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        params.layers[0].biases = vec![0.0, 0.0];
        let m = matrix(vec![vec![0.25, 0.5], vec![0.5, 0.75]]);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 2,
            learning_rate: 0.1,
            optimizer: Optimizer::adam(),
            seed: 0,
        };
        let (trained, report) = train(&params, &m, &m, &config).unwrap();
        assert_eq!(trained, params);
        assert!(report.train_losses.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn reconstruction_losses_match_per_row_oracle() {
        let params = toy_params(6);
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|i| vec![i as f64 / 25.0, (i as f64 / 25.0).cos().abs()])
            .collect();
        let m = matrix(rows);
        let losses = reconstruction_losses(&params, &m).unwrap();
        assert_eq!(losses.len(), 25);
        for (i, &l) in losses.iter().enumerate() {
            let pass = forward(&params, m.row(i)).unwrap();
            let expected = loss(m.row(i), pass.reconstruction());
            assert_eq!(l, expected);
        }
    }

    #[test]
    fn reconstruction_losses_of_empty_matrix_is_empty() {
        let params = toy_params(6);
        let m: FeatureMatrix<f64> = FeatureMatrix::new(2);
        assert!(reconstruction_losses(&params, &m).unwrap().is_empty());
    }

    #[test]
    fn works_in_f32_too() {
        let params: Parameters<f32> =
            Parameters::init_from_dims(&[2, 3, 2], Activation::Tanh, OutputActivation::Sigmoid, 11)
                .unwrap();
        let keys = vec![
            Timestamp::from_epoch_minute(0),
            Timestamp::from_epoch_minute(1),
        ];
        let m = FeatureMatrix::from_rows(vec![vec![0.2f32, 0.8], vec![0.6, 0.4]], keys).unwrap();
        let config = TrainConfig {
            epochs: 2,
            batch_size: 1,
            learning_rate: 1e-2,
            optimizer: Optimizer::adam(),
            seed: 1,
        };
        let (trained, report) = train(&params, &m, &m, &config).unwrap();
        assert_eq!(report.train_losses.len(), 2);
        assert!(reconstruction_losses(&trained, &m)
            .unwrap()
            .iter()
            .all(|l| l.is_finite()));
    }

    #[test]
    fn init_of_default_architecture_trains_against_paper_profile_shape() {
        // smoke: the paper hyperparameters run and produce a length-epochs report
        let config = ModelConfig {
            node_size: 16,
            ..ModelConfig::default()
        };
        let params: Parameters<f64> = init(&config, 1).unwrap();
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 / 20.0;
                vec![t, 1.0 - t, 0.5, t * t, 0.3]
            })
            .collect();
        let m = matrix(rows);
        let train_config = TrainConfig {
            epochs: 3,
            ..TrainConfig::paper_profile(2)
        };
        let (_, report) = train(&params, &m, &m, &train_config).unwrap();
        assert_eq!(report.train_losses.len(), 3);
    }
}
