//! Seeded mini-batch training loop: Adam on MSE, best-validation
//! checkpointing, patience-based early stopping.
//!
//! Per-sample forward/backward runs in parallel inside a batch; gradients
//! are reduced in sample-index order, so the loss history is bit-identical
//! for any worker count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use super::{adam_step, backward, forward, mse_loss, AdamState, NetworkParameters, Tensor};
use crate::error::{Error, Result};
use crate::imaging::{Image, Mask};

/// One training pair, already at the network resolution.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Image,
    pub mask: Mask,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Optional target: stop as soon as a batch training MSE drops below.
    pub stop_below_train_mse: Option<f64>,
}

impl TrainConfig {
    /// Defaults for training from scratch (lr 1e-4).
    pub fn training(seed: u64) -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            seed,
            stop_below_train_mse: None,
        }
    }

    /// Defaults for fine-tuning a loaded network (lr 5e-5).
    pub fn fine_tuning(seed: u64) -> Self {
        TrainConfig {
            lr: 5e-5,
            ..Self::training(seed)
        }
    }
}

/// One optimizer step in the loss history; `val_mse` is filled on the last
/// step of each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best parameters by validation MSE (final parameters when no
    /// validation set was given).
    pub params: NetworkParameters,
    pub adam: AdamState,
    pub history: Vec<StepRecord>,
    pub best_val_mse: Option<f64>,
    pub stopped_early: bool,
}

fn to_pairs(samples: &[TrainSample]) -> Vec<(Tensor, Tensor)> {
    samples
        .iter()
        .map(|s| {
            (
                Tensor::from_image_normalized(&s.image),
                Tensor::from_mask(&s.mask),
            )
        })
        .collect()
}

fn mean_val_mse(params: &NetworkParameters, pairs: &[(Tensor, Tensor)]) -> Result<f64> {
    let losses: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|(input, target)| {
            let (out, _) = forward(params, input)?;
            Ok(mse_loss(&out, target)?.0)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / pairs.len() as f64)
}

/// Train `initial` on `train_set`, tracking `val_set` for checkpoint
/// selection and early stopping. The initial parameters are used as-is,
/// which is what makes fine-tuning a plain call with loaded weights.
pub fn train(
    initial: NetworkParameters,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }

    let train_pairs = to_pairs(train_set);
    let val_pairs = to_pairs(val_set);

    let mut params = initial;
    let mut adam = AdamState::new(&params, config.lr);
    adam.beta1 = config.beta1;
    adam.beta2 = config.beta2;
    adam.epsilon = config.epsilon;

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut history = Vec::new();
    let mut step = 0u64;
    let mut best_val: Option<f64> = None;
    let mut best_params = params.clone();
    let mut epochs_since_best = 0usize;
    let mut stopped_early = false;

    'epochs: for _epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        // Fisher-Yates with the run RNG
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        for batch in order.chunks(config.batch_size) {
            let per_sample: Vec<Result<(f64, super::Gradients)>> = batch
                .par_iter()
                .map(|&idx| {
                    let (input, target) = &train_pairs[idx];
                    let (out, cache) = forward(&params, input)?;
                    let (loss, lgrad) = mse_loss(&out, target)?;
                    let grads = backward(&params, &cache, &lgrad)?;
                    Ok((loss, grads))
                })
                .collect();

            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            let mut batch_grads = params.zero_gradients();
            for item in per_sample {
                let (loss, grads) = item?;
                batch_loss += loss * scale;
                for (acc, g) in batch_grads.layers.iter_mut().zip(&grads.layers) {
                    for (a, v) in acc.weights.iter_mut().zip(&g.weights) {
                        *a += v * scale;
                    }
                    for (a, v) in acc.biases.iter_mut().zip(&g.biases) {
                        *a += v * scale;
                    }
                }
            }

            adam_step(&mut adam, &mut params, &batch_grads)?;
            step += 1;
            history.push(StepRecord {
                step,
                train_mse: batch_loss,
                val_mse: None,
            });

            if let Some(target) = config.stop_below_train_mse {
                if batch_loss < target {
                    stopped_early = true;
                    break 'epochs;
                }
            }
        }

        if !val_pairs.is_empty() {
            let val = mean_val_mse(&params, &val_pairs)?;
            if let Some(last) = history.last_mut() {
                last.val_mse = Some(val);
            }
            let improved = best_val.map_or(true, |b| val < b);
            if improved {
                best_val = Some(val);
                best_params = params.clone();
                epochs_since_best = 0;
            } else {
                epochs_since_best += 1;
                if epochs_since_best >= config.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let final_params = if best_val.is_some() { best_params } else { params };
    Ok(TrainOutcome {
        params: final_params,
        adam,
        history,
        best_val_mse: best_val,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcn::sequential_network;

    fn disk_sample(size: usize, cx: f64, cy: f64, radius: f64) -> TrainSample {
        let mut img = vec![0.0f64; size * size];
        let mut mask = vec![0u8; size * size];
        for r in 0..size {
            for c in 0..size {
                let dx = c as f64 - cx;
                let dy = r as f64 - cy;
                let inside = dx * dx + dy * dy <= radius * radius;
                img[r * size + c] = if inside { 40.0 } else { 200.0 };
                mask[r * size + c] = u8::from(inside);
            }
        }
        TrainSample {
            image: Image::new(size, size, img).unwrap(),
            mask: Mask::new(size, size, mask).unwrap(),
        }
    }

    fn tiny_set() -> Vec<TrainSample> {
        vec![
            disk_sample(8, 3.0, 3.0, 2.0),
            disk_sample(8, 5.0, 4.0, 2.5),
            disk_sample(8, 2.0, 5.0, 1.5),
        ]
    }

    #[test]
    fn empty_train_split_is_rejected() {
        let params = NetworkParameters::zeros(sequential_network(2, 2).unwrap());
        let cfg = TrainConfig::training(1);
        assert!(train(params, &[], &[], &cfg).is_err());
    }

    #[test]
    fn loss_history_is_deterministic() {
        let specs = sequential_network(3, 4).unwrap();
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 2,
            ..TrainConfig::training(11)
        };
        let set = tiny_set();
        let run = |_: ()| {
            let params = NetworkParameters::glorot(specs.clone(), 5);
            train(params, &set, &set, &cfg).unwrap()
        };
        let a = run(());
        let b = run(());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn training_reduces_loss_on_a_tiny_problem() {
        let specs = sequential_network(3, 6).unwrap();
        let params = NetworkParameters::glorot(specs, 42);
        let cfg = TrainConfig {
            lr: 1e-2,
            max_epochs: 40,
            batch_size: 8,
            patience: 100,
            ..TrainConfig::training(3)
        };
        let set = tiny_set();
        let outcome = train(params, &set, &[], &cfg).unwrap();
        let first = outcome.history.first().unwrap().train_mse;
        let last = outcome.history.last().unwrap().train_mse;
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn stop_below_threshold_halts_training() {
        let specs = sequential_network(2, 4).unwrap();
        let params = NetworkParameters::glorot(specs, 9);
        let cfg = TrainConfig {
            stop_below_train_mse: Some(1.0), // MSE of sigmoid outputs vs binary is < 1 immediately
            max_epochs: 50,
            ..TrainConfig::training(2)
        };
        let outcome = train(params, &tiny_set(), &[], &cfg).unwrap();
        assert!(outcome.stopped_early);
        assert_eq!(outcome.history.len(), 1);
    }

    #[test]
    fn fine_tuning_config_uses_reduced_lr() {
        assert_eq!(TrainConfig::fine_tuning(0).lr, 5e-5);
        assert_eq!(TrainConfig::training(0).lr, 1e-4);
    }
}
