//! REINFORCE with a greedy rollout baseline.

use std::io::Write;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::planner::instance::{random_instance, Instance, InstanceConfig};
use crate::planner::model::{BnMode, ModelConfig, ModelParams};
use crate::planner::rollout::{greedy_costs, rollout_batch, DecodeMode};
use crate::planner::tensor::{Mat, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Significance level of the baseline-replacement t-test.
    pub alpha: f64,
    /// Instances in the fixed validation pool used by the t-test.
    pub validation_size: usize,
    /// Run the t-test every this many steps.
    pub baseline_every: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub instances: InstanceConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            steps_per_epoch: 100,
            batch_size: 64,
            learning_rate: 1e-4,
            alpha: 0.05,
            validation_size: 256,
            baseline_every: 100,
            max_grad_norm: 1.0,
            seed: 0,
            instances: InstanceConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    /// Mean sampled cost over the epoch.
    pub mean_len: f64,
    /// Mean greedy cost of the baseline model on the validation pool.
    pub baseline_len: f64,
    /// p-value of the last t-test in the epoch.
    pub ttest_p: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: ModelParams,
    pub log: Vec<TrainLogRow>,
    /// Baseline validation means: the initial one, then one per accepted
    /// replacement.
    pub baseline_history: Vec<f64>,
}

pub fn write_log_csv<W: Write>(rows: &[TrainLogRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn step(&mut self, params: &mut [Mat], grads: &[Mat]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                p.data[i] -= self.lr * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// p-value of the one-sided paired t-test for "candidate costs are lower".
pub fn one_sided_paired_ttest(candidate: &[f64], baseline: &[f64]) -> f64 {
    let n = candidate.len().min(baseline.len());
    if n < 2 {
        return 1.0;
    }
    let diffs: Vec<f64> = candidate.iter().zip(baseline).map(|(c, b)| c - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return if mean < 0.0 { 0.0 } else { 1.0 };
    }
    let t = mean / (var / n as f64).sqrt();
    StudentsT::new(0.0, 1.0, (n - 1) as f64).map(|d| d.cdf(t)).unwrap_or(1.0)
}

/// Policy-gradient estimate `sum_b (L_b - L_b,BM) grad log g(pi_b) / B` for
/// a batch, plus the sampled costs and batch-norm statistics.
pub fn policy_gradient(
    params: &ModelParams,
    baseline: &ModelParams,
    batch: &[Instance],
    rngs: &mut [ChaCha8Rng],
) -> Result<(Vec<Mat>, Vec<f64>, Vec<crate::planner::tensor::BatchStats>)> {
    let refs: Vec<&Instance> = batch.iter().collect();
    let mut tape = Tape::new();
    let out = rollout_batch(&mut tape, params, &refs, DecodeMode::Sample, BnMode::Train, rngs)?;
    let costs: Vec<f64> = out.rollouts.iter().zip(batch).map(|(r, i)| r.cost(i)).collect();
    let base = greedy_costs(baseline, batch, batch.len())?;
    let b = batch.len() as f64;
    let adv: Vec<f64> = costs.iter().zip(&base).map(|(c, bl)| (c - bl) / b).collect();
    let loss = tape.weighted_sum(out.log_prob, adv);
    let grads = tape.backward(loss, params.tensors.len(), &params.shapes());
    for (g, name) in grads.iter().zip(&params.names) {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    Ok((grads, costs, out.batch_stats))
}

fn clip(grads: &mut [Mat], max_norm: f64) {
    let norm = grads.iter().flat_map(|g| g.data.iter()).map(|v| v * v).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|v| *v *= s));
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Trains from a fresh initialization.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let params = ModelParams::init(&config.model, config.seed)?;
    train_from(config, params)
}

/// Trains starting from `params`; returns the best (baseline) model.
pub fn train_from(config: &TrainConfig, mut params: ModelParams) -> Result<TrainOutcome> {
    if config.batch_size == 0 || config.steps_per_epoch == 0 {
        return Err(Error::validation("train", "batch size and steps per epoch must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x7a11d));
    let validation: Vec<Instance> = (0..config.validation_size.max(2)).map(|_| random_instance(&config.instances, &mut val_rng)).collect();
    let chunk = config.batch_size.max(16);

    let mut best = params.clone();
    let mut best_costs = greedy_costs(&best, &validation, chunk)?;
    let mut history = vec![mean(&best_costs)];
    let mut adam = Adam::new(config.learning_rate, &params.shapes());
    let mut log = Vec::with_capacity(config.epochs);
    let every = config.baseline_every.max(1);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let mut sampled = Vec::new();
        let mut last_p = f64::NAN;
        for _ in 0..config.steps_per_epoch {
            let batch: Vec<Instance> = (0..config.batch_size).map(|_| random_instance(&config.instances, &mut rng)).collect();
            let mut rngs: Vec<ChaCha8Rng> = (0..batch.len()).map(|_| ChaCha8Rng::seed_from_u64(rng.random())).collect();
            let (mut grads, costs, stats) = policy_gradient(&params, &best, &batch, &mut rngs)?;
            clip(&mut grads, config.max_grad_norm);
            adam.step(&mut params.tensors, &grads);
            params.update_running(&stats);
            sampled.extend(costs);
            step += 1;

            if step % every == 0 {
                let cand = greedy_costs(&params, &validation, chunk)?;
                last_p = one_sided_paired_ttest(&cand, &best_costs);
                if last_p < config.alpha && mean(&cand) < mean(&best_costs) {
                    best = params.clone();
                    best_costs = cand;
                    history.push(mean(&best_costs));
                }
            }
        }
        let row = TrainLogRow { epoch, mean_len: mean(&sampled), baseline_len: mean(&best_costs), ttest_p: last_p };
        info!("epoch {epoch}: sampled {:.2}, baseline {:.2}, p = {:.4}", row.mean_len, row.baseline_len, row.ttest_p);
        log.push(row);
    }
    Ok(TrainOutcome { best, log, baseline_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ttest_direction() {
        let base = vec![10.0, 11.0, 12.0, 13.0, 14.0];
        let better = vec![9.0, 10.2, 10.9, 12.1, 13.0];
        let worse = vec![11.0, 11.9, 13.1, 14.2, 15.0];
        assert!(one_sided_paired_ttest(&better, &base) < 0.01);
        assert!(one_sided_paired_ttest(&worse, &base) > 0.99);
        assert_eq!(one_sided_paired_ttest(&base, &base), 1.0);
    }

    #[test]
    fn ttest_matches_reference() {
        // diffs -1, -2, -3 : mean -2, sd 1, t = -2 sqrt(3), df 2
        let p = one_sided_paired_ttest(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]);
        let t = -2.0 * 3f64.sqrt();
        // closed form for df = 2
        let expect = 0.5 * (1.0 + t / (2.0 + t * t).sqrt());
        assert!((p - expect).abs() < 1e-10, "{p} vs {expect}");
    }

    #[test]
    fn zero_advantage_zero_step() {
        let shapes = [(2, 2)];
        let mut adam = Adam::new(1e-3, &shapes);
        let mut p = vec![Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0])];
        let before = p.clone();
        adam.step(&mut p, &[Mat::zeros(2, 2)]);
        assert_eq!(p, before);
    }

    #[test]
    fn identical_policies_give_zero_gradient() {
        // One waypoint: the rollout is forced, sampled and greedy costs agree.
        let cfg = ModelConfig { dim: 8, heads: 2, layers: 1, ff_hidden: 8, clip: 10.0, bn_momentum: 0.1 };
        let params = ModelParams::init(&cfg, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch: Vec<Instance> = (0..4).map(|_| random_instance(&InstanceConfig::single_uav(1), &mut rng)).collect();
        let mut rngs: Vec<ChaCha8Rng> = (0..4).map(ChaCha8Rng::seed_from_u64).collect();
        let (grads, _, _) = policy_gradient(&params, &params, &batch, &mut rngs).unwrap();
        assert!(grads.iter().all(|g| g.data.iter().all(|&v| v == 0.0)));
    }
}
