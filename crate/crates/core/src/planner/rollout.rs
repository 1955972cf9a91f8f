//! Route construction with the attention model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinematics::TrajectorySet;
use crate::planner::instance::Instance;
use crate::planner::model::{decoder_logits, encode, BnMode, ModelParams};
use crate::planner::state::{feasibility_mask, DecoderState};
use crate::planner::tensor::{masked_softmax, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Sample,
    Greedy,
}

/// One constructed sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub sequence: Vec<usize>,
    pub plan: TrajectorySet,
    /// Total route length (partial routes on a dead end).
    pub length: f64,
    /// Set when the mask ran out of options.
    pub dead_end: Option<usize>,
    pub log_prob: f64,
}

impl Rollout {
    /// Training cost: the length, plus twice the instance's length bound on
    /// a dead end.
    pub fn cost(&self, instance: &Instance) -> f64 {
        match self.dead_end {
            Some(_) => self.length + 2.0 * instance.length_bound(),
            None => self.length,
        }
    }
}

/// Output of [`rollout_batch`].
pub struct BatchRollout {
    pub rollouts: Vec<Rollout>,
    /// `B x 1` summed log-probabilities on the tape.
    pub log_prob: Var,
    pub batch_stats: Vec<crate::planner::tensor::BatchStats>,
}

/// Decodes every instance of a same-size batch. `rngs` supplies one
/// generator per instance (only used when sampling).
pub fn rollout_batch(
    tape: &mut Tape,
    params: &ModelParams,
    instances: &[&Instance],
    mode: DecodeMode,
    bn: BnMode,
    rngs: &mut [ChaCha8Rng],
) -> Result<BatchRollout> {
    run_batch(tape, params, instances, mode, bn, rngs, None)
}

/// Log-probability of fixed token sequences (teacher forcing).
pub fn sequence_log_prob(tape: &mut Tape, params: &ModelParams, instances: &[&Instance], sequences: &[Vec<usize>], bn: BnMode) -> Result<BatchRollout> {
    let mut rngs: Vec<ChaCha8Rng> = (0..instances.len()).map(|i| ChaCha8Rng::seed_from_u64(i as u64)).collect();
    run_batch(tape, params, instances, DecodeMode::Greedy, bn, &mut rngs, Some(sequences))
}

fn run_batch(
    tape: &mut Tape,
    params: &ModelParams,
    instances: &[&Instance],
    mode: DecodeMode,
    bn: BnMode,
    rngs: &mut [ChaCha8Rng],
    forced: Option<&[Vec<usize>]>,
) -> Result<BatchRollout> {
    let enc = encode(tape, params, instances, bn)?;
    let mut states: Vec<DecoderState> = instances.iter().map(|i| DecoderState::new(i)).collect();
    let mut dead: Vec<Option<usize>> = vec![None; states.len()];
    let mut log_prob: Option<Var> = None;
    loop {
        let active: Vec<bool> = states.iter().zip(&dead).map(|(s, d)| !s.is_done() && d.is_none()).collect();
        if !active.iter().any(|&a| a) {
            break;
        }
        let masks: Vec<Vec<bool>> = states
            .par_iter()
            .zip(&active)
            .map(|(s, &a)| if a { feasibility_mask(s) } else { vec![false; s.instance.num_tokens()] })
            .collect();
        for (i, m) in masks.iter().enumerate() {
            if active[i] && !m.iter().any(|&x| x) {
                dead[i] = Some(states[i].step());
            }
        }
        let logits = decoder_logits(tape, params, &enc, &states);
        let probs = masked_softmax(tape.value(logits), &masks);
        let picks: Vec<Option<usize>> = (0..states.len())
            .map(|i| {
                if !active[i] || dead[i].is_some() {
                    return None;
                }
                if let Some(seqs) = forced {
                    let tok = seqs[i][states[i].step()];
                    assert!(masks[i][tok], "forced token {tok} is masked");
                    return Some(tok);
                }
                let row = probs.row(i);
                Some(match mode {
                    DecodeMode::Greedy => argmax(row),
                    DecodeMode::Sample => sample(row, &mut rngs[i]),
                })
            })
            .collect();
        if picks.iter().all(Option::is_none) {
            continue;
        }
        let lp = tape.log_softmax_pick(logits, &masks, picks.clone());
        log_prob = Some(match log_prob {
            Some(acc) => tape.add(acc, lp),
            None => lp,
        });
        for (s, pick) in states.iter_mut().zip(&picks) {
            if let Some(tok) = pick {
                s.apply(*tok);
            }
        }
    }
    let log_prob = match log_prob {
        Some(v) => v,
        None => tape.constant(crate::planner::tensor::Mat::zeros(states.len(), 1)),
    };
    let values = tape.value(log_prob).data.clone();
    let rollouts = states
        .iter()
        .zip(&dead)
        .zip(values)
        .map(|((s, d), lp)| Rollout {
            sequence: s.sequence.clone(),
            plan: s.instance.routes_from_sequence(&s.sequence),
            length: s.plan.length(),
            dead_end: *d,
            log_prob: lp,
        })
        .collect();
    Ok(BatchRollout { rollouts, log_prob, batch_stats: enc.batch_stats })
}

/// Lowest index among the maxima.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}

fn sample(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Decodes one instance with running batch-norm statistics.
pub fn decode_rollout(instance: &Instance, params: &ModelParams, mode: DecodeMode, seed: u64) -> Result<Rollout> {
    let mut tape = Tape::new();
    let mut rngs = vec![ChaCha8Rng::seed_from_u64(seed)];
    let out = rollout_batch(&mut tape, params, &[instance], mode, BnMode::Eval, &mut rngs)?;
    let r = out.rollouts.into_iter().next().unwrap();
    if let Some(step) = r.dead_end {
        return Err(Error::DeadEnd {
            step,
            remaining: instance.num_waypoints() - r.sequence.iter().filter(|&&t| !instance.is_start_token(t)).count(),
            partial: r.plan.routes,
        });
    }
    Ok(r)
}

/// Greedy costs of `instances` in eval mode, in chunks of `chunk`.
pub fn greedy_costs(params: &ModelParams, instances: &[Instance], chunk: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(instances.len());
    for group in instances.chunks(chunk.max(1)) {
        let refs: Vec<&Instance> = group.iter().collect();
        let mut tape = Tape::new();
        let mut rngs: Vec<ChaCha8Rng> = (0..refs.len()).map(|i| ChaCha8Rng::seed_from_u64(i as u64)).collect();
        let r = rollout_batch(&mut tape, params, &refs, DecodeMode::Greedy, BnMode::Eval, &mut rngs)?;
        out.extend(r.rollouts.iter().zip(group).map(|(r, i)| r.cost(i)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::planner::instance::{random_instance, InstanceConfig};
    use crate::planner::model::ModelConfig;

    fn small() -> ModelParams {
        ModelParams::init(&ModelConfig { dim: 8, heads: 2, layers: 1, ff_hidden: 16, clip: 10.0, bn_momentum: 0.1 }, 11).unwrap()
    }

    #[test]
    fn single_waypoint_forced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut inst = random_instance(&InstanceConfig::single_uav(1), &mut rng);
        inst.scenario.waypoints[0] = Point3::new(300.0, 400.0, 100.0);
        let r = decode_rollout(&inst, &small(), DecodeMode::Sample, 3).unwrap();
        assert_eq!(r.sequence, vec![0, 1]);
        assert!((r.length - 500.0).abs() < 1e-9);
        assert_eq!(r.log_prob, 0.0);
    }

    #[test]
    fn greedy_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instance(&InstanceConfig::pair(6), &mut rng);
        let p = small();
        let a = decode_rollout(&inst, &p, DecodeMode::Greedy, 1);
        let b = decode_rollout(&inst, &p, DecodeMode::Greedy, 99);
        assert_eq!(a.map(|r| r.sequence).ok(), b.map(|r| r.sequence).ok());
    }

    #[test]
    fn sampled_frequencies_match_softmax() {
        // 1 UAV, 2 waypoints: the first step picks between two tokens.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&InstanceConfig::single_uav(2), &mut rng);
        let p = small();
        let mut tape = Tape::new();
        let enc = encode(&mut tape, &p, &[&inst], BnMode::Eval).unwrap();
        let st = DecoderState::new(&inst);
        let logits = decoder_logits(&mut tape, &p, &enc, std::slice::from_ref(&st));
        let probs = masked_softmax(tape.value(logits), &[feasibility_mask(&st)]);
        let p1 = probs.get(0, 1);
        let draws = 10_000;
        let mut hits = 0;
        for s in 0..draws {
            let r = decode_rollout(&inst, &p, DecodeMode::Sample, s).unwrap();
            if r.sequence[1] == 1 {
                hits += 1;
            }
        }
        let sigma = (draws as f64 * p1 * (1.0 - p1)).sqrt();
        assert!((hits as f64 - draws as f64 * p1).abs() <= 3.0 * sigma.max(1.0), "{hits} vs {}", draws as f64 * p1);
    }
}
