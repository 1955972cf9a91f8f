//! Attention encoder and single-head pointer decoder.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::instance::Instance;
use crate::planner::state::DecoderState;
use crate::planner::tensor::{BatchStats, Mat, Tape, Var};

/// Scalar context features: remaining time fraction, minimum degree fraction.
pub const CONTEXT_SCALARS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width `D_H`.
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
    /// Logit clipping constant `C`.
    pub clip: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { dim: 128, heads: 8, layers: 3, ff_hidden: 512, clip: 10.0, bn_momentum: 0.1 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.layers == 0 || self.ff_hidden == 0 {
            return Err(Error::ShapeMismatch("model sizes must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::ShapeMismatch(format!("dim {} is not a multiple of heads {}", self.dim, self.heads)));
        }
        Ok(())
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        let (d, f) = (self.dim, self.ff_hidden);
        let mut out = vec![
            ("init_s_w".to_string(), (3, d)),
            ("init_s_b".to_string(), (1, d)),
            ("init_w_w".to_string(), (3, d)),
            ("init_w_b".to_string(), (1, d)),
        ];
        for l in 0..self.layers {
            for (name, shape) in [
                ("wq", (d, d)),
                ("wk", (d, d)),
                ("wv", (d, d)),
                ("wo", (d, d)),
                ("bn1_g", (1, d)),
                ("bn1_b", (1, d)),
                ("ff_w1", (d, f)),
                ("ff_b1", (1, f)),
                ("ff_w2", (f, d)),
                ("ff_b2", (1, d)),
                ("bn2_g", (1, d)),
                ("bn2_b", (1, d)),
            ] {
                out.push((format!("l{l}.{name}"), shape));
            }
        }
        out.extend([
            ("dec_wg".to_string(), (d, d)),
            ("dec_wc".to_string(), (3 * d + CONTEXT_SCALARS, d)),
            ("dec_bc".to_string(), (1, d)),
            ("dec_wq".to_string(), (d, d)),
            ("dec_wk".to_string(), (d, d)),
        ]);
        out
    }
}

/// Trainable tensors plus batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub tensors: Vec<Mat>,
    /// Two per layer: after attention, after feed-forward.
    pub running: Vec<BatchStats>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    /// Uniform `+-1/sqrt(fan_in)` weights, unit batch-norm scales.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = config.layout();
        let tensors = layout
            .iter()
            .map(|(name, (r, c))| {
                if name.ends_with("_g") {
                    Mat::from_vec(*r, *c, vec![1.0; r * c])
                } else if name.ends_with("bn1_b") || name.ends_with("bn2_b") {
                    Mat::zeros(*r, *c)
                } else {
                    // biases use the fan-in of their weight
                    let fan_in = if *r == 1 { fan_in_of(name, config) } else { *r };
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    Mat::from_vec(*r, *c, (0..r * c).map(|_| rng.random_range(-bound..bound)).collect())
                }
            })
            .collect();
        Self::from_parts(config.clone(), tensors, None)
    }

    pub fn from_parts(config: ModelConfig, tensors: Vec<Mat>, running: Option<Vec<BatchStats>>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != tensors.len() {
            return Err(Error::ShapeMismatch(format!("expected {} tensors, got {}", layout.len(), tensors.len())));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != *shape {
                return Err(Error::ShapeMismatch(format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(Error::ShapeMismatch(format!("{name}: non-finite entries")));
            }
        }
        let running = running.unwrap_or_else(|| {
            (0..2 * config.layers).map(|_| BatchStats { mean: vec![0.0; config.dim], var: vec![1.0; config.dim] }).collect()
        });
        if running.len() != 2 * config.layers || running.iter().any(|s| s.mean.len() != config.dim || s.var.len() != config.dim) {
            return Err(Error::ShapeMismatch("batch-norm running statistics".into()));
        }
        let names: Vec<String> = layout.into_iter().map(|(n, _)| n).collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self { config, names, tensors, running, index })
    }

    pub fn idx(&self, name: &str) -> usize {
        self.index[name]
    }

    pub fn get(&self, name: &str) -> &Mat {
        &self.tensors[self.idx(name)]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Mat {
        let i = self.idx(name);
        &mut self.tensors[i]
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(Mat::shape).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Folds training-mode batch statistics into the running statistics.
    pub fn update_running(&mut self, batch: &[BatchStats]) {
        let m = self.config.bn_momentum;
        for (run, b) in self.running.iter_mut().zip(batch) {
            for i in 0..run.mean.len() {
                run.mean[i] = (1.0 - m) * run.mean[i] + m * b.mean[i];
                run.var[i] = (1.0 - m) * run.var[i] + m * b.var[i];
            }
        }
    }
}

fn fan_in_of(bias: &str, config: &ModelConfig) -> usize {
    if bias.starts_with("init_") {
        3
    } else if bias.ends_with("ff_b2") {
        config.ff_hidden
    } else if bias == "dec_bc" {
        3 * config.dim + CONTEXT_SCALARS
    } else {
        config.dim
    }
}

/// Batch-norm statistics source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics; returned for the running averages.
    Train,
    /// Running statistics; instances are processed independently.
    Eval,
}

/// Encoder output for a batch of same-size instances.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// `B n x D` node embeddings, instance-major.
    pub nodes: Var,
    /// `B x D` graph embeddings (node means).
    pub graph: Var,
    /// `B n x D` decoder keys.
    pub keys: Var,
    /// `B x D` graph part of the context.
    pub graph_ctx: Var,
    pub tokens: usize,
    pub batch_stats: Vec<BatchStats>,
    params: Vec<Var>,
}

impl Encoded {
    fn p(&self, params: &ModelParams, name: &str) -> Var {
        self.params[params.idx(name)]
    }
}

/// Runs the encoder over `instances` (all with the same token count).
pub fn encode(tape: &mut Tape, params: &ModelParams, instances: &[&Instance], mode: BnMode) -> Result<Encoded> {
    let cfg = &params.config;
    let n = instances.first().map(|i| i.num_tokens()).ok_or_else(|| Error::ShapeMismatch("empty batch".into()))?;
    if instances.iter().any(|i| i.num_tokens() != n) {
        return Err(Error::ShapeMismatch("instances in a batch must have the same number of tokens".into()));
    }
    let vars: Vec<Var> = params.tensors.iter().enumerate().map(|(i, t)| tape.param(i, t.clone())).collect();
    let p = |name: &str| vars[params.idx(name)];
    let b = instances.len();

    // Initial projections, start tokens and waypoints separately.
    let mut xs = Vec::new();
    let mut xw = Vec::new();
    let mut s_terms = Vec::new();
    let mut w_terms = Vec::new();
    for (bi, inst) in instances.iter().enumerate() {
        for (tok, c) in inst.normalized_coordinates().into_iter().enumerate() {
            let row = bi * n + tok;
            if inst.is_start_token(tok) {
                s_terms.push((row, xs.len(), 1.0));
                xs.push(c.to_vec());
            } else {
                w_terms.push((row, xw.len(), 1.0));
                xw.push(c.to_vec());
            }
        }
    }
    let xs = tape.constant(Mat::from_rows(&xs));
    let hs = tape.linear(xs, p("init_s_w"), p("init_s_b"));
    let mut h = tape.combine(hs, b * n, s_terms);
    if !xw.is_empty() {
        let xw = tape.constant(Mat::from_rows(&xw));
        let hw = tape.linear(xw, p("init_w_w"), p("init_w_b"));
        let hw = tape.combine(hw, b * n, w_terms);
        h = tape.add(h, hw);
    }

    let mut batch_stats = Vec::new();
    for l in 0..cfg.layers {
        let name = |s: &str| format!("l{l}.{s}");
        let q = tape.matmul(h, p(&name("wq")));
        let k = tape.matmul(h, p(&name("wk")));
        let v = tape.matmul(h, p(&name("wv")));
        let att = tape.attention(q, k, v, n, cfg.heads);
        let mha = tape.matmul(att, p(&name("wo")));
        let res = tape.add(h, mha);
        let (hh, s1) = batch_norm(tape, res, p(&name("bn1_g")), p(&name("bn1_b")), mode, &params.running[2 * l]);
        let ff = tape.linear(hh, p(&name("ff_w1")), p(&name("ff_b1")));
        let ff = tape.relu(ff);
        let ff = tape.linear(ff, p(&name("ff_w2")), p(&name("ff_b2")));
        let res = tape.add(hh, ff);
        let (out, s2) = batch_norm(tape, res, p(&name("bn2_g")), p(&name("bn2_b")), mode, &params.running[2 * l + 1]);
        batch_stats.extend([s1, s2]);
        h = out;
    }

    let mean_terms = (0..b).flat_map(|bi| (0..n).map(move |i| (bi, bi * n + i, 1.0 / n as f64))).collect();
    let graph = tape.combine(h, b, mean_terms);
    let keys = tape.matmul(h, p("dec_wk"));
    let graph_ctx = tape.matmul(graph, p("dec_wg"));
    Ok(Encoded { nodes: h, graph, keys, graph_ctx, tokens: n, batch_stats, params: vars })
}

fn batch_norm(tape: &mut Tape, x: Var, g: Var, b: Var, mode: BnMode, running: &BatchStats) -> (Var, BatchStats) {
    match mode {
        BnMode::Train => tape.batch_norm(x, g, b, None),
        BnMode::Eval => tape.batch_norm(x, g, b, Some(running)),
    }
}

/// Clipped decoder logits `C tanh(q . k / sqrt(D))` for every instance in
/// the batch, given each instance's decoding state. Finished states get an
/// arbitrary row.
pub fn decoder_logits(tape: &mut Tape, params: &ModelParams, enc: &Encoded, states: &[DecoderState]) -> Var {
    let cfg = &params.config;
    let n = enc.tokens;
    let d = cfg.dim;
    let b = states.len();
    let mut last = Vec::with_capacity(b);
    let mut start = Vec::with_capacity(b);
    let mut pool = Vec::new();
    let mut scalars = Vec::with_capacity(b * CONTEXT_SCALARS);
    for (bi, st) in states.iter().enumerate() {
        last.push((bi, bi * n + st.last_token(), 1.0));
        start.push((bi, bi * n + st.current, 1.0));
        let open: Vec<usize> = (st.instance.num_uavs()..n).filter(|&t| !st.allocated[t]).collect();
        for &t in &open {
            pool.push((bi, bi * n + t, 1.0 / open.len() as f64));
        }
        scalars.extend([st.remaining_time_fraction(), st.min_degree_fraction()]);
    }
    let h_last = tape.combine(enc.nodes, b, last);
    let h_start = tape.combine(enc.nodes, b, start);
    let h_pool = tape.combine(enc.nodes, b, pool);
    let sc = tape.constant(Mat::from_vec(b, CONTEXT_SCALARS, scalars));
    let ctx_in = tape.concat_cols(&[h_last, h_start, h_pool, sc]);
    let ctx = tape.linear(ctx_in, enc.p(params, "dec_wc"), enc.p(params, "dec_bc"));
    let ctx = tape.add(ctx, enc.graph_ctx);
    let q = tape.matmul(ctx, enc.p(params, "dec_wq"));
    let u = tape.group_dot(q, enc.keys, n);
    let u = tape.scale(u, 1.0 / (d as f64).sqrt());
    let u = tape.tanh(u);
    tape.scale(u, cfg.clip)
}
