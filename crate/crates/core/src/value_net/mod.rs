//! Attention-pooled value network over robot-human pairs (SARL), optionally
//! with per-human local maps (LM-SARL).
//!
//! Per human `i`: `e_i = φ_e(s, w_i, M_i)`, `h_i = ψ_h(e_i)`,
//! `α_i = ψ_α(e_i, mean_j e_j)`. The crowd is `c = Σ softmax(α)_i h_i` and
//! the value is `f_v(s, c)`. An empty crowd uses `c = 0`.

mod checkpoint;

pub use checkpoint::{
    Checkpoint, CheckpointHeader, ParamBlock, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use std::path::Path;

use glam::DVec2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Activation, Matrix, Mlp, MlpCache, ParamSet};
use crate::sim::{CrowdEnv, Event};
use crate::state_repr::{
    build_local_maps, to_robot_centric, LocalMapConfig, LocalMapTensor, RobotCentricState,
    HUMAN_FEATURES, ROBOT_FEATURES,
};

/// Hidden widths of the four sub-networks. The last `embedding` width is the
/// embedding size; `feature`'s last width is the crowd feature size.
/// `attention` and `value` get a scalar output layer on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SarlConfig {
    pub use_local_map: bool,
    pub local_map: LocalMapConfig,
    pub embedding: Vec<usize>,
    pub feature: Vec<usize>,
    pub attention: Vec<usize>,
    pub value: Vec<usize>,
}

impl Default for SarlConfig {
    fn default() -> Self {
        SarlConfig {
            use_local_map: false,
            local_map: LocalMapConfig::default(),
            embedding: vec![150, 100],
            feature: vec![100, 50],
            attention: vec![100, 100],
            value: vec![150, 100, 100],
        }
    }
}

impl SarlConfig {
    pub fn sarl() -> Self {
        Self::default()
    }

    pub fn lm_sarl() -> Self {
        SarlConfig {
            use_local_map: true,
            ..Self::default()
        }
    }

    /// Width of one `(s, w_i, M_i)` row.
    pub fn pair_dim(&self) -> usize {
        let map = if self.use_local_map {
            self.local_map.flat_len()
        } else {
            0
        };
        ROBOT_FEATURES + HUMAN_FEATURES + map
    }

    pub fn embedding_dim(&self) -> usize {
        *self.embedding.last().unwrap_or(&0)
    }

    pub fn feature_dim(&self) -> usize {
        *self.feature.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, sizes) in [
            ("embedding", &self.embedding),
            ("feature", &self.feature),
            ("value", &self.value),
        ] {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(Error::Config(format!(
                    "{name} layer widths must be non-empty and positive, got {sizes:?}"
                )));
            }
        }
        if self.attention.contains(&0) {
            return Err(Error::Config("attention widths must be positive".into()));
        }
        if self.use_local_map && (self.local_map.size == 0 || self.local_map.cell_side <= 0.0) {
            return Err(Error::Config(format!(
                "local map needs a positive size and cell side, got {:?}",
                self.local_map
            )));
        }
        Ok(())
    }
}

/// Network input for one joint state.
#[derive(Clone, Debug, PartialEq)]
pub struct SarlInput {
    pub robot: [f64; ROBOT_FEATURES],
    /// `n_humans × pair_dim`, row-major.
    pub pairs: Vec<f64>,
    pub n_humans: usize,
}

/// Several inputs stacked for one batched pass. Rows of `pairs` for sample
/// `b` are `offsets[b]..offsets[b + 1]`.
#[derive(Clone, Debug)]
pub struct SarlBatch {
    robot: Matrix,
    pairs: Matrix,
    offsets: Vec<usize>,
}

impl SarlBatch {
    pub fn new<'a>(inputs: impl IntoIterator<Item = &'a SarlInput>, pair_dim: usize) -> Result<Self> {
        let mut robot = Vec::new();
        let mut pairs = Vec::new();
        let mut offsets = vec![0];
        for input in inputs {
            if input.pairs.len() != input.n_humans * pair_dim {
                return Err(Error::Dimension {
                    context: "SarlBatch pair rows",
                    expected: input.n_humans * pair_dim,
                    actual: input.pairs.len(),
                });
            }
            robot.extend_from_slice(&input.robot);
            pairs.extend_from_slice(&input.pairs);
            offsets.push(offsets.last().unwrap() + input.n_humans);
        }
        let b = offsets.len() - 1;
        let n = *offsets.last().unwrap();
        Ok(SarlBatch {
            robot: Matrix::from_vec(b, ROBOT_FEATURES, robot)?,
            pairs: Matrix::from_vec(n, pair_dim, pairs)?,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// Result of a batched forward pass, with what the backward pass needs.
#[derive(Clone, Debug)]
pub struct BatchForward {
    pub values: Vec<f64>,
    /// Softmax weight of every pair row, aligned with the batch offsets.
    pub attention: Vec<f64>,
    offsets: Vec<usize>,
    embed: Option<MlpCache>,
    features: Matrix,
    feature: Option<MlpCache>,
    score: Option<MlpCache>,
    value: MlpCache,
}

impl BatchForward {
    pub fn attention_of(&self, sample: usize) -> &[f64] {
        &self.attention[self.offsets[sample]..self.offsets[sample + 1]]
    }
}

/// Value and attention for a single state.
#[derive(Clone, Debug)]
pub struct ValueOutput {
    pub value: f64,
    pub attention: Vec<f64>,
    pass: BatchForward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarlParams {
    config: SarlConfig,
    /// φ_e
    pub embed: Mlp,
    /// ψ_h
    pub feature: Mlp,
    /// ψ_α
    pub score: Mlp,
    /// f_v
    pub value: Mlp,
}

impl SarlParams {
    pub fn new<R: Rng + ?Sized>(config: SarlConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let e = config.embedding_dim();
        let embed = Mlp::new(config.pair_dim(), &config.embedding, Activation::Relu, rng);
        let feature = Mlp::new(e, &config.feature, Activation::Identity, rng);
        let score = Mlp::new(2 * e, &with_scalar(&config.attention), Activation::Identity, rng);
        let value = Mlp::new(
            ROBOT_FEATURES + config.feature_dim(),
            &with_scalar(&config.value),
            Activation::Identity,
            rng,
        );
        Ok(SarlParams {
            config,
            embed,
            feature,
            score,
            value,
        })
    }

    /// Assembles a network from existing sub-networks, checking that their
    /// shapes match `config`.
    pub fn from_parts(config: SarlConfig, embed: Mlp, feature: Mlp, score: Mlp, value: Mlp) -> Result<Self> {
        config.validate()?;
        let e = config.embedding_dim();
        let checks = [
            ("embedding", &embed, config.pair_dim(), config.embedding.clone()),
            ("feature", &feature, e, config.feature.clone()),
            ("attention", &score, 2 * e, with_scalar(&config.attention)),
            ("value", &value, ROBOT_FEATURES + config.feature_dim(), with_scalar(&config.value)),
        ];
        for (name, mlp, input, sizes) in checks {
            let actual: Vec<usize> = mlp.layers().iter().map(|l| l.weight.rows()).collect();
            if mlp.input_dim() != input || actual != sizes {
                return Err(Error::Config(format!(
                    "{name} network is {}→{actual:?}, architecture needs {input}→{sizes:?}",
                    mlp.input_dim()
                )));
            }
        }
        Ok(SarlParams {
            config,
            embed,
            feature,
            score,
            value,
        })
    }

    pub fn config(&self) -> &SarlConfig {
        &self.config
    }

    /// Same architecture, all parameters zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        SarlParams {
            config: self.config.clone(),
            embed: self.embed.zeros_like(),
            feature: self.feature.zeros_like(),
            score: self.score.zeros_like(),
            value: self.value.zeros_like(),
        }
    }

    /// Network input for a robot-centric state; local maps are built here
    /// when the architecture uses them.
    pub fn encode(&self, state: &RobotCentricState) -> SarlInput {
        let maps = self
            .config
            .use_local_map
            .then(|| build_local_maps(state, self.config.local_map));
        self.encode_with_maps(state, maps.as_deref())
            .expect("maps built for this architecture")
    }

    /// Like [`encode`](Self::encode) with caller-supplied maps. Maps must be
    /// given exactly when the architecture uses them, one per human.
    pub fn encode_with_maps(
        &self,
        state: &RobotCentricState,
        maps: Option<&[LocalMapTensor]>,
    ) -> Result<SarlInput> {
        let n = state.humans.len();
        match (self.config.use_local_map, maps) {
            (true, Some(maps)) if maps.len() != n => {
                return Err(Error::Usage(format!("{} local maps for {n} humans", maps.len())))
            }
            (true, Some(maps)) => {
                if let Some(m) = maps.iter().find(|m| m.config != self.config.local_map) {
                    return Err(Error::Usage(format!(
                        "local map {:?} does not match the network's {:?}",
                        m.config, self.config.local_map
                    )));
                }
            }
            (true, None) => return Err(Error::Usage("LM-SARL needs local maps".into())),
            (false, Some(_)) => {
                return Err(Error::Usage("SARL does not take local maps".into()))
            }
            (false, None) => {}
        }
        let mut pairs = Vec::with_capacity(n * self.config.pair_dim());
        for (i, w) in state.humans.iter().enumerate() {
            pairs.extend_from_slice(&state.robot);
            pairs.extend_from_slice(w);
            if let Some(maps) = maps {
                pairs.extend_from_slice(&maps[i].data);
            }
        }
        Ok(SarlInput {
            robot: state.robot,
            pairs,
            n_humans: n,
        })
    }

    pub fn batch<'a>(&self, inputs: impl IntoIterator<Item = &'a SarlInput>) -> Result<SarlBatch> {
        SarlBatch::new(inputs, self.config.pair_dim())
    }

    pub fn forward(&self, input: &SarlInput) -> Result<ValueOutput> {
        let pass = self.forward_batch(&self.batch([input])?)?;
        Ok(ValueOutput {
            value: pass.values[0],
            attention: pass.attention.clone(),
            pass,
        })
    }

    /// Value of a robot-centric state.
    pub fn value_of(&self, state: &RobotCentricState) -> Result<f64> {
        Ok(self.predict(&self.batch([&self.encode(state)])?)?[0])
    }

    pub fn forward_batch(&self, batch: &SarlBatch) -> Result<BatchForward> {
        self.check_batch(batch)?;
        let b = batch.len();
        let n_rows = batch.pairs.rows();
        let f = self.config.feature_dim();
        let (crowd, attention, embed, features, feature, score) = if n_rows == 0 {
            (Matrix::zeros(b, f), Vec::new(), None, Matrix::zeros(0, f), None, None)
        } else {
            let (e, embed_cache) = self.embed.forward_batch(&batch.pairs)?;
            let (h, feature_cache) = self.feature.forward_batch(&e)?;
            let m = segment_mean(&e, &batch.offsets);
            let (scores, score_cache) = self.score.forward_batch(&Matrix::hcat(&[&e, &m])?)?;
            let weights = segment_softmax(scores.as_slice(), &batch.offsets)?;
            let crowd = weighted_sum(&h, &weights, &batch.offsets);
            (crowd, weights, Some(embed_cache), h, Some(feature_cache), Some(score_cache))
        };
        let (v, value_cache) = self.value.forward_batch(&Matrix::hcat(&[&batch.robot, &crowd])?)?;
        let values = v.into_vec();
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Training(format!("network produced non-finite value {bad}")));
        }
        Ok(BatchForward {
            values,
            attention,
            offsets: batch.offsets.clone(),
            embed,
            features,
            feature,
            score,
            value: value_cache,
        })
    }

    /// Values only, without keeping intermediates.
    pub fn predict(&self, batch: &SarlBatch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let b = batch.len();
        let crowd = if batch.pairs.rows() == 0 {
            Matrix::zeros(b, self.config.feature_dim())
        } else {
            let e = self.embed.predict_batch(&batch.pairs)?;
            let h = self.feature.predict_batch(&e)?;
            let m = segment_mean(&e, &batch.offsets);
            let scores = self.score.predict_batch(&Matrix::hcat(&[&e, &m])?)?;
            let weights = segment_softmax(scores.as_slice(), &batch.offsets)?;
            weighted_sum(&h, &weights, &batch.offsets)
        };
        let v = self.value.predict_batch(&Matrix::hcat(&[&batch.robot, &crowd])?)?;
        Ok(v.into_vec())
    }

    pub fn backward(&self, output: &ValueOutput, grad_value: f64) -> Result<SarlParams> {
        let mut grads = self.zeros_like();
        self.backward_batch(&output.pass, &[grad_value], &mut grads)?;
        Ok(grads)
    }

    /// Accumulates the parameter gradient of `Σ_b grad_values[b] · v_b` into
    /// `grads` and returns the gradient with respect to the pair rows.
    pub fn backward_batch(
        &self,
        pass: &BatchForward,
        grad_values: &[f64],
        grads: &mut SarlParams,
    ) -> Result<Matrix> {
        let b = pass.offsets.len() - 1;
        if grad_values.len() != b {
            return Err(Error::Dimension {
                context: "SarlParams::backward_batch grad_values",
                expected: b,
                actual: grad_values.len(),
            });
        }
        let e_dim = self.config.embedding_dim();
        let f_dim = self.config.feature_dim();
        let d_value_in = self.value.backward_batch(
            &pass.value,
            &Matrix::from_vec(b, 1, grad_values.to_vec())?,
            &mut grads.value,
        )?;
        let (Some(embed), Some(feature), Some(score)) = (&pass.embed, &pass.feature, &pass.score)
        else {
            return Ok(Matrix::zeros(0, self.config.pair_dim()));
        };
        let d_crowd = d_value_in.columns(ROBOT_FEATURES, f_dim);
        let n_rows = pass.attention.len();

        // Through the weighted sum and the softmax.
        let mut d_h = Matrix::zeros(n_rows, f_dim);
        let mut d_scores = vec![0.0; n_rows];
        for s in 0..b {
            let (lo, hi) = (pass.offsets[s], pass.offsets[s + 1]);
            let dc = d_crowd.row(s);
            let mut d_weights = Vec::with_capacity(hi - lo);
            for r in lo..hi {
                let w = pass.attention[r];
                for (d, g) in d_h.row_mut(r).iter_mut().zip(dc) {
                    *d = w * g;
                }
                d_weights.push(dot(pass.features.row(r), dc));
            }
            let mean_dw: f64 = (lo..hi).map(|r| pass.attention[r] * d_weights[r - lo]).sum();
            for r in lo..hi {
                d_scores[r] = pass.attention[r] * (d_weights[r - lo] - mean_dw);
            }
        }

        let d_score_in = self.score.backward_batch(
            score,
            &Matrix::from_vec(n_rows, 1, d_scores)?,
            &mut grads.score,
        )?;
        let mut d_e = d_score_in.columns(0, e_dim);
        // The mean embedding feeds every row of its sample.
        for s in 0..b {
            let (lo, hi) = (pass.offsets[s], pass.offsets[s + 1]);
            let mut acc = vec![0.0; e_dim];
            for r in lo..hi {
                for (a, g) in acc.iter_mut().zip(&d_score_in.row(r)[e_dim..]) {
                    *a += g;
                }
            }
            let inv = 1.0 / (hi - lo) as f64;
            for r in lo..hi {
                for (d, a) in d_e.row_mut(r).iter_mut().zip(&acc) {
                    *d += a * inv;
                }
            }
        }
        let d_e_from_h = self.feature.backward_batch(feature, &d_h, &mut grads.feature)?;
        for (d, g) in d_e.as_mut_slice().iter_mut().zip(d_e_from_h.as_slice()) {
            *d += g;
        }
        self.embed.backward_batch(embed, &d_e, &mut grads.embed)
    }

    /// `R(s, a) + γ^{dt·v_pref} V(s')` for every candidate action, with the
    /// bootstrap term dropped when `s'` ends the episode by collision or
    /// arrival.
    pub fn action_values(&self, env: &CrowdEnv, actions: &[DVec2], gamma: f64) -> Result<Vec<f64>> {
        let outcomes = env.lookahead_many(actions)?;
        let robot = &env.state().robot;
        let discount = discount_factor(gamma, env.config().dt, robot.v_pref);
        let mut values: Vec<f64> = outcomes.iter().map(|o| o.reward).collect();
        let open: Vec<usize> = (0..outcomes.len())
            .filter(|&k| !matches!(outcomes[k].event, Event::Collision | Event::ReachedGoal))
            .collect();
        if !open.is_empty() {
            let inputs: Vec<SarlInput> = open
                .iter()
                .map(|&k| self.encode(&to_robot_centric(&outcomes[k].next)))
                .collect();
            let next_values = self.predict(&self.batch(&inputs)?)?;
            for (&k, v) in open.iter().zip(next_values) {
                values[k] += discount * v;
            }
        }
        Ok(values)
    }

    pub fn value_of_action(&self, env: &CrowdEnv, action: DVec2, gamma: f64) -> Result<f64> {
        Ok(self.action_values(env, &[action], gamma)?[0])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::from_params(self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::load(path)?.params(path)
    }

    fn check_batch(&self, batch: &SarlBatch) -> Result<()> {
        if batch.pairs.cols() != self.config.pair_dim() {
            return Err(Error::Dimension {
                context: "SARL pair width",
                expected: self.config.pair_dim(),
                actual: batch.pairs.cols(),
            });
        }
        Ok(())
    }
}

impl ParamSet for SarlParams {
    fn tensors(&self) -> Vec<&[f64]> {
        [&self.embed, &self.feature, &self.score, &self.value]
            .into_iter()
            .flat_map(|m| m.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.embed.tensors_mut();
        out.extend(self.feature.tensors_mut());
        out.extend(self.score.tensors_mut());
        out.extend(self.value.tensors_mut());
        out
    }
}

/// Per-step discount `γ^{dt·v_pref}`.
pub fn discount_factor(gamma: f64, dt: f64, v_pref: f64) -> f64 {
    gamma.powf(dt * v_pref)
}

fn with_scalar(hidden: &[usize]) -> Vec<usize> {
    let mut sizes = hidden.to_vec();
    sizes.push(1);
    sizes
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Every row replaced by the mean of its sample's rows.
fn segment_mean(rows: &Matrix, offsets: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.rows(), rows.cols());
    for seg in offsets.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        if lo == hi {
            continue;
        }
        let mut mean = vec![0.0; rows.cols()];
        for r in lo..hi {
            for (m, v) in mean.iter_mut().zip(rows.row(r)) {
                *m += v;
            }
        }
        let inv = 1.0 / (hi - lo) as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        for r in lo..hi {
            out.row_mut(r).copy_from_slice(&mean);
        }
    }
    out
}

fn segment_softmax(scores: &[f64], offsets: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(scores.len());
    for seg in offsets.windows(2) {
        if seg[0] < seg[1] {
            out.extend(crate::numeric::softmax(&scores[seg[0]..seg[1]])?);
        }
    }
    Ok(out)
}

fn weighted_sum(rows: &Matrix, weights: &[f64], offsets: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(offsets.len() - 1, rows.cols());
    for (s, seg) in offsets.windows(2).enumerate() {
        let acc = out.row_mut(s);
        for r in seg[0]..seg[1] {
            for (a, v) in acc.iter_mut().zip(rows.row(r)) {
                *a += weights[r] * v;
            }
        }
    }
    out
}
