//! Wide-and-deep mixture density network over the game-state vector.
//!
//! Layout of the raw output row for `K` mixtures:
//!
//! | columns          | meaning                                   |
//! |------------------|-------------------------------------------|
//! | `0..K`           | mixture logits                            |
//! | `K..4K`          | means, component-major (`k·3 + d`)        |
//! | `4K..7K`         | pre-softplus deviations                   |
//! | `7K..10K`        | Bernoulli logits                          |
//!
//! Continuous dims are meters, final score for, final score against; binary
//! dims are try on this tackle, try in this set, possessing team wins.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EncodedExample, EncodingConfig, TACKLE_SLOTS};
use crate::nn::activations::{log_sum_exp, sigmoid, softmax, softplus};
use crate::nn::{ParamId, ParamStore, ParamTensor, RowMix, Tape, Var};

pub const CONTINUOUS_DIMS: usize = 3;
pub const BINARY_DIMS: usize = 3;
pub const DEFAULT_MIXTURES: usize = 5;
pub const SIGMA_FLOOR: f64 = 1e-3;
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;
/// Keeps Bernoulli parameters strictly inside (0, 1) when logits saturate.
const P_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelArchitecture {
    pub embedding_dim_team: usize,
    pub embedding_dim_tackle: usize,
    pub spatial_hidden: usize,
    pub spatial_layers: usize,
    pub trunk_hidden: usize,
    pub trunk_layers: usize,
    pub mixtures: usize,
    pub sigma_floor: f64,
    /// Continuous means are `shift + scale · raw`, deviations `scale · softplus(raw) + floor`.
    pub output_shift: [f64; CONTINUOUS_DIMS],
    pub output_scale: [f64; CONTINUOUS_DIMS],
}

impl Default for ModelArchitecture {
    fn default() -> Self {
        Self {
            embedding_dim_team: 8,
            embedding_dim_tackle: 4,
            spatial_hidden: 50,
            spatial_layers: 2,
            trunk_hidden: 64,
            trunk_layers: 2,
            mixtures: DEFAULT_MIXTURES,
            sigma_floor: SIGMA_FLOOR,
            output_shift: [5.0, 20.0, 20.0],
            output_scale: [10.0, 10.0, 10.0],
        }
    }
}

impl ModelArchitecture {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("embedding_dim_team", self.embedding_dim_team),
            ("embedding_dim_tackle", self.embedding_dim_tackle),
            ("spatial_hidden", self.spatial_hidden),
            ("spatial_layers", self.spatial_layers),
            ("trunk_hidden", self.trunk_hidden),
            ("mixtures", self.mixtures),
        ] {
            if v == 0 {
                return Err(Error::invalid("architecture", format!("{name} must be at least 1")));
            }
        }
        if self.trunk_layers != 2 {
            return Err(Error::invalid("architecture", "trunk_layers is fixed at 2"));
        }
        if !(self.sigma_floor > 0.0) || self.output_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid(
                "architecture",
                "sigma floor and output scales must be positive",
            ));
        }
        Ok(())
    }

    /// Team and opponent embeddings, tackle embedding, spatial features,
    /// raw position and dense context.
    pub fn trunk_input_width(&self) -> usize {
        2 * self.embedding_dim_team + self.embedding_dim_tackle + self.spatial_hidden + 2 + 2
    }

    pub fn output_width(&self) -> usize {
        self.mixtures * (1 + CONTINUOUS_DIMS + CONTINUOUS_DIMS + BINARY_DIMS)
    }

    /// Expected `(name, shape)` of every parameter tensor, in store order.
    pub fn param_shapes(&self, encoding: &EncodingConfig) -> Vec<(String, Vec<usize>)> {
        let v = encoding.identity_width();
        let mut out = vec![
            ("embed.team".to_string(), vec![v, self.embedding_dim_team]),
            ("embed.opponent".to_string(), vec![v, self.embedding_dim_team]),
            (
                "embed.tackle".to_string(),
                vec![TACKLE_SLOTS, self.embedding_dim_tackle],
            ),
        ];
        let mut fan_in = 2;
        for l in 0..self.spatial_layers {
            out.push((format!("spatial.{l}.weight"), vec![self.spatial_hidden, fan_in]));
            out.push((format!("spatial.{l}.bias"), vec![self.spatial_hidden]));
            fan_in = self.spatial_hidden;
        }
        let mut fan_in = self.trunk_input_width();
        for l in 0..self.trunk_layers {
            out.push((format!("trunk.{l}.weight"), vec![self.trunk_hidden, fan_in]));
            out.push((format!("trunk.{l}.bias"), vec![self.trunk_hidden]));
            fan_in = self.trunk_hidden;
        }
        out.push(("output.weight".to_string(), vec![self.output_width(), fan_in]));
        out.push(("output.bias".to_string(), vec![self.output_width()]));
        out
    }
}

/// Observed outcomes of one tackle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameStateTarget {
    pub meters: f64,
    pub score_for: f64,
    pub score_against: f64,
    pub try_tackle: bool,
    pub try_set: bool,
    pub win: bool,
}

impl GameStateTarget {
    pub fn continuous(&self) -> [f64; CONTINUOUS_DIMS] {
        [self.meters, self.score_for, self.score_against]
    }

    pub fn binary(&self) -> [bool; BINARY_DIMS] {
        [self.try_tackle, self.try_set, self.win]
    }
}

/// Parameters of the predicted joint distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub mu: Vec<[f64; CONTINUOUS_DIMS]>,
    pub sigma: Vec<[f64; CONTINUOUS_DIMS]>,
    pub p: Vec<[f64; BINARY_DIMS]>,
}

impl MixtureParams {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.mu.len() != k || self.sigma.len() != k || self.p.len() != k {
            return Err(Error::shape(
                "MixtureParams",
                format!("{k} weights with mismatched columns"),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("weights", format!("sum to {total}")));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::invalid("weights", "outside (0, 1]"));
        }
        if self.sigma.iter().flatten().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("sigma", "non-positive deviation"));
        }
        if self.p.iter().flatten().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::invalid("p", "outside (0, 1)"));
        }
        if self.mu.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("component mean".into()));
        }
        Ok(())
    }

    /// Log of each component's weighted joint likelihood.
    pub fn component_log_likelihoods(&self, target: &GameStateTarget) -> Vec<f64> {
        let y = target.continuous();
        let b = target.binary();
        (0..self.len())
            .map(|k| {
                let mut lp = self.weights[k].ln();
                for d in 0..CONTINUOUS_DIMS {
                    let z = (y[d] - self.mu[k][d]) / self.sigma[k][d];
                    lp += -0.5 * z * z - self.sigma[k][d].ln() - HALF_LN_TAU;
                }
                for d in 0..BINARY_DIMS {
                    lp += if b[d] {
                        self.p[k][d].ln()
                    } else {
                        (1.0 - self.p[k][d]).ln()
                    };
                }
                lp
            })
            .collect()
    }
}

/// Negative log-likelihood of an observed game state under the mixture.
pub fn joint_nll(mix: &MixtureParams, target: &GameStateTarget) -> Result<f64> {
    mix.validate()?;
    let comps = mix.component_log_likelihoods(target);
    if let Some((k, v)) = comps
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_nan() || **v == f64::INFINITY)
    {
        return Err(Error::NonFinite(format!("component {k} log-likelihood {v}")));
    }
    let loss = -log_sum_exp(&comps);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss {loss}: every component has zero likelihood"
        )));
    }
    Ok(loss)
}

/// Which identities the embedding lookup sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdentityMode {
    #[default]
    Observed,
    /// Team and opponent replaced by the mean team row of the season: the
    /// prediction for a league-average matchup in the same context.
    LeagueAverage,
}

/// Model-ready view of an encoded example: embedding row mixes plus raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub team: RowMix,
    pub opponent: RowMix,
    pub tackle: RowMix,
    pub position: [f64; 2],
    pub dense: [f64; 2],
}

impl ModelInput {
    pub fn new(example: &EncodedExample, encoding: &EncodingConfig, mode: IdentityMode) -> Result<Self> {
        let width = encoding.identity_width();
        if example.team_indicator.len() != width || example.opponent_indicator.len() != width {
            return Err(Error::shape(
                "ModelInput",
                format!(
                    "indicator width {} does not match vocabulary width {width}",
                    example.team_indicator.len()
                ),
            ));
        }
        if example.tackle_indicator.len() != TACKLE_SLOTS {
            return Err(Error::shape("ModelInput", "tackle indicator must have 7 slots"));
        }
        let (team, opponent) = match mode {
            IdentityMode::Observed => (
                EncodedExample::active(&example.team_indicator),
                EncodedExample::active(&example.opponent_indicator),
            ),
            IdentityMode::LeagueAverage => {
                let season = example.team_indicator[..encoding.n_seasons]
                    .iter()
                    .position(|&v| v == 1.0)
                    .ok_or_else(|| Error::invalid("team_indicator", "no season slot set"))?;
                let mix = league_average_mix(season, encoding);
                (mix.clone(), mix)
            }
        };
        Ok(Self {
            team,
            opponent,
            tackle: EncodedExample::active(&example.tackle_indicator),
            position: example.position_raw,
            dense: example.dense_context,
        })
    }
}

/// Season row plus an even share of every team row.
pub fn league_average_mix(season: usize, encoding: &EncodingConfig) -> RowMix {
    let share = 1.0 / encoding.n_teams as f64;
    let mut mix = vec![(season, 1.0)];
    mix.extend((0..encoding.n_teams).map(|t| (encoding.n_seasons + t, share)));
    mix
}

impl ModelInput {
    /// Season index of an observed identity mix (the first row below `n_seasons`).
    pub fn season(&self, encoding: &EncodingConfig) -> Option<usize> {
        self.team.iter().map(|&(r, _)| r).find(|&r| r < encoding.n_seasons)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embed_team: ParamId,
    embed_opponent: ParamId,
    embed_tackle: ParamId,
    spatial: Vec<(ParamId, ParamId)>,
    trunk: Vec<(ParamId, ParamId)>,
    output: (ParamId, ParamId),
}

impl Layout {
    fn resolve(store: &ParamStore, arch: &ModelArchitecture) -> Result<Self> {
        let get = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter section {name}")))
        };
        let pair = |prefix: &str| -> Result<(ParamId, ParamId)> {
            Ok((get(&format!("{prefix}.weight"))?, get(&format!("{prefix}.bias"))?))
        };
        Ok(Self {
            embed_team: get("embed.team")?,
            embed_opponent: get("embed.opponent")?,
            embed_tackle: get("embed.tackle")?,
            spatial: (0..arch.spatial_layers)
                .map(|l| pair(&format!("spatial.{l}")))
                .collect::<Result<_>>()?,
            trunk: (0..arch.trunk_layers)
                .map(|l| pair(&format!("trunk.{l}")))
                .collect::<Result<_>>()?,
            output: pair("output")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdnModel {
    pub arch: ModelArchitecture,
    pub encoding: EncodingConfig,
    pub params: ParamStore,
    layout: Layout,
}

impl MdnModel {
    /// Fan-in-scaled uniform weights and zero biases from a seeded generator.
    pub fn init(arch: ModelArchitecture, encoding: EncodingConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        encoding.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in arch.param_shapes(&encoding) {
            let tensor = if name.ends_with(".bias") {
                ParamTensor::zeros(&shape)
            } else if name.starts_with("embed.") {
                ParamTensor::glorot(&shape, shape[0], shape[1], &mut rng)
            } else {
                ParamTensor::glorot(&shape, shape[1], shape[0], &mut rng)
            };
            params.add(name, tensor);
        }
        let layout = Layout::resolve(&params, &arch)?;
        Ok(Self {
            arch,
            encoding,
            params,
            layout,
        })
    }

    /// Rebuilds a model from stored parameters, checking every shape.
    pub fn from_params(arch: ModelArchitecture, encoding: EncodingConfig, params: ParamStore) -> Result<Self> {
        arch.validate()?;
        encoding.validate()?;
        let expected = arch.param_shapes(&encoding);
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter sections, found {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), (got_name, t)) in expected.iter().zip(params.iter()) {
            if name != got_name || shape != &t.shape || t.values.len() != shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!(
                    "section {got_name} {:?} ({} values) does not match {name} {shape:?}",
                    t.shape,
                    t.values.len()
                )));
            }
        }
        let layout = Layout::resolve(&params, &arch)?;
        Ok(Self {
            arch,
            encoding,
            params,
            layout,
        })
    }

    pub fn input(&self, example: &EncodedExample, mode: IdentityMode) -> Result<ModelInput> {
        ModelInput::new(example, &self.encoding, mode)
    }

    /// Raw `B × output_width` network output on the tape.
    pub fn forward_tape(&self, tape: &mut Tape, inputs: &[ModelInput]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let b = inputs.len();
        let p = &self.params;
        let l = &self.layout;

        let team_table = tape.param(p, l.embed_team);
        let opp_table = tape.param(p, l.embed_opponent);
        let tackle_table = tape.param(p, l.embed_tackle);
        let team = tape.embed(team_table, inputs.iter().map(|i| i.team.clone()).collect())?;
        let opponent = tape.embed(opp_table, inputs.iter().map(|i| i.opponent.clone()).collect())?;
        let tackle = tape.embed(tackle_table, inputs.iter().map(|i| i.tackle.clone()).collect())?;

        let position = tape.constant(b, 2, inputs.iter().flat_map(|i| i.position).collect())?;
        let dense = tape.constant(b, 2, inputs.iter().flat_map(|i| i.dense).collect())?;

        let mut spatial = position;
        for &(w, bias) in &l.spatial {
            let (w, bias) = (tape.param(p, w), tape.param(p, bias));
            let h = tape.dense(spatial, w, bias)?;
            spatial = tape.relu(h);
        }

        let mut h = tape.concat_cols(&[team, opponent, tackle, spatial, position, dense])?;
        for &(w, bias) in &l.trunk {
            let (w, bias) = (tape.param(p, w), tape.param(p, bias));
            let z = tape.dense(h, w, bias)?;
            h = tape.relu(z);
        }
        let (w, bias) = (tape.param(p, l.output.0), tape.param(p, l.output.1));
        tape.dense(h, w, bias)
    }

    /// Mean joint negative log-likelihood of a batch, built on the tape from
    /// the raw outputs so it can be differentiated.
    pub fn loss_tape(&self, tape: &mut Tape, raw: Var, targets: &[GameStateTarget]) -> Result<Var> {
        let k = self.arch.mixtures;
        let (b, width) = tape.dims(raw);
        if width != self.arch.output_width() || b != targets.len() {
            return Err(Error::shape(
                "loss_tape",
                format!("raw {b}x{width} for {} targets", targets.len()),
            ));
        }
        let c = CONTINUOUS_DIMS;
        let scale: Vec<f64> = (0..k).flat_map(|_| self.arch.output_scale).collect();
        let shift: Vec<f64> = (0..k).flat_map(|_| self.arch.output_shift).collect();
        let floor = vec![self.arch.sigma_floor; k * c];

        let mut y = Vec::with_capacity(b * k * c);
        let mut flip = Vec::with_capacity(b * k * BINARY_DIMS);
        for t in targets {
            let yc = t.continuous();
            let yb = t.binary();
            for _ in 0..k {
                y.extend_from_slice(&yc);
                flip.extend(yb.iter().map(|&v| if v { -1.0 } else { 1.0 }));
            }
        }
        let y = tape.constant(b, k * c, y)?;
        let flip = tape.constant(b, k * BINARY_DIMS, flip)?;

        let logits = tape.slice_cols(raw, 0, k)?;
        let log_pi = tape.log_softmax_rows(logits);

        let mu_raw = tape.slice_cols(raw, k, k * c)?;
        let mu = tape.col_affine(mu_raw, &scale, &shift)?;
        let sig_raw = tape.slice_cols(raw, k + k * c, k * c)?;
        let sig_soft = tape.softplus(sig_raw);
        let sigma = tape.col_affine(sig_soft, &scale, &floor)?;

        let diff = tape.sub(y, mu)?;
        let z = tape.div(diff, sigma)?;
        let z2 = tape.square(z);
        let half = tape.affine(z2, -0.5, -HALF_LN_TAU);
        let log_sigma = tape.ln(sigma);
        let log_normal = tape.sub(half, log_sigma)?;
        let gauss = tape.group_sum_cols(log_normal, c)?;

        // log p^y (1-p)^(1-y) = -softplus((1 - 2y) · logit)
        let p_raw = tape.slice_cols(raw, k + 2 * k * c, k * BINARY_DIMS)?;
        let signed = tape.mul(p_raw, flip)?;
        let sp = tape.softplus(signed);
        let log_bern = tape.affine(sp, -1.0, 0.0);
        let bern = tape.group_sum_cols(log_bern, BINARY_DIMS)?;

        let comp = tape.add(log_pi, gauss)?;
        let comp = tape.add(comp, bern)?;
        let lse = tape.log_sum_exp_rows(comp);
        let mean = tape.mean(lse);
        Ok(tape.affine(mean, -1.0, 0.0))
    }

    /// Builds forward and loss for a batch of examples; returns the loss node.
    pub fn batch_loss_tape(&self, tape: &mut Tape, examples: &[EncodedExample]) -> Result<Var> {
        if examples.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let inputs = examples
            .iter()
            .map(|e| self.input(e, IdentityMode::Observed))
            .collect::<Result<Vec<_>>>()?;
        let targets: Vec<GameStateTarget> = examples.iter().map(|e| e.target).collect();
        let raw = self.forward_tape(tape, &inputs)?;
        self.loss_tape(tape, raw, &targets)
    }

    /// Mean joint NLL over `examples`, evaluated in chunks.
    pub fn batch_loss(&self, examples: &[EncodedExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut total = 0.0;
        for chunk in examples.chunks(1024) {
            let mut tape = Tape::new();
            let loss = self.batch_loss_tape(&mut tape, chunk)?;
            total += tape.scalar(loss) * chunk.len() as f64;
        }
        Ok(total / examples.len() as f64)
    }

    pub fn raw_to_mixture(&self, raw: &[f64]) -> MixtureParams {
        let k = self.arch.mixtures;
        let c = CONTINUOUS_DIMS;
        let weights = softmax(&raw[..k]);
        let mut mu = Vec::with_capacity(k);
        let mut sigma = Vec::with_capacity(k);
        let mut p = Vec::with_capacity(k);
        for j in 0..k {
            let mut m = [0.0; CONTINUOUS_DIMS];
            let mut s = [0.0; CONTINUOUS_DIMS];
            let mut q = [0.0; BINARY_DIMS];
            for d in 0..c {
                m[d] = self.arch.output_shift[d] + self.arch.output_scale[d] * raw[k + j * c + d];
                s[d] = self.arch.output_scale[d] * softplus(raw[k + k * c + j * c + d]) + self.arch.sigma_floor;
            }
            for (d, qd) in q.iter_mut().enumerate() {
                *qd = sigmoid(raw[k + 2 * k * c + j * BINARY_DIMS + d]).clamp(P_CLAMP, 1.0 - P_CLAMP);
            }
            mu.push(m);
            sigma.push(s);
            p.push(q);
        }
        MixtureParams { weights, mu, sigma, p }
    }

    pub fn forward_inputs(&self, inputs: &[ModelInput]) -> Result<Vec<MixtureParams>> {
        let width = self.arch.output_width();
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(1024) {
            let mut tape = Tape::new();
            let raw = self.forward_tape(&mut tape, chunk)?;
            out.extend(tape.value(raw).chunks(width).map(|r| self.raw_to_mixture(r)));
        }
        Ok(out)
    }

    pub fn forward(&self, example: &EncodedExample) -> Result<MixtureParams> {
        let input = self.input(example, IdentityMode::Observed)?;
        Ok(self.forward_inputs(std::slice::from_ref(&input))?.remove(0))
    }

    pub fn forward_batch(&self, examples: &[EncodedExample], mode: IdentityMode) -> Result<Vec<MixtureParams>> {
        let inputs = examples
            .iter()
            .map(|e| self.input(e, mode))
            .collect::<Result<Vec<_>>>()?;
        self.forward_inputs(&inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{encode_event, tests::sample_event};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn standard_mix(k: usize) -> MixtureParams {
        MixtureParams {
            weights: vec![1.0 / k as f64; k],
            mu: vec![[0.0; 3]; k],
            sigma: vec![[1.0; 3]; k],
            p: vec![[0.5; 3]; k],
        }
    }

    fn zero_target() -> GameStateTarget {
        GameStateTarget {
            meters: 0.0,
            score_for: 0.0,
            score_against: 0.0,
            try_tackle: false,
            try_set: true,
            win: false,
        }
    }

    #[test]
    fn standard_closed_form() {
        let loss = joint_nll(&standard_mix(1), &zero_target()).unwrap();
        // 3 · ½ln(2π) + 3 · ln 2
        assert_abs_diff_eq!(loss, 4.836257, epsilon = 1e-6);
    }

    #[test]
    fn duplicated_component_is_invariant() {
        let mix = MixtureParams {
            weights: vec![0.3, 0.7],
            mu: vec![[1.0, 20.0, 14.0], [-2.0, 10.0, 22.0]],
            sigma: vec![[2.0, 5.0, 6.0], [3.0, 4.0, 4.0]],
            p: vec![[0.1, 0.3, 0.6], [0.05, 0.2, 0.4]],
        };
        let mut split = mix.clone();
        split.weights = vec![0.15, 0.7, 0.15];
        split.mu.push(mix.mu[0]);
        split.sigma.push(mix.sigma[0]);
        split.p.push(mix.p[0]);
        let t = GameStateTarget {
            meters: 3.0,
            score_for: 18.0,
            score_against: 12.0,
            try_tackle: false,
            try_set: true,
            win: true,
        };
        assert_abs_diff_eq!(
            joint_nll(&mix, &t).unwrap(),
            joint_nll(&split, &t).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn loss_falls_as_realized_probability_rises() {
        let t = zero_target();
        let mut last = f64::INFINITY;
        for q in [0.5, 0.6, 0.7, 0.8, 0.9, 0.99] {
            let mut mix = standard_mix(1);
            mix.p[0][1] = q;
            let l = joint_nll(&mix, &t).unwrap();
            assert!(l < last);
            last = l;
        }
    }

    #[test]
    fn nll_rejects_invalid_mixture() {
        let mut mix = standard_mix(2);
        mix.weights = vec![0.5, 0.6];
        assert!(joint_nll(&mix, &zero_target()).is_err());
    }

    #[test]
    fn default_widths() {
        let arch = ModelArchitecture::default();
        assert_eq!(arch.trunk_input_width(), 74);
        assert_eq!(arch.output_width(), 50);
        let model = MdnModel::init(arch, EncodingConfig::new(4, 16), 1).unwrap();
        let out_w = model.params.get(model.params.id("output.weight").unwrap());
        assert_eq!(out_w.shape, vec![50, 64]);
        let trunk0 = model.params.get(model.params.id("trunk.0.weight").unwrap());
        assert_eq!(trunk0.shape, vec![64, 74]);
        let spatial0 = model.params.get(model.params.id("spatial.0.weight").unwrap());
        assert_eq!(spatial0.shape, vec![50, 2]);
    }

    #[test]
    fn init_is_deterministic() {
        let enc = EncodingConfig::new(2, 4);
        let a = MdnModel::init(ModelArchitecture::default(), enc.clone(), 9).unwrap();
        let b = MdnModel::init(ModelArchitecture::default(), enc.clone(), 9).unwrap();
        let c = MdnModel::init(ModelArchitecture::default(), enc, 10).unwrap();
        assert_eq!(a.params.flat_values(), b.params.flat_values());
        assert_ne!(a.params.flat_values(), c.params.flat_values());
    }

    #[test]
    fn forward_outputs_valid_mixture() {
        let enc = EncodingConfig::new(1, 4);
        let model = MdnModel::init(ModelArchitecture::default(), enc.clone(), 3).unwrap();
        let mix = model.forward(&encode_event(&sample_event(), &enc).unwrap()).unwrap();
        mix.validate().unwrap();
        assert_abs_diff_eq!(mix.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert!(mix.sigma.iter().flatten().all(|&s| s >= SIGMA_FLOOR));
    }

    #[test]
    fn team_identity_changes_output() {
        let enc = EncodingConfig::new(1, 4);
        let model = MdnModel::init(ModelArchitecture::default(), enc.clone(), 3).unwrap();
        let a = sample_event();
        let mut b = sample_event();
        b.team_idx = 2;
        let ma = model.forward(&encode_event(&a, &enc).unwrap()).unwrap();
        let mb = model.forward(&encode_event(&b, &enc).unwrap()).unwrap();
        assert_ne!(ma, mb);
    }

    #[test]
    fn zero_weights_give_uniform_mixture() {
        let enc = EncodingConfig::new(1, 4);
        let mut model = MdnModel::init(ModelArchitecture::default(), enc.clone(), 3).unwrap();
        for t in model.params.tensors_mut() {
            t.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let mix = model.forward(&encode_event(&sample_event(), &enc).unwrap()).unwrap();
        for w in &mix.weights {
            assert_abs_diff_eq!(*w, 0.2, epsilon = 1e-15);
        }
        assert!(mix.p.iter().flatten().all(|&p| p == 0.5));
    }

    #[test]
    fn vocab_mismatch_rejected() {
        let model = MdnModel::init(ModelArchitecture::default(), EncodingConfig::new(1, 4), 3).unwrap();
        let ex = encode_event(&sample_event(), &EncodingConfig::new(1, 5)).unwrap();
        assert!(matches!(model.forward(&ex), Err(Error::Shape { .. })));
    }

    fn random_examples(enc: &EncodingConfig, n: usize, seed: u64) -> Vec<EncodedExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut e = sample_event();
                e.season_idx = rng.random_range(0..enc.n_seasons);
                e.team_idx = rng.random_range(0..enc.n_teams);
                e.opponent_idx = (e.team_idx + rng.random_range(1..enc.n_teams)) % enc.n_teams;
                e.tackle_number = rng.random_range(1..=6);
                e.back_to_back = rng.random_bool(0.1);
                e.pos_x = rng.random_range(0.0..=100.0);
                e.pos_y = rng.random_range(0.0..=70.0);
                e.time_remaining = rng.random_range(0.0..=4800.0);
                e.score_diff = rng.random_range(-40..=40);
                e.meters_gained = rng.random_range(-5.0..25.0);
                e.try_this_set = rng.random_bool(0.2);
                e.try_this_tackle = e.try_this_set && rng.random_bool(0.5);
                e.final_score_for = rng.random_range(0..40);
                e.final_score_against = rng.random_range(0..40);
                e.possessing_team_won = e.final_score_for > e.final_score_against;
                encode_event(&e, enc).unwrap()
            })
            .collect()
    }

    #[test]
    fn tape_loss_matches_plain_nll() {
        let enc = EncodingConfig::new(2, 6);
        let model = MdnModel::init(ModelArchitecture::default(), enc.clone(), 5).unwrap();
        let examples = random_examples(&enc, 7, 11);
        let tape_loss = model.batch_loss(&examples).unwrap();
        let plain: f64 = examples
            .iter()
            .map(|e| joint_nll(&model.forward(e).unwrap(), &e.target).unwrap())
            .sum::<f64>()
            / examples.len() as f64;
        assert_abs_diff_eq!(tape_loss, plain, epsilon = 1e-10);
    }

    #[test]
    fn batch_loss_definitions() {
        let enc = EncodingConfig::new(2, 6);
        let model = MdnModel::init(ModelArchitecture::default(), enc.clone(), 5).unwrap();
        let examples = random_examples(&enc, 9, 12);
        let single = joint_nll(&model.forward(&examples[0]).unwrap(), &examples[0].target).unwrap();
        assert_abs_diff_eq!(model.batch_loss(&examples[..1]).unwrap(), single, epsilon = 1e-12);
        let repeated = vec![examples[0].clone(); 5];
        assert_abs_diff_eq!(model.batch_loss(&repeated).unwrap(), single, epsilon = 1e-12);
        let mut permuted = examples.clone();
        permuted.reverse();
        permuted.swap(0, 4);
        assert_abs_diff_eq!(
            model.batch_loss(&examples).unwrap(),
            model.batch_loss(&permuted).unwrap(),
            epsilon = 1e-12
        );
        assert!(matches!(model.batch_loss(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn league_average_mode_spreads_team_rows() {
        let enc = EncodingConfig::new(2, 4);
        let ex = encode_event(&sample_event(), &enc).unwrap();
        let input = ModelInput::new(&ex, &enc, IdentityMode::LeagueAverage).unwrap();
        assert_eq!(input.team.len(), 5);
        assert_eq!(input.team[0], (0, 1.0));
        let total: f64 = input.team[1..].iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
        assert_eq!(input.team, input.opponent);
    }

    #[test]
    fn forward_never_non_finite() {
        let enc = EncodingConfig::new(4, 16);
        let model = MdnModel::init(ModelArchitecture::default(), enc.clone(), 77).unwrap();
        let examples = random_examples(&enc, 10_000, 99);
        for mix in model.forward_batch(&examples, IdentityMode::Observed).unwrap() {
            mix.validate().unwrap();
            assert!(mix.sigma.iter().flatten().all(|s| s.is_finite()));
        }
    }
}
