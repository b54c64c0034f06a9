//! Match-level splitting, the minibatch training loop and held-out metrics.

use std::collections::{BTreeSet, HashSet};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{encode_all, EncodedExample, EncodingConfig, TackleEvent};
use crate::inference::{bernoulli_mean, marginal_continuous, BinaryDim, ContinuousDim};
use crate::mdn::{league_average_mix, IdentityMode, MdnModel, ModelArchitecture, ModelInput};
use crate::nn::{AdamConfig, AdamState, RowMix, Tape};
use crate::synth::mix_seed;

pub const CALIBRATION_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decoupled L2 shrinkage applied by the optimizer.
    pub weight_decay: f64,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Share of training matches held back for early stopping.
    pub validation_ratio: f64,
    /// Per-side probability of swapping a team's identity for the league
    /// average during training.
    pub identity_dropout: f64,
    pub architecture: ModelArchitecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            learning_rate: 1e-3,
            weight_decay: 0.1,
            seed: 0,
            patience: 10,
            validation_ratio: 0.1,
            identity_dropout: 0.95,
            architecture: ModelArchitecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate", "must be finite and non-negative"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay", "must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.identity_dropout) {
            return Err(Error::invalid("identity_dropout", "must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.validation_ratio) {
            return Err(Error::invalid("validation_ratio", "must be in [0, 1)"));
        }
        self.architecture.validate()
    }
}

/// Splits at match granularity: every tackle of a match lands on one side.
/// Event order within each side is preserved.
pub fn split_dataset(events: &[TackleEvent], ratio: f64, seed: u64) -> Result<(Vec<TackleEvent>, Vec<TackleEvent>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("ratio", format!("{ratio} not in (0, 1)")));
    }
    let ids: BTreeSet<&str> = events.iter().map(|e| e.match_id.as_str()).collect();
    if ids.len() < 2 {
        return Err(Error::invalid(
            "events",
            format!("{} match(es); need at least 2 to split", ids.len()),
        ));
    }
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let train_ids: HashSet<&str> = ids[..n_train].iter().copied().collect();
    let (train, test) = events
        .iter()
        .cloned()
        .partition(|e| train_ids.contains(e.match_id.as_str()));
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: Option<f64>,
    /// Best monitored loss so far (validation if present, otherwise train).
    pub best_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MdnModel,
    /// Row 0 is the untrained model.
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn final_train_nll(&self) -> f64 {
        self.history.last().map(|r| r.train_nll).unwrap_or(f64::NAN)
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_nll,val_nll\n");
        for r in &self.history {
            let val = r.val_nll.map(|v| format!("{v}")).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", r.epoch, r.train_nll, val));
        }
        s
    }
}

/// Trains on `events`, carving a match-level validation slice off for early
/// stopping when there are enough matches. Returns the best checkpoint.
pub fn train(events: &[TackleEvent], encoding: &EncodingConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if events.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let n_matches = events.iter().map(|e| e.match_id.as_str()).collect::<HashSet<_>>().len();
    let (fit, val) = if config.validation_ratio > 0.0 && n_matches >= 2 {
        split_dataset(events, 1.0 - config.validation_ratio, mix_seed(config.seed))?
    } else {
        (events.to_vec(), Vec::new())
    };
    let fit = encode_all(&fit, encoding)?;
    let val = encode_all(&val, encoding)?;
    train_examples(&fit, &val, encoding, config)
}

/// The loop itself, on pre-encoded examples. An empty `val` monitors the
/// training loss instead.
pub fn train_examples(
    fit: &[EncodedExample],
    val: &[EncodedExample],
    encoding: &EncodingConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if fit.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut model = MdnModel::init(config.architecture.clone(), encoding.clone(), config.seed)?;
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            learning_rate: config.learning_rate,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed ^ 0x5eed));

    let measure = |m: &MdnModel| -> Result<(f64, Option<f64>)> {
        let t = m.batch_loss(fit)?;
        let v = if val.is_empty() { None } else { Some(m.batch_loss(val)?) };
        Ok((t, v))
    };
    let (t0, v0) = measure(&model)?;
    if !t0.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            batch: 0,
            detail: format!("initial loss {t0}"),
        });
    }
    let mut best = v0.unwrap_or(t0);
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_nll: t0,
        val_nll: v0,
        best_nll: best,
    }];

    let inputs = fit
        .iter()
        .map(|e| model.input(e, IdentityMode::Observed))
        .collect::<Result<Vec<_>>>()?;
    let averages: Vec<RowMix> = (0..encoding.n_seasons)
        .map(|s| league_average_mix(s, encoding))
        .collect();
    let mut order: Vec<usize> = (0..fit.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let mut batch: Vec<ModelInput> = Vec::with_capacity(idx.len());
            let mut targets = Vec::with_capacity(idx.len());
            for &i in idx {
                let mut input = inputs[i].clone();
                if config.identity_dropout > 0.0 {
                    let season = input.season(encoding).unwrap_or(0);
                    if rng.random::<f64>() < config.identity_dropout {
                        input.team = averages[season].clone();
                    }
                    if rng.random::<f64>() < config.identity_dropout {
                        input.opponent = averages[season].clone();
                    }
                }
                batch.push(input);
                targets.push(fit[i].target);
            }
            let mut tape = Tape::new();
            let raw = model.forward_tape(&mut tape, &batch)?;
            let loss = model.loss_tape(&mut tape, raw, &targets)?;
            let lv = tape.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: format!("batch loss {lv}"),
                });
            }
            tape.backward(loss, &mut model.params)?;
            adam.step(&mut model.params).map_err(|e| Error::Diverged {
                epoch,
                batch: b,
                detail: e.to_string(),
            })?;
        }
        let (t, v) = measure(&model)?;
        if !t.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                detail: format!("epoch loss {t}"),
            });
        }
        let monitored = v.unwrap_or(t);
        if monitored < best {
            best = monitored;
            best_params = model.params.clone();
            best_epoch = epoch;
        }
        debug!("epoch {epoch}: train {t:.5} val {v:?}");
        history.push(EpochRecord {
            epoch,
            train_nll: t,
            val_nll: v,
            best_nll: best,
        });
        if epoch - best_epoch >= config.patience {
            info!("early stop at epoch {epoch}, best epoch {best_epoch}");
            break;
        }
    }
    model.params = best_params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_predicted: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub bins: Vec<CalibrationBin>,
    /// Count-weighted mean of |mean_predicted - empirical| over non-empty bins.
    pub error: f64,
}

/// Ten equal-width bins partitioning [0, 1]; the last bin is closed.
pub fn calibration_table(preds: &[f64], outcomes: &[bool]) -> Result<CalibrationTable> {
    if preds.len() != outcomes.len() {
        return Err(Error::shape(
            "calibration_table",
            format!("{} predictions, {} outcomes", preds.len(), outcomes.len()),
        ));
    }
    if preds.is_empty() {
        return Err(Error::Empty("calibration input"));
    }
    let k = CALIBRATION_BINS;
    let mut sum_p = vec![0.0; k];
    let mut sum_y = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (&p, &y) in preds.iter().zip(outcomes) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("prediction", format!("{p} not a probability")));
        }
        let b = ((p * k as f64) as usize).min(k - 1);
        sum_p[b] += p;
        sum_y[b] += y as u8 as f64;
        count[b] += 1;
    }
    let mut err = 0.0;
    let bins = (0..k)
        .map(|b| {
            let c = count[b];
            let (mp, emp) = if c > 0 {
                (sum_p[b] / c as f64, sum_y[b] / c as f64)
            } else {
                (0.0, 0.0)
            };
            err += c as f64 * (mp - emp).abs();
            CalibrationBin {
                lower: b as f64 / k as f64,
                upper: (b + 1) as f64 / k as f64,
                count: c,
                mean_predicted: mp,
                empirical: emp,
            }
        })
        .collect();
    Ok(CalibrationTable {
        bins,
        error: err / preds.len() as f64,
    })
}

pub fn brier_score(preds: &[f64], outcomes: &[bool]) -> f64 {
    let n = preds.len().max(1) as f64;
    preds
        .iter()
        .zip(outcomes)
        .map(|(&p, &y)| (p - y as u8 as f64).powi(2))
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHeadReport {
    pub head: String,
    pub brier: f64,
    pub calibration: CalibrationTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub nll: f64,
    pub rmse_meters: f64,
    pub rmse_score_for: f64,
    pub rmse_score_against: f64,
    pub binary: Vec<BinaryHeadReport>,
}

/// Held-out metrics. Point predictions are mixture means; binary
/// probabilities are mixture-weighted Bernoulli means.
pub fn evaluate(model: &MdnModel, examples: &[EncodedExample]) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let nll = model.batch_loss(examples)?;
    let mixes = model.forward_batch(examples, IdentityMode::Observed)?;
    let n = examples.len() as f64;
    let mut sq = [0.0; 3];
    let dims = [
        ContinuousDim::Meters,
        ContinuousDim::ScoreFor,
        ContinuousDim::ScoreAgainst,
    ];
    let mut probs = vec![Vec::with_capacity(examples.len()); 3];
    let mut labels = vec![Vec::with_capacity(examples.len()); 3];
    let heads = [BinaryDim::TryTackle, BinaryDim::TrySet, BinaryDim::Win];
    for (mix, ex) in mixes.iter().zip(examples) {
        let truth = ex.target.continuous();
        for (i, d) in dims.iter().enumerate() {
            let m = marginal_continuous(mix, *d)?.mean();
            sq[i] += (m - truth[i]).powi(2);
        }
        let y = ex.target.binary();
        for (i, h) in heads.iter().enumerate() {
            probs[i].push(bernoulli_mean(mix, *h));
            labels[i].push(y[i]);
        }
    }
    let binary = heads
        .iter()
        .enumerate()
        .map(|(i, h)| {
            Ok(BinaryHeadReport {
                head: h.name().to_string(),
                brier: brier_score(&probs[i], &labels[i]),
                calibration: calibration_table(&probs[i], &labels[i])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        examples: examples.len(),
        nll,
        rmse_meters: (sq[0] / n).sqrt(),
        rmse_score_for: (sq[1] / n).sqrt(),
        rmse_score_against: (sq[2] / n).sqrt(),
        binary,
    })
}
