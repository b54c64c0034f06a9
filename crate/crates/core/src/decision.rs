//! Last-tackle play selection: a three-class logistic regression over the
//! flattened encoded context (raw indicators, position and dense features).
//! It is only meaningful on tackle six and is never queried elsewhere.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{encode_event, EncodedExample, EncodingConfig, LastTacklePlay, TackleEvent, TACKLE_SLOTS};
use crate::nn::activations::{log_softmax, softmax};
use crate::training::split_dataset;

pub const CLASSES: usize = 3;
pub const LOGISTIC_VERSION: u32 = 1;

/// Width of the flattened context for a vocabulary.
pub fn feature_width(encoding: &EncodingConfig) -> usize {
    2 * encoding.identity_width() + TACKLE_SLOTS + 4
}

pub fn features(example: &EncodedExample) -> Vec<f64> {
    let mut f = Vec::with_capacity(2 * example.team_indicator.len() + TACKLE_SLOTS + 4);
    f.extend_from_slice(&example.team_indicator);
    f.extend_from_slice(&example.opponent_indicator);
    f.extend_from_slice(&example.tackle_indicator);
    f.extend_from_slice(&example.position_raw);
    f.extend_from_slice(&example.dense_context);
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticWeights {
    pub n_features: usize,
    /// `CLASSES × n_features`, row-major, rows ordered run / offensive kick / defensive kick.
    pub weights: Vec<f64>,
    pub bias: [f64; CLASSES],
}

impl LogisticWeights {
    pub fn zeros(n_features: usize) -> Self {
        LogisticWeights {
            n_features,
            weights: vec![0.0; CLASSES * n_features],
            bias: [0.0; CLASSES],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != CLASSES * self.n_features {
            return Err(Error::shape(
                "LogisticWeights",
                format!("{} weights for {} features", self.weights.len(), self.n_features),
            ));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logistic weight".into()));
        }
        Ok(())
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; CLASSES]> {
        if x.len() != self.n_features {
            return Err(Error::shape(
                "predict_play",
                format!("{} features, weights expect {}", x.len(), self.n_features),
            ));
        }
        let mut s = self.bias;
        for (c, sc) in s.iter_mut().enumerate() {
            let row = &self.weights[c * self.n_features..(c + 1) * self.n_features];
            *sc += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        Ok(s)
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<[f64; CLASSES]> {
        let p = softmax(&self.scores(x)?);
        Ok([p[0], p[1], p[2]])
    }
}

/// Play probabilities ordered run, offensive kick, defensive kick.
pub fn predict_play(example: &EncodedExample, w: &LogisticWeights) -> Result<[f64; CLASSES]> {
    w.predict_features(&features(example))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    /// Share of labeled matches used for fitting; the rest give the held-out loss.
    pub train_ratio: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            epochs: 800,
            learning_rate: 0.05,
            l2: 1e-4,
            seed: 0,
            train_ratio: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub weights: LogisticWeights,
    pub train_loss: f64,
    /// Held-out cross-entropy; absent when there were too few matches to split.
    pub test_loss: Option<f64>,
    pub absent_classes: Vec<LastTacklePlay>,
}

/// Mean cross-entropy plus `l2/2 · |W|²` (biases unpenalised), and its gradient
/// laid out as the weights followed by the biases.
pub fn loss_and_grad(w: &LogisticWeights, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> Result<(f64, Vec<f64>)> {
    if xs.is_empty() {
        return Err(Error::Empty("logistic batch"));
    }
    let f = w.n_features;
    let n = xs.len() as f64;
    let mut grad = vec![0.0; CLASSES * f + CLASSES];
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let lp = log_softmax(&w.scores(x)?);
        loss -= lp[y];
        for c in 0..CLASSES {
            let d = (lp[c].exp() - (c == y) as u8 as f64) / n;
            for (g, v) in grad[c * f..(c + 1) * f].iter_mut().zip(x) {
                *g += d * v;
            }
            grad[CLASSES * f + c] += d;
        }
    }
    loss /= n;
    loss += 0.5 * l2 * w.weights.iter().map(|v| v * v).sum::<f64>();
    for (g, v) in grad.iter_mut().zip(&w.weights) {
        *g += l2 * v;
    }
    Ok((loss, grad))
}

fn mean_cross_entropy(w: &LogisticWeights, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    let mut s = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        s -= log_softmax(&w.scores(x)?)[y];
    }
    Ok(s / xs.len() as f64)
}

fn labeled(events: &[TackleEvent], encoding: &EncodingConfig) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for e in events {
        if let Some(play) = e.last_tackle_play {
            xs.push(features(&encode_event(e, encoding)?));
            ys.push(play.index());
        }
    }
    Ok((xs, ys))
}

/// Full-batch Adam on the penalised cross-entropy. Only events carrying a
/// `last_tackle_play` label are used.
pub fn train_logistic(
    events: &[TackleEvent],
    encoding: &EncodingConfig,
    config: &LogisticConfig,
) -> Result<LogisticFit> {
    if config.epochs < 1 || !(config.learning_rate > 0.0) || !(config.l2 >= 0.0) {
        return Err(Error::invalid(
            "logistic config",
            "epochs >= 1, learning_rate > 0, l2 >= 0",
        ));
    }
    let labeled_events: Vec<TackleEvent> = events
        .iter()
        .filter(|e| e.last_tackle_play.is_some())
        .cloned()
        .collect();
    if labeled_events.is_empty() {
        return Err(Error::Empty("last-tackle events"));
    }
    let (fit_events, test_events) = match split_dataset(&labeled_events, config.train_ratio, config.seed) {
        Ok(split) if config.train_ratio < 1.0 => split,
        _ => (labeled_events, Vec::new()),
    };
    let (xs, ys) = labeled(&fit_events, encoding)?;
    let f = feature_width(encoding);

    let mut counts = [0usize; CLASSES];
    for &y in &ys {
        counts[y] += 1;
    }
    let absent: Vec<LastTacklePlay> = LastTacklePlay::ALL
        .iter()
        .copied()
        .filter(|p| counts[p.index()] == 0)
        .collect();
    for p in &absent {
        warn!(
            "class {} absent from training data; its probability follows the prior only",
            p.name()
        );
    }

    let mut w = LogisticWeights::zeros(f);
    let n_params = CLASSES * f + CLASSES;
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    for step in 1..=config.epochs {
        let (_, mut g) = loss_and_grad(&w, &xs, &ys, config.l2)?;
        for p in &absent {
            let c = p.index();
            g[c * f..(c + 1) * f].iter_mut().for_each(|x| *x = 0.0);
        }
        if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("logistic gradient {bad} at step {step}")));
        }
        let bc1 = 1.0 - b1.powi(step as i32);
        let bc2 = 1.0 - b2.powi(step as i32);
        for i in 0..n_params {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let delta = config.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            if i < CLASSES * f {
                w.weights[i] -= delta;
            } else {
                w.bias[i - CLASSES * f] -= delta;
            }
        }
    }
    let train_loss = mean_cross_entropy(&w, &xs, &ys)?;
    let test_loss = if test_events.is_empty() {
        None
    } else {
        let (tx, ty) = labeled(&test_events, encoding)?;
        Some(mean_cross_entropy(&w, &tx, &ty)?)
    };
    Ok(LogisticFit {
        weights: w,
        train_loss,
        test_loss,
        absent_classes: absent,
    })
}
