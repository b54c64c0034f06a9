//! Set momentum against a contextual baseline, and big-play flags.

use serde::{Deserialize, Serialize};

use super::ex_try_set_all;
use crate::error::{Error, Result};
use crate::features::{encode_all, TackleEvent, FIELD_LENGTH};
use crate::inference::{bernoulli_mean, marginal_continuous, BinaryDim, ContinuousDim};
use crate::mdn::{IdentityMode, MdnModel};

pub const BIG_PLAY_PERCENTILE: f64 = 0.95;
pub const X_ZONES: usize = 10;
pub const BASELINE_TACKLES: usize = 6;
const ZONE_WIDTH: f64 = FIELD_LENGTH / X_ZONES as f64;

/// Mean model exTrySet per (tackle number, 10 m zone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTable {
    pub values: [[f64; X_ZONES]; BASELINE_TACKLES],
    /// Plays behind each cell; zero marks a cell filled from a neighbour.
    pub counts: [[usize; X_ZONES]; BASELINE_TACKLES],
}

pub fn x_zone(x: f64) -> usize {
    ((x / ZONE_WIDTH).floor().max(0.0) as usize).min(X_ZONES - 1)
}

impl BaselineTable {
    pub fn lookup(&self, tackle_number: u8, x: f64) -> Result<f64> {
        if !(1..=6).contains(&tackle_number) {
            return Err(Error::invalid("tackle_number", format!("{tackle_number} not in 1..=6")));
        }
        Ok(self.values[tackle_number as usize - 1][x_zone(x)])
    }

    /// Builds the table from per-play predictions. Empty cells take the
    /// nearest filled zone in the same tackle row (the nearer-to-own-line one
    /// on ties); a fully empty row takes the overall mean.
    pub fn from_predictions(events: &[TackleEvent], preds: &[f64]) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Empty("baseline events"));
        }
        if events.len() != preds.len() {
            return Err(Error::shape(
                "baseline",
                format!("{} events, {} predictions", events.len(), preds.len()),
            ));
        }
        let mut sums = [[0.0; X_ZONES]; BASELINE_TACKLES];
        let mut counts = [[0usize; X_ZONES]; BASELINE_TACKLES];
        for (e, &p) in events.iter().zip(preds) {
            let t = e.tackle_number as usize;
            if !(1..=6).contains(&t) {
                return Err(Error::invalid("tackle_number", format!("{t} not in 1..=6")));
            }
            sums[t - 1][x_zone(e.pos_x)] += p;
            counts[t - 1][x_zone(e.pos_x)] += 1;
        }
        let overall = preds.iter().sum::<f64>() / preds.len() as f64;
        let mut values = [[overall; X_ZONES]; BASELINE_TACKLES];
        for t in 0..BASELINE_TACKLES {
            let filled: Vec<usize> = (0..X_ZONES).filter(|&z| counts[t][z] > 0).collect();
            if filled.is_empty() {
                continue;
            }
            for z in 0..X_ZONES {
                let src = *filled.iter().min_by_key(|&&f| (f.abs_diff(z), f)).unwrap();
                values[t][z] = sums[t][src] / counts[t][src] as f64;
            }
        }
        Ok(Self { values, counts })
    }
}

pub fn baseline_table(events: &[TackleEvent], model: &MdnModel) -> Result<BaselineTable> {
    if events.is_empty() {
        return Err(Error::Empty("baseline events"));
    }
    BaselineTable::from_predictions(events, &ex_try_set_all(model, events, IdentityMode::Observed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetTraceRow {
    pub tackle_number: u8,
    pub pos_x: f64,
    pub ex_try_set: f64,
    pub baseline: f64,
    pub momentum: f64,
    pub meters_percentile: f64,
    pub big_play: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetTrace {
    pub match_id: String,
    pub team_idx: usize,
    pub rows: Vec<SetTraceRow>,
}

/// Percentile of observed meters under the predicted meters marginal, and
/// whether it reaches the big-play threshold.
pub fn big_play(percentile: f64) -> bool {
    percentile >= BIG_PLAY_PERCENTILE
}

pub fn set_trace(set: &[TackleEvent], model: &MdnModel, baseline: &BaselineTable) -> Result<SetTrace> {
    let first = set.first().ok_or(Error::Empty("set"))?;
    if set.len() > 6 {
        return Err(Error::invalid("set", format!("{} tackles", set.len())));
    }
    for w in set.windows(2) {
        if w[1].match_id != w[0].match_id || w[1].team_idx != w[0].team_idx || w[1].tackle_number <= w[0].tackle_number
        {
            return Err(Error::invalid("set", "events do not form one ordered set"));
        }
    }
    let mixes = model.forward_batch(&encode_all(set, &model.encoding)?, IdentityMode::Observed)?;
    let mut rows = Vec::with_capacity(set.len());
    for (e, m) in set.iter().zip(&mixes) {
        let ex = bernoulli_mean(m, BinaryDim::TrySet);
        let base = baseline.lookup(e.tackle_number, e.pos_x)?;
        let pct = marginal_continuous(m, ContinuousDim::Meters)?.percentile_of(e.meters_gained);
        rows.push(SetTraceRow {
            tackle_number: e.tackle_number,
            pos_x: e.pos_x,
            ex_try_set: ex,
            baseline: base,
            momentum: ex - base,
            meters_percentile: pct,
            big_play: big_play(pct),
        });
    }
    Ok(SetTrace {
        match_id: first.match_id.clone(),
        team_idx: first.team_idx,
        rows,
    })
}

/// Cuts an event stream into sets: a new set starts whenever the match or the
/// team in possession changes or the tackle count does not advance.
pub fn split_sets(events: &[TackleEvent]) -> Vec<&[TackleEvent]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=events.len() {
        let boundary = i == events.len() || {
            let (a, b) = (&events[i - 1], &events[i]);
            a.match_id != b.match_id || a.team_idx != b.team_idx || b.tackle_number <= a.tackle_number
        };
        if boundary && i > start {
            out.push(&events[start..i]);
            start = i;
        }
    }
    out
}
