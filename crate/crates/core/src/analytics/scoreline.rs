//! Predicted final margin through a match, and the point it was decided.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{encode_all, TackleEvent};
use crate::inference::{marginal_score_diff, IntervalSummary};
use crate::mdn::{IdentityMode, MdnModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorelinePoint {
    pub time_remaining: f64,
    /// Live margin for the reference team.
    pub actual_diff: f64,
    pub mean: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorelineTrace {
    pub match_id: String,
    pub reference_team: usize,
    pub points: Vec<ScorelinePoint>,
}

/// Final-margin distribution for `reference_team` at every tackle. The live
/// score reaches the model through its context; nothing is shifted after.
pub fn scoreline_trace(events: &[TackleEvent], model: &MdnModel, reference_team: usize) -> Result<ScorelineTrace> {
    let first = events.first().ok_or(Error::Empty("match events"))?;
    for e in events {
        if e.match_id != first.match_id {
            return Err(Error::invalid(
                "match events",
                format!("{} and {} mixed", first.match_id, e.match_id),
            ));
        }
        if e.team_idx != reference_team && e.opponent_idx != reference_team {
            return Err(Error::invalid(
                "reference_team",
                format!("team {reference_team} not in match {}", e.match_id),
            ));
        }
    }
    if events.windows(2).any(|w| w[1].time_remaining > w[0].time_remaining) {
        return Err(Error::invalid("match events", "not ordered by clock"));
    }
    let mixes = model.forward_batch(&encode_all(events, &model.encoding)?, IdentityMode::Observed)?;
    let mut points = Vec::with_capacity(events.len());
    for (e, m) in events.iter().zip(&mixes) {
        let mut diff = marginal_score_diff(m)?;
        let mut actual = e.score_diff as f64;
        if e.team_idx != reference_team {
            diff = diff.negated();
            actual = -actual;
        }
        let s = IntervalSummary::of(&diff)?;
        points.push(ScorelinePoint {
            time_remaining: e.time_remaining,
            actual_diff: actual,
            mean: s.mean,
            q10: s.q10,
            q50: s.q50,
            q90: s.q90,
        });
    }
    Ok(ScorelineTrace {
        match_id: first.match_id.clone(),
        reference_team,
        points,
    })
}

fn decided(p: &ScorelinePoint) -> f64 {
    let (a, b) = (p.q10.signum(), p.q90.signum());
    if p.q10 != 0.0 && p.q90 != 0.0 && a == b {
        a
    } else {
        0.0
    }
}

/// Earliest clock reading from which the 10-90 band stays on one side of zero
/// until the final tackle.
pub fn game_over_point(trace: &ScorelineTrace) -> Option<f64> {
    let side = decided(trace.points.last()?);
    if side == 0.0 {
        return None;
    }
    let mut earliest = trace.points.len() - 1;
    while earliest > 0 && decided(&trace.points[earliest - 1]) == side {
        earliest -= 1;
    }
    Some(trace.points[earliest].time_remaining)
}
