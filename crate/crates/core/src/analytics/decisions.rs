//! Last-tackle decisions: how often each option is chosen and what it returns.

use serde::{Deserialize, Serialize};

use crate::decision::{predict_play, LogisticWeights};
use crate::error::{Error, Result};
use crate::features::{encode_all, LastTacklePlay, TackleEvent};
use crate::inference::{bernoulli_mean, BinaryDim};
use crate::mdn::{IdentityMode, MdnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldZone {
    /// `[0, 50)`
    OwnHalf,
    /// `[50, 80)`
    Attacking,
    /// `[80, 100]`
    RedZone,
}

impl FieldZone {
    pub const ALL: [FieldZone; 3] = [FieldZone::OwnHalf, FieldZone::Attacking, FieldZone::RedZone];

    pub fn of(x: f64) -> Self {
        if x < 50.0 {
            FieldZone::OwnHalf
        } else if x < 80.0 {
            FieldZone::Attacking
        } else {
            FieldZone::RedZone
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldZone::OwnHalf => "own_half",
            FieldZone::Attacking => "attacking",
            FieldZone::RedZone => "red_zone",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    /// Try plus conversion; lower it to discount missed conversions.
    pub points_per_try: f64,
    /// Observed plays needed before an empirical mean is trusted.
    pub min_support: usize,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            points_per_try: 6.0,
            min_support: 30,
        }
    }
}

/// Points scored on the tackle a decision was taken, by zone and decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSupport {
    pub points: [[f64; 3]; 3],
    pub plays: [[usize; 3]; 3],
}

pub fn immediate_points(event: &TackleEvent, config: &DecisionConfig) -> f64 {
    if event.try_this_tackle {
        config.points_per_try
    } else {
        0.0
    }
}

impl DecisionSupport {
    pub fn from_events(events: &[TackleEvent], config: &DecisionConfig) -> Self {
        let mut points = [[0.0; 3]; 3];
        let mut plays = [[0usize; 3]; 3];
        for e in events {
            if let Some(play) = e.last_tackle_play {
                let z = FieldZone::of(e.pos_x).index();
                points[z][play.index()] += immediate_points(e, config);
                plays[z][play.index()] += 1;
            }
        }
        Self { points, plays }
    }

    /// Empirical mean, or `ex_try_tackle · points_per_try` when support is thin.
    fn value(
        &self,
        zone: FieldZone,
        play: LastTacklePlay,
        ex_try_tackle: f64,
        config: &DecisionConfig,
    ) -> (f64, usize, bool) {
        let (z, p) = (zone.index(), play.index());
        let n = self.plays[z][p];
        if n >= config.min_support && n > 0 {
            (self.points[z][p] / n as f64, n, false)
        } else {
            (ex_try_tackle * config.points_per_try, n, true)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOption {
    pub play: LastTacklePlay,
    pub frequency: f64,
    pub expected_points: f64,
    pub support: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionValuation {
    pub context_id: String,
    pub zone: FieldZone,
    pub options: Vec<DecisionOption>,
}

fn context_id(e: &TackleEvent) -> String {
    format!("{}:{}:{}", e.match_id, e.team_idx, e.time_remaining)
}

fn require_last_tackle(e: &TackleEvent) -> Result<()> {
    if e.tackle_number != 6 {
        return Err(Error::invalid(
            "context",
            format!("tackle {} is not a last-tackle state", e.tackle_number),
        ));
    }
    Ok(())
}

fn valuation(
    e: &TackleEvent,
    freq: [f64; 3],
    ex_try_tackle: f64,
    support: &DecisionSupport,
    config: &DecisionConfig,
) -> DecisionValuation {
    let zone = FieldZone::of(e.pos_x);
    let options = LastTacklePlay::ALL
        .iter()
        .map(|&play| {
            let (expected_points, n, fallback) = support.value(zone, play, ex_try_tackle, config);
            DecisionOption {
                play,
                frequency: freq[play.index()],
                expected_points,
                support: n,
                fallback,
            }
        })
        .collect();
    DecisionValuation {
        context_id: context_id(e),
        zone,
        options,
    }
}

pub fn decision_value(
    context: &TackleEvent,
    model: &MdnModel,
    policy: &LogisticWeights,
    support: &DecisionSupport,
    config: &DecisionConfig,
) -> Result<DecisionValuation> {
    require_last_tackle(context)?;
    let ex = encode_all(std::slice::from_ref(context), &model.encoding)?;
    let freq = predict_play(&ex[0], policy)?;
    let mix = model.forward(&ex[0])?;
    Ok(valuation(
        context,
        freq,
        bernoulli_mean(&mix, BinaryDim::TryTackle),
        support,
        config,
    ))
}

fn valuations(
    events: &[TackleEvent],
    model: &MdnModel,
    policy: &LogisticWeights,
    support: &DecisionSupport,
    config: &DecisionConfig,
) -> Result<Vec<DecisionValuation>> {
    if events.is_empty() {
        return Ok(Vec::new());
    }
    let examples = encode_all(events, &model.encoding)?;
    let mixes = model.forward_batch(&examples, IdentityMode::Observed)?;
    events
        .iter()
        .zip(&examples)
        .zip(&mixes)
        .map(|((e, x), m)| {
            Ok(valuation(
                e,
                predict_play(x, policy)?,
                bernoulli_mean(m, BinaryDim::TryTackle),
                support,
                config,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamDecisionRow {
    pub team_idx: usize,
    pub plays: usize,
    pub run_pct: f64,
    /// Per last-tackle play, for the decision actually taken.
    pub expected_points: f64,
    pub actual_points: f64,
    pub over_expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    /// Ranked by points over expectation, best first.
    pub rows: Vec<TeamDecisionRow>,
}

pub fn decision_table(
    events: &[TackleEvent],
    model: &MdnModel,
    policy: &LogisticWeights,
    config: &DecisionConfig,
) -> Result<DecisionTable> {
    let labeled: Vec<TackleEvent> = events
        .iter()
        .filter(|e| e.last_tackle_play.is_some())
        .cloned()
        .collect();
    if labeled.is_empty() {
        return Err(Error::Empty("last-tackle events"));
    }
    let support = DecisionSupport::from_events(&labeled, config);
    let vals = valuations(&labeled, model, policy, &support, config)?;
    let mut acc: std::collections::BTreeMap<usize, (usize, usize, f64, f64)> = Default::default();
    for (e, v) in labeled.iter().zip(&vals) {
        let play = e.last_tackle_play.expect("filtered");
        let a = acc.entry(e.team_idx).or_default();
        a.0 += 1;
        a.1 += (play == LastTacklePlay::Run) as usize;
        a.2 += v.options[play.index()].expected_points;
        a.3 += immediate_points(e, config);
    }
    let mut rows: Vec<TeamDecisionRow> = acc
        .into_iter()
        .map(|(team_idx, (n, runs, exp, act))| {
            let n_f = n as f64;
            TeamDecisionRow {
                team_idx,
                plays: n,
                run_pct: runs as f64 / n_f,
                expected_points: exp / n_f,
                actual_points: act / n_f,
                over_expected: (act - exp) / n_f,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.over_expected
            .total_cmp(&a.over_expected)
            .then(a.team_idx.cmp(&b.team_idx))
    });
    Ok(DecisionTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSummary {
    pub zone: FieldZone,
    pub plays: usize,
    /// Frequencies are the mean predicted probabilities over the zone's plays.
    pub options: Vec<DecisionOption>,
}

/// League-wide run/kick frequencies and expected points per field zone.
pub fn zone_summary(
    events: &[TackleEvent],
    model: &MdnModel,
    policy: &LogisticWeights,
    config: &DecisionConfig,
) -> Result<Vec<ZoneSummary>> {
    let labeled: Vec<TackleEvent> = events
        .iter()
        .filter(|e| e.last_tackle_play.is_some())
        .cloned()
        .collect();
    if labeled.is_empty() {
        return Err(Error::Empty("last-tackle events"));
    }
    let support = DecisionSupport::from_events(&labeled, config);
    let vals = valuations(&labeled, model, policy, &support, config)?;
    let mut out = Vec::new();
    for zone in FieldZone::ALL {
        let in_zone: Vec<&DecisionValuation> = vals.iter().filter(|v| v.zone == zone).collect();
        if in_zone.is_empty() {
            continue;
        }
        let n = in_zone.len() as f64;
        let options = (0..3)
            .map(|c| DecisionOption {
                play: LastTacklePlay::ALL[c],
                frequency: in_zone.iter().map(|v| v.options[c].frequency).sum::<f64>() / n,
                expected_points: in_zone.iter().map(|v| v.options[c].expected_points).sum::<f64>() / n,
                support: in_zone[0].options[c].support,
                fallback: in_zone.iter().any(|v| v.options[c].fallback),
            })
            .collect();
        out.push(ZoneSummary {
            zone,
            plays: in_zone.len(),
            options,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::testutil::{constant_model, event};
    use crate::decision::feature_width;
    use crate::features::EncodingConfig;
    use crate::nn::activations::sigmoid;

    fn enc() -> EncodingConfig {
        EncodingConfig::new(1, 4)
    }

    fn last(team: usize, x: f64, play: LastTacklePlay, try_scored: bool) -> TackleEvent {
        let mut e = event("m", team, (team + 1) % 4, 6, x);
        e.last_tackle_play = Some(play);
        e.try_this_tackle = try_scored;
        e.try_this_set = try_scored;
        e
    }

    #[test]
    fn zones() {
        assert_eq!(FieldZone::of(0.0), FieldZone::OwnHalf);
        assert_eq!(FieldZone::of(49.99), FieldZone::OwnHalf);
        assert_eq!(FieldZone::of(50.0), FieldZone::Attacking);
        assert_eq!(FieldZone::of(80.0), FieldZone::RedZone);
        assert_eq!(FieldZone::of(100.0), FieldZone::RedZone);
    }

    #[test]
    fn empirical_and_fallback_paths() {
        let cfg = DecisionConfig::default();
        let mut events: Vec<TackleEvent> = (0..40)
            .map(|i| last(0, 90.0, LastTacklePlay::Run, i % 4 == 0))
            .collect();
        events.extend((0..5).map(|_| last(1, 90.0, LastTacklePlay::OffensiveKick, false)));
        let support = DecisionSupport::from_events(&events, &cfg);
        let m = constant_model(enc(), |i| if i >= 35 && (i - 35) % 3 == 0 { -2.0 } else { 0.0 });
        let w = LogisticWeights::zeros(feature_width(&enc()));
        let v = decision_value(&events[0], &m, &w, &support, &cfg).unwrap();
        assert_eq!(v.zone, FieldZone::RedZone);
        assert!((v.options.iter().map(|o| o.frequency).sum::<f64>() - 1.0).abs() < 1e-9);
        let run = &v.options[0];
        assert!(!run.fallback && run.support == 40);
        assert!((run.expected_points - 1.5).abs() < 1e-12);
        let kick = &v.options[1];
        assert!(kick.fallback && kick.support == 5);
        assert!((kick.expected_points - 6.0 * sigmoid(-2.0)).abs() < 1e-12);
        assert!(v.options[2].fallback && v.options[2].support == 0);

        let mut not_last = events[0].clone();
        not_last.tackle_number = 5;
        assert!(decision_value(&not_last, &m, &w, &support, &cfg).is_err());
    }

    #[test]
    fn points_per_try_configurable() {
        let cfg = DecisionConfig {
            points_per_try: 4.0 + 2.0 * 0.75,
            ..Default::default()
        };
        assert_eq!(immediate_points(&last(0, 90.0, LastTacklePlay::Run, true), &cfg), 5.5);
    }

    #[test]
    fn team_table_ranked() {
        let cfg = DecisionConfig {
            min_support: 1,
            ..Default::default()
        };
        let mut events = Vec::new();
        // team 0 scores on 2 of 4 runs, team 1 on none; league run mean is 1.5 points
        for i in 0..4 {
            events.push(last(0, 85.0, LastTacklePlay::Run, i < 2));
            events.push(last(1, 85.0, LastTacklePlay::Run, false));
        }
        events.push(last(1, 85.0, LastTacklePlay::DefensiveKick, false));
        let m = constant_model(enc(), |_| 0.0);
        let w = LogisticWeights::zeros(feature_width(&enc()));
        let t = decision_table(&events, &m, &w, &cfg).unwrap();
        assert_eq!(t.rows[0].team_idx, 0);
        let r0 = &t.rows[0];
        assert!((r0.expected_points - 1.5).abs() < 1e-12);
        assert!((r0.actual_points - 3.0).abs() < 1e-12);
        assert!((r0.over_expected - 1.5).abs() < 1e-12);
        assert_eq!(r0.run_pct, 1.0);
        assert!((t.rows[1].run_pct - 0.8).abs() < 1e-12);

        let zs = zone_summary(&events, &m, &w, &cfg).unwrap();
        assert_eq!(zs.len(), 1);
        assert_eq!(zs[0].zone, FieldZone::RedZone);
        assert_eq!(zs[0].plays, 9);
        assert!((zs[0].options.iter().map(|o| o.frequency).sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
