//! Tackle events and their wide-and-deep encoding.
//!
//! Season and team identity are encoded as one indicator vector: a one-hot
//! season block followed by a one-hot team block, so a single embedding row
//! pair is shared by a team across seasons. Tackle number and the
//! back-to-back flag get the same treatment. Field position is kept raw (for
//! the dense path) and fed separately to the spatial stack by the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::GameStateTarget;

pub const FIELD_LENGTH: f64 = 100.0;
pub const FIELD_WIDTH: f64 = 70.0;
pub const GAME_SECONDS: f64 = 4800.0;
pub const SCORE_SCALE: f64 = 50.0;
pub const TACKLE_SLOTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LastTacklePlay {
    Run,
    OffensiveKick,
    DefensiveKick,
}

impl LastTacklePlay {
    pub const ALL: [LastTacklePlay; 3] = [
        LastTacklePlay::Run,
        LastTacklePlay::OffensiveKick,
        LastTacklePlay::DefensiveKick,
    ];

    pub fn index(self) -> usize {
        match self {
            LastTacklePlay::Run => 0,
            LastTacklePlay::OffensiveKick => 1,
            LastTacklePlay::DefensiveKick => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LastTacklePlay::Run => "run",
            LastTacklePlay::OffensiveKick => "offensive_kick",
            LastTacklePlay::DefensiveKick => "defensive_kick",
        }
    }
}

/// One play-by-play record, seen from the team in possession. `pos_x` is
/// measured toward the opponent's tryline at 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TackleEvent {
    pub match_id: String,
    pub season_idx: usize,
    pub round: u32,
    pub team_idx: usize,
    pub opponent_idx: usize,
    pub tackle_number: u8,
    pub back_to_back: bool,
    pub pos_x: f64,
    pub pos_y: f64,
    pub time_remaining: f64,
    pub score_diff: i32,
    pub meters_gained: f64,
    pub try_this_tackle: bool,
    pub try_this_set: bool,
    pub possessing_team_won: bool,
    pub final_score_for: u32,
    pub final_score_against: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_tackle_play: Option<LastTacklePlay>,
}

impl TackleEvent {
    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.tackle_number) {
            return Err(Error::invalid(
                "tackle_number",
                format!("{} not in 1..=6", self.tackle_number),
            ));
        }
        if self.round < 1 {
            return Err(Error::invalid("round", "must be at least 1"));
        }
        check_range("pos_x", self.pos_x, 0.0, FIELD_LENGTH)?;
        check_range("pos_y", self.pos_y, 0.0, FIELD_WIDTH)?;
        check_range("time_remaining", self.time_remaining, 0.0, GAME_SECONDS)?;
        if !self.meters_gained.is_finite() {
            return Err(Error::invalid("meters_gained", "not finite"));
        }
        if self.team_idx == self.opponent_idx {
            return Err(Error::invalid("opponent_idx", "equals team_idx"));
        }
        if self.try_this_tackle && !self.try_this_set {
            return Err(Error::invalid("try_this_set", "false while try_this_tackle is true"));
        }
        if self.possessing_team_won != (self.final_score_for > self.final_score_against) {
            return Err(Error::invalid(
                "possessing_team_won",
                format!(
                    "{} inconsistent with final score {}-{}",
                    self.possessing_team_won, self.final_score_for, self.final_score_against
                ),
            ));
        }
        Ok(())
    }

    pub fn target(&self) -> GameStateTarget {
        GameStateTarget {
            meters: self.meters_gained,
            score_for: self.final_score_for as f64,
            score_against: self.final_score_against as f64,
            try_tackle: self.try_this_tackle,
            try_set: self.try_this_set,
            win: self.possessing_team_won,
        }
    }
}

fn check_range(field: &'static str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if !v.is_finite() || v < lo || v > hi {
        return Err(Error::invalid(field, format!("{v} not in [{lo}, {hi}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub n_seasons: usize,
    pub n_teams: usize,
    pub field_length: f64,
    pub field_width: f64,
    pub game_seconds: f64,
    pub score_scale: f64,
}

impl EncodingConfig {
    pub fn new(n_seasons: usize, n_teams: usize) -> Self {
        Self {
            n_seasons,
            n_teams,
            field_length: FIELD_LENGTH,
            field_width: FIELD_WIDTH,
            game_seconds: GAME_SECONDS,
            score_scale: SCORE_SCALE,
        }
    }

    /// Width of the season ⊕ team indicator.
    pub fn identity_width(&self) -> usize {
        self.n_seasons + self.n_teams
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seasons < 1 || self.n_teams < 1 {
            return Err(Error::invalid("vocabulary", "sizes must be at least 1"));
        }
        for (name, v) in [
            ("field_length", self.field_length),
            ("field_width", self.field_width),
            ("game_seconds", self.game_seconds),
            ("score_scale", self.score_scale),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid("encoding constant", format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub team_indicator: Vec<f64>,
    pub opponent_indicator: Vec<f64>,
    pub tackle_indicator: Vec<f64>,
    pub position_raw: [f64; 2],
    pub dense_context: [f64; 2],
    pub target: GameStateTarget,
}

/// Context fields recovered from an encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedContext {
    pub season_idx: usize,
    pub team_idx: usize,
    pub opponent_idx: usize,
    pub tackle_number: u8,
    pub back_to_back: bool,
    pub pos_x: f64,
    pub pos_y: f64,
    pub time_remaining: f64,
    pub score_diff: f64,
}

impl EncodedExample {
    pub fn decode(&self, config: &EncodingConfig) -> Result<DecodedContext> {
        let ones = |v: &[f64], range: std::ops::Range<usize>| -> Result<usize> {
            let hits: Vec<usize> = range.filter(|&i| v[i] == 1.0).collect();
            match hits.as_slice() {
                [i] => Ok(*i),
                _ => Err(Error::invalid(
                    "indicator",
                    format!("expected one hot slot, found {}", hits.len()),
                )),
            }
        };
        let s = config.n_seasons;
        let width = config.identity_width();
        if self.team_indicator.len() != width || self.opponent_indicator.len() != width {
            return Err(Error::shape("decode", "indicator width does not match vocabulary"));
        }
        let season_idx = ones(&self.team_indicator, 0..s)?;
        let team_idx = ones(&self.team_indicator, s..width)? - s;
        let opponent_idx = ones(&self.opponent_indicator, s..width)? - s;
        let tackle = ones(&self.tackle_indicator, 0..6)?;
        Ok(DecodedContext {
            season_idx,
            team_idx,
            opponent_idx,
            tackle_number: tackle as u8 + 1,
            back_to_back: self.tackle_indicator[6] == 1.0,
            pos_x: self.position_raw[0] * config.field_length,
            pos_y: self.position_raw[1] * config.field_width,
            time_remaining: self.dense_context[0] * config.game_seconds,
            score_diff: self.dense_context[1] * config.score_scale,
        })
    }

    /// Indices of the non-zero slots of each indicator, as `(slot, weight)` pairs.
    pub fn active(indicator: &[f64]) -> Vec<(usize, f64)> {
        indicator
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect()
    }
}

pub fn season_team_onehot(season_idx: usize, team_idx: usize, config: &EncodingConfig) -> Result<Vec<f64>> {
    if season_idx >= config.n_seasons {
        return Err(Error::OutOfRange {
            what: "season_idx",
            index: season_idx,
            size: config.n_seasons,
        });
    }
    if team_idx >= config.n_teams {
        return Err(Error::OutOfRange {
            what: "team_idx",
            index: team_idx,
            size: config.n_teams,
        });
    }
    let mut v = vec![0.0; config.identity_width()];
    v[season_idx] = 1.0;
    v[config.n_seasons + team_idx] = 1.0;
    Ok(v)
}

pub fn tackle_flag_onehot(tackle_number: u8, back_to_back: bool) -> Result<Vec<f64>> {
    if !(1..=6).contains(&tackle_number) {
        return Err(Error::OutOfRange {
            what: "tackle_number",
            index: tackle_number as usize,
            size: 6,
        });
    }
    let mut v = vec![0.0; TACKLE_SLOTS];
    v[tackle_number as usize - 1] = 1.0;
    if back_to_back {
        v[6] = 1.0;
    }
    Ok(v)
}

pub fn encode_event(event: &TackleEvent, config: &EncodingConfig) -> Result<EncodedExample> {
    event.validate()?;
    Ok(EncodedExample {
        team_indicator: season_team_onehot(event.season_idx, event.team_idx, config)?,
        opponent_indicator: season_team_onehot(event.season_idx, event.opponent_idx, config)?,
        tackle_indicator: tackle_flag_onehot(event.tackle_number, event.back_to_back)?,
        position_raw: [event.pos_x / config.field_length, event.pos_y / config.field_width],
        dense_context: [
            event.time_remaining / config.game_seconds,
            event.score_diff as f64 / config.score_scale,
        ],
        target: event.target(),
    })
}

pub fn encode_all(events: &[TackleEvent], config: &EncodingConfig) -> Result<Vec<EncodedExample>> {
    events.iter().map(|e| encode_event(e, config)).collect()
}

/// Vocabulary sizes are the largest observed index plus one.
pub fn build_vocab(events: &[TackleEvent]) -> Result<EncodingConfig> {
    if events.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let n_seasons = events.iter().map(|e| e.season_idx).max().unwrap_or(0) + 1;
    let n_teams = events.iter().map(|e| e.team_idx.max(e.opponent_idx)).max().unwrap_or(0) + 1;
    Ok(EncodingConfig::new(n_seasons, n_teams))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn sample_event() -> TackleEvent {
        TackleEvent {
            match_id: "m1".into(),
            season_idx: 0,
            round: 1,
            team_idx: 0,
            opponent_idx: 1,
            tackle_number: 1,
            back_to_back: false,
            pos_x: 50.0,
            pos_y: 35.0,
            time_remaining: 2400.0,
            score_diff: 0,
            meters_gained: 8.0,
            try_this_tackle: false,
            try_this_set: false,
            possessing_team_won: true,
            final_score_for: 20,
            final_score_against: 12,
            last_tackle_play: None,
        }
    }

    #[test]
    fn season_team_cases() {
        let c = EncodingConfig::new(1, 2);
        assert_eq!(season_team_onehot(0, 0, &c).unwrap(), vec![1.0, 1.0, 0.0]);

        let c = EncodingConfig::new(4, 16);
        let v = season_team_onehot(3, 7, &c).unwrap();
        assert_eq!(v.len(), 20);
        let ones: Vec<usize> = (0..20).filter(|&i| v[i] == 1.0).collect();
        assert_eq!(ones, vec![3, 11]);

        let v = season_team_onehot(0, 15, &c).unwrap();
        let ones: Vec<usize> = (0..20).filter(|&i| v[i] == 1.0).collect();
        assert_eq!(ones, vec![0, 19]);
    }

    #[test]
    fn season_team_out_of_range() {
        let c = EncodingConfig::new(4, 16);
        let err = season_team_onehot(0, 16, &c).unwrap_err();
        assert!(matches!(
            err,
            Error::OutOfRange {
                what: "team_idx",
                index: 16,
                ..
            }
        ));
        assert!(season_team_onehot(4, 0, &c).is_err());
    }

    #[test]
    fn tackle_flag_cases() {
        assert_eq!(
            tackle_flag_onehot(1, false).unwrap(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            tackle_flag_onehot(6, true).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]
        );
        assert_eq!(
            tackle_flag_onehot(3, false).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert!(tackle_flag_onehot(0, false).is_err());
        assert!(tackle_flag_onehot(7, false).is_err());
    }

    #[test]
    fn encode_position_and_context() {
        let c = EncodingConfig::new(1, 2);
        let e = sample_event();
        let x = encode_event(&e, &c).unwrap();
        assert_eq!(x.position_raw, [0.5, 0.5]);

        let mut e = sample_event();
        e.pos_x = 0.0;
        e.pos_y = 0.0;
        e.time_remaining = 4800.0;
        let x = encode_event(&e, &c).unwrap();
        assert_eq!(x.position_raw, [0.0, 0.0]);
        assert_eq!(x.dense_context, [1.0, 0.0]);
        assert_eq!(x.target, e.target());
    }

    #[test]
    fn encode_rejects_invalid_fields() {
        let c = EncodingConfig::new(1, 2);
        let mut e = sample_event();
        e.try_this_tackle = true;
        let err = encode_event(&e, &c).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Invalid {
                    field: "try_this_set",
                    ..
                }
            ),
            "{err}"
        );

        let mut e = sample_event();
        e.pos_x = 101.0;
        assert!(matches!(
            encode_event(&e, &c),
            Err(Error::Invalid { field: "pos_x", .. })
        ));

        let mut e = sample_event();
        e.final_score_for = 10;
        assert!(matches!(
            encode_event(&e, &c),
            Err(Error::Invalid {
                field: "possessing_team_won",
                ..
            })
        ));
    }

    #[test]
    fn vocab_cases() {
        let e = sample_event();
        let c = build_vocab(std::slice::from_ref(&e)).unwrap();
        assert_eq!((c.n_seasons, c.n_teams), (1, 2));

        let mut a = sample_event();
        a.team_idx = 0;
        a.opponent_idx = 5;
        let c = build_vocab(&[a]).unwrap();
        assert_eq!(c.n_teams, 6);

        assert!(matches!(build_vocab(&[]), Err(Error::Empty(_))));
    }

    fn arb_event() -> impl Strategy<Value = TackleEvent> {
        (
            0usize..4,
            0usize..16,
            1usize..16,
            1u8..=6,
            any::<bool>(),
            0.0f64..=100.0,
            0.0f64..=70.0,
            0.0f64..=4800.0,
            -60i32..60,
        )
            .prop_map(|(season, team, shift, tackle, b2b, x, y, t, sd)| {
                let mut e = sample_event();
                e.season_idx = season;
                e.team_idx = team;
                e.opponent_idx = (team + shift) % 16;
                e.tackle_number = tackle;
                e.back_to_back = b2b;
                e.pos_x = x;
                e.pos_y = y;
                e.time_remaining = t;
                e.score_diff = sd;
                e
            })
    }

    proptest! {
        #[test]
        fn encoding_round_trips(e in arb_event()) {
            let c = EncodingConfig::new(4, 16);
            let x = encode_event(&e, &c).unwrap();
            let ones = |v: &[f64]| v.iter().filter(|&&u| u == 1.0).count();
            prop_assert_eq!(ones(&x.team_indicator), 2);
            prop_assert_eq!(ones(&x.opponent_indicator), 2);
            prop_assert_eq!(ones(&x.tackle_indicator[..6]), 1);
            prop_assert!(x.position_raw.iter().all(|p| (0.0..=1.0).contains(p)));
            let d = x.decode(&c).unwrap();
            prop_assert_eq!(d.season_idx, e.season_idx);
            prop_assert_eq!(d.team_idx, e.team_idx);
            prop_assert_eq!(d.opponent_idx, e.opponent_idx);
            prop_assert_eq!(d.tackle_number, e.tackle_number);
            prop_assert_eq!(d.back_to_back, e.back_to_back);
            prop_assert!((d.pos_x - e.pos_x).abs() <= 1e-9);
            prop_assert!((d.pos_y - e.pos_y).abs() <= 1e-9);
            prop_assert!((d.time_remaining - e.time_remaining).abs() <= 1e-9);
            prop_assert!((d.score_diff - e.score_diff as f64).abs() <= 1e-9);
        }
    }
}
