use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activations::{sigmoid, softmax};

/// Red-zone line: defensive red-zone strength applies at or beyond this x.
pub const RED_ZONE_X: f64 = 75.0;
/// Upper bound for ball position outside a try.
pub const MAX_X: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TryModel {
    pub intercept: f64,
    pub x: f64,
    pub tackle: f64,
    pub strength: f64,
}

impl Default for TryModel {
    fn default() -> Self {
        TryModel {
            intercept: -7.0,
            x: 6.5,
            tackle: 0.05,
            strength: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainModel {
    pub mean: f64,
    pub tackle: f64,
    pub strength: f64,
    pub sd: f64,
}

impl Default for GainModel {
    fn default() -> Self {
        GainModel {
            mean: 8.0,
            tackle: -0.2,
            strength: 3.0,
            sd: 4.0,
        }
    }
}

/// Linear score of one kick option relative to running the ball.
/// `intercepts` holds one entry per team; left empty it is filled with
/// `base` plus uniform jitter when the league is built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KickPolicy {
    pub base: f64,
    pub intercepts: Vec<f64>,
    pub x: f64,
    pub score: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyModel {
    pub offensive_kick: KickPolicy,
    pub defensive_kick: KickPolicy,
    pub team_jitter: f64,
}

impl Default for PolicyModel {
    fn default() -> Self {
        PolicyModel {
            offensive_kick: KickPolicy {
                base: -1.5,
                intercepts: Vec::new(),
                x: 2.5,
                score: -1.0,
                time: 0.0,
            },
            defensive_kick: KickPolicy {
                base: 2.5,
                intercepts: Vec::new(),
                x: -3.0,
                score: 1.0,
                time: 0.5,
            },
            team_jitter: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KickModel {
    pub try_intercept: f64,
    pub try_x: f64,
    pub regain_prob: f64,
    pub defensive_mean: f64,
    pub defensive_sd: f64,
}

impl Default for KickModel {
    fn default() -> Self {
        KickModel {
            try_intercept: -4.5,
            try_x: 3.0,
            regain_prob: 0.15,
            defensive_mean: 40.0,
            defensive_sd: 8.0,
        }
    }
}

/// Generator configuration. Empty strength vectors are drawn uniformly in
/// `[-strength_spread, strength_spread]` from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeagueSpec {
    pub n_teams: usize,
    pub n_seasons: usize,
    pub rounds: usize,
    pub seed: u64,
    pub strength_spread: f64,
    pub offense: Vec<f64>,
    pub defense: Vec<f64>,
    pub redzone_defense: Vec<f64>,
    pub try_model: TryModel,
    pub gain: GainModel,
    pub policy: PolicyModel,
    pub kick: KickModel,
    pub conversion_prob: f64,
    pub seconds_per_tackle: f64,
    pub try_restart_seconds: f64,
}

impl Default for LeagueSpec {
    fn default() -> Self {
        LeagueSpec {
            n_teams: 16,
            n_seasons: 1,
            rounds: 24,
            seed: 0,
            strength_spread: 0.3,
            offense: Vec::new(),
            defense: Vec::new(),
            redzone_defense: Vec::new(),
            try_model: TryModel::default(),
            gain: GainModel::default(),
            policy: PolicyModel::default(),
            kick: KickModel::default(),
            conversion_prob: 0.75,
            seconds_per_tackle: 16.0,
            try_restart_seconds: 60.0,
        }
    }
}

/// A fully resolved league: every per-team vector has `n_teams` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct League {
    pub spec: LeagueSpec,
}

fn fill(v: &mut Vec<f64>, n: usize, name: &'static str, mut draw: impl FnMut() -> f64) -> Result<()> {
    if v.is_empty() {
        *v = (0..n).map(|_| draw()).collect();
    } else if v.len() != n {
        return Err(Error::invalid(name, format!("{} entries for {n} teams", v.len())));
    }
    if v.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid(name, "non-finite entry"));
    }
    Ok(())
}

fn check_prob(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(name, format!("{p} not in [0, 1]")));
    }
    Ok(())
}

fn check_pos(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::invalid(name, format!("{v} must be positive")));
    }
    Ok(())
}

impl League {
    pub fn new(spec: &LeagueSpec) -> Result<Self> {
        let mut s = spec.clone();
        let n = s.n_teams;
        if n < 2 {
            return Err(Error::invalid("n_teams", "need at least 2 teams"));
        }
        if s.n_seasons < 1 {
            return Err(Error::invalid("n_seasons", "must be at least 1"));
        }
        if !(s.strength_spread.is_finite() && s.strength_spread >= 0.0) {
            return Err(Error::invalid("strength_spread", "must be finite and non-negative"));
        }
        check_prob("conversion_prob", s.conversion_prob)?;
        check_prob("kick.regain_prob", s.kick.regain_prob)?;
        check_pos("gain.sd", s.gain.sd)?;
        check_pos("kick.defensive_sd", s.kick.defensive_sd)?;
        check_pos("seconds_per_tackle", s.seconds_per_tackle)?;
        if !(s.try_restart_seconds.is_finite() && s.try_restart_seconds >= 0.0) {
            return Err(Error::invalid("try_restart_seconds", "must be non-negative"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let a = s.strength_spread;
        let mut uni = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
        fill(&mut s.offense, n, "offense", || uni(-a, a))?;
        fill(&mut s.defense, n, "defense", || uni(-a, a))?;
        fill(&mut s.redzone_defense, n, "redzone_defense", || 0.0)?;
        let j = s.policy.team_jitter;
        let (ob, db) = (s.policy.offensive_kick.base, s.policy.defensive_kick.base);
        fill(
            &mut s.policy.offensive_kick.intercepts,
            n,
            "policy.offensive_kick.intercepts",
            || ob + uni(-j, j),
        )?;
        fill(
            &mut s.policy.defensive_kick.intercepts,
            n,
            "policy.defensive_kick.intercepts",
            || db + uni(-j, j),
        )?;

        let coeffs = [
            s.try_model.intercept,
            s.try_model.x,
            s.try_model.tackle,
            s.try_model.strength,
            s.gain.mean,
            s.gain.tackle,
            s.gain.strength,
            s.kick.try_intercept,
            s.kick.try_x,
            s.kick.defensive_mean,
            s.policy.offensive_kick.x,
            s.policy.offensive_kick.score,
            s.policy.offensive_kick.time,
            s.policy.defensive_kick.x,
            s.policy.defensive_kick.score,
            s.policy.defensive_kick.time,
        ];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(
                "coefficients",
                "all generator coefficients must be finite",
            ));
        }
        Ok(League { spec: s })
    }

    pub fn n_teams(&self) -> usize {
        self.spec.n_teams
    }

    pub fn set_offense(&mut self, team: usize, v: f64) {
        self.spec.offense[team] = v;
    }

    pub fn set_defense(&mut self, team: usize, v: f64) {
        self.spec.defense[team] = v;
    }

    pub fn set_redzone_defense(&mut self, team: usize, v: f64) {
        self.spec.redzone_defense[team] = v;
    }

    fn edge(&self, attack: usize, defense: usize, x: f64) -> f64 {
        let rz = if x >= RED_ZONE_X {
            self.spec.redzone_defense[defense]
        } else {
            0.0
        };
        self.spec.offense[attack] - self.spec.defense[defense] - rz
    }

    /// Probability of a try when the ball is run on this tackle.
    pub fn try_prob(&self, attack: usize, defense: usize, tackle: u8, x: f64) -> f64 {
        let m = &self.spec.try_model;
        sigmoid(
            m.intercept
                + m.x * x / 100.0
                + m.tackle * (tackle as f64 - 1.0)
                + m.strength * self.edge(attack, defense, x),
        )
    }

    /// Probability that an attacking kick scores.
    pub fn kick_try_prob(&self, attack: usize, defense: usize, x: f64) -> f64 {
        let k = &self.spec.kick;
        sigmoid(k.try_intercept + k.try_x * x / 100.0 + self.spec.try_model.strength * self.edge(attack, defense, x))
    }

    /// Mean and deviation of meters gained on a tackle that does not score.
    pub fn gain_params(&self, attack: usize, defense: usize, tackle: u8) -> (f64, f64) {
        let g = &self.spec.gain;
        let edge = self.spec.offense[attack] - self.spec.defense[defense];
        (g.mean + g.tackle * (tackle as f64 - 1.0) + g.strength * edge, g.sd)
    }

    /// Last-tackle play probabilities ordered run, offensive kick, defensive kick.
    pub fn policy(&self, attack: usize, x: f64, score_diff: f64, time_remaining: f64) -> [f64; 3] {
        let score = |k: &KickPolicy| {
            k.intercepts[attack] + k.x * x / 100.0 + k.score * score_diff / 50.0 + k.time * time_remaining / 4800.0
        };
        let p = softmax(&[
            0.0,
            score(&self.spec.policy.offensive_kick),
            score(&self.spec.policy.defensive_kick),
        ]);
        [p[0], p[1], p[2]]
    }
}
