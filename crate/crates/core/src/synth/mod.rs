//! Synthetic league with known ground truth.
//!
//! Teams carry offensive, defensive and red-zone defensive strengths. Tries,
//! meters and last-tackle choices follow simple logistic and Gaussian laws
//! whose exact set-level consequences are available through [`ground_truth`].

pub mod sim;
pub mod spec;
pub mod truth;

pub use sim::{
    mix_seed, play_set, schedule, simulate_league, simulate_match, simulate_season, MatchMeta, SetEnd, SetStart,
};
pub use spec::{League, LeagueSpec, RED_ZONE_X};
pub use truth::{ground_truth, GroundTruth, TruthContext};
