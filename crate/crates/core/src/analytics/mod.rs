//! Team ratings, momentum, scoreline traces and last-tackle valuation built
//! on a trained [`MdnModel`](crate::mdn::MdnModel).

pub mod decisions;
pub mod dvoa;
pub mod momentum;
pub mod scoreline;

pub use decisions::{
    decision_table, decision_value, zone_summary, DecisionConfig, DecisionSupport, DecisionTable, DecisionValuation,
    FieldZone,
};
pub use dvoa::{
    compute_dvoa, cumulative_dvoa, dvoa_from_residuals, play_residual, spatial_split_dvoa, DvoaRow, DvoaTable,
    RoundDvoa, SpatialDvoa,
};
pub use momentum::{baseline_table, set_trace, split_sets, BaselineTable, SetTrace, SetTraceRow, BIG_PLAY_PERCENTILE};
pub use scoreline::{game_over_point, scoreline_trace, ScorelinePoint, ScorelineTrace};

use crate::error::Result;
use crate::features::{encode_all, TackleEvent};
use crate::inference::{bernoulli_mean, BinaryDim};
use crate::mdn::{IdentityMode, MdnModel};

pub(crate) fn ex_try_set_all(model: &MdnModel, events: &[TackleEvent], mode: IdentityMode) -> Result<Vec<f64>> {
    let examples = encode_all(events, &model.encoding)?;
    Ok(model
        .forward_batch(&examples, mode)?
        .iter()
        .map(|m| bernoulli_mean(m, BinaryDim::TrySet))
        .collect())
}
