//! Value over average on try-in-set residuals.
//!
//! Expectations come from the model queried as a league-average matchup, so a
//! team's residuals carry its own strength rather than having it absorbed by
//! its identity embedding.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::ex_try_set_all;
use crate::error::{Error, Result};
use crate::features::TackleEvent;
use crate::mdn::{IdentityMode, MdnModel};

/// Actual minus expected try-in-set for one play. The same number is the
/// possessing team's offensive residual and the opponent's defensive one.
pub fn play_residual(event: &TackleEvent, ex_try_set: f64) -> f64 {
    event.try_this_set as u8 as f64 - ex_try_set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvoaRow {
    pub team_idx: usize,
    pub offensive: f64,
    pub defensive: f64,
    /// offensive − defensive
    pub differential: f64,
    pub offensive_plays: usize,
    pub defensive_plays: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvoaTable {
    /// Ordered by team index.
    pub rows: Vec<DvoaRow>,
    /// Mean residual over all plays before centering (both columns share it).
    pub league_offensive_mean: f64,
    pub league_defensive_mean: f64,
}

impl DvoaTable {
    pub fn row(&self, team_idx: usize) -> Option<&DvoaRow> {
        self.rows.iter().find(|r| r.team_idx == team_idx)
    }

    /// Team with the largest offensive value.
    pub fn best_offense(&self) -> Option<usize> {
        self.rows
            .iter()
            .max_by(|a, b| a.offensive.total_cmp(&b.offensive))
            .map(|r| r.team_idx)
    }

    /// Team with the most negative defensive value.
    pub fn best_defense(&self) -> Option<usize> {
        self.rows
            .iter()
            .min_by(|a, b| a.defensive.total_cmp(&b.defensive))
            .map(|r| r.team_idx)
    }

    /// Play-weighted means of the two centred columns.
    pub fn weighted_means(&self) -> (f64, f64) {
        let (mut so, mut no, mut sd, mut nd) = (0.0, 0.0, 0.0, 0.0);
        for r in &self.rows {
            so += r.offensive * r.offensive_plays as f64;
            no += r.offensive_plays as f64;
            sd += r.defensive * r.defensive_plays as f64;
            nd += r.defensive_plays as f64;
        }
        (so / no, sd / nd)
    }
}

/// Aggregates precomputed residuals. Teams without both offensive and
/// defensive plays are dropped with a warning.
pub fn dvoa_from_residuals(events: &[TackleEvent], residuals: &[f64]) -> Result<DvoaTable> {
    if events.is_empty() {
        return Err(Error::Empty("dvoa events"));
    }
    if events.len() != residuals.len() {
        return Err(Error::shape(
            "dvoa",
            format!("{} events, {} residuals", events.len(), residuals.len()),
        ));
    }
    let mut off: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut def: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (e, &r) in events.iter().zip(residuals) {
        let o = off.entry(e.team_idx).or_default();
        o.0 += r;
        o.1 += 1;
        let d = def.entry(e.opponent_idx).or_default();
        d.0 += r;
        d.1 += 1;
    }
    let teams: Vec<usize> = off
        .keys()
        .chain(def.keys())
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut kept = Vec::new();
    for t in teams {
        match (off.get(&t), def.get(&t)) {
            (Some(&o), Some(&d)) => kept.push((t, o, d)),
            _ => warn!("team {t} has no offensive or no defensive plays; excluded from DVOA"),
        }
    }
    let mean_of = |f: fn(&(usize, (f64, usize), (f64, usize))) -> (f64, usize)| {
        let (s, n) = kept.iter().map(f).fold((0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1));
        s / n as f64
    };
    let league_off = mean_of(|k| k.1);
    let league_def = mean_of(|k| k.2);
    let rows = kept
        .into_iter()
        .map(|(t, (so, no), (sd, nd))| {
            let offensive = so / no as f64 - league_off;
            let defensive = sd / nd as f64 - league_def;
            DvoaRow {
                team_idx: t,
                offensive,
                defensive,
                differential: offensive - defensive,
                offensive_plays: no,
                defensive_plays: nd,
            }
        })
        .collect();
    Ok(DvoaTable {
        rows,
        league_offensive_mean: league_off,
        league_defensive_mean: league_def,
    })
}

fn residuals(events: &[TackleEvent], model: &MdnModel) -> Result<Vec<f64>> {
    let preds = ex_try_set_all(model, events, IdentityMode::LeagueAverage)?;
    Ok(events.iter().zip(preds).map(|(e, p)| play_residual(e, p)).collect())
}

pub fn compute_dvoa(events: &[TackleEvent], model: &MdnModel) -> Result<DvoaTable> {
    if events.is_empty() {
        return Err(Error::Empty("dvoa events"));
    }
    dvoa_from_residuals(events, &residuals(events, model)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDvoa {
    pub season_idx: usize,
    pub round: u32,
    pub table: DvoaTable,
}

/// Running tables through each `(season, round)` in order.
pub fn cumulative_dvoa(events: &[TackleEvent], model: &MdnModel) -> Result<Vec<RoundDvoa>> {
    if events.is_empty() {
        return Err(Error::Empty("dvoa events"));
    }
    let res = residuals(events, model)?;
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| (events[i].season_idx, events[i].round));
    let mut out = Vec::new();
    let mut prefix_events = Vec::with_capacity(events.len());
    let mut prefix_res = Vec::with_capacity(events.len());
    let mut i = 0;
    while i < order.len() {
        let key = (events[order[i]].season_idx, events[order[i]].round);
        while i < order.len() && (events[order[i]].season_idx, events[order[i]].round) == key {
            prefix_events.push(events[order[i]].clone());
            prefix_res.push(res[order[i]]);
            i += 1;
        }
        out.push(RoundDvoa {
            season_idx: key.0,
            round: key.1,
            table: dvoa_from_residuals(&prefix_events, &prefix_res)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDvoa {
    pub threshold: f64,
    /// Plays with `pos_x < threshold`.
    pub normal: Option<DvoaTable>,
    /// Plays with `pos_x >= threshold`.
    pub final_quarter: Option<DvoaTable>,
    pub normal_plays: usize,
    pub final_quarter_plays: usize,
}

/// Separate centred tables either side of `threshold` metres. An empty zone
/// is reported as `None` with a warning.
pub fn spatial_split_dvoa(events: &[TackleEvent], model: &MdnModel, threshold: f64) -> Result<SpatialDvoa> {
    if !(0.0..=100.0).contains(&threshold) {
        return Err(Error::invalid("threshold", format!("{threshold} not in [0, 100]")));
    }
    if events.is_empty() {
        return Err(Error::Empty("dvoa events"));
    }
    let res = residuals(events, model)?;
    let zone = |near: bool| -> Result<(Option<DvoaTable>, usize)> {
        let (ev, r): (Vec<TackleEvent>, Vec<f64>) = events
            .iter()
            .zip(&res)
            .filter(|(e, _)| (e.pos_x >= threshold) == near)
            .map(|(e, &r)| (e.clone(), r))
            .unzip();
        if ev.is_empty() {
            warn!(
                "no plays {} x = {threshold}; zone excluded",
                if near { "at or beyond" } else { "short of" }
            );
            return Ok((None, 0));
        }
        let n = ev.len();
        Ok((Some(dvoa_from_residuals(&ev, &r)?), n))
    };
    let (normal, normal_plays) = zone(false)?;
    let (final_quarter, final_quarter_plays) = zone(true)?;
    Ok(SpatialDvoa {
        threshold,
        normal,
        final_quarter,
        normal_plays,
        final_quarter_plays,
    })
}
