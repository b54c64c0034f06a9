//! Named analytics reports producing CSV/JSON artifacts.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analytics::{
    baseline_table, compute_dvoa, cumulative_dvoa, decision_table, game_over_point, scoreline_trace, set_trace,
    spatial_split_dvoa, split_sets, zone_summary, DecisionConfig, DvoaTable,
};
use crate::decision::LogisticWeights;
use crate::error::{Error, Result};
use crate::features::TackleEvent;
use crate::mdn::MdnModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportParams {
    pub x_threshold: f64,
    /// Restricts per-match reports to one match.
    pub match_id: Option<String>,
    /// Perspective for scoreline traces; defaults to the first team in possession.
    pub reference_team: Option<usize>,
    pub decisions: DecisionConfig,
}

impl Default for ReportParams {
    fn default() -> Self {
        Self {
            x_threshold: 75.0,
            match_id: None,
            reference_team: None,
            decisions: DecisionConfig::default(),
        }
    }
}

pub struct ReportContext<'a> {
    pub events: &'a [TackleEvent],
    pub model: &'a MdnModel,
    pub policy: Option<&'a LogisticWeights>,
    pub params: ReportParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

pub trait Report {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &ReportContext) -> Result<Vec<Artifact>>;
}

#[derive(Default)]
pub struct ReportRegistry {
    reports: BTreeMap<&'static str, Box<dyn Report>>,
}

impl ReportRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register(Box::new(DvoaReport));
        r.register(Box::new(CumulativeDvoaReport));
        r.register(Box::new(SpatialDvoaReport));
        r.register(Box::new(ScorelineReport));
        r.register(Box::new(SetTraceReport));
        r.register(Box::new(DecisionsReport));
        r
    }

    pub fn register(&mut self, report: Box<dyn Report>) {
        self.reports.insert(report.name(), report);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.reports.keys().copied().collect()
    }

    pub fn run(&self, name: &str, ctx: &ReportContext) -> Result<Vec<Artifact>> {
        let report = self
            .reports
            .get(name)
            .ok_or_else(|| Error::invalid("report", format!("unknown report {name}")))?;
        report.run(ctx)
    }
}

fn csv_artifact<T: Serialize>(file_name: &str, rows: &[T]) -> Result<Artifact> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid("csv", e.to_string()))?;
    Ok(Artifact {
        file_name: file_name.into(),
        contents: String::from_utf8(bytes).map_err(|e| Error::invalid("csv", e.to_string()))?,
    })
}

fn json_artifact<T: Serialize>(file_name: &str, value: &T) -> Result<Artifact> {
    let mut contents = serde_json::to_string_pretty(value)?;
    contents.push('\n');
    Ok(Artifact {
        file_name: file_name.into(),
        contents,
    })
}

/// Events grouped by match in order of first appearance.
fn matches<'a>(events: &'a [TackleEvent], only: Option<&str>) -> Vec<(&'a str, Vec<TackleEvent>)> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<TackleEvent>> = BTreeMap::new();
    for e in events {
        if only.is_some_and(|m| m != e.match_id) {
            continue;
        }
        let g = groups.entry(e.match_id.as_str()).or_insert_with(|| {
            order.push(e.match_id.as_str());
            Vec::new()
        });
        g.push(e.clone());
    }
    order
        .into_iter()
        .map(|m| (m, groups.remove(m).unwrap_or_default()))
        .collect()
}

#[derive(Serialize)]
struct DvoaCsvRow {
    team: usize,
    offensive_plays: usize,
    defensive_plays: usize,
    tries_for: usize,
    tries_against: usize,
    offensive_dvoa: f64,
    defensive_dvoa: f64,
    differential_dvoa: f64,
}

fn dvoa_rows(table: &DvoaTable, events: &[TackleEvent]) -> Vec<DvoaCsvRow> {
    let mut tries: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for e in events.iter().filter(|e| e.try_this_tackle) {
        tries.entry(e.team_idx).or_default().0 += 1;
        tries.entry(e.opponent_idx).or_default().1 += 1;
    }
    table
        .rows
        .iter()
        .map(|r| {
            let (tf, ta) = tries.get(&r.team_idx).copied().unwrap_or_default();
            DvoaCsvRow {
                team: r.team_idx,
                offensive_plays: r.offensive_plays,
                defensive_plays: r.defensive_plays,
                tries_for: tf,
                tries_against: ta,
                offensive_dvoa: r.offensive,
                defensive_dvoa: r.defensive,
                differential_dvoa: r.differential,
            }
        })
        .collect()
}

pub struct DvoaReport;

impl Report for DvoaReport {
    fn name(&self) -> &'static str {
        "dvoa"
    }

    fn run(&self, ctx: &ReportContext) -> Result<Vec<Artifact>> {
        let table = compute_dvoa(ctx.events, ctx.model)?;
        Ok(vec![
            csv_artifact("dvoa.csv", &dvoa_rows(&table, ctx.events))?,
            json_artifact("dvoa.json", &table)?,
        ])
    }
}

pub struct CumulativeDvoaReport;

#[derive(Serialize)]
struct CumulativeRow {
    season: usize,
    round: u32,
    team: usize,
    offensive_dvoa: f64,
    defensive_dvoa: f64,
}

impl Report for CumulativeDvoaReport {
    fn name(&self) -> &'static str {
        "dvoa-cumulative"
    }

    fn run(&self, ctx: &ReportContext) -> Result<Vec<Artifact>> {
        let series = cumulative_dvoa(ctx.events, ctx.model)?;
        let rows: Vec<CumulativeRow> = series
            .iter()
            .flat_map(|s| {
                s.table.rows.iter().map(move |r| CumulativeRow {
                    season: s.season_idx,
                    round: s.round,
                    team: r.team_idx,
                    offensive_dvoa: r.offensive,
                    defensive_dvoa: r.defensive,
                })
            })
            .collect();
        Ok(vec![csv_artifact("dvoa_cumulative.csv", &rows)?])
    }
}

pub struct SpatialDvoaReport;

#[derive(Serialize)]
struct SpatialRow {
    zone: &'static str,
    team: usize,
    offensive_plays: usize,
    defensive_plays: usize,
    offensive_dvoa: f64,
    defensive_dvoa: f64,
    differential_dvoa: f64,
}

impl Report for SpatialDvoaReport {
    fn name(&self) -> &'static str {
        "dvoa-spatial"
    }

    fn run(&self, ctx: &ReportContext) -> Result<Vec<Artifact>> {
        let split = spatial_split_dvoa(ctx.events, ctx.model, ctx.params.x_threshold)?;
        let mut rows = Vec::new();
        for (zone, table) in [("normal", &split.normal), ("final_quarter", &split.final_quarter)] {
            for r in table.iter().flat_map(|t| &t.rows) {
                rows.push(SpatialRow {
                    zone,
                    team: r.team_idx,
                    offensive_plays: r.offensive_plays,
                    defensive_plays: r.defensive_plays,
                    offensive_dvoa: r.offensive,
                    defensive_dvoa: r.defensive,
                    differential_dvoa: r.differential,
                });
            }
        }
        Ok(vec![csv_artifact("dvoa_spatial.csv", &rows)?])
    }
}

pub struct ScorelineReport;

#[derive(Serialize)]
struct ScorelineRow<'a> {
    match_id: &'a str,
    reference_team: usize,
    time_remaining: f64,
    actual_diff: f64,
    mean: f64,
    q10: f64,
    q50: f64,
    q90: f64,
}

#[derive(Serialize)]
struct GameOverRow<'a> {
    match_id: &'a str,
    reference_team: usize,
    final_actual_diff: f64,
    game_over_time: Option<f64>,
}

impl Report for ScorelineReport {
    fn name(&self) -> &'static str {
        "scoreline"
    }

    fn run(&self, ctx: &ReportContext) -> Result<Vec<Artifact>> {
        let groups = matches(ctx.events, ctx.params.match_id.as_deref());
        if groups.is_empty() {
            return Err(Error::Empty("match events"));
        }
        let mut traces = Vec::new();
        for (_, evs) in &groups {
            let reference = ctx.params.reference_team.unwrap_or(evs[0].team_idx);
            traces.push(scoreline_trace(evs, ctx.model, reference)?);
        }
        let mut rows = Vec::new();
        let mut over = Vec::new();
        for t in &traces {
            for p in &t.points {
                rows.push(ScorelineRow {
                    match_id: &t.match_id,
                    reference_team: t.reference_team,
                    time_remaining: p.time_remaining,
                    actual_diff: p.actual_diff,
                    mean: p.mean,
                    q10: p.q10,
                    q50: p.q50,
                    q90: p.q90,
                });
            }
            over.push(GameOverRow {
                match_id: &t.match_id,
                reference_team: t.reference_team,
                final_actual_diff: t.points.last().map_or(0.0, |p| p.actual_diff),
                game_over_time: game_over_point(t),
            });
        }
        Ok(vec![
            csv_artifact("scoreline.csv", &rows)?,
            csv_artifact("game_over.csv", &over)?,
        ])
    }
}

pub struct SetTraceReport;

#[derive(Serialize)]
struct SetTraceCsvRow<'a> {
    match_id: &'a str,
    set_index: usize,
    team: usize,
    tackle_number: u8,
    pos_x: f64,
    ex_try_set: f64,
    baseline: f64,
    momentum: f64,
    meters_percentile: f64,
    big_play: bool,
}

#[derive(Serialize)]
struct BaselineRow {
    tackle_number: usize,
    x_zone_start: f64,
    ex_try_set: f64,
    plays: usize,
}

impl Report for SetTraceReport {
    fn name(&self) -> &'static str {
        "set-trace"
    }

    fn run(&self, ctx: &ReportContext) -> Result<Vec<Artifact>> {
        let baseline = baseline_table(ctx.events, ctx.model)?;
        let mut rows = Vec::new();
        let traces: Vec<_> = matches(ctx.events, ctx.params.match_id.as_deref())
            .into_iter()
            .map(|(_, evs)| {
                split_sets(&evs)
                    .into_iter()
                    .map(|s| set_trace(s, ctx.model, &baseline))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for match_traces in &traces {
            for (i, t) in match_traces.iter().enumerate() {
                for r in &t.rows {
                    rows.push(SetTraceCsvRow {
                        match_id: &t.match_id,
                        set_index: i,
                        team: t.team_idx,
                        tackle_number: r.tackle_number,
                        pos_x: r.pos_x,
                        ex_try_set: r.ex_try_set,
                        baseline: r.baseline,
                        momentum: r.momentum,
                        meters_percentile: r.meters_percentile,
                        big_play: r.big_play,
                    });
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Empty("match events"));
        }
        let base_rows: Vec<BaselineRow> = (0..6)
            .flat_map(|t| {
                let b = &baseline;
                (0..b.values[t].len()).map(move |z| BaselineRow {
                    tackle_number: t + 1,
                    x_zone_start: 10.0 * z as f64,
                    ex_try_set: b.values[t][z],
                    plays: b.counts[t][z],
                })
            })
            .collect();
        Ok(vec![
            csv_artifact("set_trace.csv", &rows)?,
            csv_artifact("baseline.csv", &base_rows)?,
        ])
    }
}

pub struct DecisionsReport;

#[derive(Serialize)]
struct ZoneRow {
    zone: &'static str,
    plays: usize,
    decision: &'static str,
    frequency: f64,
    expected_points: f64,
    support: usize,
    fallback: bool,
}

impl Report for DecisionsReport {
    fn name(&self) -> &'static str {
        "decisions"
    }

    fn run(&self, ctx: &ReportContext) -> Result<Vec<Artifact>> {
        let policy = ctx
            .policy
            .ok_or_else(|| Error::Checkpoint("no decision model in checkpoint".into()))?;
        let cfg = &ctx.params.decisions;
        let zones = zone_summary(ctx.events, ctx.model, policy, cfg)?;
        let rows: Vec<ZoneRow> = zones
            .iter()
            .flat_map(|z| {
                z.options.iter().map(move |o| ZoneRow {
                    zone: z.zone.name(),
                    plays: z.plays,
                    decision: o.play.name(),
                    frequency: o.frequency,
                    expected_points: o.expected_points,
                    support: o.support,
                    fallback: o.fallback,
                })
            })
            .collect();
        let table = decision_table(ctx.events, ctx.model, policy, cfg)?;
        Ok(vec![
            csv_artifact("decisions_zones.csv", &rows)?,
            csv_artifact("decisions_teams.csv", &table.rows)?,
        ])
    }
}
