//! Analytics checked against generator ground truth with one trained model.

use std::sync::OnceLock;

use gamestate::analytics::{
    baseline_table, cumulative_dvoa, scoreline_trace, spatial_split_dvoa, zone_summary, BaselineTable, DecisionConfig,
};
use gamestate::decision::{train_logistic, LogisticConfig};
use gamestate::features::{build_vocab, LastTacklePlay, TackleEvent};
use gamestate::mdn::MdnModel;
use gamestate::synth::{ground_truth, simulate_league, simulate_season, League, LeagueSpec, TruthContext};
use gamestate::training::{split_dataset, train, TrainConfig};

struct Fixture {
    league: League,
    model: MdnModel,
    test: Vec<TackleEvent>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let league = League::new(&LeagueSpec::default()).unwrap();
        let events = simulate_season(&league, 0, 1).unwrap();
        let enc = build_vocab(&events).unwrap();
        let (fit, test) = split_dataset(&events, 0.8, 7).unwrap();
        let model = train(&fit, &enc, &TrainConfig::default()).unwrap().model;
        Fixture { league, model, test }
    })
}

fn matches(events: Vec<TackleEvent>) -> Vec<Vec<TackleEvent>> {
    let mut out: Vec<Vec<TackleEvent>> = Vec::new();
    for e in events {
        match out.last_mut() {
            Some(m) if m[0].match_id == e.match_id => m.push(e),
            _ => out.push(vec![e]),
        }
    }
    out
}

#[test]
fn redzone_defense_shows_in_final_quarter() {
    let f = fixture();
    let mut spec = LeagueSpec {
        seed: 21,
        ..Default::default()
    };
    spec.redzone_defense = vec![0.0; spec.n_teams];
    spec.redzone_defense[4] = 1.5;
    let events = simulate_league(&League::new(&spec).unwrap()).unwrap();
    let split = spatial_split_dvoa(&events, &f.model, 75.0).unwrap();
    let normal = split.normal.unwrap().row(4).unwrap().defensive;
    let near = split.final_quarter.unwrap().row(4).unwrap().defensive;
    assert!(near < normal, "final quarter {near} vs normal {normal}");
}

#[test]
fn baseline_rises_toward_the_tryline() {
    let f = fixture();
    let truth: Vec<f64> = f
        .test
        .iter()
        .map(|e| {
            let ctx = TruthContext {
                attack: e.team_idx,
                defense: e.opponent_idx,
                tackle_number: e.tackle_number,
                pos_x: e.pos_x,
                score_diff: e.score_diff,
                time_remaining: e.time_remaining,
            };
            ground_truth(&f.league, &ctx).unwrap().ex_try_set
        })
        .collect();
    let oracle = BaselineTable::from_predictions(&f.test, &truth).unwrap();
    let model = baseline_table(&f.test, &f.model).unwrap();
    let (mut err, mut plays) = (0.0, 0usize);
    for t in 0..oracle.values.len() {
        for row in [&oracle.values[t], &model.values[t]] {
            for z in 1..row.len() {
                assert!(row[z] >= row[z - 1], "tackle {} zone {z}: {row:?}", t + 1);
            }
        }
        for z in 0..oracle.values[t].len() {
            let n = oracle.counts[t][z];
            err += n as f64 * (model.values[t][z] - oracle.values[t][z]).abs();
            plays += n;
        }
    }
    assert!(
        err / plays as f64 <= 0.05,
        "play-weighted cell error {}",
        err / plays as f64
    );
}

#[test]
fn scoreless_kicks_value_below_running() {
    let f = fixture();
    let mut spec = LeagueSpec {
        seed: 33,
        rounds: 60,
        ..Default::default()
    };
    spec.kick.try_intercept = -60.0;
    let events = simulate_league(&League::new(&spec).unwrap()).unwrap();
    assert!(events
        .iter()
        .filter(|e| e.last_tackle_play.is_some_and(|p| p != LastTacklePlay::Run))
        .all(|e| !e.try_this_tackle));
    let policy = train_logistic(
        &events,
        &f.model.encoding,
        &LogisticConfig {
            epochs: 200,
            ..Default::default()
        },
    )
    .unwrap()
    .weights;
    let config = DecisionConfig::default();
    let zones = zone_summary(&events, &f.model, &policy, &config).unwrap();
    assert_eq!(zones.len(), 3);
    for z in &zones {
        let run = &z.options[LastTacklePlay::Run.index()];
        for kick in &z.options[1..] {
            assert!(
                run.expected_points > kick.expected_points,
                "{:?}: run {run:?} kick {kick:?}",
                z.zone
            );
        }
    }
}

#[test]
fn cumulative_dvoa_settles() {
    let f = fixture();
    let events = simulate_league(
        &League::new(&LeagueSpec {
            seed: 44,
            ..Default::default()
        })
        .unwrap(),
    )
    .unwrap();
    let series = cumulative_dvoa(&events, &f.model).unwrap();
    assert!(series.len() >= 10);
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
    };
    let n = series.len();
    for team in 0..16 {
        let path: Vec<f64> = series
            .iter()
            .map(|r| r.table.row(team).map_or(0.0, |row| row.offensive))
            .collect();
        assert!(var(&path[n - 5..]) < var(&path[..5]), "team {team}: {path:?}");
    }
}

#[test]
fn scoreline_mean_closes_on_the_result() {
    let f = fixture();
    let games = matches(simulate_season(&f.league, 0, 99).unwrap());
    let n = 50;
    let mut gap = [0.0; 5];
    for m in games.iter().take(n) {
        let reference = m[0].team_idx;
        let last = m.last().unwrap();
        let sign = if last.team_idx == reference { 1.0 } else { -1.0 };
        let result = sign * (last.final_score_for as f64 - last.final_score_against as f64);
        let trace = scoreline_trace(m, &f.model, reference).unwrap();
        for (g, p) in gap.iter_mut().zip(&trace.points[trace.points.len() - 5..]) {
            *g += (p.mean - result).abs() / n as f64;
        }
    }
    assert!(
        gap.windows(2).all(|w| w[1] <= w[0]),
        "mean |mean - result| over the last five tackles: {gap:?}"
    );
}
