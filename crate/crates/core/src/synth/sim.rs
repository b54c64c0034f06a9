use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::{League, MAX_X};
use crate::error::{Error, Result};
use crate::features::{LastTacklePlay, TackleEvent, FIELD_WIDTH, GAME_SECONDS};

/// State at the start of a (possibly partial) set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetStart {
    pub attack: usize,
    pub defense: usize,
    pub tackle: u8,
    pub back_to_back: bool,
    pub x: f64,
    pub y: f64,
    pub time_remaining: f64,
    pub score_diff: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TackleRecord {
    pub tackle_number: u8,
    pub x: f64,
    pub y: f64,
    pub time_remaining: f64,
    pub meters: f64,
    pub try_scored: bool,
    pub play: Option<LastTacklePlay>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetEnd {
    Try,
    /// Opponent takes over at `x` in its own attacking frame.
    Turnover {
        x: f64,
    },
    /// Attacking kick regained: new back-to-back set at `x`.
    Regained {
        x: f64,
    },
    TimeUp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetResult {
    pub tackles: Vec<TackleRecord>,
    pub end: SetEnd,
    /// Clock after the last tackle of the set.
    pub time_after: f64,
}

impl SetResult {
    pub fn scored(&self) -> bool {
        self.end == SetEnd::Try
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("validated deviation")
}

fn reflect(mut y: f64) -> f64 {
    loop {
        if y < 0.0 {
            y = -y;
        } else if y > FIELD_WIDTH {
            y = 2.0 * FIELD_WIDTH - y;
        } else {
            return y;
        }
    }
}

/// Runs one set from `start` until a try, turnover, regained kick or the
/// clock runs out. Each tackle costs `seconds_per_tackle`.
pub fn play_set<R: Rng + ?Sized>(league: &League, start: &SetStart, rng: &mut R) -> SetResult {
    let s = &league.spec;
    let (a, d) = (start.attack, start.defense);
    let mut x = start.x;
    let mut y = start.y;
    let mut t_rem = start.time_remaining;
    let mut tackles = Vec::with_capacity(6);

    for tackle in start.tackle..=6 {
        if t_rem <= 0.0 {
            return SetResult {
                tackles,
                end: SetEnd::TimeUp,
                time_after: t_rem,
            };
        }
        let mut rec = TackleRecord {
            tackle_number: tackle,
            x,
            y,
            time_remaining: t_rem,
            meters: 0.0,
            try_scored: false,
            play: None,
        };
        t_rem -= s.seconds_per_tackle;

        let play = if tackle == 6 {
            let pol = league.policy(a, x, start.score_diff as f64, rec.time_remaining);
            let u: f64 = rng.random();
            let p = if u < pol[0] {
                LastTacklePlay::Run
            } else if u < pol[0] + pol[1] {
                LastTacklePlay::OffensiveKick
            } else {
                LastTacklePlay::DefensiveKick
            };
            rec.play = Some(p);
            p
        } else {
            LastTacklePlay::Run
        };

        match play {
            LastTacklePlay::Run => {
                if rng.random::<f64>() < league.try_prob(a, d, tackle, x) {
                    rec.meters = 100.0 - x + normal(0.0, 2.0).sample(rng).abs();
                    rec.try_scored = true;
                    tackles.push(rec);
                    return SetResult {
                        tackles,
                        end: SetEnd::Try,
                        time_after: t_rem,
                    };
                }
                let (mu, sd) = league.gain_params(a, d, tackle);
                let g = normal(mu, sd).sample(rng);
                rec.meters = g;
                tackles.push(rec);
                x = (x + g).clamp(0.0, MAX_X);
                y = reflect(y + normal(0.0, 6.0).sample(rng));
                if tackle == 6 {
                    let next = (100.0 - x).clamp(1.0, MAX_X);
                    return SetResult {
                        tackles,
                        end: SetEnd::Turnover { x: next },
                        time_after: t_rem,
                    };
                }
            }
            LastTacklePlay::OffensiveKick => {
                if rng.random::<f64>() < league.kick_try_prob(a, d, x) {
                    rec.meters = 100.0 - x + normal(0.0, 2.0).sample(rng).abs();
                    rec.try_scored = true;
                    tackles.push(rec);
                    return SetResult {
                        tackles,
                        end: SetEnd::Try,
                        time_after: t_rem,
                    };
                }
                if rng.random::<f64>() < s.kick.regain_prob {
                    let nx = (x + normal(5.0, 5.0).sample(rng)).clamp(1.0, 95.0);
                    rec.meters = nx - x;
                    tackles.push(rec);
                    return SetResult {
                        tackles,
                        end: SetEnd::Regained { x: nx },
                        time_after: t_rem,
                    };
                }
                rec.meters = 90.0 - x;
                tackles.push(rec);
                return SetResult {
                    tackles,
                    end: SetEnd::Turnover { x: 10.0 },
                    time_after: t_rem,
                };
            }
            LastTacklePlay::DefensiveKick => {
                let dist = normal(s.kick.defensive_mean, s.kick.defensive_sd).sample(rng).max(5.0);
                let land = x + dist;
                let next = if land >= 100.0 { 20.0 } else { (100.0 - land).max(1.0) };
                rec.meters = dist.min(100.0 - x);
                tackles.push(rec);
                return SetResult {
                    tackles,
                    end: SetEnd::Turnover { x: next },
                    time_after: t_rem,
                };
            }
        }
    }
    unreachable!("tackle 6 always ends the set")
}

/// Identity of one fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchMeta {
    pub match_id: String,
    pub season_idx: usize,
    pub round: u32,
}

/// Simulates one match. The home side receives the opening kick; after a
/// try the conceding side restarts with the ball. Outcome labels are
/// back-filled once the match is over.
pub fn simulate_match<R: Rng + ?Sized>(
    league: &League,
    home: usize,
    away: usize,
    meta: &MatchMeta,
    rng: &mut R,
) -> Result<Vec<TackleEvent>> {
    let n = league.n_teams();
    if home >= n || away >= n {
        return Err(Error::OutOfRange {
            what: "team",
            index: home.max(away),
            size: n,
        });
    }
    if home == away {
        return Err(Error::invalid("away", "a team cannot play itself"));
    }
    let s = &league.spec;
    let teams = [home, away];
    let mut score = [0u32; 2];
    // (side index, event index range, scored)
    let mut sets: Vec<(usize, std::ops::Range<usize>, bool)> = Vec::new();
    let mut events: Vec<TackleEvent> = Vec::new();

    let mut side = 0usize;
    let mut x = rng.random_range(15.0..35.0);
    let mut y = rng.random_range(10.0..60.0);
    let mut b2b = false;
    let mut clock = GAME_SECONDS;

    while clock > 0.0 {
        let start = SetStart {
            attack: teams[side],
            defense: teams[1 - side],
            tackle: 1,
            back_to_back: b2b,
            x,
            y,
            time_remaining: clock,
            score_diff: score[side] as i32 - score[1 - side] as i32,
        };
        let res = play_set(league, &start, rng);
        let first = events.len();
        for r in &res.tackles {
            events.push(TackleEvent {
                match_id: meta.match_id.clone(),
                season_idx: meta.season_idx,
                round: meta.round,
                team_idx: start.attack,
                opponent_idx: start.defense,
                tackle_number: r.tackle_number,
                back_to_back: b2b,
                pos_x: r.x,
                pos_y: r.y,
                time_remaining: r.time_remaining,
                score_diff: start.score_diff,
                meters_gained: r.meters,
                try_this_tackle: r.try_scored,
                try_this_set: false,
                possessing_team_won: false,
                final_score_for: 0,
                final_score_against: 0,
                last_tackle_play: r.play,
            });
        }
        sets.push((side, first..events.len(), res.scored()));
        clock = res.time_after;
        y = rng.random_range(10.0..60.0);
        match res.end {
            SetEnd::Try => {
                score[side] += 4;
                if rng.random::<f64>() < s.conversion_prob {
                    score[side] += 2;
                }
                clock -= s.try_restart_seconds;
                side = 1 - side;
                x = rng.random_range(20.0..35.0);
                b2b = false;
            }
            SetEnd::Turnover { x: nx } => {
                side = 1 - side;
                x = nx;
                b2b = false;
            }
            SetEnd::Regained { x: nx } => {
                x = nx;
                b2b = true;
            }
            SetEnd::TimeUp => break,
        }
    }

    for (side, range, scored) in sets {
        let (f, a) = (score[side], score[1 - side]);
        for e in &mut events[range] {
            e.try_this_set = scored;
            e.final_score_for = f;
            e.final_score_against = a;
            e.possessing_team_won = f > a;
        }
    }
    Ok(events)
}

/// splitmix64 finaliser, used to derive independent per-match seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixture list of a double round robin by the circle method, truncated to
/// `rounds` rounds. Entries are (round, home, away).
pub fn schedule(n_teams: usize, rounds: usize) -> Result<Vec<(u32, usize, usize)>> {
    if n_teams < 2 || n_teams % 2 == 1 {
        return Err(Error::invalid(
            "n_teams",
            format!("{n_teams} must be even and at least 2"),
        ));
    }
    let cycle = n_teams - 1;
    let total = rounds.min(2 * cycle);
    let mut out = Vec::with_capacity(total * n_teams / 2);
    for r in 0..total {
        let rr = r % cycle;
        let second_leg = r >= cycle;
        for i in 0..n_teams / 2 {
            let (a, b) = if i == 0 {
                (n_teams - 1, rr)
            } else {
                ((rr + i) % cycle, (rr + cycle - i) % cycle)
            };
            let (mut h, mut w) = if (rr + i) % 2 == 0 { (a, b) } else { (b, a) };
            if second_leg {
                std::mem::swap(&mut h, &mut w);
            }
            out.push((r as u32 + 1, h, w));
        }
    }
    Ok(out)
}

/// One season of events. Team indices are shared across seasons so the
/// season-team encoding sees the same teams in each.
pub fn simulate_season(league: &League, season_idx: usize, seed: u64) -> Result<Vec<TackleEvent>> {
    let fixtures = schedule(league.n_teams(), league.spec.rounds)?;
    let mut events = Vec::new();
    let per_round = league.n_teams() / 2;
    for (k, &(round, home, away)) in fixtures.iter().enumerate() {
        let idx = k % per_round;
        let meta = MatchMeta {
            match_id: format!("s{season_idx}-r{round}-m{idx}"),
            season_idx,
            round,
        };
        let mseed = mix_seed(seed ^ mix_seed(((season_idx as u64) << 32) | k as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(mseed);
        events.extend(simulate_match(league, home, away, &meta, &mut rng)?);
    }
    Ok(events)
}

/// All `n_seasons` seasons, seeded from the league seed.
pub fn simulate_league(league: &League) -> Result<Vec<TackleEvent>> {
    let mut out = Vec::new();
    for s in 0..league.spec.n_seasons {
        out.extend(simulate_season(league, s, league.spec.seed)?);
    }
    Ok(out)
}
