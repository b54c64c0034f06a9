//! Exact try probabilities under the generator.
//!
//! The value of a set from tackle `t` at position `x` is
//! `p(x,t) + (1 - p(x,t)) * E[V_{t+1}(clamp(x + g))]` with Gaussian gain `g`.
//! `V_{t+1}` is tabulated on a fine grid and treated as piecewise linear, so
//! the expectation over each grid interval has a closed form in Phi and phi.
//! Mass clamped at either end of the field is added as point atoms.

use super::spec::{League, MAX_X};
use crate::error::{Error, Result};
use crate::inference::{normal_cdf, normal_pdf};

const GRID_STEP: f64 = 0.25;
const WINDOW_SDS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthContext {
    pub attack: usize,
    pub defense: usize,
    pub tackle_number: u8,
    pub pos_x: f64,
    pub score_diff: i32,
    pub time_remaining: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub ex_try_tackle: f64,
    pub ex_try_set: f64,
    /// Last-tackle policy (run, offensive kick, defensive kick) at this context.
    pub decision: [f64; 3],
}

fn grid() -> Vec<f64> {
    let n = (MAX_X / GRID_STEP).round() as usize + 1;
    (0..n).map(|i| i as f64 * GRID_STEP).collect()
}

/// `(down, up)`: integrals over `[a, b]` of the falling and rising hat
/// halves against the N(mu, sd) density, `a`, `b` relative to the origin.
fn hat_pair(a: f64, b: f64, mu: f64, sd: f64) -> (f64, f64) {
    let (za, zb) = ((a - mu) / sd, (b - mu) / sd);
    let dphi = normal_cdf(zb) - normal_cdf(za);
    let dpdf = normal_pdf(za) - normal_pdf(zb);
    let h = b - a;
    let up = ((mu - a) * dphi + sd * dpdf) / h;
    let down = ((b - mu) * dphi - sd * dpdf) / h;
    (down, up)
}

/// `E[V(clamp(x + g))]` for tabulated `v` and `g ~ N(mu, sd)`.
fn expect_at(x: f64, mu: f64, sd: f64, xs: &[f64], v: &[f64]) -> f64 {
    let n = xs.len();
    let lo = normal_cdf((0.0 - x - mu) / sd);
    let hi = 1.0 - normal_cdf((MAX_X - x - mu) / sd);
    let mut acc = lo * v[0] + hi * v[n - 1];
    let c = x + mu;
    let w = WINDOW_SDS * sd;
    let i0 = (((c - w) / GRID_STEP).floor().max(0.0)) as usize;
    let i1 = ((((c + w) / GRID_STEP).ceil()) as usize).min(n - 1);
    for i in i0..i1 {
        let (down, up) = hat_pair(xs[i] - x, xs[i + 1] - x, mu, sd);
        acc += down * v[i] + up * v[i + 1];
    }
    acc
}

/// Same expectation for every grid point at once. Interior intervals depend
/// only on the offset between interval and grid point, so their weights are
/// computed once.
fn expect_grid(mu: f64, sd: f64, xs: &[f64], v: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let span = ((WINDOW_SDS * sd + mu.abs()) / GRID_STEP).ceil() as isize + 1;
    let weights: Vec<(f64, f64)> = (-span..=span)
        .map(|o| hat_pair(o as f64 * GRID_STEP, (o + 1) as f64 * GRID_STEP, mu, sd))
        .collect();
    (0..n)
        .map(|j| {
            let x = xs[j];
            let mut acc = normal_cdf((0.0 - x - mu) / sd) * v[0] + (1.0 - normal_cdf((MAX_X - x - mu) / sd)) * v[n - 1];
            let ilo = (j as isize - span).max(0) as usize;
            let ihi = ((j as isize + span) as usize).min(n - 1);
            for i in ilo..ihi {
                let (down, up) = weights[(i as isize - j as isize + span) as usize];
                acc += down * v[i] + up * v[i + 1];
            }
            acc
        })
        .collect()
}

fn check(league: &League, ctx: &TruthContext) -> Result<()> {
    let n = league.n_teams();
    for (what, idx) in [("attack", ctx.attack), ("defense", ctx.defense)] {
        if idx >= n {
            return Err(Error::OutOfRange {
                what,
                index: idx,
                size: n,
            });
        }
    }
    if !(1..=6).contains(&ctx.tackle_number) {
        return Err(Error::invalid(
            "tackle_number",
            format!("{} not in 1..=6", ctx.tackle_number),
        ));
    }
    if !(ctx.pos_x.is_finite() && (0.0..=100.0).contains(&ctx.pos_x)) {
        return Err(Error::invalid("pos_x", format!("{} not in [0, 100]", ctx.pos_x)));
    }
    if !(ctx.time_remaining.is_finite() && ctx.time_remaining > 0.0) {
        return Err(Error::invalid("time_remaining", "must be positive"));
    }
    Ok(())
}

/// Exact try-on-tackle, try-in-set and policy probabilities for a context.
pub fn ground_truth(league: &League, ctx: &TruthContext) -> Result<GroundTruth> {
    check(league, ctx)?;
    let (a, d, t0) = (ctx.attack, ctx.defense, ctx.tackle_number);
    let step = league.spec.seconds_per_tackle;
    let score = ctx.score_diff as f64;
    let time_at = |t: u8| ctx.time_remaining - step * (t - t0) as f64;

    let last = |x: f64, time: f64| {
        let pol = league.policy(a, x, score, time);
        pol[0] * league.try_prob(a, d, 6, x) + pol[1] * league.kick_try_prob(a, d, x)
    };
    let decision = league.policy(a, ctx.pos_x, score, ctx.time_remaining);

    if t0 == 6 {
        let p = last(ctx.pos_x, ctx.time_remaining);
        return Ok(GroundTruth {
            ex_try_tackle: p,
            ex_try_set: p,
            decision,
        });
    }

    let p0 = league.try_prob(a, d, t0, ctx.pos_x);
    // deepest tackle of this set that the clock still allows
    let mut deepest = t0;
    while deepest < 6 && time_at(deepest + 1) > 0.0 {
        deepest += 1;
    }
    if deepest == t0 {
        return Ok(GroundTruth {
            ex_try_tackle: p0,
            ex_try_set: p0,
            decision,
        });
    }

    let xs = grid();
    let mut v: Vec<f64> = if deepest == 6 {
        xs.iter().map(|&x| last(x, time_at(6))).collect()
    } else {
        xs.iter().map(|&x| league.try_prob(a, d, deepest, x)).collect()
    };
    for t in (t0 + 1..deepest).rev() {
        let (mu, sd) = league.gain_params(a, d, t);
        let cont = expect_grid(mu, sd, &xs, &v);
        v = xs
            .iter()
            .zip(cont)
            .map(|(&x, c)| {
                let p = league.try_prob(a, d, t, x);
                p + (1.0 - p) * c
            })
            .collect();
    }
    let (mu, sd) = league.gain_params(a, d, t0);
    let cont = expect_at(ctx.pos_x, mu, sd, &xs, &v);
    Ok(GroundTruth {
        ex_try_tackle: p0,
        ex_try_set: p0 + (1.0 - p0) * cont,
        decision,
    })
}
