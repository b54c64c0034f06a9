//! Queryable distributions derived from [`MixtureParams`].

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::MixtureParams;

const QUANTILE_MAX_ITER: usize = 200;
const BRACKET_SIGMAS: f64 = 10.0;

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    const NORM: f64 = 0.398_942_280_401_432_7;
    NORM * (-0.5 * z * z).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousDim {
    Meters,
    ScoreFor,
    ScoreAgainst,
}

impl ContinuousDim {
    pub fn index(self) -> usize {
        match self {
            ContinuousDim::Meters => 0,
            ContinuousDim::ScoreFor => 1,
            ContinuousDim::ScoreAgainst => 2,
        }
    }
}

impl std::str::FromStr for ContinuousDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meters" => Ok(ContinuousDim::Meters),
            "score_for" => Ok(ContinuousDim::ScoreFor),
            "score_against" => Ok(ContinuousDim::ScoreAgainst),
            other => Err(Error::invalid("dim", format!("unknown continuous dimension {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryDim {
    TryTackle,
    TrySet,
    Win,
}

impl BinaryDim {
    pub fn index(self) -> usize {
        match self {
            BinaryDim::TryTackle => 0,
            BinaryDim::TrySet => 1,
            BinaryDim::Win => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryDim::TryTackle => "try_tackle",
            BinaryDim::TrySet => "try_set",
            BinaryDim::Win => "win",
        }
    }
}

impl std::str::FromStr for BinaryDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "try_tackle" => Ok(BinaryDim::TryTackle),
            "try_set" => Ok(BinaryDim::TrySet),
            "win" => Ok(BinaryDim::Win),
            other => Err(Error::invalid("dim", format!("unknown binary dimension {other:?}"))),
        }
    }
}

/// One-dimensional Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl ScalarMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len() {
            return Err(Error::shape(
                "ScalarMixture",
                format!(
                    "{} weights, {} means, {} deviations",
                    weights.len(),
                    means.len(),
                    sds.len()
                ),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::invalid("weights", format!("sum to {total}")));
        }
        if sds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid(
                "components",
                "deviations must be positive and means finite",
            ));
        }
        Ok(Self { weights, means, sds })
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![sd])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| w * (s * s + (m - mean) * (m - mean)))
            .sum()
    }

    pub fn pdf(&self, v: f64) -> f64 {
        self.components().map(|(w, m, s)| w * normal_pdf((v - m) / s) / s).sum()
    }

    pub fn cdf(&self, v: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * normal_cdf((v - m) / s))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Bisection inverse of [`cdf`](Self::cdf) over a bracket reaching ten of
    /// the widest deviations past the extreme means.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid("q", format!("{q} not in (0, 1)")));
        }
        let (lo, hi) = self.bracket();
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..QUANTILE_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn percentile_of(&self, observed: f64) -> f64 {
        self.cdf(observed)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        self.means[k] + self.sds[k] * z
    }

    /// Distribution of `-X`.
    pub fn negated(&self) -> Self {
        Self {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| -m).collect(),
            sds: self.sds.clone(),
        }
    }

    fn bracket(&self) -> (f64, f64) {
        let max_sd = self.sds.iter().copied().fold(0.0, f64::max);
        let lo = self.means.iter().copied().fold(f64::INFINITY, f64::min) - BRACKET_SIGMAS * max_sd;
        let hi = self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max) + BRACKET_SIGMAS * max_sd;
        (lo, hi)
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((&w, &m), &s)| (w, m, s))
    }
}

pub fn marginal_continuous(mix: &MixtureParams, dim: ContinuousDim) -> Result<ScalarMixture> {
    let d = dim.index();
    ScalarMixture::new(
        mix.weights.clone(),
        mix.mu.iter().map(|m| m[d]).collect(),
        mix.sigma.iter().map(|s| s[d]).collect(),
    )
}

/// Final score differential (for − against), treating the two scores as
/// independent within each component.
pub fn marginal_score_diff(mix: &MixtureParams) -> Result<ScalarMixture> {
    ScalarMixture::new(
        mix.weights.clone(),
        mix.mu.iter().map(|m| m[1] - m[2]).collect(),
        mix.sigma.iter().map(|s| s[1].hypot(s[2])).collect(),
    )
}

/// Mixture-weighted probability of a binary outcome.
pub fn bernoulli_mean(mix: &MixtureParams, dim: BinaryDim) -> f64 {
    let d = dim.index();
    mix.weights.iter().zip(&mix.p).map(|(w, p)| w * p[d]).sum()
}

/// Mean and central quantiles of a scalar marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub mean: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

impl IntervalSummary {
    pub fn of(m: &ScalarMixture) -> Result<Self> {
        Ok(Self {
            mean: m.mean(),
            q10: m.quantile(0.1)?,
            q50: m.quantile(0.5)?,
            q90: m.quantile(0.9)?,
        })
    }
}

/// Everything the engine says about one tackle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub meters: IntervalSummary,
    pub score_for: IntervalSummary,
    pub score_against: IntervalSummary,
    pub score_diff: IntervalSummary,
    pub ex_try_tackle: f64,
    pub ex_try_set: f64,
    pub win_probability: f64,
}

impl StateSummary {
    pub fn of(mix: &MixtureParams) -> Result<Self> {
        Ok(Self {
            meters: IntervalSummary::of(&marginal_continuous(mix, ContinuousDim::Meters)?)?,
            score_for: IntervalSummary::of(&marginal_continuous(mix, ContinuousDim::ScoreFor)?)?,
            score_against: IntervalSummary::of(&marginal_continuous(mix, ContinuousDim::ScoreAgainst)?)?,
            score_diff: IntervalSummary::of(&marginal_score_diff(mix)?)?,
            ex_try_tackle: bernoulli_mean(mix, BinaryDim::TryTackle),
            ex_try_set: bernoulli_mean(mix, BinaryDim::TrySet),
            win_probability: bernoulli_mean(mix, BinaryDim::Win),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_component_mix() -> MixtureParams {
        MixtureParams {
            weights: vec![0.4, 0.6],
            mu: vec![[4.0, 22.0, 10.0], [9.0, 14.0, 18.0]],
            sigma: vec![[2.0, 3.0, 4.0], [5.0, 6.0, 2.5]],
            p: vec![[0.1, 0.3, 0.8], [0.02, 0.1, 0.3]],
        }
    }

    /// Composite Simpson over breakpoints at every component's mean ± j·σ.
    fn integrate(m: &ScalarMixture) -> f64 {
        let mut pts = Vec::new();
        for (mu, s) in m.means().iter().zip(m.sds()) {
            for j in -10..=10 {
                pts.push(mu + j as f64 * s);
            }
        }
        pts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = 32;
            let h = (b - a) / n as f64;
            let mut s = m.pdf(a) + m.pdf(b);
            for i in 1..n {
                s += m.pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            total += s * h / 3.0;
        }
        total
    }

    #[test]
    fn cdf_reference_points() {
        let n = ScalarMixture::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(n.cdf(0.0), 0.5, epsilon = 1e-15);
        assert_eq!(n.cdf(-1e6), 0.0);
        assert_eq!(n.cdf(1e6), 1.0);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-13);
    }

    #[test]
    fn quantile_reference_points() {
        let n = ScalarMixture::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(n.quantile(0.5).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(n.quantile(0.9).unwrap(), 1.281552, epsilon = 1e-6);
        assert!(n.quantile(0.0).is_err());
        assert!(n.quantile(1.0).is_err());
        assert!(n.quantile(f64::NAN).is_err());
    }

    #[test]
    fn marginal_of_single_component() {
        let mix = MixtureParams {
            weights: vec![1.0],
            mu: vec![[3.0, 20.0, 10.0]],
            sigma: vec![[2.0, 3.0, 4.0]],
            p: vec![[0.5; 3]],
        };
        let m = marginal_continuous(&mix, ContinuousDim::Meters).unwrap();
        assert_eq!(m, ScalarMixture::gaussian(3.0, 2.0).unwrap());
        let diff = marginal_score_diff(&mix).unwrap();
        assert_abs_diff_eq!(diff.means()[0], 10.0);
        assert_abs_diff_eq!(diff.sds()[0], 5.0, epsilon = 1e-15);
    }

    #[test]
    fn marginal_preserves_weights_and_mass() {
        let mix = two_component_mix();
        for dim in [
            ContinuousDim::Meters,
            ContinuousDim::ScoreFor,
            ContinuousDim::ScoreAgainst,
        ] {
            let m = marginal_continuous(&mix, dim).unwrap();
            assert_eq!(m.weights(), mix.weights.as_slice());
            assert_abs_diff_eq!(integrate(&m), 1.0, epsilon = 1e-3);
        }
        assert!("yards".parse::<ContinuousDim>().is_err());
        assert!("win".parse::<BinaryDim>().is_ok());
    }

    #[test]
    fn score_diff_symmetries() {
        let mix = MixtureParams {
            weights: vec![0.5, 0.5],
            mu: vec![[0.0, 20.0, 12.0], [0.0, 12.0, 20.0]],
            sigma: vec![[1.0, 3.0, 4.0], [1.0, 4.0, 3.0]],
            p: vec![[0.5; 3]; 2],
        };
        assert_abs_diff_eq!(marginal_score_diff(&mix).unwrap().mean(), 0.0);

        let mix = two_component_mix();
        let mut swapped = mix.clone();
        for (m, s) in swapped.mu.iter_mut().zip(swapped.sigma.iter_mut()) {
            m.swap(1, 2);
            s.swap(1, 2);
        }
        let a = marginal_score_diff(&mix).unwrap();
        let b = marginal_score_diff(&swapped).unwrap();
        assert_eq!(b, a.negated());
        let f = marginal_continuous(&mix, ContinuousDim::ScoreFor).unwrap().mean();
        let g = marginal_continuous(&mix, ContinuousDim::ScoreAgainst).unwrap().mean();
        assert_abs_diff_eq!(a.mean(), f - g, epsilon = 1e-12);
    }

    #[test]
    fn bernoulli_means() {
        let mut mix = MixtureParams {
            weights: vec![0.2; 5],
            mu: vec![[0.0; 3]; 5],
            sigma: vec![[1.0; 3]; 5],
            p: [0.1, 0.2, 0.3, 0.4, 0.5].iter().map(|&q| [q; 3]).collect(),
        };
        assert_abs_diff_eq!(bernoulli_mean(&mix, BinaryDim::TrySet), 0.3, epsilon = 1e-15);
        mix.p = vec![[0.37; 3]; 5];
        assert_abs_diff_eq!(bernoulli_mean(&mix, BinaryDim::Win), 0.37, epsilon = 1e-15);
    }

    #[test]
    fn bernoulli_mean_matches_sampling() {
        let mix = two_component_mix();
        let q = bernoulli_mean(&mix, BinaryDim::TrySet);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut hits = 0;
        for _ in 0..n {
            let k = if rng.random::<f64>() < mix.weights[0] { 0 } else { 1 };
            if rng.random::<f64>() < mix.p[k][1] {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let sd = (q * (1.0 - q) / n as f64).sqrt();
        assert!((freq - q).abs() < 3.0 * sd, "{freq} vs {q}");
    }

    #[test]
    fn cdf_matches_empirical_distribution() {
        let m = marginal_continuous(&two_component_mix(), ContinuousDim::Meters).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut xs = m.sample(&mut rng, 1_000_000);
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let sup = xs
            .iter()
            .enumerate()
            .step_by(97)
            .map(|(i, &x)| (m.cdf(x) - (i as f64 + 0.5) / n).abs())
            .fold(0.0, f64::max);
        assert!(sup < 0.005, "sup-norm {sup}");
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let m = ScalarMixture::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.mean(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let s = m.sample(&mut rng, n);
        let mean = s.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * m.variance().sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn narrow_component_concentrates() {
        let m = ScalarMixture::gaussian(7.0, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(m.sample(&mut rng, 1000).iter().all(|v| (v - 7.0).abs() < 0.01));
        assert_abs_diff_eq!(m.percentile_of(7.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn summary_orders_quantiles() {
        let s = StateSummary::of(&two_component_mix()).unwrap();
        for i in [s.meters, s.score_for, s.score_against, s.score_diff] {
            assert!(i.q10 <= i.q50 && i.q50 <= i.q90);
        }
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(
            w in 0.05f64..0.95,
            m1 in -20.0f64..20.0,
            m2 in -20.0f64..20.0,
            s1 in 0.01f64..10.0,
            s2 in 0.01f64..10.0,
            v in -30.0f64..30.0,
        ) {
            let m = ScalarMixture::new(vec![w, 1.0 - w], vec![m1, m2], vec![s1, s2]).unwrap();
            let p = m.cdf(v);
            // the inverse is only unique where the density is not negligible
            prop_assume!(p > 1e-6 && p < 1.0 - 1e-6 && m.pdf(v) > 1e-3);
            let back = m.quantile(p).unwrap();
            prop_assert!((back - v).abs() <= 1e-6, "{} vs {}", back, v);
            prop_assert!((m.cdf(back) - p).abs() <= 1e-9);
        }

        #[test]
        fn cdf_is_monotone(a in -50.0f64..50.0, d in 0.0f64..10.0) {
            let m = marginal_continuous(&two_component_mix(), ContinuousDim::ScoreFor).unwrap();
            prop_assert!(m.cdf(a) <= m.cdf(a + d));
        }
    }
}
