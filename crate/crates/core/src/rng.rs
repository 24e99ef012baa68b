//! Seedable randomness for tree sampling.
//!
//! Every tree draws from its own [`RngStream`], a ChaCha8 generator keyed by
//! the forest seed and selected onto an independent stream by the tree index.
//! The stream position is part of the tree snapshot, so training can resume
//! bit-identically after a save/load cycle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Source of the three kinds of draws used when growing a Mondrian tree.
///
/// [`RngStream`] is the production implementation. Tests inject scripted
/// draws through this trait to replay hand-worked examples.
pub trait SplitDraws {
    /// Draw from `Exp(rate)`. Callers guarantee `rate > 0` and finite.
    fn exponential(&mut self, rate: f64) -> f64;

    /// Draw an index with probability proportional to `weights`.
    /// Callers guarantee nonnegative weights with a positive sum.
    fn categorical(&mut self, weights: &[f64]) -> usize;

    /// Draw uniformly from `[lo, hi)`, or return `lo` when `lo == hi`.
    fn uniform(&mut self, lo: f64, hi: f64) -> f64;
}

/// A deterministic random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Standard uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Raw 64-bit draw, used to derive seeds for auxiliary streams.
    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.stream_id == other.stream_id
            && self.word_pos() == other.word_pos()
    }
}

impl SplitDraws for RngStream {
    fn exponential(&mut self, rate: f64) -> f64 {
        let e: f64 = self.rng.sample(Exp1);
        e / rate
    }

    fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = i;
                if target < acc {
                    return i;
                }
            }
        }
        // Rounding can leave `target` at or above the accumulated total.
        last_positive
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo >= hi {
            return lo;
        }
        let u = lo + (hi - lo) * self.rng.random::<f64>();
        if u < hi {
            u
        } else {
            hi.next_down().max(lo)
        }
    }
}

/// Serialized form of an [`RngStream`]: identity plus stream position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct RngState {
    seed: u64,
    stream_id: u64,
    word_pos: u128,
}

impl From<&RngStream> for RngState {
    fn from(rng: &RngStream) -> Self {
        Self {
            seed: rng.seed,
            stream_id: rng.stream_id,
            word_pos: rng.word_pos(),
        }
    }
}

impl From<RngState> for RngStream {
    fn from(state: RngState) -> Self {
        let mut rng = RngStream::new(state.seed, state.stream_id);
        rng.rng.set_word_pos(state.word_pos);
        rng
    }
}

impl Serialize for RngStream {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RngState::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RngStream {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        RngState::deserialize(deserializer).map(RngStream::from)
    }
}

/// Exponential draw with a `+inf` sentinel for a zero rate.
///
/// A zero rate arises when every point in a block shares the same
/// coordinates; the infinite waiting time makes the block a leaf.
pub fn sample_exponential<D: SplitDraws + ?Sized>(draws: &mut D, rate: f64) -> Result<f64> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(invalid(format!("exponential rate must be finite and >= 0, got {rate}")));
    }
    Ok(exponential_or_inf(draws, rate))
}

pub(crate) fn exponential_or_inf<D: SplitDraws + ?Sized>(draws: &mut D, rate: f64) -> f64 {
    if rate > 0.0 {
        draws.exponential(rate)
    } else {
        f64::INFINITY
    }
}

pub fn sample_categorical_proportional<D: SplitDraws + ?Sized>(
    draws: &mut D,
    weights: &[f64],
) -> Result<usize> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(invalid("categorical weights must be finite and nonnegative"));
    }
    if !weights.iter().any(|w| *w > 0.0) {
        return Err(invalid("categorical weights must contain a positive entry"));
    }
    Ok(draws.categorical(weights))
}

pub fn sample_uniform_interval<D: SplitDraws + ?Sized>(draws: &mut D, lo: f64, hi: f64) -> Result<f64> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("uniform interval bounds must be finite"));
    }
    if lo > hi {
        return Err(invalid(format!("empty interval [{lo}, {hi}]")));
    }
    Ok(draws.uniform(lo, hi))
}

/// `E[exp(-gamma * t)]` for `t ~ Exp(eta)` truncated to `[0, delta]`.
///
/// Closed form `eta/(eta+gamma) * (1 - e^{-(eta+gamma) delta}) / (1 - e^{-eta delta})`,
/// which reduces to `eta/(eta+gamma)` when `delta` is infinite.
pub fn expected_truncated_discount(eta: f64, gamma: f64, delta: f64) -> Result<f64> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid(format!("eta must be positive and finite, got {eta}")));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    Ok(truncated_discount(eta, gamma, delta))
}

pub(crate) fn truncated_discount(eta: f64, gamma: f64, delta: f64) -> f64 {
    let head = eta / (eta + gamma);
    if delta.is_infinite() {
        return head;
    }
    let num = -(-(eta + gamma) * delta).exp_m1();
    let den = -(-eta * delta).exp_m1();
    (head * num / den).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature, independent of the closed form.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        }
        fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            recurse(f, a, m, left, tol / 2.0, depth - 1) + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
        recurse(f, a, b, simpson(f, a, b), tol, 50)
    }

    fn quadrature_discount(eta: f64, gamma: f64, delta: f64) -> f64 {
        let f = |t: f64| (-gamma * t).exp() * eta * (-eta * t).exp();
        adaptive_simpson(&f, 0.0, delta, 1e-14) / (1.0 - (-eta * delta).exp())
    }

    #[test]
    fn same_stream_is_reproducible() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_f64().to_bits(), b.next_f64().to_bits());
        }
        let mut c = RngStream::new(7, 4);
        let same = (0..100).filter(|_| a.next_u64() == c.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn zero_rate_is_infinite() {
        let mut rng = RngStream::new(0, 0);
        let before = rng.word_pos();
        assert_eq!(sample_exponential(&mut rng, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(rng.word_pos(), before);
    }

    #[test]
    fn bad_exponential_rate() {
        let mut rng = RngStream::new(0, 0);
        assert!(sample_exponential(&mut rng, -1.0).is_err());
        assert!(sample_exponential(&mut rng, f64::INFINITY).is_err());
        assert!(sample_exponential(&mut rng, f64::NAN).is_err());
    }

    #[test]
    fn exponential_mean() {
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_exponential(&mut rng, 2.0).unwrap()).sum::<f64>() / n as f64;
        // sd of Exp(2) is 0.5
        let se = 0.5 / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn exponential_cdf_within_dkw_band() {
        let mut rng = RngStream::new(12, 1);
        let n = 100_000;
        let rate = 1.7;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_exponential(&mut rng, rate).unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        let alpha: f64 = 0.001;
        let eps = ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt();
        let mut worst: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let cdf = 1.0 - (-rate * x).exp();
            worst = worst.max((cdf - i as f64 / n as f64).abs());
            worst = worst.max((cdf - (i + 1) as f64 / n as f64).abs());
        }
        assert!(worst < eps, "sup deviation {worst} exceeds DKW band {eps}");
    }

    #[test]
    fn categorical_degenerate_and_errors() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..1000 {
            assert_eq!(sample_categorical_proportional(&mut rng, &[1.0, 0.0, 0.0]).unwrap(), 0);
            assert_eq!(sample_categorical_proportional(&mut rng, &[0.0, 0.0, 2.0]).unwrap(), 2);
        }
        assert!(sample_categorical_proportional(&mut rng, &[0.0, 0.0]).is_err());
        assert!(sample_categorical_proportional(&mut rng, &[1.0, -0.5]).is_err());
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = RngStream::new(2, 0);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| sample_categorical_proportional(&mut rng, &[1.0, 1.0]).unwrap() == 0)
            .count();
        let freq = zeros as f64 / n as f64;
        assert!((0.49..=0.51).contains(&freq), "{freq}");

        let zeros = (0..n)
            .filter(|_| sample_categorical_proportional(&mut rng, &[3.0, 1.0]).unwrap() == 0)
            .count();
        let freq = zeros as f64 / n as f64;
        let sigma = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((freq - 0.75).abs() < 3.0 * sigma, "{freq}");
    }

    #[test]
    fn uniform_interval() {
        let mut rng = RngStream::new(3, 0);
        assert_eq!(sample_uniform_interval(&mut rng, 0.5, 0.5).unwrap(), 0.5);
        assert!(sample_uniform_interval(&mut rng, 1.0, 0.0).is_err());
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = sample_uniform_interval(&mut rng, 0.0, 1.0).unwrap();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        let sigma = (1.0f64 / 12.0 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn uniform_on_tiny_interval_stays_below_hi() {
        let mut rng = RngStream::new(4, 0);
        let lo = 1.0;
        let hi = 1.0f64.next_up();
        for _ in 0..1000 {
            let u = rng.uniform(lo, hi);
            assert!(u >= lo && u < hi);
        }
    }

    #[test]
    fn discount_limits() {
        assert_eq!(expected_truncated_discount(1.0, 1.0, f64::INFINITY).unwrap(), 0.5);
        assert!((quadrature_discount(1.0, 1.0, 60.0) - 0.5).abs() < 1e-10);
        for &(eta, delta) in &[(0.3, 0.1), (2.0, 5.0), (7.0, f64::INFINITY)] {
            let d = expected_truncated_discount(eta, 0.0, delta).unwrap();
            assert!((d - 1.0).abs() < 1e-15);
            let d = expected_truncated_discount(eta, 1e-12, delta).unwrap();
            assert!((d - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn discount_matches_quadrature() {
        let closed = expected_truncated_discount(2.0, 3.0, 0.7).unwrap();
        let quad = quadrature_discount(2.0, 3.0, 0.7);
        assert!((closed - quad).abs() < 1e-10, "{closed} vs {quad}");

        for &(eta, gamma, delta) in &[(0.01, 20.0, 0.05), (5.0, 0.5, 3.0), (1e-3, 1e-3, 1e-3), (40.0, 20.0, 0.2)] {
            let closed = expected_truncated_discount(eta, gamma, delta).unwrap();
            let quad = quadrature_discount(eta, gamma, delta);
            assert!((closed - quad).abs() < 1e-9, "{eta} {gamma} {delta}: {closed} vs {quad}");
        }
    }

    #[test]
    fn discount_rejects_bad_eta() {
        assert!(expected_truncated_discount(0.0, 1.0, 1.0).is_err());
        assert!(expected_truncated_discount(-1.0, 1.0, 1.0).is_err());
        assert!(expected_truncated_discount(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn snapshot_state_resumes_stream() {
        let mut rng = RngStream::new(99, 5);
        for _ in 0..17 {
            rng.next_f64();
        }
        let state = RngState::from(&rng);
        let mut resumed = RngStream::from(state);
        assert_eq!(resumed, rng);
        for _ in 0..50 {
            assert_eq!(resumed.next_u64(), rng.next_u64());
        }
    }

    proptest::proptest! {
        #[test]
        fn discount_is_monotone_and_bounded(
            eta in 1e-3f64..50.0,
            gamma in 1e-3f64..50.0,
            delta in 1e-3f64..20.0,
        ) {
            let d = expected_truncated_discount(eta, gamma, delta).unwrap();
            proptest::prop_assert!(d > 0.0 && d <= 1.0);
            let more_gamma = expected_truncated_discount(eta, gamma * 1.5, delta).unwrap();
            let more_delta = expected_truncated_discount(eta, gamma, delta * 1.5).unwrap();
            proptest::prop_assert!(more_gamma <= d + 1e-15);
            proptest::prop_assert!(more_delta <= d + 1e-15);
            let inf = expected_truncated_discount(eta, gamma, f64::INFINITY).unwrap();
            proptest::prop_assert!(inf <= more_delta + 1e-15);
        }
    }
}
