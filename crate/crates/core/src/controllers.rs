//! QP selection policies.
//!
//! * [`oracle_qp`]: exact per-chunk rate control, smallest QP whose encoded
//!   rate fits the channel budget.
//! * [`noisy_predict_qp`]: a learned predictor stand-in that undershoots the
//!   oracle QP with calibrated probabilities; pair with
//!   [`apply_safety_offset`].
//! * DASH: one ladder level held per segment, picked from a harmonic-mean
//!   throughput estimate.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::video_source::{ChunkRateProfile, Qp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerDecision<T> {
    pub qp: Qp,
    pub encoded_bitrate: T,
    pub budget_bps: T,
    pub safety_offset_applied: u8,
    /// Some QP met the budget for this chunk.
    pub feasible: bool,
}

impl<T: Real> ControllerDecision<T> {
    pub fn is_compliant(&self) -> bool {
        self.encoded_bitrate <= self.budget_bps
    }

    /// Decision at an externally fixed QP (e.g. a DASH level).
    pub fn fixed(profile: &ChunkRateProfile<T>, qp: Qp, budget_bps: T) -> Self {
        Self {
            qp,
            encoded_bitrate: profile.rate(qp),
            budget_bps,
            safety_offset_applied: 0,
            feasible: profile.rate(Qp::MAX) <= budget_bps,
        }
    }
}

/// Smallest QP with `rate <= budget`; QP 51 flagged infeasible otherwise.
pub fn oracle_qp<T: Real>(profile: &ChunkRateProfile<T>, budget_bps: T) -> ControllerDecision<T> {
    // The rate curve is non-increasing, so the qualifying QPs form a suffix.
    let first = profile.rate_curve().partition_point(|&r| r > budget_bps);
    let (qp, feasible) = match u8::try_from(first).ok().and_then(Qp::new) {
        Some(qp) => (qp, true),
        None => (Qp::MAX, false),
    };
    ControllerDecision {
        qp,
        encoded_bitrate: profile.rate(qp),
        budget_bps,
        safety_offset_applied: 0,
        feasible,
    }
}

pub fn apply_safety_offset<T: Real>(
    decision: ControllerDecision<T>,
    k: u8,
    profile: &ChunkRateProfile<T>,
) -> ControllerDecision<T> {
    let qp = decision.qp.saturating_add(k);
    ControllerDecision {
        qp,
        encoded_bitrate: profile.rate(qp),
        safety_offset_applied: qp.value() - decision.qp.value(),
        ..decision
    }
}

/// Distribution of predictor undershoot: exact, one, two or three QP steps
/// below the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorErrorModel {
    pub p_exact: f64,
    pub p_minus1: f64,
    pub p_minus2: f64,
    pub p_tail: f64,
}

impl Default for PredictorErrorModel {
    /// Successive differences of cumulative accuracies 95.7%, 99.12%, 99.87%.
    fn default() -> Self {
        Self {
            p_exact: 0.957,
            p_minus1: 0.0342,
            p_minus2: 0.0075,
            p_tail: 0.0013,
        }
    }
}

impl PredictorErrorModel {
    pub const EXACT: Self = Self {
        p_exact: 1.0,
        p_minus1: 0.0,
        p_minus2: 0.0,
        p_tail: 0.0,
    };

    pub fn new(p_exact: f64, p_minus1: f64, p_minus2: f64, p_tail: f64) -> Result<Self> {
        let m = Self {
            p_exact,
            p_minus1,
            p_minus2,
            p_tail,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ps = self.probabilities();
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param(
                "predictor.error_model",
                format!("probabilities must lie in [0, 1], got {ps:?}"),
            ));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "predictor.error_model",
                format!("probabilities must sum to 1, got {sum}"),
            ));
        }
        Ok(())
    }

    pub fn probabilities(&self) -> [f64; 4] {
        [self.p_exact, self.p_minus1, self.p_minus2, self.p_tail]
    }

    /// Undershoot in QP steps for a uniform draw `u` in [0, 1).
    pub fn undershoot(&self, u: f64) -> u8 {
        let mut acc = 0.0;
        for (steps, p) in self.probabilities().into_iter().enumerate().take(3) {
            acc += p;
            if u < acc {
                return steps as u8;
            }
        }
        3
    }
}

pub fn noisy_predict_qp<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    profile: &ChunkRateProfile<T>,
    budget_bps: T,
    error_model: &PredictorErrorModel,
) -> ControllerDecision<T> {
    let oracle = oracle_qp(profile, budget_bps);
    let u: f64 = rng.random();
    let qp = oracle.qp.saturating_sub(error_model.undershoot(u));
    ControllerDecision {
        qp,
        encoded_bitrate: profile.rate(qp),
        ..oracle
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DashLevel<T> {
    pub qp: Qp,
    /// Mean encoded bitrate of this level over the content.
    pub average_bps: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DashConfig<T> {
    pub ladder: Vec<DashLevel<T>>,
    pub segment_chunks: usize,
    pub estimator_window: usize,
}

impl<T: Real> DashConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::param("dash.ladder_qp", "ladder is empty"));
        }
        if self.ladder.windows(2).any(|w| {
            w[0].average_bps.partial_cmp(&w[1].average_bps) != Some(std::cmp::Ordering::Less)
        }) {
            return Err(Error::param(
                "dash.ladder_qp",
                "level average bitrates must be strictly increasing",
            ));
        }
        if self.segment_chunks == 0 {
            return Err(Error::param("dash.segment_chunks", "must be >= 1"));
        }
        if self.estimator_window == 0 {
            return Err(Error::param("dash.estimator_window", "must be >= 1"));
        }
        Ok(())
    }
}

/// Bounded FIFO of per-segment throughput observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputEstimator<T> {
    window: usize,
    observations: VecDeque<T>,
}

impl<T: Real> ThroughputEstimator<T> {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            observations: VecDeque::with_capacity(window.max(1)),
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = T> + '_ {
        self.observations.iter().copied()
    }

    pub fn harmonic_mean(&self) -> Option<T> {
        if self.observations.is_empty() {
            return None;
        }
        let n = T::lit(self.observations.len() as f64);
        let inv: T = self.observations.iter().map(|&x| x.recip()).sum();
        Some(n / inv)
    }
}

pub fn update_throughput_estimate<T: Real>(
    mut state: ThroughputEstimator<T>,
    delivered_bits: T,
    elapsed_s: T,
) -> ThroughputEstimator<T> {
    debug_assert!(elapsed_s > T::zero());
    if state.observations.len() == state.window {
        state.observations.pop_front();
    }
    state.observations.push_back(delivered_bits / elapsed_s);
    state
}

/// Highest level whose average fits under the estimate, or level 0.
pub fn dash_select_level<T: Real>(state: &ThroughputEstimator<T>, config: &DashConfig<T>) -> usize {
    let Some(estimate) = state.harmonic_mean() else {
        return 0;
    };
    config
        .ladder
        .iter()
        .rposition(|level| level.average_bps <= estimate)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};
    use crate::video_source::{synth_chunk_profile, SyntheticSourceParams, QP_LEVELS};
    use proptest::prelude::*;
    use rand::Rng;

    fn profile(seed: u64) -> ChunkRateProfile<f64> {
        let mut r = rng::chunk_rng(seed, Stream::Source, 0);
        synth_chunk_profile(&mut r, &SyntheticSourceParams::default(), 0).unwrap()
    }

    fn brute_force(p: &ChunkRateProfile<f64>, budget: f64) -> (u8, bool) {
        for q in 0..QP_LEVELS {
            if p.rate_curve()[q] <= budget {
                return (q as u8, true);
            }
        }
        (51, false)
    }

    #[test]
    fn unconstrained_budget_picks_qp0() {
        let p = profile(1);
        let d = oracle_qp(&p, p.rate(Qp::MIN));
        assert_eq!(d.qp, Qp::MIN);
        assert!(d.feasible && d.is_compliant());
    }

    #[test]
    fn infeasible_budget_picks_qp51() {
        let p = profile(1);
        let d = oracle_qp(&p, p.rate(Qp::MAX) * 0.5);
        assert_eq!(d.qp, Qp::MAX);
        assert!(!d.feasible);
        assert_eq!(d.encoded_bitrate, p.rate(Qp::MAX));
    }

    #[test]
    fn offset_examples() {
        let p = profile(2);
        let at = |q| ControllerDecision::fixed(&p, Qp::new(q).unwrap(), 1.0e6);

        let clamped = apply_safety_offset(at(51), 2, &p);
        assert_eq!(clamped.qp, Qp::MAX);
        assert_eq!(clamped.safety_offset_applied, 0);

        let one = apply_safety_offset(at(20), 1, &p);
        assert_eq!(one.qp.value(), 21);
        assert_eq!(one.encoded_bitrate, p.rate(Qp::new(21).unwrap()));
        assert!(one.encoded_bitrate <= p.rate(Qp::new(20).unwrap()));
        assert_eq!(one.safety_offset_applied, 1);

        let d = at(33);
        assert_eq!(apply_safety_offset(d, 0, &p), d);

        let partial = apply_safety_offset(at(50), 3, &p);
        assert_eq!(partial.safety_offset_applied, 1);
    }

    #[test]
    fn error_model_validation() {
        assert!(PredictorErrorModel::default().validate().is_ok());
        assert!(PredictorErrorModel::new(0.5, 0.5, 0.1, 0.0).is_err());
        assert!(PredictorErrorModel::new(1.2, -0.2, 0.0, 0.0).is_err());
        let m = PredictorErrorModel::default();
        assert_eq!(m.undershoot(0.0), 0);
        assert_eq!(m.undershoot(0.9569), 0);
        assert_eq!(m.undershoot(0.9571), 1);
        assert_eq!(m.undershoot(0.995), 2);
        assert_eq!(m.undershoot(0.9999), 3);
    }

    #[test]
    fn compliance_tracks_cumulative_accuracy() {
        let model = PredictorErrorModel::default();
        let mut rng = rng::stream_rng(77, Stream::Predictor);
        let n = 100_000;
        let mut compliant = [0usize; 3];
        for i in 0..n {
            let p = profile(i as u64);
            // Budget spread over the interior of the curve, never below QP 51.
            let u: f64 = rng.random();
            let budget = p.rate(Qp::new(40).unwrap()) * (1.0 + 60.0 * u);
            let d = noisy_predict_qp(&mut rng, &p, budget, &model);
            for k in 0..3u8 {
                compliant[k as usize] += apply_safety_offset(d, k, &p).is_compliant() as usize;
            }
        }
        let f: Vec<f64> = compliant.iter().map(|&c| c as f64 / n as f64).collect();
        assert!((f[0] - 0.957).abs() < 0.01, "{f:?}");
        assert!((f[1] - 0.9912).abs() < 0.005, "{f:?}");
        assert!((f[2] - 0.9987).abs() < 0.003, "{f:?}");
    }

    fn ladder(avgs: &[f64]) -> DashConfig<f64> {
        DashConfig {
            ladder: avgs
                .iter()
                .enumerate()
                .map(|(i, &a)| DashLevel {
                    qp: Qp::new(40 - 5 * i as u8).unwrap(),
                    average_bps: a,
                })
                .collect(),
            segment_chunks: 31,
            estimator_window: 3,
        }
    }

    fn estimator(obs: &[f64]) -> ThroughputEstimator<f64> {
        obs.iter()
            .fold(ThroughputEstimator::new(obs.len().max(1)), |s, &x| {
                update_throughput_estimate(s, x, 1.0)
            })
    }

    #[test]
    fn dash_level_examples() {
        let cfg = ladder(&[1e6, 2e6, 4e6, 8e6, 16e6]);
        assert_eq!(dash_select_level(&ThroughputEstimator::new(3), &cfg), 0);
        assert_eq!(dash_select_level(&estimator(&[0.5e6]), &cfg), 0);
        assert_eq!(dash_select_level(&estimator(&[8e6]), &cfg), 3);
        assert_eq!(dash_select_level(&estimator(&[5e6]), &cfg), 2);
        assert_eq!(dash_select_level(&estimator(&[1e9]), &cfg), 4);
    }

    #[test]
    fn estimator_examples() {
        let s = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .fold(ThroughputEstimator::new(3), |s, &x| {
                update_throughput_estimate(s, x, 1.0)
            });
        assert_eq!(s.observations().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
        assert_eq!(estimator(&[7.0]).harmonic_mean(), Some(7.0));
        let hm = estimator(&[2.0, 6.0]).harmonic_mean().unwrap();
        assert!((hm - 3.0).abs() < 1e-12);
        let s = update_throughput_estimate(ThroughputEstimator::new(2), 640_000.0, 0.32);
        assert_eq!(s.harmonic_mean(), Some(2_000_000.0));
    }

    #[test]
    fn ladder_validation() {
        assert!(ladder(&[1.0, 2.0]).validate().is_ok());
        assert!(ladder(&[2.0, 2.0]).validate().is_err());
        assert!(ladder(&[]).validate().is_err());
        let mut c = ladder(&[1.0]);
        c.segment_chunks = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_precision_oracle() {
        let mut r = rng::chunk_rng(0, Stream::Source, 0);
        let p = synth_chunk_profile(&mut r, &SyntheticSourceParams::<f32>::default(), 0).unwrap();
        let d = oracle_qp(&p, 3.0e6_f32);
        assert!(d.feasible && d.is_compliant());
        assert!(p.rate(d.qp.saturating_sub(1)) > 3.0e6);
    }

    proptest! {
        #[test]
        fn oracle_matches_exhaustive_scan(seed in any::<u64>(), log_budget in 8.0f64..20.0) {
            let p = profile(seed);
            let budget = log_budget.exp();
            let d = oracle_qp(&p, budget);
            prop_assert_eq!((d.qp.value(), d.feasible), brute_force(&p, budget));
            prop_assert_eq!(d.encoded_bitrate, p.rate(d.qp));
        }

        #[test]
        fn oracle_monotone_in_budget(seed in any::<u64>(), b in 8.0f64..20.0, db in 0.0f64..5.0) {
            let p = profile(seed);
            prop_assert!(oracle_qp(&p, (b + db).exp()).qp <= oracle_qp(&p, b.exp()).qp);
        }

        #[test]
        fn offset_never_raises_rate(seed in any::<u64>(), q in 0u8..=51, k in 0u8..10) {
            let p = profile(seed);
            let d = ControllerDecision::fixed(&p, Qp::new(q).unwrap(), 1e6);
            prop_assert!(apply_safety_offset(d, k, &p).encoded_bitrate <= d.encoded_bitrate);
        }

        #[test]
        fn exact_predictor_is_oracle(seed in any::<u64>(), b in 8.0f64..20.0) {
            let p = profile(seed);
            let mut rng = rng::stream_rng(seed, Stream::Predictor);
            let noisy = noisy_predict_qp(&mut rng, &p, b.exp(), &PredictorErrorModel::EXACT);
            prop_assert_eq!(apply_safety_offset(noisy, 0, &p), oracle_qp(&p, b.exp()));
        }

        #[test]
        fn dash_scale_invariant(
            base in prop::collection::vec(0.1f64..10.0, 1..6),
            obs in prop::collection::vec(0.1f64..50.0, 1..4),
            exp2 in -20i32..20,
        ) {
            let mut avgs = base.clone();
            avgs.iter_mut().fold(0.0, |acc, a| { *a += acc; *a });
            let c = 2f64.powi(exp2);
            let scaled: Vec<f64> = avgs.iter().map(|a| a * c).collect();
            let obs_scaled: Vec<f64> = obs.iter().map(|o| o * c).collect();
            prop_assert_eq!(
                dash_select_level(&estimator(&obs), &ladder(&avgs)),
                dash_select_level(&estimator(&obs_scaled), &ladder(&scaled))
            );
        }
    }
}
