//! Simulation runs and parameter sweeps.
//!
//! A run walks the chunks in order: obtain the chunk's rate profile, read
//! the chunk's channel sample, let the controller pick a QP against the
//! known budget, then packetize and transmit. Sweeps rescale the fading
//! variance so the mean channel rate hits each grid point and run every
//! (grid point, policy, seed) combination in parallel; rows come back in
//! grid order regardless of completion order.

use std::sync::{Arc, OnceLock};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{generate_trace, sample_fading, ChannelParams, ChannelTrace};
use crate::controllers::{
    apply_safety_offset, dash_select_level, noisy_predict_qp, oracle_qp,
    update_throughput_estimate, ControllerDecision, DashConfig, DashLevel, PredictorErrorModel,
    ThroughputEstimator,
};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::rng::{self, Stream};
use crate::scalar::{CompensatedSum, Real};
use crate::transport::{deliver_chunk, ChunkOutcome, TransportParams};
use crate::video_source::{synth_chunk_profile, ChunkRateProfile, Qp, SyntheticSourceParams};

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec<T> {
    Synthetic(SyntheticSourceParams<T>),
    Trace(Arc<Vec<ChunkRateProfile<T>>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DashSpec {
    pub ladder_qp: Vec<Qp>,
    pub segment_chunks: usize,
    pub estimator_window: usize,
}

impl Default for DashSpec {
    fn default() -> Self {
        Self {
            ladder_qp: [30, 25, 20, 15, 10]
                .map(|q| Qp::new(q).expect("valid QP"))
                .to_vec(),
            segment_chunks: 31,
            estimator_window: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Oracle {
        safety_offset: u8,
    },
    Predictor {
        error_model: PredictorErrorModel,
        safety_offset: u8,
    },
    Dash(DashSpec),
    /// Every chunk at one QP (a single pre-encoded DASH representation).
    FixedQp(Qp),
}

impl ControllerSpec {
    pub fn name(&self) -> String {
        match self {
            ControllerSpec::Oracle { .. } => "oracle".into(),
            ControllerSpec::Predictor { .. } => "predictor".into(),
            ControllerSpec::Dash(_) => "dash".into(),
            ControllerSpec::FixedQp(qp) => format!("fixed-qp{qp}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKnowledge<T> {
    /// The controller knows the current chunk's channel rate.
    Exact,
    /// The controller sees the previous chunk's rate; chunk 0 uses the prior.
    Delayed { prior_bps: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub seed: u64,
    pub n_chunks: usize,
    pub channel: ChannelParams<T>,
    pub source: SourceSpec<T>,
    pub controller: ControllerSpec,
    pub transport: TransportParams<T>,
    pub knowledge: ChannelKnowledge<T>,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            seed: 1,
            n_chunks: 10_000,
            channel: ChannelParams::default(),
            source: SourceSpec::Synthetic(SyntheticSourceParams::default()),
            controller: ControllerSpec::Predictor {
                error_model: PredictorErrorModel::default(),
                safety_offset: 1,
            },
            transport: TransportParams::default(),
            knowledge: ChannelKnowledge::Exact,
        }
    }
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_chunks == 0 {
            return Err(Error::config("n_chunks", "must be >= 1"));
        }
        self.channel.validate()?;
        self.transport.validate()?;
        match &self.source {
            SourceSpec::Synthetic(p) => p.validate()?,
            SourceSpec::Trace(profiles) if profiles.len() < self.n_chunks => {
                return Err(Error::config(
                    "n_chunks",
                    format!(
                        "trace holds {} chunks but {} were requested",
                        profiles.len(),
                        self.n_chunks
                    ),
                ))
            }
            SourceSpec::Trace(_) => {}
        }
        match &self.controller {
            ControllerSpec::Predictor { error_model, .. } => error_model.validate()?,
            ControllerSpec::Dash(d) => {
                if d.ladder_qp.is_empty() {
                    return Err(Error::config("dash.ladder_qp", "ladder is empty"));
                }
                if d.segment_chunks == 0 {
                    return Err(Error::config("dash.segment_chunks", "must be >= 1"));
                }
                if d.estimator_window == 0 {
                    return Err(Error::config("dash.estimator_window", "must be >= 1"));
                }
            }
            _ => {}
        }
        if let ChannelKnowledge::Delayed { prior_bps } = self.knowledge {
            if !(prior_bps >= T::zero() && prior_bps.is_finite()) {
                return Err(Error::config(
                    "knowledge.prior_bps",
                    "must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }
}

/// Random-access view of the configured source.
struct ProfileSource<'a, T> {
    spec: &'a SourceSpec<T>,
    seed: u64,
}

impl<'a, T: Real> ProfileSource<'a, T> {
    fn new(config: &'a SimConfig<T>) -> Self {
        Self {
            spec: &config.source,
            seed: config.seed,
        }
    }

    fn get(&self, index: usize) -> Result<ChunkRateProfile<T>> {
        match self.spec {
            SourceSpec::Synthetic(params) => {
                let mut rng = rng::chunk_rng(self.seed, Stream::Source, index as u64);
                synth_chunk_profile(&mut rng, params, index)
            }
            SourceSpec::Trace(profiles) => profiles
                .get(index)
                .cloned()
                .ok_or_else(|| Error::config("n_chunks", format!("trace has no chunk {index}"))),
        }
    }

    /// Mean encoded rate of each QP in `qps` over the first `n` chunks.
    fn average_rates(&self, qps: &[Qp], n: usize) -> Result<Vec<T>> {
        let mut sums = vec![CompensatedSum::new(); qps.len()];
        for i in 0..n {
            let p = self.get(i)?;
            for (sum, &qp) in sums.iter_mut().zip(qps) {
                sum.add(p.rate(qp));
            }
        }
        Ok(sums
            .into_iter()
            .map(|s| s.total() / T::lit(n as f64))
            .collect())
    }
}

/// Mean bitrate of each DASH ladder level over the configured content.
pub fn ladder_averages<T: Real>(config: &SimConfig<T>, ladder_qp: &[Qp]) -> Result<Vec<T>> {
    ProfileSource::new(config).average_rates(ladder_qp, config.n_chunks)
}

#[allow(clippy::large_enum_variant)]
enum ActiveController<T> {
    Oracle {
        safety_offset: u8,
    },
    Predictor {
        rng: ChaCha8Rng,
        error_model: PredictorErrorModel,
        safety_offset: u8,
    },
    Dash {
        config: DashConfig<T>,
        estimator: ThroughputEstimator<T>,
        level: usize,
        segment_bits: CompensatedSum<T>,
        segment_time: CompensatedSum<T>,
    },
    Fixed(Qp),
}

impl<T: Real> ActiveController<T> {
    fn new(config: &SimConfig<T>, source: &ProfileSource<'_, T>) -> Result<Self> {
        Ok(match &config.controller {
            ControllerSpec::Oracle { safety_offset } => ActiveController::Oracle {
                safety_offset: *safety_offset,
            },
            ControllerSpec::Predictor {
                error_model,
                safety_offset,
            } => ActiveController::Predictor {
                rng: rng::stream_rng(config.seed, Stream::Predictor),
                error_model: *error_model,
                safety_offset: *safety_offset,
            },
            ControllerSpec::Dash(spec) => {
                let averages = source.average_rates(&spec.ladder_qp, config.n_chunks)?;
                let dash = DashConfig {
                    ladder: spec
                        .ladder_qp
                        .iter()
                        .zip(averages)
                        .map(|(&qp, average_bps)| DashLevel { qp, average_bps })
                        .collect(),
                    segment_chunks: spec.segment_chunks,
                    estimator_window: spec.estimator_window,
                };
                dash.validate()?;
                ActiveController::Dash {
                    estimator: ThroughputEstimator::new(dash.estimator_window),
                    config: dash,
                    level: 0,
                    segment_bits: CompensatedSum::new(),
                    segment_time: CompensatedSum::new(),
                }
            }
            ControllerSpec::FixedQp(qp) => ActiveController::Fixed(*qp),
        })
    }

    fn decide(
        &mut self,
        index: usize,
        profile: &ChunkRateProfile<T>,
        budget_bps: T,
    ) -> ControllerDecision<T> {
        match self {
            ActiveController::Oracle { safety_offset } => {
                apply_safety_offset(oracle_qp(profile, budget_bps), *safety_offset, profile)
            }
            ActiveController::Predictor {
                rng,
                error_model,
                safety_offset,
            } => {
                let d = noisy_predict_qp(rng, profile, budget_bps, error_model);
                apply_safety_offset(d, *safety_offset, profile)
            }
            ActiveController::Dash {
                config,
                estimator,
                level,
                ..
            } => {
                if index.is_multiple_of(config.segment_chunks) {
                    *level = dash_select_level(estimator, config);
                }
                ControllerDecision::fixed(profile, config.ladder[*level].qp, budget_bps)
            }
            ActiveController::Fixed(qp) => ControllerDecision::fixed(profile, *qp, budget_bps),
        }
    }

    fn observe(&mut self, index: usize, outcome: &ChunkOutcome<T>) {
        if let ActiveController::Dash {
            config,
            estimator,
            segment_bits,
            segment_time,
            ..
        } = self
        {
            // The client fetches each segment as fast as the link allows, so
            // it measures the link's capacity over the segment.
            segment_bits.add(outcome.channel_rate * outcome.duration_s);
            segment_time.add(outcome.duration_s);
            if (index + 1).is_multiple_of(config.segment_chunks) {
                let state = std::mem::replace(estimator, ThroughputEstimator::new(1));
                *estimator =
                    update_throughput_estimate(state, segment_bits.total(), segment_time.total());
                *segment_bits = CompensatedSum::new();
                *segment_time = CompensatedSum::new();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<T> {
    pub outcomes: Vec<ChunkOutcome<T>>,
    pub decisions: Vec<ControllerDecision<T>>,
    pub metrics: MetricsReport<T>,
    pub config: SimConfig<T>,
    pub seed: u64,
}

impl<T: Real> RunResult<T> {
    /// Share of decisions whose encoded rate fits the budget they were made for.
    pub fn decision_compliance(&self) -> T {
        let ok = self.decisions.iter().filter(|d| d.is_compliant()).count();
        T::lit(ok as f64) / T::lit(self.decisions.len() as f64)
    }

    /// Outcomes of chunks whose budget admitted at least QP 51.
    pub fn feasible_outcomes(&self) -> Vec<ChunkOutcome<T>> {
        self.outcomes
            .iter()
            .zip(&self.decisions)
            .filter(|(_, d)| d.feasible)
            .map(|(o, _)| *o)
            .collect()
    }
}

pub fn run_scenario<T: Real>(config: &SimConfig<T>) -> Result<RunResult<T>> {
    config.validate()?;
    let source = ProfileSource::new(config);
    let channel = generate_trace(config.seed, &config.channel, config.n_chunks)?;
    let mut controller = ActiveController::new(config, &source)?;

    let mut outcomes = Vec::with_capacity(config.n_chunks);
    let mut decisions = Vec::with_capacity(config.n_chunks);
    for (i, sample) in channel.samples.iter().enumerate() {
        let profile = source.get(i)?;
        let budget = budget_for(&channel, i, config.knowledge);
        let decision = controller.decide(i, &profile, budget);
        let outcome = deliver_chunk(&profile, decision.qp, sample.rate_bps, &config.transport);
        controller.observe(i, &outcome);
        decisions.push(decision);
        outcomes.push(outcome);
    }

    Ok(RunResult {
        metrics: MetricsReport::from_outcomes(&outcomes)?,
        outcomes,
        decisions,
        config: config.clone(),
        seed: config.seed,
    })
}

fn budget_for<T: Real>(trace: &ChannelTrace<T>, index: usize, knowledge: ChannelKnowledge<T>) -> T {
    match knowledge {
        ChannelKnowledge::Exact => trace.samples[index].rate_bps,
        ChannelKnowledge::Delayed { prior_bps } => match index {
            0 => prior_bps,
            i => trace.samples[i - 1].rate_bps,
        },
    }
}

pub const CALIBRATION_SAMPLES: usize = 1_000_000;
/// Relative tolerance on the calibrated mean rate.
pub const CALIBRATION_TOLERANCE: f64 = 0.005;

/// Unit-variance fading power draws shared by every calibration.
fn calibration_gains() -> &'static [f64] {
    static GAINS: OnceLock<Vec<f64>> = OnceLock::new();
    GAINS.get_or_init(|| {
        let mut rng = rng::stream_rng(rng::CALIBRATION_SEED, Stream::Calibration);
        (0..CALIBRATION_SAMPLES)
            .map(|_| {
                sample_fading(&mut rng, 1.0_f64)
                    .expect("unit variance is valid")
                    .norm_sqr()
            })
            .collect()
    })
}

/// Monte-Carlo estimate of E[r(h)] for the given parameters.
pub fn mean_channel_rate<T: Real>(params: &ChannelParams<T>) -> Result<T> {
    params.validate()?;
    let scale = (params.snr_scale() * params.fading_variance).as_f64();
    Ok(T::lit(mean_rate_f64(params.bandwidth_hz.as_f64(), scale)))
}

fn mean_rate_f64(bandwidth: f64, snr_times_variance: f64) -> f64 {
    let gains = calibration_gains();
    let acc: CompensatedSum<f64> = gains
        .iter()
        .map(|&g| (snr_times_variance * g).ln_1p())
        .collect();
    bandwidth * acc.total() / (gains.len() as f64 * std::f64::consts::LN_2)
}

/// Fading variance for which the mean channel rate equals `target_bps`,
/// found by bisection on the log of the variance.
pub fn calibrate_fading_variance<T: Real>(params: &ChannelParams<T>, target_bps: T) -> Result<T> {
    params.validate()?;
    let target = target_bps.as_f64();
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::param(
            "avg_rate",
            format!("target mean rate must be finite and > 0, got {target_bps}"),
        ));
    }
    let bw = params.bandwidth_hz.as_f64();
    let snr = params.snr_scale().as_f64();
    let rate = |log_var: f64| mean_rate_f64(bw, snr * log_var.exp());

    let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
    while rate(hi) < target {
        hi += 4.0;
        if hi > 700.0 {
            return Err(Error::param(
                "avg_rate",
                format!("{target_bps} bit/s is unreachable"),
            ));
        }
    }
    while rate(lo) > target {
        lo -= 4.0;
        if lo < -700.0 {
            return Err(Error::param(
                "avg_rate",
                format!("{target_bps} bit/s is unreachable"),
            ));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let r = rate(mid);
        if (r / target - 1.0).abs() < 1e-10 {
            lo = mid;
            hi = mid;
            break;
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let log_var = 0.5 * (lo + hi);
    let achieved = rate(log_var);
    if (achieved / target - 1.0).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::param(
            "avg_rate",
            format!("calibration reached {achieved} bit/s for target {target}"),
        ));
    }
    let variance = T::lit(log_var.exp());
    if !(variance > T::zero() && variance.is_finite()) {
        return Err(Error::param(
            "avg_rate",
            format!("{target_bps} bit/s needs a fading variance outside the scalar range"),
        ));
    }
    Ok(variance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub avg_channel_bps: T,
    pub policy: String,
    pub seed: u64,
    pub metrics: MetricsReport<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMeanRow<T> {
    pub avg_channel_bps: T,
    pub policy: String,
    pub n_seeds: usize,
    pub metrics: MetricsReport<T>,
}

fn sorted_grid<T: Real>(grid: &[T]) -> Result<Vec<T>> {
    if grid.is_empty() {
        return Err(Error::param("sweep.grid_bps", "grid is empty"));
    }
    if grid.iter().any(|g| g.is_nan()) {
        return Err(Error::param("sweep.grid_bps", "grid contains NaN"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    Ok(sorted)
}

/// Runs every policy for every seed at every grid point. Rows are ordered
/// by grid value, then policy order, then seed order.
pub fn sweep<T: Real>(
    base: &SimConfig<T>,
    grid: &[T],
    seeds: &[u64],
    policies: &[ControllerSpec],
) -> Result<Vec<SweepRow<T>>> {
    let grid = sorted_grid(grid)?;
    if seeds.is_empty() {
        return Err(Error::param("sweep.seeds", "no seeds given"));
    }
    if policies.is_empty() {
        return Err(Error::param("sweep.policies", "no policies given"));
    }
    base.validate()?;
    let variances: Vec<T> = grid
        .par_iter()
        .map(|&target| calibrate_fading_variance(&base.channel, target))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, &ControllerSpec, u64)> = (0..grid.len())
        .flat_map(|g| {
            policies
                .iter()
                .flat_map(move |p| seeds.iter().map(move |&s| (g, p, s)))
        })
        .collect();

    jobs.par_iter()
        .map(|&(g, policy, seed)| {
            let config = SimConfig {
                seed,
                channel: ChannelParams {
                    fading_variance: variances[g],
                    ..base.channel
                },
                controller: policy.clone(),
                ..base.clone()
            };
            let result = run_scenario(&config)?;
            Ok(SweepRow {
                avg_channel_bps: grid[g],
                policy: policy.name(),
                seed,
                metrics: result.metrics,
            })
        })
        .collect()
}

/// Collapses consecutive rows sharing (grid value, policy) into seed means.
pub fn average_over_seeds<T: Real>(rows: &[SweepRow<T>]) -> Result<Vec<SweepMeanRow<T>>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (&rows[start].avg_channel_bps, &rows[start].policy);
        let end = rows[start..]
            .iter()
            .position(|r| (&r.avg_channel_bps, &r.policy) != key)
            .map_or(rows.len(), |off| start + off);
        let reports: Vec<_> = rows[start..end].iter().map(|r| r.metrics).collect();
        out.push(SweepMeanRow {
            avg_channel_bps: rows[start].avg_channel_bps,
            policy: rows[start].policy.clone(),
            n_seeds: end - start,
            metrics: MetricsReport::mean_of(&reports)?,
        });
        start = end;
    }
    Ok(out)
}

/// Seed-averaged metrics of the base controller at each grid point.
pub fn sweep_channel_bitrate<T: Real>(
    base: &SimConfig<T>,
    avg_rate_grid: &[T],
    seeds: &[u64],
) -> Result<Vec<(T, MetricsReport<T>)>> {
    let rows = sweep(
        base,
        avg_rate_grid,
        seeds,
        std::slice::from_ref(&base.controller),
    )?;
    Ok(average_over_seeds(&rows)?
        .into_iter()
        .map(|r| (r.avg_channel_bps, r.metrics))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig8Point<T> {
    pub label: String,
    pub chunk_success_rate: T,
    pub bandwidth_efficiency: T,
}

/// Success rate against bandwidth efficiency for the lowest, middle and
/// highest ladder levels and for `rtrc`, with the mean channel rate set to
/// the middle level's average bitrate.
pub fn fig8_scenario<T: Real>(
    config: &SimConfig<T>,
    dash: &DashSpec,
    rtrc: &ControllerSpec,
) -> Result<Vec<Fig8Point<T>>> {
    if dash.ladder_qp.len() < 3 {
        return Err(Error::config(
            "dash.ladder_qp",
            "at least 3 levels are required",
        ));
    }
    config.validate()?;
    let averages = ladder_averages(config, &dash.ladder_qp)?;
    let mid = dash.ladder_qp.len() / 2;
    let variance = calibrate_fading_variance(&config.channel, averages[mid])?;
    let calibrated = SimConfig {
        channel: ChannelParams {
            fading_variance: variance,
            ..config.channel
        },
        ..config.clone()
    };

    let last = dash.ladder_qp.len() - 1;
    let cases = [
        (
            "dash-low".to_string(),
            ControllerSpec::FixedQp(dash.ladder_qp[0]),
        ),
        (
            "dash-mid".to_string(),
            ControllerSpec::FixedQp(dash.ladder_qp[mid]),
        ),
        (
            "dash-high".to_string(),
            ControllerSpec::FixedQp(dash.ladder_qp[last]),
        ),
        (format!("rtrc-{}", rtrc.name()), rtrc.clone()),
    ];
    cases
        .into_par_iter()
        .map(|(label, controller)| {
            let result = run_scenario(&SimConfig {
                controller,
                ..calibrated.clone()
            })?;
            Ok(Fig8Point {
                label,
                chunk_success_rate: result.metrics.chunk_success_rate,
                bandwidth_efficiency: result.metrics.bandwidth_efficiency,
            })
        })
        .collect()
}
