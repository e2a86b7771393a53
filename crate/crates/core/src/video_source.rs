//! Per-chunk rate-QP and PSNR-QP curves.
//!
//! A chunk's curves are either synthesized (exponential rate decay in QP,
//! affine PSNR with a floor, one lognormal scale per chunk) or read from a
//! measured trace file.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const QP_LEVELS: usize = 52;

/// H.264 quantization parameter, 0..=51.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Qp(u8);

impl Qp {
    pub const MIN: Qp = Qp(0);
    pub const MAX: Qp = Qp(51);

    pub fn new(value: u8) -> Option<Qp> {
        (value <= Self::MAX.0).then_some(Qp(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn saturating_add(self, k: u8) -> Qp {
        Qp(self.0.saturating_add(k).min(Self::MAX.0))
    }

    pub fn saturating_sub(self, k: u8) -> Qp {
        Qp(self.0.saturating_sub(k))
    }

    pub fn all() -> impl DoubleEndedIterator<Item = Qp> + ExactSizeIterator {
        (0..=Self::MAX.0).map(Qp)
    }
}

impl fmt::Display for Qp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRateProfile<T> {
    chunk_id: usize,
    duration_s: T,
    rate_curve: [T; QP_LEVELS],
    psnr_curve: [T; QP_LEVELS],
}

/// Which curve invariant a profile violates, with the first offending QP.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileViolation {
    Duration,
    NonPositiveRate(usize),
    RateIncreases(usize),
    NonFinitePsnr(usize),
    PsnrIncreases(usize),
}

impl fmt::Display for ProfileViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileViolation::Duration => write!(f, "duration must be finite and > 0"),
            ProfileViolation::NonPositiveRate(q) => write!(f, "rate at QP {q} is not > 0"),
            ProfileViolation::RateIncreases(q) => {
                write!(f, "rate at QP {q} exceeds rate at QP {}", q - 1)
            }
            ProfileViolation::NonFinitePsnr(q) => write!(f, "PSNR at QP {q} is not finite"),
            ProfileViolation::PsnrIncreases(q) => {
                write!(f, "PSNR at QP {q} exceeds PSNR at QP {}", q - 1)
            }
        }
    }
}

fn check_curves<T: Real>(
    duration_s: T,
    rate: &[T; QP_LEVELS],
    psnr: &[T; QP_LEVELS],
) -> Result<(), ProfileViolation> {
    if !(duration_s > T::zero() && duration_s.is_finite()) {
        return Err(ProfileViolation::Duration);
    }
    for q in 0..QP_LEVELS {
        if !(rate[q] > T::zero() && rate[q].is_finite()) {
            return Err(ProfileViolation::NonPositiveRate(q));
        }
        if q > 0 && rate[q] > rate[q - 1] {
            return Err(ProfileViolation::RateIncreases(q));
        }
    }
    for q in 0..QP_LEVELS {
        if !psnr[q].is_finite() {
            return Err(ProfileViolation::NonFinitePsnr(q));
        }
        if q > 0 && psnr[q] > psnr[q - 1] {
            return Err(ProfileViolation::PsnrIncreases(q));
        }
    }
    Ok(())
}

impl<T: Real> ChunkRateProfile<T> {
    pub fn new(
        chunk_id: usize,
        duration_s: T,
        rate_curve: [T; QP_LEVELS],
        psnr_curve: [T; QP_LEVELS],
    ) -> Result<Self> {
        check_curves(duration_s, &rate_curve, &psnr_curve)
            .map_err(|v| Error::param(format!("profile[{chunk_id}]"), v.to_string()))?;
        Ok(Self {
            chunk_id,
            duration_s,
            rate_curve,
            psnr_curve,
        })
    }

    pub fn chunk_id(&self) -> usize {
        self.chunk_id
    }

    pub fn duration_s(&self) -> T {
        self.duration_s
    }

    pub fn rate(&self, qp: Qp) -> T {
        self.rate_curve[qp.index()]
    }

    pub fn psnr(&self, qp: Qp) -> T {
        self.psnr_curve[qp.index()]
    }

    pub fn rate_curve(&self) -> &[T; QP_LEVELS] {
        &self.rate_curve
    }

    pub fn psnr_curve(&self) -> &[T; QP_LEVELS] {
        &self.psnr_curve
    }
}

/// Parameters of the synthetic source. Rates are
/// `S_c * exp(base_log_rate - decay * qp)` with `S_c` lognormal of mean 1
/// and coefficient of variation `chunk_scale_cv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSourceParams<T> {
    pub base_log_rate: T,
    pub decay: T,
    pub chunk_scale_cv: T,
    pub psnr_intercept: T,
    pub psnr_slope: T,
    pub psnr_floor: T,
    pub fps: T,
    pub frames_per_chunk: u32,
}

impl<T: Real> Default for SyntheticSourceParams<T> {
    fn default() -> Self {
        Self {
            // 80 Mbit/s at QP 0, halving every 5 QP steps.
            base_log_rate: T::lit(8.0e7_f64.ln()),
            decay: T::lit(std::f64::consts::LN_2 * 2.0 / 10.0),
            chunk_scale_cv: T::lit(0.3),
            psnr_intercept: T::lit(54.0),
            psnr_slope: T::lit(0.6),
            psnr_floor: T::lit(20.0),
            fps: T::lit(25.0),
            frames_per_chunk: 8,
        }
    }
}

impl<T: Real> SyntheticSourceParams<T> {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("source.base_log_rate", self.base_log_rate),
            ("source.psnr_intercept", self.psnr_intercept),
            ("source.psnr_floor", self.psnr_floor),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        let positive = [
            ("source.decay", self.decay),
            ("source.psnr_slope", self.psnr_slope),
            ("source.fps", self.fps),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.chunk_scale_cv >= T::zero() && self.chunk_scale_cv.is_finite()) {
            return Err(Error::param("source.chunk_scale_cv", "must be >= 0"));
        }
        if self.frames_per_chunk == 0 {
            return Err(Error::param("source.frames_per_chunk", "must be >= 1"));
        }
        let top = self.base_log_rate.as_f64().exp();
        let bottom = (self.base_log_rate - self.decay * T::lit(51.0))
            .as_f64()
            .exp();
        if !(top.is_finite() && bottom > 0.0) {
            return Err(Error::param(
                "source.base_log_rate",
                "rate curve overflows or underflows",
            ));
        }
        Ok(())
    }

    pub fn chunk_duration(&self) -> T {
        T::lit(f64::from(self.frames_per_chunk)) / self.fps
    }

    /// Nominal (unit-scale) rate at `qp`.
    pub fn nominal_rate(&self, qp: Qp) -> T {
        (self.base_log_rate - self.decay * T::lit(f64::from(qp.value()))).exp()
    }
}

pub fn synth_chunk_profile<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    params: &SyntheticSourceParams<T>,
    chunk_id: usize,
) -> Result<ChunkRateProfile<T>> {
    params.validate()?;
    let cv = params.chunk_scale_cv.as_f64();
    let sigma2 = cv.mul_add(cv, 1.0).ln();
    let z: f64 = rng.sample(StandardNormal);
    let scale = T::lit((sigma2.sqrt() * z - sigma2 / 2.0).exp());

    let mut rate = [T::zero(); QP_LEVELS];
    let mut psnr = [T::zero(); QP_LEVELS];
    for qp in Qp::all() {
        let q = T::lit(f64::from(qp.value()));
        rate[qp.index()] = scale * params.nominal_rate(qp);
        psnr[qp.index()] = params
            .psnr_floor
            .max(params.psnr_intercept - params.psnr_slope * q);
    }
    ChunkRateProfile::new(chunk_id, params.chunk_duration(), rate, psnr)
}

/// Peak signal-to-noise ratio in dB. A zero MSE returns `+inf`.
pub fn psnr_from_mse<T: Real>(max_val: T, mse: T) -> Result<T> {
    if max_val.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::param(
            "max_val",
            format!("must be > 0, got {max_val}"),
        ));
    }
    if mse < T::zero() || mse.is_nan() {
        return Err(Error::param("mse", format!("must be >= 0, got {mse}")));
    }
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (max_val * max_val / mse).log10())
}

pub const TRACE_HEADER: &str = "chunk_id,duration_s,qp,rate_bps,psnr_db";
const TRACE_COLUMNS: [&str; 5] = ["chunk_id", "duration_s", "qp", "rate_bps", "psnr_db"];

pub fn write_trace<T: Real, W: Write>(mut out: W, profiles: &[ChunkRateProfile<T>]) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for p in profiles {
        for qp in Qp::all() {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.chunk_id,
                p.duration_s,
                qp,
                p.rate(qp),
                p.psnr(qp)
            )?;
        }
    }
    Ok(())
}

pub fn load_trace<T: Real>(path: impl AsRef<Path>) -> Result<Vec<ChunkRateProfile<T>>> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file))
}

/// Parses the trace format. Lines starting with `#` are ignored. Errors
/// name the 1-based file line and the offending column.
pub fn read_trace<T: Real, R: Read>(input: R) -> Result<Vec<ChunkRateProfile<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .from_reader(input);

    let header_err = |reason: String| Error::Trace {
        line: 1,
        column: "header".into(),
        reason,
    };
    let headers = reader
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .clone();
    if headers.iter().ne(TRACE_COLUMNS.iter().copied()) {
        return Err(header_err(format!("expected `{TRACE_HEADER}`")));
    }

    struct Block<T> {
        chunk_id: usize,
        duration: T,
        rate: [T; QP_LEVELS],
        psnr: [T; QP_LEVELS],
        lines: [u64; QP_LEVELS],
        filled: usize,
    }

    fn finish<T: Real>(b: Block<T>, out: &mut Vec<ChunkRateProfile<T>>) -> Result<()> {
        if let Err(v) = check_curves(b.duration, &b.rate, &b.psnr) {
            let (q, column) = match v {
                ProfileViolation::Duration => (0, "duration_s"),
                ProfileViolation::NonPositiveRate(q) | ProfileViolation::RateIncreases(q) => {
                    (q, "rate_bps")
                }
                ProfileViolation::NonFinitePsnr(q) | ProfileViolation::PsnrIncreases(q) => {
                    (q, "psnr_db")
                }
            };
            return Err(Error::Trace {
                line: b.lines[q],
                column: column.into(),
                reason: v.to_string(),
            });
        }
        out.push(ChunkRateProfile {
            chunk_id: b.chunk_id,
            duration_s: b.duration,
            rate_curve: b.rate,
            psnr_curve: b.psnr,
        });
        Ok(())
    }

    let mut profiles = Vec::new();
    let mut block: Option<Block<T>> = None;
    let mut last_line = 1;

    for record in reader.records() {
        let record = record.map_err(|e| Error::Trace {
            line: e.position().map_or(0, |p| p.line()),
            column: "*".into(),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        last_line = line;
        let err = |column: &str, reason: String| Error::Trace {
            line,
            column: column.into(),
            reason,
        };
        if record.len() != TRACE_COLUMNS.len() {
            return Err(err(
                "*",
                format!(
                    "expected {} fields, found {}",
                    TRACE_COLUMNS.len(),
                    record.len()
                ),
            ));
        }
        let chunk_id: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| err("chunk_id", format!("not an index: `{}`", &record[0])))?;
        let num = |idx: usize| -> Result<T> {
            record[idx].trim().parse::<T>().map_err(|_| {
                err(
                    TRACE_COLUMNS[idx],
                    format!("not a number: `{}`", &record[idx]),
                )
            })
        };
        let duration = num(1)?;
        let qp: u8 = record[2]
            .trim()
            .parse()
            .map_err(|_| err("qp", format!("not a QP: `{}`", &record[2])))?;
        let rate = num(3)?;
        let psnr = num(4)?;

        if block.as_ref().is_some_and(|b| b.filled == QP_LEVELS) {
            finish(block.take().expect("block present"), &mut profiles)?;
        }
        let b = match block.as_mut() {
            None => {
                if let Some(prev) = profiles.last() {
                    if chunk_id <= prev.chunk_id {
                        return Err(err(
                            "chunk_id",
                            format!("chunk {chunk_id} out of order after {}", prev.chunk_id),
                        ));
                    }
                }
                block.insert(Block {
                    chunk_id,
                    duration,
                    rate: [T::zero(); QP_LEVELS],
                    psnr: [T::zero(); QP_LEVELS],
                    lines: [0; QP_LEVELS],
                    filled: 0,
                })
            }
            Some(b) => {
                if chunk_id != b.chunk_id {
                    return Err(err(
                        "qp",
                        format!(
                            "chunk {} ends after {} QP rows; all {QP_LEVELS} are required",
                            b.chunk_id, b.filled
                        ),
                    ));
                }
                if duration != b.duration {
                    return Err(err("duration_s", "duration changes within a chunk".into()));
                }
                b
            }
        };
        if usize::from(qp) != b.filled {
            return Err(err("qp", format!("expected QP {}, found {qp}", b.filled)));
        }
        b.rate[b.filled] = rate;
        b.psnr[b.filled] = psnr;
        b.lines[b.filled] = line;
        b.filled += 1;
    }

    match block {
        Some(b) if b.filled == QP_LEVELS => finish(b, &mut profiles)?,
        Some(b) => {
            return Err(Error::Trace {
                line: last_line,
                column: "qp".into(),
                reason: format!(
                    "chunk {} ends after {} QP rows; all {QP_LEVELS} are required",
                    b.chunk_id, b.filled
                ),
            })
        }
        None => {}
    }
    Ok(profiles)
}
