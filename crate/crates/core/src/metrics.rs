//! Aggregate quality and delivery metrics over chunk outcomes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Real};
use crate::transport::ChunkOutcome;
use crate::video_source::{ChunkRateProfile, Qp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport<T> {
    pub mean_psnr: T,
    pub packet_drop_rate: T,
    pub chunk_success_rate: T,
    pub bandwidth_efficiency: T,
    pub n_chunks: usize,
}

fn non_empty<T>(outcomes: &[ChunkOutcome<T>]) -> Result<()> {
    if outcomes.is_empty() {
        Err(Error::param(
            "outcomes",
            "at least one chunk outcome is required",
        ))
    } else {
        Ok(())
    }
}

pub fn packet_drop_rate<T: Real>(outcomes: &[ChunkOutcome<T>]) -> Result<T> {
    non_empty(outcomes)?;
    let (total, delivered) = outcomes.iter().fold((0u128, 0u128), |(t, d), o| {
        (
            t + u128::from(o.packets_total),
            d + u128::from(o.packets_delivered),
        )
    });
    Ok(T::lit((total - delivered) as f64) / T::lit(total as f64))
}

pub fn chunk_success_rate<T: Real>(outcomes: &[ChunkOutcome<T>]) -> Result<T> {
    non_empty(outcomes)?;
    let ok = outcomes.iter().filter(|o| !o.artifact).count();
    Ok(T::lit(ok as f64) / T::lit(outcomes.len() as f64))
}

/// Mean per-chunk utilization `min(encoded, channel) / channel`; a chunk
/// with zero channel rate contributes 0.
pub fn bandwidth_efficiency<T: Real>(outcomes: &[ChunkOutcome<T>]) -> Result<T> {
    non_empty(outcomes)?;
    let acc: CompensatedSum<T> = outcomes
        .iter()
        .map(|o| {
            if o.channel_rate > T::zero() {
                o.encoded_bitrate.min(o.channel_rate) / o.channel_rate
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(acc.total() / T::lit(outcomes.len() as f64))
}

/// Duration-weighted mean of delivered PSNR, averaged in dB.
pub fn mean_psnr<T: Real>(outcomes: &[ChunkOutcome<T>]) -> Result<T> {
    non_empty(outcomes)?;
    let mut weighted = CompensatedSum::new();
    let mut duration = CompensatedSum::new();
    for o in outcomes {
        weighted.add(o.delivered_psnr * o.duration_s);
        duration.add(o.duration_s);
    }
    Ok(weighted.total() / duration.total())
}

/// Coefficient of variation (population std / mean) of the rate at `qp`.
pub fn bitrate_cv<T: Real>(profiles: &[ChunkRateProfile<T>], qp: Qp) -> Result<T> {
    if profiles.len() < 2 {
        return Err(Error::param(
            "profiles",
            "at least two profiles are required",
        ));
    }
    let n = T::lit(profiles.len() as f64);
    let mean = profiles
        .iter()
        .map(|p| p.rate(qp))
        .collect::<CompensatedSum<T>>()
        .total()
        / n;
    let var = profiles
        .iter()
        .map(|p| (p.rate(qp) - mean).powi(2))
        .collect::<CompensatedSum<T>>()
        .total()
        / n;
    Ok(var.sqrt() / mean)
}

impl<T: Real> MetricsReport<T> {
    pub fn from_outcomes(outcomes: &[ChunkOutcome<T>]) -> Result<Self> {
        Ok(Self {
            mean_psnr: mean_psnr(outcomes)?,
            packet_drop_rate: packet_drop_rate(outcomes)?,
            chunk_success_rate: chunk_success_rate(outcomes)?,
            bandwidth_efficiency: bandwidth_efficiency(outcomes)?,
            n_chunks: outcomes.len(),
        })
    }

    /// Field-wise arithmetic mean; `n_chunks` is summed.
    pub fn mean_of(reports: &[Self]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::param("reports", "nothing to average"));
        }
        let n = T::lit(reports.len() as f64);
        let avg =
            |f: fn(&Self) -> T| reports.iter().map(f).collect::<CompensatedSum<T>>().total() / n;
        Ok(Self {
            mean_psnr: avg(|r| r.mean_psnr),
            packet_drop_rate: avg(|r| r.packet_drop_rate),
            chunk_success_rate: avg(|r| r.chunk_success_rate),
            bandwidth_efficiency: avg(|r| r.bandwidth_efficiency),
            n_chunks: reports.iter().map(|r| r.n_chunks).sum(),
        })
    }

    /// Flat `key=value` block, one metric per line.
    pub fn to_summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_chunks={}", self.n_chunks);
        let _ = writeln!(s, "mean_psnr_db={}", self.mean_psnr);
        let _ = writeln!(s, "packet_drop_rate={}", self.packet_drop_rate);
        let _ = writeln!(s, "chunk_success_rate={}", self.chunk_success_rate);
        let _ = writeln!(s, "bandwidth_efficiency={}", self.bandwidth_efficiency);
        s
    }

    /// `mean_psnr_db,packet_drop_rate,chunk_success_rate,bandwidth_efficiency`
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{}",
            self.mean_psnr,
            self.packet_drop_rate,
            self.chunk_success_rate,
            self.bandwidth_efficiency
        )
    }
}
