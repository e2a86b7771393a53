//! CSV and summary writers for the CLI outputs.
//!
//! Every file begins with one `# override key=value` comment line per
//! configuration override, followed by its header.

use std::io::Write;

use crate::engine::{Fig8Point, RunResult, SweepMeanRow, SweepRow};
use crate::error::Result;
use crate::scalar::Real;
use crate::video_source::{write_trace, ChunkRateProfile};

pub const CHUNKS_HEADER: &str = "chunk_index,policy,qp,offset,encoded_bps,channel_bps,\
packets_total,packets_delivered,artifact,delivered_psnr_db";
pub const SWEEP_HEADER: &str = "avg_channel_bps,policy,seed,mean_psnr_db,packet_drop_rate,\
chunk_success_rate,bandwidth_efficiency";
pub const SWEEP_MEAN_HEADER: &str = "avg_channel_bps,policy,n_seeds,mean_psnr_db,\
packet_drop_rate,chunk_success_rate,bandwidth_efficiency";
pub const FIG8_HEADER: &str = "policy,chunk_success_rate,bandwidth_efficiency";

pub fn write_echo<W: Write>(out: &mut W, echo: &[String]) -> Result<()> {
    for line in echo {
        writeln!(out, "# override {line}")?;
    }
    Ok(())
}

pub fn write_chunks_csv<T: Real, W: Write>(
    mut out: W,
    result: &RunResult<T>,
    echo: &[String],
) -> Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "{CHUNKS_HEADER}")?;
    let policy = result.config.controller.name();
    for (i, (o, d)) in result.outcomes.iter().zip(&result.decisions).enumerate() {
        writeln!(
            out,
            "{i},{policy},{},{},{},{},{},{},{},{}",
            o.qp_used,
            d.safety_offset_applied,
            o.encoded_bitrate,
            o.channel_rate,
            o.packets_total,
            o.packets_delivered,
            u8::from(o.artifact),
            o.delivered_psnr
        )?;
    }
    Ok(())
}

pub fn write_summary<T: Real, W: Write>(
    mut out: W,
    result: &RunResult<T>,
    echo: &[String],
) -> Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "policy={}", result.config.controller.name())?;
    writeln!(out, "seed={}", result.seed)?;
    write!(out, "{}", result.metrics.to_summary())?;
    writeln!(out, "decision_compliance={}", result.decision_compliance())?;
    Ok(())
}

pub fn write_sweep_csv<T: Real, W: Write>(
    mut out: W,
    rows: &[SweepRow<T>],
    echo: &[String],
) -> Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.avg_channel_bps,
            r.policy,
            r.seed,
            r.metrics.csv_fields()
        )?;
    }
    Ok(())
}

pub fn write_sweep_mean_csv<T: Real, W: Write>(
    mut out: W,
    rows: &[SweepMeanRow<T>],
    echo: &[String],
) -> Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "{SWEEP_MEAN_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.avg_channel_bps,
            r.policy,
            r.n_seeds,
            r.metrics.csv_fields()
        )?;
    }
    Ok(())
}

pub fn write_fig8_csv<T: Real, W: Write>(
    mut out: W,
    points: &[Fig8Point<T>],
    echo: &[String],
) -> Result<()> {
    write_echo(&mut out, echo)?;
    writeln!(out, "{FIG8_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{}",
            p.label, p.chunk_success_rate, p.bandwidth_efficiency
        )?;
    }
    Ok(())
}

pub fn write_trace_with_echo<T: Real, W: Write>(
    mut out: W,
    profiles: &[ChunkRateProfile<T>],
    echo: &[String],
) -> Result<()> {
    write_echo(&mut out, echo)?;
    write_trace(out, profiles)
}
