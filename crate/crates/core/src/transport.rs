//! Container packetization and the channel-limited delivery rule.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::video_source::{ChunkRateProfile, Qp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams<T> {
    pub packet_size_bits: u64,
    /// PSNR assigned to a chunk with at least one dropped packet.
    pub artifact_floor_db: T,
}

impl<T: Real> Default for TransportParams<T> {
    fn default() -> Self {
        Self {
            packet_size_bits: 12_000,
            artifact_floor_db: T::lit(10.0),
        }
    }
}

impl<T: Real> TransportParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.packet_size_bits == 0 {
            return Err(Error::param("transport.packet_size_bits", "must be >= 1"));
        }
        if !self.artifact_floor_db.is_finite() {
            return Err(Error::param(
                "transport.artifact_floor_db",
                "must be finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkOutcome<T> {
    pub chunk_id: usize,
    pub qp_used: Qp,
    pub encoded_bitrate: T,
    pub channel_rate: T,
    pub packets_total: u64,
    pub packets_delivered: u64,
    pub artifact: bool,
    pub delivered_psnr: T,
    pub duration_s: T,
}

pub fn packetize<T: Real>(encoded_bitrate: T, duration_s: T, packet_size_bits: u64) -> u64 {
    let bits = encoded_bitrate * duration_s;
    let packets = (bits / T::lit(packet_size_bits as f64)).ceil();
    packets.to_u64().unwrap_or(u64::MAX).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub packets_delivered: u64,
    pub artifact: bool,
}

/// All packets arrive when the channel carries the encoded rate; otherwise
/// only the share `channel_rate / encoded_bitrate` makes the deadline.
pub fn transmit_chunk<T: Real>(
    encoded_bitrate: T,
    channel_rate: T,
    packets_total: u64,
) -> Delivery {
    if encoded_bitrate <= channel_rate {
        return Delivery {
            packets_delivered: packets_total,
            artifact: false,
        };
    }
    let share = (channel_rate / encoded_bitrate).max(T::zero());
    let delivered = (T::lit(packets_total as f64) * share)
        .floor()
        .to_u64()
        .unwrap_or(0)
        // Rounding of a share just below one must still count as a loss.
        .min(packets_total.saturating_sub(1));
    Delivery {
        packets_delivered: delivered,
        artifact: true,
    }
}

pub fn delivered_quality<T: Real>(
    profile: &ChunkRateProfile<T>,
    qp_used: Qp,
    artifact: bool,
    params: &TransportParams<T>,
) -> T {
    let psnr = profile.psnr(qp_used);
    if artifact {
        params.artifact_floor_db.min(psnr)
    } else {
        psnr
    }
}

/// Packetizes and transmits one chunk.
pub fn deliver_chunk<T: Real>(
    profile: &ChunkRateProfile<T>,
    qp_used: Qp,
    channel_rate: T,
    params: &TransportParams<T>,
) -> ChunkOutcome<T> {
    let encoded_bitrate = profile.rate(qp_used);
    let packets_total = packetize(
        encoded_bitrate,
        profile.duration_s(),
        params.packet_size_bits,
    );
    let delivery = transmit_chunk(encoded_bitrate, channel_rate, packets_total);
    ChunkOutcome {
        chunk_id: profile.chunk_id(),
        qp_used,
        encoded_bitrate,
        channel_rate,
        packets_total,
        packets_delivered: delivery.packets_delivered,
        artifact: delivery.artifact,
        delivered_psnr: delivered_quality(profile, qp_used, delivery.artifact, params),
        duration_s: profile.duration_s(),
    }
}
