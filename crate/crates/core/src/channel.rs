//! Rayleigh block-fading channel and its supported transmission rate.
//!
//! One complex gain is drawn per chunk and held for the chunk's duration.
//! The supported rate is `bandwidth * log2(1 + P |h|^2 / (noise * gap))`.

use std::io::{BufRead, Write};

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams<T> {
    /// Transmit power P (linear).
    pub transmit_power: T,
    /// Receiver noise power (linear).
    pub noise_power: T,
    /// SNR gap to capacity from practical coding, G >= 1.
    pub capacity_gap: T,
    /// Variance of the complex fading gain; E[|h|^2].
    pub fading_variance: T,
    pub bandwidth_hz: T,
}

impl<T: Real> Default for ChannelParams<T> {
    fn default() -> Self {
        Self {
            transmit_power: T::one(),
            noise_power: T::lit(0.01),
            capacity_gap: T::one(),
            fading_variance: T::one(),
            bandwidth_hz: T::lit(5.0e5),
        }
    }
}

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

impl<T: Real> ChannelParams<T> {
    pub fn validate(&self) -> Result<()> {
        positive("channel.transmit_power", self.transmit_power)?;
        positive("channel.noise_power", self.noise_power)?;
        positive("channel.fading_variance", self.fading_variance)?;
        positive("channel.bandwidth_hz", self.bandwidth_hz)?;
        if !(self.capacity_gap >= T::one() && self.capacity_gap.is_finite()) {
            return Err(Error::param(
                "channel.capacity_gap",
                format!("must be >= 1, got {}", self.capacity_gap),
            ));
        }
        Ok(())
    }

    /// Effective SNR per unit of |h|^2: P / (noise * G).
    pub fn snr_scale(&self) -> T {
        self.transmit_power / (self.noise_power * self.capacity_gap)
    }

    /// Supported rate for a channel power gain |h|^2.
    pub fn rate_for_gain(&self, gain: T) -> T {
        self.bandwidth_hz * (self.snr_scale() * gain).ln_1p() / T::lit(std::f64::consts::LN_2)
    }
}

/// Draws h ~ CN(0, variance): independent real and imaginary parts, each
/// N(0, variance / 2).
pub fn sample_fading<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: T) -> Result<Complex<T>> {
    positive("fading_variance", variance)?;
    let scale = (variance.as_f64() / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Ok(Complex::new(T::lit(re * scale), T::lit(im * scale)))
}

pub fn instantaneous_rate<T: Real>(h: Complex<T>, params: &ChannelParams<T>) -> Result<T> {
    params.validate()?;
    Ok(params.rate_for_gain(h.norm_sqr()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample<T> {
    pub chunk_index: usize,
    pub h: Complex<T>,
    pub rate_bps: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace<T> {
    pub params: ChannelParams<T>,
    pub seed: u64,
    pub samples: Vec<ChannelSample<T>>,
}

pub const TRACE_HEADER: &str = "chunk_index,h_re,h_im,rate_bps";

/// One independent fading draw per chunk, reproducible from `seed`.
pub fn generate_trace<T: Real>(
    seed: u64,
    params: &ChannelParams<T>,
    n_chunks: usize,
) -> Result<ChannelTrace<T>> {
    params.validate()?;
    if n_chunks == 0 {
        return Err(Error::param("n_chunks", "must be >= 1"));
    }
    let mut rng = rng::stream_rng(seed, Stream::Channel);
    let samples = (0..n_chunks)
        .map(|chunk_index| {
            let h = sample_fading(&mut rng, params.fading_variance)?;
            Ok(ChannelSample {
                chunk_index,
                h,
                rate_bps: params.rate_for_gain(h.norm_sqr()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelTrace {
        params: *params,
        seed,
        samples,
    })
}

impl<T: Real> ChannelTrace<T> {
    pub fn rates(&self) -> impl Iterator<Item = T> + '_ {
        self.samples.iter().map(|s| s.rate_bps)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{}",
                s.chunk_index, s.h.re, s.h.im, s.rate_bps
            )?;
        }
        Ok(())
    }

    /// Parses samples written by [`write_csv`](Self::write_csv). Rates are
    /// taken from the file; `params` and `seed` are supplied by the caller.
    pub fn read_csv<R: BufRead>(input: R, params: ChannelParams<T>, seed: u64) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i as u64 + 1;
            if i == 0 {
                if line != TRACE_HEADER {
                    return Err(Error::Trace {
                        line: lineno,
                        column: "header".into(),
                        reason: format!("expected `{TRACE_HEADER}`"),
                    });
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Trace {
                    line: lineno,
                    column: "*".into(),
                    reason: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let parse = |idx: usize, col: &str| -> Result<T> {
                fields[idx].parse::<T>().map_err(|_| Error::Trace {
                    line: lineno,
                    column: col.into(),
                    reason: format!("not a number: `{}`", fields[idx]),
                })
            };
            let chunk_index = fields[0].parse::<usize>().map_err(|_| Error::Trace {
                line: lineno,
                column: "chunk_index".into(),
                reason: format!("not an index: `{}`", fields[0]),
            })?;
            if chunk_index != samples.len() {
                return Err(Error::Trace {
                    line: lineno,
                    column: "chunk_index".into(),
                    reason: format!("expected {}, found {chunk_index}", samples.len()),
                });
            }
            samples.push(ChannelSample {
                chunk_index,
                h: Complex::new(parse(1, "h_re")?, parse(2, "h_im")?),
                rate_bps: parse(3, "rate_bps")?,
            });
        }
        Ok(Self {
            params,
            seed,
            samples,
        })
    }
}
