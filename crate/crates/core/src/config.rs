//! Configuration file: TOML sections of `key = value` pairs.
//!
//! Every key is optional; missing keys take the defaults listed in the
//! shipped `example.config`. Command-line overrides (`section.key=value`)
//! are applied to the parsed tree before it is interpreted, so they obey
//! the same validation as file values.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::channel::ChannelParams;
use crate::controllers::PredictorErrorModel;
use crate::engine::{ChannelKnowledge, ControllerSpec, DashSpec, SimConfig, SourceSpec};
use crate::error::{Error, Result};
use crate::transport::TransportParams;
use crate::video_source::{load_trace, Qp, SyntheticSourceParams};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub n_chunks: usize,
    pub channel: ChannelSection,
    pub source: SourceSection,
    pub controller: ControllerSection,
    pub oracle: OracleSection,
    pub predictor: PredictorSection,
    pub dash: DashSection,
    pub transport: TransportSection,
    pub knowledge: KnowledgeSection,
    pub sweep: SweepSection,
    pub fig8: Fig8Section,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub transmit_power: f64,
    pub noise_power: f64,
    pub capacity_gap: f64,
    pub fading_variance: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub kind: String,
    pub trace_path: Option<PathBuf>,
    pub base_log_rate: f64,
    pub decay: f64,
    pub chunk_scale_cv: f64,
    pub psnr_intercept: f64,
    pub psnr_slope: f64,
    pub psnr_floor: f64,
    pub fps: f64,
    pub frames_per_chunk: u32,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: String,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub safety_offset: u8,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub safety_offset: u8,
    pub error_model: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DashSection {
    pub ladder_qp: Vec<u8>,
    pub segment_chunks: usize,
    pub estimator_window: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    pub packet_size_bits: u64,
    pub artifact_floor_db: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeSection {
    pub mode: String,
    pub prior_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub grid_bps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub policies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig8Section {
    pub rtrc_policy: String,
}

impl Default for FileConfig {
    fn default() -> Self {
        let sim = SimConfig::<f64>::default();
        Self {
            seed: sim.seed,
            n_chunks: sim.n_chunks,
            channel: ChannelSection::default(),
            source: SourceSection::default(),
            controller: ControllerSection {
                kind: sim.controller.name(),
            },
            oracle: OracleSection { safety_offset: 0 },
            predictor: PredictorSection::default(),
            dash: DashSection::default(),
            transport: TransportSection::default(),
            knowledge: KnowledgeSection::default(),
            sweep: SweepSection::default(),
            fig8: Fig8Section::default(),
        }
    }
}

impl Default for ChannelSection {
    fn default() -> Self {
        let c = ChannelParams::<f64>::default();
        Self {
            transmit_power: c.transmit_power,
            noise_power: c.noise_power,
            capacity_gap: c.capacity_gap,
            fading_variance: c.fading_variance,
            bandwidth_hz: c.bandwidth_hz,
        }
    }
}

impl Default for SourceSection {
    fn default() -> Self {
        let s = SyntheticSourceParams::<f64>::default();
        Self {
            kind: "synthetic".into(),
            trace_path: None,
            base_log_rate: s.base_log_rate,
            decay: s.decay,
            chunk_scale_cv: s.chunk_scale_cv,
            psnr_intercept: s.psnr_intercept,
            psnr_slope: s.psnr_slope,
            psnr_floor: s.psnr_floor,
            fps: s.fps,
            frames_per_chunk: s.frames_per_chunk,
        }
    }
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            kind: "predictor".into(),
        }
    }
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            safety_offset: 1,
            error_model: PredictorErrorModel::default().probabilities(),
        }
    }
}

impl Default for DashSection {
    fn default() -> Self {
        let d = DashSpec::default();
        Self {
            ladder_qp: d.ladder_qp.iter().map(|q| q.value()).collect(),
            segment_chunks: d.segment_chunks,
            estimator_window: d.estimator_window,
        }
    }
}

impl Default for TransportSection {
    fn default() -> Self {
        let t = TransportParams::<f64>::default();
        Self {
            packet_size_bits: t.packet_size_bits,
            artifact_floor_db: t.artifact_floor_db,
        }
    }
}

impl Default for KnowledgeSection {
    fn default() -> Self {
        Self {
            mode: "exact".into(),
            prior_bps: 0.0,
        }
    }
}

/// Mean channel rates for the bitrate sweep, in bit/s. With the default
/// ladder (1.25, 2.5, 5, 10, 20 Mbit/s) these sit just above each level,
/// just below the next one, and once beyond the top level.
pub const DEFAULT_SWEEP_GRID: [f64; 10] = [
    1.3125e6, 2.375e6, 2.625e6, 4.75e6, 5.25e6, 9.5e6, 10.5e6, 19.0e6, 21.0e6, 26.25e6,
];

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            grid_bps: DEFAULT_SWEEP_GRID.to_vec(),
            seeds: (1..=10).collect(),
            policies: vec!["predictor".into(), "dash".into()],
        }
    }
}

impl Default for Fig8Section {
    fn default() -> Self {
        Self {
            rtrc_policy: "oracle".into(),
        }
    }
}

fn as_config_error(e: Error) -> Error {
    match e {
        Error::Parameter { name, reason } => Error::Config { key: name, reason },
        other => other,
    }
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` and applies `section.key=value` overrides.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::config(key_at_span(text, e.span()), e.message().to_string())
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            Error::config(key, inner.message().trim().to_string())
        })
    }

    pub fn policy(&self, name: &str, key: &str) -> Result<ControllerSpec> {
        match name {
            "oracle" => Ok(ControllerSpec::Oracle {
                safety_offset: self.oracle.safety_offset,
            }),
            "predictor" => {
                let [a, b, c, d] = self.predictor.error_model;
                let error_model = PredictorErrorModel::new(a, b, c, d).map_err(as_config_error)?;
                Ok(ControllerSpec::Predictor {
                    error_model,
                    safety_offset: self.predictor.safety_offset,
                })
            }
            "dash" => Ok(ControllerSpec::Dash(self.dash_spec()?)),
            other => Err(Error::config(
                key,
                format!("unknown controller `{other}` (expected oracle, predictor or dash)"),
            )),
        }
    }

    pub fn dash_spec(&self) -> Result<DashSpec> {
        let ladder_qp = self
            .dash
            .ladder_qp
            .iter()
            .map(|&q| {
                Qp::new(q).ok_or_else(|| Error::config("dash.ladder_qp", format!("QP {q} > 51")))
            })
            .collect::<Result<Vec<_>>>()?;
        if ladder_qp.is_empty() {
            return Err(Error::config("dash.ladder_qp", "ladder is empty"));
        }
        if ladder_qp.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::config(
                "dash.ladder_qp",
                "levels must be listed lowest quality first (strictly decreasing QP)",
            ));
        }
        Ok(DashSpec {
            ladder_qp,
            segment_chunks: self.dash.segment_chunks,
            estimator_window: self.dash.estimator_window,
        })
    }

    pub fn sweep_policies(&self) -> Result<Vec<ControllerSpec>> {
        self.sweep
            .policies
            .iter()
            .map(|p| self.policy(p, "sweep.policies"))
            .collect()
    }

    pub fn fig8_policy(&self) -> Result<ControllerSpec> {
        self.policy(&self.fig8.rtrc_policy, "fig8.rtrc_policy")
    }

    pub fn synthetic_params(&self) -> SyntheticSourceParams<f64> {
        let s = &self.source;
        SyntheticSourceParams {
            base_log_rate: s.base_log_rate,
            decay: s.decay,
            chunk_scale_cv: s.chunk_scale_cv,
            psnr_intercept: s.psnr_intercept,
            psnr_slope: s.psnr_slope,
            psnr_floor: s.psnr_floor,
            fps: s.fps,
            frames_per_chunk: s.frames_per_chunk,
        }
    }

    /// Builds and validates the run configuration. Relative trace paths are
    /// resolved against `base_dir`.
    pub fn sim_config(&self, base_dir: &Path) -> Result<SimConfig<f64>> {
        let source = match self.source.kind.as_str() {
            "synthetic" => SourceSpec::Synthetic(self.synthetic_params()),
            "trace" => {
                let path = self.source.trace_path.as_ref().ok_or_else(|| {
                    Error::config("source.trace_path", "required when source.kind = \"trace\"")
                })?;
                SourceSpec::Trace(Arc::new(load_trace(base_dir.join(path))?))
            }
            other => {
                return Err(Error::config(
                    "source.kind",
                    format!("unknown source `{other}` (expected synthetic or trace)"),
                ))
            }
        };
        let knowledge = match self.knowledge.mode.as_str() {
            "exact" => ChannelKnowledge::Exact,
            "delayed" => ChannelKnowledge::Delayed {
                prior_bps: self.knowledge.prior_bps,
            },
            other => {
                return Err(Error::config(
                    "knowledge.mode",
                    format!("unknown mode `{other}` (expected exact or delayed)"),
                ))
            }
        };
        let c = &self.channel;
        let config = SimConfig {
            seed: self.seed,
            n_chunks: self.n_chunks,
            channel: ChannelParams {
                transmit_power: c.transmit_power,
                noise_power: c.noise_power,
                capacity_gap: c.capacity_gap,
                fading_variance: c.fading_variance,
                bandwidth_hz: c.bandwidth_hz,
            },
            source,
            controller: self.policy(&self.controller.kind, "controller.kind")?,
            transport: TransportParams {
                packet_size_bits: self.transport.packet_size_bits,
                artifact_floor_db: self.transport.artifact_floor_db,
            },
            knowledge,
        };
        config.validate().map_err(as_config_error)?;
        Ok(config)
    }
}

/// A parsed configuration plus the override lines echoed into outputs.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: FileConfig,
    pub echo: Vec<String>,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn sim_config(&self) -> Result<SimConfig<f64>> {
        self.file.sim_config(&self.base_dir)
    }
}

/// Reads `path` (or starts from defaults), applies overrides and the seed
/// flag.
pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<LoadedConfig> {
    let (text, base_dir) = match path {
        Some(p) => (
            std::fs::read_to_string(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (String::new(), PathBuf::from(".")),
    };
    let mut all = overrides.to_vec();
    if let Some(s) = seed {
        all.push(format!("seed={s}"));
    }
    let file = FileConfig::from_toml_with(&text, &all)?;
    Ok(LoadedConfig {
        file,
        echo: all,
        base_dir,
    })
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like section.key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut cursor = table;
    for section in sections {
        cursor = cursor
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{section}` is not a section")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// Best-effort `key` name of the TOML line containing a syntax error.
fn key_at_span(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let Some(span) = span else {
        return "<config>".into();
    };
    let start = text[..span.start.min(text.len())]
        .rfind('\n')
        .map_or(0, |i| i + 1);
    let line = text[start..].lines().next().unwrap_or("");
    match line.split_once('=') {
        Some((k, _)) => k.trim().to_string(),
        None => line.trim().to_string(),
    }
}
