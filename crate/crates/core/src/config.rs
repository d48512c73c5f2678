//! Codec configuration.
//!
//! Every field has a default, so a JSON config file only needs to list the
//! values it overrides. Unknown keys are rejected to catch typos.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub sample_rate_hz: u32,
    /// Framing window length.
    pub window_ms: f64,
    /// Hop between consecutive frames.
    pub stride_ms: f64,
    pub freq_lo_hz: f64,
    pub freq_hi_hz: f64,
    pub num_channels: usize,
    /// Encoding neurons per channel: `L` onset neurons, `L` offset neurons and
    /// one peak marker, so this must be odd (`2L + 1`). A spike file with one
    /// neuron per channel carries a latency code instead.
    pub thresholds_per_channel: usize,
    /// Lowest encoding threshold, dB of frame energy.
    pub threshold_lo_db: f64,
    /// Highest encoding threshold, dB of frame energy.
    pub threshold_hi_db: f64,
    /// Per-frame decay factor of the temporal masker.
    pub temporal_decay_c: f64,
    /// Spreading attenuation per channel towards lower channels.
    pub spreading_slope_low_db: f64,
    /// Spreading attenuation per channel towards higher channels.
    pub spreading_slope_high_db: f64,
    /// Fixed attenuation between a masker and the threshold it induces.
    pub spreading_offset_db: f64,
    /// Frame-energy level that corresponds to 0 dB on the hearing-threshold
    /// scale. The absolute threshold is raised by this amount and the temporal
    /// masker decays towards it.
    pub hearing_reference_db: f64,
    /// Floor substituted for `log10(0)` and for empty envelope regions.
    pub energy_floor_db: f64,
    pub rng_seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 20_000,
            window_ms: 30.0,
            stride_ms: 15.0,
            freq_lo_hz: 200.0,
            freq_hi_hz: 8000.0,
            num_channels: 20,
            thresholds_per_channel: 31,
            threshold_lo_db: DEFAULT_THRESHOLD_LO_DB,
            threshold_hi_db: DEFAULT_THRESHOLD_HI_DB,
            temporal_decay_c: 0.9,
            spreading_slope_low_db: 27.0,
            spreading_slope_high_db: 13.0,
            spreading_offset_db: 14.0,
            hearing_reference_db: -18.0,
            energy_floor_db: -100.0,
            rng_seed: 42,
        }
    }
}

/// 5th percentile of default-config frame energies over the bundled speech
/// fixtures (see `calibrate_threshold_range`).
pub const DEFAULT_THRESHOLD_LO_DB: f64 = -40.49;
/// 95th percentile, same corpus.
pub const DEFAULT_THRESHOLD_HI_DB: f64 = 17.40;

impl CodecConfig {
    /// Defaults adjusted for a different sample rate. The upper band edge is
    /// pulled below Nyquist when the default would not fit.
    pub fn for_sample_rate(sample_rate_hz: u32) -> Self {
        let mut config = Self {
            sample_rate_hz,
            ..Self::default()
        };
        let nyquist = f64::from(sample_rate_hz) / 2.0;
        if config.freq_hi_hz >= nyquist {
            config.freq_hi_hz = 0.9 * nyquist;
        }
        config
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config JSON: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be positive".into());
        }
        if !(self.window_ms > 0.0) || !(self.stride_ms > 0.0) {
            return bad("window_ms and stride_ms must be positive".into());
        }
        if self.window_samples() < 1 || self.stride_samples() < 1 {
            return bad("window and stride must each span at least one sample".into());
        }
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        if !(self.freq_lo_hz > 0.0) {
            return bad("freq_lo_hz must be positive".into());
        }
        if !(self.freq_lo_hz < self.freq_hi_hz) {
            return bad(format!(
                "freq_lo_hz ({}) must be below freq_hi_hz ({})",
                self.freq_lo_hz, self.freq_hi_hz
            ));
        }
        if !(self.freq_hi_hz < nyquist) {
            return bad(format!(
                "freq_hi_hz ({}) must be below Nyquist ({nyquist})",
                self.freq_hi_hz
            ));
        }
        if self.num_channels < 1 {
            return bad("num_channels must be at least 1".into());
        }
        if self.thresholds_per_channel < 3 || self.thresholds_per_channel % 2 == 0 {
            return bad(format!(
                "thresholds_per_channel must be odd and >= 3 (got {})",
                self.thresholds_per_channel
            ));
        }
        if self.num_channels * self.thresholds_per_channel > usize::from(u16::MAX) {
            return bad("num_channels * thresholds_per_channel must fit in u16".into());
        }
        if !(self.threshold_lo_db < self.threshold_hi_db) {
            return bad("threshold_lo_db must be below threshold_hi_db".into());
        }
        if !(self.energy_floor_db < self.threshold_lo_db) {
            return bad("energy_floor_db must be below threshold_lo_db".into());
        }
        if !(self.temporal_decay_c > 0.0 && self.temporal_decay_c <= 1.0) {
            return bad("temporal_decay_c must lie in (0, 1]".into());
        }
        let finite = [
            self.spreading_slope_low_db,
            self.spreading_slope_high_db,
            self.spreading_offset_db,
            self.hearing_reference_db,
            self.energy_floor_db,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("masking parameters must be finite".into());
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize
    }

    pub fn stride_samples(&self) -> usize {
        (self.stride_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize
    }

    /// Number of threshold levels `L`.
    pub fn levels_per_channel(&self) -> usize {
        (self.thresholds_per_channel - 1) / 2
    }

    pub fn num_neurons(&self) -> usize {
        self.num_channels * self.thresholds_per_channel
    }
}
