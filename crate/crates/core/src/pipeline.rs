//! End-to-end codec: filter bank, framing, masking and threshold coding
//! wired together for one configuration.

use crate::audio_io::AudioSignal;
use crate::config::CodecConfig;
use crate::decoder::decode_audio;
use crate::encoder::{apply_mask, random_mask, threshold_encode, Binning, ThresholdSet};
use crate::error::{Error, Result};
use crate::filterbank::CochlearFilterBank;
use crate::masking::{analyze_masking, MaskAnalysis, MaskingParams};
use crate::metrics::spike_reduction;
use crate::spectral::{frame_energy, Spectrogram};
use crate::spike::SpikePattern;

/// Which spikes to drop after encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskMode {
    /// Psychoacoustic masker map.
    Perceptual,
    /// Keep every spike.
    None,
    /// Drop spikes independently at `rate`.
    Random { rate: f64, seed: u64 },
}

/// Everything produced while encoding one signal.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub spectrogram: Spectrogram,
    pub masks: MaskAnalysis,
    /// Pattern before any spike removal.
    pub raw: SpikePattern,
    /// Pattern after the requested [`MaskMode`].
    pub pattern: SpikePattern,
}

impl Encoding {
    /// Percentage of raw spikes removed, or `None` for an empty raw pattern.
    pub fn reduction_pct(&self) -> Option<f64> {
        spike_reduction(&self.raw, &self.pattern).ok()
    }
}

#[derive(Debug, Clone)]
pub struct Codec {
    config: CodecConfig,
    bank: CochlearFilterBank,
    thresholds: ThresholdSet,
    masking: MaskingParams,
}

impl Codec {
    pub fn new(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        let bank = CochlearFilterBank::build(&config)?;
        let thresholds = ThresholdSet::from_config(&config)?;
        let masking = MaskingParams::from_config(&config);
        Ok(Self {
            config,
            bank,
            thresholds,
            masking,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn bank(&self) -> &CochlearFilterBank {
        &self.bank
    }

    pub fn thresholds(&self) -> &ThresholdSet {
        &self.thresholds
    }

    pub fn masking_params(&self) -> &MaskingParams {
        &self.masking
    }

    pub fn spectrogram(&self, signal: &AudioSignal) -> Result<Spectrogram> {
        self.check_rate(signal.sample_rate_hz())?;
        let subbands = self.bank.analyze(signal)?;
        frame_energy(&subbands, &self.config)
    }

    pub fn encode(&self, signal: &AudioSignal, mode: MaskMode) -> Result<Encoding> {
        let spectrogram = self.spectrogram(signal)?;
        let masks = analyze_masking(&spectrogram, &self.bank.centres_hz(), &self.masking)?;
        let raw = threshold_encode(&spectrogram, &self.thresholds)?;
        let pattern = match mode {
            MaskMode::Perceptual => {
                apply_mask(&raw, &masks.map, &Binning::NearestFrameCentre(spectrogram.timing()))?
            }
            MaskMode::None => raw.clone(),
            MaskMode::Random { rate, seed } => random_mask(&raw, rate, seed)?,
        };
        Ok(Encoding {
            spectrogram,
            masks,
            raw,
            pattern,
        })
    }

    pub fn decode(&self, pattern: &SpikePattern) -> Result<AudioSignal> {
        self.check_rate(pattern.sample_rate_hz())?;
        decode_audio(pattern, &self.thresholds, &self.bank, &self.config)
    }

    fn check_rate(&self, found: u32) -> Result<()> {
        if found != self.config.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                expected: self.config.sample_rate_hz,
                found,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn burst() -> AudioSignal {
        let fs = 20_000.0;
        let s = (0..12_000)
            .map(|i| {
                let t = i as f64 / fs;
                let env = (PI * t / 0.6).sin().powi(2);
                0.3 * env * ((2.0 * PI * 440.0 * t).sin() + 0.5 * (2.0 * PI * 1800.0 * t).sin())
            })
            .collect();
        AudioSignal::new(s, 20_000).unwrap()
    }

    #[test]
    fn modes_are_nested() {
        let codec = Codec::new(CodecConfig::default()).unwrap();
        let x = burst();
        let none = codec.encode(&x, MaskMode::None).unwrap();
        let masked = codec.encode(&x, MaskMode::Perceptual).unwrap();
        assert!(!none.raw.is_empty());
        assert_eq!(none.pattern, none.raw);
        assert_eq!(masked.raw, none.raw);
        assert!(masked.pattern.is_subset_of(&masked.raw));
        assert!(masked.pattern.len() < masked.raw.len());
        let random = codec.encode(&x, MaskMode::Random { rate: 0.5, seed: 3 }).unwrap();
        assert!(random.pattern.is_subset_of(&random.raw));
        let r = masked.reduction_pct().unwrap();
        assert!((0.0..=100.0).contains(&r));
    }

    #[test]
    fn decode_round_trip_has_input_length() {
        let codec = Codec::new(CodecConfig::default()).unwrap();
        let x = burst();
        let enc = codec.encode(&x, MaskMode::None).unwrap();
        let y = codec.decode(&enc.pattern).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(y.samples().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn wrong_rate_is_rejected() {
        let codec = Codec::new(CodecConfig::default()).unwrap();
        let x = AudioSignal::silence(100, 16_000);
        assert!(matches!(codec.encode(&x, MaskMode::None), Err(Error::SampleRateMismatch { .. })));
    }
}
