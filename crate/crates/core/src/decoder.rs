//! Spike pattern back to audio: envelopes from threshold crossings, a
//! cosine carrier per channel, then filter-bank synthesis.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::audio_io::AudioSignal;
use crate::config::CodecConfig;
use crate::encoder::ThresholdSet;
use crate::error::{Error, Result};
use crate::filterbank::{CochlearFilterBank, SubbandSignals};
use crate::spike::{NeuronRole, SpikePattern};

/// One stretch of activity in a channel: knots `(time_us, dB)` in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub knots: Vec<(f64, f64)>,
    /// When true the last knot's value is held until the end of the pattern.
    pub holds: bool,
}

impl Segment {
    fn value_at(&self, t: f64, end_us: f64) -> Option<f64> {
        self.value_from(t, end_us, &mut 0)
    }

    /// Like `value_at`, but resumes the knot search at `*cursor`. Repeated
    /// calls must use non-decreasing `t`.
    fn value_from(&self, t: f64, end_us: f64, cursor: &mut usize) -> Option<f64> {
        let k = &self.knots;
        let (first, last) = (k.first()?, k.last()?);
        if t < first.0 {
            return None;
        }
        if t > last.0 {
            return (self.holds && t <= end_us).then_some(last.1);
        }
        if k.len() == 1 {
            return Some(first.1);
        }
        while *cursor + 2 < k.len() && k[*cursor + 1].0 < t {
            *cursor += 1;
        }
        // Highest value among knots at exactly `t`, else linear interpolation.
        let mut best = f64::NEG_INFINITY;
        for w in k[*cursor..].windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t0 > t {
                break;
            }
            if t <= t1 {
                let v = if t == t0 {
                    v0
                } else if t == t1 {
                    v1
                } else {
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                };
                best = best.max(v);
            }
        }
        Some(best)
    }
}

/// Decoded per-channel envelopes in dB. A channel's envelope is the pointwise
/// maximum of its segments, and the floor where no segment is active.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSet {
    channels: Vec<Vec<Segment>>,
    pub floor_db: f64,
    pub duration_us: u32,
}

impl EnvelopeSet {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn segments(&self, k: usize) -> &[Segment] {
        &self.channels[k]
    }

    /// All knots of a channel, time-sorted.
    pub fn knots(&self, k: usize) -> Vec<(f64, f64)> {
        let mut all: Vec<(f64, f64)> = self.channels[k]
            .iter()
            .flat_map(|s| s.knots.iter().copied())
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        all
    }

    pub fn value_at(&self, k: usize, t_us: f64) -> f64 {
        let end = f64::from(self.duration_us);
        self.channels[k]
            .iter()
            .filter_map(|s| s.value_at(t_us, end))
            .fold(self.floor_db, f64::max)
    }

    /// Envelope in dB at every sample instant `n / fs`.
    pub fn sample_db(&self, k: usize, sample_rate_hz: u32, len: usize) -> Vec<f64> {
        let fs = f64::from(sample_rate_hz);
        let end = f64::from(self.duration_us);
        let mut out = vec![self.floor_db; len];
        let to_index = |t_us: f64| (t_us * fs / 1e6).ceil().max(0.0) as usize;
        for seg in &self.channels[k] {
            let (Some(first), Some(last)) = (seg.knots.first(), seg.knots.last()) else {
                continue;
            };
            let stop = if seg.holds { end } else { last.0 };
            let (a, b) = (to_index(first.0).min(len), (to_index(stop) + 1).min(len));
            let mut cursor = 0;
            for (n, slot) in out.iter_mut().enumerate().take(b).skip(a) {
                if let Some(v) = seg.value_from(n as f64 * 1e6 / fs, end, &mut cursor) {
                    *slot = slot.max(v);
                }
            }
        }
        out
    }

    /// Linear amplitude view of [`EnvelopeSet::sample_db`], in units of the
    /// subband signal: a steady sinusoid of amplitude `A` framed over `l`
    /// samples has energy `A^2 l / 2`.
    pub fn sample_amplitude(&self, k: usize, sample_rate_hz: u32, len: usize, window_samples: usize) -> Vec<f64> {
        let scale = (2.0 / window_samples as f64).sqrt();
        self.sample_db(k, sample_rate_hz, len)
            .into_iter()
            .map(|e| if e <= self.floor_db { 0.0 } else { scale * 10f64.powf(e / 20.0) })
            .collect()
    }
}

/// Rebuilds channel envelopes from onset and offset spikes. Each spike is a
/// knot at its level; a falling crossing of the lowest level closes a segment,
/// which then ramps down to the floor over one frame stride. Segments also
/// ramp up from the floor over one stride before their first knot. The last
/// segment of a channel holds its final value when it is not closed.
pub fn decode_envelopes(
    pattern: &SpikePattern,
    thr: &ThresholdSet,
    config: &CodecConfig,
) -> Result<EnvelopeSet> {
    let geometry = pattern.geometry();
    if geometry.neurons_per_channel() != 2 * thr.len() + 1 {
        return Err(Error::GeometryMismatch(format!(
            "pattern has {} neurons per channel, {} thresholds need {}",
            geometry.neurons_per_channel(),
            thr.len(),
            2 * thr.len() + 1
        )));
    }
    let stride_us = config.stride_ms * 1000.0;
    let floor = config.energy_floor_db;

    // (time, order key, level index, closes segment)
    let mut per_channel: Vec<Vec<(u32, i64, usize, bool)>> = vec![Vec::new(); geometry.num_channels()];
    for ev in pattern.events() {
        let k = geometry.channel_of(ev.neuron);
        match geometry.role_of(ev.neuron) {
            NeuronRole::Onset(n) => per_channel[k].push((ev.time_us, n as i64, n, false)),
            NeuronRole::Offset(n) => per_channel[k].push((ev.time_us, 1_000_000 - n as i64, n, n == 0)),
            NeuronRole::Peak | NeuronRole::Latency => {}
        }
    }

    let channels = per_channel
        .into_iter()
        .map(|mut evs| {
            evs.sort_unstable_by_key(|e| (e.0, e.1));
            let mut segments = Vec::new();
            let mut current: Vec<(f64, f64)> = Vec::new();
            for (t, _, n, closes) in evs {
                let t = f64::from(t);
                if current.is_empty() {
                    current.push((t - stride_us, floor));
                }
                current.push((t, thr.level(n)));
                if closes {
                    current.push((t + stride_us, floor));
                    segments.push(Segment {
                        knots: std::mem::take(&mut current),
                        holds: false,
                    });
                }
            }
            if !current.is_empty() {
                segments.push(Segment {
                    knots: current,
                    holds: true,
                });
            }
            segments
        })
        .collect();

    Ok(EnvelopeSet {
        channels,
        floor_db: floor,
        duration_us: pattern.duration_us(),
    })
}

/// Carrier cosine at each channel's centre frequency, amplitude-modulated by
/// the decoded envelope.
pub fn render_subbands(
    env: &EnvelopeSet,
    bank: &CochlearFilterBank,
    config: &CodecConfig,
) -> Result<SubbandSignals> {
    if env.num_channels() != bank.num_channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} envelopes for a {}-channel bank",
            env.num_channels(),
            bank.num_channels()
        )));
    }
    let fs = bank.sample_rate_hz();
    let len = (f64::from(env.duration_us) * f64::from(fs) / 1e6).round() as usize;
    let window = config.window_samples().max(1);
    let rows = bank
        .filters()
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let w = 2.0 * PI * f.centre_hz / f64::from(fs);
            env.sample_amplitude(k, fs, len, window)
                .into_iter()
                .enumerate()
                .map(|(n, a)| a * (w * n as f64).cos())
                .collect()
        })
        .collect();
    SubbandSignals::new(rows, fs)
}

pub fn decode_audio(
    pattern: &SpikePattern,
    thr: &ThresholdSet,
    bank: &CochlearFilterBank,
    config: &CodecConfig,
) -> Result<AudioSignal> {
    if pattern.sample_rate_hz() != bank.sample_rate_hz() {
        return Err(Error::SampleRateMismatch {
            expected: bank.sample_rate_hz(),
            found: pattern.sample_rate_hz(),
        });
    }
    if pattern.geometry().num_channels() != bank.num_channels() {
        return Err(Error::GeometryMismatch(format!(
            "pattern has {} channels, bank has {}",
            pattern.geometry().num_channels(),
            bank.num_channels()
        )));
    }
    let env = decode_envelopes(pattern, thr, config)?;
    let subbands = render_subbands(&env, bank, config)?;
    bank.synthesize(&subbands)
}
