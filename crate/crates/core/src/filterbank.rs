//! Constant-Q cochlear filter bank: time-domain analysis and gain-weighted
//! synthesis.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::audio_io::AudioSignal;
use crate::config::CodecConfig;
use crate::error::{Error, Result};

/// Centre frequencies of the 20-channel 200-8000 Hz bank at 20 kHz.
pub const DEFAULT_CENTRES_HZ: [f64; 20] = [
    200.2, 238.3, 283.2, 336.4, 400.4, 476.1, 565.9, 672.3, 800.8, 952.1, 1131.3, 1345.2, 1600.6,
    1903.3, 2263.7, 2690.9, 3200.2, 3805.7, 4525.9, 8000.5,
];

/// Bandwidths matching [`DEFAULT_CENTRES_HZ`]. The last channel is far wider
/// than the constant-Q pattern of the others; it is kept as published.
pub const DEFAULT_BANDWIDTHS_HZ: [f64; 20] = [
    69.3, 83.0, 98.6, 117.2, 139.6, 166.0, 197.3, 234.4, 278.3, 331.1, 394.5, 468.8, 557.6, 663.1,
    788.1, 937.5, 1114.3, 1325.2, 1576.2, 6949.2,
];

/// Quality factor used for configurations other than the default one.
pub const GENERIC_Q: f64 = 2.87;

/// Longest kernel, in samples.
pub const MAX_KERNEL_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CochlearFilter {
    /// 1-based channel index.
    pub index: usize,
    pub centre_hz: f64,
    pub bandwidth_hz: f64,
    pub kernel: Vec<f64>,
    pub synthesis_gain: f64,
}

impl CochlearFilter {
    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    /// Group delay of the (symmetric) kernel in samples.
    pub fn delay(&self) -> usize {
        (self.kernel.len() - 1) / 2
    }

    /// Response to a cosine at `f_hz` once the kernel delay is removed. The
    /// kernel is symmetric, so this is real.
    pub fn zero_phase_response(&self, f_hz: f64, sample_rate_hz: f64) -> f64 {
        let c = self.delay() as f64;
        let w = 2.0 * PI * f_hz / sample_rate_hz;
        self.kernel
            .iter()
            .enumerate()
            .map(|(i, &h)| h * (w * (i as f64 - c)).cos())
            .sum()
    }
}

/// `K x M` subband matrix, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSignals {
    rows: Vec<Vec<f64>>,
    sample_rate_hz: u32,
}

impl SubbandSignals {
    pub fn new(rows: Vec<Vec<f64>>, sample_rate_hz: u32) -> Result<Self> {
        if let Some(first) = rows.first() {
            if rows.iter().any(|r| r.len() != first.len()) {
                return Err(Error::ShapeMismatch("subband rows differ in length".into()));
            }
        }
        Ok(Self {
            rows,
            sample_rate_hz,
        })
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate_hz: u32) -> Self {
        Self {
            rows: vec![vec![0.0; len]; num_channels],
            sample_rate_hz,
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn num_channels(&self) -> usize {
        self.rows.len()
    }

    pub fn len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CochlearFilterBank {
    filters: Vec<CochlearFilter>,
    sample_rate_hz: u32,
}

impl CochlearFilterBank {
    /// Builds the bank for `config`. The default channel layout uses the
    /// fixed reference centre/bandwidth list; anything else gets geometrically
    /// spaced centres with constant Q.
    pub fn build(config: &CodecConfig) -> Result<Self> {
        config.validate()?;
        let fs = f64::from(config.sample_rate_hz);
        let (centres, bandwidths) = channel_layout(config);
        if let Some(&top) = centres.last() {
            if top >= fs / 2.0 {
                return Err(Error::InvalidConfig(format!(
                    "top centre frequency {top} Hz is not below Nyquist"
                )));
            }
        }

        let mut filters: Vec<CochlearFilter> = centres
            .iter()
            .zip(&bandwidths)
            .enumerate()
            .map(|(i, (&fc, &bw))| CochlearFilter {
                index: i + 1,
                centre_hz: fc,
                bandwidth_hz: bw,
                kernel: make_kernel(fc, bw, fs),
                synthesis_gain: 1.0,
            })
            .collect();

        let gains = solve_gains(&filters, fs);
        for (f, g) in filters.iter_mut().zip(gains) {
            f.synthesis_gain = g;
        }
        Ok(Self {
            filters,
            sample_rate_hz: config.sample_rate_hz,
        })
    }

    pub fn filters(&self) -> &[CochlearFilter] {
        &self.filters
    }

    pub fn filter(&self, k: usize) -> &CochlearFilter {
        &self.filters[k]
    }

    pub fn num_channels(&self) -> usize {
        self.filters.len()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn centres_hz(&self) -> Vec<f64> {
        self.filters.iter().map(|f| f.centre_hz).collect()
    }

    /// Gain of the full analysis-synthesis chain for a steady cosine.
    pub fn chain_response(&self, f_hz: f64) -> f64 {
        let fs = f64::from(self.sample_rate_hz);
        self.filters
            .iter()
            .map(|f| f.synthesis_gain * f.zero_phase_response(f_hz, fs))
            .sum()
    }

    /// Causal same-length convolution of every channel kernel with the input:
    /// `Y[k][m] = sum_i F_k[i] x[m - i]`.
    pub fn analyze(&self, signal: &AudioSignal) -> Result<SubbandSignals> {
        if signal.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate_hz,
                found: signal.sample_rate_hz(),
            });
        }
        let x = signal.samples();
        let rows = self
            .filters
            .par_iter()
            .map(|f| convolve_same(x, &f.kernel))
            .collect();
        Ok(SubbandSignals {
            rows,
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// `out[m] = sum_k g_k Y[k][m + d_k]`, where `d_k` is the kernel delay of
    /// channel `k`, so every channel is time-aligned before summing.
    pub fn synthesize(&self, subbands: &SubbandSignals) -> Result<AudioSignal> {
        if subbands.num_channels() != self.num_channels() {
            return Err(Error::ShapeMismatch(format!(
                "{} subbands for a {}-channel bank",
                subbands.num_channels(),
                self.num_channels()
            )));
        }
        if subbands.sample_rate_hz != self.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate_hz,
                found: subbands.sample_rate_hz,
            });
        }
        let len = subbands.len();
        let mut out = vec![0.0; len];
        for (f, row) in self.filters.iter().zip(&subbands.rows) {
            let d = f.delay().min(len);
            for (o, &y) in out.iter_mut().zip(&row[d..]) {
                *o += f.synthesis_gain * y;
            }
        }
        AudioSignal::new(out, self.sample_rate_hz)
    }

    /// CSV with one row per channel: index, centre, bandwidth, length, gain.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,centre_hz,bandwidth_hz,kernel_len,synthesis_gain")?;
        for f in &self.filters {
            writeln!(
                out,
                "{},{},{},{},{}",
                f.index,
                f.centre_hz,
                f.bandwidth_hz,
                f.len(),
                f.synthesis_gain
            )?;
        }
        Ok(())
    }
}

fn is_default_layout(config: &CodecConfig) -> bool {
    config.sample_rate_hz == 20_000
        && config.num_channels == 20
        && config.freq_lo_hz == 200.0
        && config.freq_hi_hz == 8000.0
}

fn channel_layout(config: &CodecConfig) -> (Vec<f64>, Vec<f64>) {
    if is_default_layout(config) {
        return (DEFAULT_CENTRES_HZ.to_vec(), DEFAULT_BANDWIDTHS_HZ.to_vec());
    }
    let k = config.num_channels;
    let centres: Vec<f64> = if k == 1 {
        vec![(config.freq_lo_hz * config.freq_hi_hz).sqrt()]
    } else {
        let ratio = (config.freq_hi_hz / config.freq_lo_hz).powf(1.0 / (k - 1) as f64);
        (0..k).map(|i| config.freq_lo_hz * ratio.powi(i as i32)).collect()
    };
    let bandwidths = centres.iter().map(|fc| fc / GENERIC_Q).collect();
    (centres, bandwidths)
}

/// Odd kernel length spanning about four periods of the bandwidth.
pub(crate) fn kernel_len(bandwidth_hz: f64, sample_rate_hz: f64) -> usize {
    let m = ((4.0 * sample_rate_hz / bandwidth_hz).round() as usize).clamp(1, MAX_KERNEL_LEN);
    if m % 2 == 1 {
        m
    } else if m < MAX_KERNEL_LEN {
        m + 1
    } else {
        m - 1
    }
}

/// Hann-windowed cosine centred on the kernel midpoint, mean removed and
/// scaled to unit energy.
fn make_kernel(centre_hz: f64, bandwidth_hz: f64, sample_rate_hz: f64) -> Vec<f64> {
    let m = kernel_len(bandwidth_hz, sample_rate_hz);
    if m < 3 {
        return vec![1.0];
    }
    let c = (m - 1) as f64 / 2.0;
    let w = 2.0 * PI * centre_hz / sample_rate_hz;
    let mut k: Vec<f64> = (0..m)
        .map(|i| {
            let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / (m - 1) as f64).cos();
            hann * (w * (i as f64 - c)).cos()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / m as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

/// Gains that make the chain response exactly 1 at every centre frequency.
/// Falls back to inverting each channel's own peak if the system is singular.
fn solve_gains(filters: &[CochlearFilter], fs: f64) -> Vec<f64> {
    let k = filters.len();
    let a = DMatrix::from_fn(k, k, |row, col| {
        filters[col].zero_phase_response(filters[row].centre_hz, fs)
    });
    let ones = DVector::from_element(k, 1.0);
    match a.clone().lu().solve(&ones) {
        Some(g) if g.iter().all(|v| v.is_finite()) => g.iter().copied().collect(),
        _ => {
            log::warn!("synthesis gain system is singular; using per-channel gains");
            (0..k).map(|i| 1.0 / a[(i, i)]).collect()
        }
    }
}

fn convolve_same(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let m = kernel.len();
    let rev: Vec<f64> = kernel.iter().rev().copied().collect();
    let mut padded = vec![0.0; m - 1 + x.len()];
    padded[m - 1..].copy_from_slice(x);
    (0..x.len())
        .map(|n| {
            padded[n..n + m]
                .iter()
                .zip(&rev)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}
