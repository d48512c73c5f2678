//! Framed log-energy spectrogram of the subband signals.

use std::io::Write;

use rayon::prelude::*;

use crate::config::CodecConfig;
use crate::error::{Error, Result};
use crate::filterbank::SubbandSignals;

/// Where each frame sits in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTiming {
    pub window_samples: usize,
    pub stride_samples: usize,
    pub signal_len: usize,
    pub sample_rate_hz: u32,
    /// True when the signal was shorter than one window and a single
    /// zero-padded frame was emitted.
    pub padded: bool,
    centres_us: Vec<f64>,
}

impl FrameTiming {
    pub fn new(
        window_samples: usize,
        stride_samples: usize,
        signal_len: usize,
        sample_rate_hz: u32,
    ) -> Self {
        let (n, padded) = frame_count(signal_len, window_samples, stride_samples);
        let to_us = 1e6 / f64::from(sample_rate_hz);
        let centres_us = if padded {
            vec![signal_len as f64 / 2.0 * to_us]
        } else {
            (0..n)
                .map(|j| (j * stride_samples) as f64 * to_us + window_samples as f64 / 2.0 * to_us)
                .collect()
        };
        Self {
            window_samples,
            stride_samples,
            signal_len,
            sample_rate_hz,
            padded,
            centres_us,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.centres_us.len()
    }

    pub fn centres_us(&self) -> &[f64] {
        &self.centres_us
    }

    /// Frame spacing in microseconds.
    pub fn stride_us(&self) -> f64 {
        self.stride_samples as f64 * 1e6 / f64::from(self.sample_rate_hz)
    }

    pub fn duration_us(&self) -> u32 {
        crate::audio_io::samples_to_us(self.signal_len, self.sample_rate_hz)
    }

    /// Index of the frame whose centre is nearest to `t_us`. Ties go to the
    /// earlier frame.
    pub fn nearest_frame(&self, t_us: f64) -> usize {
        let c = &self.centres_us;
        let n = c.len();
        if n <= 1 {
            return 0;
        }
        let first = c[0];
        let step = self.stride_us();
        let j = ((t_us - first) / step).round().clamp(0.0, (n - 1) as f64) as usize;
        // Guard against rounding at exact midpoints.
        if j > 0 && (t_us - c[j - 1]).abs() <= (c[j] - t_us).abs() {
            j - 1
        } else {
            j
        }
    }
}

/// Returns `(N, padded)`. `N = floor((M - l) / stride) + 1` when the signal
/// holds at least one full window, else a single padded frame.
pub fn frame_count(signal_len: usize, window: usize, stride: usize) -> (usize, bool) {
    if signal_len >= window {
        ((signal_len - window) / stride + 1, false)
    } else {
        (1, true)
    }
}

/// `K x N` matrix of frame energies in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    rows: Vec<Vec<f64>>,
    timing: FrameTiming,
    pub window_ms: f64,
    pub stride_ms: f64,
    pub energy_floor_db: f64,
}

impl Spectrogram {
    /// Wraps an existing matrix. Every row must have one value per frame;
    /// values are clamped to the floor.
    pub fn from_rows(rows: Vec<Vec<f64>>, timing: FrameTiming, config: &CodecConfig) -> Result<Self> {
        let n = timing.num_frames();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch(format!("spectrogram rows must have {n} frames")));
        }
        if rows.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("NaN in spectrogram".into()));
        }
        let floor = config.energy_floor_db;
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.max(floor)).collect())
            .collect();
        Ok(Self {
            rows,
            timing,
            window_ms: config.window_ms,
            stride_ms: config.stride_ms,
            energy_floor_db: floor,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.rows[k][j]
    }

    pub fn num_channels(&self) -> usize {
        self.rows.len()
    }

    pub fn num_frames(&self) -> usize {
        self.timing.num_frames()
    }

    pub fn timing(&self) -> &FrameTiming {
        &self.timing
    }

    pub fn frame_centres_us(&self) -> &[f64] {
        self.timing.centres_us()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_matrix_csv(out, &self.rows)
    }
}

/// Plain CSV, one matrix row per line.
pub fn write_matrix_csv<W: Write, T: std::fmt::Display>(
    mut out: W,
    rows: &[Vec<T>],
) -> std::io::Result<()> {
    for row in rows {
        let line: Vec<String> = row.iter().map(ToString::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// `10 log10` of a frame's energy, floored.
pub fn energy_db(frame: &[f64], floor_db: f64) -> f64 {
    let e: f64 = frame.iter().map(|v| v * v).sum();
    if e > 0.0 {
        (10.0 * e.log10()).max(floor_db)
    } else {
        floor_db
    }
}

/// Frames every subband with the configured window and stride and takes the
/// log energy of each frame.
pub fn frame_energy(subbands: &SubbandSignals, config: &CodecConfig) -> Result<Spectrogram> {
    if subbands.sample_rate_hz() != config.sample_rate_hz {
        return Err(Error::SampleRateMismatch {
            expected: config.sample_rate_hz,
            found: subbands.sample_rate_hz(),
        });
    }
    let l = config.window_samples();
    let hop = config.stride_samples();
    if l == 0 || hop == 0 {
        return Err(Error::InvalidConfig("window and stride must be at least one sample".into()));
    }
    let timing = FrameTiming::new(l, hop, subbands.len(), config.sample_rate_hz);
    if timing.padded {
        log::warn!(
            "signal of {} samples is shorter than the {l}-sample window; emitting one padded frame",
            subbands.len()
        );
    }
    let n = timing.num_frames();
    let floor = config.energy_floor_db;
    let rows = subbands
        .rows()
        .par_iter()
        .map(|row| {
            (0..n)
                .map(|j| {
                    let start = (j * hop).min(row.len());
                    let end = (start + l).min(row.len());
                    energy_db(&row[start..end], floor)
                })
                .collect()
        })
        .collect();
    Ok(Spectrogram {
        rows,
        timing,
        window_ms: config.window_ms,
        stride_ms: config.stride_ms,
        energy_floor_db: floor,
    })
}
