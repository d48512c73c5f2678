//! Objective quality measures and the spike-reduction rate.

use std::path::Path;
use std::process::Command;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Serialize, Serializer};

use crate::audio_io::AudioSignal;
use crate::error::{Error, Result};
use crate::spike::SpikePattern;

/// Search range of the alignment step.
pub const MAX_ALIGN_LAG_MS: f64 = 50.0;

/// Lag (in samples) by which `estimate` trails `reference`, chosen by
/// maximum cross-correlation within `±max_lag`. Ties prefer the smallest
/// absolute lag; an uncorrelated pair gets lag 0.
pub fn best_lag(reference: &[f64], estimate: &[f64], max_lag: usize) -> isize {
    if reference.is_empty() || estimate.is_empty() {
        return 0;
    }
    let n = (reference.len() + estimate.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let padded = |x: &[f64]| {
        let mut v: Vec<Complex<f64>> = x.iter().map(|&s| Complex::new(s, 0.0)).collect();
        v.resize(n, Complex::new(0.0, 0.0));
        v
    };
    let mut a = padded(reference);
    let mut b = padded(estimate);
    fwd.process(&mut a);
    fwd.process(&mut b);
    // r[lag] = sum_i ref[i] est[i + lag]
    let mut r: Vec<Complex<f64>> = a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect();
    inv.process(&mut r);
    let scale = 1.0 / n as f64;
    let at = |lag: isize| {
        let idx = if lag >= 0 { lag as usize } else { n - lag.unsigned_abs() };
        r[idx].re * scale
    };

    let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let tol = 1e-12 * (energy(reference) * energy(estimate)).sqrt();
    let max_lag = max_lag.min(n / 2 - 1) as isize;
    let mut best = (0isize, at(0));
    for mag in 1..=max_lag {
        for lag in [mag, -mag] {
            let v = at(lag);
            if v > best.1 + tol {
                best = (lag, v);
            }
        }
    }
    if best.1 <= tol {
        0
    } else {
        best.0
    }
}

/// Shifts `estimate` by `lag` samples earlier and zero-pads both signals to
/// the longer length.
pub fn align(reference: &[f64], estimate: &[f64], lag: isize) -> (Vec<f64>, Vec<f64>) {
    let shifted: Vec<f64> = if lag >= 0 {
        estimate.iter().skip(lag as usize).copied().collect()
    } else {
        let mut v = vec![0.0; lag.unsigned_abs()];
        v.extend_from_slice(estimate);
        v
    };
    let len = reference.len().max(shifted.len());
    let mut x = reference.to_vec();
    let mut y = shifted;
    x.resize(len, 0.0);
    y.resize(len, 0.0);
    (x, y)
}

fn prepared(x: &AudioSignal, y: &AudioSignal) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.sample_rate_hz() != y.sample_rate_hz() {
        return Err(Error::SampleRateMismatch {
            expected: x.sample_rate_hz(),
            found: y.sample_rate_hz(),
        });
    }
    if x.is_empty() && y.is_empty() {
        return Err(Error::InvalidArgument("both signals are empty".into()));
    }
    let max_lag = (MAX_ALIGN_LAG_MS * f64::from(x.sample_rate_hz()) / 1000.0).round() as usize;
    let lag = best_lag(x.samples(), y.samples(), max_lag);
    Ok(align(x.samples(), y.samples(), lag))
}

/// Root-mean-square error after alignment.
pub fn rmse(x: &AudioSignal, y: &AudioSignal) -> Result<f64> {
    let (a, b) = prepared(x, y)?;
    Ok(rmse_raw(&a, &b))
}

/// Root-mean-square error of two equal-length sequences, no alignment.
pub fn rmse_raw(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let sum: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (sum / a.len() as f64).sqrt()
}

/// Signal-to-distortion ratio in dB after alignment. A zero residual gives
/// `f64::INFINITY`.
pub fn sdr_db(x: &AudioSignal, y: &AudioSignal) -> Result<f64> {
    let (a, b) = prepared(x, y)?;
    sdr_db_raw(&a, &b)
}

/// Signal-to-distortion ratio of two equal-length sequences, no alignment.
pub fn sdr_db_raw(a: &[f64], b: &[f64]) -> Result<f64> {
    assert_eq!(a.len(), b.len());
    let signal: f64 = a.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::ZeroEnergyReference);
    }
    let residual: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / residual).log10())
}

/// Percentage of `raw` spikes removed in `masked`.
pub fn spike_reduction(raw: &SpikePattern, masked: &SpikePattern) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("raw pattern has no spikes".into()));
    }
    if !masked.is_subset_of(raw) {
        return Err(Error::InvalidArgument("masked pattern is not a subset of the raw pattern".into()));
    }
    Ok(100.0 * (1.0 - masked.len() as f64 / raw.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PesqOutcome {
    Score(f64),
    Unavailable(String),
}

/// Runs `tool <reference> <degraded>` and takes the last number printed on
/// stdout as the score. Any failure is reported as unavailable.
pub fn pesq_external(reference: &Path, degraded: &Path, tool: &Path) -> PesqOutcome {
    let output = match Command::new(tool).arg(reference).arg(degraded).output() {
        Ok(o) => o,
        Err(e) => return PesqOutcome::Unavailable(format!("{}: {e}", tool.display())),
    };
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr).trim().to_string();
        return PesqOutcome::Unavailable(format!("{} exited with {}: {stderr}", tool.display(), output.status));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    match stdout
        .split(|c: char| c.is_whitespace() || c == ',' || c == '=' || c == ':')
        .filter_map(|tok| tok.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .last()
    {
        Some(v) => PesqOutcome::Score(v),
        None => PesqOutcome::Unavailable(format!("no score in output of {}", tool.display())),
    }
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// JSON metrics report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rmse: f64,
    #[serde(serialize_with = "ser_db")]
    pub sdr_db: f64,
    pub reduction_pct: Option<f64>,
    pub pesq: Option<f64>,
}
