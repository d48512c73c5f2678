//! PCM audio container and WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// Mono PCM audio with samples normalised to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate_hz).expect("silence is valid")
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_us(&self) -> u32 {
        samples_to_us(self.samples.len(), self.sample_rate_hz)
    }
}

pub(crate) fn samples_to_us(n: usize, sample_rate_hz: u32) -> u32 {
    (n as f64 * 1e6 / f64::from(sample_rate_hz)).round() as u32
}

/// Reads a PCM WAV file. Stereo input is downmixed by averaging; the sample
/// rate is kept as is.
pub fn read_wav(path: &Path) -> Result<AudioSignal> {
    if !path.exists() {
        return Err(Error::NoSuchFile(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::NotPcm(format!("{:?} samples", spec.sample_format)));
    }
    let channels = usize::from(spec.channels);
    if channels == 0 || channels > 2 {
        return Err(Error::MalformedWav(format!(
            "{channels} channels (mono or stereo expected)"
        )));
    }
    let full_scale = f64::from(1u32 << (spec.bits_per_sample - 1));
    let raw: Vec<i32> = reader
        .samples::<i32>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| map_hound(path, e))?;
    if raw.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if raw.len() % channels != 0 {
        return Err(Error::MalformedWav("incomplete sample frame".into()));
    }
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| f64::from(s)).sum::<f64>() / (channels as f64 * full_scale))
        .collect();
    AudioSignal::new(samples, spec.sample_rate)
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Error::NoSuchFile(path.to_path_buf())
        }
        hound::Error::IoError(e) => Error::MalformedWav(e.to_string()),
        hound::Error::Unsupported => Error::NotPcm("compressed or unknown format tag".into()),
        other => Error::MalformedWav(other.to_string()),
    }
}

/// Writes 16-bit mono PCM. Samples beyond `[-1, 1]` are clipped; the number
/// of clipped samples is returned.
pub fn write_wav(path: &Path, signal: &AudioSignal) -> Result<usize> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::MalformedWav(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    let mut clipped = 0;
    for &s in &signal.samples {
        if s.abs() > 1.0 {
            clipped += 1;
        }
        writer.write_sample(quantize_i16(s)).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)?;
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} samples", path.display());
    }
    Ok(clipped)
}

fn quantize_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
