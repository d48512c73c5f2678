use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no such file: {0}")]
    NoSuchFile(PathBuf),

    #[error("malformed WAV: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV encoding: {0} (only integer PCM is accepted)")]
    NotPcm(String),

    #[error("audio contains no samples")]
    EmptyAudio,

    #[error("not a spike file")]
    NotSpikeFile,

    #[error("spike file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("malformed spike file: {0}")]
    MalformedSpikeFile(String),

    #[error("spike events are not strictly sorted by (time, neuron) at index {0}")]
    UnsortedEvents(usize),

    #[error("neuron id {neuron} out of range (pattern has {num_neurons} neurons)")]
    NeuronOutOfRange { neuron: u32, num_neurons: u32 },

    #[error("spike time {time_us} us exceeds pattern duration {duration_us} us")]
    TimeOutOfRange { time_us: u32, duration_us: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reference signal has zero energy")]
    ZeroEnergyReference,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NoSuchFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
