//! Spike codec for speech.
//!
//! Audio is split into constant-Q cochlear channels, framed into a log-energy
//! spectrogram, thinned by a psychoacoustic masker map and encoded as
//! threshold-crossing spikes. The decoder rebuilds per-channel envelopes from
//! the spikes and resynthesises audio through the same filter bank.
//!
//! ```no_run
//! use spikecodec::{read_wav, Codec, CodecConfig, MaskMode};
//!
//! let codec = Codec::new(CodecConfig::default())?;
//! let audio = read_wav("speech.wav".as_ref())?;
//! let enc = codec.encode(&audio, MaskMode::Perceptual)?;
//! println!("{} spikes, {:?}% removed", enc.pattern.len(), enc.reduction_pct());
//! let decoded = codec.decode(&enc.pattern)?;
//! # Ok::<(), spikecodec::Error>(())
//! ```

pub mod audio_io;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod filterbank;
pub mod lif_probe;
pub mod masking;
pub mod metrics;
pub mod pipeline;
pub mod spectral;
pub mod spike;

pub use audio_io::{read_wav, write_wav, AudioSignal};
pub use config::CodecConfig;
pub use error::{Error, Result};
pub use filterbank::{CochlearFilterBank, SubbandSignals};
pub use pipeline::{Codec, Encoding, MaskMode};
pub use spectral::Spectrogram;
pub use spike::{read_spikes, write_spikes, Geometry, SpikeEvent, SpikePattern};
