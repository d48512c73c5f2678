//! Spike patterns and the `SPKE` event file.
//!
//! File layout, all little-endian:
//!
//! ```text
//! offset size field
//!      0    4 magic "SPKE"
//!      4    2 version (1)
//!      6    2 num_neurons
//!      8    2 num_channels
//!     10    2 thresholds_per_channel (neurons per channel)
//!     12    4 sample_rate
//!     16    4 duration_us
//!     20    4 event_count
//!     24    8 * event_count records: neuron_id u16, reserved u16 (= 0), time_us u32
//! ```
//!
//! Records are strictly increasing in `(time_us, neuron_id)`.

use std::cmp::Ordering;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const SPIKE_MAGIC: &[u8; 4] = b"SPKE";
pub const SPIKE_FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 8;

/// How the neurons of one channel are allocated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronLayout {
    /// `levels` onset neurons, `levels` offset neurons, then one peak marker.
    Threshold { levels: usize },
    /// A single latency-coded neuron per channel.
    Latency,
}

/// What a given neuron encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronRole {
    Onset(usize),
    Offset(usize),
    Peak,
    Latency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    num_channels: usize,
    neurons_per_channel: usize,
}

impl Geometry {
    pub fn new(num_channels: usize, neurons_per_channel: usize) -> Result<Self> {
        if num_channels == 0 {
            return Err(Error::GeometryMismatch("zero channels".into()));
        }
        if neurons_per_channel != 1 && (neurons_per_channel < 3 || neurons_per_channel % 2 == 0) {
            return Err(Error::GeometryMismatch(format!(
                "{neurons_per_channel} neurons per channel is neither a latency (1) nor a threshold (2L+1) layout"
            )));
        }
        if num_channels * neurons_per_channel > usize::from(u16::MAX) {
            return Err(Error::GeometryMismatch("more than 65535 neurons".into()));
        }
        Ok(Self {
            num_channels,
            neurons_per_channel,
        })
    }

    pub fn threshold(num_channels: usize, levels: usize) -> Result<Self> {
        Self::new(num_channels, 2 * levels + 1)
    }

    pub fn latency(num_channels: usize) -> Result<Self> {
        Self::new(num_channels, 1)
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn neurons_per_channel(&self) -> usize {
        self.neurons_per_channel
    }

    pub fn num_neurons(&self) -> usize {
        self.num_channels * self.neurons_per_channel
    }

    pub fn layout(&self) -> NeuronLayout {
        if self.neurons_per_channel == 1 {
            NeuronLayout::Latency
        } else {
            NeuronLayout::Threshold {
                levels: (self.neurons_per_channel - 1) / 2,
            }
        }
    }

    pub fn channel_of(&self, neuron: u16) -> usize {
        usize::from(neuron) / self.neurons_per_channel
    }

    pub fn role_of(&self, neuron: u16) -> NeuronRole {
        let local = usize::from(neuron) % self.neurons_per_channel;
        match self.layout() {
            NeuronLayout::Latency => NeuronRole::Latency,
            NeuronLayout::Threshold { levels } if local < levels => NeuronRole::Onset(local),
            NeuronLayout::Threshold { levels } if local < 2 * levels => {
                NeuronRole::Offset(local - levels)
            }
            NeuronLayout::Threshold { .. } => NeuronRole::Peak,
        }
    }

    pub fn neuron_id(&self, channel: usize, role: NeuronRole) -> u16 {
        let local = match (self.layout(), role) {
            (NeuronLayout::Threshold { .. }, NeuronRole::Onset(n)) => n,
            (NeuronLayout::Threshold { levels }, NeuronRole::Offset(n)) => levels + n,
            (NeuronLayout::Threshold { levels }, NeuronRole::Peak) => 2 * levels,
            (NeuronLayout::Latency, NeuronRole::Latency) => 0,
            (layout, role) => panic!("role {role:?} does not exist in layout {layout:?}"),
        };
        (channel * self.neurons_per_channel + local) as u16
    }
}

/// One spike. Ordered by time first, then neuron id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpikeEvent {
    pub neuron: u16,
    pub time_us: u32,
}

impl SpikeEvent {
    pub fn new(neuron: u16, time_us: u32) -> Self {
        Self { neuron, time_us }
    }
}

impl Ord for SpikeEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time_us, self.neuron).cmp(&(other.time_us, other.neuron))
    }
}

impl PartialOrd for SpikeEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A validated, time-ordered set of spike events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikePattern {
    geometry: Geometry,
    sample_rate_hz: u32,
    duration_us: u32,
    events: Vec<SpikeEvent>,
}

impl SpikePattern {
    /// Validates ordering, neuron range and time range.
    pub fn new(
        geometry: Geometry,
        sample_rate_hz: u32,
        duration_us: u32,
        events: Vec<SpikeEvent>,
    ) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        let num_neurons = geometry.num_neurons() as u32;
        for (i, ev) in events.iter().enumerate() {
            if u32::from(ev.neuron) >= num_neurons {
                return Err(Error::NeuronOutOfRange {
                    neuron: u32::from(ev.neuron),
                    num_neurons,
                });
            }
            if ev.time_us > duration_us {
                return Err(Error::TimeOutOfRange {
                    time_us: ev.time_us,
                    duration_us,
                });
            }
            if i > 0 && events[i - 1] >= *ev {
                return Err(Error::UnsortedEvents(i));
            }
        }
        Ok(Self {
            geometry,
            sample_rate_hz,
            duration_us,
            events,
        })
    }

    /// Sorts and de-duplicates before validating.
    pub fn from_unsorted(
        geometry: Geometry,
        sample_rate_hz: u32,
        duration_us: u32,
        mut events: Vec<SpikeEvent>,
    ) -> Result<Self> {
        events.sort_unstable();
        events.dedup();
        Self::new(geometry, sample_rate_hz, duration_us, events)
    }

    pub fn empty(geometry: Geometry, sample_rate_hz: u32, duration_us: u32) -> Self {
        Self::new(geometry, sample_rate_hz, duration_us, Vec::new()).expect("empty pattern is valid")
    }

    /// Same header, a subset of the events. Order is preserved, so the result
    /// stays valid.
    pub fn retain(&self, mut keep: impl FnMut(&SpikeEvent) -> bool) -> Self {
        Self {
            events: self.events.iter().copied().filter(|e| keep(e)).collect(),
            ..self.clone()
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_us(&self) -> u32 {
        self.duration_us
    }

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// True when every event of `self` also occurs in `other`.
    pub fn is_subset_of(&self, other: &SpikePattern) -> bool {
        let mut theirs = other.events.iter().peekable();
        'outer: for ev in &self.events {
            while let Some(candidate) = theirs.next() {
                match candidate.cmp(ev) {
                    Ordering::Less => continue,
                    Ordering::Equal => continue 'outer,
                    Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.events.len());
        out.extend_from_slice(SPIKE_MAGIC);
        // Writes into a Vec cannot fail.
        out.write_u16::<LittleEndian>(SPIKE_FORMAT_VERSION).unwrap();
        out.write_u16::<LittleEndian>(self.geometry.num_neurons() as u16).unwrap();
        out.write_u16::<LittleEndian>(self.geometry.num_channels as u16).unwrap();
        out.write_u16::<LittleEndian>(self.geometry.neurons_per_channel as u16).unwrap();
        out.write_u32::<LittleEndian>(self.sample_rate_hz).unwrap();
        out.write_u32::<LittleEndian>(self.duration_us).unwrap();
        out.write_u32::<LittleEndian>(self.events.len() as u32).unwrap();
        for ev in &self.events {
            out.write_u16::<LittleEndian>(ev.neuron).unwrap();
            out.write_u16::<LittleEndian>(0).unwrap();
            out.write_u32::<LittleEndian>(ev.time_us).unwrap();
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != SPIKE_MAGIC {
            return Err(Error::NotSpikeFile);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::MalformedSpikeFile(format!(
                "header truncated at {} bytes",
                bytes.len()
            )));
        }
        let short = |_| Error::MalformedSpikeFile("unexpected end of data".into());
        let mut cur = Cursor::new(&bytes[4..]);
        let version = cur.read_u16::<LittleEndian>().map_err(short)?;
        if version != SPIKE_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: SPIKE_FORMAT_VERSION,
            });
        }
        let num_neurons = cur.read_u16::<LittleEndian>().map_err(short)?;
        let num_channels = cur.read_u16::<LittleEndian>().map_err(short)?;
        let per_channel = cur.read_u16::<LittleEndian>().map_err(short)?;
        let sample_rate = cur.read_u32::<LittleEndian>().map_err(short)?;
        let duration_us = cur.read_u32::<LittleEndian>().map_err(short)?;
        let count = cur.read_u32::<LittleEndian>().map_err(short)? as usize;

        let geometry = Geometry::new(usize::from(num_channels), usize::from(per_channel))?;
        if geometry.num_neurons() != usize::from(num_neurons) {
            return Err(Error::GeometryMismatch(format!(
                "header says {num_neurons} neurons but {num_channels} x {per_channel} = {}",
                geometry.num_neurons()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::MalformedSpikeFile("zero sample rate".into()));
        }
        let expected_len = count
            .checked_mul(RECORD_LEN)
            .and_then(|n| n.checked_add(HEADER_LEN));
        if expected_len != Some(bytes.len()) {
            return Err(Error::MalformedSpikeFile(format!(
                "{} bytes for {count} events",
                bytes.len()
            )));
        }

        let mut events = Vec::with_capacity(count);
        for _ in 0..count {
            let neuron = cur.read_u16::<LittleEndian>().map_err(short)?;
            let reserved = cur.read_u16::<LittleEndian>().map_err(short)?;
            let time_us = cur.read_u32::<LittleEndian>().map_err(short)?;
            if reserved != 0 {
                return Err(Error::MalformedSpikeFile("non-zero reserved field".into()));
            }
            events.push(SpikeEvent { neuron, time_us });
        }
        Self::new(geometry, sample_rate, duration_us, events)
    }
}

pub fn write_spikes(path: &Path, pattern: &SpikePattern) -> Result<()> {
    std::fs::write(path, pattern.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_spikes(path: &Path) -> Result<SpikePattern> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    SpikePattern::from_bytes(&bytes)
}

/// Debug dump, one `{"n":id,"t":us}` object per line.
pub fn write_events_jsonl<W: Write>(mut out: W, pattern: &SpikePattern) -> std::io::Result<()> {
    for ev in pattern.events() {
        writeln!(out, "{{\"n\":{},\"t\":{}}}", ev.neuron, ev.time_us)?;
    }
    Ok(())
}
