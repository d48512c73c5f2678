//! Spectrogram to spike conversion: threshold (population) code, latency
//! code, and spike removal by masker maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::CodecConfig;
use crate::error::{Error, Result};
use crate::masking::MaskMap;
use crate::spectral::{FrameTiming, Spectrogram};
use crate::spike::{Geometry, NeuronRole, SpikeEvent, SpikePattern};

/// Uniformly spaced encoding levels, shared by every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    levels: Vec<f64>,
}

impl ThresholdSet {
    pub fn uniform(lo_db: f64, hi_db: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("need at least one threshold".into()));
        }
        if count > 1 && !(lo_db < hi_db) {
            return Err(Error::InvalidArgument(format!(
                "threshold range [{lo_db}, {hi_db}] is empty"
            )));
        }
        let levels = if count == 1 {
            vec![lo_db]
        } else {
            let step = (hi_db - lo_db) / (count - 1) as f64;
            (0..count).map(|n| lo_db + n as f64 * step).collect()
        };
        Ok(Self { levels })
    }

    pub fn from_config(config: &CodecConfig) -> Result<Self> {
        Self::uniform(
            config.threshold_lo_db,
            config.threshold_hi_db,
            config.levels_per_channel(),
        )
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, n: usize) -> f64 {
        self.levels[n]
    }

    /// Spacing between adjacent levels (0 for a single level).
    pub fn step(&self) -> f64 {
        match self.levels.as_slice() {
            [a, b, ..] => b - a,
            _ => 0.0,
        }
    }
}

/// Energy curve of one channel as `(time_us, dB)` knots: the floor at time 0,
/// every frame centre, and the floor again at the end of the signal.
fn channel_curve(row: &[f64], timing: &FrameTiming, floor_db: f64) -> Vec<(f64, f64)> {
    let end = f64::from(timing.duration_us());
    let mut pts = Vec::with_capacity(row.len() + 2);
    pts.push((0.0, floor_db));
    pts.extend(timing.centres_us().iter().copied().zip(row.iter().copied()));
    pts.push((end.max(pts.last().map_or(0.0, |p| p.0)), floor_db));
    pts
}

fn crossing_time(t0: f64, a: f64, t1: f64, b: f64, theta: f64) -> f64 {
    t0 + (theta - a) / (b - a) * (t1 - t0)
}

fn to_us(t: f64, duration_us: u32) -> u32 {
    (t.round().max(0.0) as u64).min(u64::from(duration_us)) as u32
}

/// Threshold code. Neuron `n` of a channel fires when the channel's
/// piecewise-linear energy curve rises through level `n`, neuron `L + n` when
/// it falls through it, and neuron `2L` at every local maximum frame at or
/// above the lowest level.
pub fn threshold_encode(spec: &Spectrogram, thr: &ThresholdSet) -> Result<SpikePattern> {
    let levels = thr.levels();
    let geometry = Geometry::threshold(spec.num_channels(), levels.len())?;
    let timing = spec.timing();
    let duration = timing.duration_us();
    let floor = spec.energy_floor_db;
    let mut events = Vec::new();

    for (k, row) in spec.rows().iter().enumerate() {
        let curve = channel_curve(row, timing, floor);
        for w in curve.windows(2) {
            let ((t0, a), (t1, b)) = (w[0], w[1]);
            for (n, &theta) in levels.iter().enumerate() {
                let role = if a < theta && theta <= b {
                    NeuronRole::Onset(n)
                } else if a >= theta && theta > b {
                    NeuronRole::Offset(n)
                } else {
                    continue;
                };
                let t = to_us(crossing_time(t0, a, t1, b, theta), duration);
                events.push(SpikeEvent::new(geometry.neuron_id(k, role), t));
            }
        }

        let last = row.len().saturating_sub(1);
        for (j, &s) in row.iter().enumerate() {
            let rising = j == 0 || s > row[j - 1];
            let not_falling_after = j == last || s >= row[j + 1];
            if rising && not_falling_after && s >= levels[0] {
                let t = to_us(timing.centres_us()[j], duration);
                events.push(SpikeEvent::new(geometry.neuron_id(k, NeuronRole::Peak), t));
            }
        }
    }
    SpikePattern::from_unsorted(geometry, timing.sample_rate_hz, duration, events)
}

/// Spike time of the latency code for normalised energy `e` in the `n`-th
/// (1-based) window of length `period_ms`: `(n - e) * T`.
pub fn latency_spike_time_us(e: f64, n: usize, period_ms: f64) -> u32 {
    ((n as f64 - e) * period_ms * 1000.0).round().max(0.0) as u32
}

/// Latency code: one neuron per channel and one spike per frame. Energies
/// are min-max normalised over the whole utterance, so louder frames fire
/// earlier within their window.
pub fn latency_encode(spec: &Spectrogram, period_ms: f64) -> Result<SpikePattern> {
    if !(period_ms > 0.0) {
        return Err(Error::InvalidArgument(format!("latency window {period_ms} ms")));
    }
    let geometry = Geometry::latency(spec.num_channels())?;
    let all = spec.rows().iter().flatten();
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let n_frames = spec.num_frames();
    let window_end = (n_frames as f64 * period_ms * 1000.0).round() as u32;
    let duration = spec.timing().duration_us().max(window_end);

    let mut events = Vec::with_capacity(spec.num_channels() * n_frames);
    for (k, row) in spec.rows().iter().enumerate() {
        for (j, &s) in row.iter().enumerate() {
            let e = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
            let t = latency_spike_time_us(e, j + 1, period_ms);
            events.push(SpikeEvent::new(geometry.neuron_id(k, NeuronRole::Latency), t));
        }
    }
    SpikePattern::from_unsorted(geometry, spec.timing().sample_rate_hz, duration, events)
}

/// How a spike time maps to a frame of the masker map.
#[derive(Debug, Clone)]
pub enum Binning<'a> {
    /// Nearest frame centre, for threshold-coded patterns.
    NearestFrameCentre(&'a FrameTiming),
    /// `floor(t / period)`, clamped to the last bin, for latency-coded patterns.
    Window { period_us: f64, num_bins: usize },
}

impl Binning<'_> {
    pub fn bin_of(&self, t_us: u32) -> usize {
        match self {
            Binning::NearestFrameCentre(timing) => timing.nearest_frame(f64::from(t_us)),
            Binning::Window { period_us, num_bins } => {
                let j = (f64::from(t_us) / period_us).floor() as usize;
                j.min(num_bins.saturating_sub(1))
            }
        }
    }
}

/// Removes every spike whose channel-frame bin is dropped by `map`.
pub fn apply_mask(pattern: &SpikePattern, map: &MaskMap, binning: &Binning) -> Result<SpikePattern> {
    let geometry = pattern.geometry();
    let (k, n) = map.shape();
    if k != geometry.num_channels() {
        return Err(Error::GeometryMismatch(format!(
            "mask has {k} channels, pattern has {}",
            geometry.num_channels()
        )));
    }
    if let Binning::Window { num_bins, .. } = binning {
        if *num_bins != n {
            return Err(Error::GeometryMismatch(format!(
                "binning has {num_bins} bins, mask has {n} frames"
            )));
        }
    }
    if n == 0 {
        return Ok(pattern.retain(|_| false));
    }
    Ok(pattern.retain(|ev| map.keep(geometry.channel_of(ev.neuron), binning.bin_of(ev.time_us))))
}

/// Drops each spike independently with probability `drop_rate`.
pub fn random_mask(pattern: &SpikePattern, drop_rate: f64, seed: u64) -> Result<SpikePattern> {
    if !(0.0..=1.0).contains(&drop_rate) {
        return Err(Error::InvalidArgument(format!(
            "drop rate {drop_rate} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(pattern.retain(|_| rng.random::<f64>() >= drop_rate))
}

/// Linear-interpolated percentile (the usual `(n - 1) p` rank rule).
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Lower and upper encoding levels from percentiles of all frame energies
/// pooled over a corpus of spectrograms.
pub fn calibrate_threshold_range(
    spectrograms: &[Spectrogram],
    lo_pct: f64,
    hi_pct: f64,
) -> Result<(f64, f64)> {
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::InvalidArgument(format!(
            "percentiles {lo_pct}, {hi_pct}"
        )));
    }
    let mut all: Vec<f64> = spectrograms
        .iter()
        .flat_map(|s| s.rows().iter().flatten().copied())
        .collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("no frames to calibrate on".into()));
    }
    all.sort_by(f64::total_cmp);
    Ok((percentile(&all, lo_pct), percentile(&all, hi_pct)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_from(rows: Vec<Vec<f64>>) -> Spectrogram {
        let n = rows[0].len();
        let timing = FrameTiming::new(600, 300, 600 + 300 * (n - 1), 20_000);
        Spectrogram::from_rows(rows, timing, &CodecConfig::default()).unwrap()
    }

    fn thr5() -> ThresholdSet {
        ThresholdSet::uniform(0.0, 40.0, 5).unwrap()
    }

    fn count_role(p: &SpikePattern, want: fn(NeuronRole) -> bool) -> usize {
        p.events().iter().filter(|e| want(p.geometry().role_of(e.neuron))).count()
    }

    #[test]
    fn thresholds_are_uniform() {
        let t = ThresholdSet::from_config(&CodecConfig::default()).unwrap();
        assert_eq!(t.len(), 15);
        let step = t.step();
        for w in t.levels().windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
        assert!(ThresholdSet::uniform(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn quiet_channel_is_silent() {
        let p = threshold_encode(&spec_from(vec![vec![-5.0; 8]]), &thr5()).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.geometry().num_neurons(), 11);
    }

    #[test]
    fn rising_channel_fires_lower_levels_first() {
        let p = threshold_encode(&spec_from(vec![vec![-5.0, 5.0, 15.0, 25.0]]), &thr5()).unwrap();
        let g = p.geometry();
        let t = |role| p.events().iter().find(|e| g.role_of(e.neuron) == role).unwrap().time_us;
        assert!(t(NeuronRole::Onset(0)) < t(NeuronRole::Onset(1)));
        assert!(t(NeuronRole::Onset(1)) < t(NeuronRole::Onset(2)));
    }

    #[test]
    fn triangle_gives_matched_onsets_offsets_and_one_peak() {
        let p = threshold_encode(&spec_from(vec![vec![-10.0, 20.0, 45.0, 20.0, -10.0]]), &thr5()).unwrap();
        assert_eq!(count_role(&p, |r| matches!(r, NeuronRole::Onset(_))), 5);
        assert_eq!(count_role(&p, |r| matches!(r, NeuronRole::Offset(_))), 5);
        assert_eq!(count_role(&p, |r| r == NeuronRole::Peak), 1);
        // Level 2 (20 dB) is reached exactly at the second frame centre.
        let g = p.geometry();
        let onset2 = p.events().iter().find(|e| g.role_of(e.neuron) == NeuronRole::Onset(2)).unwrap();
        assert_eq!(onset2.time_us, 30_000);
    }

    #[test]
    fn latency_formula_examples() {
        assert_eq!(latency_spike_time_us(1.0, 1, 30.0), 0);
        assert_eq!(latency_spike_time_us(0.25, 1, 30.0), 22_500);
        assert_eq!(latency_spike_time_us(0.5, 3, 10.0), 25_000);
    }

    #[test]
    fn latency_code_has_one_spike_per_frame() {
        let s = spec_from(vec![vec![0.0, 10.0, 20.0], vec![5.0, 15.0, 12.0]]);
        let p = latency_encode(&s, 15.0).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.geometry().neurons_per_channel(), 1);
        // Loudest frame (20 dB, third window) fires at the window start.
        assert!(p.events().contains(&SpikeEvent::new(0, 30_000)));
        // Quietest frame fires at the end of its window.
        assert!(p.events().contains(&SpikeEvent::new(0, 15_000)));
    }

    #[test]
    fn identity_and_null_masks() {
        let s = spec_from(vec![vec![-10.0, 20.0, 45.0, 20.0, -10.0]; 3]);
        let p = threshold_encode(&s, &thr5()).unwrap();
        let b = Binning::NearestFrameCentre(s.timing());
        assert_eq!(apply_mask(&p, &MaskMap::all(true, 3, 5), &b).unwrap(), p);
        assert!(apply_mask(&p, &MaskMap::all(false, 3, 5), &b).unwrap().is_empty());
        assert!(matches!(
            apply_mask(&p, &MaskMap::all(true, 2, 5), &b),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn random_mask_extremes_and_errors() {
        let s = spec_from(vec![vec![-10.0, 20.0, 45.0, 20.0, -10.0]; 3]);
        let p = threshold_encode(&s, &thr5()).unwrap();
        assert_eq!(random_mask(&p, 0.0, 1).unwrap(), p);
        assert!(random_mask(&p, 1.0, 1).unwrap().is_empty());
        assert!(random_mask(&p, 1.5, 1).is_err());
        assert!(random_mask(&p, -0.1, 1).is_err());
    }

    #[test]
    fn random_mask_rate_is_binomial() {
        let g = Geometry::threshold(20, 15).unwrap();
        let events = (0..10_000u32).map(|i| SpikeEvent::new((i % 620) as u16, i)).collect();
        let p = SpikePattern::new(g, 20_000, 10_000, events).unwrap();
        let kept = random_mask(&p, 0.4991, 42).unwrap().len() as f64;
        let n = 10_000.0;
        let q: f64 = 1.0 - 0.4991;
        let sigma = (n * q * (1.0 - q)).sqrt();
        assert!((kept - n * q).abs() <= 3.0 * sigma, "kept {kept}");
        assert_eq!(random_mask(&p, 0.4991, 42).unwrap(), random_mask(&p, 0.4991, 42).unwrap());
    }

    #[test]
    fn percentile_matches_linear_rule() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 5.0), 1.2);
        assert!((percentile(&v, 95.0) - 4.8).abs() < 1e-12);
    }

    fn single_bump(peak: f64) -> Vec<f64> {
        vec![-20.0, peak / 2.0, peak, peak / 2.0, -20.0]
    }

    proptest! {
        #[test]
        fn onset_offset_counts_balance(rows in proptest::collection::vec(proptest::collection::vec(-120.0f64..60.0, 1..30), 1..4)) {
            let len = rows[0].len();
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r.resize(len, 0.0); r }).collect();
            let s = spec_from(rows);
            let p = threshold_encode(&s, &thr5()).unwrap();
            let g = p.geometry();
            for k in 0..s.num_channels() {
                for n in 0..5 {
                    let on = p.events().iter().filter(|e| e.neuron == g.neuron_id(k, NeuronRole::Onset(n))).count();
                    let off = p.events().iter().filter(|e| e.neuron == g.neuron_id(k, NeuronRole::Offset(n))).count();
                    prop_assert!(on.abs_diff(off) <= 1);
                }
            }
        }

        #[test]
        fn louder_bump_fires_a_superset_of_levels(a in 1.0f64..50.0, b in 1.0f64..50.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let s = spec_from(vec![single_bump(lo), single_bump(hi)]);
            let p = threshold_encode(&s, &thr5()).unwrap();
            let g = p.geometry();
            let fired = |k: usize| -> Vec<usize> {
                (0..5).filter(|&n| p.events().iter().any(|e| e.neuron == g.neuron_id(k, NeuronRole::Onset(n)))).collect()
            };
            let (quiet, loud) = (fired(0), fired(1));
            prop_assert!(quiet.iter().all(|n| loud.contains(n)));
        }

        #[test]
        fn masking_only_removes(
            rows in proptest::collection::vec(proptest::collection::vec(-20.0f64..60.0, 10), 3),
            keep in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 10), 3),
            seed in any::<u64>(),
            rate in 0.0f64..1.0,
        ) {
            let s = spec_from(rows);
            let p = threshold_encode(&s, &thr5()).unwrap();
            let masked = apply_mask(&p, &MaskMap::new(keep), &Binning::NearestFrameCentre(s.timing())).unwrap();
            prop_assert!(masked.is_subset_of(&p));
            let random = random_mask(&p, rate, seed).unwrap();
            prop_assert!(random.is_subset_of(&p));
        }

        #[test]
        fn encoding_is_deterministic(rows in proptest::collection::vec(proptest::collection::vec(-20.0f64..60.0, 10), 3)) {
            let s = spec_from(rows);
            let a = threshold_encode(&s, &thr5()).unwrap().to_bytes();
            let b = threshold_encode(&s, &thr5()).unwrap().to_bytes();
            prop_assert_eq!(a, b);
        }
    }
}
