//! Simultaneous and temporal masking thresholds, and the keep/drop map
//! derived from them.

use std::io::Write;

use rayon::prelude::*;

use crate::config::CodecConfig;
use crate::error::{Error, Result};
use crate::spectral::{write_matrix_csv, Spectrogram};

/// Absolute threshold of hearing in quiet, dB.
pub fn absolute_threshold_db(f_hz: f64) -> Result<f64> {
    if !(f_hz > 0.0) || !f_hz.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "hearing threshold needs a positive frequency, got {f_hz}"
        )));
    }
    let f = f_hz / 1000.0;
    Ok(3.64 * f.powf(-0.8) - 6.5 * (-0.6 * (f - 3.3).powi(2)).exp() + 0.001 * f.powi(4))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Simultaneous,
    Temporal,
    Combined,
}

/// `K x N` masking levels in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLevels {
    pub kind: MaskKind,
    rows: Vec<Vec<f64>>,
}

impl MaskLevels {
    pub fn new(kind: MaskKind, rows: Vec<Vec<f64>>) -> Self {
        Self { kind, rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.rows.first().map_or(0, Vec::len))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_matrix_csv(out, &self.rows)
    }
}

/// Binary keep (`true`) / drop (`false`) matrix over channel-frame bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMap {
    rows: Vec<Vec<bool>>,
}

impl MaskMap {
    pub fn new(rows: Vec<Vec<bool>>) -> Self {
        Self { rows }
    }

    pub fn all(value: bool, num_channels: usize, num_frames: usize) -> Self {
        Self {
            rows: vec![vec![value; num_frames]; num_channels],
        }
    }

    pub fn keep(&self, i: usize, j: usize) -> bool {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.rows.first().map_or(0, Vec::len))
    }

    pub fn kept_fraction(&self) -> f64 {
        let total: usize = self.rows.iter().map(Vec::len).sum();
        if total == 0 {
            return 1.0;
        }
        let kept = self.rows.iter().flatten().filter(|&&b| b).count();
        kept as f64 / total as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let as_int: Vec<Vec<u8>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|&b| u8::from(b)).collect())
            .collect();
        write_matrix_csv(out, &as_int)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingParams {
    pub spreading_offset_db: f64,
    pub spreading_slope_low_db: f64,
    pub spreading_slope_high_db: f64,
    pub temporal_decay_c: f64,
    pub hearing_reference_db: f64,
}

impl MaskingParams {
    pub fn from_config(config: &CodecConfig) -> Self {
        Self {
            spreading_offset_db: config.spreading_offset_db,
            spreading_slope_low_db: config.spreading_slope_low_db,
            spreading_slope_high_db: config.spreading_slope_high_db,
            temporal_decay_c: config.temporal_decay_c,
            hearing_reference_db: config.hearing_reference_db,
        }
    }
}

/// Hearing threshold plus spreading from every other channel in the same
/// frame. Spreading towards a lower channel (`i < i'`) uses the low slope,
/// towards a higher channel the high slope.
pub fn simultaneous_mask(
    spec: &Spectrogram,
    centres_hz: &[f64],
    params: &MaskingParams,
) -> Result<MaskLevels> {
    let k = spec.num_channels();
    if centres_hz.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} centre frequencies for {k} spectrogram channels",
            centres_hz.len()
        )));
    }
    let quiet = centres_hz
        .iter()
        .map(|&f| absolute_threshold_db(f).map(|t| t + params.hearing_reference_db))
        .collect::<Result<Vec<_>>>()?;
    let n = spec.num_frames();
    let rows = (0..k)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut m = quiet[i];
                    for ip in (0..k).filter(|&ip| ip != i) {
                        let slope = if i < ip {
                            params.spreading_slope_low_db
                        } else {
                            params.spreading_slope_high_db
                        };
                        let spread = spec.get(ip, j)
                            - params.spreading_offset_db
                            - slope * ip.abs_diff(i) as f64;
                        m = m.max(spread);
                    }
                    m
                })
                .collect()
        })
        .collect();
    Ok(MaskLevels::new(MaskKind::Simultaneous, rows))
}

/// Sequential masker scan over one channel. The first frame is a masker; a
/// later frame becomes the new masker when it rises above the decayed level
/// of the current one, which is `reference + c^n (p - reference)` at `n`
/// frames after it.
pub fn temporal_scan(energies: &[f64], c: f64, reference_db: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(energies.len());
    let mut masker = None::<(f64, i32)>;
    for &s in energies {
        let level = match masker {
            None => {
                masker = Some((s, 0));
                s
            }
            Some((p, n)) => {
                let decayed = reference_db + c.powi(n + 1) * (p - reference_db);
                if s > decayed {
                    masker = Some((s, 0));
                    s
                } else {
                    masker = Some((p, n + 1));
                    decayed
                }
            }
        };
        out.push(level);
    }
    out
}

pub fn temporal_mask(spec: &Spectrogram, params: &MaskingParams) -> Result<MaskLevels> {
    let c = params.temporal_decay_c;
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidArgument(format!("decay factor {c} outside (0, 1]")));
    }
    let rows = spec
        .rows()
        .par_iter()
        .map(|row| temporal_scan(row, c, params.hearing_reference_db))
        .collect();
    Ok(MaskLevels::new(MaskKind::Temporal, rows))
}

/// Elementwise minimum.
pub fn combine_masks(a: &MaskLevels, b: &MaskLevels) -> Result<MaskLevels> {
    if a.shape() != b.shape() || a.rows.iter().zip(&b.rows).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::ShapeMismatch(format!(
            "cannot combine {:?} and {:?} masks",
            a.shape(),
            b.shape()
        )));
    }
    let rows = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.min(*q)).collect())
        .collect();
    Ok(MaskLevels::new(MaskKind::Combined, rows))
}

/// Keeps bin `(i, j)` when `s_ij >= m_ij`.
pub fn masker_map(spec: &Spectrogram, levels: &MaskLevels) -> Result<MaskMap> {
    let shape = (spec.num_channels(), spec.num_frames());
    if levels.shape() != shape && !(shape.1 == 0 && levels.rows.len() == shape.0) {
        return Err(Error::ShapeMismatch(format!(
            "{:?} mask for a {shape:?} spectrogram",
            levels.shape()
        )));
    }
    let rows = spec
        .rows()
        .iter()
        .zip(&levels.rows)
        .map(|(s, m)| s.iter().zip(m).map(|(a, b)| a >= b).collect())
        .collect();
    Ok(MaskMap::new(rows))
}

/// Simultaneous and temporal masks, their combination and the resulting map.
#[derive(Debug, Clone)]
pub struct MaskAnalysis {
    pub simultaneous: MaskLevels,
    pub temporal: MaskLevels,
    pub combined: MaskLevels,
    pub map: MaskMap,
}

pub fn analyze_masking(
    spec: &Spectrogram,
    centres_hz: &[f64],
    params: &MaskingParams,
) -> Result<MaskAnalysis> {
    let simultaneous = simultaneous_mask(spec, centres_hz, params)?;
    let temporal = temporal_mask(spec, params)?;
    let combined = combine_masks(&simultaneous, &temporal)?;
    let map = masker_map(spec, &combined)?;
    Ok(MaskAnalysis {
        simultaneous,
        temporal,
        combined,
        map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FrameTiming;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unreferenced() -> MaskingParams {
        MaskingParams {
            hearing_reference_db: 0.0,
            ..MaskingParams::from_config(&CodecConfig::default())
        }
    }

    fn spec_from(rows: Vec<Vec<f64>>) -> Spectrogram {
        let n = rows[0].len();
        let timing = FrameTiming::new(600, 300, 600 + 300 * (n - 1), 20_000);
        Spectrogram::from_rows(rows, timing, &CodecConfig::default()).unwrap()
    }

    fn centres(k: usize) -> Vec<f64> {
        crate::filterbank::DEFAULT_CENTRES_HZ[..k].to_vec()
    }

    /// Reference values computed separately at 50-digit precision.
    #[test]
    fn hearing_threshold_reference_points() {
        assert!((absolute_threshold_db(1000.0).unwrap() - 3.369_066_526).abs() < 1e-8);
        assert!((absolute_threshold_db(3300.0).unwrap() - (-4.980_884_944)).abs() < 1e-8);
        assert!((absolute_threshold_db(8000.0).unwrap() - 4.785_639_641).abs() < 1e-8);
        assert!(absolute_threshold_db(0.0).is_err());
        assert!(absolute_threshold_db(-5.0).is_err());
    }

    #[test]
    fn silent_spectrogram_masks_at_the_hearing_threshold() {
        let s = spec_from(vec![vec![-100.0; 5]; 20]);
        let m = simultaneous_mask(&s, &centres(20), &unreferenced()).unwrap();
        for i in 0..20 {
            let t = absolute_threshold_db(centres(20)[i]).unwrap();
            assert!(m.rows()[i].iter().all(|&v| v == t));
        }
    }

    #[test]
    fn single_loud_masker_spreads_upward() {
        let mut rows = vec![vec![-100.0; 3]; 20];
        rows[9][1] = 80.0;
        let p = unreferenced();
        let m = simultaneous_mask(&spec_from(rows), &centres(20), &p).unwrap();
        assert_eq!(m.get(10, 1), 80.0 - p.spreading_offset_db - p.spreading_slope_high_db);
        assert_eq!(m.get(8, 1), 80.0 - p.spreading_offset_db - p.spreading_slope_low_db);
        // The masker does not mask itself.
        assert_eq!(m.get(9, 1), absolute_threshold_db(centres(20)[9]).unwrap());
    }

    #[test]
    fn neighbouring_maskers_can_bury_a_quiet_event() {
        // A 20 dB event with a 50 dB masker one channel below it.
        let mut rows = vec![vec![-100.0; 1]; 20];
        rows[9][0] = 20.0;
        rows[8][0] = 50.0;
        let p = unreferenced();
        let m = simultaneous_mask(&spec_from(rows.clone()), &centres(20), &p).unwrap();
        assert_eq!(m.get(9, 0), 23.0);
        let map = masker_map(&spec_from(rows), &m).unwrap();
        assert!(!map.keep(9, 0));
    }

    #[test]
    fn temporal_examples() {
        assert_eq!(temporal_scan(&[60.0, 0.0, 0.0], 0.5, 0.0), vec![60.0, 30.0, 15.0]);
        assert_eq!(temporal_scan(&[60.0, 10.0, 59.0, 61.0], 1.0, 0.0), vec![60.0, 60.0, 60.0, 61.0]);
        let out = temporal_scan(&[60.0, 40.0, 50.0, 20.0], 0.8, 0.0);
        let expect = [60.0, 48.0, 50.0, 40.0];
        for (a, b) in out.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_decay_approaches_reference() {
        let out = temporal_scan(&[0.0, -100.0, -100.0], 0.5, -20.0);
        assert_eq!(out, vec![0.0, -10.0, -15.0]);
    }

    #[test]
    fn bad_decay_factor() {
        let s = spec_from(vec![vec![0.0; 2]]);
        let p = MaskingParams {
            temporal_decay_c: 0.0,
            ..unreferenced()
        };
        assert!(temporal_mask(&s, &p).is_err());
    }

    #[test]
    fn combine_and_map_basics() {
        let a = MaskLevels::new(MaskKind::Simultaneous, vec![vec![10.0, 5.0]]);
        let b = MaskLevels::new(MaskKind::Temporal, vec![vec![23.0, 5.0]]);
        assert_eq!(combine_masks(&a, &a).unwrap().rows(), a.rows());
        assert_eq!(combine_masks(&a, &b).unwrap().rows(), &[vec![10.0, 5.0]]);
        let s = spec_from(vec![vec![10.0, 4.0]]);
        assert_eq!(masker_map(&s, &a).unwrap().rows(), &[vec![true, false]]);
        let low = MaskLevels::new(MaskKind::Combined, vec![vec![f64::NEG_INFINITY; 2]]);
        assert_eq!(masker_map(&s, &low).unwrap().rows(), &[vec![true, true]]);
        let wrong = MaskLevels::new(MaskKind::Combined, vec![vec![0.0; 3]]);
        assert!(combine_masks(&a, &wrong).is_err());
        assert!(masker_map(&s, &wrong).is_err());
    }

    #[test]
    fn combine_matches_loop_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rand_rows = || -> Vec<Vec<f64>> {
            (0..20).map(|_| (0..50).map(|_| rng.random_range(-100.0..100.0)).collect()).collect()
        };
        let a = MaskLevels::new(MaskKind::Simultaneous, rand_rows());
        let b = MaskLevels::new(MaskKind::Temporal, rand_rows());
        let c = combine_masks(&a, &b).unwrap();
        for i in 0..20 {
            for j in 0..50 {
                let expect = if a.get(i, j) < b.get(i, j) { a.get(i, j) } else { b.get(i, j) };
                assert_eq!(c.get(i, j), expect);
            }
        }
    }

    fn energies() -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-100.0f64..80.0, 12), 6)
    }

    proptest! {
        #[test]
        fn combined_is_below_both(rows in energies()) {
            let s = spec_from(rows);
            let p = MaskingParams::from_config(&CodecConfig::default());
            let a = analyze_masking(&s, &centres(6), &p).unwrap();
            for i in 0..6 {
                for j in 0..12 {
                    prop_assert!(a.combined.get(i, j) <= a.simultaneous.get(i, j));
                    prop_assert!(a.combined.get(i, j) <= a.temporal.get(i, j));
                }
            }
        }

        #[test]
        fn temporal_maskers_are_never_masked(rows in energies()) {
            let s = spec_from(rows.clone());
            let p = MaskingParams::from_config(&CodecConfig::default());
            let a = analyze_masking(&s, &centres(6), &p).unwrap();
            for (i, row) in rows.iter().enumerate() {
                for j in 0..row.len() {
                    if a.temporal.get(i, j) == row[j] {
                        prop_assert!(a.map.keep(i, j));
                    }
                }
            }
        }

        #[test]
        fn raising_an_entry_never_lowers_a_mask(rows in energies(), i in 0usize..6, j in 0usize..12, bump in 0.0f64..60.0) {
            let p = MaskingParams::from_config(&CodecConfig::default());
            let before = analyze_masking(&spec_from(rows.clone()), &centres(6), &p).unwrap();
            let mut raised = rows;
            raised[i][j] += bump;
            let after = analyze_masking(&spec_from(raised), &centres(6), &p).unwrap();
            for (x, y) in [(&before.simultaneous, &after.simultaneous), (&before.temporal, &after.temporal), (&before.combined, &after.combined)] {
                for a in 0..6 {
                    for b in 0..12 {
                        prop_assert!(y.get(a, b) >= x.get(a, b) - 1e-9);
                    }
                }
            }
        }

        #[test]
        fn shapes_are_preserved(rows in energies()) {
            let s = spec_from(rows);
            let a = analyze_masking(&s, &centres(6), &MaskingParams::from_config(&CodecConfig::default())).unwrap();
            prop_assert_eq!(a.simultaneous.shape(), (6, 12));
            prop_assert_eq!(a.temporal.shape(), (6, 12));
            prop_assert_eq!(a.combined.shape(), (6, 12));
            prop_assert_eq!(a.map.shape(), (6, 12));
        }
    }
}
