//! Free (non-resetting) membrane potential of a leaky integrate-and-fire
//! neuron driven by a spike pattern. Diagnostic only, nothing is trained.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spike::SpikePattern;

#[derive(Debug, Clone, PartialEq)]
pub struct LifParams {
    pub tau_m_ms: f64,
    pub tau_s_ms: f64,
    pub threshold: f64,
    /// One synaptic weight per input neuron.
    pub weights: Vec<f64>,
}

impl LifParams {
    pub fn new(weights: Vec<f64>) -> Self {
        Self {
            tau_m_ms: 20.0,
            tau_s_ms: 5.0,
            threshold: 1.0,
            weights,
        }
    }

    /// Weights drawn uniformly from `[-1, 1)`.
    pub fn random(num_neurons: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new((0..num_neurons).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau_s_ms > 0.0 && self.tau_m_ms > self.tau_s_ms) {
            return Err(Error::InvalidArgument(format!(
                "need tau_m > tau_s > 0, got tau_m {} tau_s {}",
                self.tau_m_ms, self.tau_s_ms
            )));
        }
        Ok(())
    }

    /// Time of the kernel maximum, ms.
    pub fn peak_time_ms(&self) -> f64 {
        let (m, s) = (self.tau_m_ms, self.tau_s_ms);
        (m / s).ln() * m * s / (m - s)
    }

    /// Scale that makes the kernel peak exactly 1.
    pub fn v0(&self) -> f64 {
        let t = self.peak_time_ms();
        1.0 / ((-t / self.tau_m_ms).exp() - (-t / self.tau_s_ms).exp())
    }

    /// Postsynaptic kernel at `t_ms` after a spike.
    pub fn kernel(&self, t_ms: f64) -> f64 {
        if t_ms < 0.0 {
            return 0.0;
        }
        self.v0() * ((-t_ms / self.tau_m_ms).exp() - (-t_ms / self.tau_s_ms).exp())
    }
}

/// `V(i dt)` for `i = 0 ..= duration / dt`, summing the kernel over every
/// input spike at or before each sample time.
pub fn free_potential(pattern: &SpikePattern, params: &LifParams, dt_ms: f64) -> Result<Vec<f64>> {
    if !(dt_ms > 0.0) || !dt_ms.is_finite() {
        return Err(Error::InvalidArgument(format!("time step {dt_ms} ms")));
    }
    params.validate()?;
    let num_neurons = pattern.geometry().num_neurons();
    if params.weights.len() != num_neurons {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {num_neurons} neurons",
            params.weights.len()
        )));
    }
    let duration_ms = f64::from(pattern.duration_us()) / 1000.0;
    let steps = (duration_ms / dt_ms).floor() as usize + 1;
    let v0 = params.v0();
    let (tm, ts) = (params.tau_m_ms, params.tau_s_ms);

    // Two exponential traces, advanced exactly between events.
    let (mut slow, mut fast, mut t_state) = (0.0f64, 0.0f64, 0.0f64);
    let mut advance = |to: f64, slow: &mut f64, fast: &mut f64| {
        let d = to - t_state;
        if d > 0.0 {
            *slow *= (-d / tm).exp();
            *fast *= (-d / ts).exp();
            t_state = to;
        }
    };
    let events = pattern.events();
    let mut next = 0;
    let mut trace = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = i as f64 * dt_ms;
        while next < events.len() && f64::from(events[next].time_us) / 1000.0 <= t {
            let ev = events[next];
            advance(f64::from(ev.time_us) / 1000.0, &mut slow, &mut fast);
            let w = params.weights[usize::from(ev.neuron)];
            slow += w;
            fast += w;
            next += 1;
        }
        advance(t, &mut slow, &mut fast);
        trace.push(v0 * (slow - fast));
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    /// Set when either trace is constant, in which case `value` is 0.
    pub degenerate: bool,
}

/// Pearson correlation of two equal-length traces.
pub fn trace_similarity(a: &[f64], b: &[f64]) -> Result<Similarity> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "traces have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if a.is_empty() || saa == 0.0 || sbb == 0.0 {
        return Ok(Similarity {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Similarity {
        value: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike::{Geometry, SpikeEvent};
    use proptest::prelude::*;
    use rand::Rng;

    fn geo() -> Geometry {
        Geometry::threshold(2, 2).unwrap()
    }

    fn pattern(events: Vec<SpikeEvent>, duration_us: u32) -> SpikePattern {
        SpikePattern::from_unsorted(geo(), 20_000, duration_us, events).unwrap()
    }

    #[test]
    fn empty_pattern_is_flat_zero() {
        let v = free_potential(&pattern(vec![], 10_000), &LifParams::random(10, 1), 0.1).unwrap();
        assert_eq!(v.len(), 101);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_spike_peaks_at_its_weight() {
        let mut p = LifParams::new(vec![0.0; 10]);
        p.weights[3] = 0.7;
        let v = free_potential(&pattern(vec![SpikeEvent::new(3, 2_000)], 40_000), &p, 0.001).unwrap();
        let peak = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((peak - 0.7).abs() < 1e-6, "{peak}");
        // Causal: nothing before the spike.
        assert!(v[..2000].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kernel_matches_closed_form() {
        let p = LifParams::new(vec![1.0; 10]);
        let v = free_potential(&pattern(vec![SpikeEvent::new(0, 0)], 30_000), &p, 0.5).unwrap();
        for (i, x) in v.iter().enumerate() {
            assert!((x - p.kernel(i as f64 * 0.5)).abs() < 1e-12);
        }
        assert!((p.kernel(p.peak_time_ms()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argument_errors() {
        let pat = pattern(vec![], 1000);
        assert!(free_potential(&pat, &LifParams::new(vec![0.0; 10]), 0.0).is_err());
        assert!(free_potential(&pat, &LifParams::new(vec![0.0; 3]), 1.0).is_err());
        let mut bad = LifParams::new(vec![0.0; 10]);
        bad.tau_s_ms = 30.0;
        assert!(free_potential(&pat, &bad, 1.0).is_err());
    }

    #[test]
    fn similarity_examples() {
        let a = [1.0, 3.0, 2.0, 5.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((trace_similarity(&a, &a).unwrap().value - 1.0).abs() < 1e-15);
        assert!((trace_similarity(&a, &neg).unwrap().value + 1.0).abs() < 1e-15);
        let flat = trace_similarity(&a, &[2.0; 4]).unwrap();
        assert!(flat.degenerate && flat.value == 0.0);
        assert!(trace_similarity(&a, &[1.0]).is_err());
    }

    fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let saa: f64 = a.iter().map(|x| x * x).sum();
        let sbb: f64 = b.iter().map(|x| x * x).sum();
        (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
    }

    fn arb_events() -> impl Strategy<Value = Vec<SpikeEvent>> {
        proptest::collection::vec((0u16..10, 0u32..50_000), 0..40)
            .prop_map(|v| v.into_iter().map(|(n, t)| SpikeEvent::new(n, t)).collect())
    }

    proptest! {
        #[test]
        fn similarity_matches_naive(a in proptest::collection::vec(-1.0f64..1.0, 3..100), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
            let s = trace_similarity(&a, &b).unwrap();
            prop_assert!((s.value - naive_pearson(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn superposition_of_spike_trains(x in arb_events(), y in arb_events(), seed in any::<u64>()) {
            let p = LifParams::random(10, seed);
            let mut both = x.clone();
            both.extend(y.iter().copied());
            // Spikes present in both trains would be merged, so keep them apart.
            let xs: std::collections::HashSet<_> = x.iter().collect();
            prop_assume!(!y.iter().any(|e| xs.contains(e)));
            prop_assume!({ let mut d = both.clone(); d.sort(); d.dedup(); d.len() == both.len() });
            let vx = free_potential(&pattern(x, 50_000), &p, 0.25).unwrap();
            let vy = free_potential(&pattern(y, 50_000), &p, 0.25).unwrap();
            let vb = free_potential(&pattern(both, 50_000), &p, 0.25).unwrap();
            for i in 0..vb.len() {
                prop_assert!((vb[i] - vx[i] - vy[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn linear_in_weights(x in arb_events(), s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0) {
            let (p1, p2) = (LifParams::random(10, s1), LifParams::random(10, s2));
            let mix = LifParams::new(p1.weights.iter().zip(&p2.weights).map(|(u, v)| a * u + v).collect());
            let pat = pattern(x, 50_000);
            let (v1, v2, vm) = (
                free_potential(&pat, &p1, 0.25).unwrap(),
                free_potential(&pat, &p2, 0.25).unwrap(),
                free_potential(&pat, &mix, 0.25).unwrap(),
            );
            for i in 0..vm.len() {
                prop_assert!((vm[i] - a * v1[i] - v2[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn causal(x in arb_events(), cut in 0u32..50_000, seed in any::<u64>()) {
            let p = LifParams::random(10, seed);
            let full = free_potential(&pattern(x.clone(), 50_000), &p, 0.5).unwrap();
            let early: Vec<SpikeEvent> = x.into_iter().filter(|e| e.time_us <= cut).collect();
            let part = free_potential(&pattern(early, 50_000), &p, 0.5).unwrap();
            for i in 0..full.len() {
                if (i as f64 * 500.0) < f64::from(cut) {
                    prop_assert!((full[i] - part[i]).abs() < 1e-12);
                }
            }
        }
    }
}
