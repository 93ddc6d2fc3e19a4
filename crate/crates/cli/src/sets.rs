//! Training and test parameter sets: equidistant grids for training (as
//! the experiments prescribe) and seeded uniform sampling for test sets.

use cellrom::degradation::DegradationSchedule;
use cellrom::ParameterPoint;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `count` equidistant values covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 1);
    if count == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..count)
        .map(|k| {
            if k == count - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// Training set of experiment 1: equidistant charge rates at fixed
/// diffusion/reaction scales.
pub fn train_c_rate(lo: f64, hi: f64, count: usize, d: f64, l: f64) -> Vec<ParameterPoint> {
    linspace(lo, hi, count)
        .into_iter()
        .map(|c| ParameterPoint::new(c, d, l))
        .collect()
}

/// Training set of experiment 2: equidistant values along each degraded
/// parameter axis (the other held at its initial value), at a fixed charge
/// rate. `count` is split between the two axes.
pub fn train_degradation_axes(
    c_rate: f64,
    f0: f64,
    beta_min: f64,
    count: usize,
) -> Vec<ParameterPoint> {
    let per_axis = count.div_ceil(2).max(2);
    let lo = beta_min * f0;
    let mut set = Vec::new();
    for d in linspace(lo, f0, per_axis) {
        set.push(ParameterPoint::new(c_rate, d, f0));
    }
    for l in linspace(lo, f0, count.saturating_sub(per_axis).max(2)) {
        set.push(ParameterPoint::new(c_rate, f0, l));
    }
    set
}

/// Training set of experiment 3: a charge-rate grid crossed with samples
/// along the coupled degradation diagonal of each rate.
pub fn train_rate_and_degradation(
    c_lo: f64,
    c_hi: f64,
    n_rates: usize,
    schedule: &DegradationSchedule,
    cycles_per_rate: usize,
) -> Vec<ParameterPoint> {
    let mut set = Vec::new();
    for c in linspace(c_lo, c_hi, n_rates) {
        let base = ParameterPoint::new(c, schedule.f0, schedule.f0);
        for k in 0..cycles_per_rate {
            let n = schedule.n_total * k / (cycles_per_rate - 1).max(1);
            set.push(schedule.parameter_at(n, &base));
        }
    }
    set
}

/// Uniform random test points over per-coordinate ranges, reproducible
/// from the seed.
pub struct TestRanges {
    pub c_rate: (f64, f64),
    pub d_scale: (f64, f64),
    pub l_scale: (f64, f64),
}

pub fn random_test_set(ranges: &TestRanges, count: usize, seed: u64) -> Vec<ParameterPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| -> f64 {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };
    (0..count)
        .map(|_| {
            let c = draw(ranges.c_rate);
            let d = draw(ranges.d_scale);
            let l = draw(ranges.l_scale);
            ParameterPoint::new(c, d, l)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cellrom::degradation::DegradationTarget;

    #[test]
    fn linspace_covers_endpoints() {
        let v = linspace(0.01, 4.0, 15);
        assert_eq!(v.len(), 15);
        assert_eq!(v[0], 0.01);
        assert_eq!(v[14], 4.0);
    }

    #[test]
    fn random_sets_are_seed_reproducible() {
        let ranges = TestRanges {
            c_rate: (0.01, 4.0),
            d_scale: (0.5, 0.5),
            l_scale: (0.5, 0.5),
        };
        let a = random_test_set(&ranges, 10, 7);
        let b = random_test_set(&ranges, 10, 7);
        assert_eq!(a, b);
        let c = random_test_set(&ranges, 10, 8);
        assert_ne!(a, c);
        for mu in &a {
            assert!(mu.c_rate >= 0.01 && mu.c_rate < 4.0);
            assert_eq!(mu.d_scale, 0.5);
        }
    }

    #[test]
    fn degradation_training_covers_both_axes() {
        let set = train_degradation_axes(1.0, 0.5, 0.1, 10);
        assert!(set.len() >= 10);
        assert!(set.iter().any(|m| m.d_scale < 0.5 && m.l_scale == 0.5));
        assert!(set.iter().any(|m| m.l_scale < 0.5 && m.d_scale == 0.5));
    }

    #[test]
    fn rate_degradation_training_follows_schedule() {
        let s = DegradationSchedule::new(0.5, 0.6, 100, true, DegradationTarget::Both).unwrap();
        let set = train_rate_and_degradation(0.5, 2.0, 5, &s, 3);
        assert_eq!(set.len(), 15);
        // the endpoint of each rate's diagonal honours the coupled decay
        for mu in set.iter().skip(2).step_by(3) {
            let expect = 0.5 * (mu.c_rate * 0.6f64.ln()).exp();
            assert!((mu.d_scale - expect).abs() < 1e-12);
            assert_eq!(mu.d_scale, mu.l_scale);
        }
    }
}
