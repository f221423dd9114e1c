//! Bulk excursions from radius `1 − a` back to the unit circle.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

/// Maps an angle to `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t == -PI {
        PI
    } else {
        t
    }
}

/// Draws from the wrapped-Cauchy law with concentration `rho`, i.e. the
/// harmonic measure on the circle seen from radius `rho`.
pub fn sample_exit_offset<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    2.0 * (((1.0 - rho) / (1.0 + rho)) * (PI * (u - 0.5)).tan()).atan()
}

/// Cumulative distribution of [`sample_exit_offset`] on `(−π, π]`.
pub fn exit_offset_cdf(rho: f64, delta: f64) -> f64 {
    if delta >= PI {
        return 1.0;
    }
    if delta <= -PI {
        return 0.0;
    }
    0.5 + (((1.0 + rho) / (1.0 - rho)) * (0.5 * delta).tan()).atan() / PI
}

/// One excursion sampled exactly: exit angle and the conditional mean
/// duration `(1 − (1 − a)²)/(4 D2)`, which does not depend on the start.
pub fn bulk_excursion_exact<R: Rng + ?Sized>(
    theta_start: f64,
    a: f64,
    d2: f64,
    rng: &mut R,
) -> (f64, f64) {
    let rho = 1.0 - a;
    let delta = sample_exit_offset(rho, rng);
    (wrap_angle(theta_start + delta), a * (2.0 - a) / (4.0 * d2))
}

/// One excursion by Euler steps of planar Brownian motion, with a local
/// flat-boundary bridge test between steps. Returns the exit angle and the
/// sampled duration.
pub fn bulk_excursion_euler<R: Rng + ?Sized>(
    theta_start: f64,
    a: f64,
    d2: f64,
    dt: f64,
    rng: &mut R,
) -> (f64, f64) {
    let r0 = 1.0 - a;
    let (mut x, mut y) = (r0 * theta_start.cos(), r0 * theta_start.sin());
    let sigma = (2.0 * d2 * dt).sqrt();
    let mut t = 0.0;
    loop {
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        let (nx, ny) = (x + sigma * zx, y + sigma * zy);
        t += dt;
        let r_new = nx.hypot(ny);
        if r_new >= 1.0 {
            return (ny.atan2(nx), t);
        }
        let d0 = 1.0 - x.hypot(y);
        let d1 = 1.0 - r_new;
        let u: f64 = rng.random();
        if u < (-d0 * d1 / (d2 * dt)).exp() {
            return (ny.atan2(nx), t);
        }
        x = nx;
        y = ny;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 1% critical value of χ² with 19 degrees of freedom.
    const CHI2_19_1PCT: f64 = 36.191;

    fn chi_square(samples: &[f64], rho: f64, bins: usize) -> f64 {
        let mut counts = vec![0usize; bins];
        for s in samples {
            let k = (((s + PI) / (2.0 * PI)) * bins as f64).floor() as usize;
            counts[k.min(bins - 1)] += 1;
        }
        let n = samples.len() as f64;
        (0..bins)
            .map(|k| {
                let lo = -PI + 2.0 * PI * k as f64 / bins as f64;
                let hi = -PI + 2.0 * PI * (k + 1) as f64 / bins as f64;
                let expected = n * (exit_offset_cdf(rho, hi) - exit_offset_cdf(rho, lo));
                (counts[k] as f64 - expected).powi(2) / expected
            })
            .sum()
    }

    #[test]
    fn full_ejection_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<f64> = (0..20_000)
            .map(|_| bulk_excursion_exact(0.0, 1.0, 1.0, &mut rng).0)
            .collect();
        assert!(chi_square(&samples, 0.0, 20) < CHI2_19_1PCT);
        assert_eq!(bulk_excursion_exact(0.3, 1.0, 2.0, &mut rng).1, 1.0 / 8.0);
    }

    #[test]
    fn small_ejection_concentrates_and_is_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = 1e-4;
        let (_, dur) = bulk_excursion_exact(1.0, a, 1.0, &mut rng);
        assert!(((dur - a / 2.0) / (a / 2.0)).abs() < 1e-3);
        let mut offsets: Vec<f64> = (0..1001)
            .map(|_| (bulk_excursion_exact(1.0, a, 1.0, &mut rng).0 - 1.0).abs())
            .collect();
        offsets.sort_by(f64::total_cmp);
        // Half-width of the law is ≈ a.
        assert!(offsets[500] < 10.0 * a, "{}", offsets[500]);
    }

    #[test]
    fn exact_sampler_matches_harmonic_measure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..50_000)
            .map(|_| bulk_excursion_exact(0.0, 0.5, 1.0, &mut rng).0)
            .collect();
        assert!(chi_square(&samples, 0.5, 20) < CHI2_19_1PCT);
    }

    #[test]
    fn fine_euler_walk_matches_harmonic_measure() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut durations = 0.0;
        let n = 3000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let (angle, t) = bulk_excursion_euler(0.0, 0.5, 1.0, 1e-5, &mut rng);
                durations += t;
                angle
            })
            .collect();
        let chi2 = chi_square(&samples, 0.5, 20);
        assert!(chi2 < CHI2_19_1PCT, "χ² = {chi2}");
        // Mean duration (1 − 0.25)/4.
        let mean = durations / n as f64;
        assert!((mean - 0.1875).abs() < 0.02, "{mean}");
    }

    #[test]
    fn wrapping() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.25), 0.25);
    }
}
