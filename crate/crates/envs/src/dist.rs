//! Scalar distribution helpers shared by the models.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let d = (x - mean) / sd;
    -0.5 * d * d - sd.ln() - LN_SQRT_2PI
}

/// Standard normal CDF (Abramowitz and Stegun 7.1.26, absolute error below 1.5e-7).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * z);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erfc = poly * (-z * z).exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

/// Gaussian truncated to `[lo, hi]`, sampled by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let n = Normal::new(mean, sd).expect("positive standard deviation");
    for _ in 0..10_000 {
        let x = n.sample(rng);
        if x >= lo && x <= hi {
            return x;
        }
    }
    rng.random_range(lo..=hi)
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("positive standard deviation").sample(rng)
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.96) - 0.975_002_1).abs() < 1e-6);
        assert!((normal_cdf(-1.0) - 0.158_655_25).abs() < 1e-6);
    }

    #[test]
    fn truncated_samples_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let x = truncated_normal(&mut rng, 7.0, 20f64.sqrt(), 6.0, 8.0);
            assert!((6.0..=8.0).contains(&x));
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-12);
    }
}
