//! Reproducible random streams.
//!
//! Every Monte-Carlo trial owns a ChaCha stream addressed by
//! `(seed, stream_id)`, so results do not depend on how trials are spread
//! over worker threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Independent stream `stream_id` of master seed `seed`.
pub fn stream(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream id for trial `trial` of campaign point `point`.
pub fn trial_stream_id(point: u32, trial: u32) -> u64 {
    (u64::from(point) << 32) | u64::from(trial)
}

/// Circular complex Gaussian with total variance `var` (`var / 2` per part).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_stream() {
        let a: Vec<u64> = (0..8).map(|_| stream(7, 3).random()).collect();
        let b: Vec<u64> = (0..8).map(|_| stream(7, 3).random()).collect();
        assert_eq!(a, b);
        let mut r1 = stream(7, 3);
        let mut r2 = stream(7, 3);
        for _ in 0..100 {
            assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        }
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 1_000_000;
        let mut a = stream(11, 0);
        let mut b = stream(11, 1);
        let mut c = stream(12, 0);
        let (mut sab, mut sac, mut saa) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x: f64 = a.sample(StandardNormal);
            let y: f64 = b.sample(StandardNormal);
            let z: f64 = c.sample(StandardNormal);
            sab += x * y;
            sac += x * z;
            saa += x * x;
        }
        assert!((sab / saa).abs() < 0.01);
        assert!((sac / saa).abs() < 0.01);
    }

    #[test]
    fn complex_normal_variance_split() {
        let mut rng = stream(5, 0);
        let n = 200_000;
        let (mut re2, mut im2, mut reim) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = complex_normal(&mut rng, 2.0);
            re2 += z.re * z.re;
            im2 += z.im * z.im;
            reim += z.re * z.im;
        }
        let nf = n as f64;
        assert!((re2 / nf - 1.0).abs() < 0.01);
        assert!((im2 / nf - 1.0).abs() < 0.01);
        assert!((reim / nf).abs() < 0.01);
    }
}
