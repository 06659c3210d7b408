//! Seeded random streams.
//!
//! Every stochastic quantity is drawn from a ChaCha8 stream addressed by
//! `(seed, stream)`, so per-mode or per-layer draws can be computed in any order
//! (or in parallel) and still reproduce bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Independent generator for sub-task `stream` of a seeded computation.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal deviates via the Box-Muller transform.
///
/// Each pair of uniforms `(u1, u2)` yields `sqrt(-2 ln u1) cos(2 pi u2)` and
/// `sqrt(-2 ln u1) sin(2 pi u2)`, emitted in that order. `u1` is taken from
/// `(0, 1]` so the logarithm is finite.
pub struct BoxMuller<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> BoxMuller<R> {
    pub fn new(rng: R) -> Self {
        BoxMuller { rng, spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }
}

/// `len` standard normal deviates from stream `(seed, stream)`.
pub fn standard_normal_field(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut gen = BoxMuller::new(substream(seed, stream));
    (0..len).map(|_| gen.next_standard()).collect()
}

/// One Poisson count with the given mean. A zero mean always gives zero.
pub fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // mean is finite and positive here, so construction cannot fail
    let dist = Poisson::new(mean).expect("finite positive Poisson mean");
    dist.sample(rng) as u64
}
