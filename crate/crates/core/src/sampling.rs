use rand::Rng;
use rand_distr::StandardNormal;

/// Rates at or above this use the rounded normal approximation.
pub const INVERSION_LIMIT: f64 = 30.0;

/// Draws from Poisson(`lambda`): sequential inversion below
/// [`INVERSION_LIMIT`], rounded normal approximation (clamped at zero)
/// above. Non-positive rates yield 0.
pub fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        // the cap guards against u landing in the rounding slack of the tail
        while u > cdf && k < 1000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        k
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (lambda + lambda.sqrt() * z).round().max(0.0) as u64
    }
}
