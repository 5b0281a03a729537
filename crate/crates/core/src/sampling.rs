//! Deterministic, index-sharded random sampling.
//!
//! Every sample `i` draws from its own ChaCha stream `(seed, i)`, so results
//! do not depend on how the index range is split across worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Smallest and largest radius of the log-uniform radial distribution.
pub const RADIUS_RANGE: (f64, f64) = (1e-2, 1e2);

/// Rejection attempts per sample before giving up.
pub const MAX_REJECTIONS: usize = 10_000;

pub fn index_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniformly distributed point on the unit sphere `S^{n-1}`.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let t: f64 = rng.random();
    (lo.ln() + t * (hi.ln() - lo.ln())).exp()
}

/// Uniform direction on the unit sphere, rejection-sampled against `accept`.
pub fn sample_unit_slice<R, F>(rng: &mut R, n: usize, accept: F) -> Option<Vec<f64>>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> bool,
{
    (0..MAX_REJECTIONS)
        .map(|_| unit_direction(rng, n))
        .find(|z| accept(z))
}

/// A point of the cone: log-uniform radius times an accepted unit direction.
pub fn sample_cone_point<R, F>(rng: &mut R, n: usize, accept: F) -> Option<Vec<f64>>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> bool,
{
    let dir = sample_unit_slice(rng, n, &accept)?;
    let radius = log_uniform(rng, RADIUS_RANGE.0, RADIUS_RANGE.1);
    let z: Vec<f64> = dir.into_iter().map(|x| x * radius).collect();
    accept(&z).then_some(z)
}

/// Order-preserving parallel map over `0..count`.
pub fn par_map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}
