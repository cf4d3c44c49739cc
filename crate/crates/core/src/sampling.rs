//! Seeded sample clouds for pointwise checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::ChartGuard;
use crate::{Error, Result};

/// Default number of sample points for distribution computations.
pub const DEFAULT_POINTS: usize = 25;

/// Draws `count` points uniformly from `[-radius, radius]^dim`, keeping only
/// those accepted by `accept`. Gives up after `1000·count` draws.
pub fn sample_box(
    seed: u64,
    count: usize,
    dim: usize,
    radius: f64,
    accept: impl Fn(&[f64]) -> bool,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut draws = 0usize;
    while points.len() < count {
        if draws >= 1000 * count.max(1) {
            return Err(Error::InvalidInput(format!(
                "sampler accepted only {} of {count} points",
                points.len()
            )));
        }
        draws += 1;
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..=radius)).collect();
        if accept(&p) {
            points.push(p);
        }
    }
    Ok(points)
}

/// Unit-box cloud.
pub fn sample_unit_box(
    seed: u64,
    count: usize,
    dim: usize,
    accept: impl Fn(&[f64]) -> bool,
) -> Result<Vec<Vec<f64>>> {
    sample_box(seed, count, dim, 1.0, accept)
}

/// Distance kept from the boundary of a chart when sampling inside it.
pub const CHART_SAFETY: f64 = 1e-3;

/// Unit-box cloud restricted to `guard`, keeping clear of its boundary.
pub fn sample_chart(seed: u64, count: usize, dim: usize, guard: &ChartGuard) -> Result<Vec<Vec<f64>>> {
    sample_unit_box(seed, count, dim, |p| guard.margin(p) > CHART_SAFETY)
}
