//! Seeded synthetic-data scenarios used by the command line and the
//! verification suites. Every generator is a pure function of its arguments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

/// One-dimensional dataset with the generating mean retained.
#[derive(Debug, Clone)]
pub struct SimData1d {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Two-dimensional dataset with the generating mean retained.
#[derive(Debug, Clone)]
pub struct SimData2d {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
}

fn sorted_uniform(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    x.sort_by(|a, b| a.total_cmp(b));
    x
}

/// Mean of the `hetero1d` scenario: a slow sine over the whole domain with a
/// high-frequency component switched on over the right half.
pub fn hetero1d_mean(x: f64) -> f64 {
    let gate = 1.0 / (1.0 + (-30.0 * (x - 0.55)).exp());
    1.6 * (2.0 * std::f64::consts::PI * x).sin()
        + 1.3 * gate * (18.0 * std::f64::consts::PI * x).sin()
}

/// Gaussian data with a piecewise smooth/oscillatory mean.
pub fn hetero1d(n: usize, sigma: f64, seed: u64) -> SimData1d {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = sorted_uniform(n, &mut rng);
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mean: Vec<f64> = x.iter().map(|&v| hetero1d_mean(v)).collect();
    let y: Vec<f64> = mean.iter().map(|&m| m + normal.sample(&mut rng)).collect();
    SimData1d { x, y, mean }
}

/// Intensity of the `poisson_peaks` scenario: a flat baseline with three
/// sharp peaks on the log scale.
pub fn poisson_peaks_intensity(x: f64) -> f64 {
    let bump = |m: f64, w: f64| (-(x - m) * (x - m) / (2.0 * w * w)).exp();
    let log_mu = 12.0_f64.ln() + 2.2 * bump(0.25, 0.016) + 1.8 * bump(0.50, 0.022)
        + 2.5 * bump(0.72, 0.014);
    log_mu.exp()
}

/// Counts with sharp peaks over a flat baseline.
pub fn poisson_peaks(n: usize, seed: u64) -> SimData1d {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = sorted_uniform(n, &mut rng);
    let mean: Vec<f64> = x.iter().map(|&v| poisson_peaks_intensity(v)).collect();
    let y: Vec<f64> = mean
        .iter()
        .map(|&mu| Poisson::new(mu).expect("positive intensity").sample(&mut rng))
        .collect();
    SimData1d { x, y, mean }
}

/// Mean of the `surface2d` scenario: a smooth broad surface with one sharp
/// localized bump, so the appropriate amount of smoothing varies over the
/// domain.
pub fn surface2d_mean(u: f64, v: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let r2 = (u - 0.3) * (u - 0.3) + (v - 0.7) * (v - 0.7);
    (pi * u).sin() * (pi * v).sin() + 1.3 * (-r2 / (2.0 * 0.1 * 0.1)).exp()
}

/// Gaussian surface data on the unit square.
pub fn surface2d(n: usize, sigma: f64, seed: u64) -> SimData2d {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mean: Vec<f64> = x1
        .iter()
        .zip(x2.iter())
        .map(|(&u, &v)| surface2d_mean(u, v))
        .collect();
    let y: Vec<f64> = mean.iter().map(|&m| m + normal.sample(&mut rng)).collect();
    SimData2d { x1, x2, y, mean }
}
