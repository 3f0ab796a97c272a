#![allow(dead_code)]

use noma_core::linalg::CMatrix;
use noma_core::{ChannelScenario, EffectiveChannel, FieldKind, GammaProfile};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const LN2: f64 = std::f64::consts::LN_2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn two_user_scenario() -> ChannelScenario {
    ChannelScenario::real(&[&[1.32, -1.31], &[-1.43, 0.74]], 0.5).unwrap()
}

pub fn two_user() -> EffectiveChannel {
    EffectiveChannel::new(&two_user_scenario())
}

/// Rayleigh channel, weights in [0.5, 1.5], noise variance log-uniform in [0.1, 2].
/// Even seeds draw complex channels, odd seeds real ones.
pub fn random_scenario(r: &mut ChaCha8Rng, nr: usize, nu: usize, complex: bool) -> ChannelScenario {
    let h = CMatrix::from_fn(nr, nu, |_, _| {
        let re: f64 = r.sample(StandardNormal);
        let im: f64 = if complex { r.sample(StandardNormal) } else { 0.0 };
        if complex {
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        } else {
            Complex64::new(re, 0.0)
        }
    });
    let w = (0..nu).map(|_| r.random_range(0.5..1.5)).collect();
    let noise_var = 10f64.powf(r.random_range(-1.0..0.3));
    let kind = if complex { FieldKind::Complex } else { FieldKind::Real };
    ChannelScenario::new(h, w, noise_var, kind).unwrap()
}

/// Gamma profile with entries log-uniform in [1e-2, 1e2].
pub fn random_gamma(r: &mut ChaCha8Rng, nu: usize) -> GammaProfile {
    GammaProfile::new((0..nu).map(|_| 10f64.powf(r.random_range(-2.0..2.0))).collect()).unwrap()
}

pub fn log_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}
