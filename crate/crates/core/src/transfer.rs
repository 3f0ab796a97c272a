//! LMMSE posterior covariance, SINR-variance transfer functions and
//! gamma-parameterized variance tracks.
//!
//! Conventions: `v` holds per-user prior variances (unit signal power), `rho`
//! the extrinsic SINRs handed to the decoders. `phi` maps the former to the
//! latter. The extrinsic SINR of user `i` does not depend on `v_i` itself, only
//! on the other users' variances, which is what makes the `v -> 0` limit
//! cheap: a user with zero variance is simply cancelled.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};
use crate::scenario::{EffectiveChannel, GammaProfile};

/// Default absolute tolerance (in variance) for [`matched_psi`].
pub const PSI_TOL: f64 = 1e-10;

/// Lower end of the `v_1` bracket used when inverting `phi`.
pub const PSI_V1_FLOOR: f64 = 1e-12;

/// Default number of points in a variance track.
pub const TRACK_POINTS: usize = 200;

/// Prior variances and extrinsic SINRs at one point of the iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceState {
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
}

fn check_positive(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{} variances for {n} users", v.len())));
    }
    for (i, &x) in v.iter().enumerate() {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::DegenerateVariance { user: i, value: x });
        }
    }
    Ok(())
}

/// Posterior precision `H'^H H' / noise_var + diag(v)^-1`.
fn precision(ec: &EffectiveChannel, v: &[f64]) -> CMatrix {
    let mut p = ec.gram_a().clone();
    let d: Vec<f64> = v.iter().map(|x| 1.0 / x - 1.0).collect();
    p.add_diag(&d);
    p
}

/// LMMSE posterior covariance `(H'^H H' / noise_var + diag(v)^-1)^-1`.
pub fn posterior_cov(ec: &EffectiveChannel, v: &[f64]) -> Result<CMatrix> {
    check_positive(v, ec.num_users())?;
    Ok(Cholesky::new(&precision(ec, v))?.inverse())
}

/// Diagonal of [`posterior_cov`] without forming the full inverse.
pub fn posterior_diag(ec: &EffectiveChannel, v: &[f64]) -> Result<Vec<f64>> {
    check_positive(v, ec.num_users())?;
    Ok(Cholesky::new(&precision(ec, v))?.inverse_diagonal())
}

/// Extrinsic SINR of every user; zero variances are treated as the exact
/// `v -> 0` limit (that user's interference is removed).
///
/// Computed per user as the Schur complement
/// `g_ii - g_{i,S} (g_SS + diag(v_S)^-1)^-1 g_{S,i}` with `g = A - I` and
/// `S` the other users with nonzero variance.
pub fn extrinsic_sinr(ec: &EffectiveChannel, v: &[f64]) -> Result<Vec<f64>> {
    let n = ec.num_users();
    if v.len() != n {
        return Err(Error::Dimension(format!("{} variances for {n} users", v.len())));
    }
    if let Some((i, &x)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::DegenerateVariance { user: i, value: x });
    }
    let a = ec.gram_a();
    let mut out = Vec::with_capacity(n);
    let mut others: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        others.clear();
        others.extend((0..n).filter(|&j| j != i && v[j] > 0.0));
        let gii = a[(i, i)].re - 1.0;
        if others.is_empty() {
            out.push(gii);
            continue;
        }
        let mut m = a.principal(&others);
        let d: Vec<f64> = others.iter().map(|&j| 1.0 / v[j] - 1.0).collect();
        m.add_diag(&d);
        let b: Vec<Complex64> = others.iter().map(|&j| a[(j, i)]).collect();
        let x = Cholesky::new(&m)?.solve(&b);
        let q: f64 = b.iter().zip(&x).map(|(bj, xj)| (bj.conj() * xj).re).sum();
        out.push(gii - q);
    }
    Ok(out)
}

/// `phi_i(v) = 1/[V_post]_ii - 1/v_i` for strictly positive variances.
pub fn phi(ec: &EffectiveChannel, v: &[f64]) -> Result<Vec<f64>> {
    check_positive(v, ec.num_users())?;
    extrinsic_sinr(ec, v)
}

/// `phi` at all-zero variances: the matched-filter SNRs `||h'_i||^2 / noise_var`.
pub fn phi_at_zero(ec: &EffectiveChannel) -> Vec<f64> {
    (0..ec.num_users()).map(|i| ec.matched_filter_snr(i)).collect()
}

/// Variances on the gamma track: `1/v_i = 1 + (1/v_1 - 1)/gamma_i`.
pub fn gamma_variances(v1: f64, g: &GammaProfile) -> Vec<f64> {
    let u = 1.0 / v1 - 1.0;
    let mut v: Vec<f64> = g.as_slice().iter().map(|gi| 1.0 / (1.0 + u / gi)).collect();
    v[0] = v1;
    v
}

/// `phi_i` along the gamma track, as a function of `v_1`.
pub fn phi_gamma(ec: &EffectiveChannel, v1: f64, g: &GammaProfile, i: usize) -> Result<f64> {
    if !(v1 > 0.0 && v1 <= 1.0) {
        return Err(Error::InvalidArgument(format!("v1 = {v1} outside (0, 1]")));
    }
    check_user(i, g.len())?;
    Ok(phi(ec, &gamma_variances(v1, g))?[i])
}

fn check_user(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::InvalidArgument(format!("user index {i} out of range for {n} users")));
    }
    Ok(())
}

/// Decoder transfer matched to the estimator along the gamma track.
///
/// Returns exactly 1 up to `phi_i(1)`, exactly 0 at or above `phi_i(0)`, and
/// otherwise the `v_i` on the track whose `phi_i` equals `rho`, found by
/// bisection on `v_1 in [PSI_V1_FLOOR, 1]` to absolute accuracy `tol` in `v_i`.
pub fn matched_psi(
    ec: &EffectiveChannel,
    g: &GammaProfile,
    i: usize,
    rho: f64,
    tol: f64,
) -> Result<f64> {
    check_user(i, g.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be nonnegative, got {rho}")));
    }
    let n = ec.num_users();
    let phi_one = extrinsic_sinr(ec, &vec![1.0; n])?[i];
    if rho <= phi_one {
        return Ok(1.0);
    }
    if rho >= ec.matched_filter_snr(i) {
        return Ok(0.0);
    }
    let phi_i = |v1: f64| -> Result<f64> { Ok(extrinsic_sinr(ec, &gamma_variances(v1, g))?[i]) };
    let v_i = |v1: f64| gamma_variances(v1, g)[i];

    // phi_i is decreasing in v1: phi(lo) >= rho >= phi(hi)
    let mut lo = PSI_V1_FLOOR;
    let mut hi = 1.0;
    if phi_i(lo)? <= rho {
        return Ok(v_i(lo));
    }
    for _ in 0..400 {
        if v_i(hi) - v_i(lo) <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if phi_i(mid)? > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (v_i(lo) + v_i(hi)))
}

/// One grid point of a variance track.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackPoint {
    pub v1: f64,
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Variance track for one gamma profile, ordered by decreasing `v_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferCurve {
    pub gamma: GammaProfile,
    pub samples: Vec<TrackPoint>,
}

impl TransferCurve {
    pub fn num_users(&self) -> usize {
        self.gamma.len()
    }

    /// Largest relative deviation of any stored `v_i` from the track relation.
    pub fn max_track_deviation(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|p| {
                let u = 1.0 / p.v1 - 1.0;
                p.v.iter()
                    .zip(self.gamma.as_slice())
                    .map(move |(vi, gi)| ((1.0 / vi) - (1.0 + u / gi)).abs() / (1.0 / vi))
            })
            .fold(0.0, f64::max)
    }
}

/// Evaluates `gamma_variances` and `phi` on a strictly decreasing `v_1` grid in `(0, 1]`.
pub fn variance_track(ec: &EffectiveChannel, g: &GammaProfile, grid: &[f64]) -> Result<TransferCurve> {
    if g.len() != ec.num_users() {
        return Err(Error::Dimension(format!(
            "gamma has {} entries for {} users",
            g.len(),
            ec.num_users()
        )));
    }
    for (k, w) in grid.windows(2).enumerate() {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!(
                "track grid must be strictly decreasing (index {})",
                k + 1
            )));
        }
    }
    if let Some(v1) = grid.iter().find(|v1| !(**v1 > 0.0 && **v1 <= 1.0)) {
        return Err(Error::InvalidArgument(format!("grid value {v1} outside (0, 1]")));
    }
    let samples = grid
        .iter()
        .map(|&v1| {
            let v = gamma_variances(v1, g);
            let rho = phi(ec, &v)?;
            Ok(TrackPoint { v1, v, rho })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferCurve {
        gamma: g.clone(),
        samples,
    })
}

/// Track grid: `v_1 = 1` followed by `n - 1` points geometric in `1/v_1 - 1`
/// spanning `[1e-4 min(gamma), 1e4 max(gamma)]`.
pub fn track_grid(g: &GammaProfile, n: usize) -> Vec<f64> {
    let gmin = g.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let gmax = g.as_slice().iter().copied().fold(0.0, f64::max);
    let mut grid = vec![1.0];
    grid.extend(log_space(1e-4 * gmin, 1e4 * gmax, n.saturating_sub(1)).map(|u| 1.0 / (1.0 + u)));
    grid
}

/// `n` geometrically spaced values from `lo` to `hi` inclusive (`n == 1` gives `lo`).
pub fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |k| {
        if k == 0 {
            lo
        } else if k + 1 == n {
            hi
        } else {
            (a + (b - a) * k as f64 / (n - 1) as f64).exp()
        }
    })
}

/// `f_i(v) = h'_i^H (I/v + H' H'^H / noise_var)^-1 h'_i / noise_var` for a
/// common prior variance `v`; per-user weights are already folded into `H'`.
///
/// Computed on the receive-antenna side, independently of [`phi`].
pub fn f_symmetric(ec: &EffectiveChannel, v: f64) -> Result<Vec<f64>> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::DegenerateVariance { user: 0, value: v });
    }
    let hp = ec.hp();
    let s = 1.0 / ec.noise_var();
    let mut m = hp.matmul(&hp.adjoint()).scale(s);
    m.add_diag(&vec![1.0 / v; ec.num_antennas()]);
    let ch = Cholesky::new(&m)?;
    Ok((0..ec.num_users())
        .map(|i| {
            let h = hp.column(i);
            let x = ch.solve(&h);
            s * h.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
        })
        .collect())
}

/// `phi_i` at a common variance `v` recovered from `f_i(v)`: `1 / (v (1/f_i - 1))`.
pub fn phi_from_f(f: f64, v: f64) -> f64 {
    1.0 / (v * (1.0 / f - 1.0))
}
