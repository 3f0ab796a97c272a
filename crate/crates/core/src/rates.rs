//! Achievable rates of iterative LMMSE detection.
//!
//! All rates are in nats unless converted through [`RateUnit`].

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::quadrature::Adaptive;
use crate::scenario::{EffectiveChannel, GammaProfile};
use crate::transfer::{extrinsic_sinr, gamma_variances, matched_psi, PSI_TOL};

/// Default absolute tolerance for the per-user rate integral.
pub const QUAD_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateUnit {
    #[default]
    Nats,
    Bits,
}

impl RateUnit {
    /// Converts a value in nats to this unit.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            RateUnit::Nats => nats,
            RateUnit::Bits => nats / std::f64::consts::LN_2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RateUnit::Nats => "nats",
            RateUnit::Bits => "bits",
        }
    }
}

impl fmt::Display for RateUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RateUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" => Ok(RateUnit::Nats),
            "bits" => Ok(RateUnit::Bits),
            other => Err(Error::InvalidArgument(format!("unknown unit '{other}'"))),
        }
    }
}

/// Per-user rates for one gamma profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub gamma: GammaProfile,
    /// Rates in nats per channel use.
    pub rates: Vec<f64>,
    pub sum_rate: f64,
}

impl RatePoint {
    pub fn new(gamma: GammaProfile, rates: Vec<f64>) -> Self {
        let sum_rate = rates.iter().sum();
        Self {
            gamma,
            rates,
            sum_rate,
        }
    }

    pub fn rates_in(&self, unit: RateUnit) -> Vec<f64> {
        self.rates.iter().map(|&r| unit.from_nats(r)).collect()
    }
}

/// `log det(I + H'^H H' / noise_var)`.
pub fn sum_capacity(ec: &EffectiveChannel) -> f64 {
    ec.log_det_a()
}

/// `log(1 + ||h'_i||^2 / noise_var)`.
pub fn single_user_bound(ec: &EffectiveChannel, i: usize) -> f64 {
    ec.gram_a()[(i, i)].re.ln()
}

/// Integrand of the per-user rate after substituting `t = v_1`:
/// `R_i + log(gamma_i) = int_0^1 (t - [V(t)]_ii / gamma_i) / t^2 dt`, with
/// `V(t)^-1 = A + (1/t - 1) diag(gamma)^-1`.
///
/// The rate is unchanged when every gamma is scaled by the same factor, so the
/// profile is rescaled to `gamma_i = 1` (then `t = v_i`). This keeps user `i`'s
/// own transition away from `t = 1`, where it could not be resolved when
/// `gamma_i << gamma_1`.
struct RateIntegrand<'a> {
    a: &'a crate::linalg::CMatrix,
    inv_gamma: Vec<f64>,
    user: usize,
    col: Vec<Complex64>,
    unit: Vec<Complex64>,
}

impl<'a> RateIntegrand<'a> {
    fn new(ec: &'a EffectiveChannel, g: &GammaProfile, user: usize) -> Self {
        let n = ec.num_users();
        let mut unit = vec![Complex64::new(0.0, 0.0); n];
        unit[user] = Complex64::new(1.0, 0.0);
        Self {
            a: ec.gram_a(),
            inv_gamma: g.as_slice().iter().map(|x| g.get(user) / x).collect(),
            user,
            col: ec.gram_a().column(user),
            unit,
        }
    }

    fn eval(&self, t: f64) -> Result<f64> {
        let u = (1.0 - t) / t;
        let mut m = self.a.clone();
        let d: Vec<f64> = self.inv_gamma.iter().map(|ig| u * ig).collect();
        m.add_diag(&d);
        let ch = Cholesky::new(&m)?;
        let i = self.user;
        if t >= 0.5 {
            let vii = ch.solve(&self.unit)[i].re;
            Ok((t - vii) / (t * t))
        } else {
            // Near t = 0 both terms above are ~t and cancel. Using
            // V diag(1/gamma) u = I - V A instead: the integrand equals
            // ([V A]_ii - t) / (t (1 - t)) with no leading-order cancellation.
            let va_ii = ch.solve(&self.col)[i].re;
            Ok((va_ii - t) / (t * (1.0 - t)))
        }
    }
}

/// Achievable rate of user `i` for the gamma profile `g`, by adaptive
/// Gauss-Legendre quadrature of the per-user rate integral to `quad_tol`.
pub fn user_rate(ec: &EffectiveChannel, g: &GammaProfile, i: usize, quad_tol: f64) -> Result<f64> {
    if g.len() != ec.num_users() {
        return Err(Error::Dimension(format!(
            "gamma has {} entries for {} users",
            g.len(),
            ec.num_users()
        )));
    }
    if i >= g.len() {
        return Err(Error::InvalidArgument(format!("user index {i} out of range")));
    }
    let integrand = RateIntegrand::new(ec, g, i);
    let mut failure = None;
    let value = Adaptive::new(quad_tol).integrate(
        |t| match integrand.eval(t) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        1.0,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    value
}

/// All users' rates for one gamma profile.
pub fn rate_point(ec: &EffectiveChannel, g: &GammaProfile, quad_tol: f64) -> Result<RatePoint> {
    let rates = (0..ec.num_users())
        .map(|i| user_rate(ec, g, i, quad_tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(RatePoint::new(g.clone(), rates))
}

/// Rates for every profile in `grid`, evaluated in parallel; output order follows the grid.
pub fn region_sweep(ec: &EffectiveChannel, grid: &[GammaProfile], quad_tol: f64) -> Result<Vec<RatePoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("gamma grid is empty".into()));
    }
    grid.par_iter()
        .map(|g| {
            rate_point(ec, g, quad_tol).map_err(|e| Error::AtGamma {
                gamma: g.as_slice().to_vec(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Two-user sweep over `gamma_2` with `gamma_1 = 1`.
pub fn two_user_grid(values: impl IntoIterator<Item = f64>) -> Result<Vec<GammaProfile>> {
    values.into_iter().map(|g2| GammaProfile::new(vec![1.0, g2])).collect()
}

/// Cartesian product of per-user value lists for users `2..N_u` (`gamma_1 = 1`);
/// the last user varies fastest.
pub fn gamma_grid(free: &[Vec<f64>]) -> Result<Vec<GammaProfile>> {
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0]];
    for values in free {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty gamma value list".into()));
        }
        rows = rows
            .into_iter()
            .flat_map(|r| {
                values.iter().map(move |&g| {
                    let mut r = r.clone();
                    r.push(g);
                    r
                })
            })
            .collect();
    }
    rows.into_iter().map(GammaProfile::new).collect()
}

/// One sample `(rho, v)` of a decoder transfer curve.
pub type PsiSample = (f64, f64);

/// Area under a decoder curve: `int_0^inf (rho + 1/psi(rho))^-1 drho`.
///
/// `samples` must start at `rho = 0`, be nondecreasing in `rho` and
/// nonincreasing in `v`, and end with `v = 0`. `psi` is linearly interpolated
/// between samples; repeated `rho` values encode jumps.
pub fn rate_from_psi(samples: &[PsiSample]) -> Result<f64> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty psi curve".into()))?;
    if first.0 != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "psi curve must start at rho = 0, starts at {}",
            first.0
        )));
    }
    for (k, w) in samples.windows(2).enumerate() {
        if !(w[1].0 >= w[0].0 && w[1].1 <= w[0].1) {
            return Err(Error::NonMonotone(k + 1));
        }
    }
    if let Some(k) = samples.iter().position(|&(r, v)| !(r.is_finite() && (0.0..=1.0).contains(&v))) {
        return Err(Error::InvalidArgument(format!("psi sample {k} out of range")));
    }
    if samples.last().map(|s| s.1) != Some(0.0) {
        return Err(Error::InvalidArgument("psi curve must end at v = 0".into()));
    }
    let quad = Adaptive::new(1e-13);
    let mut total = 0.0;
    for w in samples.windows(2) {
        let ((r0, v0), (r1, v1)) = (w[0], w[1]);
        if r1 == r0 {
            continue;
        }
        if v0 == v1 {
            total += ((1.0 + r1 * v0) / (1.0 + r0 * v0)).ln();
            continue;
        }
        let slope = (v1 - v0) / (r1 - r0);
        total += quad.integrate(
            |r| {
                let v = v0 + slope * (r - r0);
                v / (1.0 + r * v)
            },
            r0,
            r1,
        )?;
    }
    Ok(total)
}

/// Samples of the matched decoder curve of user `i` along the track given by `grid`.
pub fn matched_psi_samples(
    ec: &EffectiveChannel,
    g: &GammaProfile,
    i: usize,
    grid: &[f64],
) -> Result<Vec<PsiSample>> {
    let n = ec.num_users();
    let phi_one = extrinsic_sinr(ec, &vec![1.0; n])?[i];
    let phi_zero = ec.matched_filter_snr(i);
    let mut out = vec![(0.0, 1.0), (phi_one, 1.0)];
    for &v1 in grid.iter().filter(|&&v1| v1 < 1.0) {
        let v = gamma_variances(v1, g);
        let rho = extrinsic_sinr(ec, &v)?[i];
        let last = *out.last().unwrap();
        // clamp rounding-level non-monotonicity in flat stretches
        out.push((rho.max(last.0).min(phi_zero), v[i].min(last.1)));
    }
    out.push((phi_zero, 0.0));
    Ok(out)
}

/// Decoder curve operated with rate backoff `eps`: `psi_eps(rho) = psi((1 + eps) rho)`.
pub fn backed_off(samples: &[PsiSample], eps: f64) -> Vec<PsiSample> {
    samples.iter().map(|&(r, v)| (r / (1.0 + eps), v)).collect()
}

/// `int v_post_i dphi_i` along the gamma track, plus the `log(1 + phi_i(1))`
/// contribution of the region where user `i` is still undecoded.
///
/// Trapezoidal Stieltjes sum; `grid` is a decreasing `v_1` grid in `(0, 1]`.
/// The curve is closed at `(phi_i(0), 0)`.
pub fn upper_bound_rate(ec: &EffectiveChannel, g: &GammaProfile, i: usize, grid: &[f64]) -> Result<f64> {
    let n = ec.num_users();
    if i >= n {
        return Err(Error::InvalidArgument(format!("user index {i} out of range")));
    }
    let phi_one = extrinsic_sinr(ec, &vec![1.0; n])?[i];
    let mut total = phi_one.ln_1p();
    let mut prev = (phi_one, 1.0 / (phi_one + 1.0));
    for &v1 in grid.iter().filter(|&&v1| v1 < 1.0) {
        if !(v1 > 0.0) {
            return Err(Error::InvalidArgument(format!("grid value {v1} outside (0, 1]")));
        }
        let v = gamma_variances(v1, g);
        let rho = extrinsic_sinr(ec, &v)?[i];
        let post = 1.0 / (rho + 1.0 / v[i]);
        total += 0.5 * (prev.1 + post) * (rho - prev.0);
        prev = (rho, post);
    }
    total += 0.5 * prev.1 * (ec.matched_filter_snr(i) - prev.0);
    Ok(total)
}

/// Checks that `order` is a permutation of `0..n`.
pub fn validate_order(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::InvalidOrder(format!("{order:?} has {} entries, expected {n}", order.len())));
    }
    for &u in order {
        if u >= n || std::mem::replace(&mut seen[u], true) {
            return Err(Error::InvalidOrder(format!("{order:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// Successive-decoding rates; `order[0]` is decoded first (sees everyone else as interference).
pub fn sic_corner(ec: &EffectiveChannel, order: &[usize]) -> Result<Vec<f64>> {
    let n = ec.num_users();
    validate_order(order, n)?;
    let a = ec.gram_a();
    // log det(I + H_S^H H_S / noise_var) on the users still undecoded
    let log_det = |set: &[usize]| -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        Ok(Cholesky::new(&a.principal(set))?.log_det())
    };
    let mut rates = vec![0.0; n];
    let mut below = 0.0;
    for k in (0..n).rev() {
        let here = log_det(&order[k..])?;
        rates[order[k]] = here - below;
        below = here;
    }
    Ok(rates)
}

/// Closed-form two-user rates with `gamma_1 = 1`, `gamma_2 = gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoUserClosedForm {
    pub a11: Complex64,
    pub a12: Complex64,
    pub a21: Complex64,
    pub a22: Complex64,
    pub eta: f64,
    pub gamma: f64,
}

impl TwoUserClosedForm {
    pub fn new(ec: &EffectiveChannel, gamma: f64) -> Result<Self> {
        if ec.num_users() != 2 {
            return Err(Error::Dimension(format!(
                "closed form needs 2 users, scenario has {}",
                ec.num_users()
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        let a = ec.gram_a();
        let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        // eta^2 = a22^2 g^2 + 2 (2 a21 a12 - a22 a11) g + a11^2
        //       = (a22 g - a11)^2 + 4 |a12|^2 g
        let d = a22.re * gamma - a11.re;
        let eta = (d * d + 4.0 * a12.norm_sqr() * gamma).sqrt();
        Ok(Self {
            a11,
            a12,
            a21,
            a22,
            eta,
            gamma,
        })
    }

    pub fn det_a(&self) -> f64 {
        self.a11.re * self.a22.re - self.a12.norm_sqr()
    }

    /// R1 = 1/2 log(g det A) + (a22 g - a11)/(2 eta) log((a22 g + a11 - eta)/(a22 g + a11 + eta)).
    ///
    /// The numerator `a22 g + a11 - eta` is rewritten as
    /// `4 g det A / (a22 g + a11 + eta)` to survive `g -> 0` and `g -> inf`.
    pub fn r1(&self) -> f64 {
        let g = self.gamma;
        let (a11, a22) = (self.a11.re, self.a22.re);
        let det = self.det_a();
        let s = a22 * g + a11;
        let head = 0.5 * (g * det).ln();
        if self.eta == 0.0 {
            // only possible with a12 = 0 and a22 g = a11, where the second term vanishes
            return head;
        }
        let ratio = 4.0 * g * det / ((s + self.eta) * (s + self.eta));
        head + (a22 * g - a11) / (2.0 * self.eta) * ratio.ln()
    }

    /// The printed R2 expression has the same log argument in numerator and
    /// denominator, `log((a22 g + a11 + eta)/(a22 g + a11 + eta))`, so it is
    /// identically `1/2 log(det A / g)`. R2 is instead taken from the sum-rate
    /// identity `R1 + R2 = log det A`.
    pub fn r2(&self) -> f64 {
        self.det_a().ln() - self.r1()
    }

    pub fn rates(&self) -> (f64, f64) {
        (self.r1(), self.r2())
    }
}

/// `(R1, R2)` in nats from the two-user closed form.
pub fn two_user_closed_form(ec: &EffectiveChannel, gamma2: f64) -> Result<(f64, f64)> {
    Ok(TwoUserClosedForm::new(ec, gamma2)?.rates())
}

/// Matched decoder of user `i` evaluated at `(1 + eps) rho`.
pub fn backed_off_psi(ec: &EffectiveChannel, g: &GammaProfile, i: usize, rho: f64, eps: f64) -> Result<f64> {
    matched_psi(ec, g, i, (1.0 + eps) * rho, PSI_TOL)
}
