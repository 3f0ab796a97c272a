//! Iterative detection: LMMSE estimation, extrinsic decomposition, state
//! evolution, and Monte Carlo checks of the predicted error statistics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};
use crate::scenario::{EffectiveChannel, GammaProfile};
use crate::transfer::{extrinsic_sinr, matched_psi, VarianceState, PSI_TOL};

/// Samples drawn from one RNG stream.
pub const BATCH: usize = 4096;

/// Smallest accepted Monte Carlo sample count.
pub const MIN_SAMPLES: usize = 1000;

fn check_prior(ec: &EffectiveChannel, v: &[f64]) -> Result<()> {
    if v.len() != ec.num_users() {
        return Err(Error::Dimension(format!("{} variances for {} users", v.len(), ec.num_users())));
    }
    for (i, &x) in v.iter().enumerate() {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::DegenerateVariance { user: i, value: x });
        }
    }
    Ok(())
}

/// LMMSE estimator for fixed prior variances, factored once.
pub struct LmmseEstimator<'a> {
    ec: &'a EffectiveChannel,
    v: Vec<f64>,
    chol: Cholesky,
    post_diag: Vec<f64>,
    /// `H'^H / noise_var`
    mf: CMatrix,
}

impl<'a> LmmseEstimator<'a> {
    pub fn new(ec: &'a EffectiveChannel, v: &[f64]) -> Result<Self> {
        check_prior(ec, v)?;
        let mut p = ec.gram_a().clone();
        let d: Vec<f64> = v.iter().map(|x| 1.0 / x - 1.0).collect();
        p.add_diag(&d);
        let chol = Cholesky::new(&p)?;
        let post_diag = chol.inverse_diagonal();
        Ok(Self {
            ec,
            v: v.to_vec(),
            chol,
            post_diag,
            mf: ec.hp().adjoint().scale(1.0 / ec.noise_var()),
        })
    }

    pub fn prior(&self) -> &[f64] {
        &self.v
    }

    pub fn posterior_diag(&self) -> &[f64] {
        &self.post_diag
    }

    /// `x_hat = V_post (V^-1 x_bar + H'^H y / noise_var)`.
    pub fn estimate(&self, y: &[Complex64], xbar: &[Complex64]) -> Result<Vec<Complex64>> {
        if y.len() != self.ec.num_antennas() || xbar.len() != self.v.len() {
            return Err(Error::Dimension(format!(
                "y has {} entries (want {}), x_bar has {} (want {})",
                y.len(),
                self.ec.num_antennas(),
                xbar.len(),
                self.v.len()
            )));
        }
        let mut rhs = self.mf.matvec(y);
        for ((r, xb), v) in rhs.iter_mut().zip(xbar).zip(&self.v) {
            *r += xb / v;
        }
        self.chol.solve_in_place(&mut rhs);
        Ok(rhs)
    }
}

/// LMMSE estimate and posterior variances for one observation.
pub fn lmmse_estimate(
    ec: &EffectiveChannel,
    y: &[Complex64],
    xbar: &[Complex64],
    v: &[f64],
) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let est = LmmseEstimator::new(ec, v)?;
    let xhat = est.estimate(y, xbar)?;
    Ok((xhat, est.post_diag))
}

/// The same estimate written with an `N_r x N_r` solve:
/// `x_bar + V H'^H (noise_var I + H' V H'^H)^-1 (y - H' x_bar)`.
pub fn lmmse_estimate_gain_form(
    ec: &EffectiveChannel,
    y: &[Complex64],
    xbar: &[Complex64],
    v: &[f64],
) -> Result<Vec<Complex64>> {
    check_prior(ec, v)?;
    let hp = ec.hp();
    if y.len() != ec.num_antennas() || xbar.len() != v.len() {
        return Err(Error::Dimension("observation or prior mean has the wrong length".into()));
    }
    let hv = CMatrix::from_fn(hp.rows(), hp.cols(), |r, c| hp[(r, c)] * v[c]);
    let mut cov = hv.matmul(&hp.adjoint());
    cov.add_diag(&vec![ec.noise_var(); hp.rows()]);
    let resid: Vec<Complex64> = y.iter().zip(hp.matvec(xbar)).map(|(a, b)| a - b).collect();
    let z = Cholesky::new(&cov)?.solve(&resid);
    let upd = hv.adjoint().matvec(&z);
    Ok(xbar.iter().zip(upd).map(|(a, b)| a + b).collect())
}

/// Splits a posterior into the extrinsic observation `beta_i = x_i + noise`
/// with SINR `rho_i = 1/post_i - 1/v_i`.
pub fn extrinsic_decompose(
    xhat: &[Complex64],
    xbar: &[Complex64],
    post_diag: &[f64],
    v: &[f64],
) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let n = v.len();
    if xhat.len() != n || xbar.len() != n || post_diag.len() != n {
        return Err(Error::Dimension("extrinsic inputs differ in length".into()));
    }
    let mut beta = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    for i in 0..n {
        let r = 1.0 / post_diag[i] - 1.0 / v[i];
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::NonPositiveSinr { user: i, value: r });
        }
        beta.push((xhat[i] / post_diag[i] - xbar[i] / v[i]) / r);
        rho.push(r);
    }
    Ok((beta, rho))
}

/// Iterates of the scalar state evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionTrace {
    pub backoff: f64,
    /// `steps[k]` holds the variances entering iteration `k` and the SINRs they produce.
    pub steps: Vec<VarianceState>,
    pub converged: bool,
}

impl EvolutionTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> &VarianceState {
        self.steps.last().expect("trace always has the initial state")
    }
}

/// Alternates `rho = phi(v)` and `v_i = psi_i((1 + backoff) rho_i)` from `v = 1`
/// until every variance is at most `threshold` or `max_iter` updates have run.
pub fn state_evolution(
    ec: &EffectiveChannel,
    g: &GammaProfile,
    backoff: f64,
    max_iter: usize,
    threshold: f64,
) -> Result<EvolutionTrace> {
    let n = ec.num_users();
    if g.len() != n {
        return Err(Error::Dimension(format!("gamma has {} entries for {n} users", g.len())));
    }
    if !(backoff >= 0.0 && backoff.is_finite()) {
        return Err(Error::InvalidArgument(format!("backoff must be nonnegative, got {backoff}")));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be nonnegative, got {threshold}")));
    }
    let mut v = vec![1.0; n];
    let mut steps = Vec::new();
    let mut converged = false;
    for it in 0..=max_iter {
        let rho = extrinsic_sinr(ec, &v)?;
        steps.push(VarianceState { v: v.clone(), rho: rho.clone() });
        if v.iter().all(|&x| x <= threshold) {
            converged = true;
            break;
        }
        if it == max_iter {
            break;
        }
        let next = (0..n)
            .map(|i| matched_psi(ec, g, i, (1.0 + backoff) * rho[i], PSI_TOL))
            .collect::<Result<Vec<_>>>()?;
        if next == v {
            break;
        }
        v = next;
    }
    Ok(EvolutionTrace {
        backoff,
        steps,
        converged,
    })
}

/// Empirical extrinsic error statistics of one user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserStats {
    pub user: usize,
    pub v_in: f64,
    /// `1 / rho_i`.
    pub mse_pred: f64,
    pub mse_emp: f64,
    pub mse_stderr: f64,
    /// Mean of `beta_i - x_i`.
    pub bias: Complex64,
    pub bias_stderr: f64,
    /// Mean of `(beta_i - x_i) conj(x_i)`.
    pub corr: Complex64,
    /// Standard errors of the real and imaginary parts of `corr`.
    pub corr_stderr: (f64, f64),
    /// Sample skewness of the real and imaginary error components pooled.
    pub skewness: f64,
    /// Sample excess kurtosis of the same; 0 for a Gaussian.
    pub excess_kurtosis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n_samples: usize,
    pub seed: u64,
    pub users: Vec<UserStats>,
}

#[derive(Clone, Debug, Default)]
struct Moments {
    n: f64,
    e2: f64,
    e4: f64,
    e: Complex64,
    c: Complex64,
    c_re2: f64,
    c_im2: f64,
    r: [f64; 4],
}

impl Moments {
    fn push(&mut self, e: Complex64, x: Complex64) {
        let m = e.norm_sqr();
        let c = e * x.conj();
        self.n += 1.0;
        self.e2 += m;
        self.e4 += m * m;
        self.e += e;
        self.c += c;
        self.c_re2 += c.re * c.re;
        self.c_im2 += c.im * c.im;
        for r in [e.re, e.im] {
            let mut p = 1.0;
            for k in 0..4 {
                p *= r;
                self.r[k] += p;
            }
        }
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.e2 += o.e2;
        self.e4 += o.e4;
        self.e += o.e;
        self.c += o.c;
        self.c_re2 += o.c_re2;
        self.c_im2 += o.c_im2;
        for k in 0..4 {
            self.r[k] += o.r[k];
        }
    }

    fn stats(&self, user: usize, v_in: f64, mse_pred: f64) -> UserStats {
        let n = self.n;
        let sd = |sum2: f64, mean: f64| ((sum2 / n - mean * mean).max(0.0) / n).sqrt();
        let mse = self.e2 / n;
        let bias = self.e / n;
        let corr = self.c / n;
        // pooled real components: 2n draws
        let m = 2.0 * n;
        let mu = self.r[0] / m;
        let (s2, s3, s4) = (self.r[1] / m, self.r[2] / m, self.r[3] / m);
        let var = s2 - mu * mu;
        let c3 = s3 - 3.0 * mu * s2 + 2.0 * mu.powi(3);
        let c4 = s4 - 4.0 * mu * s3 + 6.0 * mu * mu * s2 - 3.0 * mu.powi(4);
        UserStats {
            user,
            v_in,
            mse_pred,
            mse_emp: mse,
            mse_stderr: sd(self.e4, mse),
            bias,
            bias_stderr: ((mse - bias.norm_sqr()).max(0.0) / n).sqrt(),
            corr,
            corr_stderr: (sd(self.c_re2, corr.re), sd(self.c_im2, corr.im)),
            skewness: c3 / var.powf(1.5),
            excess_kurtosis: c4 / (var * var) - 3.0,
        }
    }
}

fn complex_normal<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws `x ~ CN(0, 1)`, a prior mean with `E|x - x_bar|^2 = v`, and
/// `y = H' x + n`; runs one LMMSE pass and compares the extrinsic error
/// `beta - x` with the predicted variance `1/rho`.
///
/// The prior mean is `x_bar = (1 - v)(x + CN(0, v/(1-v)))`, the conditional
/// mean of `x` given a Gaussian side observation, so its error variance is
/// exactly `v` and is uncorrelated with `x_bar`.
///
/// Samples are split into batches of [`BATCH`]; batch `b` uses stream `b` of a
/// ChaCha8 generator seeded with `seed`, so results do not depend on the
/// number of threads.
pub fn monte_carlo_validate(ec: &EffectiveChannel, v: &[f64], n_samples: usize, seed: u64) -> Result<SimReport> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let est = LmmseEstimator::new(ec, v)?;
    let rho = extrinsic_sinr(ec, v)?;
    let nu = ec.num_users();
    let nr = ec.num_antennas();
    let hp = ec.hp();
    let side: Vec<f64> = v.iter().map(|&x| if x < 1.0 { x / (1.0 - x) } else { 0.0 }).collect();

    let batches = n_samples.div_ceil(BATCH);
    let partial = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<Vec<Moments>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BATCH.min(n_samples - b * BATCH);
            let mut acc = vec![Moments::default(); nu];
            let mut x = vec![Complex64::default(); nu];
            let mut xbar = vec![Complex64::default(); nu];
            for _ in 0..count {
                for j in 0..nu {
                    x[j] = complex_normal(&mut rng, 1.0);
                    xbar[j] = if v[j] < 1.0 {
                        (x[j] + complex_normal(&mut rng, side[j])) * (1.0 - v[j])
                    } else {
                        Complex64::default()
                    };
                }
                let mut y = hp.matvec(&x);
                for yk in y.iter_mut().take(nr) {
                    *yk += complex_normal(&mut rng, ec.noise_var());
                }
                let xhat = est.estimate(&y, &xbar)?;
                let (beta, _) = extrinsic_decompose(&xhat, &xbar, est.posterior_diag(), v)?;
                for j in 0..nu {
                    acc[j].push(beta[j] - x[j], x[j]);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = vec![Moments::default(); nu];
    for batch in &partial {
        for (t, m) in total.iter_mut().zip(batch) {
            t.merge(m);
        }
    }
    Ok(SimReport {
        n_samples,
        seed,
        users: total
            .iter()
            .enumerate()
            .map(|(i, m)| m.stats(i, v[i], 1.0 / rho[i]))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ChannelScenario;

    fn two_user() -> EffectiveChannel {
        EffectiveChannel::new(&ChannelScenario::real(&[&[1.32, -1.31], &[-1.43, 0.74]], 0.5).unwrap())
    }

    fn complex3x2() -> EffectiveChannel {
        let s = ChannelScenario::from_json(
            r#"{"H_re": [[0.9, -0.3], [0.4, 1.1], [-0.7, 0.2]],
                "H_im": [[0.1, 0.5], [-0.6, 0.0], [0.3, -0.2]],
                "w": [1.2, 0.8], "noise_var": 0.4}"#,
        )
        .unwrap();
        EffectiveChannel::new(&s)
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn both_estimator_forms_agree() {
        let ec = complex3x2();
        let y = [c(0.3, -1.2), c(0.8, 0.1), c(-0.5, 0.4)];
        let xbar = [c(0.2, 0.1), c(-0.4, 0.3)];
        for v in [[1.0, 1.0], [0.3, 0.8], [1e-3, 0.5]] {
            let (a, _) = lmmse_estimate(&ec, &y, &xbar, &v).unwrap();
            let b = lmmse_estimate_gain_form(&ec, &y, &xbar, &v).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).norm() < 1e-10, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn estimator_rejects_bad_input() {
        let ec = two_user();
        let y = [c(0.0, 0.0); 2];
        assert!(matches!(
            lmmse_estimate(&ec, &y, &[c(0.0, 0.0); 2], &[0.0, 1.0]),
            Err(Error::DegenerateVariance { user: 0, .. })
        ));
        assert!(lmmse_estimate(&ec, &y[..1], &[c(0.0, 0.0); 2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn extrinsic_sinr_matches_transfer() {
        let ec = complex3x2();
        let v = [0.4, 0.9];
        let est = LmmseEstimator::new(&ec, &v).unwrap();
        let z = [c(0.0, 0.0); 2];
        let (_, rho) = extrinsic_decompose(&z, &z, est.posterior_diag(), &v).unwrap();
        let phi = extrinsic_sinr(&ec, &v).unwrap();
        for (a, b) in rho.iter().zip(&phi) {
            assert!((a - b).abs() < 1e-10 * b);
        }
    }

    #[test]
    fn extrinsic_rejects_non_positive_sinr() {
        let z = [c(0.0, 0.0)];
        assert!(matches!(
            extrinsic_decompose(&z, &z, &[0.5], &[0.5]),
            Err(Error::NonPositiveSinr { user: 0, .. })
        ));
    }

    #[test]
    fn no_backoff_stays_at_start() {
        let ec = two_user();
        let t = state_evolution(&ec, &GammaProfile::uniform(2), 0.0, 5, 1e-6).unwrap();
        assert!(!t.converged);
        assert_eq!(t.final_state().v, vec![1.0, 1.0]);
    }

    #[test]
    fn backoff_drives_variances_to_zero() {
        let ec = two_user();
        let g = GammaProfile::new(vec![1.0, 2.0]).unwrap();
        let t = state_evolution(&ec, &g, 0.05, 200, 1e-6).unwrap();
        assert!(t.converged, "{:?}", t.final_state());
        let maxes: Vec<f64> = t.steps.iter().map(|s| s.v.iter().cloned().fold(0.0, f64::max)).collect();
        for w in maxes.windows(2) {
            assert!(w[1] < w[0], "{maxes:?}");
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_checks_sample_count() {
        let ec = two_user();
        let a = monte_carlo_validate(&ec, &[1.0, 1.0], 5000, 7).unwrap();
        let b = monte_carlo_validate(&ec, &[1.0, 1.0], 5000, 7).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_validate(&ec, &[1.0, 1.0], 999, 7).is_err());
    }

    #[test]
    fn monte_carlo_matches_prediction() {
        let ec = complex3x2();
        let rep = monte_carlo_validate(&ec, &[0.3, 0.7], 40_000, 11).unwrap();
        for u in &rep.users {
            assert!((u.mse_emp - u.mse_pred).abs() <= 4.0 * u.mse_stderr, "{u:?}");
            assert!(u.corr.re.abs() <= 4.0 * u.corr_stderr.0, "{u:?}");
            assert!(u.corr.im.abs() <= 4.0 * u.corr_stderr.1, "{u:?}");
        }
    }
}
