//! Channel scenarios, the weighted effective channel, and gamma profiles.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};

/// Whether a scenario's channel matrix is real or complex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Real,
    Complex,
}

/// One uplink MU-MIMO instance: `y = H diag(w) x + n`, `n ~ CN(0, noise_var I)`.
///
/// Real-field scenarios live in the same complex container with every
/// imaginary part exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelScenario {
    h: CMatrix,
    w: Vec<f64>,
    noise_var: f64,
    field_kind: FieldKind,
}

/// On-disk scenario document. Row-major; rows are receive antennas, columns are users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(rename = "H_re")]
    pub h_re: Vec<Vec<f64>>,
    #[serde(rename = "H_im", default, skip_serializing_if = "Option::is_none")]
    pub h_im: Option<Vec<Vec<f64>>>,
    pub w: Vec<f64>,
    pub noise_var: f64,
}

impl ChannelScenario {
    /// Builds and validates a scenario.
    pub fn new(h: CMatrix, w: Vec<f64>, noise_var: f64, field_kind: FieldKind) -> Result<Self> {
        if h.rows() < 1 || h.cols() < 1 {
            return Err(Error::Scenario(format!(
                "channel must have at least one antenna and one user, got {}x{}",
                h.rows(),
                h.cols()
            )));
        }
        if w.len() != h.cols() {
            return Err(Error::Scenario(format!(
                "{} weights for {} users",
                w.len(),
                h.cols()
            )));
        }
        if let Some((i, &wi)) = w.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Scenario(format!("weight w[{i}] = {wi} must be positive and finite")));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::Scenario(format!(
                "noise_var = {noise_var} must be positive and finite"
            )));
        }
        if h.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Scenario("channel matrix has non-finite entries".into()));
        }
        if field_kind == FieldKind::Real && h.as_slice().iter().any(|z| z.im != 0.0) {
            return Err(Error::Scenario(
                "real-field scenario has nonzero imaginary parts".into(),
            ));
        }
        Ok(Self {
            h,
            w,
            noise_var,
            field_kind,
        })
    }

    /// Real channel given as rows, with unit weights.
    pub fn real(rows: &[&[f64]], noise_var: f64) -> Result<Self> {
        let doc = ScenarioDoc {
            h_re: rows.iter().map(|r| r.to_vec()).collect(),
            h_im: None,
            w: vec![1.0; rows.first().map_or(0, |r| r.len())],
            noise_var,
        };
        Self::from_doc(doc)
    }

    pub fn from_doc(doc: ScenarioDoc) -> Result<Self> {
        let nr = doc.h_re.len();
        let nu = doc.h_re.first().map_or(0, |r| r.len());
        check_rect(&doc.h_re, nr, nu, "H_re")?;
        if let Some(im) = &doc.h_im {
            if im.len() != nr {
                return Err(Error::Scenario(format!("H_im has {} rows, H_re has {nr}", im.len())));
            }
            check_rect(im, nr, nu, "H_im")?;
        }
        let field_kind = if doc.h_im.is_some() {
            FieldKind::Complex
        } else {
            FieldKind::Real
        };
        let h = CMatrix::from_fn(nr, nu, |r, c| {
            let im = doc.h_im.as_ref().map_or(0.0, |m| m[r][c]);
            Complex64::new(doc.h_re[r][c], im)
        });
        Self::new(h, doc.w, doc.noise_var, field_kind)
    }

    pub fn to_doc(&self) -> ScenarioDoc {
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..self.h.rows())
                .map(|r| (0..self.h.cols()).map(|c| f(&self.h[(r, c)])).collect())
                .collect()
        };
        ScenarioDoc {
            h_re: rows(|z| z.re),
            h_im: match self.field_kind {
                FieldKind::Real => None,
                FieldKind::Complex => Some(rows(|z| z.im)),
            },
            w: self.w.clone(),
            noise_var: self.noise_var,
        }
    }

    /// Parses and validates a JSON scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScenarioDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("scenario document is always serializable")
    }

    pub fn channel(&self) -> &CMatrix {
        &self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn field_kind(&self) -> FieldKind {
        self.field_kind
    }

    pub fn num_antennas(&self) -> usize {
        self.h.rows()
    }

    pub fn num_users(&self) -> usize {
        self.h.cols()
    }
}

fn check_rect(m: &[Vec<f64>], nr: usize, nu: usize, name: &str) -> Result<()> {
    if nr == 0 || nu == 0 {
        return Err(Error::Scenario(format!("{name} is empty")));
    }
    if let Some((r, row)) = m.iter().enumerate().find(|(_, row)| row.len() != nu) {
        return Err(Error::Scenario(format!(
            "{name} is ragged: row {r} has {} entries, expected {nu}",
            row.len()
        )));
    }
    Ok(())
}

/// Reads a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ChannelScenario> {
    let text = std::fs::read_to_string(path)?;
    ChannelScenario::from_json(&text)
}

/// Effective channel `H' = H diag(w)` and `A = I + H'^H H' / noise_var`.
#[derive(Clone, Debug)]
pub struct EffectiveChannel {
    hp: CMatrix,
    gram_a: CMatrix,
    noise_var: f64,
}

impl EffectiveChannel {
    pub fn new(s: &ChannelScenario) -> Self {
        let hp = CMatrix::from_fn(s.num_antennas(), s.num_users(), |r, c| s.h[(r, c)] * s.w[c]);
        let mut gram_a = hp.gram().scale(1.0 / s.noise_var);
        gram_a.add_diag(&vec![1.0; s.num_users()]);
        Self {
            hp,
            gram_a,
            noise_var: s.noise_var,
        }
    }

    pub fn hp(&self) -> &CMatrix {
        &self.hp
    }

    /// `A = I + H'^H H' / noise_var`.
    pub fn gram_a(&self) -> &CMatrix {
        &self.gram_a
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn num_users(&self) -> usize {
        self.hp.cols()
    }

    pub fn num_antennas(&self) -> usize {
        self.hp.rows()
    }

    /// `||h'_i||^2 / noise_var`, the interference-free SNR of user `i`.
    pub fn matched_filter_snr(&self, i: usize) -> f64 {
        self.gram_a[(i, i)].re - 1.0
    }

    /// `log det A` in nats.
    pub fn log_det_a(&self) -> f64 {
        Cholesky::new(&self.gram_a)
            .expect("I + PSD is positive definite")
            .log_det()
    }
}

/// Shorthand for [`EffectiveChannel::new`].
pub fn effective_channel(s: &ChannelScenario) -> EffectiveChannel {
    EffectiveChannel::new(s)
}

/// Positive per-user weights coupling all prior variances to `v_1`,
/// normalized so that the first entry is exactly 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GammaProfile(Vec<f64>);

impl GammaProfile {
    /// Normalizes by the first entry. Fails on empty, non-positive or non-finite input.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidArgument("gamma profile is empty".into()));
        }
        if let Some(g) = raw.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "gamma entries must be positive and finite, got {g}"
            )));
        }
        let g1 = raw[0];
        let mut v: Vec<f64> = raw.iter().map(|g| g / g1).collect();
        v[0] = 1.0;
        if let Some(g) = v.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "gamma ratio {g} is out of range after normalization"
            )));
        }
        Ok(Self(v))
    }

    /// All-ones profile (symmetric track).
    pub fn uniform(num_users: usize) -> Self {
        Self(vec![1.0; num_users])
    }

    /// Profile whose track reduces to successive decoding in `order`
    /// (first entry decoded first): user `order[k]` gets `ratio^k`.
    pub fn for_order(order: &[usize], ratio: f64) -> Result<Self> {
        let mut raw = vec![0.0; order.len()];
        for (k, &u) in order.iter().enumerate() {
            if u >= order.len() {
                return Err(Error::InvalidOrder(format!("{order:?}")));
            }
            raw[u] = ratio.powi(k as i32);
        }
        Self::new(raw)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

impl TryFrom<Vec<f64>> for GammaProfile {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GammaProfile> for Vec<f64> {
    fn from(g: GammaProfile) -> Self {
        g.0
    }
}
