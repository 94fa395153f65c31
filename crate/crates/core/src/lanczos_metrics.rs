//! Disorder-averaged statistics of the Lanczos coefficients: Krylov
//! variance, reciprocity, angular profiles, and saturation-profile fits.

use serde::{Deserialize, Serialize};

use crate::bilanczos::TridiagonalForm;
use crate::error::{Error, Result};
use crate::stats;

/// Coefficient sets from many disorder realizations sharing one `(L, W_γ)`
/// point. Krylov dimensions may differ between members when a breakdown
/// truncated a run; profile reductions use the common prefix.
#[derive(Debug, Clone)]
pub struct CoefficientEnsemble {
    pub l: usize,
    pub w_gamma: f64,
    pub realizations: Vec<TridiagonalForm>,
}

impl CoefficientEnsemble {
    pub fn new(l: usize, w_gamma: f64, realizations: Vec<TridiagonalForm>) -> Self {
        Self { l, w_gamma, realizations }
    }

    /// Smallest Krylov dimension across members.
    pub fn min_k(&self) -> usize {
        self.realizations.iter().map(|f| f.k()).min().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }
}

/// Krylov variance: sample variance of `ln(j_{2n-1}/j_{2n})` over all
/// complete odd/even pairs, with `j_n = |b_n c_n|^{1/2}`.
pub fn krylov_variance(form: &TridiagonalForm) -> Result<f64> {
    krylov_variance_windowed(form, None)
}

/// Same as [`krylov_variance`] with the hopping index capped at
/// `max_j_index` (1-based); `None` uses the full coefficient range.
pub fn krylov_variance_windowed(form: &TridiagonalForm, max_j_index: Option<usize>) -> Result<f64> {
    let js = form.hopping_amplitudes();
    let top = max_j_index.map_or(js.len(), |m| m.min(js.len()));
    let pairs = top / 2;
    if pairs < 2 {
        return Err(Error::InsufficientSamples(format!(
            "Krylov variance needs ≥ 2 hopping pairs, found {pairs} (K = {})",
            form.k()
        )));
    }
    let mut ratios = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let odd = js[2 * i];
        let even = js[2 * i + 1];
        if odd == 0.0 {
            return Err(Error::ZeroHopping { index: 2 * i + 1 });
        }
        if even == 0.0 {
            return Err(Error::ZeroHopping { index: 2 * i + 2 });
        }
        ratios.push((odd / even).ln());
    }
    Ok(stats::sample_variance(&ratios))
}

/// Reciprocity metric `R_K^{(d)} = (1/d) Σ_{n=1}^{d} cos θ_n` with
/// `θ_n = arg(b_n c_n)`. In the gauge used here `b_n > 0`, so `θ_n = arg c_n`.
pub fn reciprocity(form: &TridiagonalForm, d: usize) -> Result<f64> {
    if d < 1 || d > form.k().saturating_sub(1) {
        return Err(Error::InvalidInput(format!(
            "reciprocity depth d = {d} outside 1..={}",
            form.k().saturating_sub(1)
        )));
    }
    let theta = form.link_arguments();
    Ok(theta[..d].iter().map(|t| t.cos()).sum::<f64>() / d as f64)
}

/// Disorder-averaged reciprocity over an ensemble.
pub fn ensemble_reciprocity(ensemble: &CoefficientEnsemble, d: usize) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let vals: Result<Vec<f64>> =
        ensemble.realizations.iter().map(|f| reciprocity(f, d)).collect();
    Ok(stats::mean(&vals?))
}

/// Per-link disorder average of `cos θ_n`; entry `i` corresponds to link
/// `n = i + 1`. Length is `min K − 1` over the ensemble.
pub fn theta_profile(ensemble: &CoefficientEnsemble) -> Vec<f64> {
    let links = ensemble.min_k().saturating_sub(1);
    let mut acc = vec![0.0; links];
    for form in &ensemble.realizations {
        for (i, theta) in form.link_arguments()[..links].iter().enumerate() {
            acc[i] += theta.cos();
        }
    }
    let n = ensemble.realizations.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    acc
}

/// Disorder averages of `|b_n|` and `|c_n|`; entry `i` is link `n = i + 1`.
pub fn magnitude_profiles(ensemble: &CoefficientEnsemble) -> (Vec<f64>, Vec<f64>) {
    let links = ensemble.min_k().saturating_sub(1);
    let mut b_acc = vec![0.0; links];
    let mut c_acc = vec![0.0; links];
    for form in &ensemble.realizations {
        for i in 0..links {
            b_acc[i] += form.b[i];
            c_acc[i] += form.c[i].norm();
        }
    }
    let n = ensemble.realizations.len() as f64;
    b_acc.iter_mut().for_each(|v| *v /= n);
    c_acc.iter_mut().for_each(|v| *v /= n);
    (b_acc, c_acc)
}

/// Amplitude fit of the averaged coefficient magnitudes against the deformed
/// square-root saturation profile `A √(1 − (n/2^L)^{1-q})` over the window
/// `n ∈ (L, K_min − 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsallisFit {
    pub q: f64,
    pub amplitude_b: f64,
    pub amplitude_c: f64,
    pub residual_b: f64,
    pub residual_c: f64,
}

impl TsallisFit {
    /// Combined residual, used to rank different `q` values.
    pub fn residual(&self) -> f64 {
        self.residual_b + self.residual_c
    }
}

pub fn tsallis_fit(ensemble: &CoefficientEnsemble, q: f64) -> Result<TsallisFit> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("q = {q} outside [0, 1)")));
    }
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let (b_prof, c_prof) = magnitude_profiles(ensemble);
    let dim = (1usize << ensemble.l) as f64;
    // model values on links n = L+1 .. K_min-1 (profile indices n-1)
    let lo = ensemble.l; // first profile index inside the window
    if lo >= b_prof.len() {
        return Err(Error::EmptyFitWindow);
    }
    let model: Vec<f64> = (lo..b_prof.len())
        .map(|i| {
            let n = (i + 1) as f64;
            (1.0 - (n / dim).powf(1.0 - q)).max(0.0).sqrt()
        })
        .collect();
    let fit = |ys: &[f64]| {
        let num: f64 = model.iter().zip(&ys[lo..]).map(|(f, y)| f * y).sum();
        let den: f64 = model.iter().map(|f| f * f).sum();
        let amp = if den > 0.0 { num / den } else { 0.0 };
        let res: f64 = model
            .iter()
            .zip(&ys[lo..])
            .map(|(f, y)| {
                let d = y - amp * f;
                d * d
            })
            .sum();
        (amp, res)
    };
    let (amplitude_b, residual_b) = fit(&b_prof);
    let (amplitude_c, residual_c) = fit(&c_prof);
    Ok(TsallisFit { q, amplitude_b, amplitude_c, residual_b, residual_c })
}
