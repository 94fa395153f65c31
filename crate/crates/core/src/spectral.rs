//! Complex spectra and their spacing-ratio statistics.
//!
//! For each eigenvalue `z_j` the complex spacing ratio is
//! `r_j = (z_NN − z_j)/(z_NNN − z_j)` with nearest and next-nearest
//! neighbours by Euclidean distance in the complex plane, so `|r_j| ≤ 1`.
//! The radial mean `⟨r⟩ = ⟨|r_j|⟩` and angular mean `⟨cos θ⟩` with
//! `θ = arg r` distinguish the reference ensembles sampled here.

use ndarray::prelude::*;
use ndarray_linalg::{Eig, EigVals, EigValsh, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DenseOperator;
use crate::scaling::{nelder_mead, NelderMeadOptions};
use crate::stats::mix64;
use crate::C64;

/// Where a spectrum came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    Model,
    Goe,
    AiDagger,
    Poisson2d,
    Synthetic,
}

/// Reference random-matrix ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Real symmetric Gaussian matrices; real spectra.
    Goe,
    /// Complex symmetric Gaussian matrices (transpose-symmetric, like the
    /// chain Hamiltonian); complex spectra.
    AiDagger,
    /// Uncorrelated points dropped uniformly in a square.
    Poisson2d,
}

impl EnsembleKind {
    fn source(self) -> SpectrumSource {
        match self {
            EnsembleKind::Goe => SpectrumSource::Goe,
            EnsembleKind::AiDagger => SpectrumSource::AiDagger,
            EnsembleKind::Poisson2d => SpectrumSource::Poisson2d,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<C64>,
    pub source: SpectrumSource,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Drop the `fraction` of eigenvalues with the largest `|z − z̄|`.
    /// Sensitivity knob for edge effects; the default pipeline keeps all.
    pub fn trim_extremal(&self, fraction: f64) -> Spectrum {
        let n = self.len();
        let keep = n - ((n as f64 * fraction.clamp(0.0, 0.9)) as usize);
        let mean = self.eigenvalues.iter().sum::<C64>() / C64::new(n as f64, 0.0);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            (self.eigenvalues[a] - mean)
                .norm()
                .total_cmp(&(self.eigenvalues[b] - mean).norm())
        });
        Spectrum {
            eigenvalues: idx[..keep].iter().map(|&i| self.eigenvalues[i]).collect(),
            source: self.source,
        }
    }
}

/// All eigenvalues of a general complex matrix.
pub fn eigendecompose(h: &DenseOperator) -> Result<Spectrum> {
    let vals = h.entries.eigvals().map_err(|e| Error::Eig(e.to_string()))?;
    Ok(Spectrum { eigenvalues: vals.to_vec(), source: SpectrumSource::Model })
}

/// Eigenvalues together with the matrix of right eigenvectors (columns).
pub fn eigendecompose_with_vectors(h: &DenseOperator) -> Result<(Spectrum, Array2<C64>)> {
    let (vals, vecs) = h.entries.eig().map_err(|e| Error::Eig(e.to_string()))?;
    Ok((Spectrum { eigenvalues: vals.to_vec(), source: SpectrumSource::Model }, vecs))
}

/// Complex spacing ratios of one spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsrSample {
    pub ratios: Vec<C64>,
    /// Eigenvalues skipped because a twin sat within 1e-14.
    pub excluded_duplicates: usize,
}

const DUPLICATE_TOL: f64 = 1e-14;

/// One ratio per eigenvalue. Distance ties are broken by index order; an
/// eigenvalue whose nearest neighbour coincides within 1e-14 is excluded and
/// counted.
pub fn csr_ratios(spectrum: &Spectrum) -> Result<CsrSample> {
    let z = &spectrum.eigenvalues;
    let n = z.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("CSR needs ≥ 3 eigenvalues, got {n}")));
    }
    let mut ratios = Vec::with_capacity(n);
    let mut excluded = 0;
    for j in 0..n {
        // two smallest distances, stable in the original index order
        let mut nn = usize::MAX;
        let mut nnn = usize::MAX;
        let mut d_nn = f64::INFINITY;
        let mut d_nnn = f64::INFINITY;
        for k in 0..n {
            if k == j {
                continue;
            }
            let d = (z[k] - z[j]).norm();
            if d < d_nn {
                d_nnn = d_nn;
                nnn = nn;
                d_nn = d;
                nn = k;
            } else if d < d_nnn {
                d_nnn = d;
                nnn = k;
            }
        }
        if d_nn < DUPLICATE_TOL {
            excluded += 1;
            continue;
        }
        ratios.push((z[nn] - z[j]) / (z[nnn] - z[j]));
    }
    Ok(CsrSample { ratios, excluded_duplicates: excluded })
}

/// Mean radial signature `⟨|r|⟩`.
pub fn mean_radial(sample: &CsrSample) -> Result<f64> {
    if sample.ratios.is_empty() {
        return Err(Error::InvalidInput("empty CSR sample".into()));
    }
    Ok(sample.ratios.iter().map(|r| r.norm()).sum::<f64>() / sample.ratios.len() as f64)
}

/// Mean angular signature `⟨cos arg r⟩`.
pub fn mean_angular(sample: &CsrSample) -> Result<f64> {
    if sample.ratios.is_empty() {
        return Err(Error::InvalidInput("empty CSR sample".into()));
    }
    Ok(sample.ratios.iter().map(|r| r.arg().cos()).sum::<f64>() / sample.ratios.len() as f64)
}

/// Real symmetric Gaussian matrix `(A + Aᵀ)/2`.
pub fn goe_matrix(dim: usize, rng: &mut impl Rng) -> Array2<f64> {
    let a = Array2::from_shape_fn((dim, dim), |_| StandardNormal.sample(rng));
    (&a + &a.t()) / 2.0
}

/// Complex symmetric Gaussian matrix `(A + Aᵀ)/2` with complex Gaussian
/// entries.
pub fn ai_dagger_matrix(dim: usize, rng: &mut impl Rng) -> Array2<C64> {
    let a = Array2::from_shape_fn((dim, dim), |_| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let at = a.t().to_owned();
    (&a + &at).mapv(|x| x / 2.0)
}

/// Independent uniform points in the unit square of the complex plane.
pub fn poisson2d_points(dim: usize, rng: &mut impl Rng) -> Vec<C64> {
    (0..dim).map(|_| C64::new(rng.random(), rng.random())).collect()
}

/// Draw `count` spectra of the given ensemble, deterministically from
/// `seed` (one independent stream per matrix index).
pub fn sample_reference_ensemble(
    kind: EnsembleKind,
    dim: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Spectrum>> {
    if dim < 3 {
        return Err(Error::InvalidInput(format!("ensemble dimension {dim} < 3")));
    }
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(i as u64)));
            let eigenvalues = match kind {
                EnsembleKind::Goe => {
                    let m = goe_matrix(dim, &mut rng);
                    let vals = m.eigvalsh(UPLO::Lower).map_err(|e| Error::Eig(e.to_string()))?;
                    vals.iter().map(|&x| C64::new(x, 0.0)).collect()
                }
                EnsembleKind::AiDagger => {
                    let m = ai_dagger_matrix(dim, &mut rng);
                    let vals = m.eigvals().map_err(|e| Error::Eig(e.to_string()))?;
                    vals.to_vec()
                }
                EnsembleKind::Poisson2d => poisson2d_points(dim, &mut rng),
            };
            Ok(Spectrum { eigenvalues, source: kind.source() })
        })
        .collect()
}

/// CSR with periodic minimum-image displacements in a square box of side
/// `box_size`. Realizes the translation-invariant point process at finite
/// sample size: an open square biases the angular signature near the walls.
pub fn csr_ratios_torus(points: &[C64], box_size: f64) -> Result<CsrSample> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("CSR needs ≥ 3 points, got {n}")));
    }
    let wrap = |d: f64| {
        let d = d - box_size * (d / box_size).round();
        d
    };
    let displacement =
        |a: C64, b: C64| C64::new(wrap(a.re - b.re), wrap(a.im - b.im));
    let mut ratios = Vec::with_capacity(n);
    let mut excluded = 0;
    for j in 0..n {
        let mut best = [(f64::INFINITY, C64::new(0.0, 0.0)); 2];
        for k in 0..n {
            if k == j {
                continue;
            }
            let disp = displacement(points[k], points[j]);
            let d = disp.norm();
            if d < best[0].0 {
                best[1] = best[0];
                best[0] = (d, disp);
            } else if d < best[1].0 {
                best[1] = (d, disp);
            }
        }
        if best[0].0 < DUPLICATE_TOL {
            excluded += 1;
            continue;
        }
        ratios.push(best[0].1 / best[1].1);
    }
    Ok(CsrSample { ratios, excluded_duplicates: excluded })
}

/// Pooled radial and angular means over many spectra. Uniform-square
/// reference spectra use the periodic neighbour geometry; everything else
/// uses plane geometry.
pub fn ensemble_csr_means(spectra: &[Spectrum]) -> Result<(f64, f64)> {
    let mut all = Vec::new();
    for s in spectra {
        let sample = match s.source {
            SpectrumSource::Poisson2d => csr_ratios_torus(&s.eigenvalues, 1.0)?,
            _ => csr_ratios(s)?,
        };
        all.extend(sample.ratios);
    }
    let sample = CsrSample { ratios: all, excluded_duplicates: 0 };
    Ok((mean_radial(&sample)?, mean_angular(&sample)?))
}

/// Fitted logistic size-dependence of `⟨r⟩`:
/// `⟨r⟩(L) = r_∞ + Δr · (1 + exp[−a(L − L₀)])^{-1}`, canonicalized so that
/// `r_infinity` is the `L → ∞` limit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExtrapolationFit {
    pub r_infinity: f64,
    pub delta_r: f64,
    pub rate: f64,
    pub l0: f64,
    /// Sum of squared residuals at the optimum.
    pub residual: f64,
}

fn logistic_model(p: &[f64], l: f64) -> f64 {
    p[0] + p[1] / (1.0 + (-p[2] * (l - p[3])).exp())
}

/// Least-squares fit of the logistic extrapolation over ≥ 4 system sizes.
pub fn extrapolate_r_infinity(points: &[(usize, f64)]) -> Result<ExtrapolationFit> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|&(l, r)| (l as f64, r)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() < 4 {
        return Err(Error::InsufficientSamples(format!(
            "logistic extrapolation needs ≥ 4 distinct sizes, got {}",
            pts.len()
        )));
    }
    let sse = |p: &[f64]| -> f64 {
        pts.iter()
            .map(|&(l, r)| {
                let d = logistic_model(p, l) - r;
                d * d
            })
            .sum()
    };
    let (r_first, r_last) = (pts[0].1, pts[pts.len() - 1].1);
    let l_mid = (pts[0].0 + pts[pts.len() - 1].0) / 2.0;
    let spread = (r_first - r_last).abs().max(1e-3);
    let mut starts = Vec::new();
    for &rate in &[-3.0, -1.0, -0.3] {
        // branch with the logistic term dying off at large L
        starts.push(vec![r_last, r_first - r_last, rate, l_mid]);
        // mirrored branch
        starts.push(vec![r_first, r_last - r_first, -rate, l_mid]);
    }
    starts.push(vec![r_last, spread.copysign(r_first - r_last), -1.0, pts[0].0]);
    let opts = NelderMeadOptions { xtol: 1e-12, ftol: 1e-16, max_iter: 20_000 };
    let mut best: Option<crate::scaling::NelderMeadResult> = None;
    for s in &starts {
        let mut run = nelder_mead(&sse, s, &opts)?;
        // polish from the found point; restarts recover from premature
        // simplex collapse
        for _ in 0..2 {
            run = nelder_mead(&sse, &run.x, &opts)?;
        }
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("nonempty start list");
    if !best.converged {
        return Err(Error::FitDiverged { params: best.x, objective: best.value });
    }
    let mut p = best.x;
    if p[2] > 0.0 {
        // 1/(1+e^{-ax}) = 1 − 1/(1+e^{ax}): fold the limit into r_∞
        p[0] += p[1];
        p[1] = -p[1];
        p[2] = -p[2];
    }
    Ok(ExtrapolationFit {
        r_infinity: p[0],
        delta_r: p[1],
        rate: p[2],
        l0: p[3],
        residual: best.value,
    })
}
