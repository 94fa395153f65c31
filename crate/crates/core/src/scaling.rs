//! Finite-size scaling collapse and critical-point extraction.
//!
//! Curves `y(W; L)` for several system sizes are rescaled as
//! `x = (W − W_c) L^α`, `y' = y L^{-β}` and interpolated onto the shared
//! x-overlap window; the optimizer searches `(W_c, α[, β])` for the point
//! where all rescaled curves coincide.
//!
//! The pairwise dissimilarity is `‖u − v‖² / (‖u‖² + ‖v‖²)`, averaged over
//! all `L` pairs. For norm-matched curves this equals `1 − cos-similarity`;
//! unlike the raw cosine it is not invariant under rescaling one curve
//! alone, which is what makes the amplitude exponent `β` identifiable while
//! keeping the objective invariant under a common rescaling of all data.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point of a disorder-averaged curve: `(w_gamma, y, y_err)`.
pub type CurvePoint = (f64, f64, f64);

/// Per-size curves of one observable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingDataset {
    /// Observable tag, e.g. `sigma_K2`, `R_K_4`, `sigma_S`, `S_mean`.
    pub observable: String,
    /// Points per system size, sorted by `w_gamma`.
    pub curves: BTreeMap<usize, Vec<CurvePoint>>,
}

impl ScalingDataset {
    pub fn new(observable: impl Into<String>) -> Self {
        Self { observable: observable.into(), curves: BTreeMap::new() }
    }

    pub fn insert_curve(&mut self, l: usize, mut points: Vec<CurvePoint>) {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.curves.insert(l, points);
    }

    pub fn validate(&self) -> Result<()> {
        if self.curves.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "scaling needs ≥ 3 system sizes, found {}",
                self.curves.len()
            )));
        }
        for (l, pts) in &self.curves {
            if pts.len() < 5 {
                return Err(Error::InvalidInput(format!(
                    "curve for L = {l} has {} points, need ≥ 5",
                    pts.len()
                )));
            }
        }
        Ok(())
    }

    fn w_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for pts in self.curves.values() {
            lo = lo.min(pts.first().unwrap().0);
            hi = hi.max(pts.last().unwrap().0);
        }
        (lo, hi)
    }
}

/// Simplex termination controls. The method uses reflection 1, expansion 2,
/// contraction 0.5 and shrink 0.5.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    /// Simplex diameter threshold.
    pub xtol: f64,
    /// Value-spread threshold.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { xtol: 1e-6, ftol: 1e-10, max_iter: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// `false` when the iteration cap fired before either tolerance.
    pub converged: bool,
}

/// Downhill-simplex minimizer.
pub fn nelder_mead<F>(f: F, init: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: Fn(&[f64]) -> f64,
{
    let n = init.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty parameter vector".into()));
    }
    let f0 = f(init);
    if !f0.is_finite() {
        return Err(Error::InvalidInput("objective not finite at the initial point".into()));
    }
    // initial simplex: perturb one coordinate per vertex
    let mut simplex: Vec<Vec<f64>> = vec![init.to_vec()];
    for i in 0..n {
        let mut v = init.to_vec();
        v[i] += if v[i] != 0.0 { 0.05 * v[i] } else { 0.00025 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let converged = loop {
        // order best → worst
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(simplex[0].iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        // both tolerances must hold: the value spread alone collapses to zero
        // whenever two vertices straddle a minimum symmetrically, long before
        // the simplex has located it
        let spread = values[n] - values[0];
        if diameter < opts.xtol && spread < opts.ftol {
            break true;
        }
        if iterations >= opts.max_iter {
            break false;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let lerp = |t: f64| -> Vec<f64> {
            centroid.iter().zip(worst.iter()).map(|(c, w)| c + t * (c - w)).collect()
        };

        let reflected = lerp(1.0);
        let f_r = f(&reflected);
        if f_r < values[0] {
            let expanded = lerp(2.0);
            let f_e = f(&expanded);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
        } else if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
        } else {
            // contraction: outside if the reflection improved on the worst
            let contracted = if f_r < values[n] { lerp(0.5) } else { lerp(-0.5) };
            let f_c = f(&contracted);
            if f_c < values[n].min(f_r) {
                simplex[n] = contracted;
                values[n] = f_c;
            } else {
                // shrink toward the best vertex
                for i in 1..=n {
                    simplex[i] = simplex[i]
                        .iter()
                        .zip(simplex[0].iter())
                        .map(|(v, b)| b + 0.5 * (v - b))
                        .collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    };

    Ok(NelderMeadResult {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        converged,
    })
}

/// Starting point for the collapse search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CollapseGuess {
    pub w_c: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Optimized collapse parameters. `beta = 0` when the observable is not
/// amplitude-rescaled. The convention is `y' = y L^{-β}`, so data growing as
/// `y ∝ L^{β}` collapses at that `β`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CollapseResult {
    pub w_c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

const OVERLAP_GRID: usize = 200;
const EMPTY_OVERLAP_PENALTY: f64 = 1e6;

fn interp_sorted(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => ys[i],
        Err(0) => ys[0],
        Err(i) if i >= xs.len() => ys[xs.len() - 1],
        Err(i) => {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] * (1.0 - w) + ys[i] * w
        }
    }
}

fn collapse_objective(curves: &[(f64, Vec<(f64, f64)>)], w_c: f64, alpha: f64, beta: f64) -> f64 {
    let mut rescaled: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(curves.len());
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (l, pts) in curves {
        let lx = l.powf(alpha);
        let ly = l.powf(-beta);
        let xs: Vec<f64> = pts.iter().map(|p| (p.0 - w_c) * lx).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1 * ly).collect();
        lo = lo.max(xs[0]);
        hi = hi.min(*xs.last().unwrap());
        rescaled.push((xs, ys));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        // no shared window: large penalty, graded by the gap so the simplex
        // can find its way back
        let gap = if lo.is_finite() && hi.is_finite() { lo - hi } else { 1.0 };
        return EMPTY_OVERLAP_PENALTY * (1.0 + gap.max(0.0));
    }
    let grid: Vec<f64> = (0..OVERLAP_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / (OVERLAP_GRID - 1) as f64)
        .collect();
    let sampled: Vec<Vec<f64>> = rescaled
        .iter()
        .map(|(xs, ys)| grid.iter().map(|&x| interp_sorted(xs, ys, x)).collect())
        .collect();
    let mut acc = 0.0;
    let mut pairs = 0;
    for i in 0..sampled.len() {
        for j in i + 1..sampled.len() {
            let (u, v) = (&sampled[i], &sampled[j]);
            let num: f64 = u.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = u.iter().map(|a| a * a).sum::<f64>()
                + v.iter().map(|b| b * b).sum::<f64>();
            acc += if den > 0.0 { num / den } else { 0.0 };
            pairs += 1;
        }
    }
    acc / pairs as f64
}

/// Optimize the collapse of `data`. With `rescale_y` unset, `β` is pinned at
/// zero and only `(W_c, α)` are searched. The optimization is restarted from
/// a coarse lattice of initial simplexes (16 by default, or centred on
/// `init` when given); the best final objective wins.
pub fn collapse(
    data: &ScalingDataset,
    rescale_y: bool,
    init: Option<CollapseGuess>,
) -> Result<CollapseResult> {
    data.validate()?;
    let curves: Vec<(f64, Vec<(f64, f64)>)> = data
        .curves
        .iter()
        .map(|(&l, pts)| (l as f64, pts.iter().map(|p| (p.0, p.1)).collect()))
        .collect();
    let (w_lo, w_hi) = data.w_range();

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(g) = init {
        if rescale_y {
            starts.push(vec![g.w_c, g.alpha, g.beta]);
        } else {
            starts.push(vec![g.w_c, g.alpha]);
        }
    }
    let w_seeds: Vec<f64> =
        [0.2, 0.4, 0.6, 0.8].iter().map(|f| w_lo + f * (w_hi - w_lo)).collect();
    if rescale_y {
        for &w in &w_seeds {
            for &a in &[0.75, 1.75] {
                for &b in &[-0.5, 0.5] {
                    starts.push(vec![w, a, b]);
                }
            }
        }
    } else {
        for &w in &w_seeds {
            for &a in &[0.5, 1.0, 1.5, 2.0] {
                starts.push(vec![w, a]);
            }
        }
    }

    let objective = |p: &[f64]| {
        let beta = if rescale_y { p[2] } else { 0.0 };
        collapse_objective(&curves, p[0], p[1], beta)
    };
    let opts = NelderMeadOptions::default();
    let runs: Vec<NelderMeadResult> = starts
        .par_iter()
        .map(|s| nelder_mead(&objective, s, &opts))
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");

    let result = CollapseResult {
        w_c: best.x[0],
        alpha: best.x[1],
        beta: if rescale_y { best.x[2] } else { 0.0 },
        objective: best.value,
        iterations: best.iterations,
        converged: best.converged,
    };
    if !best.converged {
        return Err(Error::FitDiverged { params: best.x, objective: best.value });
    }
    Ok(result)
}

/// Per-size zero crossings of a sign-changing observable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingReport {
    pub per_l: BTreeMap<usize, f64>,
    pub mean: f64,
}

/// Locate the zero crossing of each curve by linear interpolation. Every
/// curve must change sign exactly once over its sampled range.
pub fn crossing_point(data: &ScalingDataset) -> Result<CrossingReport> {
    let mut per_l = BTreeMap::new();
    for (&l, pts) in &data.curves {
        let mut crossing = None;
        let mut count = 0;
        for w in pts.windows(2) {
            let (x0, y0, _) = w[0];
            let (x1, y1, _) = w[1];
            if y0 == 0.0 {
                count += 1;
                crossing = Some(x0);
            } else if y0.signum() != y1.signum() && y1 != 0.0 {
                count += 1;
                crossing = Some(x0 + (0.0 - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        if let Some(last) = pts.last() {
            if last.1 == 0.0 {
                count += 1;
                crossing = Some(last.0);
            }
        }
        match (count, crossing) {
            (0, _) | (_, None) => return Err(Error::NoSignChange { l }),
            (1, Some(x)) => {
                per_l.insert(l, x);
            }
            _ => return Err(Error::MultipleSignChanges { l }),
        }
    }
    let mean = per_l.values().sum::<f64>() / per_l.len() as f64;
    Ok(CrossingReport { per_l, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_minimum() {
        let r = nelder_mead(|p| (p[0] - 3.0) * (p[0] - 3.0), &[0.0], &Default::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-5, "minimum at {}", r.x[0]);
    }

    #[test]
    fn rosenbrock_benchmark() {
        let rosen = |p: &[f64]| {
            let (x, y) = (p[0], p[1]);
            (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x)
        };
        let r = nelder_mead(rosen, &[-1.2, 1.0], &Default::default()).unwrap();
        assert!(r.converged, "stopped after {} iterations", r.iterations);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn constant_objective_returns_init_converged() {
        let r = nelder_mead(|_| 7.0, &[1.0, 2.0], &Default::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.x, vec![1.0, 2.0]);
        assert_eq!(r.value, 7.0);
    }

    #[test]
    fn nonfinite_start_is_rejected() {
        assert!(nelder_mead(|p| p[0].ln(), &[-1.0], &Default::default()).is_err());
    }

    fn synthetic_dataset(
        w_c: f64,
        alpha: f64,
        beta: f64,
        noise: f64,
        seed: u64,
    ) -> ScalingDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = ScalingDataset::new("synthetic");
        for l in [8usize, 12, 16, 24] {
            let lf = l as f64;
            let pts: Vec<CurvePoint> = (0..41)
                .map(|i| {
                    let w = 0.5 + i as f64 / 40.0; // [0.5, 1.5]
                    let x = (w - w_c) * lf.powf(alpha);
                    let y = lf.powf(beta) * x.tanh();
                    let eps = if noise > 0.0 {
                        1.0 + noise * (2.0 * rng.random::<f64>() - 1.0)
                    } else {
                        1.0
                    };
                    (w, y * eps, y.abs() * noise)
                })
                .collect();
            data.insert_curve(l, pts);
        }
        data
    }

    #[test]
    fn collapse_recovers_clean_generator() {
        let data = synthetic_dataset(1.0, 0.8, 0.5, 0.0, 0);
        let r = collapse(&data, true, None).unwrap();
        assert!((r.w_c - 1.0).abs() < 0.02, "W_c = {}", r.w_c);
        assert!((r.alpha - 0.8).abs() / 0.8 < 0.02, "alpha = {}", r.alpha);
        assert!((r.beta - 0.5).abs() / 0.5 < 0.02, "beta = {}", r.beta);
        assert!(r.objective < 1e-4);
    }

    #[test]
    fn collapse_recovers_noisy_generator_within_five_percent() {
        let data = synthetic_dataset(1.0, 0.8, 0.5, 0.01, 3);
        let r = collapse(&data, true, None).unwrap();
        assert!((r.w_c - 1.0).abs() < 0.05, "W_c = {}", r.w_c);
        assert!((r.alpha - 0.8).abs() / 0.8 < 0.05, "alpha = {}", r.alpha);
        assert!((r.beta - 0.5).abs() / 0.5 < 0.05, "beta = {}", r.beta);
    }

    #[test]
    fn collapse_with_pinned_amplitude() {
        // β = 0 generator, reciprocity-style sign-changing curves
        let mut data = ScalingDataset::new("R_K_4");
        for l in [6usize, 8, 10] {
            let lf = l as f64;
            let pts: Vec<CurvePoint> = (0..25)
                .map(|i| {
                    let w = 1.0 + i as f64 / 12.0; // [1.0, 3.0]
                    let x = (w - 1.7) * lf.powf(0.8);
                    (w, -x.tanh(), 0.0)
                })
                .collect();
            data.insert_curve(l, pts);
        }
        let r = collapse(&data, false, None).unwrap();
        assert_eq!(r.beta, 0.0);
        assert!((r.w_c - 1.7).abs() < 0.02, "W_c = {}", r.w_c);
        assert!((r.alpha - 0.8).abs() < 0.05, "alpha = {}", r.alpha);
    }

    #[test]
    fn objective_invariant_under_common_rescaling() {
        let data = synthetic_dataset(1.0, 0.8, 0.5, 0.005, 9);
        let mut doubled = data.clone();
        for pts in doubled.curves.values_mut() {
            for p in pts.iter_mut() {
                p.1 *= 2.0;
            }
        }
        let a = collapse(&data, true, None).unwrap();
        let b = collapse(&doubled, true, None).unwrap();
        assert!((a.w_c - b.w_c).abs() < 1e-4);
        assert!((a.alpha - b.alpha).abs() < 1e-4);
    }

    #[test]
    fn dataset_validation() {
        let mut data = ScalingDataset::new("x");
        data.insert_curve(4, vec![(0.0, 0.0, 0.0); 5]);
        data.insert_curve(6, vec![(0.0, 0.0, 0.0); 5]);
        assert!(data.validate().is_err(), "needs three sizes");
        data.insert_curve(8, vec![(0.0, 0.0, 0.0); 4]);
        assert!(data.validate().is_err(), "needs five points per curve");
    }

    #[test]
    fn crossing_point_examples() {
        let mut data = ScalingDataset::new("x");
        for l in [6usize, 8, 10] {
            let pts: Vec<CurvePoint> =
                (0..9).map(|i| (i as f64 * 0.5, i as f64 * 0.5 - 2.0, 0.0)).collect();
            data.insert_curve(l, pts);
        }
        let rep = crossing_point(&data).unwrap();
        assert!((rep.mean - 2.0).abs() < 1e-12);
        assert!(rep.per_l.values().all(|&x| (x - 2.0).abs() < 1e-12));

        let mut monotone = ScalingDataset::new("x");
        monotone.insert_curve(6, (0..9).map(|i| (i as f64, 1.0 + i as f64, 0.0)).collect());
        assert!(matches!(crossing_point(&monotone), Err(Error::NoSignChange { l: 6 })));

        let mut wiggly = ScalingDataset::new("x");
        wiggly.insert_curve(
            6,
            vec![(0.0, 1.0, 0.0), (1.0, -1.0, 0.0), (2.0, 1.0, 0.0), (3.0, -1.0, 0.0)],
        );
        assert!(matches!(crossing_point(&wiggly), Err(Error::MultipleSignChanges { l: 6 })));
    }
}
