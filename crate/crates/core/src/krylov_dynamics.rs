//! Dynamics on the Krylov chain: evolve the wave function under the
//! tridiagonal generator and compute complexity diagnostics.
//!
//! The chain equation is `i ∂_t φ_n = b_n φ_{n-1} + a_n φ_n + c_{n+1} φ_{n+1}`
//! with `φ_0(0) = 1`. The generator is not Hermitian, so the norm of `φ`
//! drifts; amplitudes are kept in a scaled representation `φ_raw = φ · e^s`
//! with the log factor `s` tracked separately, and every diagnostic is
//! evaluated on the normalized wave function.

use ndarray::prelude::*;
use ndarray_linalg::{Eig, Inverse, Solve};
use serde::{Deserialize, Serialize};

use crate::bilanczos::{KrylovBasis, TridiagonalForm};
use crate::error::{Error, Result};
use crate::model::{DenseOperator, StateVector};
use crate::stats::{lin_space, log_space};
use crate::C64;

/// How to propagate the chain state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionMethod {
    /// Embedded 5(4) adaptive Runge-Kutta stepping. No assumption of norm
    /// conservation; robust for any generator.
    AdaptiveRk,
    /// Full eigendecomposition of the `K × K` tridiagonal matrix and exact
    /// exponential propagation. Preferred for long-time sampling.
    Eigen,
}

/// Evolution controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub method: EvolutionMethod,
    pub rtol: f64,
    pub atol: f64,
    /// The state is rescaled whenever its norm leaves this window; the
    /// stripped factor accumulates in the log scale.
    pub guard_low: f64,
    pub guard_high: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            method: EvolutionMethod::AdaptiveRk,
            rtol: 1e-9,
            atol: 1e-12,
            guard_low: 1e-150,
            guard_high: 1e150,
        }
    }
}

impl EvolveOptions {
    pub fn eigen() -> Self {
        Self { method: EvolutionMethod::Eigen, ..Default::default() }
    }
}

/// Krylov wave function at one time, stored as `φ_raw = phi · e^{log_scale}`.
#[derive(Debug, Clone)]
pub struct KrylovWaveFunction {
    pub t: f64,
    pub phi: Array1<C64>,
    /// Log of the scale factor stripped off to keep amplitudes representable.
    pub log_scale: f64,
}

impl KrylovWaveFunction {
    /// Initial condition: everything on the first chain site.
    pub fn initial(k: usize) -> Self {
        let mut phi = Array1::zeros(k);
        phi[0] = C64::new(1.0, 0.0);
        Self { t: 0.0, phi, log_scale: 0.0 }
    }

    /// Pre-normalization norm. May overflow to infinity for strong gain;
    /// [`Self::log_raw_norm`] is always finite.
    pub fn raw_norm(&self) -> f64 {
        vec_norm(&self.phi) * self.log_scale.exp()
    }

    pub fn log_raw_norm(&self) -> f64 {
        vec_norm(&self.phi).ln() + self.log_scale
    }

    /// Unit-norm copy of the amplitudes.
    pub fn normalized(&self) -> Result<Array1<C64>> {
        let n = vec_norm(&self.phi);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(self.phi.mapv(|z| z / n))
    }
}

/// Time series of the two Krylov diagnostics for one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticTrace {
    pub times: Vec<f64>,
    pub c_k: Vec<f64>,
    pub i_k: Vec<f64>,
    pub log_norms: Vec<f64>,
}

impl DiagnosticTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linearly interpolated `C_K` at time `t` (times must bracket `t`).
    pub fn c_k_at(&self, t: f64) -> Option<f64> {
        interp(&self.times, &self.c_k, t)
    }

    pub fn i_k_at(&self, t: f64) -> Option<f64> {
        interp(&self.times, &self.i_k, t)
    }

    /// Rows `t,c_k,i_k,raw_log_norm`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,c_k,i_k,raw_log_norm")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.times[i], self.c_k[i], self.i_k[i], self.log_norms[i]
            )?;
        }
        Ok(())
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > *xs.last().unwrap() {
        return None;
    }
    match xs.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => Some(ys[i]),
        Err(i) => {
            let (x0, x1) = (xs[i - 1], xs[i]);
            let w = (x - x0) / (x1 - x0);
            Some(ys[i - 1] * (1.0 - w) + ys[i] * w)
        }
    }
}

fn vec_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `out = -i T φ` for the tridiagonal generator.
fn chain_derivative(form: &TridiagonalForm, phi: &Array1<C64>) -> Array1<C64> {
    let k = form.k();
    let minus_i = C64::new(0.0, -1.0);
    let mut out = Array1::zeros(k);
    for n in 0..k {
        let mut acc = form.a[n] * phi[n];
        if n > 0 {
            acc += C64::new(form.b[n - 1], 0.0) * phi[n - 1];
        }
        if n + 1 < k {
            acc += form.c[n] * phi[n + 1];
        }
        out[n] = minus_i * acc;
    }
    out
}

/// Default sampling grid: a short linear ramp for the early-time fit plus a
/// logarithmic grid spanning the plateau, growth and saturation regimes.
pub fn default_time_grid() -> Vec<f64> {
    let mut grid = lin_space(0.0, 0.01, 20);
    grid.extend(log_space(1e-3, 1e4, 200));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Evolve the chain from `φ(0) = e_0`, returning the state at each requested
/// time. Times must be strictly increasing and nonnegative.
pub fn evolve_krylov_chain(
    form: &TridiagonalForm,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<Vec<KrylovWaveFunction>> {
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "times must be strictly increasing and start at t ≥ 0".into(),
        ));
    }
    match opts.method {
        EvolutionMethod::AdaptiveRk => evolve_rk(form, times, opts),
        EvolutionMethod::Eigen => {
            let prop = EigenPropagator::new(form)?;
            times.iter().map(|&t| prop.at(t)).collect()
        }
    }
}

/// Compute the full diagnostic trace in one pass.
pub fn diagnostic_trace(
    form: &TridiagonalForm,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<DiagnosticTrace> {
    let states = evolve_krylov_chain(form, times, opts)?;
    let mut c_k = Vec::with_capacity(states.len());
    let mut i_k = Vec::with_capacity(states.len());
    let mut log_norms = Vec::with_capacity(states.len());
    for wf in &states {
        c_k.push(complexity(wf)?);
        i_k.push(ipr(wf)?);
        log_norms.push(wf.log_raw_norm());
    }
    Ok(DiagnosticTrace { times: times.to_vec(), c_k, i_k, log_norms })
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn evolve_rk(
    form: &TridiagonalForm,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<Vec<KrylovWaveFunction>> {
    let k = form.k();
    let mut state = KrylovWaveFunction::initial(k);
    let mut out = Vec::with_capacity(times.len());
    let mut h: f64 = 1e-4;
    for &target in times {
        while state.t < target {
            let remaining = target - state.t;
            let step = h.min(remaining);
            if step < 1e-14 * state.t.max(1.0) {
                return Err(Error::StepUnderflow { t: state.t });
            }
            let (next, err) = rk_step(form, &state.phi, state.t, step);
            let err_norm = rk_error(&state.phi, &next, &err, opts);
            if err_norm <= 1.0 {
                state.t += step;
                state.phi = next;
                let n = vec_norm(&state.phi);
                if n < opts.guard_low || n > opts.guard_high {
                    state.log_scale += n.ln();
                    state.phi.mapv_inplace(|z| z / n);
                }
            }
            let factor = if err_norm > 0.0 {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = (step * factor).max(f64::MIN_POSITIVE);
        }
        out.push(KrylovWaveFunction { t: target, phi: state.phi.clone(), log_scale: state.log_scale });
    }
    Ok(out)
}

/// One Dormand-Prince step: returns the 5th-order solution and the embedded
/// error estimate (difference of the 5th- and 4th-order results).
fn rk_step(
    form: &TridiagonalForm,
    y: &Array1<C64>,
    _t: f64,
    h: f64,
) -> (Array1<C64>, Array1<C64>) {
    let mut stages: Vec<Array1<C64>> = Vec::with_capacity(7);
    stages.push(chain_derivative(form, y));
    for s in 0..6 {
        let mut ys = y.clone();
        for (j, stage) in stages.iter().enumerate() {
            let w = A[s][j];
            if w != 0.0 {
                ys = ys + stage.mapv(|z| z * C64::new(h * w, 0.0));
            }
        }
        stages.push(chain_derivative(form, &ys));
    }
    let mut y5 = y.clone();
    let mut err = Array1::<C64>::zeros(y.len());
    for (j, stage) in stages.iter().enumerate() {
        if B5[j] != 0.0 {
            y5 = y5 + stage.mapv(|z| z * C64::new(h * B5[j], 0.0));
        }
        let d = B5[j] - B4[j];
        if d != 0.0 {
            err = err + stage.mapv(|z| z * C64::new(h * d, 0.0));
        }
    }
    (y5, err)
}

fn rk_error(
    y_old: &Array1<C64>,
    y_new: &Array1<C64>,
    err: &Array1<C64>,
    opts: &EvolveOptions,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..y_old.len() {
        let scale = opts.atol + opts.rtol * y_old[i].norm().max(y_new[i].norm());
        let e = err[i].norm() / scale;
        acc += e * e;
    }
    (acc / y_old.len() as f64).sqrt()
}

/// Exact propagator built from the eigendecomposition of the tridiagonal
/// generator. The dominant imaginary part is factored out analytically so
/// arbitrarily late times stay representable.
pub struct EigenPropagator {
    eigvals: Array1<C64>,
    eigvecs: Array2<C64>,
    coeffs: Array1<C64>,
    shift: f64,
}

impl EigenPropagator {
    pub fn new(form: &TridiagonalForm) -> Result<Self> {
        let t = form.to_dense();
        let (eigvals, eigvecs) = t.eig().map_err(|e| Error::Eig(e.to_string()))?;
        let mut e0 = Array1::<C64>::zeros(form.k());
        e0[0] = C64::new(1.0, 0.0);
        let coeffs = eigvecs.solve(&e0).map_err(|e| Error::Solve(e.to_string()))?;
        let shift = eigvals.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { eigvals, eigvecs, coeffs, shift })
    }

    pub fn at(&self, t: f64) -> Result<KrylovWaveFunction> {
        // e^{-izt} = e^{st} · e^{(-iz - s)t}; the second factor never grows.
        let w = Array1::from_iter(self.eigvals.iter().zip(self.coeffs.iter()).map(|(z, c)| {
            let exponent = (C64::new(0.0, -1.0) * z - C64::new(self.shift, 0.0)) * t;
            c * exponent.exp()
        }));
        let phi = self.eigvecs.dot(&w);
        Ok(KrylovWaveFunction { t, phi, log_scale: self.shift * t })
    }
}

/// Diagnostics attached to the direct-evolution oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleDiagnostics {
    /// 1-norm condition estimate of the eigenvector matrix.
    pub cond_estimate: f64,
    /// Set when the eigenbasis is close to singular (near an exceptional
    /// point); the result is still returned.
    pub near_exceptional: bool,
}

/// Independent cross-check: evolve `ψ(t) = e^{-iHt} ψ0` in the full Hilbert
/// space via eigendecomposition of `H`, then read off `φ_n = q_n† ψ(t)`.
pub struct DirectEvolver {
    eigvals: Array1<C64>,
    eigvecs: Array2<C64>,
    coeffs: Array1<C64>,
    q_adj: Array2<C64>,
    shift: f64,
    pub diagnostics: OracleDiagnostics,
}

impl DirectEvolver {
    pub fn new(h: &DenseOperator, psi0: &StateVector, basis: &KrylovBasis) -> Result<Self> {
        if psi0.dim != h.dim || basis.q.nrows() != h.dim {
            return Err(Error::DimensionMismatch("oracle inputs disagree on dimension".into()));
        }
        let (eigvals, eigvecs) = h.entries.eig().map_err(|e| Error::Eig(e.to_string()))?;
        let coeffs = eigvecs.solve(&psi0.amplitudes).map_err(|e| Error::Solve(e.to_string()))?;
        let inv = eigvecs.inv().map_err(|e| Error::Solve(e.to_string()))?;
        let one_norm = |m: &Array2<C64>| {
            (0..m.ncols())
                .map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let cond = one_norm(&eigvecs) * one_norm(&inv);
        let q_adj = basis.q.t().mapv(|z| z.conj());
        let shift = eigvals.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            eigvals,
            eigvecs,
            coeffs,
            q_adj,
            shift,
            diagnostics: OracleDiagnostics {
                cond_estimate: cond,
                near_exceptional: cond > 1e12,
            },
        })
    }

    pub fn at(&self, t: f64) -> KrylovWaveFunction {
        let w = Array1::from_iter(self.eigvals.iter().zip(self.coeffs.iter()).map(|(z, c)| {
            let exponent = (C64::new(0.0, -1.0) * z - C64::new(self.shift, 0.0)) * t;
            c * exponent.exp()
        }));
        let psi = self.eigvecs.dot(&w);
        let phi = self.q_adj.dot(&psi);
        KrylovWaveFunction { t, phi, log_scale: self.shift * t }
    }
}

/// One-shot form of the oracle.
pub fn direct_evolution_oracle(
    h: &DenseOperator,
    psi0: &StateVector,
    basis: &KrylovBasis,
    t: f64,
) -> Result<(KrylovWaveFunction, OracleDiagnostics)> {
    let evolver = DirectEvolver::new(h, psi0, basis)?;
    let wf = evolver.at(t);
    Ok((wf, evolver.diagnostics))
}

/// Krylov complexity: center of mass `Σ_n n |φ_n|²` of the normalized wave
/// function.
pub fn complexity(wf: &KrylovWaveFunction) -> Result<f64> {
    let phi = wf.normalized()?;
    Ok(phi.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum())
}

/// Inverse participation ratio `Σ_n |φ_n|⁴` of the normalized wave function.
pub fn ipr(wf: &KrylovWaveFunction) -> Result<f64> {
    let phi = wf.normalized()?;
    Ok(phi.iter().map(|z| z.norm_sqr() * z.norm_sqr()).sum())
}

/// Least-squares coefficient of the pure-quadratic model `C_K = a t²` over
/// the trace samples with `t < 0.01`.
pub fn early_time_coefficient(trace: &DiagnosticTrace) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0;
    for (&t, &c) in trace.times.iter().zip(trace.c_k.iter()) {
        if t < 0.01 {
            let t2 = t * t;
            num += c * t2;
            den += t2 * t2;
            used += 1;
        }
    }
    if used < 5 {
        return Err(Error::InsufficientSamples(format!(
            "early-time fit needs ≥ 5 samples below t = 0.01, found {used}"
        )));
    }
    Ok(num / den)
}
