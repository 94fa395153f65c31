//! Bi-orthogonal Lanczos tridiagonalization with complete
//! reorthogonalization.
//!
//! A non-Hermitian operator `H` and a start vector `ψ0` generate two Krylov
//! spaces, one from `H` and one from `H†`. The iteration builds bases
//! `P = [p_0, p_1, …]` and `Q = [q_0, q_1, …]` satisfying `Q†P = I` and the
//! three-term recurrences
//!
//! ```text
//! p_{n+1} ∝ H  p_n − a_n   p_n − c_n   p_{n-1}
//! q_{n+1} ∝ H† q_n − a_n*  q_n − b_n*  q_{n-1}
//! ```
//!
//! so that `T = Q† H P` is tridiagonal with diagonal `a_n`, subdiagonal
//! `b_n` and superdiagonal `c_n`. The gauge fixes `b_n = ‖p_{n+1}‖` real
//! positive, which makes every `p_n` a unit vector; `c_n` carries the phase
//! and magnitude mismatch of the dual direction. Each new pair of vectors is
//! re-projected against the whole stored basis until the projection removes
//! less than a factor `1/√2` of the norm.

use ndarray::prelude::*;
use ndarray::s;

use crate::error::{Error, Result};
use crate::model::{DenseOperator, StateVector};
use crate::C64;

/// Tridiagonalization controls.
#[derive(Debug, Clone, Copy)]
pub struct BiLanczosOptions {
    /// Certification threshold used by [`verify`] consumers.
    pub residual_tol: f64,
    /// `b_{n+1}` or `|c_{n+1}|` below this value terminates the iteration
    /// with a breakdown report.
    pub breakdown_tol: f64,
    /// Hard cap on reorthogonalization passes per step.
    pub max_reorth: usize,
    /// Keep the Krylov bases in the result. The bases are always held during
    /// the iteration; this only controls retention afterwards.
    pub store_basis: bool,
    /// Stop after this many Krylov vectors. The leading coefficients are
    /// unaffected by truncation, so short runs are exact for metrics that
    /// need only the first few chain links.
    pub max_steps: Option<usize>,
}

impl Default for BiLanczosOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-8,
            breakdown_tol: 1e-12,
            max_reorth: 10,
            store_basis: true,
            max_steps: None,
        }
    }
}

/// Lanczos coefficient triple. `b` is real nonnegative by gauge; `a` and `c`
/// are complex. `a` has length `K`, `b` and `c` length `K − 1`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TridiagonalForm {
    pub a: Vec<C64>,
    pub b: Vec<f64>,
    pub c: Vec<C64>,
}

impl TridiagonalForm {
    /// Krylov dimension reached.
    pub fn k(&self) -> usize {
        self.a.len()
    }

    /// Dense `K × K` matrix with `T[n][n] = a_n`, `T[n][n-1] = b_n`,
    /// `T[n][n+1] = c_{n+1}`.
    pub fn to_dense(&self) -> Array2<C64> {
        let k = self.k();
        let mut t = Array2::zeros((k, k));
        for n in 0..k {
            t[[n, n]] = self.a[n];
            if n + 1 < k {
                t[[n + 1, n]] = C64::new(self.b[n], 0.0);
                t[[n, n + 1]] = self.c[n];
            }
        }
        t
    }

    /// Gauge-invariant hopping amplitudes `j_n = |b_n c_n|^{1/2}`, `n` from 1
    /// to `K − 1` (returned 0-based).
    pub fn hopping_amplitudes(&self) -> Vec<f64> {
        self.b
            .iter()
            .zip(self.c.iter())
            .map(|(&b, c)| (b * c.norm()).sqrt())
            .collect()
    }

    /// Link arguments `θ_n = arg(b_n c_n)`.
    pub fn link_arguments(&self) -> Vec<f64> {
        self.b
            .iter()
            .zip(self.c.iter())
            .map(|(&b, c)| (C64::new(b, 0.0) * c).arg())
            .collect()
    }
}

/// Bi-orthogonal Krylov bases, columns `p_n` and `q_n`.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    pub p: Array2<C64>,
    pub q: Array2<C64>,
}

/// Why an iteration stopped before exhausting the Hilbert space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Breakdown {
    /// `‖p_{n+1}‖` fell below the breakdown tolerance.
    VanishingNorm { step: usize, b: f64 },
    /// `|c_{n+1}|` fell below the breakdown tolerance: the new direction is
    /// numerically orthogonal to its dual (extreme nonreciprocity).
    VanishingOverlap { step: usize, c_abs: f64 },
}

/// Result of [`tridiagonalize`].
#[derive(Debug, Clone)]
pub struct Tridiagonalization {
    pub form: TridiagonalForm,
    /// Present unless `store_basis` was disabled.
    pub basis: Option<KrylovBasis>,
    /// Present when the iteration terminated early on its own; `None` for a
    /// full run or a `max_steps` truncation.
    pub breakdown: Option<Breakdown>,
}

impl Tridiagonalization {
    pub fn k(&self) -> usize {
        self.form.k()
    }
}

/// `Q† v` evaluated as `conj(Qᵀ conj(v))` so no conjugated copy of the basis
/// is needed.
fn adjoint_apply(basis: &ArrayView2<C64>, v: &Array1<C64>) -> Array1<C64> {
    let vc = v.mapv(|z| z.conj());
    basis.t().dot(&vc).mapv(|z| z.conj())
}

fn norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Tridiagonalize `H` against `psi0` with the two-sided iteration.
///
/// Returns the coefficients, the bases (unless retention is disabled) and an
/// optional breakdown report. A breakdown truncates the result at the last
/// completed step rather than failing; only a reorthogonalization loop that
/// cannot stabilize within `max_reorth` passes is a hard error.
pub fn tridiagonalize(
    h: &DenseOperator,
    psi0: &StateVector,
    opts: &BiLanczosOptions,
) -> Result<Tridiagonalization> {
    let d = h.dim;
    if psi0.dim != d {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} vs operator dimension {}",
            psi0.dim, d
        )));
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput("start vector must have unit norm".into()));
    }
    let m = opts.max_steps.map_or(d, |s| s.clamp(1, d));
    let h_dag = h.adjoint();

    let mut p = Array2::<C64>::zeros((d, m));
    let mut q = Array2::<C64>::zeros((d, m));
    p.column_mut(0).assign(&psi0.amplitudes);
    q.column_mut(0).assign(&psi0.amplitudes);

    let mut a: Vec<C64> = Vec::with_capacity(m);
    let mut b: Vec<f64> = Vec::with_capacity(m.saturating_sub(1));
    let mut c: Vec<C64> = Vec::with_capacity(m.saturating_sub(1));
    let mut breakdown = None;

    for n in 0..m.saturating_sub(1) {
        let p_n = p.column(n).to_owned();
        let q_n = q.column(n).to_owned();
        let hp = h.entries.dot(&p_n);
        let a_n = adjoint_apply(&q.slice(s![.., n..=n]), &hp)[0];
        a.push(a_n);

        let mut p_new = &hp - &p_n.mapv(|z| z * a_n);
        let mut q_new = &h_dag.entries.dot(&q_n) - &q_n.mapv(|z| z * a_n.conj());
        if n > 0 {
            let c_n = c[n - 1];
            let b_n = b[n - 1];
            p_new = &p_new - &p.column(n - 1).mapv(|z| z * c_n);
            q_new = &q_new - &q.column(n - 1).mapv(|z| z * b_n);
        }

        // Complete reorthogonalization: project with W = P Q† (and W† on the
        // dual side), repeating while the projection strips more than a
        // factor 1/√2 of either norm.
        let p_block = p.slice(s![.., ..=n]);
        let q_block = q.slice(s![.., ..=n]);
        let mut passes = 0;
        loop {
            let p_norm = norm(&p_new);
            let q_norm = norm(&q_new);
            if p_norm == 0.0 || q_norm == 0.0 {
                break; // exact invariant subspace; handled as breakdown below
            }
            let p_tilde = &p_new - &p_block.dot(&adjoint_apply(&q_block, &p_new));
            let q_tilde = &q_new - &q_block.dot(&adjoint_apply(&p_block, &q_new));
            let res = (norm(&p_tilde) / p_norm).min(norm(&q_tilde) / q_norm);
            p_new = p_tilde;
            q_new = q_tilde;
            passes += 1;
            if res >= 0.707 {
                break;
            }
            if passes >= opts.max_reorth {
                return Err(Error::ReorthLimit { step: n + 1, passes });
            }
        }

        let b_next = norm(&p_new);
        if b_next < opts.breakdown_tol {
            breakdown = Some(Breakdown::VanishingNorm { step: n + 1, b: b_next });
            break;
        }
        let c_next = {
            let qp = q_new
                .iter()
                .zip(p_new.iter())
                .map(|(qi, pi)| qi.conj() * pi)
                .sum::<C64>();
            qp / b_next
        };
        if c_next.norm() < opts.breakdown_tol {
            breakdown = Some(Breakdown::VanishingOverlap { step: n + 1, c_abs: c_next.norm() });
            break;
        }

        p.column_mut(n + 1).assign(&p_new.mapv(|z| z / b_next));
        let c_conj = c_next.conj();
        q.column_mut(n + 1).assign(&q_new.mapv(|z| z / c_conj));
        b.push(b_next);
        c.push(c_next);
    }

    let k = b.len() + 1;
    if a.len() < k {
        // final diagonal element a_{K-1} = q_{K-1}† H p_{K-1}
        let hp = h.entries.dot(&p.column(k - 1).to_owned());
        let a_last = adjoint_apply(&q.slice(s![.., k - 1..k]), &hp)[0];
        a.push(a_last);
    }

    let basis = opts.store_basis.then(|| KrylovBasis {
        p: p.slice(s![.., ..k]).to_owned(),
        q: q.slice(s![.., ..k]).to_owned(),
    });
    Ok(Tridiagonalization { form: TridiagonalForm { a, b, c }, basis, breakdown })
}

/// Residuals certifying a tridiagonalization against its inputs.
#[derive(Debug, Clone, Copy)]
pub struct VerificationReport {
    /// `max |Q†P − I|`.
    pub max_biorthogonality: f64,
    /// `max |Q†Q − I|`. The gauge used here normalizes the `p_n`, so this is
    /// an identity only in the Hermitian limit; it is reported for
    /// diagnostics, not enforced.
    pub max_dual_orthonormality: f64,
    /// `max |Q†HP − T|`.
    pub max_tridiagonal_residual: f64,
}

/// Compute the verification residuals with direct matrix products.
pub fn verify(
    form: &TridiagonalForm,
    basis: &KrylovBasis,
    h: &DenseOperator,
) -> VerificationReport {
    let q_adj = basis.q.t().mapv(|z| z.conj());
    let qp = q_adj.dot(&basis.p);
    let qq = q_adj.dot(&basis.q);
    let qhp = q_adj.dot(&h.entries).dot(&basis.p);
    let t = form.to_dense();
    let max_off_identity = |m: &Array2<C64>| {
        m.indexed_iter()
            .map(|((r, c), v)| {
                let target = if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                (v - target).norm()
            })
            .fold(0.0, f64::max)
    };
    let max_diff = (&qhp - &t).iter().map(|z| z.norm()).fold(0.0, f64::max);
    VerificationReport {
        max_biorthogonality: max_off_identity(&qp),
        max_dual_orthonormality: max_off_identity(&qq),
        max_tridiagonal_residual: max_diff,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hamiltonian, initial_plus_state, sample_disorder, SpinChainParams};
    use proptest::prelude::*;

    fn op(entries: Array2<C64>) -> DenseOperator {
        DenseOperator::from_entries(entries).unwrap()
    }

    fn unit_state(v: Vec<C64>) -> StateVector {
        StateVector::from_amplitudes(Array1::from_vec(v)).normalized()
    }

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    /// Plain one-sided Lanczos with full reorthogonalization; valid for
    /// Hermitian matrices only. Independent oracle for the Hermitian limit.
    fn hermitian_lanczos(h: &DenseOperator, psi0: &StateVector) -> (Vec<f64>, Vec<f64>) {
        let d = h.dim;
        let mut basis: Vec<Array1<C64>> = vec![psi0.amplitudes.clone()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        for n in 0..d {
            let v = &basis[n];
            let hv = h.entries.dot(v);
            let a: C64 = v.iter().zip(hv.iter()).map(|(x, y)| x.conj() * y).sum();
            alpha.push(a.re);
            let mut w = hv - v.mapv(|z| z * a);
            if n > 0 {
                w = w - basis[n - 1].mapv(|z| z * re(beta[n - 1]));
            }
            // full reorthogonalization, twice
            for _ in 0..2 {
                for u in &basis {
                    let ov: C64 = u.iter().zip(w.iter()).map(|(x, y)| x.conj() * y).sum();
                    w = w - u.mapv(|z| z * ov);
                }
            }
            let nb = norm(&w);
            if n + 1 == d || nb < 1e-12 {
                break;
            }
            beta.push(nb);
            basis.push(w.mapv(|z| z / nb));
        }
        (alpha, beta)
    }

    #[test]
    fn hand_worked_symmetric_two_by_two() {
        let h = op(array![[re(0.), re(1.)], [re(1.), re(0.)]]);
        let psi = unit_state(vec![re(1.), re(0.)]);
        let out = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
        assert_eq!(out.k(), 2);
        assert!(out.form.a[0].norm() < 1e-14 && out.form.a[1].norm() < 1e-14);
        assert!((out.form.b[0] - 1.0).abs() < 1e-14);
        assert!((out.form.c[0] - re(1.0)).norm() < 1e-14);
        let rep = verify(&out.form, out.basis.as_ref().unwrap(), &h);
        assert!(rep.max_biorthogonality < 1e-14);
        assert!(rep.max_tridiagonal_residual < 1e-14);
        assert!(rep.max_dual_orthonormality < 1e-14);
    }

    #[test]
    fn hand_worked_nonhermitian_two_by_two() {
        // H p_0 = (0, 2); a_0 = 0; b_1 = ‖(0,2)‖ = 2; q_1 raw = (0, 1);
        // c_1 = q_1† p_1 / b_1 = 2/2 = 1; Q†HP reproduces H itself.
        let h = op(array![[re(0.), re(1.)], [re(2.), re(0.)]]);
        let psi = unit_state(vec![re(1.), re(0.)]);
        let out = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
        assert!(out.form.a[0].norm() < 1e-14 && out.form.a[1].norm() < 1e-14);
        assert!((out.form.b[0] - 2.0).abs() < 1e-14);
        assert!((out.form.c[0] - re(1.0)).norm() < 1e-14);
        let basis = out.basis.as_ref().unwrap();
        let q_adj = basis.q.t().mapv(|z| z.conj());
        let qhp = q_adj.dot(&h.entries).dot(&basis.p);
        let diff = (&qhp - &h.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }

    fn random_model(l: usize, w_gamma: f64, seed: u64) -> (DenseOperator, StateVector) {
        let params = SpinChainParams::new(l, w_gamma);
        let dis = sample_disorder(&params, seed);
        let h = build_hamiltonian(&params, &dis).unwrap();
        let psi = initial_plus_state(l);
        (h, psi)
    }

    #[test]
    fn hermitian_limit_coefficients_degenerate() {
        // c_n must equal b_n (real) when H = H†
        let (h, psi) = random_model(4, 0.0, 3);
        let out = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
        for (b, c) in out.form.b.iter().zip(out.form.c.iter()) {
            assert!((C64::new(*b, 0.0) - c).norm() < 1e-10, "b={b}, c={c}");
        }
        // and they must match a plain one-sided Lanczos oracle
        let (alpha, beta) = hermitian_lanczos(&h, &psi);
        assert_eq!(alpha.len(), out.k());
        for (ours, oracle) in out.form.a.iter().zip(alpha.iter()) {
            assert!((ours.re - oracle).abs() < 1e-9 && ours.im.abs() < 1e-9);
        }
        for (ours, oracle) in out.form.b.iter().zip(beta.iter()) {
            assert!((ours - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn hermitian_random_matrix_residuals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let d = 64;
        let g = Array2::from_shape_fn((d, d), |_| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let herm = op(&g + &g.t().mapv(|z| z.conj()));
        let psi = unit_state((0..d).map(|i| re(1.0 + (i as f64).sin())).collect());
        let out = tridiagonalize(&herm, &psi, &BiLanczosOptions::default()).unwrap();
        assert_eq!(out.k(), d);
        let rep = verify(&out.form, out.basis.as_ref().unwrap(), &herm);
        assert!(rep.max_biorthogonality < 1e-10);
        assert!(rep.max_dual_orthonormality < 1e-10);
        assert!(rep.max_tridiagonal_residual < 1e-10 * herm.frobenius_norm());
    }

    #[test]
    fn nonhermitian_model_residuals() {
        // L = 6 model instance with strong gain/loss
        let (h, psi) = random_model(6, 1.0, 17);
        let out = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
        assert!(out.breakdown.is_none());
        let rep = verify(&out.form, out.basis.as_ref().unwrap(), &h);
        assert!(rep.max_biorthogonality < 1e-8, "Q†P residual {}", rep.max_biorthogonality);
        assert!(
            rep.max_tridiagonal_residual < 1e-8 * h.frobenius_norm(),
            "T residual {}",
            rep.max_tridiagonal_residual
        );
    }

    #[test]
    fn three_term_recurrence_reconstructs_columns() {
        let (h, psi) = random_model(5, 0.5, 23);
        let out = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
        let basis = out.basis.as_ref().unwrap();
        let k = out.k();
        for n in 0..k - 1 {
            let hp = h.entries.dot(&basis.p.column(n).to_owned());
            let mut recon = basis.p.column(n + 1).mapv(|z| z * re(out.form.b[n]))
                + basis.p.column(n).mapv(|z| z * out.form.a[n]);
            if n > 0 {
                recon = recon + basis.p.column(n - 1).mapv(|z| z * out.form.c[n - 1]);
            }
            let diff = (&hp - &recon).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "column {n}: {diff}");
        }
    }

    #[test]
    fn truncation_matches_leading_coefficients_of_full_run() {
        let (h, psi) = random_model(5, 0.8, 31);
        let full = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
        let opts = BiLanczosOptions { max_steps: Some(7), ..Default::default() };
        let short = tridiagonalize(&h, &psi, &opts).unwrap();
        assert_eq!(short.k(), 7);
        for n in 0..6 {
            assert!((full.form.a[n] - short.form.a[n]).norm() < 1e-12);
            assert!((full.form.b[n] - short.form.b[n]).abs() < 1e-12);
            assert!((full.form.c[n] - short.form.c[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn breakdown_is_reported_not_padded() {
        // block-diagonal H with ψ0 in a 2-dimensional invariant subspace
        let mut m = Array2::<C64>::zeros((4, 4));
        m[[0, 1]] = re(1.0);
        m[[1, 0]] = re(1.0);
        m[[2, 3]] = re(5.0);
        m[[3, 2]] = re(5.0);
        let h = op(m);
        let psi = unit_state(vec![re(1.), re(0.), re(0.), re(0.)]);
        let out = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
        assert_eq!(out.k(), 2);
        assert!(matches!(out.breakdown, Some(Breakdown::VanishingNorm { step: 2, .. })));
    }

    #[test]
    fn single_dimension_operator() {
        let h = op(array![[C64::new(2.0, -0.3)]]);
        let psi = unit_state(vec![re(1.0)]);
        let out = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
        assert_eq!(out.k(), 1);
        assert!((out.form.a[0] - C64::new(2.0, -0.3)).norm() < 1e-15);
        assert!(out.form.b.is_empty() && out.form.c.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// j_n = |b_n c_n|^{1/2} is invariant under regauging T → D T D⁻¹
        /// with any nonzero diagonal D: the products of paired off-diagonal
        /// entries are similarity invariants.
        #[test]
        fn hopping_amplitudes_are_gauge_invariant(
            seed in 0u64..1000,
            scales in proptest::collection::vec(0.25f64..4.0, 8),
            phases in proptest::collection::vec(0.0f64..6.28, 8),
        ) {
            let (h, psi) = random_model(3, 0.6, seed);
            let out = tridiagonalize(&h, &psi, &BiLanczosOptions::default()).unwrap();
            let t = out.form.to_dense();
            let k = out.k();
            let d: Vec<C64> = (0..k)
                .map(|i| C64::from_polar(scales[i % scales.len()], phases[i % phases.len()]))
                .collect();
            // regauged tridiagonal: T'[r][c] = d_r T[r][c] / d_c
            let j_ref = out.form.hopping_amplitudes();
            for n in 1..k {
                let sub = t[[n, n - 1]] * d[n] / d[n - 1];
                let sup = t[[n - 1, n]] * d[n - 1] / d[n];
                let j_regauged = (sub * sup).norm().sqrt();
                prop_assert!((j_regauged - j_ref[n - 1]).abs() < 1e-10 * (1.0 + j_ref[n - 1]));
            }
        }
    }
}
