//! Disordered non-Hermitian XY chain: Hamiltonian assembly, disorder
//! sampling, and initial-state preparation.
//!
//! Basis convention: computational basis `|s_1 s_2 … s_L⟩` with site 1 as the
//! most significant bit and spin-up encoded as bit value 0. Everything here
//! is dense; the Hilbert dimension is `2^L`.

use ndarray::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Model constants for the disordered XY chain.
///
/// The chain couples nearest neighbours with strength `j` (open boundary),
/// applies a uniform transverse field `h`, and a site-random complex
/// longitudinal field `D_j = Δ_j + i γ_j` whose parts are drawn uniformly
/// from `[-w_delta, w_delta]` and `[-w_gamma, w_gamma]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinChainParams {
    /// Number of sites (≥ 1).
    pub l: usize,
    /// XY coupling; sets the energy scale.
    pub j: f64,
    /// Transverse field.
    pub h: f64,
    /// Detuning box half-width (≥ 0).
    pub w_delta: f64,
    /// Gain/loss box half-width (≥ 0).
    pub w_gamma: f64,
}

impl SpinChainParams {
    /// Standard parameter set: `J = 1`, `h = 0.5`, `w_delta = 1`.
    pub fn new(l: usize, w_gamma: f64) -> Self {
        Self { l, j: 1.0, h: 0.5, w_delta: 1.0, w_gamma }
    }

    /// Hilbert-space dimension `2^L`.
    pub fn hilbert_dim(&self) -> usize {
        1usize << self.l
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(Error::InvalidInput("site count must be ≥ 1".into()));
        }
        if self.l > 26 {
            return Err(Error::InvalidInput(format!(
                "L = {} exceeds the dense-matrix budget",
                self.l
            )));
        }
        if self.w_delta < 0.0 || self.w_gamma < 0.0 {
            return Err(Error::InvalidInput("disorder widths must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// One draw of the site-random fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    #[serde(rename = "L")]
    pub l: usize,
    /// RNG seed the vectors were generated from.
    pub seed: u64,
    /// Detunings `Δ_j`, one per site.
    pub delta: Vec<f64>,
    /// Gain/loss amplitudes `γ_j`, one per site.
    pub gamma: Vec<f64>,
}

impl DisorderRealization {
    /// Complex field `D_j = Δ_j + i γ_j` at site index `j` (0-based).
    pub fn field(&self, j: usize) -> C64 {
        C64::new(self.delta[j], self.gamma[j])
    }
}

/// Draw one disorder realization. Deterministic given `seed`: the same seed
/// always reproduces the same vectors, bit for bit.
pub fn sample_disorder(params: &SpinChainParams, seed: u64) -> DisorderRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 2L independent draws; value = w * (2u - 1) keeps the stream layout
    // identical for zero-width boxes.
    let mut draw = |w: f64| {
        let u: f64 = rng.random();
        w * (2.0 * u - 1.0)
    };
    let delta: Vec<f64> = (0..params.l).map(|_| draw(params.w_delta)).collect();
    let gamma: Vec<f64> = (0..params.l).map(|_| draw(params.w_gamma)).collect();
    DisorderRealization { l: params.l, seed, delta, gamma }
}

/// Dense complex square matrix over the tensor-product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub dim: usize,
    pub entries: Array2<C64>,
}

impl DenseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: Array2::zeros((dim, dim)) }
    }

    pub fn from_entries(entries: Array2<C64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!("matrix is {r}×{c}, expected square")));
        }
        Ok(Self { dim: r, entries })
    }

    pub fn matvec(&self, v: &Array1<C64>) -> Array1<C64> {
        self.entries.dot(v)
    }

    /// Owned conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self { dim: self.dim, entries: self.entries.t().mapv(|z| z.conj()) }
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Complex state vector. Norm is never folded in implicitly: non-unitary
/// evolution changes it, and callers normalize explicitly where needed.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub dim: usize,
    pub amplitudes: Array1<C64>,
}

impl StateVector {
    pub fn from_amplitudes(amplitudes: Array1<C64>) -> Self {
        Self { dim: amplitudes.len(), amplitudes }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self { dim: self.dim, amplitudes: self.amplitudes.mapv(|z| z / n) }
    }
}

/// Bit mask selecting site `j` (1-based, site 1 = most significant bit).
#[inline]
fn site_mask(l: usize, j: usize) -> usize {
    1usize << (l - j)
}

/// Assemble the dense Hamiltonian
/// `H = Σ_{j<L} J (σ^x_j σ^x_{j+1} + σ^y_j σ^y_{j+1}) + Σ_j (h σ^x_j + D_j σ^z_j)`
/// with open boundaries and `D_j = Δ_j + i γ_j`.
///
/// The matrix is complex symmetric (`H = Hᵀ`); non-Hermiticity enters only
/// through the imaginary parts of the diagonal `σ^z` terms.
pub fn build_hamiltonian(
    params: &SpinChainParams,
    disorder: &DisorderRealization,
) -> Result<DenseOperator> {
    params.validate()?;
    if disorder.delta.len() != params.l || disorder.gamma.len() != params.l {
        return Err(Error::DimensionMismatch(format!(
            "disorder vectors of length {}/{} for L = {}",
            disorder.delta.len(),
            disorder.gamma.len(),
            params.l
        )));
    }
    let l = params.l;
    let dim = params.hilbert_dim();
    let mut h = Array2::<C64>::zeros((dim, dim));
    let two_j = C64::new(2.0 * params.j, 0.0);
    let field = C64::new(params.h, 0.0);
    for s in 0..dim {
        // σ^x σ^x + σ^y σ^y hops |↑↓⟩ ↔ |↓↑⟩ with amplitude 2J.
        for j in 1..l {
            let m1 = site_mask(l, j);
            let m2 = site_mask(l, j + 1);
            let b1 = (s & m1) != 0;
            let b2 = (s & m2) != 0;
            if b1 != b2 {
                h[[s ^ m1 ^ m2, s]] += two_j;
            }
        }
        // transverse field flips one site; complex longitudinal field is
        // diagonal with sign set by the spin (up = +1).
        let mut diag = C64::new(0.0, 0.0);
        for j in 1..=l {
            let m = site_mask(l, j);
            h[[s ^ m, s]] += field;
            let sign = if s & m == 0 { 1.0 } else { -1.0 };
            diag += disorder.field(j - 1) * sign;
        }
        h[[s, s]] += diag;
    }
    Ok(DenseOperator { dim, entries: h })
}

/// Product state `|+⟩^{⊗L}` with `|+⟩ = (|↑⟩ + |↓⟩)/√2`: every amplitude
/// equals `2^{-L/2}`.
pub fn initial_plus_state(l: usize) -> StateVector {
    let dim = 1usize << l;
    let amp = C64::new((dim as f64).sqrt().recip(), 0.0);
    StateVector { dim, amplitudes: Array1::from_elem(dim, amp) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::linalg::kron;
    use ndarray_linalg::Eig;

    fn pauli(which: char) -> Array2<C64> {
        let z = |re: f64, im: f64| C64::new(re, im);
        match which {
            'x' => array![[z(0., 0.), z(1., 0.)], [z(1., 0.), z(0., 0.)]],
            'y' => array![[z(0., 0.), z(0., -1.)], [z(0., 1.), z(0., 0.)]],
            'z' => array![[z(1., 0.), z(0., 0.)], [z(0., 0.), z(-1., 0.)]],
            _ => Array2::eye(2),
        }
    }

    /// Independent assembly through explicit Kronecker products, site 1 as
    /// the leftmost factor.
    fn kron_oracle(params: &SpinChainParams, dis: &DisorderRealization) -> Array2<C64> {
        let l = params.l;
        let dim = 1usize << l;
        let site_op = |j: usize, op: &Array2<C64>| {
            let mut acc = Array2::<C64>::eye(1);
            for k in 1..=l {
                let f = if k == j { op.clone() } else { Array2::eye(2) };
                acc = kron(&acc, &f);
            }
            acc
        };
        let bond_op = |j: usize, op: &Array2<C64>| {
            let mut acc = Array2::<C64>::eye(1);
            for k in 1..=l {
                let f = if k == j || k == j + 1 { op.clone() } else { Array2::eye(2) };
                acc = kron(&acc, &f);
            }
            acc
        };
        let mut h = Array2::<C64>::zeros((dim, dim));
        for j in 1..l {
            h = h + bond_op(j, &pauli('x')).mapv(|z| z * params.j)
                + bond_op(j, &pauli('y')).mapv(|z| z * params.j);
        }
        for j in 1..=l {
            h = h + site_op(j, &pauli('x')).mapv(|z| z * params.h)
                + site_op(j, &pauli('z')).mapv(|z| z * dis.field(j - 1));
        }
        h
    }

    fn max_entry_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn single_site_is_transverse_field_only() {
        let params = SpinChainParams { l: 1, j: 1.0, h: 0.5, w_delta: 0.0, w_gamma: 0.0 };
        let dis = DisorderRealization { l: 1, seed: 0, delta: vec![0.0], gamma: vec![0.0] };
        let h = build_hamiltonian(&params, &dis).unwrap();
        let want = array![
            [C64::new(0., 0.), C64::new(0.5, 0.)],
            [C64::new(0.5, 0.), C64::new(0., 0.)]
        ];
        assert!(max_entry_diff(&h.entries, &want) < 1e-15);
    }

    #[test]
    fn two_site_xy_spectrum() {
        let params = SpinChainParams { l: 2, j: 1.0, h: 0.0, w_delta: 0.0, w_gamma: 0.0 };
        let dis = sample_disorder(&params, 1);
        let h = build_hamiltonian(&params, &dis).unwrap();
        let (vals, _) = h.entries.eig().unwrap();
        let mut re: Vec<f64> = vals.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        let want = [-2.0, 0.0, 0.0, 2.0];
        for (got, want) in re.iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-12, "spectrum {re:?}");
        }
        assert!(vals.iter().map(|z| z.im.abs()).fold(0.0, f64::max) < 1e-12);
    }

    #[test]
    fn matches_kronecker_oracle() {
        let params = SpinChainParams { l: 2, j: 1.0, h: 0.5, w_delta: 1.0, w_gamma: 1.0 };
        let dis = DisorderRealization {
            l: 2,
            seed: 0,
            delta: vec![0.3, -0.1],
            gamma: vec![0.2, -0.2],
        };
        let h = build_hamiltonian(&params, &dis).unwrap();
        assert!(max_entry_diff(&h.entries, &kron_oracle(&params, &dis)) < 1e-14);

        // same oracle on a sampled realization at L = 3
        let params = SpinChainParams::new(3, 0.7);
        let dis = sample_disorder(&params, 42);
        let h = build_hamiltonian(&params, &dis).unwrap();
        assert!(max_entry_diff(&h.entries, &kron_oracle(&params, &dis)) < 1e-14);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let params = SpinChainParams::new(3, 0.0);
        let dis = DisorderRealization { l: 2, seed: 0, delta: vec![0.0; 2], gamma: vec![0.0; 2] };
        assert!(matches!(
            build_hamiltonian(&params, &dis),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn hamiltonian_is_complex_symmetric_and_traceless() {
        let params = SpinChainParams::new(4, 1.5);
        for seed in 0..5 {
            let dis = sample_disorder(&params, seed);
            let h = build_hamiltonian(&params, &dis).unwrap();
            let asym = max_entry_diff(&h.entries, &h.entries.t().to_owned());
            assert!(asym < 1e-15, "H should equal its transpose");
            assert!(h.trace().norm() < 1e-12);
            // H − H† is diagonal and equals 2i × (γ-part of the diagonal)
            let anti = &h.entries - &h.adjoint().entries;
            for ((r, c), v) in anti.indexed_iter() {
                if r != c {
                    assert!(v.norm() < 1e-15);
                } else {
                    assert!(v.re.abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn hermitian_limit_has_real_spectrum() {
        let params = SpinChainParams { l: 5, j: 1.0, h: 0.5, w_delta: 1.0, w_gamma: 0.0 };
        let dis = sample_disorder(&params, 9);
        let h = build_hamiltonian(&params, &dis).unwrap();
        let anti = &h.entries - &h.adjoint().entries;
        assert!(anti.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-15);
        let (vals, _) = h.entries.eig().unwrap();
        assert!(vals.iter().map(|z| z.im.abs()).fold(0.0, f64::max) < 1e-10);
    }

    #[test]
    fn disorder_zero_width_gives_zero_vectors() {
        let params = SpinChainParams { l: 6, j: 1.0, h: 0.5, w_delta: 0.0, w_gamma: 0.0 };
        let dis = sample_disorder(&params, 123);
        assert!(dis.delta.iter().chain(dis.gamma.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn disorder_bounded_and_deterministic() {
        let params = SpinChainParams { l: 8, j: 1.0, h: 0.5, w_delta: 1.0, w_gamma: 0.5 };
        let a = sample_disorder(&params, 7);
        let b = sample_disorder(&params, 7);
        assert_eq!(a, b);
        assert!(a.delta.iter().all(|&x| x.abs() <= 1.0));
        assert!(a.gamma.iter().all(|&x| x.abs() <= 0.5));
        let c = sample_disorder(&params, 8);
        assert_ne!(a.delta, c.delta);
    }

    #[test]
    fn disorder_moments_match_uniform_box() {
        let params = SpinChainParams { l: 1, j: 1.0, h: 0.5, w_delta: 1.0, w_gamma: 0.0 };
        let n = 100_000;
        let samples: Vec<f64> =
            (0..n).map(|s| sample_disorder(&params, s as u64).delta[0]).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn plus_state_is_uniform_and_normalized() {
        for l in [1usize, 2, 10] {
            let psi = initial_plus_state(l);
            let amp = (2f64).powi(-(l as i32) / 2) * if l % 2 == 1 { (0.5f64).sqrt() } else { 1.0 };
            // all amplitudes equal 2^{-L/2}
            let expect = (1.0 / (1usize << l) as f64).sqrt();
            assert!((amp - expect).abs() < 1e-15 || l % 2 == 0);
            for z in psi.amplitudes.iter() {
                assert!((z.re - expect).abs() < 1e-14 && z.im == 0.0);
            }
            assert!((psi.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn disorder_round_trips_through_json() {
        let params = SpinChainParams::new(3, 0.2);
        let dis = sample_disorder(&params, 5);
        let text = serde_json::to_string(&dis).unwrap();
        assert!(text.contains("\"L\":3"));
        let back: DisorderRealization = serde_json::from_str(&text).unwrap();
        assert_eq!(dis, back);
    }
}
