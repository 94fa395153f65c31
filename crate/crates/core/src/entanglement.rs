//! Bipartite entanglement entropy of eigenstates.
//!
//! The chain is cut in half: sites `1..L/2` (the most significant bits of
//! the basis index) are kept, sites `j > L/2` are traced out. For a state
//! with reshaped amplitude matrix `M[i_A, i_B]` the reduced density matrix
//! is `ρ = M M†` and the entropy is `S = −Tr ρ ln ρ`.

use ndarray::prelude::*;
use ndarray_linalg::{EigVals, EigValsh, InverseInto, UPLO};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DenseOperator, StateVector};
use crate::spectral::eigendecompose_with_vectors;
use crate::stats;
use crate::C64;

/// Eigenvalues below this weight contribute `0 · ln 0 = 0`.
const ENTROPY_EIGENVALUE_FLOOR: f64 = 1e-14;

/// Per-eigenstate entropies of one realization, paired with `Re z_j` for
/// entropy-versus-energy plots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropySample {
    pub entropies: Vec<f64>,
    pub eigenvalue_re: Vec<f64>,
}

impl EntropySample {
    pub fn mean(&self) -> f64 {
        stats::mean(&self.entropies)
    }

    pub fn max(&self) -> f64 {
        self.entropies.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rows `re_E,S`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "re_E,S")?;
        for (e, s) in self.eigenvalue_re.iter().zip(self.entropies.iter()) {
            writeln!(w, "{e},{s}")?;
        }
        Ok(())
    }
}

/// Which eigenvector set enters the density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyConvention {
    /// Unit-normalized right eigenvectors.
    #[default]
    Right,
    /// Experimental: `ρ ∝ |R⟩⟨L|` built from right/left pairs. The reduced
    /// matrix is not Hermitian; the entropy is read from the real parts of
    /// its eigenvalues.
    Biorthogonal,
}

fn reshape_half(amplitudes: &Array1<C64>, l: usize) -> Array2<C64> {
    let da = 1usize << (l / 2);
    Array2::from_shape_fn((da, da), |(ia, ib)| amplitudes[ia * da + ib])
}

/// Reduced density matrix of the first `L/2` sites. The input is normalized
/// first if it is not already.
pub fn reduced_density_matrix(state: &StateVector, l: usize) -> Result<DenseOperator> {
    if l % 2 != 0 {
        return Err(Error::InvalidInput(format!("bipartition needs even L, got {l}")));
    }
    if state.dim != 1usize << l {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} does not match 2^{l}",
            state.dim
        )));
    }
    let norm = state.norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let m = reshape_half(&state.amplitudes, l).mapv(|z| z / norm);
    let rho = m.dot(&m.t().mapv(|z| z.conj()));
    Ok(DenseOperator { dim: rho.nrows(), entries: rho })
}

/// Von Neumann entropy `−Tr ρ ln ρ` of a Hermitian positive-semidefinite
/// unit-trace matrix.
pub fn von_neumann_entropy(rho: &DenseOperator) -> Result<f64> {
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
        return Err(Error::InvalidInput(format!("density matrix trace {tr} is not 1")));
    }
    let vals = rho
        .entries
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::Eig(e.to_string()))?;
    Ok(entropy_of_weights(vals.iter().copied()))
}

fn entropy_of_weights(weights: impl Iterator<Item = f64>) -> f64 {
    weights
        .filter(|&w| w > ENTROPY_EIGENVALUE_FLOOR)
        .map(|w| -w * w.ln())
        .sum()
}

/// Page value `(L ln 2 − 1)/2`: the typical entropy of a random pure state
/// at equal bipartition.
pub fn page_value(l: usize) -> f64 {
    (l as f64 * 2f64.ln() - 1.0) / 2.0
}

/// Entropy of every eigenstate of `h`, using unit-normalized right
/// eigenvectors.
pub fn eigenstate_entropy_stats(h: &DenseOperator, l: usize) -> Result<EntropySample> {
    eigenstate_entropy_stats_with(h, l, EntropyConvention::Right)
}

pub fn eigenstate_entropy_stats_with(
    h: &DenseOperator,
    l: usize,
    convention: EntropyConvention,
) -> Result<EntropySample> {
    if l % 2 != 0 {
        return Err(Error::InvalidInput(format!("bipartition needs even L, got {l}")));
    }
    let (spectrum, vecs) = eigendecompose_with_vectors(h)?;
    let d = h.dim;
    let mut entropies = Vec::with_capacity(d);
    let mut eigenvalue_re = Vec::with_capacity(d);
    match convention {
        EntropyConvention::Right => {
            for j in 0..d {
                let state = StateVector::from_amplitudes(vecs.column(j).to_owned());
                let rho = reduced_density_matrix(&state, l)?;
                entropies.push(von_neumann_entropy(&rho)?);
                eigenvalue_re.push(spectrum.eigenvalues[j].re);
            }
        }
        EntropyConvention::Biorthogonal => {
            // rows of V⁻¹ are the duals of the right eigenvectors with
            // ⟨L_j|R_j⟩ = 1 built in
            let left = vecs.clone().inv_into().map_err(|e| Error::Solve(e.to_string()))?;
            for j in 0..d {
                let right = reshape_half(&vecs.column(j).to_owned(), l);
                let dual = left.row(j).mapv(|z| z.conj());
                let dual = reshape_half(&dual.to_owned(), l);
                let rho = right.dot(&dual.t().mapv(|z| z.conj()));
                let vals =
                    rho.eigvals().map_err(|e| Error::Eig(e.to_string()))?;
                entropies.push(entropy_of_weights(vals.iter().map(|z| z.re)));
                eigenvalue_re.push(spectrum.eigenvalues[j].re);
            }
        }
    }
    Ok(EntropySample { entropies, eigenvalue_re })
}

/// Standard deviation over realization means: the convention used for the
/// `σ_S` transition curves. A pooled per-eigenstate deviation is exported
/// alongside it by the sweep driver for comparison.
pub fn sigma_s_over_realizations(realization_means: &[f64]) -> f64 {
    stats::sample_std(realization_means)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn state(v: Vec<C64>) -> StateVector {
        StateVector::from_amplitudes(Array1::from_vec(v))
    }

    #[test]
    fn product_state_gives_rank_one_projector() {
        let mut amps = vec![re(0.0); 16];
        amps[0] = re(1.0); // |↑↑↑↑⟩
        let rho = reduced_density_matrix(&state(amps), 4).unwrap();
        let vals = rho.entries.eigvalsh(UPLO::Lower).unwrap();
        let mut sorted: Vec<f64> = vals.to_vec();
        sorted.sort_by(f64::total_cmp);
        assert!((sorted[3] - 1.0).abs() < 1e-14);
        assert!(sorted[..3].iter().all(|&v| v.abs() < 1e-14));
        assert!(von_neumann_entropy(&rho).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bell_pair_across_the_cut() {
        let s = 0.5f64.sqrt();
        let rho =
            reduced_density_matrix(&state(vec![re(s), re(0.), re(0.), re(s)]), 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((rho.entries[[i, j]] - re(want)).norm() < 1e-14);
            }
        }
        assert!((von_neumann_entropy(&rho).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn random_state_yields_valid_density_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let amps: Vec<C64> =
            (0..16).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let rho = reduced_density_matrix(&state(amps), 4).unwrap();
        assert!((rho.trace() - re(1.0)).norm() < 1e-12);
        let asym = (&rho.entries - &rho.adjoint().entries)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(asym < 1e-14);
        let vals = rho.entries.eigvalsh(UPLO::Lower).unwrap();
        assert!(vals.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn odd_bipartition_rejected() {
        let s = state(vec![re(1.), re(0.)]);
        assert!(matches!(reduced_density_matrix(&s, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn entropy_of_maximally_mixed_states() {
        let one_qubit = DenseOperator::from_entries(Array2::eye(2).mapv(|x: f64| re(0.5 * x)))
            .unwrap();
        assert!((von_neumann_entropy(&one_qubit).unwrap() - 2f64.ln()).abs() < 1e-12);
        let six_qubits =
            DenseOperator::from_entries(Array2::eye(64).mapv(|x: f64| re(x / 64.0))).unwrap();
        assert!((von_neumann_entropy(&six_qubits).unwrap() - 6.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_bad_trace() {
        let rho = DenseOperator::from_entries(Array2::eye(2).mapv(|x: f64| re(x))).unwrap();
        assert!(von_neumann_entropy(&rho).is_err());
    }

    #[test]
    fn entropy_symmetric_under_swapping_the_traced_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let l = 6;
        let amps: Vec<C64> = (0..1 << l)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let sv = state(amps).normalized();
        let s_left = von_neumann_entropy(&reduced_density_matrix(&sv, l).unwrap()).unwrap();
        // independent construction of the complementary reduction ρ_B = (M†M)ᵀ
        let m = reshape_half(&sv.amplitudes, l);
        let rho_b = m.t().mapv(|z| z.conj()).dot(&m).t().to_owned();
        let s_right =
            von_neumann_entropy(&DenseOperator::from_entries(rho_b).unwrap()).unwrap();
        assert!((s_left - s_right).abs() < 1e-10, "{s_left} vs {s_right}");
    }

    #[test]
    fn diagonal_hamiltonian_has_product_eigenstates() {
        let d = 16;
        let entries = Array2::from_diag(&Array1::from_iter(
            (0..d).map(|i| C64::new(i as f64, 0.1 * i as f64)),
        ));
        let h = DenseOperator::from_entries(entries).unwrap();
        let sample = eigenstate_entropy_stats(&h, 4).unwrap();
        assert_eq!(sample.entropies.len(), d);
        assert!(sample.max() < 1e-10, "max S = {}", sample.max());
    }

    #[test]
    fn page_values() {
        assert!((page_value(12) - 3.658_883_083).abs() < 1e-8);
        assert!((page_value(2) - 0.193_147_18).abs() < 1e-7);
        assert!((page_value(4) - 0.886_294_36).abs() < 1e-7);
    }

    #[test]
    fn biorthogonal_convention_matches_right_in_hermitian_limit() {
        use crate::model::{build_hamiltonian, sample_disorder, SpinChainParams};
        let params = SpinChainParams::new(4, 0.0);
        let dis = sample_disorder(&params, 5);
        let h = build_hamiltonian(&params, &dis).unwrap();
        let right = eigenstate_entropy_stats_with(&h, 4, EntropyConvention::Right).unwrap();
        let bio =
            eigenstate_entropy_stats_with(&h, 4, EntropyConvention::Biorthogonal).unwrap();
        // eigenvalue ordering is shared (same decomposition), so compare
        // entry-wise
        for (a, b) in right.entropies.iter().zip(bio.entropies.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn sigma_s_is_the_std_of_realization_means() {
        let means = [1.0, 2.0, 3.0];
        assert!((sigma_s_over_realizations(&means) - 1.0).abs() < 1e-15);
    }
}
