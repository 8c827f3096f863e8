//! Distance measures, purification and Uhlmann alignment.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::density::DensityOperator;
use super::op::{C64, ComplexOperator};
use super::state::StateVector;
use super::EIG_CLAMP;

/// Trace distance `½‖ρ − σ‖₁` (half the sum of absolute eigenvalues of the
/// difference). Lies in `[0, 1]` for states.
pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.total_dim() != sigma.total_dim() {
        return Err(Error::DimensionMismatch("trace distance needs equal dimensions".into()));
    }
    let diff = ComplexOperator::square(rho.mat() - sigma.mat(), vec![rho.total_dim()])?;
    let (vals, _) = diff.eig_hermitian()?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²` (squared convention): 1 for equal
/// states, 0 for orthogonal ones; equals `⟨φ|ρ|φ⟩` for pure `σ = |φ⟩⟨φ|`.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.total_dim() != sigma.total_dim() {
        return Err(Error::DimensionMismatch("fidelity needs equal dimensions".into()));
    }
    let sqrt_rho = rho.as_operator().sqrt_psd()?;
    let inner = sqrt_rho
        .mul(&sigma.as_operator())?
        .mul(&sqrt_rho)?;
    // Hermitian and PSD up to roundoff; eig_hermitian symmetrises.
    let (vals, _) = inner.eig_hermitian()?;
    let root_sum: f64 = vals
        .iter()
        .map(|&v| if v > EIG_CLAMP { v.sqrt() } else { 0.0 })
        .sum();
    Ok((root_sum * root_sum).min(1.0 + 1e-9))
}

/// Canonical purification of `ρ`: eigendecompose `ρ = Σ λ_i |v_i⟩⟨v_i|` and
/// return `Σ √λ_i |v_i⟩ ⊗ |i⟩` with a reference register `R` of dimension
/// `rank(ρ)` appended after the original registers.
pub fn purify(rho: &DensityOperator) -> Result<StateVector> {
    let (vals, vecs) = rho.eig()?;
    let rank = vals.iter().filter(|&&v| v > EIG_CLAMP).count().max(1);
    let d = rho.total_dim();
    let mut amps = DVector::zeros(d * rank);
    for i in 0..rank {
        let lam = vals[i].max(0.0);
        if lam <= EIG_CLAMP {
            continue;
        }
        let coeff = C64::new(lam.sqrt(), 0.0);
        for r in 0..d {
            amps[r * rank + i] += coeff * vecs.mat()[(r, i)];
        }
    }
    let mut dims = rho.dims().to_vec();
    dims.push(rank);
    let mut labels = rho.labels().to_vec();
    labels.push("R".to_string());
    StateVector::new(amps, dims, labels)
}

/// Result of Uhlmann alignment: the unitary on the acted-on part and the
/// achieved overlap `|⟨b|(V ⊗ 𝟙)|a⟩|`, which equals `Tr|√ρ_a √ρ_b|` — the
/// square root of [`fidelity`] of the reduced states on the untouched part.
#[derive(Debug, Clone)]
pub struct UhlmannResult {
    pub unitary: ComplexOperator,
    pub overlap: f64,
}

/// Matricises a state as `M[p, q]` where `p` runs over the `act_on`
/// registers (in the given order) and `q` over the rest (original order).
fn matricize(state: &StateVector, act_on: &[usize]) -> Result<(DMatrix<C64>, usize, usize)> {
    let k = state.dims().len();
    let mut is_p = vec![false; k];
    for &t in act_on {
        if t >= k {
            return Err(Error::DimensionMismatch(format!("register {t} out of range")));
        }
        if is_p[t] {
            return Err(Error::DimensionMismatch("duplicate register in act_on".into()));
        }
        is_p[t] = true;
    }
    let q_regs: Vec<usize> = (0..k).filter(|&p| !is_p[p]).collect();
    if q_regs.is_empty() || act_on.is_empty() {
        return Err(Error::DimensionMismatch(
            "Uhlmann alignment needs both an acted-on and an untouched part".into(),
        ));
    }
    let p_dims: Vec<usize> = act_on.iter().map(|&t| state.dims()[t]).collect();
    let q_dims: Vec<usize> = q_regs.iter().map(|&t| state.dims()[t]).collect();
    let dp: usize = p_dims.iter().product();
    let dq: usize = q_dims.iter().product();
    let in_strides = super::index::strides(state.dims());
    let mut m = DMatrix::<C64>::zeros(dp, dq);
    let p_strides = super::index::strides(&p_dims);
    let q_strides = super::index::strides(&q_dims);
    for (flat, amp) in state.amps().iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let mut row = 0usize;
        for (j, &t) in act_on.iter().enumerate() {
            row += ((flat / in_strides[t]) % state.dims()[t]) * p_strides[j];
        }
        let mut col = 0usize;
        for (j, &t) in q_regs.iter().enumerate() {
            col += ((flat / in_strides[t]) % state.dims()[t]) * q_strides[j];
        }
        m[(row, col)] = *amp;
    }
    Ok((m, dp, dq))
}

/// Unitary `V` on the `act_on` registers maximising `|⟨b|(V ⊗ 𝟙)|a⟩|`.
///
/// Both states must share register structure, with the untouched part
/// carrying (approximately) equal reduced states. The construction takes the
/// cross operator `C = Tr_Q |b⟩⟨a|`, i.e. `C = B A†` for the matricisations
/// `A`, `B` of the two states, and returns the polar unitary `V = U W†` from
/// the singular decomposition `C = U Σ W†`. On rank-deficient `C` the full
/// SVD determines the null directions deterministically; any completion
/// attains the maximal overlap `Σ_i σ_i`.
pub fn uhlmann_unitary(
    a: &StateVector,
    b: &StateVector,
    act_on: &[usize],
) -> Result<UhlmannResult> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch("Uhlmann states must share register structure".into()));
    }
    let (ma, dpa, _) = matricize(a, act_on)?;
    let (mb, _, _) = matricize(b, act_on)?;
    let cross = &mb * ma.adjoint();
    let op = ComplexOperator::square(cross, vec![dpa])?;
    let (u, sigma, w) = op.svd()?;
    let v = &u * w.adjoint();
    let p_dims: Vec<usize> = act_on.iter().map(|&t| a.dims()[t]).collect();
    Ok(UhlmannResult {
        unitary: ComplexOperator::square(v, p_dims)?,
        overlap: sigma.iter().sum(),
    })
}

/// Thin Uhlmann alignment for large acted-on parts.
///
/// When the untouched part `Q` is small, the cross operator `C = B A†` has
/// rank at most `dim(Q)`, so its polar unitary can be represented by two
/// thin factors: `V = U_c W_c†` on the support, extended arbitrarily on the
/// orthogonal complement. The aligner applies that `V` to vectors whose
/// `P`-content lies in the support of `A` — exactly the case in the protocol
/// engines — without ever materialising the `dim(P)²` matrix.
#[derive(Debug, Clone)]
pub struct UhlmannAligner {
    u_cols: DMatrix<C64>,
    w_cols: DMatrix<C64>,
    overlap: f64,
}

impl UhlmannAligner {
    /// Builds the aligner from matricised states (`P` rows, `Q` columns).
    pub fn from_matricized(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<Self> {
        if a.shape() != b.shape() {
            return Err(Error::DimensionMismatch("aligner inputs must share shape".into()));
        }
        let qa = a.clone().qr();
        let qb = b.clone().qr();
        let core = qb.r() * qa.r().adjoint();
        let svd = core.svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not produce V^T".into()))?;
        Ok(Self {
            u_cols: qb.q() * u,
            w_cols: qa.q() * v_t.adjoint(),
            overlap: svd.singular_values.iter().sum(),
        })
    }

    /// Builds the aligner for two states over the same registers.
    pub fn from_states(a: &StateVector, b: &StateVector, act_on: &[usize]) -> Result<Self> {
        if a.dims() != b.dims() {
            return Err(Error::DimensionMismatch("Uhlmann states must share register structure".into()));
        }
        let (ma, _, _) = matricize(a, act_on)?;
        let (mb, _, _) = matricize(b, act_on)?;
        Self::from_matricized(&ma, &mb)
    }

    pub fn overlap(&self) -> f64 {
        self.overlap
    }

    /// Applies `V` to a `P`-space vector. The residual outside the support
    /// of the alignment is mapped by the identity; for protocol states that
    /// residual is zero.
    pub fn apply(&self, x: &DVector<C64>) -> Result<DVector<C64>> {
        if x.len() != self.w_cols.nrows() {
            return Err(Error::DimensionMismatch("aligner input length mismatch".into()));
        }
        let coeffs = self.w_cols.adjoint() * x;
        let aligned = &self.u_cols * &coeffs;
        let residual = x - &self.w_cols * coeffs;
        Ok(aligned + residual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_state(rng: &mut ChaCha12Rng, dims: &[usize], labels: &[&str]) -> StateVector {
        let total: usize = dims.iter().product();
        let mut amps = DVector::zeros(total);
        for i in 0..total {
            amps[i] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        amps /= c(norm, 0.0);
        StateVector::new(
            amps,
            dims.to_vec(),
            labels.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    fn random_density(rng: &mut ChaCha12Rng, d: usize) -> DensityOperator {
        // mix a few random pure states
        let mut mats = Vec::new();
        for _ in 0..3 {
            let s = random_state(rng, &[d], &["A"]);
            mats.push(s.to_density());
        }
        DensityOperator::mixture(&[0.5, 0.3, 0.2], &mats).unwrap()
    }

    #[test]
    fn trace_distance_identical_is_zero() {
        let rho = DensityOperator::from_distribution(&[0.6, 0.4], "A").unwrap();
        assert!(trace_distance(&rho, &rho).unwrap() < 1e-14);
    }

    #[test]
    fn trace_distance_orthogonal_pure_is_one() {
        let a = StateVector::basis(&[2], &[0], &["A"]).unwrap().to_density();
        let b = StateVector::basis(&[2], &[1], &["A"]).unwrap().to_density();
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_hand_oracle() {
        // diag(0.75,0.25) vs I/2: eigenvalues of the difference are ±0.25.
        let a = DensityOperator::from_distribution(&[0.75, 0.25], "A").unwrap();
        let b = DensityOperator::maximally_mixed(&[2], &["A"]).unwrap();
        assert!((trace_distance(&a, &b).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fidelity_pure_cases() {
        let a = StateVector::basis(&[2], &[0], &["A"]).unwrap().to_density();
        let b = StateVector::basis(&[2], &[1], &["A"]).unwrap().to_density();
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        assert!(fidelity(&a, &b).unwrap() < 1e-10);
        // maximally mixed vs |0⟩: ⟨0|I/2|0⟩ = 0.5
        let mm = DensityOperator::maximally_mixed(&[2], &["A"]).unwrap();
        assert!((fidelity(&mm, &a).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fidelity_pure_sigma_matches_expectation() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let rho = random_density(&mut rng, 4);
        let phi = random_state(&mut rng, &[4], &["A"]);
        let f = fidelity(&rho, &phi.to_density()).unwrap();
        let direct = phi
            .to_density()
            .expectation(&rho.as_operator())
            .unwrap()
            .re;
        assert!((f - direct).abs() < 1e-8, "{f} vs {direct}");
    }

    #[test]
    fn fuchs_van_de_graaf_sandwich() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_density(&mut rng, 3);
            let b = random_density(&mut rng, 3);
            let d = trace_distance(&a, &b).unwrap();
            let f = fidelity(&a, &b).unwrap();
            assert!(1.0 - f.sqrt() <= d + 1e-8);
            assert!(d <= (1.0 - f).sqrt() + 1e-8);
        }
    }

    #[test]
    fn purify_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        // random rank-3 state on dim 4
        let mut states = Vec::new();
        for _ in 0..3 {
            states.push(random_state(&mut rng, &[4], &["A"]).to_density());
        }
        let rho = DensityOperator::mixture(&[0.5, 0.3, 0.2], &states).unwrap();
        let psi = purify(&rho).unwrap();
        let back = psi.reduced_density(&[0]).unwrap();
        assert!(trace_distance(&rho, &back).unwrap() < 1e-8);
    }

    #[test]
    fn purify_pure_state_has_trivial_reference() {
        let rho = StateVector::basis(&[2], &[1], &["B"]).unwrap().to_density();
        let psi = purify(&rho).unwrap();
        assert_eq!(psi.dims(), &[2, 1]);
    }

    #[test]
    fn purify_maximally_mixed_qubit_is_maximally_entangled() {
        let rho = DensityOperator::maximally_mixed(&[2], &["B"]).unwrap();
        let psi = purify(&rho).unwrap();
        assert_eq!(psi.dims(), &[2, 2]);
        let red = psi.reduced_density(&[1]).unwrap();
        let mm = DensityOperator::maximally_mixed(&[2], &["R"]).unwrap();
        assert!(trace_distance(&red, &mm).unwrap() < 1e-10);
    }

    #[test]
    fn uhlmann_identity_case() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let a = random_state(&mut rng, &[3, 3], &["P", "Q"]);
        let res = uhlmann_unitary(&a, &a, &[0]).unwrap();
        assert!((res.overlap - 1.0).abs() < 1e-9);
        let moved = a.apply_op(&res.unitary, &[0]).unwrap();
        assert!((moved.inner(&a).unwrap().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uhlmann_recovers_local_unitary() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let a = random_state(&mut rng, &[3, 3], &["P", "Q"]);
        // random unitary on P from the QR of a random matrix
        let mut g = DMatrix::<C64>::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                g[(i, j)] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let q = g.qr().q();
        let u = ComplexOperator::square(q, vec![3]).unwrap();
        let b = a.apply_op(&u, &[0]).unwrap();
        let res = uhlmann_unitary(&a, &b, &[0]).unwrap();
        assert!((res.overlap - 1.0).abs() < 1e-9, "overlap {}", res.overlap);
        let aligned = a.apply_op(&res.unitary, &[0]).unwrap();
        assert!((aligned.inner(&b).unwrap().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uhlmann_on_two_purifications_of_same_state() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let rho = random_density(&mut rng, 3);
        // two purifications with reference registers of the same dimension:
        // the canonical one, and one further rotated on the reference.
        let p1 = purify(&rho).unwrap();
        let rank = p1.dims()[1];
        let mut g = DMatrix::<C64>::zeros(rank, rank);
        for i in 0..rank {
            for j in 0..rank {
                g[(i, j)] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let q = ComplexOperator::square(g.qr().q(), vec![rank]).unwrap();
        let p2 = p1.apply_op(&q, &[1]).unwrap();
        // align on the reference (register 1); the Q part carries ρ on both sides
        let res = uhlmann_unitary(&p1, &p2, &[1]).unwrap();
        assert!((res.overlap - 1.0).abs() < 1e-8);
    }

    #[test]
    fn uhlmann_beats_random_unitaries() {
        let mut rng = ChaCha12Rng::seed_from_u64(25);
        let a = random_state(&mut rng, &[3, 2], &["P", "Q"]);
        let b = random_state(&mut rng, &[3, 2], &["P", "Q"]);
        let res = uhlmann_unitary(&a, &b, &[0]).unwrap();
        let achieved = b
            .inner(&a.apply_op(&res.unitary, &[0]).unwrap())
            .unwrap()
            .norm();
        assert!((achieved - res.overlap).abs() < 1e-9);
        for _ in 0..100 {
            let mut g = DMatrix::<C64>::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    g[(i, j)] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                }
            }
            let u = ComplexOperator::square(g.qr().q(), vec![3]).unwrap();
            let overlap = b.inner(&a.apply_op(&u, &[0]).unwrap()).unwrap().norm();
            assert!(overlap <= achieved + 1e-9);
        }
    }

    #[test]
    fn uhlmann_overlap_squares_to_fidelity() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let a = random_state(&mut rng, &[4, 3], &["P", "Q"]);
        let b = random_state(&mut rng, &[4, 3], &["P", "Q"]);
        let res = uhlmann_unitary(&a, &b, &[0]).unwrap();
        let fa = a.reduced_density(&[1]).unwrap();
        let fb = b.reduced_density(&[1]).unwrap();
        let f = fidelity(&fa, &fb).unwrap();
        assert!((res.overlap * res.overlap - f).abs() < 1e-8);
    }

    #[test]
    fn thin_aligner_matches_full_unitary() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let a = random_state(&mut rng, &[6, 2], &["P", "Q"]);
        let b = random_state(&mut rng, &[6, 2], &["P", "Q"]);
        let full = uhlmann_unitary(&a, &b, &[0]).unwrap();
        let thin = UhlmannAligner::from_states(&a, &b, &[0]).unwrap();
        assert!((full.overlap - thin.overlap()).abs() < 1e-9);
        let full_applied = a.apply_op(&full.unitary, &[0]).unwrap();
        // apply the thin aligner column-by-column over Q
        let (ma, _, _) = super::matricize(&a, &[0]).unwrap();
        let mut thin_applied = DMatrix::<C64>::zeros(6, 2);
        for q in 0..2 {
            let col = thin.apply(&ma.column(q).into_owned()).unwrap();
            thin_applied.set_column(q, &col);
        }
        let ov_full = full_applied.inner(&b).unwrap().norm();
        let mut ov_thin = C64::new(0.0, 0.0);
        let (mb, _, _) = super::matricize(&b, &[0]).unwrap();
        for q in 0..2 {
            ov_thin += mb.column(q).dotc(&thin_applied.column(q).into_owned());
        }
        assert!((ov_full - ov_thin.norm()).abs() < 1e-9);
        assert!((ov_full - full.overlap).abs() < 1e-9);
    }
}
