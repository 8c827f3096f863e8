//! Entropic functionals and rate formulas, all in bits.
//!
//! The cross-identities connecting them — for a tripartite pure state
//! `|ψ⟩^{ABE}` with decohered source `{P(x), φ_x^{BE}}`, the coherent
//! information satisfies `I_c(A⟩B) = H(B) − H(E) = I(X;B) − I(X;E)` — are
//! exposed as an [`EntropyReport`] computed from a single set of
//! eigendecompositions, so the identities can be tested without tolerance
//! drift between separately computed quantities.

use crate::error::{Error, Result};
use crate::qmath::{DensityOperator, EIG_CLAMP};
use crate::source::{CqqSource, TripartiteState};

/// Checks non-negativity and unit sum (1e-10).
pub fn validate_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    if let Some(&bad) = p.iter().find(|&&x| !(x >= -1e-12)) {
        return Err(Error::InvalidDistribution(format!("negative probability {bad}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    Ok(())
}

fn entropy_of_values(vals: impl IntoIterator<Item = f64>) -> f64 {
    let mut h = 0.0;
    for v in vals {
        if v > EIG_CLAMP {
            h -= v * v.log2();
        }
    }
    h
}

/// Shannon entropy `H(X) = −Σ_x P(x) log₂ P(x)`.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    validate_distribution(p)?;
    Ok(entropy_of_values(p.iter().copied()))
}

/// Binary entropy `h(p)`.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_of_values([p, 1.0 - p])
}

/// Von Neumann entropy `H(ρ) = −Tr ρ log₂ ρ`.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    Ok(entropy_of_values(rho.eigenvalues_clamped()?))
}

/// Which receiver a cq functional refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    B,
    E,
}

/// Conditional entropy `H(rest | cond) = H(all) − H(cond)`; may be negative.
pub fn conditional_entropy(rho: &DensityOperator, condition_on: &[&str]) -> Result<f64> {
    let cond = rho.partial_trace_by_label(condition_on)?;
    Ok(von_neumann_entropy(rho)? - von_neumann_entropy(&cond)?)
}

/// Mutual information `I(A;B) = H(A) + H(B) − H(AB)` across the bipartition
/// given by `part_a` (the rest of the registers form the other side).
pub fn mutual_information(rho: &DensityOperator, part_a: &[&str]) -> Result<f64> {
    let a_idx: Vec<usize> = part_a
        .iter()
        .map(|l| rho.register_index(l))
        .collect::<Result<_>>()?;
    let b_idx: Vec<usize> = (0..rho.dims().len()).filter(|i| !a_idx.contains(i)).collect();
    if b_idx.is_empty() {
        return Err(Error::DimensionMismatch("mutual information needs a bipartition".into()));
    }
    let ha = von_neumann_entropy(&rho.partial_trace(&a_idx)?)?;
    let hb = von_neumann_entropy(&rho.partial_trace(&b_idx)?)?;
    let hab = von_neumann_entropy(rho)?;
    Ok(ha + hb - hab)
}

/// Holevo information `I(X;side) = H(Σ_x P(x) φ_x) − Σ_x P(x) H(φ_x)`.
pub fn holevo_information(source: &CqqSource, side: Side) -> Result<f64> {
    let avg = match side {
        Side::B => source.average_b(),
        Side::E => source.average_e(),
    };
    let mut h_cond = 0.0;
    for x in 0..source.alphabet_size() {
        let st = match side {
            Side::B => source.conditional_b(x),
            Side::E => source.conditional_e(x),
        };
        h_cond += source.probs()[x] * von_neumann_entropy(&st)?;
    }
    Ok(von_neumann_entropy(&avg)? - h_cond)
}

/// Coherent information `I_c(A⟩B) = −H(A|B) = H(B) − H(E)` of a tripartite
/// pure state.
pub fn coherent_information(psi: &TripartiteState) -> Result<f64> {
    let hb = von_neumann_entropy(&psi.vector().reduced_density_by_label(&["B"])?)?;
    let he = von_neumann_entropy(&psi.vector().reduced_density_by_label(&["E"])?)?;
    Ok(hb - he)
}

/// Coherent information of a bipartite mixed state: `H(B) − H(AB)`, the
/// value obtained from any purification with the reference handed to Eve.
pub fn coherent_information_of(rho_ab: &DensityOperator, b_labels: &[&str]) -> Result<f64> {
    let hb = von_neumann_entropy(&rho_ab.partial_trace_by_label(b_labels)?)?;
    let hab = von_neumann_entropy(rho_ab)?;
    Ok(hb - hab)
}

/// All entropic quantities of one tripartite state, computed from a single
/// set of reduced-state eigendecompositions.
#[derive(Debug, Clone)]
pub struct EntropyReport {
    pub h_a: f64,
    pub h_b: f64,
    pub h_e: f64,
    pub h_ab: f64,
    pub h_x: f64,
    pub mutual_ab: f64,
    pub holevo_xb: f64,
    pub holevo_xe: f64,
    pub coherent_info: f64,
    pub private_info: f64,
}

/// Builds the [`EntropyReport`] for `|ψ⟩^{ABE}` and its decohered source.
pub fn entropy_report(psi: &TripartiteState) -> Result<EntropyReport> {
    let v = psi.vector();
    let h_a = von_neumann_entropy(&v.reduced_density_by_label(&["A"])?)?;
    let h_b = von_neumann_entropy(&v.reduced_density_by_label(&["B"])?)?;
    let h_e = von_neumann_entropy(&v.reduced_density_by_label(&["E"])?)?;
    let h_ab = von_neumann_entropy(&v.reduced_density_by_label(&["A", "B"])?)?;
    let h_x = shannon_entropy(psi.source().probs())?;
    let holevo_xb = holevo_information(psi.source(), Side::B)?;
    let holevo_xe = holevo_information(psi.source(), Side::E)?;
    Ok(EntropyReport {
        h_a,
        h_b,
        h_e,
        h_ab,
        h_x,
        mutual_ab: h_a + h_b - h_ab,
        holevo_xb,
        holevo_xe,
        coherent_info: h_b - h_e,
        private_info: holevo_xb - holevo_xe,
    })
}
