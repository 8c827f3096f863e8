//! POVMs and the pretty-good (square-root) measurement.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::qmath::{C64, ComplexOperator, DensityOperator};

const POVM_TOL: f64 = 1e-9;

/// A positive operator-valued measure: the listed outcome elements plus a
/// completion element `𝟙 − Σ_c E_c` (outcome index `len()` when sampling).
#[derive(Debug, Clone)]
pub struct Povm {
    elements: Vec<ComplexOperator>,
    completion: ComplexOperator,
}

impl Povm {
    /// Wraps outcome elements, checking shapes, Hermiticity and positivity
    /// of the completion `𝟙 − Σ_c E_c` (one eigendecomposition). Positivity
    /// of the individual elements holds by construction for every producer
    /// in this crate; [`Povm::validate_psd`] checks it exhaustively.
    pub fn new(elements: Vec<ComplexOperator>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidPovm("no outcome elements".into()));
        }
        let d = elements[0].nrows();
        let dims = elements[0].row_dims().to_vec();
        let mut sum = DMatrix::<C64>::zeros(d, d);
        for e in &elements {
            if e.nrows() != d || e.ncols() != d {
                return Err(Error::InvalidPovm("element shape mismatch".into()));
            }
            let defect = e.hermiticity_defect();
            if defect > POVM_TOL {
                return Err(Error::InvalidPovm(format!(
                    "element not Hermitian (defect {defect:.3e})"
                )));
            }
            sum += e.mat();
        }
        let completion_mat = DMatrix::<C64>::identity(d, d) - sum;
        let completion = ComplexOperator::square(completion_mat, dims)?;
        let (vals, _) = completion.eig_hermitian()?;
        if let Some(&min) = vals.last() {
            if min < -POVM_TOL {
                return Err(Error::InvalidPovm(format!(
                    "elements exceed the identity (completion min eigenvalue {min:.3e})"
                )));
            }
        }
        Ok(Self { elements, completion })
    }

    /// Full positivity check of every element (one eigendecomposition per
    /// outcome). Returns the most negative eigenvalue seen.
    pub fn validate_psd(&self) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for e in &self.elements {
            let (vals, _) = e.eig_hermitian()?;
            if let Some(&min) = vals.last() {
                worst = worst.min(min);
                if min < -POVM_TOL {
                    return Err(Error::InvalidPovm(format!(
                        "element not PSD (min eigenvalue {min:.3e})"
                    )));
                }
            }
        }
        Ok(worst)
    }

    pub fn elements(&self) -> &[ComplexOperator] {
        &self.elements
    }

    pub fn completion(&self) -> &ComplexOperator {
        &self.completion
    }

    /// Number of listed outcomes (the completion adds one more).
    pub fn num_outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn row_dims(&self) -> &[usize] {
        self.elements[0].row_dims()
    }

    /// Outcome probabilities on a state, completion last. Tiny negative
    /// values from roundoff are clamped to zero.
    pub fn outcome_probabilities(&self, rho: &DensityOperator) -> Result<Vec<f64>> {
        let mut probs = Vec::with_capacity(self.elements.len() + 1);
        for e in &self.elements {
            probs.push(rho.expectation(e)?.re.max(0.0));
        }
        probs.push(rho.expectation(&self.completion)?.re.max(0.0));
        Ok(probs)
    }

    /// `√E_c` for every outcome, completion last. Used by the coherent
    /// measurement isometry.
    pub fn sqrt_elements(&self) -> Result<Vec<ComplexOperator>> {
        let mut out = Vec::with_capacity(self.elements.len() + 1);
        for e in &self.elements {
            out.push(e.sqrt_psd()?);
        }
        out.push(self.completion.sqrt_psd()?);
        Ok(out)
    }
}

/// The pretty-good measurement for an ensemble `{w_c, φ_c}`:
/// `E_c = Ŝ^{−1/2} w_c φ_c Ŝ^{−1/2}` with `Ŝ = Σ_c w_c φ_c`, the inverse
/// square root taken on the support. The completion element is the
/// projector onto the orthogonal complement of the support.
pub fn pgm(states: &[DensityOperator], weights: &[f64]) -> Result<Povm> {
    if states.is_empty() || states.len() != weights.len() {
        return Err(Error::DimensionMismatch(
            "pgm needs one weight per state".into(),
        ));
    }
    let d = states[0].total_dim();
    let dims = states[0].dims().to_vec();
    let mut s_hat = DMatrix::<C64>::zeros(d, d);
    for (w, st) in weights.iter().zip(states) {
        if st.total_dim() != d {
            return Err(Error::DimensionMismatch("pgm states must share dimensions".into()));
        }
        if *w < 0.0 {
            return Err(Error::ParameterOutOfRange("pgm weights must be nonnegative".into()));
        }
        s_hat += st.mat() * C64::new(*w, 0.0);
    }
    let s_op = ComplexOperator::square(s_hat, dims.clone())?;
    let root_inv = s_op.inv_sqrt_on_support()?;
    let mut elements = Vec::with_capacity(states.len());
    for (w, st) in weights.iter().zip(states) {
        let scaled = ComplexOperator::square(st.mat() * C64::new(*w, 0.0), dims.clone())?;
        elements.push(root_inv.mul(&scaled)?.mul(&root_inv)?);
    }
    Povm::new(elements)
}

/// Average success probability of a POVM over an ensemble:
/// `Σ_c w_c Tr(E_c φ_c)`.
pub fn average_success(povm: &Povm, states: &[DensityOperator], weights: &[f64]) -> Result<f64> {
    if states.len() != povm.num_outcomes() || weights.len() != states.len() {
        return Err(Error::DimensionMismatch(
            "success evaluation needs one state per outcome".into(),
        ));
    }
    let mut acc = 0.0;
    for ((w, st), e) in weights.iter().zip(states).zip(povm.elements()) {
        acc += w * st.expectation(e)?.re;
    }
    Ok(acc)
}
