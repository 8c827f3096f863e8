//! Density operators on labelled multi-register systems.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::index::{decompose_index, for_each_index, strides};
use super::op::{C64, ComplexOperator};
use super::state::StateVector;
use super::{EIG_CLAMP, VALIDATION_TOL};

/// A mixed state: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    mat: DMatrix<C64>,
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl DensityOperator {
    /// Wraps a matrix, validating Hermiticity (1e-10), unit trace (1e-10)
    /// and positivity (min eigenvalue ≥ -1e-10).
    pub fn new(mat: DMatrix<C64>, dims: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let rho = Self::from_parts_unchecked(mat, dims, labels)?;
        let op = rho.as_operator();
        let defect = op.hermiticity_defect();
        if defect > VALIDATION_TOL {
            return Err(Error::InvalidDensityOperator(format!(
                "not Hermitian (defect {defect:.3e})"
            )));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > VALIDATION_TOL || tr.im.abs() > VALIDATION_TOL {
            return Err(Error::InvalidDensityOperator(format!("trace is {tr}, expected 1")));
        }
        let (vals, _) = op.eig_hermitian()?;
        if let Some(&min) = vals.last() {
            if min < -1e-10 {
                return Err(Error::InvalidDensityOperator(format!(
                    "not positive semidefinite (min eigenvalue {min:.3e})"
                )));
            }
        }
        Ok(rho)
    }

    /// Wraps a matrix checking only shape consistency. Used internally where
    /// positivity and trace are guaranteed by construction (partial traces,
    /// Kraus actions on valid states, convex mixtures).
    pub(crate) fn from_parts_unchecked(
        mat: DMatrix<C64>,
        dims: Vec<usize>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let d: usize = dims.iter().product();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but register dims give {d}x{d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if labels.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} registers",
                labels.len(),
                dims.len()
            )));
        }
        Ok(Self { mat, dims, labels })
    }

    pub fn from_pure(state: &StateVector) -> Self {
        state.to_density()
    }

    /// Maximally mixed state on the given registers.
    pub fn maximally_mixed(dims: &[usize], labels: &[&str]) -> Result<Self> {
        let d: usize = dims.iter().product();
        let mat = DMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        Self::from_parts_unchecked(
            mat,
            dims.to_vec(),
            labels.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// Classical state `diag(p)` on one register.
    pub fn from_distribution(p: &[f64], label: &str) -> Result<Self> {
        crate::entropy::validate_distribution(p)?;
        let d = p.len();
        let mut mat = DMatrix::zeros(d, d);
        for (i, &x) in p.iter().enumerate() {
            mat[(i, i)] = C64::new(x, 0.0);
        }
        Self::from_parts_unchecked(mat, vec![d], vec![label.to_string()])
    }

    /// Convex mixture `Σ w_i ρ_i`; weights must form a distribution and all
    /// states must share the register structure.
    pub fn mixture(weights: &[f64], states: &[DensityOperator]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::DimensionMismatch("mixture needs matching nonempty lists".into()));
        }
        crate::entropy::validate_distribution(weights)?;
        let first = &states[0];
        let mut mat = DMatrix::zeros(first.mat.nrows(), first.mat.ncols());
        for (w, s) in weights.iter().zip(states) {
            if s.dims != first.dims {
                return Err(Error::DimensionMismatch("mixture over mismatched registers".into()));
            }
            mat += &s.mat * C64::new(*w, 0.0);
        }
        Self::from_parts_unchecked(mat, first.dims.clone(), first.labels.clone())
    }

    pub fn mat(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total_dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().sum()
    }

    pub fn as_operator(&self) -> ComplexOperator {
        ComplexOperator::square(self.mat.clone(), self.dims.clone())
            .expect("density operator shape is consistent")
    }

    pub fn register_index(&self, label: &str) -> Result<usize> {
        let mut hits = self.labels.iter().enumerate().filter(|(_, l)| l.as_str() == label);
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Ok(i),
            (Some(_), Some(_)) => Err(Error::AmbiguousRegister(label.to_string())),
            _ => Err(Error::UnknownRegister(label.to_string())),
        }
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mat = self.mat.kronecker(&other.mat);
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self { mat, dims, labels }
    }

    /// `n`-fold tensor power with copy-suffixed labels for `n > 1`.
    pub fn tensor_pow(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ParameterOutOfRange("tensor power needs n >= 1".into()));
        }
        if n == 1 {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for copy in 2..=n {
            let mut next = self.clone();
            for (i, l) in self.labels.iter().enumerate() {
                next.labels[i] = format!("{l}{copy}");
            }
            out = out.tensor(&next);
        }
        for i in 0..self.labels.len() {
            out.labels[i] = format!("{}1", self.labels[i]);
        }
        Ok(out)
    }

    /// Partial trace keeping the listed register indices (original order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let k = self.dims.len();
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        if keep_sorted.len() != keep.len() || keep_sorted.iter().any(|&p| p >= k) {
            return Err(Error::DimensionMismatch("invalid keep set".into()));
        }
        if keep_sorted.is_empty() {
            return Err(Error::DimensionMismatch("must keep at least one register".into()));
        }
        let traced: Vec<usize> = (0..k).filter(|p| !keep_sorted.contains(p)).collect();
        let keep_dims: Vec<usize> = keep_sorted.iter().map(|&p| self.dims[p]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&p| self.dims[p]).collect();
        let dk: usize = keep_dims.iter().product();
        let in_strides = strides(&self.dims);
        let keep_strides = strides(&keep_dims);

        let mut out = DMatrix::<C64>::zeros(dk, dk);
        let mut row_digits = vec![0usize; keep_sorted.len()];
        for r in 0..dk {
            // decompose r over keep_dims
            {
                let mut idx = r;
                for j in (0..keep_dims.len()).rev() {
                    row_digits[j] = idx % keep_dims[j];
                    idx /= keep_dims[j];
                }
            }
            let row_base: usize = row_digits
                .iter()
                .zip(&keep_sorted)
                .map(|(&d, &p)| d * in_strides[p])
                .sum();
            for c in r..dk {
                let col_digits = decompose_index(&keep_dims, c);
                let col_base: usize = col_digits
                    .iter()
                    .zip(&keep_sorted)
                    .map(|(&d, &p)| d * in_strides[p])
                    .sum();
                let mut acc = C64::new(0.0, 0.0);
                for_each_index(&traced_dims, |tdig| {
                    let off: usize = tdig
                        .iter()
                        .zip(&traced)
                        .map(|(&d, &p)| d * in_strides[p])
                        .sum();
                    acc += self.mat[(row_base + off, col_base + off)];
                });
                out[(r, c)] = acc;
                if c != r {
                    out[(c, r)] = acc.conj();
                }
            }
        }
        let _ = keep_strides;
        let labels: Vec<String> = keep_sorted.iter().map(|&p| self.labels[p].clone()).collect();
        Self::from_parts_unchecked(out, keep_dims, labels)
    }

    /// Partial trace keeping registers selected by label.
    pub fn partial_trace_by_label(&self, keep: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = keep
            .iter()
            .map(|l| self.register_index(l))
            .collect::<Result<_>>()?;
        self.partial_trace(&idx)
    }

    /// Removes coherences between basis values of the given register.
    pub fn dephase_register(&self, reg: usize) -> Result<Self> {
        if reg >= self.dims.len() {
            return Err(Error::DimensionMismatch(format!("register {reg} out of range")));
        }
        let in_strides = strides(&self.dims);
        let d = self.dims[reg];
        let stride = in_strides[reg];
        let mut out = self.mat.clone();
        for r in 0..out.nrows() {
            let rd = (r / stride) % d;
            for c in 0..out.ncols() {
                let cd = (c / stride) % d;
                if rd != cd {
                    out[(r, c)] = C64::new(0.0, 0.0);
                }
            }
        }
        Self::from_parts_unchecked(out, self.dims.clone(), self.labels.clone())
    }

    /// Conjugates by an operator: `ρ ↦ K ρ K†` on the listed registers.
    /// The result is not renormalised (its trace is the branch weight when
    /// `K` is a measurement or instrument element).
    pub fn apply_op(&self, op: &ComplexOperator, targets: &[usize]) -> Result<Self> {
        // Apply to the row index via the vector kernel, one column at a time,
        // then to the column index by conjugating the same kernel.
        let cols = self.mat.ncols();
        let mut rows_applied: Vec<StateVector> = Vec::with_capacity(cols);
        for c in 0..cols {
            let col = StateVector::from_parts_unchecked(
                self.mat.column(c).into_owned(),
                self.dims.clone(),
                self.labels.clone(),
            )?;
            rows_applied.push(col.apply_op(op, targets)?);
        }
        let out_dims = rows_applied[0].dims().to_vec();
        let out_labels = rows_applied[0].labels().to_vec();
        let nr = rows_applied[0].total_dim();
        let mut interim = DMatrix::<C64>::zeros(nr, cols);
        for (c, col) in rows_applied.iter().enumerate() {
            interim.set_column(c, col.amps());
        }
        // Now the column index: (K ρ)† = ρ† K† has the kernel act on rows of
        // the adjoint; conjugate back afterwards.
        let adj = interim.adjoint();
        let mut cols_applied: Vec<StateVector> = Vec::with_capacity(nr);
        for c in 0..nr {
            let col = StateVector::from_parts_unchecked(
                adj.column(c).into_owned(),
                self.dims.clone(),
                self.labels.clone(),
            )?;
            cols_applied.push(col.apply_op(op, targets)?);
        }
        let nc = cols_applied[0].total_dim();
        let mut out_adj = DMatrix::<C64>::zeros(nc, nr);
        for (c, col) in cols_applied.iter().enumerate() {
            out_adj.set_column(c, col.amps());
        }
        Self::from_parts_unchecked(out_adj.adjoint(), out_dims, out_labels)
    }

    /// Eigenvalues, descending, clamped at [`EIG_CLAMP`].
    pub fn eigenvalues_clamped(&self) -> Result<Vec<f64>> {
        let (mut vals, _) = self.as_operator().eig_hermitian()?;
        for v in &mut vals {
            if *v < EIG_CLAMP {
                *v = 0.0;
            }
        }
        Ok(vals)
    }

    /// Spectral decomposition (descending eigenvalues, eigenvector unitary).
    pub fn eig(&self) -> Result<(Vec<f64>, ComplexOperator)> {
        self.as_operator().eig_hermitian()
    }

    /// `Tr(ρ M)` for a square operator on the full system.
    pub fn expectation(&self, op: &ComplexOperator) -> Result<C64> {
        if op.nrows() != self.total_dim() || op.ncols() != self.total_dim() {
            return Err(Error::DimensionMismatch("expectation operator shape mismatch".into()));
        }
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.total_dim() {
            for j in 0..self.total_dim() {
                acc += self.mat[(i, j)] * op.mat()[(j, i)];
            }
        }
        Ok(acc)
    }
}
