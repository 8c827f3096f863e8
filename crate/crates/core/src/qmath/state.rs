//! Pure states on labelled multi-register systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::density::DensityOperator;
use super::index::{compose_index, decompose_index, for_each_index, strides};
use super::op::{C64, ComplexOperator};
use super::VALIDATION_TOL;

/// A pure state with explicit subsystem dimensions and register names.
///
/// Amplitudes are stored row-major over the registers: the first register is
/// the most significant index digit.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl StateVector {
    /// Wraps amplitudes, checking the dimension product and unit norm.
    pub fn new(amps: DVector<C64>, dims: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let state = Self::from_parts_unchecked(amps, dims, labels)?;
        let norm = state.norm();
        if (norm - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidStateVector(format!("norm is {norm}, expected 1")));
        }
        Ok(state)
    }

    /// Wraps amplitudes without the norm check. Shape and label arity are
    /// still enforced.
    pub(crate) fn from_parts_unchecked(
        amps: DVector<C64>,
        dims: Vec<usize>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let d: usize = dims.iter().product();
        if d != amps.len() {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} but register dims give {}",
                amps.len(),
                d
            )));
        }
        if labels.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} registers",
                labels.len(),
                dims.len()
            )));
        }
        Ok(Self { amps, dims, labels })
    }

    /// Computational basis state `|digits⟩`.
    pub fn basis(dims: &[usize], digits: &[usize], labels: &[&str]) -> Result<Self> {
        let d: usize = dims.iter().product();
        let mut amps = DVector::zeros(d);
        amps[compose_index(dims, digits)] = C64::new(1.0, 0.0);
        Self::new(
            amps,
            dims.to_vec(),
            labels.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// Single-register state from raw amplitudes (normalised by the caller).
    pub fn single(amps: Vec<C64>, label: &str) -> Result<Self> {
        let n = amps.len();
        Self::new(DVector::from_vec(amps), vec![n], vec![label.to_string()])
    }

    pub fn amps(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total_dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Returns `(norm, state / norm)`; errors on (numerically) zero vectors.
    pub fn normalized(&self) -> Result<(f64, Self)> {
        let n = self.norm();
        if n < 1e-14 {
            return Err(Error::Numerical("cannot normalise a zero vector".into()));
        }
        let mut s = self.clone();
        s.amps /= C64::new(n, 0.0);
        Ok((n, s))
    }

    /// Index of the register with the given label; errors when the label is
    /// missing or ambiguous.
    pub fn register_index(&self, label: &str) -> Result<usize> {
        let mut hits = self.labels.iter().enumerate().filter(|(_, l)| l.as_str() == label);
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Ok(i),
            (Some(_), Some(_)) => Err(Error::AmbiguousRegister(label.to_string())),
            _ => Err(Error::UnknownRegister(label.to_string())),
        }
    }

    pub fn rename_register(&mut self, idx: usize, label: &str) {
        self.labels[idx] = label.to_string();
    }

    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.total_dim() != other.total_dim() {
            return Err(Error::DimensionMismatch("inner product dimension mismatch".into()));
        }
        Ok(self.amps.dotc(&other.amps))
    }

    /// Kronecker product; registers concatenate in argument order.
    pub fn tensor(&self, other: &Self) -> Self {
        let la = self.amps.len();
        let lb = other.amps.len();
        let mut amps = DVector::zeros(la * lb);
        for i in 0..la {
            let a = self.amps[i];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..lb {
                amps[i * lb + j] = a * other.amps[j];
            }
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self { amps, dims, labels }
    }

    /// `n`-fold tensor power; register labels gain a copy suffix `1..=n`
    /// when `n > 1` so they stay addressable.
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

    /// Reorders registers: `order[i]` is the current index of the register
    /// that ends up in position `i`.
    pub fn reorder(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.dims.len() {
            return Err(Error::DimensionMismatch("reorder needs all registers".into()));
        }
        let mut seen = vec![false; order.len()];
        for &o in order {
            if o >= order.len() || seen[o] {
                return Err(Error::DimensionMismatch("reorder is not a permutation".into()));
            }
            seen[o] = true;
        }
        let out_dims: Vec<usize> = order.iter().map(|&o| self.dims[o]).collect();
        let out_labels: Vec<String> = order.iter().map(|&o| self.labels[o].clone()).collect();
        let in_strides = strides(&self.dims);
        let mut amps = DVector::zeros(self.amps.len());
        let mut out_pos = 0usize;
        for_each_index(&out_dims, |digits| {
            let mut src = 0usize;
            for (i, &d) in digits.iter().enumerate() {
                src += d * in_strides[order[i]];
            }
            amps[out_pos] = self.amps[src];
            out_pos += 1;
        });
        Ok(Self { amps, dims: out_dims, labels: out_labels })
    }

    /// Applies an operator to the listed registers (in the order given,
    /// which must match the operator's column registers).
    ///
    /// When the operator has as many row registers as targets, each target
    /// register is replaced in place (its dimension may change) and labels
    /// are kept. Otherwise the targets are removed and the operator's row
    /// registers are inserted at the position of the first target, labelled
    /// `Q0, Q1, …`; use [`StateVector::rename_register`] afterwards.
    ///
    /// Isometries preserve the norm; non-isometric operators (measurement
    /// branches, instrument elements) yield subnormalised vectors that the
    /// caller should pass through [`StateVector::normalized`].
    pub fn apply_op(&self, op: &ComplexOperator, targets: &[usize]) -> Result<Self> {
        let k = self.dims.len();
        let mut seen = vec![false; k];
        for &t in targets {
            if t >= k {
                return Err(Error::DimensionMismatch(format!("target register {t} out of range")));
            }
            if seen[t] {
                return Err(Error::DimensionMismatch(format!("duplicate target register {t}")));
            }
            seen[t] = true;
        }
        let target_dims: Vec<usize> = targets.iter().map(|&t| self.dims[t]).collect();
        if op.col_dims() != target_dims.as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "operator column dims {:?} do not match target dims {:?}",
                op.col_dims(),
                target_dims
            )));
        }

        let in_place = op.row_dims().len() == targets.len();
        let in_strides = strides(&self.dims);

        // Output register layout.
        let (out_dims, out_labels, row_positions, other_map): (
            Vec<usize>,
            Vec<String>,
            Vec<usize>,
            Vec<(usize, usize)>, // (input position, output position) of untouched registers
        ) = if in_place {
            let mut out_dims = self.dims.clone();
            for (i, &t) in targets.iter().enumerate() {
                out_dims[t] = op.row_dims()[i];
            }
            let row_positions = targets.to_vec();
            let other_map = (0..k).filter(|p| !seen[*p]).map(|p| (p, p)).collect();
            (out_dims, self.labels.clone(), row_positions, other_map)
        } else {
            let insert_at = *targets.iter().min().expect("targets nonempty");
            let mut out_dims = Vec::new();
            let mut out_labels = Vec::new();
            let mut row_positions = Vec::new();
            let mut other_map = Vec::new();
            for p in 0..k {
                if p == insert_at {
                    for (i, &rd) in op.row_dims().iter().enumerate() {
                        row_positions.push(out_dims.len());
                        out_dims.push(rd);
                        out_labels.push(format!("Q{i}"));
                    }
                }
                if !seen[p] {
                    other_map.push((p, out_dims.len()));
                    out_dims.push(self.dims[p]);
                    out_labels.push(self.labels[p].clone());
                }
            }
            (out_dims, out_labels, row_positions, other_map)
        };
        if targets.is_empty() {
            return Err(Error::DimensionMismatch("apply_op needs at least one target".into()));
        }

        let out_strides = strides(&out_dims);
        let out_len: usize = out_dims.iter().product();

        // Offset tables for the operator's row/column composite indices.
        let ncols = op.ncols();
        let nrows = op.nrows();
        let mut col_off = vec![0usize; ncols];
        for (c, off) in col_off.iter_mut().enumerate() {
            let digits = decompose_index(op.col_dims(), c);
            *off = digits
                .iter()
                .zip(targets)
                .map(|(&d, &t)| d * in_strides[t])
                .sum();
        }
        let mut row_off = vec![0usize; nrows];
        for (r, off) in row_off.iter_mut().enumerate() {
            let digits = decompose_index(op.row_dims(), r);
            *off = digits
                .iter()
                .zip(&row_positions)
                .map(|(&d, &p)| d * out_strides[p])
                .sum();
        }

        let other_dims: Vec<usize> = other_map.iter().map(|&(p, _)| self.dims[p]).collect();
        let mut amps = DVector::zeros(out_len);
        let mat = op.mat();
        for_each_index(&other_dims, |digits| {
            let mut in_base = 0usize;
            let mut out_base = 0usize;
            for (j, &d) in digits.iter().enumerate() {
                let (ip, op_) = other_map[j];
                in_base += d * in_strides[ip];
                out_base += d * out_strides[op_];
            }
            for (c, &coff) in col_off.iter().enumerate() {
                let x = self.amps[in_base + coff];
                if x.norm_sqr() == 0.0 {
                    continue;
                }
                let col = mat.column(c);
                for (r, &roff) in row_off.iter().enumerate() {
                    amps[out_base + roff] += col[r] * x;
                }
            }
        });

        Ok(Self { amps, dims: out_dims, labels: out_labels })
    }

    /// Projects the given register onto basis value `k`.
    ///
    /// Returns the outcome probability and, when it is non-negligible, the
    /// normalised post-measurement state with the register removed.
    pub fn project_register(&self, reg: usize, k: usize) -> Result<(f64, Option<Self>)> {
        if reg >= self.dims.len() {
            return Err(Error::DimensionMismatch(format!("register {reg} out of range")));
        }
        if k >= self.dims[reg] {
            return Err(Error::DimensionMismatch(format!(
                "basis value {k} out of range for register of dim {}",
                self.dims[reg]
            )));
        }
        let mut out_dims = self.dims.clone();
        out_dims.remove(reg);
        let mut out_labels = self.labels.clone();
        out_labels.remove(reg);
        let in_strides = strides(&self.dims);
        let out_len: usize = out_dims.iter().product();
        let mut amps = DVector::zeros(out_len.max(1));
        let mut prob = 0.0f64;
        let mut pos = 0usize;
        let base = k * in_strides[reg];
        let reduced: Vec<usize> = (0..self.dims.len()).filter(|&p| p != reg).collect();
        let reduced_dims: Vec<usize> = reduced.iter().map(|&p| self.dims[p]).collect();
        for_each_index(&reduced_dims, |digits| {
            let mut src = base;
            for (j, &d) in digits.iter().enumerate() {
                src += d * in_strides[reduced[j]];
            }
            let a = self.amps[src];
            prob += a.norm_sqr();
            amps[pos] = a;
            pos += 1;
        });
        if prob < 1e-14 {
            return Ok((prob, None));
        }
        let scale = C64::new(prob.sqrt(), 0.0);
        let state = Self {
            amps: amps / scale,
            dims: out_dims,
            labels: out_labels,
        };
        Ok((prob, Some(state)))
    }

    /// Measures a register in the orthonormal basis given by the columns of
    /// `basis`. Returns one `(probability, post-state)` entry per outcome;
    /// the measured register is removed from the post-states.
    pub fn measure_in_basis(
        &self,
        reg: usize,
        basis: &ComplexOperator,
    ) -> Result<Vec<(f64, Option<Self>)>> {
        let d = self.dims[reg];
        if basis.nrows() != d || basis.ncols() != d {
            return Err(Error::DimensionMismatch("basis unitary has the wrong shape".into()));
        }
        let rotated = self.apply_op(&basis.adjoint(), &[reg])?;
        (0..d).map(|k| rotated.project_register(reg, k)).collect()
    }

    /// Reduced density operator on the kept registers (indices, kept in
    /// their original order).
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityOperator> {
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
        let dt: usize = traced_dims.iter().product();

        // Matricise |ψ⟩ as M[kept, traced]; then ρ_keep = M M†.
        let in_strides = strides(&self.dims);
        let mut m = DMatrix::<C64>::zeros(dk, dt);
        let keep_strides = strides(&keep_dims);
        let traced_strides = strides(&traced_dims);
        for (flat, amp) in self.amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let mut row = 0usize;
            for (j, &p) in keep_sorted.iter().enumerate() {
                row += ((flat / in_strides[p]) % self.dims[p]) * keep_strides[j];
            }
            let mut col = 0usize;
            for (j, &p) in traced.iter().enumerate() {
                col += ((flat / in_strides[p]) % self.dims[p]) * traced_strides[j];
            }
            m[(row, col)] = *amp;
        }
        let rho = &m * m.adjoint();
        let labels: Vec<String> = keep_sorted.iter().map(|&p| self.labels[p].clone()).collect();
        DensityOperator::from_parts_unchecked(rho, keep_dims, labels)
    }

    /// Reduced density operator on registers selected by label.
    pub fn reduced_density_by_label(&self, keep: &[&str]) -> Result<DensityOperator> {
        let idx: Vec<usize> = keep
            .iter()
            .map(|l| self.register_index(l))
            .collect::<Result<_>>()?;
        self.reduced_density(&idx)
    }

    pub fn to_density(&self) -> DensityOperator {
        let rho = DMatrix::from_fn(self.total_dim(), self.total_dim(), |i, j| {
            self.amps[i] * self.amps[j].conj()
        });
        DensityOperator::from_parts_unchecked(rho, self.dims.clone(), self.labels.clone())
            .expect("shape is consistent by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn qubit_pair() -> StateVector {
        // (|00⟩ + |11⟩)/√2
        let amps = DVector::from_vec(vec![
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]);
        StateVector::new(amps, vec![2, 2], vec!["A".into(), "B".into()]).unwrap()
    }

    #[test]
    fn tensor_of_basis_states() {
        let zero = StateVector::basis(&[2], &[0], &["A"]).unwrap();
        let prod = zero.tensor(&StateVector::basis(&[2], &[0], &["B"]).unwrap());
        assert_eq!(prod.dims(), &[2, 2]);
        assert!((prod.amps()[0].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_of_plus_states_is_uniform() {
        let plus = StateVector::single(
            vec![c(std::f64::consts::FRAC_1_SQRT_2, 0.0); 2],
            "A",
        )
        .unwrap();
        let prod = plus.tensor(&plus);
        for k in 0..4 {
            assert!((prod.amps()[k].re - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn reduce_bell_pair_to_maximally_mixed() {
        let rho = qubit_pair().reduced_density(&[0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!((rho.mat()[(i, j)] - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_op_single_register() {
        // X on the first qubit of |00⟩ gives |10⟩
        let x = ComplexOperator::square(
            DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            vec![2],
        )
        .unwrap();
        let s = StateVector::basis(&[2, 2], &[0, 0], &["A", "B"]).unwrap();
        let out = s.apply_op(&x, &[0]).unwrap();
        assert!((out.amps()[2].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn apply_op_grows_register() {
        // isometry |0⟩ ↦ |00⟩, |1⟩ ↦ |11⟩ on register B of |+⟩_B
        let mut v = DMatrix::zeros(4, 2);
        v[(0, 0)] = c(1.0, 0.0);
        v[(3, 1)] = c(1.0, 0.0);
        let iso = ComplexOperator::new(v, vec![2, 2], vec![2]).unwrap();
        let plus = StateVector::single(
            vec![c(std::f64::consts::FRAC_1_SQRT_2, 0.0); 2],
            "B",
        )
        .unwrap();
        let out = plus.apply_op(&iso, &[0]).unwrap();
        assert_eq!(out.dims(), &[2, 2]);
        assert!((out.norm() - 1.0).abs() < 1e-12);
        assert!((out.amps()[0].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((out.amps()[3].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn reorder_swaps_registers() {
        let s = StateVector::basis(&[2, 3], &[1, 2], &["A", "B"]).unwrap();
        let r = s.reorder(&[1, 0]).unwrap();
        assert_eq!(r.dims(), &[3, 2]);
        assert_eq!(r.labels()[0], "B");
        // |1,2⟩_{AB} = |2,1⟩_{BA} → index 2*2+1 = 5
        assert!((r.amps()[5].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn project_register_on_bell_pair() {
        let (p, post) = qubit_pair().project_register(0, 0).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let post = post.unwrap();
        assert_eq!(post.dims(), &[2]);
        assert!((post.amps()[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_pow_labels_are_addressable() {
        let s = StateVector::basis(&[2], &[0], &["B"]).unwrap();
        let p = s.tensor_pow(3).unwrap();
        assert_eq!(p.labels(), &["B1".to_string(), "B2".into(), "B3".into()]);
        assert!(p.register_index("B2").is_ok());
    }

    #[test]
    fn unknown_register_errors() {
        let s = qubit_pair();
        assert!(matches!(
            s.register_index("E"),
            Err(Error::UnknownRegister(_))
        ));
    }
}
