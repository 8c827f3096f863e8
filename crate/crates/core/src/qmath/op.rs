//! Register-aware complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

use super::{EIG_CLAMP, VALIDATION_TOL};

/// Complex scalar used throughout the crate.
pub type C64 = Complex<f64>;

/// A dense complex matrix together with the register structure of its row
/// and column spaces. Row and column structures may differ, which covers
/// isometries (channel dilations, coherent measurements) and register
/// coarse-grainings (Alice's instrument) as well as square operators.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    mat: DMatrix<C64>,
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
}

impl ComplexOperator {
    /// Wraps a matrix, checking that the register dimensions multiply out to
    /// the matrix shape.
    pub fn new(mat: DMatrix<C64>, row_dims: Vec<usize>, col_dims: Vec<usize>) -> Result<Self> {
        let r: usize = row_dims.iter().product();
        let c: usize = col_dims.iter().product();
        if r != mat.nrows() || c != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but register dims give {}x{}",
                mat.nrows(),
                mat.ncols(),
                r,
                c
            )));
        }
        Ok(Self { mat, row_dims, col_dims })
    }

    /// Square operator on registers of the given dimensions.
    pub fn square(mat: DMatrix<C64>, dims: Vec<usize>) -> Result<Self> {
        Self::new(mat, dims.clone(), dims)
    }

    pub fn identity(dims: &[usize]) -> Self {
        let d: usize = dims.iter().product();
        Self {
            mat: DMatrix::identity(d, d),
            row_dims: dims.to_vec(),
            col_dims: dims.to_vec(),
        }
    }

    pub fn zeros(row_dims: &[usize], col_dims: &[usize]) -> Self {
        let r: usize = row_dims.iter().product();
        let c: usize = col_dims.iter().product();
        Self {
            mat: DMatrix::zeros(r, c),
            row_dims: row_dims.to_vec(),
            col_dims: col_dims.to_vec(),
        }
    }

    /// Diagonal square operator from real entries (single register).
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut mat = DMatrix::zeros(d, d);
        for (i, &x) in diag.iter().enumerate() {
            mat[(i, i)] = C64::new(x, 0.0);
        }
        Self { mat, row_dims: vec![d], col_dims: vec![d] }
    }

    pub fn mat(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn row_dims(&self) -> &[usize] {
        &self.row_dims
    }

    pub fn col_dims(&self) -> &[usize] {
        &self.col_dims
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.mat.nrows() == self.mat.ncols()
    }

    /// Kronecker product; register lists concatenate in argument order.
    pub fn tensor(&self, other: &Self) -> Self {
        let mat = self.mat.kronecker(&other.mat);
        let mut row_dims = self.row_dims.clone();
        row_dims.extend_from_slice(&other.row_dims);
        let mut col_dims = self.col_dims.clone();
        col_dims.extend_from_slice(&other.col_dims);
        Self { mat, row_dims, col_dims }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
            row_dims: self.col_dims.clone(),
            col_dims: self.row_dims.clone(),
        }
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.ncols() != other.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows(),
                self.ncols(),
                other.nrows(),
                other.ncols()
            )));
        }
        Ok(Self {
            mat: &self.mat * &other.mat,
            row_dims: self.row_dims.clone(),
            col_dims: other.col_dims.clone(),
        })
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            mat: self.mat.clone() * factor,
            row_dims: self.row_dims.clone(),
            col_dims: self.col_dims.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.nrows() != other.nrows() || self.ncols() != other.ncols() {
            return Err(Error::DimensionMismatch("operator sum shape mismatch".into()));
        }
        Ok(Self {
            mat: &self.mat + &other.mat,
            row_dims: self.row_dims.clone(),
            col_dims: self.col_dims.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.nrows() != other.nrows() || self.ncols() != other.ncols() {
            return Err(Error::DimensionMismatch("operator difference shape mismatch".into()));
        }
        Ok(Self {
            mat: &self.mat - &other.mat,
            row_dims: self.row_dims.clone(),
            col_dims: self.col_dims.clone(),
        })
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().sum()
    }

    /// Largest entrywise deviation from the adjoint.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.mat.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.mat[(i, j)] - self.mat[(j, i)].conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigendecomposition of a Hermitian operator.
    ///
    /// Returns eigenvalues in descending order and the matching unitary of
    /// eigenvectors (columns), so `H = V diag(λ) V†`. The input must be
    /// Hermitian within [`VALIDATION_TOL`]; it is symmetrised before the
    /// decomposition so tiny asymmetries cannot leak into the result.
    ///
    /// The QR-based solver can fail (NaN output) on matrices with heavily
    /// clustered eigenvalues — rank-deficient POVM elements hit this — so
    /// the result is verified by reconstruction and a cyclic Jacobi sweep
    /// takes over when it is bad. Both paths are deterministic.
    pub fn eig_hermitian(&self) -> Result<(Vec<f64>, ComplexOperator)> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("eig_hermitian needs a square operator".into()));
        }
        let defect = self.hermiticity_defect();
        if defect > VALIDATION_TOL {
            return Err(Error::NotHermitian(defect));
        }
        let n = self.mat.nrows();
        let sym = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        let scale = sym.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);

        let qr_result = {
            let eig = nalgebra::SymmetricEigen::new(sym.clone());
            let ok = eig.eigenvalues.iter().all(|v| v.is_finite())
                && eig.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite());
            if ok {
                // reconstruction check on a fixed dense probe vector: O(n²),
                // catches NaN poisoning and wrong invariant subspaces
                let probe = DVector::from_fn(n, |i, _| {
                    C64::new(1.0 + (i as f64 * 0.7391).sin(), (i as f64 * 1.1731).cos())
                });
                let coeffs = eig.eigenvectors.adjoint() * &probe;
                let mut scaled = coeffs.clone();
                for j in 0..n {
                    scaled[j] *= C64::new(eig.eigenvalues[j], 0.0);
                }
                let reconstructed = &eig.eigenvectors * scaled;
                let direct = &sym * &probe;
                let resid = (reconstructed - direct)
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                let probe_scale = probe.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if resid <= 1e-8 * scale * probe_scale * (n as f64).sqrt() {
                    Some((eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors))
                } else {
                    None
                }
            } else {
                None
            }
        };
        let (raw_values, raw_vectors) = match qr_result {
            Some(r) => r,
            None => jacobi_hermitian(&sym),
        };

        // Sort descending, ties broken by original position for determinism.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            raw_values[b]
                .partial_cmp(&raw_values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let values: Vec<f64> = order.iter().map(|&i| raw_values[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (new_col, &old_col) in order.iter().enumerate() {
            vectors.set_column(new_col, &raw_vectors.column(old_col));
        }
        Ok((
            values,
            ComplexOperator {
                mat: vectors,
                row_dims: self.row_dims.clone(),
                col_dims: self.col_dims.clone(),
            },
        ))
    }

    /// Eigenvalues of a Hermitian operator, descending, clamped at
    /// [`EIG_CLAMP`] (values below it become exactly zero).
    pub fn eigenvalues_clamped(&self) -> Result<Vec<f64>> {
        let (mut vals, _) = self.eig_hermitian()?;
        for v in &mut vals {
            if *v < EIG_CLAMP {
                *v = 0.0;
            }
        }
        Ok(vals)
    }

    /// Full singular value decomposition `M = U Σ W†`.
    ///
    /// Returns `(U, σ, W)` with `σ` descending. For square input both `U`
    /// and `W` are square unitaries.
    pub fn svd(&self) -> Result<(DMatrix<C64>, DVector<f64>, DMatrix<C64>)> {
        let svd = self.mat.clone().svd(true, true);
        let u = svd
            .u
            .ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD did not produce V^T".into()))?;
        Ok((u, svd.singular_values, v_t.adjoint()))
    }

    /// PSD square root via spectral decomposition; eigenvalues are clamped
    /// at [`EIG_CLAMP`] first.
    pub fn sqrt_psd(&self) -> Result<Self> {
        self.spectral_map(|x| if x > EIG_CLAMP { x.sqrt() } else { 0.0 })
    }

    /// Inverse square root on the support (eigenvalues above [`EIG_CLAMP`]);
    /// the kernel maps to zero.
    pub fn inv_sqrt_on_support(&self) -> Result<Self> {
        self.spectral_map(|x| if x > EIG_CLAMP { 1.0 / x.sqrt() } else { 0.0 })
    }

    /// Projector onto the support (eigenvalues above [`EIG_CLAMP`]).
    pub fn support_projector(&self) -> Result<Self> {
        self.spectral_map(|x| if x > EIG_CLAMP { 1.0 } else { 0.0 })
    }

    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let (vals, vecs) = self.eig_hermitian()?;
        let n = self.mat.nrows();
        let mut scaled = vecs.mat.clone();
        for (j, &v) in vals.iter().enumerate() {
            let s = C64::new(f(v), 0.0);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        Ok(Self {
            mat: &scaled * vecs.mat.adjoint(),
            row_dims: self.row_dims.clone(),
            col_dims: self.col_dims.clone(),
        })
    }
}

/// Cyclic Jacobi eigensolver for complex Hermitian matrices.
///
/// Unconditionally convergent and immune to the clustered-eigenvalue
/// failures of shifted-QR solvers, at the cost of a constant factor. Used
/// as the fallback path of [`ComplexOperator::eig_hermitian`].
fn jacobi_hermitian(a: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<C64>::identity(n, n);
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-15 * scale;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[(p, q)].norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let beta = m[(p, q)];
                if beta.norm() <= tol {
                    continue;
                }
                let alpha = m[(p, p)].re;
                let gamma = m[(q, q)].re;
                let abs_b = beta.norm();
                let phase = beta / C64::new(abs_b, 0.0);
                // real rotation for [[α, |β|], [|β|, γ]]
                let tau = (gamma - alpha) / (2.0 * abs_b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // unitary on the (p, q) plane: columns
                //   u_p = ( c, −s·conj(phase) ), u_q = ( s, c·conj(phase) )
                let gpp = C64::new(c, 0.0);
                let gpq = C64::new(s, 0.0);
                let gqp = -C64::new(s, 0.0) * phase.conj();
                let gqq = C64::new(c, 0.0) * phase.conj();
                // M := G† M G, exploiting that only rows/cols p, q change
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = mip * gpp + miq * gqp;
                    m[(i, q)] = mip * gpq + miq * gqq;
                }
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = gpp.conj() * mpj + gqp.conj() * mqj;
                    m[(q, j)] = gpq.conj() * mpj + gqq.conj() * mqj;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * gpp + viq * gqp;
                    v[(i, q)] = vip * gpq + viq * gqq;
                }
            }
        }
    }
    let values: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    (values, v)
}
