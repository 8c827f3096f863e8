//! Quantum channels with Stinespring dilations, plus a small library of
//! standard channels and two-qubit states.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::qmath::{C64, ComplexOperator, DensityOperator, StateVector};

const COMPLETENESS_TOL: f64 = 1e-9;

/// A completely positive trace-preserving map given by Kraus operators,
/// together with its Stinespring dilation. The environment register of the
/// dilation is the eavesdropper's system: its dimension equals the number of
/// Kraus operators (a minimal dilation is not required; entropic quantities
/// are dilation-invariant).
#[derive(Debug, Clone)]
pub struct QuantumChannel {
    kraus: Vec<ComplexOperator>,
    d_in: usize,
    d_out: usize,
}

impl QuantumChannel {
    /// Builds a channel from Kraus operators, checking `Σ K_i†K_i = 𝟙`.
    pub fn new(kraus: Vec<ComplexOperator>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::DimensionMismatch("channel needs at least one Kraus operator".into()));
        }
        let d_out = kraus[0].nrows();
        let d_in = kraus[0].ncols();
        let mut sum = DMatrix::<C64>::zeros(d_in, d_in);
        for k in &kraus {
            if k.nrows() != d_out || k.ncols() != d_in {
                return Err(Error::DimensionMismatch("Kraus operators must share shape".into()));
            }
            sum += k.mat().adjoint() * k.mat();
        }
        let defect = (&sum - DMatrix::<C64>::identity(d_in, d_in))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if defect > COMPLETENESS_TOL {
            return Err(Error::InvalidPovm(format!(
                "Kraus completeness defect {defect:.3e}"
            )));
        }
        Ok(Self { kraus, d_in, d_out })
    }

    pub fn kraus(&self) -> &[ComplexOperator] {
        &self.kraus
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn output_dim(&self) -> usize {
        self.d_out
    }

    pub fn env_dim(&self) -> usize {
        self.kraus.len()
    }

    /// Stinespring isometry `V: A' → B ⊗ E`, `V|φ⟩ = Σ_i (K_i|φ⟩) ⊗ |i⟩^E`.
    pub fn stinespring(&self) -> ComplexOperator {
        let ne = self.kraus.len();
        let mut v = DMatrix::<C64>::zeros(self.d_out * ne, self.d_in);
        for (i, k) in self.kraus.iter().enumerate() {
            for b in 0..self.d_out {
                for a in 0..self.d_in {
                    v[(b * ne + i, a)] = k.mat()[(b, a)];
                }
            }
        }
        ComplexOperator::new(v, vec![self.d_out, ne], vec![self.d_in])
            .expect("dilation shape is consistent")
    }

    /// Kraus-sum action on a density operator over the full input space.
    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        self.apply_to_register(rho, 0)
    }

    /// Kraus-sum action on one register of a larger state.
    pub fn apply_to_register(&self, rho: &DensityOperator, reg: usize) -> Result<DensityOperator> {
        if rho.dims()[reg] != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "register dim {} does not match channel input {}",
                rho.dims()[reg],
                self.d_in
            )));
        }
        let mut acc: Option<DensityOperator> = None;
        for k in &self.kraus {
            let term = rho.apply_op(k, &[reg])?;
            acc = Some(match acc {
                None => term,
                Some(a) => DensityOperator::from_parts_unchecked(
                    a.mat() + term.mat(),
                    term.dims().to_vec(),
                    term.labels().to_vec(),
                )?,
            });
        }
        Ok(acc.expect("at least one Kraus operator"))
    }
}

/// The standard parameterized qubit-input channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    Identity,
    /// With probability `p` the state is replaced by the maximally mixed one.
    Depolarizing(f64),
    /// Phase flip with probability `p`.
    Dephasing(f64),
    /// Energy relaxation with rate `gamma`.
    AmplitudeDamping(f64),
    /// The input is erased to a flag state with probability `p`; the output
    /// space is a qutrit (qubit plus flag).
    Erasure(f64),
}

fn mat2(entries: [[C64; 2]; 2]) -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[entries[0][0], entries[0][1], entries[1][0], entries[1][1]])
}

fn check_unit(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ParameterOutOfRange(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}

/// Canonical Kraus set for a [`ChannelKind`].
pub fn standard_channel(kind: ChannelKind) -> Result<QuantumChannel> {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    match kind {
        ChannelKind::Identity => QuantumChannel::new(vec![ComplexOperator::identity(&[2])]),
        ChannelKind::Depolarizing(p) => {
            check_unit(p, "depolarizing probability")?;
            let a = C64::new((1.0 - 3.0 * p / 4.0).sqrt(), 0.0);
            let b = C64::new((p / 4.0).sqrt(), 0.0);
            let i = Complex::new(0.0, 1.0);
            let ops = vec![
                mat2([[a, zero], [zero, a]]),
                mat2([[zero, b], [b, zero]]),
                mat2([[zero, -i * b], [i * b, zero]]),
                mat2([[b, zero], [zero, -b]]),
            ];
            QuantumChannel::new(
                ops.into_iter()
                    .map(|m| ComplexOperator::square(m, vec![2]).expect("2x2"))
                    .collect(),
            )
        }
        ChannelKind::Dephasing(p) => {
            check_unit(p, "dephasing probability")?;
            let a = C64::new((1.0 - p).sqrt(), 0.0);
            let b = C64::new(p.sqrt(), 0.0);
            let ops = vec![
                mat2([[a, zero], [zero, a]]),
                mat2([[b, zero], [zero, -b]]),
            ];
            QuantumChannel::new(
                ops.into_iter()
                    .map(|m| ComplexOperator::square(m, vec![2]).expect("2x2"))
                    .collect(),
            )
        }
        ChannelKind::AmplitudeDamping(gamma) => {
            check_unit(gamma, "damping rate")?;
            let ops = vec![
                mat2([[one, zero], [zero, C64::new((1.0 - gamma).sqrt(), 0.0)]]),
                mat2([[zero, C64::new(gamma.sqrt(), 0.0)], [zero, zero]]),
            ];
            QuantumChannel::new(
                ops.into_iter()
                    .map(|m| ComplexOperator::square(m, vec![2]).expect("2x2"))
                    .collect(),
            )
        }
        ChannelKind::Erasure(p) => {
            check_unit(p, "erasure probability")?;
            // qubit in, qutrit out: |2⟩ is the erasure flag
            let keep = C64::new((1.0 - p).sqrt(), 0.0);
            let lose = C64::new(p.sqrt(), 0.0);
            let mut k0 = DMatrix::<C64>::zeros(3, 2);
            k0[(0, 0)] = keep;
            k0[(1, 1)] = keep;
            let mut k1 = DMatrix::<C64>::zeros(3, 2);
            k1[(2, 0)] = lose;
            let mut k2 = DMatrix::<C64>::zeros(3, 2);
            k2[(2, 1)] = lose;
            QuantumChannel::new(vec![
                ComplexOperator::new(k0, vec![3], vec![2])?,
                ComplexOperator::new(k1, vec![3], vec![2])?,
                ComplexOperator::new(k2, vec![3], vec![2])?,
            ])
        }
    }
}

/// The Bell basis vector with index `i`: Φ+, Φ−, Ψ+, Ψ− in that order,
/// on registers `A`, `B`.
pub fn bell_state(i: usize) -> Result<StateVector> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let c = |x: f64| C64::new(x, 0.0);
    let amps = match i {
        0 => vec![c(r), c(0.0), c(0.0), c(r)],
        1 => vec![c(r), c(0.0), c(0.0), c(-r)],
        2 => vec![c(0.0), c(r), c(r), c(0.0)],
        3 => vec![c(0.0), c(r), c(-r), c(0.0)],
        _ => return Err(Error::ParameterOutOfRange(format!("Bell index {i} > 3"))),
    };
    StateVector::new(
        DVector::from_vec(amps),
        vec![2, 2],
        vec!["A".into(), "B".into()],
    )
}

/// `Σ_i p_i |Bell_i⟩⟨Bell_i|` on registers `A`, `B`.
pub fn bell_diagonal_state(p: &[f64; 4]) -> Result<DensityOperator> {
    crate::entropy::validate_distribution(p)?;
    let states: Vec<DensityOperator> = (0..4)
        .map(|i| Ok(bell_state(i)?.to_density()))
        .collect::<Result<_>>()?;
    DensityOperator::mixture(p, &states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::trace_distance;

    #[test]
    fn identity_channel_is_single_kraus() {
        let ch = standard_channel(ChannelKind::Identity).unwrap();
        assert_eq!(ch.kraus().len(), 1);
        assert_eq!(ch.env_dim(), 1);
    }

    #[test]
    fn depolarizing_zero_is_identity() {
        let ch = standard_channel(ChannelKind::Depolarizing(0.0)).unwrap();
        let rho = StateVector::basis(&[2], &[0], &["B"]).unwrap().to_density();
        let out = ch.apply(&rho).unwrap();
        assert!(trace_distance(&out, &rho).unwrap() < 1e-12);
    }

    #[test]
    fn depolarizing_kraus_complete() {
        // completeness is validated at construction; p = 0.2 must pass
        assert!(standard_channel(ChannelKind::Depolarizing(0.2)).is_ok());
    }

    #[test]
    fn fully_depolarizing_outputs_maximally_mixed() {
        let ch = standard_channel(ChannelKind::Depolarizing(1.0)).unwrap();
        let rho = StateVector::basis(&[2], &[0], &["B"]).unwrap().to_density();
        let out = ch.apply(&rho).unwrap();
        let mm = DensityOperator::maximally_mixed(&[2], &["B"]).unwrap();
        assert!(trace_distance(&out, &mm).unwrap() < 1e-12);
    }

    #[test]
    fn parameter_out_of_range_rejected() {
        assert!(standard_channel(ChannelKind::Dephasing(1.5)).is_err());
        assert!(standard_channel(ChannelKind::AmplitudeDamping(-0.1)).is_err());
    }

    #[test]
    fn stinespring_consistent_with_kraus_sum() {
        for kind in [
            ChannelKind::Identity,
            ChannelKind::Depolarizing(0.3),
            ChannelKind::Dephasing(0.2),
            ChannelKind::AmplitudeDamping(0.5),
            ChannelKind::Erasure(0.25),
        ] {
            let ch = standard_channel(kind).unwrap();
            let v = ch.stinespring();
            // V†V = 1
            let gram = v.adjoint().mul(&v).unwrap();
            assert!(
                gram.sub(&ComplexOperator::identity(&[2])).unwrap().max_abs_entry() < 1e-9,
                "{kind:?} dilation is not an isometry"
            );
            // Tr_E V ρ V† = Kraus sum, on a non-trivial pure input
            let input = StateVector::single(
                vec![C64::new(0.8, 0.0), C64::new(0.0, 0.6)],
                "Aprime",
            )
            .unwrap();
            let dilated = input.apply_op(&v, &[0]).unwrap();
            let via_dilation = dilated.reduced_density(&[0]).unwrap();
            let direct = ch.apply(&input.to_density()).unwrap();
            assert!(
                trace_distance(&via_dilation, &direct).unwrap() < 1e-9,
                "{kind:?} dilation disagrees with Kraus action"
            );
        }
    }

    #[test]
    fn bell_diagonal_recovers_bell_state() {
        let rho = bell_diagonal_state(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let phi = bell_state(0).unwrap().to_density();
        assert!(trace_distance(&rho, &phi).unwrap() < 1e-12);
    }

    #[test]
    fn bell_diagonal_uniform_is_maximally_mixed() {
        let rho = bell_diagonal_state(&[0.25; 4]).unwrap();
        let mm = DensityOperator::maximally_mixed(&[2, 2], &["A", "B"]).unwrap();
        assert!(trace_distance(&rho, &mm).unwrap() < 1e-12);
    }

    #[test]
    fn bell_diagonal_eigenvalues_match_distribution() {
        let u = 0.1 / 3.0;
        let rho = bell_diagonal_state(&[0.9, u, u, u]).unwrap();
        let eig = rho.eigenvalues_clamped().unwrap();
        assert!((eig[0] - 0.9).abs() < 1e-12);
        for &v in &eig[1..] {
            assert!((v - u).abs() < 1e-12);
        }
    }

    #[test]
    fn erasure_flags_with_given_probability() {
        let ch = standard_channel(ChannelKind::Erasure(0.25)).unwrap();
        let rho = StateVector::basis(&[2], &[1], &["B"]).unwrap().to_density();
        let out = ch.apply(&rho).unwrap();
        assert_eq!(out.total_dim(), 3);
        assert!((out.mat()[(2, 2)].re - 0.25).abs() < 1e-12);
        assert!((out.mat()[(1, 1)].re - 0.75).abs() < 1e-12);
    }
}
