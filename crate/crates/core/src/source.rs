//! The classical-quantum-quantum source, the tripartite pure state it is
//! distilled from, target resources and protocol parameters.

use nalgebra::{DMatrix, DVector};

use crate::channels::{bell_state, QuantumChannel};
use crate::error::{Error, Result};
use crate::qmath::{C64, ComplexOperator, DensityOperator, StateVector, VALIDATION_TOL};

/// The cqq source `{P(x), |φ_x⟩^{BE}}`: a classical letter `x` with
/// distribution `P`, steering pure conditional states shared by Bob (`B`)
/// and Eve (`E`). Every code construction in the crate consumes one of
/// these.
#[derive(Debug, Clone)]
pub struct CqqSource {
    probs: Vec<f64>,
    states: Vec<StateVector>,
    d_b: usize,
    d_e: usize,
}

impl CqqSource {
    pub fn new(probs: Vec<f64>, states: Vec<StateVector>) -> Result<Self> {
        crate::entropy::validate_distribution(&probs)?;
        if probs.len() != states.len() || states.is_empty() {
            return Err(Error::DimensionMismatch(
                "source needs one conditional state per letter".into(),
            ));
        }
        let dims = states[0].dims().to_vec();
        if dims.len() != 2 {
            return Err(Error::DimensionMismatch(
                "conditional states must live on two registers (B, E)".into(),
            ));
        }
        for s in &states {
            if s.dims() != dims {
                return Err(Error::DimensionMismatch("conditional state dims differ".into()));
            }
            if (s.norm() - 1.0).abs() > VALIDATION_TOL {
                return Err(Error::InvalidStateVector("conditional state not normalised".into()));
            }
        }
        Ok(Self {
            probs,
            states,
            d_b: dims[0],
            d_e: dims[1],
        })
    }

    /// Two-letter source with product conditionals `|b_x⟩ ⊗ |e_x⟩`, where
    /// the pure B-states have real overlap `overlap_b` and likewise on E.
    pub fn two_pure(p0: f64, overlap_b: f64, overlap_e: f64) -> Result<Self> {
        for (v, name) in [(p0, "p0"), (overlap_b, "overlap_b"), (overlap_e, "overlap_e")] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ParameterOutOfRange(format!("{name} = {v} outside [0, 1]")));
            }
        }
        let c = |x: f64| C64::new(x, 0.0);
        let tilted = |ov: f64, label: &str| {
            StateVector::single(vec![c(ov), c((1.0 - ov * ov).sqrt())], label)
        };
        let b0 = StateVector::basis(&[2], &[0], &["B"])?;
        let e0 = StateVector::basis(&[2], &[0], &["E"])?;
        let b1 = tilted(overlap_b, "B")?;
        let e1 = tilted(overlap_e, "E")?;
        Self::new(
            vec![p0, 1.0 - p0],
            vec![b0.tensor(&e0), b1.tensor(&e1)],
        )
    }

    /// Noiseless classical source: orthogonal states on B, a constant state
    /// on E (Eve learns nothing).
    pub fn ideal(probs: Vec<f64>) -> Result<Self> {
        let n = probs.len();
        let e = StateVector::basis(&[1], &[0], &["E"])?;
        let states = (0..n)
            .map(|x| Ok(StateVector::basis(&[n], &[x], &["B"])?.tensor(&e)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs, states)
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn dim_b(&self) -> usize {
        self.d_b
    }

    pub fn dim_e(&self) -> usize {
        self.d_e
    }

    /// Reduced conditional state on Bob's side for letter `x`.
    pub fn conditional_b(&self, x: usize) -> DensityOperator {
        self.states[x]
            .reduced_density(&[0])
            .expect("conditional states have registers B, E")
    }

    /// Reduced conditional state on Eve's side for letter `x`.
    pub fn conditional_e(&self, x: usize) -> DensityOperator {
        self.states[x]
            .reduced_density(&[1])
            .expect("conditional states have registers B, E")
    }

    /// Bob's average state `ω = Σ_x P(x) φ_x^B`.
    pub fn average_b(&self) -> DensityOperator {
        let states: Vec<DensityOperator> = (0..self.alphabet_size())
            .map(|x| self.conditional_b(x))
            .collect();
        DensityOperator::mixture(&self.probs, &states).expect("consistent dims")
    }

    /// Eve's average state `σ = Σ_x P(x) φ_x^E`.
    pub fn average_e(&self) -> DensityOperator {
        let states: Vec<DensityOperator> = (0..self.alphabet_size())
            .map(|x| self.conditional_e(x))
            .collect();
        DensityOperator::mixture(&self.probs, &states).expect("consistent dims")
    }

    /// The map `W = Σ_x |φ_x⟩⟨x|` from the classical register into `BE`.
    /// It is an isometry exactly when the conditionals are orthonormal; see
    /// [`CqqSource::isometry_defect`].
    pub fn schmidt_map(&self) -> ComplexOperator {
        let rows = self.d_b * self.d_e;
        let cols = self.alphabet_size();
        let mut m = DMatrix::<C64>::zeros(rows, cols);
        for (x, s) in self.states.iter().enumerate() {
            for r in 0..rows {
                m[(r, x)] = s.amps()[r];
            }
        }
        ComplexOperator::new(m, vec![self.d_b, self.d_e], vec![cols])
            .expect("consistent dims")
    }

    /// Largest entrywise deviation of `W†W` from the identity — zero iff the
    /// conditional states are orthonormal.
    pub fn isometry_defect(&self) -> f64 {
        let w = self.schmidt_map();
        let gram = w.adjoint().mul(&w).expect("shapes match");
        gram.sub(&ComplexOperator::identity(&[self.alphabet_size()]))
            .expect("square")
            .max_abs_entry()
    }

    /// The purifying tripartite state `|ψ⟩^{ABE} = Σ_x √P(x) |x⟩|φ_x⟩`.
    pub fn tripartite(&self) -> TripartiteState {
        let dx = self.alphabet_size();
        let block = self.d_b * self.d_e;
        let mut amps = DVector::<C64>::zeros(dx * block);
        for (x, s) in self.states.iter().enumerate() {
            let w = C64::new(self.probs[x].sqrt(), 0.0);
            for r in 0..block {
                amps[x * block + r] = w * s.amps()[r];
            }
        }
        let vector = StateVector::new(
            amps,
            vec![dx, self.d_b, self.d_e],
            vec!["A".into(), "B".into(), "E".into()],
        )
        .expect("probabilities and conditionals are normalised");
        TripartiteState {
            vector,
            source: self.clone(),
        }
    }

    /// Probability of the sequence `x^n` under `P^n`.
    pub fn seq_prob(&self, xn: &[u8]) -> f64 {
        xn.iter().map(|&x| self.probs[x as usize]).product()
    }

    /// Product conditional state `⊗_i φ^B_{x_i}` on `B^{⊗n}`.
    pub fn seq_state_b(&self, xn: &[u8]) -> DensityOperator {
        self.seq_state_side(xn, true)
    }

    /// Product conditional state `⊗_i φ^E_{x_i}` on `E^{⊗n}`.
    pub fn seq_state_e(&self, xn: &[u8]) -> DensityOperator {
        self.seq_state_side(xn, false)
    }

    fn seq_state_side(&self, xn: &[u8], b_side: bool) -> DensityOperator {
        let letter = |x: u8| {
            if b_side {
                self.conditional_b(x as usize)
            } else {
                self.conditional_e(x as usize)
            }
        };
        let mut out = letter(xn[0]);
        for &x in &xn[1..] {
            out = out.tensor(&letter(x));
        }
        out
    }

    /// Joint pure conditional `⊗_i |φ_{x_i}⟩^{B_i E_i}`, registers grouped
    /// as `B^{⊗n}` then `E^{⊗n}`.
    pub fn seq_vector(&self, xn: &[u8]) -> StateVector {
        let n = xn.len();
        let mut out = self.states[xn[0] as usize].clone();
        for &x in &xn[1..] {
            out = out.tensor(&self.states[x as usize]);
        }
        if n > 1 {
            // interleaved (B1 E1 B2 E2 …) → grouped (B1..Bn E1..En)
            let order: Vec<usize> = (0..n)
                .map(|i| 2 * i)
                .chain((0..n).map(|i| 2 * i + 1))
                .collect();
            out = out.reorder(&order).expect("permutation is valid");
        }
        out
    }
}

/// A tripartite pure state `|ψ⟩^{ABE}` written over the computational basis
/// of `A`, carrying the cqq source it decoheres to.
#[derive(Debug, Clone)]
pub struct TripartiteState {
    vector: StateVector,
    source: CqqSource,
}

impl TripartiteState {
    /// Extracts the source from an arbitrary three-register pure state by
    /// reading off `P(x)` and `|φ_x⟩` in the computational basis of the
    /// first register. Letters of zero probability keep a placeholder
    /// conditional state.
    pub fn from_vector(vector: StateVector) -> Result<Self> {
        if vector.dims().len() != 3 {
            return Err(Error::DimensionMismatch(
                "tripartite state needs registers A, B, E".into(),
            ));
        }
        let dx = vector.dims()[0];
        let d_b = vector.dims()[1];
        let d_e = vector.dims()[2];
        let block = d_b * d_e;
        let mut probs = Vec::with_capacity(dx);
        let mut states = Vec::with_capacity(dx);
        for x in 0..dx {
            let mut amps = DVector::<C64>::zeros(block);
            let mut w = 0.0f64;
            for r in 0..block {
                let a = vector.amps()[x * block + r];
                w += a.norm_sqr();
                amps[r] = a;
            }
            probs.push(w);
            if w > 1e-14 {
                amps /= C64::new(w.sqrt(), 0.0);
                states.push(StateVector::new(
                    amps,
                    vec![d_b, d_e],
                    vec!["B".into(), "E".into()],
                )?);
            } else {
                states.push(StateVector::basis(&[d_b, d_e], &[0, 0], &["B", "E"])?);
            }
        }
        // normalise away roundoff in the extracted distribution
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidStateVector(format!(
                "tripartite vector has total weight {total}"
            )));
        }
        for p in &mut probs {
            *p /= total;
        }
        let source = CqqSource::new(probs, states)?;
        Ok(Self { vector, source })
    }

    pub fn vector(&self) -> &StateVector {
        &self.vector
    }

    pub fn source(&self) -> &CqqSource {
        &self.source
    }

    /// The decohered state `ψ̄ = Σ_x P(x)|x⟩⟨x| ⊗ φ_x^{BE}` obtained by
    /// measuring `A` in the computational basis.
    pub fn dephased(&self) -> DensityOperator {
        self.vector
            .to_density()
            .dephase_register(0)
            .expect("register A exists")
    }
}

/// A classical-quantum input ensemble `{P(x), |φ'_x⟩}` on Alice's `A'`.
#[derive(Debug, Clone)]
pub struct InputEnsemble {
    pub probs: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl InputEnsemble {
    pub fn new(probs: Vec<f64>, states: Vec<StateVector>) -> Result<Self> {
        crate::entropy::validate_distribution(&probs)?;
        if probs.len() != states.len() || states.is_empty() {
            return Err(Error::DimensionMismatch("ensemble needs one state per letter".into()));
        }
        Ok(Self { probs, states })
    }

    /// Uniform ensemble over the computational basis of a `d`-dimensional
    /// input.
    pub fn uniform_basis(d: usize) -> Result<Self> {
        let states = (0..d)
            .map(|x| StateVector::basis(&[d], &[x], &["Aprime"]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vec![1.0 / d as f64; d], states)
    }

    /// The purified input `|ψ'⟩^{AA'} = Σ_x √P(x)|x⟩|φ'_x⟩`.
    pub fn to_input_state(&self) -> Result<StateVector> {
        let dx = self.probs.len();
        let da = self.states[0].total_dim();
        let mut amps = DVector::<C64>::zeros(dx * da);
        for (x, s) in self.states.iter().enumerate() {
            let w = C64::new(self.probs[x].sqrt(), 0.0);
            for r in 0..da {
                amps[x * da + r] = w * s.amps()[r];
            }
        }
        StateVector::new(amps, vec![dx, da], vec!["A".into(), "Aprime".into()])
    }
}

/// Sends a bipartite pure input through the channel's Stinespring dilation,
/// producing `|ψ⟩^{ABE}` with `P(x)` the squared amplitudes of the `A`
/// basis and `|φ_x⟩ = V|φ'_x⟩`.
pub fn channel_to_tripartite(
    channel: &QuantumChannel,
    input: &StateVector,
) -> Result<TripartiteState> {
    if input.dims().len() != 2 {
        return Err(Error::DimensionMismatch("channel input must have registers A, A'".into()));
    }
    if input.dims()[1] != channel.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input register dim {} does not match channel input dim {}",
            input.dims()[1],
            channel.input_dim()
        )));
    }
    let v = channel.stinespring();
    let mut out = input.apply_op(&v, &[1])?;
    out.rename_register(1, "B");
    out.rename_register(2, "E");
    TripartiteState::from_vector(out)
}

/// Builds the cqq source obtained by sending an input ensemble through a
/// channel: `|φ_x⟩^{BE} = V|φ'_x⟩`.
pub fn source_through_channel(
    channel: &QuantumChannel,
    ensemble: &InputEnsemble,
) -> Result<CqqSource> {
    let v = channel.stinespring();
    let states = ensemble
        .states
        .iter()
        .map(|s| {
            let mut out = s.apply_op(&v, &[0])?;
            out.rename_register(0, "B");
            out.rename_register(1, "E");
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    CqqSource::new(ensemble.probs.clone(), states)
}

/// What a protocol is trying to produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResourceKind {
    SecretKey,
    Ebit,
}

/// `count` copies of the ideal resource: maximally correlated key bits
/// `Φ̄ = ½(|00⟩⟨00| + |11⟩⟨11|)`, or ebits `Φ₊`.
#[derive(Debug, Clone)]
pub struct TargetResource {
    pub kind: ResourceKind,
    pub count: usize,
}

impl TargetResource {
    pub fn secret_key(count: usize) -> Self {
        Self { kind: ResourceKind::SecretKey, count }
    }

    pub fn ebit(count: usize) -> Self {
        Self { kind: ResourceKind::Ebit, count }
    }

    /// The reference state on `A⊗B`: `Φ̄^{⊗count}` or `Φ₊^{⊗count}`.
    pub fn reference_state(&self) -> Result<DensityOperator> {
        if self.count == 0 {
            return Err(Error::ParameterOutOfRange("target of zero copies".into()));
        }
        let unit = match self.kind {
            ResourceKind::Ebit => bell_state(0)?.to_density(),
            ResourceKind::SecretKey => bell_state(0)?.to_density().dephase_register(0)?,
        };
        unit.tensor_pow(self.count)
    }
}

/// Shared knobs for typicality, code sizing and protocol runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Block length.
    pub n: usize,
    /// Typicality slack δ.
    pub delta: f64,
    /// Tolerance ε used when recording mass thresholds.
    pub epsilon: f64,
    /// Rate offset used in code sizes: `⌊n(I(X;B) − backoff)⌋` total bits
    /// and `⌈n(I(X;E) + backoff)⌉` randomisation bits.
    pub rate_backoff: f64,
    /// Root seed for all randomness in a run.
    pub seed: u64,
}

impl ProtocolParams {
    pub fn new(n: usize, delta: f64, epsilon: f64, rate_backoff: f64, seed: u64) -> Result<Self> {
        if n < 1 {
            return Err(Error::ParameterOutOfRange("block length must be ≥ 1".into()));
        }
        if delta <= 0.0 {
            return Err(Error::ParameterOutOfRange("delta must be > 0".into()));
        }
        if !(0.0..1.0).contains(&epsilon) || epsilon == 0.0 {
            return Err(Error::ParameterOutOfRange("epsilon must lie in (0, 1)".into()));
        }
        Ok(Self { n, delta, epsilon, rate_backoff, seed })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            n: 4,
            delta: 0.1,
            epsilon: 0.05,
            rate_backoff: 0.2,
            seed: 0,
        }
    }
}
