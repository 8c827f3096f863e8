//! End-to-end protocol engines for the four resource-conversion scenarios
//! plus the entanglement-transmission variant.
//!
//! Every engine is seed-deterministic: identical inputs and seed give a
//! bit-identical [`ProtocolOutcome`]. Randomness streams are fixed per
//! purpose (stream 0: code/covering sampling; streams 2+i: Monte-Carlo
//! trial `i`), so adding trials never perturbs the code draw.
//!
//! Classical communication is forward-only (Alice → Bob) in all engines;
//! `backward_bits` exists in the outcome to make that contract checkable.

mod generation;
mod keydist;
mod keygen;

pub mod distillation;

pub use distillation::{run_entanglement_distillation, EntDistEngine};
pub use generation::{
    run_entanglement_generation, run_entanglement_generation_opts, run_entanglement_transmission,
};
pub use keydist::run_key_distillation;
pub use keygen::run_key_generation;

use nalgebra::{DMatrix, DVector};

use crate::codes::{KeyGenCode, Povm};
use crate::error::{Error, Result};
use crate::qmath::{C64, ComplexOperator, DensityOperator, StateVector, UhlmannAligner, purify, trace_distance};
use crate::source::CqqSource;

/// Dimension cap for the global pure states the coherent engines build.
pub const MAX_PURE_DIM: usize = 1 << 21;

/// Final states above this size are dropped from the outcome rather than
/// stored.
const MAX_STORED_STATE: usize = 1 << 16;

/// RNG stream used for code and covering sampling.
pub(crate) const STREAM_CODE: u64 = 0;
/// First RNG stream used for Monte-Carlo trials (trial `i` uses `2 + i`).
pub(crate) const STREAM_TRIALS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    KeyGeneration,
    KeyDistillation,
    EntanglementGeneration,
    EntanglementDistillation,
    EntanglementTransmission,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::KeyGeneration => "keygen",
            Scenario::KeyDistillation => "keydist",
            Scenario::EntanglementGeneration => "entgen",
            Scenario::EntanglementDistillation => "entdist",
            Scenario::EntanglementTransmission => "enttrans",
        }
    }
}

/// How the outcome metrics were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Full coherent state / exact ensemble aggregation.
    Exact,
    /// Monte-Carlo sampling over protocol branches.
    MonteCarlo,
}

/// The surviving global state of a protocol run, when small enough to keep.
#[derive(Debug, Clone)]
pub enum FinalState {
    Pure(StateVector),
    Mixed(DensityOperator),
}

/// Figures of merit of one protocol run.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    /// log₂ of the key size (key bits, or ebits for the quantum scenarios).
    pub key_bits: u32,
    /// `key_bits / n`.
    pub rate_bits: f64,
    /// Trace distance of the protocol output to its ideal target
    /// (including any abort mass).
    pub distance_to_target: f64,
    /// Fidelity with the ideal target.
    pub fidelity_to_target: f64,
    /// For the coherent scenarios: metrics of the `(A, B)` key-register
    /// reduction against the maximally entangled target.
    pub ab_distance: Option<f64>,
    pub ab_fidelity: Option<f64>,
    /// Worst-case (over key values) trace distance between Eve's
    /// conditional state and her average state.
    pub eve_decoupling: f64,
    /// Bob's decoding success probability (exact).
    pub avg_success: f64,
    /// Largest privacy-amplification row leakage among the codes used.
    pub leakage: f64,
    /// Classical bits Alice sends to Bob.
    pub forward_bits: u32,
    /// Always zero: the protocols are one-way.
    pub backward_bits: u32,
    /// Probability mass of aborted branches (atypical measurement results,
    /// instrument failure, uncovered tail).
    pub abort_mass: f64,
    pub mode: EvalMode,
    /// Monte-Carlo trial count (0 in exact mode).
    pub trials: u32,
    /// Monte-Carlo agreement rate over non-aborted trials, when sampled.
    pub mc_agreement: Option<f64>,
    /// Monte-Carlo abort fraction, when sampled.
    pub mc_abort: Option<f64>,
    /// `n · I(A;E)` of the input state — the alternative "which code" cost
    /// accounting mentioned for distillation; informational only.
    pub info_ae_bits: Option<f64>,
    /// Code table height / width / count actually used.
    pub m: usize,
    pub s: usize,
    pub l: usize,
    pub final_state: Option<FinalState>,
}

impl ProtocolOutcome {
    fn base(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            seed,
            key_bits: 0,
            rate_bits: 0.0,
            distance_to_target: 0.0,
            fidelity_to_target: 0.0,
            ab_distance: None,
            ab_fidelity: None,
            eve_decoupling: 0.0,
            avg_success: 0.0,
            leakage: 0.0,
            forward_bits: 0,
            backward_bits: 0,
            abort_mass: 0.0,
            mode: EvalMode::Exact,
            trials: 0,
            mc_agreement: None,
            mc_abort: None,
            info_ae_bits: None,
            m: 1,
            s: 1,
            l: 0,
            final_state: None,
        }
    }
}

fn store_state(state: StateVector) -> Option<FinalState> {
    (state.total_dim() <= MAX_STORED_STATE).then_some(FinalState::Pure(state))
}

fn store_mixed(rho: DensityOperator) -> Option<FinalState> {
    (rho.total_dim() <= MAX_STORED_STATE).then_some(FinalState::Mixed(rho))
}

/// The coherent version of a POVM: the isometry
/// `V |ψ⟩ = Σ_c |c⟩ ⊗ (√E_c |ψ⟩)`, outcome register first, completion
/// outcome last. `V†V = Σ_c E_c + (𝟙 − Σ E_c) = 𝟙` exactly.
pub fn coherent_measurement(povm: &Povm) -> Result<ComplexOperator> {
    let d = povm.dim();
    let outcomes = povm.num_outcomes() + 1;
    let roots = povm.sqrt_elements()?;
    let mut v = DMatrix::<C64>::zeros(outcomes * d, d);
    for (c, root) in roots.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                v[(c * d + i, j)] = root.mat()[(i, j)];
            }
        }
    }
    let mut row_dims = vec![outcomes];
    row_dims.extend_from_slice(povm.row_dims());
    ComplexOperator::new(v, row_dims, povm.row_dims().to_vec())
}

/// Isometry splitting a fused outcome register of dimension `M·S + 1` into
/// a key register (dim `M + 1`, failure mapped to value `M`) and a
/// randomisation register (dim `S`).
pub fn outcome_split_isometry(m: usize, s: usize) -> ComplexOperator {
    let fused = m * s + 1;
    let mut mat = DMatrix::<C64>::zeros((m + 1) * s, fused);
    for c in 0..m * s {
        let (mi, si) = (c / s, c % s);
        mat[(mi * s + si, c)] = C64::new(1.0, 0.0);
    }
    mat[(m * s, m * s)] = C64::new(1.0, 0.0); // failure → (M, 0)
    ComplexOperator::new(mat, vec![m + 1, s], vec![fused]).expect("consistent shape")
}

/// Fourier measurement basis on the randomisation register: column `k`
/// holds `|t̂⟩ = (1/√S) Σ_s e^{2πi·s·t/S} |s⟩` with `t = k + 1` and the
/// `s`-phases 1-based, matching the rotated-code convention.
pub fn fourier_basis(s: usize) -> ComplexOperator {
    let mut mat = DMatrix::<C64>::zeros(s, s);
    for k in 0..s {
        let t = k + 1;
        for si in 0..s {
            let arg = 2.0 * std::f64::consts::PI * ((si + 1) * t) as f64 / s as f64;
            mat[(si, k)] = C64::new(arg.cos(), arg.sin()) / C64::new((s as f64).sqrt(), 0.0);
        }
    }
    ComplexOperator::square(mat, vec![s]).expect("square")
}

/// Bob's phase correction after learning the Fourier outcome `t`, applied
/// on the fused outcome register: `|m's'⟩ ↦ e^{2πi·s'·t/S}|m's'⟩` (1-based
/// `s'`), identity on the failure outcome.
pub fn phase_correction_on_fused(m: usize, s: usize, t: usize) -> ComplexOperator {
    let fused = m * s + 1;
    let mut mat = DMatrix::<C64>::zeros(fused, fused);
    for c in 0..m * s {
        let si = c % s;
        let arg = 2.0 * std::f64::consts::PI * ((si + 1) * t) as f64 / s as f64;
        mat[(c, c)] = C64::new(arg.cos(), arg.sin());
    }
    mat[(m * s, m * s)] = C64::new(1.0, 0.0);
    ComplexOperator::square(mat, vec![fused]).expect("square")
}

/// The residual state Bob holds for key value `m` after an ideal coherent
/// measurement: `|φ̃_m⟩ ∝ Σ_s w_s |s⟩ ⊗ |φ_{u^{ms}}⟩^{B^n E^n}`, with
/// uniform weights for generation and `w_s = √P^n(u^{ms})` for
/// distillation. Registers: `Bs`, `B₁…B_n`, `E₁…E_n`.
pub(crate) fn row_residual_state(
    source: &CqqSource,
    row: &[Vec<u8>],
    weighted: bool,
) -> Result<StateVector> {
    let s_count = row.len();
    let n = row[0].len();
    let block = source.dim_b().pow(n as u32) * source.dim_e().pow(n as u32);
    let mut amps = DVector::<C64>::zeros(s_count * block);
    for (si, seq) in row.iter().enumerate() {
        let v = source.seq_vector(seq);
        let w = if weighted {
            source.seq_prob(seq).sqrt()
        } else {
            1.0
        };
        for r in 0..block {
            amps[si * block + r] = C64::new(w, 0.0) * v.amps()[r];
        }
    }
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-14 {
        return Err(Error::Numerical("residual row state has zero norm".into()));
    }
    amps /= C64::new(norm, 0.0);
    let mut dims = vec![s_count];
    dims.extend(std::iter::repeat(source.dim_b()).take(n));
    dims.extend(std::iter::repeat(source.dim_e()).take(n));
    let mut labels = vec!["Bs".to_string()];
    labels.extend((1..=n).map(|i| format!("B{i}")));
    labels.extend((1..=n).map(|i| format!("E{i}")));
    StateVector::from_parts_unchecked(amps, dims, labels)
}

/// Everything needed for the Uhlmann decoupling step of one code: Eve's
/// operational average state `θ = (1/M) Σ_m φ̃_m^E`, its canonical
/// purification matricised over the `(Bs, B^n)` part, and one thin aligner
/// per key value.
pub(crate) struct DecoupleKit {
    pub theta: DensityOperator,
    /// Matricisation of the embedded `|φ_θ⟩` as `P × Q` (`P = S·d_B^n`
    /// columns host the purification reference).
    pub phi_theta_mat: DMatrix<C64>,
    pub aligners: Vec<UhlmannAligner>,
    /// `Σσ` overlap per key value (√fidelity of `φ̃_m^E` with θ).
    pub overlaps: Vec<f64>,
}

/// Matricises a residual-row state as `(Bs, B^n) × E^n`.
fn matricize_residual(state: &StateVector, s_count: usize, n: usize, d_b: usize, d_e: usize) -> DMatrix<C64> {
    let p = s_count * d_b.pow(n as u32);
    let q = d_e.pow(n as u32);
    let mut m = DMatrix::<C64>::zeros(p, q);
    for (flat, amp) in state.amps().iter().enumerate() {
        m[(flat / q, flat % q)] = *amp;
    }
    m
}

pub(crate) fn build_decouple_kit(
    source: &CqqSource,
    rows: &[Vec<Vec<u8>>],
    weighted: bool,
) -> Result<DecoupleKit> {
    let m_count = rows.len();
    let s_count = rows[0].len();
    let n = rows[0][0].len();
    let d_b = source.dim_b();
    let d_e = source.dim_e();
    let residuals: Vec<StateVector> = rows
        .iter()
        .map(|row| row_residual_state(source, row, weighted))
        .collect::<Result<_>>()?;
    let n_regs = residuals[0].dims().len();
    let e_regs: Vec<usize> = (1 + n..n_regs).collect();
    let eve_states: Vec<DensityOperator> = residuals
        .iter()
        .map(|r| r.reduced_density(&e_regs))
        .collect::<Result<_>>()?;
    let theta = DensityOperator::mixture(&vec![1.0 / m_count as f64; m_count], &eve_states)?;
    // canonical purification, embedded into the (Bs, B^n) part: reference
    // index i maps to the i-th composite basis vector
    let phi_theta = purify(&theta)?;
    let rank = *phi_theta.dims().last().expect("reference register");
    let p = s_count * d_b.pow(n as u32);
    let q = d_e.pow(n as u32);
    if rank > p {
        return Err(Error::TooLarge(
            "purification rank exceeds the decoupling register".into(),
        ));
    }
    let mut phi_theta_mat = DMatrix::<C64>::zeros(p, q);
    for (flat, amp) in phi_theta.amps().iter().enumerate() {
        // purification layout: E-composite major, reference minor
        let e_idx = flat / rank;
        let r_idx = flat % rank;
        phi_theta_mat[(r_idx, e_idx)] = *amp;
    }
    let mut aligners = Vec::with_capacity(m_count);
    let mut overlaps = Vec::with_capacity(m_count);
    for residual in &residuals {
        let a_mat = matricize_residual(residual, s_count, n, d_b, d_e);
        let aligner = UhlmannAligner::from_matricized(&a_mat, &phi_theta_mat)?;
        overlaps.push(aligner.overlap());
        aligners.push(aligner);
    }
    Ok(DecoupleKit {
        theta,
        phi_theta_mat,
        aligners,
        overlaps,
    })
}

/// Applies the controlled decoupling unitary `Σ_m |m⟩⟨m| ⊗ V_m` (identity
/// on the failure value) to a state with register layout
/// `[…, Bm, Bs, B₁…B_n, E₁…E_n]` where `Bm` is at `control_reg` and the
/// `V_m` act on `(Bs, B^n)`.
pub(crate) fn apply_controlled_alignment(
    state: &StateVector,
    control_reg: usize,
    kit: &DecoupleKit,
) -> Result<StateVector> {
    let dims = state.dims().to_vec();
    let k = dims.len();
    let m_plus = dims[control_reg];
    let m_count = kit.aligners.len();
    if m_plus < m_count {
        return Err(Error::DimensionMismatch("control register too small".into()));
    }
    // P = all registers between control and the E block; Q = trailing E^n.
    // Identify the split from the aligner's input length.
    let p_len = kit.phi_theta_mat.nrows();
    let mut p_regs = Vec::new();
    let mut acc = 1usize;
    let mut idx = control_reg + 1;
    while acc < p_len {
        if idx >= k {
            return Err(Error::DimensionMismatch("cannot locate decoupling registers".into()));
        }
        acc *= dims[idx];
        p_regs.push(idx);
        idx += 1;
    }
    if acc != p_len {
        return Err(Error::DimensionMismatch("register split does not match aligner".into()));
    }
    let q_len: usize = dims[idx..].iter().product();
    let prefix_len: usize = dims[..control_reg].iter().product();
    let total = state.total_dim();
    debug_assert_eq!(prefix_len * m_plus * p_len * q_len, total);

    let mut amps = state.amps().clone();
    let mut x = DVector::<C64>::zeros(p_len);
    for pre in 0..prefix_len {
        for mv in 0..m_count.min(m_plus) {
            let base = (pre * m_plus + mv) * p_len * q_len;
            for qv in 0..q_len {
                for pv in 0..p_len {
                    x[pv] = amps[base + pv * q_len + qv];
                }
                let y = kit.aligners[mv].apply(&x)?;
                for pv in 0..p_len {
                    amps[base + pv * q_len + qv] = y[pv];
                }
            }
        }
    }
    StateVector::from_parts_unchecked(amps, dims, state.labels().to_vec())
}

/// The target of the coherent scenarios after decoupling:
/// `(1/√M) Σ_m |m⟩^{A} |m⟩^{Bm} ⊗ |φ_θ⟩` over the layout
/// `[A(M), Bm(M+1), Bs·B^n (embedding φ_θ's reference), E^n]`.
pub(crate) fn coherent_target_state(
    m_count: usize,
    kit: &DecoupleKit,
    dims_tail: &[usize],
) -> Result<StateVector> {
    let p_len = kit.phi_theta_mat.nrows();
    let q_len = kit.phi_theta_mat.ncols();
    let m_plus = m_count + 1;
    let total = m_count * m_plus * p_len * q_len;
    let mut amps = DVector::<C64>::zeros(total);
    let w = C64::new(1.0 / (m_count as f64).sqrt(), 0.0);
    for mv in 0..m_count {
        let base = (mv * m_plus + mv) * p_len * q_len;
        for pv in 0..p_len {
            for qv in 0..q_len {
                amps[base + pv * q_len + qv] = w * kit.phi_theta_mat[(pv, qv)];
            }
        }
    }
    let mut dims = vec![m_count, m_plus];
    dims.extend_from_slice(dims_tail);
    let mut labels = vec!["A".to_string(), "Bm".to_string()];
    labels.extend((0..dims_tail.len()).map(|i| format!("T{i}")));
    StateVector::from_parts_unchecked(amps, dims, labels)
}

/// Trace distance and fidelity of two pure states, computed from the
/// projection residual `r = ψ − t⟨t|ψ⟩`: `D = ‖r‖` and `F = 1 − ‖r‖²`
/// exactly. Stable when the states nearly coincide, where forming
/// `√(1 − |⟨t|ψ⟩|²)` would amplify roundoff to `√ε`.
pub(crate) fn pure_state_metrics(target: &StateVector, state: &StateVector) -> Result<(f64, f64)> {
    let o = target.inner(state)?;
    let mut residual_sq = 0.0f64;
    for (t_amp, s_amp) in target.amps().iter().zip(state.amps().iter()) {
        residual_sq += (s_amp - o * t_amp).norm_sqr();
    }
    let distance = residual_sq.sqrt().min(1.0);
    let fidelity = (1.0 - residual_sq).clamp(0.0, 1.0);
    Ok((distance, fidelity))
}

/// Probability that the two leading registers agree (key value matches the
/// decoded value), `Σ_m Σ_rest |ψ[(m, m, rest)]|²`.
pub(crate) fn match_probability(state: &StateVector, a_reg: usize, b_reg: usize) -> f64 {
    let dims = state.dims();
    let strides = crate::qmath::strides(dims);
    let m_count = dims[a_reg].min(dims[b_reg]);
    let mut acc = 0.0;
    for (flat, amp) in state.amps().iter().enumerate() {
        let av = (flat / strides[a_reg]) % dims[a_reg];
        let bv = (flat / strides[b_reg]) % dims[b_reg];
        if av == bv && av < m_count {
            acc += amp.norm_sqr();
        }
    }
    acc
}

/// Worst-case over key values of the distance between Eve's conditional
/// state (given `A = m` on `a_reg`) and the average of those conditionals.
pub(crate) fn eve_decoupling_of_state(
    state: &StateVector,
    a_reg: usize,
    e_regs: &[usize],
    m_count: usize,
) -> Result<f64> {
    let mut conditionals = Vec::with_capacity(m_count);
    for mv in 0..m_count {
        let (p, post) = state.project_register(a_reg, mv)?;
        match post {
            Some(post) => {
                // E registers shifted down by one if they sat after a_reg
                let shifted: Vec<usize> = e_regs
                    .iter()
                    .map(|&r| if r > a_reg { r - 1 } else { r })
                    .collect();
                conditionals.push((p, post.reduced_density(&shifted)?));
            }
            None => continue,
        }
    }
    if conditionals.len() < 2 {
        return Ok(0.0);
    }
    let total_p: f64 = conditionals.iter().map(|(p, _)| p).sum();
    let weights: Vec<f64> = conditionals.iter().map(|(p, _)| p / total_p).collect();
    let states: Vec<DensityOperator> = conditionals.into_iter().map(|(_, s)| s).collect();
    let avg = DensityOperator::mixture(&weights, &states)?;
    let mut worst = 0.0f64;
    for st in &states {
        worst = worst.max(trace_distance(st, &avg)?);
    }
    Ok(worst)
}

/// Checks the global pure-state dimension budget.
pub(crate) fn check_pure_dim(dim: usize, what: &str) -> Result<()> {
    if dim > MAX_PURE_DIM {
        return Err(Error::TooLarge(format!(
            "{what} needs a pure state of dimension {dim} > {MAX_PURE_DIM}"
        )));
    }
    Ok(())
}

/// `⌈log₂ x⌉` for communication accounting.
pub(crate) fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as u32
    }
}

/// Shared keygen-code construction for the channel scenarios.
pub(crate) fn sample_code_for(
    source: &CqqSource,
    params: &crate::source::ProtocolParams,
) -> Result<(crate::codes::CodeSizes, KeyGenCode)> {
    let sizes = crate::codes::derive_code_sizes(source, params.n, params.delta, params.rate_backoff)?;
    let mut rng = crate::rng::stream_rng(params.seed, STREAM_CODE);
    let code = crate::codes::build_keygen_code(
        source,
        params.n,
        params.delta,
        sizes.m,
        sizes.s,
        &mut rng,
    )?;
    Ok((sizes, code))
}
