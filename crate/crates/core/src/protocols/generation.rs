//! Entanglement generation over a channel, and the entanglement
//! transmission variant.

use nalgebra::{DMatrix, DVector};

use crate::codes::{quantum_code_from, KeyGenCode, QuantumCode};
use crate::channels::QuantumChannel;
use crate::error::{Error, Result};
use crate::qmath::{C64, ComplexOperator, DensityOperator, StateVector, purify, trace_distance};
use crate::source::{source_through_channel, CqqSource, InputEnsemble, ProtocolParams};

use super::{
    apply_controlled_alignment, build_decouple_kit, check_pure_dim, coherent_measurement,
    coherent_target_state, eve_decoupling_of_state, match_probability, outcome_split_isometry,
    sample_code_for, store_state, DecoupleKit, EvalMode, ProtocolOutcome, Scenario,
};

/// Sends a register through the channel dilation for every block position
/// and regroups to `[front…, B₁…B_n, E₁…E_n]`. The `n` input registers must
/// sit directly after `front_regs` leading registers.
fn dilate_block(
    state: StateVector,
    channel: &QuantumChannel,
    front_regs: usize,
    n: usize,
) -> Result<StateVector> {
    let v = channel.stinespring();
    let mut out = state;
    for i in 0..n {
        // the i-th input register sits at front + 2i after i dilations
        out = out.apply_op(&v, &[front_regs + 2 * i])?;
    }
    // [front…, B1, E1, B2, E2, …] → [front…, B…, E…]
    let mut order: Vec<usize> = (0..front_regs).collect();
    order.extend((0..n).map(|i| front_regs + 2 * i));
    order.extend((0..n).map(|i| front_regs + 2 * i + 1));
    let mut out = out.reorder(&order)?;
    for i in 0..n {
        out.rename_register(front_regs + i, &format!("B{}", i + 1));
        out.rename_register(front_regs + n + i, &format!("E{}", i + 1));
    }
    Ok(out)
}

/// Runs Bob's side of the coherent protocols: coherent measurement, the
/// outcome-register split, and (optionally) the controlled Uhlmann
/// decoupling. Expects layout `[Ref, B₁…B_n, E₁…E_n]` and returns
/// `[Ref, Bm, Bs, B₁…B_n, E₁…E_n]`.
fn decode_coherently(
    state: StateVector,
    keygen: &KeyGenCode,
    kit: &DecoupleKit,
    decouple: bool,
) -> Result<StateVector> {
    let n = keygen.n;
    let b_regs: Vec<usize> = (1..=n).collect();
    let cm = coherent_measurement(&keygen.povm)?;
    check_pure_dim(state.total_dim() * (keygen.m * keygen.s + 1), "coherent measurement")?;
    let mut state = state.apply_op(&cm, &b_regs)?;
    state.rename_register(1, "Bc");
    let split = outcome_split_isometry(keygen.m, keygen.s);
    let mut state = state.apply_op(&split, &[1])?;
    state.rename_register(1, "Bm");
    state.rename_register(2, "Bs");
    if decouple {
        state = apply_controlled_alignment(&state, 1, kit)?;
    }
    Ok(state)
}

/// Entanglement generation with the decoupling step included.
pub fn run_entanglement_generation(
    channel: &QuantumChannel,
    ensemble: &InputEnsemble,
    params: &ProtocolParams,
) -> Result<ProtocolOutcome> {
    run_entanglement_generation_opts(channel, ensemble, params, true)
}

/// Entanglement generation; `decouple = false` replaces the controlled
/// Uhlmann unitary by the identity (the ablation used to check that the
/// decoupling step earns its keep).
pub fn run_entanglement_generation_opts(
    channel: &QuantumChannel,
    ensemble: &InputEnsemble,
    params: &ProtocolParams,
    decouple: bool,
) -> Result<ProtocolOutcome> {
    let n = params.n;
    let source = source_through_channel(channel, ensemble)?;
    let (sizes, keygen) = sample_code_for(&source, params)?;
    let qcode = quantum_code_from(&keygen, &ensemble.states)?;

    // Alice prepares (1/√M) Σ_m |m⟩ ⊗ |φ_m⟩ on [A, A'₁…A'_n]
    let state = code_superposition(&qcode, "A")?;
    check_pure_dim(
        state.total_dim() * channel.env_dim().pow(n as u32),
        "channel dilation",
    )?;
    let state = dilate_block(state, channel, 1, n)?;

    let kit = build_decouple_kit(&source, &keygen.rows, false)?;
    let state = decode_coherently(state, &keygen, &kit, decouple)?;

    let mut outcome = finish_coherent(
        Scenario::EntanglementGeneration,
        state,
        &source,
        &keygen,
        &kit,
        params,
    )?;
    outcome.key_bits = sizes.m_bits;
    outcome.rate_bits = sizes.m_bits as f64 / n as f64;
    Ok(outcome)
}

/// Builds `(1/√M) Σ_m |m⟩ ⊗ |φ_m⟩` with the code vectors' registers after
/// the new front register.
fn code_superposition(qcode: &QuantumCode, front_label: &str) -> Result<StateVector> {
    let m_count = qcode.len();
    let block = qcode.vectors[0].total_dim();
    let mut amps = DVector::<C64>::zeros(m_count * block);
    let w = C64::new(1.0 / (m_count as f64).sqrt(), 0.0);
    for (m, v) in qcode.vectors.iter().enumerate() {
        for r in 0..block {
            amps[m * block + r] = w * v.amps()[r];
        }
    }
    let mut dims = vec![m_count];
    dims.extend_from_slice(qcode.vectors[0].dims());
    let mut labels = vec![front_label.to_string()];
    labels.extend(qcode.vectors[0].labels().iter().cloned());
    StateVector::new(amps, dims, labels)
}

/// Shared tail of the coherent engines: global metrics against
/// `Φ_M ⊗ φ_θ`, the `(Ref, Bm)` reduction metrics, Eve decoupling, and the
/// outcome assembly.
fn finish_coherent(
    scenario: Scenario,
    state: StateVector,
    _source: &CqqSource,
    keygen: &KeyGenCode,
    kit: &DecoupleKit,
    params: &ProtocolParams,
) -> Result<ProtocolOutcome> {
    let n = keygen.n;
    let m_count = keygen.m;
    // layout: [Ref, Bm, Bs, B₁…B_n, E₁…E_n]
    let tail_dims: Vec<usize> = state.dims()[2..].to_vec();
    let target = coherent_target_state(m_count, kit, &tail_dims)?;
    let (distance_to_target, fidelity_to_target) = super::pure_state_metrics(&target, &state)?;

    let rho_ab = state.reduced_density(&[0, 1])?;
    let phi_m = embedded_max_entangled(m_count, state.dims()[1])?;
    let ab_fidelity = rho_ab.expectation(&phi_m.to_density().as_operator())?.re;
    let ab_distance = trace_distance(&rho_ab, &phi_m.to_density())?;

    let e_regs: Vec<usize> = (3 + n..3 + 2 * n).collect();
    let eve_decoupling = eve_decoupling_of_state(&state, 0, &e_regs, m_count)?;
    let avg_success = match_probability(&state, 0, 1);

    let mut outcome = ProtocolOutcome::base(scenario, n, params.seed);
    outcome.distance_to_target = distance_to_target;
    outcome.fidelity_to_target = fidelity_to_target;
    outcome.ab_distance = Some(ab_distance);
    outcome.ab_fidelity = Some(ab_fidelity.min(1.0));
    outcome.eve_decoupling = eve_decoupling;
    outcome.avg_success = avg_success;
    outcome.leakage = keygen.max_row_leakage;
    outcome.mode = EvalMode::Exact;
    outcome.m = keygen.m;
    outcome.s = keygen.s;
    outcome.final_state = store_state(state);
    Ok(outcome)
}

/// `(1/√M) Σ_m |m, m⟩` on registers of dimension `(M, bm_dim)` with
/// `bm_dim ≥ M` (the decoded register carries an extra failure value).
fn embedded_max_entangled(m_count: usize, bm_dim: usize) -> Result<StateVector> {
    let mut amps = DVector::<C64>::zeros(m_count * bm_dim);
    let w = C64::new(1.0 / (m_count as f64).sqrt(), 0.0);
    for m in 0..m_count {
        amps[m * bm_dim + m] = w;
    }
    StateVector::new(
        amps,
        vec![m_count, bm_dim],
        vec!["A".into(), "Bm".into()],
    )
}

/// Entanglement transmission: Alice encodes a message state through the
/// quantum code of `keygen` (orthonormalised via the Gram inverse square
/// root when needed), sends it through the channel, and Bob applies the
/// generation-protocol decoder. Reports entanglement fidelity with a
/// reference purification of the message.
pub fn run_entanglement_transmission(
    channel: &QuantumChannel,
    ensemble: &InputEnsemble,
    keygen: &KeyGenCode,
    message: &DensityOperator,
    params: &ProtocolParams,
) -> Result<ProtocolOutcome> {
    let n = keygen.n;
    let m_count = keygen.m;
    if message.total_dim() != m_count {
        return Err(Error::DimensionMismatch(format!(
            "message dimension {} does not match code size {m_count}",
            message.total_dim()
        )));
    }
    let source = source_through_channel(channel, ensemble)?;
    let qcode = quantum_code_from(keygen, &ensemble.states)?;
    let encoder = code_encoder(&qcode)?;

    // purify the message: [Msg, R]
    let purified = purify(message)?;
    let ref_dim = purified.dims()[1];
    check_pure_dim(
        ref_dim * encoder.nrows() * channel.env_dim().pow(n as u32),
        "transmission",
    )?;
    // encode Msg → A'^{⊗n}, then bring the reference to the front
    let encoded = purified.apply_op(&encoder, &[0])?;
    let k = encoded.dims().len();
    let mut order = vec![k - 1];
    order.extend(0..k - 1);
    let mut state = encoded.reorder(&order)?;
    state.rename_register(0, "Ref");

    let state = dilate_block(state, channel, 1, n)?;
    let kit = build_decouple_kit(&source, &keygen.rows, false)?;
    let state = decode_coherently(state, keygen, &kit, true)?;

    // entanglement fidelity against the message purification, with the
    // message register transported to Bob's decoded register
    let rho = state.reduced_density(&[0, 1])?; // [Ref, Bm]
    let bm_dim = state.dims()[1];
    let mut target_amps = DVector::<C64>::zeros(ref_dim * bm_dim);
    for m in 0..m_count {
        for i in 0..ref_dim {
            target_amps[i * bm_dim + m] = purified.amps()[m * ref_dim + i];
        }
    }
    let target = StateVector::new(
        target_amps,
        vec![ref_dim, bm_dim],
        vec!["Ref".into(), "Bm".into()],
    )?;
    let fidelity = rho.expectation(&target.to_density().as_operator())?.re.min(1.0);
    let distance = trace_distance(&rho, &target.to_density())?;

    let e_regs: Vec<usize> = (3 + n..3 + 2 * n).collect();
    let eve_decoupling = eve_decoupling_of_state(&state, 1, &e_regs, m_count)?;

    let mut outcome = ProtocolOutcome::base(Scenario::EntanglementTransmission, n, params.seed);
    outcome.key_bits = (m_count as f64).log2().round() as u32;
    outcome.rate_bits = outcome.key_bits as f64 / n as f64;
    outcome.distance_to_target = distance;
    outcome.fidelity_to_target = fidelity;
    outcome.ab_fidelity = Some(fidelity);
    outcome.ab_distance = Some(distance);
    outcome.eve_decoupling = eve_decoupling;
    outcome.avg_success = match_probability(&state, 0, 1);
    outcome.leakage = keygen.max_row_leakage;
    outcome.m = keygen.m;
    outcome.s = keygen.s;
    outcome.final_state = store_state(state);
    Ok(outcome)
}

/// `Σ_m |φ_m⟩⟨m|`, orthonormalised by `G^{−1/2}` when the Gram matrix
/// deviates from the identity. Errors when the Gram matrix is too singular
/// (condition number above 1e6).
fn code_encoder(qcode: &QuantumCode) -> Result<ComplexOperator> {
    let m_count = qcode.len();
    let dim = qcode.vectors[0].total_dim();
    let mut phi = DMatrix::<C64>::zeros(dim, m_count);
    for (m, v) in qcode.vectors.iter().enumerate() {
        phi.set_column(m, v.amps());
    }
    let gram = qcode.gram()?;
    let defect = gram
        .sub(&ComplexOperator::identity(&[m_count]))?
        .max_abs_entry();
    let encoder = if defect < 1e-10 {
        phi
    } else {
        let (vals, _) = gram.eig_hermitian()?;
        let max = vals.first().copied().unwrap_or(1.0);
        let min = vals.last().copied().unwrap_or(0.0);
        if min <= 0.0 || max / min > 1e6 {
            return Err(Error::Numerical(format!(
                "code Gram matrix too singular to orthonormalise (cond {:.3e})",
                if min > 0.0 { max / min } else { f64::INFINITY }
            )));
        }
        &phi * gram.inv_sqrt_on_support()?.mat()
    };
    ComplexOperator::new(
        encoder,
        qcode.vectors[0].dims().to_vec(),
        vec![m_count],
    )
}
