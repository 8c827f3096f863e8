//! Secret key generation over a channel: Alice sends the randomised code
//! ensemble `{1/M, (1/S) Σ_s φ'_{u^{ms}}}`, Bob decodes the key value with
//! the code's pretty-good measurement, Eve keeps the environment.
//!
//! The engine evaluates the classical-classical-quantum output state
//! exactly (no sampling): blockwise over Alice's key value `m` and Bob's
//! decoded value, keeping Eve's conditional operators per block.


use crate::channels::QuantumChannel;
use crate::codes::KeyGenCode;
use crate::error::Result;
use crate::qmath::{C64, ComplexOperator, DensityOperator};
use crate::source::{source_through_channel, CqqSource, InputEnsemble, ProtocolParams};

use super::{sample_code_for, store_mixed, EvalMode, ProtocolOutcome, Scenario};

/// Eve's unnormalised conditional operators per (key value, decoded value)
/// block; block traces are the joint probabilities.
pub(crate) struct CcqBlocks {
    /// `blocks[m][b]` for decoded value `b` in `0..=M` (`M` = abort).
    pub blocks: Vec<Vec<DensityOperator>>,
    pub m_count: usize,
}

/// Builds the exact ccq output for one key-generation code: for each key
/// value `m` (weight `w_m`), each codeword column `s` (conditional weight
/// `q_{s|m}`) and each measurement outcome, Eve's residual operator.
///
/// `row_weights[m][s]` are the joint `(m, s)` probabilities; they sum to 1.
pub(crate) fn ccq_blocks(
    source: &CqqSource,
    keygen: &KeyGenCode,
    row_weights: &[Vec<f64>],
) -> Result<CcqBlocks> {
    let n = keygen.n;
    let d_e_n = source.dim_e().pow(n as u32);
    let m_count = keygen.m;
    let s_count = keygen.s;
    let roots = keygen.povm.sqrt_elements()?;
    let zero = || {
        DensityOperator::from_parts_unchecked(
            nalgebra::DMatrix::<C64>::zeros(d_e_n, d_e_n),
            vec![source.dim_e(); n],
            (1..=n).map(|i| format!("E{i}")).collect(),
        )
    };
    let mut blocks: Vec<Vec<DensityOperator>> = (0..m_count)
        .map(|_| (0..=m_count).map(|_| zero()).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let b_regs: Vec<usize> = (0..n).collect();
    for m in 0..m_count {
        for s in 0..s_count {
            let w = row_weights[m][s];
            if w <= 0.0 {
                continue;
            }
            let joint = source.seq_vector(keygen.codeword(m, s)); // [B^n, E^n]
            for (c, root) in roots.iter().enumerate() {
                // decoded value: row of the outcome, abort for completion
                let decoded = if c < m_count * s_count { c / s_count } else { m_count };
                let branch = joint.apply_op(root, &b_regs)?;
                let weight = branch.norm().powi(2);
                if weight < 1e-16 {
                    continue;
                }
                let e_red = branch.reduced_density(&(n..2 * n).collect::<Vec<_>>())?;
                let target = &mut blocks[m][decoded];
                let updated = DensityOperator::from_parts_unchecked(
                    target.mat() + e_red.mat() * C64::new(w, 0.0),
                    target.dims().to_vec(),
                    target.labels().to_vec(),
                )?;
                *target = updated;
            }
        }
    }
    Ok(CcqBlocks { blocks, m_count })
}

/// `½ Σ_{m,b} ‖block(m,b) − target(m,b)‖₁` where the target places weight
/// `w_m` on the diagonal `(m, m)` block with Eve state θ. Block-diagonal
/// structure makes this the exact global trace distance.
pub(crate) fn ccq_distance_to_target(
    ccq: &CcqBlocks,
    key_weights: &[f64],
    theta: &DensityOperator,
) -> Result<f64> {
    let mut acc = 0.0;
    for (m, row) in ccq.blocks.iter().enumerate() {
        for (b, block) in row.iter().enumerate() {
            let diff = if b == m {
                block.mat() - theta.mat() * C64::new(key_weights[m], 0.0)
            } else {
                block.mat().clone()
            };
            let op = ComplexOperator::square(diff, vec![block.total_dim()])?;
            let (vals, _) = op.eig_hermitian()?;
            acc += 0.5 * vals.iter().map(|v| v.abs()).sum::<f64>();
        }
    }
    Ok(acc)
}

/// Assembles the ccq blocks into one density operator over
/// `[A(M), Bhat(M+1), E^n]`, for storage.
pub(crate) fn ccq_to_density(ccq: &CcqBlocks, d_e_n: usize) -> Result<DensityOperator> {
    let m_count = ccq.m_count;
    let b_count = m_count + 1;
    let total = m_count * b_count * d_e_n;
    let mut mat = nalgebra::DMatrix::<C64>::zeros(total, total);
    for (m, row) in ccq.blocks.iter().enumerate() {
        for (b, block) in row.iter().enumerate() {
            let base = (m * b_count + b) * d_e_n;
            for i in 0..d_e_n {
                for j in 0..d_e_n {
                    mat[(base + i, base + j)] = block.mat()[(i, j)];
                }
            }
        }
    }
    DensityOperator::from_parts_unchecked(
        mat,
        vec![m_count, b_count, d_e_n],
        vec!["A".into(), "Bhat".into(), "E".into()],
    )
}

/// Runs secret key generation over a channel with exact evaluation.
pub fn run_key_generation(
    channel: &QuantumChannel,
    ensemble: &InputEnsemble,
    params: &ProtocolParams,
) -> Result<ProtocolOutcome> {
    let n = params.n;
    let source = source_through_channel(channel, ensemble)?;
    let (sizes, keygen) = sample_code_for(&source, params)?;
    let m_count = keygen.m;
    let s_count = keygen.s;

    // uniform (m, s) ensemble
    let row_weights = vec![vec![1.0 / (m_count * s_count) as f64; s_count]; m_count];
    let key_weights = vec![1.0 / m_count as f64; m_count];
    let ccq = ccq_blocks(&source, &keygen, &row_weights)?;

    // Eve's per-key states and the operational θ
    let mut theta_rows = Vec::with_capacity(m_count);
    for m in 0..m_count {
        theta_rows.push(keygen.eve_row_state(&source, m)?);
    }
    let theta = DensityOperator::mixture(&key_weights, &theta_rows)?;
    let mut eve_decoupling = 0.0f64;
    for row in &theta_rows {
        eve_decoupling = eve_decoupling.max(crate::qmath::trace_distance(row, &theta)?);
    }

    let agreement = keygen.key_agreement_probability(&source)?;
    let distance = ccq_distance_to_target(&ccq, &key_weights, &theta)?;
    // abort mass: completion-outcome weight
    let abort: f64 = ccq
        .blocks
        .iter()
        .map(|row| row[m_count].trace().re)
        .sum();

    let d_e_n = source.dim_e().pow(n as u32);
    let mut outcome = ProtocolOutcome::base(Scenario::KeyGeneration, n, params.seed);
    outcome.key_bits = sizes.m_bits;
    outcome.rate_bits = sizes.m_bits as f64 / n as f64;
    outcome.distance_to_target = distance;
    outcome.fidelity_to_target = 1.0 - distance; // lower bound for cq states
    outcome.eve_decoupling = eve_decoupling;
    outcome.avg_success = agreement;
    outcome.leakage = keygen.max_row_leakage;
    outcome.abort_mass = abort;
    outcome.mode = EvalMode::Exact;
    outcome.m = m_count;
    outcome.s = s_count;
    outcome.final_state = store_mixed(ccq_to_density(&ccq, d_e_n)?);
    Ok(outcome)
}

/// Straight-line re-simulation used as an independent oracle in tests:
/// recomputes the agreement probability from Kraus-sum density evolution
/// (no Stinespring vectors, no shared POVM paths beyond the given one).
#[cfg(test)]
pub(crate) fn straight_line_agreement(
    channel: &QuantumChannel,
    ensemble: &InputEnsemble,
    keygen: &KeyGenCode,
) -> Result<f64> {
    let n = keygen.n;
    let mut acc = 0.0;
    for m in 0..keygen.m {
        for s in 0..keygen.s {
            let seq = keygen.codeword(m, s);
            // Bob's state: ⊗_i N(φ'_{x_i}) via Kraus sums
            let mut rho: Option<DensityOperator> = None;
            for &x in seq {
                let letter = channel.apply(&ensemble.states[x as usize].to_density())?;
                rho = Some(match rho {
                    None => letter,
                    Some(r) => r.tensor(&letter),
                });
            }
            let rho = rho.expect("nonempty sequence");
            let mut row_prob = 0.0;
            for s2 in 0..keygen.s {
                row_prob += rho
                    .expectation(&keygen.povm.elements()[m * keygen.s + s2])?
                    .re;
            }
            acc += row_prob / (keygen.m * keygen.s) as f64;
        }
    }
    Ok(acc)
}
