//! Secret key distillation from shared states: Alice measures her half of
//! `ψ^{⊗n}` in the source basis, announces which key-generation code of a
//! covering her outcome fell into (`⌈log₂ L⌉` forward bits), and Bob
//! decodes the key value with that code's measurement.
//!
//! Exact per-outcome aggregates come from enumerating the covering; a
//! Monte-Carlo pass over Alice's measurement and Bob's decoder is layered
//! on top so sampled statistics can be compared against the exact values.

use std::collections::HashMap;

use crate::codes::{build_covering, derive_code_sizes, CodeCovering};
use crate::error::Result;
use crate::qmath::trace_distance;
use crate::rng::{sample_index, stream_rng};
use crate::source::{CqqSource, ProtocolParams};

use super::keygen::{ccq_blocks, ccq_distance_to_target};
use super::{ceil_log2, EvalMode, ProtocolOutcome, Scenario, STREAM_CODE, STREAM_TRIALS};

/// Exact per-code aggregation of the distillation output.
struct CodeAggregate {
    /// P(outcome lands in this code).
    prob: f64,
    /// Distance of the conditional ccq output to `Φ̄ ⊗ θ_l`.
    distance: f64,
    /// Worst-case Eve row-conditional distance to `θ_l`.
    eve: f64,
    /// Exact agreement probability contribution (already weighted by
    /// the code probability).
    agreement_mass: f64,
}

fn aggregate_code(
    source: &CqqSource,
    covering: &CodeCovering,
    l: usize,
) -> Result<CodeAggregate> {
    let code = &covering.codes[l];
    let m_count = code.m;
    let s_count = code.s;
    // conditional weights q_{ms} = P(u^{lms}) / p_l
    let mut joint = vec![vec![0.0f64; s_count]; m_count];
    let mut p_l = 0.0f64;
    for (m, row) in code.rows.iter().enumerate() {
        for (s, seq) in row.iter().enumerate() {
            let p = source.seq_prob(seq);
            joint[m][s] = p;
            p_l += p;
        }
    }
    let cond: Vec<Vec<f64>> = joint
        .iter()
        .map(|row| row.iter().map(|p| p / p_l).collect())
        .collect();
    let key_weights: Vec<f64> = cond.iter().map(|row| row.iter().sum()).collect();

    // Eve's conditional states per key value and the code average
    let mut thetas = Vec::with_capacity(m_count);
    for (m, row) in code.rows.iter().enumerate() {
        let states: Vec<_> = row.iter().map(|seq| source.seq_state_e(seq)).collect();
        let w: Vec<f64> = cond[m].iter().map(|q| q / key_weights[m]).collect();
        thetas.push(crate::qmath::DensityOperator::mixture(&w, &states)?);
    }
    let theta_l = crate::qmath::DensityOperator::mixture(&key_weights, &thetas)?;
    let mut eve = 0.0f64;
    for th in &thetas {
        eve = eve.max(trace_distance(th, &theta_l)?);
    }

    let ccq = ccq_blocks(source, code, &cond)?;
    let distance = ccq_distance_to_target(&ccq, &key_weights, &theta_l)?;

    let mut agreement_mass = 0.0f64;
    for m in 0..m_count {
        for s in 0..s_count {
            agreement_mass += joint[m][s] * code.row_success(source, m, s)?;
        }
    }
    Ok(CodeAggregate {
        prob: p_l,
        distance,
        eve,
        agreement_mass,
    })
}

/// Runs key distillation: exact aggregates plus `trials` Monte-Carlo
/// samples of (Alice's outcome, Bob's decoded value).
pub fn run_key_distillation(
    source: &CqqSource,
    params: &ProtocolParams,
    trials: u32,
) -> Result<ProtocolOutcome> {
    let n = params.n;
    let sizes = derive_code_sizes(source, n, params.delta, params.rate_backoff)?;
    let mut rng = stream_rng(params.seed, STREAM_CODE);
    let covering = build_covering(source, n, params.delta, sizes.m, sizes.s, &mut rng)?;
    let l_count = covering.num_codes();

    // exact aggregation
    let mut distance = 0.0f64;
    let mut eve = 0.0f64;
    let mut agreement_exact = 0.0f64;
    let mut covered = 0.0f64;
    let mut max_leakage = 0.0f64;
    for l in 0..l_count {
        let agg = aggregate_code(source, &covering, l)?;
        distance += agg.prob * agg.distance;
        covered += agg.prob;
        eve = eve.max(agg.eve);
        agreement_exact += agg.agreement_mass;
        max_leakage = max_leakage.max(covering.codes[l].max_row_leakage);
    }
    let abort_mass = 1.0 - covered;
    // aborted branches count fully against the target
    let distance_to_target = distance + abort_mass;
    let agreement_given_covered = if covered > 0.0 {
        agreement_exact / covered
    } else {
        0.0
    };

    // Monte-Carlo pass: sample x^n, look it up, sample Bob's outcome
    let mut mc_agree = 0u64;
    let mut mc_abort = 0u64;
    let mut outcome_dist_cache: HashMap<Vec<u8>, Vec<f64>> = HashMap::new();
    for trial in 0..trials {
        let mut trial_rng = stream_rng(params.seed, STREAM_TRIALS + trial as u64);
        let xn: Vec<u8> = (0..n)
            .map(|_| sample_index(&mut trial_rng, source.probs()) as u8)
            .collect();
        let Some(&(l, m, _s)) = covering.assignment.get(&xn) else {
            mc_abort += 1;
            continue;
        };
        let probs = match outcome_dist_cache.get(&xn) {
            Some(p) => p.clone(),
            None => {
                let phi = source.seq_state_b(&xn);
                let p = covering.codes[l].povm.outcome_probabilities(&phi)?;
                outcome_dist_cache.insert(xn.clone(), p.clone());
                p
            }
        };
        let total: f64 = probs.iter().sum();
        let normalised: Vec<f64> = probs.iter().map(|p| p / total).collect();
        let outcome = sample_index(&mut trial_rng, &normalised);
        let decoded_row = if outcome < covering.m * covering.s {
            outcome / covering.s
        } else {
            // Bob's completion outcome: counted as disagreement
            covering.m
        };
        if decoded_row == m {
            mc_agree += 1;
        }
    }
    let sampled = trials as f64;
    let mc_non_abort = trials as u64 - mc_abort;

    // informational: the alternative "which code" accounting n·I(A;E)
    let psi = source.tripartite();
    let h_a = crate::entropy::von_neumann_entropy(&psi.vector().reduced_density_by_label(&["A"])?)?;
    let h_e = crate::entropy::von_neumann_entropy(&psi.vector().reduced_density_by_label(&["E"])?)?;
    let h_ae =
        crate::entropy::von_neumann_entropy(&psi.vector().reduced_density_by_label(&["A", "E"])?)?;
    let info_ae = (n as f64) * (h_a + h_e - h_ae);

    let mut outcome = ProtocolOutcome::base(Scenario::KeyDistillation, n, params.seed);
    outcome.key_bits = sizes.m_bits;
    outcome.rate_bits = sizes.m_bits as f64 / n as f64;
    outcome.distance_to_target = distance_to_target;
    outcome.fidelity_to_target = (1.0 - distance_to_target).max(0.0);
    outcome.eve_decoupling = eve;
    outcome.avg_success = agreement_given_covered;
    outcome.leakage = max_leakage;
    outcome.forward_bits = ceil_log2(l_count);
    outcome.abort_mass = abort_mass;
    outcome.mode = if trials > 0 {
        EvalMode::MonteCarlo
    } else {
        EvalMode::Exact
    };
    outcome.trials = trials;
    outcome.mc_agreement = (mc_non_abort > 0).then(|| mc_agree as f64 / mc_non_abort as f64);
    outcome.mc_abort = (trials > 0).then(|| mc_abort as f64 / sampled);
    outcome.info_ae_bits = Some(info_ae);
    outcome.m = covering.m;
    outcome.s = covering.s;
    outcome.l = l_count;
    Ok(outcome)
}
