//! Derivative-free maximisation of coherent information over parameterized
//! channel inputs.
//!
//! Single-letter only: the search runs over one use of the channel. The
//! optimiser is a fixed-hyperparameter simplex descent (reflection 1,
//! expansion 2, contraction 0.5, shrink 0.5) with deterministic random
//! restarts; restart `i` draws its start point from stream `i`, and results
//! merge by best value with the lowest restart index breaking ties.

use nalgebra::DVector;
use rand::Rng;

use crate::channels::QuantumChannel;
use crate::entropy::coherent_information;
use crate::error::{Error, Result};
use crate::qmath::{C64, StateVector};
use crate::rng::stream_rng;
use crate::source::channel_to_tripartite;

/// How the channel input `|ψ'⟩^{AA'}` is parameterized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputParameterization {
    /// `cos θ |00⟩ + e^{iφ} sin θ |11⟩` — two angles, qubit input.
    PureQubitAngles,
    /// Softmax logits for `P(x)`, input `Σ_x √P(x) |x⟩|x⟩`.
    DiagonalEnsemble { dim: usize },
    /// All real and imaginary parts of the `d×d` amplitude table,
    /// normalised after decoding.
    FullPureState { dim: usize },
}

impl InputParameterization {
    /// Number of real parameters.
    pub fn num_params(&self) -> usize {
        match self {
            Self::PureQubitAngles => 2,
            Self::DiagonalEnsemble { dim } => *dim,
            Self::FullPureState { dim } => 2 * dim * dim,
        }
    }

    /// Box bounds used for restart sampling and simplex clipping.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Self::PureQubitAngles => vec![
                (0.0, std::f64::consts::FRAC_PI_2),
                (0.0, 2.0 * std::f64::consts::PI),
            ],
            Self::DiagonalEnsemble { dim } => vec![(-10.0, 10.0); *dim],
            Self::FullPureState { dim } => vec![(-1.0, 1.0); 2 * dim * dim],
        }
    }

    /// The canonical starting point (maximally entangled / uniform input).
    pub fn canonical_start(&self) -> Vec<f64> {
        match self {
            Self::PureQubitAngles => vec![std::f64::consts::FRAC_PI_4, 0.0],
            Self::DiagonalEnsemble { dim } => vec![0.0; *dim],
            Self::FullPureState { dim } => {
                let mut p = vec![0.0; 2 * dim * dim];
                let w = 1.0 / (*dim as f64).sqrt();
                for x in 0..*dim {
                    p[2 * (x * dim + x)] = w;
                }
                p
            }
        }
    }

    /// Decodes a parameter point into a valid bipartite input state.
    pub fn decode(&self, point: &[f64]) -> Result<StateVector> {
        if point.len() != self.num_params() {
            return Err(Error::ParameterOutOfRange(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                point.len()
            )));
        }
        match self {
            Self::PureQubitAngles => {
                let (theta, phi) = (point[0], point[1]);
                let mut amps = DVector::<C64>::zeros(4);
                amps[0] = C64::new(theta.cos(), 0.0);
                amps[3] = C64::new(phi.cos(), phi.sin()) * theta.sin();
                StateVector::new(amps, vec![2, 2], vec!["A".into(), "Aprime".into()])
            }
            Self::DiagonalEnsemble { dim } => {
                let max = point.iter().cloned().fold(f64::MIN, f64::max);
                let weights: Vec<f64> = point.iter().map(|&x| (x - max).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut amps = DVector::<C64>::zeros(dim * dim);
                for x in 0..*dim {
                    amps[x * dim + x] = C64::new((weights[x] / total).sqrt(), 0.0);
                }
                StateVector::new(amps, vec![*dim, *dim], vec!["A".into(), "Aprime".into()])
            }
            Self::FullPureState { dim } => {
                let mut amps = DVector::<C64>::zeros(dim * dim);
                let mut norm_sq = 0.0;
                for i in 0..dim * dim {
                    let z = C64::new(point[2 * i], point[2 * i + 1]);
                    norm_sq += z.norm_sqr();
                    amps[i] = z;
                }
                if norm_sq < 1e-12 {
                    return Err(Error::ParameterOutOfRange(
                        "pure-state parameters decode to the zero vector".into(),
                    ));
                }
                amps /= C64::new(norm_sq.sqrt(), 0.0);
                StateVector::new(amps, vec![*dim, *dim], vec!["A".into(), "Aprime".into()])
            }
        }
    }
}

/// Coherent information of the channel at one parameter point, in bits.
pub fn evaluate_rate(
    channel: &QuantumChannel,
    param: &InputParameterization,
    point: &[f64],
) -> Result<f64> {
    let input = param.decode(point)?;
    let psi = channel_to_tripartite(channel, &input)?;
    coherent_information(&psi)
}

/// Search record: best point and value, plus the best-so-far trace (one
/// entry per objective evaluation, non-decreasing).
#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub trace: Vec<f64>,
}

// fixed simplex-descent hyperparameters
const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;
const RESTARTS: usize = 8;

struct SearchState {
    best_point: Vec<f64>,
    best_value: f64,
    evaluations: usize,
    trace: Vec<f64>,
}

impl SearchState {
    fn eval(
        &mut self,
        channel: &QuantumChannel,
        param: &InputParameterization,
        point: &[f64],
    ) -> Result<f64> {
        let v = evaluate_rate(channel, param, point)?;
        self.evaluations += 1;
        if v > self.best_value {
            self.best_value = v;
            self.best_point = point.to_vec();
        }
        self.trace.push(self.best_value);
        Ok(v)
    }
}

/// Maximises [`evaluate_rate`] over the parameterization with the given
/// total evaluation budget. Deterministic for fixed seed; the best value
/// is never below the canonical starting point's.
pub fn maximize_rate(
    channel: &QuantumChannel,
    param: &InputParameterization,
    budget: usize,
    seed: u64,
) -> Result<OptimizationReport> {
    if budget < 1 {
        return Err(Error::ParameterOutOfRange("budget must be ≥ 1".into()));
    }
    let bounds = param.bounds();
    let dim = param.num_params();
    let mut search = SearchState {
        best_point: param.canonical_start(),
        best_value: f64::NEG_INFINITY,
        evaluations: 0,
        trace: Vec::new(),
    };
    let clip = |p: Vec<f64>| -> Vec<f64> {
        p.into_iter()
            .zip(&bounds)
            .map(|(x, &(lo, hi))| x.clamp(lo, hi))
            .collect()
    };
    let blend = |a: &[f64], b: &[f64], w: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
    };

    'restarts: for restart in 0..RESTARTS {
        let mut rng = stream_rng(seed, restart as u64);
        let start = if restart == 0 {
            param.canonical_start()
        } else {
            bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect()
        };

        // initial simplex: the start point plus a step along each axis
        let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
        for i in 0..dim {
            let mut p = start.clone();
            let span = bounds[i].1 - bounds[i].0;
            p[i] = (p[i] + 0.1 * span).min(bounds[i].1);
            if (p[i] - start[i]).abs() < 1e-12 {
                p[i] = (start[i] - 0.1 * span).max(bounds[i].0);
            }
            simplex.push(p);
        }
        let mut values = Vec::with_capacity(dim + 1);
        for p in &simplex {
            if search.evaluations >= budget {
                break 'restarts;
            }
            values.push(search.eval(channel, param, p)?);
        }

        loop {
            if search.evaluations >= budget {
                break 'restarts;
            }
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| {
                values[a]
                    .partial_cmp(&values[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let worst = order[0];
            let second_worst = order[1];
            let best = order[values.len() - 1];
            if (values[best] - values[worst]).abs() < 1e-10 {
                break; // converged; move to the next restart
            }
            let mut centroid = vec![0.0; dim];
            for (i, p) in simplex.iter().enumerate() {
                if i == worst {
                    continue;
                }
                for d in 0..dim {
                    centroid[d] += p[d] / dim as f64;
                }
            }

            // reflect the worst vertex through the centroid
            let reflected = clip(blend(&centroid, &simplex[worst], -REFLECTION));
            let v_r = search.eval(channel, param, &reflected)?;
            if v_r > values[best] {
                if search.evaluations >= budget {
                    break 'restarts;
                }
                let expanded = clip(blend(&centroid, &reflected, EXPANSION));
                let v_e = search.eval(channel, param, &expanded)?;
                if v_e > v_r {
                    simplex[worst] = expanded;
                    values[worst] = v_e;
                } else {
                    simplex[worst] = reflected;
                    values[worst] = v_r;
                }
            } else if v_r > values[second_worst] {
                simplex[worst] = reflected;
                values[worst] = v_r;
            } else {
                if search.evaluations >= budget {
                    break 'restarts;
                }
                let contracted = clip(blend(&centroid, &simplex[worst], CONTRACTION));
                let v_c = search.eval(channel, param, &contracted)?;
                if v_c > values[worst] {
                    simplex[worst] = contracted;
                    values[worst] = v_c;
                } else {
                    let anchor = simplex[best].clone();
                    for i in 0..simplex.len() {
                        if i == best {
                            continue;
                        }
                        if search.evaluations >= budget {
                            break 'restarts;
                        }
                        simplex[i] = clip(blend(&anchor, &simplex[i], SHRINK));
                        values[i] = search.eval(channel, param, &simplex[i])?;
                    }
                }
            }
        }
    }

    Ok(OptimizationReport {
        best_point: search.best_point,
        best_value: search.best_value,
        evaluations: search.evaluations,
        trace: search.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{standard_channel, ChannelKind};
    use crate::entropy::binary_entropy;

    #[test]
    fn rate_of_identity_channel_with_bell_input() {
        let ch = standard_channel(ChannelKind::Identity).unwrap();
        let p = InputParameterization::PureQubitAngles;
        let v = evaluate_rate(&ch, &p, &p.canonical_start()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rate_of_fully_depolarizing_is_nonpositive() {
        let ch = standard_channel(ChannelKind::Depolarizing(1.0)).unwrap();
        let p = InputParameterization::PureQubitAngles;
        for theta in [0.2f64, 0.7, 1.3] {
            let v = evaluate_rate(&ch, &p, &[theta, 0.0]).unwrap();
            assert!(v <= 1e-10, "θ = {theta}: {v}");
        }
    }

    #[test]
    fn rate_of_dephasing_matches_binary_entropy_oracle() {
        let ch = standard_channel(ChannelKind::Dephasing(0.2)).unwrap();
        let p = InputParameterization::PureQubitAngles;
        let v = evaluate_rate(&ch, &p, &p.canonical_start()).unwrap();
        let expect = 1.0 - binary_entropy(0.2); // 0.278072
        assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
        assert!((expect - 0.278072).abs() < 1e-6);
    }

    #[test]
    fn rate_of_erasure_is_one_minus_two_p() {
        let ch = standard_channel(ChannelKind::Erasure(0.25)).unwrap();
        let p = InputParameterization::PureQubitAngles;
        let v = evaluate_rate(&ch, &p, &p.canonical_start()).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rate_agrees_with_entropy_identity_chain() {
        let ch = standard_channel(ChannelKind::AmplitudeDamping(0.3)).unwrap();
        let p = InputParameterization::PureQubitAngles;
        for theta in [0.3f64, 0.7, 1.1] {
            let input = p.decode(&[theta, 0.4]).unwrap();
            let psi = channel_to_tripartite(&ch, &input).unwrap();
            let report = crate::entropy::entropy_report(&psi).unwrap();
            let v = evaluate_rate(&ch, &p, &[theta, 0.4]).unwrap();
            assert!((v - (report.h_b - report.h_e)).abs() < 1e-9);
            assert!((v - report.private_info).abs() < 1e-9);
        }
    }

    #[test]
    fn maximize_identity_converges_to_one() {
        let ch = standard_channel(ChannelKind::Identity).unwrap();
        let report =
            maximize_rate(&ch, &InputParameterization::PureQubitAngles, 400, 0).unwrap();
        assert!((report.best_value - 1.0).abs() < 1e-4, "{}", report.best_value);
    }

    #[test]
    fn maximize_fully_damping_is_nonpositive() {
        let ch = standard_channel(ChannelKind::AmplitudeDamping(1.0)).unwrap();
        let report =
            maximize_rate(&ch, &InputParameterization::PureQubitAngles, 200, 0).unwrap();
        assert!(report.best_value <= 1e-9, "{}", report.best_value);
    }

    #[test]
    fn maximize_amplitude_damping_matches_grid_scan() {
        // 1-D exhaustive oracle over the input amplitude, 2001 points
        let ch = standard_channel(ChannelKind::AmplitudeDamping(0.2)).unwrap();
        let p = InputParameterization::PureQubitAngles;
        let mut grid_best = f64::NEG_INFINITY;
        for k in 0..=2000 {
            let theta = std::f64::consts::FRAC_PI_2 * k as f64 / 2000.0;
            let v = evaluate_rate(&ch, &p, &[theta, 0.0]).unwrap();
            grid_best = grid_best.max(v);
        }
        let report = maximize_rate(&ch, &p, 600, 1).unwrap();
        assert!(
            (report.best_value - grid_best).abs() < 1e-3,
            "simplex {} vs grid {grid_best}",
            report.best_value
        );
    }

    #[test]
    fn best_value_dominates_canonical_start_and_trace_is_monotone() {
        let ch = standard_channel(ChannelKind::AmplitudeDamping(0.4)).unwrap();
        let p = InputParameterization::DiagonalEnsemble { dim: 2 };
        let report = maximize_rate(&ch, &p, 300, 3).unwrap();
        let start_value = evaluate_rate(&ch, &p, &p.canonical_start()).unwrap();
        assert!(report.best_value >= start_value - 1e-12);
        for w in report.trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(report.trace.len(), report.evaluations);
        let best_from_trace = report.trace.last().copied().unwrap();
        assert!((best_from_trace - report.best_value).abs() < 1e-15);
    }

    #[test]
    fn dephasing_optimum_invariant_under_bit_relabelling() {
        // conjugate the channel by X on input and output: a relabelled but
        // physically identical channel must yield the same optimum
        let ch = standard_channel(ChannelKind::Dephasing(0.2)).unwrap();
        let x = crate::qmath::ComplexOperator::square(
            nalgebra::DMatrix::from_row_slice(
                2,
                2,
                &[
                    C64::new(0., 0.),
                    C64::new(1., 0.),
                    C64::new(1., 0.),
                    C64::new(0., 0.),
                ],
            ),
            vec![2],
        )
        .unwrap();
        let relabelled = QuantumChannel::new(
            ch.kraus()
                .iter()
                .map(|k| x.mul(k).unwrap().mul(&x).unwrap())
                .collect(),
        )
        .unwrap();
        let p = InputParameterization::PureQubitAngles;
        let a = maximize_rate(&ch, &p, 400, 7).unwrap();
        let b = maximize_rate(&relabelled, &p, 400, 7).unwrap();
        assert!(
            (a.best_value - b.best_value).abs() < 1e-6,
            "{} vs {}",
            a.best_value,
            b.best_value
        );
    }

    #[test]
    fn determinism_of_the_search() {
        let ch = standard_channel(ChannelKind::Depolarizing(0.15)).unwrap();
        let p = InputParameterization::FullPureState { dim: 2 };
        let a = maximize_rate(&ch, &p, 200, 11).unwrap();
        let b = maximize_rate(&ch, &p, 200, 11).unwrap();
        assert_eq!(a.best_value.to_bits(), b.best_value.to_bits());
        assert_eq!(a.evaluations, b.evaluations);
    }
}
