//! Property tests for the linear-algebra layer.

use nalgebra::DVector;
use proptest::prelude::*;

use qdistill::qmath::{fidelity, purify, trace_distance, C64, DensityOperator, StateVector};

fn state_from_reals(parts: &[(f64, f64)], dims: Vec<usize>) -> StateVector {
    let total: usize = dims.iter().product();
    let mut amps = DVector::<C64>::zeros(total);
    let mut norm_sq = 0.0;
    for i in 0..total {
        let (re, im) = parts[i % parts.len()];
        let z = C64::new(re + 0.01 * i as f64, im - 0.007 * i as f64);
        norm_sq += z.norm_sqr();
        amps[i] = z;
    }
    amps /= C64::new(norm_sq.sqrt(), 0.0);
    let labels: Vec<String> = (0..dims.len()).map(|i| format!("r{i}")).collect();
    StateVector::new(amps, dims, labels).unwrap()
}

fn density_strategy(dim: usize) -> impl Strategy<Value = DensityOperator> {
    (
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * 3),
        proptest::collection::vec(0.05f64..1.0, 3),
    )
        .prop_map(move |(parts, raw_w)| {
            let total: f64 = raw_w.iter().sum();
            let weights: Vec<f64> = raw_w.iter().map(|w| w / total).collect();
            let states: Vec<DensityOperator> = (0..3)
                .map(|k| state_from_reals(&parts[k * dim..(k + 1) * dim], vec![dim]).to_density())
                .collect();
            DensityOperator::mixture(&weights, &states).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_trace_preserves_trace_and_positivity(
        parts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 12),
    ) {
        let psi = state_from_reals(&parts, vec![2, 3, 2]);
        let rho = psi.to_density();
        for keep in [vec![0usize], vec![1], vec![0, 2], vec![1, 2]] {
            let reduced = rho.partial_trace(&keep).unwrap();
            prop_assert!((reduced.trace().re - 1.0).abs() < 1e-9);
            let eigs = reduced.eigenvalues_clamped().unwrap();
            for v in eigs {
                prop_assert!(v >= -1e-9);
            }
        }
    }

    #[test]
    fn trace_distance_is_a_metric(
        a in density_strategy(3),
        b in density_strategy(3),
        c in density_strategy(3),
    ) {
        let dab = trace_distance(&a, &b).unwrap();
        let dba = trace_distance(&b, &a).unwrap();
        prop_assert!((dab - dba).abs() < 1e-12);
        prop_assert!(dab >= 0.0 && dab <= 1.0 + 1e-9);
        let dac = trace_distance(&a, &c).unwrap();
        let dcb = trace_distance(&c, &b).unwrap();
        prop_assert!(dab <= dac + dcb + 1e-9);
    }

    #[test]
    fn fuchs_van_de_graaf(
        a in density_strategy(3),
        b in density_strategy(3),
    ) {
        let d = trace_distance(&a, &b).unwrap();
        let f = fidelity(&a, &b).unwrap();
        prop_assert!(1.0 - f.sqrt() <= d + 1e-8);
        prop_assert!(d <= (1.0 - f).sqrt() + 1e-8);
    }

    #[test]
    fn purify_round_trip(rho in density_strategy(4)) {
        let psi = purify(&rho).unwrap();
        let back = psi.reduced_density(&[0]).unwrap();
        prop_assert!(trace_distance(&rho, &back).unwrap() < 1e-8);
    }

    #[test]
    fn tensor_then_trace_recovers_factors(
        a in density_strategy(2),
        b in density_strategy(3),
    ) {
        let ab = a.tensor(&b);
        let ra = ab.partial_trace(&[0]).unwrap();
        let rb = ab.partial_trace(&[1]).unwrap();
        prop_assert!(trace_distance(&ra, &a).unwrap() < 1e-10);
        prop_assert!(trace_distance(&rb, &b).unwrap() < 1e-10);
    }
}
