//! Randomized property checks over the public API: tensor algebra
//! identities, update interpolation, stepsize rules, model-derivative
//! consistency, and bit-level determinism of whole runs.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use arp_core::driver::{run, SolverSettings};
use arp_core::model::{model_grad, model_value, ModelState};
use arp_core::problems::by_name;
use arp_core::tensor::{DenseTensor, OpNormConfig, SymTensor, WeightMatrix};
use arp_core::update::{compute_h, hosu_update, HistoryBuffer, SecantData, StrategyKind};

/// Dense tensor with the given entries (row-major over full multi-indices).
fn dense_from(order: usize, dim: usize, entries: &[f64]) -> DenseTensor {
    let mut raw = DenseTensor::zeros(order, dim);
    raw.entries_mut().copy_from_slice(entries);
    raw
}

fn entry_vec(order: usize, dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim.pow(order as u32))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Symmetrization canonicalizes: entries agree exactly across every
    /// index permutation, and re-projecting moves nothing beyond the
    /// rounding of the orbit averages.
    #[test]
    fn symmetrization_canonicalizes_orbits(
        order in 2usize..4,
        dim in 1usize..4,
        seed_entries in entry_vec(3, 3),
        seed_idx in prop::collection::vec(0usize..3, 3),
    ) {
        let entries = &seed_entries[..dim.pow(order as u32)];
        let sym = SymTensor::sym_project(&dense_from(order, dim, entries));

        let mut idx: Vec<usize> = seed_idx[..order].iter().map(|&i| i % dim).collect();
        let reference = sym.entry(&idx);
        idx.reverse();
        prop_assert_eq!(sym.entry(&idx), reference);
        idx.rotate_left(1);
        prop_assert_eq!(sym.entry(&idx), reference);

        let again = SymTensor::sym_project(&dense_from(order, dim, sym.entries()));
        for (&a, &b) in sym.entries().iter().zip(again.entries()) {
            prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
        }
    }

    /// Full contraction agrees with slot-by-slot evaluation: contracting one
    /// vector `order` times equals the multilinear form on repeated copies.
    #[test]
    fn iterated_contraction_matches_multilinear_evaluation(
        order in 2usize..4,
        dim in 1usize..4,
        seed_entries in entry_vec(3, 3),
        seed_u in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let entries = &seed_entries[..dim.pow(order as u32)];
        let t = SymTensor::sym_project(&dense_from(order, dim, entries));
        let u = DVector::from_column_slice(&seed_u[..dim]);

        let mut reduced = t.clone();
        for _ in 0..order - 1 {
            reduced = reduced.contract(&u, 1).unwrap();
        }
        let iterated = reduced.as_vector().dot(&u);
        let slots: Vec<&DVector<f64>> = std::iter::repeat_n(&u, order).collect();
        let direct = t.apply_multi(&slots).unwrap();
        prop_assert!(
            (iterated - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
            "iterated {iterated} vs direct {direct}"
        );
    }

    /// The identity weight changes nothing: weighted and plain norm
    /// estimates coincide witness for witness.
    #[test]
    fn identity_weight_preserves_the_norm_estimate(
        order in 2usize..4,
        dim in 1usize..4,
        seed_entries in entry_vec(3, 3),
    ) {
        let entries = &seed_entries[..dim.pow(order as u32)];
        let t = SymTensor::sym_project(&dense_from(order, dim, entries));
        let cfg = OpNormConfig::default();
        let plain = t.op_norm_lower(&cfg);
        let weighted = t
            .weighted_op_norm_lower(&WeightMatrix::identity(dim), &cfg)
            .unwrap();
        prop_assert!(
            (plain.value - weighted.value).abs() <= 1e-12 * (1.0 + plain.value),
            "plain {} vs identity-weighted {}",
            plain.value,
            weighted.value
        );
    }

    /// Norm estimates are genuine lower brackets: the reported value is the
    /// form evaluated at the reported witness, and never exceeds the
    /// Frobenius norm.
    #[test]
    fn norm_estimates_are_witnessed_lower_bounds(
        order in 2usize..4,
        dim in 1usize..4,
        seed_entries in entry_vec(3, 3),
    ) {
        let entries = &seed_entries[..dim.pow(order as u32)];
        let t = SymTensor::sym_project(&dense_from(order, dim, entries));
        let est = t.op_norm_lower(&OpNormConfig::default());
        let slots: Vec<&DVector<f64>> = std::iter::repeat_n(&est.witness, order).collect();
        let at_witness = t.apply_multi(&slots).unwrap().abs();
        prop_assert!(
            (est.value - at_witness).abs() <= 1e-10 * (1.0 + at_witness),
            "estimate {} not witnessed ({at_witness})",
            est.value
        );
        prop_assert!(est.value <= t.frob_norm() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The least-change update interpolates its secant data for every order,
    /// dimension, and weight it accepts.
    #[test]
    fn secant_update_interpolates(
        p in 2usize..4,
        dim in 2usize..5,
        seed_t in entry_vec(3, 4),
        seed_y in entry_vec(2, 4),
        seed_s in prop::collection::vec(0.1f64..1.0, 4),
        spd_seed in entry_vec(2, 4),
    ) {
        let t_prev = SymTensor::sym_project(&dense_from(p, dim, &seed_t[..dim.pow(p as u32)]));
        let y = SymTensor::sym_project(&dense_from(
            p - 1,
            dim,
            &seed_y[..dim.pow(p as u32 - 1)],
        ));
        let s = DVector::from_column_slice(&seed_s[..dim]);
        let raw = DMatrix::from_fn(dim, dim, |i, j| spd_seed[i * dim + j]);
        let w = WeightMatrix::new(&raw * raw.transpose() + DMatrix::identity(dim, dim) * 0.3)
            .unwrap();
        let secant = SecantData {
            s_prev: s.clone(),
            y_tensor: y.clone(),
            y_vec: DVector::zeros(dim),
        };
        let updated = hosu_update(&t_prev, &secant, &w).unwrap();
        let resid = updated.contract(&s, 1).unwrap().sub(&y).unwrap().frob_norm();
        prop_assert!(
            resid <= 1e-10 * (1.0 + y.frob_norm()),
            "interpolation residual {resid}"
        );
    }

    /// The restart stepsize rule: capped window sum over sqrt(n), floored
    /// exactly when the raw value underflows the floor.
    #[test]
    fn stepsize_rule_cap_and_floor(
        m in 1usize..6,
        n in 1usize..9,
        norms in prop::collection::vec(0.0f64..0.8, 12),
        h_floor in 1e-9f64..1e-2,
    ) {
        let mut history = HistoryBuffer::new(m);
        for &v in &norms {
            history.push(v);
        }
        let expected_raw = history.sum_recent(m).min(1.0) / (n as f64).sqrt();
        let step = compute_h(&history, m, n, h_floor);
        if expected_raw < h_floor {
            prop_assert!(step.floored && step.h == h_floor);
        } else {
            prop_assert!(!step.floored && step.h == expected_raw);
        }
        prop_assert!(step.h <= 1.0 / (n as f64).sqrt() + 1e-15 || step.floored);
    }

    /// The analytic model gradient matches a central difference of the model
    /// value in a random direction.
    #[test]
    fn model_gradient_matches_directional_difference(
        dim in 2usize..4,
        seed_grad in prop::collection::vec(-1.0f64..1.0, 3),
        seed_hess in entry_vec(2, 3),
        seed_s in prop::collection::vec(-0.5f64..0.5, 3),
        seed_d in prop::collection::vec(-1.0f64..1.0, 3),
        sigma in 0.1f64..10.0,
    ) {
        let grad = SymTensor::from_vector(&DVector::from_column_slice(&seed_grad[..dim]));
        let hess = SymTensor::sym_project(&dense_from(2, dim, &seed_hess[..dim * dim]));
        let state = ModelState::new(
            DVector::zeros(dim),
            0.0,
            vec![grad],
            hess,
            sigma,
        )
        .unwrap();
        let s = DVector::from_column_slice(&seed_s[..dim]);
        let d = DVector::from_column_slice(&seed_d[..dim]);
        let h = 1e-6;
        let fwd = model_value(&state, &(&s + &d * h));
        let bwd = model_value(&state, &(&s - &d * h));
        let numeric = (fwd - bwd) / (2.0 * h);
        let analytic = d.dot(&model_grad(&state, &s));
        prop_assert!(
            (numeric - analytic).abs() <= 1e-5 * (1.0 + analytic.abs()),
            "directional derivative {analytic} vs difference {numeric}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    /// Whole runs are deterministic: the same setup twice gives traces that
    /// serialize to identical bytes, whatever the strategy and dimension.
    #[test]
    fn runs_are_bit_reproducible(
        dim in 2usize..5,
        kind_idx in 0usize..5,
        max_iters in 3usize..12,
    ) {
        let problem = by_name("quartic", dim).unwrap();
        let mut settings = SolverSettings::new(2, StrategyKind::ALL[kind_idx]);
        settings.strategy.m = 3;
        settings.strategy.l_hat = 72.0;
        settings.max_iters = max_iters;
        let x0 = problem.default_start();

        let bytes = |trace: &arp_core::trace::RunTrace| {
            let mut out = Vec::new();
            trace.write_jsonl(&mut out).unwrap();
            out
        };
        let first = run(problem.as_ref(), &x0, &settings).unwrap();
        let second = run(problem.as_ref(), &x0, &settings).unwrap();
        prop_assert_eq!(bytes(&first.trace), bytes(&second.trace));
    }
}
