//! Randomized invariant checks: the symmetry actions must preserve the
//! network function, charges must transform the way the bilinear form says
//! they do, and the combinatorial counts must stay consistent with each
//! other no matter which net the generator dreams up.

use ndarray::{Array1, Array2};
use num_traits::Zero;
use proptest::prelude::*;
use quadricflow_core::gradflow::{self, Dataset, LossKind};
use quadricflow_core::symmetry::{self, Permutation, Rescaling};
use quadricflow_core::topology::{self, DEFAULT_ZERO_TOL};
use quadricflow_core::{bilinear, Activation, Params};

fn entry() -> impl Strategy<Value = f64> {
    // Magnitudes bounded away from zero so no layer degenerates and every
    // rescale target stays reachable.
    (0.2f64..2.5, prop::bool::ANY).prop_map(|(m, neg)| if neg { -m } else { m })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(entry(), rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn vector(len: usize) -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(entry(), len).prop_map(Array1::from_vec)
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Relu),
        Just(Activation::leaky(0.3).unwrap()),
        Just(Activation::leaky(1.0).unwrap()),
    ]
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=4, 1usize..=3, 1usize..=5)
}

/// A net plus a handful of probe inputs for function comparison.
fn net_with_probes() -> impl Strategy<Value = (Params, Vec<Array1<f64>>)> {
    (dims(), any::<bool>(), activation()).prop_flat_map(|((d, e, l), bias, act)| {
        let biases = if bias {
            (
                Just(true),
                vector(l).prop_map(Some),
                vector(e).prop_map(Some),
            )
                .boxed()
        } else {
            (Just(false), Just(None), Just(None)).boxed()
        };
        (
            matrix(l, d),
            matrix(e, l),
            biases,
            prop::collection::vec(vector(d), 3),
        )
            .prop_map(move |(w1, w2, (_, b1, b2), probes)| {
                (Params::new(w1, w2, b1, b2, act).unwrap(), probes)
            })
    })
}

fn outputs_close(a: &Params, b: &Params, probes: &[Array1<f64>]) {
    for x in probes {
        let fa = a.forward(x.view()).unwrap();
        let fb = b.forward(x.view()).unwrap();
        for (va, vb) in fa.iter().zip(fb.iter()) {
            assert!(
                (va - vb).abs() <= 1e-9 * (1.0 + va.abs()),
                "outputs {va} vs {vb}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rescaling_preserves_function_and_moves_charges_on_the_quadric(
        (theta, probes) in net_with_probes(),
        raw in prop::collection::vec(0.2f64..5.0, 8),
    ) {
        let alpha = Rescaling::new(Array1::from_vec(raw[..theta.l()].to_vec())).unwrap();
        let scaled = symmetry::rescale(&theta, &alpha).unwrap();
        outputs_close(&theta, &scaled, &probes);
        // The function is untouched but each charge slides along its
        // quadric: c_k -> a_k^2 A_k - C_k / a_k^2.
        for k in 0..theta.l() {
            let mut in_sq: f64 = theta.w1().row(k).iter().map(|v| v * v).sum();
            if let Some(b1) = theta.b1() {
                in_sq += b1[k] * b1[k];
            }
            let out_sq: f64 = theta.w2().column(k).iter().map(|v| v * v).sum();
            let ak = alpha.values()[k];
            let expected = ak * ak * in_sq - out_sq / (ak * ak);
            let got = scaled.charges()[k];
            prop_assert!(
                (got - expected).abs() <= 1e-9 * (1.0 + expected.abs()),
                "charge {got} vs law {expected}"
            );
        }
    }

    #[test]
    fn permutation_relocates_charges_bitwise(
        (theta, probes) in net_with_probes(),
        seed_perm in prop::collection::vec(any::<u16>(), 8),
    ) {
        // Build a permutation from the raw entropy by argsort.
        let l = theta.l();
        let mut idx: Vec<usize> = (0..l).collect();
        idx.sort_by_key(|&i| seed_perm[i]);
        let pi = Permutation::from_image(idx).unwrap();
        let permuted = symmetry::permute(&theta, &pi).unwrap();
        outputs_close(&theta, &permuted, &probes);
        let c = theta.charges();
        let cp = permuted.charges();
        for i in 0..l {
            prop_assert_eq!(cp[i].to_bits(), c[pi.apply(i)].to_bits());
        }
    }

    #[test]
    fn interchange_slides_rescaling_past_permutation(
        (theta, _) in net_with_probes(),
        raw_alpha in prop::collection::vec(0.2f64..5.0, 8),
        seed_perm in prop::collection::vec(any::<u16>(), 8),
    ) {
        let l = theta.l();
        let alpha = Rescaling::new(Array1::from_vec(raw_alpha[..l].to_vec())).unwrap();
        let mut idx: Vec<usize> = (0..l).collect();
        idx.sort_by_key(|&i| seed_perm[i]);
        let pi = Permutation::from_image(idx).unwrap();
        let lhs = symmetry::rescale(&symmetry::permute(&theta, &pi).unwrap(), &alpha).unwrap();
        let tilde = symmetry::interchange_rescaling(&alpha, &pi).unwrap();
        let rhs = symmetry::permute(&symmetry::rescale(&theta, &tilde).unwrap(), &pi).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn permutations_compose_through_then(
        (theta, _) in net_with_probes(),
        seed_a in prop::collection::vec(any::<u16>(), 8),
        seed_b in prop::collection::vec(any::<u16>(), 8),
    ) {
        let l = theta.l();
        let mut ia: Vec<usize> = (0..l).collect();
        ia.sort_by_key(|&i| seed_a[i]);
        let mut ib: Vec<usize> = (0..l).collect();
        ib.sort_by_key(|&i| seed_b[i]);
        let pa = Permutation::from_image(ia).unwrap();
        let pb = Permutation::from_image(ib).unwrap();
        let two_step = symmetry::permute(&symmetry::permute(&theta, &pa).unwrap(), &pb).unwrap();
        let one_step = symmetry::permute(&theta, &pa.then(&pb).unwrap()).unwrap();
        prop_assert_eq!(two_step, one_step);
        // Inverses really invert.
        let back = symmetry::permute(
            &symmetry::permute(&theta, &pa).unwrap(),
            &pa.inverse(),
        )
        .unwrap();
        prop_assert_eq!(back, theta);
    }

    #[test]
    fn signature_counts_partition_the_neurons((theta, _) in net_with_probes()) {
        let sig = topology::signature(&theta, DEFAULT_ZERO_TOL).unwrap();
        prop_assert_eq!(sig.l_plus() + sig.l_minus() + sig.l_zero(), theta.l());
        let c = theta.charges();
        for (k, &ck) in c.iter().enumerate() {
            let class = sig.class_of(k);
            match class {
                topology::ChargeClass::Zero => prop_assert!(ck.abs() <= DEFAULT_ZERO_TOL),
                topology::ChargeClass::Positive => prop_assert!(ck > DEFAULT_ZERO_TOL),
                topology::ChargeClass::Negative => prop_assert!(ck < -DEFAULT_ZERO_TOL),
            }
        }
    }

    #[test]
    fn poincare_polynomial_counts_and_symmetry((theta, _) in net_with_probes()) {
        let sig = topology::signature(&theta, DEFAULT_ZERO_TOL).unwrap();
        let poly = topology::poincare_polynomial(&sig);
        let half_cells = num_bigint::BigUint::from(1u32)
            << (sig.l_plus() + sig.l_minus());
        let total: num_bigint::BigUint = poly.iter().cloned().sum();
        prop_assert_eq!(total, half_cells);
        // Reciprocal symmetry of a product of (1 + x^a) factors.
        let deg = poly.len() - 1;
        for i in 0..poly.len() {
            prop_assert_eq!(&poly[i], &poly[deg - i]);
        }
        prop_assert_eq!(topology::betti(&sig, 0), topology::beta0_closed_form(&sig));
        prop_assert!(!topology::betti(&sig, 0).is_zero());
    }

    #[test]
    fn rescale_to_charges_reaches_any_target_on_nondegenerate_nets(
        (theta, probes) in net_with_probes(),
        raw_targets in prop::collection::vec(-4.0f64..4.0, 8),
    ) {
        // Entries are bounded away from zero, so every neuron has both
        // layers active and every real target is reachable.
        let targets = Array1::from_vec(raw_targets[..theta.l()].to_vec());
        let (moved, alpha) = symmetry::rescale_to_charges(&theta, targets.view()).unwrap();
        for (got, want) in moved.charges().iter().zip(targets.iter()) {
            prop_assert!(
                (got - want).abs() <= 1e-10 * (1.0 + want.abs()),
                "charge {got} vs target {want}"
            );
        }
        let rebuilt = symmetry::rescale(&theta, &alpha).unwrap();
        prop_assert_eq!(&rebuilt, &moved);
        outputs_close(&theta, &moved, &probes);
    }

    #[test]
    fn analytic_gradient_is_balanced(
        (theta, probes) in net_with_probes(),
        raw_targets in prop::collection::vec(-2.0f64..2.0, 9),
    ) {
        let n = probes.len();
        let d = theta.d();
        let e = theta.e();
        let mut x = Array2::zeros((n, d));
        let mut y = Array2::zeros((n, e));
        for (i, p) in probes.iter().enumerate() {
            x.row_mut(i).assign(p);
            for j in 0..e {
                y[(i, j)] = raw_targets[i * e + j];
            }
        }
        let data = Dataset::new(x, y).unwrap();
        let g = gradflow::grad(&theta, &data, LossKind::Mse).unwrap();
        let norm2: f64 = theta.w1().iter().chain(theta.w2().iter()).map(|v| v * v).sum::<f64>()
            + theta.b1().map_or(0.0, |b| b.iter().map(|v| v * v).sum())
            + theta.b2().map_or(0.0, |b| b.iter().map(|v| v * v).sum());
        for k in 0..theta.l() {
            let r = bilinear(&theta, &g, k).unwrap().abs();
            prop_assert!(r <= 1e-10 * (1.0 + norm2), "residual {r} at neuron {k}");
        }
    }

    #[test]
    fn a_net_connects_to_itself_without_leaving_the_level_set(
        raw_w1 in prop::collection::vec(entry(), 6),
        raw_w2 in prop::collection::vec(0.2f64..2.5, 3),
        flip in prop::collection::vec(prop::bool::ANY, 3),
    ) {
        // Scalar output, planar input: the regime where components are
        // classified by signs.
        let w1 = Array2::from_shape_vec((3, 2), raw_w1).unwrap();
        let w2 = Array2::from_shape_vec(
            (1, 3),
            raw_w2
                .iter()
                .zip(flip.iter())
                .map(|(&m, &f)| if f { -m } else { m })
                .collect(),
        )
        .unwrap();
        let theta = Params::linearless(w1, w2, Activation::Relu).unwrap();
        let c0 = theta.charges();
        let path = topology::connecting_path(&theta, &theta, 40).unwrap();
        prop_assert_eq!(path.len(), 41);
        prop_assert_eq!(path.first().unwrap(), &theta);
        prop_assert_eq!(path.last().unwrap(), &theta);
        for (step, waypoint) in path.iter().enumerate() {
            for (got, want) in waypoint.charges().iter().zip(c0.iter()) {
                prop_assert!(
                    (got - want).abs() <= 1e-8 * (1.0 + want.abs()),
                    "step {step}: charge {got} drifted from {want}"
                );
            }
        }
    }
}
