//! Property tests over randomly generated formations, states, and gains.
//!
//! Formations are synthesized from random agent placements: bearings are
//! measured from the generating positions, so a consistent realization is
//! known in advance and localization has a ground truth to recover.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use formation_core::control::{
    estimator_step, EstimatorVariant, FollowerEstimator, GainSet, Law, NeighborComm, NeighborView,
};
use formation_core::formation::{
    bearing_of, build_bearing_laplacian, build_laplacian, check_anchored_block, projection_matrix, stack,
    FormationSpec,
};
use formation_core::integrator::{stacked_sliding_variable, SwarmState};
use formation_core::localization::{solve_desired_positions, VelocityProfile};
use formation_core::scenario::bundled_formation;
use formation_core::Scenario;

fn unit_vector(dim: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim)
        .prop_filter("nonzero direction", |v| {
            v.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3
        })
        .prop_map(|v| {
            let g = DVector::from_vec(v);
            let n = g.norm();
            g / n
        })
}

/// Random placements of 2 leaders + `f` followers with a minimum pairwise
/// separation, from which a fully connected sensing graph is built:
/// every follower senses both leaders and every other follower.
fn placements(dim: usize, followers: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    let n = 2 + followers;
    prop::collection::vec(prop::collection::vec(-4.0..4.0f64, dim), n)
        .prop_map(|ps| ps.into_iter().map(DVector::from_vec).collect::<Vec<_>>())
        .prop_filter("agents well separated", |ps| {
            for i in 0..ps.len() {
                for j in i + 1..ps.len() {
                    if (&ps[i] - &ps[j]).norm() < 0.5 {
                        return false;
                    }
                }
            }
            true
        })
}

fn complete_formation(dim: usize, positions: &[DVector<f64>]) -> FormationSpec {
    let n = positions.len();
    let l = 2;
    let mut bearings = Vec::new();
    for i in l..n {
        for j in 0..n {
            if i != j {
                bearings.push((i, j, bearing_of(&positions[i], &positions[j], 1e-9).unwrap()));
            }
        }
    }
    FormationSpec::new(
        dim,
        n,
        l,
        bearings,
        positions[..l].to_vec(),
        // measured bearings can sit just outside the strict unit tolerance
        true,
    )
    .expect("complete graph over separated agents is a valid spec")
}

fn gains(k1: f64) -> GainSet {
    GainSet {
        k1,
        k2: 2.0,
        k3: 1.0,
        k4: 0.5,
        k5: 2.0,
        k6: 1.0,
        delta1: 2f64.sqrt(),
        delta2: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projector_identities(g in prop_oneof![unit_vector(2), unit_vector(3), unit_vector(4)]) {
        let p = projection_matrix(&g).unwrap();
        let d = g.len();
        // symmetric, idempotent, annihilates g, invariant under g -> -g
        prop_assert!((&p - &p.transpose()).norm() < 1e-14);
        prop_assert!((&p * &p - &p).norm() < 1e-13);
        prop_assert!((&p * &g).norm() < 1e-13);
        let p_neg = projection_matrix(&(-&g)).unwrap();
        prop_assert!((&p - &p_neg).norm() < 1e-13);
        // trace = d - 1: eigenvalues are one 0 and (d-1) ones
        prop_assert!((p.trace() - (d as f64 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn projector_is_contraction(g in unit_vector(3), x in prop::collection::vec(-5.0..5.0f64, 3)) {
        let p = projection_matrix(&g).unwrap();
        let x = DVector::from_vec(x);
        prop_assert!((&p * &x).norm() <= x.norm() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bearing_laplacian_symmetric_psd_with_translation_null_space(
        (dim, positions) in (2usize..=3)
            .prop_flat_map(|d| (1usize..=4).prop_flat_map(move |f| placements(d, f)).prop_map(move |p| (d, p))),
        probe in prop::collection::vec(-1.0..1.0f64, 24),
        w in prop::collection::vec(-2.0..2.0f64, 3),
    ) {
        let spec = complete_formation(dim, &positions);
        let b = build_bearing_laplacian(&spec);
        let dn = dim * spec.n_agents();
        prop_assert!((&b.full - &b.full.transpose()).norm() < 1e-12);
        let x = DVector::from_fn(dn, |k, _| probe[k % probe.len()]);
        prop_assert!(x.dot(&(&b.full * &x)) >= -1e-10);
        // 1_n (x) w is always in the null space
        let trans = DVector::from_fn(dn, |k, _| w[k % dim]);
        prop_assert!((&b.full * trans).norm() < 1e-10);
        // diagonal blocks are the per-agent projector sums
        for i in 0..spec.n_agents() {
            let mut expect = DMatrix::zeros(dim, dim);
            for (a, j) in spec.edges().iter().copied().filter(|&(a, _)| a == i) {
                let _ = a;
                expect += projection_matrix(spec.desired_bearing(i, j).unwrap()).unwrap();
            }
            // leaders pick up blocks from incoming follower edges too
            for (a, _) in spec.edges().iter().copied().filter(|&(_, bj)| bj == i) {
                if spec.desired_bearing(i, a).is_none() {
                    expect += projection_matrix(spec.desired_bearing(a, i).unwrap()).unwrap();
                }
            }
            let block = b.full.view((i * dim, i * dim), (dim, dim)).into_owned();
            prop_assert!((block - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn graph_laplacian_row_sums_and_leader_rows(
        (dim, positions) in (2usize..=3)
            .prop_flat_map(|d| (1usize..=4).prop_flat_map(move |f| placements(d, f)).prop_map(move |p| (d, p))),
    ) {
        let spec = complete_formation(dim, &positions);
        let lap = build_laplacian(&spec);
        for r in 0..spec.n_agents() {
            let row_sum: f64 = lap.full.row(r).iter().sum();
            prop_assert!(row_sum.abs() < 1e-14);
            if r < spec.n_leaders() {
                prop_assert!(lap.full.row(r).iter().all(|&x| x == 0.0));
            }
        }
        prop_assert!((&lap.ff - &lap.ff.transpose()).norm() < 1e-14);
    }

    #[test]
    fn localization_recovers_generating_positions(
        (dim, positions) in (2usize..=3)
            .prop_flat_map(|d| (1usize..=4).prop_flat_map(move |f| placements(d, f)).prop_map(move |p| (d, p))),
    ) {
        let spec = complete_formation(dim, &positions);
        let anchored = check_anchored_block(&spec).unwrap();
        prop_assume!(anchored.lambda_min > 1e-6); // skip near-degenerate geometry
        let sol = solve_desired_positions(&spec).unwrap();
        for (i, p) in positions.iter().enumerate() {
            prop_assert!((sol.agent_position(dim, i) - p).norm() < 1e-7,
                "agent {} not recovered", i + 1);
        }
    }

    #[test]
    fn gradient_descent_oracle_matches_linear_localization(
        (dim, positions) in (2usize..=2)
            .prop_flat_map(|d| (2usize..=3).prop_flat_map(move |f| placements(d, f)).prop_map(move |p| (d, p))),
        start in prop::collection::vec(-6.0..6.0f64, 8),
    ) {
        // The bearing cost 0.5 sum_E |P_{g*}(p_j - p_i)|^2 is quadratic in
        // the follower block with Hessian B_ff, so plain gradient descent
        // from any start is an independent oracle for the linear solve.
        let spec = complete_formation(dim, &positions);
        let anchored = check_anchored_block(&spec).unwrap();
        // descent converges at rate (1 - lmin/lmax) per step; keep the
        // conditioning bounded so the iteration budget suffices
        prop_assume!(anchored.lambda_min > 0.05);
        let sol = solve_desired_positions(&spec).unwrap();

        let b = build_bearing_laplacian(&spec);
        let p_l = spec.stacked_leader_positions();
        let df = dim * spec.n_followers();
        let mut x = DVector::from_fn(df, |k, _| start[k % start.len()]);
        let step = 1.0 / anchored.lambda_max;
        for _ in 0..200_000 {
            let grad = &b.ff * &x + &b.fl * &p_l;
            if grad.norm() < 1e-10 {
                break;
            }
            x -= grad * step;
        }
        prop_assert!((x - &sol.follower_block).norm() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stacked_and_local_sliding_variables_agree(
        pos in prop::collection::vec(-3.0..3.0f64, 6),
        vel in prop::collection::vec(-2.0..2.0f64, 6),
        k1 in 0.1..2.0f64,
        t in 0.0..10.0f64,
    ) {
        // On the bundled formation with arbitrary follower states, the
        // per-agent sliding variables stacked must equal
        // B_ff (v_F - 1 (x) v_c + k1 (p_F - p*_F(t))), and the projected
        // displacement sums must equal B_ff (p_F - p*_F(t)).
        let scenario = Scenario::builtin("sim1").unwrap().unwrap();
        let spec = &scenario.spec;
        let profile = VelocityProfile::bundled_sinusoid();
        let v_c = profile.velocity(t);
        let offset = profile.integral(t);

        let mut positions: Vec<DVector<f64>> = spec
            .leader_positions()
            .iter()
            .map(|p| p + &offset)
            .collect();
        let mut velocities = vec![v_c.clone(); 2];
        for fi in 0..3 {
            positions.push(DVector::from_vec(vec![pos[2 * fi] - 2.0, pos[2 * fi + 1]]));
            velocities.push(DVector::from_vec(vec![vel[2 * fi], vel[2 * fi + 1]]));
        }
        // keep states collision-free
        for i in 0..5 {
            for j in i + 1..5 {
                prop_assume!((&positions[i] - &positions[j]).norm() > 1e-3);
            }
        }
        let state = SwarmState { t, positions: positions.clone(), velocities: velocities.clone(), estimators: None };
        let s_local = stacked_sliding_variable(spec, &state, k1, &v_c).unwrap();

        let b = build_bearing_laplacian(spec);
        let p_f = stack(&positions[2..]);
        let v_f = stack(&velocities[2..]);
        let p_star = scenario.trajectory.target_at(t).rows(4, 6).into_owned();
        let v_star = DVector::from_fn(6, |k, _| v_c[k % 2]);
        let s_stacked = &b.ff * (&v_f - &v_star + (&p_f - &p_star) * k1);
        prop_assert!((&s_local - &s_stacked).norm() < 1e-10,
            "stacked mismatch: {}", (&s_local - &s_stacked).norm());

        // phi identity: per-agent projected displacement sums
        let mut phi = DVector::zeros(6);
        for fi in 0..3 {
            let i = 2 + fi;
            let mut acc = DVector::zeros(2);
            for j in spec.neighbors(i) {
                let p = projection_matrix(spec.desired_bearing(i, j).unwrap()).unwrap();
                acc += p * (&positions[i] - &positions[j]);
            }
            phi.rows_mut(2 * fi, 2).copy_from(&acc);
        }
        let phi_stacked = &b.ff * (&p_f - &p_star);
        prop_assert!((phi - phi_stacked).norm() < 1e-10);
    }

    #[test]
    fn estimator_error_dynamics_match_stacked_form(
        pos in prop::collection::vec(-3.0..3.0f64, 6),
        vel in prop::collection::vec(-2.0..2.0f64, 6),
        hat_off in prop::collection::vec(-1.0..1.0f64, 12),
        u_in in prop::collection::vec(-2.0..2.0f64, 6),
    ) {
        // d(delta)/dt = -k3 A gamma - k6 A delta with A = L_ff (x) I_d for
        // the proof-consistent estimator, at any state.
        let spec = bundled_formation();
        let g = gains(0.5);
        let dim = 2;
        let v_c = DVector::from_vec(vec![1.0, 0.3]);

        let mut positions: Vec<DVector<f64>> = spec.leader_positions().to_vec();
        let mut velocities = vec![v_c.clone(); 2];
        for fi in 0..3 {
            positions.push(DVector::from_vec(vec![pos[2 * fi] - 2.0, pos[2 * fi + 1] + 1.0]));
            velocities.push(DVector::from_vec(vec![vel[2 * fi], vel[2 * fi + 1]]));
        }
        for i in 0..5 {
            for j in i + 1..5 {
                prop_assume!((&positions[i] - &positions[j]).norm() > 1e-3);
            }
        }
        let estimators: Vec<FollowerEstimator> = (0..3)
            .map(|fi| FollowerEstimator {
                p_hat: &positions[2 + fi] + DVector::from_vec(vec![hat_off[4 * fi], hat_off[4 * fi + 1]]),
                v_hat: &velocities[2 + fi] + DVector::from_vec(vec![hat_off[4 * fi + 2], hat_off[4 * fi + 3]]),
                p_bar: positions[2 + fi].clone(),
                v_bar: velocities[2 + fi].clone(),
            })
            .collect();

        // gamma = p - p_hat, delta = v - v_hat, stacked over followers
        let mut gamma = DVector::zeros(6);
        let mut delta = DVector::zeros(6);
        for fi in 0..3 {
            gamma.rows_mut(2 * fi, 2).copy_from(&(&positions[2 + fi] - &estimators[fi].p_hat));
            delta.rows_mut(2 * fi, 2).copy_from(&(&velocities[2 + fi] - &estimators[fi].v_hat));
        }

        // evaluate the estimator for each follower and stack
        // d(delta)/dt = u - d(v_hat)/dt
        let mut ddelta = DVector::zeros(6);
        for fi in 0..3 {
            let agent = 2 + fi;
            let views: Vec<NeighborView> = spec
                .neighbors(agent)
                .map(|j| NeighborView {
                    bearing_ref: spec.desired_bearing(agent, j).unwrap().clone(),
                    rel_pos: &positions[j] - &positions[agent],
                    rel_vel: &velocities[j] - &velocities[agent],
                    comm: Some(if j < 2 {
                        NeighborComm {
                            p_hat: positions[j].clone(),
                            v_hat: v_c.clone(),
                            p_bar: positions[j].clone(),
                            v_bar: v_c.clone(),
                        }
                    } else {
                        NeighborComm {
                            p_hat: estimators[j - 2].p_hat.clone(),
                            v_hat: estimators[j - 2].v_hat.clone(),
                            p_bar: estimators[j - 2].p_bar.clone(),
                            v_bar: estimators[j - 2].v_bar.clone(),
                        }
                    }),
                })
                .collect();
            let u = DVector::from_vec(vec![u_in[2 * fi], u_in[2 * fi + 1]]);
            let (_, dv_hat) =
                estimator_step(&estimators[fi], &u, &g, EstimatorVariant::ProofConsistent, &views);
            ddelta.rows_mut(2 * fi, 2).copy_from(&(u - dv_hat));
        }

        let lap = build_laplacian(&spec);
        let mut a = DMatrix::zeros(6, 6);
        for r in 0..3 {
            for c in 0..3 {
                for k in 0..dim {
                    a[(r * dim + k, c * dim + k)] = lap.ff[(r, c)];
                }
            }
        }
        let expect = -(&a * &gamma) * g.k3 - (&a * &delta) * g.k6;
        prop_assert!((ddelta - expect).norm() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gain_validation_matches_inequality(
        k1 in 0.01..3.0f64,
        k2 in 0.01..6.0f64,
        d1 in 0.0..3.0f64,
        d2 in 0.0..2.0f64,
    ) {
        let g = GainSet { k1, k2, k3: 1.0, k4: 1.0, k5: 10.0, k6: 1.0, delta1: d1, delta2: d2 };
        let valid = k2 > d2 + k1 * d1;
        prop_assert_eq!(g.validate(Law::A).is_ok(), valid);
        prop_assert!((g.reaching_margin(Law::A) - (k2 - d2 - k1 * d1)).abs() < 1e-12);
    }

    #[test]
    fn profile_integral_matches_quadrature(
        base in prop::collection::vec(-2.0..2.0f64, 2),
        amplitude in -2.0..2.0f64,
        omega in 0.2..4.0f64,
        t in 0.01..8.0f64,
    ) {
        let profile = VelocityProfile::Sinusoid { base, amplitude, omega, axis: 1 };
        // Simpson quadrature of v_c against the closed-form integral
        let n = 2000;
        let h = t / n as f64;
        let mut acc = profile.velocity(0.0) + profile.velocity(t);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += profile.velocity(k as f64 * h) * w;
        }
        let quad = acc * (h / 3.0);
        prop_assert!((quad - profile.integral(t)).norm() < 1e-8);
        // bounds are honest suprema over a dense sample
        for k in 0..400 {
            let tau = k as f64 * 0.05;
            prop_assert!(profile.velocity(tau).norm() <= profile.delta1() + 1e-9);
            prop_assert!(profile.acceleration(tau).norm() <= profile.delta2() + 1e-9);
        }
    }

    #[test]
    fn scenario_round_trip_preserves_semantics(
        k1 in 0.05..0.6f64,
        seed in 0u64..1000,
    ) {
        // Perturb the bundled config, serialize, reparse: the realization,
        // gains, and seeded initial state must survive the round trip.
        let mut scenario = Scenario::builtin("sim1").unwrap().unwrap();
        scenario.config.gains.k1 = k1;
        scenario.config.init.seed = seed;
        let scenario = Scenario::from_config(scenario.config).unwrap();
        let text = scenario.to_toml_string().unwrap();
        let again = Scenario::from_toml_str(&text).unwrap();
        prop_assert_eq!(scenario.gains.k1, again.gains.k1);
        prop_assert!((&scenario.realization.positions - &again.realization.positions).norm() == 0.0);
        let a = scenario.initial_state(None);
        let b = again.initial_state(None);
        for i in 0..5 {
            prop_assert_eq!(&a.positions[i], &b.positions[i]);
        }
    }

    #[test]
    fn switching_term_properties(
        s in prop::collection::vec(-4.0..4.0f64, 5),
        eps in 0.0..2.0f64,
    ) {
        use formation_core::control::switching_term;
        let s = DVector::from_vec(s);
        let sw = switching_term(&s, eps);
        let sw_neg = switching_term(&(-&s), eps);
        for k in 0..s.len() {
            prop_assert!(sw[k].abs() <= 1.0);
            prop_assert!(sw[k] * s[k] >= 0.0); // same sign as the argument
            prop_assert_eq!(sw[k], -sw_neg[k]); // odd
            if eps > 0.0 && s[k].abs() >= eps {
                prop_assert_eq!(sw[k], s[k].signum());
            }
        }
    }
}
