use super::*;
use crate::basis::make_box_basis;
use crate::cli::{solve_system, tune_threshold};
use crate::coupling::{build_coupling, ReservoirKind, ReservoirProfile};
use crate::fixtures::{random_interval_scenario, rng, uniform_gain_interval_loss};
use crate::quasimode::analyze_vector;
use crate::spectral::{assemble, eigendecompose};
use nalgebra::DMatrix;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn scalar(kind: ReservoirKind, v: f64) -> CouplingMatrix {
    CouplingMatrix::from_matrix(DMatrix::from_element(1, 1, v), kind).unwrap()
}

/// One universe mode with `ω = 1` and `L = λ₀`, optionally `Γ = γ₀`.
fn single_mode(
    lambda0: f64,
    gamma0: Option<f64>,
) -> (
    crate::basis::ModeBasis,
    CouplingMatrix,
    Option<CouplingMatrix>,
) {
    let b = make_box_basis(1, PI, 129).unwrap();
    (
        b,
        scalar(ReservoirKind::Gain, lambda0),
        gamma0.map(|g| scalar(ReservoirKind::Loss, g)),
    )
}

#[test]
fn first_moment_generator_reproduces_every_eigenvalue() {
    let mut r = rng(31);
    for n in [2, 4, 7] {
        let s = random_interval_scenario(&mut r, n, true).unwrap();
        let sys = assemble(&s.basis, &s.gain, s.loss.as_ref()).unwrap();
        let set = eigendecompose(&sys).unwrap();
        let g = derive_moment_generator(&s.gain, s.loss.as_ref(), s.basis.omega()).unwrap();
        for nu in 0..set.len() {
            let mean = DVector::from_iterator(
                n,
                set.right_vector(nu)
                    .iter()
                    .zip(s.basis.eps())
                    .map(|(x, e)| x * *e),
            );
            let rhs = g.first_moment_rhs(&mean);
            let mu = set.eigenvalues()[nu];
            let res = (rhs - &mean * mu).norm() / (mu.norm() * mean.norm());
            assert!(res < 1e-10, "mode {nu}: {res}");
        }
    }
}

#[test]
fn dominant_eigenvalue_is_half_net_gain_minus_i_omega() {
    let mut r = rng(32);
    let s = random_interval_scenario(&mut r, 4, false).unwrap();
    let sol = solve_system(&s.basis, &s.gain, None, None).unwrap();
    let rep = &sol.report;
    let g = derive_moment_generator(&s.gain, None, s.basis.omega()).unwrap();
    let v = DVector::from_iterator(4, rep.c.iter().zip(&rep.eps).map(|(x, e)| x * *e));
    let rhs = g.first_moment_rhs(&v);
    // d<A>/dt for A ∝ Σ ε c a, using the transpose pairing of the symmetric M
    let a_dot: Complex64 = v
        .iter()
        .zip(rhs.iter())
        .map(|(x, y)| x * y)
        .sum::<Complex64>()
        / v.iter().map(|x| x * x).sum::<Complex64>();
    let expected = c(rep.lambda / 2.0, -rep.omega_mean);
    assert!(
        (a_dot - expected).norm() < 1e-12 * expected.norm(),
        "{a_dot} vs {expected}"
    );
}

#[test]
fn free_evolution_keeps_amplitudes() {
    let b = make_box_basis(3, PI, 129).unwrap();
    let zero = CouplingMatrix::zeros(3, ReservoirKind::Gain);
    let g = derive_moment_generator(&zero, None, b.omega()).unwrap();
    let s0 = MomentState::vacuum(3).displaced(&[c(1.0, 0.0), c(0.0, 2.0), c(-0.5, 0.5)]);
    let s1 = evolve(&s0, &g, 1.0, g.recommended_dt()).unwrap();
    for k in 0..3 {
        assert!((s1.mean[k].norm() - s0.mean[k].norm()).abs() < 1e-12);
        let expected = s0.mean[k] * Complex64::from_polar(1.0, -b.omega()[k]);
        assert!((s1.mean[k] - expected).norm() < 1e-10);
    }
}

#[test]
fn single_mode_amplifier_rhs_is_textbook() {
    let (b, l, _) = single_mode(0.8, None);
    let g = derive_moment_generator(&l, None, b.omega()).unwrap();
    let mut s = MomentState::vacuum(1);
    s.normal[(0, 0)] = c(2.5, 0.0);
    let mut dy = vec![c(0.0, 0.0); 3];
    g.rhs(&s.to_flat(), &mut dy);
    assert!((dy[1] - c(0.8 * (2.5 + 1.0), 0.0)).norm() < 1e-15);
}

#[test]
fn single_mode_amplifier_from_vacuum_matches_closed_form() {
    let lambda0 = 0.7;
    let (b, l, _) = single_mode(lambda0, None);
    let g = derive_moment_generator(&l, None, b.omega())
        .unwrap()
        .in_rotating_frame(1.0);
    let t = 1.0 / lambda0;
    let s = evolve(&MomentState::vacuum(1), &g, t, g.recommended_dt()).unwrap();
    let expected = (lambda0 * t).exp() - 1.0;
    assert!((s.normal[(0, 0)].re - expected).abs() < 1e-6 * expected);
}

#[test]
fn zero_generator_leaves_state_unchanged() {
    let zero = CouplingMatrix::zeros(2, ReservoirKind::Gain);
    let g = derive_moment_generator(&zero, None, &[0.0, 0.0]).unwrap();
    assert_eq!(g.rate_scale(), 0.0);
    let s0 = MomentState::vacuum(2).displaced(&[c(0.3, -0.1), c(1.0, 1.0)]);
    let s1 = evolve(&s0, &g, 2.0, 0.5).unwrap();
    assert_eq!(s1.mean, s0.mean);
    assert_eq!(s1.normal, s0.normal);
    assert_eq!(s1.anomalous, s0.anomalous);
    assert_eq!(s1.t, 2.0);
}

#[test]
fn rk4_error_drops_sixteenfold_when_step_halves() {
    // Steps far above the production limit, driven through the kernel
    // directly, so truncation error dominates rounding.
    let lambda0 = 1.0;
    let (b, l, _) = single_mode(lambda0, None);
    let g = derive_moment_generator(&l, None, b.omega())
        .unwrap()
        .in_rotating_frame(1.0);
    let run = |steps: usize| {
        let h = 1.0 / steps as f64;
        let mut y = MomentState::vacuum(1).to_flat();
        let mut rk = Rk4::new(y.len());
        for _ in 0..steps {
            rk.step(&g, &mut y, h);
        }
        (y[1].re - (1.0f64.exp() - 1.0)).abs()
    };
    let ratio = run(10) / run(20);
    assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
}

#[test]
fn oversized_step_is_refused_with_suggestion() {
    let (b, l, _) = single_mode(2.0, None);
    let g = derive_moment_generator(&l, None, b.omega()).unwrap();
    match evolve(&MomentState::vacuum(1), &g, 1.0, 1e-2) {
        Err(Error::StepTooLarge { suggested, .. }) => {
            assert!((suggested - g.recommended_dt()).abs() < 1e-18)
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let b = make_box_basis(2, PI, 129).unwrap();
    let l = CouplingMatrix::zeros(3, ReservoirKind::Gain);
    assert!(matches!(
        derive_moment_generator(&l, None, b.omega()),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn evolution_preserves_state_invariants() {
    let mut r = rng(33);
    let s = random_interval_scenario(&mut r, 4, true).unwrap();
    let g = derive_moment_generator(&s.gain, s.loss.as_ref(), s.basis.omega())
        .unwrap()
        .in_rotating_frame(2.0);
    let s0 =
        MomentState::vacuum(4).displaced(&[c(1.0, 0.0), c(0.0, 0.5), c(0.2, 0.2), c(-1.0, 0.0)]);
    let mut all_ok = true;
    evolve_observed(&s0, &g, 2.0, g.recommended_dt(), 200, |st| {
        let d = st.diagnostics();
        let scale = st.normal.norm().max(1.0);
        all_ok &= d.hermiticity <= 1e-8 * scale
            && d.symmetry <= 1e-8 * scale
            && d.min_normal_eigenvalue >= -1e-9 * scale;
    })
    .unwrap();
    assert!(all_ok);
}

#[test]
fn vacuum_variance_averaged_is_n2_times_weight() {
    let mut r = rng(34);
    let s = random_interval_scenario(&mut r, 5, false).unwrap();
    let sol = solve_system(&s.basis, &s.gain, None, None).unwrap();
    let rep = &sol.report;
    let v = quadrature_variance(&MomentState::vacuum(5), &QuadratureProbe::averaged(rep)).unwrap();
    let expected = rep.n2 * rep.weight;
    assert!((v - expected).abs() < 1e-12 * expected);
    // same number through E²K
    assert!((v - rep.e_nu * rep.e_nu * rep.k).abs() < 1e-10 * expected);
}

#[test]
fn vacuum_variance_of_single_universe_mode() {
    let b = make_box_basis(3, PI, 129).unwrap();
    let l = CouplingMatrix::from_matrix(
        DMatrix::from_diagonal_element(3, 3, 0.5),
        ReservoirKind::Gain,
    )
    .unwrap();
    let rep = analyze_vector(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 0, &b, &l, None).unwrap();
    let e2 = rep.e_nu * rep.e_nu;
    for i in [10, 40, 64] {
        let v = quadrature_variance(
            &MomentState::vacuum(3),
            &QuadratureProbe::at(&rep, i).unwrap(),
        )
        .unwrap();
        let u = b.mode(0)[i];
        assert!((v - e2 * u * u).abs() < 1e-12, "{v} vs {}", e2 * u * u);
    }
}

#[test]
fn displacement_does_not_change_variance() {
    let mut r = rng(35);
    let s = random_interval_scenario(&mut r, 3, false).unwrap();
    let sol = solve_system(&s.basis, &s.gain, None, None).unwrap();
    let rep = &sol.report;
    let mut st = MomentState::vacuum(3);
    st.normal[(0, 0)] = c(0.4, 0.0);
    st.normal[(1, 1)] = c(1.1, 0.0);
    st.anomalous[(0, 1)] = c(0.1, 0.05);
    st.anomalous[(1, 0)] = c(0.1, 0.05);
    let moved = st.displaced(&[c(3.0, -1.0), c(0.5, 2.0), c(-1.0, 0.0)]);
    for probe in [
        QuadratureProbe::averaged(rep),
        QuadratureProbe::at(rep, 50).unwrap(),
    ] {
        let a = quadrature_variance(&st, &probe).unwrap();
        let b = quadrature_variance(&moved, &probe).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn probe_out_of_range_is_rejected() {
    let mut r = rng(36);
    let s = random_interval_scenario(&mut r, 2, false).unwrap();
    let sol = solve_system(&s.basis, &s.gain, None, None).unwrap();
    assert!(QuadratureProbe::at(&sol.report, sol.report.u.len()).is_err());
}

#[test]
fn noise_law_passes_for_diagonal_gain() {
    let b = make_box_basis(3, PI, 129).unwrap();
    let l = build_coupling(
        &b,
        &ReservoirProfile::uniform(b.grid(), 0.6, ReservoirKind::Gain).unwrap(),
    )
    .unwrap();
    let sol = solve_system(&b, &l, None, None).unwrap();
    let g = derive_moment_generator(&l, None, b.omega()).unwrap();
    let check = verify_noise_law(&sol.report, &g, None).unwrap();
    assert!(check.passed, "{}", check.max_deviation);
}

#[test]
fn noise_law_passes_on_random_four_mode_gain_and_detects_corrupted_k() {
    let mut r = rng(37);
    let s = random_interval_scenario(&mut r, 4, false).unwrap();
    let sol = solve_system(&s.basis, &s.gain, None, None).unwrap();
    let g = derive_moment_generator(&s.gain, None, s.basis.omega()).unwrap();
    let checks = verify_noise_law_at(&sol.report, &g, &[17, 64, 101], None).unwrap();
    assert_eq!(checks.len(), 4);
    for ch in &checks {
        assert!(ch.passed, "{:?}: {}", ch.position, ch.max_deviation);
        assert!(ch.trace.variance.iter().all(|v| *v >= 0.0));
    }

    let mut bad = sol.report.clone();
    bad.k *= 1.01;
    let check = verify_noise_law(&bad, &g, None).unwrap();
    assert!(!check.passed, "{}", check.max_deviation);
}

#[test]
fn noise_law_needs_positive_gain_and_no_loss() {
    let (b, l, loss) = single_mode(1.0, Some(0.5));
    let sol = solve_system(&b, &l, loss.as_ref(), None).unwrap();
    let g = derive_moment_generator(&l, loss.as_ref(), b.omega()).unwrap();
    assert!(matches!(
        verify_noise_law(&sol.report, &g, None),
        Err(Error::NotApplicable(_))
    ));

    let zero = CouplingMatrix::zeros(1, ReservoirKind::Gain);
    let sol = solve_system(&b, &zero, None, None).unwrap();
    let g = derive_moment_generator(&zero, None, b.omega()).unwrap();
    assert!(matches!(
        verify_noise_law(&sol.report, &g, None),
        Err(Error::NotApplicable(_))
    ));
}

#[test]
fn compensated_system_diffuses_with_k_one() {
    let b = make_box_basis(4, PI, 257).unwrap();
    let p = ReservoirProfile::interval(b.grid(), 0.3, 1.9, 0.8, ReservoirKind::Gain).unwrap();
    let l = build_coupling(&b, &p).unwrap();
    let loss = CouplingMatrix::from_matrix(l.matrix().clone(), ReservoirKind::Loss).unwrap();
    // L = Γ: every quasi mode is a universe mode and λ = γ for all of them.
    let sol = solve_system(&b, &l, Some(&loss), Some(1.0)).unwrap();
    assert!((sol.report.k - 1.0).abs() < 1e-10);
    let g = derive_moment_generator(&l, Some(&loss), b.omega()).unwrap();
    let check = verify_threshold_diffusion(&sol.report, &g, None).unwrap();
    assert!(check.passed, "{}", check.max_deviation);
    let e2 = sol.report.e_nu.powi(2);
    let slope = check.trace.slope_fit.unwrap();
    assert!((slope / (2.0 * sol.report.lambda * e2) - 1.0).abs() < 1e-4);
}

#[test]
fn tuned_uniform_gain_with_half_space_loss_diffuses_with_k() {
    let b = make_box_basis(4, PI, 513).unwrap();
    let l = build_coupling(
        &b,
        &ReservoirProfile::uniform(b.grid(), 0.3, ReservoirKind::Gain).unwrap(),
    )
    .unwrap();
    let loss = build_coupling(
        &b,
        &ReservoirProfile::interval(b.grid(), 0.0, PI / 2.0, 0.8, ReservoirKind::Loss).unwrap(),
    )
    .unwrap();
    let sol = tune_threshold(&b, &l, &loss, None).unwrap();
    let g = derive_moment_generator(&sol.gain, Some(&loss), b.omega()).unwrap();
    let check = verify_threshold_diffusion(&sol.report, &g, None).unwrap();
    let k_fit =
        check.trace.slope_fit.unwrap() / (2.0 * sol.report.lambda * sol.report.e_nu.powi(2));
    assert!(
        (k_fit - sol.report.k).abs() < 1e-4 * sol.report.k,
        "{k_fit} vs {}",
        sol.report.k
    );
    assert!(check.passed);
}

#[test]
fn zero_gain_and_loss_give_zero_slope() {
    let b = make_box_basis(2, PI, 129).unwrap();
    let zero = CouplingMatrix::zeros(2, ReservoirKind::Gain);
    let zero_loss = CouplingMatrix::zeros(2, ReservoirKind::Loss);
    let sol = solve_system(&b, &zero, Some(&zero_loss), None).unwrap();
    let g = derive_moment_generator(&zero, Some(&zero_loss), b.omega()).unwrap();
    let check = verify_threshold_diffusion(&sol.report, &g, None).unwrap();
    assert_eq!(check.expected_slope, Some(0.0));
    assert!(check.trace.slope_fit.unwrap().abs() <= 1e-12);
    assert!(check.passed);
}

#[test]
fn off_threshold_is_refused() {
    let mut r = rng(38);
    let s = uniform_gain_interval_loss(&mut r, 3).unwrap();
    let sol = solve_system(&s.basis, &s.gain, s.loss.as_ref(), None).unwrap();
    let g = derive_moment_generator(&s.gain, s.loss.as_ref(), s.basis.omega()).unwrap();
    assert!(matches!(
        verify_threshold_diffusion(&sol.report, &g, None),
        Err(Error::NotAtThreshold { .. })
    ));
}

#[test]
fn linewidth_direct_substitution() {
    let (b, l, loss) = single_mode(1.0, Some(1.0));
    let sol = solve_system(&b, &l, loss.as_ref(), None).unwrap();
    let rep = &sol.report;
    assert!((rep.k - 1.0).abs() < 1e-15 && (rep.n2 - 1.0).abs() < 1e-12);
    let w = linewidth(rep, 1.0).unwrap();
    assert!((w.phase_diffusion - 0.25).abs() < 1e-12);
    let w2 = linewidth(rep, 2.0).unwrap();
    assert!((w2.phase_diffusion - 0.125).abs() < 1e-12);
    assert!(matches!(linewidth(rep, 0.0), Err(Error::ZeroPhotonNumber)));
}

#[test]
fn quadrature_diffusion_over_intensity_is_twice_phase_diffusion() {
    let (b, l, loss) = single_mode(1.0, Some(1.0));
    let sol = solve_system(&b, &l, loss.as_ref(), None).unwrap();
    let w = linewidth(&sol.report, 3.0).unwrap();
    let ratio = w.quadrature_diffusion_per_intensity() / w.phase_diffusion;
    assert!((ratio - 2.0).abs() < 1e-12, "{ratio}");
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn variance_is_displacement_invariant(
            alpha in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3),
            point in 5usize..120,
        ) {
            let mut r = rng(40);
            let s = random_interval_scenario(&mut r, 3, false).unwrap();
            let sol = solve_system(&s.basis, &s.gain, None, None).unwrap();
            let rep = &sol.report;
            let alpha: Vec<Complex64> = alpha.into_iter().map(|(a, b)| c(a, b)).collect();
            let moved = MomentState::vacuum(3).displaced(&alpha);
            for probe in [QuadratureProbe::averaged(rep), QuadratureProbe::at(rep, point).unwrap()] {
                let a = quadrature_variance(&MomentState::vacuum(3), &probe).unwrap();
                let b = quadrature_variance(&moved, &probe).unwrap();
                let scale = 1.0 + alpha.iter().map(|z| z.norm_sqr()).sum::<f64>() * rep.weight;
                prop_assert!((a - b).abs() <= 1e-12 * scale, "{} vs {}", a, b);
            }
        }
    }
}
