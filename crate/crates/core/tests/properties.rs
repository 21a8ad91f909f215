mod common;

use common::*;
use covdesign::design::utility_lmi_data;
use covdesign::kalman::{batch_ls_oracle, joseph_posterior, kalman_gain, run_filter};
use covdesign::matlib::{schur_psd_equiv, woodbury_lhs};
use covdesign::riccati::riccati_step;
use covdesign::sdp::{solve, SdpOptions};
use covdesign::sim::{covariance_sequence, monte_carlo, McConfig, PrivacyInjection};
use covdesign::{
    design_privacy, design_utility, solve_dare, theoretical_bound, DareOptions, Homography, InitialBelief, Mat,
    PixelModel, PrivacySpec, SdpStatus, SymMat, SymMat32, SystemModel, SystemModel32, UtilitySpec, UtilitySpec32,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dims(r: &mut ChaCha8Rng) -> (usize, usize) {
    let nx = r.random_range(1..=4);
    (nx, r.random_range(1..=nx.min(2)))
}

fn dare(model: &SystemModel, r: &SymMat) -> SymMat {
    let res = solve_dare(model, r, &DareOptions::default()).unwrap();
    assert!(res.converged);
    res.sigma_inf
}

fn min_eig(a: &SymMat) -> f64 {
    a.min_eigenvalue().unwrap()
}

fn rel_scale(a: &SymMat) -> f64 {
    1.0 + a.as_mat().max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inversion_lemma_matches_direct_inverse(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let l = random_pd(&mut r, n, 0.05);
        let u = random_pd(&mut r, n, 0.05);
        let lhs = woodbury_lhs(&l, &u).unwrap();
        let rhs = gauss_jordan_inverse(&(l.as_mat() + &gauss_jordan_inverse(u.as_mat())));
        prop_assert!(max_rel_diff(lhs.as_mat(), &rhs) < 1e-8);
    }

    #[test]
    fn block_and_complement_tests_agree(seed in any::<u64>(), n1 in 1usize..5, n2 in 1usize..4, shift in -3.0f64..3.0) {
        prop_assume!(shift.abs() > 1e-3);
        let mut r = rng(seed);
        let c = random_pd(&mut r, n2, 0.1);
        let b = random_mat(&mut r, n1, n2);
        let base = SymMat::new(&(&b * &gauss_jordan_inverse(c.as_mat())) * &b.transpose()).unwrap();
        let a = base.add_identity(shift);
        let eq = schur_psd_equiv(&a, &b, &c, 1e-9).unwrap();
        prop_assert!(eq.agree());
        prop_assert_eq!(eq.complement.is_psd, shift > 0.0);
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..7) {
        let mut r = rng(seed);
        let g = random_mat(&mut r, n, n);
        let a = SymMat::new(&g + &g.transpose()).unwrap();
        let e = a.eig().unwrap();
        let d = Mat::diag(&e.values);
        let back = &(&e.vectors * &d) * &e.vectors.transpose();
        prop_assert!(max_rel_diff(a.as_mat(), &back) < 1e-10);
        let orth = &e.vectors.transpose() * &e.vectors;
        prop_assert!(max_rel_diff(&orth, &Mat::identity(n)) < 1e-10);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cholesky_succeeds_iff_positive_definite(seed in any::<u64>(), n in 1usize..6, shift in -2.0f64..2.0) {
        let mut r = rng(seed);
        let a = random_pd(&mut r, n, 0.0).scale(0.2).add_identity(shift);
        let lo = min_eig(&a);
        prop_assume!(lo.abs() > 1e-6);
        prop_assert_eq!(a.chol().is_ok(), lo > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dare_is_monotone_and_above_noiseless_bound(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let r1 = random_pd(&mut r, ny, 0.1);
        let r2 = r1.add(&random_pd(&mut r, ny, 0.0));
        let (s1, s2) = (dare(&model, &r1), dare(&model, &r2));
        let lb = theoretical_bound(&model).unwrap();
        prop_assert!(min_eig(&s2.sub(&s1)) >= -1e-8 * rel_scale(&s2));
        prop_assert!(min_eig(&s1.sub(&lb)) >= -1e-8 * rel_scale(&s1));
    }

    #[test]
    fn joseph_form_matches_standard_form_at_optimal_gain(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let p = random_pd(&mut r, nx, 0.1);
        let meas = random_pd(&mut r, ny, 0.1);
        let k = kalman_gain(&p, &model, &meas).unwrap();
        let joseph = joseph_posterior(&p, &model, &meas, &k);
        let standard = &(&Mat::identity(nx) - &(&k * model.h())) * p.as_mat();
        prop_assert!(max_rel_diff(joseph.as_mat(), &standard) < 1e-10);
    }

    #[test]
    fn filter_matches_batch_estimate(seed in any::<u64>(), steps in 1usize..16) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let meas = random_pd(&mut r, ny, 0.2);
        let init = InitialBelief::new((0..nx).map(|_| normal(&mut r)).collect(), random_pd(&mut r, nx, 0.5)).unwrap();
        let ys: Vec<Vec<f64>> = (0..steps).map(|_| (0..ny).map(|_| 2.0 * normal(&mut r)).collect()).collect();
        let last = run_filter(&model, &meas, &init, &ys).unwrap().pop().unwrap();
        let batch = batch_ls_oracle(&model, &meas, &init, &ys).unwrap();
        let a = Mat::from_fn(nx, 1, |i, _| last.mean_post[i]);
        let b = Mat::from_fn(nx, 1, |i, _| batch.mean[i]);
        prop_assert!(max_rel_diff(&a, &b) < 1e-7);
        prop_assert!(max_rel_diff(last.cov_post.as_mat(), batch.cov.as_mat()) < 1e-7);
    }

    #[test]
    fn homography_round_trip(x in -10.0f64..10.0, y in -10.0f64..10.0, rows in 10usize..2000, cols in 10usize..2000) {
        let h = Homography::for_frame(rows, cols).unwrap();
        let back = h.to_spatial(&h.to_pixel(&[x, y]));
        prop_assert!((back[0] - x).abs() < 1e-12 && (back[1] - y).abs() < 1e-12);
        let p = h.to_pixel(&h.to_spatial(&[x * 30.0, y * 30.0]));
        prop_assert!((p[0] - x * 30.0).abs() < 1e-10 && (p[1] - y * 30.0).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn utility_round_trip_meets_target(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let r_ref = random_pd(&mut r, ny, 0.2);
        // The target is reached by noisier measurements, so `r_ref` is feasible
        // with slack and its cost bounds the optimum.
        let sigma_d = dare(&model, &r_ref.scale(1.05));
        let w = random_pd(&mut r, ny, 0.1);
        let d = design_utility(&UtilitySpec { model: model.clone(), sigma_d: sigma_d.clone(), w: w.clone() }).unwrap();
        prop_assert_eq!(d.certificate.status, SdpStatus::Optimal);
        let achieved = dare(&model, &d.r_opt);
        prop_assert!(min_eig(&sigma_d.sub(&achieved)) >= -1e-6);
        // The reference noise is feasible, so the optimum cannot cost more.
        let wtw = SymMat::new(&w.as_mat().transpose() * w.as_mat()).unwrap();
        let ref_cost = wtw.dot(&r_ref.inverse_pd().unwrap());
        prop_assert!(d.objective <= ref_cost + d.certificate.gap_bound);
    }

    #[test]
    fn certificate_is_consistent_at_optimum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let sigma_d = dare(&model, &random_pd(&mut r, ny, 0.2)).scale(r.random_range(1.0..1.5));
        let d = design_utility(&UtilitySpec { model, sigma_d, w: SymMat::identity(ny) }).unwrap();
        prop_assert!(d.certificate.schur_consistent);
        prop_assert!(d.certificate.riccati_slack_min_eigenvalue >= -1e-7);
        prop_assert!(d.certificate.lmi_min_eigenvalue >= -1e-7);
    }

    #[test]
    fn privacy_round_trip_meets_floor(seed in any::<u64>(), frac in 0.05f64..0.95) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let prior = random_pd(&mut r, nx, 0.3);
        let r_s = random_pd(&mut r, ny, 0.1);
        let open = prior.congruence(model.f()).add(model.q());
        let filtered = riccati_step(&model, &prior, &r_s).unwrap();
        let floor = filtered.add(&open.sub(&filtered).scale(frac));
        let spec = PrivacySpec { model: model.clone(), sigma_prior: prior.clone(), r_s: r_s.clone(), sigma_d_next: floor.clone(), w: SymMat::identity(ny) };
        let d = design_privacy(&spec).unwrap();
        prop_assert!(min_eig(&d.r_p) >= -1e-9);
        let next = riccati_step(&model, &prior, &r_s.add(&d.r_p)).unwrap();
        prop_assert!(min_eig(&next.sub(&floor)) >= -1e-6 * rel_scale(&floor));
    }

    #[test]
    fn weight_scaling_leaves_design_unchanged(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let sigma_d = dare(&model, &random_pd(&mut r, ny, 0.2)).scale(1.2);
        let w = random_pd(&mut r, ny, 0.1);
        let a = design_utility(&UtilitySpec { model: model.clone(), sigma_d: sigma_d.clone(), w: w.clone() }).unwrap();
        let b = design_utility(&UtilitySpec { model, sigma_d, w: w.scale(c) }).unwrap();
        prop_assert!(max_rel_diff(a.upsilon.as_mat(), b.upsilon.as_mat()) < 1e-6);
    }

    #[test]
    fn solver_is_deterministic_with_monotone_objective(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let sigma_d = dare(&model, &random_pd(&mut r, ny, 0.2)).scale(1.3);
        let problem = utility_lmi_data(&UtilitySpec { model, sigma_d, w: SymMat::identity(ny) }).unwrap();
        let a = solve(&problem, &SdpOptions::default());
        let b = solve(&problem, &SdpOptions::default());
        prop_assert_eq!(a.s_opt.as_mat(), b.s_opt.as_mat());
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        let path: Vec<f64> = a.history.iter().filter(|h| h.phase == 2).map(|h| h.objective).collect();
        prop_assert!(path.windows(2).all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs())));
    }

    #[test]
    fn injected_noise_keeps_next_prior_above_floor(seed in any::<u64>(), frame in 5usize..40, frac in 0.1f64..0.9) {
        let mut r = rng(seed);
        let (nx, ny) = dims(&mut r);
        let model = random_model(&mut r, nx, ny);
        let meas = random_pd(&mut r, ny, 0.2);
        let sigma0 = random_pd(&mut r, nx, 0.5);
        let plain = covariance_sequence(&model, &meas, &sigma0, frame + 2, None).unwrap();
        let prior = plain[frame].0.clone();
        let open = prior.congruence(model.f()).add(model.q());
        let filtered = riccati_step(&model, &prior, &meas).unwrap();
        let floor = filtered.add(&open.sub(&filtered).scale(frac));
        let d = design_privacy(&PrivacySpec { model: model.clone(), sigma_prior: prior, r_s: meas.clone(), sigma_d_next: floor.clone(), w: SymMat::identity(ny) }).unwrap();
        let injection = PrivacyInjection { frame, r_p: d.r_p };
        let seq = covariance_sequence(&model, &meas, &sigma0, frame + 2, Some(&injection)).unwrap();
        prop_assert!(min_eig(&seq[frame + 1].0.sub(&floor)) >= -1e-6 * rel_scale(&floor));
        for k in 0..=frame {
            prop_assert_eq!(seq[k].0.as_mat(), plain[k].0.as_mat());
        }
    }
}

#[test]
fn filter_covariance_is_seed_independent() {
    let pm = PixelModel { frames: 60, ..PixelModel::default() };
    let init = pm.default_belief();
    let r = SymMat::scaled_identity(2, 2.0);
    let a = monte_carlo(&pm, &r, &init, &McConfig::new(8, 1)).unwrap();
    let b = monte_carlo(&pm, &r, &init, &McConfig::new(8, 99)).unwrap();
    for (x, y) in a.filter_cov_per_frame.iter().zip(&b.filter_cov_per_frame) {
        assert_eq!(x.as_mat(), y.as_mat());
    }
    assert_ne!(a.rmse_per_frame, b.rmse_per_frame);
}

#[test]
fn single_precision_design_tracks_double() {
    let m64 = pixel_model();
    let target = dare(&m64, &SymMat::identity(2)).scale(1.5);
    let d64 = design_utility(&UtilitySpec { model: m64.clone(), sigma_d: target.clone(), w: SymMat::identity(2) }).unwrap();
    let m32 = SystemModel32::new(m64.f().cast(), m64.h().cast(), SymMat32::new(m64.q().as_mat().cast()).unwrap()).unwrap();
    let spec = UtilitySpec32 {
        model: m32,
        sigma_d: SymMat32::new(target.as_mat().cast()).unwrap(),
        w: SymMat32::identity(2),
    };
    let d32 = covdesign::design_utility(&spec).unwrap();
    for i in 0..2 {
        let (a, b) = (d64.r_opt[(i, i)], d32.r_opt[(i, i)] as f64);
        assert!((a - b).abs() / a < 1e-2, "{a} vs {b}");
    }
}
