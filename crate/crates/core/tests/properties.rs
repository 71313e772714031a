use ces_evd::asymptotics::{coeffs_closed_form_student, eigenvector_cov_xi, eigenvector_cov_xi_trace};
use ces_evd::ces::{CesDistribution, CoupledSampler};
use ces_evd::linalg::{
    commutation, hermitian_evd, hermitian_exp, phase_align, spd_function, spd_log, spd_sqrt, toeplitz_scatter, CMatrix,
    CVector, HermitianMatrix,
};
use ces_evd::low_rank::{build_factor_model, dft_basis, principal_projector, snr_loss, steering_vector};
use ces_evd::mestimator::{fixed_point_residual, fixed_point_solve, scm, student_spec, MEstimatorSpec, SolverOptions};
use ces_evd::riemannian::{
    biased_crlb_scm, digamma, eta, nat_distance, nat_distance_cholesky, nat_distance_sq, riemannian_logmap,
};
use ces_evd::rng::RandomStream;
use num_complex::Complex64;
use proptest::prelude::*;

fn gaussian_matrix(p: usize, q: usize, s: &mut RandomStream) -> CMatrix {
    CMatrix::from_fn(p, q, |_, _| s.complex_normal())
}

fn hermitian(p: usize, s: &mut RandomStream) -> HermitianMatrix {
    let a = gaussian_matrix(p, p, s);
    HermitianMatrix::hermitian_part(&a + a.adjoint()).unwrap()
}

fn pd(p: usize, s: &mut RandomStream) -> HermitianMatrix {
    let a = gaussian_matrix(p, 2 * p, s);
    let m = &a * a.adjoint() / Complex64::from((2 * p) as f64) + CMatrix::identity(p, p) * Complex64::from(0.1);
    HermitianMatrix::hermitian_part(m).unwrap()
}

fn unitary(p: usize, s: &mut RandomStream) -> CMatrix {
    gaussian_matrix(p, p, s).qr().q()
}

fn frob(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn rel(a: &CMatrix, b: &CMatrix) -> f64 {
    frob(&(a - b)) / frob(b).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evd_reconstructs_with_unitary_vectors(p in 1usize..10, seed in any::<u64>()) {
        let m = hermitian(p, &mut RandomStream::new(seed, 0));
        let e = hermitian_evd(&m).unwrap();
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(rel(e.reconstruct().matrix(), m.matrix()) < 1e-10);
        let g = e.eigenvectors.adjoint() * &e.eigenvectors;
        prop_assert!(frob(&(g - CMatrix::identity(p, p))) < 1e-10);
    }

    #[test]
    fn phase_align_is_idempotent_and_norm_preserving(p in 1usize..8, seed in any::<u64>()) {
        let mut s = RandomStream::new(seed, 1);
        let v = CVector::from_fn(p, |_, _| s.complex_normal());
        let r = CVector::from_fn(p, |_, _| s.complex_normal());
        let a = phase_align(&v, &r).unwrap();
        prop_assert!((a.norm() - v.norm()).abs() < 1e-12 * v.norm());
        prop_assert!(r.dotc(&a).im.abs() < 1e-10 * a.norm() * r.norm());
        prop_assert!((phase_align(&a, &r).unwrap() - &a).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn commutation_is_an_involutive_permutation(p in 1usize..7, seed in any::<u64>()) {
        let k = commutation(p).unwrap();
        prop_assert!(k.row_iter().all(|r| r.iter().filter(|&&x| x == 1.0).count() == 1 && r.sum() == 1.0));
        prop_assert!(k.column_iter().all(|c| c.sum() == 1.0));
        prop_assert_eq!(&k * &k, nalgebra::DMatrix::identity(p * p, p * p));
        let a = gaussian_matrix(p, p, &mut RandomStream::new(seed, 2));
        let va = ces_evd::linalg::vec(&a);
        let kc = k.map(Complex64::from);
        prop_assert!((kc * va - ces_evd::linalg::vec(&a.transpose())).norm() < 1e-14);
    }

    #[test]
    fn spectral_functions_are_consistent(p in 1usize..8, seed in any::<u64>()) {
        let m = pd(p, &mut RandomStream::new(seed, 3));
        prop_assert!(rel(spd_function(&m, |x| x).unwrap().matrix(), m.matrix()) < 1e-12);
        let r = spd_sqrt(&m).unwrap();
        prop_assert!(rel(&(r.matrix() * r.matrix()), m.matrix()) < 1e-10);
        prop_assert!(rel(hermitian_exp(&spd_log(&m).unwrap()).unwrap().matrix(), m.matrix()) < 1e-10);
    }

    #[test]
    fn natural_distance_paths_agree_and_are_invariant(p in 1usize..8, seed in any::<u64>()) {
        let mut s = RandomStream::new(seed, 4);
        let (a, b) = (pd(p, &mut s), pd(p, &mut s));
        let d = nat_distance(&a, &b).unwrap();
        prop_assert!((d - nat_distance_cholesky(&a, &b).unwrap()).abs() < 1e-10 * d.max(1.0));
        prop_assert!((d - nat_distance(&b, &a).unwrap()).abs() < 1e-10 * d.max(1.0));
        let g = gaussian_matrix(p, p, &mut s) + CMatrix::identity(p, p) * Complex64::from(3.0);
        let da = nat_distance(&a.congruence(&g), &b.congruence(&g)).unwrap();
        prop_assert!((d - da).abs() < 1e-8 * d.max(1.0));
        // squared norm of the whitened log map
        let l = riemannian_logmap(&a, &b).unwrap();
        let w = ces_evd::linalg::spd_inv_sqrt(&a).unwrap();
        let white = w.matrix() * l.matrix() * w.matrix();
        prop_assert!((nat_distance_sq(&a, &b).unwrap() - frob(&white).powi(2)).abs() < 1e-10 * d.max(1.0).powi(2));
    }

    #[test]
    fn digamma_recurrence(x in 0.05f64..50.0) {
        let lhs = digamma(x + 1.0).unwrap();
        prop_assert!((lhs - digamma(x).unwrap() - 1.0 / x).abs() < 1e-12 * (1.0 + 1.0 / x));
    }

    #[test]
    fn eta_and_biased_bound_decrease_in_n(p in 1usize..30, n in 0usize..3000) {
        let n = n + p;
        prop_assert!(eta(p, n + 1).unwrap() < eta(p, n).unwrap());
        prop_assert!(biased_crlb_scm(p, n + 2).unwrap().value < biased_crlb_scm(p, n + 1).unwrap().value);
    }

    #[test]
    fn coupled_sample_modular_variate_matches_quadratic_form(p in 1usize..6, d in 0.5f64..8.0, seed in any::<u64>()) {
        let sigma = pd(p, &mut RandomStream::new(seed, 5));
        let sampler = CoupledSampler::new(CesDistribution::student_t(d).unwrap(), &sigma).unwrap();
        let smp = sampler.sample(20, &mut RandomStream::new(seed, 6)).unwrap();
        let inv = ces_evd::linalg::spd_inverse(&sigma).unwrap();
        for i in 0..20 {
            let z = smp.z.column(i);
            let q = (z.adjoint() * inv.matrix() * z)[(0, 0)].re;
            prop_assert!((q - smp.q[i]).abs() < 1e-8 * smp.q[i].max(1e-300));
        }
    }

    #[test]
    fn xi_annihilates_its_eigenvector_and_matches_trace(p in 2usize..7, j in 0usize..7, seed in any::<u64>()) {
        let j = j % p;
        let e = hermitian_evd(&pd(p, &mut RandomStream::new(seed, 7))).unwrap();
        prop_assume!(e.require_simple(1e-6).is_ok());
        let xi = eigenvector_cov_xi(&e, j, 1.3).unwrap();
        let u = e.eigenvector(j);
        prop_assert!((xi.matrix() * &u).norm() < 1e-10 * xi.frobenius_norm().max(1.0));
        let tr = eigenvector_cov_xi_trace(&e.eigenvalues, j, 1.3).unwrap();
        prop_assert!((xi.trace() - tr).abs() < 1e-9 * tr.abs().max(1.0));
        // the phase convention of U does not matter
        let mut e2 = e.clone();
        let mut s = RandomStream::new(seed, 8);
        for mut c in e2.eigenvectors.column_iter_mut() {
            let ph = Complex64::from_polar(1.0, s.sample(rand_distr::Uniform::new(0.0, 6.28).unwrap()));
            c *= ph;
        }
        prop_assert!(rel(eigenvector_cov_xi(&e2, j, 1.3).unwrap().matrix(), xi.matrix()) < 1e-10);
    }

    #[test]
    fn principal_projector_ignores_phases(p in 3usize..9, seed in any::<u64>()) {
        let m = pd(p, &mut RandomStream::new(seed, 9));
        let e = hermitian_evd(&m).unwrap();
        prop_assume!(e.eigenvalues[0] - e.eigenvalues[1] > 1e-6);
        let p1 = principal_projector(&m, 1).unwrap();
        let u = e.eigenvector(0) * Complex64::from_polar(1.0, 1.1);
        prop_assert!(frob(&(p1.matrix() - &u * u.adjoint())) < 1e-12);
    }

    #[test]
    fn snr_loss_is_at_most_one(seed in any::<u64>(), n in 12usize..80) {
        let model = build_factor_model(dft_basis(8, 2), vec![50.0, 10.0], 1.0).unwrap();
        let steer = steering_vector(&model, &mut RandomStream::new(seed, 10)).unwrap();
        let sampler = CoupledSampler::new(CesDistribution::student_t(3.0).unwrap(), model.sigma()).unwrap();
        let z = sampler.sample(n, &mut RandomStream::new(seed, 11)).unwrap().z;
        let pr = principal_projector(&scm(&z), 2).unwrap();
        let perp = HermitianMatrix::new(CMatrix::identity(8, 8) - pr.matrix()).unwrap();
        let rho = snr_loss(&perp, &model, &steer).unwrap();
        prop_assert!(rho > 0.0 && rho <= 1.0 + 1e-12);
        prop_assert!((snr_loss(model.pi_perp(), &model, &steer).unwrap() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solver_is_equivariant(p in 2usize..6, extra in 5usize..40, seed in any::<u64>()) {
        let n = 2 * p + extra;
        let mut s = RandomStream::new(seed, 12);
        let sigma = pd(p, &mut s);
        let sampler = CoupledSampler::new(CesDistribution::student_t(3.0).unwrap(), &sigma).unwrap();
        let z = sampler.sample(n, &mut s).unwrap().z;
        let spec = student_spec(p, 3.0).unwrap();
        let opts = SolverOptions::default();
        let base = fixed_point_solve(&spec, &z, &opts).unwrap();
        prop_assert!(fixed_point_residual(&spec, &z, &base).unwrap() <= opts.tol);

        let v = unitary(p, &mut s);
        let rotated = fixed_point_solve(&spec, &(&v * &z), &opts).unwrap();
        prop_assert!(rel(rotated.matrix(), &(&v * base.matrix() * v.adjoint())) < 1e-8);

        let mut cols: Vec<usize> = (0..n).collect();
        cols.reverse();
        cols.swap(0, n / 2);
        let zp = z.select_columns(&cols);
        prop_assert!(rel(fixed_point_solve(&spec, &zp, &opts).unwrap().matrix(), base.matrix()) < 1e-12);

        let scaled = fixed_point_solve(&spec, &(&z * Complex64::from(2.5)), &opts).unwrap();
        prop_assert!(rel(scaled.matrix(), &(base.matrix() * Complex64::from(6.25))) < 1e-8);

        let unit = MEstimatorSpec::constant(1.0).unwrap();
        prop_assert!(rel(fixed_point_solve(&unit, &z, &opts).unwrap().matrix(), scm(&z).matrix()) < 1e-12);
        let g = fixed_point_solve(&ces_evd::mestimator::gaussian_spec(), &(&z * Complex64::from(0.3)), &opts).unwrap();
        prop_assert!(rel(g.matrix(), &(scm(&z).matrix() * Complex64::from(0.09))) < 1e-12);
    }

    #[test]
    fn student_coefficients_satisfy_assembly_identities(p in 1usize..40, d in 0.2f64..30.0) {
        let c = coeffs_closed_form_student(p, d).unwrap();
        let pf = p as f64;
        let t1 = c.a_m * pf * (pf + 1.0) / (c.c_m * c.c_m);
        let t2 = (c.a_m - pf * pf) / (c.c_m - pf * pf).powi(2) - c.a_m * (pf + 1.0) / (c.c_m * c.c_m);
        let s1 = (c.a * pf * (pf + 1.0) + c.c * (c.c - 2.0 * c.b)) / (c.c * c.c);
        let s2 = t2 + 2.0 * pf * (c.c - c.b) / (c.c * (c.c - pf * pf));
        for (x, y) in [(c.theta1, t1), (c.theta2, t2), (c.sigma1, s1), (c.sigma2, s2)] {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        prop_assert!(c.sigma1 >= 0.0 && c.theta1 >= 1.0);
        prop_assert!((c.sigma1 - 1.0 / (pf + d / 2.0)).abs() < 1e-12);
    }
}

#[test]
fn toeplitz_scatter_is_hermitian_pd() {
    let s = toeplitz_scatter(20, Complex64::from_polar(0.9, std::f64::consts::FRAC_PI_4)).unwrap();
    let e = hermitian_evd(&s).unwrap();
    assert!(e.eigenvalues[19] > 0.0);
    assert!((s.trace() - 20.0).abs() < 1e-12);
}
