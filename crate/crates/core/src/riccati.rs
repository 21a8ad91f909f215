//! Steady-state covariance of the Kalman filter: the discrete algebraic
//! Riccati equation, its zero-measurement-noise limit, and the rank
//! diagnostics that guarantee a unique stabilizing solution.
//!
//! Both solvers iterate the filter's own covariance map
//! `Σ ← FΣFᵀ + Q − FΣHᵀ(HΣHᵀ + R)⁻¹HΣFᵀ` from `Σ₀ = Q` (or a caller-supplied
//! start) until successive iterates agree.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matlib::{numerical_rank, psd_check, Cholesky, Mat, SymMat, DEFAULT_PSD_TOL};
use crate::scalar::Real;

/// Linear-Gaussian model `x' = F x + w`, `y = H x + n`, `Cov(w) = Q`.
#[derive(Clone, Debug)]
pub struct SystemModel<T> {
    f: Mat<T>,
    h: Mat<T>,
    q: SymMat<T>,
}

impl<T: Real> SystemModel<T> {
    pub fn new(f: Mat<T>, h: Mat<T>, q: SymMat<T>) -> Result<Self> {
        if !f.is_square() {
            return Err(Error::Dimension(format!("F must be square, got {}x{}", f.rows(), f.cols())));
        }
        let nx = f.rows();
        if h.cols() != nx {
            return Err(Error::Dimension(format!("H has {} columns, expected {nx}", h.cols())));
        }
        if q.dim() != nx {
            return Err(Error::Dimension(format!("Q is {0}x{0}, expected {nx}x{nx}", q.dim())));
        }
        let check = psd_check(&q, T::tol(DEFAULT_PSD_TOL))?;
        if !check.is_psd {
            return Err(Error::InvalidInput(format!(
                "Q is not positive semidefinite (min eigenvalue {:e})",
                check.min_eigenvalue.as_f64()
            )));
        }
        Ok(Self { f, h, q })
    }

    pub fn f(&self) -> &Mat<T> {
        &self.f
    }

    pub fn h(&self) -> &Mat<T> {
        &self.h
    }

    pub fn q(&self) -> &SymMat<T> {
        &self.q
    }

    pub fn nx(&self) -> usize {
        self.f.rows()
    }

    pub fn ny(&self) -> usize {
        self.h.rows()
    }

    /// Same dynamics and observation map with a different process noise.
    pub fn with_q(&self, q: SymMat<T>) -> Result<Self> {
        Self::new(self.f.clone(), self.h.clone(), q)
    }

    pub(crate) fn check_state_cov(&self, s: &SymMat<T>, what: &str) -> Result<()> {
        if s.dim() != self.nx() {
            return Err(Error::Dimension(format!("{what} is {0}x{0}, expected {1}x{1}", s.dim(), self.nx())));
        }
        Ok(())
    }

    pub(crate) fn check_meas_cov(&self, r: &SymMat<T>, what: &str) -> Result<()> {
        if r.dim() != self.ny() {
            return Err(Error::Dimension(format!("{what} is {0}x{0}, expected {1}x{1}", r.dim(), self.ny())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DareOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// Starting iterate; `Q` when `None`.
    pub initial: Option<SymMat<T>>,
}

impl<T: Real> Default for DareOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::tol(1e-10),
            max_iter: 100_000,
            initial: None,
        }
    }
}

/// Steady-state prior covariance and convergence diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct DareResult<T> {
    pub sigma_inf: SymMat<T>,
    pub iterations: usize,
    /// Frobenius norm of the Riccati defect at `sigma_inf`.
    pub residual: T,
    pub converged: bool,
}

fn innovation_cov<T: Real>(model: &SystemModel<T>, sigma: &SymMat<T>, r: Option<&SymMat<T>>) -> SymMat<T> {
    let hsh = sigma.congruence(model.h());
    match r {
        Some(r) => hsh.add(r),
        None => hsh,
    }
}

fn riccati_map<T: Real>(model: &SystemModel<T>, sigma: &SymMat<T>, g: &SymMat<T>, what: &str) -> Result<SymMat<T>> {
    let chol = Cholesky::new(g).map_err(|_| Error::Singular {
        context: format!("{what}: innovation covariance H Σ Hᵀ + R"),
        min_eigenvalue: g.min_eigenvalue().map(Real::as_f64).unwrap_or(f64::NAN),
    })?;
    let fs = model.f().matmul(sigma.as_mat());
    let cross = fs.matmul(&model.h().transpose());
    let open_loop = sigma.congruence(model.f()).add(model.q());
    let gain_term = cross.matmul(&chol.solve_mat(&cross.transpose()));
    Ok(SymMat::symmetrized(open_loop.as_mat() - &gain_term))
}

/// One step of the prior-covariance recursion:
/// `FΣFᵀ + Q − FΣHᵀ(HΣHᵀ + R)⁻¹HΣFᵀ`.
pub fn riccati_step<T: Real>(model: &SystemModel<T>, sigma: &SymMat<T>, r: &SymMat<T>) -> Result<SymMat<T>> {
    model.check_state_cov(sigma, "Σ")?;
    model.check_meas_cov(r, "R")?;
    riccati_map(model, sigma, &innovation_cov(model, sigma, Some(r)), "Riccati step")
}

/// `‖Σ − step(Σ)‖_F`, computed from scratch. `r = None` is the noiseless equation.
pub fn dare_residual<T: Real>(model: &SystemModel<T>, sigma: &SymMat<T>, r: Option<&SymMat<T>>) -> Result<T> {
    model.check_state_cov(sigma, "Σ")?;
    if let Some(r) = r {
        model.check_meas_cov(r, "R")?;
    }
    let g = innovation_cov(model, sigma, r);
    let next = riccati_map(model, sigma, &g, "DARE residual")?;
    Ok(sigma.sub(&next).frobenius_norm())
}

fn iterate<T: Real>(
    model: &SystemModel<T>,
    opts: &DareOptions<T>,
    step: impl Fn(&SymMat<T>, usize) -> Result<SymMat<T>>,
    residual_of: impl Fn(&SymMat<T>) -> Result<T>,
) -> Result<DareResult<T>> {
    let mut sigma = match &opts.initial {
        Some(s) => {
            model.check_state_cov(s, "initial Σ")?;
            s.clone()
        }
        None => model.q().clone(),
    };
    let mut residual = T::infinity();
    for it in 1..=opts.max_iter {
        let next = step(&sigma, it)?;
        if !next.as_mat().is_finite() {
            return Err(Error::Numerical(format!("DARE iterate {it} is not finite")));
        }
        residual = next.sub(&sigma).frobenius_norm();
        sigma = next;
        let scale = T::one() + sigma.frobenius_norm();
        if residual <= opts.tol * scale {
            let fresh = residual_of(&sigma)?;
            if fresh <= opts.tol * scale {
                return Ok(DareResult {
                    sigma_inf: sigma,
                    iterations: it,
                    residual: fresh,
                    converged: true,
                });
            }
        }
    }
    Ok(DareResult {
        sigma_inf: sigma,
        iterations: opts.max_iter,
        residual,
        converged: false,
    })
}

/// One step of the prior-covariance recursion written in terms of the
/// measurement precision `Υ = R⁻¹`:
/// `F(Σ − ΣGᵀ(I + GΣGᵀ)⁻¹GΣ)Fᵀ + Q` with `G = Υ^{1/2}H`.
///
/// `Υ` may be singular, which models channels carrying no information; the
/// inner matrix has eigenvalues ≥ 1, so the step stays well conditioned where
/// `R = Υ⁻¹` would not.
pub fn riccati_step_precision<T: Real>(model: &SystemModel<T>, sigma: &SymMat<T>, upsilon: &SymMat<T>) -> Result<SymMat<T>> {
    model.check_state_cov(sigma, "Σ")?;
    model.check_meas_cov(upsilon, "Υ")?;
    let g = upsilon.sqrt_psd()?.as_mat().matmul(model.h());
    precision_map(model, sigma, &g)
}

fn precision_map<T: Real>(model: &SystemModel<T>, sigma: &SymMat<T>, g: &Mat<T>) -> Result<SymMat<T>> {
    let inner = sigma.congruence(g).add_identity(T::one());
    let chol = Cholesky::new(&inner)?;
    let gs = g.matmul(sigma.as_mat());
    let updated = SymMat::symmetrized(sigma.as_mat() - &gs.transpose().matmul(&chol.solve_mat(&gs)));
    Ok(updated.congruence(model.f()).add(model.q()))
}

/// Steady-state prior covariance for measurement noise `R`.
///
/// A run that exhausts `max_iter` is returned with `converged == false`.
pub fn solve_dare<T: Real>(model: &SystemModel<T>, r: &SymMat<T>, opts: &DareOptions<T>) -> Result<DareResult<T>> {
    model.check_meas_cov(r, "R")?;
    let check = psd_check(r, T::tol(DEFAULT_PSD_TOL))?;
    if !check.is_psd {
        return Err(Error::InvalidInput(format!(
            "R has a negative eigenvalue ({:e})",
            check.min_eigenvalue.as_f64()
        )));
    }
    iterate(
        model,
        opts,
        |sigma, _| riccati_map(model, sigma, &innovation_cov(model, sigma, Some(r)), "DARE"),
        |sigma| dare_residual(model, sigma, Some(r)),
    )
}

/// Steady-state prior covariance for measurement precision `Υ = R⁻¹`.
///
/// Equivalent to [`solve_dare`] at `R = Υ⁻¹` when `Υ` is invertible, and
/// remains accurate when `Υ` is singular or nearly so.
pub fn solve_dare_precision<T: Real>(
    model: &SystemModel<T>,
    upsilon: &SymMat<T>,
    opts: &DareOptions<T>,
) -> Result<DareResult<T>> {
    model.check_meas_cov(upsilon, "Υ")?;
    let check = psd_check(upsilon, T::tol(DEFAULT_PSD_TOL))?;
    if !check.is_psd {
        return Err(Error::InvalidInput(format!(
            "Υ has a negative eigenvalue ({:e})",
            check.min_eigenvalue.as_f64()
        )));
    }
    let g = upsilon.sqrt_psd()?.as_mat().matmul(model.h());
    let step = |sigma: &SymMat<T>| precision_map(model, sigma, &g);
    iterate(model, opts, |sigma, _| step(sigma), |sigma| Ok(sigma.sub(&step(sigma)?).frobenius_norm()))
}

/// Steady-state prior covariance with noise-free measurements (`R = 0`).
///
/// This is the smallest steady-state covariance any sensor can reach. Fails
/// with [`Error::Singular`] if `HΣHᵀ` loses rank along the iteration.
pub fn solve_dare_noiseless<T: Real>(model: &SystemModel<T>, opts: &DareOptions<T>) -> Result<DareResult<T>> {
    let floor = T::tol(1e-10);
    let step = |sigma: &SymMat<T>, it: usize| {
        let g = innovation_cov(model, sigma, None);
        let lo = g.min_eigenvalue()?;
        if lo < floor {
            return Err(Error::Singular {
                context: format!("noiseless DARE iterate {}: H Σ Hᵀ is rank deficient", it - 1),
                min_eigenvalue: lo.as_f64(),
            });
        }
        riccati_map(model, sigma, &g, "DARE")
    };
    iterate(model, opts, step, |sigma| dare_residual(model, sigma, None))
}

/// Observability / controllability rank diagnostics.
///
/// Full rank of `[H; HF; …; HF^{n−1}]` and of `[Q^{1/2}, FQ^{1/2}, …]` is
/// sufficient (not necessary) for detectability of `(F, H)` and
/// stabilizability of `(F, Q^{1/2})`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AssumptionReport {
    pub nx: usize,
    pub observability_rank: usize,
    pub controllability_rank: usize,
    pub observable: bool,
    pub controllable: bool,
    pub note: &'static str,
}

impl AssumptionReport {
    pub fn satisfied(&self) -> bool {
        self.observable && self.controllable
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !self.observable {
            w.push(format!(
                "observability matrix has rank {} < {}: (F, H) may not be detectable",
                self.observability_rank, self.nx
            ));
        }
        if !self.controllable {
            w.push(format!(
                "controllability matrix of (F, Q^1/2) has rank {} < {}: (F, Q^1/2) may not be stabilizable",
                self.controllability_rank, self.nx
            ));
        }
        w
    }
}

pub fn check_assumptions<T: Real>(model: &SystemModel<T>) -> Result<AssumptionReport> {
    let n = model.nx();
    let rel = T::lit(1e-8);

    let mut obs_blocks = Vec::with_capacity(n);
    let mut hf = model.h().clone();
    for _ in 0..n {
        obs_blocks.push(hf.clone());
        hf = hf.matmul(model.f());
    }
    let obs = Mat::vstack(&obs_blocks.iter().collect::<Vec<_>>());

    let q_half = model.q().sqrt_psd()?.into_mat();
    let mut ctrl_blocks = Vec::with_capacity(n);
    let mut fq = q_half;
    for _ in 0..n {
        ctrl_blocks.push(fq.clone());
        fq = model.f().matmul(&fq);
    }
    let ctrl = Mat::hstack(&ctrl_blocks.iter().collect::<Vec<_>>());

    let observability_rank = numerical_rank(&obs, rel)?;
    // rank(C) = rank(Cᵀ); the column-oriented SVD wants the tall orientation.
    let controllability_rank = numerical_rank(&ctrl.transpose(), rel)?;
    Ok(AssumptionReport {
        nx: n,
        observability_rank,
        controllability_rank,
        observable: observability_rank == n,
        controllable: controllability_rank == n,
        note: "full-rank observability/controllability is a sufficient condition for detectability/stabilizability",
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn scalar(f: f64, h: f64, q: f64) -> SystemModel<f64> {
        SystemModel::new(
            Mat::from_row_slice(1, 1, &[f]),
            Mat::from_row_slice(1, 1, &[h]),
            SymMat::from_diag(&[q]),
        )
        .unwrap()
    }

    pub(crate) fn pixel() -> SystemModel<f64> {
        let f = Mat::from_row_slice(
            4,
            4,
            &[1., 0., 1., 0., 0., 1., 0., 1., 0., 0., 1., 0., 0., 0., 0., 1.],
        );
        let h = Mat::from_row_slice(2, 4, &[1., 0., 0., 0., 0., 1., 0., 0.]);
        SystemModel::new(f, h, SymMat::from_diag(&[0.1, 0.1, 50.0, 50.0])).unwrap()
    }

    #[test]
    fn precision_form_matches_covariance_form() {
        let m = pixel();
        let r = SymMat::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.7]]).unwrap();
        let a = solve_dare(&m, &r, &DareOptions::default()).unwrap();
        let b = solve_dare_precision(&m, &r.inverse_pd().unwrap(), &DareOptions::default()).unwrap();
        assert!(a.converged && b.converged);
        assert!(a.sigma_inf.sub(&b.sigma_inf).frobenius_norm() < 1e-8);
    }

    #[test]
    fn singular_precision_drops_a_channel() {
        let m = pixel();
        let ups = SymMat::from_diag(&[1.0, 0.0]);
        let single = SystemModel::new(
            Mat::from_row_slice(2, 2, &[1., 1., 0., 1.]),
            Mat::from_row_slice(1, 2, &[1., 0.]),
            SymMat::from_diag(&[0.1, 50.0]),
        )
        .unwrap();
        let full = solve_dare_precision(&m, &ups, &DareOptions::default()).unwrap().sigma_inf;
        let axis = solve_dare(&single, &SymMat::identity(1), &DareOptions::default()).unwrap().sigma_inf;
        assert!((full[(0, 0)] - axis[(0, 0)]).abs() < 1e-8);
        assert!((full[(2, 2)] - axis[(1, 1)]).abs() < 1e-8);
    }

    #[test]
    fn memoryless_dynamics_prior_is_q() {
        let m = scalar(0.0, 1.0, 1.0);
        let r = solve_dare(&m, &SymMat::identity(1), &DareOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.sigma_inf[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_scalar_random_walk() {
        let m = scalar(1.0, 1.0, 1.0);
        let r = solve_dare_noiseless(&m, &DareOptions::default()).unwrap();
        assert!((r.sigma_inf[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_static_target_is_q() {
        let m = SystemModel::new(Mat::identity(2), Mat::identity(2), SymMat::scaled_identity(2, 0.7)).unwrap();
        let r = solve_dare_noiseless(&m, &DareOptions::default()).unwrap();
        assert!(r.sigma_inf.sub(&SymMat::scaled_identity(2, 0.7)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn noiseless_rank_deficiency_is_reported() {
        let m = pixel().with_q(SymMat::zeros(4)).unwrap();
        match solve_dare_noiseless(&m, &DareOptions::default()) {
            Err(Error::Singular { context, .. }) => assert!(context.contains("iterate 0")),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn negative_r_rejected() {
        let m = scalar(1.0, 1.0, 1.0);
        let err = solve_dare(&m, &SymMat::from_diag(&[-1.0]), &DareOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn more_noise_worse_estimate() {
        let m = pixel();
        let lo = solve_dare(&m, &SymMat::scaled_identity(2, 1.515), &DareOptions::default()).unwrap();
        let hi = solve_dare(&m, &SymMat::scaled_identity(2, 1e6), &DareOptions::default()).unwrap();
        assert!(lo.converged && hi.converged);
        assert!(hi.sigma_inf[(0, 0)] > 10.0 * lo.sigma_inf[(0, 0)]);
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let m = pixel();
        let opts = DareOptions {
            max_iter: 3,
            ..DareOptions::default()
        };
        let r = solve_dare(&m, &SymMat::identity(2), &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn assumption_diagnostics() {
        let rep = check_assumptions(&pixel()).unwrap();
        assert_eq!((rep.observability_rank, rep.controllability_rank), (4, 4));
        assert!(rep.satisfied());

        let m = SystemModel::new(pixel().f().clone(), Mat::zeros(2, 4), pixel().q().clone()).unwrap();
        assert_eq!(check_assumptions(&m).unwrap().observability_rank, 0);

        let m = pixel().with_q(SymMat::zeros(4)).unwrap();
        let rep = check_assumptions(&m).unwrap();
        assert_eq!(rep.controllability_rank, 0);
        assert_eq!(rep.warnings().len(), 1);
    }

    #[test]
    fn model_validation() {
        assert!(SystemModel::new(Mat::<f64>::zeros(2, 3), Mat::zeros(1, 2), SymMat::identity(2)).is_err());
        assert!(SystemModel::new(Mat::<f64>::identity(2), Mat::zeros(1, 3), SymMat::identity(2)).is_err());
        assert!(SystemModel::new(Mat::<f64>::identity(2), Mat::zeros(1, 2), SymMat::from_diag(&[1.0, -1.0])).is_err());
    }
}
