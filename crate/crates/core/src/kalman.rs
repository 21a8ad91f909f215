//! Kalman filter recursion and a batch least-squares cross-check.
//!
//! Frame convention: the [`InitialBelief`] is the prior for frame 0, the first
//! measurement updates frame 0, and every later measurement is preceded by a
//! prediction step.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matlib::{Cholesky, Mat, SymMat};
use crate::riccati::SystemModel;
use crate::scalar::Real;

/// Prior and posterior moments for one frame.
#[derive(Clone, Debug, Serialize)]
pub struct FilterState<T> {
    pub mean_prior: Vec<T>,
    pub cov_prior: SymMat<T>,
    pub mean_post: Vec<T>,
    pub cov_post: SymMat<T>,
    /// Gain of the last update; zero until the frame has been updated.
    pub gain: Mat<T>,
    pub frame: usize,
}

#[derive(Clone, Debug)]
pub struct InitialBelief<T> {
    pub mu0: Vec<T>,
    pub sigma0: SymMat<T>,
}

impl<T: Real> InitialBelief<T> {
    pub fn new(mu0: Vec<T>, sigma0: SymMat<T>) -> Result<Self> {
        if mu0.len() != sigma0.dim() {
            return Err(Error::Dimension(format!(
                "initial mean has {} entries, covariance is {1}x{1}",
                mu0.len(),
                sigma0.dim()
            )));
        }
        Ok(Self { mu0, sigma0 })
    }
}

impl<T: Real> FilterState<T> {
    /// Frame-0 state before any measurement: posterior fields mirror the prior.
    pub fn from_belief(init: &InitialBelief<T>, ny: usize) -> Self {
        Self {
            mean_prior: init.mu0.clone(),
            cov_prior: init.sigma0.clone(),
            mean_post: init.mu0.clone(),
            cov_post: init.sigma0.clone(),
            gain: Mat::zeros(init.mu0.len(), ny),
            frame: 0,
        }
    }
}

fn check_state<T: Real>(state: &FilterState<T>, model: &SystemModel<T>) -> Result<()> {
    let n = model.nx();
    if state.mean_post.len() != n || state.cov_post.dim() != n || state.cov_prior.dim() != n {
        return Err(Error::Dimension(format!("filter state does not match model state dimension {n}")));
    }
    Ok(())
}

/// Propagates the posterior of frame `k` to the prior of frame `k + 1`.
pub fn predict<T: Real>(state: &FilterState<T>, model: &SystemModel<T>) -> Result<FilterState<T>> {
    check_state(state, model)?;
    let mean = model.f().mul_vec(&state.mean_post);
    let cov = state.cov_post.congruence(model.f()).add(model.q());
    Ok(FilterState {
        mean_prior: mean.clone(),
        cov_prior: cov.clone(),
        mean_post: mean,
        cov_post: cov,
        gain: Mat::zeros(model.nx(), model.ny()),
        frame: state.frame + 1,
    })
}

/// Optimal gain `K = Σ⁻Hᵀ(HΣ⁻Hᵀ + R)⁻¹`.
pub fn kalman_gain<T: Real>(cov_prior: &SymMat<T>, model: &SystemModel<T>, r: &SymMat<T>) -> Result<Mat<T>> {
    model.check_meas_cov(r, "R")?;
    let s = cov_prior.congruence(model.h()).add(r);
    let chol = Cholesky::new(&s).map_err(|_| Error::Singular {
        context: "innovation covariance H Σ⁻ Hᵀ + R".into(),
        min_eigenvalue: s.min_eigenvalue().map(Real::as_f64).unwrap_or(f64::NAN),
    })?;
    let ph = cov_prior.as_mat().matmul(&model.h().transpose());
    // K = P Hᵀ S⁻¹  ⇔  Kᵀ = S⁻¹ H P
    Ok(chol.solve_mat(&ph.transpose()).transpose())
}

/// Measurement update with observation `y` and noise covariance `R`.
pub fn update<T: Real>(
    state: &FilterState<T>,
    model: &SystemModel<T>,
    r: &SymMat<T>,
    y: &[T],
) -> Result<FilterState<T>> {
    check_state(state, model)?;
    if y.len() != model.ny() {
        return Err(Error::Dimension(format!("measurement has {} entries, expected {}", y.len(), model.ny())));
    }
    let k = kalman_gain(&state.cov_prior, model, r)?;
    let predicted = model.h().mul_vec(&state.mean_prior);
    let innovation: Vec<T> = y.iter().zip(&predicted).map(|(&a, &b)| a - b).collect();
    let correction = k.mul_vec(&innovation);
    let mean_post = state.mean_prior.iter().zip(&correction).map(|(&m, &c)| m + c).collect();
    let i_kh = &Mat::identity(model.nx()) - &k.matmul(model.h());
    let cov_post = SymMat::symmetrized(i_kh.matmul(state.cov_prior.as_mat()));
    Ok(FilterState {
        mean_prior: state.mean_prior.clone(),
        cov_prior: state.cov_prior.clone(),
        mean_post,
        cov_post,
        gain: k,
        frame: state.frame,
    })
}

/// Joseph-form posterior `(I−KH)Σ⁻(I−KH)ᵀ + KRKᵀ`, valid for any gain.
pub fn joseph_posterior<T: Real>(cov_prior: &SymMat<T>, model: &SystemModel<T>, r: &SymMat<T>, k: &Mat<T>) -> SymMat<T> {
    let i_kh = &Mat::identity(model.nx()) - &k.matmul(model.h());
    cov_prior.congruence(&i_kh).add(&r.congruence(k))
}

/// Filters a measurement sequence; one state per measurement.
pub fn run_filter<T: Real>(
    model: &SystemModel<T>,
    r: &SymMat<T>,
    init: &InitialBelief<T>,
    measurements: &[Vec<T>],
) -> Result<Vec<FilterState<T>>> {
    if init.mu0.len() != model.nx() {
        return Err(Error::Dimension(format!(
            "initial mean has {} entries, expected {}",
            init.mu0.len(),
            model.nx()
        )));
    }
    let mut out: Vec<FilterState<T>> = Vec::with_capacity(measurements.len());
    let mut state = FilterState::from_belief(init, model.ny());
    for (k, y) in measurements.iter().enumerate() {
        if k > 0 {
            state = predict(&state, model)?;
        }
        state = update(&state, model, r, y)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Final-frame posterior mean and covariance.
#[derive(Clone, Debug)]
pub struct BatchEstimate<T> {
    pub mean: Vec<T>,
    pub cov: SymMat<T>,
}

/// Longest horizon accepted by [`batch_ls_oracle`].
pub const BATCH_MAX_HORIZON: usize = 20;

/// Information-form MAP estimate over the whole trajectory, marginalized to
/// the last frame.
///
/// The trajectory is parameterized by `x₀` and whitened process noise
/// `v_k` (`w_k = Q^{1/2} v_k`), so singular `Q` is allowed; `Σ₀` and `R` must
/// be positive definite. The normal equations are solved densely, which is
/// why the horizon is capped.
pub fn batch_ls_oracle<T: Real>(
    model: &SystemModel<T>,
    r: &SymMat<T>,
    init: &InitialBelief<T>,
    measurements: &[Vec<T>],
) -> Result<BatchEstimate<T>> {
    let steps = measurements.len();
    if steps == 0 || steps > BATCH_MAX_HORIZON {
        return Err(Error::InvalidInput(format!(
            "batch horizon must be 1..={BATCH_MAX_HORIZON}, got {steps}"
        )));
    }
    let (n, m) = (model.nx(), model.ny());
    let dim = n * steps;
    let q_half = model.q().sqrt_psd()?.into_mat();
    let p0_inv = init.sigma0.inverse_pd().map_err(|_| Error::Singular {
        context: "batch oracle: initial covariance".into(),
        min_eigenvalue: init.sigma0.min_eigenvalue().map(Real::as_f64).unwrap_or(f64::NAN),
    })?;
    let r_inv = r.inverse_pd().map_err(|_| Error::Singular {
        context: "batch oracle: measurement covariance".into(),
        min_eigenvalue: r.min_eigenvalue().map(Real::as_f64).unwrap_or(f64::NAN),
    })?;

    // x_k = T_k z with z = (x₀, v₀, …, v_{N−2}).
    let mut transfer: Vec<Mat<T>> = Vec::with_capacity(steps);
    let mut t_k = Mat::zeros(n, dim);
    t_k.set_block(0, 0, &Mat::identity(n));
    transfer.push(t_k.clone());
    for k in 1..steps {
        let mut next = model.f().matmul(&t_k);
        let noise_in = &next.block(0, k * n, n, n) + &q_half;
        next.set_block(0, k * n, &noise_in);
        t_k = next;
        transfer.push(t_k.clone());
    }

    let mut info = Mat::zeros(dim, dim);
    info.set_block(0, 0, p0_inv.as_mat());
    for k in 1..steps {
        let i = Mat::identity(n);
        info.set_block(k * n, k * n, &i);
    }
    let mut eta = vec![T::zero(); dim];
    let prior_term = p0_inv.as_mat().mul_vec(&init.mu0);
    eta[..n].copy_from_slice(&prior_term);

    for (k, y) in measurements.iter().enumerate() {
        if y.len() != m {
            return Err(Error::Dimension(format!("measurement {k} has {} entries, expected {m}", y.len())));
        }
        let a = model.h().matmul(&transfer[k]);
        let at_rinv = a.transpose().matmul(r_inv.as_mat());
        info = &info + &at_rinv.matmul(&a);
        for (e, add) in eta.iter_mut().zip(at_rinv.mul_vec(y)) {
            *e += add;
        }
    }

    let info = SymMat::new(info)?;
    let chol = Cholesky::new(&info).map_err(|_| Error::Singular {
        context: "batch oracle: information matrix".into(),
        min_eigenvalue: info.min_eigenvalue().map(Real::as_f64).unwrap_or(f64::NAN),
    })?;
    let z = chol.solve_vec(&eta);
    let last = &transfer[steps - 1];
    let cov = SymMat::symmetrized(last.matmul(&chol.solve_mat(&last.transpose())));
    Ok(BatchEstimate {
        mean: last.mul_vec(&z),
        cov,
    })
}
