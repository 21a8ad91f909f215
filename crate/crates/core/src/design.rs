//! Sensor-precision and privacy-noise design.
//!
//! *Utility design* picks the cheapest measurement precision `Υ = R⁻¹` whose
//! steady-state prior covariance stays below a prescribed `Σᵈ`. The Riccati
//! inequality `Σᵈ ⪰ FΣᵈFᵀ + Q − FΣᵈHᵀ(HΣᵈHᵀ + Υ⁻¹)⁻¹HΣᵈFᵀ` is rewritten
//! with the inversion lemma and a Schur complement as the LMI
//!
//! ```text
//! [[M₁₁, FΣᵈHᵀ], [HΣᵈFᵀ, L + LΥL]] ⪰ 0,   L = HΣᵈHᵀ,
//! M₁₁ = Σᵈ − FΣᵈFᵀ − Q + FΣᵈHᵀL⁻¹HΣᵈFᵀ.
//! ```
//!
//! *Privacy design* picks the cheapest extra measurement noise `R_p` that keeps
//! the next predicted covariance above a floor `Σᵈ_{k+1}`:
//!
//! ```text
//! [[FΣ⁻Fᵀ + Q − Σᵈ_{k+1}, FΣ⁻Hᵀ], [HΣ⁻Fᵀ, HΣ⁻Hᵀ + R_s + R_p]] ⪰ 0.
//! ```
//!
//! Both designs are re-checked against the nonlinear recursion before they
//! are returned.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matlib::{psd_check, schur_psd_equiv, Mat, SymMat, DEFAULT_PSD_TOL};
use crate::riccati::{riccati_step, riccati_step_precision, solve_dare, solve_dare_noiseless, solve_dare_precision, DareOptions, SystemModel};
use crate::scalar::Real;
use crate::sdp::{solve_traced, SdpOptions, SdpProblem, SdpSolution, SdpStatus};

/// Slack allowed when checking a returned design against its guarantee.
pub const GUARANTEE_TOL: f64 = 1e-6;

/// Smallest eigenvalue kept when inverting an optimal precision.
pub const PRECISION_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct UtilitySpec<T> {
    pub model: SystemModel<T>,
    /// Prescribed steady-state prior covariance, `n_x × n_x`.
    pub sigma_d: SymMat<T>,
    /// Objective weight, `n_y × n_y`; the cost is `trace(WᵀWΥ)`.
    pub w: SymMat<T>,
}

#[derive(Clone, Debug)]
pub struct PrivacySpec<T> {
    pub model: SystemModel<T>,
    /// Current prior covariance `Σ⁻_k`.
    pub sigma_prior: SymMat<T>,
    /// Noise the sensing pipeline already adds.
    pub r_s: SymMat<T>,
    /// Floor on the next predicted covariance.
    pub sigma_d_next: SymMat<T>,
    pub w: SymMat<T>,
}

/// Solver diagnostics attached to every design.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate<T> {
    pub status: SdpStatus,
    pub gap_bound: T,
    pub phase1_margin: T,
    pub near_boundary: bool,
    pub constraint_dim: usize,
    pub reduced_dim: usize,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// Smallest eigenvalue of the full LMI block at the optimum.
    pub lmi_min_eigenvalue: T,
    /// Smallest eigenvalue of the nonlinear inequality's slack at the optimum.
    pub riccati_slack_min_eigenvalue: T,
    /// Block and Schur-complement PSD tests agree at the optimum.
    pub schur_consistent: bool,
    pub message: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct UtilityDesign<T> {
    pub upsilon: SymMat<T>,
    pub r_opt: SymMat<T>,
    pub objective: T,
    /// Steady-state prior covariance at `r_opt`.
    pub achieved_sigma_inf: SymMat<T>,
    /// An eigenvalue of `upsilon` was raised to [`PRECISION_FLOOR`] before inversion.
    pub precision_floor_applied: bool,
    pub certificate: Certificate<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrivacyDesign<T> {
    pub r_p: SymMat<T>,
    /// Predicted covariance at `k + 1` under `R_s + R_p`.
    pub achieved_sigma_next: SymMat<T>,
    /// Posterior covariance at `k` under `R_s + R_p`, whose propagation is `achieved_sigma_next`.
    pub implied_posterior: SymMat<T>,
    pub objective: T,
    pub certificate: Certificate<T>,
}

fn guarantee_tol<T: Real>() -> T {
    T::tol(GUARANTEE_TOL)
}

fn require_psd<T: Real>(a: &SymMat<T>, what: &str) -> Result<()> {
    let c = psd_check(a, T::tol(DEFAULT_PSD_TOL))?;
    if !c.is_psd {
        return Err(Error::InvalidInput(format!(
            "{what} is not positive semidefinite (min eigenvalue {:e})",
            c.min_eigenvalue.as_f64()
        )));
    }
    Ok(())
}

fn weight_cost<T: Real>(w: &SymMat<T>, ny: usize) -> Result<SymMat<T>> {
    if w.dim() != ny {
        return Err(Error::Dimension(format!("W is {0}x{0}, expected {1}x{1}", w.dim(), ny)));
    }
    let c = SymMat::symmetrized(w.as_mat().transpose().matmul(w.as_mat()));
    if c.min_eigenvalue()? <= T::zero() {
        return Err(Error::InvalidInput("W must be nonsingular".into()));
    }
    Ok(c)
}

fn pd_or_singular<T: Real>(a: &SymMat<T>, context: &str) -> Result<()> {
    let lo = a.min_eigenvalue()?;
    if lo <= T::tol(1e-12) * (T::one() + a.frobenius_norm()) {
        return Err(Error::Singular {
            context: context.into(),
            min_eigenvalue: lo.as_f64(),
        });
    }
    Ok(())
}

/// LMI data for utility design; the variable is the precision `Υ`.
pub fn utility_lmi_data<T: Real>(spec: &UtilitySpec<T>) -> Result<SdpProblem<T>> {
    let model = &spec.model;
    model.check_state_cov(&spec.sigma_d, "Σᵈ")?;
    let cost = weight_cost(&spec.w, model.ny())?;
    let sd = &spec.sigma_d;
    let l = sd.congruence(model.h());
    pd_or_singular(&l, "utility LMI: H Σᵈ Hᵀ")?;
    let x = model.f().matmul(sd.as_mat()).matmul(&model.h().transpose());
    let l_chol = l.chol()?;
    let correction = SymMat::symmetrized(x.matmul(&l_chol.solve_mat(&x.transpose())));
    let m11 = sd.sub(&sd.congruence(model.f())).sub(model.q()).add(&correction);
    let (nx, ny) = (model.nx(), model.ny());
    let g0 = SymMat::symmetrized(Mat::block2x2(
        m11.as_mat(),
        &x,
        &x.transpose(),
        l.as_mat(),
    ));
    SdpProblem::from_map(cost, g0, |e| {
        let mut out = Mat::zeros(nx + ny, nx + ny);
        out.set_block(nx, nx, e.congruence(l.as_mat()).as_mat());
        SymMat::symmetrized(out)
    })
}

/// `diag(I, (HΣᵈHᵀ)⁻¹)`: turns the lower-right block into `(HΣᵈHᵀ)⁻¹ + Υ`.
fn utility_preconditioner<T: Real>(spec: &UtilitySpec<T>) -> Result<Mat<T>> {
    let (nx, ny) = (spec.model.nx(), spec.model.ny());
    let l_inv = spec.sigma_d.congruence(spec.model.h()).inverse_pd()?;
    let mut t = Mat::identity(nx + ny);
    t.set_block(nx, nx, l_inv.as_mat());
    Ok(t)
}

/// LMI data for privacy design; the variable is the injected noise `R_p`.
pub fn privacy_lmi_data<T: Real>(spec: &PrivacySpec<T>) -> Result<SdpProblem<T>> {
    let model = &spec.model;
    model.check_state_cov(&spec.sigma_prior, "Σ⁻")?;
    model.check_state_cov(&spec.sigma_d_next, "Σᵈ_{k+1}")?;
    model.check_meas_cov(&spec.r_s, "R_s")?;
    require_psd(&spec.sigma_prior, "Σ⁻")?;
    require_psd(&spec.sigma_d_next, "Σᵈ_{k+1}")?;
    require_psd(&spec.r_s, "R_s")?;
    let cost = weight_cost(&spec.w, model.ny())?;
    let sp = &spec.sigma_prior;
    let l1 = model.f().matmul(sp.as_mat()).matmul(&model.h().transpose());
    let l2 = sp.congruence(model.h()).add(&spec.r_s);
    pd_or_singular(&l2, "privacy LMI: H Σ⁻ Hᵀ + R_s")?;
    let m11 = sp.congruence(model.f()).add(model.q()).sub(&spec.sigma_d_next);
    let (nx, ny) = (model.nx(), model.ny());
    let g0 = SymMat::symmetrized(Mat::block2x2(m11.as_mat(), &l1, &l1.transpose(), l2.as_mat()));
    SdpProblem::from_map(cost, g0, |e| {
        let mut out = Mat::zeros(nx + ny, nx + ny);
        out.set_block(nx, nx, e.as_mat());
        SymMat::symmetrized(out)
    })
}

fn certificate<T: Real>(
    problem: &SdpProblem<T>,
    sol: &SdpSolution<T>,
    riccati_slack: T,
) -> Result<Certificate<T>> {
    let nx = problem.constraint_dim() - problem.var_dim();
    let g = problem.constraint_at(&sol.s_opt);
    let m11 = g.principal_block(0, nx);
    let m12 = g.as_mat().block(0, nx, nx, problem.var_dim());
    let m22 = g.principal_block(nx, problem.var_dim());
    let schur_consistent = schur_psd_equiv(&m11, &m12, &m22, T::tol(1e-7))
        .map(|e| e.agree())
        .unwrap_or(false);
    Ok(Certificate {
        status: sol.status,
        gap_bound: sol.gap_bound,
        phase1_margin: sol.phase1_margin,
        near_boundary: sol.near_boundary,
        constraint_dim: problem.constraint_dim(),
        reduced_dim: sol.reduced_dim,
        outer_iterations: sol.history.len(),
        newton_steps: sol.newton_steps,
        lmi_min_eigenvalue: g.min_eigenvalue()?,
        riccati_slack_min_eigenvalue: riccati_slack,
        schur_consistent,
        message: sol.message.clone(),
    })
}

fn dare_converged<T: Real>(model: &SystemModel<T>, r: &SymMat<T>) -> Result<SymMat<T>> {
    converged(solve_dare(model, r, &DareOptions::default())?)
}

fn converged<T: Real>(res: crate::riccati::DareResult<T>) -> Result<SymMat<T>> {
    if !res.converged {
        return Err(Error::NoConvergence {
            what: "DARE",
            iterations: res.iterations,
            residual: res.residual.as_f64(),
        });
    }
    Ok(res.sigma_inf)
}

/// Smallest steady-state prior covariance any sensor can reach (`R = 0`).
pub fn theoretical_bound<T: Real>(model: &SystemModel<T>) -> Result<SymMat<T>> {
    let res = solve_dare_noiseless(model, &DareOptions::default())?;
    if !res.converged {
        return Err(Error::NoConvergence {
            what: "noiseless DARE",
            iterations: res.iterations,
            residual: res.residual.as_f64(),
        });
    }
    Ok(res.sigma_inf)
}

fn sdp_error<T: Real>(sol: &SdpSolution<T>, what: &str) -> Error {
    Error::Numerical(format!(
        "{what}: SDP solver failed ({})",
        sol.message.as_deref().unwrap_or("no detail")
    ))
}

pub fn design_utility<T: Real>(spec: &UtilitySpec<T>) -> Result<UtilityDesign<T>> {
    design_utility_with(spec, &SdpOptions::default(), None)
}

/// [`design_utility`] with explicit solver options and an optional trace sink.
pub fn design_utility_with<T: Real>(
    spec: &UtilitySpec<T>,
    opts: &SdpOptions<T>,
    trace: Option<&mut dyn Write>,
) -> Result<UtilityDesign<T>> {
    require_psd(&spec.sigma_d, "Σᵈ")?;
    let problem = utility_lmi_data(spec)?;
    let sol = solve_traced(&problem.congruence(&utility_preconditioner(spec)?)?, opts, trace);
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => {
            let bound = theoretical_bound(&spec.model)
                .map(|b| format!("{:?}", b.to_rows().iter().map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()).collect::<Vec<_>>()))
                .unwrap_or_else(|e| format!("unavailable ({e})"));
            return Err(Error::Infeasible(format!(
                "utility target below theoretical bound; steady-state covariance with noise-free measurements is {bound}"
            )));
        }
        SdpStatus::NumericalFailure => return Err(sdp_error(&sol, "utility design")),
    }

    let upsilon = sol.s_opt.clone();
    let eig = upsilon.eig()?;
    let floor = T::lit(PRECISION_FLOOR);
    let precision_floor_applied = eig.values.iter().any(|&v| v < floor);
    let inv: Vec<T> = eig.values.iter().map(|&v| T::one() / v.max(floor)).collect();
    let r_opt = eig.reconstruct_with(&inv);
    let achieved = converged(solve_dare_precision(&spec.model, &upsilon, &DareOptions::default())?)?;

    let slack = spec
        .sigma_d
        .sub(&riccati_step_precision(&spec.model, &spec.sigma_d, &upsilon)?)
        .min_eigenvalue()?;
    let margin = spec.sigma_d.add_identity(guarantee_tol()).sub(&achieved).min_eigenvalue()?;
    if margin < T::zero() {
        return Err(Error::Validation(format!(
            "steady-state covariance at R* exceeds the target by {:e}",
            (-margin).as_f64()
        )));
    }
    Ok(UtilityDesign {
        objective: sol.objective,
        certificate: certificate(&problem, &sol, slack)?,
        upsilon,
        r_opt,
        achieved_sigma_inf: achieved,
        precision_floor_applied,
    })
}

pub fn design_privacy<T: Real>(spec: &PrivacySpec<T>) -> Result<PrivacyDesign<T>> {
    design_privacy_with(spec, &SdpOptions::default(), None)
}

/// [`design_privacy`] with explicit solver options and an optional trace sink.
pub fn design_privacy_with<T: Real>(
    spec: &PrivacySpec<T>,
    opts: &SdpOptions<T>,
    trace: Option<&mut dyn Write>,
) -> Result<PrivacyDesign<T>> {
    let problem = privacy_lmi_data(spec)?;
    let sol = solve_traced(&problem, opts, trace);
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => {
            return Err(Error::Infeasible(
                "privacy floor exceeds the open-loop predicted covariance F Σ⁻ Fᵀ + Q".into(),
            ))
        }
        SdpStatus::NumericalFailure => return Err(sdp_error(&sol, "privacy design")),
    }
    let r_p = sol.s_opt.clone();
    let model = &spec.model;
    let r_total = spec.r_s.add(&r_p);
    let achieved = riccati_step(model, &spec.sigma_prior, &r_total)?;
    let slack = achieved.sub(&spec.sigma_d_next).min_eigenvalue()?;
    if slack < -guarantee_tol::<T>() {
        return Err(Error::Validation(format!(
            "predicted covariance under R_s + R_p* falls below the floor by {:e}",
            (-slack).as_f64()
        )));
    }
    let implied_posterior = posterior_covariance(model, &spec.sigma_prior, &r_total)?;
    Ok(PrivacyDesign {
        objective: sol.objective,
        certificate: certificate(&problem, &sol, slack)?,
        r_p,
        achieved_sigma_next: achieved,
        implied_posterior,
    })
}

/// `Σ⁻ − Σ⁻Hᵀ(HΣ⁻Hᵀ + R)⁻¹HΣ⁻`.
pub fn posterior_covariance<T: Real>(model: &SystemModel<T>, prior: &SymMat<T>, r: &SymMat<T>) -> Result<SymMat<T>> {
    let s = prior.congruence(model.h()).add(r);
    let chol = s.chol().map_err(|_| Error::Singular {
        context: "posterior covariance: H Σ⁻ Hᵀ + R".into(),
        min_eigenvalue: s.min_eigenvalue().map(Real::as_f64).unwrap_or(f64::NAN),
    })?;
    let ph = prior.as_mat().matmul(&model.h().transpose());
    let gain_term = ph.matmul(&chol.solve_mat(&ph.transpose()));
    Ok(SymMat::symmetrized(prior.as_mat() - &gain_term))
}

/// Full covariance built to hit a target on the measured block.
#[derive(Clone, Debug, Serialize)]
pub struct TargetConstruction<T> {
    pub sigma: SymMat<T>,
    /// Scalar noise level `r` with `R = r·I` that produced `sigma`.
    pub r: T,
    pub iterations: usize,
}

const BISECTION_REL_TOL: f64 = 1e-4;
const BISECTION_MAX_ITER: usize = 200;

fn measured_diag<T: Real>(model: &SystemModel<T>, s: &SymMat<T>) -> Vec<T> {
    s.congruence(model.h()).diagonal()
}

/// Bisection on `r` for a map whose measured diagonal grows with `r`.
///
/// `ratio(r)` summarizes the diagonal against the target; the returned `r`
/// has `ratio ∈ [1 − tol, 1]` (`upper == true`) or `[1, 1 + tol]`.
fn bisect_noise_level<T: Real>(
    mut eval: impl FnMut(T) -> Result<(SymMat<T>, T)>,
    lo_start: T,
    upper: bool,
    what: &str,
) -> Result<TargetConstruction<T>> {
    let tol = T::lit(BISECTION_REL_TOL);
    let one = T::one();
    let (s_lo, ratio_lo) = eval(lo_start)?;
    if ratio_lo > one {
        return Err(Error::Infeasible(format!(
            "{what}: target is below the value reached at the smallest noise level (ratio {:.6})",
            ratio_lo.as_f64()
        )));
    }
    if (upper && ratio_lo >= one - tol) || (!upper && ratio_lo == one) {
        return Ok(TargetConstruction {
            sigma: s_lo,
            r: lo_start,
            iterations: 0,
        });
    }
    let mut lo = lo_start;
    let mut hi = lo_start.max(one);
    let mut it = 0;
    let mut hi_pair = eval(hi)?;
    while hi_pair.1 < one {
        lo = hi;
        hi *= T::lit(2.0);
        it += 1;
        if it > 100 || !hi.is_finite() {
            return Err(Error::Infeasible(format!(
                "{what}: target is not reached for any finite noise level"
            )));
        }
        hi_pair = eval(hi)?;
    }
    for _ in 0..BISECTION_MAX_ITER {
        it += 1;
        let mid = (lo + hi) / T::lit(2.0);
        let (s_mid, ratio) = eval(mid)?;
        let done = if upper {
            ratio <= one && ratio >= one - tol
        } else {
            ratio >= one && ratio <= one + tol
        };
        if done {
            return Ok(TargetConstruction {
                sigma: s_mid,
                r: mid,
                iterations: it,
            });
        }
        if ratio < one {
            lo = mid;
        } else {
            hi = mid;
            hi_pair = (s_mid, ratio);
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    if upper {
        return Err(Error::NoConvergence {
            what: "noise-level bisection",
            iterations: it,
            residual: (one - eval(lo)?.1).as_f64(),
        });
    }
    Ok(TargetConstruction {
        sigma: hi_pair.0,
        r: hi,
        iterations: it,
    })
}

fn check_target<T: Real>(model: &SystemModel<T>, target: &[T]) -> Result<()> {
    if target.len() != model.ny() {
        return Err(Error::Dimension(format!(
            "target has {} entries, expected {}",
            target.len(),
            model.ny()
        )));
    }
    if target.iter().any(|&t| !(t > T::zero()) || !t.is_finite()) {
        return Err(Error::InvalidInput("target entries must be positive and finite".into()));
    }
    Ok(())
}

/// Utility target as a full steady-state covariance: `Σᵈ = DARE(r·I)` with
/// `r` chosen so the largest ratio `diag(HΣᵈHᵀ)ᵢ / targetᵢ` equals one
/// (within 1e-4 relative, from below).
pub fn utility_target_from_position<T: Real>(model: &SystemModel<T>, target: &[T]) -> Result<TargetConstruction<T>> {
    check_target(model, target)?;
    let ny = model.ny();
    let eval = |r: T| -> Result<(SymMat<T>, T)> {
        let s = if r == T::zero() {
            theoretical_bound(model)?
        } else {
            dare_converged(model, &SymMat::scaled_identity(ny, r))?
        };
        let ratio = measured_diag(model, &s)
            .iter()
            .zip(target)
            .map(|(&d, &t)| d / t)
            .fold(T::neg_infinity(), T::max);
        Ok((s, ratio))
    };
    bisect_noise_level(eval, T::zero(), true, "utility target")
}

/// `scale · DARE(R_ref)`.
pub fn scaled_steady_state_target<T: Real>(model: &SystemModel<T>, r_ref: &SymMat<T>, scale: T) -> Result<SymMat<T>> {
    if !(scale > T::zero()) {
        return Err(Error::InvalidInput("target scale must be positive".into()));
    }
    Ok(dare_converged(model, r_ref)?.scale(scale))
}

/// Privacy floor as a full covariance: the one-step prediction from
/// `sigma_prior` under `R_s + r·I`, with the smallest `r` for which every
/// entry of `diag(H Σᵈ Hᵀ)` reaches the target (within 1e-4 relative, from above).
pub fn privacy_floor_from_position<T: Real>(
    model: &SystemModel<T>,
    sigma_prior: &SymMat<T>,
    r_s: &SymMat<T>,
    target: &[T],
) -> Result<TargetConstruction<T>> {
    check_target(model, target)?;
    model.check_state_cov(sigma_prior, "Σ⁻")?;
    model.check_meas_cov(r_s, "R_s")?;
    let eval = |r: T| -> Result<(SymMat<T>, T)> {
        let s = riccati_step(model, sigma_prior, &r_s.add_identity(r))?;
        let ratio = measured_diag(model, &s)
            .iter()
            .zip(target)
            .map(|(&d, &t)| d / t)
            .fold(T::infinity(), T::min);
        Ok((s, ratio))
    };
    let open_loop = sigma_prior.congruence(model.f()).add(model.q());
    let reachable = measured_diag(model, &open_loop)
        .iter()
        .zip(target)
        .all(|(&d, &t)| d > t);
    if !reachable {
        return Err(Error::Infeasible(
            "privacy floor target is not below the open-loop predicted covariance".into(),
        ));
    }
    bisect_noise_level(eval, T::zero(), false, "privacy floor")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::tests::pixel;

    fn scalar(f: f64, h: f64, q: f64) -> SystemModel<f64> {
        SystemModel::new(
            Mat::from_row_slice(1, 1, &[f]),
            Mat::from_row_slice(1, 1, &[h]),
            SymMat::from_diag(&[q]),
        )
        .unwrap()
    }

    #[test]
    fn scalar_utility_by_hand() {
        // F = 0, H = 1, Q = 1: steady prior is exactly Q, so any Υ ⪰ 0 satisfies Σᵈ = 1 + σ².
        let spec = UtilitySpec {
            model: scalar(0.0, 1.0, 1.0),
            sigma_d: SymMat::from_diag(&[1.5]),
            w: SymMat::identity(1),
        };
        let d = design_utility(&spec).unwrap();
        assert!(d.upsilon[(0, 0)].abs() < 1e-7);
        assert!((d.achieved_sigma_inf[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scalar_utility_random_walk() {
        // F = H = 1, Q = 1: Σᵈ ≥ Σᵈ + 1 − Σᵈ²/(Σᵈ + r) ⇔ r ≤ Σᵈ² − Σᵈ.
        let s = 3.0;
        let spec = UtilitySpec {
            model: scalar(1.0, 1.0, 1.0),
            sigma_d: SymMat::from_diag(&[s]),
            w: SymMat::identity(1),
        };
        let d = design_utility(&spec).unwrap();
        let expected = 1.0 / (s * s - s);
        assert!((d.upsilon[(0, 0)] - expected).abs() < 1e-6, "{:?}", d.upsilon);
        assert!(d.certificate.schur_consistent);
    }

    #[test]
    fn utility_below_bound_is_infeasible() {
        let m = pixel();
        let lb = theoretical_bound(&m).unwrap();
        let spec = UtilitySpec {
            model: m,
            sigma_d: lb.scale(0.5),
            w: SymMat::identity(2),
        };
        assert!(matches!(design_utility(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn utility_at_known_noise_is_no_more_expensive() {
        let m = pixel();
        let r_d = SymMat::from_diag(&[2.0, 3.0]);
        let sigma_d = dare_converged(&m, &r_d).unwrap();
        let spec = UtilitySpec {
            model: m,
            sigma_d: sigma_d.clone(),
            w: SymMat::identity(2),
        };
        let d = design_utility(&spec).unwrap();
        let ups_d = r_d.inverse_pd().unwrap();
        assert!(d.objective <= ups_d.trace() + 1e-6);
        assert!(ups_d.add_identity(1e-6).sub(&d.upsilon).min_eigenvalue().unwrap() >= 0.0);
        assert!(sigma_d.add_identity(1e-6).sub(&d.achieved_sigma_inf).min_eigenvalue().unwrap() >= 0.0);
    }

    #[test]
    fn singular_measured_block_rejected() {
        let spec = UtilitySpec {
            model: pixel(),
            sigma_d: SymMat::from_diag(&[0.0, 0.0, 1.0, 1.0]),
            w: SymMat::identity(2),
        };
        assert!(matches!(utility_lmi_data(&spec), Err(Error::Singular { .. })));
    }

    #[test]
    fn privacy_zero_floor_needs_no_noise() {
        let m = pixel();
        let spec = PrivacySpec {
            sigma_prior: theoretical_bound(&m).unwrap(),
            model: m,
            r_s: SymMat::zeros(2),
            sigma_d_next: SymMat::zeros(4),
            w: SymMat::identity(2),
        };
        let d = design_privacy(&spec).unwrap();
        assert!(d.r_p.frobenius_norm() < 1e-7);
    }

    #[test]
    fn privacy_floor_above_open_loop_is_infeasible() {
        let m = pixel();
        let prior = theoretical_bound(&m).unwrap();
        let open = prior.congruence(m.f()).add(m.q());
        let spec = PrivacySpec {
            model: m,
            sigma_prior: prior,
            r_s: SymMat::zeros(2),
            sigma_d_next: open.add_identity(1.0),
            w: SymMat::identity(2),
        };
        assert!(matches!(design_privacy(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn scalar_privacy_by_hand() {
        // F = H = 1, Q = 0, Σ⁻ = 1: next = 1 − 1/(1 + r) ≥ d ⇔ r ≥ d/(1 − d).
        let d = 0.25;
        let spec = PrivacySpec {
            model: scalar(1.0, 1.0, 0.0),
            sigma_prior: SymMat::identity(1),
            r_s: SymMat::zeros(1),
            sigma_d_next: SymMat::from_diag(&[d]),
            w: SymMat::identity(1),
        };
        let out = design_privacy(&spec).unwrap();
        assert!((out.r_p[(0, 0)] - d / (1.0 - d)).abs() < 1e-6);
        assert!((out.implied_posterior[(0, 0)] - d).abs() < 1e-6);
    }

    #[test]
    fn privacy_monotone_in_floor() {
        let m = pixel();
        let prior = theoretical_bound(&m).unwrap();
        let solve_for = |pos: f64| {
            let floor = privacy_floor_from_position(&m, &prior, &SymMat::zeros(2), &[pos, pos]).unwrap();
            design_privacy(&PrivacySpec {
                model: m.clone(),
                sigma_prior: prior.clone(),
                r_s: SymMat::zeros(2),
                sigma_d_next: floor.sigma,
                w: SymMat::identity(2),
            })
            .unwrap()
            .objective
        };
        assert!(solve_for(100.0) > solve_for(55.0));
    }

    #[test]
    fn utility_helper_hits_target() {
        let m = pixel();
        let t = utility_target_from_position(&m, &[80.0, 80.0]).unwrap();
        let d = measured_diag(&m, &t.sigma);
        assert!(d.iter().all(|&v| (80.0 * (1.0 - 1e-4)..=80.0).contains(&v)));
    }

    #[test]
    fn helpers_reject_unreachable_targets() {
        let m = pixel();
        assert!(matches!(utility_target_from_position(&m, &[10.0, 10.0]), Err(Error::Infeasible(_))));
        let prior = theoretical_bound(&m).unwrap();
        assert!(matches!(
            privacy_floor_from_position(&m, &prior, &SymMat::zeros(2), &[1e4, 1e4]),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn weight_must_be_nonsingular() {
        let spec = UtilitySpec {
            model: pixel(),
            sigma_d: theoretical_bound(&pixel()).unwrap().scale(2.0),
            w: SymMat::from_diag(&[1.0, 0.0]),
        };
        assert!(matches!(utility_lmi_data(&spec), Err(Error::InvalidInput(_))));
    }
}
