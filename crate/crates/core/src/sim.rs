//! Synthetic pixel-plane tracking study: constant-velocity trajectories,
//! noisy detections, the pixel/spatial homography and a Monte Carlo harness.
//!
//! Random streams: run `i` of a Monte Carlo study with seed `s` uses
//! `ChaCha8Rng::seed_from_u64(s + i)` (wrapping). Within a run, draws happen
//! in this order: the true initial state, then per frame the process noise
//! (from frame 1 on), the measurement noise and the privacy noise (only on
//! the injection frame). Gaussian vectors are `μ + A z` where `A` is the
//! Cholesky factor of the covariance (an eigen square root when it is only
//! semidefinite) and `z` is a vector of standard normals from `rand_distr`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kalman::{predict, update, FilterState, InitialBelief};
use crate::matlib::{Cholesky, Mat, SymMat};
use crate::riccati::SystemModel;
use crate::scalar::Real;

pub const DEFAULT_ROWS: usize = 425;
pub const DEFAULT_COLS: usize = 570;
pub const DEFAULT_FRAMES: usize = 500;

/// Frame geometry, horizon and process noise of the pixel-plane model.
///
/// The state is `(row, col, row velocity, col velocity)` in pixels and
/// pixels per frame; detections observe the two positions.
#[derive(Clone, Debug)]
pub struct PixelModel<T> {
    pub n_r: usize,
    pub n_c: usize,
    pub frames: usize,
    pub q: SymMat<T>,
}

impl<T: Real> Default for PixelModel<T> {
    fn default() -> Self {
        Self {
            n_r: DEFAULT_ROWS,
            n_c: DEFAULT_COLS,
            frames: DEFAULT_FRAMES,
            q: SymMat::from_diag(&[T::lit(0.1), T::lit(0.1), T::lit(50.0), T::lit(50.0)]),
        }
    }
}

/// Constant-velocity transition with unit frame interval.
pub fn constant_velocity<T: Real>() -> Mat<T> {
    let mut f = Mat::identity(4);
    f[(0, 2)] = T::one();
    f[(1, 3)] = T::one();
    f
}

/// Selects the two position coordinates.
pub fn position_selector<T: Real>() -> Mat<T> {
    let mut h = Mat::zeros(2, 4);
    h[(0, 0)] = T::one();
    h[(1, 1)] = T::one();
    h
}

impl<T: Real> PixelModel<T> {
    pub fn system(&self) -> Result<SystemModel<T>> {
        SystemModel::new(constant_velocity(), position_selector(), self.q.clone())
    }

    /// Frame-centre start moving at one pixel per frame along both axes, with
    /// `Σ₀ = diag(100, 100, 10, 10)`.
    pub fn default_belief(&self) -> InitialBelief<T> {
        InitialBelief {
            mu0: vec![
                T::lit(self.n_r as f64 / 2.0),
                T::lit(self.n_c as f64 / 2.0),
                T::one(),
                T::one(),
            ],
            sigma0: SymMat::from_diag(&[T::lit(100.0), T::lit(100.0), T::lit(10.0), T::lit(10.0)]),
        }
    }
}

/// Affine map `p = U x + offset` from ground-plane metres to pixels.
#[derive(Clone, Debug, Serialize)]
pub struct Homography<T> {
    pub u: Mat<T>,
    pub offset: Vec<T>,
    #[serde(skip)]
    u_inv: Mat<T>,
}

impl<T: Real> Homography<T> {
    /// `U = [[0, n_r/4], [−n_c/4, 0]]`, `offset = (n_r/2, n_c/2)`.
    pub fn for_frame(n_r: usize, n_c: usize) -> Result<Self> {
        let (r, c) = (T::lit(n_r as f64), T::lit(n_c as f64));
        let four = T::lit(4.0);
        let u = Mat::from_row_slice(2, 2, &[T::zero(), r / four, -c / four, T::zero()]);
        Self::new(u, vec![r / T::lit(2.0), c / T::lit(2.0)])
    }

    pub fn new(u: Mat<T>, offset: Vec<T>) -> Result<Self> {
        if u.shape() != (2, 2) || offset.len() != 2 {
            return Err(Error::Dimension("homography needs a 2x2 matrix and a 2-vector offset".into()));
        }
        let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
        if det == T::zero() || !det.is_finite() {
            return Err(Error::InvalidInput("homography matrix is singular".into()));
        }
        let u_inv = Mat::from_row_slice(2, 2, &[u[(1, 1)] / det, -u[(0, 1)] / det, -u[(1, 0)] / det, u[(0, 0)] / det]);
        Ok(Self { u, offset, u_inv })
    }

    pub fn to_pixel(&self, x: &[T]) -> Vec<T> {
        self.u.mul_vec(x).iter().zip(&self.offset).map(|(&a, &b)| a + b).collect()
    }

    pub fn to_spatial(&self, p: &[T]) -> Vec<T> {
        let shifted: Vec<T> = p.iter().zip(&self.offset).map(|(&a, &b)| a - b).collect();
        self.u_inv.mul_vec(&shifted)
    }

    /// `U⁻¹ Σ U⁻ᵀ`.
    pub fn pixel_to_spatial_cov(&self, sigma_pp: &SymMat<T>) -> Result<SymMat<T>> {
        check_2x2(sigma_pp)?;
        Ok(sigma_pp.congruence(&self.u_inv))
    }

    /// `U Σ Uᵀ`.
    pub fn spatial_to_pixel_cov(&self, sigma_xx: &SymMat<T>) -> Result<SymMat<T>> {
        check_2x2(sigma_xx)?;
        Ok(sigma_xx.congruence(&self.u))
    }
}

fn check_2x2<T: Real>(s: &SymMat<T>) -> Result<()> {
    if s.dim() != 2 {
        return Err(Error::Dimension(format!("expected a 2x2 covariance, got {0}x{0}", s.dim())));
    }
    Ok(())
}

/// Draws `N(0, Σ)` vectors through a fixed square-root factor.
#[derive(Clone, Debug)]
pub struct Gaussian<T> {
    factor: Mat<T>,
    zero: bool,
}

impl<T: Real> Gaussian<T> {
    pub fn new(cov: &SymMat<T>) -> Result<Self> {
        let zero = cov.as_mat().max_abs() == T::zero();
        let factor = match Cholesky::new(cov) {
            Ok(c) => c.into_factor(),
            Err(_) => cov.sqrt_psd()?.into_mat(),
        };
        Ok(Self { factor, zero })
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let z: Vec<T> = (0..self.dim())
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        if self.zero {
            return vec![T::zero(); self.dim()];
        }
        self.factor.mul_vec(&z)
    }
}

fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

/// Trajectory generation switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrajectoryOptions {
    /// Mirror positions (and flip the velocity) at the frame borders.
    pub reflect: bool,
    /// Replace the free constant-velocity motion with the scripted turning path.
    pub waypoints: bool,
}

/// Velocity of the scripted path for each fifth of the horizon (pixels per frame).
pub const WAYPOINT_VELOCITIES: [(f64, f64); 5] = [(1.5, 2.0), (-2.0, 1.5), (-1.5, -2.0), (2.0, -1.5), (1.5, 2.0)];

/// Frames at which the scripted path turns.
pub fn waypoint_turns(frames: usize) -> Vec<usize> {
    let seg = waypoint_segment(frames);
    (1..WAYPOINT_VELOCITIES.len()).map(|i| i * seg).filter(|&k| k < frames).collect()
}

fn waypoint_segment(frames: usize) -> usize {
    (frames / WAYPOINT_VELOCITIES.len()).max(1)
}

fn reflect_into<T: Real>(x: &mut [T], n_r: usize, n_c: usize) {
    for (axis, bound) in [(0usize, n_r), (1, n_c)] {
        let hi = T::lit(bound as f64);
        for _ in 0..4 {
            if x[axis] < T::zero() {
                x[axis] = -x[axis];
                x[axis + 2] = -x[axis + 2];
            } else if x[axis] > hi {
                x[axis] = hi + hi - x[axis];
                x[axis + 2] = -x[axis + 2];
            } else {
                break;
            }
        }
    }
}

/// Advances the true state one frame at a time.
struct Mover<'a, T> {
    model: &'a PixelModel<T>,
    system: &'a SystemModel<T>,
    noise: Gaussian<T>,
    opts: TrajectoryOptions,
    x: Vec<T>,
}

impl<'a, T: Real> Mover<'a, T> {
    fn new(model: &'a PixelModel<T>, system: &'a SystemModel<T>, mut x0: Vec<T>, opts: TrajectoryOptions) -> Result<Self> {
        if opts.waypoints {
            let (vr, vc) = WAYPOINT_VELOCITIES[0];
            x0[2] = T::lit(vr);
            x0[3] = T::lit(vc);
        }
        Ok(Self {
            model,
            system,
            noise: Gaussian::new(system.q())?,
            opts,
            x: x0,
        })
    }

    /// State at frame `k ≥ 1`. Process noise is drawn on every call, also on
    /// the noise-free scripted path, so the stream layout never changes.
    fn step<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> &[T] {
        let w = self.noise.sample(rng);
        let mut x = self.system.f().mul_vec(&self.x);
        if self.opts.waypoints {
            let seg = waypoint_segment(self.model.frames);
            if k.is_multiple_of(seg) && k / seg < WAYPOINT_VELOCITIES.len() {
                let (vr, vc) = WAYPOINT_VELOCITIES[k / seg];
                x[2] = T::lit(vr);
                x[3] = T::lit(vc);
            }
        } else {
            x = add(&x, &w);
        }
        if self.opts.reflect {
            reflect_into(&mut x, self.model.n_r, self.model.n_c);
        }
        self.x = x;
        &self.x
    }
}

/// Ground-truth states for `model.frames` frames starting from `x₀ ~ N(μ₀, Σ₀)`.
///
/// The scripted path is noise free and sets the velocity at each turn frame.
pub fn synthesize_trajectory<T: Real>(
    model: &PixelModel<T>,
    init: &InitialBelief<T>,
    seed: u64,
    opts: TrajectoryOptions,
) -> Result<Vec<Vec<T>>> {
    let system = model.system()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = draw_initial(init, &mut rng)?;
    let mut out = Vec::with_capacity(model.frames);
    if model.frames == 0 {
        return Ok(out);
    }
    let mut mover = Mover::new(model, &system, x0, opts)?;
    out.push(mover.x.clone());
    for k in 1..model.frames {
        out.push(mover.step(k, &mut rng).to_vec());
    }
    Ok(out)
}

fn draw_initial<T: Real, R: Rng + ?Sized>(init: &InitialBelief<T>, rng: &mut R) -> Result<Vec<T>> {
    if init.mu0.len() != 4 || init.sigma0.dim() != 4 {
        return Err(Error::Dimension("pixel model initial belief must be 4-dimensional".into()));
    }
    Ok(add(&init.mu0, &Gaussian::new(&init.sigma0)?.sample(rng)))
}

/// `y_k = H x_k + n_k`, `n_k ~ N(0, R)`.
pub fn measure<T: Real>(states: &[Vec<T>], h: &Mat<T>, r: &SymMat<T>, seed: u64) -> Result<Vec<Vec<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Gaussian::new(r)?;
    if noise.dim() != h.rows() {
        return Err(Error::Dimension(format!("R is {0}x{0}, H has {1} rows", noise.dim(), h.rows())));
    }
    Ok(states.iter().map(|x| add(&h.mul_vec(x), &noise.sample(&mut rng))).collect())
}

/// Adds `n_p ~ N(0, R_p)` to one frame's detection before it is shared.
pub fn perturb_frame_measurement<T: Real>(y: &[T], r_p: &SymMat<T>, seed: u64) -> Result<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_with(y, &Gaussian::new(r_p)?, &mut rng)
}

fn perturb_with<T: Real, R: Rng + ?Sized>(y: &[T], noise: &Gaussian<T>, rng: &mut R) -> Result<Vec<T>> {
    if noise.dim() != y.len() {
        return Err(Error::Dimension(format!("R_p is {0}x{0}, measurement has {1} entries", noise.dim(), y.len())));
    }
    Ok(add(y, &noise.sample(rng)))
}

/// Extra noise added to the detection of one frame.
#[derive(Clone, Debug)]
pub struct PrivacyInjection<T> {
    pub frame: usize,
    pub r_p: SymMat<T>,
}

/// Covariance-only filter pass; entry `k` is `(prior, posterior)` of frame `k`.
///
/// The measurement at `injection.frame` is filtered with `R + R_p`, so the
/// prior of the following frame carries the privacy floor.
pub fn covariance_sequence<T: Real>(
    system: &SystemModel<T>,
    r: &SymMat<T>,
    sigma0: &SymMat<T>,
    frames: usize,
    injection: Option<&PrivacyInjection<T>>,
) -> Result<Vec<(SymMat<T>, SymMat<T>)>> {
    let init = InitialBelief::new(vec![T::zero(); system.nx()], sigma0.clone())?;
    let zeros = vec![T::zero(); system.ny()];
    let mut state = FilterState::from_belief(&init, system.ny());
    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        if k > 0 {
            state = predict(&state, system)?;
        }
        let r_k = noise_at(r, injection, k);
        state = update(&state, system, &r_k, &zeros)?;
        out.push((state.cov_prior.clone(), state.cov_post.clone()));
    }
    Ok(out)
}

fn noise_at<T: Real>(r: &SymMat<T>, injection: Option<&PrivacyInjection<T>>, k: usize) -> SymMat<T> {
    match injection {
        Some(p) if p.frame == k => r.add(&p.r_p),
        _ => r.clone(),
    }
}

#[derive(Clone, Debug)]
pub struct McConfig<T> {
    pub runs: usize,
    pub seed: u64,
    pub trajectory: TrajectoryOptions,
    pub injection: Option<PrivacyInjection<T>>,
}

impl<T> McConfig<T> {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self {
            runs,
            seed,
            trajectory: TrajectoryOptions::default(),
            injection: None,
        }
    }
}

/// Per-frame Monte Carlo statistics of the posterior position error.
#[derive(Clone, Debug, Serialize)]
pub struct McReport<T> {
    pub runs: usize,
    pub seed: u64,
    pub frames: usize,
    /// `sqrt(mean ‖e‖²)` over runs.
    pub rmse_per_frame: Vec<T>,
    /// `mean e eᵀ` over runs.
    pub mean_emp_cov_per_frame: Vec<SymMat<T>>,
    /// Posterior position covariance reported by the filter.
    pub filter_cov_per_frame: Vec<SymMat<T>>,
    /// Mean over runs of `eᵀ P⁻¹ e` with `P` the filter's position covariance.
    pub mean_nees_per_frame: Vec<T>,
}

struct RunStats<T> {
    errors: Vec<[T; 2]>,
    nees: Vec<T>,
    filter_cov: Vec<SymMat<T>>,
}

fn single_run<T: Real>(
    model: &PixelModel<T>,
    system: &SystemModel<T>,
    r: &SymMat<T>,
    init: &InitialBelief<T>,
    cfg: &McConfig<T>,
    run: usize,
) -> Result<RunStats<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(run as u64));
    let x0 = draw_initial(init, &mut rng)?;
    let meas = Gaussian::new(r)?;
    let privacy = cfg.injection.as_ref().map(|p| Gaussian::new(&p.r_p)).transpose()?;
    let mut mover = Mover::new(model, system, x0, cfg.trajectory)?;
    let mut state = FilterState::from_belief(init, system.ny());
    let mut stats = RunStats {
        errors: Vec::with_capacity(model.frames),
        nees: Vec::with_capacity(model.frames),
        filter_cov: Vec::with_capacity(model.frames),
    };
    for k in 0..model.frames {
        if k > 0 {
            mover.step(k, &mut rng);
            state = predict(&state, system)?;
        }
        let truth = &mover.x;
        let mut y = add(&system.h().mul_vec(truth), &meas.sample(&mut rng));
        let r_k = noise_at(r, cfg.injection.as_ref(), k);
        if let (Some(p), Some(g)) = (&cfg.injection, &privacy) {
            if p.frame == k {
                y = perturb_with(&y, g, &mut rng)?;
            }
        }
        state = update(&state, system, &r_k, &y)?;
        let e = [state.mean_post[0] - mover.x[0], state.mean_post[1] - mover.x[1]];
        let p = state.cov_post.principal_block(0, 2);
        let nees = match p.chol() {
            Ok(c) => {
                let s = c.solve_vec(&e);
                e[0] * s[0] + e[1] * s[1]
            }
            Err(_) => T::nan(),
        };
        stats.errors.push(e);
        stats.nees.push(nees);
        stats.filter_cov.push(p);
    }
    Ok(stats)
}

/// Runs `cfg.runs` independent trajectories through the filter.
///
/// Runs execute in parallel; statistics are accumulated in run order so the
/// report is bit-identical for a given seed regardless of thread count.
pub fn monte_carlo<T: Real>(
    model: &PixelModel<T>,
    r: &SymMat<T>,
    init: &InitialBelief<T>,
    cfg: &McConfig<T>,
) -> Result<McReport<T>> {
    if cfg.runs == 0 {
        return Err(Error::InvalidInput("Monte Carlo needs at least one run".into()));
    }
    let system = model.system()?;
    system.check_meas_cov(r, "R")?;
    let results: Vec<Result<RunStats<T>>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            single_run(model, &system, r, init, cfg, run).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("run {run}: {m}")),
                Error::Singular { context, min_eigenvalue } => Error::Singular {
                    context: format!("run {run}: {context}"),
                    min_eigenvalue,
                },
                other => other,
            })
        })
        .collect();

    let frames = model.frames;
    let mut sq = vec![T::zero(); frames];
    let mut cov = vec![[T::zero(); 3]; frames];
    let mut nees = vec![T::zero(); frames];
    let mut filter_cov = Vec::new();
    for (run, res) in results.into_iter().enumerate() {
        let stats = res?;
        for k in 0..frames {
            let [a, b] = stats.errors[k];
            sq[k] += a * a + b * b;
            cov[k][0] += a * a;
            cov[k][1] += a * b;
            cov[k][2] += b * b;
            nees[k] += stats.nees[k];
        }
        if run == 0 {
            filter_cov = stats.filter_cov;
        }
    }
    let n = T::lit(cfg.runs as f64);
    Ok(McReport {
        runs: cfg.runs,
        seed: cfg.seed,
        frames,
        rmse_per_frame: sq.iter().map(|&s| (s / n).sqrt()).collect(),
        mean_emp_cov_per_frame: cov
            .iter()
            .map(|c| {
                let m = Mat::from_row_slice(2, 2, &[c[0] / n, c[1] / n, c[1] / n, c[2] / n]);
                SymMat::new(m).expect("2x2")
            })
            .collect(),
        filter_cov_per_frame: filter_cov,
        mean_nees_per_frame: nees.iter().map(|&s| s / n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cov(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = samples.len() as f64;
        let d = samples[0].len();
        let mean: Vec<f64> = (0..d).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n).collect();
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / n)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn homography_bound_conversion() {
        let h = Homography::<f64>::for_frame(425, 570).unwrap();
        let s = h.pixel_to_spatial_cov(&SymMat::from_diag(&[54.891, 54.891])).unwrap();
        assert!((s[(0, 0)] - 54.891 / 142.5f64.powi(2)).abs() < 1e-15);
        assert!((s[(1, 1)] - 54.891 / 106.25f64.powi(2)).abs() < 1e-15);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(h.pixel_to_spatial_cov(&SymMat::zeros(2)).unwrap(), SymMat::zeros(2));
    }

    #[test]
    fn homography_point_round_trip() {
        let h = Homography::<f64>::for_frame(425, 570).unwrap();
        let p = h.to_pixel(&[0.3, -1.2]);
        let x = h.to_spatial(&p);
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] + 1.2).abs() < 1e-12);
        assert_eq!(h.to_pixel(&[0.0, 0.0]), vec![212.5, 285.0]);
    }

    #[test]
    fn noiseless_straight_line() {
        let model = PixelModel {
            q: SymMat::zeros(4),
            frames: 10,
            ..PixelModel::default()
        };
        let init = InitialBelief::new(vec![5.0, 6.0, 1.0, 2.0], SymMat::zeros(4)).unwrap();
        let xs = synthesize_trajectory(&model, &init, 1, TrajectoryOptions::default()).unwrap();
        for (k, x) in xs.iter().enumerate() {
            assert_eq!(x[0], 5.0 + k as f64);
            assert_eq!(x[1], 6.0 + 2.0 * k as f64);
        }
    }

    #[test]
    fn trajectories_are_seeded() {
        let model = PixelModel::<f64> {
            frames: 50,
            ..PixelModel::default()
        };
        let init = model.default_belief();
        let a = synthesize_trajectory(&model, &init, 9, TrajectoryOptions::default()).unwrap();
        let b = synthesize_trajectory(&model, &init, 9, TrajectoryOptions::default()).unwrap();
        let c = synthesize_trajectory(&model, &init, 10, TrajectoryOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn process_noise_statistics() {
        let q = SymMat::from_diag(&[0.1, 0.1, 50.0, 50.0]);
        let g = Gaussian::new(&q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| g.sample(&mut rng)).collect();
        let c = sample_cov(&draws);
        for i in 0..4 {
            assert!((c[i][i] / q[(i, i)] - 1.0).abs() < 0.03, "{i}: {}", c[i][i]);
            for j in 0..4 {
                if i != j {
                    assert!(c[i][j].abs() < 0.03 * (q[(i, i)] * q[(j, j)]).sqrt());
                }
            }
        }
    }

    #[test]
    fn measurement_noise_statistics_and_additivity() {
        let h = position_selector::<f64>();
        let states = vec![vec![0.0; 4]; 100_000];
        let r_s = SymMat::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let r_p = SymMat::identity(2);
        let ys = measure(&states, &h, &r_s, 4).unwrap();
        let c = sample_cov(&ys);
        assert!((c[0][0] / 2.0 - 1.0).abs() < 0.03 && (c[1][1] - 1.0).abs() < 0.03);
        assert!((c[0][1] - 0.5).abs() < 0.03);
        let perturbed: Vec<Vec<f64>> = ys
            .iter()
            .enumerate()
            .map(|(i, y)| perturb_frame_measurement(y, &r_p, 1_000 + i as u64).unwrap())
            .collect();
        let c = sample_cov(&perturbed);
        assert!((c[0][0] / 3.0 - 1.0).abs() < 0.03 && (c[1][1] / 2.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn zero_noise_passes_through() {
        let y = vec![1.5, -2.0];
        assert_eq!(perturb_frame_measurement(&y, &SymMat::zeros(2), 5).unwrap(), y);
        let xs = vec![vec![1.0, 2.0, 3.0, 4.0]];
        assert_eq!(measure(&xs, &position_selector(), &SymMat::zeros(2), 5).unwrap(), vec![vec![1.0, 2.0]]);
    }

    #[test]
    fn exact_monte_carlo_has_zero_error() {
        let model = PixelModel {
            q: SymMat::zeros(4),
            frames: 20,
            ..PixelModel::default()
        };
        let init = InitialBelief::new(vec![10.0, 10.0, 1.0, 1.0], SymMat::scaled_identity(4, 1e-6)).unwrap();
        let rep = monte_carlo(&model, &SymMat::scaled_identity(2, 1e-24), &init, &McConfig::new(1, 0)).unwrap();
        assert!(rep.rmse_per_frame.iter().all(|&e| e <= 1e-9), "{:?}", rep.rmse_per_frame);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let model = PixelModel::<f64> {
            frames: 30,
            ..PixelModel::default()
        };
        let init = model.default_belief();
        let cfg = McConfig::new(8, 42);
        let a = monte_carlo(&model, &SymMat::identity(2), &init, &cfg).unwrap();
        let b = monte_carlo(&model, &SymMat::identity(2), &init, &cfg).unwrap();
        assert_eq!(a.rmse_per_frame, b.rmse_per_frame);
        assert_eq!(a.mean_emp_cov_per_frame, b.mean_emp_cov_per_frame);
    }

    #[test]
    fn injection_raises_next_prior() {
        let model = PixelModel::<f64>::default();
        let sys = model.system().unwrap();
        let r = SymMat::identity(2);
        let inj = PrivacyInjection {
            frame: 5,
            r_p: SymMat::scaled_identity(2, 4.0),
        };
        let plain = covariance_sequence(&sys, &r, &model.default_belief().sigma0, 8, None).unwrap();
        let priv_ = covariance_sequence(&sys, &r, &model.default_belief().sigma0, 8, Some(&inj)).unwrap();
        assert_eq!(plain[5].0, priv_[5].0);
        assert!(priv_[6].0.sub(&plain[6].0).min_eigenvalue().unwrap() > 0.0);
    }

    #[test]
    fn waypoint_path_turns_on_schedule() {
        let model = PixelModel::<f64> {
            frames: 100,
            ..PixelModel::default()
        };
        let init = model.default_belief();
        let opts = TrajectoryOptions {
            reflect: false,
            waypoints: true,
        };
        let xs = synthesize_trajectory(&model, &init, 2, opts).unwrap();
        assert_eq!(waypoint_turns(100), vec![20, 40, 60, 80]);
        assert_eq!((xs[19][2], xs[19][3]), WAYPOINT_VELOCITIES[0]);
        assert_eq!((xs[20][2], xs[20][3]), WAYPOINT_VELOCITIES[1]);
    }

    #[test]
    fn reflection_keeps_states_in_frame() {
        let model = PixelModel::<f64> {
            frames: 300,
            ..PixelModel::default()
        };
        let init = model.default_belief();
        let opts = TrajectoryOptions {
            reflect: true,
            waypoints: false,
        };
        let xs = synthesize_trajectory(&model, &init, 11, opts).unwrap();
        assert!(xs.iter().all(|x| (0.0..=425.0).contains(&x[0]) && (0.0..=570.0).contains(&x[1])));
    }
}
