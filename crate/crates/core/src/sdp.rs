//! Small dense linear SDP solver.
//!
//! Problem shape: one symmetric `m×m` variable `S`,
//!
//! ```text
//! minimize ⟨C, S⟩  subject to  S ⪰ 0,  G₀ + Λ(S) ⪰ 0
//! ```
//!
//! where `Λ` is linear from `m×m` symmetric matrices to `p×p` symmetric
//! matrices, stored as its values on the svec basis. The solver is a primal
//! log-det barrier path-following method in svec coordinates:
//!
//! 1. *Facial reduction.* Directions `z` with `G₀z = 0` and `Λ(E_i)z = 0` for
//!    every basis element are null for every `S`; the LMI is restricted to
//!    their orthogonal complement. Constraints built from an exact Riccati
//!    solution always carry such a face.
//! 2. *Phase I* finds a strictly feasible `S` by minimizing an auxiliary `s`
//!    over `G(S) + sI ⪰ 0`, `S ≻ 0`, `trace(S) ≤ B`.
//! 3. *Phase II* follows the central path of
//!    `t⟨C,S⟩ − log det G(S) − log det S` by damped Newton, `t ← μt`, until
//!    `(p + m)/t` falls below the gap tolerance.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matlib::{right_svd, Cholesky, Mat, SymMat};
use crate::scalar::Real;

/// `m(m+1)/2`.
pub fn svec_dim(m: usize) -> usize {
    m * (m + 1) / 2
}

fn svec_pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| (i..m).map(move |j| (i, j)))
}

/// Basis element `E_k`: `e_i e_iᵀ` on the diagonal, `(e_i e_jᵀ + e_j e_iᵀ)/√2` off it.
pub fn svec_basis<T: Real>(m: usize, k: usize) -> SymMat<T> {
    let (i, j) = svec_pairs(m).nth(k).expect("svec index in range");
    let mut e = Mat::zeros(m, m);
    if i == j {
        e[(i, i)] = T::one();
    } else {
        let w = T::one() / T::lit(2.0).sqrt();
        e[(i, j)] = w;
        e[(j, i)] = w;
    }
    SymMat::symmetrized(e)
}

/// Coordinates of `S` on the svec basis; `svec(A)·svec(B) = trace(AB)`.
pub fn svec<T: Real>(s: &SymMat<T>) -> Vec<T> {
    let r2 = T::lit(2.0).sqrt();
    svec_pairs(s.dim())
        .map(|(i, j)| if i == j { s[(i, i)] } else { r2 * s[(i, j)] })
        .collect()
}

pub fn smat<T: Real>(x: &[T], m: usize) -> SymMat<T> {
    assert_eq!(x.len(), svec_dim(m), "smat: length");
    let w = T::one() / T::lit(2.0).sqrt();
    let mut out = Mat::zeros(m, m);
    for (k, (i, j)) in svec_pairs(m).enumerate() {
        if i == j {
            out[(i, i)] = x[k];
        } else {
            out[(i, j)] = x[k] * w;
            out[(j, i)] = x[k] * w;
        }
    }
    SymMat::symmetrized(out)
}

/// `min ⟨C,S⟩ s.t. S ⪰ 0, G₀ + Λ(S) ⪰ 0`.
#[derive(Clone, Debug)]
pub struct SdpProblem<T> {
    m: usize,
    cost: SymMat<T>,
    g0: SymMat<T>,
    lin_map: Vec<SymMat<T>>,
}

impl<T: Real> SdpProblem<T> {
    /// `lin_map[k] = Λ(E_k)` on the svec basis.
    pub fn new(cost: SymMat<T>, g0: SymMat<T>, lin_map: Vec<SymMat<T>>) -> Result<Self> {
        let m = cost.dim();
        if lin_map.len() != svec_dim(m) {
            return Err(Error::Dimension(format!(
                "linear map needs {} basis images for a {m}x{m} variable, got {}",
                svec_dim(m),
                lin_map.len()
            )));
        }
        if let Some(k) = lin_map.iter().position(|a| a.dim() != g0.dim()) {
            return Err(Error::Dimension(format!(
                "basis image {k} is {0}x{0}, constant block is {1}x{1}",
                lin_map[k].dim(),
                g0.dim()
            )));
        }
        Ok(Self { m, cost, g0, lin_map })
    }

    /// Builds the basis images by evaluating a linear map on each `E_k`.
    pub fn from_map(cost: SymMat<T>, g0: SymMat<T>, map: impl Fn(&SymMat<T>) -> SymMat<T>) -> Result<Self> {
        let m = cost.dim();
        let lin_map = (0..svec_dim(m)).map(|k| map(&svec_basis(m, k))).collect();
        Self::new(cost, g0, lin_map)
    }

    pub fn var_dim(&self) -> usize {
        self.m
    }

    pub fn constraint_dim(&self) -> usize {
        self.g0.dim()
    }

    pub fn cost(&self) -> &SymMat<T> {
        &self.cost
    }

    pub fn g0(&self) -> &SymMat<T> {
        &self.g0
    }

    pub fn lin_map(&self) -> &[SymMat<T>] {
        &self.lin_map
    }

    /// `G₀ + Λ(S)`.
    pub fn constraint_at(&self, s: &SymMat<T>) -> SymMat<T> {
        let x = svec(s);
        let mut g = self.g0.as_mat().clone();
        for (xi, a) in x.iter().zip(&self.lin_map) {
            g = &g + &a.as_mat().scale(*xi);
        }
        SymMat::symmetrized(g)
    }

    pub fn objective_at(&self, s: &SymMat<T>) -> T {
        self.cost.dot(s)
    }

    /// The same problem with the LMI replaced by `Tᵀ(G₀ + Λ(S))T`. For
    /// nonsingular `T` the feasible set and optimum are unchanged; a good `T`
    /// evens out the scale of `Λ` across directions.
    pub fn congruence(&self, t: &Mat<T>) -> Result<Self> {
        if t.rows() != self.g0.dim() || t.cols() != self.g0.dim() {
            return Err(Error::Dimension(format!(
                "congruence needs a {0}x{0} matrix, got {1}x{2}",
                self.g0.dim(),
                t.rows(),
                t.cols()
            )));
        }
        Ok(Self {
            m: self.m,
            cost: self.cost.clone(),
            g0: self.g0.congruence(&t.transpose()),
            lin_map: self.lin_map.iter().map(|a| a.congruence(&t.transpose())).collect(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct SdpOptions<T> {
    /// Duality-gap tolerance relative to `‖C‖_F`.
    pub gap_tol: T,
    pub t0: T,
    pub mu: T,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: T,
    pub armijo: T,
    pub shrink: T,
    pub max_newton: usize,
    pub max_outer: usize,
    /// Phase-I margins at or below `−infeasible_tol·(1 + ‖G₀‖_F)` mean infeasible.
    pub infeasible_tol: T,
    /// Bound `B` on `trace(S)` during phase I.
    pub phase1_trace_bound: T,
    /// Relative singular-value threshold for the constant null space.
    pub reduction_tol: T,
}

impl<T: Real> Default for SdpOptions<T> {
    fn default() -> Self {
        Self {
            gap_tol: T::tol(1e-8),
            t0: T::one(),
            mu: T::lit(10.0),
            newton_tol: T::tol(1e-10),
            armijo: T::lit(0.3),
            shrink: T::lit(0.5),
            max_newton: 200,
            max_outer: 100,
            infeasible_tol: T::tol(1e-8),
            phase1_trace_bound: T::lit(1e8),
            reduction_tol: T::tol(1e-9),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// One outer iteration of the path-following loop.
#[derive(Clone, Debug, Serialize)]
pub struct OuterRecord<T> {
    pub phase: u8,
    pub t: T,
    pub objective: T,
    pub gap_bound: T,
    pub newton_steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SdpSolution<T> {
    pub s_opt: SymMat<T>,
    pub objective: T,
    pub gap_bound: T,
    pub status: SdpStatus,
    /// Smallest eigenvalue over `G(S)` and `S` at the phase-I point.
    pub phase1_margin: T,
    /// Phase I found no strictly feasible point; phase II ran on a slightly relaxed LMI.
    pub near_boundary: bool,
    /// Constraint dimension after removing the constant null space.
    pub reduced_dim: usize,
    pub newton_steps: usize,
    pub history: Vec<OuterRecord<T>>,
    pub message: Option<String>,
}

/// Phase-I outcome.
#[derive(Clone, Debug)]
pub struct Phase1Result<T> {
    pub s_strict: SymMat<T>,
    pub margin: T,
    pub status: Phase1Status,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase1Status {
    StrictlyFeasible,
    /// `|margin|` below the infeasibility threshold; feasible at best in the limit.
    NearBoundary,
    Infeasible,
    NumericalFailure,
}

/// `M(z) = constant + Σ z_j coeffs[j]`.
struct AffineBlock<T> {
    constant: Mat<T>,
    coeffs: Vec<Mat<T>>,
}

impl<T: Real> AffineBlock<T> {
    fn eval(&self, z: &[T]) -> SymMat<T> {
        let mut m = self.constant.clone();
        for (zj, c) in z.iter().zip(&self.coeffs) {
            if *zj != T::zero() {
                m = &m + &c.scale(*zj);
            }
        }
        SymMat::symmetrized(m)
    }

    fn dim(&self) -> usize {
        self.constant.rows()
    }
}

struct Barrier<T> {
    blocks: Vec<AffineBlock<T>>,
    cost: Vec<T>,
}

enum CenterError {
    LineSearch(String),
    Unbounded,
    Stopped,
}

impl<T: Real> Barrier<T> {
    fn nz(&self) -> usize {
        self.cost.len()
    }

    fn weight(&self) -> T {
        T::lit(self.blocks.iter().map(AffineBlock::dim).sum::<usize>() as f64)
    }

    fn factor(&self, z: &[T]) -> Option<Vec<Cholesky<T>>> {
        self.blocks.iter().map(|b| Cholesky::new(&b.eval(z)).ok()).collect()
    }

    fn value(&self, t: T, z: &[T], chols: &[Cholesky<T>]) -> T {
        let lin: T = self.cost.iter().zip(z).map(|(&c, &x)| c * x).sum();
        t * lin - chols.iter().map(Cholesky::log_det).sum::<T>()
    }

    fn grad_hess(&self, t: T, chols: &[Cholesky<T>]) -> (Vec<T>, SymMat<T>) {
        let nz = self.nz();
        let mut g: Vec<T> = self.cost.iter().map(|&c| t * c).collect();
        let mut h = Mat::zeros(nz, nz);
        for (block, chol) in self.blocks.iter().zip(chols) {
            let inv = chol.inverse();
            let prods: Vec<Mat<T>> = block.coeffs.iter().map(|c| inv.as_mat().matmul(c)).collect();
            for (j, bj) in prods.iter().enumerate() {
                g[j] -= bj.trace();
                for (k, bk) in prods.iter().enumerate().skip(j) {
                    let n = bj.rows();
                    let mut tr = T::zero();
                    for a in 0..n {
                        for b in 0..n {
                            tr += bj[(a, b)] * bk[(b, a)];
                        }
                    }
                    h[(j, k)] += tr;
                    if k != j {
                        h[(k, j)] += tr;
                    }
                }
            }
        }
        (g, SymMat::symmetrized(h))
    }

    /// Damped Newton centering at barrier weight `t`. Returns the step count.
    fn center(
        &self,
        t: T,
        z: &mut Vec<T>,
        opts: &SdpOptions<T>,
        runaway: T,
        mut stop: impl FnMut(&[T]) -> bool,
    ) -> std::result::Result<usize, (usize, CenterError)> {
        let mut chols = self.factor(z).expect("centering starts from an interior point");
        for step in 0..opts.max_newton {
            let f0 = self.value(t, z, &chols);
            let (g, h) = self.grad_hess(t, &chols);
            let hc = match regularized_cholesky(&h) {
                Some(c) => c,
                None => {
                    return Err((step, CenterError::LineSearch("barrier Hessian is not positive definite".into())))
                }
            };
            let neg_g: Vec<T> = g.iter().map(|&x| -x).collect();
            let dz = hc.solve_vec(&neg_g);
            let decrement: T = -g.iter().zip(&dz).map(|(&a, &b)| a * b).sum::<T>();
            if decrement / T::lit(2.0) <= opts.newton_tol {
                return Ok(step);
            }
            let slope = -decrement;
            let mut alpha = T::one();
            let floor = T::lit(1e-14);
            let accepted = loop {
                let trial: Vec<T> = z.iter().zip(&dz).map(|(&a, &b)| a + alpha * b).collect();
                if let Some(c) = self.factor(&trial) {
                    let f1 = self.value(t, &trial, &c);
                    if f1 <= f0 + opts.armijo * alpha * slope {
                        break Some((trial, c));
                    }
                }
                alpha *= opts.shrink;
                if alpha < floor {
                    break None;
                }
            };
            match accepted {
                Some((trial, _)) if trial == *z => return Ok(step),
                Some((trial, c)) => {
                    *z = trial;
                    chols = c;
                }
                None if decrement / T::lit(2.0) <= T::lit(1e-3) => return Ok(step),
                None => {
                    return Err((
                        step,
                        CenterError::LineSearch(format!(
                            "backtracking floor reached at t = {:e} (Newton decrement² = {:e})",
                            t.as_f64(),
                            decrement.as_f64()
                        )),
                    ))
                }
            }
            if z.iter().map(|x| x.abs()).fold(T::zero(), T::max) > runaway {
                return Err((step + 1, CenterError::Unbounded));
            }
            if stop(z) {
                return Err((step + 1, CenterError::Stopped));
            }
        }
        Ok(opts.max_newton)
    }
}

/// Cholesky of `H`, or of `H + δI` with the smallest `δ = 10ᵏ·ε·max diag` that
/// factors, up to `10⁻⁶·max diag`. Near a singular optimum the Hessian is
/// positive definite only up to rounding.
fn regularized_cholesky<T: Real>(h: &SymMat<T>) -> Option<Cholesky<T>> {
    if let Ok(c) = Cholesky::new(h) {
        return Some(c);
    }
    let top = h.diagonal().into_iter().fold(T::zero(), T::max);
    let mut delta = T::epsilon() * top;
    while delta <= T::lit(1e-6) * top {
        if let Ok(c) = Cholesky::new(&h.add_identity(delta)) {
            return Some(c);
        }
        delta *= T::lit(10.0);
    }
    None
}

/// Orthonormal basis (columns) of the complement of the common null space of
/// `G₀` and every `Λ(E_k)`. `None` when there is nothing to remove.
fn reduction_basis<T: Real>(problem: &SdpProblem<T>, rel_tol: T) -> Result<Option<Mat<T>>> {
    let mut stack: Vec<&Mat<T>> = vec![problem.g0.as_mat()];
    stack.extend(problem.lin_map.iter().map(SymMat::as_mat));
    let a = Mat::vstack(&stack);
    let svd = right_svd(&a)?;
    let top = svd.values[0];
    if top == T::zero() {
        return Ok(None);
    }
    let keep = svd.values.iter().filter(|&&s| s > rel_tol * top).count();
    if keep == problem.g0.dim() {
        return Ok(None);
    }
    Ok(Some(svd.v.block(0, 0, problem.g0.dim(), keep)))
}

struct Reduced<T> {
    g0: Mat<T>,
    lin: Vec<Mat<T>>,
}

fn reduce<T: Real>(problem: &SdpProblem<T>, opts: &SdpOptions<T>) -> Result<Reduced<T>> {
    match reduction_basis(problem, opts.reduction_tol)? {
        None => Ok(Reduced {
            g0: problem.g0.as_mat().clone(),
            lin: problem.lin_map.iter().map(|a| a.as_mat().clone()).collect(),
        }),
        Some(v) => {
            let vt = v.transpose();
            let project = |a: &Mat<T>| vt.matmul(a).matmul(&v);
            Ok(Reduced {
                g0: project(problem.g0.as_mat()),
                lin: problem.lin_map.iter().map(|a| project(a.as_mat())).collect(),
            })
        }
    }
}

fn basis_mats<T: Real>(m: usize) -> Vec<Mat<T>> {
    (0..svec_dim(m)).map(|k| svec_basis::<T>(m, k).into_mat()).collect()
}

fn min_eig_at<T: Real>(g0: &Mat<T>, lin: &[Mat<T>], x: &[T]) -> Result<T> {
    let block = AffineBlock {
        constant: g0.clone(),
        coeffs: lin.to_vec(),
    };
    block.eval(x).min_eigenvalue()
}

fn trace_line(sink: &mut Option<&mut dyn Write>, line: std::fmt::Arguments<'_>) {
    if let Some(w) = sink.as_mut() {
        let _ = writeln!(w, "{line}");
    }
}

fn phase1_reduced<T: Real>(
    m: usize,
    red: &Reduced<T>,
    scale: T,
    opts: &SdpOptions<T>,
    sink: &mut Option<&mut dyn Write>,
) -> Result<(Vec<T>, T, Phase1Status, usize)> {
    let d = svec_dim(m);
    let x0 = svec(&SymMat::<T>::identity(m));
    let g_min = min_eig_at(&red.g0, &red.lin, &x0)?;
    if g_min > T::zero() {
        let margin = g_min.min(T::one());
        trace_line(sink, format_args!("phase=1 start point strictly feasible margin={:e}", margin.as_f64()));
        return Ok((x0, margin, Phase1Status::StrictlyFeasible, 0));
    }

    let p = red.g0.rows();
    let eye_p = Mat::identity(p);
    let basis = basis_mats::<T>(m);

    let mut g_coeffs = red.lin.clone();
    g_coeffs.push(eye_p);
    let mut s_coeffs = basis.clone();
    s_coeffs.push(Mat::zeros(m, m));
    let mut tr_coeffs: Vec<Mat<T>> = basis.iter().map(|e| Mat::from_row_slice(1, 1, &[-e.trace()])).collect();
    tr_coeffs.push(Mat::zeros(1, 1));

    let mut cost = vec![T::zero(); d + 1];
    cost[d] = T::one();
    let barrier = Barrier {
        blocks: vec![
            AffineBlock {
                constant: red.g0.clone(),
                coeffs: g_coeffs,
            },
            AffineBlock {
                constant: Mat::zeros(m, m),
                coeffs: s_coeffs,
            },
            AffineBlock {
                constant: Mat::from_row_slice(1, 1, &[opts.phase1_trace_bound]),
                coeffs: tr_coeffs,
            },
        ],
        cost,
    };

    let mut z = x0;
    z.push(T::one() - g_min);
    let weight = barrier.weight();
    let gap_target = T::tol(1e-11) * scale;
    let early = T::lit(1e-3) * scale;
    let runaway = T::lit(1e3) * opts.phase1_trace_bound.max(scale);
    let mut t = opts.t0;
    let mut steps = 0;
    for outer in 0..opts.max_outer {
        let res = barrier.center(t, &mut z, opts, runaway, |z| z[d] < -early);
        let (n, stopped) = match res {
            Ok(n) => (n, false),
            Err((n, CenterError::Stopped)) => (n, true),
            Err((_, CenterError::Unbounded)) => {
                return Err(Error::Numerical("phase I iterate diverged".into()));
            }
            Err((n, CenterError::LineSearch(msg))) => {
                steps += n;
                trace_line(sink, format_args!("phase=1 iter={outer} failure: {msg}"));
                return Ok((z[..d].to_vec(), -z[d], Phase1Status::NumericalFailure, steps));
            }
        };
        steps += n;
        trace_line(
            sink,
            format_args!(
                "phase=1 iter={outer} t={:.3e} s={:.9e} newton={n}",
                t.as_f64(),
                z[d].as_f64()
            ),
        );
        if stopped || z[d] < T::zero() {
            break;
        }
        if weight / t <= gap_target {
            break;
        }
        t *= opts.mu;
    }
    let x = z[..d].to_vec();
    let s_block = smat(&x, m);
    let margin = min_eig_at(&red.g0, &red.lin, &x)?.min(s_block.min_eigenvalue()?);
    let status = if margin > T::zero() {
        Phase1Status::StrictlyFeasible
    } else if margin <= -opts.infeasible_tol * scale {
        Phase1Status::Infeasible
    } else {
        Phase1Status::NearBoundary
    };
    Ok((x, margin, status, steps))
}

/// Finds a strictly feasible point, or certifies (numerically) that none exists.
pub fn phase1<T: Real>(problem: &SdpProblem<T>, opts: &SdpOptions<T>) -> Result<Phase1Result<T>> {
    let red = reduce(problem, opts)?;
    let scale = T::one() + problem.g0.frobenius_norm();
    let (x, margin, status, _) = phase1_reduced(problem.m, &red, scale, opts, &mut None)?;
    Ok(Phase1Result {
        s_strict: smat(&x, problem.m),
        margin,
        status,
    })
}

pub fn solve<T: Real>(problem: &SdpProblem<T>, opts: &SdpOptions<T>) -> SdpSolution<T> {
    solve_traced(problem, opts, None)
}

/// [`solve`] with one trace line per outer iteration written to `sink`.
pub fn solve_traced<T: Real>(
    problem: &SdpProblem<T>,
    opts: &SdpOptions<T>,
    mut sink: Option<&mut dyn Write>,
) -> SdpSolution<T> {
    let m = problem.m;
    let scale = T::one() + problem.g0.frobenius_norm();
    let cost_scale = match problem.cost.frobenius_norm() {
        c if c > T::zero() => c,
        _ => T::one(),
    };
    let fail = |x: Vec<T>, margin: T, status: SdpStatus, reduced: usize, steps: usize, history, msg: String| {
        let s = smat(&x, m);
        SdpSolution {
            objective: problem.objective_at(&s),
            s_opt: s,
            gap_bound: T::infinity(),
            status,
            phase1_margin: margin,
            near_boundary: false,
            reduced_dim: reduced,
            newton_steps: steps,
            history,
            message: Some(msg),
        }
    };

    let red = match reduce(problem, opts) {
        Ok(r) => r,
        Err(e) => {
            return fail(
                svec(&SymMat::identity(m)),
                T::nan(),
                SdpStatus::NumericalFailure,
                problem.g0.dim(),
                0,
                Vec::new(),
                e.to_string(),
            )
        }
    };
    let reduced_dim = red.g0.rows();
    if reduced_dim < problem.g0.dim() {
        trace_line(
            &mut sink,
            format_args!(
                "facial reduction: constraint dimension {} -> {}",
                problem.g0.dim(),
                reduced_dim
            ),
        );
    }

    let (x0, margin, p1, mut steps) = match phase1_reduced(m, &red, scale, opts, &mut sink) {
        Ok(r) => r,
        Err(e) => {
            return fail(
                svec(&SymMat::identity(m)),
                T::nan(),
                SdpStatus::NumericalFailure,
                reduced_dim,
                0,
                Vec::new(),
                e.to_string(),
            )
        }
    };
    let (relax, near_boundary) = match p1 {
        Phase1Status::StrictlyFeasible => (T::zero(), false),
        Phase1Status::NearBoundary => (-margin + opts.infeasible_tol * scale, true),
        Phase1Status::Infeasible => {
            return fail(
                x0,
                margin,
                SdpStatus::Infeasible,
                reduced_dim,
                steps,
                Vec::new(),
                format!("phase I margin {:e} below feasibility threshold", margin.as_f64()),
            )
        }
        Phase1Status::NumericalFailure => {
            return fail(
                x0,
                margin,
                SdpStatus::NumericalFailure,
                reduced_dim,
                steps,
                Vec::new(),
                "phase I line search failed".into(),
            )
        }
    };
    if near_boundary {
        trace_line(
            &mut sink,
            format_args!(
                "phase=1 near-boundary margin={:e}; relaxing LMI by {:e}",
                margin.as_f64(),
                relax.as_f64()
            ),
        );
    }

    let mut g_const = red.g0.clone();
    for i in 0..reduced_dim {
        g_const[(i, i)] += relax;
    }
    let barrier = Barrier {
        blocks: vec![
            AffineBlock {
                constant: g_const,
                coeffs: red.lin.clone(),
            },
            AffineBlock {
                constant: Mat::zeros(m, m),
                coeffs: basis_mats(m),
            },
        ],
        cost: svec(&problem.cost).into_iter().map(|c| c / cost_scale).collect(),
    };
    let mut x = x0;
    if barrier.factor(&x).is_none() {
        // Near-boundary phase-I points can sit on the relaxed boundary; nudge S inward.
        let nudged = svec(&smat(&x, m).add_identity(relax.max(T::tol(1e-12))));
        if barrier.factor(&nudged).is_none() {
            return fail(
                x,
                margin,
                SdpStatus::NumericalFailure,
                reduced_dim,
                steps,
                Vec::new(),
                "no interior starting point for phase II".into(),
            );
        }
        x = nudged;
    }

    let weight = barrier.weight();
    let runaway = T::lit(1e3) * opts.phase1_trace_bound.max(scale);
    let mut t = opts.t0;
    let mut history = Vec::new();
    for outer in 0..opts.max_outer {
        let n = match barrier.center(t, &mut x, opts, runaway, |_| false) {
            Ok(n) => n,
            Err((n, err)) => {
                steps += n;
                let msg = match err {
                    CenterError::LineSearch(msg) => msg,
                    CenterError::Unbounded => "objective appears unbounded below".into(),
                    CenterError::Stopped => unreachable!("phase II has no stop condition"),
                };
                return fail(x, margin, SdpStatus::NumericalFailure, reduced_dim, steps, history, msg);
            }
        };
        steps += n;
        let s = smat(&x, m);
        let objective = problem.objective_at(&s);
        let gap_bound = weight / t * cost_scale;
        trace_line(
            &mut sink,
            format_args!(
                "phase=2 iter={outer} t={:.3e} objective={:.12e} gap={:.3e} newton={n}",
                t.as_f64(),
                objective.as_f64(),
                gap_bound.as_f64()
            ),
        );
        history.push(OuterRecord {
            phase: 2,
            t,
            objective,
            gap_bound,
            newton_steps: n,
        });
        if weight / t <= opts.gap_tol {
            return SdpSolution {
                s_opt: s,
                objective,
                gap_bound,
                status: SdpStatus::Optimal,
                phase1_margin: margin,
                near_boundary,
                reduced_dim,
                newton_steps: steps,
                history,
                message: near_boundary.then(|| "feasible set has (numerically) empty interior; solved a relaxed LMI".to_string()),
            };
        }
        t *= opts.mu;
    }
    fail(
        x,
        margin,
        SdpStatus::NumericalFailure,
        reduced_dim,
        steps,
        history,
        format!("gap tolerance not reached in {} outer iterations", opts.max_outer),
    )
}
