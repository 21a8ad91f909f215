#![allow(dead_code)]

use covdesign::riccati::check_assumptions;
use covdesign::{Mat, SymMat, SystemModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn pixel_model() -> SystemModel {
    let f = Mat::from_rows(&[
        vec![1.0, 0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap();
    let h = Mat::from_rows(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
    SystemModel::new(f, h, SymMat::from_diag(&[0.1, 0.1, 50.0, 50.0])).unwrap()
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| normal(rng))
}

/// `A Aᵀ + floor·I` with standard normal `A`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> SymMat {
    let a = random_mat(rng, n, n);
    SymMat::new(&a * &a.transpose()).unwrap().add_identity(floor)
}

/// Random observable/controllable model with spectral scale around one.
pub fn random_model(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> SystemModel {
    loop {
        let scale = rng.random_range(0.5..1.1) / (nx as f64).sqrt();
        let f = random_mat(rng, nx, nx).scale(scale);
        let h = random_mat(rng, ny, nx);
        let q = random_pd(rng, nx, 0.1).scale(0.5);
        let m = SystemModel::new(f, h, q).unwrap();
        if check_assumptions(&m).map(|a| a.satisfied()).unwrap_or(false) {
            return m;
        }
    }
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Mat) -> Mat {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| a[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                if factor != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= factor * m[col][c];
                    }
                }
            }
        }
    }
    Mat::from_fn(n, n, |i, j| m[i][n + j])
}

/// Steady state of `s ↦ f²s + q − f²h²s²/(h²s + r)` by plain iteration.
pub fn scalar_dare(f: f64, h: f64, q: f64, r: f64) -> f64 {
    let mut s = q;
    for _ in 0..1_000_000 {
        let next = f * f * s + q - (f * h * s).powi(2) / (h * h * s + r);
        if (next - s).abs() <= 1e-15 * (1.0 + s) {
            return next;
        }
        s = next;
    }
    s
}

/// Smallest `x ∈ [0, hi]` with `feasible(x)`, assuming the feasible set is `[x*, ∞)`.
pub fn bisect_min_feasible(mut feasible: impl FnMut(f64) -> bool, hi: f64) -> Option<f64> {
    if feasible(0.0) {
        return Some(0.0);
    }
    if !feasible(hi) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + hi) {
            break;
        }
    }
    Some(hi)
}

/// `[[a, b], [b, c]] ⪰ 0` with a relative tolerance.
pub fn psd_2x2(a: f64, b: f64, c: f64, tol: f64) -> bool {
    let scale = 1.0 + a.abs() + c.abs() + b.abs();
    a >= -tol * scale && c >= -tol * scale && a * c - b * b >= -tol * scale * scale
}

pub fn max_rel_diff(a: &Mat, b: &Mat) -> f64 {
    let d = (a - b).max_abs();
    d / (1.0 + a.max_abs().max(b.max_abs()))
}
