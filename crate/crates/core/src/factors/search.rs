//! Minimizers used by the factor computations: accelerated projected
//! gradient for convex quadratics and projected descent with backtracking
//! for ratios of a quadratic form and a power of a norm.

use nalgebra::{DMatrix, DVector};

use super::region::Region;

pub(crate) fn quad(m: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    y.dot(&(m * y)).max(0.0)
}

/// `min yᵀMy` over a convex region, FISTA with adaptive restart.
pub(crate) fn minimize_quadratic(
    m: &DMatrix<f64>,
    region: &Region,
    start: DVector<f64>,
    lipschitz: f64,
    max_iters: usize,
    tol: f64,
) -> DVector<f64> {
    let mut x = start;
    region.project(&mut x);
    if lipschitz <= 0.0 {
        return x;
    }
    let mut z = x.clone();
    let mut t = 1.0_f64;
    let mut best = (quad(m, &x), x.clone());
    for _ in 0..max_iters {
        let grad = 2.0 * (m * &z);
        let mut next = &z - grad / lipschitz;
        region.project(&mut next);
        let step = (&next - &x).amax();
        let f = quad(m, &next);
        if f < best.0 {
            best = (f, next.clone());
        }
        if step < tol {
            break;
        }
        if (&z - &next).dot(&(&next - &x)) > 0.0 {
            t = 1.0;
            z = next.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            z = &next + (&next - &x) * ((t - 1.0) / t_next);
            t = t_next;
        }
        x = next;
    }
    best.1
}

fn q_norm(y: &DVector<f64>, q: f64) -> f64 {
    if q == 1.0 {
        y.lp_norm(1)
    } else if q == 2.0 {
        y.norm()
    } else {
        y.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// `yᵀMy / ‖y‖_q^k` for finite `q ≥ 1` and `k ∈ {1, 2}`.
pub(crate) fn ratio(m: &DMatrix<f64>, y: &DVector<f64>, q: f64, k: i32) -> f64 {
    quad(m, y) / q_norm(y, q).powi(k)
}

fn ratio_gradient(m: &DMatrix<f64>, y: &DVector<f64>, q: f64, k: i32) -> DVector<f64> {
    let my = m * y;
    let num = y.dot(&my).max(0.0);
    let norm = q_norm(y, q);
    let den = norm.powi(k);
    // ∇‖y‖_q^k = k‖y‖_q^{k-q} sign(y)|y|^{q-1}
    let scale = f64::from(k) * norm.powf(f64::from(k) - q);
    let g_den = y.map(|v| {
        if v == 0.0 {
            0.0
        } else {
            scale * v.signum() * v.abs().powf(q - 1.0)
        }
    });
    (2.0 * my * den - g_den * num) / (den * den)
}

/// Projected gradient descent on `yᵀMy / ‖y‖_q^k` over a slice region, with
/// an Armijo-type backtracking step. Returns the final point and value.
pub(crate) fn minimize_ratio(
    m: &DMatrix<f64>,
    region: &Region,
    q: f64,
    k: i32,
    start: DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> (DVector<f64>, f64) {
    let mut y = start;
    region.project(&mut y);
    let mut f = ratio(m, &y, q, k);
    let mut t = 1.0;
    for _ in 0..max_iters {
        if f == 0.0 {
            break;
        }
        let g = ratio_gradient(m, &y, q, k);
        t = (t * 2.0_f64).min(1e8);
        let mut accepted = None;
        for _ in 0..60 {
            let mut z = &y - &g * t;
            region.project(&mut z);
            let d = &z - &y;
            let fz = ratio(m, &z, q, k);
            if fz <= f + g.dot(&d) + d.norm_squared() / (2.0 * t) && fz <= f {
                accepted = Some((z, fz, d.amax()));
                break;
            }
            t *= 0.5;
        }
        let Some((z, fz, step)) = accepted else {
            break;
        };
        y = z;
        f = fz;
        if step < tol {
            break;
        }
    }
    (y, f)
}
