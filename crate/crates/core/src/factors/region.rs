//! Convex pieces of the cone `C_T` and Euclidean projections onto them.
//!
//! A sign pattern `σ` on `T` turns the cone into a convex set after the
//! change of variables `y_i = σ_i h_i` (`i ∈ T`), `y_i = h_i` (`i ∉ T`).
//! In those coordinates the cone piece is `{y_T ≥ 0, ‖y_{Tᶜ}‖₁ ≤ 1ᵀy_T}`.

use nalgebra::DVector;

#[derive(Debug, Clone)]
pub(crate) enum Shape {
    /// `1ᵀy_T = 1`, `y_T ≥ 0`, `‖y_{Tᶜ}‖₁ ≤ 1`.
    Slice,
    /// `y_j = 1` for a fixed coordinate `j`, plus the cone-piece constraint.
    Anchored { index: usize, in_support: bool },
}

#[derive(Debug, Clone)]
pub(crate) struct Region {
    /// Free coordinates in the support (sign-flipped, non-negative).
    pub v_idx: Vec<usize>,
    /// Free coordinates off the support.
    pub u_idx: Vec<usize>,
    pub shape: Shape,
}

impl Region {
    pub fn slice(support: &[usize], p: usize) -> Self {
        Self {
            v_idx: support.to_vec(),
            u_idx: complement(support, p),
            shape: Shape::Slice,
        }
    }

    pub fn anchored(support: &[usize], p: usize, index: usize) -> Self {
        let in_support = support.contains(&index);
        Self {
            v_idx: support.iter().copied().filter(|&i| i != index).collect(),
            u_idx: complement(support, p).into_iter().filter(|&i| i != index).collect(),
            shape: Shape::Anchored { index, in_support },
        }
    }

    pub fn project(&self, y: &mut DVector<f64>) {
        match self.shape {
            Shape::Slice => {
                let v: Vec<f64> = self.v_idx.iter().map(|&i| y[i]).collect();
                for (&i, val) in self.v_idx.iter().zip(project_simplex(&v)) {
                    y[i] = val;
                }
                let u: Vec<f64> = self.u_idx.iter().map(|&i| y[i]).collect();
                for (&i, val) in self.u_idx.iter().zip(project_l1_ball(&u, 1.0)) {
                    y[i] = val;
                }
            }
            Shape::Anchored { index, in_support } => {
                y[index] = 1.0;
                let (c, d) = if in_support { (0.0, 1.0) } else { (1.0, 0.0) };
                let v0: Vec<f64> = self.v_idx.iter().map(|&i| y[i]).collect();
                let u0: Vec<f64> = self.u_idx.iter().map(|&i| y[i]).collect();
                let mu = cone_multiplier(&v0, &u0, c, d);
                for (&i, v) in self.v_idx.iter().zip(&v0) {
                    y[i] = (v + mu).max(0.0);
                }
                for (&i, u) in self.u_idx.iter().zip(&u0) {
                    y[i] = soft(*u, mu);
                }
            }
        }
    }
}

pub(crate) fn complement(support: &[usize], p: usize) -> Vec<usize> {
    (0..p).filter(|i| !support.contains(i)).collect()
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Projection onto `{u : ‖u‖₁ ≤ radius}`.
pub(crate) fn project_l1_ball(u: &[f64], radius: f64) -> Vec<f64> {
    if u.iter().map(|x| x.abs()).sum::<f64>() <= radius {
        return u.to_vec();
    }
    let abs: Vec<f64> = u.iter().map(|x| x.abs() / radius).collect();
    let w = project_simplex(&abs);
    u.iter().zip(w).map(|(x, m)| x.signum() * m * radius).collect()
}

/// Multiplier `μ ≥ 0` of the projection onto
/// `{(v, u) : v ≥ 0, c + ‖u‖₁ ≤ d + 1ᵀv}`, whose solution is
/// `v = max(v₀ + μ, 0)`, `u = soft(u₀, μ)`.
fn cone_multiplier(v0: &[f64], u0: &[f64], c: f64, d: f64) -> f64 {
    let g = |mu: f64| {
        c + u0.iter().map(|u| (u.abs() - mu).max(0.0)).sum::<f64>()
            - d
            - v0.iter().map(|v| (v + mu).max(0.0)).sum::<f64>()
    };
    let g0 = g(0.0);
    if g0 <= 0.0 {
        return 0.0;
    }
    // g is piecewise linear and decreasing; walk its breakpoints.
    let mut breaks: Vec<f64> = u0
        .iter()
        .map(|u| u.abs())
        .chain(v0.iter().map(|v| -v))
        .filter(|b| *b > 0.0)
        .collect();
    breaks.sort_by(f64::total_cmp);
    let (mut lo, mut g_lo) = (0.0, g0);
    for b in breaks {
        if b <= lo {
            continue;
        }
        let g_b = g(b);
        if g_b <= 0.0 {
            return lo + g_lo * (b - lo) / (g_lo - g_b);
        }
        lo = b;
        g_lo = g_b;
    }
    // Past the last breakpoint every v-coordinate is active.
    lo + g_lo / v0.len().max(1) as f64
}
