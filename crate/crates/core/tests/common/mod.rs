//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerical routines: the
//! quasi-likelihood is re-derived term by term, derivatives come from
//! finite differences, the selector is checked against an exhaustive grid
//! search, and the factors against a dense grid over the cone slice.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparse_diff::model::ObservedPath;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A path with covariates uniform on `[-1, 1]` and Gaussian increments
/// whose log-scale is a random linear function of the covariates.
pub fn random_path(rng: &mut impl Rng, n: usize, p: usize) -> ObservedPath {
    let z = DMatrix::from_fn(p, n + 1, |_, _| rng.random_range(-1.0..1.0));
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
    let delta = 1.0 / n as f64;
    let mut x = vec![rng.random_range(-1.0..1.0)];
    for k in 1..=n {
        let eta: f64 = (0..p).map(|i| beta[i] * z[(i, k - 1)]).sum();
        let xi: f64 = rng.sample(StandardNormal);
        let last = x[k - 1];
        x.push(last + 0.3 * delta + eta.exp() * delta.sqrt() * xi);
    }
    ObservedPath::new(x, z).unwrap()
}

pub fn random_vector(rng: &mut impl Rng, p: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.random_range(lo..hi))
}

/// `l_n(b; θ)` summed one interval at a time from the Gaussian density.
pub fn loglik_naive(path: &ObservedPath, theta: &DVector<f64>, drift: impl Fn(f64) -> f64) -> f64 {
    let delta = 1.0 / path.n as f64;
    let mut total = 0.0;
    for k in 1..=path.n {
        let mut eta = 0.0;
        for i in 0..path.p() {
            eta += theta[i] * path.z[(i, k - 1)];
        }
        let var = (2.0 * eta).exp() * delta;
        let resid = path.x[k] - path.x[k - 1] - drift(path.x[k - 1]) * delta;
        total += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - resid * resid / (2.0 * var);
    }
    total
}

/// `ψ_n(0; θ)` straight from its defining sum.
pub fn score_naive(path: &ObservedPath, theta: &[f64]) -> Vec<f64> {
    let n = path.n;
    let delta = 1.0 / n as f64;
    let p = path.p();
    let mut psi = vec![0.0; p];
    for k in 1..=n {
        let eta: f64 = theta.iter().enumerate().map(|(i, t)| t * path.z[(i, k - 1)]).sum();
        let dx = path.x[k] - path.x[k - 1];
        for (i, slot) in psi.iter_mut().enumerate() {
            *slot += path.z[(i, k - 1)] * ((-2.0 * eta).exp() * dx * dx - delta);
        }
    }
    psi.iter().map(|v| v / (n as f64 * delta)).collect()
}

/// Central differences with step `h`.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, at: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(at.len(), |i, _| {
        let mut up = at.clone();
        let mut down = at.clone();
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

/// Second-order central differences with step `h`.
pub fn fd_hessian(f: impl Fn(&DVector<f64>) -> f64, at: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let p = at.len();
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut v = at.clone();
        v[i] += si * h;
        v[j] += sj * h;
        f(&v)
    };
    let f0 = f(at);
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            (shifted(i, 1.0, i, 0.0) - 2.0 * f0 + shifted(i, -1.0, i, 0.0)) / (h * h)
        } else {
            (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) - shifted(i, -1.0, j, 1.0)
                + shifted(i, -1.0, j, -1.0))
                / (4.0 * h * h)
        }
    })
}

/// Exhaustive search for the smallest ℓ₁ norm among grid points of
/// `[lo, hi]ᵖ` (spacing `step`) satisfying `‖ψ_n(0; θ)‖_∞ ≤ γ`.
///
/// Best-first branch and bound over boxes of grid points: each box gets an
/// interval enclosure of `ψ_n` (the exponent `θᵀZ_k` is linear, so its range
/// over a box is exact) and the smallest ℓ₁ norm it contains. A box whose
/// enclosure misses `[-γ, γ]` holds no feasible point; the first single
/// grid point (or wholly feasible box) popped is the grid optimum.
pub struct GridSelector {
    z: Vec<Vec<f64>>,
    r2: Vec<f64>,
    delta: f64,
    gamma: f64,
    lo: f64,
    step: f64,
    size: usize,
    p: usize,
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    order: usize,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Reversed: BinaryHeap pops the smallest bound first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.order.cmp(&self.order))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub l1: f64,
    pub theta: Vec<f64>,
    pub boxes: usize,
}

impl GridSelector {
    pub fn new(path: &ObservedPath, gamma: f64, lo: f64, hi: f64, step: f64) -> Self {
        let n = path.n;
        let p = path.p();
        let size = ((hi - lo) / step).round() as usize + 1;
        Self {
            z: (0..n).map(|k| (0..p).map(|i| path.z[(i, k)]).collect()).collect(),
            r2: (1..=n).map(|k| (path.x[k] - path.x[k - 1]).powi(2)).collect(),
            delta: 1.0 / n as f64,
            gamma,
            lo,
            step,
            size,
            p,
        }
    }

    fn coord(&self, idx: usize) -> f64 {
        self.lo + idx as f64 * self.step
    }

    fn min_abs(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (self.coord(a), self.coord(b));
        if x <= 0.0 && y >= 0.0 {
            0.0
        } else {
            x.abs().min(y.abs())
        }
    }

    fn nearest_zero(&self, a: usize, b: usize) -> usize {
        let (x, y) = (self.coord(a), self.coord(b));
        if x >= 0.0 {
            a
        } else if y <= 0.0 {
            b
        } else {
            (((-self.lo) / self.step).round() as usize).clamp(a, b)
        }
    }

    /// Interval enclosure of each `ψ_i` over the box.
    fn enclosure(&self, lo: &[usize], hi: &[usize]) -> Vec<(f64, f64)> {
        let mut acc = vec![(0.0, 0.0); self.p];
        for (zk, r2) in self.z.iter().zip(&self.r2) {
            let (mut m_lo, mut m_hi) = (0.0, 0.0);
            for j in 0..self.p {
                let (a, b) = (self.coord(lo[j]) * zk[j], self.coord(hi[j]) * zk[j]);
                m_lo += a.min(b);
                m_hi += a.max(b);
            }
            let (w_lo, w_hi) = ((-2.0 * m_hi).exp() * r2, (-2.0 * m_lo).exp() * r2);
            for i in 0..self.p {
                let zi = zk[i];
                let (t_lo, t_hi) = if zi >= 0.0 {
                    (zi * (w_lo - self.delta), zi * (w_hi - self.delta))
                } else {
                    (zi * (w_hi - self.delta), zi * (w_lo - self.delta))
                };
                acc[i].0 += t_lo;
                acc[i].1 += t_hi;
            }
        }
        acc
    }

    fn point_score(&self, theta: &[f64]) -> Vec<f64> {
        let mut psi = vec![0.0; self.p];
        for (zk, r2) in self.z.iter().zip(&self.r2) {
            let eta: f64 = zk.iter().zip(theta).map(|(a, b)| a * b).sum();
            let w = (-2.0 * eta).exp() * r2 - self.delta;
            for i in 0..self.p {
                psi[i] += zk[i] * w;
            }
        }
        psi
    }

    pub fn solve(&self) -> Option<GridOptimum> {
        let gamma = self.gamma;
        let slack = 1e-12 * (1.0 + gamma);
        let root = Node {
            bound: 0.0,
            order: 0,
            lo: vec![0; self.p],
            hi: vec![self.size - 1; self.p],
        };
        let mut heap = BinaryHeap::new();
        let mut order = 1;
        let mut boxes = 0;
        heap.push(Node {
            bound: self.bound(&root.lo, &root.hi),
            ..root
        });
        while let Some(node) = heap.pop() {
            boxes += 1;
            if node.lo == node.hi {
                let theta: Vec<f64> = node.lo.iter().map(|&i| self.coord(i)).collect();
                if self.point_score(&theta).iter().all(|v| v.abs() <= gamma) {
                    return Some(GridOptimum {
                        l1: theta.iter().map(|v| v.abs()).sum(),
                        theta,
                        boxes,
                    });
                }
                continue;
            }
            let enc = self.enclosure(&node.lo, &node.hi);
            if enc.iter().any(|(l, u)| *l > gamma + slack || *u < -gamma - slack) {
                continue;
            }
            if enc.iter().all(|(l, u)| *l >= -gamma + slack && *u <= gamma - slack) {
                let theta: Vec<f64> = (0..self.p)
                    .map(|j| self.coord(self.nearest_zero(node.lo[j], node.hi[j])))
                    .collect();
                return Some(GridOptimum {
                    l1: theta.iter().map(|v| v.abs()).sum(),
                    theta,
                    boxes,
                });
            }
            let dim = (0..self.p)
                .max_by_key(|&j| (node.hi[j] - node.lo[j], usize::MAX - j))
                .expect("p ≥ 1");
            let mid = (node.lo[dim] + node.hi[dim]) / 2;
            let mut left_hi = node.hi.clone();
            left_hi[dim] = mid;
            let mut right_lo = node.lo.clone();
            right_lo[dim] = mid + 1;
            for (lo, hi) in [(node.lo.clone(), left_hi), (right_lo, node.hi.clone())] {
                heap.push(Node {
                    bound: self.bound(&lo, &hi),
                    order,
                    lo,
                    hi,
                });
                order += 1;
            }
        }
        None
    }

    fn bound(&self, lo: &[usize], hi: &[usize]) -> f64 {
        (0..self.p).map(|j| self.min_abs(lo[j], hi[j])).sum()
    }

    /// Plain enumeration of every grid point; only for coarse grids.
    pub fn solve_naive(&self) -> Option<GridOptimum> {
        let total = self.size.pow(self.p as u32);
        let mut best: Option<GridOptimum> = None;
        for flat in 0..total {
            let mut rest = flat;
            let theta: Vec<f64> = (0..self.p)
                .map(|_| {
                    let i = rest % self.size;
                    rest /= self.size;
                    self.coord(i)
                })
                .collect();
            let l1: f64 = theta.iter().map(|v| v.abs()).sum();
            if best.as_ref().is_some_and(|b| b.l1 <= l1) {
                continue;
            }
            if self.point_score(&theta).iter().all(|v| v.abs() <= self.gamma) {
                best = Some(GridOptimum { l1, theta, boxes: total });
            }
        }
        best
    }
}

/// Which cone factor a grid search targets; `q = ∞` selects `F_∞`.
#[derive(Debug, Clone, Copy)]
pub enum GridFactor {
    Kappa,
    Re,
    F(f64),
}

fn grid_objective(j: &DMatrix<f64>, support: &[usize], factor: GridFactor, h: &[f64]) -> f64 {
    let p = h.len();
    let mut quad = 0.0;
    for a in 0..p {
        for b in 0..p {
            quad += h[a] * j[(a, b)] * h[b];
        }
    }
    let root = quad.max(0.0).sqrt();
    let s = support.len() as f64;
    match factor {
        GridFactor::Kappa => {
            let on: f64 = support.iter().map(|&i| h[i].abs()).sum();
            s.sqrt() * root / on
        }
        GridFactor::Re => root / h.iter().map(|v| v * v).sum::<f64>().sqrt(),
        GridFactor::F(q) if q.is_infinite() => root / h.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        GridFactor::F(q) => {
            let on: f64 = support.iter().map(|&i| h[i].abs()).sum();
            let norm = h.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q);
            s.powf(1.0 / q) * quad.max(0.0) / (on * norm)
        }
    }
}

/// Dense grid minimum of a factor objective over the slice
/// `{‖h_T‖₁ = 1, ‖h_{Tᶜ}‖₁ ≤ 1}`, followed by local grid refinement
/// around the best points.
///
/// The slice is parametrized by `x ∈ ℝ^{S-1}` (the first support
/// coordinates, the last one being `1 - ‖x‖₁ ≥ 0`) and `y ∈ ℝ^{p-S}` (the
/// off-support coordinates), each constrained to the unit ℓ₁ ball; the
/// symmetry `h → -h` covers the other sign of the last support coordinate.
pub fn factor_grid(j: &DMatrix<f64>, support: &[usize], factor: GridFactor, step: f64) -> f64 {
    let p = j.nrows();
    let s = support.len();
    let off: Vec<usize> = (0..p).filter(|i| !support.contains(i)).collect();
    let d = p - 1;

    let eval = |w: &[f64]| -> Option<f64> {
        let (x, y) = w.split_at(s - 1);
        let xs: f64 = x.iter().map(|v| v.abs()).sum();
        let ys: f64 = y.iter().map(|v| v.abs()).sum();
        if xs > 1.0 + 1e-12 || ys > 1.0 + 1e-12 {
            return None;
        }
        let mut h = vec![0.0; p];
        for (k, &i) in support.iter().enumerate().take(s - 1) {
            h[i] = x[k];
        }
        h[support[s - 1]] = (1.0 - xs).max(0.0);
        for (k, &i) in off.iter().enumerate() {
            h[i] = y[k];
        }
        Some(grid_objective(j, support, factor, &h))
    };

    if d == 0 {
        return eval(&[]).expect("single point");
    }

    // Coarse pass over the cube [-1, 1]^d.
    let per_axis = (2.0 / step).round() as usize + 1;
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let w: Vec<f64> = idx.iter().map(|&i| -1.0 + i as f64 * step).collect();
        if let Some(v) = eval(&w) {
            scored.push((v, w));
        }
        let mut axis = 0;
        while axis < d {
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
        if axis == d {
            break;
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.truncate(16);

    // Refine each candidate on successively finer local grids.
    let mut best = f64::INFINITY;
    for (mut value, mut centre) in scored {
        let mut h = step;
        for _ in 0..4 {
            let fine = h / 10.0;
            let mut local = vec![0usize; d];
            let mut next = (value, centre.clone());
            loop {
                let w: Vec<f64> = local
                    .iter()
                    .zip(&centre)
                    .map(|(&i, c)| c - h + i as f64 * fine)
                    .collect();
                if let Some(v) = eval(&w) {
                    if v < next.0 {
                        next = (v, w);
                    }
                }
                let mut axis = 0;
                while axis < d {
                    local[axis] += 1;
                    if local[axis] <= 20 {
                        break;
                    }
                    local[axis] = 0;
                    axis += 1;
                }
                if axis == d {
                    break;
                }
            }
            value = next.0;
            centre = next.1;
            h = fine;
        }
        best = best.min(value);
    }
    best
}

/// A random symmetric PSD matrix `BᵀB / k` with `B` Gaussian `k × p`.
pub fn random_psd(rng: &mut impl Rng, p: usize, k: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(k, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    (b.transpose() * &b) / k as f64
}
