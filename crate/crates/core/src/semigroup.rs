//! Unital channel semigroups and their hypercontractivity times.
//!
//! For a semigroup Φ_t with Φ_0 = id, Φ_t(I) = I and Φ_t → Tr(·) I/d, the
//! normalized norm |||Φ_t|||_{p→q} is at least 1, since the identity input
//! attains 1, and equals 1 from the contraction time t(p,q) on. Monotonicity
//! in t is checked on a grid before bisecting, never assumed.

use serde::{Deserialize, Serialize};

use crate::channels::{make_depolarizing, tensor, SuperOp};
use crate::error::{input, Error, Result};
use crate::linalg::{kron, MAX_DIM};
use crate::norms::{triple_norm_estimate, NormQuery, OptimizerConfig};
use crate::par;

/// A one-parameter family of unital CP maps on d×d matrices.
pub trait UnitalSemigroup: Sync {
    fn dim(&self) -> usize;

    fn evolve(&self, t: f64) -> Result<SuperOp>;
}

/// Δ_λ with λ = e^{−t}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DepolarizingSemigroup {
    d: usize,
}

impl DepolarizingSemigroup {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return input("depolarizing semigroup needs d >= 2");
        }
        if d > MAX_DIM {
            return Err(Error::Resource(format!("dimension {d} exceeds {MAX_DIM}")));
        }
        Ok(Self { d })
    }
}

impl UnitalSemigroup for DepolarizingSemigroup {
    fn dim(&self) -> usize {
        self.d
    }

    fn evolve(&self, t: f64) -> Result<SuperOp> {
        if !t.is_finite() || t < 0.0 {
            return input(format!("time must be finite and >= 0, got {t}"));
        }
        make_depolarizing(self.d, (-t).exp())
    }
}

/// Number of grid points for the monotonicity pre-check.
pub const MONOTONE_GRID: usize = 32;

/// |||Φ_t|||_{p→q} − 1.
pub fn excess<S: UnitalSemigroup + ?Sized>(sg: &S, t: f64, query: NormQuery, cfg: &OptimizerConfig) -> Result<f64> {
    Ok(triple_norm_estimate(&sg.evolve(t)?, query, cfg, &[])?.0 - 1.0)
}

/// (t, |||Φ_t|||_{p→q}) rows, evaluated in parallel.
pub fn norm_table<S: UnitalSemigroup + ?Sized>(
    sg: &S,
    query: NormQuery,
    cfg: &OptimizerConfig,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    par::map_indexed(times.len(), |i| Ok((times[i], excess(sg, times[i], query, cfg)? + 1.0))).into_iter().collect()
}

/// Smallest t in [0, t_max] with |||Φ_t|||_{p→q} ≤ 1 + tol_value, to within
/// `tol_t`. Returns 0 when p > q.
pub fn contraction_time<S: UnitalSemigroup + ?Sized>(
    sg: &S,
    query: NormQuery,
    cfg: &OptimizerConfig,
    t_max: f64,
    tol_t: f64,
) -> Result<f64> {
    if query.p > query.q {
        return Ok(0.0);
    }
    if !(t_max > 0.0 && t_max.is_finite() && tol_t > 0.0) {
        return input("need t_max > 0 and tol_t > 0");
    }
    let tol = cfg.tol_value;
    let grid: Vec<f64> = (0..MONOTONE_GRID).map(|i| t_max * i as f64 / (MONOTONE_GRID - 1) as f64).collect();
    let values: Vec<f64> = par::map_indexed(grid.len(), |i| excess(sg, grid[i], query, cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    for (i, w) in values.windows(2).enumerate() {
        if w[1] > w[0] + 10.0 * tol {
            return Err(Error::Diagnostic(format!(
                "|||Phi_t||| increases between t = {} ({}) and t = {} ({})",
                grid[i],
                w[0] + 1.0,
                grid[i + 1],
                w[1] + 1.0
            )));
        }
    }
    let last = *values.last().expect("nonempty grid");
    if last > tol {
        return Err(Error::NoContraction { t_max, excess: last });
    }
    let first = values.iter().position(|&g| g <= tol).expect("last point contracts");
    if first == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (grid[first - 1], grid[first]);
    while hi - lo > tol_t {
        let mid = 0.5 * (lo + hi);
        if excess(sg, mid, query, cfg)? <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Largest q at time t with |||Φ_t|||_{2→q} ≤ 1 + tol_value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QOfT {
    pub t: f64,
    pub q: f64,
    /// The bound still holds at `Q_MAX`, so `q` is only a lower bound.
    pub saturated: bool,
}

pub const Q_MAX: f64 = 64.0;
pub const Q_TOL: f64 = 1e-5;

pub fn q_of_t<S: UnitalSemigroup + ?Sized>(sg: &S, t: f64, cfg: &OptimizerConfig) -> Result<QOfT> {
    let tol = cfg.tol_value;
    let ok = |q: f64| -> Result<bool> { Ok(excess(sg, t, NormQuery::new(2.0, q)?, cfg)? <= tol) };
    if ok(Q_MAX)? {
        return Ok(QOfT { t, q: Q_MAX, saturated: true });
    }
    if !ok(2.0)? {
        return Err(Error::Diagnostic(format!("|||Phi_t|||_(2->2) exceeds 1 at t = {t}")));
    }
    let (mut lo, mut hi) = (2.0, Q_MAX);
    while hi - lo > Q_TOL {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(QOfT { t, q: lo, saturated: false })
}

/// Returns |||Φ_t|||_{p→q}, failing if it is below 1 − 1e-6.
pub fn lower_bound_check<S: UnitalSemigroup + ?Sized>(
    sg: &S,
    t: f64,
    query: NormQuery,
    cfg: &OptimizerConfig,
) -> Result<f64> {
    let v = excess(sg, t, query, cfg)? + 1.0;
    if v < 1.0 - 1e-6 {
        return Err(Error::Diagnostic(format!("|||Phi_t||| = {v} < 1 at t = {t}")));
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductContraction {
    pub t: f64,
    pub single: f64,
    pub product: f64,
    /// product − single²; zero when the norm is multiplicative at this t.
    pub gap: f64,
}

/// |||Φ_t|||_{p→q} and |||Φ_t ⊗ Φ_t|||_{p→q}, reported without judgement.
pub fn product_contraction_check<S: UnitalSemigroup + ?Sized>(
    sg: &S,
    t: f64,
    query: NormQuery,
    cfg: &OptimizerConfig,
) -> Result<ProductContraction> {
    let d = sg.dim();
    if d * d > MAX_DIM {
        return Err(Error::Resource(format!("product dimension {} exceeds {MAX_DIM}", d * d)));
    }
    let phi = sg.evolve(t)?;
    let (single, est) = triple_norm_estimate(&phi, query, cfg, &[])?;
    let product_map = tensor(&phi, &phi)?;
    let warm = kron(&est.argmax, &est.argmax);
    let (product, _) = triple_norm_estimate(&product_map, query, cfg, &[warm])?;
    Ok(ProductContraction { t, single, product, gap: product - single * single })
}
