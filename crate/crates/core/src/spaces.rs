//! Weighted `L_p`, mixed `L_(p0,p)` and degenerate Sobolev norms.
//!
//! Spatial integrals are trapezoid sums over the `tau`-uniform nodes with the
//! Jacobian `dx/dtau = x^alpha` folded into the node weights, i.e. the
//! trapezoid rule for `int g(x) dx = int g(x(tau)) x(tau)^alpha dtau`. The
//! Jacobian can be evaluated from the graded `x` nodes or from the `tau`
//! nodes; [`lp_norm`] and [`lp_norm_tau_weighted`] take the two routes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{degen_derivative, GridFunction, GridSpec};
use crate::linalg::{pairwise_sum, vec_norm, CMatrix};

/// Integrability exponents: `spatial_p` in space, `temporal_p0` in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub spatial_p: f64,
    pub temporal_p0: f64,
}

impl NormSpec {
    pub fn new(spatial_p: f64, temporal_p0: f64) -> Result<Self> {
        for (name, v) in [("p", spatial_p), ("p0", temporal_p0)] {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must lie in [1, inf), got {v}")));
            }
        }
        Ok(Self {
            spatial_p,
            temporal_p0,
        })
    }

    pub fn l2() -> Self {
        Self {
            spatial_p: 2.0,
            temporal_p0: 2.0,
        }
    }
}

impl Default for NormSpec {
    fn default() -> Self {
        Self::l2()
    }
}

fn trapezoid_factor(j: usize, n: usize) -> f64 {
    if j == 0 || j == n {
        0.5
    } else {
        1.0
    }
}

/// Per-axis node weights with the Jacobian taken from the `x` nodes.
pub fn x_weights(grid: &GridSpec, axis: usize) -> Vec<f64> {
    let ax = &grid.axes()[axis];
    let h = ax.h();
    let n = ax.n_cells();
    grid.x_nodes(axis)
        .iter()
        .enumerate()
        .map(|(j, &x)| trapezoid_factor(j, n) * h * x.powf(ax.alpha()))
        .collect()
}

/// Per-axis node weights with the Jacobian `((1-alpha) tau)^(alpha/(1-alpha))`.
pub fn tau_weights(grid: &GridSpec, axis: usize) -> Vec<f64> {
    let ax = &grid.axes()[axis];
    let h = ax.h();
    let n = ax.n_cells();
    grid.tau_nodes(axis)
        .iter()
        .enumerate()
        .map(|(j, &t)| trapezoid_factor(j, n) * h * ax.jacobian_at_tau(t))
        .collect()
}

fn tensor_weights(grid: &GridSpec, per_axis: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
    let w: Vec<Vec<f64>> = (0..grid.dims()).map(per_axis).collect();
    (0..grid.n_nodes())
        .map(|node| (0..grid.dims()).map(|k| w[k][grid.coord(node, k)]).product())
        .collect()
}

/// Quadrature weights for `int g dx` over the whole grid.
pub fn quadrature_weights(grid: &GridSpec) -> Vec<f64> {
    tensor_weights(grid, |k| x_weights(grid, k))
}

fn weighted_norm(pointwise: &[f64], weights: &[f64], p: f64) -> f64 {
    let terms: Vec<f64> = pointwise.iter().zip(weights).map(|(v, w)| w * v.powf(p)).collect();
    pairwise_sum(&terms).powf(1.0 / p)
}

fn pointwise_norms(u: &GridFunction) -> Vec<f64> {
    (0..u.grid().n_nodes()).map(|n| vec_norm(u.at(n))).collect()
}

/// `(int |u(x)|^p dx)^(1/p)` with the Euclidean norm on `C^m`.
pub fn lp_norm(u: &GridFunction, spec: &NormSpec) -> f64 {
    let w = quadrature_weights(u.grid());
    weighted_norm(&pointwise_norms(u), &w, spec.spatial_p)
}

/// Same integral written in `tau` with the weight
/// `prod_k ((1-alpha_k) tau_k)^(alpha_k/(1-alpha_k))`.
pub fn lp_norm_tau_weighted(u: &GridFunction, spec: &NormSpec) -> f64 {
    let grid = u.grid();
    let w = tensor_weights(grid, |k| tau_weights(grid, k));
    weighted_norm(&pointwise_norms(u), &w, spec.spatial_p)
}

/// `|| |u| + |A u| ||_p + sum_k ||D^[2]_k u||_p`, where `potential` holds the
/// matrix `A(x)` per node.
pub fn sobolev_norm(u: &GridFunction, spec: &NormSpec, potential: &[CMatrix]) -> Result<f64> {
    let grid = u.grid();
    if potential.len() != grid.n_nodes() {
        return Err(Error::Invalid("potential field does not match the grid".into()));
    }
    let graph: Vec<f64> = (0..grid.n_nodes())
        .map(|n| vec_norm(u.at(n)) + vec_norm(&potential[n].mul_vec(u.at(n))))
        .collect();
    let mut total = weighted_norm(&graph, &quadrature_weights(grid), spec.spatial_p);
    for k in 0..grid.dims() {
        total += lp_norm(&degen_derivative(u, k, 2)?, spec);
    }
    Ok(total)
}

/// `(sum_s dt ||u_s||_p^p0)^(1/p0)`: rectangle rule in time over the supplied
/// time levels.
pub fn mixed_norm(series: &[GridFunction], spec: &NormSpec, dt: f64) -> f64 {
    let terms: Vec<f64> = series
        .iter()
        .map(|u| dt * lp_norm(u, spec).powf(spec.temporal_p0))
        .collect();
    pairwise_sum(&terms).powf(1.0 / spec.temporal_p0)
}
