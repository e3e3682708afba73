//! Nonlocal two-point boundary conditions
//!
//! ```text
//! L_kj u = sum_i alpha_kji u^[i](x_k = 0) + beta_kji u^[i](x_k = b_k) = 0,   j = 1, 2
//! ```
//!
//! with trace orders `m_kj` in `{0, 1}`. Traces `u^[i]` are `tau`-derivatives
//! at the face, so the discrete functionals use one-sided second-order
//! `tau` stencils.

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::linalg::{singular_values, C64, ONE, ZERO};

/// Relative threshold below which `eta_k` counts as zero.
pub const ETA_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Tolerance used by the endpoint-compatibility checks.
const COMPATIBILITY_TOLERANCE: f64 = 1e-10;

/// One functional `L_kj`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFunctional {
    order: usize,
    alpha: Vec<C64>,
    beta: Vec<C64>,
}

impl BoundaryFunctional {
    /// `alpha[i]` and `beta[i]` multiply the `i`-th trace at `x = 0` and
    /// `x = b`; both lists have `order + 1` entries.
    pub fn new(order: usize, alpha: Vec<C64>, beta: Vec<C64>) -> Result<Self> {
        if order > 1 {
            return Err(Error::Invalid(format!("boundary trace order must be 0 or 1, got {order}")));
        }
        if alpha.len() != order + 1 || beta.len() != order + 1 {
            return Err(Error::Invalid(format!(
                "order-{order} condition needs {} alpha and beta coefficients",
                order + 1
            )));
        }
        Ok(Self { order, alpha, beta })
    }

    /// `u^[order](0) * a + u^[order](b) * b`, lower traces absent.
    pub fn top_only(order: usize, a: C64, b: C64) -> Result<Self> {
        let mut alpha = vec![ZERO; order + 1];
        let mut beta = vec![ZERO; order + 1];
        alpha[order] = a;
        beta[order] = b;
        Self::new(order, alpha, beta)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> &[C64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[C64] {
        &self.beta
    }

    pub fn top_alpha(&self) -> C64 {
        self.alpha[self.order]
    }

    pub fn top_beta(&self) -> C64 {
        self.beta[self.order]
    }

    /// True when the functional involves both ends of the interval.
    pub fn couples_ends(&self) -> bool {
        self.alpha.iter().any(|a| *a != ZERO) && self.beta.iter().any(|b| *b != ZERO)
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            order: self.order,
            alpha: self.alpha.iter().map(|a| a * c).collect(),
            beta: self.beta.iter().map(|b| b * c).collect(),
        }
    }
}

/// Pair of functionals for every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlocalBc {
    axes: Vec<[BoundaryFunctional; 2]>,
}

impl NonlocalBc {
    /// Validates the top-coefficient requirements: the first functional must
    /// involve its top trace at `x = 0`, the second at `x = b`.
    pub fn new(axes: Vec<[BoundaryFunctional; 2]>) -> Result<Self> {
        for (k, [l1, l2]) in axes.iter().enumerate() {
            if l1.top_alpha() == ZERO {
                return Err(Error::Invalid(format!(
                    "axis {k}: top coefficient alpha_{{k,m_k1}} of the first condition must be nonzero"
                )));
            }
            if l2.top_beta() == ZERO {
                return Err(Error::Invalid(format!(
                    "axis {k}: top coefficient beta_{{k,m_k2}} of the second condition must be nonzero"
                )));
            }
        }
        Ok(Self { axes })
    }

    /// Same pair on every axis.
    pub fn uniform(dims: usize, pair: [BoundaryFunctional; 2]) -> Result<Self> {
        Self::new(vec![pair; dims])
    }

    /// `u(0) = 0`, `u(b) = 0`.
    pub fn dirichlet(dims: usize) -> Self {
        let l1 = BoundaryFunctional::top_only(0, ONE, ZERO).unwrap();
        let l2 = BoundaryFunctional::top_only(0, ZERO, ONE).unwrap();
        Self::uniform(dims, [l1, l2]).unwrap()
    }

    /// `u^[1](0) = 0`, `u^[1](b) = 0`.
    pub fn neumann(dims: usize) -> Self {
        let l1 = BoundaryFunctional::top_only(1, ONE, ZERO).unwrap();
        let l2 = BoundaryFunctional::top_only(1, ZERO, ONE).unwrap();
        Self::uniform(dims, [l1, l2]).unwrap()
    }

    /// `u(0) - u(b) = 0`, `u^[1](0) - u^[1](b) = 0`.
    pub fn periodic(dims: usize) -> Self {
        let l1 = BoundaryFunctional::top_only(0, ONE, -ONE).unwrap();
        let l2 = BoundaryFunctional::top_only(1, ONE, -ONE).unwrap();
        Self::uniform(dims, [l1, l2]).unwrap()
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> Result<&[BoundaryFunctional; 2]> {
        self.axes.get(k).ok_or(Error::AxisOutOfRange {
            index: k,
            dims: self.axes.len(),
        })
    }

    pub fn axes(&self) -> &[[BoundaryFunctional; 2]] {
        &self.axes
    }

    /// Copy with functional `j` (0 or 1) of axis `k` multiplied by `c`.
    pub fn with_scaled_condition(&self, k: usize, j: usize, c: C64) -> Result<Self> {
        let mut axes = self.axes.clone();
        let pair = axes.get_mut(k).ok_or(Error::AxisOutOfRange {
            index: k,
            dims: self.axes.len(),
        })?;
        pair[j] = pair[j].scaled(c);
        Self::new(axes)
    }

    /// Degeneracy threshold for `|eta_k|`.
    pub fn eta_tolerance(&self, k: usize) -> Result<f64> {
        let [l1, l2] = self.axis(k)?;
        let scale = (l1.top_alpha() * l2.top_beta())
            .norm()
            .max((l2.top_alpha() * l1.top_beta()).norm());
        Ok(ETA_RELATIVE_TOLERANCE * scale)
    }
}

/// `eta_k = (-1)^{m_k1} alpha_{k1} beta_{k2} - (-1)^{m_k2} alpha_{k2} beta_{k1}`
/// built from the top-order coefficients.
pub fn eta_determinant(bc: &NonlocalBc, axis: usize) -> Result<C64> {
    let [l1, l2] = bc.axis(axis)?;
    let sign = |m: usize| if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(l1.top_alpha() * l2.top_beta() * sign(l1.order()) - l2.top_alpha() * l1.top_beta() * sign(l2.order()))
}

/// True when `|eta_k|` is above the degeneracy threshold.
pub fn is_regular(bc: &NonlocalBc, axis: usize) -> Result<bool> {
    let eta = eta_determinant(bc, axis)?;
    Ok(eta.norm() > bc.eta_tolerance(axis)?)
}

/// Weights of the `order`-th trace at the left (`at_end = false`) or right
/// face of a line with `n + 1` nodes and spacing `h`.
fn trace_weights(order: usize, at_end: bool, n: usize, h: f64) -> Vec<(usize, f64)> {
    match (order, at_end) {
        (0, false) => vec![(0, 1.0)],
        (0, true) => vec![(n, 1.0)],
        (_, false) => vec![(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)],
        (_, true) => vec![(n, 1.5 / h), (n - 1, -2.0 / h), (n - 2, 0.5 / h)],
    }
}

/// Dense row vectors (over the nodes of axis `axis`) of the two boundary
/// functionals.
pub fn bc_rows(bc: &NonlocalBc, grid: &GridSpec, axis: usize) -> Result<[Vec<C64>; 2]> {
    let ax = grid.axis(axis)?;
    let pair = bc.axis(axis)?;
    let eta = eta_determinant(bc, axis)?;
    if eta.norm() <= bc.eta_tolerance(axis)? {
        return Err(Error::EtaDegenerate {
            axis,
            eta_abs: eta.norm(),
        });
    }
    let n = ax.n_cells();
    let h = ax.h();
    let row = |l: &BoundaryFunctional| {
        let mut r = vec![ZERO; n + 1];
        for i in 0..=l.order() {
            for (j, w) in trace_weights(i, false, n, h) {
                r[j] += l.alpha()[i] * w;
            }
            for (j, w) in trace_weights(i, true, n, h) {
                r[j] += l.beta()[i] * w;
            }
        }
        r
    };
    Ok([row(&pair[0]), row(&pair[1])])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

/// Outcome of [`validate_conditions`].
#[derive(Clone, Debug, Serialize)]
pub struct BcReport {
    /// `eta_k` per axis.
    pub eta: Vec<C64>,
    /// Every `|eta_k|` clears its tolerance.
    pub satisfied: bool,
    pub messages: Vec<Finding>,
}

impl BcReport {
    pub fn errors(&self) -> Vec<String> {
        self.messages
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .map(|f| f.message.clone())
            .collect()
    }

    pub fn has_errors(&self) -> bool {
        self.messages.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.messages.iter().filter(|f| f.severity == Severity::Warning)
    }

    /// `Ok` unless an error-severity finding was collected.
    pub fn into_result(self) -> Result<Self> {
        if self.has_errors() {
            Err(Error::ConditionViolation(self.errors()))
        } else {
            Ok(self)
        }
    }
}

/// Everything [`validate_conditions`] looks at.
#[derive(Clone, Copy, Debug)]
pub struct ProblemDescription<'a> {
    pub coeffs: &'a CoefficientField,
    pub bc: &'a NonlocalBc,
    /// Spatial integrability exponent.
    pub p: f64,
}

/// Checks the structural conditions on a sampled problem. Findings are
/// collected rather than raised.
///
/// * trace condition `alpha_k < 1 - 1/p` (warning),
/// * `Re a_k < 0` at every node (error; an identically zero `a_k` only
///   disables diffusion and is reported as a warning),
/// * endpoint compatibility of `a_k` and `A` across a face pair, checked only
///   when a functional couples both ends (warning),
/// * `eta_k != 0` (error),
/// * numerical range of `A(x)` in the right half-plane (warning),
/// * magnitude of the first-order terms relative to `A^{1/2}` (info).
pub fn validate_conditions(problem: &ProblemDescription<'_>) -> BcReport {
    let ProblemDescription { coeffs, bc, p } = *problem;
    let grid = coeffs.grid();
    let mut messages = Vec::new();
    let mut push = |severity, message: String| messages.push(Finding { severity, message });

    if bc.dims() != grid.dims() {
        push(
            Severity::Error,
            format!("boundary conditions given for {} axes, grid has {}", bc.dims(), grid.dims()),
        );
        return BcReport {
            eta: Vec::new(),
            satisfied: false,
            messages,
        };
    }
    if !(p >= 1.0 && p.is_finite()) {
        push(Severity::Error, format!("spatial exponent p = {p} must lie in [1, inf)"));
    }

    for (k, axis) in grid.axes().iter().enumerate() {
        let bound = 1.0 - 1.0 / p;
        if axis.alpha() >= bound {
            push(
                Severity::Warning,
                format!(
                    "trace condition alpha < 1 - 1/p violated on axis {k}: alpha = {}, 1 - 1/p = {bound}",
                    axis.alpha()
                ),
            );
        }
    }

    let m = coeffs.components();
    for k in 0..grid.dims() {
        for c in 0..m {
            let samples: Vec<C64> = (0..grid.n_nodes()).map(|n| coeffs.diffusion(k, n, c)).collect();
            if samples.iter().all(|a| *a == ZERO) {
                push(
                    Severity::Warning,
                    format!("diffusion disabled along axis {k} for component {c}"),
                );
            } else if let Some(node) = samples.iter().position(|a| a.re >= 0.0) {
                push(
                    Severity::Error,
                    format!(
                        "sign condition violated: Re a_{k} = {} >= 0 at node {node} (component {c})",
                        samples[node].re
                    ),
                );
            }
        }
    }

    let mut eta = Vec::with_capacity(bc.dims());
    let mut satisfied = true;
    for k in 0..bc.dims() {
        let e = eta_determinant(bc, k).expect("axis checked above");
        let tol = bc.eta_tolerance(k).expect("axis checked above");
        if e.norm() <= tol {
            satisfied = false;
            push(
                Severity::Error,
                format!("boundary conditions on axis {k} are not regular: eta = {e}"),
            );
        }
        eta.push(e);
    }

    for j in 0..grid.dims() {
        let pair = bc.axis(j).expect("axis checked above");
        if !pair.iter().any(BoundaryFunctional::couples_ends) {
            continue;
        }
        let n_j = grid.axes()[j].n_cells();
        let stride = grid.stride(j);
        let mut worst_a: f64 = 0.0;
        let mut worst_pot: f64 = 0.0;
        for start in grid.line_starts(j) {
            let end = start + n_j * stride;
            for k in 0..grid.dims() {
                for c in 0..m {
                    worst_a = worst_a.max((coeffs.diffusion(k, start, c) - coeffs.diffusion(k, end, c)).norm());
                }
            }
            // A(G_0) A^{-1}(x_0) = A(G_b) A^{-1}(x_0) is the same as A(G_0) = A(G_b)
            // for invertible A(x_0); the direct comparison also covers singular A.
            worst_pot = worst_pot.max(coeffs.potential(start).sub(coeffs.potential(end)).norm_frobenius());
        }
        if worst_a > COMPATIBILITY_TOLERANCE {
            push(
                Severity::Warning,
                format!("endpoint compatibility a_k(G_{j}0) = a_k(G_{j}b) violated by {worst_a:e}"),
            );
        }
        if worst_pot > COMPATIBILITY_TOLERANCE {
            push(
                Severity::Warning,
                format!("endpoint compatibility A(G_{j}0) = A(G_{j}b) violated by {worst_pot:e}"),
            );
        }
    }

    let min_re = coeffs
        .potentials()
        .iter()
        .map(|a| a.numerical_range_min_re())
        .fold(f64::INFINITY, f64::min);
    if !(min_re > 0.0) {
        push(
            Severity::Warning,
            format!("A(x) is not uniformly positive: numerical range reaches Re z = {min_re:e}"),
        );
    }

    if coeffs.has_first_order() {
        let inv_sqrt = coeffs
            .potentials()
            .iter()
            .map(|a| {
                let dense = faer::Mat::<C64>::from_fn(a.dim(), a.dim(), |i, j| a.get(i, j));
                match singular_values(&dense) {
                    Ok(sv) => {
                        let smin = sv.last().copied().unwrap_or(0.0);
                        if smin > 0.0 {
                            1.0 / smin.sqrt()
                        } else {
                            f64::INFINITY
                        }
                    }
                    Err(_) => f64::INFINITY,
                }
            })
            .fold(0.0, f64::max);
        let mut first: f64 = 0.0;
        for k in 0..grid.dims() {
            for n in 0..grid.n_nodes() {
                if let Some(b) = coeffs.first_order(k, n) {
                    first = first.max(b.norm_frobenius());
                }
            }
        }
        push(
            Severity::Info,
            format!("first-order magnitude heuristic |A_k| |A^(-1/2)| = {:e}", first * inv_sqrt),
        );
    }

    BcReport {
        eta,
        satisfied,
        messages,
    }
}
