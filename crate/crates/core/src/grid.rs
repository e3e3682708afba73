//! Degenerate calculus on graded tensor-product grids.
//!
//! Along an axis with exponent `alpha` the substitution
//! `tau = x^(1 - alpha) / (1 - alpha)` turns the degenerate derivative
//! `x^alpha d/dx` into the plain derivative `d/dtau`. Grids are uniform in
//! `tau`, so in `x` they are graded towards the degenerate face `x = 0`, and
//! every degenerate derivative is an ordinary finite difference in `tau`.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::report::fmt_f64;

/// Largest supported number of spatial dimensions.
pub const MAX_DIMS: usize = 3;

/// One coordinate direction `(0, b)` with degeneracy exponent `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateAxis {
    alpha: f64,
    b: f64,
    n_cells: usize,
    tau_b: f64,
}

impl DegenerateAxis {
    pub fn new(alpha: f64, b: f64, n_cells: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Invalid(format!("alpha must satisfy 0 <= alpha < 1, got {alpha}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Invalid(format!("axis length must be positive, got {b}")));
        }
        if n_cells < 2 {
            return Err(Error::Invalid(format!("n_cells must be at least 2, got {n_cells}")));
        }
        let tau_b = b.powf(1.0 - alpha) / (1.0 - alpha);
        Ok(Self {
            alpha,
            b,
            n_cells,
            tau_b,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    /// Length of the axis in the `tau` coordinate.
    pub fn tau_b(&self) -> f64 {
        self.tau_b
    }

    /// Uniform `tau` spacing.
    pub fn h(&self) -> f64 {
        self.tau_b / self.n_cells as f64
    }

    pub fn tau_map(&self, x: f64) -> Result<f64> {
        if !(0.0..=self.b).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, {}]", self.b)));
        }
        Ok(x.powf(1.0 - self.alpha) / (1.0 - self.alpha))
    }

    pub fn inverse_map(&self, tau: f64) -> Result<f64> {
        if !(0.0..=self.tau_b).contains(&tau) {
            return Err(Error::Domain(format!("tau = {tau} outside [0, {}]", self.tau_b)));
        }
        let x = ((1.0 - self.alpha) * tau).powf(1.0 / (1.0 - self.alpha));
        Ok(x.min(self.b))
    }

    /// `dx/dtau = x^alpha`, written in terms of `tau`.
    pub fn jacobian_at_tau(&self, tau: f64) -> f64 {
        if self.alpha == 0.0 {
            1.0
        } else {
            ((1.0 - self.alpha) * tau).powf(self.alpha / (1.0 - self.alpha))
        }
    }
}

/// Tensor product of up to three [`DegenerateAxis`] with node coordinates in
/// both `tau` (uniform) and `x` (graded).
///
/// Nodes are numbered row-major: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    axes: Vec<DegenerateAxis>,
    tau: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    strides: Vec<usize>,
    n_nodes: usize,
}

impl GridSpec {
    pub fn new(axes: Vec<DegenerateAxis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIMS {
            return Err(Error::Invalid(format!(
                "grid needs between 1 and {MAX_DIMS} axes, got {}",
                axes.len()
            )));
        }
        let mut tau = Vec::with_capacity(axes.len());
        let mut x = Vec::with_capacity(axes.len());
        for axis in &axes {
            let h = axis.h();
            let t: Vec<f64> = (0..=axis.n_cells).map(|j| j as f64 * h).collect();
            let mut xs: Vec<f64> = t
                .iter()
                .map(|&tj| axis.inverse_map(tj.min(axis.tau_b)))
                .collect::<Result<_>>()?;
            xs[0] = 0.0;
            xs[axis.n_cells] = axis.b;
            tau.push(t);
            x.push(xs);
        }
        let mut strides = vec![1usize; axes.len()];
        for k in (0..axes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].n_nodes();
        }
        let n_nodes = axes.iter().map(DegenerateAxis::n_nodes).product();
        Ok(Self {
            axes,
            tau,
            x,
            strides,
            n_nodes,
        })
    }

    /// Shorthand for a one-dimensional grid.
    pub fn line(alpha: f64, b: f64, n_cells: usize) -> Result<Self> {
        Self::new(vec![DegenerateAxis::new(alpha, b, n_cells)?])
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[DegenerateAxis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> Result<&DegenerateAxis> {
        self.axes.get(k).ok_or(Error::AxisOutOfRange {
            index: k,
            dims: self.axes.len(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(DegenerateAxis::n_nodes).collect()
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    pub fn tau_nodes(&self, k: usize) -> &[f64] {
        &self.tau[k]
    }

    pub fn x_nodes(&self, k: usize) -> &[f64] {
        &self.x[k]
    }

    /// Index along axis `k` of the node with linear index `node`.
    #[inline]
    pub fn coord(&self, node: usize, k: usize) -> usize {
        (node / self.strides[k]) % self.axes[k].n_nodes()
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dims()).map(|k| self.coord(node, k)).collect()
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn node_x(&self, node: usize) -> Vec<f64> {
        (0..self.dims()).map(|k| self.x[k][self.coord(node, k)]).collect()
    }

    pub fn node_tau(&self, node: usize) -> Vec<f64> {
        (0..self.dims()).map(|k| self.tau[k][self.coord(node, k)]).collect()
    }

    /// Linear indices of the first node of every grid line along axis `k`.
    pub fn line_starts(&self, k: usize) -> Vec<usize> {
        (0..self.n_nodes).filter(|&n| self.coord(n, k) == 0).collect()
    }

    /// True when the node lies on a face of any axis.
    pub fn is_boundary_node(&self, node: usize) -> bool {
        (0..self.dims()).any(|k| {
            let i = self.coord(node, k);
            i == 0 || i == self.axes[k].n_cells
        })
    }

    /// Writes the `axis,j,tau,x` node table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "axis,j,tau,x")?;
        for k in 0..self.dims() {
            for j in 0..self.axes[k].n_nodes() {
                writeln!(out, "{k},{j},{},{}", fmt_f64(self.tau[k][j]), fmt_f64(self.x[k][j]))?;
            }
        }
        Ok(())
    }
}

/// Values in `C^m` at every node of a grid, stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Arc<GridSpec>,
    m: usize,
    values: Vec<C64>,
}

impl GridFunction {
    pub fn zeros(grid: Arc<GridSpec>, m: usize) -> Self {
        let n = grid.n_nodes() * m;
        Self {
            grid,
            m,
            values: vec![ZERO; n],
        }
    }

    pub fn from_values(grid: Arc<GridSpec>, m: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n_nodes() * m {
            return Err(Error::Invalid(format!(
                "expected {} values, got {}",
                grid.n_nodes() * m,
                values.len()
            )));
        }
        Ok(Self { grid, m, values })
    }

    /// Samples `f(x, tau)` at every node. `f` must return `m` values.
    pub fn from_fn(grid: Arc<GridSpec>, m: usize, mut f: impl FnMut(&[f64], &[f64]) -> Vec<C64>) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes() * m);
        for node in 0..grid.n_nodes() {
            let v = f(&grid.node_x(node), &grid.node_tau(node));
            assert_eq!(v.len(), m, "sampler returned {} components, expected {m}", v.len());
            values.extend(v);
        }
        Self { grid, m, values }
    }

    /// Scalar (`m = 1`) function sampled from a real-valued formula.
    pub fn from_real_fn(grid: Arc<GridSpec>, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> Self {
        Self::from_fn(grid, 1, |x, t| vec![C64::new(f(x, t), 0.0)])
    }

    pub fn constant(grid: Arc<GridSpec>, value: &[C64]) -> Self {
        let m = value.len();
        let values = value.iter().copied().cycle().take(grid.n_nodes() * m).collect();
        Self { grid, m, values }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn at(&self, node: usize) -> &[C64] {
        &self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn at_mut(&mut self, node: usize) -> &mut [C64] {
        &mut self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            m: self.m,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: C64) -> GridFunction {
        self.map(|v| v * c)
    }

    pub fn conj(&self) -> GridFunction {
        self.map(|v| v.conj())
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &GridFunction, f: impl Fn(C64, C64) -> C64) -> GridFunction {
        assert_eq!(self.values.len(), other.values.len(), "grid function shapes differ");
        GridFunction {
            grid: self.grid.clone(),
            m: self.m,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Single component as a scalar grid function.
    pub fn component(&self, c: usize) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            m: 1,
            values: self.values.iter().skip(c).step_by(self.m).copied().collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// First-derivative weights at position `j` of a line with `n + 1` nodes,
/// as `(offset, weight * h)` pairs.
pub(crate) fn first_derivative_stencil(j: usize, n: usize) -> &'static [(isize, f64)] {
    if j == 0 {
        &[(0, -1.5), (1, 2.0), (2, -0.5)]
    } else if j == n {
        &[(0, 1.5), (-1, -2.0), (-2, 0.5)]
    } else {
        &[(-1, -0.5), (1, 0.5)]
    }
}

/// Second-derivative weights (times `h^2`). One-sided endpoint stencils are
/// second order when four nodes are available, first order with three.
pub(crate) fn second_derivative_stencil(j: usize, n: usize) -> &'static [(isize, f64)] {
    if j == 0 {
        if n >= 3 {
            &[(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]
        } else {
            &[(0, 1.0), (1, -2.0), (2, 1.0)]
        }
    } else if j == n {
        if n >= 3 {
            &[(0, 2.0), (-1, -5.0), (-2, 4.0), (-3, -1.0)]
        } else {
            &[(0, 1.0), (-1, -2.0), (-2, 1.0)]
        }
    } else {
        &[(-1, 1.0), (0, -2.0), (1, 1.0)]
    }
}

/// Discrete `D^[order]` along `axis`, computed as the `order`-th derivative
/// in `tau`.
pub fn degen_derivative(u: &GridFunction, axis: usize, order: u8) -> Result<GridFunction> {
    let grid = u.grid();
    let ax = grid.axis(axis)?;
    if !(1..=2).contains(&order) {
        return Err(Error::Invalid(format!("derivative order must be 1 or 2, got {order}")));
    }
    if ax.n_nodes() < 3 {
        return Err(Error::GridTooCoarse {
            axis,
            nodes: ax.n_nodes(),
            required: 3,
        });
    }
    let n = ax.n_cells();
    let h = ax.h();
    let scale = if order == 1 { 1.0 / h } else { 1.0 / (h * h) };
    let stride = grid.stride(axis) as isize;
    let m = u.components();
    let mut out = GridFunction::zeros(grid.clone(), m);
    for start in grid.line_starts(axis) {
        for j in 0..=n {
            let node = start + j * stride as usize;
            let stencil = if order == 1 {
                first_derivative_stencil(j, n)
            } else {
                second_derivative_stencil(j, n)
            };
            for c in 0..m {
                let mut acc = ZERO;
                for &(off, w) in stencil {
                    let nb = (node as isize + off * stride) as usize;
                    acc += u.at(nb)[c] * w;
                }
                out.at_mut(node)[c] = acc * scale;
            }
        }
    }
    Ok(out)
}
