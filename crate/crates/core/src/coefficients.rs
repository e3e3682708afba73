//! Sampled coefficients of the degenerate operator
//! `sum_k a_k D^[2]_k + A(x) + sum_k A_k(x) D^[1]_k`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::linalg::{CMatrix, C64};

/// Coefficients sampled at the nodes of a grid.
///
/// The diffusion coefficient `a_k` is stored per component so a system of
/// species with different diffusivities fits the same operator; for the
/// scalar-coefficient case every component carries the same value.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    grid: Arc<GridSpec>,
    m: usize,
    diffusion: Vec<Vec<C64>>,
    potential: Vec<CMatrix>,
    first_order: Option<Vec<Vec<CMatrix>>>,
}

impl CoefficientField {
    /// Raw constructor. `diffusion[k]` has `n_nodes * m` entries, `potential`
    /// has one `m x m` block per node.
    pub fn new(grid: Arc<GridSpec>, m: usize, diffusion: Vec<Vec<C64>>, potential: Vec<CMatrix>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Invalid("component count m must be positive".into()));
        }
        if diffusion.len() != grid.dims() {
            return Err(Error::Invalid(format!(
                "expected diffusion for {} axes, got {}",
                grid.dims(),
                diffusion.len()
            )));
        }
        if diffusion.iter().any(|a| a.len() != grid.n_nodes() * m) {
            return Err(Error::Invalid("diffusion samples do not match the grid".into()));
        }
        if potential.len() != grid.n_nodes() || potential.iter().any(|p| p.dim() != m) {
            return Err(Error::Invalid("potential samples do not match the grid".into()));
        }
        Ok(Self {
            grid,
            m,
            diffusion,
            potential,
            first_order: None,
        })
    }

    /// Spatially constant scalar diffusion per axis and a constant matrix `A`.
    pub fn constant(grid: Arc<GridSpec>, diffusion: &[C64], potential: CMatrix) -> Result<Self> {
        let m = potential.dim();
        let n = grid.n_nodes();
        let diff = diffusion.iter().map(|&a| vec![a; n * m]).collect();
        Self::new(grid, m, diff, vec![potential; n])
    }

    /// Samples `a_k(x)` (scalar per axis) and `A(x)`.
    pub fn from_fns(
        grid: Arc<GridSpec>,
        m: usize,
        diffusion: impl Fn(usize, &[f64]) -> C64,
        potential: impl Fn(&[f64]) -> CMatrix,
    ) -> Result<Self> {
        let n = grid.n_nodes();
        let diff = (0..grid.dims())
            .map(|k| {
                (0..n)
                    .flat_map(|node| std::iter::repeat_n(diffusion(k, &grid.node_x(node)), m))
                    .collect()
            })
            .collect();
        let pot = (0..n).map(|node| potential(&grid.node_x(node))).collect();
        Self::new(grid, m, diff, pot)
    }

    /// Adds first-order coefficients `A_k(x)`, one block per axis and node.
    pub fn with_first_order(mut self, first_order: Vec<Vec<CMatrix>>) -> Result<Self> {
        if first_order.len() != self.grid.dims()
            || first_order
                .iter()
                .any(|ak| ak.len() != self.grid.n_nodes() || ak.iter().any(|b| b.dim() != self.m))
        {
            return Err(Error::Invalid("first-order samples do not match the grid".into()));
        }
        self.first_order = Some(first_order);
        Ok(self)
    }

    /// Spatially constant first-order coefficients.
    pub fn with_constant_first_order(self, per_axis: Vec<CMatrix>) -> Result<Self> {
        let n = self.grid.n_nodes();
        let fo = per_axis.into_iter().map(|b| vec![b; n]).collect();
        self.with_first_order(fo)
    }

    pub fn with_potential(mut self, potential: Vec<CMatrix>) -> Result<Self> {
        if potential.len() != self.grid.n_nodes() || potential.iter().any(|p| p.dim() != self.m) {
            return Err(Error::Invalid("potential samples do not match the grid".into()));
        }
        self.potential = potential;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn diffusion(&self, axis: usize, node: usize, comp: usize) -> C64 {
        self.diffusion[axis][node * self.m + comp]
    }

    pub fn diffusion_samples(&self, axis: usize) -> &[C64] {
        &self.diffusion[axis]
    }

    #[inline]
    pub fn potential(&self, node: usize) -> &CMatrix {
        &self.potential[node]
    }

    pub fn potentials(&self) -> &[CMatrix] {
        &self.potential
    }

    pub fn first_order(&self, axis: usize, node: usize) -> Option<&CMatrix> {
        self.first_order.as_ref().map(|fo| &fo[axis][node])
    }

    pub fn has_first_order(&self) -> bool {
        self.first_order.is_some()
    }

    /// Pointwise `A(x) u(x)`.
    pub fn apply_potential(&self, u: &GridFunction) -> GridFunction {
        apply_matrix_field(&self.potential, u)
    }

    pub fn conj(&self) -> CoefficientField {
        CoefficientField {
            grid: self.grid.clone(),
            m: self.m,
            diffusion: self
                .diffusion
                .iter()
                .map(|a| a.iter().map(|v| v.conj()).collect())
                .collect(),
            potential: self.potential.iter().map(CMatrix::conj).collect(),
            first_order: self
                .first_order
                .as_ref()
                .map(|fo| fo.iter().map(|ak| ak.iter().map(CMatrix::conj).collect()).collect()),
        }
    }

    pub fn is_real(&self) -> bool {
        self.diffusion.iter().flatten().all(|a| a.im == 0.0)
            && self.potential.iter().all(CMatrix::is_real)
            && self
                .first_order
                .as_ref()
                .is_none_or(|fo| fo.iter().flatten().all(CMatrix::is_real))
    }
}

/// Pointwise product of a matrix field with a grid function.
pub fn apply_matrix_field(field: &[CMatrix], u: &GridFunction) -> GridFunction {
    let mut out = GridFunction::zeros(u.grid().clone(), u.components());
    for (node, a) in field.iter().enumerate() {
        let v = a.mul_vec(u.at(node));
        out.at_mut(node).copy_from_slice(&v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_shapes() {
        let g = Arc::new(GridSpec::line(0.0, 1.0, 4).unwrap());
        let f = CoefficientField::constant(g.clone(), &[C64::new(-1.0, 0.0)], CMatrix::identity(2)).unwrap();
        assert_eq!(f.components(), 2);
        assert_eq!(f.diffusion(0, 3, 1), C64::new(-1.0, 0.0));
        assert!(f.is_real());
        let u = GridFunction::constant(g, &[C64::new(1.0, 0.0), C64::new(2.0, 0.0)]);
        assert_eq!(f.apply_potential(&u), u);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = Arc::new(GridSpec::line(0.0, 1.0, 4).unwrap());
        assert!(CoefficientField::constant(g.clone(), &[], CMatrix::identity(1)).is_err());
        let f = CoefficientField::constant(g, &[C64::new(-1.0, 0.0)], CMatrix::identity(1)).unwrap();
        assert!(f.with_constant_first_order(vec![CMatrix::identity(2)]).is_err());
    }
}
