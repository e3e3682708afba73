//! Discrete degenerate elliptic problem with a complex parameter
//!
//! ```text
//! sum_k a_k(x) D^[2]_k u + A(x) u + lambda u + sum_k A_k(x) D^[1]_k u = f(x)
//! L_kj u = 0
//! ```
//!
//! Assembly is a Kronecker sum of 1D `tau`-difference operators: for each
//! axis the second-difference stencil scaled by `a_k` acts along that axis
//! only. Boundary nodes carry the rows of the boundary functionals instead of
//! the equation. A node on the faces of several axes belongs to the lowest
//! such axis, so each axis `k` owns two rows per transverse line whose
//! lower-axis coordinates are interior.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bc::{bc_rows, validate_conditions, NonlocalBc, ProblemDescription};
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{degen_derivative, GridFunction, GridSpec};
use crate::linalg::{vec_norm, CsrMatrix, SparseLu, C64, ZERO};
use crate::report::fmt_f64;
use crate::sector::SectorSpec;
use crate::spaces::{lp_norm, NormSpec};

/// What a matrix row represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Equation,
    /// Functional `which` (0 or 1) of `axis`.
    Boundary { axis: usize, which: usize },
}

/// Sparse realization of the operator together with its boundary rows.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: Arc<GridSpec>,
    m: usize,
    matrix: CsrMatrix,
    rows: Vec<RowKind>,
    lambda: C64,
}

/// Which functional (if any) owns the equation at `node`.
pub fn row_owner(grid: &GridSpec, node: usize) -> RowKind {
    for k in 0..grid.dims() {
        let i = grid.coord(node, k);
        if i == 0 {
            return RowKind::Boundary { axis: k, which: 0 };
        }
        if i == grid.axes()[k].n_cells() {
            return RowKind::Boundary { axis: k, which: 1 };
        }
    }
    RowKind::Equation
}

/// Builds the discrete operator. The structural conditions are checked
/// first; any error-severity finding aborts assembly.
pub fn assemble(coeffs: &CoefficientField, bc: &NonlocalBc, lambda: C64) -> Result<DiscreteOperator> {
    let grid = coeffs.grid().clone();
    if bc.dims() != grid.dims() {
        return Err(Error::Invalid(format!(
            "boundary conditions given for {} axes, grid has {}",
            bc.dims(),
            grid.dims()
        )));
    }
    let rows_1d: Vec<[Vec<C64>; 2]> = (0..grid.dims())
        .map(|k| bc_rows(bc, &grid, k))
        .collect::<Result<_>>()?;
    validate_conditions(&ProblemDescription { coeffs, bc, p: 2.0 }).into_result()?;

    let m = coeffs.components();
    let n = grid.n_nodes() * m;
    let mut entries: Vec<(usize, usize, C64)> = Vec::with_capacity(n * (2 * grid.dims() + 1 + m));
    let mut kinds = Vec::with_capacity(n);

    for node in 0..grid.n_nodes() {
        let owner = row_owner(&grid, node);
        match owner {
            RowKind::Boundary { axis, which } => {
                let stride = grid.stride(axis);
                let line_start = node - grid.coord(node, axis) * stride;
                for c in 0..m {
                    let row = node * m + c;
                    for (j, w) in rows_1d[axis][which].iter().enumerate() {
                        if *w != ZERO {
                            entries.push((row, (line_start + j * stride) * m + c, *w));
                        }
                    }
                    kinds.push(owner);
                }
            }
            RowKind::Equation => {
                let pot = coeffs.potential(node);
                for c in 0..m {
                    let row = node * m + c;
                    entries.push((row, row, lambda));
                    for d in 0..m {
                        let v = pot.get(c, d);
                        if v != ZERO {
                            entries.push((row, node * m + d, v));
                        }
                    }
                    for k in 0..grid.dims() {
                        let h = grid.axes()[k].h();
                        let s = grid.stride(k);
                        let a = coeffs.diffusion(k, node, c) / (h * h);
                        if a != ZERO {
                            entries.push((row, (node - s) * m + c, a));
                            entries.push((row, row, a * -2.0));
                            entries.push((row, (node + s) * m + c, a));
                        }
                        if let Some(b) = coeffs.first_order(k, node) {
                            for d in 0..m {
                                let v = b.get(c, d) / (2.0 * h);
                                if v != ZERO {
                                    entries.push((row, (node + s) * m + d, v));
                                    entries.push((row, (node - s) * m + d, -v));
                                }
                            }
                        }
                    }
                    kinds.push(owner);
                }
            }
        }
    }
    Ok(DiscreteOperator {
        grid,
        m,
        matrix: CsrMatrix::from_triplets(n, n, entries),
        rows: kinds,
        lambda,
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    pub fn row_kinds(&self) -> &[RowKind] {
        &self.rows
    }

    pub fn is_boundary_row(&self, row: usize) -> bool {
        self.rows[row] != RowKind::Equation
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Same operator with parameter `lambda` on the equation rows.
    pub fn shifted(&self, lambda: C64) -> DiscreteOperator {
        let delta = lambda - self.lambda;
        let matrix = self.matrix.map(|i, j, v| {
            if i == j && !self.is_boundary_row(i) {
                v + delta
            } else {
                v
            }
        });
        DiscreteOperator {
            grid: self.grid.clone(),
            m: self.m,
            matrix,
            rows: self.rows.clone(),
            lambda,
        }
    }

    /// Matrix with equation rows replaced by `scale * row + shift * e_i` and
    /// boundary rows kept, as used by one-step time integrators.
    pub fn affine_rows(&self, scale: f64, shift: C64) -> CsrMatrix {
        self.matrix.map(|i, j, v| {
            if self.is_boundary_row(i) {
                v
            } else if i == j {
                v * scale + shift
            } else {
                v * scale
            }
        })
    }

    /// `O u` on equation rows, zero on boundary rows.
    pub fn apply_equations(&self, u: &GridFunction) -> GridFunction {
        let mut y = self.matrix.mul_vec(u.values());
        for (i, v) in y.iter_mut().enumerate() {
            if self.is_boundary_row(i) {
                *v = ZERO;
            }
        }
        GridFunction::from_values(self.grid.clone(), self.m, y).expect("shape preserved")
    }

    /// Full product including boundary rows.
    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        GridFunction::from_values(self.grid.clone(), self.m, self.matrix.mul_vec(u.values()))
            .expect("shape preserved")
    }

    /// `f` with the boundary rows set to zero (homogeneous constraints).
    pub fn project_rhs(&self, f: &GridFunction) -> GridFunction {
        let mut out = f.clone();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            if self.is_boundary_row(i) {
                *v = ZERO;
            }
        }
        out
    }

    /// Number of boundary rows owned by `axis`.
    pub fn boundary_row_count(&self, axis: usize) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r, RowKind::Boundary { axis: a, .. } if *a == axis))
            .count()
    }

    pub fn factor(&self) -> Result<FactoredOperator<'_>> {
        Ok(FactoredOperator {
            op: self,
            lu: SparseLu::factor(&self.matrix)?,
        })
    }
}

/// An operator with its LU factors, reusable across right-hand sides.
pub struct FactoredOperator<'a> {
    op: &'a DiscreteOperator,
    lu: SparseLu,
}

/// Relative residual above which a solve is refined once.
const REFINE_THRESHOLD: f64 = 1e-10;
/// Relative residual above which the system is declared numerically singular.
const SINGULAR_THRESHOLD: f64 = 1e-6;

impl FactoredOperator<'_> {
    pub fn operator(&self) -> &DiscreteOperator {
        self.op
    }

    pub fn lu(&self) -> &SparseLu {
        &self.lu
    }

    /// Solves with the boundary rows of `f` zeroed. Returns the solution and
    /// the relative residual `||O u - f_hat|| / ||f_hat||`.
    pub fn solve(&self, f: &GridFunction) -> Result<(GridFunction, f64)> {
        let rhs = self.op.project_rhs(f);
        let b = rhs.values();
        let bnorm = vec_norm(b);
        if bnorm == 0.0 {
            return Ok((GridFunction::zeros(self.op.grid.clone(), self.op.m), 0.0));
        }
        let mut x = self.lu.solve(b)?;
        let residual = |x: &[C64]| -> Vec<C64> {
            self.op.matrix.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
        };
        let mut r = residual(&x);
        let mut rel = vec_norm(&r) / bnorm;
        if rel > REFINE_THRESHOLD {
            let dx = self.lu.solve(&r)?;
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
            r = residual(&x);
            rel = vec_norm(&r) / bnorm;
        }
        if !(rel <= SINGULAR_THRESHOLD) {
            return Err(Error::SingularSystem(format!("relative residual {rel:e} after refinement")));
        }
        Ok((GridFunction::from_values(self.op.grid.clone(), self.op.m, x)?, rel))
    }
}

/// Factor-and-solve convenience wrapper.
pub fn solve(op: &DiscreteOperator, f: &GridFunction) -> Result<GridFunction> {
    Ok(op.factor()?.solve(f)?.0)
}

/// Componentwise standard complex Gaussian values at every node.
pub fn random_forcing(grid: Arc<GridSpec>, m: usize, rng: &mut ChaCha8Rng) -> GridFunction {
    let n = grid.n_nodes() * m;
    let values = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    GridFunction::from_values(grid, m, values).expect("shape by construction")
}

/// `[sum_k sum_{i=0..2} |lambda|^(1-i/2) ||D^[i]_k u|| + ||A u||] / ||f||`.
pub fn coercivity_ratio(
    u: &GridFunction,
    f_norm: f64,
    lambda: C64,
    coeffs: &CoefficientField,
    spec: &NormSpec,
) -> Result<f64> {
    if f_norm == 0.0 {
        return Err(Error::DivisionByZero("forcing norm is zero"));
    }
    let mu = lambda.norm();
    let u_norm = lp_norm(u, spec);
    let mut total = lp_norm(&coeffs.apply_potential(u), spec);
    for k in 0..u.grid().dims() {
        let d1 = degen_derivative(u, k, 1)?;
        let d2 = degen_derivative(u, k, 2)?;
        total += mu * u_norm + mu.sqrt() * lp_norm(&d1, spec) + lp_norm(&d2, spec);
    }
    Ok(total / f_norm)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum SampleStatus {
    Ok,
    Singular(String),
}

impl SampleStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SampleStatus::Ok => "ok",
            SampleStatus::Singular(_) => "singular",
        }
    }
}

/// Worst observed coercivity ratio at one `lambda`.
#[derive(Clone, Debug, Serialize)]
pub struct CoercivityRecord {
    pub lambda: C64,
    pub ratio: f64,
    pub residual: f64,
    pub status: SampleStatus,
}

/// For every sector sample, solves with `trials` random unit-norm forcings
/// and keeps the largest coercivity ratio. The maximum over random forcings
/// is a lower bound for the constant of the coercive estimate.
pub fn coercivity_scan(
    coeffs: &CoefficientField,
    bc: &NonlocalBc,
    sector: &SectorSpec,
    trials: usize,
    spec: &NormSpec,
    seed: u64,
) -> Result<Vec<CoercivityRecord>> {
    if trials == 0 {
        return Ok(Vec::new());
    }
    let base = assemble(coeffs, bc, ZERO)?;
    let samples = sector.samples();
    let records = samples
        .par_iter()
        .enumerate()
        .map(|(idx, &lambda)| {
            let op = base.shifted(lambda);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let outcome = (|| -> Result<(f64, f64)> {
                let fac = op.factor()?;
                let mut worst: f64 = 0.0;
                let mut worst_res: f64 = 0.0;
                for _ in 0..trials {
                    let raw = op.project_rhs(&random_forcing(base.grid.clone(), base.m, &mut rng));
                    let f = raw.scale(C64::new(1.0 / lp_norm(&raw, spec), 0.0));
                    let (u, res) = fac.solve(&f)?;
                    worst = worst.max(coercivity_ratio(&u, lp_norm(&f, spec), lambda, coeffs, spec)?);
                    worst_res = worst_res.max(res);
                }
                Ok((worst, worst_res))
            })();
            match outcome {
                Ok((ratio, residual)) => CoercivityRecord {
                    lambda,
                    ratio,
                    residual,
                    status: SampleStatus::Ok,
                },
                Err(Error::SingularSystem(msg)) => CoercivityRecord {
                    lambda,
                    ratio: f64::NAN,
                    residual: f64::NAN,
                    status: SampleStatus::Singular(msg),
                },
                Err(e) => CoercivityRecord {
                    lambda,
                    ratio: f64::NAN,
                    residual: f64::NAN,
                    status: SampleStatus::Singular(e.to_string()),
                },
            }
        })
        .collect();
    Ok(records)
}

/// `re_lambda,im_lambda,abs_lambda,arg_lambda,ratio,residual,status`.
pub fn write_scan_csv<W: std::io::Write>(records: &[CoercivityRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "re_lambda,im_lambda,abs_lambda,arg_lambda,ratio,residual,status")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.lambda.re),
            fmt_f64(r.lambda.im),
            fmt_f64(r.lambda.norm()),
            fmt_f64(r.lambda.arg()),
            fmt_f64(r.ratio),
            fmt_f64(r.residual),
            r.status.label()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::linalg::{condition_number, CMatrix, ONE};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn model_1d(alpha: f64, n: usize, a: f64, pot: f64) -> CoefficientField {
        let g = Arc::new(GridSpec::line(alpha, 1.0, n).unwrap());
        CoefficientField::constant(g, &[c(a)], CMatrix::scalar(1, c(pot))).unwrap()
    }

    #[test]
    fn hand_assembled_dirichlet_matrix() {
        // a = -1, A = 0, lambda = 0, h = 1/4: interior rows (-1, 2, -1) / h^2
        let coeffs = model_1d(0.0, 4, -1.0, 0.0);
        let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO).unwrap();
        let h2 = 1.0 / 16.0;
        #[rustfmt::skip]
        let expect = [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [-1.0 / h2, 2.0 / h2, -1.0 / h2, 0.0, 0.0],
            [0.0, -1.0 / h2, 2.0 / h2, -1.0 / h2, 0.0],
            [0.0, 0.0, -1.0 / h2, 2.0 / h2, -1.0 / h2],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ];
        for (i, row) in expect.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((op.matrix().get(i, j) - c(*v)).norm() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn block_diagonal_potential_shows_on_diagonal() {
        let g = Arc::new(GridSpec::line(0.0, 1.0, 4).unwrap());
        let pot = CMatrix::from_diag(&[c(1.0), c(2.0)]);
        let coeffs = CoefficientField::constant(g, &[c(-1.0)], pot).unwrap();
        let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO).unwrap();
        let m = op.matrix();
        // interior node 2: diagonal = 2/h^2 + A_cc
        assert!((m.get(4, 4) - c(32.0 + 1.0)).norm() < 1e-12);
        assert!((m.get(5, 5) - c(32.0 + 2.0)).norm() < 1e-12);
        assert_eq!(m.get(4, 5), ZERO);
    }

    #[test]
    fn kronecker_sum_sparsity_in_2d() {
        let g = Arc::new(
            GridSpec::new(vec![
                crate::grid::DegenerateAxis::new(0.0, 1.0, 2).unwrap(),
                crate::grid::DegenerateAxis::new(0.0, 1.0, 2).unwrap(),
            ])
            .unwrap(),
        );
        for m in [1, 2] {
            let pot = CMatrix::identity(m);
            let coeffs = CoefficientField::constant(g.clone(), &[c(-1.0), c(-2.0)], pot).unwrap();
            let op = assemble(&coeffs, &NonlocalBc::dirichlet(2), ZERO).unwrap();
            assert_eq!(op.dim(), 9 * m);
            for row in 0..op.dim() {
                if !op.is_boundary_row(row) {
                    assert!(op.matrix().row(row).0.len() <= 5);
                }
            }
            // axis 0 owns both full faces, axis 1 only the transverse-interior nodes
            assert_eq!(op.boundary_row_count(0), 2 * 3 * m);
            assert_eq!(op.boundary_row_count(1), 2 * m);
        }
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let coeffs = model_1d(0.3, 16, -1.0, 1.0);
        let op = assemble(&coeffs, &NonlocalBc::neumann(1), c(2.0)).unwrap();
        let u = solve(&op, &GridFunction::zeros(op.grid().clone(), 1)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn sine_manufactured_solution_converges() {
        let err = |n: usize| {
            let coeffs = model_1d(0.0, n, -1.0, 0.0);
            let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO).unwrap();
            let g = op.grid().clone();
            let f = GridFunction::from_real_fn(g.clone(), |x, _| PI * PI * (PI * x[0]).sin());
            let u = solve(&op, &f).unwrap();
            let exact = GridFunction::from_real_fn(g, |x, _| (PI * x[0]).sin());
            lp_norm(&u.sub(&exact), &NormSpec::l2())
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < 1e-3);
        assert!(((e1 / e2).log2() - 2.0).abs() < 0.2);
    }

    #[test]
    fn sign_violation_blocks_assembly() {
        let coeffs = model_1d(0.0, 8, 1.0, 1.0);
        let res = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO);
        assert!(matches!(res, Err(Error::ConditionViolation(_))));
    }

    #[test]
    fn eigenvalue_lambda_is_singular() {
        // Discrete Dirichlet eigenvalues of -u'' are (4/h^2) sin^2(k pi h / 2).
        let n = 8;
        let coeffs = model_1d(0.0, n, -1.0, 0.0);
        let h = 1.0 / n as f64;
        let mu1 = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), c(-mu1)).unwrap();
        let f = GridFunction::from_real_fn(op.grid().clone(), |x, _| x[0] * (1.0 - x[0]));
        assert!(matches!(solve(&op, &f), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn scan_with_zero_trials_is_empty() {
        let coeffs = model_1d(0.0, 8, -1.0, 1.0);
        let sector = SectorSpec::default_grid(2.0 * PI / 3.0).unwrap();
        let r = coercivity_scan(&coeffs, &NonlocalBc::dirichlet(1), &sector, 0, &NormSpec::l2(), 1).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn zero_lambda_keeps_only_second_order_weight() {
        let coeffs = model_1d(0.0, 32, -1.0, 1.0);
        let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO).unwrap();
        let f = GridFunction::from_real_fn(op.grid().clone(), |x, _| (PI * x[0]).sin());
        let u = solve(&op, &f).unwrap();
        let spec = NormSpec::l2();
        let fnorm = lp_norm(&f, &spec);
        let ratio = coercivity_ratio(&u, fnorm, ZERO, &coeffs, &spec).unwrap();
        let expect = (lp_norm(&coeffs.apply_potential(&u), &spec)
            + lp_norm(&degen_derivative(&u, 0, 2).unwrap(), &spec))
            / fnorm;
        assert!((ratio - expect).abs() < 1e-14);
    }

    #[test]
    fn bc_scaling_leaves_solution_unchanged() {
        let coeffs = model_1d(0.2, 16, -1.0, 1.0);
        let bc = NonlocalBc::periodic(1);
        let scaled = bc.with_scaled_condition(0, 1, C64::new(0.0, 3.0)).unwrap();
        let f = GridFunction::from_real_fn(coeffs.grid().clone(), |x, _| 1.0 + x[0]);
        let u1 = solve(&assemble(&coeffs, &bc, c(1.0)).unwrap(), &f).unwrap();
        let u2 = solve(&assemble(&coeffs, &scaled, c(1.0)).unwrap(), &f).unwrap();
        assert!(u1.sub(&u2).max_abs() < 1e-10 * u1.max_abs());
    }

    #[test]
    fn dirichlet_rows_read_endpoint_values() {
        let coeffs = model_1d(0.0, 8, -1.0, 1.0);
        let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO).unwrap();
        let u = GridFunction::from_real_fn(op.grid().clone(), |x, _| 2.0 + x[0]);
        let y = op.apply(&u);
        assert!((y.at(0)[0] - c(2.0)).norm() < 1e-14);
        assert!((y.at(8)[0] - c(3.0)).norm() < 1e-14);
    }

    #[test]
    fn condition_number_diverges_as_eta_vanishes() {
        use crate::bc::BoundaryFunctional;
        // L1 = u(0) + (1 - eta) u(b), L2 = u(0) + u(b): eta_k = eta.
        let family = |eta: f64| {
            let l1 = BoundaryFunctional::top_only(0, ONE, c(1.0 - eta)).unwrap();
            let l2 = BoundaryFunctional::top_only(0, ONE, ONE).unwrap();
            NonlocalBc::new(vec![[l1, l2]]).unwrap()
        };
        let coeffs = model_1d(0.0, 16, -1.0, 1.0);
        let k1 = condition_number(assemble(&coeffs, &family(1.0), c(1.0)).unwrap().matrix()).unwrap();
        let k2 = condition_number(assemble(&coeffs, &family(1e-6), c(1.0)).unwrap().matrix()).unwrap();
        assert!(k2 >= 1e3 * k1, "{k1:e} {k2:e}");
    }

    #[test]
    fn scan_csv_layout() {
        let rec = CoercivityRecord {
            lambda: C64::new(1.0, 1.0),
            ratio: 2.0,
            residual: 1e-15,
            status: SampleStatus::Ok,
        };
        let mut buf = Vec::new();
        write_scan_csv(&[rec], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("re_lambda,im_lambda,abs_lambda,arg_lambda,ratio,residual,status\n"));
        assert!(s.trim_end().ends_with(",ok"));
    }
}
