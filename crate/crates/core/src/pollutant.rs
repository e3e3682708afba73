//! Three-species reaction-advection-diffusion system
//!
//! ```text
//! du_i/dt = sum_k a_ki D^[2]_k u_i + sum_k b_ki D^[1]_k (u_i w_k) + sum_j d_j u_j + f_i(u) + g_i
//! ```
//!
//! written with physical (positive) diffusivities `a_ki` and mapped onto the
//! abstract form `du/dt + sum a D^[2] u + sum A_k D^[1] u + B u = F` by
//! negation. The advection term is expanded by the product rule,
//! `b D(u w) = b w D u + b (D w) u`, giving the first-order coefficient
//! `A_k = -diag(b_ki w_k)` and the zeroth-order part
//! `B = -diag(sum_k b_ki D w_k) - D` with `D[i][j] = d_j`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bc::NonlocalBc;
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{degen_derivative, GridFunction, GridSpec};
use crate::linalg::{pairwise_sum, CMatrix, C64, ZERO};
use crate::nonlinear::{solve_nonlinear, IterationReport, NonlinearControls, NonlinearModel, PointState};
use crate::parabolic::{ParabolicSolution, Scheme};

pub const SPECIES: usize = 3;

/// Illustrative kinetics with rate constants `k1`, `k2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "rates", rename_all = "kebab-case")]
pub enum Reaction {
    None,
    /// `f1 = -k1 u1 u2`, `f2 = -k1 u1 u2 + k2 u3`, `f3 = k1 u1 u2 - k2 u3`.
    Chapman([f64; 2]),
    /// `f1 = -k1 u1 u2 + k2 u3`, `f2 = 0`, `f3 = k1 u1 u2 - k2 u3`; sums to zero.
    Exchange([f64; 2]),
}

impl Reaction {
    pub fn eval(&self, u: &[C64]) -> [C64; 3] {
        match *self {
            Reaction::None => [ZERO; 3],
            Reaction::Chapman([k1, k2]) => {
                let fwd = u[0] * u[1] * k1;
                let back = u[2] * k2;
                [-fwd, -fwd + back, fwd - back]
            }
            Reaction::Exchange([k1, k2]) => {
                let net = u[0] * u[1] * k1 - u[2] * k2;
                [-net, ZERO, net]
            }
        }
    }

    pub fn is_conservative(&self) -> bool {
        !matches!(self, Reaction::Chapman(_))
    }
}

/// Species data sampled on the nodes of a grid. Per-species arrays are
/// node-major with `SPECIES` entries per node.
#[derive(Clone, Debug)]
pub struct PollutantModel {
    grid: Arc<GridSpec>,
    /// `[axis][node * 3 + i]`, physical sign (positive).
    diffusion: Vec<Vec<f64>>,
    /// `[axis][node * 3 + i]`.
    advection: Vec<Vec<f64>>,
    /// `[axis]` wind component as a scalar grid function.
    wind: Vec<GridFunction>,
    coupling: [f64; SPECIES],
    reaction: Reaction,
    sources: Vec<f64>,
}

impl PollutantModel {
    pub fn new(
        grid: Arc<GridSpec>,
        diffusion: Vec<Vec<f64>>,
        advection: Vec<Vec<f64>>,
        wind: Vec<GridFunction>,
        coupling: [f64; SPECIES],
        reaction: Reaction,
        sources: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.dims();
        let len = grid.n_nodes() * SPECIES;
        let mut problems = Vec::new();
        if diffusion.len() != n || diffusion.iter().any(|a| a.len() != len) {
            problems.push("diffusion must have one value per axis, node and species".to_string());
        }
        if advection.len() != n || advection.iter().any(|b| b.len() != len) {
            problems.push("advection scaling must have one value per axis, node and species".to_string());
        }
        if wind.len() != n || wind.iter().any(|w| w.components() != 1 || w.grid().shape() != grid.shape()) {
            problems.push("wind must have one scalar field per axis on the model grid".to_string());
        }
        if sources.len() != len {
            problems.push("sources must have one value per node and species".to_string());
        }
        if problems.is_empty() {
            if let Some(a) = diffusion.iter().flatten().find(|a| !(**a > 0.0 && a.is_finite())) {
                problems.push(format!("physical diffusivity must be positive, got {a}"));
            }
            let finite = advection.iter().flatten().chain(&sources).chain(&coupling).all(|v| v.is_finite());
            if !finite || wind.iter().any(|w| !w.is_finite()) {
                problems.push("model data must be finite".to_string());
            }
        }
        if !problems.is_empty() {
            return Err(Error::ConditionViolation(problems));
        }
        Ok(Self {
            grid,
            diffusion,
            advection,
            wind,
            coupling,
            reaction,
            sources,
        })
    }

    /// Spatially constant data: `diffusion[k][i]`, `advection[k][i]`,
    /// `wind[k]`, `sources[i]`.
    pub fn constant(
        grid: Arc<GridSpec>,
        diffusion: &[[f64; SPECIES]],
        advection: &[[f64; SPECIES]],
        wind: &[f64],
        coupling: [f64; SPECIES],
        reaction: Reaction,
        sources: [f64; SPECIES],
    ) -> Result<Self> {
        let nn = grid.n_nodes();
        let spread = |v: &[f64; SPECIES]| -> Vec<f64> { (0..nn).flat_map(|_| v.iter().copied()).collect() };
        let wind = wind
            .iter()
            .map(|&w| GridFunction::constant(grid.clone(), &[C64::new(w, 0.0)]))
            .collect();
        Self::new(
            grid.clone(),
            diffusion.iter().map(spread).collect(),
            advection.iter().map(spread).collect(),
            wind,
            coupling,
            reaction,
            spread(&sources),
        )
    }

    /// Replaces the wind by `w(x)` sampled at the nodes.
    pub fn with_wind_fn(mut self, w: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let samples: Vec<Vec<f64>> = (0..self.grid.n_nodes()).map(|n| w(&self.grid.node_x(n))).collect();
        if samples.iter().any(|s| s.len() != self.grid.dims()) {
            return Err(Error::Invalid("wind function must return one value per axis".into()));
        }
        self.wind = (0..self.grid.dims())
            .map(|k| {
                let vals = samples.iter().map(|s| C64::new(s[k], 0.0)).collect();
                GridFunction::from_values(self.grid.clone(), 1, vals)
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn reaction(&self) -> Reaction {
        self.reaction
    }

    pub fn sources(&self) -> &[f64] {
        &self.sources
    }

    /// Species relabelling: species `i` of the result is species `perm[i]` of `self`.
    pub fn permuted(&self, perm: [usize; SPECIES], reaction: Reaction) -> Self {
        let permute = |v: &Vec<f64>| -> Vec<f64> {
            v.chunks(SPECIES).flat_map(|c| perm.iter().map(move |&p| c[p])).collect()
        };
        Self {
            grid: self.grid.clone(),
            diffusion: self.diffusion.iter().map(permute).collect(),
            advection: self.advection.iter().map(permute).collect(),
            wind: self.wind.clone(),
            coupling: perm.map(|p| self.coupling[p]),
            reaction,
            sources: permute(&self.sources),
        }
    }
}

/// Abstract pieces: linear coefficients and the nonlinear model.
pub struct AbstractPollutant {
    /// Diffusion and first-order coefficients; the potential holds `B`.
    pub coeffs: Arc<CoefficientField>,
    pub model: PollutantDynamics,
}

/// `B` is state independent; the nonlinearity is carried by `F`.
pub struct PollutantDynamics {
    b: Vec<CMatrix>,
    reaction: Reaction,
    sources: Vec<f64>,
}

impl PollutantDynamics {
    pub fn zeroth_order(&self) -> &[CMatrix] {
        &self.b
    }
}

impl NonlinearModel for PollutantDynamics {
    fn components(&self) -> usize {
        SPECIES
    }

    fn b(&self, st: &PointState<'_>) -> Result<CMatrix> {
        Ok(self.b[st.node].clone())
    }

    fn f(&self, st: &PointState<'_>) -> Result<Vec<C64>> {
        let r = self.reaction.eval(st.u);
        let g = &self.sources[st.node * SPECIES..(st.node + 1) * SPECIES];
        Ok((0..SPECIES).map(|i| r[i] + g[i]).collect())
    }
}

/// Builds the abstract coefficients from the physical model.
pub fn to_abstract(model: &PollutantModel) -> Result<AbstractPollutant> {
    let grid = model.grid.clone();
    let nn = grid.n_nodes();
    let dims = grid.dims();
    let diffusion = model
        .diffusion
        .iter()
        .map(|a| a.iter().map(|v| C64::new(-v, 0.0)).collect())
        .collect();
    let first_order: Vec<Vec<CMatrix>> = (0..dims)
        .map(|k| {
            (0..nn)
                .map(|node| {
                    let w = model.wind[k].at(node)[0];
                    let diag: Vec<C64> = (0..SPECIES)
                        .map(|i| -w * model.advection[k][node * SPECIES + i])
                        .collect();
                    CMatrix::from_diag(&diag)
                })
                .collect()
        })
        .collect();
    let wind_div: Vec<GridFunction> = model
        .wind
        .iter()
        .enumerate()
        .map(|(k, w)| degen_derivative(w, k, 1))
        .collect::<Result<_>>()?;
    let b: Vec<CMatrix> = (0..nn)
        .map(|node| {
            CMatrix::from_fn(SPECIES, |i, j| {
                let mut v = C64::new(-model.coupling[j], 0.0);
                if i == j {
                    for (w, adv) in wind_div.iter().zip(&model.advection) {
                        v -= w.at(node)[0] * adv[node * SPECIES + i];
                    }
                }
                v
            })
        })
        .collect();
    let coeffs = CoefficientField::new(grid, SPECIES, diffusion, b.clone())?.with_first_order(first_order)?;
    Ok(AbstractPollutant {
        coeffs: Arc::new(coeffs),
        model: PollutantDynamics {
            b,
            reaction: model.reaction,
            sources: model.sources.clone(),
        },
    })
}

/// Total-mass bookkeeping with the discrete weights under which the
/// difference operator with derivative-type boundary rows telescopes:
/// per axis `(0, 3/2, 1, ..., 1, 3/2, 0) * h` in the `tau` measure.
pub fn budget_weights(grid: &GridSpec) -> Vec<f64> {
    let per_axis: Vec<Vec<f64>> = grid
        .axes()
        .iter()
        .map(|ax| {
            let n = ax.n_cells();
            (0..=n)
                .map(|j| {
                    let w = if j == 0 || j == n {
                        0.0
                    } else if j == 1 || j == n - 1 {
                        1.5
                    } else {
                        1.0
                    };
                    w * ax.h()
                })
                .collect()
        })
        .collect();
    (0..grid.n_nodes())
        .map(|node| (0..grid.dims()).map(|k| per_axis[k][grid.coord(node, k)]).product())
        .collect()
}

/// `sum_i sum_nodes w * Re u_i`.
pub fn total_mass(u: &GridFunction, weights: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..u.grid().n_nodes())
        .map(|n| weights[n] * u.at(n).iter().map(|v| v.re).sum::<f64>())
        .collect();
    pairwise_sum(&terms)
}

#[derive(Clone, Debug, Serialize)]
pub struct MassBudget {
    /// `(M_{s+1} - M_s) / dt - G` per step.
    pub step_errors: Vec<f64>,
    pub max_abs_error: f64,
    /// `sum_i int g_i` with the budget weights.
    pub source_total: f64,
    pub masses: Vec<f64>,
}

pub fn mass_budget(solution: &ParabolicSolution, sources: &[f64]) -> MassBudget {
    let grid = solution.snapshots[0].grid().clone();
    let w = budget_weights(&grid);
    let g_terms: Vec<f64> = (0..grid.n_nodes())
        .map(|n| w[n] * sources[n * SPECIES..(n + 1) * SPECIES].iter().sum::<f64>())
        .collect();
    let source_total = pairwise_sum(&g_terms);
    let masses: Vec<f64> = solution.snapshots.iter().map(|u| total_mass(u, &w)).collect();
    let step_errors: Vec<f64> = masses
        .windows(2)
        .map(|m| (m[1] - m[0]) / solution.dt - source_total)
        .collect();
    MassBudget {
        max_abs_error: step_errors.iter().fold(0.0, |a, e| a.max(e.abs())),
        step_errors,
        source_total,
        masses,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoSummary {
    pub species: usize,
    pub grid_shape: Vec<usize>,
    pub scheme: Scheme,
    pub converged: bool,
    pub mass_budget_max_error: f64,
    pub source_total: f64,
    pub final_mass: f64,
    /// `min Re u_i` over all nodes and levels.
    pub min_concentration: f64,
    pub warnings: Vec<String>,
}

pub struct DemoOutcome {
    pub solution: ParabolicSolution,
    pub report: IterationReport,
    pub budget: MassBudget,
    pub summary: DemoSummary,
}

/// Runs the fixed-point solver on the converted model and collects the
/// conservation diagnostics.
pub fn run_demo(model: &PollutantModel, bc: &NonlocalBc, controls: &NonlinearControls) -> Result<DemoOutcome> {
    if model.grid.n_nodes() > 33 * 33 * 33 {
        return Err(Error::Invalid("demo grids are limited to 32 cells per axis".into()));
    }
    let abs = to_abstract(model)?;
    let (solution, report) = solve_nonlinear(&abs.model, abs.coeffs.clone(), bc, controls)?;
    let budget = mass_budget(&solution, &model.sources);
    let min_concentration = solution
        .snapshots
        .iter()
        .flat_map(|u| u.values().iter().map(|v| v.re))
        .fold(f64::INFINITY, f64::min);
    let mut warnings = solution.warnings.clone();
    if min_concentration < -1e-8 {
        warnings.push(format!("negative concentration {min_concentration:e} (central advection, no limiter)"));
    }
    let summary = DemoSummary {
        species: SPECIES,
        grid_shape: model.grid.shape(),
        scheme: controls.scheme,
        converged: report.converged,
        mass_budget_max_error: budget.max_abs_error,
        source_total: budget.source_total,
        final_mass: *budget.masses.last().unwrap_or(&0.0),
        min_concentration,
        warnings,
    };
    Ok(DemoOutcome {
        solution,
        report,
        budget,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DegenerateAxis;

    fn grid(n: usize, dims: usize) -> Arc<GridSpec> {
        let alphas = [0.0, 0.3, 0.5];
        Arc::new(GridSpec::new((0..dims).map(|k| DegenerateAxis::new(alphas[k], 1.0, n).unwrap()).collect()).unwrap())
    }

    fn state<'a>(u: &'a [C64], du: &'a [Vec<C64>], x: &'a [f64]) -> PointState<'a> {
        PointState { t: 0.0, node: 0, x, u, du }
    }

    #[test]
    fn decoupled_model_is_block_diagonal() {
        let g = grid(4, 2);
        let m = PollutantModel::constant(g, &[[1.0, 2.0, 3.0]; 2], &[[1.0; 3]; 2], &[0.0, 0.0], [0.0; 3], Reaction::None, [0.0; 3]).unwrap();
        let a = to_abstract(&m).unwrap();
        for b in a.model.zeroth_order() {
            assert!(b.is_zero());
        }
        assert_eq!(a.coeffs.diffusion(0, 0, 2), C64::new(-3.0, 0.0));
    }

    #[test]
    fn constant_wind_gives_pure_first_order_term() {
        let g = grid(4, 2);
        let m = PollutantModel::constant(g, &[[1.0; 3]; 2], &[[1.0; 3]; 2], &[0.7, -0.2], [0.0; 3], Reaction::None, [0.0; 3]).unwrap();
        let a = to_abstract(&m).unwrap();
        let a0 = a.coeffs.first_order(0, 5).unwrap();
        let a1 = a.coeffs.first_order(1, 5).unwrap();
        for i in 0..3 {
            assert_eq!(a0.get(i, i), C64::new(-0.7, 0.0));
            assert_eq!(a1.get(i, i), C64::new(0.2, 0.0));
        }
        assert!(a.model.zeroth_order().iter().all(|b| b.norm_frobenius() < 1e-12));
    }

    #[test]
    fn linear_wind_adds_divergence_term() {
        let g = grid(8, 1);
        let m = PollutantModel::constant(g, &[[1.0; 3]], &[[2.0; 3]], &[0.0], [0.0; 3], Reaction::None, [0.0; 3])
            .unwrap()
            .with_wind_fn(|x| vec![x[0]])
            .unwrap();
        let a = to_abstract(&m).unwrap();
        // alpha = 0 so D w = 1, B = -b * 1 on the diagonal
        for b in a.model.zeroth_order() {
            assert!((b.get(1, 1) - C64::new(-2.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn chapman_matches_hand_expansion() {
        let (k1, k2) = (2.0, 0.5);
        let u = [C64::new(1.5, 0.0), C64::new(0.4, 0.0), C64::new(3.0, 0.0)];
        let r = Reaction::Chapman([k1, k2]).eval(&u);
        let p = 1.5 * 0.4 * k1;
        let expect = [-p, -p + k2 * 3.0, p - k2 * 3.0];
        for i in 0..3 {
            assert!((r[i].re - expect[i]).abs() < 1e-15);
        }
        assert!(!Reaction::Chapman([k1, k2]).is_conservative());
        let ex = Reaction::Exchange([k1, k2]).eval(&u);
        assert!((ex[0] + ex[1] + ex[2]).norm() < 1e-15);
    }

    #[test]
    fn source_enters_forcing() {
        let g = grid(4, 1);
        let m = PollutantModel::constant(g, &[[1.0; 3]], &[[1.0; 3]], &[0.0], [0.0; 3], Reaction::None, [1.0, 2.0, 3.0]).unwrap();
        let a = to_abstract(&m).unwrap();
        let u = [ZERO; 3];
        let f = a.model.f(&state(&u, &[], &[0.0])).unwrap();
        assert_eq!(f, vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0)]);
    }

    #[test]
    fn sign_and_shape_violations() {
        let g = grid(4, 1);
        let bad = PollutantModel::constant(g.clone(), &[[1.0, -1.0, 1.0]], &[[1.0; 3]], &[0.0], [0.0; 3], Reaction::None, [0.0; 3]);
        assert!(matches!(bad, Err(Error::ConditionViolation(_))));
        let bad = PollutantModel::constant(g, &[[1.0; 3]; 2], &[[1.0; 3]], &[0.0], [0.0; 3], Reaction::None, [0.0; 3]);
        assert!(matches!(bad, Err(Error::ConditionViolation(_))));
    }

    #[test]
    fn budget_weights_sum() {
        let g = grid(8, 1);
        let w = budget_weights(&g);
        let h = g.axes()[0].h();
        // 7 interior nodes: 1.5 + 5 + 1.5
        assert!((w.iter().sum::<f64>() - 8.0 * h).abs() < 1e-14);
        assert_eq!(w[0], 0.0);
        assert_eq!(w[8], 0.0);
    }

    #[test]
    fn zero_data_gives_zero_output() {
        let g = grid(4, 3);
        let m = PollutantModel::constant(g, &[[1.0; 3]; 3], &[[1.0; 3]; 3], &[0.0; 3], [0.0; 3], Reaction::Exchange([1.0, 1.0]), [0.0; 3]).unwrap();
        let ctl = NonlinearControls {
            n_steps: 4,
            t_final: 0.1,
            ..Default::default()
        };
        let out = run_demo(&m, &NonlocalBc::neumann(3), &ctl).unwrap();
        assert!(out.solution.snapshots.iter().all(|u| u.max_abs() == 0.0));
        assert!(out.summary.converged);
    }
}
