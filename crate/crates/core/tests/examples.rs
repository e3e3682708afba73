use std::f64::consts::PI;
use std::sync::Arc;

use degenlab::elliptic::{assemble, solve};
use degenlab::grid::{DegenerateAxis, GridFunction, GridSpec};
use degenlab::linalg::{CMatrix, C64, ZERO};
use degenlab::nonlinear::NonlinearControls;
use degenlab::parabolic::{maximal_regularity_ratio, step_scheme, Forcing, ParabolicProblem, Scheme};
use degenlab::pollutant::{run_demo, PollutantModel, Reaction, SPECIES};
use degenlab::spaces::{lp_norm, NormSpec};
use degenlab::{CoefficientField, NonlocalBc};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn axis(alpha: f64, n: usize) -> DegenerateAxis {
    DegenerateAxis::new(alpha, 1.0, n).unwrap()
}

#[test]
fn kronecker_solve_matches_nested_line_solve() {
    let n = 16;
    let plane = Arc::new(GridSpec::new(vec![axis(0.5, n), axis(0.3, n)]).unwrap());
    let across = Arc::new(GridSpec::new(vec![axis(0.3, n)]).unwrap());
    let along = Arc::new(GridSpec::new(vec![axis(0.5, n)]).unwrap());
    let (a0, a1) = (c(-1.0), c(-2.0));
    let lambda = C64::new(3.0, 1.0);

    let full = CoefficientField::constant(plane.clone(), &[a0, a1], CMatrix::zeros(1)).unwrap();
    let f = GridFunction::from_real_fn(plane.clone(), |x, t| (x[0] * 3.0).sin() * (1.0 + t[1] * t[1]));
    let u = solve(&assemble(&full, &NonlocalBc::dirichlet(2), lambda).unwrap(), &f).unwrap();

    // Axis 1 becomes the value space: its discrete operator is the potential.
    let inner = CoefficientField::constant(across.clone(), &[a1], CMatrix::zeros(1)).unwrap();
    let inner_op = assemble(&inner, &NonlocalBc::dirichlet(1), ZERO).unwrap();
    let m = across.n_nodes();
    let potential = CMatrix::from_fn(m, |i, j| inner_op.matrix().get(i, j));
    let nested = CoefficientField::new(along.clone(), m, vec![vec![a0; along.n_nodes() * m]], vec![potential; along.n_nodes()])
        .unwrap();
    let g = GridFunction::from_values(along.clone(), m, f.project_boundary_free(&plane)).unwrap();
    let v = solve(&assemble(&nested, &NonlocalBc::dirichlet(1), lambda).unwrap(), &g).unwrap();

    let diff = u.values().iter().zip(v.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff <= 1e-8 * (1.0 + u.max_abs()), "{diff:e}");
}

/// Zeroes forcing values on every node that lies on a face, so both
/// formulations see the same data.
trait BoundaryFree {
    fn project_boundary_free(&self, grid: &GridSpec) -> Vec<C64>;
}

impl BoundaryFree for GridFunction {
    fn project_boundary_free(&self, grid: &GridSpec) -> Vec<C64> {
        (0..grid.n_nodes())
            .map(|n| if grid.is_boundary_node(n) { ZERO } else { self.at(n)[0] })
            .collect()
    }
}

#[test]
fn single_mode_ratio_matches_scalar_reduction() {
    let n = 64;
    let grid = Arc::new(GridSpec::new(vec![axis(0.0, n)]).unwrap());
    let h = grid.axes()[0].h();
    let coeffs = Arc::new(CoefficientField::constant(grid.clone(), &[c(-1.0)], CMatrix::zeros(1)).unwrap());
    let (d, t_final) = (10.0, 1.0);
    let shape = GridFunction::from_real_fn(grid.clone(), |x, _| (PI * x[0]).sin());
    let problem = ParabolicProblem::new(coeffs, NonlocalBc::dirichlet(1), d, t_final, 400, Forcing::function(move |_| shape.clone()))
        .unwrap();
    let sol = step_scheme(&problem, Scheme::ImplicitEuler).unwrap();
    let ratio = maximal_regularity_ratio(&sol, &NormSpec::l2()).unwrap();

    let mu = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
    let k = mu + d;
    let e1 = (-k * t_final).exp();
    let e2 = (-2.0 * k * t_final).exp();
    let dy = ((1.0 - e2) / (2.0 * k)).sqrt();
    let y = ((t_final - 2.0 * (1.0 - e1) / k + (1.0 - e2) / (2.0 * k)) / (k * k)).sqrt();
    let expected = (dy + mu * y) / t_final.sqrt();
    assert!((ratio / expected - 1.0).abs() <= 0.1, "ratio {ratio} expected {expected}");
}

#[test]
fn nonnegative_forcing_keeps_implicit_euler_nonnegative() {
    let grid = Arc::new(GridSpec::new(vec![axis(0.5, 24), axis(0.2, 12)]).unwrap());
    let coeffs = Arc::new(CoefficientField::constant(grid.clone(), &[c(-1.0), c(-0.3)], CMatrix::scalar(1, c(0.5))).unwrap());
    let bump = GridFunction::from_real_fn(grid.clone(), |x, _| (-30.0 * ((x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2))).exp());
    let problem = ParabolicProblem::new(
        coeffs,
        NonlocalBc::dirichlet(2),
        0.0,
        0.5,
        25,
        Forcing::function(move |t| bump.scale(c((6.0 * t).cos().max(0.0)))),
    )
    .unwrap();
    let sol = step_scheme(&problem, Scheme::ImplicitEuler).unwrap();
    let min = sol.snapshots.iter().flat_map(|u| u.values().iter().map(|v| v.re)).fold(f64::INFINITY, f64::min);
    assert!(min >= -1e-12, "{min:e}");
}

fn cube(n: usize) -> Arc<GridSpec> {
    Arc::new(GridSpec::new(vec![axis(0.0, n), axis(0.3, n), axis(0.5, n)]).unwrap())
}

fn demo_controls(steps: usize) -> NonlinearControls {
    NonlinearControls {
        t_final: 0.4,
        n_steps: steps,
        tol: 1e-11,
        ..NonlinearControls::default()
    }
}

#[test]
fn species_permutation_permutes_outputs() {
    let grid = cube(6);
    let model = PollutantModel::constant(
        grid,
        &[[1.0, 0.5, 2.0], [0.7, 0.9, 1.1], [0.4, 1.3, 0.6]],
        &[[1.0, 0.8, 1.2]; 3],
        &[0.3, -0.2, 0.1],
        [0.1, 0.2, 0.0],
        Reaction::None,
        [1.0, 0.3, 0.6],
    )
    .unwrap();
    let perm = [2, 0, 1];
    let swapped = model.permuted(perm, Reaction::None);
    let bc = NonlocalBc::neumann(3);
    let a = run_demo(&model, &bc, &demo_controls(6)).unwrap();
    let b = run_demo(&swapped, &bc, &demo_controls(6)).unwrap();
    // The coupled solve sees a reordered unknown vector, so agreement is to
    // rounding rather than bitwise.
    let scale = a.solution.final_state().max_abs();
    for (ua, ub) in a.solution.snapshots.iter().zip(&b.solution.snapshots) {
        for node in 0..ua.grid().n_nodes() {
            for (i, &p) in perm.iter().enumerate() {
                assert!((ua.at(node)[p] - ub.at(node)[i]).norm() <= 1e-13 * scale);
            }
        }
    }
}

#[test]
fn decoupled_demo_has_first_order_time_accuracy() {
    let grid = cube(6);
    let tb: Vec<f64> = grid.axes().iter().map(|a| a.tau_b()).collect();
    let nn = grid.n_nodes();
    let mut sources = vec![0.0; nn * SPECIES];
    for node in 0..nn {
        let t = grid.node_tau(node);
        let s: f64 = (0..3).map(|k| (PI * t[k] / tb[k]).sin()).product();
        for (i, amp) in [1.0, 2.0, 0.5].iter().enumerate() {
            sources[node * SPECIES + i] = amp * s;
        }
    }
    let diffusion = vec![vec![1.0; nn * SPECIES]; 3];
    let advection = vec![vec![1.0; nn * SPECIES]; 3];
    let wind = (0..3).map(|_| GridFunction::zeros(grid.clone(), 1)).collect();
    let model = PollutantModel::new(grid, diffusion, advection, wind, [0.0; 3], Reaction::None, sources).unwrap();
    let bc = NonlocalBc::dirichlet(3);
    let finals: Vec<GridFunction> = [20usize, 40, 80]
        .iter()
        .map(|&s| run_demo(&model, &bc, &demo_controls(s)).unwrap().solution.final_state().clone())
        .collect();
    let l2 = NormSpec::l2();
    let order = (lp_norm(&finals[0].sub(&finals[1]), &l2) / lp_norm(&finals[1].sub(&finals[2]), &l2)).log2();
    assert!((order - 1.0).abs() <= 0.3, "{order}");
}

#[test]
fn nonnegative_sources_without_advection_stay_nonnegative() {
    let model = PollutantModel::constant(
        cube(8),
        &[[1.0, 0.5, 2.0]; 3],
        &[[1.0; 3]; 3],
        &[0.0; 3],
        [0.0; 3],
        Reaction::Exchange([3.0, 0.2]),
        [0.5, 1.0, 0.0],
    )
    .unwrap();
    let out = run_demo(&model, &NonlocalBc::neumann(3), &demo_controls(8)).unwrap();
    assert!(out.summary.min_concentration >= -1e-8, "{}", out.summary.min_concentration);
    assert!(out.summary.warnings.is_empty(), "{:?}", out.summary.warnings);
}
