//! Fixed-point solver for
//!
//! ```text
//! du/dt + sum_k a_k D^[2]_k u + sum_k A_k D^[1]_k u + B(t, x, V) u = F(t, x, V),  u(0) = 0
//! ```
//!
//! with `V = (u, D^[1]_1 u, ..., D^[1]_n u)`. Each outer step freezes the
//! zeroth-order coefficient at `A0(x) = B(0, x, 0)` and solves the linear
//! problem
//!
//! ```text
//! du/dt + (O + d) u = F(t, x, V) + [A0(x) - B(t, x, V)] v + d v
//! ```
//!
//! for the previous iterate `v`. The shift `d` improves the conditioning of
//! each linear solve and cancels at the fixed point.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bc::NonlocalBc;
use crate::coefficients::CoefficientField;
use crate::elliptic::assemble;
use crate::error::{Error, Result};
use crate::grid::{degen_derivative, GridFunction};
use crate::linalg::{vec_norm, CMatrix, C64, ZERO};
use crate::parabolic::{integrate, Forcing, ParabolicProblem, ParabolicSolution, Scheme, Stepper};
use crate::spaces::{mixed_norm, NormSpec};

/// Arguments of the model callbacks at one node and time level.
#[derive(Clone, Copy, Debug)]
pub struct PointState<'a> {
    pub t: f64,
    pub node: usize,
    pub x: &'a [f64],
    pub u: &'a [C64],
    /// `du[k]` is `D^[1]_k u` at the node.
    pub du: &'a [Vec<C64>],
}

/// Nonlinear coefficients. Implementations must be deterministic and safe
/// to call concurrently.
pub trait NonlinearModel: Sync {
    fn components(&self) -> usize;

    /// Zeroth-order coefficient `B(t, x, V)`, an `m x m` matrix.
    fn b(&self, state: &PointState<'_>) -> Result<CMatrix>;

    /// Right-hand side `F(t, x, V)`.
    fn f(&self, state: &PointState<'_>) -> Result<Vec<C64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearControls {
    /// Radius of the admissible ball around the base solution.
    pub r: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub max_outer: usize,
    pub tol: f64,
    pub d: f64,
    pub scheme: Scheme,
    /// Abort with `BallExit` when an iterate leaves the ball; otherwise only
    /// count violations.
    pub enforce_ball: bool,
    pub norm: NormSpec,
}

impl Default for NonlinearControls {
    fn default() -> Self {
        Self {
            r: 10.0,
            t_final: 1.0,
            n_steps: 20,
            max_outer: 50,
            tol: 1e-8,
            d: 0.0,
            scheme: Scheme::ImplicitEuler,
            enforce_ball: true,
            norm: NormSpec::l2(),
        }
    }
}

impl NonlinearControls {
    pub fn validate(&self) -> Result<()> {
        let positive = [("r", self.r), ("T", self.t_final)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
        }
        if self.n_steps == 0 || self.max_outer == 0 {
            return Err(Error::Invalid("n_steps and max_outer must be positive".into()));
        }
        if !(self.tol >= 1e-12 && self.tol.is_finite()) {
            return Err(Error::Invalid(format!("tol must be at least 1e-12, got {}", self.tol)));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::Invalid(format!("shift d must be >= 0, got {}", self.d)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationReport {
    /// `||u^(s+1) - u^(s)||_Y` per outer step.
    pub increments: Vec<f64>,
    /// Largest ratio of successive increments.
    pub eta_hat: f64,
    pub converged: bool,
    pub ball_violations: usize,
    /// `||w||_Y / ||F(., 0)||` for the base solution `w`.
    #[serde(rename = "C0_hat")]
    pub c0_hat: f64,
    /// `trace_sup_norm(u) / ||u||_Y` on the last iterate.
    #[serde(rename = "C1_hat")]
    pub c1_hat: f64,
    /// `sup ||B(t, x, V) - B(t, 0, V)||_F` on the last iterate.
    pub delta_b: f64,
    /// Mixed norm of the discrete residual of the nonlinear equation.
    pub residual: f64,
}

/// Successive-increment contraction estimate; zero with fewer than two increments.
pub fn eta_hat(increments: &[f64]) -> f64 {
    increments
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .fold(0.0, f64::max)
}

/// Problem data shared by every outer step, including the factorized
/// frozen time-step operator.
pub struct FixedPointMap<'a, M: NonlinearModel + ?Sized> {
    model: &'a M,
    base: Arc<CoefficientField>,
    frozen: Arc<CoefficientField>,
    bc: NonlocalBc,
    controls: NonlinearControls,
    stepper: Stepper,
}

/// Per-level model evaluations.
struct Evaluation {
    b: Vec<CMatrix>,
    f: Vec<Vec<C64>>,
}

impl<'a, M: NonlinearModel + ?Sized> FixedPointMap<'a, M> {
    /// `base` carries the diffusion and first-order coefficients; its
    /// potential is replaced by `B(0, x, 0)`.
    pub fn new(model: &'a M, base: Arc<CoefficientField>, bc: NonlocalBc, controls: NonlinearControls) -> Result<Self> {
        controls.validate()?;
        let grid = base.grid().clone();
        let m = model.components();
        if m != base.components() {
            return Err(Error::Invalid(format!(
                "model has {m} components, coefficients have {}",
                base.components()
            )));
        }
        let zero = GridFunction::zeros(grid, m);
        let eval = evaluate(model, 0.0, &zero)?;
        let frozen = Arc::new((*base).clone().with_potential(eval.b)?);
        let op = assemble(&frozen, &bc, ZERO)?;
        let dt = controls.t_final / controls.n_steps as f64;
        let stepper = Stepper::new(op, controls.scheme, dt, controls.d)?;
        Ok(Self {
            model,
            base,
            frozen,
            bc,
            controls,
            stepper,
        })
    }

    pub fn frozen_coefficients(&self) -> &Arc<CoefficientField> {
        &self.frozen
    }

    pub fn base_coefficients(&self) -> &Arc<CoefficientField> {
        &self.base
    }

    pub fn controls(&self) -> &NonlinearControls {
        &self.controls
    }

    fn dt(&self) -> f64 {
        self.controls.t_final / self.controls.n_steps as f64
    }

    fn run_linear(&self, levels: Vec<GridFunction>) -> Result<ParabolicSolution> {
        let c = &self.controls;
        let problem = ParabolicProblem::new(
            self.frozen.clone(),
            self.bc.clone(),
            c.d,
            c.t_final,
            c.n_steps,
            Forcing::Levels(levels),
        )?;
        integrate(&self.stepper, &problem)
    }

    /// Solution `w` of the frozen linear problem with forcing `F(t, x, 0)`.
    pub fn base_solution(&self) -> Result<ParabolicSolution> {
        let grid = self.frozen.grid().clone();
        let zero = GridFunction::zeros(grid, self.model.components());
        let levels = (0..=self.controls.n_steps)
            .map(|s| {
                let e = evaluate(self.model, s as f64 * self.dt(), &zero)?;
                Ok(from_node_vectors(&zero, e.f))
            })
            .collect::<Result<Vec<_>>>()?;
        self.run_linear(levels)
    }

    /// `Q v`: the frozen linear problem with the linearized right-hand side.
    pub fn picard_step(&self, v: &ParabolicSolution) -> Result<ParabolicSolution> {
        let d = C64::new(self.controls.d, 0.0);
        let levels = v
            .snapshots
            .iter()
            .enumerate()
            .map(|(s, vs)| {
                let e = evaluate(self.model, s as f64 * self.dt(), vs)?;
                let mut g = GridFunction::zeros(vs.grid().clone(), vs.components());
                for node in 0..vs.grid().n_nodes() {
                    let corr = self.frozen.potential(node).sub(&e.b[node]).mul_vec(vs.at(node));
                    let out = g.at_mut(node);
                    for c in 0..out.len() {
                        out[c] = e.f[node][c] + corr[c] + d * vs.at(node)[c];
                    }
                }
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        self.run_linear(levels)
    }

    /// Discrete solution-space norm
    /// `||du/dt|| + sum_k ||D^[2]_k u|| + ||A0 u|| + ||u||` in the mixed norm.
    pub fn y_norm(&self, u: &ParabolicSolution) -> Result<f64> {
        let diag = u.diagnostics(&self.controls.norm)?;
        let u_norm = mixed_norm(&u.snapshots[1..], &self.controls.norm, u.dt);
        Ok(diag.mixed_dt + diag.mixed_d2.iter().sum::<f64>() + diag.mixed_a + u_norm)
    }

    fn y_distance(&self, a: &ParabolicSolution, b: &ParabolicSolution) -> Result<f64> {
        let diff = ParabolicSolution {
            snapshots: a.snapshots.iter().zip(&b.snapshots).map(|(x, y)| x.sub(y)).collect(),
            forcing: Vec::new(),
            warnings: Vec::new(),
            ..a.clone_header()
        };
        self.y_norm(&diff)
    }

    /// Mixed norm of the time-discrete residual of the nonlinear equation
    /// on the equation rows, consistent with the chosen scheme.
    pub fn residual(&self, u: &ParabolicSolution) -> Result<f64> {
        let op = self.stepper.operator();
        let theta = match self.controls.scheme {
            Scheme::ImplicitEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        };
        let spatial = u
            .snapshots
            .iter()
            .enumerate()
            .map(|(s, us)| {
                let e = evaluate(self.model, s as f64 * u.dt, us)?;
                let mut r = op.apply_equations(us);
                for node in 0..us.grid().n_nodes() {
                    let extra = e.b[node].sub(self.frozen.potential(node)).mul_vec(us.at(node));
                    let out = r.at_mut(node);
                    for c in 0..out.len() {
                        out[c] += extra[c] - e.f[node][c];
                    }
                }
                Ok(op.project_rhs(&r))
            })
            .collect::<Result<Vec<_>>>()?;
        let dt_inv = C64::new(1.0 / u.dt, 0.0);
        let residuals: Vec<GridFunction> = (0..u.n_steps())
            .map(|s| {
                let time = op.project_rhs(&u.snapshots[s + 1].sub(&u.snapshots[s]).scale(dt_inv));
                time.add(&spatial[s + 1].scale(C64::new(theta, 0.0)))
                    .add(&spatial[s].scale(C64::new(1.0 - theta, 0.0)))
            })
            .collect();
        Ok(mixed_norm(&residuals, &self.controls.norm, u.dt))
    }

    /// `sup ||B(t, x, V) - B(t, x_0, V)||_F` over nodes and levels, with
    /// `x_0` the corner node at the origin.
    pub fn delta_b(&self, u: &ParabolicSolution) -> Result<f64> {
        let grid = u.snapshots[0].grid().clone();
        let origin = grid.node_x(0);
        let mut sup: f64 = 0.0;
        for (s, us) in u.snapshots.iter().enumerate() {
            let t = s as f64 * u.dt;
            let du = derivatives(us)?;
            let level: f64 = (0..grid.n_nodes())
                .into_par_iter()
                .map(|node| -> Result<f64> {
                    let dus: Vec<Vec<C64>> = du.iter().map(|g| g.at(node).to_vec()).collect();
                    let x = grid.node_x(node);
                    let here = PointState {
                        t,
                        node,
                        x: &x,
                        u: us.at(node),
                        du: &dus,
                    };
                    let face = PointState {
                        node: 0,
                        x: &origin,
                        ..here
                    };
                    let bh = checked_b(self.model, &here)?;
                    let bf = checked_b(self.model, &face)?;
                    Ok(bh.sub(&bf).norm_frobenius())
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            sup = sup.max(level);
        }
        Ok(sup)
    }

    /// Iterates `u^(0) = w`, `u^(s+1) = Q u^(s)` until the increment drops
    /// below `tol`, the budget is spent, or divergence is detected.
    pub fn solve(&self) -> Result<(ParabolicSolution, IterationReport)> {
        let c = &self.controls;
        let w = self.base_solution()?;
        let f_norm = mixed_norm(&w.forcing, &c.norm, w.dt);
        let w_norm = self.y_norm(&w)?;
        let mut report = IterationReport {
            c0_hat: if f_norm > 0.0 { w_norm / f_norm } else { 0.0 },
            ..Default::default()
        };
        let mut current = w.clone();
        let mut growth_streak = 0;
        for _ in 0..c.max_outer {
            let next = self.picard_step(&current)?;
            let inc = self.y_distance(&next, &current)?;
            report.increments.push(inc);
            report.eta_hat = eta_hat(&report.increments);
            if !inc.is_finite() || next.snapshots.iter().any(|u| !u.is_finite()) {
                return Err(Error::NoContraction(Box::new(report)));
            }
            let n = report.increments.len();
            growth_streak = if n >= 2 && report.increments[n - 1] > report.increments[n - 2] {
                growth_streak + 1
            } else {
                0
            };
            let dist = self.y_distance(&next, &w)?;
            if dist > c.r {
                report.ball_violations += 1;
                if c.enforce_ball {
                    return Err(Error::BallExit {
                        radius: c.r,
                        distance: dist,
                        report: Box::new(report),
                    });
                }
            }
            current = next;
            if growth_streak >= 3 {
                return Err(Error::NoContraction(Box::new(report)));
            }
            if inc <= c.tol {
                report.converged = true;
                break;
            }
        }
        let u_norm = self.y_norm(&current)?;
        report.c1_hat = if u_norm > 0.0 { trace_sup_norm(&current)? / u_norm } else { 0.0 };
        report.delta_b = self.delta_b(&current)?;
        report.residual = self.residual(&current)?;
        Ok((current, report))
    }
}

impl ParabolicSolution {
    fn clone_header(&self) -> ParabolicSolution {
        ParabolicSolution {
            scheme: self.scheme,
            dt: self.dt,
            coeffs: self.coeffs.clone(),
            snapshots: Vec::new(),
            forcing: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

fn derivatives(u: &GridFunction) -> Result<Vec<GridFunction>> {
    (0..u.grid().dims()).map(|k| degen_derivative(u, k, 1)).collect()
}

fn checked_b<M: NonlinearModel + ?Sized>(model: &M, st: &PointState<'_>) -> Result<CMatrix> {
    let b = model.b(st).map_err(|e| Error::CallbackFailure(format!("B at node {}: {e}", st.node)))?;
    if b.dim() != model.components() || !b.is_finite() {
        return Err(Error::CallbackFailure(format!(
            "B returned a non-finite or misshapen matrix at node {} (t = {})",
            st.node, st.t
        )));
    }
    Ok(b)
}

fn checked_f<M: NonlinearModel + ?Sized>(model: &M, st: &PointState<'_>) -> Result<Vec<C64>> {
    let f = model.f(st).map_err(|e| Error::CallbackFailure(format!("F at node {}: {e}", st.node)))?;
    if f.len() != model.components() || f.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::CallbackFailure(format!(
            "F returned a non-finite or misshapen vector at node {} (t = {})",
            st.node, st.t
        )));
    }
    Ok(f)
}

/// Evaluates `B` and `F` at every node of one time level.
fn evaluate<M: NonlinearModel + ?Sized>(model: &M, t: f64, u: &GridFunction) -> Result<Evaluation> {
    let grid = u.grid().clone();
    let du = derivatives(u)?;
    let pairs: Vec<(CMatrix, Vec<C64>)> = (0..grid.n_nodes())
        .into_par_iter()
        .map(|node| {
            let dus: Vec<Vec<C64>> = du.iter().map(|g| g.at(node).to_vec()).collect();
            let x = grid.node_x(node);
            let st = PointState {
                t,
                node,
                x: &x,
                u: u.at(node),
                du: &dus,
            };
            Ok((checked_b(model, &st)?, checked_f(model, &st)?))
        })
        .collect::<Result<_>>()?;
    let (b, f) = pairs.into_iter().unzip();
    Ok(Evaluation { b, f })
}

fn from_node_vectors(like: &GridFunction, vals: Vec<Vec<C64>>) -> GridFunction {
    let values = vals.into_iter().flatten().collect();
    GridFunction::from_values(like.grid().clone(), like.components(), values).expect("one vector per node")
}

/// Solution `w` of the frozen linear problem.
pub fn base_solution<M: NonlinearModel + ?Sized>(
    model: &M,
    base: Arc<CoefficientField>,
    bc: &NonlocalBc,
    controls: &NonlinearControls,
) -> Result<ParabolicSolution> {
    FixedPointMap::new(model, base, bc.clone(), *controls)?.base_solution()
}

pub fn picard_step<M: NonlinearModel + ?Sized>(
    v: &ParabolicSolution,
    model: &M,
    base: Arc<CoefficientField>,
    bc: &NonlocalBc,
    controls: &NonlinearControls,
) -> Result<ParabolicSolution> {
    FixedPointMap::new(model, base, bc.clone(), *controls)?.picard_step(v)
}

pub fn solve_nonlinear<M: NonlinearModel + ?Sized>(
    model: &M,
    base: Arc<CoefficientField>,
    bc: &NonlocalBc,
    controls: &NonlinearControls,
) -> Result<(ParabolicSolution, IterationReport)> {
    FixedPointMap::new(model, base, bc.clone(), *controls)?.solve()
}

/// `sup (|u| + sum_k |D^[1]_k u|)` over nodes and time levels.
pub fn trace_sup_norm(u: &ParabolicSolution) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for us in &u.snapshots {
        let du = derivatives(us)?;
        for node in 0..us.grid().n_nodes() {
            let v = vec_norm(us.at(node)) + du.iter().map(|g| vec_norm(g.at(node))).sum::<f64>();
            sup = sup.max(v);
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::grid::GridSpec;
    use crate::linalg::ONE;
    use crate::parabolic::step_scheme;

    /// `B = a0 + eps * u`, `F = source`.
    struct Toy {
        a0: f64,
        eps: f64,
        source: f64,
    }

    impl NonlinearModel for Toy {
        fn components(&self) -> usize {
            1
        }
        fn b(&self, st: &PointState<'_>) -> Result<CMatrix> {
            Ok(CMatrix::scalar(1, C64::new(self.a0, 0.0) + st.u[0] * self.eps))
        }
        fn f(&self, _: &PointState<'_>) -> Result<Vec<C64>> {
            Ok(vec![C64::new(self.source, 0.0)])
        }
    }

    struct Poisoned;

    impl NonlinearModel for Poisoned {
        fn components(&self) -> usize {
            1
        }
        fn b(&self, _: &PointState<'_>) -> Result<CMatrix> {
            Ok(CMatrix::identity(1))
        }
        fn f(&self, st: &PointState<'_>) -> Result<Vec<C64>> {
            Ok(vec![if st.t > 0.5 { C64::new(f64::NAN, 0.0) } else { ONE }])
        }
    }

    fn base(n: usize) -> Arc<CoefficientField> {
        let g = Arc::new(GridSpec::line(0.5, 1.0, n).unwrap());
        Arc::new(CoefficientField::constant(g, &[C64::new(-1.0, 0.0)], CMatrix::zeros(1)).unwrap())
    }

    fn controls(t: f64) -> NonlinearControls {
        NonlinearControls {
            t_final: t,
            n_steps: 10,
            tol: 1e-10,
            ..Default::default()
        }
    }

    #[test]
    fn zero_source_gives_zero_base() {
        let toy = Toy { a0: 1.0, eps: 0.5, source: 0.0 };
        let w = base_solution(&toy, base(16), &NonlocalBc::dirichlet(1), &controls(1.0)).unwrap();
        assert!(w.snapshots.iter().all(|u| u.max_abs() == 0.0));
    }

    #[test]
    fn linear_model_is_a_fixed_point_at_once() {
        let toy = Toy { a0: 1.0, eps: 0.0, source: 1.0 };
        let (u, rep) = solve_nonlinear(&toy, base(16), &NonlocalBc::dirichlet(1), &controls(1.0)).unwrap();
        assert!(rep.converged);
        assert!(rep.increments.len() <= 2);
        assert!(rep.eta_hat < 1e-6);
        // agrees with the plain parabolic solver
        let coeffs = Arc::new((*base(16)).clone().with_potential(vec![CMatrix::identity(1); 17]).unwrap());
        let g = coeffs.grid().clone();
        let p = ParabolicProblem::new(
            coeffs,
            NonlocalBc::dirichlet(1),
            0.0,
            1.0,
            10,
            Forcing::function(move |_| GridFunction::constant(g.clone(), &[ONE])),
        )
        .unwrap();
        let direct = step_scheme(&p, Scheme::ImplicitEuler).unwrap();
        assert!(direct.final_state().sub(u.final_state()).max_abs() < 1e-12);
    }

    #[test]
    fn picard_on_zero_returns_base() {
        let toy = Toy { a0: 1.0, eps: 0.7, source: 1.0 };
        let map = FixedPointMap::new(&toy, base(12), NonlocalBc::dirichlet(1), controls(1.0)).unwrap();
        let w = map.base_solution().unwrap();
        let zero = ParabolicSolution {
            snapshots: vec![GridFunction::zeros(w.snapshots[0].grid().clone(), 1); 11],
            ..w.clone_header()
        };
        let q = map.picard_step(&zero).unwrap();
        for (a, b) in q.snapshots.iter().zip(&w.snapshots) {
            assert!(a.sub(b).max_abs() < 1e-14);
        }
    }

    #[test]
    fn toy_contracts_with_small_ratio() {
        let toy = Toy { a0: 1.0, eps: 0.1, source: 1.0 };
        let (_, rep) = solve_nonlinear(&toy, base(16), &NonlocalBc::dirichlet(1), &controls(1.0)).unwrap();
        assert!(rep.converged);
        assert!(rep.eta_hat < 0.1, "{}", rep.eta_hat);
        for w in rep.increments.windows(2) {
            assert!(w[1] <= rep.eta_hat * w[0] * (1.0 + 1e-12));
        }
        assert!(rep.residual <= 10.0 * 1e-10);
    }

    #[test]
    fn adversarial_model_diverges() {
        let toy = Toy { a0: 0.0, eps: -60.0, source: 10.0 };
        let ctl = NonlinearControls {
            enforce_ball: false,
            ..controls(1.0)
        };
        let res = solve_nonlinear(&toy, base(16), &NonlocalBc::dirichlet(1), &ctl);
        assert!(matches!(res, Err(Error::NoContraction(_))), "{res:?}");
    }

    #[test]
    fn small_ball_is_left() {
        let toy = Toy { a0: 1.0, eps: 2.0, source: 1.0 };
        let ctl = NonlinearControls {
            r: 1e-9,
            ..controls(1.0)
        };
        let res = solve_nonlinear(&toy, base(16), &NonlocalBc::dirichlet(1), &ctl);
        assert!(matches!(res, Err(Error::BallExit { .. })));
        let ctl = NonlinearControls {
            enforce_ball: false,
            ..ctl
        };
        let (_, rep) = solve_nonlinear(&toy, base(16), &NonlocalBc::dirichlet(1), &ctl).unwrap();
        assert!(rep.ball_violations > 0);
    }

    #[test]
    fn non_finite_callback_is_reported() {
        let res = solve_nonlinear(&Poisoned, base(8), &NonlocalBc::dirichlet(1), &controls(1.0));
        assert!(matches!(res, Err(Error::CallbackFailure(_))));
    }

    #[test]
    fn trace_norm_of_mode() {
        let g = Arc::new(GridSpec::line(0.0, 1.0, 400).unwrap());
        let t_final = 2.0;
        let snaps: Vec<GridFunction> = (0..=4)
            .map(|s| {
                let t = s as f64 * t_final / 4.0;
                GridFunction::from_real_fn(g.clone(), |_, tau| t * (PI * tau[0]).sin())
            })
            .collect();
        let sol = ParabolicSolution {
            scheme: Scheme::ImplicitEuler,
            dt: 0.5,
            coeffs: base(4),
            snapshots: snaps,
            forcing: vec![],
            warnings: vec![],
        };
        // sup of |sin| + pi |cos| is sqrt(1 + pi^2)
        let expect = t_final * (1.0 + PI * PI).sqrt();
        assert!((trace_sup_norm(&sol).unwrap() - expect).abs() < 1e-2 * expect);
    }

    #[test]
    fn eta_hat_edge_cases() {
        assert_eq!(eta_hat(&[]), 0.0);
        assert_eq!(eta_hat(&[1.0]), 0.0);
        assert_eq!(eta_hat(&[1.0, 0.5, 0.1]), 0.5);
    }

    #[test]
    fn report_json_keys() {
        let v = serde_json::to_value(IterationReport::default()).unwrap();
        for key in ["increments", "eta_hat", "converged", "ball_violations", "C0_hat", "C1_hat", "delta_b"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
