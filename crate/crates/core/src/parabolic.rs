//! One-step time integration of `du/dt + (O + d) u = f`, `u(0) = 0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bc::NonlocalBc;
use crate::coefficients::CoefficientField;
use crate::elliptic::{assemble, DiscreteOperator};
use crate::error::{Error, Result};
use crate::grid::{degen_derivative, GridFunction, GridSpec};
use crate::linalg::{SparseLu, C64, ZERO};
use crate::report::fmt_f64;
use crate::spaces::{mixed_norm, NormSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ImplicitEuler,
    CrankNicolson,
}

/// Right-hand side supplier.
#[derive(Clone)]
pub enum Forcing {
    /// Evaluated at the time the scheme asks for.
    Function(Arc<dyn Fn(f64) -> GridFunction + Send + Sync>),
    /// Values at the time levels `t_0, ..., t_N`; Crank-Nicolson averages
    /// neighbouring levels.
    Levels(Vec<GridFunction>),
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Function(_) => f.write_str("Forcing::Function"),
            Forcing::Levels(l) => write!(f, "Forcing::Levels({})", l.len()),
        }
    }
}

impl Forcing {
    pub fn function(f: impl Fn(f64) -> GridFunction + Send + Sync + 'static) -> Self {
        Forcing::Function(Arc::new(f))
    }

    /// Forcing for the step `t_s -> t_{s+1}`.
    fn for_step(&self, s: usize, dt: f64, scheme: Scheme) -> Result<GridFunction> {
        match (self, scheme) {
            (Forcing::Function(f), Scheme::ImplicitEuler) => Ok(f((s + 1) as f64 * dt)),
            (Forcing::Function(f), Scheme::CrankNicolson) => Ok(f((s as f64 + 0.5) * dt)),
            (Forcing::Levels(l), scheme) => {
                let next = l
                    .get(s + 1)
                    .ok_or_else(|| Error::Invalid(format!("forcing has no level {}", s + 1)))?;
                Ok(match scheme {
                    Scheme::ImplicitEuler => next.clone(),
                    Scheme::CrankNicolson => l[s].add(next).scale(C64::new(0.5, 0.0)),
                })
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParabolicProblem {
    pub coeffs: Arc<CoefficientField>,
    pub bc: NonlocalBc,
    pub d: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub forcing: Forcing,
}

impl ParabolicProblem {
    pub fn new(
        coeffs: Arc<CoefficientField>,
        bc: NonlocalBc,
        d: f64,
        t_final: f64,
        n_steps: usize,
        forcing: Forcing,
    ) -> Result<Self> {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::Invalid(format!("shift d must be finite and >= 0, got {d}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::Invalid(format!("horizon T must be positive, got {t_final}")));
        }
        if n_steps == 0 {
            return Err(Error::Invalid("n_steps must be positive".into()));
        }
        if let Forcing::Levels(l) = &forcing {
            if l.len() != n_steps + 1 {
                return Err(Error::Invalid(format!(
                    "forcing has {} levels, expected {}",
                    l.len(),
                    n_steps + 1
                )));
            }
        }
        Ok(Self {
            coeffs,
            bc,
            d,
            t_final,
            n_steps,
            forcing,
        })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        self.coeffs.grid()
    }
}

#[derive(Clone, Debug)]
pub struct ParabolicSolution {
    pub scheme: Scheme,
    pub dt: f64,
    pub coeffs: Arc<CoefficientField>,
    /// `u(t_0) = 0, u(t_1), ..., u(t_N)`.
    pub snapshots: Vec<GridFunction>,
    /// Forcing actually used for each step, `N` entries.
    pub forcing: Vec<GridFunction>,
    pub warnings: Vec<String>,
}

impl ParabolicSolution {
    pub fn n_steps(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn final_state(&self) -> &GridFunction {
        self.snapshots.last().expect("at least the initial level")
    }

    pub fn time(&self, s: usize) -> f64 {
        s as f64 * self.dt
    }

    /// Backward differences `(u_s - u_{s-1}) / dt` for `s = 1..N`.
    pub fn time_derivative(&self) -> Vec<GridFunction> {
        self.snapshots
            .windows(2)
            .map(|w| w[1].sub(&w[0]).scale(C64::new(1.0 / self.dt, 0.0)))
            .collect()
    }

    /// Mixed norms of every term of the coercive estimate.
    pub fn diagnostics(&self, spec: &NormSpec) -> Result<RegularityDiagnostics> {
        let levels = &self.snapshots[1..];
        let dims = self.coeffs.grid().dims();
        let mixed_dt = mixed_norm(&self.time_derivative(), spec, self.dt);
        let mut mixed_d2 = Vec::with_capacity(dims);
        for k in 0..dims {
            let d2: Vec<GridFunction> = levels
                .iter()
                .map(|u| degen_derivative(u, k, 2))
                .collect::<Result<_>>()?;
            mixed_d2.push(mixed_norm(&d2, spec, self.dt));
        }
        let au: Vec<GridFunction> = levels.iter().map(|u| self.coeffs.apply_potential(u)).collect();
        let mixed_a = mixed_norm(&au, spec, self.dt);
        let mixed_f = mixed_norm(&self.forcing, spec, self.dt);
        let numerator = mixed_dt + mixed_d2.iter().sum::<f64>() + mixed_a;
        Ok(RegularityDiagnostics {
            mixed_dt,
            mixed_d2,
            mixed_a,
            mixed_f,
            ratio: if mixed_f > 0.0 { Some(numerator / mixed_f) } else { None },
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityDiagnostics {
    pub mixed_dt: f64,
    /// One entry per axis.
    pub mixed_d2: Vec<f64>,
    pub mixed_a: f64,
    pub mixed_f: f64,
    pub ratio: Option<f64>,
}

/// Linear stepper with a single factorization reused across steps.
pub struct Stepper {
    op: DiscreteOperator,
    lu: SparseLu,
    scheme: Scheme,
    dt: f64,
    d: f64,
}

impl Stepper {
    pub fn new(op: DiscreteOperator, scheme: Scheme, dt: f64, d: f64) -> Result<Self> {
        let theta = match scheme {
            Scheme::ImplicitEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        };
        let lhs = op.affine_rows(theta * dt, C64::new(1.0 + theta * dt * d, 0.0));
        let lu = SparseLu::factor(&lhs)?;
        Ok(Self { op, lu, scheme, dt, d })
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    /// Advances `u` by one step with step forcing `f`.
    pub fn step(&self, u: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
        let mut rhs = u.add(&f.scale(C64::new(self.dt, 0.0)));
        if self.scheme == Scheme::CrankNicolson {
            let ou = self.op.apply_equations(u);
            let half = C64::new(0.5 * self.dt, 0.0);
            for ((r, o), ui) in rhs.values_mut().iter_mut().zip(ou.values()).zip(u.values()) {
                *r -= half * (o + ui * self.d);
            }
        }
        let rhs = self.op.project_rhs(&rhs);
        let x = self.lu.solve(rhs.values())?;
        GridFunction::from_values(u.grid().clone(), u.components(), x)
    }
}

/// Integrates the problem from the zero initial state.
pub fn step_scheme(problem: &ParabolicProblem, scheme: Scheme) -> Result<ParabolicSolution> {
    let op = assemble(&problem.coeffs, &problem.bc, ZERO)?;
    step_with_operator(problem, op, scheme)
}

/// As [`step_scheme`] with a pre-assembled spatial operator.
pub fn step_with_operator(problem: &ParabolicProblem, op: DiscreteOperator, scheme: Scheme) -> Result<ParabolicSolution> {
    let stepper = Stepper::new(op, scheme, problem.dt(), problem.d)?;
    integrate(&stepper, problem)
}

/// Runs `problem` with an existing stepper, whose step size and shift must
/// match the problem.
pub fn integrate(stepper: &Stepper, problem: &ParabolicProblem) -> Result<ParabolicSolution> {
    let dt = problem.dt();
    if (stepper.dt - dt).abs() > 1e-14 * dt || stepper.d != problem.d {
        return Err(Error::Invalid("stepper was built for a different step size or shift".into()));
    }
    let scheme = stepper.scheme;
    let m = problem.coeffs.components();
    let grid = problem.grid().clone();
    let mut snapshots = Vec::with_capacity(problem.n_steps + 1);
    let mut forcing = Vec::with_capacity(problem.n_steps);
    snapshots.push(GridFunction::zeros(grid, m));
    for s in 0..problem.n_steps {
        let f = problem.forcing.for_step(s, dt, scheme)?;
        let next = stepper.step(&snapshots[s], &f)?;
        if !next.is_finite() {
            return Err(Error::SingularSystem(format!("non-finite state at step {}", s + 1)));
        }
        snapshots.push(next);
        forcing.push(f);
    }
    let mut warnings = Vec::new();
    if scheme == Scheme::CrankNicolson {
        if let Some(w) = oscillation_warning(&snapshots) {
            warnings.push(w);
        }
    }
    Ok(ParabolicSolution {
        scheme,
        dt,
        coeffs: problem.coeffs.clone(),
        snapshots,
        forcing,
        warnings,
    })
}

/// Flags persistent step-to-step sign alternation of the increments at the
/// entry of largest final amplitude, the signature of an undamped stiff
/// mode under Crank-Nicolson.
pub fn oscillation_warning(snapshots: &[GridFunction]) -> Option<String> {
    if snapshots.len() < 5 {
        return None;
    }
    let last = snapshots.last()?;
    let (idx, amp) = last
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.norm()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if amp == 0.0 {
        return None;
    }
    let incs: Vec<f64> = snapshots.windows(2).map(|w| (w[1].values()[idx] - w[0].values()[idx]).re).collect();
    let significant: Vec<f64> = incs.into_iter().filter(|d| d.abs() > 1e-12 * amp).collect();
    if significant.len() < 4 {
        return None;
    }
    let flips = significant.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    let fraction = flips as f64 / (significant.len() - 1) as f64;
    (fraction > 0.75).then(|| {
        format!(
            "StabilityWarning: increments alternate sign in {:.0}% of steps at entry {idx}",
            100.0 * fraction
        )
    })
}

/// `[||du/dt|| + sum_k ||D^[2]_k u|| + ||A u||] / ||f||` in the mixed norm,
/// with backward differences in time.
pub fn maximal_regularity_ratio(solution: &ParabolicSolution, spec: &NormSpec) -> Result<f64> {
    if solution.n_steps() < 4 {
        return Err(Error::Invalid(format!(
            "maximal regularity ratio needs at least 4 steps, got {}",
            solution.n_steps()
        )));
    }
    solution
        .diagnostics(spec)?
        .ratio
        .ok_or(Error::DivisionByZero("forcing vanishes identically"))
}

/// `node_index,x1..xn,component,re,im`.
pub fn write_snapshot<W: std::io::Write>(u: &GridFunction, mut out: W) -> std::io::Result<()> {
    let grid = u.grid();
    let xs: Vec<String> = (1..=grid.dims()).map(|k| format!("x{k}")).collect();
    writeln!(out, "node_index,{},component,re,im", xs.join(","))?;
    for node in 0..grid.n_nodes() {
        let coords: Vec<String> = grid.node_x(node).into_iter().map(fmt_f64).collect();
        let coords = coords.join(",");
        for (c, v) in u.at(node).iter().enumerate() {
            writeln!(out, "{node},{coords},{c},{},{}", fmt_f64(v.re), fmt_f64(v.im))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::linalg::CMatrix;
    use crate::spaces::lp_norm;

    fn model(alpha: f64, n: usize, pot: f64) -> Arc<CoefficientField> {
        let g = Arc::new(GridSpec::line(alpha, 1.0, n).unwrap());
        Arc::new(CoefficientField::constant(g, &[C64::new(-1.0, 0.0)], CMatrix::scalar(1, C64::new(pot, 0.0))).unwrap())
    }

    fn zero_forcing(coeffs: &Arc<CoefficientField>) -> Forcing {
        let g = coeffs.grid().clone();
        Forcing::function(move |_| GridFunction::zeros(g.clone(), 1))
    }

    #[test]
    fn zero_forcing_stays_zero() {
        let coeffs = model(0.3, 16, 0.0);
        let p = ParabolicProblem::new(coeffs.clone(), NonlocalBc::dirichlet(1), 1.0, 1.0, 10, zero_forcing(&coeffs)).unwrap();
        for scheme in [Scheme::ImplicitEuler, Scheme::CrankNicolson] {
            let sol = step_scheme(&p, scheme).unwrap();
            assert_eq!(sol.snapshots.len(), 11);
            assert!(sol.snapshots.iter().all(|u| u.max_abs() == 0.0));
            let err = maximal_regularity_ratio(&sol, &NormSpec::l2());
            assert!(matches!(err, Err(Error::DivisionByZero(_))));
        }
    }

    #[test]
    fn eigenmode_matches_scalar_ode() {
        let n = 32;
        let coeffs = model(0.0, n, 0.0);
        let g = coeffs.grid().clone();
        let h = 1.0 / n as f64;
        let mu = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let d = 1.0;
        let mode = GridFunction::from_real_fn(g, |x, _| (PI * x[0]).sin());
        let m2 = mode.clone();
        let t_final = 0.05;
        let run = |steps: usize| {
            let f = m2.clone();
            let p = ParabolicProblem::new(
                coeffs.clone(),
                NonlocalBc::dirichlet(1),
                d,
                t_final,
                steps,
                Forcing::function(move |_| f.clone()),
            )
            .unwrap();
            let sol = step_scheme(&p, Scheme::ImplicitEuler).unwrap();
            let exact = (1.0 - (-(mu + d) * t_final).exp()) / (mu + d);
            sol.final_state().sub(&mode.scale(C64::new(exact, 0.0))).max_abs()
        };
        let (e1, e2) = (run(50), run(100));
        assert!(e1 < 1e-3);
        assert!(((e1 / e2).log2() - 1.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn constant_forcing_ratio_is_scale_invariant() {
        let coeffs = model(0.2, 16, 1.0);
        let g = coeffs.grid().clone();
        let build = |c: f64| {
            let g = g.clone();
            ParabolicProblem::new(
                coeffs.clone(),
                NonlocalBc::dirichlet(1),
                0.0,
                1.0,
                20,
                Forcing::function(move |t| GridFunction::from_real_fn(g.clone(), |x, _| c * (1.0 + t) * x[0])),
            )
            .unwrap()
        };
        let r1 = maximal_regularity_ratio(&step_scheme(&build(1.0), Scheme::CrankNicolson).unwrap(), &NormSpec::l2()).unwrap();
        let r2 = maximal_regularity_ratio(&step_scheme(&build(7.5), Scheme::CrankNicolson).unwrap(), &NormSpec::l2()).unwrap();
        assert!((r1 - r2).abs() < 1e-12 * r1);
    }

    #[test]
    fn ratio_needs_four_steps() {
        let coeffs = model(0.0, 8, 1.0);
        let g = coeffs.grid().clone();
        let p = ParabolicProblem::new(
            coeffs,
            NonlocalBc::dirichlet(1),
            0.0,
            1.0,
            3,
            Forcing::function(move |_| GridFunction::constant(g.clone(), &[C64::new(1.0, 0.0)])),
        )
        .unwrap();
        let sol = step_scheme(&p, Scheme::ImplicitEuler).unwrap();
        assert!(matches!(maximal_regularity_ratio(&sol, &NormSpec::l2()), Err(Error::Invalid(_))));
    }

    #[test]
    fn semigroup_decay_after_cutoff() {
        let coeffs = model(0.4, 24, 0.0);
        let g = coeffs.grid().clone();
        let p = ParabolicProblem::new(
            coeffs,
            NonlocalBc::dirichlet(1),
            0.0,
            0.5,
            100,
            Forcing::function(move |t| {
                let amp = if t <= 0.1 { 1.0 } else { 0.0 };
                GridFunction::from_real_fn(g.clone(), |x, _| amp * x[0] * (1.0 - x[0]))
            }),
        )
        .unwrap();
        let sol = step_scheme(&p, Scheme::ImplicitEuler).unwrap();
        let norms: Vec<f64> = sol.snapshots[21..].iter().map(|u| lp_norm(u, &NormSpec::l2())).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn levels_forcing_requires_all_levels() {
        let coeffs = model(0.0, 8, 0.0);
        let g = coeffs.grid().clone();
        let levels = vec![GridFunction::zeros(g, 1); 3];
        assert!(ParabolicProblem::new(coeffs, NonlocalBc::dirichlet(1), 0.0, 1.0, 4, Forcing::Levels(levels)).is_err());
    }

    #[test]
    fn oscillation_heuristic_fires_on_alternation() {
        let g = Arc::new(GridSpec::line(0.0, 1.0, 4).unwrap());
        let snaps: Vec<GridFunction> = (0..10)
            .map(|s| GridFunction::constant(g.clone(), &[C64::new(1.0 + if s % 2 == 0 { 0.5 } else { -0.5 }, 0.0)]))
            .collect();
        assert!(oscillation_warning(&snaps).is_some());
        let mono: Vec<GridFunction> = (0..10).map(|s| GridFunction::constant(g.clone(), &[C64::new(s as f64, 0.0)])).collect();
        assert!(oscillation_warning(&mono).is_none());
    }

    #[test]
    fn snapshot_csv_columns() {
        let g = Arc::new(
            GridSpec::new(vec![
                crate::grid::DegenerateAxis::new(0.0, 1.0, 2).unwrap(),
                crate::grid::DegenerateAxis::new(0.5, 1.0, 2).unwrap(),
            ])
            .unwrap(),
        );
        let u = GridFunction::zeros(g, 2);
        let mut buf = Vec::new();
        write_snapshot(&u, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("node_index,x1,x2,component,re,im"));
        assert_eq!(lines.count(), 18);
    }
}
