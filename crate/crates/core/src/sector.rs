//! Resolvent estimates over a sector `|arg lambda| <= phi`.
//!
//! The resolvent of the discrete operator is the map `f -> u` solving
//! `(O_h + lambda) u = f` on the equation rows with the boundary rows
//! homogeneous. Norms are taken in the unweighted Euclidean (`p = 2`) or
//! `l_p` norm of the node values on the `tau`-uniform grid. Since the state
//! space is `C^m`, positivity and R-positivity coincide and only the former
//! is estimated.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bc::NonlocalBc;
use crate::coefficients::CoefficientField;
use crate::elliptic::{assemble, random_forcing, DiscreteOperator, SampleStatus};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, vec_norm, SparseLu, C64, ONE, ZERO};
use crate::report::fmt_f64;

/// Sample set `r e^{i theta}` for every modulus and ray, optionally with 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    phi: f64,
    moduli: Vec<f64>,
    rays: Vec<f64>,
    include_zero: bool,
}

impl SectorSpec {
    pub fn new(phi: f64, moduli: Vec<f64>, rays: Vec<f64>, include_zero: bool) -> Result<Self> {
        if !(phi > 0.0 && phi < std::f64::consts::PI) {
            return Err(Error::Invalid(format!("sector half-angle must lie in (0, pi), got {phi}")));
        }
        if moduli.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Invalid("moduli must be positive and finite".into()));
        }
        if moduli.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("moduli must be strictly increasing".into()));
        }
        if let Some(t) = rays.iter().find(|t| !(t.abs() <= phi + 1e-12)) {
            return Err(Error::Invalid(format!("ray angle {t} lies outside the sector")));
        }
        Ok(Self {
            phi,
            moduli,
            rays,
            include_zero,
        })
    }

    /// Five decades `1, 10, ..., 1e4` on nine equispaced rays in `[-phi, phi]`.
    pub fn default_grid(phi: f64) -> Result<Self> {
        Self::log_grid(phi, 0, 4, 9)
    }

    /// One modulus per decade `10^lo ..= 10^hi` on `n_rays` equispaced rays.
    pub fn log_grid(phi: f64, lo: i32, hi: i32, n_rays: usize) -> Result<Self> {
        let moduli = (lo..=hi).map(|e| 10f64.powi(e)).collect();
        let rays = match n_rays {
            0 => Vec::new(),
            1 => vec![0.0],
            n => (0..n).map(|i| -phi + 2.0 * phi * i as f64 / (n - 1) as f64).collect(),
        };
        Self::new(phi, moduli, rays, false)
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn moduli(&self) -> &[f64] {
        &self.moduli
    }

    pub fn rays(&self) -> &[f64] {
        &self.rays
    }

    pub fn includes_zero(&self) -> bool {
        self.include_zero
    }

    /// Ray-major list of sample points, zero last when requested.
    pub fn samples(&self) -> Vec<C64> {
        let mut out: Vec<C64> = self
            .rays
            .iter()
            .flat_map(|&t| self.moduli.iter().map(move |&r| C64::from_polar(r, t)))
            .collect();
        if self.include_zero {
            out.push(ZERO);
        }
        out
    }
}

/// Tuning for [`resolvent_norm_with`].
#[derive(Clone, Copy, Debug)]
pub struct ResolventOptions {
    pub p: f64,
    /// Largest system solved column-by-column for an exact dense SVD.
    pub dense_limit: usize,
    pub power_iterations: usize,
    /// Random probes for the `p != 2` lower bound.
    pub trials: usize,
    pub seed: u64,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            p: 2.0,
            dense_limit: 1500,
            power_iterations: 500,
            trials: 32,
            seed: 0,
        }
    }
}

/// `||(O_h + lambda)^{-1}||` with default options. Exact for `p = 2`, a
/// seeded random lower bound otherwise.
pub fn resolvent_norm(op: &DiscreteOperator, lambda: C64, p: f64) -> Result<f64> {
    resolvent_norm_with(
        op,
        lambda,
        &ResolventOptions {
            p,
            ..Default::default()
        },
    )
}

fn lp_vector_norm(op: &DiscreteOperator, v: &[C64], p: f64) -> f64 {
    let m = op.components();
    let terms: Vec<f64> = v.chunks(m).map(|c| vec_norm(c).powf(p)).collect();
    crate::linalg::pairwise_sum(&terms).powf(1.0 / p)
}

pub fn resolvent_norm_with(op: &DiscreteOperator, lambda: C64, opts: &ResolventOptions) -> Result<f64> {
    if !(opts.p >= 1.0 && opts.p.is_finite()) {
        return Err(Error::Invalid(format!("p must lie in [1, inf), got {}", opts.p)));
    }
    let shifted = op.shifted(lambda);
    let lu = SparseLu::factor(shifted.matrix())?;
    let eq_rows: Vec<usize> = (0..shifted.dim()).filter(|&i| !shifted.is_boundary_row(i)).collect();
    if eq_rows.is_empty() {
        return Ok(0.0);
    }
    if opts.p != 2.0 {
        return lp_lower_bound(&shifted, &lu, opts);
    }
    let n = shifted.dim();
    if n <= opts.dense_limit {
        let mut rhs = Mat::<C64>::zeros(n, eq_rows.len());
        for (col, &row) in eq_rows.iter().enumerate() {
            rhs[(row, col)] = ONE;
        }
        let cols = lu.solve_columns(&rhs)?;
        let sv = singular_values(&cols)?;
        return check_conditioning(&shifted, sv[0]);
    }
    let sigma = power_iteration(&lu, &eq_rows, n, opts.power_iterations)?;
    check_conditioning(&shifted, sigma)
}

/// Product of the resolvent norm with the infinity norm of the shifted
/// matrix beyond which the shift is treated as a discrete eigenvalue.
const CONDITION_LIMIT: f64 = 1e13;

fn check_conditioning(op: &DiscreteOperator, norm: f64) -> Result<f64> {
    let a = op.matrix();
    let row_sum = (0..a.nrows())
        .map(|i| a.row(i).1.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    if !(norm * row_sum < CONDITION_LIMIT) {
        return Err(Error::SingularSystem(format!(
            "resolvent norm {norm:e} at matrix norm {row_sum:e}: shift is numerically an eigenvalue"
        )));
    }
    Ok(norm)
}

/// Largest singular value of `M^{-1} P` by power iteration on `P M^{-*} M^{-1} P`.
fn power_iteration(lu: &SparseLu, eq_rows: &[usize], n: usize, iterations: usize) -> Result<f64> {
    let mut x = vec![ZERO; n];
    for (i, &r) in eq_rows.iter().enumerate() {
        x[r] = C64::new(1.0 + (i % 7) as f64 * 0.1, 0.0);
    }
    let project = |v: &mut Vec<C64>| {
        let mut out = vec![ZERO; v.len()];
        for &r in eq_rows {
            out[r] = v[r];
        }
        *v = out;
    };
    let mut sigma = 0.0;
    for _ in 0..iterations {
        let nx = vec_norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let y = lu.solve(&x)?;
        let mut z = lu.solve_adjoint(&y)?;
        project(&mut z);
        let next = vec_norm(&z).sqrt();
        let done = (next - sigma).abs() <= 1e-12 * next;
        sigma = next;
        x = z;
        if done {
            break;
        }
    }
    Ok(sigma)
}

fn lp_lower_bound(op: &DiscreteOperator, lu: &SparseLu, opts: &ResolventOptions) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: f64 = 0.0;
    for _ in 0..opts.trials.max(1) {
        let f = op.project_rhs(&random_forcing(op.grid().clone(), op.components(), &mut rng));
        let u = lu.solve(f.values())?;
        let fnorm = lp_vector_norm(op, f.values(), opts.p);
        if fnorm > 0.0 {
            best = best.max(lp_vector_norm(op, &u, opts.p) / fnorm);
        }
    }
    Ok(best)
}

/// Resolvent estimate at one sector sample.
#[derive(Clone, Debug, Serialize)]
pub struct ResolventSample {
    pub lambda: C64,
    pub norm: f64,
    /// `(1 + |lambda|) * norm`.
    pub weighted: f64,
    pub status: SampleStatus,
}

#[derive(Clone, Debug, Serialize)]
pub struct PositivityReport {
    pub samples: Vec<ResolventSample>,
    /// Maximum of the weighted norms over successful samples.
    pub m_hat: Option<f64>,
    /// Index of the sample attaining `m_hat`.
    pub argmax: Option<usize>,
}

impl PositivityReport {
    pub fn from_samples(samples: Vec<ResolventSample>) -> Self {
        let mut m_hat = None;
        let mut argmax = None;
        for (i, s) in samples.iter().enumerate() {
            if s.status == SampleStatus::Ok && m_hat.is_none_or(|m| s.weighted > m) {
                m_hat = Some(s.weighted);
                argmax = Some(i);
            }
        }
        Self {
            samples,
            m_hat,
            argmax,
        }
    }

    pub fn singular_count(&self) -> usize {
        self.samples.iter().filter(|s| s.status != SampleStatus::Ok).count()
    }

    /// `re_lambda,im_lambda,resolvent_norm,weighted_norm,status` then `M_hat=`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "re_lambda,im_lambda,resolvent_norm,weighted_norm,status")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(s.lambda.re),
                fmt_f64(s.lambda.im),
                fmt_f64(s.norm),
                fmt_f64(s.weighted),
                s.status.label()
            )?;
        }
        match self.m_hat {
            Some(m) => writeln!(out, "M_hat={}", fmt_f64(m)),
            None => writeln!(out, "M_hat=none"),
        }
    }
}

/// Tabulates `(1 + |lambda|) ||(O_h + lambda)^{-1}||` over the sector.
pub fn positivity_scan(
    coeffs: &CoefficientField,
    bc: &NonlocalBc,
    sector: &SectorSpec,
    opts: &ResolventOptions,
) -> Result<PositivityReport> {
    let op = assemble(coeffs, bc, ZERO)?;
    let samples = sector
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let local = ResolventOptions {
                seed: opts.seed.wrapping_add(i as u64),
                ..*opts
            };
            match resolvent_norm_with(&op, lambda, &local) {
                Ok(norm) => ResolventSample {
                    lambda,
                    norm,
                    weighted: (1.0 + lambda.norm()) * norm,
                    status: SampleStatus::Ok,
                },
                Err(e) => ResolventSample {
                    lambda,
                    norm: f64::NAN,
                    weighted: f64::NAN,
                    status: SampleStatus::Singular(e.to_string()),
                },
            }
        })
        .collect();
    Ok(PositivityReport::from_samples(samples))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::grid::GridSpec;
    use crate::linalg::CMatrix;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn dirichlet_model(alpha: f64, n: usize) -> (CoefficientField, DiscreteOperator) {
        let g = Arc::new(GridSpec::line(alpha, 1.0, n).unwrap());
        let coeffs = CoefficientField::constant(g, &[c(-1.0)], CMatrix::zeros(1)).unwrap();
        let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO).unwrap();
        (coeffs, op)
    }

    /// Discrete Dirichlet eigenvalues `(4/h^2) sin^2(j pi / 2n)` in `tau`.
    fn discrete_spectrum(alpha: f64, n: usize) -> Vec<f64> {
        let h = 1.0 / (1.0 - alpha) / n as f64;
        (1..n)
            .map(|j| 4.0 / (h * h) * (j as f64 * PI / (2.0 * n as f64)).sin().powi(2))
            .collect()
    }

    #[test]
    fn identity_operator_has_unit_resolvent() {
        let g = Arc::new(GridSpec::line(0.0, 1.0, 8).unwrap());
        let coeffs = CoefficientField::constant(g, &[ZERO], CMatrix::identity(1)).unwrap();
        let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO).unwrap();
        assert!((resolvent_norm(&op, ZERO, 2.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_model_at_zero_and_real_shift() {
        let (_, op) = dirichlet_model(0.0, 256);
        let r0 = resolvent_norm(&op, ZERO, 2.0).unwrap();
        assert!((r0 * PI * PI - 1.0).abs() < 0.02, "{r0}");
        let r100 = resolvent_norm(&op, c(100.0), 2.0).unwrap();
        assert!((r100 * (PI * PI + 100.0) - 1.0).abs() < 0.02, "{r100}");
    }

    #[test]
    fn matches_distance_to_spectrum() {
        for alpha in [0.0, 0.5] {
            let (_, op) = dirichlet_model(alpha, 32);
            let spec = discrete_spectrum(alpha, 32);
            for lambda in [C64::from_polar(3.0, 2.0), C64::new(-1.0, 5.0), c(50.0)] {
                let dist = spec.iter().map(|mu| (c(*mu) + lambda).norm()).fold(f64::INFINITY, f64::min);
                let r = resolvent_norm(&op, lambda, 2.0).unwrap();
                assert!((r * dist - 1.0).abs() < 1e-8, "alpha {alpha} lambda {lambda}");
            }
        }
    }

    #[test]
    fn power_iteration_agrees_with_dense_route() {
        let (_, op) = dirichlet_model(0.3, 40);
        let lambda = C64::new(2.0, 7.0);
        let dense = resolvent_norm(&op, lambda, 2.0).unwrap();
        let opts = ResolventOptions {
            dense_limit: 0,
            ..Default::default()
        };
        let power = resolvent_norm_with(&op, lambda, &opts).unwrap();
        assert!((dense - power).abs() < 1e-8 * dense);
    }

    #[test]
    fn lp_estimate_is_a_lower_bound_at_two() {
        let (_, op) = dirichlet_model(0.0, 32);
        let exact = resolvent_norm(&op, c(1.0), 2.0).unwrap();
        // the random estimator evaluated at p = 2 cannot exceed the exact norm
        let shifted = op.shifted(c(1.0));
        let lu = SparseLu::factor(shifted.matrix()).unwrap();
        let est = lp_lower_bound(&shifted, &lu, &ResolventOptions::default()).unwrap();
        assert!(est <= exact * (1.0 + 1e-12) && est > 0.0);
        assert!(resolvent_norm(&op, c(1.0), 3.0).unwrap() > 0.0);
    }

    #[test]
    fn eigenvalue_shift_is_reported_singular() {
        let (coeffs, _) = dirichlet_model(0.0, 4);
        let mu = discrete_spectrum(0.0, 4)[0];
        let op = assemble(&coeffs, &NonlocalBc::dirichlet(1), ZERO).unwrap();
        assert!(matches!(resolvent_norm(&op, c(-mu), 2.0), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn self_adjoint_bound_at_right_angle() {
        let (coeffs, _) = dirichlet_model(0.0, 32);
        let lmin = discrete_spectrum(0.0, 32)[0];
        let sector = SectorSpec::default_grid(PI / 2.0).unwrap();
        let rep = positivity_scan(&coeffs, &NonlocalBc::dirichlet(1), &sector, &Default::default()).unwrap();
        assert_eq!(rep.samples.len(), 45);
        let m = rep.m_hat.unwrap();
        assert!(m <= 2f64.sqrt() * (1.0 + 1.0 / lmin), "{m}");
    }

    #[test]
    fn empty_sector_gives_empty_report() {
        let (coeffs, _) = dirichlet_model(0.0, 8);
        let sector = SectorSpec::new(1.0, vec![], vec![], false).unwrap();
        let rep = positivity_scan(&coeffs, &NonlocalBc::dirichlet(1), &sector, &Default::default()).unwrap();
        assert!(rep.samples.is_empty());
        assert!(rep.m_hat.is_none());
    }

    #[test]
    fn near_negative_axis_blows_up() {
        let (coeffs, _) = dirichlet_model(0.0, 16);
        let lmin = discrete_spectrum(0.0, 16)[0];
        let theta = PI - 1e-4;
        let sector = SectorSpec::new(theta, vec![0.5 * lmin, lmin, 2.0 * lmin], vec![theta], false).unwrap();
        let rep = positivity_scan(&coeffs, &NonlocalBc::dirichlet(1), &sector, &Default::default()).unwrap();
        assert_eq!(rep.argmax, Some(1));
        assert!(rep.m_hat.unwrap() > 1e3);
    }

    #[test]
    fn sector_validation() {
        assert!(SectorSpec::new(PI, vec![1.0], vec![0.0], false).is_err());
        assert!(SectorSpec::new(1.0, vec![10.0, 1.0], vec![0.0], false).is_err());
        assert!(SectorSpec::new(1.0, vec![1.0], vec![1.5], false).is_err());
        let s = SectorSpec::new(1.0, vec![1.0, 2.0], vec![0.0], true).unwrap();
        assert_eq!(s.samples().last(), Some(&ZERO));
        assert_eq!(SectorSpec::default_grid(2.0).unwrap().samples().len(), 45);
    }

    #[test]
    fn csv_has_summary_line() {
        let rep = PositivityReport::from_samples(vec![ResolventSample {
            lambda: c(1.0),
            norm: 0.5,
            weighted: 1.0,
            status: SampleStatus::Ok,
        }]);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("re_lambda,im_lambda,resolvent_norm,weighted_norm,status\n"));
        assert!(s.trim_end().ends_with("M_hat=1.0000000000000000e0"));
    }
}
