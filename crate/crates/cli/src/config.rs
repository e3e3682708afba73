//! Run configuration: TOML schema, semantic checks, and conversion into
//! solver inputs.
//!
//! Complex numbers are written as `[re, im]` pairs. Every table rejects
//! unknown keys.

use std::path::Path;
use std::sync::Arc;

use degenlab::bc::{BoundaryFunctional, NonlocalBc};
use degenlab::coefficients::CoefficientField;
use degenlab::grid::{DegenerateAxis, GridFunction, GridSpec};
use degenlab::linalg::{CMatrix, C64};
use degenlab::nonlinear::NonlinearControls;
use degenlab::parabolic::Scheme;
use degenlab::pollutant::{PollutantModel, Reaction, SPECIES};
use degenlab::sector::SectorSpec;
use degenlab::spaces::NormSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub type Cx = [f64; 2];

fn cx(v: Cx) -> C64 {
    C64::new(v[0], v[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Elliptic,
    ResolventScan,
    CoercivityScan,
    Parabolic,
    Nonlinear,
    PollutantDemo,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<Vec<BcAxisConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elliptic: Option<EllipticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<SectorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coercivity: Option<CoercivityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parabolic: Option<ParabolicConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<NonlinearConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pollutant: Option<PollutantConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub alpha: f64,
    pub b: f64,
    pub n_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: Vec<AxisConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    /// `a_k` per axis, shared by all components.
    pub diffusion: Vec<Cx>,
    /// `A` as rows of complex entries; defaults to the 1x1 zero matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<Vec<Cx>>>,
    /// `A_k` per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_order: Option<Vec<Vec<Vec<Cx>>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcPreset {
    Dirichlet,
    Neumann,
    Periodic,
}

/// Boundary functionals along one axis: either a preset or explicit
/// orders and coefficient lists for the two conditions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcAxisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<BcPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_coeffs: Option<[Vec<Cx>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_coeffs: Option<[Vec<Cx>; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingConfig {
    /// The same vector at every node.
    Constant { value: Vec<Cx> },
    /// `amplitude * prod_k sin(mode_k pi tau_k / tau_bk)` in every component.
    Mode { mode: Vec<usize>, amplitude: Cx },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticConfig {
    pub lambda: Cx,
    /// Also run a coercivity scan and write `scan.csv`.
    #[serde(default)]
    pub scan: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorConfig {
    pub phi: f64,
    /// Explicit moduli; otherwise one per decade of `decades`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moduli: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decades: Option<[i32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rays: Option<usize>,
    #[serde(default)]
    pub include_zero: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoercivityConfig {
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolicConfig {
    #[serde(default)]
    pub d: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub steps: usize,
    pub scheme: Scheme,
    /// Write a snapshot every this many steps (the last step is always written).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Scalar model `B = a0 + eps * u`, `F = source`.
    ToyQuadratic { a0: f64, eps: f64, source: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearConfig {
    pub r: f64,
    pub tol: f64,
    pub max_outer: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enforce_ball: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PollutantGridConfig {
    pub n_cells: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub steps: usize,
    pub scheme: Scheme,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PollutantConfig {
    pub species: Vec<String>,
    pub grid: PollutantGridConfig,
    pub alpha: Vec<f64>,
    /// Physical diffusivity per axis and species (positive).
    pub diffusion: Vec<Vec<f64>>,
    /// Advection scaling `b_ki` per axis and species; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advection: Option<Vec<Vec<f64>>>,
    pub wind: Vec<f64>,
    pub coupling_d: Vec<f64>,
    pub reactions: Reaction,
    pub sources: Vec<f64>,
    pub bc: BcPreset,
    pub time: TimeConfig,
    pub nonlinear: NonlinearConfig,
}

/// Parses TOML text, reporting the key path of the first schema error.
pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::schema("<document>", e.to_string()))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::schema(path, e.into_inner().to_string())
    })?;
    cfg.check()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text)
}

pub fn serialize_config(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("configuration is always representable")
}

fn require<'a, T>(v: &'a Option<T>, path: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::schema(path, "missing required section"))
}

fn check_alpha(alpha: f64, path: String) -> Result<(), CliError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CliError::schema(path, "alpha must be >= 0"));
    }
    if alpha >= 1.0 {
        return Err(CliError::schema(path, "alpha must be < 1"));
    }
    Ok(())
}

fn check_square(rows: &[Vec<Cx>], m: usize, path: &str) -> Result<(), CliError> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::schema(path, format!("expected a {m} x {m} matrix")));
    }
    Ok(())
}

impl RunConfig {
    /// Semantic checks beyond the type schema.
    pub fn check(&self) -> Result<(), CliError> {
        if let Some(g) = &self.grid {
            if g.axes.is_empty() || g.axes.len() > 3 {
                return Err(CliError::schema("grid.axes", "between 1 and 3 axes are supported"));
            }
            for (k, ax) in g.axes.iter().enumerate() {
                check_alpha(ax.alpha, format!("grid.axes[{k}].alpha"))?;
                if !(ax.b > 0.0 && ax.b.is_finite()) {
                    return Err(CliError::schema(format!("grid.axes[{k}].b"), "b must be positive"));
                }
                if ax.n_cells < 2 {
                    return Err(CliError::schema(format!("grid.axes[{k}].n_cells"), "n_cells must be at least 2"));
                }
            }
        }
        let dims = self.grid.as_ref().map(|g| g.axes.len());
        let m = self.components();
        if let Some(c) = &self.coefficients {
            if let Some(d) = dims {
                if c.diffusion.len() != d {
                    return Err(CliError::schema("coefficients.diffusion", format!("expected {d} entries, one per axis")));
                }
            }
            if let Some(p) = &c.potential {
                check_square(p, p.len(), "coefficients.potential")?;
                if p.is_empty() {
                    return Err(CliError::schema("coefficients.potential", "matrix must be nonempty"));
                }
            }
            if let Some(fo) = &c.first_order {
                if dims.is_some_and(|d| fo.len() != d) {
                    return Err(CliError::schema("coefficients.first_order", "expected one matrix per axis"));
                }
                for (k, b) in fo.iter().enumerate() {
                    check_square(b, m, &format!("coefficients.first_order[{k}]"))?;
                }
            }
        }
        if let Some(bc) = &self.bc {
            if dims.is_some_and(|d| bc.len() != d) {
                return Err(CliError::schema("bc", "expected one entry per axis"));
            }
            for (k, ax) in bc.iter().enumerate() {
                ax.check(&format!("bc[{k}]"))?;
            }
        }
        if let Some(ForcingConfig::Constant { value }) = &self.forcing {
            if value.len() != m {
                return Err(CliError::schema("forcing.value", format!("expected {m} components")));
            }
        }
        if let Some(ForcingConfig::Mode { mode, .. }) = &self.forcing {
            if dims.is_some_and(|d| mode.len() != d) {
                return Err(CliError::schema("forcing.mode", "expected one mode number per axis"));
            }
        }
        if let Some(s) = &self.sector {
            self.sector_spec_from(s)?;
        }
        if let Some(n) = &self.norm {
            NormSpec::new(n.p, n.p0.unwrap_or(n.p)).map_err(|e| CliError::schema("norm", e.to_string()))?;
        }
        if let Some(p) = &self.parabolic {
            if !(p.t_final > 0.0) || p.steps == 0 || !(p.d >= 0.0) {
                return Err(CliError::schema("parabolic", "T and steps must be positive and d >= 0"));
            }
        }
        if let Some(n) = &self.nonlinear {
            self.nonlinear_controls_from(n, "nonlinear", None)?;
        }
        if let Some(p) = &self.pollutant {
            p.check()?;
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.coefficients
            .as_ref()
            .and_then(|c| c.potential.as_ref())
            .map_or(1, |p| p.len())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn grid_spec(&self) -> Result<Arc<GridSpec>, CliError> {
        let g = require(&self.grid, "grid")?;
        let axes = g
            .axes
            .iter()
            .map(|a| DegenerateAxis::new(a.alpha, a.b, a.n_cells))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::schema("grid.axes", e.to_string()))?;
        Ok(Arc::new(GridSpec::new(axes).map_err(|e| CliError::schema("grid", e.to_string()))?))
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField, CliError> {
        let grid = self.grid_spec()?;
        let c = require(&self.coefficients, "coefficients")?;
        let m = self.components();
        let potential = match &c.potential {
            Some(rows) => matrix(rows),
            None => CMatrix::zeros(1),
        };
        let diffusion: Vec<C64> = c.diffusion.iter().copied().map(cx).collect();
        let mut field = CoefficientField::constant(grid, &diffusion, potential)?;
        if let Some(fo) = &c.first_order {
            field = field.with_constant_first_order(fo.iter().map(|b| matrix(b)).collect())?;
        }
        debug_assert_eq!(field.components(), m);
        Ok(field)
    }

    pub fn boundary_conditions(&self) -> Result<NonlocalBc, CliError> {
        let bc = require(&self.bc, "bc")?;
        let axes = bc
            .iter()
            .enumerate()
            .map(|(k, ax)| ax.functionals(&format!("bc[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        NonlocalBc::new(axes).map_err(|e| CliError::schema("bc", e.to_string()))
    }

    pub fn forcing_function(&self, grid: &Arc<GridSpec>) -> Result<GridFunction, CliError> {
        let m = self.components();
        Ok(match require(&self.forcing, "forcing")? {
            ForcingConfig::Constant { value } => {
                let v: Vec<C64> = value.iter().copied().map(cx).collect();
                GridFunction::constant(grid.clone(), &v)
            }
            ForcingConfig::Mode { mode, amplitude } => {
                let taus: Vec<f64> = grid.axes().iter().map(|a| a.tau_b()).collect();
                let amp = cx(*amplitude);
                GridFunction::from_fn(grid.clone(), m, |_, tau| {
                    let s: f64 = tau
                        .iter()
                        .zip(mode)
                        .zip(&taus)
                        .map(|((t, &k), tb)| (k as f64 * std::f64::consts::PI * t / tb).sin())
                        .product();
                    vec![amp * s; m]
                })
            }
        })
    }

    fn sector_spec_from(&self, s: &SectorConfig) -> Result<SectorSpec, CliError> {
        let rays = s.rays.unwrap_or(9);
        let spec = match &s.moduli {
            Some(moduli) => {
                let base = SectorSpec::log_grid(s.phi, 0, 0, rays).map_err(|e| CliError::schema("sector", e.to_string()))?;
                SectorSpec::new(s.phi, moduli.clone(), base.rays().to_vec(), s.include_zero)
            }
            None => {
                let [lo, hi] = s.decades.unwrap_or([0, 4]);
                SectorSpec::log_grid(s.phi, lo, hi, rays)
                    .and_then(|g| SectorSpec::new(s.phi, g.moduli().to_vec(), g.rays().to_vec(), s.include_zero))
            }
        };
        spec.map_err(|e| CliError::schema("sector", e.to_string()))
    }

    pub fn sector_spec(&self) -> Result<SectorSpec, CliError> {
        self.sector_spec_from(require(&self.sector, "sector")?)
    }

    pub fn norm_spec(&self) -> NormSpec {
        self.norm
            .as_ref()
            .map_or_else(NormSpec::l2, |n| NormSpec::new(n.p, n.p0.unwrap_or(n.p)).expect("checked at parse time"))
    }

    fn nonlinear_controls_from(
        &self,
        n: &NonlinearConfig,
        path: &str,
        time: Option<&TimeConfig>,
    ) -> Result<NonlinearControls, CliError> {
        let defaults = NonlinearControls::default();
        let controls = NonlinearControls {
            r: n.r,
            tol: n.tol,
            max_outer: n.max_outer,
            t_final: time.map(|t| t.t_final).or(n.t_final).unwrap_or(defaults.t_final),
            n_steps: time.map(|t| t.steps).or(n.steps).unwrap_or(defaults.n_steps),
            scheme: time.map(|t| t.scheme).or(n.scheme).unwrap_or(defaults.scheme),
            d: n.d.unwrap_or(defaults.d),
            enforce_ball: n.enforce_ball.unwrap_or(defaults.enforce_ball),
            norm: self.norm_spec(),
        };
        controls.validate().map_err(|e| CliError::schema(path, e.to_string()))?;
        Ok(controls)
    }

    pub fn nonlinear_controls(&self) -> Result<NonlinearControls, CliError> {
        self.nonlinear_controls_from(require(&self.nonlinear, "nonlinear")?, "nonlinear", None)
    }
}

fn matrix(rows: &[Vec<Cx>]) -> CMatrix {
    CMatrix::from_fn(rows.len(), |i, j| cx(rows[i][j]))
}

impl BcAxisConfig {
    fn check(&self, path: &str) -> Result<(), CliError> {
        self.functionals(path).map(|_| ())
    }

    fn functionals(&self, path: &str) -> Result<[BoundaryFunctional; 2], CliError> {
        let explicit = (&self.m, &self.alpha_coeffs, &self.beta_coeffs);
        match (self.preset, explicit) {
            (Some(p), (None, None, None)) => {
                let bc = match p {
                    BcPreset::Dirichlet => NonlocalBc::dirichlet(1),
                    BcPreset::Neumann => NonlocalBc::neumann(1),
                    BcPreset::Periodic => NonlocalBc::periodic(1),
                };
                Ok(bc.axes()[0].clone())
            }
            (None, (Some(m), Some(a), Some(b))) => {
                let make = |j: usize| {
                    BoundaryFunctional::new(
                        m[j],
                        a[j].iter().copied().map(cx).collect(),
                        b[j].iter().copied().map(cx).collect(),
                    )
                    .map_err(|e| CliError::schema(format!("{path}.alpha_coeffs[{j}]"), e.to_string()))
                };
                let pair = [make(0)?, make(1)?];
                NonlocalBc::new(vec![pair.clone()]).map_err(|e| CliError::schema(path, e.to_string()))?;
                Ok(pair)
            }
            _ => Err(CliError::schema(
                path,
                "give either `preset` or all of `m`, `alpha_coeffs`, `beta_coeffs`",
            )),
        }
    }
}

impl PollutantConfig {
    fn check(&self) -> Result<(), CliError> {
        let dims = self.grid.n_cells.len();
        if self.species.len() != SPECIES {
            return Err(CliError::schema("pollutant.species", format!("exactly {SPECIES} species are supported")));
        }
        if dims == 0 || dims > 3 {
            return Err(CliError::schema("pollutant.grid.n_cells", "between 1 and 3 axes are supported"));
        }
        if self.grid.n_cells.iter().any(|&n| !(2..=32).contains(&n)) {
            return Err(CliError::schema("pollutant.grid.n_cells", "n_cells must lie in [2, 32]"));
        }
        if self.grid.b.as_ref().is_some_and(|b| b.len() != dims) {
            return Err(CliError::schema("pollutant.grid.b", "expected one length per axis"));
        }
        if self.alpha.len() != dims {
            return Err(CliError::schema("pollutant.alpha", "expected one exponent per axis"));
        }
        for (k, &a) in self.alpha.iter().enumerate() {
            check_alpha(a, format!("pollutant.alpha[{k}]"))?;
        }
        let per_axis_species = |v: &Vec<Vec<f64>>| v.len() == dims && v.iter().all(|r| r.len() == SPECIES);
        if !per_axis_species(&self.diffusion) {
            return Err(CliError::schema("pollutant.diffusion", "expected one row per axis with one value per species"));
        }
        if self.diffusion.iter().flatten().any(|a| !(*a > 0.0)) {
            return Err(CliError::schema("pollutant.diffusion", "diffusivities must be positive"));
        }
        if self.advection.as_ref().is_some_and(|a| !per_axis_species(a)) {
            return Err(CliError::schema("pollutant.advection", "expected one row per axis with one value per species"));
        }
        if self.wind.len() != dims {
            return Err(CliError::schema("pollutant.wind", "expected one component per axis"));
        }
        if self.coupling_d.len() != SPECIES {
            return Err(CliError::schema("pollutant.coupling_d", "expected one value per species"));
        }
        if self.sources.len() != SPECIES {
            return Err(CliError::schema("pollutant.sources", "expected one value per species"));
        }
        if !(self.time.t_final > 0.0) || self.time.steps == 0 {
            return Err(CliError::schema("pollutant.time", "T and steps must be positive"));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<Arc<GridSpec>, CliError> {
        let b = self.grid.b.clone().unwrap_or_else(|| vec![1.0; self.grid.n_cells.len()]);
        let axes = self
            .grid
            .n_cells
            .iter()
            .zip(&b)
            .zip(&self.alpha)
            .map(|((&n, &b), &a)| DegenerateAxis::new(a, b, n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::schema("pollutant.grid", e.to_string()))?;
        Ok(Arc::new(GridSpec::new(axes).map_err(|e| CliError::schema("pollutant.grid", e.to_string()))?))
    }

    pub fn model(&self) -> Result<PollutantModel, CliError> {
        let grid = self.grid_spec()?;
        let dims = grid.dims();
        let row = |v: &Vec<f64>| [v[0], v[1], v[2]];
        let diffusion: Vec<[f64; SPECIES]> = self.diffusion.iter().map(row).collect();
        let advection: Vec<[f64; SPECIES]> = match &self.advection {
            Some(a) => a.iter().map(row).collect(),
            None => vec![[1.0; SPECIES]; dims],
        };
        Ok(PollutantModel::constant(
            grid,
            &diffusion,
            &advection,
            &self.wind,
            row(&self.coupling_d),
            self.reactions,
            row(&self.sources),
        )?)
    }

    pub fn boundary_conditions(&self) -> NonlocalBc {
        let dims = self.grid.n_cells.len();
        match self.bc {
            BcPreset::Dirichlet => NonlocalBc::dirichlet(dims),
            BcPreset::Neumann => NonlocalBc::neumann(dims),
            BcPreset::Periodic => NonlocalBc::periodic(dims),
        }
    }

    pub fn controls(&self, cfg: &RunConfig) -> Result<NonlinearControls, CliError> {
        cfg.nonlinear_controls_from(&self.nonlinear, "pollutant.nonlinear", Some(&self.time))
    }
}
