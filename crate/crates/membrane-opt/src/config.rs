//! Run configuration: a single JSON file describing the domain, the load,
//! the material stock, solver and optimizer knobs, and the artifacts to
//! emit. See the repository README for the schema with examples.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use membrane_core::{
    build_domain, dumbbell_spec_with_measure, Domain, DomainSpec, Generator, OptimizeOptions,
    ScalarField, Shape, SolverChoice,
};

use crate::io::read_field_csv;
use crate::run::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub force: ForceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart: Option<MultistartSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: ShapeConfig,
    pub resolution: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Rectangle {
        width: f64,
        height: f64,
    },
    Disk {
        radius: f64,
    },
    Dumbbell {
        lobe_radius: f64,
        neck_length: f64,
        neck_halfwidth: f64,
        /// When set, rescale all three lengths so the discretized measure
        /// hits this value.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale_to_measure: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceConfig {
    /// f ≡ value.
    Constant { value: f64 },
    /// f(r) = Σ coefficients[i]·rⁱ with r measured from the shape center.
    RadialPolynomial { coefficients: Vec<f64> },
    /// f = amplitude·sin(mπx/W)·sin(nπy/H) on a rectangle.
    Eigenfunction {
        m: u32,
        n: u32,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Field read from an `x,y,value` CSV in domain order.
    Csv { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// k = round(gamma/h²) cells of alpha, the rest beta.
    TwoMaterial {
        alpha: f64,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        /// Volume as a fraction of |D|; exactly one of the two must be set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma_fraction: Option<f64>,
    },
    /// Several materials with cell counts proportional to `fractions`
    /// (summing to 1), remainders distributed by largest fraction part.
    Multi { values: Vec<f64>, fractions: Vec<f64> },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Relative residual for conjugate gradients.
    pub tol: f64,
    /// Use the dense direct path (domains of at most 400 cells).
    pub dense: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: 1e-10,
            dense: false,
        }
    }
}

impl SolverSection {
    pub fn choice(&self) -> SolverChoice {
        if self.dense {
            SolverChoice::Dense
        } else {
            SolverChoice::Cg { tol: self.tol }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub energy_tol: f64,
    pub max_outer: usize,
    pub seed: Option<u64>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            energy_tol: 1e-10,
            max_outer: 500,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Any subset of "csv", "pgm", "json".
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Pgm,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Strong material for `sweep-gamma`.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gammas: Option<Vec<f64>>,
    pub gamma_fractions: Option<Vec<f64>>,
    /// Material list for `sweep-alpha`.
    pub alphas: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub gamma_fraction: Option<f64>,
    pub stability: Option<StabilitySection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    /// Reference α approached along the gap sequence.
    pub alpha: f64,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Subset size; defaults to the generator's volume target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultistartSection {
    pub runs: usize,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parse and statically validate a config file. File-backed inputs must
    /// exist at parse time.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("invalid config {}: {e}", path.display())))?;
        config.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(config)
    }

    fn validate(&self, base: &Path) -> Result<(), CliError> {
        if self.domain.resolution == 0 {
            return Err(config_err("domain.resolution must be at least 1"));
        }
        if self.output.formats.is_empty() {
            return Err(config_err("output.formats must not be empty"));
        }
        if let ForceConfig::Csv { path } = &self.force {
            let full = resolve(base, path);
            if !full.exists() {
                return Err(config_err(format!("force csv {} not found", full.display())));
            }
        }
        if let Some(GeneratorConfig::Csv { path }) = &self.generator {
            let full = resolve(base, path);
            if !full.exists() {
                return Err(config_err(format!(
                    "generator csv {} not found",
                    full.display()
                )));
            }
        }
        if let Some(GeneratorConfig::Multi { values, fractions }) = &self.generator {
            if values.len() != fractions.len() || values.is_empty() {
                return Err(config_err(
                    "generator.values and generator.fractions must have equal nonzero length",
                ));
            }
            let sum: f64 = fractions.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(config_err(format!(
                    "generator.fractions must sum to 1 (got {sum})"
                )));
            }
            if fractions.iter().any(|&f| f < 0.0) {
                return Err(config_err("generator.fractions must be non-negative"));
            }
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(config_err("solver.tol must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn build_domain_spec(&self) -> Result<DomainSpec, CliError> {
        let res = self.domain.resolution;
        match self.domain.shape {
            ShapeConfig::Rectangle { width, height } => {
                Ok(DomainSpec::new(Shape::Rectangle { width, height }, res))
            }
            ShapeConfig::Disk { radius } => Ok(DomainSpec::new(Shape::Disk { radius }, res)),
            ShapeConfig::Dumbbell {
                lobe_radius,
                neck_length,
                neck_halfwidth,
                scale_to_measure,
            } => match scale_to_measure {
                Some(target) => dumbbell_spec_with_measure(
                    lobe_radius,
                    neck_length,
                    neck_halfwidth,
                    res,
                    target,
                )
                .map_err(|e| config_err(format!("dumbbell scaling failed: {e}"))),
                None => Ok(DomainSpec::new(
                    Shape::Dumbbell {
                        lobe_radius,
                        neck_length,
                        neck_halfwidth,
                    },
                    res,
                )),
            },
        }
    }

    pub fn build_domain(&self) -> Result<Arc<Domain>, CliError> {
        let spec = self.build_domain_spec()?;
        build_domain(&spec)
            .map(Arc::new)
            .map_err(|e| config_err(format!("domain construction failed: {e}")))
    }

    pub fn build_force(&self, domain: &Arc<Domain>, base: &Path) -> Result<ScalarField, CliError> {
        let field = match &self.force {
            ForceConfig::Constant { value } => ScalarField::constant(Arc::clone(domain), *value)
                .map_err(|e| config_err(format!("force: {e}")))?,
            ForceConfig::RadialPolynomial { coefficients } => {
                let (cx, cy) = shape_center(&domain.spec().shape);
                ScalarField::from_fn(domain, |x, y| {
                    let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                    coefficients.iter().rev().fold(0.0, |acc, &c| acc * r + c)
                })
                .map_err(|e| config_err(format!("force: {e}")))?
            }
            ForceConfig::Eigenfunction { m, n, amplitude } => {
                let (w, h) = match domain.spec().shape {
                    Shape::Rectangle { width, height } => (width, height),
                    _ => {
                        return Err(config_err(
                            "eigenfunction forces require a rectangle domain",
                        ))
                    }
                };
                let (m, n, a) = (*m as f64, *n as f64, *amplitude);
                ScalarField::from_fn(domain, |x, y| {
                    a * (m * PI * x / w).sin() * (n * PI * y / h).sin()
                })
                .map_err(|e| config_err(format!("force: {e}")))?
            }
            ForceConfig::Csv { path } => read_field_csv(&resolve(base, path), domain)
                .map_err(|e| config_err(format!("force csv: {e}")))?,
        };
        if field.min_value() < 0.0 {
            return Err(config_err("force must be non-negative on the grid"));
        }
        if field.values().iter().all(|&v| v == 0.0) {
            return Err(config_err("force must not be identically zero"));
        }
        Ok(field)
    }

    /// Resolve the two-material parameters (alpha, beta, gamma in absolute
    /// area) when the generator is two-material.
    pub fn two_material(&self, domain: &Domain) -> Result<(f64, f64, f64), CliError> {
        match &self.generator {
            Some(GeneratorConfig::TwoMaterial {
                alpha,
                beta,
                gamma,
                gamma_fraction,
            }) => {
                let gamma = resolve_volume(*gamma, *gamma_fraction, domain, "generator")?;
                Ok((*alpha, *beta, gamma))
            }
            _ => Err(config_err("this subcommand needs a two_material generator")),
        }
    }

    pub fn build_generator(
        &self,
        domain: &Arc<Domain>,
        base: &Path,
    ) -> Result<Generator, CliError> {
        let gen_config = self
            .generator
            .as_ref()
            .ok_or_else(|| config_err("this subcommand needs a generator section"))?;
        match gen_config {
            GeneratorConfig::TwoMaterial {
                alpha,
                beta,
                gamma,
                gamma_fraction,
            } => {
                let gamma = resolve_volume(*gamma, *gamma_fraction, domain, "generator")?;
                let k = (gamma / domain.cell_measure()).round() as usize;
                Generator::two_material(Arc::clone(domain), *alpha, *beta, k)
                    .map_err(|e| config_err(format!("generator: {e}")))
            }
            GeneratorConfig::Multi { values, fractions } => {
                let counts = apportion(fractions, domain.num_cells());
                let mut stock = Vec::with_capacity(domain.num_cells());
                for (v, c) in values.iter().zip(&counts) {
                    stock.extend(std::iter::repeat_n(*v, *c));
                }
                Generator::from_values(Arc::clone(domain), stock)
                    .map_err(|e| config_err(format!("generator: {e}")))
            }
            GeneratorConfig::Csv { path } => {
                let field = read_field_csv(&resolve(base, path), domain)
                    .map_err(|e| config_err(format!("generator csv: {e}")))?;
                Generator::from_field(&field).map_err(|e| config_err(format!("generator: {e}")))
            }
        }
    }

    /// The arrangement used by `solve`: a CSV generator verbatim, other
    /// generators as their values laid out in cell order (descending), or
    /// g ≡ 0 when no generator is configured.
    pub fn build_plain_density(
        &self,
        domain: &Arc<Domain>,
        base: &Path,
    ) -> Result<ScalarField, CliError> {
        match &self.generator {
            None => ScalarField::constant(Arc::clone(domain), 0.0)
                .map_err(|e| config_err(format!("density: {e}"))),
            Some(GeneratorConfig::Csv { path }) => read_field_csv(&resolve(base, path), domain)
                .map_err(|e| config_err(format!("generator csv: {e}"))),
            Some(_) => {
                let gen = self.build_generator(domain, base)?;
                ScalarField::new(Arc::clone(domain), gen.sorted_desc().to_vec())
                    .map_err(|e| config_err(format!("density: {e}")))
            }
        }
    }

    pub fn optimize_options(&self, seed_override: Option<u64>) -> OptimizeOptions {
        OptimizeOptions {
            energy_tol: self.optimizer.energy_tol,
            max_outer: self.optimizer.max_outer,
            solver: self.solver.choice(),
            seed: seed_override.or(self.optimizer.seed),
        }
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.output.formats.contains(&format)
    }
}

pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

pub fn resolve_volume(
    gamma: Option<f64>,
    gamma_fraction: Option<f64>,
    domain: &Domain,
    what: &str,
) -> Result<f64, CliError> {
    match (gamma, gamma_fraction) {
        (Some(g), None) => Ok(g),
        (None, Some(fr)) => Ok(fr * domain.measure()),
        _ => Err(config_err(format!(
            "{what}: set exactly one of gamma / gamma_fraction"
        ))),
    }
}

fn shape_center(shape: &Shape) -> (f64, f64) {
    match *shape {
        Shape::Rectangle { width, height } => (0.5 * width, 0.5 * height),
        Shape::Disk { .. } | Shape::Dumbbell { .. } => (0.0, 0.0),
    }
}

/// Cell counts proportional to `fractions`, summing exactly to `total`;
/// remainders go to the largest fractional parts, ties to lower indices.
fn apportion(fractions: &[f64], total: usize) -> Vec<usize> {
    let counts: Vec<usize> = fractions
        .iter()
        .map(|f| (f * total as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = fractions[a] * total as f64 - counts[a] as f64;
        let rb = fractions[b] * total as f64 - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut counts = counts;
    for i in 0..total.saturating_sub(assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}
