//! Run configuration: TOML text with `[problem]`, `[solver]` and `[output]` sections.

use nnflow::constitutive::{BulkLaw, PressureLaw, ShearLaw, ViscosityModel};
use nnflow::fields::{Field, Grid, Rank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub d: usize,
    pub n: usize,
    pub t_final: f64,
    pub dt: f64,
    /// time exponent of the gauge
    pub p: f64,
    /// space exponent of the gauge
    pub q: f64,
    /// "rest", "trig" or "random"
    pub initial: String,
    pub eps: f64,
    pub seed: u64,
    pub model: ModelConfig,
    pub pressure: PressureConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            d: 2,
            n: 32,
            t_final: 0.1,
            dt: 0.01,
            p: 2.0,
            q: 4.0,
            initial: "trig".into(),
            eps: 0.1,
            seed: 7,
            model: ModelConfig::default(),
            pressure: PressureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// "constant", "power-law", "reciprocal" or "polynomial"
    pub shear: String,
    pub mu0: f64,
    /// power-law exponent
    pub exponent: f64,
    pub shear_coeffs: Vec<f64>,
    /// "constant" or "polynomial"
    pub bulk: String,
    pub lambda0: f64,
    pub bulk_coeffs: Vec<f64>,
    /// admissible ranges of |𝔻ᴰu|² and div u
    pub s_max: f64,
    pub r_max: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            shear: "constant".into(),
            mu0: 0.5,
            exponent: 2.0,
            shear_coeffs: Vec::new(),
            bulk: "constant".into(),
            lambda0: 0.25,
            bulk_coeffs: Vec::new(),
            s_max: 1.0,
            r_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PressureConfig {
    /// "isothermal" or "polytropic"
    pub law: String,
    pub a: f64,
    pub gamma: f64,
}

impl Default for PressureConfig {
    fn default() -> Self {
        PressureConfig {
            law: "isothermal".into(),
            a: 1.0,
            gamma: 1.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub nu: f64,
    pub beta: f64,
    pub sigma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub n_pairs: usize,
    pub t_list: Vec<f64>,
    /// RK4 steps for `oracle`; 0 picks 4× the explicit stability limit
    pub rk4_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nu: 1.0,
            beta: PI / 4.0,
            sigma: 0.5,
            tol: 1e-8,
            max_iter: 30,
            n_pairs: 4,
            t_list: vec![0.1, 0.05, 0.025, 0.0125],
            rk4_steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// write snapshots every k-th time sample; 0 writes none
    pub snapshot_every: usize,
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            snapshot_every: 1,
            csv: true,
        }
    }
}

/// Parses and validates; missing keys take their defaults, unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if !(p.d == 2 || p.d == 3) {
            return Err(invalid("problem.d", "must be 2 or 3"));
        }
        if p.n < 4 || p.n % 2 != 0 {
            return Err(invalid("problem.n", "must be even and at least 4"));
        }
        if !(p.t_final > 0.0) {
            return Err(invalid("problem.t_final", "must be positive"));
        }
        if !(p.dt > 0.0) || p.dt > p.t_final {
            return Err(invalid("problem.dt", "must lie in (0, t_final]"));
        }
        let steps = p.t_final / p.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(invalid("problem.dt", "must divide t_final"));
        }
        if !(p.p > 1.0) {
            return Err(invalid("problem.p", "must exceed 1"));
        }
        if !(p.q > p.d as f64) {
            return Err(invalid("problem.q", "must exceed d"));
        }
        if !["rest", "trig", "random"].contains(&p.initial.as_str()) {
            return Err(invalid("problem.initial", "expected rest, trig or random"));
        }
        self.model()?;
        self.pressure()?;
        let s = &self.solver;
        if !(s.beta > 0.0 && s.beta < PI / 2.0) {
            return Err(invalid("solver.beta", "must lie in (0, π/2)"));
        }
        if !(s.nu >= 0.0) {
            return Err(invalid("solver.nu", "must be nonnegative"));
        }
        if !(s.sigma > 0.0 && s.sigma < 1.0) {
            return Err(invalid("solver.sigma", "must lie in (0, 1)"));
        }
        if !(s.tol > 0.0) {
            return Err(invalid("solver.tol", "must be positive"));
        }
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be positive"));
        }
        if s.n_pairs < 2 {
            return Err(invalid("solver.n_pairs", "must be at least 2"));
        }
        if s.t_list.is_empty() || s.t_list.iter().any(|t| !(*t > 0.0)) {
            return Err(invalid("solver.t_list", "must be a nonempty list of positive times"));
        }
        Ok(())
    }

    pub fn n_t(&self) -> usize {
        (self.problem.t_final / self.problem.dt).round() as usize + 1
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.problem.d, self.problem.n).expect("validated grid")
    }

    pub fn model(&self) -> Result<ViscosityModel, ConfigError> {
        let m = &self.problem.model;
        let shear = match m.shear.as_str() {
            "constant" => ShearLaw::Constant { mu0: m.mu0 },
            "power-law" => ShearLaw::PowerLaw { mu0: m.mu0, p: m.exponent },
            "reciprocal" => ShearLaw::Reciprocal { mu0: m.mu0 },
            "polynomial" if !m.shear_coeffs.is_empty() => ShearLaw::Polynomial {
                coeffs: m.shear_coeffs.clone(),
            },
            "polynomial" => return Err(invalid("problem.model.shear_coeffs", "empty coefficient list")),
            _ => return Err(invalid("problem.model.shear", "expected constant, power-law, reciprocal or polynomial")),
        };
        let bulk = match m.bulk.as_str() {
            "constant" => BulkLaw::Constant { lambda0: m.lambda0 },
            "polynomial" if !m.bulk_coeffs.is_empty() => BulkLaw::Polynomial {
                coeffs: m.bulk_coeffs.clone(),
            },
            "polynomial" => return Err(invalid("problem.model.bulk_coeffs", "empty coefficient list")),
            _ => return Err(invalid("problem.model.bulk", "expected constant or polynomial")),
        };
        if !(m.s_max > 0.0) || !(m.r_max > 0.0) {
            return Err(invalid("problem.model.s_max", "ranges must be positive"));
        }
        Ok(ViscosityModel::new(shear, bulk).with_ranges(m.s_max, m.r_max))
    }

    pub fn pressure(&self) -> Result<PressureLaw, ConfigError> {
        let pc = &self.problem.pressure;
        if !(pc.a > 0.0) {
            return Err(invalid("problem.pressure.a", "must be positive"));
        }
        match pc.law.as_str() {
            "isothermal" => Ok(PressureLaw::Isothermal { a: pc.a }),
            "polytropic" if pc.gamma >= 1.0 => Ok(PressureLaw::Polytropic { a: pc.a, gamma: pc.gamma }),
            "polytropic" => Err(invalid("problem.pressure.gamma", "must be at least 1")),
            _ => Err(invalid("problem.pressure.law", "expected isothermal or polytropic")),
        }
    }

    /// (ρ₀, u₀) from the named recipe.
    pub fn initial_data(&self) -> (Field, Field) {
        let g = self.grid();
        let p = &self.problem;
        match p.initial.as_str() {
            "rest" => (Field::constant(&g, Rank::Scalar, &[1.0]), Field::zeros(&g, Rank::Vector)),
            "trig" => nnflow::corpus::initial_data(&g, p.eps),
            _ => random_data(&g, p.eps, p.seed),
        }
    }
}

/// Band-limited (|k_a| ≤ 2) random data: ρ₀ = 1 + (ε/2)R₀, u₀ = εR.
fn random_data(g: &Grid, eps: f64, seed: u64) -> (Field, Field) {
    let d = g.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one =|rng: &mut ChaCha8Rng| {
        let mut modes = Vec::new();
        let k2max = if d == 3 { 2 } else { 0 };
        for k0 in -2i64..=2 {
            for k1 in -2i64..=2 {
                for k2 in -k2max..=k2max {
                    if (k0, k1, k2) != (0, 0, 0) {
                        let a: f64 = rng.random_range(-1.0..1.0);
                        let ph: f64 = rng.random_range(0.0..2.0 * PI);
                        modes.push(([k0, k1, k2], a, ph));
                    }
                }
            }
        }
        let f = Field::scalar_from_fn(g, |x| {
            modes
                .iter()
                .map(|(k, a, ph)| a * ((0..d).map(|i| PI * k[i] as f64 * x[i]).sum::<f64>() + ph).cos())
                .sum()
        });
        let m = f.max_abs();
        f.scale(1.0 / m)
    };
    let r = one(&mut rng);
    let comps: Vec<Vec<f64>> = (0..d).map(|_| one(&mut rng).scale(eps).into_components().remove(0)).collect();
    (
        r.map(|x| 1.0 + 0.5 * eps * x),
        Field::from_components(g, Rank::Vector, comps).expect("vector components"),
    )
}
