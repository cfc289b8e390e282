//! Experiment configuration: a key = value file merged with command-line
//! overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::Deserialize;

use ltomo::ddtf::{DdtfConfig, DEFAULT_ALTERNATIONS, DEFAULT_MAD_FACTOR, DEFAULT_PATCH_SIZE};
use ltomo::phantom;
use ltomo::solver::{DdtfSchedule, SolverParams, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use ltomo::{FbpFilter, FilterBank};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fbp,
    Sparsity,
    Wavelet,
    Ddtf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fbp, Method::Sparsity, Method::Wavelet, Method::Ddtf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::Sparsity => "sparsity",
            Method::Wavelet => "wavelet",
            Method::Ddtf => "ddtf",
        }
    }

    pub fn is_joint(self) -> bool {
        matches!(self, Method::Wavelet | Method::Ddtf)
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown method '{s}' (expected fbp, sparsity, wavelet or ddtf)")))
    }
}

/// Keys accepted in a config file. Every key is optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub phantom: Option<String>,
    pub n: Option<usize>,
    pub n_projections: Option<usize>,
    pub mu: Option<f64>,
    pub noise_frac: Option<f64>,
    pub seed: Option<u64>,
    pub method: Option<String>,
    pub methods: Option<Vec<String>>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub sparsity_weight: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub a: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub discrepancy: Option<bool>,
    pub fbp_filter: Option<String>,
    pub ddtf_patch: Option<usize>,
    pub ddtf_lambda: Option<f64>,
    pub ddtf_mad_factor: Option<f64>,
    pub ddtf_alternations: Option<usize>,
    pub ddtf_period: Option<usize>,
    pub regions: Option<bool>,
    pub output: Option<PathBuf>,
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Config file with `key = value` lines.
    #[arg(long, short = 'c', global = true)]
    pub config: Option<PathBuf>,
    /// Output (and input) directory.
    #[arg(long, short = 'o', global = true)]
    pub out: Option<PathBuf>,
    /// Builtin phantom name or path to an ellipse table.
    #[arg(long, global = true)]
    pub phantom: Option<String>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub n_projections: Option<usize>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub noise_frac: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// fbp, sparsity, wavelet or ddtf.
    #[arg(long, short = 'm', global = true)]
    pub method: Option<String>,
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    #[arg(long, global = true)]
    pub sparsity_weight: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub ddtf_period: Option<usize>,
    /// Report interior and exterior scores separately.
    #[arg(long, global = true)]
    pub regions: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub phantom: String,
    pub n: usize,
    pub n_projections: usize,
    pub mu: f64,
    pub noise_frac: f64,
    pub seed: u64,
    pub method: Method,
    /// Methods run by `pipeline`, in order.
    pub methods: Vec<Method>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Shrinkage weight of the sparsity baseline.
    pub sparsity_weight: f64,
    pub beta: f64,
    pub kappa: Option<f64>,
    pub a: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub discrepancy: bool,
    pub fbp_filter: FbpFilter,
    pub ddtf_patch: usize,
    pub ddtf_lambda: Option<f64>,
    pub ddtf_mad_factor: f64,
    pub ddtf_alternations: usize,
    pub ddtf_period: usize,
    pub regions: bool,
    pub output: PathBuf,
}

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_SPARSITY_WEIGHT: f64 = 0.01;
pub const DEFAULT_DDTF_PERIOD: usize = 50;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            phantom: phantom::SHEPP_LOGAN_MOD.to_owned(),
            n: 256,
            n_projections: 180,
            mu: 0.5,
            noise_frac: 0.001,
            seed: 0,
            method: Method::Wavelet,
            methods: Method::ALL.to_vec(),
            lambda1: 100.0,
            lambda2: 0.01,
            sparsity_weight: DEFAULT_SPARSITY_WEIGHT,
            beta: DEFAULT_BETA,
            kappa: None,
            a: 1.0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            discrepancy: false,
            fbp_filter: FbpFilter::default(),
            ddtf_patch: DEFAULT_PATCH_SIZE,
            ddtf_lambda: None,
            ddtf_mad_factor: DEFAULT_MAD_FACTOR,
            ddtf_alternations: DEFAULT_ALTERNATIONS,
            ddtf_period: DEFAULT_DDTF_PERIOD,
            regions: false,
            output: PathBuf::from("out"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| usage(format!("bad config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

impl ExperimentConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(file: &FileConfig, o: &Overrides) -> Result<Self, CliError> {
        let mut c = ExperimentConfig::default();
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = o.$field.clone().or(file.$field.clone()) { c.$field = v; })*
            };
        }
        take!(phantom, n, n_projections, mu, noise_frac, seed, lambda1, lambda2, sparsity_weight, beta, max_iters, tol, ddtf_period);
        c.kappa = o.kappa.or(file.kappa);
        c.ddtf_lambda = file.ddtf_lambda;
        if let Some(v) = file.a {
            c.a = v;
        }
        if let Some(v) = file.discrepancy {
            c.discrepancy = v;
        }
        if let Some(v) = file.ddtf_patch {
            c.ddtf_patch = v;
        }
        if let Some(v) = file.ddtf_mad_factor {
            c.ddtf_mad_factor = v;
        }
        if let Some(v) = file.ddtf_alternations {
            c.ddtf_alternations = v;
        }
        if let Some(m) = o.method.as_deref().or(file.method.as_deref()) {
            c.method = m.parse()?;
        }
        if let Some(ms) = &file.methods {
            c.methods = ms.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
        }
        if let Some(f) = &file.fbp_filter {
            c.fbp_filter = f.parse().map_err(|e: ltomo::Error| usage(e.to_string()))?;
        }
        c.regions = o.regions || file.regions.unwrap_or(false);
        if let Some(out) = o.out.clone().or(file.output.clone()) {
            c.output = out;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(o: &Overrides) -> Result<Self, CliError> {
        let file = match &o.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::resolve(&file, o)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n < 16 || self.n > 4096 {
            return Err(usage(format!("n must lie in [16, 4096], got {}", self.n)));
        }
        if self.n_projections == 0 || self.n_projections > 10_000 {
            return Err(usage(format!("n_projections must lie in [1, 10000], got {}", self.n_projections)));
        }
        if !(self.mu > 0.0) {
            return Err(usage(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.noise_frac >= 0.0 && self.noise_frac < 1.0) {
            return Err(usage(format!("noise_frac must lie in [0, 1), got {}", self.noise_frac)));
        }
        if self.methods.is_empty() {
            return Err(usage("methods must not be empty"));
        }
        if !(self.sparsity_weight >= 0.0) {
            return Err(usage("sparsity_weight must be non-negative"));
        }
        if self.ddtf_patch < 2 || self.ddtf_patch > self.n {
            return Err(usage(format!("ddtf_patch must lie in [2, n], got {}", self.ddtf_patch)));
        }
        if self.ddtf_period == 0 || self.ddtf_alternations == 0 {
            return Err(usage("ddtf_period and ddtf_alternations must be positive"));
        }
        if self.ddtf_patch > self.n_projections {
            return Err(usage("ddtf_patch exceeds the number of projections"));
        }
        if !self.phantom_is_valid() {
            return Err(usage(format!("unknown phantom '{}' (not a builtin and no such file)", self.phantom)));
        }
        self.solver_params(None).validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }

    fn phantom_is_valid(&self) -> bool {
        phantom::builtin(&self.phantom).is_some() || Path::new(&self.phantom).is_file()
    }

    /// Solver parameters for the configured method. The sparsity baseline
    /// reads its shrinkage weight from `lambda2`.
    pub fn solver_params(&self, noise_sigma: Option<f64>) -> SolverParams {
        let ddtf = (self.method == Method::Ddtf).then(|| {
            let side = |base: FilterBank| DdtfConfig {
                patch_size: self.ddtf_patch,
                lambda: self.ddtf_lambda,
                mad_factor: self.ddtf_mad_factor,
                n_alternations: self.ddtf_alternations,
                init: base,
            };
            DdtfSchedule {
                sinogram: side(FilterBank::cubic_bspline()),
                image: side(FilterBank::linear_bspline()),
                period: self.ddtf_period,
            }
        });
        SolverParams {
            lambda1: self.lambda1,
            lambda2: if self.method == Method::Sparsity { self.sparsity_weight } else { self.lambda2 },
            kappa: self.kappa,
            beta: self.beta,
            a: self.a,
            max_iters: self.max_iters,
            tol: self.tol,
            noise_sigma: if self.discrepancy { noise_sigma } else { None },
            ddtf,
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self { method, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn file_then_flags() {
        let file = FileConfig::parse("n = 64\nmethod = \"ddtf\"\nbeta = 2.0\n").unwrap();
        let o = Overrides { n: Some(32), ..Overrides::default() };
        let c = ExperimentConfig::resolve(&file, &o).unwrap();
        assert_eq!(c.n, 32);
        assert_eq!(c.method, Method::Ddtf);
        assert_eq!(c.beta, 2.0);
        assert!(c.solver_params(None).ddtf.is_some());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(FileConfig::parse("bogus = 1").is_err());
        let o = Overrides { method: Some("art".into()), ..Overrides::default() };
        assert!(ExperimentConfig::resolve(&FileConfig::default(), &o).is_err());
        let o = Overrides { phantom: Some("no-such-phantom".into()), ..Overrides::default() };
        assert!(ExperimentConfig::resolve(&FileConfig::default(), &o).is_err());
        let o = Overrides { n: Some(8), ..Overrides::default() };
        assert!(ExperimentConfig::resolve(&FileConfig::default(), &o).is_err());
    }
}
