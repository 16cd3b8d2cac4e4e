//! Flat key=value experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::glnp::ApgdParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Svmlight,
}

impl FromStr for DatasetFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "svmlight" | "libsvm" => Ok(DatasetFormat::Svmlight),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Csv => "csv",
            DatasetFormat::Svmlight => "svmlight",
        })
    }
}

/// Guesses the format from the file extension; anything that is not
/// `.csv` is treated as svmlight.
pub(crate) fn format_for_path(path: &Path) -> DatasetFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
        _ => DatasetFormat::Svmlight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GlnpMul,
    GlnpApgd,
    NystromRandom,
    NystromKmeans,
    Knn,
    FullLp,
}

impl Method {
    pub fn uses_shift(&self) -> bool {
        matches!(self, Method::GlnpMul | Method::GlnpApgd)
    }

    pub fn all() -> [Method; 6] {
        [
            Method::GlnpMul,
            Method::GlnpApgd,
            Method::NystromRandom,
            Method::NystromKmeans,
            Method::Knn,
            Method::FullLp,
        ]
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "glnp-mul" => Ok(Method::GlnpMul),
            "glnp-apgd" => Ok(Method::GlnpApgd),
            "nystrom-random" => Ok(Method::NystromRandom),
            "nystrom-kmeans" => Ok(Method::NystromKmeans),
            "knn" => Ok(Method::Knn),
            "full-lp" => Ok(Method::FullLp),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::GlnpMul => "glnp-mul",
            Method::GlnpApgd => "glnp-apgd",
            Method::NystromRandom => "nystrom-random",
            Method::NystromKmeans => "nystrom-kmeans",
            Method::Knn => "knn",
            Method::FullLp => "full-lp",
        })
    }
}

/// Kernel used by the dense `full-lp` baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullLpKernel {
    Rbf,
    Linear,
}

impl FromStr for FullLpKernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rbf" => Ok(FullLpKernel::Rbf),
            "linear" => Ok(FullLpKernel::Linear),
            other => Err(Error::InvalidConfig(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Everything one experiment needs; mirrors the flat key=value file.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    pub method: Method,
    pub k: usize,
    /// RBF width; `None` selects the seeded median-distance heuristic.
    pub sigma: Option<f64>,
    pub alpha: f64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub subsample: Option<usize>,
    pub lp_max_iter: usize,
    pub lp_tol: f64,
    pub glnp_max_iter: usize,
    pub glnp_tol: f64,
    pub apgd_max_inner: usize,
    pub apgd_beta: f64,
    pub apgd_ls_sigma: f64,
    pub apgd_epsilon: f64,
    pub kmeans_iters: usize,
    pub neighbors: usize,
    pub pinv_tol: f64,
    pub full_lp_kernel: FullLpKernel,
}

impl ExperimentConfig {
    /// Defaults for everything except the dataset path and method.
    pub fn new(dataset: impl Into<PathBuf>, method: Method) -> Self {
        let dataset: PathBuf = dataset.into();
        let format = format_for_path(&dataset);
        ExperimentConfig {
            dataset,
            format,
            method,
            k: 100,
            sigma: None,
            alpha: 0.01,
            train_fraction: 0.1,
            test_fraction: 0.2,
            trials: 10,
            seed: 42,
            workers: 1,
            subsample: None,
            lp_max_iter: 1000,
            lp_tol: 1e-6,
            glnp_max_iter: 200,
            glnp_tol: 1e-5,
            apgd_max_inner: 20,
            apgd_beta: 0.1,
            apgd_ls_sigma: 0.01,
            apgd_epsilon: 1e-4,
            kmeans_iters: 5,
            neighbors: 5,
            pinv_tol: 1e-12,
            full_lp_kernel: FullLpKernel::Rbf,
        }
    }

    pub fn apgd_params(&self) -> ApgdParams {
        ApgdParams {
            max_iter: self.glnp_max_iter,
            max_inner_iter: self.apgd_max_inner,
            beta: self.apgd_beta,
            ls_sigma: self.apgd_ls_sigma,
            epsilon: self.apgd_epsilon,
            tol: self.glnp_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "train_fraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "test_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("sigma must be positive".into()));
            }
        }
        self.apgd_params().validate().map_err(|e| match e {
            Error::InvalidParameter(m) => Error::InvalidConfig(m),
            other => other,
        })?;
        Ok(())
    }

    /// Parses the flat `key = value` format (one pair per line, `#`
    /// comments). `dataset` and `method` are required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dataset: Option<PathBuf> = None;
        let mut format: Option<DatasetFormat> = None;
        let mut method: Option<Method> = None;
        let mut pairs: Vec<(String, String)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            match key.as_str() {
                "dataset" => dataset = Some(PathBuf::from(&value)),
                "format" => format = Some(value.parse()?),
                "method" => method = Some(value.parse()?),
                _ => pairs.push((key, value)),
            }
        }

        let dataset = dataset
            .ok_or_else(|| Error::InvalidConfig("missing required key `dataset`".into()))?;
        let method =
            method.ok_or_else(|| Error::InvalidConfig("missing required key `method`".into()))?;
        let mut cfg = ExperimentConfig::new(dataset, method);
        if let Some(f) = format {
            cfg.format = f;
        }
        for (key, value) in pairs {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::InvalidConfig(format!("bad value {value:?} for key {key:?}"))
            })
        }
        match key {
            "k" => self.k = num(key, value)?,
            "sigma" => self.sigma = Some(num(key, value)?),
            "alpha" => self.alpha = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "test_fraction" => self.test_fraction = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "subsample" => self.subsample = Some(num(key, value)?),
            "lp_max_iter" => self.lp_max_iter = num(key, value)?,
            "lp_tol" => self.lp_tol = num(key, value)?,
            "glnp_max_iter" => self.glnp_max_iter = num(key, value)?,
            "glnp_tol" => self.glnp_tol = num(key, value)?,
            "apgd_max_inner" => self.apgd_max_inner = num(key, value)?,
            "apgd_beta" => self.apgd_beta = num(key, value)?,
            "apgd_ls_sigma" => self.apgd_ls_sigma = num(key, value)?,
            "apgd_epsilon" => self.apgd_epsilon = num(key, value)?,
            "kmeans_iters" => self.kmeans_iters = num(key, value)?,
            "neighbors" => self.neighbors = num(key, value)?,
            "pinv_tol" => self.pinv_tol = num(key, value)?,
            "full_lp_kernel" => self.full_lp_kernel = value.parse()?,
            other => {
                return Err(Error::InvalidConfig(format!("unknown key {other:?}")));
            }
        }
        Ok(())
    }
}
