//! Run configuration: flags over an optional `key=value` file over defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use hom3::io::Manifest;
use hom3::media::{EnsembleKind, EnsembleSpec};
use hom3::solver::SolverConfig;

pub const THREADS_ENV: &str = "HOM3_THREADS";

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// key=value file supplying defaults; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "cg-tol")]
    pub cg_tol: Option<f64>,
    #[arg(long = "cg-max-iter")]
    pub cg_max_iter: Option<usize>,
    /// bernoulli or constant.
    #[arg(long)]
    pub ensemble: Option<String>,
    #[arg(long)]
    pub contrast: Option<f64>,
    #[arg(long)]
    pub probability: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; HOM3_THREADS overrides.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub eps: f64,
    pub cg_tol: f64,
    pub cg_max_iter: Option<usize>,
    pub ensemble: EnsembleSpec,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            cg_tol: 1e-10,
            cg_max_iter: None,
            ensemble: EnsembleSpec::bernoulli(0),
            out: PathBuf::from("hom3-out"),
            threads: None,
        }
    }
}

/// Values from the config file, read once.
#[derive(Clone, Debug, Default)]
pub struct FileDefaults(Manifest);

impl FileDefaults {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Ok(Self(
                Manifest::read(p).with_context(|| format!("reading config {}", p.display()))?,
            )),
            None => Ok(Self::default()),
        }
    }

    /// `flag`, else the file's `key`, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.0.get(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}={v}: {e}")),
            None => Ok(None),
        }
    }

    /// Comma-separated list: non-empty `flag`, else the file's `key`, else `default`.
    pub fn pick_list<T: FromStr + Clone>(&self, flag: &[T], key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        if !flag.is_empty() {
            return Ok(flag.to_vec());
        }
        match self.0.get(key) {
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| anyhow::anyhow!("config key {key}={v}: {e}"))
                })
                .collect(),
            None => Ok(default.to_vec()),
        }
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs, file: &FileDefaults) -> Result<Self> {
        let d = RunConfig::default();
        let kind = match file.pick(args.ensemble.clone(), "ensemble")? {
            Some(s) => s.parse::<EnsembleKind>()?,
            None => d.ensemble.kind,
        };
        let mut ensemble = match kind {
            EnsembleKind::BernoulliContrast => EnsembleSpec::bernoulli(0),
            EnsembleKind::Constant => EnsembleSpec::constant(),
        };
        if let Some(c) = file.pick(args.contrast, "contrast")? {
            ensemble.contrast = c;
        }
        if let Some(p) = file.pick(args.probability, "probability")? {
            ensemble.probability = p;
        }
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.parse::<usize>()
                    .with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?,
            ),
            Err(_) => file.pick(args.threads, "threads")?,
        };
        let cfg = Self {
            eps: file.pick(args.eps, "eps")?.unwrap_or(d.eps),
            cg_tol: file.pick(args.cg_tol, "cg_tol")?.unwrap_or(d.cg_tol),
            cg_max_iter: file.pick(args.cg_max_iter, "cg_max_iter")?,
            ensemble,
            out: file.pick(args.out.clone(), "out")?.unwrap_or(d.out),
            threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            bail!("eps must lie in (0, 1), got {}", self.eps);
        }
        if !(self.cg_tol > 0.0) {
            bail!("cg_tol must be positive, got {}", self.cg_tol);
        }
        if self.threads == Some(0) {
            bail!("thread count must be positive");
        }
        self.ensemble.validate()?;
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.cg_tol,
            max_iter: self.cg_max_iter,
        }
    }

    /// Records the resolved configuration.
    pub fn echo(&self, m: &mut Manifest) {
        m.set("eps", self.eps)
            .set("cg_tol", self.cg_tol)
            .set(
                "cg_max_iter",
                self.cg_max_iter.map_or("auto".to_string(), |n| n.to_string()),
            )
            .set("ensemble", self.ensemble.kind)
            .set("contrast", self.ensemble.contrast)
            .set("probability", self.ensemble.probability)
            .set("out", self.out.display())
            .set("threads", rayon::current_num_threads());
    }
}
