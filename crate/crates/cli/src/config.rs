//! Flags, JSON config files and their merge into run settings.

use std::path::{Path, PathBuf};

use aoi_core::analytic::MomentMode;
use aoi_core::hierarchy::{HierarchyConfig, LevelRates};
use aoi_core::sim::Variant;
use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    /// Large-n closed forms
    LargeN,
    /// Exact harmonic sums on rounded counts
    Exact,
}

impl From<ModeArg> for MomentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::LargeN => MomentMode::LargeN,
            ModeArg::Exact => MomentMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Exact,
    Bounded,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Exact => Variant::Exact,
            VariantArg::Bounded => Variant::Bounded,
        }
    }
}

/// Options shared by the analytic, simulate and sweep commands.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with any of: n, h, a, b, lambda0, lambda1, lambda2, mode,
    /// variant, trials, seed, out. Flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Network sizes, comma separated (scientific notation accepted)
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<f64>,
    /// Hierarchy depths, comma separated; exponents are optimal per depth
    #[arg(long, value_delimiter = ',')]
    pub h: Vec<u32>,
    /// Fixed subcell exponent (implies h = 1; needs --b)
    #[arg(long)]
    pub a: Option<f64>,
    /// Fixed cell exponent (h = 0 alone, h = 1 with --a)
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Closed-form moment mode
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Simulated session variant
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seed; falls back to AOI_SEED, then 0
    #[arg(long, env = "AOI_SEED")]
    pub seed: Option<u64>,
    /// Output CSV path (standard output when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    n: Option<OneOrMany<f64>>,
    h: Option<OneOrMany<u32>>,
    a: Option<f64>,
    b: Option<f64>,
    lambda0: Option<f64>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    mode: Option<ModeArg>,
    variant: Option<VariantArg>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
}

/// How exponents are chosen at each sweep point.
#[derive(Debug, Clone, PartialEq)]
pub enum Exponents {
    OptimalPerDepth(Vec<u32>),
    /// Explicit schedule `[b]` or `[b, a]`.
    Fixed(Vec<f64>),
}

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub ns: Vec<f64>,
    pub exponents: Exponents,
    pub rates: LevelRates,
    pub mode: MomentMode,
    pub variant: Variant,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(args: &RunArgs, default_ns: &[f64], default_trials: usize) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => read_config(p)?,
            None => ConfigFile::default(),
        };
        let pick = |flag: Vec<f64>, cfg: Option<OneOrMany<f64>>| {
            if flag.is_empty() {
                cfg.map(Vec::from).unwrap_or_default()
            } else {
                flag
            }
        };
        let mut ns = pick(args.n.clone(), file.n);
        if ns.is_empty() {
            ns = default_ns.to_vec();
        }
        if ns.is_empty() {
            return Err(CliError::Config("no network sizes given (use --n)".into()));
        }
        let hs: Vec<u32> = if args.h.is_empty() {
            file.h.map(Vec::from).unwrap_or_default()
        } else {
            args.h.clone()
        };
        let a = args.a.or(file.a);
        let b = args.b.or(file.b);
        let exponents = match (a, b) {
            (None, None) => Exponents::OptimalPerDepth(if hs.is_empty() { vec![1] } else { hs }),
            (Some(_), None) => return Err(CliError::Config("--a needs --b".into())),
            (a, Some(b)) => {
                let schedule: Vec<f64> = std::iter::once(b).chain(a).collect();
                let depth = schedule.len() as u32 - 1;
                if !hs.is_empty() && hs != [depth] {
                    return Err(CliError::Config(format!(
                        "fixed exponents imply h = {depth}, conflicting with --h {hs:?}"
                    )));
                }
                Exponents::Fixed(schedule)
            }
        };
        let rates = LevelRates::new(vec![
            args.lambda0.or(file.lambda0).unwrap_or(1.0),
            args.lambda1.or(file.lambda1).unwrap_or(1.0),
            args.lambda2.or(file.lambda2).unwrap_or(1.0),
        ])?;
        Ok(Settings {
            ns,
            exponents,
            rates,
            mode: args.mode.or(file.mode).map(Into::into).unwrap_or_default(),
            variant: args.variant.or(file.variant).map(Into::into).unwrap_or_default(),
            trials: args.trials.or(file.trials).unwrap_or(default_trials),
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args.out.clone().or(file.out),
        })
    }

    /// Sweep points, `n` varying fastest within each depth.
    pub fn points(&self) -> Result<Vec<HierarchyConfig>, CliError> {
        let mut out = Vec::new();
        match &self.exponents {
            Exponents::OptimalPerDepth(hs) => {
                for &h in hs {
                    for &n in &self.ns {
                        out.push(HierarchyConfig::optimal(n, h, self.rates.clone())?);
                    }
                }
            }
            Exponents::Fixed(schedule) => {
                for &n in &self.ns {
                    out.push(HierarchyConfig::new(n, schedule.clone(), self.rates.clone())?);
                }
            }
        }
        Ok(out)
    }
}
