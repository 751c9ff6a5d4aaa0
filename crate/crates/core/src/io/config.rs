use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnnulusMap, DeformationMap, DomainSpec, JoukowskyParams};
use crate::interpolation::DEFAULT_EVAL_BLOCK;
use crate::kernel::{KernelConfig, NormKind};
use crate::smoothing::{MuBoundary, SmoothingParams};

/// The three deformation experiments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentCase {
    #[default]
    SquareToDisk,
    AnnulusToAirfoil,
    CubeToSphere,
}

impl ExperimentCase {
    pub const ALL: [ExperimentCase; 3] = [
        ExperimentCase::SquareToDisk,
        ExperimentCase::AnnulusToAirfoil,
        ExperimentCase::CubeToSphere,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentCase::SquareToDisk => "square_to_disk",
            ExperimentCase::AnnulusToAirfoil => "annulus_to_airfoil",
            ExperimentCase::CubeToSphere => "cube_to_sphere",
        }
    }
}

impl fmt::Display for ExperimentCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentCase::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown case `{s}`")))
    }
}

/// Every setting of one experiment run. Keys of the config file are the
/// field names; missing keys take the defaults of the chosen `case`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: ExperimentCase,
    /// Approximate total node count; ignored when `h` is set.
    pub n_target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Fraction of boundary nodes used as data sites.
    pub p: f64,
    pub seed: u64,
    pub kappa_target: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub norm: NormKind,
    pub delta: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub max_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_gate: Option<f64>,
    pub mu_boundary: MuBoundary,
    pub snap_boundary: bool,
    pub eval_block: usize,
    pub r_in: f64,
    pub r_out: f64,
    pub airfoil_center: [f64; 2],
    pub airfoil_scale: f64,
    pub output_dir: String,
    /// Write one VTK file per assessed iteration.
    pub write_iterations: bool,
}

/// Accepted config keys, in file order.
pub const CONFIG_KEYS: [&str; 23] = [
    "case",
    "n_target",
    "h",
    "p",
    "seed",
    "kappa_target",
    "bracket_lo",
    "bracket_hi",
    "norm",
    "delta",
    "sigma",
    "alpha",
    "max_iterations",
    "quality_gate",
    "mu_boundary",
    "snap_boundary",
    "eval_block",
    "r_in",
    "r_out",
    "airfoil_center",
    "airfoil_scale",
    "output_dir",
    "write_iterations",
];

impl RunConfig {
    /// Defaults for `case`. The cube uses 8000 nodes to keep runs short, and
    /// δ is calibrated so the stopping rule fires on these node sets.
    pub fn for_case(case: ExperimentCase) -> Self {
        let (n_target, p, delta, sigma, alpha) = match case {
            ExperimentCase::SquareToDisk => (2106, 0.86, 1e-3, 0.1006, 1e-3),
            ExperimentCase::AnnulusToAirfoil => (1420, 0.73, 1.5e-4, 1.3696, 1e-2),
            ExperimentCase::CubeToSphere => (8000, 0.87, 1e-3, 0.0153, 1e-3),
        };
        let kernel = KernelConfig::default();
        let annulus = AnnulusMap::default();
        RunConfig {
            case,
            n_target,
            h: None,
            p,
            seed: 1,
            kappa_target: kernel.target_condition,
            bracket_lo: kernel.bracket_lo,
            bracket_hi: kernel.bracket_hi,
            norm: kernel.norm_kind,
            delta,
            sigma,
            alpha,
            max_iterations: 50,
            quality_gate: None,
            mu_boundary: MuBoundary::DataSites,
            snap_boundary: false,
            eval_block: DEFAULT_EVAL_BLOCK,
            r_in: annulus.r_in,
            r_out: annulus.r_out,
            airfoil_center: annulus.joukowsky.center,
            airfoil_scale: annulus.airfoil_scale,
            output_dir: format!("out/{}", case.name()),
            write_iterations: true,
        }
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        match self.case {
            ExperimentCase::SquareToDisk => Ok(DomainSpec::UnitSquare),
            ExperimentCase::AnnulusToAirfoil => DomainSpec::annulus(self.r_in, self.r_out),
            ExperimentCase::CubeToSphere => Ok(DomainSpec::UnitCube),
        }
    }

    pub fn map(&self) -> DeformationMap {
        match self.case {
            ExperimentCase::SquareToDisk => DeformationMap::SquareToDisk,
            ExperimentCase::AnnulusToAirfoil => DeformationMap::AnnulusToAirfoil(AnnulusMap {
                r_in: self.r_in,
                r_out: self.r_out,
                joukowsky: JoukowskyParams::through_trailing_edge(self.airfoil_center),
                airfoil_scale: self.airfoil_scale,
                square_half_width: self.r_out,
            }),
            ExperimentCase::CubeToSphere => DeformationMap::CubeToSphere,
        }
    }

    pub fn smoothing_params(&self) -> SmoothingParams {
        SmoothingParams {
            delta: self.delta,
            sigma: self.sigma,
            alpha: self.alpha,
            max_iterations: self.max_iterations,
            quality_gate: self.quality_gate,
            mu_boundary: self.mu_boundary,
            snap_boundary: self.snap_boundary,
            eval_block: self.eval_block,
        }
    }

    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            target_condition: self.kappa_target,
            bracket_lo: self.bracket_lo,
            bracket_hi: self.bracket_hi,
            norm_kind: self.norm,
        }
    }

    /// Range checks, each reported against its key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.to_string(), message });
        if self.n_target < self.case_dim() + 3 && self.h.is_none() {
            return bad("n_target", format!("{} is too small", self.n_target));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return bad("h", format!("must be positive, got {h}"));
            }
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p", format!("must lie in (0, 1], got {}", self.p));
        }
        if let Err(e) = self.kernel_config().validate() {
            return bad("kappa_target", e.to_string());
        }
        if let Err(e) = self.smoothing_params().validate() {
            let key = ["delta", "sigma", "alpha", "max_iterations", "eval_block"]
                .into_iter()
                .find(|k| e.to_string().contains(k))
                .unwrap_or("delta");
            return bad(key, e.to_string());
        }
        if self.case == ExperimentCase::AnnulusToAirfoil {
            if let Err(e) = self.domain() {
                return bad("r_in", e.to_string());
            }
            if !(self.airfoil_scale > 0.0 && self.airfoil_scale.is_finite()) {
                return bad("airfoil_scale", format!("must be positive, got {}", self.airfoil_scale));
            }
        }
        if self.output_dir.is_empty() {
            return bad("output_dir", "must not be empty".into());
        }
        Ok(())
    }

    fn case_dim(&self) -> usize {
        if self.case == ExperimentCase::CubeToSphere {
            3
        } else {
            2
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_case(ExperimentCase::SquareToDisk)
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn check_keys(table: &toml::Table) -> Result<()> {
    for key in table.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(config_err(key, "unknown key"));
        }
    }
    Ok(())
}

/// Resolves a key table: the case defaults overlaid with the given keys.
fn resolve(table: toml::Table) -> Result<RunConfig> {
    check_keys(&table)?;
    let case = match table.get("case") {
        None => ExperimentCase::default(),
        Some(v) => v
            .as_str()
            .ok_or_else(|| config_err("case", format!("expected a string, got {v}")))?
            .parse()
            .map_err(|e: Error| config_err("case", e.to_string()))?,
    };
    let base = toml::Table::try_from(RunConfig::for_case(case)).map_err(|e| config_err("case", e.to_string()))?;
    let mut merged = base;
    for (k, v) in table {
        // Each key on its own first, so a type error names it.
        let mut single = merged.clone();
        single.insert(k.clone(), v.clone());
        if let Err(e) = single.try_into::<RunConfig>() {
            return Err(config_err(&k, e.message().trim().to_string()));
        }
        merged.insert(k, v);
    }
    let cfg: RunConfig = merged.try_into().map_err(|e| config_err("", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses config text (`key = value` lines, `#` comments).
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_with_overrides(text, &[])
}

fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let key = e
            .span()
            .and_then(|s| text[..s.start].lines().last().map(|l| l.split('=').next().unwrap_or("").trim().to_string()))
            .unwrap_or_default();
        config_err(&key, e.message().trim().to_string())
    })?;
    apply_overrides(&mut table, overrides)?;
    resolve(table)
}

/// Applies `key=value` overrides. Values are read as TOML literals, and as
/// plain strings when they do not parse as one.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| config_err(o, "override must have the form key=value"))?;
        let (k, v) = (k.trim(), v.trim());
        if !CONFIG_KEYS.contains(&k) {
            return Err(config_err(k, "unknown key"));
        }
        let value = match format!("v = {v}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(v.to_string()),
        };
        table.insert(k.to_string(), value);
    }
    Ok(())
}

/// Reads a config file, then applies `overrides`.
pub fn read_config(path: impl AsRef<Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.as_ref().display())))?;
    parse_with_overrides(&text, overrides)
}

pub fn write_config(path: impl AsRef<Path>, cfg: &RunConfig) -> Result<()> {
    let text = toml::to_string(cfg).map_err(|e| config_err("", e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}
