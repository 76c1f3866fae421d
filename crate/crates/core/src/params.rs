//! Automaton parameters, run configuration, and the flat `key = value`
//! parameter file format.
//!
//! Default values live in `config/lca-defaults.conf`, which is versioned with
//! the datasets it produces.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::WedgeSymmetry;

/// Reference range of the vapor saturation for dataset generation.
pub const RHO_RANGE: (f64, f64) = (0.35, 0.65);

/// Contents of the shipped defaults file.
pub const DEFAULTS_FILE: &str = include_str!("../config/lca-defaults.conf");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?}")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Environmental parameters of the automaton, in on-disk order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcaParams {
    /// Vapor saturation: initial diffusive mass per cell.
    pub rho: f64,
    /// Boundary-mass threshold for attachment with one or two attached neighbors.
    pub beta_attach: f64,
    /// Reduced threshold for three attached neighbors in low-vapor surroundings.
    pub alpha: f64,
    /// Neighborhood vapor ceiling that enables the `alpha` rule.
    pub theta_vapor: f64,
    /// Fraction of arriving vapor that freezes directly into crystal mass.
    pub kappa: f64,
    /// Boundary-mass melt-back rate.
    pub mu: f64,
    /// Crystal-mass melt-back rate.
    pub gamma_melt: f64,
    /// Multiplicative vapor noise amplitude.
    pub sigma_noise: f64,
}

impl LcaParams {
    pub const COUNT: usize = 8;
    pub const NAMES: [&'static str; 8] =
        ["rho", "beta_attach", "alpha", "theta_vapor", "kappa", "mu", "gamma_melt", "sigma_noise"];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.rho,
            self.beta_attach,
            self.alpha,
            self.theta_vapor,
            self.kappa,
            self.mu,
            self.gamma_melt,
            self.sigma_noise,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        LcaParams {
            rho: v[0],
            beta_attach: v[1],
            alpha: v[2],
            theta_vapor: v[3],
            kappa: v[4],
            mu: v[5],
            gamma_melt: v[6],
            sigma_noise: v[7],
        }
    }

    pub fn with_rho(self, rho: f64) -> Self {
        LcaParams { rho, ..self }
    }

    /// Checks the ranges the update rules need to keep masses nonnegative.
    /// `rho` is only required to be nonnegative here; see
    /// [`LcaParams::check_reference_range`].
    pub fn validate(&self) -> Result<(), ParamError> {
        let v = self.to_array();
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(ParamError::Invalid(format!("{} must be finite", Self::NAMES[k])));
        }
        let bad = |msg: &str| Err(ParamError::Invalid(msg.to_string()));
        if self.rho < 0.0 {
            return bad("rho must be >= 0");
        }
        if self.beta_attach < 0.0 || self.alpha < 0.0 || self.theta_vapor < 0.0 {
            return bad("beta_attach, alpha and theta_vapor must be >= 0");
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad("kappa must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.mu) || !(0.0..1.0).contains(&self.gamma_melt) {
            return bad("mu and gamma_melt must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.sigma_noise) {
            return bad("sigma_noise must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn check_reference_range(&self) -> Result<(), ParamError> {
        let (lo, hi) = RHO_RANGE;
        if self.rho < lo || self.rho > hi {
            return Err(ParamError::Invalid(format!("rho {} outside reference range [{lo}, {hi}]", self.rho)));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<bool, ParamError> {
        let slot = match key {
            "rho" => &mut self.rho,
            "beta_attach" => &mut self.beta_attach,
            "alpha" => &mut self.alpha,
            "theta_vapor" => &mut self.theta_vapor,
            "kappa" => &mut self.kappa,
            "mu" => &mut self.mu,
            "gamma_melt" => &mut self.gamma_melt,
            "sigma_noise" => &mut self.sigma_noise,
            _ => return Ok(false),
        };
        *slot = parse_value(key, value)?;
        Ok(true)
    }
}

impl Default for LcaParams {
    fn default() -> Self {
        Defaults::shipped().params
    }
}

/// How the far edges of the wedge exchange vapor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// The outermost ring is held at `rho` (ambient vapor supply).
    #[default]
    Reservoir,
    /// Zero-flux: missing neighbors reflect the cell's own value.
    Sealed,
}

impl FromStr for BoundaryMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reservoir" => Ok(BoundaryMode::Reservoir),
            "sealed" => Ok(BoundaryMode::Sealed),
            _ => Err(format!("unknown boundary mode {s:?} (reservoir | sealed)")),
        }
    }
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMode::Reservoir => "reservoir",
            BoundaryMode::Sealed => "sealed",
        })
    }
}

impl FromStr for WedgeSymmetry {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mirror" => Ok(WedgeSymmetry::Mirror),
            "rotational" => Ok(WedgeSymmetry::Rotational),
            _ => Err(format!("unknown wedge symmetry {s:?} (mirror | rotational)")),
        }
    }
}

impl fmt::Display for WedgeSymmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WedgeSymmetry::Mirror => "mirror",
            WedgeSymmetry::Rotational => "rotational",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Cells per wedge edge.
    pub side: usize,
    /// Raw-step cap.
    pub max_steps: u64,
    /// Record a frame every this many raw steps.
    pub snapshot_every: u32,
    /// Growth halts once an attached cell is this close to a far edge.
    pub halt_margin: usize,
    pub boundary_mode: BoundaryMode,
    pub symmetry: WedgeSymmetry,
    pub seed: u64,
}

impl RunConfig {
    pub const MIN_SIDE: usize = 8;

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.side < Self::MIN_SIDE {
            return Err(ParamError::Invalid(format!("side must be >= {}, got {}", Self::MIN_SIDE, self.side)));
        }
        if self.snapshot_every < 1 {
            return Err(ParamError::Invalid("snapshot_every must be >= 1".into()));
        }
        if self.halt_margin < 1 || self.halt_margin >= self.side {
            return Err(ParamError::Invalid(format!(
                "halt_margin must lie in [1, side), got {}",
                self.halt_margin
            )));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<bool, ParamError> {
        match key {
            "side" => self.side = parse_value(key, value)?,
            "max_steps" => self.max_steps = parse_value(key, value)?,
            "snapshot_every" => self.snapshot_every = parse_value(key, value)?,
            "halt_margin" => self.halt_margin = parse_value(key, value)?,
            "boundary_mode" => self.boundary_mode = parse_value(key, value)?,
            "symmetry" => self.symmetry = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Defaults::shipped().run
    }
}

/// A parsed parameter file: automaton parameters plus run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub format_version: u32,
    pub params: LcaParams,
    pub run: RunConfig,
}

impl Defaults {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn shipped() -> Self {
        let mut d = Defaults {
            format_version: 0,
            params: LcaParams::from_array([0.0; 8]),
            run: RunConfig {
                side: 0,
                max_steps: 0,
                snapshot_every: 0,
                halt_margin: 0,
                boundary_mode: BoundaryMode::Reservoir,
                symmetry: WedgeSymmetry::Mirror,
                seed: 0,
            },
        };
        d.apply(&parse_kv(DEFAULTS_FILE).expect("shipped defaults parse"))
            .expect("shipped defaults are complete");
        d
    }

    /// Overlays every key in `kv`; unknown keys are an error.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<(), ParamError> {
        for (k, v) in kv {
            if k == "format_version" {
                self.format_version = parse_value(k, v)?;
                if self.format_version != Self::FORMAT_VERSION {
                    return Err(ParamError::Invalid(format!("unsupported parameter file version {v}")));
                }
            } else if !self.params.set(k, v)? && !self.run.set(k, v)? {
                return Err(ParamError::UnknownKey(k.clone()));
            }
        }
        Ok(())
    }

    /// Renders as a parameter file that parses back to `self`.
    pub fn to_kv_text(&self) -> String {
        let mut s = format!("format_version = {}\n", self.format_version);
        for (name, v) in LcaParams::NAMES.iter().zip(self.params.to_array()) {
            s += &format!("{name} = {v:?}\n");
        }
        let r = &self.run;
        s += &format!(
            "side = {}\nmax_steps = {}\nsnapshot_every = {}\nhalt_margin = {}\nboundary_mode = {}\nsymmetry = {}\nseed = {}\n",
            r.side, r.max_steps, r.snapshot_every, r.halt_margin, r.boundary_mode, r.symmetry, r.seed
        );
        s
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ParamError> {
    value.parse().map_err(|_| ParamError::BadValue { key: key.to_string(), value: value.to_string() })
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped; a
/// later duplicate key wins.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ParamError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, v)| !k.is_empty() && !v.is_empty())
            .ok_or_else(|| ParamError::Syntax { line: n + 1, text: raw.to_string() })?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}
