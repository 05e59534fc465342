//! Registered parametric model families.
//!
//! Config files can only carry data, so coefficients are selected from
//! named families with regime-indexed parameter rules; arbitrary
//! coefficients remain available programmatically through
//! [`ModelSpec::builder`](super::ModelSpec::builder) or by registering a
//! new family constructor at run time.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::{JumpMeasure, MarkLaw, ModelSpec, OuKernel, RateMatrix};
use crate::error::{Error, Result};

/// A regime-indexed scalar parameter rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegimeSeq {
    /// Same value for every regime.
    Const { value: f64 },
    /// `a + b·k`.
    AffineIndex { a: f64, b: f64 },
    /// `a·(k+1)^p`.
    PowIndex { a: f64, p: f64 },
    /// Explicit head values; the last one repeats for larger `k`.
    List { values: Vec<f64> },
}

impl RegimeSeq {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            RegimeSeq::Const { value } => *value,
            RegimeSeq::AffineIndex { a, b } => a + b * k as f64,
            RegimeSeq::PowIndex { a, p } => a * ((k + 1) as f64).powf(*p),
            RegimeSeq::List { values } => {
                if values.is_empty() {
                    0.0
                } else {
                    values[k.min(values.len() - 1)]
                }
            }
        }
    }
}

/// A scalar function of the continuous state usable as a rate entry:
/// constants and simple rational forms, all globally Lipschitz.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateFnSpec {
    Const { value: f64 },
    /// `a + b/(1 + |x|²)`.
    RationalDecay { a: f64, b: f64 },
    /// `a + b·|x|²/(1 + |x|²)`.
    RationalSaturating { a: f64, b: f64 },
}

impl RateFnSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            RateFnSpec::Const { value } => *value,
            RateFnSpec::RationalDecay { a, b } => a + b / (1.0 + n2),
            RateFnSpec::RationalSaturating { a, b } => a + b * n2 / (1.0 + n2),
        }
    }
}

/// Jump-measure section of a model configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    /// `none`, `two-sided-exponential`, `normal`, `uniform`.
    pub family: String,
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub mean: Option<f64>,
    #[serde(default)]
    pub sd: Option<f64>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    /// Small-jump truncation level of an originally σ-finite measure;
    /// recorded for the manifest, the measure itself must already be the
    /// finite truncation. Enables compensated-drift handling.
    #[serde(default)]
    pub truncation: Option<f64>,
}

impl JumpConfig {
    pub fn build(&self) -> Result<JumpMeasure> {
        let mass = self.mass.unwrap_or(1.0);
        let jm = match self.family.as_str() {
            "none" => JumpMeasure::none(),
            "two-sided-exponential" => JumpMeasure::new(
                mass,
                MarkLaw::TwoSidedExponential {
                    scale: self.scale.unwrap_or(1.0),
                },
            )?,
            "normal" => JumpMeasure::new(
                mass,
                MarkLaw::Normal {
                    mean: self.mean.unwrap_or(0.0),
                    sd: self.sd.unwrap_or(1.0),
                },
            )?,
            "uniform" => JumpMeasure::new(
                mass,
                MarkLaw::Uniform {
                    lo: self.lo.unwrap_or(-1.0),
                    hi: self.hi.unwrap_or(1.0),
                },
            )?,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "model.jump.family: unknown family {other:?}"
                )))
            }
        };
        Ok(if self.truncation.is_some() {
            jm.compensated()
        } else {
            jm
        })
    }
}

/// Rate-matrix section of a model configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    /// `zero`, `nearest-neighbor`, `banded`.
    pub family: String,
    #[serde(default)]
    pub up: Option<RateFnSpec>,
    #[serde(default)]
    pub down: Option<RateFnSpec>,
    /// For `banded`: map from signed offset (as a string, e.g. `"-2"`) to
    /// the entry rule; offsets outside `[-kappa, kappa]` are rejected.
    #[serde(default)]
    pub entries: Option<BTreeMap<String, RateFnSpec>>,
    /// Optional rate bound: `q_k(x) ≤ bound·(k+1)`.
    #[serde(default)]
    pub bound: Option<f64>,
}

impl RatesConfig {
    pub fn build(&self, kappa: usize) -> Result<RateMatrix> {
        let rm = match self.family.as_str() {
            "zero" => RateMatrix::new(kappa.max(1), |_x, _k, _l| 0.0),
            "nearest-neighbor" => {
                let up = self.up.clone().ok_or_else(|| {
                    Error::InvalidConfig("model.rates.up: required for nearest-neighbor".into())
                })?;
                let down = self.down.clone().ok_or_else(|| {
                    Error::InvalidConfig("model.rates.down: required for nearest-neighbor".into())
                })?;
                RateMatrix::new(kappa.max(1), move |x, k, l| {
                    if l == k + 1 {
                        up.eval(x)
                    } else if l + 1 == k {
                        down.eval(x)
                    } else {
                        0.0
                    }
                })
            }
            "banded" => {
                let entries = self.entries.clone().ok_or_else(|| {
                    Error::InvalidConfig("model.rates.entries: required for banded".into())
                })?;
                let mut by_offset: BTreeMap<i64, RateFnSpec> = BTreeMap::new();
                for (key, spec) in entries {
                    let off: i64 = key.parse().map_err(|_| {
                        Error::InvalidConfig(format!("model.rates.entries: bad offset {key:?}"))
                    })?;
                    if off == 0 || off.unsigned_abs() as usize > kappa {
                        return Err(Error::InvalidConfig(format!(
                            "model.rates.entries: offset {off} outside band κ = {kappa}"
                        )));
                    }
                    by_offset.insert(off, spec);
                }
                RateMatrix::new(kappa, move |x, k, l| {
                    let off = l as i64 - k as i64;
                    by_offset.get(&off).map(|s| s.eval(x)).unwrap_or(0.0)
                })
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "model.rates.family: unknown family {other:?}"
                )))
            }
        };
        Ok(match self.bound {
            Some(b) => rm.with_bound(b),
            None => rm,
        })
    }
}

/// Family-specific regime-indexed parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    /// Linear drift coefficient (`b(x,k) = alpha_k·x + a_k`).
    #[serde(default)]
    pub alpha: Option<RegimeSeq>,
    /// Constant drift offset `a_k`.
    #[serde(default)]
    pub a: Option<RegimeSeq>,
    /// Constant diffusion `sigma_k`.
    #[serde(default)]
    pub sigma: Option<RegimeSeq>,
    /// Multiplicative jump coefficient (`c(x,k,u) = beta_k·u`).
    #[serde(default)]
    pub beta: Option<RegimeSeq>,
}

/// Model section of a run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dimension: usize,
    pub family: String,
    pub kappa: usize,
    #[serde(default)]
    pub growth_h: Option<f64>,
    #[serde(default)]
    pub holder_delta: Option<f64>,
    #[serde(default)]
    pub params: FamilyParams,
    pub jump: JumpConfig,
    pub rates: RatesConfig,
}

type FamilyBuilder = Arc<dyn Fn(&ModelConfig) -> Result<ModelSpec> + Send + Sync>;

struct FamilyEntry {
    description: String,
    schema: String,
    build: FamilyBuilder,
}

static REGISTRY: RwLock<BTreeMap<String, FamilyEntry>> = RwLock::new(BTreeMap::new());

fn ensure_builtins() {
    let mut reg = REGISTRY.write().unwrap();
    if !reg.is_empty() {
        return;
    }
    reg.insert(
        "coupled-ou".into(),
        FamilyEntry {
            description: "one-dimensional coupled Ornstein-Uhlenbeck: b = alpha_k·x, \
                          sigma = sigma_k, c = beta_k·u"
                .into(),
            schema: "params: alpha, sigma, beta (regime sequences); rates; jump".into(),
            build: Arc::new(build_coupled_ou),
        },
    );
    reg.insert(
        "affine".into(),
        FamilyEntry {
            description: "one-dimensional affine: b = alpha_k·x + a_k, sigma = sigma_k, \
                          c = beta_k·u"
                .into(),
            schema: "params: alpha, a, sigma, beta (regime sequences); rates; jump".into(),
            build: Arc::new(build_affine),
        },
    );
    reg.insert(
        "pure-switching".into(),
        FamilyEntry {
            description: "frozen continuous component (b = sigma = c = 0); only the regime moves"
                .into(),
            schema: "params: none; rates".into(),
            build: Arc::new(|cfg| {
                ModelSpec::builder(cfg.dimension)
                    .rates(cfg.rates.build(cfg.kappa)?)
                    .jump_measure(JumpMeasure::none())
                    .family_name("pure-switching")
                    .maybe_growth(cfg.growth_h)
                    .maybe_holder(cfg.holder_delta)
                    .build()
            }),
        },
    );
}

fn build_affine_like(cfg: &ModelConfig, name: &str, with_offset: bool) -> Result<ModelSpec> {
    if cfg.dimension != 1 {
        return Err(Error::InvalidConfig(format!(
            "model.dimension: family {name:?} is one-dimensional"
        )));
    }
    let alpha = cfg.params.alpha.clone().ok_or_else(|| {
        Error::InvalidConfig(format!("model.params.alpha: required for {name:?}"))
    })?;
    let sigma = cfg.params.sigma.clone().ok_or_else(|| {
        Error::InvalidConfig(format!("model.params.sigma: required for {name:?}"))
    })?;
    let beta = cfg
        .params
        .beta
        .clone()
        .unwrap_or(RegimeSeq::Const { value: 0.0 });
    let offset = if with_offset {
        cfg.params.a.clone().unwrap_or(RegimeSeq::Const { value: 0.0 })
    } else {
        RegimeSeq::Const { value: 0.0 }
    };

    let al = alpha.clone();
    let of = offset.clone();
    let sg = sigma.clone();
    let bt = beta.clone();
    let kal = alpha.clone();
    let kof = offset.clone();
    let ksg = sigma.clone();
    ModelSpec::builder(1)
        .drift(move |x: &[f64], k, out: &mut [f64]| out[0] = al.at(k) * x[0] + of.at(k))
        .diffusion(move |_x, k, out: &mut [f64]| out[0] = sg.at(k))
        .jump_coeff(move |_x, k, u: &[f64], out: &mut [f64]| out[0] = bt.at(k) * u[0])
        .jump_measure(cfg.jump.build()?)
        .rates(cfg.rates.build(cfg.kappa)?)
        .gauss_kernel(move |k| {
            Some(OuKernel {
                alpha: kal.at(k),
                offset: kof.at(k),
                sigma: ksg.at(k),
            })
        })
        .family_name(name)
        .maybe_growth(cfg.growth_h)
        .maybe_holder(cfg.holder_delta)
        .build()
}

fn build_coupled_ou(cfg: &ModelConfig) -> Result<ModelSpec> {
    build_affine_like(cfg, "coupled-ou", false)
}

fn build_affine(cfg: &ModelConfig) -> Result<ModelSpec> {
    build_affine_like(cfg, "affine", true)
}

impl super::ModelBuilder {
    fn maybe_growth(self, h: Option<f64>) -> Self {
        match h {
            Some(h) => self.growth_bound(h),
            None => self,
        }
    }

    fn maybe_holder(self, d: Option<f64>) -> Self {
        match d {
            Some(d) => self.holder_exponent(d),
            None => self,
        }
    }
}

/// Build a model from its configuration via the family registry.
pub fn build_model(cfg: &ModelConfig) -> Result<ModelSpec> {
    ensure_builtins();
    let reg = REGISTRY.read().unwrap();
    let entry = reg.get(&cfg.family).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "model.family: unknown family {:?} (see list-models)",
            cfg.family
        ))
    })?;
    (entry.build)(cfg)
}

/// Register (or replace) a family constructor at run time.
pub fn register_family(
    name: impl Into<String>,
    description: impl Into<String>,
    schema: impl Into<String>,
    build: impl Fn(&ModelConfig) -> Result<ModelSpec> + Send + Sync + 'static,
) {
    ensure_builtins();
    REGISTRY.write().unwrap().insert(
        name.into(),
        FamilyEntry {
            description: description.into(),
            schema: schema.into(),
            build: Arc::new(build),
        },
    );
}

/// Registered families as `(name, description, schema)`, sorted by name.
pub fn list_models() -> Vec<(String, String, String)> {
    ensure_builtins();
    REGISTRY
        .read()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v.description.clone(), v.schema.clone()))
        .collect()
}

/// The worked coupled-OU instance: `alpha_k = −(k+2)`,
/// `sigma_k² = beta_k² = 1/(k+1)`, nearest-neighbor rates `up`/`down`,
/// marks `ν(dz) = ½e^{−|z|}dz`.
pub fn coupled_ou_instance(up: f64, down: f64) -> ModelSpec {
    let cfg = ModelConfig {
        dimension: 1,
        family: "coupled-ou".into(),
        kappa: 1,
        growth_h: None,
        holder_delta: Some(1.0),
        params: FamilyParams {
            alpha: Some(RegimeSeq::AffineIndex { a: -2.0, b: -1.0 }),
            a: None,
            sigma: Some(RegimeSeq::PowIndex { a: 1.0, p: -0.5 }),
            beta: Some(RegimeSeq::PowIndex { a: 1.0, p: -0.5 }),
        },
        jump: JumpConfig {
            family: "two-sided-exponential".into(),
            mass: Some(1.0),
            scale: Some(1.0),
            mean: None,
            sd: None,
            lo: None,
            hi: None,
            truncation: None,
        },
        rates: RatesConfig {
            family: "nearest-neighbor".into(),
            up: Some(RateFnSpec::Const { value: up }),
            down: Some(RateFnSpec::Const { value: down }),
            entries: None,
            bound: Some((up + down).max(1.0) * 2.0),
        },
    };
    build_model(&cfg).expect("builtin instance is well formed")
}

/// Single-regime OU with jumps: `b = alpha·x`, `sigma`, `c = beta·u`,
/// two-sided exponential marks, no switching.
pub fn single_regime_ou(alpha: f64, sigma: f64, beta: f64, mass: f64) -> ModelSpec {
    ModelSpec::builder(1)
        .drift(move |x: &[f64], _k, out: &mut [f64]| out[0] = alpha * x[0])
        .diffusion(move |_x, _k, out: &mut [f64]| out[0] = sigma)
        .jump_coeff(move |_x, _k, u: &[f64], out: &mut [f64]| out[0] = beta * u[0])
        .jump_measure(
            JumpMeasure::new(mass, MarkLaw::TwoSidedExponential { scale: 1.0 })
                .expect("valid mass"),
        )
        .rates(RateMatrix::new(1, |_x, _k, _l| 0.0))
        .gauss_kernel(move |_k| {
            Some(OuKernel {
                alpha,
                offset: 0.0,
                sigma,
            })
        })
        .family_name("single-regime-ou")
        .build()
        .expect("builtin instance is well formed")
}
