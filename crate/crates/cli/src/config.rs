//! JSON configuration schema and translation into core test definitions.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use specbt_core::conditional::CvtSpec;
use specbt_core::kernels::{self, KernelMeasure};
use specbt_core::simulation::presets::{ARMA_AR, ARMA_MA, NARROW, WIDE};
use specbt_core::simulation::{DgpSpec, Marginal, TestDefinition, TestKind};

/// Top-level configuration file. Every field is optional; commands fill in
/// their own defaults.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub tests: Vec<TestConfig>,
    #[serde(default)]
    pub kernels: Vec<KernelConfig>,
    pub level: Option<f64>,
    pub q: Option<f64>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub reps: Option<u64>,
    #[serde(default)]
    pub dgps: Vec<DgpConfig>,
    /// Covariance estimator for conditional tests: "null_based" (default)
    /// or "outer_product".
    pub covariance_estimator: Option<String>,
    /// Missing-regressor policy for conditional tests: "impute_regressors"
    /// (default) or "drop_rows".
    pub missing_policy: Option<String>,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// One test entry: a mnemonic plus window, optional CVT and lag counts.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub id: String,
    pub window: Option<WindowSpec>,
    pub cvt: Option<CvtConfig>,
    pub lags: Option<LagSpec>,
    /// VaR level for the binomial-type tests (default 0.99).
    pub var_level: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Named(String),
    Pair([f64; 2]),
}

impl WindowSpec {
    pub fn resolve(&self) -> Result<(f64, f64)> {
        match self {
            WindowSpec::Named(name) => match name.as_str() {
                "narrow" => Ok(NARROW),
                "wide" => Ok(WIDE),
                other => bail!("unknown window name {other:?} (use \"narrow\", \"wide\" or [a1, a2])"),
            },
            WindowSpec::Pair([a1, a2]) => {
                if !(*a1 >= 0.0 && a1 < a2 && *a2 <= 1.0) {
                    bail!("window [{a1}, {a2}] must satisfy 0 <= a1 < a2 <= 1");
                }
                Ok((*a1, *a2))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            WindowSpec::Named(name) => name.clone(),
            WindowSpec::Pair([a1, a2]) => format!("[{a1},{a2}]"),
        }
    }
}

/// Conditioning-variable transformation block.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "variant")]
pub enum CvtConfig {
    #[serde(rename = "EM1")]
    Em1 { threshold: Option<f64> },
    #[serde(rename = "EM2")]
    Em2 { threshold: Option<f64> },
    #[serde(rename = "MD4")]
    Md4,
    #[serde(rename = "MDhalf")]
    MdHalf,
    #[serde(rename = "powerV")]
    PowerV { exponent: f64 },
}

impl CvtConfig {
    pub fn to_core(&self) -> CvtSpec {
        match self {
            CvtConfig::Em1 { threshold } => {
                CvtSpec::IndicatorUpper { threshold: threshold.unwrap_or(0.99) }
            }
            CvtConfig::Em2 { threshold } => {
                CvtSpec::IndicatorTwoSided { threshold: threshold.unwrap_or(0.98) }
            }
            CvtConfig::Md4 => CvtSpec::md4(),
            CvtConfig::MdHalf => CvtSpec::md_half(),
            CvtConfig::PowerV { exponent } => CvtSpec::PowerOfV { exponent: *exponent },
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum LagSpec {
    Single(usize),
    Pair([usize; 2]),
}

impl LagSpec {
    fn mono(&self) -> usize {
        match self {
            LagSpec::Single(k) => *k,
            LagSpec::Pair([k1, _]) => *k1,
        }
    }

    fn pair(&self) -> (usize, usize) {
        match self {
            LagSpec::Single(k) => (*k, 0),
            LagSpec::Pair([k1, k2]) => (*k1, *k2),
        }
    }
}

/// Kernel block: {family, window, params, normalized}.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub window: Option<WindowSpec>,
    #[serde(default)]
    pub params: KernelParams,
    pub normalized: Option<bool>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub levels: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub level: Option<f64>,
    pub mass: Option<f64>,
}

impl KernelConfig {
    /// Build the kernel measure(s); the score-kernel family yields a pair.
    pub fn build(&self) -> Result<Vec<KernelMeasure>> {
        let window = || -> Result<(f64, f64)> {
            self.window
                .as_ref()
                .ok_or_else(|| anyhow!("kernel family {:?} needs a window", self.family))?
                .resolve()
        };
        let normalized = self.normalized.unwrap_or(true);
        let one = |k: specbt_core::error::Result<KernelMeasure>| -> Result<Vec<KernelMeasure>> {
            Ok(vec![k?])
        };
        match self.family.as_str() {
            "dirac" => {
                let level = self.params.level.ok_or_else(|| anyhow!("dirac kernel needs params.level"))?;
                one(KernelMeasure::dirac(level, self.params.mass.unwrap_or(1.0)))
            }
            "discrete" => {
                let levels = self
                    .params
                    .levels
                    .as_ref()
                    .ok_or_else(|| anyhow!("discrete kernel needs params.levels"))?;
                let weights = match &self.params.weights {
                    Some(w) => w.clone(),
                    None => vec![1.0; levels.len()],
                };
                one(KernelMeasure::discrete(
                    levels,
                    &weights,
                    self.label.clone().unwrap_or_else(|| "discrete".into()),
                ))
            }
            "beta" => {
                let a = self.params.a.ok_or_else(|| anyhow!("beta kernel needs params.a"))?;
                let b = self.params.b.ok_or_else(|| anyhow!("beta kernel needs params.b"))?;
                one(KernelMeasure::beta_family(
                    window()?,
                    a,
                    b,
                    normalized,
                    self.label.clone().unwrap_or_else(|| format!("beta({a},{b})")),
                ))
            }
            "uniform" => one(KernelMeasure::zu(window()?, normalized)),
            "arcsin" => one(KernelMeasure::za(window()?, normalized)),
            "epanechnikov" => one(KernelMeasure::ze(window()?, normalized)),
            "linear_inc" => one(KernelMeasure::zl_plus(window()?, normalized)),
            "linear_dec" => one(KernelMeasure::zl_minus(window()?, normalized)),
            "berkowitz" => one(KernelMeasure::berkowitz(window()?)),
            "pns" => {
                let (a1, a2) = window()?;
                let (k1, k2, _) = kernels::pns_pair(a1, a2)?;
                Ok(vec![k1, k2])
            }
            other => bail!("unknown kernel family {other:?}"),
        }
    }
}

/// Data-generating process block for the simulate command.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    /// "normal" or "scaled_t" (the latter requires `nu`).
    pub marginal: String,
    pub nu: Option<f64>,
    /// "iid" (default) or "arma11".
    pub dynamics: Option<String>,
    pub ar: Option<f64>,
    pub ma: Option<f64>,
}

impl DgpConfig {
    pub fn to_core(&self) -> Result<DgpSpec> {
        let marginal = match self.marginal.as_str() {
            "normal" => Marginal::Normal,
            "scaled_t" => Marginal::ScaledT {
                nu: self.nu.ok_or_else(|| anyhow!("scaled_t marginal needs nu"))?,
            },
            other => bail!("unknown marginal {other:?}"),
        };
        match self.dynamics.as_deref().unwrap_or("iid") {
            "iid" => Ok(DgpSpec::iid(marginal)),
            "arma11" => Ok(DgpSpec::arma(
                marginal,
                self.ar.unwrap_or(ARMA_AR),
                self.ma.unwrap_or(ARMA_MA),
            )?),
            other => bail!("unknown dynamics {other:?}"),
        }
    }
}

impl TestConfig {
    /// Translate into a core test definition.
    pub fn build(&self) -> Result<TestDefinition> {
        let window_spec =
            self.window.clone().unwrap_or(WindowSpec::Named("narrow".into()));
        let window = window_spec.resolve()?;
        let wlabel = window_spec.label();
        let var_level = self.var_level.unwrap_or(0.99);
        let cvt = self.cvt.as_ref().map(|c| c.to_core());
        let k = self.lags.map_or(4, |l| l.mono());
        let pair_lags = self.lags.map_or((4, 0), |l| l.pair());
        let levels3 = kernels::three_levels(window).to_vec();
        let levels5 = kernels::five_levels(window).to_vec();

        let def = match (self.id.as_str(), &cvt) {
            ("BIN", None) => {
                TestDefinition::new("BIN", wlabel, TestKind::BinomialScore(var_level))
            }
            ("BIN", Some(c)) => TestDefinition::new(
                "BIN",
                wlabel,
                TestKind::Md {
                    kernel: KernelMeasure::dirac(var_level, 1.0)?,
                    cvt: c.clone(),
                    lags: k,
                },
            ),
            ("LR1", _) => TestDefinition::new("LR1", wlabel, TestKind::BinomialLr(var_level)),
            ("LR3", _) => TestDefinition::new("LR3", wlabel, TestKind::MultinomialLr(levels3)),
            ("LRB", _) => TestDefinition::new(
                "LRB",
                wlabel,
                TestKind::BerkowitzLr { alpha1: window.0, alpha2: window.1 },
            ),
            ("PE3", _) => TestDefinition::new("PE3", wlabel, TestKind::Pearson(levels3)),
            ("PE5", _) => TestDefinition::new("PE5", wlabel, TestKind::Pearson(levels5)),
            ("ZU3", None) => {
                TestDefinition::new("ZU3", wlabel, TestKind::MonoZ(KernelMeasure::zu3(window)?))
            }
            ("ZU5", None) => {
                TestDefinition::new("ZU5", wlabel, TestKind::MonoZ(KernelMeasure::zu5(window)?))
            }
            ("ZU3", Some(c)) => TestDefinition::new(
                "ZU3",
                wlabel,
                TestKind::Md { kernel: KernelMeasure::zu3(window)?, cvt: c.clone(), lags: k },
            ),
            ("ZU5", Some(c)) => TestDefinition::new(
                "ZU5",
                wlabel,
                TestKind::Md { kernel: KernelMeasure::zu5(window)?, cvt: c.clone(), lags: k },
            ),
            (id @ ("ZU" | "ZA" | "ZE" | "ZL+" | "ZL-"), _) => {
                let kernel = match id {
                    "ZU" => KernelMeasure::zu(window, true)?,
                    "ZA" => KernelMeasure::za(window, true)?,
                    "ZE" => KernelMeasure::ze(window, true)?,
                    "ZL+" => KernelMeasure::zl_plus(window, true)?,
                    _ => KernelMeasure::zl_minus(window, true)?,
                };
                match &cvt {
                    None => TestDefinition::new(id, wlabel, TestKind::MonoZ(kernel)),
                    Some(c) => TestDefinition::new(
                        id,
                        wlabel,
                        TestKind::Md { kernel, cvt: c.clone(), lags: k },
                    ),
                }
            }
            ("ZLL", None) => TestDefinition::new(
                "ZLL",
                wlabel,
                TestKind::MultiZ(vec![
                    KernelMeasure::zl_plus(window, true)?,
                    KernelMeasure::zl_minus(window, true)?,
                ]),
            ),
            ("ZLL", Some(c)) => TestDefinition::new(
                "ZLL",
                wlabel,
                TestKind::BispectralMd {
                    kernel_pair: Box::new([
                        KernelMeasure::zl_plus(window, true)?,
                        KernelMeasure::zl_minus(window, true)?,
                    ]),
                    cvts: Box::new([c.clone(), c.clone()]),
                    lags: pair_lags,
                },
            ),
            ("PNS", None) => TestDefinition::new(
                "PNS",
                wlabel,
                TestKind::PnsScore { alpha1: window.0, alpha2: window.1 },
            ),
            ("PNS", Some(c)) => {
                let (k1, k2, _) = kernels::pns_pair(window.0, window.1)?;
                TestDefinition::new(
                    "PNS",
                    wlabel,
                    TestKind::BispectralMd {
                        kernel_pair: Box::new([k1, k2]),
                        cvts: Box::new([c.clone(), c.clone()]),
                        lags: pair_lags,
                    },
                )
            }
            (other, _) => bail!("unknown test id {other:?}"),
        };
        Ok(def.with_cvt(cvt.map_or("None".to_string(), |c| c.label())))
    }
}

/// Default backtest battery: the unconditional tests on both windows.
pub fn default_backtest_tests() -> Result<Vec<TestDefinition>> {
    use specbt_core::simulation::presets;
    let mut tests = presets::unconditional_battery(NARROW)?;
    tests.extend(presets::unconditional_battery(WIDE)?);
    Ok(tests)
}

/// Conditional-test options from the config file.
pub fn conditional_config(cfg: &RunConfig) -> Result<specbt_core::conditional::ConditionalConfig> {
    use specbt_core::conditional::{ConditionalConfig, CovEstimator, MissingPolicy};
    let estimator = match cfg.covariance_estimator.as_deref() {
        None | Some("null_based") => CovEstimator::NullBased,
        Some("outer_product") => CovEstimator::OuterProduct,
        Some(other) => bail!("unknown covariance_estimator {other:?}"),
    };
    let missing_policy = match cfg.missing_policy.as_deref() {
        None | Some("impute_regressors") => MissingPolicy::ImputeRegressors,
        Some("drop_rows") => MissingPolicy::DropRows,
        Some(other) => bail!("unknown missing_policy {other:?}"),
    };
    Ok(ConditionalConfig { estimator, missing_policy })
}
