//! Data-generating processes and the Monte Carlo size/power harness.
//!
//! Losses are drawn from a true model (standard normal or unit-variance
//! scaled Student t), optionally driven by a Gaussian ARMA(1,1) process that
//! mimics the serial dependence left in PIT values when stochastic
//! volatility is ignored. The reporting model is always the standard normal,
//! so reported PITs are P = Phi(L).
//!
//! Replications are keyed to counter-based random streams, so results are
//! bit-identical for a fixed seed regardless of worker count or execution
//! order.

use crate::conditional::{CovEstimator, CvtSpec, PreparedBiMd, PreparedMd};
use crate::error::{Error, Result};
use crate::kernels::KernelMeasure;
use crate::special::{std_normal_cdf, std_normal_quantile, student_t_quantile};
use crate::unconditional::{self, PreparedMono, PreparedMulti};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub mod presets;

/// Marginal distribution of the losses under the true model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    Normal,
    /// Student t with `nu` degrees of freedom, scaled to unit variance.
    ScaledT { nu: f64 },
}

impl Marginal {
    /// Quantile function of the loss distribution.
    fn quantile(&self, u: f64) -> Result<f64> {
        match *self {
            Marginal::Normal => std_normal_quantile(u),
            Marginal::ScaledT { nu } => {
                Ok(student_t_quantile(u, nu)? * ((nu - 2.0) / nu).sqrt())
            }
        }
    }

    fn label(&self) -> String {
        match *self {
            Marginal::Normal => "Normal".into(),
            Marginal::ScaledT { nu } => format!("Scaled t{nu}"),
        }
    }
}

/// Serial dependence structure of the PIT-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Iid,
    Arma11 { ar: f64, ma: f64 },
}

/// A data-generating process for pseudo PIT values.
#[derive(Debug, Clone, Serialize)]
pub struct DgpSpec {
    pub marginal: Marginal,
    pub dynamics: Dynamics,
    pub label: String,
}

impl DgpSpec {
    pub fn iid(marginal: Marginal) -> Self {
        let label = marginal.label();
        DgpSpec { marginal, dynamics: Dynamics::Iid, label }
    }

    pub fn arma(marginal: Marginal, ar: f64, ma: f64) -> Result<Self> {
        if !(ar.abs() < 1.0) {
            return Err(Error::domain("DgpSpec", format!("ar = {ar} not stationary")));
        }
        let label = format!("{} ARMA({ar},{ma})", marginal.label());
        Ok(DgpSpec { marginal, dynamics: Dynamics::Arma11 { ar, ma }, label })
    }

    /// Draw a sample of `n` reported PIT values.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        match self.dynamics {
            Dynamics::Iid => self.sample_iid(n, rng),
            Dynamics::Arma11 { ar, ma } => self.sample_arma(n, ar, ma, rng),
        }
    }

    fn sample_iid(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let mut pits = Vec::with_capacity(n);
        for _ in 0..n {
            let u = open_unit(rng);
            let loss = self.marginal.quantile(u)?;
            pits.push(std_normal_cdf(loss));
        }
        Ok(pits)
    }

    /// ARMA-driven PITs: a unit-variance Gaussian ARMA(1,1) process is mapped
    /// to uniforms, the fold V(u) = |2u - 1| is inverted stochastically with
    /// fair coin flips, and losses follow by quantile transform.
    fn sample_arma(&self, n: usize, ar: f64, ma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let denom = 1.0 + 2.0 * ar * ma + ma * ma;
        if !(denom > 0.0) {
            return Err(Error::domain("DgpSpec", "ARMA parameters give no unit-variance scaling"));
        }
        let sigma_eps2 = (1.0 - ar * ar) / denom;
        let sigma_eps = sigma_eps2.sqrt();
        // Stationary joint start for (Z, eps) when representable, then a
        // burn-in pass to erase any residual initialization effect.
        let mut eps_prev = sigma_eps * draw_normal(rng)?;
        let mut z = if sigma_eps2 <= 1.0 {
            eps_prev + (1.0 - sigma_eps2).sqrt() * draw_normal(rng)?
        } else {
            0.0
        };
        const BURN_IN: usize = 1000;
        let mut pits = Vec::with_capacity(n);
        for step in 0..(BURN_IN + n) {
            let eps = sigma_eps * draw_normal(rng)?;
            z = ar * z + eps + ma * eps_prev;
            eps_prev = eps;
            // The coin flip is drawn every step to keep the stream layout
            // independent of the burn-in length.
            let heads = rng.gen::<bool>();
            if step < BURN_IN {
                continue;
            }
            let folded = std_normal_cdf(z);
            let u = if heads { 0.5 * (1.0 + folded) } else { 0.5 * (1.0 - folded) };
            let loss = self.marginal.quantile(u.clamp(1e-300, 1.0 - 1e-16))?;
            pits.push(std_normal_cdf(loss));
        }
        Ok(pits)
    }
}

/// Uniform draw from the open unit interval.
fn open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal draw by inverse transform, keeping the stream layout at
/// exactly one uniform per variate.
fn draw_normal(rng: &mut impl Rng) -> Result<f64> {
    std_normal_quantile(open_unit(rng))
}

/// Reproducible sub-stream for one replication: a counter-based generator
/// keyed by the seed with the replication index as the stream id. Streams
/// are statistically independent and independent of execution order.
pub fn derive_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// One test configuration inside a simulation grid.
#[derive(Debug, Clone)]
pub struct TestDefinition {
    pub id: String,
    pub window: String,
    pub cvt: String,
    pub kind: TestKind,
}

#[derive(Debug, Clone)]
pub enum TestKind {
    MonoZ(KernelMeasure),
    MultiZ(Vec<KernelMeasure>),
    Pearson(Vec<f64>),
    BinomialScore(f64),
    BinomialLr(f64),
    MultinomialLr(Vec<f64>),
    BerkowitzLr { alpha1: f64, alpha2: f64 },
    PnsScore { alpha1: f64, alpha2: f64 },
    Md { kernel: KernelMeasure, cvt: CvtSpec, lags: usize },
    BispectralMd { kernel_pair: Box<[KernelMeasure; 2]>, cvts: Box<[CvtSpec; 2]>, lags: (usize, usize) },
}

impl TestDefinition {
    pub fn new(id: impl Into<String>, window: impl Into<String>, kind: TestKind) -> Self {
        TestDefinition { id: id.into(), window: window.into(), cvt: "None".into(), kind }
    }

    pub fn with_cvt(mut self, cvt: impl Into<String>) -> Self {
        self.cvt = cvt.into();
        self
    }
}

/// A test definition compiled into its precomputed runnable form.
enum PreparedTest {
    Mono(PreparedMono),
    Multi(PreparedMulti),
    Pearson(Vec<f64>),
    BinomialScore(PreparedMono),
    BinomialLr(f64),
    MultinomialLr(Vec<f64>),
    BerkowitzLr { alpha1: f64, alpha2: f64 },
    PnsScore { alpha1: f64, alpha2: f64 },
    Md(PreparedMd),
    BiMd(PreparedBiMd),
}

impl PreparedTest {
    fn prepare(def: &TestDefinition) -> Result<Self> {
        Ok(match &def.kind {
            TestKind::MonoZ(kernel) => {
                PreparedTest::Mono(PreparedMono::new(def.id.clone(), kernel.clone())?)
            }
            TestKind::MultiZ(set) => {
                PreparedTest::Multi(PreparedMulti::new(def.id.clone(), set.clone())?)
            }
            TestKind::Pearson(levels) => PreparedTest::Pearson(levels.clone()),
            TestKind::BinomialScore(alpha) => PreparedTest::BinomialScore(PreparedMono::new(
                def.id.clone(),
                KernelMeasure::dirac(*alpha, 1.0)?,
            )?),
            TestKind::BinomialLr(alpha) => PreparedTest::BinomialLr(*alpha),
            TestKind::MultinomialLr(levels) => PreparedTest::MultinomialLr(levels.clone()),
            TestKind::BerkowitzLr { alpha1, alpha2 } => {
                PreparedTest::BerkowitzLr { alpha1: *alpha1, alpha2: *alpha2 }
            }
            TestKind::PnsScore { alpha1, alpha2 } => {
                // Validate the window once up front.
                unconditional::fisher_information(*alpha1, *alpha2)?;
                PreparedTest::PnsScore { alpha1: *alpha1, alpha2: *alpha2 }
            }
            TestKind::Md { kernel, cvt, lags } => PreparedTest::Md(PreparedMd::new(
                def.id.clone(),
                kernel.clone(),
                cvt.clone(),
                *lags,
            )?),
            TestKind::BispectralMd { kernel_pair, cvts, lags } => PreparedTest::BiMd(
                PreparedBiMd::new(def.id.clone(), (**kernel_pair).clone(), (**cvts).clone(), *lags)?,
            ),
        })
    }

    /// p-value on a gap-free sample.
    fn p_value(&self, pits: &[f64]) -> Result<f64> {
        match self {
            PreparedTest::Mono(t) | PreparedTest::BinomialScore(t) => {
                Ok(t.run_slice(pits)?.p_value)
            }
            PreparedTest::Multi(t) => Ok(t.run_slice(pits)?.p_value),
            PreparedTest::Pearson(levels) => {
                Ok(unconditional::pearson_multinomial_slice(levels, pits)?.p_value)
            }
            PreparedTest::BinomialLr(alpha) => {
                Ok(unconditional::binomial_lr_slice(*alpha, pits)?.p_value)
            }
            PreparedTest::MultinomialLr(levels) => {
                Ok(unconditional::multinomial_lr_slice(levels, pits)?.p_value)
            }
            PreparedTest::BerkowitzLr { alpha1, alpha2 } => {
                Ok(unconditional::berkowitz_lr_slice(*alpha1, *alpha2, pits)?.p_value)
            }
            PreparedTest::PnsScore { alpha1, alpha2 } => {
                Ok(unconditional::pns_score_slice(*alpha1, *alpha2, pits)?.p_value)
            }
            PreparedTest::Md(t) => {
                let (stat, _) = t.statistic_slice(pits, CovEstimator::NullBased)?;
                crate::special::chi_square_sf(stat, (t.lags + 1) as u32)
            }
            PreparedTest::BiMd(t) => {
                let stat = t.statistic_slice(pits)?;
                crate::special::chi_square_sf(stat, (t.lags.0 + t.lags.1 + 2) as u32)
            }
        }
    }
}

/// Run a test definition against a daily series (gaps allowed), overriding
/// the result metadata with the definition's identifiers.
pub fn run_definition(
    def: &TestDefinition,
    pits: &crate::series::PitSeries,
    config: crate::conditional::ConditionalConfig,
) -> Result<crate::unconditional::TestResult> {
    let mut result = match &def.kind {
        TestKind::MonoZ(kernel) => {
            PreparedMono::new(def.id.clone(), kernel.clone())?.run(pits)?
        }
        TestKind::MultiZ(set) => PreparedMulti::new(def.id.clone(), set.clone())?.run(pits)?,
        TestKind::Pearson(levels) => unconditional::pearson_multinomial_test(levels, pits)?,
        TestKind::BinomialScore(alpha) => unconditional::binomial_score_test(*alpha, pits)?,
        TestKind::BinomialLr(alpha) => unconditional::binomial_lr_test(*alpha, pits)?,
        TestKind::MultinomialLr(levels) => unconditional::multinomial_lr_test(levels, pits)?,
        TestKind::BerkowitzLr { alpha1, alpha2 } => {
            unconditional::berkowitz_lr_test(*alpha1, *alpha2, pits)?
        }
        TestKind::PnsScore { alpha1, alpha2 } => {
            unconditional::pns_score_test(*alpha1, *alpha2, pits)?
        }
        TestKind::Md { kernel, cvt, lags } => {
            PreparedMd::new(def.id.clone(), kernel.clone(), cvt.clone(), *lags)?
                .run(pits, config)?
        }
        TestKind::BispectralMd { kernel_pair, cvts, lags } => PreparedBiMd::new(
            def.id.clone(),
            (**kernel_pair).clone(),
            (**cvts).clone(),
            *lags,
        )?
        .run(pits, config)?,
    };
    result.test_id = def.id.clone();
    result.window = def.window.clone();
    result.cvt = if def.cvt == "None" { None } else { Some(def.cvt.clone()) };
    Ok(result)
}

/// Full specification of one simulation run.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    /// Rejection level for the power estimates.
    pub level: f64,
    pub dgps: Vec<DgpSpec>,
    pub tests: Vec<TestDefinition>,
    /// Thread count for the harness; `None` uses the global pool.
    pub workers: Option<usize>,
}

/// One cell of a size/power table.
#[derive(Debug, Clone, Serialize)]
pub struct PowerRow {
    pub dgp: String,
    pub test: String,
    pub window: String,
    pub cvt: String,
    pub n: usize,
    pub reps: u64,
    pub rejections: u64,
    /// Replications where the test was not computable (singular regressor
    /// matrices and the like), excluded from the estimate.
    pub failures: u64,
    /// Rejection percentage among computable replications.
    pub estimate: f64,
    /// Monte Carlo standard error of the estimate, in percentage points.
    pub se: f64,
}

/// Size/power estimates for a grid of (DGP, test) cells.
#[derive(Debug, Clone, Serialize)]
pub struct PowerTable {
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    pub level: f64,
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn find(&self, dgp: &str, test: &str) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.dgp == dgp && r.test == test)
    }
}

/// Run the Monte Carlo grid: for each replication of each DGP, draw one PIT
/// sample and apply every configured test to it. Deterministic for a fixed
/// seed regardless of the worker count.
pub fn run_size_power(spec: &SimulationSpec) -> Result<PowerTable> {
    if spec.reps == 0 {
        return Err(Error::domain("run_size_power", "reps must be at least 1"));
    }
    let prepared: Vec<PreparedTest> =
        spec.tests.iter().map(PreparedTest::prepare).collect::<Result<_>>()?;
    let run_all = |dgp_index: usize| -> Result<Vec<(u64, u64)>> {
        let dgp = &spec.dgps[dgp_index];
        (0..spec.reps)
            .into_par_iter()
            .map(|rep| -> Result<Vec<(u64, u64)>> {
                let mut rng = derive_stream(spec.seed, dgp_index as u64 * spec.reps + rep);
                let pits = dgp.sample(spec.n, &mut rng)?;
                let mut cell = Vec::with_capacity(prepared.len());
                for test in &prepared {
                    match test.p_value(&pits) {
                        Ok(p) => cell.push((u64::from(p < spec.level), 0u64)),
                        Err(
                            Error::SingularH(_)
                            | Error::SingularCovariance(_)
                            | Error::OptimizationFailure(_),
                        ) => cell.push((0, 1)),
                        Err(e) => return Err(e),
                    }
                }
                Ok(cell)
            })
            .try_reduce(
                || vec![(0u64, 0u64); prepared.len()],
                |mut acc, cell| {
                    for (a, c) in acc.iter_mut().zip(cell) {
                        a.0 += c.0;
                        a.1 += c.1;
                    }
                    Ok(acc)
                },
            )
    };

    let mut per_dgp: Vec<Vec<(u64, u64)>> = Vec::with_capacity(spec.dgps.len());
    if let Some(workers) = spec.workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::domain("run_size_power", e.to_string()))?;
        for d in 0..spec.dgps.len() {
            per_dgp.push(pool.install(|| run_all(d))?);
        }
    } else {
        for d in 0..spec.dgps.len() {
            per_dgp.push(run_all(d)?);
        }
    }

    let mut rows = Vec::with_capacity(spec.dgps.len() * spec.tests.len());
    for (d, dgp) in spec.dgps.iter().enumerate() {
        for (t, def) in spec.tests.iter().enumerate() {
            let (rejections, failures) = per_dgp[d][t];
            let computable = spec.reps - failures;
            let (estimate, se) = if computable > 0 {
                let p = rejections as f64 / computable as f64;
                (100.0 * p, 100.0 * (p * (1.0 - p) / computable as f64).sqrt())
            } else {
                (f64::NAN, f64::NAN)
            };
            rows.push(PowerRow {
                dgp: dgp.label.clone(),
                test: def.id.clone(),
                window: def.window.clone(),
                cvt: def.cvt.clone(),
                n: spec.n,
                reps: spec.reps,
                rejections,
                failures,
                estimate,
                se,
            });
        }
    }
    Ok(PowerTable { n: spec.n, reps: spec.reps, seed: spec.seed, level: spec.level, rows })
}

/// Combined three-standard-error acceptance half-width (in percentage
/// points) when comparing an estimate at `reps` replications against a
/// reference value computed from `ref_reps` replications.
pub fn three_sigma_band(reference_pct: f64, reps: u64, ref_reps: u64) -> f64 {
    let p = reference_pct / 100.0;
    let var = p * (1.0 - p) * (1.0 / reps as f64 + 1.0 / ref_reps as f64);
    300.0 * var.sqrt()
}
