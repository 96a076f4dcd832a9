//! Preset simulation grids mirroring the published size/power experiments.

use super::{DgpSpec, Marginal, SimulationSpec, TestDefinition, TestKind};
use crate::conditional::CvtSpec;
use crate::error::{Error, Result};
use crate::kernels::{three_levels, KernelMeasure};

/// Narrow kernel window.
pub const NARROW: (f64, f64) = (0.985, 0.995);
/// Wide kernel window.
pub const WIDE: (f64, f64) = (0.95, 0.995);
/// Default backtest sample length.
pub const DEFAULT_N: usize = 750;
/// ARMA parameters calibrated to volatility-driven PIT dependence.
pub const ARMA_AR: f64 = 0.95;
pub const ARMA_MA: f64 = -0.85;

/// Identifier of a preset table grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaperTable {
    /// Unconditional Z-tests, both windows, iid DGPs.
    T2,
    /// Conditional tests for the uniform kernel on the narrow window.
    T4,
    /// Discrete 3- vs 5-level tests.
    S1,
    /// Unconditional Z-tests across sample sizes 250/500/750.
    S2,
    /// LR-tests versus Z-tests.
    S3,
    /// Size of conditional tests (iid uniform data).
    S4,
    /// Power of conditional tests (ARMA-driven data).
    S5,
}

impl std::str::FromStr for PaperTable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "2" | "T2" => Ok(PaperTable::T2),
            "4" | "T4" => Ok(PaperTable::T4),
            "S1" => Ok(PaperTable::S1),
            "S2" => Ok(PaperTable::S2),
            "S3" => Ok(PaperTable::S3),
            "S4" => Ok(PaperTable::S4),
            "S5" => Ok(PaperTable::S5),
            other => Err(Error::domain("paper_table", format!("unknown table {other}"))),
        }
    }
}

fn window_name(window: (f64, f64)) -> &'static str {
    if window == NARROW {
        "narrow"
    } else if window == WIDE {
        "wide"
    } else {
        "custom"
    }
}

fn iid_dgps() -> Vec<DgpSpec> {
    vec![
        DgpSpec::iid(Marginal::Normal),
        DgpSpec::iid(Marginal::ScaledT { nu: 5.0 }),
        DgpSpec::iid(Marginal::ScaledT { nu: 3.0 }),
    ]
}

/// The unconditional Z-test battery on one window:
/// BIN, ZU3, PE3, ZU, ZA, ZE, ZL+, ZL-, ZLL, PNS.
pub fn unconditional_battery(window: (f64, f64)) -> Result<Vec<TestDefinition>> {
    let w = window_name(window);
    let levels3 = three_levels(window).to_vec();
    Ok(vec![
        TestDefinition::new("BIN", w, TestKind::BinomialScore(0.99)),
        TestDefinition::new("ZU3", w, TestKind::MonoZ(KernelMeasure::zu3(window)?)),
        TestDefinition::new("PE3", w, TestKind::Pearson(levels3)),
        TestDefinition::new("ZU", w, TestKind::MonoZ(KernelMeasure::zu(window, true)?)),
        TestDefinition::new("ZA", w, TestKind::MonoZ(KernelMeasure::za(window, true)?)),
        TestDefinition::new("ZE", w, TestKind::MonoZ(KernelMeasure::ze(window, true)?)),
        TestDefinition::new("ZL+", w, TestKind::MonoZ(KernelMeasure::zl_plus(window, true)?)),
        TestDefinition::new("ZL-", w, TestKind::MonoZ(KernelMeasure::zl_minus(window, true)?)),
        TestDefinition::new(
            "ZLL",
            w,
            TestKind::MultiZ(vec![
                KernelMeasure::zl_plus(window, true)?,
                KernelMeasure::zl_minus(window, true)?,
            ]),
        ),
        TestDefinition::new(
            "PNS",
            w,
            TestKind::PnsScore { alpha1: window.0, alpha2: window.1 },
        ),
    ])
}

/// Discrete-kernel battery: BIN, ZU3, ZU5, PE3, PE5.
fn discrete_battery(window: (f64, f64)) -> Result<Vec<TestDefinition>> {
    let w = window_name(window);
    let levels3 = three_levels(window).to_vec();
    let levels5 = crate::kernels::five_levels(window).to_vec();
    Ok(vec![
        TestDefinition::new("BIN", w, TestKind::BinomialScore(0.99)),
        TestDefinition::new("ZU3", w, TestKind::MonoZ(KernelMeasure::zu3(window)?)),
        TestDefinition::new("ZU5", w, TestKind::MonoZ(KernelMeasure::zu5(window)?)),
        TestDefinition::new("PE3", w, TestKind::Pearson(levels3)),
        TestDefinition::new("PE5", w, TestKind::Pearson(levels5)),
    ])
}

/// LR-versus-Z battery: BIN, LR1, ZU3, PE3, LR3, PNS, LRB.
fn lr_battery(window: (f64, f64)) -> Result<Vec<TestDefinition>> {
    let w = window_name(window);
    let levels3 = three_levels(window).to_vec();
    Ok(vec![
        TestDefinition::new("BIN", w, TestKind::BinomialScore(0.99)),
        TestDefinition::new("LR1", w, TestKind::BinomialLr(0.99)),
        TestDefinition::new("ZU3", w, TestKind::MonoZ(KernelMeasure::zu3(window)?)),
        TestDefinition::new("PE3", w, TestKind::Pearson(levels3.clone())),
        TestDefinition::new("LR3", w, TestKind::MultinomialLr(levels3)),
        TestDefinition::new("PNS", w, TestKind::PnsScore { alpha1: window.0, alpha2: window.1 }),
        TestDefinition::new(
            "LRB",
            w,
            TestKind::BerkowitzLr { alpha1: window.0, alpha2: window.1 },
        ),
    ])
}

/// Conditional test definition for one kernel mnemonic, CVT and lag count.
/// `cvt = None` yields the corresponding unconditional test.
pub fn conditional_test(
    mnemonic: &str,
    window: (f64, f64),
    cvt: Option<CvtSpec>,
    lags: usize,
) -> Result<TestDefinition> {
    let w = window_name(window);
    let kernel = |k: Result<KernelMeasure>| k;
    let def = match (mnemonic, &cvt) {
        ("BIN", None) => TestDefinition::new("BIN", w, TestKind::BinomialScore(0.99)),
        ("BIN", Some(c)) => TestDefinition::new(
            "BIN",
            w,
            TestKind::Md { kernel: KernelMeasure::dirac(0.99, 1.0)?, cvt: c.clone(), lags },
        ),
        ("ZU", None) => {
            TestDefinition::new("ZU", w, TestKind::MonoZ(KernelMeasure::zu(window, true)?))
        }
        ("ZU", Some(c)) => TestDefinition::new(
            "ZU",
            w,
            TestKind::Md { kernel: kernel(KernelMeasure::zu(window, true))?, cvt: c.clone(), lags },
        ),
        ("ZL+", None) => {
            TestDefinition::new("ZL+", w, TestKind::MonoZ(KernelMeasure::zl_plus(window, true)?))
        }
        ("ZL+", Some(c)) => TestDefinition::new(
            "ZL+",
            w,
            TestKind::Md { kernel: KernelMeasure::zl_plus(window, true)?, cvt: c.clone(), lags },
        ),
        ("ZL-", None) => {
            TestDefinition::new("ZL-", w, TestKind::MonoZ(KernelMeasure::zl_minus(window, true)?))
        }
        ("ZL-", Some(c)) => TestDefinition::new(
            "ZL-",
            w,
            TestKind::Md { kernel: KernelMeasure::zl_minus(window, true)?, cvt: c.clone(), lags },
        ),
        ("ZLL", None) => TestDefinition::new(
            "ZLL",
            w,
            TestKind::MultiZ(vec![
                KernelMeasure::zl_plus(window, true)?,
                KernelMeasure::zl_minus(window, true)?,
            ]),
        ),
        // Bispectral tests put the lags on the first kernel only, matching
        // the monospectral lag horizon.
        ("ZLL", Some(c)) => TestDefinition::new(
            "ZLL",
            w,
            TestKind::BispectralMd {
                kernel_pair: Box::new([
                    KernelMeasure::zl_plus(window, true)?,
                    KernelMeasure::zl_minus(window, true)?,
                ]),
                cvts: Box::new([c.clone(), c.clone()]),
                lags: (lags, 0),
            },
        ),
        ("PNS", None) => TestDefinition::new(
            "PNS",
            w,
            TestKind::PnsScore { alpha1: window.0, alpha2: window.1 },
        ),
        ("PNS", Some(c)) => {
            let (k1, k2, _) = crate::kernels::pns_pair(window.0, window.1)?;
            TestDefinition::new(
                "PNS",
                w,
                TestKind::BispectralMd {
                    kernel_pair: Box::new([k1, k2]),
                    cvts: Box::new([c.clone(), c.clone()]),
                    lags: (lags, 0),
                },
            )
        }
        (other, _) => {
            return Err(Error::domain("conditional_test", format!("unknown mnemonic {other}")))
        }
    };
    Ok(def.with_cvt(cvt.map_or("None".to_string(), |c| c.label())))
}

fn conditional_battery(window: (f64, f64), lags: usize) -> Result<Vec<TestDefinition>> {
    let cvts: [Option<CvtSpec>; 5] = [
        None,
        Some(CvtSpec::em1()),
        Some(CvtSpec::em2()),
        Some(CvtSpec::md4()),
        Some(CvtSpec::md_half()),
    ];
    let mut tests = Vec::new();
    for mnemonic in ["BIN", "ZU", "ZL+", "ZL-", "ZLL", "PNS"] {
        for cvt in &cvts {
            tests.push(conditional_test(mnemonic, window, cvt.clone(), lags)?);
        }
    }
    Ok(tests)
}

/// Build the simulation specs for a preset table. Most presets are a single
/// spec; the sample-size study returns one spec per sample length.
pub fn build(
    table: PaperTable,
    reps: u64,
    seed: u64,
    n: Option<usize>,
    workers: Option<usize>,
) -> Result<Vec<SimulationSpec>> {
    let n = n.unwrap_or(DEFAULT_N);
    let spec = |n: usize, dgps: Vec<DgpSpec>, tests: Vec<TestDefinition>| SimulationSpec {
        n,
        reps,
        seed,
        level: 0.05,
        dgps,
        tests,
        workers,
    };
    Ok(match table {
        PaperTable::T2 => {
            let mut tests = unconditional_battery(NARROW)?;
            tests.extend(unconditional_battery(WIDE)?);
            vec![spec(n, iid_dgps(), tests)]
        }
        PaperTable::T4 => {
            let dgps = vec![
                DgpSpec::iid(Marginal::Normal),
                DgpSpec::arma(Marginal::Normal, ARMA_AR, ARMA_MA)?,
                DgpSpec::arma(Marginal::ScaledT { nu: 5.0 }, ARMA_AR, ARMA_MA)?,
            ];
            let cvts: [Option<CvtSpec>; 5] = [
                None,
                Some(CvtSpec::em1()),
                Some(CvtSpec::em2()),
                Some(CvtSpec::md4()),
                Some(CvtSpec::md_half()),
            ];
            let tests = cvts
                .iter()
                .map(|c| conditional_test("ZU", NARROW, c.clone(), 4))
                .collect::<Result<_>>()?;
            vec![spec(n, dgps, tests)]
        }
        PaperTable::S1 => {
            let mut tests = discrete_battery(NARROW)?;
            tests.extend(discrete_battery(WIDE)?);
            vec![spec(n, iid_dgps(), tests)]
        }
        PaperTable::S2 => {
            let mut tests = unconditional_battery(NARROW)?;
            tests.extend(unconditional_battery(WIDE)?);
            [250, 500, 750]
                .iter()
                .map(|&n| spec(n, iid_dgps(), tests.clone()))
                .collect()
        }
        PaperTable::S3 => {
            let mut tests = lr_battery(NARROW)?;
            tests.extend(lr_battery(WIDE)?);
            vec![spec(n, iid_dgps(), tests)]
        }
        PaperTable::S4 => {
            let mut tests = conditional_battery(NARROW, 4)?;
            tests.extend(conditional_battery(WIDE, 4)?);
            vec![spec(n, vec![DgpSpec::iid(Marginal::Normal)], tests)]
        }
        PaperTable::S5 => {
            let dgps = vec![
                DgpSpec::arma(Marginal::Normal, ARMA_AR, ARMA_MA)?,
                DgpSpec::arma(Marginal::ScaledT { nu: 5.0 }, ARMA_AR, ARMA_MA)?,
                DgpSpec::arma(Marginal::ScaledT { nu: 3.0 }, ARMA_AR, ARMA_MA)?,
            ];
            let mut tests = conditional_battery(NARROW, 4)?;
            tests.extend(conditional_battery(WIDE, 4)?);
            vec![spec(n, dgps, tests)]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_shapes() {
        assert_eq!(unconditional_battery(NARROW).unwrap().len(), 10);
        assert_eq!(discrete_battery(WIDE).unwrap().len(), 5);
        assert_eq!(lr_battery(WIDE).unwrap().len(), 7);
        let t2 = build(PaperTable::T2, 10, 1, None, Some(1)).unwrap();
        assert_eq!(t2.len(), 1);
        assert_eq!(t2[0].tests.len(), 20);
        assert_eq!(t2[0].dgps.len(), 3);
        let s2 = build(PaperTable::S2, 10, 1, None, Some(1)).unwrap();
        assert_eq!(s2.len(), 3);
        let s4 = build(PaperTable::S4, 10, 1, None, Some(1)).unwrap();
        assert_eq!(s4[0].tests.len(), 60);
    }

    #[test]
    fn table_parse() {
        assert_eq!("2".parse::<PaperTable>().unwrap(), PaperTable::T2);
        assert_eq!("s4".parse::<PaperTable>().unwrap(), PaperTable::S4);
        assert!("x9".parse::<PaperTable>().is_err());
    }
}
