//! Martingale-difference tests of conditional coverage.
//!
//! Under correct conditional coverage the centered transform W_t - mu_W is a
//! martingale difference with respect to the history of reported PIT values,
//! so its product with any bounded function of lagged PITs has mean zero.
//! The tests regress the centered transform on a constant and k lagged
//! conditioning-variable transformations (CVTs) and form the chi-square
//! quadratic form of the average products.

use crate::error::{Error, Result, Warning};
use crate::kernels::{self, KernelMeasure};
use crate::series::PitSeries;
use crate::unconditional::TestResult;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Conditioning-variable transformation h(p), bounded in [0, 1].
///
/// `V(p) = |2p - 1|` folds the unit interval around its midpoint; tail PIT
/// values on either side map near 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum CvtSpec {
    /// 1{p >= threshold}: flags upper-tail PIT values.
    IndicatorUpper { threshold: f64 },
    /// 1{V(p) >= threshold}: flags PIT values near either boundary.
    IndicatorTwoSided { threshold: f64 },
    /// V(p)^exponent.
    PowerOfV { exponent: f64 },
}

impl CvtSpec {
    /// Upper-tail indicator at 0.99.
    pub fn em1() -> Self {
        CvtSpec::IndicatorUpper { threshold: 0.99 }
    }

    /// Two-sided indicator at V(p) >= 0.98.
    pub fn em2() -> Self {
        CvtSpec::IndicatorTwoSided { threshold: 0.98 }
    }

    /// Fourth power of V.
    pub fn md4() -> Self {
        CvtSpec::PowerOfV { exponent: 4.0 }
    }

    /// Square root of V.
    pub fn md_half() -> Self {
        CvtSpec::PowerOfV { exponent: 0.5 }
    }

    pub fn apply(&self, p: f64) -> f64 {
        let v = (2.0 * p - 1.0).abs();
        match *self {
            CvtSpec::IndicatorUpper { threshold } => {
                if p >= threshold {
                    1.0
                } else {
                    0.0
                }
            }
            CvtSpec::IndicatorTwoSided { threshold } => {
                if v >= threshold {
                    1.0
                } else {
                    0.0
                }
            }
            CvtSpec::PowerOfV { exponent } => v.powf(exponent),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            CvtSpec::IndicatorUpper { threshold } if threshold == 0.99 => "EM1".into(),
            CvtSpec::IndicatorTwoSided { threshold } if threshold == 0.98 => "EM2".into(),
            CvtSpec::PowerOfV { exponent } if exponent == 4.0 => "MDfour".into(),
            CvtSpec::PowerOfV { exponent } if exponent == 0.5 => "MDhalf".into(),
            CvtSpec::IndicatorUpper { threshold } => format!("EM1({threshold})"),
            CvtSpec::IndicatorTwoSided { threshold } => format!("EM2({threshold})"),
            CvtSpec::PowerOfV { exponent } => format!("V^{exponent}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CvtSpec::IndicatorUpper { threshold } | CvtSpec::IndicatorTwoSided { threshold } => {
                if !(threshold > 0.0 && threshold < 1.0) {
                    return Err(Error::domain("CvtSpec", format!("threshold {threshold}")));
                }
            }
            CvtSpec::PowerOfV { exponent } => {
                if !(exponent > 0.0) {
                    return Err(Error::domain("CvtSpec", format!("exponent {exponent}")));
                }
            }
        }
        Ok(())
    }
}

/// Estimator of the covariance of the regression products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovEstimator {
    /// sigma_W^2 times the regressor second-moment matrix; valid under the
    /// null and more sensitive to deviations from it.
    #[default]
    NullBased,
    /// Outer-product estimator of the products themselves.
    OuterProduct,
}

/// How lagged regressor slots with missing PITs are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Use the imputed value for the lag slot when available; drop the row
    /// only if no stand-in exists.
    #[default]
    ImputeRegressors,
    /// Drop any row with a missing lagged PIT.
    DropRows,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConditionalConfig {
    pub estimator: CovEstimator,
    pub missing_policy: MissingPolicy,
}

/// Lagged regressor rows for a series: row t has entries
/// (1, h(P_{t-1}), ..., h(P_{t-k})) and is produced for every t >= k whose
/// dependent observation is present and whose lag slots can be filled.
#[derive(Debug, Clone)]
pub struct RegressorMatrix {
    /// Row-major regressor rows of width k + 1.
    pub rows: Vec<Vec<f64>>,
    /// The 0-based time index of each row's dependent observation.
    pub times: Vec<usize>,
}

/// Build the lagged CVT regressor matrix. Lag slots take the observed PIT
/// when present; under [`MissingPolicy::ImputeRegressors`] a missing lag
/// falls back to the imputed value carried by the series.
pub fn build_regressor_matrix(
    cvt: &CvtSpec,
    k: usize,
    pits: &PitSeries,
    policy: MissingPolicy,
) -> RegressorMatrix {
    let n = pits.len();
    let mut rows = Vec::with_capacity(n.saturating_sub(k));
    let mut times = Vec::with_capacity(n.saturating_sub(k));
    'outer: for t in k..n {
        if pits.value(t).is_none() {
            continue;
        }
        let mut row = Vec::with_capacity(k + 1);
        row.push(1.0);
        for lag in 1..=k {
            let slot = match policy {
                MissingPolicy::ImputeRegressors => pits.regressor_value(t - lag),
                MissingPolicy::DropRows => pits.value(t - lag),
            };
            match slot {
                Some(p) => row.push(cvt.apply(p)),
                None => continue 'outer,
            }
        }
        rows.push(row);
        times.push(t);
    }
    RegressorMatrix { rows, times }
}

fn check_invertible(h: &DMatrix<f64>, context: &str) -> Result<()> {
    let eig = h.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(min > 0.0 && max / min <= 1e12) {
        return Err(Error::SingularH(format!(
            "{context} cannot be inverted; typically no tail events occurred in the sample"
        )));
    }
    Ok(())
}

/// A monospectral MD test with precomputed null moments.
#[derive(Debug, Clone)]
pub struct PreparedMd {
    pub kernel: KernelMeasure,
    pub cvt: CvtSpec,
    pub lags: usize,
    pub mu: f64,
    pub sigma2: f64,
    test_id: String,
}

impl PreparedMd {
    pub fn new(
        test_id: impl Into<String>,
        kernel: KernelMeasure,
        cvt: CvtSpec,
        lags: usize,
    ) -> Result<Self> {
        cvt.validate()?;
        let mu = kernels::mean_w(&kernel);
        let m2 = kernels::second_moment(&kernel)?;
        let sigma2 = m2 - mu * mu;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::DivergentMoment(format!(
                "null variance {sigma2} for kernel {}",
                kernel.label()
            )));
        }
        Ok(PreparedMd { kernel, cvt, lags, mu, sigma2, test_id: test_id.into() })
    }

    /// Statistic on a gap-free slice.
    pub fn statistic_slice(&self, pits: &[f64], estimator: CovEstimator) -> Result<(f64, bool)> {
        let k = self.lags;
        if pits.len() <= k + 1 {
            return Err(Error::InsufficientData { needed: k + 2, have: pits.len() });
        }
        let dim = k + 1;
        let m_rows = pits.len() - k;
        let mut h_bar = DMatrix::zeros(dim, dim);
        let mut y_bar = DVector::zeros(dim);
        let mut yy = DMatrix::zeros(dim, dim);
        let mut row = vec![0.0; dim];
        let mut first_w = f64::NAN;
        let mut degenerate = true;
        let h_vals: Vec<f64> = pits.iter().map(|&p| self.cvt.apply(p)).collect();
        for t in k..pits.len() {
            let w = self.kernel.eval_g(pits[t]);
            if first_w.is_nan() {
                first_w = w;
            } else if w != first_w {
                degenerate = false;
            }
            let wt = w - self.mu;
            row[0] = 1.0;
            for lag in 1..=k {
                row[lag] = h_vals[t - lag];
            }
            for i in 0..dim {
                y_bar[i] += row[i] * wt;
                for j in i..dim {
                    h_bar[(i, j)] += row[i] * row[j];
                    if estimator == CovEstimator::OuterProduct {
                        yy[(i, j)] += row[i] * wt * row[j] * wt;
                    }
                }
            }
        }
        let mf = m_rows as f64;
        for i in 0..dim {
            for j in i..dim {
                h_bar[(i, j)] /= mf;
                h_bar[(j, i)] = h_bar[(i, j)];
                yy[(i, j)] /= mf;
                yy[(j, i)] = yy[(i, j)];
            }
        }
        y_bar /= mf;
        let sigma_y = match estimator {
            CovEstimator::NullBased => &h_bar * self.sigma2,
            CovEstimator::OuterProduct => yy,
        };
        check_invertible(&sigma_y, "regressor matrix")?;
        let chol = Cholesky::new(sigma_y)
            .ok_or_else(|| Error::SingularH("covariance factorization failed".into()))?;
        Ok((mf * y_bar.dot(&chol.solve(&y_bar)), degenerate))
    }

    pub fn run(&self, pits: &PitSeries, config: ConditionalConfig) -> Result<TestResult> {
        let k = self.lags;
        let reg = build_regressor_matrix(&self.cvt, k, pits, config.missing_policy);
        let m_rows = reg.rows.len();
        if m_rows <= k + 1 {
            return Err(Error::InsufficientData { needed: k + 2, have: m_rows });
        }
        let dim = k + 1;
        let mut h_bar = DMatrix::zeros(dim, dim);
        let mut y_bar = DVector::zeros(dim);
        let mut yy = DMatrix::zeros(dim, dim);
        let mut first_w = f64::NAN;
        let mut degenerate = true;
        for (row, &t) in reg.rows.iter().zip(&reg.times) {
            let p = pits.value(t).expect("rows only at present observations");
            let w = self.kernel.eval_g(p);
            if first_w.is_nan() {
                first_w = w;
            } else if w != first_w {
                degenerate = false;
            }
            let wt = w - self.mu;
            for i in 0..dim {
                y_bar[i] += row[i] * wt;
                for j in i..dim {
                    h_bar[(i, j)] += row[i] * row[j];
                    yy[(i, j)] += row[i] * wt * row[j] * wt;
                }
            }
        }
        let mf = m_rows as f64;
        for i in 0..dim {
            for j in i..dim {
                h_bar[(i, j)] /= mf;
                h_bar[(j, i)] = h_bar[(i, j)];
                yy[(i, j)] /= mf;
                yy[(j, i)] = yy[(i, j)];
            }
        }
        y_bar /= mf;
        let sigma_y = match config.estimator {
            CovEstimator::NullBased => &h_bar * self.sigma2,
            CovEstimator::OuterProduct => yy,
        };
        check_invertible(&sigma_y, "regressor matrix")?;
        let chol = Cholesky::new(sigma_y)
            .ok_or_else(|| Error::SingularH("covariance factorization failed".into()))?;
        let statistic = mf * y_bar.dot(&chol.solve(&y_bar));
        let mut result = TestResult::chi_square(
            self.test_id.clone(),
            self.kernel.label(),
            format!("{:?}", self.kernel.support()),
            statistic,
            dim as u32,
            m_rows,
        )?;
        result.cvt = Some(self.cvt.label());
        if degenerate {
            result = result.with_warning(Warning::DegenerateSample);
        }
        Ok(result)
    }
}

/// Monospectral MD test of conditional coverage with `k` lagged CVT
/// regressors. `k = 0` reduces to the unconditional Z-test.
pub fn md_test(
    kernel: &KernelMeasure,
    cvt: &CvtSpec,
    k: usize,
    pits: &PitSeries,
) -> Result<TestResult> {
    md_test_with(kernel, cvt, k, ConditionalConfig::default(), pits)
}

pub fn md_test_with(
    kernel: &KernelMeasure,
    cvt: &CvtSpec,
    k: usize,
    config: ConditionalConfig,
    pits: &PitSeries,
) -> Result<TestResult> {
    PreparedMd::new(format!("MD[{}]", kernel.label()), kernel.clone(), cvt.clone(), k)?
        .run(pits, config)
}

/// A bispectral MD test with precomputed null moments for the kernel pair.
#[derive(Debug, Clone)]
pub struct PreparedBiMd {
    pub kernels: [KernelMeasure; 2],
    pub cvts: [CvtSpec; 2],
    pub lags: (usize, usize),
    pub mu: [f64; 2],
    /// (sigma_1^2, sigma_12, sigma_2^2)
    pub sigma: (f64, f64, f64),
    test_id: String,
}

impl PreparedBiMd {
    pub fn new(
        test_id: impl Into<String>,
        kernel_pair: [KernelMeasure; 2],
        cvts: [CvtSpec; 2],
        lags: (usize, usize),
    ) -> Result<Self> {
        let moments = kernels::cov_matrix(&kernel_pair)?;
        let mu = [moments.mean[0], moments.mean[1]];
        let sigma = (moments.cov[(0, 0)], moments.cov[(0, 1)], moments.cov[(1, 1)]);
        Self::with_moments(test_id, kernel_pair, cvts, lags, mu, sigma)
    }

    /// Build from externally supplied moments.
    pub fn with_moments(
        test_id: impl Into<String>,
        kernel_pair: [KernelMeasure; 2],
        cvts: [CvtSpec; 2],
        lags: (usize, usize),
        mu: [f64; 2],
        sigma: (f64, f64, f64),
    ) -> Result<Self> {
        cvts[0].validate()?;
        cvts[1].validate()?;
        if !(sigma.0 > 0.0 && sigma.2 > 0.0) {
            return Err(Error::SingularCovariance("nonpositive kernel variance".into()));
        }
        Ok(PreparedBiMd {
            kernels: kernel_pair,
            cvts,
            lags,
            mu,
            sigma,
            test_id: test_id.into(),
        })
    }

    /// The Hadamard factor: block matrix with sigma_1^2, sigma_12, sigma_2^2
    /// spread over the (k1+1, k2+1) blocks.
    fn a_w(&self) -> DMatrix<f64> {
        let (k1, k2) = self.lags;
        let dim = k1 + k2 + 2;
        let mut a = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let bi = i > k1;
                let bj = j > k1;
                a[(i, j)] = match (bi, bj) {
                    (false, false) => self.sigma.0,
                    (true, true) => self.sigma.2,
                    _ => self.sigma.1,
                };
            }
        }
        a
    }

    /// Statistic on a gap-free slice; degrees of freedom are k1 + k2 + 2.
    pub fn statistic_slice(&self, pits: &[f64]) -> Result<f64> {
        let (k1, k2) = self.lags;
        let k = k1.max(k2);
        let dim = k1 + k2 + 2;
        if pits.len() <= k + dim {
            return Err(Error::InsufficientData { needed: k + dim + 1, have: pits.len() });
        }
        let h1: Vec<f64> = pits.iter().map(|&p| self.cvts[0].apply(p)).collect();
        let h2: Vec<f64> = pits.iter().map(|&p| self.cvts[1].apply(p)).collect();
        let mut h_bar = DMatrix::zeros(dim, dim);
        let mut y_bar = DVector::zeros(dim);
        let mut stacked = vec![0.0; dim];
        let m_rows = pits.len() - k;
        for t in k..pits.len() {
            let w1 = self.kernels[0].eval_g(pits[t]) - self.mu[0];
            let w2 = self.kernels[1].eval_g(pits[t]) - self.mu[1];
            stacked[0] = 1.0;
            for lag in 1..=k1 {
                stacked[lag] = h1[t - lag];
            }
            stacked[k1 + 1] = 1.0;
            for lag in 1..=k2 {
                stacked[k1 + 1 + lag] = h2[t - lag];
            }
            for i in 0..dim {
                let wi = if i <= k1 { w1 } else { w2 };
                y_bar[i] += stacked[i] * wi;
                for j in i..dim {
                    h_bar[(i, j)] += stacked[i] * stacked[j];
                }
            }
        }
        let mf = m_rows as f64;
        for i in 0..dim {
            for j in i..dim {
                h_bar[(i, j)] /= mf;
                h_bar[(j, i)] = h_bar[(i, j)];
            }
        }
        y_bar /= mf;
        let sigma_y = self.a_w().component_mul(&h_bar);
        check_invertible(&sigma_y, "stacked regressor matrix")?;
        let chol = Cholesky::new(sigma_y)
            .ok_or_else(|| Error::SingularCovariance("covariance factorization failed".into()))?;
        Ok(mf * y_bar.dot(&chol.solve(&y_bar)))
    }

    pub fn run_slice(&self, pits: &[f64]) -> Result<TestResult> {
        let (k1, k2) = self.lags;
        let statistic = self.statistic_slice(pits)?;
        let mut result = TestResult::chi_square(
            self.test_id.clone(),
            format!("{}+{}", self.kernels[0].label(), self.kernels[1].label()),
            format!("{:?}", self.kernels[0].support()),
            statistic,
            (k1 + k2 + 2) as u32,
            pits.len() - k1.max(k2),
        )?;
        result.cvt = Some(format!("{}/{}", self.cvts[0].label(), self.cvts[1].label()));
        Ok(result)
    }

    pub fn run(&self, pits: &PitSeries, config: ConditionalConfig) -> Result<TestResult> {
        // Rows need the dependent observation plus every lag slot of both
        // blocks; reuse the monospectral builder on the max lag count for the
        // row selection, then assemble the stacked vectors.
        let (k1, k2) = self.lags;
        let k = k1.max(k2);
        let dim = k1 + k2 + 2;
        let reg1 = build_regressor_matrix(&self.cvts[0], k, pits, config.missing_policy);
        let reg2 = build_regressor_matrix(&self.cvts[1], k, pits, config.missing_policy);
        // Rows are aligned: both builders drop exactly the rows with missing
        // dependent values or unfillable lags.
        let times: Vec<usize> = reg1
            .times
            .iter()
            .cloned()
            .filter(|t| reg2.times.contains(t))
            .collect();
        let m_rows = times.len();
        if m_rows <= dim {
            return Err(Error::InsufficientData { needed: dim + 1, have: m_rows });
        }
        let mut h_bar = DMatrix::zeros(dim, dim);
        let mut y_bar = DVector::zeros(dim);
        let mut stacked = vec![0.0; dim];
        let index1: std::collections::HashMap<usize, usize> =
            reg1.times.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let index2: std::collections::HashMap<usize, usize> =
            reg2.times.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        for &t in &times {
            let p = pits.value(t).expect("present");
            let w1 = self.kernels[0].eval_g(p) - self.mu[0];
            let w2 = self.kernels[1].eval_g(p) - self.mu[1];
            let row1 = &reg1.rows[index1[&t]];
            let row2 = &reg2.rows[index2[&t]];
            stacked[..(k1 + 1)].copy_from_slice(&row1[..(k1 + 1)]);
            stacked[(k1 + 1)..].copy_from_slice(&row2[..(k2 + 1)]);
            for i in 0..dim {
                let wi = if i <= k1 { w1 } else { w2 };
                y_bar[i] += stacked[i] * wi;
                for j in i..dim {
                    h_bar[(i, j)] += stacked[i] * stacked[j];
                }
            }
        }
        let mf = m_rows as f64;
        for i in 0..dim {
            for j in i..dim {
                h_bar[(i, j)] /= mf;
                h_bar[(j, i)] = h_bar[(i, j)];
            }
        }
        y_bar /= mf;
        let sigma_y = self.a_w().component_mul(&h_bar);
        check_invertible(&sigma_y, "stacked regressor matrix")?;
        let chol = Cholesky::new(sigma_y)
            .ok_or_else(|| Error::SingularCovariance("covariance factorization failed".into()))?;
        let statistic = mf * y_bar.dot(&chol.solve(&y_bar));
        let mut result = TestResult::chi_square(
            self.test_id.clone(),
            format!("{}+{}", self.kernels[0].label(), self.kernels[1].label()),
            format!("{:?}", self.kernels[0].support()),
            statistic,
            dim as u32,
            m_rows,
        )?;
        result.cvt = Some(format!("{}/{}", self.cvts[0].label(), self.cvts[1].label()));
        Ok(result)
    }
}

/// Bispectral MD test with per-kernel lag counts (k1, k2).
pub fn bispectral_md_test(
    kernel_pair: [KernelMeasure; 2],
    cvts: [CvtSpec; 2],
    lags: (usize, usize),
    pits: &PitSeries,
) -> Result<TestResult> {
    PreparedBiMd::new(
        format!("MD2[{}+{}]", kernel_pair[0].label(), kernel_pair[1].label()),
        kernel_pair,
        cvts,
        lags,
    )?
    .run(pits, ConditionalConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unconditional::{mono_z_test, multi_z_test, PreparedMono};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const NARROW: (f64, f64) = (0.985, 0.995);
    const WIDE: (f64, f64) = (0.95, 0.995);

    fn uniform_series(n: usize, seed: u64) -> PitSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PitSeries::from_values((0..n).map(|_| rng.gen::<f64>()).collect())
    }

    #[test]
    fn cvt_reference_values() {
        assert_eq!(CvtSpec::md4().apply(0.5), 0.0);
        assert_eq!(CvtSpec::md4().apply(1.0), 1.0);
        // V(0.005) = 0.99 >= 0.98.
        assert_eq!(CvtSpec::em2().apply(0.005), 1.0);
        assert_eq!(CvtSpec::em2().apply(0.02), 0.0);
        assert_eq!(CvtSpec::em1().apply(0.99), 1.0);
        assert_eq!(CvtSpec::em1().apply(0.989), 0.0);
        let got = CvtSpec::md_half().apply(0.75);
        assert!((got - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn k0_reduces_to_unconditional() {
        let kernel = KernelMeasure::zu(NARROW, true).unwrap();
        for seed in 0..100 {
            let pits = uniform_series(300, seed);
            let md = md_test(&kernel, &CvtSpec::md4(), 0, &pits).unwrap();
            let z = mono_z_test(&kernel, &pits).unwrap();
            assert!(
                (md.statistic - z.statistic).abs() <= 1e-10 * (1.0 + z.statistic),
                "seed {seed}: {} vs {}",
                md.statistic,
                z.statistic
            );
        }
    }

    /// Matrix-form oracle: sigma^{-2} W' X (X'X)^{-1} X' W with X the
    /// regressor matrix and W the centered transforms.
    fn matrix_form_oracle(kernel: &KernelMeasure, cvt: &CvtSpec, k: usize, pits: &[f64]) -> f64 {
        let mu = kernels::mean_w(kernel);
        let sigma2 = kernels::second_moment(kernel).unwrap() - mu * mu;
        let m = pits.len() - k;
        let mut x = DMatrix::zeros(m, k + 1);
        let mut w = DVector::zeros(m);
        for (row, t) in (k..pits.len()).enumerate() {
            x[(row, 0)] = 1.0;
            for lag in 1..=k {
                x[(row, lag)] = cvt.apply(pits[t - lag]);
            }
            w[row] = kernel.eval_g(pits[t]) - mu;
        }
        let xtx = x.transpose() * &x;
        let xtw = x.transpose() * &w;
        let sol = xtx.lu().solve(&xtw).unwrap();
        xtw.dot(&sol) / sigma2
    }

    #[test]
    fn matrix_form_identity_all_kernels_and_cvts() {
        let kernels_list = vec![
            KernelMeasure::dirac(0.99, 1.0).unwrap(),
            KernelMeasure::zu(NARROW, true).unwrap(),
            KernelMeasure::zl_minus(WIDE, false).unwrap(),
        ];
        let cvts = [CvtSpec::em1(), CvtSpec::em2(), CvtSpec::md4(), CvtSpec::md_half()];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for kernel in &kernels_list {
            for cvt in &cvts {
                // Mix some tail mass in so indicator CVTs are nondegenerate.
                let pits: Vec<f64> = (0..600)
                    .map(|_| {
                        if rng.gen::<f64>() < 0.05 {
                            0.985 + 0.015 * rng.gen::<f64>()
                        } else {
                            rng.gen()
                        }
                    })
                    .collect();
                let prepared =
                    PreparedMd::new("MD", kernel.clone(), cvt.clone(), 4).unwrap();
                let (got, _) = prepared.statistic_slice(&pits, CovEstimator::NullBased).unwrap();
                let want = matrix_form_oracle(kernel, cvt, 4, &pits);
                assert!(
                    (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
                    "{} / {}: {got} vs {want}",
                    kernel.label(),
                    cvt.label()
                );
            }
        }
    }

    #[test]
    fn dq_form_for_indicator_kernel_and_cvt() {
        // Indicator kernel with the upper-tail indicator CVT is the dynamic
        // quantile regression case.
        let kernel = KernelMeasure::dirac(0.99, 1.0).unwrap();
        let cvt = CvtSpec::em1();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pits: Vec<f64> = (0..750)
            .map(|_| if rng.gen::<f64>() < 0.03 { 0.99 + 0.01 * rng.gen::<f64>() } else { rng.gen() })
            .collect();
        let prepared = PreparedMd::new("DQ", kernel.clone(), cvt.clone(), 4).unwrap();
        let (got, _) = prepared.statistic_slice(&pits, CovEstimator::NullBased).unwrap();
        let want = matrix_form_oracle(&kernel, &cvt, 4, &pits);
        assert!((got - want).abs() <= 1e-9 * (1.0 + want));
    }

    #[test]
    fn statistic_invariant_to_kernel_rescaling() {
        let pits = uniform_series(500, 31);
        let k1 = KernelMeasure::zu(NARROW, true).unwrap();
        let k2 = KernelMeasure::beta_family(NARROW, 1.0, 1.0, false, "ZU-raw").unwrap();
        let a = md_test(&k1, &CvtSpec::md4(), 3, &pits).unwrap();
        let b = md_test(&k2, &CvtSpec::md4(), 3, &pits).unwrap();
        assert!((a.statistic - b.statistic).abs() <= 1e-10 * (1.0 + a.statistic));
    }

    #[test]
    fn singular_h_without_tail_events() {
        // No PIT reaches 0.99, so the EM1 regressor is identically zero.
        let pits = PitSeries::from_values((0..300).map(|i| 0.5 + 0.3 * ((i as f64).sin())).collect());
        let kernel = KernelMeasure::dirac(0.99, 1.0).unwrap();
        let err = md_test(&kernel, &CvtSpec::em1(), 4, &pits).unwrap_err();
        assert!(matches!(err, Error::SingularH(_)));
    }

    #[test]
    fn degenerate_w_reports_unconditional_with_warning() {
        // All PITs below the window: W is constant, the statistic collapses
        // to the unconditional one regardless of the CVT.
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let pits =
            PitSeries::from_values((0..400).map(|_| 0.9 * rng.gen::<f64>()).collect());
        let kernel = KernelMeasure::zu(NARROW, true).unwrap();
        let md4 = md_test(&kernel, &CvtSpec::md4(), 4, &pits).unwrap();
        let mdh = md_test(&kernel, &CvtSpec::md_half(), 4, &pits).unwrap();
        assert!(md4.warnings.contains(&Warning::DegenerateSample));
        assert!((md4.statistic - mdh.statistic).abs() < 1e-9);
        // Equals the unconditional statistic on the trimmed sample.
        let trimmed = PitSeries::from_values(
            pits.values()[4..].iter().map(|v| v.unwrap()).collect::<Vec<_>>(),
        );
        let prepared = PreparedMono::new("Z", kernel.clone()).unwrap();
        let z = prepared.run(&trimmed).unwrap();
        assert!((md4.statistic - z.statistic).abs() < 1e-9);
        assert_eq!(md4.df, 5);
    }

    #[test]
    fn bispectral_k0_reduces_to_unconditional_bispectral() {
        let pair = [
            KernelMeasure::zl_plus(WIDE, true).unwrap(),
            KernelMeasure::zl_minus(WIDE, true).unwrap(),
        ];
        for seed in 0..20 {
            let pits = uniform_series(400, seed);
            let md = bispectral_md_test(
                pair.clone(),
                [CvtSpec::md4(), CvtSpec::md4()],
                (0, 0),
                &pits,
            )
            .unwrap();
            let t = multi_z_test(&pair, &pits).unwrap();
            assert!(
                (md.statistic - t.statistic).abs() <= 1e-10 * (1.0 + t.statistic),
                "{} vs {}",
                md.statistic,
                t.statistic
            );
            assert_eq!(md.df, 2);
        }
    }

    #[test]
    fn bispectral_hadamard_block_structure() {
        let pair = [
            KernelMeasure::zl_plus(WIDE, true).unwrap(),
            KernelMeasure::zl_minus(WIDE, true).unwrap(),
        ];
        let prepared = PreparedBiMd::new(
            "MD2",
            pair,
            [CvtSpec::md4(), CvtSpec::md_half()],
            (2, 1),
        )
        .unwrap();
        let a = prepared.a_w();
        // Off-diagonal blocks all equal sigma_12.
        for i in 0..=2 {
            for j in 3..=4 {
                assert_eq!(a[(i, j)], prepared.sigma.1);
                assert_eq!(a[(j, i)], prepared.sigma.1);
            }
        }
        for i in 0..=2 {
            for j in 0..=2 {
                assert_eq!(a[(i, j)], prepared.sigma.0);
            }
        }
        for i in 3..=4 {
            for j in 3..=4 {
                assert_eq!(a[(i, j)], prepared.sigma.2);
            }
        }
    }

    #[test]
    fn regressor_matrix_missing_handling() {
        // A single missing observation at t = 5.
        let mut values: Vec<Option<f64>> = (0..12).map(|i| Some(0.05 + 0.07 * i as f64)).collect();
        values[5] = None;
        let imputed: Vec<Option<f64>> = (0..12).map(|i| Some(0.01 + 0.07 * i as f64)).collect();
        let pits = PitSeries::with_imputed(values.clone(), imputed);
        let cvt = CvtSpec::md_half();
        let reg = build_regressor_matrix(&cvt, 2, &pits, MissingPolicy::ImputeRegressors);
        // Row for t = 5 dropped (dependent missing); rows for t = 6, 7 use the
        // imputed value in the corresponding lag slot.
        assert!(!reg.times.contains(&5));
        let row6 = &reg.rows[reg.times.iter().position(|&t| t == 6).unwrap()];
        assert!((row6[1] - cvt.apply(0.01 + 0.07 * 5.0)).abs() < 1e-15);
        assert!((row6[2] - cvt.apply(0.05 + 0.07 * 4.0)).abs() < 1e-15);
        let row7 = &reg.rows[reg.times.iter().position(|&t| t == 7).unwrap()];
        assert!((row7[2] - cvt.apply(0.01 + 0.07 * 5.0)).abs() < 1e-15);
        assert!((row7[1] - cvt.apply(0.05 + 0.07 * 6.0)).abs() < 1e-15);

        // Under DropRows the rows needing the missing lag are gone too.
        let reg = build_regressor_matrix(&cvt, 2, &pits, MissingPolicy::DropRows);
        assert!(!reg.times.contains(&5));
        assert!(!reg.times.contains(&6));
        assert!(!reg.times.contains(&7));
        assert!(reg.times.contains(&8));

        // With no imputed stand-in either, the rows are dropped as well.
        let pits = PitSeries::from_optional(values);
        let reg = build_regressor_matrix(&cvt, 2, &pits, MissingPolicy::ImputeRegressors);
        assert!(!reg.times.contains(&6));
        assert!(!reg.times.contains(&7));
        assert!(reg.times.contains(&8));
    }

    #[test]
    fn no_missing_matches_direct_construction() {
        let pits = uniform_series(50, 3);
        let cvt = CvtSpec::md4();
        let reg = build_regressor_matrix(&cvt, 3, &pits, MissingPolicy::ImputeRegressors);
        assert_eq!(reg.rows.len(), 47);
        for (row, &t) in reg.rows.iter().zip(&reg.times) {
            assert_eq!(row[0], 1.0);
            for lag in 1..=3 {
                assert_eq!(row[lag], cvt.apply(pits.value(t - lag).unwrap()));
            }
        }
    }

    #[test]
    fn gw_estimator_runs() {
        let pits = uniform_series(500, 8);
        let kernel = KernelMeasure::zu(WIDE, true).unwrap();
        let cfg = ConditionalConfig {
            estimator: CovEstimator::OuterProduct,
            missing_policy: MissingPolicy::ImputeRegressors,
        };
        let r = md_test_with(&kernel, &CvtSpec::md4(), 4, cfg, &pits).unwrap();
        assert!(r.statistic.is_finite());
        assert_eq!(r.df, 5);
    }
}
