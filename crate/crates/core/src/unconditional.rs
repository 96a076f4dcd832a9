//! Tests of unconditional coverage.
//!
//! Z-tests compare the sample mean of the transformed values against the
//! exact null moments from the kernel; the m-spectral statistic is the
//! quadratic form n (Wbar - mu)' Sigma^{-1} (Wbar - mu), asymptotically
//! chi-square with m degrees of freedom. All Z-tests are two-sided via the
//! chi-square transform. LR tests use the multinomial cell counts (discrete
//! levels) or the censored probitnormal likelihood (continuous windows).

use crate::error::{Error, Result, Warning};
use crate::kernels::{self, KernelMeasure};
use crate::series::PitSeries;
use crate::special::{chi_square_sf, std_normal_cdf, std_normal_pdf, std_normal_quantile};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

/// Outcome of a single backtest.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub test_id: String,
    pub kernel_id: String,
    /// Kernel window or level set description.
    pub window: String,
    /// Conditioning-variable transformation, when the test is conditional.
    pub cvt: Option<String>,
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub n_used: usize,
    pub warnings: Vec<Warning>,
}

impl TestResult {
    pub(crate) fn chi_square(
        test_id: impl Into<String>,
        kernel_id: impl Into<String>,
        window: impl Into<String>,
        statistic: f64,
        df: u32,
        n_used: usize,
    ) -> Result<Self> {
        Ok(TestResult {
            test_id: test_id.into(),
            kernel_id: kernel_id.into(),
            window: window.into(),
            cvt: None,
            statistic,
            df,
            p_value: chi_square_sf(statistic, df)?,
            n_used,
            warnings: Vec::new(),
        })
    }

    pub(crate) fn with_warning(mut self, warning: Warning) -> Self {
        self.warnings.push(warning);
        self
    }
}

fn window_label(window: (f64, f64)) -> String {
    format!("[{},{}]", window.0, window.1)
}

fn present_values(pits: &PitSeries) -> Vec<f64> {
    pits.present().collect()
}

// ---- monospectral Z-test ----

/// A monospectral Z-test with precomputed null moments.
#[derive(Debug, Clone)]
pub struct PreparedMono {
    pub kernel: KernelMeasure,
    pub mu: f64,
    pub sigma: f64,
    test_id: String,
}

impl PreparedMono {
    pub fn new(test_id: impl Into<String>, kernel: KernelMeasure) -> Result<Self> {
        let mu = kernels::mean_w(&kernel);
        let m2 = kernels::second_moment(&kernel)?;
        let sigma2 = m2 - mu * mu;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::DivergentMoment(format!(
                "null variance {sigma2} for kernel {}",
                kernel.label()
            )));
        }
        Ok(PreparedMono { kernel, mu, sigma: sigma2.sqrt(), test_id: test_id.into() })
    }

    /// Z statistic on a gap-free slice of PIT values.
    pub fn z_statistic(&self, pits: &[f64]) -> (f64, bool) {
        let n = pits.len() as f64;
        let mut sum = 0.0;
        let mut first = f64::NAN;
        let mut degenerate = true;
        for &p in pits {
            let w = self.kernel.eval_g(p);
            if first.is_nan() {
                first = w;
            } else if w != first {
                degenerate = false;
            }
            sum += w;
        }
        let z = n.sqrt() * (sum / n - self.mu) / self.sigma;
        (z, degenerate)
    }

    pub fn run_slice(&self, pits: &[f64]) -> Result<TestResult> {
        if pits.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, have: pits.len() });
        }
        let (z, degenerate) = self.z_statistic(pits);
        let mut result = TestResult::chi_square(
            self.test_id.clone(),
            self.kernel.label(),
            window_label(self.kernel.support()),
            z * z,
            1,
            pits.len(),
        )?;
        if degenerate {
            result = result.with_warning(Warning::DegenerateSample);
        }
        Ok(result)
    }

    pub fn run(&self, pits: &PitSeries) -> Result<TestResult> {
        self.run_slice(&present_values(pits))
    }
}

/// Monospectral Z-test of unconditional coverage.
pub fn mono_z_test(kernel: &KernelMeasure, pits: &PitSeries) -> Result<TestResult> {
    PreparedMono::new(format!("Z[{}]", kernel.label()), kernel.clone())?.run(pits)
}

// ---- multispectral Z-test ----

/// An m-spectral Z-test with precomputed mean vector and covariance factor.
#[derive(Debug, Clone)]
pub struct PreparedMulti {
    pub kernels: Vec<KernelMeasure>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    test_id: String,
}

impl PreparedMulti {
    pub fn new(test_id: impl Into<String>, kernels_in: Vec<KernelMeasure>) -> Result<Self> {
        let moments = kernels::cov_matrix(&kernels_in)?;
        Self::with_moments(test_id, kernels_in, moments.mean, moments.cov)
    }

    /// Build from externally supplied moments (e.g. closed-form Fisher
    /// information for the score kernels).
    pub fn with_moments(
        test_id: impl Into<String>,
        kernels_in: Vec<KernelMeasure>,
        mean: Vec<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        let eig = cov.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(min > 0.0) || max / min > 1e12 {
            return Err(Error::SingularCovariance(format!(
                "condition number {:e} for kernel set",
                max / min.max(f64::MIN_POSITIVE)
            )));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::SingularCovariance("Cholesky factorization failed".into()))?;
        Ok(PreparedMulti {
            kernels: kernels_in,
            mean: DVector::from_vec(mean),
            cov,
            chol,
            test_id: test_id.into(),
        })
    }

    /// T statistic on a gap-free slice.
    pub fn t_statistic(&self, pits: &[f64]) -> f64 {
        let n = pits.len() as f64;
        let m = self.kernels.len();
        let mut wbar = DVector::zeros(m);
        for &p in pits {
            for (j, k) in self.kernels.iter().enumerate() {
                wbar[j] += k.eval_g(p);
            }
        }
        wbar /= n;
        let d = wbar - &self.mean;
        n * d.dot(&self.chol.solve(&d))
    }

    pub fn run_slice(&self, pits: &[f64]) -> Result<TestResult> {
        if pits.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, have: pits.len() });
        }
        let labels: Vec<&str> = self.kernels.iter().map(|k| k.label()).collect();
        let span = self
            .kernels
            .iter()
            .map(|k| k.support())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, w| (acc.0.min(w.0), acc.1.max(w.1)));
        TestResult::chi_square(
            self.test_id.clone(),
            labels.join("+"),
            window_label(span),
            self.t_statistic(pits),
            self.kernels.len() as u32,
            pits.len(),
        )
    }

    pub fn run(&self, pits: &PitSeries) -> Result<TestResult> {
        self.run_slice(&present_values(pits))
    }
}

/// m-spectral Z-test of unconditional coverage.
pub fn multi_z_test(kernel_set: &[KernelMeasure], pits: &PitSeries) -> Result<TestResult> {
    let labels: Vec<&str> = kernel_set.iter().map(|k| k.label()).collect();
    PreparedMulti::new(format!("Z[{}]", labels.join("+")), kernel_set.to_vec())?.run(pits)
}

// ---- binomial and multinomial tests ----

/// Two-sided binomial score test at level `alpha`; identical to the
/// monospectral Z-test with a unit Dirac kernel at `alpha`.
pub fn binomial_score_test(alpha: f64, pits: &PitSeries) -> Result<TestResult> {
    let kernel = KernelMeasure::dirac(alpha, 1.0)?;
    let mut r = PreparedMono::new("BIN", kernel)?.run(pits)?;
    r.window = format!("{alpha}");
    Ok(r)
}

/// Cell counts for ordered levels under the exceedance convention
/// {P >= alpha_i}: cell i holds observations with exactly i levels at or
/// below P.
fn multinomial_counts(levels: &[f64], pits: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; levels.len() + 1];
    for &p in pits {
        let cell = levels.iter().take_while(|&&a| p >= a).count();
        counts[cell] += 1;
    }
    counts
}

fn cell_probabilities(levels: &[f64]) -> Vec<f64> {
    let mut theta = Vec::with_capacity(levels.len() + 1);
    let mut prev = 0.0;
    for &a in levels {
        theta.push(a - prev);
        prev = a;
    }
    theta.push(1.0 - prev);
    theta
}

fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::domain("levels", "need at least one level"));
    }
    let mut prev = 0.0;
    for &a in levels {
        if !(a > prev && a < 1.0) {
            return Err(Error::domain("levels", "levels must be strictly increasing in (0,1)"));
        }
        prev = a;
    }
    Ok(())
}

/// Pearson chi-square test on the multinomial cells defined by `levels`.
pub fn pearson_multinomial_test(levels: &[f64], pits: &PitSeries) -> Result<TestResult> {
    pearson_multinomial_slice(levels, &present_values(pits))
}

/// Slice form of [`pearson_multinomial_test`].
pub fn pearson_multinomial_slice(levels: &[f64], values: &[f64]) -> Result<TestResult> {
    validate_levels(levels)?;
    if values.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, have: values.len() });
    }
    let n = values.len() as f64;
    let counts = multinomial_counts(levels, values);
    let theta = cell_probabilities(levels);
    let statistic: f64 = counts
        .iter()
        .zip(&theta)
        .map(|(&o, &t)| {
            let e = n * t;
            (o as f64 - e) * (o as f64 - e) / e
        })
        .sum();
    TestResult::chi_square(
        format!("PE{}", levels.len()),
        "indicator-set",
        format!("{levels:?}"),
        statistic,
        levels.len() as u32,
        values.len(),
    )
}

/// Binomial likelihood-ratio test of the exceedance probability at `alpha`.
pub fn binomial_lr_test(alpha: f64, pits: &PitSeries) -> Result<TestResult> {
    binomial_lr_slice(alpha, &present_values(pits))
}

/// Slice form of [`binomial_lr_test`].
pub fn binomial_lr_slice(alpha: f64, values: &[f64]) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("binomial_lr_test", format!("alpha = {alpha}")));
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, have: values.len() });
    }
    let n = values.len() as f64;
    let x = values.iter().filter(|&&p| p >= alpha).count() as f64;
    let p0 = 1.0 - alpha;
    // 0 ln 0 = 0 limit convention.
    let xlogy = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * y.ln() };
    let statistic = 2.0
        * (xlogy(x, x / (n * p0)) + xlogy(n - x, (n - x) / (n * (1.0 - p0))));
    TestResult::chi_square("LR1", "indicator", format!("{alpha}"), statistic.max(0.0), 1, values.len())
}

/// Multinomial likelihood-ratio test on the cells defined by `levels`.
///
/// Depends only on the cell counts, so it is invariant to the weights of any
/// univariate discrete transform with the same levels.
pub fn multinomial_lr_test(levels: &[f64], pits: &PitSeries) -> Result<TestResult> {
    multinomial_lr_slice(levels, &present_values(pits))
}

/// Slice form of [`multinomial_lr_test`].
pub fn multinomial_lr_slice(levels: &[f64], values: &[f64]) -> Result<TestResult> {
    validate_levels(levels)?;
    if values.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, have: values.len() });
    }
    let n = values.len() as f64;
    let counts = multinomial_counts(levels, values);
    let theta = cell_probabilities(levels);
    let statistic: f64 = 2.0
        * counts
            .iter()
            .zip(&theta)
            .map(|(&o, &t)| if o == 0 { 0.0 } else { o as f64 * (o as f64 / (n * t)).ln() })
            .sum::<f64>();
    TestResult::chi_square(
        format!("LR{}", levels.len()),
        "cells",
        format!("{levels:?}"),
        statistic.max(0.0),
        levels.len() as u32,
        values.len(),
    )
}

// ---- censored probitnormal LR test ----

/// Sufficient statistics of the doubly censored probit sample.
#[derive(Debug, Clone, Copy)]
struct CensoredStats {
    n_low: f64,
    n_high: f64,
    m: f64,
    sum_x: f64,
    sum_x2: f64,
    x_low: f64,
    x_high: f64,
}

fn censored_stats(alpha1: f64, alpha2: f64, pits: &[f64]) -> Result<CensoredStats> {
    if !(alpha1 > 0.0 && alpha1 < alpha2 && alpha2 <= 1.0) {
        return Err(Error::domain("berkowitz_lr_test", format!("window ({alpha1}, {alpha2})")));
    }
    let alpha2_is_one = alpha2 >= 1.0;
    let mut s = CensoredStats {
        n_low: 0.0,
        n_high: 0.0,
        m: 0.0,
        sum_x: 0.0,
        sum_x2: 0.0,
        x_low: std_normal_quantile(alpha1)?,
        x_high: if alpha2_is_one { f64::INFINITY } else { std_normal_quantile(alpha2)? },
    };
    for &p in pits {
        if p <= alpha1 {
            s.n_low += 1.0;
        } else if !alpha2_is_one && p >= alpha2 {
            s.n_high += 1.0;
        } else {
            // Boundary PIT reports of exactly 1 are clamped just inside the
            // domain of the probit.
            let x = std_normal_quantile(p.min(1.0 - 1e-16))?;
            s.m += 1.0;
            s.sum_x += x;
            s.sum_x2 += x * x;
        }
    }
    Ok(s)
}

/// Censored log-likelihood at (mu, sigma), up to terms free of the
/// parameters.
fn censored_loglik(s: &CensoredStats, mu: f64, sigma: f64) -> f64 {
    let mut ll = 0.0;
    if s.n_low > 0.0 {
        let f = std_normal_cdf((s.x_low - mu) / sigma);
        if f <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += s.n_low * f.ln();
    }
    if s.n_high > 0.0 {
        let f = 1.0 - std_normal_cdf((s.x_high - mu) / sigma);
        if f <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += s.n_high * f.ln();
    }
    if s.m > 0.0 {
        let ss = s.sum_x2 - 2.0 * mu * s.sum_x + s.m * mu * mu;
        ll += -s.m * sigma.ln() - 0.5 * ss / (sigma * sigma);
    }
    ll
}

/// Nelder-Mead maximization of the censored log-likelihood over
/// (mu, ln sigma), started at the null point.
fn maximize_censored(s: &CensoredStats) -> Result<(f64, f64, f64)> {
    let f = |v: &[f64; 2]| -censored_loglik(s, v[0], v[1].exp());
    let mut simplex = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]];
    let mut values = simplex.map(|v| f(&v));
    let mut converged = false;
    for _ in 0..500 {
        // Order: best, middle, worst.
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let (best, mid, worst) = (idx[0], idx[1], idx[2]);
        let spread = (0..2)
            .map(|d| {
                (simplex[mid][d] - simplex[best][d])
                    .abs()
                    .max((simplex[worst][d] - simplex[best][d]).abs())
            })
            .fold(0.0f64, f64::max);
        if spread < 1e-9 {
            converged = true;
            break;
        }
        let centroid = [
            0.5 * (simplex[best][0] + simplex[mid][0]),
            0.5 * (simplex[best][1] + simplex[mid][1]),
        ];
        let reflect = [
            centroid[0] + (centroid[0] - simplex[worst][0]),
            centroid[1] + (centroid[1] - simplex[worst][1]),
        ];
        let fr = f(&reflect);
        if fr < values[best] {
            let expand = [
                centroid[0] + 2.0 * (centroid[0] - simplex[worst][0]),
                centroid[1] + 2.0 * (centroid[1] - simplex[worst][1]),
            ];
            let fe = f(&expand);
            if fe < fr {
                simplex[worst] = expand;
                values[worst] = fe;
            } else {
                simplex[worst] = reflect;
                values[worst] = fr;
            }
        } else if fr < values[mid] {
            simplex[worst] = reflect;
            values[worst] = fr;
        } else {
            let contract = [
                centroid[0] + 0.5 * (simplex[worst][0] - centroid[0]),
                centroid[1] + 0.5 * (simplex[worst][1] - centroid[1]),
            ];
            let fc = f(&contract);
            if fc < values[worst] {
                simplex[worst] = contract;
                values[worst] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 0..3 {
                    if i != best {
                        for d in 0..2 {
                            simplex[i][d] =
                                simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
                        }
                        values[i] = f(&simplex[i]);
                    }
                }
            }
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let best = idx[0];
    if !converged {
        return Err(Error::OptimizationFailure(
            "censored likelihood maximization did not reach the step tolerance".into(),
        ));
    }
    Ok((simplex[best][0], simplex[best][1].exp(), -values[best]))
}

/// Likelihood-ratio test of the censored probitnormal model on the window
/// `[alpha1, alpha2]`, a two-parameter generalization of the interval LR
/// test. Observations below `alpha1` and above `alpha2` contribute censored
/// mass terms; interior observations contribute density terms.
pub fn berkowitz_lr_test(alpha1: f64, alpha2: f64, pits: &PitSeries) -> Result<TestResult> {
    let values = present_values(pits);
    berkowitz_lr_slice(alpha1, alpha2, &values)
}

/// Slice form of [`berkowitz_lr_test`].
pub fn berkowitz_lr_slice(alpha1: f64, alpha2: f64, values: &[f64]) -> Result<TestResult> {
    if values.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, have: values.len() });
    }
    let stats = censored_stats(alpha1, alpha2, values)?;
    let ll0 = censored_loglik(&stats, 0.0, 1.0);
    let (_, _, ll_hat) = maximize_censored(&stats)?;
    let statistic = (2.0 * (ll_hat - ll0)).max(0.0);
    TestResult::chi_square(
        "LRB",
        "censored-probitnormal",
        window_label((alpha1, alpha2)),
        statistic,
        2,
        values.len(),
    )
}

/// The censored LR test computed from pre-transformed values `W = G(P)`.
///
/// The transform is inverted numerically inside the kernel window, so the
/// statistic depends only on the kernel support; any two kernels sharing a
/// window produce the same test up to inversion error.
pub fn berkowitz_lr_from_kernel(kernel: &KernelMeasure, pits: &PitSeries) -> Result<TestResult> {
    let (alpha1, alpha2) = kernel.support();
    let total = kernel.total_mass();
    let values: Vec<f64> = pits
        .present()
        .map(|p| {
            let w = kernel.eval_g(p);
            if w <= 0.0 {
                // censored below the window
                0.5 * alpha1
            } else if w >= total {
                // censored above the window
                0.5 * (alpha2 + 1.0)
            } else {
                invert_g(kernel, w)
            }
        })
        .collect();
    berkowitz_lr_slice(alpha1, alpha2, &values)
}

/// Invert G on its support by bisection; G is strictly increasing there.
fn invert_g(kernel: &KernelMeasure, w: f64) -> f64 {
    let (mut lo, mut hi) = kernel.support();
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if kernel.eval_g(mid) < w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---- truncated probitnormal score test ----

/// Closed-form Fisher information of the censored probitnormal model at the
/// null point, for the window `[alpha1, alpha2]`. For `alpha2 = 1` the upper
/// boundary terms vanish in the limit.
pub fn fisher_information(alpha1: f64, alpha2: f64) -> Result<[[f64; 2]; 2]> {
    if !(alpha1 > 0.0 && alpha1 < alpha2 && alpha2 <= 1.0) {
        return Err(Error::domain("fisher_information", format!("window ({alpha1}, {alpha2})")));
    }
    let z1 = std_normal_quantile(alpha1)?;
    let p1 = std_normal_pdf(z1);
    let width = alpha2 - alpha1;
    let (upper11, upper22, upper12) = if alpha2 >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        let z2 = std_normal_quantile(alpha2)?;
        let p2 = std_normal_pdf(z2);
        let tail = 1.0 - alpha2;
        (
            p2 * p2 / tail - p2 * z2,
            p2 * p2 * z2 * z2 / tail - p2 * z2 * z2 * z2 - p2 * z2,
            p2 * p2 * z2 / tail - p2 * (1.0 + z2 * z2),
        )
    };
    let i11 = p1 * p1 / alpha1 + p1 * z1 + width + upper11;
    let i22 = p1 * p1 * z1 * z1 / alpha1 + p1 * z1 * z1 * z1 + p1 * z1 + 2.0 * width + upper22;
    let i12 = p1 * p1 * z1 / alpha1 + p1 * (1.0 + z1 * z1) + upper12;
    Ok([[i11, i12], [i12, i22]])
}

/// Per-observation score vector of the censored probitnormal model at the
/// null point.
pub fn pns_score(alpha1: f64, alpha2: f64, p: f64) -> Result<[f64; 2]> {
    let z1 = std_normal_quantile(alpha1)?;
    let p1 = std_normal_pdf(z1);
    if p < alpha1 {
        Ok([-p1 / alpha1, -p1 * z1 / alpha1])
    } else if alpha2 < 1.0 && p >= alpha2 {
        let z2 = std_normal_quantile(alpha2)?;
        let p2 = std_normal_pdf(z2);
        Ok([p2 / (1.0 - alpha2), p2 * z2 / (1.0 - alpha2)])
    } else {
        let z = std_normal_quantile(p.clamp(1e-300, 1.0 - 1e-16))?;
        Ok([z, z * z - 1.0])
    }
}

/// Truncated probitnormal score test: the quadratic form of the mean score
/// vector against the closed-form Fisher information, chi-square with 2
/// degrees of freedom.
pub fn pns_score_test(alpha1: f64, alpha2: f64, pits: &PitSeries) -> Result<TestResult> {
    let values = present_values(pits);
    pns_score_slice(alpha1, alpha2, &values)
}

/// Slice form of [`pns_score_test`] for the simulation harness.
pub fn pns_score_slice(alpha1: f64, alpha2: f64, values: &[f64]) -> Result<TestResult> {
    // Window admissibility is the same as for the kernels.
    let limit = std_normal_cdf(kernels::solve_z0());
    if alpha1 < limit - 1e-12 {
        return Err(Error::WindowTooLow { alpha1, limit });
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, have: values.len() });
    }
    let n = values.len() as f64;
    let z1 = std_normal_quantile(alpha1)?;
    let p1 = std_normal_pdf(z1);
    let psi1 = [-p1 / alpha1, -p1 * z1 / alpha1];
    let (z2, p2) = if alpha2 < 1.0 {
        let z2 = std_normal_quantile(alpha2)?;
        (z2, std_normal_pdf(z2))
    } else {
        (f64::INFINITY, 0.0)
    };
    let mut s = [0.0f64; 2];
    for &p in values {
        if p < alpha1 {
            s[0] += psi1[0];
            s[1] += psi1[1];
        } else if alpha2 < 1.0 && p >= alpha2 {
            s[0] += p2 / (1.0 - alpha2);
            s[1] += p2 * z2 / (1.0 - alpha2);
        } else {
            let z = std_normal_quantile(p.clamp(1e-300, 1.0 - 1e-16))?;
            s[0] += z;
            s[1] += z * z - 1.0;
        }
    }
    s[0] /= n;
    s[1] /= n;
    let info = fisher_information(alpha1, alpha2)?;
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    if !(det > 0.0) {
        return Err(Error::SingularCovariance("Fisher information not invertible".into()));
    }
    let statistic = n
        * (info[1][1] * s[0] * s[0] - 2.0 * info[0][1] * s[0] * s[1] + info[0][0] * s[1] * s[1])
        / det;
    TestResult::chi_square(
        "PNS",
        "truncated-probitnormal-score",
        window_label((alpha1, alpha2)),
        statistic,
        2,
        values.len(),
    )
}
