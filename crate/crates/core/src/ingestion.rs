//! Loading daily backtest records and screening for spurious PIT values.
//!
//! A reported PIT should relate monotonically to the ratio of realized loss
//! to VaR. Backing out the standardized loss Z from (loss, VaR), fitting a
//! probit-shaped curve P ~ H(Z; mu, sigma) by nonlinear least squares, and
//! examining the residuals under a symmetric beta model isolates reports
//! that are inconsistent with their own loss and VaR figures. Flagged
//! entries are treated as missing for test purposes, while the fitted curve
//! supplies imputed stand-ins for lagged regressors.

use crate::error::{Error, Result};
use crate::series::PitSeries;
use crate::special::{reg_inc_beta, std_normal_cdf, std_normal_pdf, std_normal_quantile};
use chrono::NaiveDate;
use serde::Serialize;
use std::path::Path;

/// Validity state of one daily record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Valid,
    Missing,
    Spurious,
}

/// One daily backtest record.
#[derive(Debug, Clone)]
pub struct PitRecord {
    pub date: NaiveDate,
    pub pit: Option<f64>,
    pub loss: Option<f64>,
    pub var99: Option<f64>,
    pub flag: Flag,
}

impl PitRecord {
    /// Whether the record carries everything the screening fit needs.
    fn complete(&self) -> bool {
        self.pit.is_some() && self.loss.is_some() && self.var99.is_some()
    }
}

/// Summary of one screening run.
#[derive(Debug, Clone, Serialize)]
pub struct CleanReport {
    pub n_records: usize,
    pub n_valid: usize,
    pub n_missing: usize,
    pub n_spurious: usize,
    /// Fitted (mu, sigma) of the probit curve, when the fit ran.
    pub theta_hat: Option<(f64, f64)>,
    /// Fitted residual concentration per screening round.
    pub tau_rounds: Vec<f64>,
    pub tolerance: f64,
    /// False when there were too few complete records to fit.
    pub fitted: bool,
}

/// Load daily records from a CSV file.
///
/// Schema (header required, comma-separated): `date` (ISO-8601), `pit`
/// (decimal in [0,1] or empty), and optional `loss` and `var99` columns.
/// Rows are sorted by date; duplicate dates are rejected.
pub fn load_csv(path: &Path) -> Result<Vec<PitRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = col("date").ok_or_else(|| Error::Schema("missing required column: date".into()))?;
    let pit_col = col("pit").ok_or_else(|| Error::Schema("missing required column: pit".into()))?;
    let loss_col = col("loss");
    let var_col = col("var99");

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2; // 1-based, after the header
        let row = row.map_err(|e| Error::Parse { row: row_no, message: e.to_string() })?;
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(date_col), "%Y-%m-%d")
            .map_err(|e| Error::Parse { row: row_no, message: format!("bad date: {e}") })?;
        let parse_opt = |idx: Option<usize>, name: &str| -> Result<Option<f64>> {
            match idx {
                None => Ok(None),
                Some(idx) => {
                    let raw = field(idx);
                    if raw.is_empty() {
                        Ok(None)
                    } else {
                        raw.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                            row: row_no,
                            message: format!("bad {name}: {e}"),
                        })
                    }
                }
            }
        };
        let pit = parse_opt(Some(pit_col), "pit")?;
        if let Some(p) = pit {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parse {
                    row: row_no,
                    message: format!("pit {p} outside [0,1]"),
                });
            }
        }
        let loss = parse_opt(loss_col, "loss")?;
        let var99 = parse_opt(var_col, "var99")?;
        if let Some(v) = var99 {
            if !(v > 0.0) {
                return Err(Error::Parse { row: row_no, message: format!("var99 {v} not positive") });
            }
        }
        let flag = if pit.is_some() { Flag::Valid } else { Flag::Missing };
        records.push(PitRecord { date, pit, loss, var99, flag });
    }
    records.sort_by_key(|r| r.date);
    for pair in records.windows(2) {
        if pair[0].date == pair[1].date {
            return Err(Error::Parse {
                row: 0,
                message: format!("duplicate date {}", pair[0].date),
            });
        }
    }
    Ok(records)
}

/// Standardized loss backed out of the (loss, VaR) pair:
/// Z = Phi^{-1}(0.99) * loss / VaR.
pub fn backout_z(record: &PitRecord) -> Result<f64> {
    let (loss, var99) = match (record.loss, record.var99) {
        (Some(l), Some(v)) => (l, v),
        _ => {
            return Err(Error::MissingFields(format!(
                "loss and var99 required to back out Z at {}",
                record.date
            )))
        }
    };
    Ok(std_normal_quantile(0.99)? * loss / var99)
}

/// Minimum number of complete records required before the screening fit is
/// attempted; below this everything passes through unflagged.
pub const MIN_FIT_RECORDS: usize = 30;

// Residual concentration is capped so that machine-precision residuals on
// exactly synthetic data keep the beta distribution evaluable.
const TAU_CAP: f64 = 1e12;

/// Distribution function of the symmetric rescaled beta residual model on
/// (-1, 1) with concentration tau.
fn residual_cdf(eps: f64, tau: f64) -> Result<f64> {
    // At large concentrations the symmetric beta converges to a normal with
    // variance 1/(tau + 1); the incomplete-beta continued fraction is
    // impractical there.
    if tau > 1e4 {
        return Ok(std_normal_cdf(eps * (tau + 1.0).sqrt()));
    }
    reg_inc_beta((0.5 * (1.0 + eps)).clamp(0.0, 1.0), 0.5 * tau, 0.5 * tau)
}

fn fit_tau(residuals: &[f64]) -> f64 {
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    // Population variance; the residual model has variance 1/(tau + 1).
    let var = residuals.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return TAU_CAP;
    }
    (1.0 / var - 1.0).clamp(1e-3, TAU_CAP)
}

/// Nonlinear least-squares fit of P ~ Phi((Z - mu)/sigma) by Gauss-Newton
/// with Levenberg damping, started at (0, 1).
fn fit_probit_curve(zs: &[f64], ps: &[f64]) -> Result<(f64, f64)> {
    let mut mu = 0.0f64;
    let mut sigma = 1.0f64;
    let mut lambda = 1e-3;
    let sse = |mu: f64, sigma: f64| -> f64 {
        zs.iter()
            .zip(ps)
            .map(|(&z, &p)| {
                let r = p - std_normal_cdf((z - mu) / sigma);
                r * r
            })
            .sum()
    };
    let mut current = sse(mu, sigma);
    for _ in 0..500 {
        // Normal equations of the damped Gauss-Newton step.
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for (&z, &p) in zs.iter().zip(ps) {
            let xi = (z - mu) / sigma;
            let r = p - std_normal_cdf(xi);
            let phi = std_normal_pdf(xi);
            // dr/dmu and dr/dsigma
            let j0 = phi / sigma;
            let j1 = phi * xi / sigma;
            jtj[0][0] += j0 * j0;
            jtj[0][1] += j0 * j1;
            jtj[1][1] += j1 * j1;
            jtr[0] += j0 * r;
            jtr[1] += j1 * r;
        }
        jtj[1][0] = jtj[0][1];
        let mut stepped = false;
        for _ in 0..30 {
            let a = [[jtj[0][0] + lambda, jtj[0][1]], [jtj[1][0], jtj[1][1] + lambda]];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            // Solve (J'J + lambda I) d = -J'r.
            let d0 = (-jtr[0] * a[1][1] + jtr[1] * a[0][1]) / det;
            let d1 = (-jtr[1] * a[0][0] + jtr[0] * a[1][0]) / det;
            let (mu_new, sigma_new) = (mu + d0, sigma + d1);
            if sigma_new <= 1e-8 {
                lambda *= 10.0;
                continue;
            }
            let trial = sse(mu_new, sigma_new);
            if trial <= current {
                let step = d0.abs().max(d1.abs());
                mu = mu_new;
                sigma = sigma_new;
                current = trial;
                lambda = (lambda / 10.0).max(1e-12);
                stepped = true;
                if step < 1e-10 {
                    return Ok((mu, sigma));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            // No damping level improves the fit: converged to the floor.
            return Ok((mu, sigma));
        }
    }
    Err(Error::FitFailure("probit curve fit did not converge within 500 iterations".into()))
}

/// Screen the records for spurious PIT values.
///
/// Returns the per-record flags and the report. The flags of the input are
/// not modified; apply them with [`apply_flags`].
pub fn detect_spurious(records: &[PitRecord], q: f64) -> Result<(Vec<Flag>, CleanReport)> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::domain("detect_spurious", format!("tolerance q = {q}")));
    }
    let mut flags: Vec<Flag> = records.iter().map(|r| r.flag).collect();
    let complete: Vec<usize> = (0..records.len()).filter(|&i| records[i].complete()).collect();

    let mut report = CleanReport {
        n_records: records.len(),
        n_valid: 0,
        n_missing: 0,
        n_spurious: 0,
        theta_hat: None,
        tau_rounds: Vec::new(),
        tolerance: q,
        fitted: false,
    };
    if complete.len() >= MIN_FIT_RECORDS {
        let zs: Vec<f64> =
            complete.iter().map(|&i| backout_z(&records[i])).collect::<Result<_>>()?;
        let ps: Vec<f64> = complete.iter().map(|&i| records[i].pit.unwrap()).collect();
        let (mu, sigma) = fit_probit_curve(&zs, &ps)?;
        report.theta_hat = Some((mu, sigma));
        report.fitted = true;
        let residuals: Vec<f64> = zs
            .iter()
            .zip(&ps)
            .map(|(&z, &p)| p - std_normal_cdf((z - mu) / sigma))
            .collect();
        // Round 1: fit the concentration on all residuals and flag the
        // extreme tails of the fitted distribution.
        let tau1 = fit_tau(&residuals);
        report.tau_rounds.push(tau1);
        let mut round1 = vec![false; complete.len()];
        if q > 0.0 {
            for (j, &eps) in residuals.iter().enumerate() {
                let b = residual_cdf(eps, tau1)?;
                round1[j] = b < q / 2.0 || b > 1.0 - q / 2.0;
            }
        }
        // Round 2: refit the concentration without the flagged points and
        // screen again; a record is spurious if either round rejects it.
        let kept: Vec<f64> = residuals
            .iter()
            .zip(&round1)
            .filter(|(_, &fl)| !fl)
            .map(|(&e, _)| e)
            .collect();
        let tau2 = if kept.is_empty() { tau1 } else { fit_tau(&kept) };
        report.tau_rounds.push(tau2);
        for (j, &eps) in residuals.iter().enumerate() {
            let rejected2 = if q > 0.0 {
                let b = residual_cdf(eps, tau2)?;
                b < q / 2.0 || b > 1.0 - q / 2.0
            } else {
                false
            };
            if round1[j] || rejected2 {
                flags[complete[j]] = Flag::Spurious;
            }
        }
    }
    for f in &flags {
        match f {
            Flag::Valid => report.n_valid += 1,
            Flag::Missing => report.n_missing += 1,
            Flag::Spurious => report.n_spurious += 1,
        }
    }
    Ok((flags, report))
}

/// Copy the screening flags onto the records.
pub fn apply_flags(records: &mut [PitRecord], flags: &[Flag]) {
    for (r, &f) in records.iter_mut().zip(flags) {
        r.flag = f;
    }
}

/// Build the test-ready series: missing and spurious entries carry no
/// observed value, and records with a usable (loss, VaR) pair get an imputed
/// stand-in from the fitted curve for regressor slots.
pub fn impute(records: &[PitRecord], theta_hat: Option<(f64, f64)>) -> PitSeries {
    let values: Vec<Option<f64>> = records
        .iter()
        .map(|r| if r.flag == Flag::Valid { r.pit } else { None })
        .collect();
    let imputed: Vec<Option<f64>> = records
        .iter()
        .map(|r| {
            let (mu, sigma) = theta_hat?;
            if r.loss.is_some() && r.var99.is_some() {
                let z = backout_z(r).ok()?;
                Some(std_normal_cdf((z - mu) / sigma))
            } else {
                None
            }
        })
        .collect();
    PitSeries::with_imputed(values, imputed)
}

/// Imputed value for a single record under the fitted curve, when
/// computable.
pub fn imputed_value(record: &PitRecord, theta_hat: (f64, f64)) -> Option<f64> {
    if record.loss.is_some() && record.var99.is_some() {
        let z = backout_z(record).ok()?;
        Some(std_normal_cdf((z - theta_hat.0) / theta_hat.1))
    } else {
        None
    }
}
