//! Kernel measures on the unit interval and the exceedance transform.
//!
//! A kernel measure puts weight on probability levels: discrete atoms, a
//! density on a window, or both. The transform of a PIT value is
//! `W = nu([0, P]) = G(P)`, the measure of the levels at or below `P`; an
//! exceedance of level `u` is the event `{P >= u}`, so ties at an atom
//! location count as exceedances and `G` is right-continuous.
//!
//! Null moments (PIT uniform) are computed in closed form for the built-in
//! families and by adaptive quadrature otherwise.

use crate::error::{Error, Result};
use crate::quad;
use crate::series::PitSeries;
use crate::special::{
    hyp3f2_unit, log_beta, reg_inc_beta, std_normal_cdf, std_normal_pdf, std_normal_quantile,
};
use nalgebra::DMatrix;

/// The conventional VaR level used by the three- and five-level kernels.
pub const VAR_LEVEL: f64 = 0.99;

/// A point mass of the kernel measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Density family of a continuous piece, before scaling.
///
/// `Beta` is parameterized so that the piece's own `G` rises from 0 to 1
/// across the window (the regularized incomplete beta of the rescaled
/// coordinate). The probit-type densities are unnormalized:
/// `BerkowitzProbit` has g(u) = 1/phi(Phi^{-1}(u)), integrating to
/// Phi^{-1}(u) - Phi^{-1}(l); `PnsSigma` has g(u) = 2 Phi^{-1}(u)/phi(Phi^{-1}(u)),
/// integrating to Phi^{-1}(u)^2 - Phi^{-1}(l)^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PieceDensity {
    Beta { a: f64, b: f64 },
    /// Pointwise product of two Beta pieces on the same window; arises from
    /// the product rule for kernel measures.
    BetaProd { a1: f64, b1: f64, a2: f64, b2: f64 },
    BerkowitzProbit,
    PnsSigma,
}

/// A continuous component of a kernel measure, supported on `window`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousPiece {
    pub window: (f64, f64),
    pub density: PieceDensity,
    pub scale: f64,
}

impl ContinuousPiece {
    /// The piece's contribution to `G` at `u` (0 below the window, the full
    /// piece mass above it).
    fn g(&self, u: f64) -> f64 {
        let (l, r) = self.window;
        if u <= l {
            return 0.0;
        }
        let u = u.min(r);
        self.scale * self.raw_g(u)
    }

    /// Unscaled cumulative density from the window start to `u`, for
    /// `u` in `[l, r]`.
    fn raw_g(&self, u: f64) -> f64 {
        let (l, r) = self.window;
        match self.density {
            PieceDensity::Beta { a, b } => beta_g((u - l) / (r - l), a, b),
            PieceDensity::BetaProd { a1, b1, a2, b2 } => {
                let v = (u - l) / (r - l);
                beta_g(v, a1, b1) * beta_g(v, a2, b2)
            }
            PieceDensity::BerkowitzProbit => probit(u) - probit(l),
            PieceDensity::PnsSigma => {
                let z = probit(u);
                let zl = probit(l);
                z * z - zl * zl
            }
        }
    }

    /// The piece's contribution to `G` at `u = 1 - s`, evaluated in the
    /// complement coordinate so that probit-type pieces keep full accuracy
    /// deep in the upper tail.
    fn g_complement(&self, s: f64) -> f64 {
        let (l, r) = self.window;
        if s >= 1.0 - l {
            return 0.0;
        }
        if r < 1.0 {
            // The window does not reach 1, so either we are above it or
            // s is at least 1 - r and direct evaluation is accurate.
            return self.g(1.0 - s);
        }
        self.scale
            * match self.density {
                PieceDensity::Beta { a, b } => {
                    // v = 1 - s/(1 - l); use the reflection of the incomplete beta.
                    1.0 - beta_g(s / (1.0 - l), b, a)
                }
                PieceDensity::BetaProd { a1, b1, a2, b2 } => {
                    let sv = s / (1.0 - l);
                    (1.0 - beta_g(sv, b1, a1)) * (1.0 - beta_g(sv, b2, a2))
                }
                PieceDensity::BerkowitzProbit => -probit(s) - probit(l),
                PieceDensity::PnsSigma => {
                    let z = probit(s); // Phi^{-1}(1 - s) = -Phi^{-1}(s)
                    let zl = probit(l);
                    z * z - zl * zl
                }
            }
    }

    /// Total mass of the piece; infinite for probit-type pieces on windows
    /// reaching 1.
    fn total(&self) -> f64 {
        self.g(self.window.1)
    }

    fn unbounded(&self) -> bool {
        self.window.1 >= 1.0
            && !matches!(self.density, PieceDensity::Beta { .. } | PieceDensity::BetaProd { .. })
    }
}

fn probit(u: f64) -> f64 {
    if u >= 1.0 {
        f64::INFINITY
    } else if u <= 0.0 {
        f64::NEG_INFINITY
    } else {
        std_normal_quantile(u).expect("u in (0,1)")
    }
}

/// Regularized incomplete beta with fast paths for the common kernel shapes.
fn beta_g(v: f64, a: f64, b: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if a == 1.0 && b == 1.0 {
        v
    } else if a == 2.0 && b == 1.0 {
        v * v
    } else if a == 1.0 && b == 2.0 {
        1.0 - (1.0 - v) * (1.0 - v)
    } else if a == 2.0 && b == 2.0 {
        v * v * (3.0 - 2.0 * v)
    } else if a == 0.5 && b == 0.5 {
        std::f64::consts::FRAC_2_PI * v.sqrt().asin()
    } else {
        reg_inc_beta(v, a, b).expect("validated parameters")
    }
}

/// A Lebesgue-Stieltjes kernel measure on the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMeasure {
    atoms: Vec<Atom>,
    pieces: Vec<ContinuousPiece>,
    label: String,
}

impl KernelMeasure {
    /// Validates and builds a kernel measure. Atom locations must be strictly
    /// increasing and lie strictly inside (0, 1); piece windows must be
    /// non-overlapping subintervals of [0, 1].
    pub fn new(
        atoms: Vec<Atom>,
        pieces: Vec<ContinuousPiece>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let mut prev = 0.0;
        for atom in &atoms {
            if !(atom.location > 0.0 && atom.location < 1.0) {
                return Err(Error::domain(
                    "KernelMeasure",
                    format!("atom location {} must lie in (0,1)", atom.location),
                ));
            }
            if atom.location <= prev {
                return Err(Error::domain(
                    "KernelMeasure",
                    "atom locations must be strictly increasing",
                ));
            }
            if !(atom.mass > 0.0) {
                return Err(Error::domain("KernelMeasure", "atom masses must be positive"));
            }
            prev = atom.location;
        }
        let mut prev_end = 0.0f64;
        for piece in &pieces {
            let (l, r) = piece.window;
            if !(l >= 0.0 && l < r && r <= 1.0) {
                return Err(Error::domain("KernelMeasure", format!("bad window ({l}, {r})")));
            }
            if l < prev_end {
                return Err(Error::domain("KernelMeasure", "piece windows must not overlap"));
            }
            if !(piece.scale > 0.0) {
                return Err(Error::domain("KernelMeasure", "piece scale must be positive"));
            }
            match piece.density {
                PieceDensity::Beta { a, b } => {
                    if !(a > 0.0 && b > 0.0) {
                        return Err(Error::domain(
                            "KernelMeasure",
                            "beta parameters must be positive",
                        ));
                    }
                }
                PieceDensity::BetaProd { a1, b1, a2, b2 } => {
                    if !(a1 > 0.0 && b1 > 0.0 && a2 > 0.0 && b2 > 0.0) {
                        return Err(Error::domain(
                            "KernelMeasure",
                            "beta parameters must be positive",
                        ));
                    }
                }
                PieceDensity::BerkowitzProbit | PieceDensity::PnsSigma => {
                    if l <= 0.0 {
                        return Err(Error::domain(
                            "KernelMeasure",
                            "probit-type pieces need a window start above 0",
                        ));
                    }
                    if matches!(piece.density, PieceDensity::PnsSigma) && l < 0.5 {
                        return Err(Error::domain(
                            "KernelMeasure",
                            "the sigma-score density is positive only above the median",
                        ));
                    }
                }
            }
            prev_end = r;
        }
        if atoms.is_empty() && pieces.is_empty() {
            return Err(Error::domain("KernelMeasure", "kernel measure must not be empty"));
        }
        Ok(KernelMeasure { atoms, pieces, label: label.into() })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[ContinuousPiece] {
        &self.pieces
    }

    /// Support window: smallest interval containing all atoms and pieces.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &self.atoms {
            lo = lo.min(a.location);
            hi = hi.max(a.location);
        }
        for p in &self.pieces {
            lo = lo.min(p.window.0);
            hi = hi.max(p.window.1);
        }
        (lo, hi)
    }

    /// Whether `G` grows without bound as the argument approaches 1.
    pub fn unbounded(&self) -> bool {
        self.pieces.iter().any(|p| p.unbounded())
    }

    /// G(u) = nu([0, u]); right-continuous, so the mass of an atom at `u`
    /// is included.
    pub fn eval_g(&self, u: f64) -> f64 {
        let mut g = 0.0;
        for atom in &self.atoms {
            if atom.location <= u {
                g += atom.mass;
            } else {
                break;
            }
        }
        for piece in &self.pieces {
            g += piece.g(u);
        }
        g
    }

    /// G(1 - s), evaluated accurately for small `s`.
    pub fn eval_g_complement(&self, s: f64) -> f64 {
        // Every atom lies strictly below 1, so for the tiny s arising in
        // tail quadrature all atoms are included.
        let mut g = 0.0;
        for atom in &self.atoms {
            if s <= 1.0 - atom.location {
                g += atom.mass;
            }
        }
        for piece in &self.pieces {
            g += piece.g_complement(s);
        }
        g
    }

    /// Total mass nu([0, 1]).
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>()
            + self.pieces.iter().map(|p| p.total()).sum::<f64>()
    }

    /// Transform a full slice of PIT values.
    pub fn transform_slice(&self, pits: &[f64]) -> Vec<f64> {
        pits.iter().map(|&p| self.eval_g(p)).collect()
    }

    /// Transform a series; missing entries stay missing.
    pub fn transform_series(&self, pits: &PitSeries) -> Vec<Option<f64>> {
        pits.values().iter().map(|v| v.map(|p| self.eval_g(p))).collect()
    }

    /// Returns a copy rescaled so that the total mass is 1.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_mass();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::domain("KernelMeasure", "cannot normalize: total mass not finite"));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { location: a.location, mass: a.mass / total })
            .collect();
        let pieces =
            self.pieces.iter().map(|p| ContinuousPiece { scale: p.scale / total, ..*p }).collect();
        KernelMeasure::new(atoms, pieces, self.label.clone())
    }

    // ---- built-in families ----

    /// Dirac measure at `alpha` with the given mass.
    pub fn dirac(alpha: f64, mass: f64) -> Result<Self> {
        KernelMeasure::new(vec![Atom { location: alpha, mass }], vec![], format!("BIN({alpha})"))
    }

    /// Discrete kernel with the given levels and weights.
    pub fn discrete(levels: &[f64], weights: &[f64], label: impl Into<String>) -> Result<Self> {
        if levels.len() != weights.len() {
            return Err(Error::domain("KernelMeasure", "levels and weights must align"));
        }
        let atoms = levels
            .iter()
            .zip(weights)
            .map(|(&location, &mass)| Atom { location, mass })
            .collect();
        KernelMeasure::new(atoms, vec![], label)
    }

    /// Beta-family kernel on a window. With `normalized` the total mass is 1;
    /// otherwise the density is the raw form
    /// `(u - l)^{a-1} (r - u)^{b-1}` on the window.
    pub fn beta_family(
        window: (f64, f64),
        a: f64,
        b: f64,
        normalized: bool,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::domain("KernelMeasure", "beta parameters must be positive"));
        }
        let scale = if normalized {
            1.0
        } else {
            let (l, r) = window;
            (r - l).powf(a + b - 1.0) * log_beta(a, b)?.exp()
        };
        KernelMeasure::new(
            vec![],
            vec![ContinuousPiece { window, density: PieceDensity::Beta { a, b }, scale }],
            label,
        )
    }

    /// Uniform kernel (ZU).
    pub fn zu(window: (f64, f64), normalized: bool) -> Result<Self> {
        Self::beta_family(window, 1.0, 1.0, normalized, "ZU")
    }

    /// Arcsin kernel (ZA).
    pub fn za(window: (f64, f64), normalized: bool) -> Result<Self> {
        Self::beta_family(window, 0.5, 0.5, normalized, "ZA")
    }

    /// Epanechnikov kernel (ZE).
    pub fn ze(window: (f64, f64), normalized: bool) -> Result<Self> {
        Self::beta_family(window, 2.0, 2.0, normalized, "ZE")
    }

    /// Linearly increasing kernel (ZL+).
    pub fn zl_plus(window: (f64, f64), normalized: bool) -> Result<Self> {
        Self::beta_family(window, 2.0, 1.0, normalized, "ZL+")
    }

    /// Linearly decreasing kernel (ZL-).
    pub fn zl_minus(window: (f64, f64), normalized: bool) -> Result<Self> {
        Self::beta_family(window, 1.0, 2.0, normalized, "ZL-")
    }

    /// Kernel with G(u) = Phi^{-1}(max(u, l)) - Phi^{-1}(l) on the window;
    /// the transform of a PIT value is a left-truncated, shifted probit.
    pub fn berkowitz(window: (f64, f64)) -> Result<Self> {
        KernelMeasure::new(
            vec![],
            vec![ContinuousPiece { window, density: PieceDensity::BerkowitzProbit, scale: 1.0 }],
            "probit",
        )
    }

    /// Discrete uniform three-level kernel at (l, 0.99, r), unit weights.
    pub fn zu3(window: (f64, f64)) -> Result<Self> {
        let (l, r) = window;
        if !(l < VAR_LEVEL && VAR_LEVEL < r) {
            return Err(Error::domain("KernelMeasure", "window must contain the 0.99 level"));
        }
        Self::discrete(&[l, VAR_LEVEL, r], &[1.0, 1.0, 1.0], "ZU3")
    }

    /// Discrete uniform five-level kernel: the three-level points plus the
    /// midpoints between each of them, unit weights.
    pub fn zu5(window: (f64, f64)) -> Result<Self> {
        let (l, r) = window;
        if !(l < VAR_LEVEL && VAR_LEVEL < r) {
            return Err(Error::domain("KernelMeasure", "window must contain the 0.99 level"));
        }
        let levels = five_levels(window);
        Self::discrete(&levels, &[1.0; 5], "ZU5")
    }
}

/// Levels of the three-level kernels on a window.
pub fn three_levels(window: (f64, f64)) -> [f64; 3] {
    [window.0, VAR_LEVEL, window.1]
}

/// Levels of the five-level kernels on a window.
pub fn five_levels(window: (f64, f64)) -> [f64; 5] {
    let (l, r) = window;
    [l, 0.5 * (l + VAR_LEVEL), VAR_LEVEL, 0.5 * (VAR_LEVEL + r), r]
}

// ---- moments under the null ----

/// First moment of the transformed PIT value under the null,
/// mu_W = integral of (1 - u) d nu(u).
pub fn mean_w(kernel: &KernelMeasure) -> f64 {
    let mut mu: f64 = kernel.atoms.iter().map(|a| a.mass * (1.0 - a.location)).sum();
    for piece in &kernel.pieces {
        mu += piece.scale * piece_mean(piece);
    }
    mu
}

/// Unscaled first-moment contribution of one continuous piece.
fn piece_mean(piece: &ContinuousPiece) -> f64 {
    let (l, r) = piece.window;
    match piece.density {
        PieceDensity::Beta { a, b } => (1.0 - l) - (r - l) * a / (a + b),
        PieceDensity::BetaProd { a1, b1, a2, b2 } => {
            let m12 = beta_cross_moment(a1, b1, a2, b2).expect("validated parameters");
            let m21 = beta_cross_moment(a2, b2, a1, b1).expect("validated parameters");
            (1.0 - r) + (r - l) * (m12 + m21)
        }
        PieceDensity::BerkowitzProbit => {
            let zl = probit(l);
            if r >= 1.0 {
                std_normal_pdf(zl) - (1.0 - l) * zl
            } else {
                let zr = probit(r);
                (1.0 - r) * (zr - zl) + std_normal_pdf(zl) - std_normal_pdf(zr) - (r - l) * zl
            }
        }
        PieceDensity::PnsSigma => {
            let zl = probit(l);
            let pl = std_normal_pdf(zl);
            if r >= 1.0 {
                zl * pl + (1.0 - l) * (1.0 - zl * zl)
            } else {
                let zr = probit(r);
                let pr = std_normal_pdf(zr);
                (1.0 - r) * (zr * zr - zl * zl) + zl * pl - zr * pr + (r - l) * (1.0 - zl * zl)
            }
        }
    }
}

/// Second moment E[W^2] under the null.
///
/// Closed forms cover pure discrete kernels and single-piece kernels of the
/// built-in families; anything else falls back to adaptive quadrature of
/// G(u)^2 over the unit interval (absolute tolerance 1e-10).
pub fn second_moment(kernel: &KernelMeasure) -> Result<f64> {
    if kernel.pieces.is_empty() {
        // E[W^2] = sum over atoms of (2 Gamma_i - delta_i) delta_i (1 - alpha_i)
        // with Gamma_i the cumulative mass through atom i.
        let mut cum = 0.0;
        let mut m2 = 0.0;
        for atom in &kernel.atoms {
            cum += atom.mass;
            m2 += (2.0 * cum - atom.mass) * atom.mass * (1.0 - atom.location);
        }
        return Ok(m2);
    }
    if kernel.atoms.is_empty() && kernel.pieces.len() == 1 {
        let piece = &kernel.pieces[0];
        let (l, r) = piece.window;
        let s2 = piece.scale * piece.scale;
        match piece.density {
            PieceDensity::Beta { a, b } => {
                let m = beta_cross_moment(a, b, a, b)?;
                return Ok(s2 * ((1.0 - r) + 2.0 * (r - l) * m));
            }
            PieceDensity::BerkowitzProbit => {
                let zl = probit(l);
                let pl = std_normal_pdf(zl);
                if r >= 1.0 {
                    return Ok(s2 * ((1.0 + zl * zl) * (1.0 - l) - zl * pl));
                }
                let zr = probit(r);
                let pr = std_normal_pdf(zr);
                let j = (zl * pl - zr * pr + (r - l)) - 2.0 * zl * (pl - pr) + zl * zl * (r - l);
                return Ok(s2 * (j + (1.0 - r) * (zr - zl) * (zr - zl)));
            }
            PieceDensity::PnsSigma => {
                let zl = probit(l);
                let pl = std_normal_pdf(zl);
                let width = r.min(1.0) - l;
                let (int_z2, int_z4, tail) = if r >= 1.0 {
                    (zl * pl + width, zl.powi(3) * pl + 3.0 * zl * pl + 3.0 * width, 0.0)
                } else {
                    let zr = probit(r);
                    let pr = std_normal_pdf(zr);
                    let d = zr * zr - zl * zl;
                    (
                        zl * pl - zr * pr + width,
                        zl.powi(3) * pl - zr.powi(3) * pr + 3.0 * (zl * pl - zr * pr)
                            + 3.0 * width,
                        (1.0 - r) * d * d,
                    )
                };
                let zl2 = zl * zl;
                let j = int_z4 - 2.0 * zl2 * int_z2 + zl2 * zl2 * width;
                return Ok(s2 * (j + tail));
            }
            PieceDensity::BetaProd { .. } => {}
        }
    }
    Ok(quadrature_cross(kernel, kernel))
}

/// Cross moment E[W_1 W_2] under the null.
pub fn cross_moment(k1: &KernelMeasure, k2: &KernelMeasure) -> Result<f64> {
    if k1 == k2 {
        return second_moment(k1);
    }
    match product_measure(k1, k2) {
        Ok(product) => Ok(mean_w(&product)),
        Err(Error::UnsupportedCombination(_)) => Ok(quadrature_cross(k1, k2)),
        Err(e) => Err(e),
    }
}

/// E[W_1 W_2] by adaptive quadrature of G_1 G_2 over the unit interval,
/// splitting at atoms and window boundaries.
fn quadrature_cross(k1: &KernelMeasure, k2: &KernelMeasure) -> f64 {
    let mut cuts = vec![0.0, 1.0];
    for k in [k1, k2] {
        for a in &k.atoms {
            cuts.push(a.location);
        }
        for p in &k.pieces {
            cuts.push(p.window.0);
            cuts.push(p.window.1);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let unbounded = k1.unbounded() || k2.unbounded();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b >= 1.0 && unbounded {
            total += quad::integrate_tail(
                |s| k1.eval_g_complement(s) * k2.eval_g_complement(s),
                1.0 - a,
                1e-10,
            );
        } else {
            total += quad::integrate(|u| k1.eval_g(u) * k2.eval_g(u), a, b, 1e-10);
        }
    }
    total
}

/// Null mean vector and covariance matrix for a set of kernels.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub mean: Vec<f64>,
    /// Matrix of E[W_i W_j].
    pub cross: DMatrix<f64>,
    /// Sigma_W = cross - mean mean'.
    pub cov: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl MomentSet {
    /// Condition number of the covariance matrix.
    pub fn condition(&self) -> f64 {
        if self.min_eigenvalue <= 0.0 {
            f64::INFINITY
        } else {
            self.max_eigenvalue / self.min_eigenvalue
        }
    }

    /// Covariance flagged as numerically singular (condition number above 1e12).
    pub fn singular(&self) -> bool {
        !(self.condition() <= 1e12)
    }
}

/// Mean vector and covariance matrix of the transformed values under the
/// null, built from pairwise product measures (with quadrature fallback).
pub fn cov_matrix(kernels: &[KernelMeasure]) -> Result<MomentSet> {
    let m = kernels.len();
    if m == 0 {
        return Err(Error::domain("cov_matrix", "need at least one kernel"));
    }
    let mean: Vec<f64> = kernels.iter().map(mean_w).collect();
    let mut cross = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = cross_moment(&kernels[i], &kernels[j])?;
            if !v.is_finite() {
                return Err(Error::DivergentMoment(format!(
                    "cross moment of {} and {}",
                    kernels[i].label(),
                    kernels[j].label()
                )));
            }
            cross[(i, j)] = v;
            cross[(j, i)] = v;
        }
    }
    let mut cov = cross.clone();
    for i in 0..m {
        for j in 0..m {
            cov[(i, j)] -= mean[i] * mean[j];
        }
    }
    let eig = cov.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(MomentSet { mean, cross, cov, min_eigenvalue, max_eigenvalue })
}

/// Product measure nu* with G*(u) = G_1(u) G_2(u), in closed form.
///
/// Supported combinations: two discrete kernels, and two single-piece beta
/// kernels sharing a window. Everything else reports
/// [`Error::UnsupportedCombination`]; callers fall back to quadrature for
/// moments.
pub fn product_measure(k1: &KernelMeasure, k2: &KernelMeasure) -> Result<KernelMeasure> {
    let label = format!("({})*({})", k1.label(), k2.label());
    if k1.pieces.is_empty() && k2.pieces.is_empty() {
        // Jump of G1 G2 at each atom location in the union.
        let mut locations: Vec<f64> =
            k1.atoms.iter().chain(&k2.atoms).map(|a| a.location).collect();
        locations.sort_by(|a, b| a.partial_cmp(b).unwrap());
        locations.dedup();
        let mut atoms = Vec::with_capacity(locations.len());
        for &loc in &locations {
            let g1 = k1.eval_g(loc);
            let g2 = k2.eval_g(loc);
            let j1 = k1.atoms.iter().find(|a| a.location == loc).map_or(0.0, |a| a.mass);
            let j2 = k2.atoms.iter().find(|a| a.location == loc).map_or(0.0, |a| a.mass);
            let mass = g1 * g2 - (g1 - j1) * (g2 - j2);
            if mass > 0.0 {
                atoms.push(Atom { location: loc, mass });
            }
        }
        return KernelMeasure::new(atoms, vec![], label);
    }
    if k1.atoms.is_empty()
        && k2.atoms.is_empty()
        && k1.pieces.len() == 1
        && k2.pieces.len() == 1
        && k1.pieces[0].window == k2.pieces[0].window
    {
        if let (PieceDensity::Beta { a: a1, b: b1 }, PieceDensity::Beta { a: a2, b: b2 }) =
            (k1.pieces[0].density, k2.pieces[0].density)
        {
            let piece = ContinuousPiece {
                window: k1.pieces[0].window,
                density: PieceDensity::BetaProd { a1, b1, a2, b2 },
                scale: k1.pieces[0].scale * k2.pieces[0].scale,
            };
            return KernelMeasure::new(vec![], vec![piece], label);
        }
    }
    Err(Error::UnsupportedCombination(format!(
        "no closed-form product for {} and {}",
        k1.label(),
        k2.label()
    )))
}

/// Window-free cross moment for beta kernels on the unit window:
/// M = integral of (1 - u) g_1(u) G_2(u) du with g_1 ~ Beta(a1, b1) and
/// G_2 the Beta(a2, b2) distribution function.
///
/// Evaluated through the all-positive-parameter hypergeometric
/// representation, which converges for every positive parameter set.
pub fn beta_cross_moment(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<f64> {
    for v in [a1, b1, a2, b2] {
        if !(v > 0.0) {
            return Err(Error::domain("beta_cross_moment", "parameters must be positive"));
        }
    }
    let ln_front =
        log_beta(a1 + a2, 1.0 + b1 + b2)? - log_beta(a1, b1)? - log_beta(a2, b2)? - a2.ln();
    let f = hyp3f2_unit(1.0, a1 + a2, a2 + b2, 1.0 + a2, 1.0 + a1 + a2 + b1 + b2)?;
    Ok(ln_front.exp() * f)
}

/// Solves z^2 + (phi(z)/Phi(z)) z - 1 = 0 on [0, 2] by bisection.
///
/// The root bounds the admissible windows of the truncated probitnormal
/// score kernels from below.
pub fn solve_z0() -> f64 {
    let f = |z: f64| z * z + std_normal_pdf(z) / std_normal_cdf(z) * z - 1.0;
    let mut lo = 0.0f64;
    let mut hi = 2.0f64;
    debug_assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The pair of mixed kernels underlying the truncated probitnormal score
/// test on a window, together with the null mean vector.
///
/// The first kernel carries the location score, the second the scale score.
/// For windows with upper edge 1, the upper atoms vanish in the limit and
/// are omitted. Requires `Phi(z0) <= alpha1 < alpha2 <= 1`.
pub fn pns_pair(alpha1: f64, alpha2: f64) -> Result<(KernelMeasure, KernelMeasure, [f64; 2])> {
    let limit = std_normal_cdf(solve_z0());
    if alpha1 < limit - 1e-12 {
        return Err(Error::WindowTooLow { alpha1, limit });
    }
    if !(alpha1 < alpha2 && alpha2 <= 1.0) {
        return Err(Error::domain("pns_pair", format!("bad window ({alpha1}, {alpha2})")));
    }
    let z1 = std_normal_quantile(alpha1)?;
    let p1 = std_normal_pdf(z1);
    let mut atoms1 = vec![Atom { location: alpha1, mass: z1 + p1 / alpha1 }];
    let mut atoms2 = vec![Atom { location: alpha1, mass: (z1 * z1 - 1.0) + p1 * z1 / alpha1 }];
    if alpha2 < 1.0 {
        let z2 = std_normal_quantile(alpha2)?;
        let p2 = std_normal_pdf(z2);
        atoms1.push(Atom { location: alpha2, mass: p2 / (1.0 - alpha2) - z2 });
        atoms2.push(Atom { location: alpha2, mass: p2 * z2 / (1.0 - alpha2) - (z2 * z2 - 1.0) });
    }
    // Masses can touch zero exactly at the admissibility boundary.
    atoms1.retain(|a| a.mass > 1e-14);
    atoms2.retain(|a| a.mass > 1e-14);
    let window = (alpha1, alpha2);
    let k1 = KernelMeasure::new(
        atoms1,
        vec![ContinuousPiece { window, density: PieceDensity::BerkowitzProbit, scale: 1.0 }],
        "PNS-mu",
    )?;
    let k2 = KernelMeasure::new(
        atoms2,
        vec![ContinuousPiece { window, density: PieceDensity::PnsSigma, scale: 1.0 }],
        "PNS-sigma",
    )?;
    Ok((k1, k2, [p1 / alpha1, p1 * z1 / alpha1]))
}
