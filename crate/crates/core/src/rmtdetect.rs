//! Spectral event detection.
//!
//! A measurement window is an `N x T` complex matrix (buses by samples).
//! It is brought to a standardized form whose sample covariance, under the
//! no-event hypothesis, follows the Marchenko-Pastur law with ratio
//! `c = N/T`. Three criteria summarize where the spectrum sits relative to
//! that law and to the single-ring law; calibrated acceptance intervals
//! turn them into a detection flag.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::linalg::{hermitian_eigenvalues, inverse_sqrt, is_hermitian};
use crate::{Error, Result, C64};

/// How a [`StandardizedWindow`] was scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Each sample column centered across buses and divided by
    /// `√N · σ(column)`.
    Column,
    /// Each bus row centered in time, whitened by a no-event reference
    /// covariance and divided by `√N`.
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedWindow {
    data: DMatrix<C64>,
    sigma_m: f64,
    scaling: Scaling,
}

impl StandardizedWindow {
    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn t(&self) -> usize {
        self.data.ncols()
    }

    /// `c = N / T`.
    pub fn aspect_ratio(&self) -> f64 {
        self.n() as f64 / self.t() as f64
    }

    pub fn sigma_m(&self) -> f64 {
        self.sigma_m
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }
}

fn check_window(raw: &DMatrix<C64>) -> Result<()> {
    let (n, t) = raw.shape();
    if n < 2 {
        return Err(Error::Domain(format!(
            "a window needs at least 2 buses, got {n}"
        )));
    }
    if t < n {
        return Err(Error::ShortWindow { n, t });
    }
    for j in 0..t {
        for i in 0..n {
            let v = raw[(i, j)];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Centers every sample column across buses and scales it by
/// `1 / (√N · σ)`, so each column has sample variance `1/N`.
pub fn standardize(raw: &DMatrix<C64>, sigma_m: f64) -> Result<StandardizedWindow> {
    check_window(raw)?;
    let n = raw.nrows();
    let mut data = raw.clone();
    let root_n = (n as f64).sqrt();
    for (j, mut col) in data.column_iter_mut().enumerate() {
        let mean = col.sum() / C64::new(n as f64, 0.0);
        let peak = col.iter().map(|v| v.norm()).fold(0.0, f64::max);
        col.apply(|v| *v -= mean);
        let sigma = (col.iter().map(|v| v.norm_sqr()).sum::<f64>() / (n - 1) as f64).sqrt();
        if sigma == 0.0 || sigma <= 1e-12 * peak {
            return Err(Error::DegenerateColumn(j));
        }
        col /= C64::new(root_n * sigma, 0.0);
    }
    Ok(StandardizedWindow {
        data,
        sigma_m,
        scaling: Scaling::Column,
    })
}

/// No-event reference: the bus covariance `Ω_ref`, its inverse square
/// root, and optionally the nodal impedance matrix used for localization.
#[derive(Debug, Clone)]
pub struct Reference {
    covariance: DMatrix<C64>,
    whitener: DMatrix<C64>,
    /// `Ω_ref^{-1/2} Z e_k` for every bus `k`, when `Z` is known.
    directions: Option<Vec<DVector<C64>>>,
}

impl Reference {
    pub fn new(covariance: DMatrix<C64>, impedance: Option<&DMatrix<C64>>) -> Result<Self> {
        let n = covariance.nrows();
        if !is_hermitian(&covariance, 1e-10) {
            return Err(Error::Domain(
                "reference covariance must be Hermitian".into(),
            ));
        }
        let whitener = inverse_sqrt(&covariance)?;
        let directions = match impedance {
            Some(z) => {
                if z.shape() != (n, n) {
                    return Err(Error::Dimension {
                        expected: n,
                        got: z.nrows(),
                    });
                }
                let wz = &whitener * z;
                Some(wz.column_iter().map(|c| c.into_owned()).collect())
            }
            None => None,
        };
        Ok(Reference {
            covariance,
            whitener,
            directions,
        })
    }

    pub fn n(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<C64> {
        &self.covariance
    }

    pub fn whitener(&self) -> &DMatrix<C64> {
        &self.whitener
    }

    /// Centers each bus row in time, whitens with `Ω_ref^{-1/2}` and scales
    /// by `1/√N`.
    pub fn standardize(&self, raw: &DMatrix<C64>, sigma_m: f64) -> Result<StandardizedWindow> {
        check_window(raw)?;
        let (n, t) = raw.shape();
        if n != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: n,
            });
        }
        let mut centered = raw.clone();
        for mut row in centered.row_iter_mut() {
            let mean = row.sum() / C64::new(t as f64, 0.0);
            row.apply(|v| *v -= mean);
        }
        let data = &self.whitener * centered / C64::new((n as f64).sqrt(), 0.0);
        Ok(StandardizedWindow {
            data,
            sigma_m,
            scaling: Scaling::Reference,
        })
    }
}

/// Sample covariance `S = (N/T) Ṽ Ṽ^*` of a standardized window.
pub fn sample_covariance(w: &StandardizedWindow) -> DMatrix<C64> {
    let scale = w.n() as f64 / w.t() as f64;
    let s = &w.data * w.data.adjoint() * C64::new(scale, 0.0);
    (&s + s.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigenvalues of the sample covariance, descending.
pub fn covariance_spectrum(w: &StandardizedWindow) -> Result<Vec<f64>> {
    check_finite(&w.data)?;
    Ok(hermitian_eigenvalues(sample_covariance(w)))
}

fn check_finite(m: &DMatrix<C64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Marchenko-Pastur support `((1 - √c)², (1 + √c)²)` for `c = N/T` and
/// unit-variance entries.
pub fn mp_bounds(n: usize, t: usize) -> Result<(f64, f64)> {
    if n == 0 || n > t {
        return Err(Error::Domain(format!(
            "M-P bounds need 0 < N <= T, got N={n}, T={t}"
        )));
    }
    let root_c = (n as f64 / t as f64).sqrt();
    Ok(((1.0 - root_c).powi(2), (1.0 + root_c).powi(2)))
}

/// Summary statistics of a spectrum against the random-matrix baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaTriple {
    /// Mean eigenvalue modulus of the singular-value-equivalent matrix.
    pub c_srl: f64,
    /// Largest covariance eigenvalue over the upper M-P edge.
    pub c_mpl1: f64,
    /// Fraction of covariance eigenvalues outside the M-P support.
    pub c_mpl2: f64,
}

impl CriteriaTriple {
    /// Coordinates used for nearest-signature classification.
    pub fn features(&self) -> [f64; 3] {
        [
            self.c_srl,
            self.c_mpl1.max(f64::MIN_POSITIVE).log10(),
            self.c_mpl2,
        ]
    }
}

/// Spectrum, M-P bounds and criteria of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    pub bounds: (f64, f64),
    pub criteria: CriteriaTriple,
}

pub fn analyze(w: &StandardizedWindow) -> Result<SpectrumSummary> {
    let eigenvalues = covariance_spectrum(w)?;
    let bounds = mp_bounds(w.n(), w.t())?;
    let (lo, hi) = bounds;
    let outside = eigenvalues.iter().filter(|l| **l < lo || **l > hi).count();
    let criteria = CriteriaTriple {
        c_srl: ring_statistic(w)?,
        c_mpl1: eigenvalues[0] / hi,
        c_mpl2: outside as f64 / eigenvalues.len() as f64,
    };
    Ok(SpectrumSummary {
        eigenvalues,
        bounds,
        criteria,
    })
}

pub fn criteria(w: &StandardizedWindow) -> Result<CriteriaTriple> {
    Ok(analyze(w)?.criteria)
}

/// Mean eigenvalue modulus of the singular-value-equivalent matrix.
///
/// With `Ṽ = U Σ W^*`, the `N x N` matrix `U Σ` has the same singular
/// values as `Ṽ`. It is rescaled so its mean squared entry is `1/N`; the
/// no-event eigenvalues then fill the ring `√(1 - c) ≤ |λ| ≤ 1`, and a
/// dominant outlier pulls the bulk toward the origin.
pub fn ring_statistic(w: &StandardizedWindow) -> Result<f64> {
    check_finite(&w.data)?;
    let n = w.n();
    let svd = w.data.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Domain("singular value decomposition did not converge".into()))?;
    let mut equiv = u.columns(0, n).into_owned();
    for (mut col, s) in equiv.column_iter_mut().zip(svd.singular_values.iter()) {
        col *= C64::new(*s, 0.0);
    }
    let frob2 = equiv.norm_squared();
    if frob2 == 0.0 {
        return Err(Error::Domain("window is identically zero".into()));
    }
    equiv *= C64::new((n as f64 / frob2).sqrt(), 0.0);
    let schur = Schur::try_new(equiv, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Domain("Schur decomposition did not converge".into()))?;
    let (_, tri) = schur.unpack();
    Ok(tri.diagonal().iter().map(|l| l.norm()).sum::<f64>() / n as f64)
}

/// Acceptance intervals of the three criteria under the no-event
/// hypothesis. A criterion on or beyond an endpoint is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intervals {
    pub c_srl: [f64; 2],
    pub c_mpl1: [f64; 2],
    pub c_mpl2: [f64; 2],
}

/// Target false-positive rate of calibrated intervals.
pub const TARGET_FPR: f64 = 0.01;

/// Extra width added on each side of a calibrated interval, as a fraction
/// of its span.
pub const INTERVAL_MARGIN: f64 = 0.05;

impl Intervals {
    /// Calibrates intervals from no-event runs.
    ///
    /// Each of the six tails gets `fpr / 6` of the false-positive budget.
    /// The empirical quantiles are then widened by `INTERVAL_MARGIN` of
    /// the span (plus a tiny absolute floor so constant criteria stay
    /// inside).
    pub fn calibrate(samples: &[CriteriaTriple], fpr: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain("calibration needs at least 2 runs".into()));
        }
        let tail = fpr / 6.0;
        let pick = |f: fn(&CriteriaTriple) -> f64| -> Result<[f64; 2]> {
            let mut v: Vec<f64> = samples.iter().map(f).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(
                    "non-finite criterion in calibration runs".into(),
                ));
            }
            v.sort_by(f64::total_cmp);
            let lo = quantile(&v, tail);
            let hi = quantile(&v, 1.0 - tail);
            let pad = INTERVAL_MARGIN * (hi - lo) + 1e-9 * hi.abs().max(lo.abs()).max(1.0);
            Ok([lo - pad, hi + pad])
        };
        Ok(Intervals {
            c_srl: pick(|c| c.c_srl)?,
            c_mpl1: pick(|c| c.c_mpl1)?,
            c_mpl2: pick(|c| c.c_mpl2)?,
        })
    }

    /// True when every criterion lies strictly inside its interval.
    pub fn accepts(&self, c: &CriteriaTriple) -> bool {
        let inside = |v: f64, [lo, hi]: [f64; 2]| v > lo && v < hi;
        inside(c.c_srl, self.c_srl)
            && inside(c.c_mpl1, self.c_mpl1)
            && inside(c.c_mpl2, self.c_mpl2)
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    let frac = h - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// Mean criteria of one event class, with `C_MPL1` in log10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub label: String,
    pub c_srl: f64,
    pub log_c_mpl1: f64,
    pub c_mpl2: f64,
}

impl Signature {
    pub fn from_samples(label: impl Into<String>, samples: &[CriteriaTriple]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("signature needs at least one run".into()));
        }
        let k = samples.len() as f64;
        let mean = |i: usize| samples.iter().map(|c| c.features()[i]).sum::<f64>() / k;
        Ok(Signature {
            label: label.into(),
            c_srl: mean(0),
            log_c_mpl1: mean(1),
            c_mpl2: mean(2),
        })
    }

    fn distance2(&self, c: &CriteriaTriple) -> f64 {
        let [a, b, d] = c.features();
        (a - self.c_srl).powi(2) + (b - self.log_c_mpl1).powi(2) + (d - self.c_mpl2).powi(2)
    }
}

/// Thresholds and class signatures for one `(N, T, σ_m)` geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub sigma_m: f64,
    pub seeds: Vec<u64>,
    pub intervals: Intervals,
    pub signatures: Vec<Signature>,
}

impl Calibration {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Whether this calibration was produced for the given geometry.
    pub fn matches(&self, n: usize, t: usize, sigma_m: f64) -> bool {
        self.n == n
            && self.t == t
            && (self.sigma_m - sigma_m).abs() <= 1e-15 * sigma_m.abs().max(1.0)
    }
}

/// Detection flag and, when flagged, the nearest class signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub flag: bool,
    pub class: Option<String>,
}

/// Flags criteria outside the calibrated intervals and labels flagged
/// windows with the nearest signature. Ties go to the earlier signature.
pub fn detect_and_classify(c: &CriteriaTriple, calibration: &Calibration) -> Result<Verdict> {
    if calibration.intervals.accepts(c) {
        return Ok(Verdict {
            flag: false,
            class: None,
        });
    }
    let mut best: Option<(f64, &Signature)> = None;
    for sig in &calibration.signatures {
        let d = sig.distance2(c);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, sig));
        }
    }
    let (_, sig) = best.ok_or_else(|| Error::MissingCalibration("no class signatures".into()))?;
    Ok(Verdict {
        flag: true,
        class: Some(sig.label.clone()),
    })
}

/// Bus (1-based) whose predicted perturbation direction `Ω^{-1/2} Z e_k`
/// best explains the excess covariance `S - I` of a reference-whitened
/// window. Scores are Rayleigh quotients, so the event bus maximizes them
/// for a rank-one excess; ties go to the lowest bus.
pub fn localize(w: &StandardizedWindow, reference: &Reference) -> Result<usize> {
    if w.scaling() != Scaling::Reference {
        return Err(Error::Domain(
            "localization needs a reference-whitened window".into(),
        ));
    }
    if w.n() != reference.n() {
        return Err(Error::Dimension {
            expected: reference.n(),
            got: w.n(),
        });
    }
    let directions = reference
        .directions
        .as_ref()
        .ok_or_else(|| Error::Domain("reference has no impedance matrix".into()))?;
    let excess = sample_covariance(w) - DMatrix::<C64>::identity(w.n(), w.n());
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, u) in directions.iter().enumerate() {
        let energy = u.norm_squared();
        if energy == 0.0 {
            continue;
        }
        let score = (u.adjoint() * &excess * u)[(0, 0)].norm() / energy;
        if score > best.0 {
            best = (score, k);
        }
    }
    Ok(best.1 + 1)
}
