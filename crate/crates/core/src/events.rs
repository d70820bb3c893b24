//! Events as compensation current sources.
//!
//! A change of the element at bus `k` is replaced by a current source equal
//! to the change of the element's current. On a window of current samples
//! this is a scaling of row `k` by `1 + α`; in whitened voltage space it is
//! the rank-one perturbation `P(k, α)` of the identity covariance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{ComplexField, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::inverse_sqrt;
use crate::netmodel::{admittance_matrix, NetworkGraph};
use crate::{Error, Result, C64};

/// Event classes. The eight named ones mirror the usual distribution
/// event taxonomy; `Custom` carries any other label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventClass {
    Flt,
    Gl,
    Li,
    Ls,
    Sc,
    Sa,
    Lt,
    Dg,
    Custom(String),
}

impl EventClass {
    pub const NAMED: [EventClass; 8] = [
        EventClass::Flt,
        EventClass::Gl,
        EventClass::Li,
        EventClass::Ls,
        EventClass::Sc,
        EventClass::Sa,
        EventClass::Lt,
        EventClass::Dg,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            EventClass::Flt => "FLT",
            EventClass::Gl => "GL",
            EventClass::Li => "LI",
            EventClass::Ls => "LS",
            EventClass::Sc => "SC",
            EventClass::Sa => "SA",
            EventClass::Lt => "LT",
            EventClass::Dg => "DG",
            EventClass::Custom(s) => s,
        }
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Domain("empty event class".into()));
        }
        Ok(EventClass::NAMED
            .iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .cloned()
            .unwrap_or_else(|| EventClass::Custom(s.to_string())))
    }
}

impl Serialize for EventClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EventClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A step change at one bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    /// Bus id (1-based; the reference cannot host an event).
    pub node: usize,
    /// Severity; `-1` removes the bus current entirely.
    pub alpha: f64,
    pub class: EventClass,
    /// First affected sample.
    pub onset: usize,
    /// Number of affected samples; `None` lasts to the end of the window.
    pub duration: Option<usize>,
}

impl EventSpec {
    pub fn new(node: usize, alpha: f64, class: EventClass) -> Self {
        EventSpec {
            node,
            alpha,
            class,
            onset: 0,
            duration: None,
        }
    }

    pub fn starting_at(mut self, onset: usize) -> Self {
        self.onset = onset;
        self
    }

    pub fn lasting(mut self, duration: usize) -> Self {
        self.duration = Some(duration);
        self
    }

    /// `(1 + α)² - 1`, the weight of the rank-one perturbation.
    pub fn coefficient(&self) -> f64 {
        (1.0 + self.alpha).powi(2) - 1.0
    }

    /// Checks the event against a window of `n` buses and `t` samples.
    pub fn validate(&self, n: usize, t: usize) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= -1.0) {
            return Err(Error::Domain(format!(
                "severity must be >= -1, got {}",
                self.alpha
            )));
        }
        if self.node == 0 {
            return Err(Error::Domain(
                "events cannot occur at the reference node".into(),
            ));
        }
        if self.node > n {
            return Err(Error::UnknownNode(self.node));
        }
        if self.onset >= t {
            return Err(Error::Domain(format!(
                "event onset {} is outside the {t}-sample window",
                self.onset
            )));
        }
        Ok(())
    }

    /// Affected sample range clipped to a window of `t` samples.
    pub fn span(&self, t: usize) -> std::ops::Range<usize> {
        let end = match self.duration {
            Some(d) => self.onset.saturating_add(d).min(t),
            None => t,
        };
        self.onset.min(t)..end
    }
}

/// Equivalent source current of an element change, `i_post - i_pre`.
pub fn compensation_source(i_pre: C64, i_post: C64) -> C64 {
    i_post - i_pre
}

/// Scales row `node` of the current samples by `1 + α` inside the event
/// span, which is left-multiplication by `I + α e_k e_k^*` there.
pub fn apply_event<T: ComplexField<RealField = f64> + Copy>(
    series: &DMatrix<T>,
    ev: &EventSpec,
) -> Result<DMatrix<T>> {
    let mut out = series.clone();
    apply_event_in_place(&mut out, ev)?;
    Ok(out)
}

pub fn apply_event_in_place<T: ComplexField<RealField = f64> + Copy>(
    series: &mut DMatrix<T>,
    ev: &EventSpec,
) -> Result<()> {
    ev.validate(series.nrows(), series.ncols())?;
    let gain = T::from_real(1.0 + ev.alpha);
    let row = ev.node - 1;
    for t in ev.span(series.ncols()) {
        series[(row, t)] *= gain;
    }
    Ok(())
}

/// Reduced nodal impedance matrix `Z = Y^{-1}`.
pub fn impedance_matrix(graph: &NetworkGraph) -> Result<DMatrix<C64>> {
    admittance_matrix(graph)
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("nodal admittance matrix is not invertible".into()))
}

/// `P(k, α) = [(1+α)² - 1] · u u^*` with `u = Ω^{-1/2} Z e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMatrix {
    pub matrix: DMatrix<C64>,
    pub node: usize,
    pub alpha: f64,
    direction: DVector<C64>,
}

impl PerturbationMatrix {
    pub fn coefficient(&self) -> f64 {
        (1.0 + self.alpha).powi(2) - 1.0
    }

    /// Unnormalized direction `Ω^{-1/2} Z e_k`.
    pub fn direction(&self) -> &DVector<C64> {
        &self.direction
    }

    /// The one eigenvalue of `I + P` that differs from 1.
    pub fn outlier_eigenvalue(&self) -> f64 {
        1.0 + self.coefficient() * self.direction.norm_squared()
    }
}

pub fn perturbation_matrix(
    z: &DMatrix<C64>,
    omega: &DMatrix<C64>,
    ev: &EventSpec,
) -> Result<PerturbationMatrix> {
    let n = z.nrows();
    if !z.is_square() || omega.shape() != (n, n) {
        return Err(Error::Dimension {
            expected: n,
            got: omega.nrows(),
        });
    }
    if ev.node == 0 || ev.node > n {
        return Err(Error::UnknownNode(ev.node));
    }
    let w = inverse_sqrt(omega)?;
    let direction = w * z.column(ev.node - 1);
    let coeff = C64::new(ev.coefficient(), 0.0);
    let matrix = &direction * direction.adjoint() * coeff;
    Ok(PerturbationMatrix {
        matrix,
        node: ev.node,
        alpha: ev.alpha,
        direction,
    })
}
