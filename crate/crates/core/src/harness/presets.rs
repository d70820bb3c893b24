//! Event-class presets.
//!
//! Each preset is a parameterization over severity, location along the
//! feeder, onset, duration and the number of affected buses. Positions and
//! times are fractions so one preset applies to any network size and
//! window length.

use serde::{Deserialize, Serialize};

use crate::events::{EventClass, EventSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub class: EventClass,
    pub alpha: f64,
    /// Fraction of `N` locating the first affected bus.
    pub position: f64,
    /// Fraction of `T` at which the event starts.
    pub onset: f64,
    /// Fraction of `T` the event lasts; `None` runs to the window end.
    pub duration: Option<f64>,
    /// Number of consecutive buses affected.
    pub nodes: usize,
}

impl Preset {
    fn new(
        class: EventClass,
        alpha: f64,
        position: f64,
        onset: f64,
        duration: Option<f64>,
        nodes: usize,
    ) -> Self {
        Preset {
            class,
            alpha,
            position,
            onset,
            duration,
            nodes,
        }
    }

    /// Expands the preset into single-bus events for `n` buses and `t`
    /// samples.
    pub fn events(&self, n: usize, t: usize) -> Result<Vec<EventSpec>> {
        if n == 0 || t == 0 {
            return Err(Error::Domain(
                "presets need a nonempty network and window".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.position) || !(0.0..1.0).contains(&self.onset) {
            return Err(Error::Domain(format!(
                "preset {}: position must lie in [0, 1] and onset in [0, 1)",
                self.class
            )));
        }
        if self.nodes == 0 || self.nodes > n {
            return Err(Error::Domain(format!(
                "preset {} affects {} buses on a {n}-bus network",
                self.class, self.nodes
            )));
        }
        let first = ((self.position * n as f64).round() as usize).clamp(1, n + 1 - self.nodes);
        let onset = ((self.onset * t as f64).round() as usize).min(t - 1);
        let duration = self
            .duration
            .map(|d| ((d * t as f64).round() as usize).max(1));
        Ok((first..first + self.nodes)
            .map(|node| EventSpec {
                node,
                alpha: self.alpha,
                class: self.class.clone(),
                onset,
                duration,
            })
            .collect())
    }
}

/// Default presets for the eight named classes.
///
/// Severe classes (SA, LT, FLT) use large |α| and long spans so their
/// leading eigenvalue is orders of magnitude past the M-P edge; the others
/// are moderate steps that differ in size, spread and duration.
pub fn default_presets() -> Vec<Preset> {
    use EventClass::*;
    vec![
        Preset::new(Flt, -1.0, 0.8, 0.5, None, 2),
        Preset::new(Gl, -0.5, 0.4, 0.5, None, 1),
        Preset::new(Li, 0.5, 0.7, 0.3, None, 3),
        Preset::new(Ls, -0.3, 0.9, 0.5, None, 6),
        Preset::new(Sc, 0.4, 0.2, 0.6, Some(0.3), 8),
        Preset::new(Sa, 200.0, 0.9, 0.2, None, 3),
        Preset::new(Lt, 30.0, 0.5, 0.3, None, 1),
        Preset::new(Dg, 1.5, 1.0, 0.4, Some(0.2), 1),
    ]
}

pub fn find<'a>(presets: &'a [Preset], class: &EventClass) -> Option<&'a Preset> {
    presets.iter().find(|p| &p.class == class)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_class_has_a_preset() {
        let p = default_presets();
        for c in EventClass::NAMED {
            assert!(find(&p, &c).is_some(), "{c}");
        }
    }

    #[test]
    fn expansion_stays_in_range() {
        for p in default_presets() {
            for (n, t) in [(10, 100), (30, 500), (100, 400)] {
                let evs = p.events(n, t).unwrap();
                assert_eq!(evs.len(), p.nodes);
                for e in evs {
                    e.validate(n, t).unwrap();
                }
            }
        }
    }

    #[test]
    fn rejects_oversized_presets() {
        let p = Preset::new(EventClass::Ls, -0.3, 0.5, 0.5, None, 12);
        assert!(p.events(10, 100).is_err());
    }
}
