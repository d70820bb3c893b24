//! Exact complex injections and the linearized power-flow model.
//!
//! The linear model works in deviations from the flat profile: `v` is the
//! magnitude deviation from 1 p.u. and `θ` the phase relative to the
//! reference, which itself stays at `1∠0`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::netmodel::{build_incidence, weighted_laplacian, NetworkGraph, WeightKind};
use crate::{Error, Result, C64};

/// Magnitude and phase deviations of the non-reference buses.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageState {
    pub v: DVector<f64>,
    pub theta: DVector<f64>,
}

impl VoltageState {
    pub fn zeros(n: usize) -> Self {
        VoltageState {
            v: DVector::zeros(n),
            theta: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Full complex voltages `(1 + v_a)∠θ_a`, reference `1∠0` first.
    pub fn to_phasors(&self) -> Vec<C64> {
        std::iter::once(C64::new(1.0, 0.0))
            .chain(
                self.v
                    .iter()
                    .zip(self.theta.iter())
                    .map(|(v, t)| C64::from_polar(1.0 + v, *t)),
            )
            .collect()
    }
}

/// Active and reactive injections of the non-reference buses.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerInjection {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
}

impl PowerInjection {
    pub fn zeros(n: usize) -> Self {
        PowerInjection {
            p: DVector::zeros(n),
            q: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        PowerInjection {
            p: &self.p * s,
            q: &self.q * s,
        }
    }
}

/// `P_a = Σ_b V_a (V_a^* - V_b^*) / z_ab^*` for every bus, reference
/// included.
pub fn exact_injection(graph: &NetworkGraph, voltages: &[C64]) -> Result<Vec<C64>> {
    if voltages.len() != graph.bus_count() {
        return Err(Error::Dimension {
            expected: graph.bus_count(),
            got: voltages.len(),
        });
    }
    if let Some(a) = voltages.iter().position(|v| v.norm() == 0.0) {
        return Err(Error::Domain(format!(
            "voltage at node {a} has zero magnitude"
        )));
    }
    let mut s = vec![C64::new(0.0, 0.0); voltages.len()];
    for l in graph.lines() {
        let z = l.impedance();
        if z.norm() == 0.0 {
            return Err(Error::Domain(format!(
                "line {}-{} has zero impedance",
                l.from, l.to
            )));
        }
        let zc = z.conj();
        let (va, vb) = (voltages[l.from], voltages[l.to]);
        s[l.from] += va * (va.conj() - vb.conj()) / zc;
        s[l.to] += vb * (vb.conj() - va.conj()) / zc;
    }
    Ok(s)
}

/// Factored linear model of one network. Construct once and reuse for
/// many samples.
#[derive(Debug, Clone)]
pub struct LinearPowerFlow {
    /// `M^T g M`
    conductance: DMatrix<f64>,
    /// `M^T β M`
    susceptance: DMatrix<f64>,
    h_r: Cholesky<f64, Dyn>,
    h_x: Cholesky<f64, Dyn>,
}

impl LinearPowerFlow {
    pub fn new(graph: &NetworkGraph) -> Result<Self> {
        let m = build_incidence(graph);
        let lap = |kind| weighted_laplacian(&m, &graph.edge_weights(kind), kind);
        Ok(LinearPowerFlow {
            conductance: lap(WeightKind::Conductance)?.matrix().clone(),
            susceptance: lap(WeightKind::Susceptance)?.matrix().clone(),
            h_r: lap(WeightKind::InverseResistance)?.cholesky()?,
            h_x: lap(WeightKind::InverseReactance)?.cholesky()?,
        })
    }

    pub fn node_count(&self) -> usize {
        self.conductance.nrows()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len == self.node_count() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.node_count(),
                got: len,
            })
        }
    }

    /// `H_{1/r}^{-1}`: entry `(a, b)` is the shared path resistance.
    pub fn resistance_kernel(&self) -> DMatrix<f64> {
        self.h_r.inverse()
    }

    /// `H_{1/x}^{-1}`: entry `(a, b)` is the shared path reactance.
    pub fn reactance_kernel(&self) -> DMatrix<f64> {
        self.h_x.inverse()
    }

    pub fn forward(&self, state: &VoltageState) -> Result<PowerInjection> {
        self.check(state.v.len())?;
        self.check(state.theta.len())?;
        Ok(PowerInjection {
            p: &self.conductance * &state.v + &self.susceptance * &state.theta,
            q: &self.susceptance * &state.v - &self.conductance * &state.theta,
        })
    }

    pub fn inverse(&self, inj: &PowerInjection) -> Result<VoltageState> {
        self.check(inj.p.len())?;
        self.check(inj.q.len())?;
        let rp = self.h_r.solve(&inj.p);
        let rq = self.h_r.solve(&inj.q);
        let xp = self.h_x.solve(&inj.p);
        let xq = self.h_x.solve(&inj.q);
        Ok(VoltageState {
            v: rp + xq,
            theta: xp - rq,
        })
    }

    /// Column-wise [`inverse`](Self::inverse) over `N x T` sample
    /// matrices, returning `(v, θ)`.
    pub fn inverse_series(
        &self,
        p: &DMatrix<f64>,
        q: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check(p.nrows())?;
        self.check(q.nrows())?;
        if p.ncols() != q.ncols() {
            return Err(Error::Dimension {
                expected: p.ncols(),
                got: q.ncols(),
            });
        }
        let rp = self.h_r.solve(p);
        let rq = self.h_r.solve(q);
        let xp = self.h_x.solve(p);
        let xq = self.h_x.solve(q);
        Ok((rp + xq, xp - rq))
    }
}

pub fn linear_forward(graph: &NetworkGraph, state: &VoltageState) -> Result<PowerInjection> {
    LinearPowerFlow::new(graph)?.forward(state)
}

pub fn linear_inverse(graph: &NetworkGraph, inj: &PowerInjection) -> Result<VoltageState> {
    LinearPowerFlow::new(graph)?.inverse(inj)
}

/// Largest mismatch between the exact injections at the linearized
/// operating point for `scale · inj` and the requested injections.
pub fn linearization_residual(
    graph: &NetworkGraph,
    inj: &PowerInjection,
    scale: f64,
) -> Result<f64> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::Domain(format!(
            "scale must be nonnegative, got {scale}"
        )));
    }
    let target = inj.scaled(scale);
    let state = linear_inverse(graph, &target)?;
    let exact = exact_injection(graph, &state.to_phasors())?;
    Ok(exact[1..]
        .iter()
        .zip(target.p.iter().zip(target.q.iter()))
        .map(|(s, (p, q))| (s - C64::new(*p, *q)).norm())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{chain, Line};

    fn chain3() -> NetworkGraph {
        chain(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap()
    }

    #[test]
    fn flat_profile_has_no_injection() {
        let g = chain3();
        let s = exact_injection(&g, &[C64::new(1.0, 0.0); 4]).unwrap();
        assert!(s.iter().all(|v| v.norm() == 0.0));
        let two = NetworkGraph::new(2, vec![Line::new(0, 1, 1.0, 1.0)]).unwrap();
        let s = exact_injection(&two, &[C64::new(1.0, 0.0); 2]).unwrap();
        assert!(s.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn two_bus_exact_injection_by_hand() {
        // x is required positive by the graph, so use a tiny reactance and
        // compare against the hand value for a resistive line.
        let g = NetworkGraph::new(2, vec![Line::new(0, 1, 1.0, 1e-12)]).unwrap();
        let s = exact_injection(&g, &[C64::new(1.0, 0.0), C64::new(0.99, 0.0)]).unwrap();
        assert!((s[0] - C64::new(0.01, 0.0)).norm() < 1e-11);
        assert!((s[1] - C64::new(-0.0099, 0.0)).norm() < 1e-11);
    }

    #[test]
    fn exact_injection_errors() {
        let g = chain3();
        assert!(matches!(
            exact_injection(&g, &[C64::new(1.0, 0.0); 3]),
            Err(Error::Dimension { .. })
        ));
        let mut v = vec![C64::new(1.0, 0.0); 4];
        v[2] = C64::new(0.0, 0.0);
        assert!(matches!(exact_injection(&g, &v), Err(Error::Domain(_))));
    }

    #[test]
    fn chain_inverse_by_hand() {
        let g = chain3();
        let inj = PowerInjection {
            p: DVector::from_vec(vec![0.0, 0.0, 1.0]),
            q: DVector::zeros(3),
        };
        let s = linear_inverse(&g, &inj).unwrap();
        assert!((s.v - DVector::from_vec(vec![1.0, 3.0, 6.0])).amax() < 1e-12);
        assert!((s.theta - DVector::from_vec(vec![2.0, 6.0, 12.0])).amax() < 1e-12);
    }

    #[test]
    fn chain_forward_recovers_unit_injection() {
        let g = chain3();
        let pf = LinearPowerFlow::new(&g).unwrap();
        let state = VoltageState {
            v: pf.resistance_kernel().column(2).into_owned(),
            theta: pf.reactance_kernel().column(2).into_owned(),
        };
        let inj = pf.forward(&state).unwrap();
        assert!((inj.p - DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() < 1e-12);
        assert!(inj.q.amax() < 1e-12);
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = chain3();
        assert_eq!(
            linear_forward(&g, &VoltageState::zeros(3)).unwrap(),
            PowerInjection::zeros(3)
        );
        assert_eq!(
            linear_inverse(&g, &PowerInjection::zeros(3)).unwrap(),
            VoltageState::zeros(3)
        );
    }

    #[test]
    fn dimension_mismatch() {
        let g = chain3();
        assert!(matches!(
            linear_forward(&g, &VoltageState::zeros(2)),
            Err(Error::Dimension {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn residual_zero_at_zero_scale() {
        let g = chain3();
        let inj = PowerInjection {
            p: DVector::from_vec(vec![0.0, 0.0, 1.0]),
            q: DVector::zeros(3),
        };
        assert_eq!(linearization_residual(&g, &inj, 0.0).unwrap(), 0.0);
        let r = linearization_residual(&g, &inj, 1e-2).unwrap();
        assert!(r < 1e-2, "residual {r}");
    }
}
