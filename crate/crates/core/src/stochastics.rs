//! Stochastic loads and covariance propagation through the linear model.
//!
//! Loads are Gaussian, independent across buses, with a fixed p-q
//! correlation at each bus. All randomness flows from an explicit seed.

use nalgebra::{ComplexField, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::is_hermitian;
use crate::netmodel::{admittance_matrix, NetworkGraph};
use crate::powerflow::LinearPowerFlow;
use crate::{Error, Result, C64};

/// Default p-q correlation at a bus.
pub const DEFAULT_RHO_PQ: f64 = 0.5;

/// Demand statistics of one bus, in p.u. of injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeLoad {
    pub mu_p: f64,
    pub mu_q: f64,
    pub sigma_p: f64,
    pub sigma_q: f64,
    pub rho: f64,
}

impl Default for NodeLoad {
    fn default() -> Self {
        NodeLoad {
            mu_p: -0.05,
            mu_q: -0.025,
            sigma_p: 0.001,
            sigma_q: 0.0005,
            rho: DEFAULT_RHO_PQ,
        }
    }
}

impl NodeLoad {
    fn validate(&self, node: usize) -> Result<()> {
        let finite = [self.mu_p, self.mu_q, self.sigma_p, self.sigma_q, self.rho]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain(format!(
                "node {node}: non-finite load parameter"
            )));
        }
        if self.sigma_p < 0.0 || self.sigma_q < 0.0 {
            return Err(Error::Domain(format!(
                "node {node}: standard deviations must be nonnegative"
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Domain(format!(
                "node {node}: p-q correlation must lie in [0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Per-bus load statistics for the `N` non-reference buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    nodes: Vec<NodeLoad>,
}

impl LoadModel {
    pub fn new(nodes: Vec<NodeLoad>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            n.validate(i + 1)?;
        }
        Ok(LoadModel { nodes })
    }

    pub fn uniform(n: usize, load: NodeLoad) -> Result<Self> {
        Self::new(vec![load; n])
    }

    pub fn nodes(&self) -> &[NodeLoad] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Diagonals of `(Ω_p, Ω_q, Ω_pq)`.
    pub fn covariance_diagonals(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.nodes.iter().map(|n| n.sigma_p * n.sigma_p).collect();
        let q = self.nodes.iter().map(|n| n.sigma_q * n.sigma_q).collect();
        let pq = self
            .nodes
            .iter()
            .map(|n| n.rho * n.sigma_p * n.sigma_q)
            .collect();
        (p, q, pq)
    }

    /// Mean injected current at the flat profile, `I = conj(S) = p - i·q`.
    pub fn mean_current(&self) -> DVector<C64> {
        DVector::from_iterator(
            self.len(),
            self.nodes.iter().map(|n| C64::new(n.mu_p, -n.mu_q)),
        )
    }

    /// Hermitian covariance of the current `p - i·q`. Diagonal, with
    /// entries `σ_p² + σ_q²`.
    pub fn current_covariance(&self) -> DMatrix<C64> {
        let d = DVector::from_iterator(
            self.len(),
            self.nodes
                .iter()
                .map(|n| C64::new(n.sigma_p * n.sigma_p + n.sigma_q * n.sigma_q, 0.0)),
        );
        DMatrix::from_diagonal(&d)
    }
}

/// `N x T` sample matrix plus the seed that produced it, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries<T: nalgebra::Scalar> {
    pub values: DMatrix<T>,
    pub seed: Option<u64>,
}

impl<T: ComplexField> SampleSeries<T> {
    pub fn new(values: DMatrix<T>, seed: Option<u64>) -> Result<Self> {
        if values.ncols() < 2 {
            return Err(Error::Domain(format!(
                "a sample series needs at least 2 samples, got {}",
                values.ncols()
            )));
        }
        Ok(SampleSeries { values, seed })
    }

    pub fn nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn covariance(&self) -> DMatrix<T> {
        cross_covariance_unchecked(&self.values, &self.values)
    }

    pub fn cross_covariance(&self, other: &Self) -> Result<DMatrix<T>> {
        empirical_covariance(&self.values, &other.values)
    }
}

/// Active and reactive load samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    pub p: SampleSeries<f64>,
    pub q: SampleSeries<f64>,
}

pub fn sample_loads(model: &LoadModel, samples: usize, seed: u64) -> Result<LoadSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, q) = sample_loads_with(model, samples, &mut rng)?;
    Ok(LoadSeries {
        p: SampleSeries::new(p, Some(seed))?,
        q: SampleSeries::new(q, Some(seed))?,
    })
}

/// Draws `(p, q)` load matrices from a caller-owned generator.
///
/// Samples are drawn time-major so a prefix of a longer draw matches a
/// shorter one.
pub fn sample_loads_with<R: Rng + ?Sized>(
    model: &LoadModel,
    samples: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if samples < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    for (i, n) in model.nodes.iter().enumerate() {
        n.validate(i + 1)?;
    }
    let n = model.len();
    let mut p = DMatrix::zeros(n, samples);
    let mut q = DMatrix::zeros(n, samples);
    for t in 0..samples {
        for (a, load) in model.nodes.iter().enumerate() {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            p[(a, t)] = load.mu_p + load.sigma_p * z1;
            q[(a, t)] = load.mu_q
                + load.sigma_q * (load.rho * z1 + (1.0 - load.rho * load.rho).sqrt() * z2);
        }
    }
    Ok((p, q))
}

fn cross_covariance_unchecked<T: ComplexField>(xs: &DMatrix<T>, ys: &DMatrix<T>) -> DMatrix<T> {
    let t = xs.ncols();
    let center = |m: &DMatrix<T>| {
        let mut c = m.clone();
        for mut row in c.row_iter_mut() {
            let mean = row.sum() / T::from_usize(t).unwrap();
            row.apply(|v| *v -= mean.clone());
        }
        c
    };
    let xc = center(xs);
    let yc = center(ys);
    (xc * yc.adjoint()) / T::from_usize(t - 1).unwrap()
}

/// Sample estimate of `E[(x - μ_x)(y - μ_y)^*]` with `1/(T-1)`
/// normalization. Rows are variables, columns are samples.
pub fn empirical_covariance<T: ComplexField>(
    xs: &DMatrix<T>,
    ys: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    if xs.ncols() != ys.ncols() {
        return Err(Error::Dimension {
            expected: xs.ncols(),
            got: ys.ncols(),
        });
    }
    if xs.ncols() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 samples, got {}",
            xs.ncols()
        )));
    }
    Ok(cross_covariance_unchecked(xs, ys))
}

/// Phase and magnitude covariances induced by injection covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub omega_p: DMatrix<f64>,
    pub omega_q: DMatrix<f64>,
    pub omega_pq: DMatrix<f64>,
    pub omega_theta: DMatrix<f64>,
    pub omega_v: DMatrix<f64>,
}

/// Maps `(Ω_p, Ω_q, Ω_pq)` through the inverse linear model, returning
/// `(Ω_θ, Ω_v)`.
pub fn propagate_covariance(
    pf: &LinearPowerFlow,
    omega_p: &DMatrix<f64>,
    omega_q: &DMatrix<f64>,
    omega_pq: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = pf.node_count();
    for m in [omega_p, omega_q, omega_pq] {
        if m.shape() != (n, n) {
            return Err(Error::Dimension {
                expected: n,
                got: if m.nrows() != n { m.nrows() } else { m.ncols() },
            });
        }
    }
    if !is_hermitian(omega_p, 1e-12) || !is_hermitian(omega_q, 1e-12) {
        return Err(Error::Domain("Ω_p and Ω_q must be symmetric".into()));
    }
    let r = pf.resistance_kernel();
    let x = pf.reactance_kernel();
    let omega_qp = omega_pq.transpose();
    let theta = &x * omega_p * &x + &r * omega_q * &r - &x * omega_pq * &r - &r * &omega_qp * &x;
    let v = &r * omega_p * &r + &x * omega_q * &x + &r * omega_pq * &x + &x * &omega_qp * &r;
    Ok((symmetrize(theta), symmetrize(v)))
}

impl CovarianceSet {
    /// Analytic covariances for a load model under uncorrelated buses.
    pub fn from_load_model(pf: &LinearPowerFlow, model: &LoadModel) -> Result<Self> {
        let (p, q, pq) = model.covariance_diagonals();
        let diag = |d: Vec<f64>| DMatrix::from_diagonal(&DVector::from_vec(d));
        let (omega_p, omega_q, omega_pq) = (diag(p), diag(q), diag(pq));
        let (omega_theta, omega_v) = propagate_covariance(pf, &omega_p, &omega_q, &omega_pq)?;
        Ok(CovarianceSet {
            omega_p,
            omega_q,
            omega_pq,
            omega_theta,
            omega_v,
        })
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Closed-form variance of the magnitude at `node` from bus-local
/// variances: the sum over buses `c` on the reference path of `node` of
/// `r_c² Ω_p(c) + x_c² Ω_q(c) + 2 r_c x_c Ω_pq(c)`, where `r_c`, `x_c` are
/// the parameters of the line entering `c` from its parent.
///
/// Agrees with [`propagate_covariance`] when all variance sits on buses
/// adjacent to the reference; elsewhere the two differ because the
/// path-kernel entries are sums over several lines.
pub fn closed_form_voltage_variance(
    graph: &NetworkGraph,
    node: usize,
    var_p: &[f64],
    var_q: &[f64],
    cov_pq: &[f64],
) -> Result<f64> {
    let n = graph.node_count();
    for d in [var_p, var_q, cov_pq] {
        if d.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: d.len(),
            });
        }
    }
    let mut total = 0.0;
    for c in graph.path_nodes(node)? {
        let (_, line) = graph.parent(c).expect("path nodes have parents");
        let i = c - 1;
        total += line.r * line.r * var_p[i]
            + line.x * line.x * var_q[i]
            + 2.0 * line.r * line.x * cov_pq[i];
    }
    Ok(total)
}

/// `∂S/∂conj(V)` of `S = V ∘ conj(Y V)` at the flat `1∠0` profile.
///
/// At the flat profile `Y V = 0`, so the holomorphic part vanishes and the
/// remaining derivative is `conj(Y)`.
pub fn flat_voltage_jacobian(graph: &NetworkGraph) -> DMatrix<C64> {
    admittance_matrix(graph).map(|y| y.conj())
}

/// `Ω_P = Y^{-1} J Ω_I J^* (Y^{-1})^*`.
pub fn current_to_power_covariance(
    graph: &NetworkGraph,
    omega_i: &DMatrix<C64>,
    jacobian: &DMatrix<C64>,
) -> Result<DMatrix<C64>> {
    let n = graph.node_count();
    for m in [omega_i, jacobian] {
        if m.shape() != (n, n) {
            return Err(Error::Dimension {
                expected: n,
                got: m.nrows(),
            });
        }
    }
    if !is_hermitian(omega_i, 1e-10) {
        return Err(Error::Domain("Ω_I must be Hermitian".into()));
    }
    let y = admittance_matrix(graph);
    let y_inv = y
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("nodal admittance matrix".into()))?;
    let a = &y_inv * jacobian;
    let out = &a * omega_i * a.adjoint();
    Ok((&out + out.adjoint()) * C64::new(0.5, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, numerical_rank};
    use crate::netmodel::chain;

    #[test]
    fn degenerate_loads_are_constant() {
        let load = NodeLoad {
            mu_p: 0.3,
            mu_q: -0.1,
            sigma_p: 0.0,
            sigma_q: 0.0,
            rho: 0.5,
        };
        let m = LoadModel::uniform(3, load).unwrap();
        let s = sample_loads(&m, 10, 1).unwrap();
        assert!(s.p.values.iter().all(|v| *v == 0.3));
        assert!(s.q.values.iter().all(|v| *v == -0.1));
        assert!(s.p.covariance().amax() < 1e-30);
    }

    #[test]
    fn same_seed_same_draws() {
        let m = LoadModel::uniform(4, NodeLoad::default()).unwrap();
        let a = sample_loads(&m, 50, 9).unwrap();
        let b = sample_loads(&m, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_loads(&m, 50, 10).unwrap();
        assert_ne!(a.p.values, c.p.values);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = NodeLoad {
            rho: 1.0,
            ..NodeLoad::default()
        };
        assert!(matches!(LoadModel::uniform(2, bad), Err(Error::Domain(_))));
        let neg = NodeLoad {
            rho: -0.1,
            ..NodeLoad::default()
        };
        assert!(LoadModel::uniform(2, neg).is_err());
        let m = LoadModel::uniform(2, NodeLoad::default()).unwrap();
        assert!(sample_loads(&m, 1, 0).is_err());
    }

    #[test]
    fn covariance_shape_errors() {
        let a = DMatrix::<f64>::zeros(2, 5);
        let b = DMatrix::<f64>::zeros(2, 4);
        assert!(matches!(
            empirical_covariance(&a, &b),
            Err(Error::Dimension { .. })
        ));
        let one = DMatrix::<f64>::zeros(2, 1);
        assert!(empirical_covariance(&one, &one).is_err());
    }

    #[test]
    fn complex_auto_covariance_is_hermitian_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::<C64>::from_fn(5, 40, |_, _| {
            C64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        });
        let c = empirical_covariance(&x, &x).unwrap();
        assert!(crate::linalg::hermitian_defect(&c) < 1e-12);
        assert!(hermitian_eigenvalues(c).iter().all(|l| *l >= -1e-12));
    }

    #[test]
    fn chain_single_source_propagation() {
        let g = chain(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        let pf = LinearPowerFlow::new(&g).unwrap();
        let s2 = 0.25;
        let mut op = DMatrix::zeros(3, 3);
        op[(2, 2)] = s2;
        let z = DMatrix::zeros(3, 3);
        let (_, ov) = propagate_covariance(&pf, &op, &z, &z).unwrap();
        let r = [1.0, 3.0, 6.0];
        for a in 0..3 {
            for b in 0..3 {
                assert!((ov[(a, b)] - s2 * r[a] * r[b]).abs() < 1e-12);
            }
        }
        assert!((ov[(2, 2)] - 36.0 * s2).abs() < 1e-12);
    }

    #[test]
    fn zero_inputs_propagate_to_zero() {
        let g = chain(&[1.0, 2.0], &[1.0, 1.0]).unwrap();
        let pf = LinearPowerFlow::new(&g).unwrap();
        let z = DMatrix::zeros(2, 2);
        let (t, v) = propagate_covariance(&pf, &z, &z, &z).unwrap();
        assert_eq!(t, z);
        assert_eq!(v, z);
    }

    #[test]
    fn propagation_rejects_asymmetric_input() {
        let g = chain(&[1.0, 2.0], &[1.0, 1.0]).unwrap();
        let pf = LinearPowerFlow::new(&g).unwrap();
        let z = DMatrix::zeros(2, 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            propagate_covariance(&pf, &bad, &z, &z),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            propagate_covariance(&pf, &DMatrix::zeros(3, 3), &z, &z),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn closed_form_single_edge() {
        let g = chain(&[1.0], &[2.0]).unwrap();
        let s2 = 0.3;
        assert_eq!(
            closed_form_voltage_variance(&g, 1, &[0.0], &[0.0], &[0.0]).unwrap(),
            0.0
        );
        let cf = closed_form_voltage_variance(&g, 1, &[s2], &[0.0], &[0.0]).unwrap();
        assert!((cf - s2).abs() < 1e-15);
        assert!(matches!(
            closed_form_voltage_variance(&g, 5, &[s2], &[0.0], &[0.0]),
            Err(Error::UnknownNode(5))
        ));
    }

    #[test]
    fn flat_jacobian_matches_finite_difference() {
        let g = chain(&[0.1, 0.2, 0.15], &[0.2, 0.1, 0.3]).unwrap();
        let y = admittance_matrix(&g);
        let n = 3;
        let s_of = |dv: &DVector<C64>| {
            let v = DVector::from_element(n, C64::new(1.0, 0.0)) + dv;
            // Reduced Y already accounts for the 1∠0 reference through
            // Y_full · 1 = 0, so Y_full V = Y (V - 1) on the reduced buses.
            let i = &y * dv;
            v.component_mul(&i.map(|c| c.conj()))
        };
        let j = flat_voltage_jacobian(&g);
        let dir = DVector::from_vec(vec![
            C64::new(0.3, -0.2),
            C64::new(-0.1, 0.4),
            C64::new(0.2, 0.1),
        ]);
        let h = 1e-7;
        let fd = (s_of(&(&dir * C64::new(h, 0.0))) - s_of(&DVector::zeros(n))) / C64::new(h, 0.0);
        let lin = &j * dir.map(|c| c.conj());
        assert!((fd - lin).camax() < 1e-5);
    }

    #[test]
    fn power_covariance_is_psd_and_rank_bounded() {
        let g = chain(&[0.1, 0.2, 0.15, 0.05], &[0.2, 0.1, 0.3, 0.1]).unwrap();
        let j = flat_voltage_jacobian(&g);
        let zero = DMatrix::<C64>::zeros(4, 4);
        assert!(current_to_power_covariance(&g, &zero, &j)
            .unwrap()
            .iter()
            .all(|v| v.norm() == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = DMatrix::<C64>::from_fn(4, 2, |_, _| {
            C64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        });
        let omega_i = &b * b.adjoint();
        let omega_p = current_to_power_covariance(&g, &omega_i, &j).unwrap();
        let eig = hermitian_eigenvalues(omega_p.clone());
        assert!(eig.iter().all(|l| *l >= -1e-10 * eig[0].abs().max(1.0)));
        assert!(numerical_rank(&omega_p, 1e-9) <= numerical_rank(&omega_i, 1e-9));
    }
}
