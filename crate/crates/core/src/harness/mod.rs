//! End-to-end scenario runs: simulate a window, standardize it, compute the
//! criteria, then detect, classify and localize.

pub mod config;
pub mod formats;
pub mod network;
pub mod presets;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::events::{apply_event_in_place, impedance_matrix, EventClass, EventSpec};
use crate::netmodel::{admittance_matrix, NetworkGraph};
use crate::powerflow::LinearPowerFlow;
use crate::rmtdetect::{
    analyze, detect_and_classify, localize, standardize, Calibration, CriteriaTriple, Intervals,
    Reference, Scaling, Signature, SpectrumSummary, StandardizedWindow, TARGET_FPR,
};
use crate::stochastics::{sample_loads_with, LoadModel, NodeLoad};
use crate::{Error, Result, C64};

pub use config::{EventRoute, Scenario, ScenarioConfig};
pub use network::{load_network, NetworkSource, Range};
pub use presets::{default_presets, Preset};

/// `splitmix64` step; derives independent stream seeds from one base seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_H0: u64 = 1;
const STREAM_SIGNATURE: u64 = 2;

/// Everything needed to simulate and analyze windows on one network.
#[derive(Debug, Clone)]
pub struct Pipeline {
    graph: NetworkGraph,
    pf: LinearPowerFlow,
    load: LoadModel,
    y: DMatrix<C64>,
    z: DMatrix<C64>,
    reference: Reference,
    samples: usize,
    sigma_m: f64,
    mode: Scaling,
}

impl Pipeline {
    pub fn new(
        graph: NetworkGraph,
        load: NodeLoad,
        samples: usize,
        sigma_m: f64,
        mode: Scaling,
    ) -> Result<Self> {
        let n = graph.node_count();
        if samples < n {
            return Err(Error::ShortWindow { n, t: samples });
        }
        if !(sigma_m >= 0.0 && sigma_m.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma_m must be nonnegative, got {sigma_m}"
            )));
        }
        let load = LoadModel::uniform(n, load)?;
        let pf = LinearPowerFlow::new(&graph)?;
        let y = admittance_matrix(&graph);
        let z = impedance_matrix(&graph)?;
        let noise = DMatrix::<C64>::identity(n, n) * C64::new(2.0 * sigma_m * sigma_m, 0.0);
        let cov = &z * load.current_covariance() * z.adjoint() + noise;
        let cov = (&cov + cov.adjoint()) * C64::new(0.5, 0.0);
        let reference = Reference::new(cov, Some(&z))?;
        Ok(Pipeline {
            graph,
            pf,
            load,
            y,
            z,
            reference,
            samples,
            sigma_m,
            mode,
        })
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(
            cfg.network.build()?,
            cfg.load,
            cfg.samples,
            cfg.sigma_m,
            cfg.mode,
        )
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn sigma_m(&self) -> f64 {
        self.sigma_m
    }

    pub fn mode(&self) -> Scaling {
        self.mode
    }

    pub fn impedance(&self) -> &DMatrix<C64> {
        &self.z
    }

    pub fn admittance(&self) -> &DMatrix<C64> {
        &self.y
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    /// Noise-free `N x T` window of complex deviations `v + iθ` with the
    /// events applied.
    pub fn clean_window<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        events: &[EventSpec],
        route: EventRoute,
    ) -> Result<DMatrix<C64>> {
        let (p, q) = sample_loads_with(&self.load, self.samples, rng)?;
        let (v, theta) = self.pf.inverse_series(&p, &q)?;
        let mut window = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| {
            C64::new(v[(i, j)], theta[(i, j)])
        });
        if events.is_empty() {
            return Ok(window);
        }
        for ev in events {
            ev.validate(window.nrows(), window.ncols())?;
        }
        match route {
            EventRoute::Current => {
                let mut current = &self.y * &window;
                for ev in events {
                    apply_event_in_place(&mut current, ev)?;
                }
                window = &self.z * current;
            }
            EventRoute::Voltage => {
                for ev in events {
                    let k = ev.node - 1;
                    let gain = C64::new(ev.alpha, 0.0);
                    for t in ev.span(window.ncols()) {
                        let ik = (self.y.row(k) * window.column(t))[(0, 0)];
                        let shift = self.z.column(k) * (gain * ik);
                        let mut col = window.column_mut(t);
                        col += shift;
                    }
                }
            }
        }
        Ok(window)
    }

    /// Measured window: [`clean_window`](Self::clean_window) plus
    /// independent Gaussian noise of standard deviation `σ_m` on the real
    /// and imaginary parts.
    pub fn simulate(
        &self,
        seed: u64,
        events: &[EventSpec],
        route: EventRoute,
    ) -> Result<DMatrix<C64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut window = self.clean_window(&mut rng, events, route)?;
        if self.sigma_m > 0.0 {
            for v in window.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *v += C64::new(re, im) * self.sigma_m;
            }
        }
        Ok(window)
    }

    pub fn standardize(&self, raw: &DMatrix<C64>) -> Result<StandardizedWindow> {
        match self.mode {
            Scaling::Reference => self.reference.standardize(raw, self.sigma_m),
            Scaling::Column => standardize(raw, self.sigma_m),
        }
    }

    pub fn analyze(&self, raw: &DMatrix<C64>) -> Result<SpectrumSummary> {
        analyze(&self.standardize(raw)?)
    }

    pub fn evaluate(&self, raw: &DMatrix<C64>) -> Result<CriteriaTriple> {
        Ok(self.analyze(raw)?.criteria)
    }

    /// Events of a scenario on this network.
    pub fn scenario_events(
        &self,
        scenario: &Scenario,
        presets: &[Preset],
    ) -> Result<Vec<EventSpec>> {
        match scenario {
            Scenario::H0 => Ok(Vec::new()),
            Scenario::Custom(evs) => Ok(evs.clone()),
            Scenario::Preset(class) => presets::find(presets, class)
                .ok_or_else(|| Error::Domain(format!("no preset for class {class}")))?
                .events(self.node_count(), self.samples),
        }
    }

    /// Criteria of `runs` windows, window `i` simulated from
    /// `seeds(i)`. Results are in index order whether or not the runs
    /// execute in parallel.
    pub fn criteria_batch(
        &self,
        seeds: &[u64],
        events: &[EventSpec],
        route: EventRoute,
        parallel: bool,
    ) -> Result<Vec<CriteriaTriple>> {
        let run = |seed: &u64| self.evaluate(&self.simulate(*seed, events, route)?);
        if parallel {
            seeds.par_iter().map(run).collect()
        } else {
            seeds.iter().map(run).collect()
        }
    }

    /// Calibrates H0 acceptance intervals from `runs` seeded windows and
    /// class signatures from `signature_runs` windows per preset.
    pub fn calibrate(
        &self,
        base_seed: u64,
        runs: usize,
        signature_runs: usize,
        presets: &[Preset],
        parallel: bool,
    ) -> Result<Calibration> {
        let seeds: Vec<u64> = (0..runs as u64)
            .map(|i| derive_seed(base_seed, STREAM_H0, i))
            .collect();
        let h0 = self.criteria_batch(&seeds, &[], EventRoute::Current, parallel)?;
        let intervals = Intervals::calibrate(&h0, TARGET_FPR)?;
        let mut signatures = Vec::with_capacity(presets.len());
        for (p, preset) in presets.iter().enumerate() {
            let events = preset.events(self.node_count(), self.samples)?;
            let sig_seeds: Vec<u64> = (0..signature_runs as u64)
                .map(|i| derive_seed(base_seed, STREAM_SIGNATURE + p as u64, i))
                .collect();
            let samples =
                self.criteria_batch(&sig_seeds, &events, EventRoute::Current, parallel)?;
            signatures.push(Signature::from_samples(preset.class.to_string(), &samples)?);
        }
        Ok(Calibration {
            n: self.node_count(),
            t: self.samples,
            sigma_m: self.sigma_m,
            seeds,
            intervals,
            signatures,
        })
    }

    pub fn check_calibration(&self, calibration: &Calibration) -> Result<()> {
        if calibration.matches(self.node_count(), self.samples, self.sigma_m) {
            Ok(())
        } else {
            Err(Error::MissingCalibration(format!(
                "calibration is for N={}, T={}, sigma_m={} but the run has N={}, T={}, sigma_m={}",
                calibration.n,
                calibration.t,
                calibration.sigma_m,
                self.node_count(),
                self.samples,
                self.sigma_m
            )))
        }
    }

    /// Detects, classifies and (in reference mode) localizes one window.
    pub fn detect(
        &self,
        raw: &DMatrix<C64>,
        calibration: &Calibration,
        seed: u64,
    ) -> Result<DetectionReport> {
        self.check_calibration(calibration)?;
        let w = self.standardize(raw)?;
        let criteria = analyze(&w)?.criteria;
        let verdict = detect_and_classify(&criteria, calibration)?;
        let node = match (verdict.flag, self.mode) {
            (true, Scaling::Reference) => Some(localize(&w, &self.reference)?),
            _ => None,
        };
        Ok(DetectionReport {
            criteria,
            flag: verdict.flag,
            class: verdict.class.unwrap_or_else(|| NO_EVENT.to_string()),
            node,
            n: w.n(),
            t: w.t(),
            seed,
        })
    }
}

/// Class reported for unflagged windows.
pub const NO_EVENT: &str = "none";

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub criteria: CriteriaTriple,
    pub flag: bool,
    pub class: String,
    /// Localized bus (1-based) when an event was flagged.
    pub node: Option<usize>,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
}

impl DetectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Loads the configured calibration, or calibrates from scratch when none
/// is configured.
pub fn calibration_for(
    cfg: &ScenarioConfig,
    pipeline: &Pipeline,
    parallel: bool,
) -> Result<Calibration> {
    match &cfg.calibration {
        Some(path) => {
            let cal = Calibration::load(path)?;
            pipeline.check_calibration(&cal)?;
            Ok(cal)
        }
        None => pipeline.calibrate(
            cfg.seed,
            cfg.calibration_runs,
            cfg.signature_runs,
            &cfg.presets,
            parallel,
        ),
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<DetectionReport> {
    let label = cfg.scenario.label();
    (|| {
        let pipeline = Pipeline::from_config(cfg)?;
        let calibration = calibration_for(cfg, &pipeline, true)?;
        run_with(cfg, &pipeline, &calibration)
    })()
    .map_err(|e| e.in_scenario(label))
}

pub fn run_scenario_with(
    cfg: &ScenarioConfig,
    calibration: &Calibration,
) -> Result<DetectionReport> {
    (|| run_with(cfg, &Pipeline::from_config(cfg)?, calibration))()
        .map_err(|e| e.in_scenario(cfg.scenario.label()))
}

fn run_with(
    cfg: &ScenarioConfig,
    pipeline: &Pipeline,
    calibration: &Calibration,
) -> Result<DetectionReport> {
    let events = pipeline.scenario_events(&cfg.scenario, &cfg.presets)?;
    let raw = pipeline.simulate(cfg.seed, &events, cfg.route)?;
    pipeline.detect(&raw, calibration, cfg.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub network: String,
    pub scenario: String,
    pub criteria: Option<CriteriaTriple>,
    pub flag: Option<bool>,
    pub class: Option<String>,
    pub error: Option<String>,
}

/// Criteria per (network, scenario), in input order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Configurations that can share one pipeline and calibration.
#[derive(PartialEq)]
struct GroupKey<'a> {
    network: &'a NetworkSource,
    load: &'a NodeLoad,
    samples: usize,
    sigma_m: u64,
    mode: Scaling,
    seed: u64,
    calibration: &'a Option<std::path::PathBuf>,
    presets: &'a [Preset],
    runs: (usize, usize),
}

impl<'a> GroupKey<'a> {
    fn of(cfg: &'a ScenarioConfig) -> Self {
        GroupKey {
            network: &cfg.network,
            load: &cfg.load,
            samples: cfg.samples,
            sigma_m: cfg.sigma_m.to_bits(),
            mode: cfg.mode,
            seed: cfg.seed,
            calibration: &cfg.calibration,
            presets: &cfg.presets,
            runs: (cfg.calibration_runs, cfg.signature_runs),
        }
    }
}

/// Runs every configuration, sharing one calibration per group of
/// configurations that differ only in scenario and route. Failures are
/// recorded in their row.
pub fn sweep(cfgs: &[ScenarioConfig], parallel: bool) -> SweepTable {
    let mut groups: Vec<(GroupKey, Vec<usize>)> = Vec::new();
    for (i, cfg) in cfgs.iter().enumerate() {
        let key = GroupKey::of(cfg);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    let prepare = |members: &Vec<usize>| -> Result<(Pipeline, Calibration)> {
        let cfg = &cfgs[members[0]];
        let pipeline = Pipeline::from_config(cfg)?;
        let calibration = calibration_for(cfg, &pipeline, parallel)?;
        Ok((pipeline, calibration))
    };
    let prepared: Vec<Result<(Pipeline, Calibration)>> = if parallel {
        groups.par_iter().map(|(_, m)| prepare(m)).collect()
    } else {
        groups.iter().map(|(_, m)| prepare(m)).collect()
    };
    let mut jobs: Vec<(usize, usize)> = Vec::with_capacity(cfgs.len());
    for (g, (_, members)) in groups.iter().enumerate() {
        jobs.extend(members.iter().map(|&i| (i, g)));
    }
    jobs.sort_unstable();
    let row = |&(i, g): &(usize, usize)| {
        let cfg = &cfgs[i];
        let scenario = cfg.scenario.label();
        let result = match &prepared[g] {
            Ok((pipeline, calibration)) => run_with(cfg, pipeline, calibration),
            Err(e) => Err(Error::Domain(e.to_string())),
        };
        let mut row = SweepRow {
            network: cfg.network.label(),
            scenario,
            criteria: None,
            flag: None,
            class: None,
            error: None,
        };
        match result {
            Ok(r) => {
                row.criteria = Some(r.criteria);
                row.flag = Some(r.flag);
                row.class = Some(r.class);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    };
    let rows = if parallel {
        jobs.par_iter().map(row).collect()
    } else {
        jobs.iter().map(row).collect()
    };
    SweepTable { rows }
}

/// Scenario labels in the order used for table columns: H0 first, then
/// the named classes, then anything else in order of appearance.
pub fn column_order(table: &SweepTable) -> Vec<String> {
    let mut cols: Vec<String> = std::iter::once("H0".to_string())
        .chain(EventClass::NAMED.iter().map(|c| c.to_string()))
        .filter(|c| table.rows.iter().any(|r| &r.scenario == c))
        .collect();
    for r in &table.rows {
        if !cols.contains(&r.scenario) {
            cols.push(r.scenario.clone());
        }
    }
    cols
}
