use serde::{Deserialize, Serialize};

use super::system::{thevenin_at, SystemDescription, TheveninEquivalent};
use crate::ard::{
    bus_report, compute_api, sample_ard, trace_boundary, ArdCloud, AscentConfig, BusApiReport, FeasibleAttackSet,
    StealthModel, DEFAULT_GAMMA, DEFAULT_GRID_RESOLUTION,
};
use crate::dq::{FrequencyGrid, ImpedanceSpectrum};
use crate::error::{Error, Result, StageExt};
use crate::identification::{assemble_admittance, select_critical_modes, vector_fit, Mode, VectorFit};
use crate::surrogate::ImpedanceSurrogate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            f_lo_hz: 1.0,
            f_hi_hz: 200.0,
            points: 400,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::log_spaced_hz(self.f_lo_hz, self.f_hi_hz, self.points)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFitSpec {
    pub n_poles: usize,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub band_hz: (f64, f64),
    pub top_k: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArdSpec {
    pub n_samples: usize,
    pub seed: u64,
    pub directions: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub grid_resolution: usize,
    pub gamma: f64,
}

impl Default for ApiSpec {
    fn default() -> Self {
        ApiSpec {
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            gamma: DEFAULT_GAMMA,
        }
    }
}

/// Numerical settings of the per-bus assessment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessConfig {
    pub grid: GridSpec,
    pub vector_fit: VectorFitSpec,
    pub modes: ModeSpec,
    pub ard: ArdSpec,
    pub optimizer: AscentConfig,
    pub api: ApiSpec,
}

/// Identified modes of the inverter/grid loop at one bus.
#[derive(Clone, Debug)]
pub struct ModalAnalysis {
    pub thevenin: TheveninEquivalent,
    pub z_inv: ImpedanceSpectrum,
    pub y_sys: ImpedanceSpectrum,
    pub fit: VectorFit,
    pub modes: Vec<Mode>,
}

#[derive(Clone, Debug)]
pub struct BusAssessment {
    pub analysis: ModalAnalysis,
    /// One cloud per retained mode, in mode order.
    pub clouds: Vec<ArdCloud>,
    pub report: BusApiReport,
}

/// Thevenin reduction, system admittance, vector fit and critical modes.
pub fn analyze_bus(
    sys: &SystemDescription,
    bus: u32,
    f: &dyn ImpedanceSurrogate,
    cfg: &AssessConfig,
) -> Result<ModalAnalysis> {
    let unit = sys.unit_at(bus).ok_or_else(|| Error::InvalidSystem(format!("bus {bus} hosts no unit")))?;
    let grid = cfg.grid.build().stage("grid")?;
    let thevenin = thevenin_at(sys, bus, &grid).stage("thevenin")?;
    let z_inv = ImpedanceSpectrum::from_fn(&grid, |s| f.eval(&unit.params, s)).stage("impedance")?;
    let y_sys = assemble_admittance(&z_inv, &thevenin.spectrum).stage("admittance")?;
    let fit = vector_fit(&y_sys, cfg.vector_fit.n_poles, cfg.vector_fit.iterations).stage("vector_fit")?;
    let modes = select_critical_modes(&fit.model, cfg.modes.band_hz, cfg.modes.top_k).stage("modes")?;
    if modes.is_empty() {
        return Err(Error::Unidentifiable(format!(
            "no oscillatory mode in {:?} Hz at bus {bus}",
            cfg.modes.band_hz
        ))
        .at("modes"));
    }
    Ok(ModalAnalysis {
        thevenin,
        z_inv,
        y_sys,
        fit,
        modes,
    })
}

/// Reachable domain and index of one mode.
pub fn assess_mode(
    omega: &FeasibleAttackSet,
    s: &StealthModel,
    f: &dyn ImpedanceSurrogate,
    mode: &Mode,
    cfg: &AssessConfig,
) -> Result<ArdCloud> {
    let mut cloud = sample_ard(omega, s, f, mode, cfg.ard.n_samples, cfg.ard.seed).stage("sample_ard")?;
    let boundary = trace_boundary(omega, s, f, mode, cfg.ard.directions, &cfg.optimizer).stage("trace_boundary")?;
    cloud.set_boundary(boundary);
    Ok(cloud)
}

/// End-to-end assessment of one inverter bus.
pub fn assess_bus(
    sys: &SystemDescription,
    bus: u32,
    omega: &FeasibleAttackSet,
    s: &StealthModel,
    f: &dyn ImpedanceSurrogate,
    cfg: &AssessConfig,
) -> Result<BusAssessment> {
    let analysis = analyze_bus(sys, bus, f, cfg)?;
    let mut clouds = Vec::with_capacity(analysis.modes.len());
    let mut per_mode = Vec::with_capacity(analysis.modes.len());
    for mode in &analysis.modes {
        let cloud = assess_mode(omega, s, f, mode, cfg)?;
        let api = compute_api(&cloud, cfg.api.grid_resolution).stage("api")?;
        per_mode.push((*mode, api));
        clouds.push(cloud);
    }
    let report = bus_report(bus, per_mode, cfg.api.gamma).stage("bus_report")?;
    Ok(BusAssessment {
        analysis,
        clouds,
        report,
    })
}
