//! Shipped demo systems.

use super::pipeline::{ApiSpec, ArdSpec, AssessConfig, GridSpec, ModeSpec, VectorFitSpec};
use super::system::{Branch, Bus, BusType, IbrUnit, Shunt, SystemDescription, SYSTEM_FORMAT_VERSION};
use crate::ard::{AscentConfig, AttackBox, StealthModel};
use crate::dq::{Bases, ControlParams, FilterParams, OperatingPoint, ParameterVector, N_COORDS, N_OP};

pub const OMEGA0: f64 = 2.0 * std::f64::consts::PI * 50.0;

pub fn bases() -> Bases {
    Bases {
        s_base: 1e6,
        v_base: 1000.0,
    }
}

pub fn filter() -> FilterParams {
    FilterParams { rf: 0.01, lf: 3.18e-4 }
}

pub fn vsg_params() -> ParameterVector {
    vsg(8e5, 1e5, 400.0, 8000.0)
}

fn vsg(p0: f64, q0: f64, j: f64, dp: f64) -> ParameterVector {
    ParameterVector {
        x_op: OperatingPoint { p0, q0, v0: 1000.0 },
        rho: ControlParams {
            j,
            dp,
            kq: 5e-5,
            tau_q: 0.02,
            rv: 0.02,
            lv: 3.18e-4,
        },
    }
}

fn unit(bus: u32, params: ParameterVector) -> IbrUnit {
    IbrUnit {
        bus,
        params,
        filter: filter(),
        p_rated: 1e6,
    }
}

fn bus(id: u32, kind: BusType) -> Bus {
    Bus { id, kind }
}

fn branch(from: u32, to: u32, r: f64, l: f64) -> Branch {
    Branch { from, to, r, l }
}

/// One inverter behind an RL line to the slack.
pub fn single_bus() -> SystemDescription {
    SystemDescription {
        version: SYSTEM_FORMAT_VERSION,
        omega0: OMEGA0,
        bases: bases(),
        buses: vec![bus(0, BusType::Slack), bus(1, BusType::Ibr)],
        branches: vec![branch(0, 1, 0.05, 9.55e-4)],
        shunts: vec![],
        ibr_units: vec![unit(1, vsg_params())],
    }
}

/// Two inverters on a common passive bus with a load.
pub fn four_bus() -> SystemDescription {
    SystemDescription {
        version: SYSTEM_FORMAT_VERSION,
        omega0: OMEGA0,
        bases: bases(),
        buses: vec![
            bus(0, BusType::Slack),
            bus(1, BusType::Ibr),
            bus(2, BusType::Ibr),
            bus(3, BusType::Passive),
        ],
        branches: vec![branch(0, 3, 0.02, 4e-4), branch(3, 1, 0.03, 5.5e-4), branch(3, 2, 0.04, 7e-4)],
        shunts: vec![Shunt {
            bus: 3,
            r: 2.0,
            l: 5e-3,
            c: 0.0,
        }],
        ibr_units: vec![unit(1, vsg_params()), unit(2, vsg(6e5, 5e4, 300.0, 6000.0))],
    }
}

/// Six inverters on a meshed feeder.
pub fn multi_bus() -> SystemDescription {
    SystemDescription {
        version: SYSTEM_FORMAT_VERSION,
        omega0: OMEGA0,
        bases: bases(),
        buses: vec![
            bus(0, BusType::Slack),
            bus(1, BusType::Passive),
            bus(2, BusType::Passive),
            bus(3, BusType::Ibr),
            bus(4, BusType::Ibr),
            bus(5, BusType::Ibr),
            bus(6, BusType::Ibr),
            bus(7, BusType::Ibr),
            bus(8, BusType::Ibr),
        ],
        branches: vec![
            branch(0, 1, 0.01, 2e-4),
            branch(1, 2, 0.02, 4e-4),
            branch(0, 2, 0.03, 6e-4),
            branch(1, 3, 0.02, 3e-4),
            branch(1, 4, 0.04, 8e-4),
            branch(2, 5, 0.03, 5e-4),
            branch(2, 6, 0.06, 1.2e-3),
            branch(4, 7, 0.03, 6e-4),
            branch(5, 8, 0.05, 9e-4),
        ],
        shunts: vec![
            Shunt { bus: 1, r: 3.0, l: 6e-3, c: 0.0 },
            Shunt { bus: 2, r: 4.0, l: 8e-3, c: 0.0 },
        ],
        ibr_units: vec![
            unit(3, vsg(8e5, 1e5, 400.0, 5000.0)),
            unit(4, vsg(7e5, 5e4, 350.0, 9000.0)),
            unit(5, vsg(6e5, 0.0, 500.0, 7000.0)),
            unit(6, vsg(5e5, 5e4, 250.0, 12000.0)),
            unit(7, vsg(6e5, 1e5, 450.0, 6000.0)),
            unit(8, vsg(4e5, 0.0, 300.0, 8000.0)),
        ],
    }
}

/// Dispatch setpoints plus the swing gains J and Dp.
pub const JOINT_MASK: [bool; N_COORDS] = [true, true, true, true, true, false, false, false, false];
pub const OP_MASK: [bool; N_COORDS] = [true, true, true, false, false, false, false, false, false];
pub const RHO_MASK: [bool; N_COORDS] = [false, false, false, true, true, false, false, false, false];

/// A demo system with its attack model and numerical settings.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub system: SystemDescription,
    pub targets: Vec<u32>,
    pub attack_box: AttackBox,
    pub mask: [bool; N_COORDS],
    pub stealth: StealthModel,
    pub assess: AssessConfig,
}

fn assess(n_poles: usize, top_k: usize, n_samples: usize, directions: usize) -> AssessConfig {
    AssessConfig {
        grid: GridSpec::default(),
        vector_fit: VectorFitSpec {
            n_poles,
            iterations: 20,
        },
        modes: ModeSpec {
            band_hz: (1.0, 200.0),
            top_k,
        },
        ard: ArdSpec {
            n_samples,
            seed: 7,
            directions,
        },
        optimizer: AscentConfig::default(),
        api: ApiSpec::default(),
    }
}

fn stealth(eps1: f64, eps2: f64, dp_weight: f64) -> StealthModel {
    let mut ids_weights = [1.0; N_COORDS - N_OP];
    ids_weights[1] = dp_weight;
    StealthModel {
        bdd_weights: [1.0; 3],
        eps1,
        ids_weights,
        eps2,
        bases: bases(),
    }
}

pub fn single_bus_scenario() -> Scenario {
    Scenario {
        system: single_bus(),
        targets: vec![1],
        attack_box: AttackBox::symmetric(0.05, 0.3),
        mask: JOINT_MASK,
        stealth: stealth(0.07, 0.3, 1.5),
        assess: assess(12, 2, 2000, 32),
    }
}

pub fn four_bus_scenario() -> Scenario {
    Scenario {
        system: four_bus(),
        targets: vec![1, 2],
        attack_box: AttackBox::symmetric(0.1, 0.6),
        mask: JOINT_MASK,
        stealth: stealth(0.15, 0.6, 1.0),
        assess: assess(12, 2, 1000, 16),
    }
}

pub fn multi_bus_scenario() -> Scenario {
    let system = multi_bus();
    Scenario {
        targets: system.ibr_buses(),
        system,
        attack_box: AttackBox::symmetric(0.05, 0.3),
        mask: JOINT_MASK,
        stealth: stealth(0.07, 0.3, 1.0),
        assess: assess(32, 3, 1000, 16),
    }
}
