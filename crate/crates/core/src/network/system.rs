use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dq::{Bases, FilterParams, FrequencyGrid, ImpedanceSpectrum, ParameterVector, VsgBuilder};
use crate::error::{Error, Result};
use crate::identification::RESONANCE_CONDITION;
use crate::linalg::{DqMatrix, C64};

pub const SYSTEM_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusType {
    Slack,
    Ibr,
    Passive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    #[serde(rename = "type")]
    pub kind: BusType,
}

/// Series RL branch (ohm, H).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub l: f64,
}

/// Constant load to ground: a series RL path (omitted when `r = l = 0`)
/// in parallel with a capacitance (omitted when `c = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shunt {
    pub bus: u32,
    pub r: f64,
    pub l: f64,
    pub c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbrUnit {
    pub bus: u32,
    pub params: ParameterVector,
    pub filter: FilterParams,
    /// Rated active power (W).
    pub p_rated: f64,
}

/// Network topology, components and inverter units. Values are SI; the bases
/// define per-unit quantities (attack offsets, detector distances, SCR).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDescription {
    pub version: u32,
    pub omega0: f64,
    pub bases: Bases,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub shunts: Vec<Shunt>,
    pub ibr_units: Vec<IbrUnit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheveninEquivalent {
    pub bus_id: u32,
    pub spectrum: ImpedanceSpectrum,
}

/// Nodal admittance over the non-slack buses, as a `2n x 2n` dq block matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalAdmittance {
    /// Bus id of each block row, ascending.
    pub ids: Vec<u32>,
    pub y: DMatrix<C64>,
}

impl NodalAdmittance {
    pub fn block(&self, i: usize, j: usize) -> DqMatrix {
        let m = &self.y;
        DqMatrix::new(m[(2 * i, 2 * j)], m[(2 * i, 2 * j + 1)], m[(2 * i + 1, 2 * j)], m[(2 * i + 1, 2 * j + 1)])
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }
}

/// Which inverter units contribute their admittance to the nodal matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IbrInclusion {
    All,
    /// Every unit except the one on this bus.
    AllBut(u32),
    /// Passive network only.
    None,
}

impl SystemDescription {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSystem(m));
        if self.version != SYSTEM_FORMAT_VERSION {
            return bad(format!("unsupported system version {}", self.version));
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return bad("omega0 must be positive".into());
        }
        self.bases.validate()?;
        let mut kinds = BTreeMap::new();
        for b in &self.buses {
            if kinds.insert(b.id, b.kind).is_some() {
                return bad(format!("duplicate bus id {}", b.id));
            }
        }
        let n_slack = self.buses.iter().filter(|b| b.kind == BusType::Slack).count();
        if n_slack != 1 {
            return bad(format!("exactly one slack bus required, found {n_slack}"));
        }
        for br in &self.branches {
            if !kinds.contains_key(&br.from) || !kinds.contains_key(&br.to) {
                return bad(format!("branch {}-{} references an unknown bus", br.from, br.to));
            }
            if br.from == br.to {
                return bad(format!("branch {}-{} is a self loop", br.from, br.to));
            }
            if !(br.r >= 0.0 && br.l >= 0.0 && br.r + br.l > 0.0 && br.r.is_finite() && br.l.is_finite()) {
                return bad(format!("branch {}-{} needs R >= 0, L >= 0, not both zero", br.from, br.to));
            }
        }
        for sh in &self.shunts {
            if !kinds.contains_key(&sh.bus) {
                return bad(format!("shunt references unknown bus {}", sh.bus));
            }
            if ![sh.r, sh.l, sh.c].iter().all(|x| *x >= 0.0 && x.is_finite()) {
                return bad(format!("shunt at bus {} needs nonnegative finite R, L, C", sh.bus));
            }
        }
        let mut hosted = BTreeSet::new();
        for u in &self.ibr_units {
            match kinds.get(&u.bus) {
                Some(BusType::Ibr) => {}
                _ => return bad(format!("inverter unit on bus {} which is not an ibr bus", u.bus)),
            }
            if !hosted.insert(u.bus) {
                return bad(format!("bus {} hosts more than one inverter unit", u.bus));
            }
            u.params.validate()?;
            if !(u.filter.lf > 0.0 && u.filter.rf >= 0.0 && u.p_rated > 0.0) {
                return bad(format!("unit on bus {} needs Lf > 0, Rf >= 0, P_rated > 0", u.bus));
            }
        }
        for (id, k) in &kinds {
            if *k == BusType::Ibr && !hosted.contains(id) {
                return bad(format!("ibr bus {id} hosts no inverter unit"));
            }
        }
        // connectivity from the slack
        let slack = self.slack();
        let mut seen = BTreeSet::from([slack]);
        let mut queue = VecDeque::from([slack]);
        while let Some(b) = queue.pop_front() {
            for br in &self.branches {
                let other = if br.from == b {
                    br.to
                } else if br.to == b {
                    br.from
                } else {
                    continue;
                };
                if seen.insert(other) {
                    queue.push_back(other);
                }
            }
        }
        if seen.len() != kinds.len() {
            let missing: Vec<u32> = kinds.keys().filter(|k| !seen.contains(k)).copied().collect();
            return bad(format!("buses {missing:?} are not connected to the slack"));
        }
        Ok(())
    }

    pub fn slack(&self) -> u32 {
        self.buses
            .iter()
            .find(|b| b.kind == BusType::Slack)
            .map(|b| b.id)
            .expect("validated system has a slack bus")
    }

    pub fn bus_kind(&self, id: u32) -> Option<BusType> {
        self.buses.iter().find(|b| b.id == id).map(|b| b.kind)
    }

    pub fn unit_at(&self, bus: u32) -> Option<&IbrUnit> {
        self.ibr_units.iter().find(|u| u.bus == bus)
    }

    pub fn ibr_buses(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.ibr_units.iter().map(|u| u.bus).collect();
        ids.sort_unstable();
        ids
    }

    pub fn builder_for(&self, bus: u32) -> Result<VsgBuilder> {
        let u = self.ibr_unit(bus)?;
        Ok(VsgBuilder {
            filter: u.filter,
            omega0: self.omega0,
        })
    }

    fn ibr_unit(&self, bus: u32) -> Result<&IbrUnit> {
        match self.bus_kind(bus) {
            None => Err(Error::InvalidSystem(format!("unknown bus {bus}"))),
            Some(BusType::Ibr) => self
                .unit_at(bus)
                .ok_or_else(|| Error::InvalidSystem(format!("ibr bus {bus} hosts no unit"))),
            Some(_) => Err(Error::InvalidSystem(format!("bus {bus} is not an ibr bus"))),
        }
    }
}

fn invert(z: DqMatrix, what: impl Fn() -> String) -> Result<DqMatrix> {
    if !(z.condition() <= RESONANCE_CONDITION) {
        return Err(Error::ComponentSingularity(what()));
    }
    z.inverse().ok_or_else(|| Error::ComponentSingularity(what()))
}

/// Nodal admittance at `s` with the slack bus eliminated as an ideal source.
pub fn nodal_admittance(sys: &SystemDescription, s: C64, ibr: IbrInclusion) -> Result<NodalAdmittance> {
    let slack = sys.slack();
    let mut ids: Vec<u32> = sys.buses.iter().map(|b| b.id).filter(|&id| id != slack).collect();
    ids.sort_unstable();
    let n = ids.len();
    let idx = |id: u32| ids.binary_search(&id).ok();
    let mut y = DMatrix::<C64>::zeros(2 * n, 2 * n);
    let mut add = |i: usize, j: usize, b: &DqMatrix, sign: f64| {
        for r in 0..2 {
            for c in 0..2 {
                y[(2 * i + r, 2 * j + c)] += b.get(r, c) * sign;
            }
        }
    };
    for br in &sys.branches {
        let yb = invert(DqMatrix::series_rl(br.r, br.l, sys.omega0, s), || format!("branch {}-{}", br.from, br.to))?;
        let (f, t) = (idx(br.from), idx(br.to));
        if let Some(i) = f {
            add(i, i, &yb, 1.0);
        }
        if let Some(j) = t {
            add(j, j, &yb, 1.0);
        }
        if let (Some(i), Some(j)) = (f, t) {
            add(i, j, &yb, -1.0);
            add(j, i, &yb, -1.0);
        }
    }
    for sh in &sys.shunts {
        let Some(i) = idx(sh.bus) else { continue };
        if sh.r > 0.0 || sh.l > 0.0 {
            let ys = invert(DqMatrix::series_rl(sh.r, sh.l, sys.omega0, s), || format!("shunt at bus {}", sh.bus))?;
            add(i, i, &ys, 1.0);
        }
        if sh.c > 0.0 {
            add(i, i, &DqMatrix::shunt_c(sh.c, sys.omega0, s), 1.0);
        }
    }
    for u in &sys.ibr_units {
        let keep = match ibr {
            IbrInclusion::All => true,
            IbrInclusion::AllBut(b) => u.bus != b,
            IbrInclusion::None => false,
        };
        let Some(i) = idx(u.bus).filter(|_| keep) else { continue };
        let b = VsgBuilder {
            filter: u.filter,
            omega0: sys.omega0,
        };
        let z = b.impedance(&u.params, s)?;
        let yi = invert(z, || format!("inverter unit on bus {}", u.bus))?;
        add(i, i, &yi, 1.0);
    }
    Ok(NodalAdmittance { ids, y })
}

/// Impedance seen from `bus` at `s`: Kron reduction of the nodal matrix onto
/// the bus, then inversion of the retained block.
pub fn thevenin_impedance(sys: &SystemDescription, bus: u32, s: C64, ibr: IbrInclusion) -> Result<DqMatrix> {
    let nodal = nodal_admittance(sys, s, ibr)?;
    let t = nodal
        .index_of(bus)
        .ok_or_else(|| Error::InvalidSystem(format!("bus {bus} is the slack or unknown")))?;
    let n = nodal.ids.len();
    let others: Vec<usize> = (0..n).filter(|&k| k != t).collect();
    let rows = |set: &[usize]| -> Vec<usize> { set.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect() };
    let (ti, oi) = (rows(&[t]), rows(&others));
    let pick = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| nodal.y[(r[i], c[j])]);
    let ytt = pick(&ti, &ti);
    let reduced = if oi.is_empty() {
        ytt
    } else {
        let yoo = pick(&oi, &oi);
        let resonance = || Error::NearResonance {
            omega: s.im,
            condition: f64::INFINITY,
        };
        let lu = yoo.clone().lu();
        let x = lu.solve(&pick(&oi, &ti)).ok_or_else(resonance)?;
        let inv_norm = lu.try_inverse().ok_or_else(resonance)?.norm();
        let condition = yoo.norm() * inv_norm;
        if !(condition <= RESONANCE_CONDITION) {
            return Err(Error::NearResonance { omega: s.im, condition });
        }
        ytt - pick(&ti, &oi) * x
    };
    let yr = DqMatrix::new(reduced[(0, 0)], reduced[(0, 1)], reduced[(1, 0)], reduced[(1, 1)]);
    let condition = yr.condition();
    if !(condition <= RESONANCE_CONDITION) {
        return Err(Error::NearResonance { omega: s.im, condition });
    }
    yr.inverse().ok_or(Error::NearResonance { omega: s.im, condition })
}

/// Grid-side Thevenin spectrum at an inverter bus, with the bus's own unit removed.
pub fn thevenin_at(sys: &SystemDescription, bus: u32, grid: &FrequencyGrid) -> Result<TheveninEquivalent> {
    sys.ibr_unit(bus)?;
    let values: Vec<Result<DqMatrix>> = grid
        .points()
        .par_iter()
        .map(|&w| thevenin_impedance(sys, bus, C64::new(0.0, w), IbrInclusion::AllBut(bus)))
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(TheveninEquivalent {
        bus_id: bus,
        spectrum: ImpedanceSpectrum::new(grid.clone(), values)?,
    })
}

/// Short-circuit-ratio proxy: `(V_base^2 / |Z|) / P_rated` with `|Z|` the
/// positive-sequence magnitude of the passive-network Thevenin block at the
/// fundamental (`s = 0` in the synchronous frame).
pub fn scr_proxy(sys: &SystemDescription, bus: u32) -> Result<f64> {
    let u = sys.ibr_unit(bus)?;
    let z = thevenin_impedance(sys, bus, C64::new(0.0, 0.0), IbrInclusion::None)?;
    let mag = z.positive_sequence().norm();
    if mag == 0.0 {
        log::warn!("bus {bus}: zero Thevenin impedance, SCR is infinite");
        return Ok(f64::INFINITY);
    }
    Ok(sys.bases.v_base * sys.bases.v_base / mag / u.p_rated)
}
