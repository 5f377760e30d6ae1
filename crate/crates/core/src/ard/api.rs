use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::cloud::{ArdCloud, ArdSample};
use crate::error::{Error, Result};
use crate::identification::Mode;

pub const DEFAULT_GRID_RESOLUTION: usize = 200;
pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiBranch {
    MarginErosion,
    ReachableInstability,
}

impl ApiBranch {
    pub fn as_str(&self) -> &'static str {
        match self {
            ApiBranch::MarginErosion => "margin_erosion",
            ApiBranch::ReachableInstability => "reachable_instability",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiResult {
    pub value: f64,
    pub branch: ApiBranch,
    pub max_re_drift: f64,
    pub unstable_fraction: f64,
    pub worst_case: ArdSample,
    pub occupied_cells: usize,
}

/// Attack penetration index of a cloud.
///
/// Without any reachable point in the closed right half plane the value is the
/// worst real-part drift over `|Re(lambda0)|`. Otherwise it is one plus the
/// fraction of occupied cells of a `res x res` grid over the bounding box
/// whose centers lie in the closed right half plane.
pub fn compute_api(cloud: &ArdCloud, grid_resolution: usize) -> Result<ApiResult> {
    let l0 = cloud.lambda0();
    if !(l0.re < 0.0) {
        return Err(Error::BaselineUnstable(l0.re));
    }
    if grid_resolution == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    let pts: Vec<&ArdSample> = cloud.points().collect();
    let worst = **pts
        .iter()
        .reduce(|a, b| if b.delta_lambda.re > a.delta_lambda.re { b } else { a })
        .ok_or_else(|| Error::InvalidInput("empty cloud".into()))?;
    let max_re_drift = worst.delta_lambda.re;
    if pts.iter().all(|p| p.lambda.re < 0.0) {
        return Ok(ApiResult {
            value: max_re_drift / l0.re.abs(),
            branch: ApiBranch::MarginErosion,
            max_re_drift,
            unstable_fraction: 0.0,
            worst_case: worst,
            occupied_cells: 0,
        });
    }

    let bound = |f: fn(&ArdSample) -> f64| {
        pts.iter()
            .map(|p| f(p))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (re_lo, re_hi) = bound(|p| p.lambda.re);
    let (im_lo, im_hi) = bound(|p| p.lambda.im);
    let cell = |x: f64, lo: f64, hi: f64| -> usize {
        if hi > lo {
            (((x - lo) / (hi - lo) * grid_resolution as f64).floor() as usize).min(grid_resolution - 1)
        } else {
            0
        }
    };
    let occupied: HashSet<(usize, usize)> = pts
        .iter()
        .map(|p| (cell(p.lambda.re, re_lo, re_hi), cell(p.lambda.im, im_lo, im_hi)))
        .collect();
    let center = |i: usize| {
        if re_hi > re_lo {
            re_lo + (i as f64 + 0.5) * (re_hi - re_lo) / grid_resolution as f64
        } else {
            re_lo
        }
    };
    let unstable = occupied.iter().filter(|(i, _)| center(*i) >= 0.0).count();
    let fraction = unstable as f64 / occupied.len() as f64;
    Ok(ApiResult {
        value: 1.0 + fraction,
        branch: ApiBranch::ReachableInstability,
        max_re_drift,
        unstable_fraction: fraction,
        worst_case: worst,
        occupied_cells: occupied.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusApiReport {
    pub bus_id: u32,
    pub per_mode: Vec<(Mode, ApiResult)>,
    pub bus_api: f64,
    /// Indices into `per_mode` with non-negligible participation.
    pub dominant_mode_set: Vec<usize>,
    /// Index into `per_mode` attaining `bus_api`.
    pub critical_mode: usize,
}

impl BusApiReport {
    pub fn critical(&self) -> &(Mode, ApiResult) {
        &self.per_mode[self.critical_mode]
    }
}

/// Bus-level index: the maximum over modes whose participation norm is at
/// least `gamma` times the largest. Ties go to the lowest frequency.
pub fn bus_report(bus_id: u32, per_mode: Vec<(Mode, ApiResult)>, gamma: f64) -> Result<BusApiReport> {
    if per_mode.is_empty() {
        return Err(Error::InvalidInput(format!("bus {bus_id}: no modes to aggregate")));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!("participation threshold {gamma} outside [0, 1]")));
    }
    let pmax = per_mode.iter().map(|(m, _)| m.participation.norm()).fold(0.0, f64::max);
    let dominant: Vec<usize> = (0..per_mode.len())
        .filter(|&k| per_mode[k].0.participation.norm() >= gamma * pmax)
        .collect();
    let critical = *dominant
        .iter()
        .reduce(|a, b| {
            let (ma, ra) = &per_mode[*a];
            let (mb, rb) = &per_mode[*b];
            if rb.value > ra.value || (rb.value == ra.value && mb.frequency_hz < ma.frequency_hz) {
                b
            } else {
                a
            }
        })
        .expect("the largest participation is always dominant");
    Ok(BusApiReport {
        bus_id,
        bus_api: per_mode[critical].1.value,
        per_mode,
        dominant_mode_set: dominant,
        critical_mode: critical,
    })
}
