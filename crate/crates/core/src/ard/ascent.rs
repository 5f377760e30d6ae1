use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attack_set::{is_feasible, project, FeasibleAttackSet, StealthModel};
use super::cloud::{ArdSample, DriftMap};
use crate::dq::ParameterVector;
use crate::error::{Error, Result};
use crate::identification::Mode;
use crate::linalg::C64;
use crate::surrogate::{lhs_unit, ImpedanceSurrogate};

pub const MIN_DIRECTIONS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    /// Initial step length in normalized box coordinates.
    pub alpha: f64,
    pub max_iter: usize,
    /// Starts: the nominal point plus `restarts - 1` Latin hypercube points.
    pub restarts: usize,
    pub tol: f64,
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            alpha: 0.05,
            max_iter: 200,
            restarts: 8,
            tol: 1e-9,
            max_halvings: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AscentReport {
    pub best: ArdSample,
    /// `Re(exp(-j phi) dlambda)` at `best`.
    pub objective: f64,
    /// Every accepted iterate of every start, in start order.
    pub iterates: Vec<ParameterVector>,
    /// Final normalized gradient norm of the winning start.
    pub grad_norm: f64,
    pub failed_starts: usize,
}

struct Run {
    v: ParameterVector,
    obj: f64,
    grad_norm: f64,
    iterates: Vec<ParameterVector>,
}

fn start_points(omega: &FeasibleAttackSet, s: &StealthModel, cfg: &AscentConfig) -> Vec<ParameterVector> {
    let active = omega.active();
    let mut starts = vec![omega.nominal];
    if cfg.restarts > 1 && !active.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for u in lhs_unit(cfg.restarts - 1, active.len(), &mut rng) {
            let mut a = omega.nominal.to_array();
            for (&k, x) in active.iter().zip(u) {
                a[k] = omega.bounds.lo[k] + x * omega.bounds.width(k);
            }
            starts.push(project(&ParameterVector::from_array(&a), omega, s));
        }
    }
    starts
}

fn climb(
    map: &DriftMap,
    omega: &FeasibleAttackSet,
    s: &StealthModel,
    rot: C64,
    start: ParameterVector,
    cfg: &AscentConfig,
) -> Result<Run> {
    let active = omega.active();
    let width: Vec<f64> = active.iter().map(|&k| omega.bounds.width(k)).collect();
    let objective = |v: &ParameterVector| -> Result<f64> { Ok((rot * map.eval(v)?).re) };
    let mut v = project(&start, omega, s);
    if !is_feasible(&v, omega, s) {
        return Err(Error::InfeasibleStart(format!("{:?}", start.to_array())));
    }
    let mut obj = objective(&v)?;
    let mut iterates = vec![v];
    let mut scale = 0.0;
    let mut grad_norm = 0.0;
    for it in 0..cfg.max_iter {
        let g = map.grad(&v)?;
        let gu: Vec<f64> = active.iter().zip(&width).map(|(&k, w)| (rot * g[k]).re * w).collect();
        grad_norm = gu.iter().map(|x| x * x).sum::<f64>().sqrt();
        if it == 0 {
            scale = grad_norm;
        }
        if grad_norm <= cfg.tol || scale == 0.0 {
            break;
        }
        let mut t = cfg.alpha;
        let mut moved = false;
        for _ in 0..=cfg.max_halvings {
            let mut a = v.to_array();
            for ((&k, w), gk) in active.iter().zip(&width).zip(&gu) {
                a[k] += t * gk / scale * w;
            }
            let cand = project(&ParameterVector::from_array(&a), omega, s);
            let (ca, va) = (cand.to_array(), v.to_array());
            let disp = active
                .iter()
                .zip(&width)
                .map(|(&k, w)| ((ca[k] - va[k]) / w).abs())
                .fold(0.0, f64::max);
            if disp <= cfg.tol {
                break;
            }
            // a failed evaluation counts as no improvement
            if let Ok(c) = objective(&cand) {
                if c > obj {
                    v = cand;
                    obj = c;
                    iterates.push(v);
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(Run {
        v,
        obj,
        grad_norm,
        iterates,
    })
}

/// Multi-start projected gradient ascent of `Re(exp(-j phi) dlambda)` over
/// the feasible attack set, with all iterates recorded.
pub fn boundary_ascent_report(
    omega: &FeasibleAttackSet,
    s: &StealthModel,
    f: &dyn ImpedanceSurrogate,
    mode: &Mode,
    phi: f64,
    cfg: &AscentConfig,
) -> Result<AscentReport> {
    if !(cfg.alpha > 0.0) {
        return Err(Error::InvalidInput("ascent step must be positive".into()));
    }
    s.validate()?;
    let map = DriftMap::new(f, *mode, omega.nominal)?;
    let rot = C64::from_polar(1.0, -phi);
    let starts = start_points(omega, s, cfg);
    let runs: Vec<Result<Run>> = starts.par_iter().map(|&v| climb(&map, omega, s, rot, v, cfg)).collect();
    let mut best: Option<Run> = None;
    let mut iterates = Vec::new();
    let mut failed = 0;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(run) => {
                iterates.extend_from_slice(&run.iterates);
                if best.as_ref().is_none_or(|b| run.obj > b.obj) {
                    best = Some(run);
                }
            }
            Err(e) => {
                failed += 1;
                log::warn!("ascent start failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(best) = best else {
        return Err(match first_err {
            Some(e @ Error::SurrogateDomain(_)) => e,
            Some(e) => Error::InfeasibleStart(format!("all {} starts failed; first: {e}", starts.len())),
            None => Error::InfeasibleStart("no starts".into()),
        });
    };
    let dl = map.eval(&best.v)?;
    Ok(AscentReport {
        best: ArdSample::new(best.v, mode.lambda0, dl, is_feasible(&best.v, omega, s)),
        objective: best.obj,
        iterates,
        grad_norm: best.grad_norm,
        failed_starts: failed,
    })
}

pub fn boundary_ascent(
    omega: &FeasibleAttackSet,
    s: &StealthModel,
    f: &dyn ImpedanceSurrogate,
    mode: &Mode,
    phi: f64,
    cfg: &AscentConfig,
) -> Result<ArdSample> {
    boundary_ascent_report(omega, s, f, mode, phi, cfg).map(|r| r.best)
}

/// Support points in the directions `phi = 2 pi k / n_directions`, ordered by `phi`.
pub fn trace_boundary(
    omega: &FeasibleAttackSet,
    s: &StealthModel,
    f: &dyn ImpedanceSurrogate,
    mode: &Mode,
    n_directions: usize,
    cfg: &AscentConfig,
) -> Result<Vec<ArdSample>> {
    if n_directions < MIN_DIRECTIONS {
        return Err(Error::InvalidInput(format!(
            "trace_boundary needs at least {MIN_DIRECTIONS} directions, got {n_directions}"
        )));
    }
    (0..n_directions)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n_directions as f64;
            boundary_ascent(omega, s, f, mode, phi, cfg)
        })
        .collect()
}
