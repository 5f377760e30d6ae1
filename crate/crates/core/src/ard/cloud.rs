use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attack_set::{is_feasible, FeasibleAttackSet, StealthModel};
use crate::dq::{ParameterVector, N_COORDS};
use crate::error::{Error, Result};
use crate::identification::{Mode, ParticipationFactor};
use crate::linalg::{DqMatrix, C64};
use crate::surrogate::{lhs_unit, ImpedanceSurrogate};

pub const MIN_CLOUD_DRAWS: usize = 100;

/// First-order eigenvalue drift of one mode as a function of the attack
/// vector: `dlambda(v) = <P, F(v)(lambda0) - F(nominal)(lambda0)>`.
pub struct DriftMap<'a> {
    pub surrogate: &'a dyn ImpedanceSurrogate,
    pub mode: Mode,
    pub nominal: ParameterVector,
    z_nominal: DqMatrix,
}

impl<'a> DriftMap<'a> {
    pub fn new(surrogate: &'a dyn ImpedanceSurrogate, mode: Mode, nominal: ParameterVector) -> Result<Self> {
        let z_nominal = surrogate.eval(&nominal, mode.lambda0)?;
        Ok(DriftMap {
            surrogate,
            mode,
            nominal,
            z_nominal,
        })
    }

    pub fn eval(&self, v: &ParameterVector) -> Result<C64> {
        if *v == self.nominal {
            return Ok(C64::new(0.0, 0.0));
        }
        let dz = self.surrogate.eval(v, self.mode.lambda0)? - self.z_nominal;
        Ok(self.mode.participation.drift(&dz))
    }

    /// `d dlambda / d v_k` for every coordinate.
    pub fn grad(&self, v: &ParameterVector) -> Result<[C64; N_COORDS]> {
        let g = self.surrogate.grad(v, self.mode.lambda0)?;
        let out: [C64; N_COORDS] = std::array::from_fn(|k| self.mode.participation.drift(&g[k]));
        if out.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::SurrogateDomain(format!("non-finite drift gradient at {:?}", v.to_array())));
        }
        Ok(out)
    }
}

/// `dlambda` for an explicit participation factor.
pub fn drift(
    v_atk: &ParameterVector,
    nominal: &ParameterVector,
    f: &dyn ImpedanceSurrogate,
    p: &ParticipationFactor,
    mode: &Mode,
) -> Result<C64> {
    let m = Mode { participation: *p, ..*mode };
    DriftMap::new(f, m, *nominal)?.eval(v_atk)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArdSample {
    pub v_atk: ParameterVector,
    pub delta_lambda: C64,
    pub lambda: C64,
    pub stealth_ok: bool,
}

impl ArdSample {
    /// Stores `delta_lambda` as the rounded `lambda - lambda0`, so both agree
    /// with `lambda0` to rounding.
    pub fn new(v_atk: ParameterVector, lambda0: C64, dl: C64, stealth_ok: bool) -> Self {
        let lambda = lambda0 + dl;
        ArdSample {
            v_atk,
            delta_lambda: lambda - lambda0,
            lambda,
            stealth_ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArdCloud {
    pub mode: Mode,
    /// Stealth-feasible samples; the first is the nominal point.
    pub samples: Vec<ArdSample>,
    /// Directional support points ordered by direction angle.
    pub boundary: Vec<ArdSample>,
    /// The direction-zero support point, when traced.
    pub worst_case: Option<ArdSample>,
    pub seed: u64,
    pub n_drawn: usize,
    pub n_rejected: usize,
    pub omega_digest: String,
}

#[derive(Serialize)]
struct CloudMeta<'a> {
    mode: &'a Mode,
    seed: u64,
    omega_digest: &'a str,
    n_drawn: usize,
    n_rejected: usize,
    rejection_fraction: f64,
    n_samples: usize,
    n_boundary: usize,
    worst_case: &'a Option<ArdSample>,
}

impl ArdCloud {
    pub fn lambda0(&self) -> C64 {
        self.mode.lambda0
    }

    /// Replaces the boundary with traced support points ordered by direction;
    /// the first (direction zero) becomes the worst case.
    pub fn set_boundary(&mut self, boundary: Vec<ArdSample>) {
        self.worst_case = boundary.first().copied();
        self.boundary = boundary;
    }

    pub fn rejection_fraction(&self) -> f64 {
        if self.n_drawn == 0 {
            0.0
        } else {
            self.n_rejected as f64 / self.n_drawn as f64
        }
    }

    /// Every point used by the area estimate: samples, boundary, worst case.
    pub fn points(&self) -> impl Iterator<Item = &ArdSample> {
        self.samples.iter().chain(&self.boundary).chain(self.worst_case.iter())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("re_lambda,im_lambda,stealth_ok,source\n");
        let mut row = |s: &ArdSample, src: &str| {
            let _ = writeln!(out, "{},{},{},{}", s.lambda.re, s.lambda.im, s.stealth_ok, src);
        };
        for s in &self.samples {
            row(s, "sample");
        }
        for s in &self.boundary {
            row(s, "boundary");
        }
        if let Some(w) = &self.worst_case {
            row(w, "worst_case");
        }
        out
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CloudMeta {
            mode: &self.mode,
            seed: self.seed,
            omega_digest: &self.omega_digest,
            n_drawn: self.n_drawn,
            n_rejected: self.n_rejected,
            rejection_fraction: self.rejection_fraction(),
            n_samples: self.samples.len(),
            n_boundary: self.boundary.len(),
            worst_case: &self.worst_case,
        })?)
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        fs::write(dir.join(format!("{stem}.json")), self.metadata_json()?)?;
        Ok(())
    }
}

/// Seeded draws over the attackable coordinates of the box: the first half
/// by Latin hypercube, the rest uniform.
pub fn draw_attacks(omega: &FeasibleAttackSet, n: usize, seed: u64) -> Vec<ParameterVector> {
    let active = omega.active();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_lhs = n.div_ceil(2);
    let mut units = lhs_unit(n_lhs, active.len(), &mut rng);
    for _ in n_lhs..n {
        units.push((0..active.len()).map(|_| rng.random::<f64>()).collect());
    }
    let base = omega.nominal.to_array();
    units
        .into_iter()
        .map(|u| {
            let mut a = base;
            for (&k, x) in active.iter().zip(u) {
                a[k] = omega.bounds.lo[k] + x * omega.bounds.width(k);
            }
            ParameterVector::from_array(&a)
        })
        .collect()
}

/// Samples the reachable domain of `mode`. Infeasible draws are rejected;
/// fewer than half feasible is an over-constrained error.
pub fn sample_ard(
    omega: &FeasibleAttackSet,
    s: &StealthModel,
    f: &dyn ImpedanceSurrogate,
    mode: &Mode,
    n: usize,
    seed: u64,
) -> Result<ArdCloud> {
    if n < MIN_CLOUD_DRAWS {
        return Err(Error::InvalidInput(format!("sample_ard needs n >= {MIN_CLOUD_DRAWS}, got {n}")));
    }
    s.validate()?;
    let map = DriftMap::new(f, *mode, omega.nominal)?;
    let lambda0 = mode.lambda0;
    let mut samples = vec![ArdSample::new(omega.nominal, lambda0, C64::new(0.0, 0.0), true)];
    if omega.active().is_empty() {
        return Ok(ArdCloud {
            mode: *mode,
            samples,
            boundary: Vec::new(),
            worst_case: None,
            seed,
            n_drawn: 0,
            n_rejected: 0,
            omega_digest: omega.digest(),
        });
    }
    let feasible: Vec<ParameterVector> = draw_attacks(omega, n, seed)
        .into_iter()
        .filter(|v| is_feasible(v, omega, s))
        .collect();
    let n_rejected = n - feasible.len();
    if 2 * feasible.len() < n {
        return Err(Error::OverConstrained {
            fraction: feasible.len() as f64 / n as f64,
        });
    }
    let drifts: Vec<Result<C64>> = feasible.par_iter().map(|v| map.eval(v)).collect();
    for (v, dl) in feasible.iter().zip(drifts) {
        samples.push(ArdSample::new(*v, lambda0, dl?, true));
    }
    Ok(ArdCloud {
        mode: *mode,
        samples,
        boundary: Vec::new(),
        worst_case: None,
        seed,
        n_drawn: n,
        n_rejected,
        omega_digest: omega.digest(),
    })
}
