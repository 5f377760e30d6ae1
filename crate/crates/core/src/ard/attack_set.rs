use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dq::{Bases, ParamBounds, ParameterVector, COORD_NAMES, N_COORDS, N_OP};
use crate::error::{Error, Result};

const MAX_ROUNDS: usize = 20;
// feasibility slack for the projected point, relative to the threshold
const STEALTH_SLACK: f64 = 1e-12;

/// The feasible attack set: a box around the nominal point restricted to the
/// coordinates the attacker can write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleAttackSet {
    pub nominal: ParameterVector,
    /// Absolute bounds. Non-attackable coordinates are pinned at nominal.
    pub bounds: ParamBounds,
    pub attackable: [bool; N_COORDS],
}

/// Box offsets around the nominal point: per unit (of `S_base` for P0/Q0 and
/// `V_base` for V0) for the operating point, fractions of nominal for the
/// control parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackBox {
    pub lo: [f64; N_COORDS],
    pub hi: [f64; N_COORDS],
}

impl AttackBox {
    /// Symmetric box: `op_pu` on every operating-point coordinate and
    /// `rho_rel` on every control parameter.
    pub fn symmetric(op_pu: f64, rho_rel: f64) -> Self {
        let hi: [f64; N_COORDS] = std::array::from_fn(|k| if k < N_OP { op_pu } else { rho_rel });
        AttackBox {
            lo: hi.map(|x| -x),
            hi,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        AttackBox {
            lo: self.lo.map(|x| x * factor),
            hi: self.hi.map(|x| x * factor),
        }
    }
}

impl FeasibleAttackSet {
    pub fn new(nominal: ParameterVector, bounds: ParamBounds, attackable: [bool; N_COORDS]) -> Result<Self> {
        nominal.validate()?;
        ParamBounds::new(bounds.lo, bounds.hi)?;
        let a = nominal.to_array();
        for k in 0..N_COORDS {
            if !(bounds.lo[k] <= a[k] && a[k] <= bounds.hi[k]) {
                return Err(Error::InvalidInput(format!("nominal {} outside the attack box", COORD_NAMES[k])));
            }
            if !attackable[k] && !bounds.is_degenerate(k) {
                return Err(Error::InvalidInput(format!(
                    "{} is not attackable but has a non-degenerate range",
                    COORD_NAMES[k]
                )));
            }
        }
        // every corner must still be a valid parameter vector
        ParameterVector::from_array(&bounds.lo)
            .validate()
            .and_then(|_| ParameterVector::from_array(&bounds.hi).validate())
            .map_err(|e| Error::InvalidInput(format!("attack box leaves the model domain: {e}")))?;
        Ok(FeasibleAttackSet {
            nominal,
            bounds,
            attackable,
        })
    }

    pub fn from_box(nominal: ParameterVector, b: &AttackBox, attackable: [bool; N_COORDS], bases: &Bases) -> Result<Self> {
        bases.validate()?;
        let a = nominal.to_array();
        let mut lo = a;
        let mut hi = a;
        for k in 0..N_COORDS {
            if !attackable[k] {
                continue;
            }
            if !(b.lo[k] <= 0.0 && b.hi[k] >= 0.0) {
                return Err(Error::InvalidInput(format!("box for {} must contain zero offset", COORD_NAMES[k])));
            }
            let unit = match k {
                0 | 1 => bases.s_base,
                2 => bases.v_base,
                _ => a[k].abs(),
            };
            lo[k] = a[k] + b.lo[k] * unit;
            hi[k] = a[k] + b.hi[k] * unit;
        }
        Self::new(nominal, ParamBounds::new(lo, hi)?, attackable)
    }

    /// Singleton set at the nominal point.
    pub fn singleton(nominal: ParameterVector) -> Result<Self> {
        Self::new(nominal, ParamBounds::point(&nominal), [false; N_COORDS])
    }

    /// Attackable coordinates with a non-degenerate range.
    pub fn active(&self) -> Vec<usize> {
        (0..N_COORDS)
            .filter(|&k| self.attackable[k] && !self.bounds.is_degenerate(k))
            .collect()
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("attack set serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Detector thresholds: a weighted Euclidean norm on per-unit operating-point
/// deviations (bad data detection) and a weighted max-norm on relative
/// control-parameter changes (intrusion detection).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StealthModel {
    pub bdd_weights: [f64; N_OP],
    pub eps1: f64,
    pub ids_weights: [f64; N_COORDS - N_OP],
    pub eps2: f64,
    pub bases: Bases,
}

impl StealthModel {
    pub fn validate(&self) -> Result<()> {
        self.bases.validate()?;
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::InvalidInput("stealth thresholds must be positive".into()));
        }
        if self.bdd_weights.iter().chain(&self.ids_weights).any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("stealth weights must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// No effective stealth constraint.
    pub fn unconstrained(bases: Bases) -> Self {
        StealthModel {
            bdd_weights: [0.0; N_OP],
            eps1: f64::INFINITY,
            ids_weights: [0.0; N_COORDS - N_OP],
            eps2: f64::INFINITY,
            bases,
        }
    }

    fn op_unit(&self, k: usize) -> f64 {
        if k == 2 {
            self.bases.v_base
        } else {
            self.bases.s_base
        }
    }

    // nominal values of zero are measured in absolute change
    fn rho_unit(nominal: f64) -> f64 {
        if nominal != 0.0 {
            nominal.abs()
        } else {
            1.0
        }
    }

    fn d_bdd(&self, a: &[f64; N_COORDS], nom: &[f64; N_COORDS]) -> f64 {
        (0..N_OP)
            .map(|k| (self.bdd_weights[k] * (a[k] - nom[k]) / self.op_unit(k)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn d_ids(&self, a: &[f64; N_COORDS], nom: &[f64; N_COORDS]) -> f64 {
        (N_OP..N_COORDS)
            .map(|k| self.ids_weights[k - N_OP] * (a[k] - nom[k]).abs() / Self::rho_unit(nom[k]))
            .fold(0.0, f64::max)
    }
}

/// `(d_bdd, d_ids)` of `v` relative to `nominal`.
pub fn stealth_distances(v: &ParameterVector, nominal: &ParameterVector, s: &StealthModel) -> (f64, f64) {
    let (a, nom) = (v.to_array(), nominal.to_array());
    (s.d_bdd(&a, &nom), s.d_ids(&a, &nom))
}

/// Inside the box and below both detector thresholds.
pub fn is_feasible(v: &ParameterVector, omega: &FeasibleAttackSet, s: &StealthModel) -> bool {
    let a = v.to_array();
    let inside = (0..N_COORDS).all(|k| omega.bounds.lo[k] <= a[k] && a[k] <= omega.bounds.hi[k]);
    let (b, i) = stealth_distances(v, &omega.nominal, s);
    inside && b <= s.eps1 * (1.0 + STEALTH_SLACK) && i <= s.eps2 * (1.0 + STEALTH_SLACK)
}

/// Alternating projection: box clamp, radial scaling onto the BDD ball,
/// coordinate-wise clamp onto the IDS ball. Each step is the identity on
/// points already satisfying its constraint, so feasible points are fixed.
pub fn project(v: &ParameterVector, omega: &FeasibleAttackSet, s: &StealthModel) -> ParameterVector {
    let nom = omega.nominal.to_array();
    let mut a = v.to_array();
    for _ in 0..MAX_ROUNDS {
        let before = a;
        omega.bounds.clamp(&mut a);
        let d = s.d_bdd(&a, &nom);
        if d > s.eps1 * (1.0 + STEALTH_SLACK) {
            let f = s.eps1 / d;
            for k in 0..N_OP {
                a[k] = nom[k] + f * (a[k] - nom[k]);
            }
        }
        for k in N_OP..N_COORDS {
            let w = s.ids_weights[k - N_OP];
            let unit = StealthModel::rho_unit(nom[k]);
            if w * (a[k] - nom[k]).abs() / unit > s.eps2 * (1.0 + STEALTH_SLACK) {
                let r = s.eps2 * unit / w;
                a[k] = nom[k] + (a[k] - nom[k]).clamp(-r, r);
            }
        }
        // moving toward nominal inside a box that contains it
        omega.bounds.clamp(&mut a);
        for k in 0..N_COORDS {
            if !omega.attackable[k] {
                a[k] = nom[k];
            }
        }
        if a == before {
            break;
        }
    }
    ParameterVector::from_array(&a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dq::{ControlParams, OperatingPoint};
    use proptest::prelude::*;

    fn nominal() -> ParameterVector {
        ParameterVector {
            x_op: OperatingPoint {
                p0: 8e5,
                q0: 1e5,
                v0: 1000.0,
            },
            rho: ControlParams {
                j: 400.0,
                dp: 8000.0,
                kq: 5e-5,
                tau_q: 0.02,
                rv: 0.02,
                lv: 3.18e-4,
            },
        }
    }

    fn bases() -> Bases {
        Bases {
            s_base: 1e6,
            v_base: 1000.0,
        }
    }

    fn stealth(eps1: f64, eps2: f64) -> StealthModel {
        StealthModel {
            bdd_weights: [1.0; 3],
            eps1,
            ids_weights: [1.0; 6],
            eps2,
            bases: bases(),
        }
    }

    fn omega() -> FeasibleAttackSet {
        FeasibleAttackSet::from_box(nominal(), &AttackBox::symmetric(0.2, 0.6), [true; N_COORDS], &bases()).unwrap()
    }

    #[test]
    fn nominal_has_zero_distance() {
        assert_eq!(stealth_distances(&nominal(), &nominal(), &stealth(0.1, 0.1)), (0.0, 0.0));
    }

    #[test]
    fn single_coordinate_bdd_distance() {
        let mut a = nominal().to_array();
        a[0] += 0.1 * 1e6;
        let (b, i) = stealth_distances(&ParameterVector::from_array(&a), &nominal(), &stealth(1.0, 1.0));
        assert!((b - 0.1).abs() < 1e-15);
        assert_eq!(i, 0.0);
    }

    #[test]
    fn ids_is_max_of_relative_changes() {
        let mut a = nominal().to_array();
        a[3] *= 1.1;
        a[4] *= 0.7;
        let (_, i) = stealth_distances(&ParameterVector::from_array(&a), &nominal(), &stealth(1.0, 1.0));
        assert!((i - 0.3).abs() < 1e-12);
    }

    #[test]
    fn box_offsets_in_pu_and_relative() {
        let o = omega();
        assert_eq!(o.bounds.hi[0], 8e5 + 0.2e6);
        assert_eq!(o.bounds.lo[2], 800.0);
        assert!((o.bounds.hi[4] - 12800.0).abs() < 1e-9);
        assert_eq!(o.active().len(), 9);
    }

    #[test]
    fn masked_coordinates_pinned() {
        let mut mask = [true; N_COORDS];
        mask[4] = false;
        let o = FeasibleAttackSet::from_box(nominal(), &AttackBox::symmetric(0.1, 0.3), mask, &bases()).unwrap();
        assert!(o.bounds.is_degenerate(4));
        let mut a = nominal().to_array();
        a[4] = 1.0;
        assert_eq!(project(&ParameterVector::from_array(&a), &o, &stealth(1.0, 1.0)).rho.dp, 8000.0);
    }

    #[test]
    fn box_leaving_model_domain_rejected() {
        assert!(FeasibleAttackSet::from_box(nominal(), &AttackBox::symmetric(0.1, 1.5), [true; N_COORDS], &bases()).is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = omega();
        assert_eq!(a.digest(), omega().digest());
        assert_eq!(a.digest().len(), 64);
        let b = FeasibleAttackSet::from_box(nominal(), &AttackBox::symmetric(0.2, 0.5), [true; N_COORDS], &bases()).unwrap();
        assert_ne!(a.digest(), b.digest());
    }

    fn arb_point() -> impl Strategy<Value = [f64; N_COORDS]> {
        proptest::array::uniform9(-3.0f64..3.0).prop_map(|u| {
            let n = nominal().to_array();
            std::array::from_fn(|k| n[k] + u[k] * (0.3 * n[k].abs()))
        })
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent(a in arb_point(), eps1 in 0.01f64..0.5, eps2 in 0.01f64..0.8) {
            let (o, s) = (omega(), stealth(eps1, eps2));
            let p = project(&ParameterVector::from_array(&a), &o, &s);
            prop_assert!(is_feasible(&p, &o, &s));
            prop_assert_eq!(project(&p, &o, &s), p);
        }

        #[test]
        fn feasible_points_are_fixed(u in proptest::array::uniform9(-1.0f64..1.0)) {
            let (o, s) = (omega(), stealth(10.0, 10.0));
            let n = nominal().to_array();
            let a: [f64; N_COORDS] = std::array::from_fn(|k| n[k] + u[k] * 0.5 * (o.bounds.hi[k] - n[k]).min(n[k] - o.bounds.lo[k]));
            let v = ParameterVector::from_array(&a);
            prop_assert!(is_feasible(&v, &o, &s));
            prop_assert_eq!(project(&v, &o, &s), v);
        }
    }
}
