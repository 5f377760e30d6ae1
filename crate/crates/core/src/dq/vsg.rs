//! Reduced-order grid-forming VSG: swing equation, first-order reactive
//! droop voltage loop and a series virtual/filter impedance.
//!
//! States `[d_delta, d_omega, d_E]`; inputs are the dq current injected into
//! the inverter terminal (the negative of the current delivered to the grid);
//! outputs are the terminal dq voltage. With this orientation
//! `Z(s) = C (sI - A)^-1 B + D + sE` is the output impedance seen at the PCC.

use nalgebra::{DMatrix, Matrix2, Vector2};

use super::{FilterParams, ParameterVector, StateSpaceModel};
use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;

/// Steady state of the series branch delivering `(P0, Q0)` at `V0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyState {
    pub delta0: f64,
    pub e0: f64,
    /// Current delivered to the grid (A), dq.
    pub i0: [f64; 2],
    /// Terminal voltage (V), dq; the PCC defines the q = 0 axis.
    pub v0: [f64; 2],
}

fn coupled(r: f64, x: f64) -> Matrix2<f64> {
    Matrix2::new(r, -x, x, r)
}

fn series_impedance(v: &ParameterVector, filter: &FilterParams, omega0: f64) -> (f64, f64, Matrix2<f64>) {
    let r = v.rho.rv + filter.rf;
    let l = v.rho.lv + filter.lf;
    (r, l, coupled(r, omega0 * l))
}

/// Damped Newton iteration on `(delta0, E0)` so that the terminal of the
/// series branch delivers `(P0, Q0)` at voltage magnitude `V0`.
pub fn solve_steady_state(v: &ParameterVector, filter: &FilterParams, omega0: f64) -> Result<SteadyState> {
    v.validate()?;
    if !(filter.lf > 0.0 && filter.rf >= 0.0 && omega0 > 0.0) {
        return Err(Error::InvalidInput("filter requires Lf > 0, Rf >= 0 and omega0 > 0".into()));
    }
    let (_, _, zc) = series_impedance(v, filter, omega0);
    let zc_inv = zc
        .try_inverse()
        .ok_or_else(|| Error::DegenerateModel("singular series impedance".into()))?;
    let v0 = Vector2::new(v.x_op.v0, 0.0);
    // natural power scale of the branch, used as the per-unit base of the mismatch
    let s_nat = v.x_op.v0 * v.x_op.v0 / zc.determinant().abs().sqrt();
    let target = Vector2::new(v.x_op.p0, v.x_op.q0);

    let current = |delta: f64, e: f64| -> Vector2<f64> {
        let emf = Vector2::new(e * delta.cos(), e * delta.sin());
        zc_inv * (emf - v0)
    };
    let mismatch = |delta: f64, e: f64| -> Vector2<f64> {
        let i = current(delta, e);
        let pq = Vector2::new(v.x_op.v0 * i[0], -v.x_op.v0 * i[1]);
        (pq - target) / s_nat
    };

    let (mut delta, mut e) = (0.0, v.x_op.v0);
    let mut f = mismatch(delta, e);
    let mut converged = f.amax() <= NEWTON_TOL;
    for _ in 0..NEWTON_MAX_ITER {
        if converged {
            break;
        }
        let (sd, cd) = delta.sin_cos();
        let de_ddelta = zc_inv * Vector2::new(-e * sd, e * cd);
        let de_de = zc_inv * Vector2::new(cd, sd);
        let vv = v.x_op.v0 / s_nat;
        let jac = Matrix2::new(vv * de_ddelta[0], vv * de_de[0], -vv * de_ddelta[1], -vv * de_de[1]);
        let step = jac
            .try_inverse()
            .ok_or_else(|| Error::InfeasibleOperatingPoint("singular Newton Jacobian".into()))?
            * f;
        let norm0 = f.norm();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (dn, en) = (delta - lambda * step[0], e - lambda * step[1]);
            let fn_ = mismatch(dn, en);
            if fn_.norm() < norm0 {
                delta = dn;
                e = en;
                f = fn_;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        converged = f.amax() <= NEWTON_TOL;
    }
    if !converged {
        return Err(Error::InfeasibleOperatingPoint(format!(
            "no steady state within {NEWTON_MAX_ITER} iterations (residual {:.3e} pu)",
            f.amax()
        )));
    }
    if !(e > 0.0) {
        return Err(Error::InfeasibleOperatingPoint(format!("non-positive internal EMF {e}")));
    }
    let i0 = current(delta, e);
    Ok(SteadyState {
        delta0: delta.rem_euclid(2.0 * std::f64::consts::PI),
        e0: e,
        i0: [i0[0], i0[1]],
        v0: [v.x_op.v0, 0.0],
    })
}

/// Linearized 3-state VSG impedance model at the operating point of `v`.
pub fn build_vsg_state_space(v: &ParameterVector, filter: &FilterParams, omega0: f64) -> Result<StateSpaceModel> {
    let ss = solve_steady_state(v, filter, omega0)?;
    let (_, l, zc) = series_impedance(v, filter, omega0);
    let rho = &v.rho;

    let (sd, cd) = ss.delta0.sin_cos();
    let e0 = ss.e0;
    // d e_dq / d(delta, E)
    let g_delta = Vector2::new(-e0 * sd, e0 * cd);
    let g_e = Vector2::new(cd, sd);
    let i0 = Vector2::new(ss.i0[0], ss.i0[1]);
    let v0 = Vector2::new(ss.v0[0], ss.v0[1]);
    let rot = |x: &Vector2<f64>| Vector2::new(-x[1], x[0]);
    let ji0 = rot(&i0);
    let jv0 = rot(&v0);

    // dP = aP . [d_delta, dE] + bP . u ;  dQ = aQ . [d_delta, dE] + bQ . u
    let a_p = [i0.dot(&g_delta), i0.dot(&g_e)];
    let a_q = [ji0.dot(&g_delta), ji0.dot(&g_e)];
    let b_p = zc.transpose() * i0 - v0;
    let b_q = zc.transpose() * ji0 + jv0;

    let (jj, tau) = (rho.j, rho.tau_q);
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0,
            1.0,
            0.0,
            -a_p[0] / jj,
            -rho.dp / jj,
            -a_p[1] / jj,
            -rho.kq * a_q[0] / tau,
            0.0,
            (-rho.kq * a_q[1] - 1.0) / tau,
        ],
    );
    let b = DMatrix::from_row_slice(
        3,
        2,
        &[
            0.0,
            0.0,
            -b_p[0] / jj,
            -b_p[1] / jj,
            -rho.kq * b_q[0] / tau,
            -rho.kq * b_q[1] / tau,
        ],
    );
    let c = DMatrix::from_row_slice(2, 3, &[g_delta[0], 0.0, g_e[0], g_delta[1], 0.0, g_e[1]]);
    let d = DMatrix::from_row_slice(2, 2, &[zc[(0, 0)], zc[(0, 1)], zc[(1, 0)], zc[(1, 1)]]);
    let e = DMatrix::from_row_slice(2, 2, &[l, 0.0, 0.0, l]);
    if a.iter().chain(b.iter()).chain(c.iter()).any(|x| !x.is_finite()) {
        return Err(Error::DegenerateModel("non-finite linearization".into()));
    }
    if c.norm() == 0.0 {
        return Err(Error::DegenerateModel("EMF linearization vanished".into()));
    }
    Ok(StateSpaceModel::new(a, b, c, d, Some(e))?.with_labels(
        &["d_delta", "d_omega", "d_E"],
        &["i_in_d", "i_in_q"],
        &["v_d", "v_q"],
    ))
}

/// Builds VSG impedance models for a fixed filter and nominal frequency.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VsgBuilder {
    pub filter: FilterParams,
    pub omega0: f64,
}

impl VsgBuilder {
    pub fn build(&self, v: &ParameterVector) -> Result<StateSpaceModel> {
        build_vsg_state_space(v, &self.filter, self.omega0)
    }

    pub fn impedance(&self, v: &ParameterVector, s: crate::linalg::C64) -> Result<crate::linalg::DqMatrix> {
        super::evaluate_impedance(&self.build(v)?, s)
    }
}
