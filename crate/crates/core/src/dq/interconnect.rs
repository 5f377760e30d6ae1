use nalgebra::{DMatrix, Matrix2};

use super::{GridEquivalent, StateSpaceModel};
use crate::error::{Error, Result};
use crate::linalg::C64;

/// Closed loop of an inverter impedance model in series with an RL grid
/// equivalent behind an ideal source.
///
/// States are `[x_inv; i_d; i_q]` with `i` the loop current delivered to the
/// grid; outputs are `[i_d, i_q, v_d, v_q]` at the PCC. The eigenvalues of
/// the returned `A` are the poles of `(Z_inv + Z_g)^-1`.
pub fn assemble_interconnection(inverter: &StateSpaceModel, g: &GridEquivalent) -> Result<StateSpaceModel> {
    if inverter.n_inputs() != 2 || inverter.n_outputs() != 2 {
        return Err(Error::Assembly("inverter model must be 2x2".into()));
    }
    let n = inverter.n_states();
    let xg = g.omega0 * g.lg;
    let zg0 = DMatrix::from_row_slice(2, 2, &[g.rg, -xg, xg, g.rg]);
    let m = &inverter.e + DMatrix::<f64>::identity(2, 2) * g.lg;
    let m2 = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let svd = m2.svd(false, false);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::Assembly("singular inductive feedthrough in series loop".into()));
    }
    let minv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Assembly("singular inductive feedthrough in series loop".into()))?;

    let mut a = DMatrix::<f64>::zeros(n + 2, n + 2);
    a.view_mut((0, 0), (n, n)).copy_from(&inverter.a);
    a.view_mut((0, n), (n, 2)).copy_from(&(-&inverter.b));
    let di_dx = &minv * &inverter.c;
    let di_di = -(&minv * (&inverter.d + &zg0));
    a.view_mut((n, 0), (2, n)).copy_from(&di_dx);
    a.view_mut((n, n), (2, 2)).copy_from(&di_di);

    let mut c = DMatrix::<f64>::zeros(4, n + 2);
    c[(0, n)] = 1.0;
    c[(1, n + 1)] = 1.0;
    // v = Zg0 i + Lg di/dt
    let v_x = &di_dx * g.lg;
    let v_i = &zg0 + &di_di * g.lg;
    c.view_mut((2, 0), (2, n)).copy_from(&v_x);
    c.view_mut((2, n), (2, 2)).copy_from(&v_i);

    let model = StateSpaceModel::new(a, DMatrix::zeros(n + 2, 0), c, DMatrix::zeros(4, 0), None)?;
    let mut states: Vec<String> = inverter.state_labels.clone();
    states.push("i_d".into());
    states.push("i_q".into());
    let states: Vec<&str> = states.iter().map(|s| s.as_str()).collect();
    Ok(model.with_labels(&states, &[], &["i_d", "i_q", "v_d", "v_q"]))
}

/// Interconnection with a static perturbation `dz` (ohm) added to the
/// inverter feedthrough, used as the perturbation oracle for eigenvalue drift.
pub fn assemble_with_perturbation(
    inverter: &StateSpaceModel,
    dz: &Matrix2<f64>,
    g: &GridEquivalent,
) -> Result<StateSpaceModel> {
    let mut perturbed = inverter.clone();
    for i in 0..2 {
        for j in 0..2 {
            perturbed.d[(i, j)] += dz[(i, j)];
        }
    }
    assemble_interconnection(&perturbed, g)
}

/// Rightmost eigenvalue with positive imaginary part inside a frequency band (Hz).
pub fn critical_pair(eigs: &[C64], band_hz: (f64, f64)) -> Option<C64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    eigs.iter()
        .copied()
        .filter(|l| l.im > two_pi * band_hz.0 && l.im <= two_pi * band_hz.1)
        .max_by(|a, b| a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal))
}
