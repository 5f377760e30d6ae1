//! Eigensystem realization from two transient experiments.
//!
//! The sampled voltage is deconvolved against the sampled current into
//! discrete kernels `G_j`, `j >= -1`. Under the piecewise-linear current model
//! `G_{-1}` carries the inductive term, `G_0` the feedthrough and the shifted
//! kernels are the Markov parameters of the integrated system, which feed a
//! block Hankel matrix. The discrete realization is mapped back to continuous
//! time mode by mode.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use super::TransientRecord;
use crate::dq::StateSpaceModel;
use crate::error::{Error, Result};
use crate::linalg::{eig_decompose, C64};

/// Relative Hankel singular value threshold for automatic order selection.
pub const AUTO_ORDER_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrder {
    Auto,
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EraConfig {
    /// Block rows of the Hankel matrix.
    pub row_blocks: usize,
}

impl Default for EraConfig {
    fn default() -> Self {
        EraConfig { row_blocks: 20 }
    }
}

/// Diagnostics of one identification run.
#[derive(Clone, Debug, PartialEq)]
pub struct EraReport {
    pub order: usize,
    pub singular_values: Vec<f64>,
}

pub fn era_identify(records: &[TransientRecord; 2], order: ModelOrder) -> Result<StateSpaceModel> {
    era_identify_with(records, order, &EraConfig::default()).map(|(m, _)| m)
}

pub fn era_identify_with(
    records: &[TransientRecord; 2],
    order: ModelOrder,
    cfg: &EraConfig,
) -> Result<(StateSpaceModel, EraReport)> {
    for r in records {
        r.validate()?;
    }
    let [r1, r2] = records;
    if (r1.dt - r2.dt).abs() > 1e-12 * r1.dt.abs() {
        return Err(Error::InvalidInput(format!("records have mismatched dt ({} vs {})", r1.dt, r2.dt)));
    }
    let dt = r1.dt;
    let n = r1.len().min(r2.len());
    let inp = |k: usize| Matrix2::new(r1.inputs[k][0], r2.inputs[k][0], r1.inputs[k][1], r2.inputs[k][1]);
    let out = |k: usize| Matrix2::new(r1.outputs[k][0], r2.outputs[k][0], r1.outputs[k][1], r2.outputs[k][1]);

    let m0 = (0..n)
        .find(|&k| inp(k).norm() > 0.0)
        .ok_or_else(|| Error::InvalidInput("records carry no excitation".into()))?;
    if m0 == 0 {
        return Err(Error::InvalidInput("excitation must start after the first sample".into()));
    }
    let lead = inp(m0);
    let sv = lead.singular_values();
    if !(sv.min() > 1e-8 * sv.max()) {
        return Err(Error::InvalidInput("input directions are not linearly independent".into()));
    }
    let lead_inv = lead.try_inverse().expect("checked nonsingular");

    // g[j + 1] = G_j for j = -1 ..= n - 1 - m0
    let len = n - m0 + 1;
    let mut g: Vec<Matrix2<f64>> = Vec::with_capacity(len);
    for idx in 0..len {
        let k = idx + m0 - 1;
        if k >= n {
            break;
        }
        let mut acc = out(k);
        for m in (m0 + 1)..=(k + 1).min(n - 1) {
            let j = k + 1 - m; // index into g of G_{k-m}
            acc -= g[j] * inp(m);
        }
        g.push(acc * lead_inv);
    }

    let e = g[0] * dt;
    let g1 = g[1] * dt;
    let h: Vec<Matrix2<f64>> = g[2..].iter().map(|x| x * dt).collect();
    if h.len() < 4 {
        return Err(Error::InvalidInput("records too short for a Hankel realization".into()));
    }
    let rows = cfg.row_blocks.max(1).min((h.len() - 1) / 2);
    let cols = h.len() - 1 - rows;
    let mut h0 = DMatrix::<f64>::zeros(2 * rows, 2 * cols);
    let mut h1 = DMatrix::<f64>::zeros(2 * rows, 2 * cols);
    for i in 0..rows {
        for j in 0..cols {
            h0.fixed_view_mut::<2, 2>(2 * i, 2 * j).copy_from(&h[i + j]);
            h1.fixed_view_mut::<2, 2>(2 * i, 2 * j).copy_from(&h[i + j + 1]);
        }
    }
    let svd = h0.svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    // nalgebra does not guarantee ordering
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let s_max = sigma.first().copied().unwrap_or(0.0);
    if !(s_max > 0.0) || !s_max.is_finite() {
        return Err(Error::Unidentifiable("Hankel matrix is zero".into()));
    }
    let significant = sigma.iter().filter(|&&s| s / s_max > AUTO_ORDER_THRESHOLD).count();
    let ord = match order {
        ModelOrder::Auto => significant,
        ModelOrder::Fixed(0) => {
            return Err(Error::InvalidInput("model order must be positive".into()));
        }
        ModelOrder::Fixed(k) => k.min(sigma.len()),
    };
    if ord == 0 || significant == 0 {
        return Err(Error::Unidentifiable("no Hankel singular value above threshold".into()));
    }

    let mut ur = DMatrix::<f64>::zeros(2 * rows, ord);
    let mut vr = DMatrix::<f64>::zeros(2 * cols, ord);
    for (c, &i) in idx.iter().take(ord).enumerate() {
        ur.set_column(c, &u.column(i));
        vr.set_column(c, &vt.row(i).transpose());
    }
    let s_isqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(ord, sigma[..ord].iter().map(|s| 1.0 / s.sqrt())));
    let s_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(ord, sigma[..ord].iter().map(|s| s.sqrt())));
    let ad = &s_isqrt * ur.transpose() * &h1 * &vr * &s_isqrt;
    let obs = &ur * &s_sqrt;
    let ctr = &s_sqrt * vr.transpose();
    let cd = obs.rows(0, 2).into_owned();
    let bd = ctr.columns(0, 2).into_owned();

    let (mu, w) = eig_decompose(&ad);
    let wc = w.clone();
    let w_inv = wc
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("defective discrete realization".into()))?;
    let bdc = &w_inv * crate::linalg::to_complex(&bd);
    let ctil = crate::linalg::to_complex(&cd) * &wc;

    let mut lam = Vec::with_capacity(ord);
    let mut bc_modal = DMatrix::<C64>::zeros(ord, 2);
    let mut d = DMatrix::<C64>::zeros(2, 2);
    for k in 0..ord {
        if !(mu[k].norm() > 0.0) {
            return Err(Error::Unidentifiable("discrete pole at the origin".into()));
        }
        // a negative real discrete pole has no real continuous counterpart; such
        // poles only arise from noise and are mapped onto the real axis
        let l = if mu[k].im == 0.0 && mu[k].re < 0.0 {
            C64::new(mu[k].re.abs().ln() / dt, 0.0)
        } else {
            mu[k].ln() / dt
        };
        let x = l * dt;
        // (e^x - 1)/x and (x - e^x + 1)/x^2 without cancellation
        let (phi1, phi2) = if x.norm() < 1e-3 {
            (
                C64::new(1.0, 0.0) + x / 2.0 + x * x / 6.0 + x * x * x / 24.0,
                -(C64::new(0.5, 0.0) + x / 6.0 + x * x / 24.0 + x * x * x / 120.0),
            )
        } else {
            let ex = x.exp();
            ((ex - 1.0) / x, (x - ex + 1.0) / (x * x))
        };
        // B_c = B_d * lambda^2 / (mu - 1)^2
        let scale = C64::new(1.0, 0.0) / (dt * phi1 * dt * phi1);
        for c in 0..2 {
            bc_modal[(k, c)] = bdc[(k, c)] * scale;
        }
        for r in 0..2 {
            for c in 0..2 {
                d[(r, c)] += ctil[(r, k)] * bc_modal[(k, c)] * dt * phi2;
            }
        }
        lam.push(l);
    }
    for r in 0..2 {
        for c in 0..2 {
            d[(r, c)] += C64::from((g1[(r, c)] + e[(r, c)]) / dt);
        }
    }

    let a_c = &wc * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam)) * &w_inv;
    let b_c = &wc * &bc_modal;
    let imag = a_c.iter().chain(b_c.iter()).chain(d.iter()).map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = a_c.iter().chain(b_c.iter()).chain(d.iter()).map(|z| z.norm()).fold(0.0, f64::max);
    if imag > 1e-6 * scale.max(1.0) {
        return Err(Error::Conditioning(format!(
            "continuous realization is not real (imaginary residue {imag:.3e})"
        )));
    }
    let real = |m: &DMatrix<C64>| m.map(|z| z.re);
    let e_mat = DMatrix::from_row_slice(2, 2, &[e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]]);
    let model = StateSpaceModel::new(real(&a_c), real(&b_c), cd, real(&d), Some(e_mat))?;
    let labels: Vec<String> = (0..ord).map(|k| format!("era_{k}")).collect();
    let labels: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    let model = model.with_labels(&labels, &["i_in_d", "i_in_q"], &["v_d", "v_q"]);
    Ok((
        model,
        EraReport {
            order: ord,
            singular_values: sigma,
        },
    ))
}
