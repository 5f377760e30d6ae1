use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::StateSpaceModel;
use crate::error::{Error, Result};

/// Sampled free response: `t[k]` and the output vector `y[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn output_norms(&self) -> Vec<f64> {
        self.y.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
    }
}

/// Free response by exact fixed-step propagation `x[k+1] = exp(A dt) x[k]`,
/// `y[k] = C x[k]`.
pub fn linear_response(model: &StateSpaceModel, x0: &[f64], t_end: f64, dt: f64) -> Result<TimeSeries> {
    if !(dt > 0.0 && t_end >= dt) {
        return Err(Error::InvalidInput(format!("need dt > 0 and t_end >= dt (dt={dt}, t_end={t_end})")));
    }
    let n = model.n_states();
    if x0.len() != n {
        return Err(Error::InvalidInput(format!("initial state has {} entries for {n} states", x0.len())));
    }
    let phi = (&model.a * dt).exp();
    let steps = (t_end / dt + 1e-9).floor() as usize;
    let mut x = DVector::from_column_slice(x0);
    let mut out = TimeSeries {
        t: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
    };
    for k in 0..=steps {
        out.t.push(k as f64 * dt);
        out.y.push((&model.c * &x).iter().copied().collect());
        x = &phi * x;
    }
    Ok(out)
}
