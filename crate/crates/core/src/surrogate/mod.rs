//! Parameter-to-impedance surrogates: sampled training data, a rational
//! physics-prior fit with analytic gradients, and a white-box oracle behind
//! the same interface.

mod dataset;
mod poly;
mod rational;

pub use dataset::{generate_dataset, DatasetMode, TrainingDataset, ERA_DT, ERA_SAMPLES};
pub use rational::{fit_surrogate, fit_surrogate_with, FitOptions, Normalization, FitReport, RationalSurrogate, SURROGATE_FORMAT_VERSION};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dq::{ParamBounds, ParameterVector, VsgBuilder, N_COORDS};
use crate::error::{Error, Result};
use crate::linalg::{DqMatrix, C64};

/// Differentiable map from a parameter vector to the inverter impedance.
pub trait ImpedanceSurrogate: Send + Sync {
    fn eval(&self, v: &ParameterVector, s: C64) -> Result<DqMatrix>;

    /// `dZ/dv_k` for every coordinate in [`crate::dq::COORD_NAMES`] order.
    fn grad(&self, v: &ParameterVector, s: C64) -> Result<[DqMatrix; N_COORDS]>;
}

/// The white-box VSG model as a surrogate. Gradients are central differences
/// with a relative step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhiteBoxSurrogate {
    pub builder: VsgBuilder,
    pub rel_step: f64,
}

impl WhiteBoxSurrogate {
    pub fn new(builder: VsgBuilder) -> Self {
        WhiteBoxSurrogate { builder, rel_step: 1e-6 }
    }
}

impl ImpedanceSurrogate for WhiteBoxSurrogate {
    fn eval(&self, v: &ParameterVector, s: C64) -> Result<DqMatrix> {
        self.builder.impedance(v, s)
    }

    fn grad(&self, v: &ParameterVector, s: C64) -> Result<[DqMatrix; N_COORDS]> {
        let a = v.to_array();
        let mut out = [DqMatrix::zeros(); N_COORDS];
        for k in 0..N_COORDS {
            let h = self.rel_step * a[k].abs().max(1e-3);
            let mut up = a;
            let mut dn = a;
            up[k] += h;
            dn[k] -= h;
            let zu = self.eval(&ParameterVector::from_array(&up), s)?;
            let zd = self.eval(&ParameterVector::from_array(&dn), s)?;
            out[k] = (zu - zd).scale(C64::new(0.5 / h, 0.0));
        }
        Ok(out)
    }
}

/// Latin hypercube in `[0,1]^dim`: each 1-D projection has one point per stratum.
pub fn lhs_unit<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            p[d] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Seeded Latin hypercube over `bounds`. Degenerate coordinates stay constant.
pub fn lhs_sample(bounds: &ParamBounds, n: usize, seed: u64) -> Result<Vec<ParameterVector>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("LHS needs n >= 2, got {n}")));
    }
    ParamBounds::new(bounds.lo, bounds.hi)?;
    for k in 0..N_COORDS {
        if bounds.is_degenerate(k) {
            log::debug!("LHS coordinate {} is constant", crate::dq::COORD_NAMES[k]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(lhs_unit(n, N_COORDS, &mut rng)
        .into_iter()
        .map(|u| {
            let u: [f64; N_COORDS] = u.try_into().expect("dimension");
            ParameterVector::from_array(&bounds.from_unit(&u))
        })
        .collect())
}
