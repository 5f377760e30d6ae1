//! Transient records at the PCC and their synthesis from a white-box model.
//!
//! Current samples are the dq current injected into the inverter terminal;
//! between samples the current is taken to be piecewise linear, and the
//! sampled voltage includes the inductive drop `E di/dt` evaluated with the
//! forward slope of the current.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dq::StateSpaceModel;
use crate::error::{Error, Result};

pub const MIN_RECORD_LEN: usize = 32;

/// One excitation experiment: injected current and terminal voltage samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientRecord {
    pub dt: f64,
    /// Injected current `[i_d, i_q]` (A).
    pub inputs: Vec<[f64; 2]>,
    /// Terminal voltage `[v_d, v_q]` (V).
    pub outputs: Vec<[f64; 2]>,
    pub experiment_id: u8,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dt: f64,
    units: Units,
    experiment_id: u8,
    n_samples: usize,
}

#[derive(Serialize, Deserialize)]
struct Units {
    t: String,
    current: String,
    voltage: String,
}

impl TransientRecord {
    pub fn new(dt: f64, inputs: Vec<[f64; 2]>, outputs: Vec<[f64; 2]>, experiment_id: u8) -> Result<Self> {
        let r = TransientRecord {
            dt,
            inputs,
            outputs,
            experiment_id,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("record dt must be > 0, got {}", self.dt)));
        }
        if self.inputs.len() != self.outputs.len() {
            return Err(Error::InvalidInput("record inputs and outputs differ in length".into()));
        }
        if self.inputs.len() < MIN_RECORD_LEN {
            return Err(Error::InvalidInput(format!(
                "record needs at least {MIN_RECORD_LEN} samples, got {}",
                self.inputs.len()
            )));
        }
        if !(self.experiment_id == 1 || self.experiment_id == 2) {
            return Err(Error::InvalidInput("experiment id must be 1 or 2".into()));
        }
        let finite = self
            .inputs
            .iter()
            .chain(self.outputs.iter())
            .all(|p| p[0].is_finite() && p[1].is_finite());
        if !finite {
            return Err(Error::InvalidInput("record contains non-finite samples".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Writes `<stem>.csv` (`t,id,iq,vd,vq`) and `<stem>.json` metadata.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join(format!("{stem}.csv")))?;
        writeln!(f, "t,id,iq,vd,vq")?;
        for (k, (i, v)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            writeln!(f, "{},{},{},{},{}", k as f64 * self.dt, i[0], i[1], v[0], v[1])?;
        }
        let meta = Sidecar {
            dt: self.dt,
            units: Units {
                t: "s".into(),
                current: "A".into(),
                voltage: "V".into(),
            },
            experiment_id: self.experiment_id,
            n_samples: self.len(),
        };
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let meta: Sidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let text = fs::read_to_string(dir.join(format!("{stem}.csv")))?;
        let mut lines = text.lines();
        match lines.next() {
            Some("t,id,iq,vd,vq") => {}
            other => {
                return Err(Error::InvalidInput(format!("unexpected record header {other:?}")));
            }
        }
        let (mut inputs, mut outputs) = (Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("record line {}: {e}", n + 2)))?;
            if vals.len() != 5 {
                return Err(Error::InvalidInput(format!("record line {} has {} fields", n + 2, vals.len())));
            }
            inputs.push([vals[1], vals[2]]);
            outputs.push([vals[3], vals[4]]);
        }
        TransientRecord::new(meta.dt, inputs, outputs, meta.experiment_id)
    }

    /// Adds white Gaussian noise to each voltage channel, with standard deviation
    /// `rms_fraction` times that channel's RMS.
    pub fn with_output_noise(&self, rms_fraction: f64, seed: u64) -> TransientRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for ch in 0..2 {
            let rms = (self.outputs.iter().map(|v| v[ch] * v[ch]).sum::<f64>() / self.len() as f64).sqrt();
            let sigma = rms_fraction * rms;
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("positive sigma");
                for v in out.outputs.iter_mut() {
                    v[ch] += normal.sample(&mut rng);
                }
            }
        }
        out
    }
}

/// Exact response of `dv = Z(s) di` to a piecewise-linear current sequence.
pub fn simulate_piecewise_linear(model: &StateSpaceModel, inputs: &[[f64; 2]], dt: f64) -> Result<Vec<[f64; 2]>> {
    if model.n_inputs() != 2 || model.n_outputs() != 2 {
        return Err(Error::InvalidInput("simulation expects a 2x2 model".into()));
    }
    let n = model.n_states();
    let na = n + 4;
    let mut aug = DMatrix::<f64>::zeros(na, na);
    aug.view_mut((0, 0), (n, n)).copy_from(&model.a);
    aug.view_mut((0, n), (n, 2)).copy_from(&model.b);
    aug[(n, n + 2)] = 1.0;
    aug[(n + 1, n + 3)] = 1.0;
    let phi = (aug * dt).exp();
    let phi_x = phi.view((0, 0), (n, na)).into_owned();

    let mut x = DVector::<f64>::zeros(n);
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let u = inputs[k];
        let next = if k + 1 < inputs.len() { inputs[k + 1] } else { u };
        let w = [(next[0] - u[0]) / dt, (next[1] - u[1]) / dt];
        let mut y = [0.0; 2];
        for r in 0..2 {
            let mut acc = 0.0;
            for c in 0..n {
                acc += model.c[(r, c)] * x[c];
            }
            for c in 0..2 {
                acc += model.d[(r, c)] * u[c] + model.e[(r, c)] * w[c];
            }
            y[r] = acc;
        }
        out.push(y);
        let mut z = DVector::<f64>::zeros(na);
        z.rows_mut(0, n).copy_from(&x);
        z[n] = u[0];
        z[n + 1] = u[1];
        z[n + 2] = w[0];
        z[n + 3] = w[1];
        x = &phi_x * z;
    }
    Ok(out)
}

/// Two excitation experiments: a triangular current pulse of peak `amplitude`
/// (A) at sample 1, first along d then along q.
pub fn synthesize_transients(
    model: &StateSpaceModel,
    dt: f64,
    n_samples: usize,
    amplitude: f64,
) -> Result<[TransientRecord; 2]> {
    let mk = |axis: usize| -> Result<TransientRecord> {
        let mut inputs = vec![[0.0; 2]; n_samples];
        if n_samples > 1 {
            inputs[1][axis] = amplitude;
        }
        let outputs = simulate_piecewise_linear(model, &inputs, dt)?;
        TransientRecord::new(dt, inputs, outputs, axis as u8 + 1)
    };
    Ok([mk(0)?, mk(1)?])
}
