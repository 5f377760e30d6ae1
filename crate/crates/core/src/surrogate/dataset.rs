use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dq::{model_spectrum, FrequencyGrid, ImpedanceSpectrum, ParamBounds, ParameterVector, VsgBuilder};
use crate::error::{Error, Result};
use crate::identification::{era_identify, synthesize_transients, ModelOrder};
use crate::linalg::{DqMatrix, C64};

/// Sample period and record length of the synthetic transients used by
/// [`DatasetMode::ViaEra`].
pub const ERA_DT: f64 = 5e-4;
pub const ERA_SAMPLES: usize = 400;
const MAX_SKIPPED_FRACTION: f64 = 0.2;
const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    /// Evaluate the white-box impedance directly.
    Direct,
    /// Synthesize transients and identify the impedance by ERA.
    ViaEra,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingDataset {
    pub samples: Vec<(ParameterVector, ImpedanceSpectrum)>,
    pub sampling_seed: u64,
    pub bounds: ParamBounds,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    sampling_seed: u64,
    bounds: ParamBounds,
    omega: Vec<f64>,
    samples: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    params: ParameterVector,
}

impl TrainingDataset {
    pub fn new(samples: Vec<(ParameterVector, ImpedanceSpectrum)>, sampling_seed: u64, bounds: ParamBounds) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dataset("dataset has no samples".into()));
        }
        let grid = &samples[0].1.grid;
        for (v, z) in &samples {
            if &z.grid != grid {
                return Err(Error::Dataset("samples use different frequency grids".into()));
            }
            if !bounds.contains(v, 1e-12) {
                return Err(Error::Dataset(format!("sample {:?} outside dataset bounds", v.to_array())));
            }
        }
        Ok(TrainingDataset {
            samples,
            sampling_seed,
            bounds,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.samples[0].1.grid
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `manifest.json` and one `sample_NNNN.csv` per spectrum.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.len());
        for (k, (v, z)) in self.samples.iter().enumerate() {
            let file = format!("sample_{k:04}.csv");
            let mut f = fs::File::create(dir.join(&file))?;
            writeln!(f, "omega,zdd_re,zdd_im,zdq_re,zdq_im,zqd_re,zqd_im,zqq_re,zqq_im")?;
            for (w, m) in z.grid.points().iter().zip(&z.values) {
                write!(f, "{w}")?;
                for e in 0..4 {
                    let c = m.get(e / 2, e % 2);
                    write!(f, ",{},{}", c.re, c.im)?;
                }
                writeln!(f)?;
            }
            entries.push(ManifestEntry { file, params: *v });
        }
        let manifest = Manifest {
            version: DATASET_FORMAT_VERSION,
            sampling_seed: self.sampling_seed,
            bounds: self.bounds,
            omega: self.grid().points().to_vec(),
            samples: entries,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.version != DATASET_FORMAT_VERSION {
            return Err(Error::Dataset(format!("unsupported dataset version {}", manifest.version)));
        }
        let grid = FrequencyGrid::new(manifest.omega)?;
        let mut samples = Vec::with_capacity(manifest.samples.len());
        for e in manifest.samples {
            let text = fs::read_to_string(dir.join(&e.file))?;
            let mut values = Vec::with_capacity(grid.len());
            for (n, line) in text.lines().skip(1).enumerate() {
                let x: Vec<f64> = line
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|err| Error::Dataset(format!("{} line {}: {err}", e.file, n + 2)))?;
                if x.len() != 9 {
                    return Err(Error::Dataset(format!("{} line {}: expected 9 fields", e.file, n + 2)));
                }
                let c = |k: usize| C64::new(x[1 + 2 * k], x[2 + 2 * k]);
                values.push(DqMatrix::new(c(0), c(1), c(2), c(3)));
            }
            samples.push((e.params, ImpedanceSpectrum::new(grid.clone(), values)?));
        }
        TrainingDataset::new(samples, manifest.sampling_seed, manifest.bounds)
    }
}

fn sample_spectrum(builder: &VsgBuilder, v: &ParameterVector, grid: &FrequencyGrid, mode: DatasetMode) -> Result<ImpedanceSpectrum> {
    let model = builder.build(v)?;
    match mode {
        DatasetMode::Direct => model_spectrum(&model, grid),
        DatasetMode::ViaEra => {
            let recs = synthesize_transients(&model, ERA_DT, ERA_SAMPLES, 1.0)?;
            model_spectrum(&era_identify(&recs, ModelOrder::Auto)?, grid)
        }
    }
}

/// Labels each parameter vector with its impedance spectrum. Infeasible
/// samples are skipped; more than 20% skipped is an error.
pub fn generate_dataset(
    builder: &VsgBuilder,
    params: &[ParameterVector],
    grid: &FrequencyGrid,
    mode: DatasetMode,
    bounds: &ParamBounds,
    sampling_seed: u64,
) -> Result<TrainingDataset> {
    if params.is_empty() {
        return Err(Error::Dataset("no parameter vectors to label".into()));
    }
    let results: Vec<Result<ImpedanceSpectrum>> =
        params.par_iter().map(|v| sample_spectrum(builder, v, grid, mode)).collect();
    let mut samples = Vec::with_capacity(params.len());
    let mut skipped = 0;
    for (v, r) in params.iter().zip(results) {
        match r {
            Ok(z) => samples.push((*v, z)),
            Err(e) => {
                skipped += 1;
                log::warn!("skipping sample {:?}: {e}", v.to_array());
            }
        }
    }
    if skipped as f64 > MAX_SKIPPED_FRACTION * params.len() as f64 {
        return Err(Error::Dataset(format!("{skipped} of {} samples infeasible", params.len())));
    }
    TrainingDataset::new(samples, sampling_seed, *bounds)
}
