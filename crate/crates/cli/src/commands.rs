use std::fs;
use std::path::{Path, PathBuf};

use ard_core::ard::{bus_report, compute_api, ArdCloud, BusApiReport, FeasibleAttackSet};
use ard_core::error::Error;
use ard_core::network::{analyze_bus, assess_bus, assess_mode, scr_proxy, Ranking};
use ard_core::surrogate::{
    fit_surrogate_with, generate_dataset, lhs_sample, ImpedanceSurrogate, RationalSurrogate, TrainingDataset,
    WhiteBoxSurrogate,
};
use serde::Serialize;

use crate::config::{demo_configs, Loaded, SurrogateMode};
use crate::{CliError, Format};

/// Validation error above which a fitted surrogate is refused.
pub const FIT_GATE: f64 = 0.05;

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::from)?;
    }
    fs::write(path, text).map_err(|e| CliError::Run(e.into()))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Run(e.into()))
}

pub fn dataset_dir(l: &Loaded, bus: u32) -> PathBuf {
    l.output_dir.join(format!("dataset_bus{bus}"))
}

pub fn surrogate_path(l: &Loaded, bus: u32) -> PathBuf {
    l.output_dir.join(format!("surrogate_bus{bus}.json"))
}

/// Echo of the config actually run, with targets resolved.
pub fn write_effective_config(l: &Loaded) -> Result<(), CliError> {
    let mut c = l.config.clone();
    c.targets = l.targets();
    write(&l.output_dir.join("effective_config.json"), &to_json(&c)?)
}

#[derive(Serialize)]
pub struct IdentifySummary {
    pub bus: u32,
    pub dataset: PathBuf,
    pub samples: usize,
    pub requested: usize,
}

pub fn identify(l: &Loaded, bus: u32) -> Result<IdentifySummary, CliError> {
    let c = &l.config;
    let bounds = c.training_bounds(&l.system, bus)?;
    let grid = c.grid.build().map_err(|e| CliError::Run(e.at("grid")))?;
    let builder = l.system.builder_for(bus).map_err(CliError::Run)?;
    let params = lhs_sample(&bounds, c.surrogate.dataset_size, c.surrogate.seed).map_err(|e| CliError::Run(e.at("lhs")))?;
    let d = generate_dataset(&builder, &params, &grid, c.surrogate.dataset_mode, &bounds, c.surrogate.seed)
        .map_err(|e| CliError::Run(e.at("dataset")))?;
    let dir = dataset_dir(l, bus);
    d.write(&dir).map_err(|e| CliError::Run(e.at("dataset")))?;
    Ok(IdentifySummary {
        bus,
        dataset: dir,
        samples: d.len(),
        requested: params.len(),
    })
}

#[derive(Serialize)]
pub struct FitSummary {
    pub bus: u32,
    pub surrogate: PathBuf,
    pub train_rms: f64,
    pub validation_rms: f64,
    pub n_coefficients: usize,
}

pub fn fit(l: &Loaded, bus: u32, dataset: Option<&Path>) -> Result<FitSummary, CliError> {
    let dir = dataset.map(Path::to_path_buf).unwrap_or_else(|| dataset_dir(l, bus));
    let d = TrainingDataset::read(&dir).map_err(|e| CliError::Run(e.at("dataset")))?;
    let s = fit_surrogate_with(&d, &l.config.fit_options()).map_err(|e| CliError::Run(e.at("fit")))?;
    let report = s.report.clone().expect("a fitted surrogate carries its report");
    if !(report.validation_rms <= FIT_GATE) {
        return Err(CliError::Gate(format!(
            "surrogate validation error {:.4} exceeds {FIT_GATE}",
            report.validation_rms
        )));
    }
    let path = surrogate_path(l, bus);
    write(&path, &s.to_json().map_err(CliError::Run)?)?;
    Ok(FitSummary {
        bus,
        surrogate: path,
        train_rms: report.train_rms,
        validation_rms: report.validation_rms,
        n_coefficients: report.n_coefficients,
    })
}

fn surrogate_for(l: &Loaded, bus: u32, omega: &FeasibleAttackSet) -> Result<Box<dyn ImpedanceSurrogate>, CliError> {
    match l.config.surrogate.mode {
        SurrogateMode::WhiteboxOracle => Ok(Box::new(WhiteBoxSurrogate::new(
            l.system.builder_for(bus).map_err(CliError::Run)?,
        ))),
        SurrogateMode::RationalFit => {
            let path = surrogate_path(l, bus);
            let text = fs::read_to_string(&path).map_err(|e| {
                CliError::Config(format!("{}: {e} (run `identify` and `fit` first)", path.display()))
            })?;
            let s = RationalSurrogate::from_json(&text).map_err(|e| CliError::Run(e.at("surrogate")))?;
            let dom = &s.normalization.bounds;
            for k in omega.active() {
                if omega.bounds.lo[k] < dom.lo[k] || omega.bounds.hi[k] > dom.hi[k] {
                    return Err(CliError::Run(
                        Error::SurrogateDomain(format!(
                            "attack box on {} leaves the surrogate training domain",
                            ard_core::dq::COORD_NAMES[k]
                        ))
                        .at("surrogate"),
                    ));
                }
            }
            Ok(Box::new(s))
        }
    }
}

pub struct BusResult {
    pub report: BusApiReport,
    /// `(mode index, cloud)` for every assessed mode.
    pub clouds: Vec<(usize, ArdCloud)>,
}

/// Assesses one bus, optionally restricted to a single mode.
pub fn assess(l: &Loaded, bus: u32, mode_index: Option<usize>, directions: Option<usize>) -> Result<BusResult, CliError> {
    let c = &l.config;
    let mut cfg = c.assess();
    if let Some(n) = directions {
        cfg.ard.directions = n;
    }
    let omega = c.omega(&l.system, bus)?;
    let stealth = c.stealth_model(&l.system);
    let f = surrogate_for(l, bus, &omega)?;
    let run = |e: Error| CliError::Run(e);
    match mode_index {
        None => {
            let a = assess_bus(&l.system, bus, &omega, &stealth, f.as_ref(), &cfg).map_err(run)?;
            Ok(BusResult {
                report: a.report,
                clouds: a.clouds.into_iter().enumerate().collect(),
            })
        }
        Some(k) => {
            let analysis = analyze_bus(&l.system, bus, f.as_ref(), &cfg).map_err(run)?;
            let Some(mode) = analysis.modes.get(k) else {
                return Err(CliError::Config(format!(
                    "mode index {k} out of range: bus {bus} has {} retained modes",
                    analysis.modes.len()
                )));
            };
            let cloud = assess_mode(&omega, &stealth, f.as_ref(), mode, &cfg).map_err(run)?;
            let api = compute_api(&cloud, cfg.api.grid_resolution).map_err(|e| run(e.at("api")))?;
            let report = bus_report(bus, vec![(*mode, api)], cfg.api.gamma).map_err(run)?;
            Ok(BusResult {
                report,
                clouds: vec![(k, cloud)],
            })
        }
    }
}

pub fn write_bus(dir: &Path, r: &BusResult) -> Result<(), CliError> {
    let bus = r.report.bus_id;
    for (k, cloud) in &r.clouds {
        cloud
            .write(dir, &format!("ard_bus{bus}_mode{k}"))
            .map_err(CliError::Run)?;
    }
    write(&dir.join(format!("api_bus{bus}.json")), &to_json(&r.report)?)
}

pub fn bus_summary_csv(r: &BusApiReport) -> String {
    let mut out = String::from("bus,mode,lambda0_re,lambda0_im,frequency_hz,participation,api,branch,critical\n");
    for (k, (m, a)) in r.per_mode.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.bus_id,
            k,
            m.lambda0.re,
            m.lambda0.im,
            m.frequency_hz,
            m.participation.norm(),
            a.value,
            a.branch.as_str(),
            k == r.critical_mode
        ));
    }
    out
}

#[derive(Serialize)]
pub struct RankReport<'a> {
    pub ranking: &'a Ranking,
    pub buses: Vec<&'a BusApiReport>,
}

pub fn rank(l: &Loaded) -> Result<(Ranking, Vec<BusApiReport>), CliError> {
    let mut reports = Vec::new();
    let mut scr = Vec::new();
    for bus in l.targets() {
        log::info!("assessing bus {bus}");
        let r = assess(l, bus, None, None)?;
        write_bus(&l.output_dir, &r)?;
        scr.push(scr_proxy(&l.system, bus).map_err(|e| CliError::Run(e.at("scr")))?);
        reports.push(r.report);
    }
    let ranking = Ranking::new(&reports, &scr);
    write(&l.output_dir.join("ranking.csv"), &ranking.to_csv())?;
    let report = RankReport {
        ranking: &ranking,
        buses: reports.iter().collect(),
    };
    write(&l.output_dir.join("rank_report.json"), &to_json(&report)?)?;
    Ok((ranking, reports))
}

pub fn print_ranking(r: &Ranking, reports: &[BusApiReport], format: Format) -> Result<(), CliError> {
    match format {
        Format::Csv => print!("{}", r.to_csv()),
        Format::Json => println!(
            "{}",
            to_json(&RankReport {
                ranking: r,
                buses: reports.iter().collect()
            })?
        ),
    }
    Ok(())
}

/// Writes the demo systems and configs under `out` and runs the pipeline on
/// each: surrogate identification and fit on the first target, then ranking.
pub fn demo(out: &Path, seed: Option<u64>, format: Format) -> Result<(), CliError> {
    for (name, sys, mut cfg) in demo_configs() {
        let dir = out.join(name);
        write(&dir.join("system.json"), &to_json(&sys)?)?;
        write(&dir.join("config.json"), &to_json(&cfg)?)?;
        if let Some(s) = seed {
            cfg.apply_seed(s);
        }
        let loaded = cfg.load(&dir.join("config.json"))?;
        write_effective_config(&loaded)?;
        if name == "four_bus" {
            let bus = loaded.targets()[0];
            let id = identify(&loaded, bus)?;
            eprintln!("{name}: dataset of {} spectra for bus {bus}", id.samples);
            let f = fit(&loaded, bus, None)?;
            eprintln!("{name}: surrogate validation error {:.4}", f.validation_rms);
        }
        let (ranking, reports) = rank(&loaded)?;
        eprintln!(
            "{name}: spearman {:.4}, {} discordant pairs",
            ranking.spearman,
            ranking.discordant.len()
        );
        if format == Format::Json {
            print_ranking(&ranking, &reports, format)?;
        } else {
            println!("# {name}");
            print!("{}", ranking.to_csv());
        }
    }
    Ok(())
}
