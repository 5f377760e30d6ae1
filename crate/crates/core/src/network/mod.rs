//! Multi-bus networks: nodal admittance, per-bus Thevenin reduction, a
//! short-circuit-ratio proxy and the per-bus assessment pipeline.

pub mod demo;
mod pipeline;
mod rank;
mod system;

pub use pipeline::{
    analyze_bus, assess_bus, assess_mode, ApiSpec, ArdSpec, AssessConfig, BusAssessment, GridSpec, ModalAnalysis,
    ModeSpec, VectorFitSpec,
};
pub use rank::{spearman, DiscordantPair, Ranking, RankingRow};
pub use system::{
    nodal_admittance, scr_proxy, thevenin_at, thevenin_impedance, Branch, Bus, BusType, IbrInclusion, IbrUnit,
    NodalAdmittance, Shunt, SystemDescription, TheveninEquivalent, SYSTEM_FORMAT_VERSION,
};
