//! Gray-box identification: ERA on transient records, vector fitting of the
//! system admittance, critical modes and participation factors.

mod era;
mod modes;
mod records;
mod vf;

pub use era::{era_identify, era_identify_with, EraConfig, EraReport, ModelOrder, AUTO_ORDER_THRESHOLD};
pub use modes::{
    assemble_admittance, participation_factor, select_critical_modes, Mode, ParticipationFactor, POLE_MATCH_TOL,
    RESIDUE_SIGNIFICANCE, RESONANCE_CONDITION,
};
pub use records::{simulate_piecewise_linear, synthesize_transients, TransientRecord, MIN_RECORD_LEN};
pub use vf::{vector_fit, PoleResidueModel, VectorFit, POOR_FIT_THRESHOLD};
