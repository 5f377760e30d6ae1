use serde::{Deserialize, Serialize};

use super::PoleResidueModel;
use crate::dq::ImpedanceSpectrum;
use crate::error::{Error, Result};
use crate::linalg::{DqMatrix, C64};

/// Relative distance under which a value is taken to be a pole of a model.
pub const POLE_MATCH_TOL: f64 = 1e-6;
/// Poles whose residue norm is below this fraction of the largest residue are
/// treated as numerical artefacts when selecting modes.
pub const RESIDUE_SIGNIFICANCE: f64 = 1e-6;
/// Condition number above which `Z_inv + Z_g` counts as singular.
pub const RESONANCE_CONDITION: f64 = 1e12;

/// Eigenvalue sensitivity to an impedance perturbation: `dlambda = <P, dZ>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipationFactor {
    pub p: DqMatrix,
}

impl ParticipationFactor {
    /// First-order drift `sum conj(P_mn) dZ_mn`.
    pub fn drift(&self, dz: &DqMatrix) -> C64 {
        self.p.inner(dz)
    }

    pub fn norm(&self) -> f64 {
        self.p.norm_fro()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub lambda0: C64,
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    pub participation: ParticipationFactor,
}

impl Mode {
    pub fn new(lambda0: C64, participation: ParticipationFactor) -> Self {
        Mode {
            lambda0,
            frequency_hz: lambda0.im / (2.0 * std::f64::consts::PI),
            damping_ratio: -lambda0.re / lambda0.norm(),
            participation,
        }
    }
}

/// `Y_sys = (Z_inv + Z_g)^-1` at each grid point.
pub fn assemble_admittance(z_inv: &ImpedanceSpectrum, z_g: &ImpedanceSpectrum) -> Result<ImpedanceSpectrum> {
    if z_inv.grid != z_g.grid {
        return Err(Error::InvalidInput("impedance spectra use different grids".into()));
    }
    let mut out = Vec::with_capacity(z_inv.values.len());
    for ((a, b), &w) in z_inv.values.iter().zip(&z_g.values).zip(z_inv.grid.points()) {
        let sum = *a + *b;
        let cond = sum.condition();
        if !(cond <= RESONANCE_CONDITION) {
            return Err(Error::NearResonance { omega: w, condition: cond });
        }
        out.push(sum.inverse().ok_or(Error::NearResonance { omega: w, condition: cond })?);
    }
    ImpedanceSpectrum::new(z_inv.grid.clone(), out)
}

/// `P = -R^H` where `R` is the residue of `Y_sys` at `lambda0`.
pub fn participation_factor(m: &PoleResidueModel, lambda0: C64) -> Result<ParticipationFactor> {
    let k = m.find_pole(lambda0, POLE_MATCH_TOL).ok_or(Error::UnknownMode {
        re: lambda0.re,
        im: lambda0.im,
    })?;
    Ok(ParticipationFactor {
        p: -m.residues[k].adjoint(),
    })
}

/// Oscillatory poles with frequency in `band_hz`, most critical first.
pub fn select_critical_modes(m: &PoleResidueModel, band_hz: (f64, f64), top_k: usize) -> Result<Vec<Mode>> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let rmax = m.residues.iter().map(|r| r.norm_fro()).fold(0.0, f64::max);
    let mut cand: Vec<C64> = m
        .poles
        .iter()
        .zip(&m.residues)
        .filter(|(p, r)| {
            p.im > two_pi * band_hz.0 && p.im <= two_pi * band_hz.1 && r.norm_fro() >= RESIDUE_SIGNIFICANCE * rmax
        })
        .map(|(p, _)| *p)
        .collect();
    cand.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    cand.truncate(top_k);
    if cand.is_empty() {
        log::info!("no oscillatory pole in {:.1}-{:.1} Hz", band_hz.0, band_hz.1);
    }
    cand.into_iter()
        .map(|p| Ok(Mode::new(p, participation_factor(m, p)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dq::FrequencyGrid;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn model(poles: &[C64]) -> PoleResidueModel {
        let mut p = Vec::new();
        let mut r = Vec::new();
        for &x in poles {
            if x.im == 0.0 {
                p.push(x);
                r.push(DqMatrix::identity());
            } else {
                let res = DqMatrix::identity().scale(c(1.0, 0.5));
                p.push(x);
                r.push(res);
                p.push(x.conj());
                r.push(res.conj());
            }
        }
        PoleResidueModel::new(p, r, DqMatrix::zeros(), None).unwrap()
    }

    #[test]
    fn identity_residue_gives_negative_identity() {
        let m = PoleResidueModel::new(vec![c(-2.0, 0.0)], vec![DqMatrix::identity()], DqMatrix::zeros(), None).unwrap();
        let pf = participation_factor(&m, c(-2.0, 0.0)).unwrap();
        assert_eq!(pf.p, -DqMatrix::identity());
    }

    #[test]
    fn pairing_of_diagonal_perturbation() {
        let pf = ParticipationFactor { p: DqMatrix::identity() };
        let dz = DqMatrix::new(c(0.3, 0.1), c(0.0, 0.0), c(0.0, 0.0), c(-0.2, 0.4));
        let d = pf.drift(&dz);
        assert!((d - c(0.1, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn unknown_pole_rejected() {
        let m = model(&[c(-1.0, 100.0)]);
        assert!(matches!(participation_factor(&m, c(-1.0, 101.0)), Err(Error::UnknownMode { .. })));
    }

    #[test]
    fn single_pair_in_band() {
        let w = 2.0 * std::f64::consts::PI * 20.0;
        let m = model(&[c(-1.0, w), c(-50.0, 0.0)]);
        let modes = select_critical_modes(&m, (5.0, 100.0), 2).unwrap();
        assert_eq!(modes.len(), 1);
        assert_eq!(modes[0].lambda0, c(-1.0, w));
        assert!((modes[0].frequency_hz - 20.0).abs() < 1e-12);
    }

    #[test]
    fn modes_sorted_by_real_part() {
        let m = model(&[c(-3.0, 200.0), c(-1.0, 150.0)]);
        let modes = select_critical_modes(&m, (5.0, 100.0), 5).unwrap();
        assert_eq!(modes.len(), 2);
        assert_eq!(modes[0].lambda0.re, -1.0);
        assert_eq!(modes[1].lambda0.re, -3.0);
    }

    #[test]
    fn half_plus_half_is_identity() {
        let grid = FrequencyGrid::log_spaced_hz(1.0, 100.0, 16).unwrap();
        let half = ImpedanceSpectrum::from_fn(&grid, |_| Ok(DqMatrix::identity().scale(c(0.5, 0.0)))).unwrap();
        let y = assemble_admittance(&half, &half).unwrap();
        for v in &y.values {
            assert!((*v - DqMatrix::identity()).norm_fro() < 1e-15);
        }
    }

    #[test]
    fn singular_sum_names_frequency() {
        let grid = FrequencyGrid::log_spaced_hz(1.0, 100.0, 16).unwrap();
        let bad = grid.points()[5];
        let z = ImpedanceSpectrum::from_fn(&grid, |s| {
            Ok(if (s.im - bad).abs() < 1e-12 {
                DqMatrix::unit(0, 0)
            } else {
                DqMatrix::identity()
            })
        })
        .unwrap();
        let zero = ImpedanceSpectrum::from_fn(&grid, |_| Ok(DqMatrix::zeros())).unwrap();
        match assemble_admittance(&z, &zero) {
            Err(Error::NearResonance { omega, .. }) => assert_eq!(omega, bad),
            other => panic!("unexpected {other:?}"),
        }
    }
}
