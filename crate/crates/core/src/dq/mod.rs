//! White-box dq-frame models: a grid-forming virtual synchronous generator,
//! Thevenin grid equivalents, their series interconnection and linear time
//! response. These are the ground truth every approximation is checked against.

mod interconnect;
mod response;
mod vsg;

pub use interconnect::{assemble_interconnection, assemble_with_perturbation, critical_pair};
pub use response::{linear_response, TimeSeries};
pub use vsg::{build_vsg_state_space, solve_steady_state, SteadyState, VsgBuilder};

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, to_complex, DqMatrix, C64};

/// Number of attack-relevant coordinates in a [`ParameterVector`].
pub const N_COORDS: usize = 9;

/// Coordinate names in array order: operating point first, then control parameters.
pub const COORD_NAMES: [&str; N_COORDS] = ["P0", "Q0", "V0", "J", "Dp", "Kq", "tau_q", "Rv", "Lv"];

/// Indices `0..3` are the operating point, `3..9` the control parameters.
pub const N_OP: usize = 3;

/// Angular-frequency evaluation grid (rad/s), strictly increasing and positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(Error::InvalidInput(format!(
                "frequency grid needs at least {} points, got {}",
                Self::MIN_POINTS,
                points.len()
            )));
        }
        if points.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidInput("frequency grid points must be finite and > 0".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("frequency grid must be strictly increasing".into()));
        }
        Ok(FrequencyGrid { points })
    }

    /// `n` logarithmically spaced points between `f_lo_hz` and `f_hi_hz`.
    pub fn log_spaced_hz(f_lo_hz: f64, f_hi_hz: f64, n: usize) -> Result<Self> {
        if !(f_lo_hz > 0.0 && f_hi_hz > f_lo_hz) || n < 2 {
            return Err(Error::InvalidInput(format!(
                "invalid band {f_lo_hz}..{f_hi_hz} Hz with {n} points"
            )));
        }
        let (a, b) = (f_lo_hz.ln(), f_hi_hz.ln());
        let pts = (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                2.0 * std::f64::consts::PI * (a + (b - a) * t).exp()
            })
            .collect();
        Self::new(pts)
    }

    /// 1-200 Hz, 400 log-spaced points.
    pub fn default_band() -> Self {
        Self::log_spaced_hz(1.0, 200.0, 400).expect("static band is valid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn omega_min(&self) -> f64 {
        self.points[0]
    }

    pub fn omega_max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

/// A dq matrix sampled on a frequency grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceSpectrum {
    pub grid: FrequencyGrid,
    pub values: Vec<DqMatrix>,
}

impl ImpedanceSpectrum {
    pub fn new(grid: FrequencyGrid, values: Vec<DqMatrix>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "spectrum has {} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        Ok(ImpedanceSpectrum { grid, values })
    }

    /// Sample any `s -> DqMatrix` map at `s = j omega` over a grid.
    pub fn from_fn<F>(grid: &FrequencyGrid, mut f: F) -> Result<Self>
    where
        F: FnMut(C64) -> Result<DqMatrix>,
    {
        let values = grid
            .points()
            .iter()
            .map(|&w| f(C64::new(0.0, w)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid.clone(), values)
    }

    /// Relative RMS distance `||self - other|| / ||other||` over all entries.
    pub fn relative_rms(&self, reference: &ImpedanceSpectrum) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in self.values.iter().zip(&reference.values) {
            num += (*a - *b).norm_fro().powi(2);
            den += b.norm_fro().powi(2);
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    pub fn map<F: Fn(&DqMatrix) -> DqMatrix>(&self, f: F) -> ImpedanceSpectrum {
        ImpedanceSpectrum {
            grid: self.grid.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

/// Steady-state operating point at the point of common coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Active power (W).
    pub p0: f64,
    /// Reactive power (var).
    pub q0: f64,
    /// PCC voltage magnitude (V, dq amplitude).
    pub v0: f64,
}

/// Tamperable VSG control parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Virtual inertia (W s^2/rad).
    pub j: f64,
    /// Damping (W s/rad).
    pub dp: f64,
    /// Reactive droop (V/var).
    pub kq: f64,
    /// Voltage-loop time constant (s).
    pub tau_q: f64,
    /// Virtual resistance (ohm).
    pub rv: f64,
    /// Virtual inductance (H).
    pub lv: f64,
}

/// Operating point plus control parameters: the domain of the
/// parameter-to-impedance map and of an attack action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub x_op: OperatingPoint,
    pub rho: ControlParams,
}

impl ParameterVector {
    pub fn to_array(&self) -> [f64; N_COORDS] {
        let (x, r) = (&self.x_op, &self.rho);
        [x.p0, x.q0, x.v0, r.j, r.dp, r.kq, r.tau_q, r.rv, r.lv]
    }

    pub fn from_array(a: &[f64; N_COORDS]) -> Self {
        ParameterVector {
            x_op: OperatingPoint { p0: a[0], q0: a[1], v0: a[2] },
            rho: ControlParams {
                j: a[3],
                dp: a[4],
                kq: a[5],
                tau_q: a[6],
                rv: a[7],
                lv: a[8],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("parameter vector has non-finite entries".into()));
        }
        let r = &self.rho;
        if !(r.j > 0.0 && r.dp >= 0.0 && r.tau_q > 0.0 && r.lv >= 0.0 && r.rv >= 0.0 && self.x_op.v0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "parameter vector violates J>0, Dp>=0, tau_q>0, Lv>=0, Rv>=0, V0>0: {a:?}"
            )));
        }
        Ok(())
    }
}

/// Per-coordinate closed intervals over a [`ParameterVector`]. A coordinate
/// with `lo == hi` is constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lo: [f64; N_COORDS],
    pub hi: [f64; N_COORDS],
}

impl ParamBounds {
    pub fn new(lo: [f64; N_COORDS], hi: [f64; N_COORDS]) -> Result<Self> {
        for k in 0..N_COORDS {
            if !(lo[k].is_finite() && hi[k].is_finite() && lo[k] <= hi[k]) {
                return Err(Error::InvalidInput(format!(
                    "bounds for {} must be finite with lo <= hi (got [{}, {}])",
                    COORD_NAMES[k], lo[k], hi[k]
                )));
            }
        }
        Ok(ParamBounds { lo, hi })
    }

    pub fn point(v: &ParameterVector) -> Self {
        let a = v.to_array();
        ParamBounds { lo: a, hi: a }
    }

    pub fn is_degenerate(&self, k: usize) -> bool {
        self.hi[k] <= self.lo[k]
    }

    pub fn width(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }

    pub fn contains(&self, v: &ParameterVector, rel_margin: f64) -> bool {
        let a = v.to_array();
        (0..N_COORDS).all(|k| {
            let m = rel_margin * self.width(k);
            a[k] >= self.lo[k] - m && a[k] <= self.hi[k] + m
        })
    }

    pub fn clamp(&self, a: &mut [f64; N_COORDS]) {
        for k in 0..N_COORDS {
            a[k] = a[k].clamp(self.lo[k], self.hi[k]);
        }
    }

    /// Affine image of `u` in `[0,1]^9`.
    pub fn from_unit(&self, u: &[f64; N_COORDS]) -> [f64; N_COORDS] {
        std::array::from_fn(|k| self.lo[k] + u[k] * self.width(k))
    }
}

/// Physical output filter of the inverter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub rf: f64,
    pub lf: f64,
}

/// Per-unit bases. Impedance base is `v_base^2 / s_base`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bases {
    pub s_base: f64,
    pub v_base: f64,
}

impl Bases {
    pub fn z_base(&self) -> f64 {
        self.v_base * self.v_base / self.s_base
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_base > 0.0 && self.v_base > 0.0) {
            return Err(Error::InvalidInput("bases must be positive".into()));
        }
        Ok(())
    }
}

/// Thevenin grid equivalent: an RL branch behind an ideal source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEquivalent {
    pub rg: f64,
    pub lg: f64,
    pub omega0: f64,
}

impl GridEquivalent {
    pub fn new(rg: f64, lg: f64, omega0: f64) -> Result<Self> {
        if !(rg >= 0.0 && lg > 0.0 && omega0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid equivalent requires Rg >= 0, Lg > 0, omega0 > 0 (got {rg}, {lg}, {omega0})"
            )));
        }
        Ok(GridEquivalent { rg, lg, omega0 })
    }

    pub fn impedance(&self, s: C64) -> DqMatrix {
        DqMatrix::series_rl(self.rg, self.lg, self.omega0, s)
    }

    /// Static realization: `Z(s) = D + s E`.
    pub fn to_state_space(&self) -> StateSpaceModel {
        let x = self.omega0 * self.lg;
        let d = DMatrix::from_row_slice(2, 2, &[self.rg, -x, x, self.rg]);
        let e = DMatrix::from_row_slice(2, 2, &[self.lg, 0.0, 0.0, self.lg]);
        StateSpaceModel::static_gain(d, e)
    }
}

/// Linear state-space realization `Z(s) = C (sI - A)^-1 B + D + s E`.
///
/// The `E` term carries series inductance seen directly at the terminals;
/// it is zero for strictly proper or biproper models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub output_labels: Vec<String>,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        e: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        let (m, p) = (b.ncols(), c.nrows());
        let e = e.unwrap_or_else(|| DMatrix::zeros(p, m));
        let ok = a.ncols() == n
            && b.nrows() == n
            && c.ncols() == n
            && d.nrows() == p
            && d.ncols() == m
            && e.nrows() == p
            && e.ncols() == m;
        if !ok {
            return Err(Error::InvalidInput(format!(
                "inconsistent dimensions A {}x{}, B {}x{}, C {}x{}, D {}x{}, E {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols(),
                e.nrows(),
                e.ncols()
            )));
        }
        Ok(StateSpaceModel {
            state_labels: (0..n).map(|i| format!("x{i}")).collect(),
            input_labels: (0..m).map(|i| format!("u{i}")).collect(),
            output_labels: (0..p).map(|i| format!("y{i}")).collect(),
            a,
            b,
            c,
            d,
            e,
        })
    }

    pub fn static_gain(d: DMatrix<f64>, e: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        StateSpaceModel::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, m), DMatrix::zeros(p, 0), d, Some(e))
            .expect("static model dimensions are consistent")
    }

    pub fn with_labels(mut self, states: &[&str], inputs: &[&str], outputs: &[&str]) -> Self {
        self.state_labels = states.iter().map(|s| s.to_string()).collect();
        self.input_labels = inputs.iter().map(|s| s.to_string()).collect();
        self.output_labels = outputs.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        eigenvalues(&self.a)
    }

    /// Transfer matrix at complex frequency `s` (any dimensions).
    pub fn transfer(&self, s: C64) -> Result<DMatrix<C64>> {
        let n = self.n_states();
        let mut g = to_complex(&self.d) + to_complex(&self.e) * s;
        if n > 0 {
            let tol = 1e-9 * self.a.norm().max(f64::MIN_POSITIVE);
            let nearest = self
                .eigenvalues()
                .iter()
                .map(|l| (l - s).norm())
                .fold(f64::INFINITY, f64::min);
            if nearest <= tol {
                return Err(Error::NearSingularEvaluation { re: s.re, im: s.im, distance: nearest });
            }
            let resolvent = DMatrix::<C64>::identity(n, n) * s - to_complex(&self.a);
            let x = resolvent
                .lu()
                .solve(&to_complex(&self.b))
                .ok_or(Error::NearSingularEvaluation { re: s.re, im: s.im, distance: nearest })?;
            g += to_complex(&self.c) * x;
        }
        Ok(g)
    }
}

/// Evaluate a 2-input/2-output model, `dv = Z(s) di`, at complex frequency `s`.
pub fn evaluate_impedance(model: &StateSpaceModel, s: C64) -> Result<DqMatrix> {
    if model.n_inputs() != 2 || model.n_outputs() != 2 {
        return Err(Error::InvalidInput(format!(
            "impedance model must be 2x2, got {}x{}",
            model.n_outputs(),
            model.n_inputs()
        )));
    }
    let g = model.transfer(s)?;
    let z = DqMatrix(Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]));
    if !z.is_finite() {
        return Err(Error::NearSingularEvaluation { re: s.re, im: s.im, distance: 0.0 });
    }
    Ok(z)
}

/// Analytic grid impedance on a frequency grid.
pub fn grid_impedance_spectrum(g: &GridEquivalent, grid: &FrequencyGrid) -> ImpedanceSpectrum {
    ImpedanceSpectrum {
        grid: grid.clone(),
        values: grid.points().iter().map(|&w| g.impedance(C64::new(0.0, w))).collect(),
    }
}

/// Impedance spectrum of a state-space model on a grid.
pub fn model_spectrum(model: &StateSpaceModel, grid: &FrequencyGrid) -> Result<ImpedanceSpectrum> {
    ImpedanceSpectrum::from_fn(grid, |s| evaluate_impedance(model, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_identity_model() {
        let m = StateSpaceModel::static_gain(DMatrix::identity(2, 2), DMatrix::zeros(2, 2));
        let z = evaluate_impedance(&m, C64::new(3.0, -7.0)).unwrap();
        assert_eq!(z, DqMatrix::identity());
    }

    #[test]
    fn grid_equivalent_dc_value() {
        let g = GridEquivalent::new(0.1, 0.5 / 314.0, 314.0).unwrap();
        let z = evaluate_impedance(&g.to_state_space(), C64::new(0.0, 0.0)).unwrap();
        let want = DqMatrix::new(
            C64::new(0.1, 0.0),
            C64::new(-0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.1, 0.0),
        );
        assert!((z - want).norm_fro() < 1e-15);
    }

    #[test]
    fn grid_spectrum_low_frequency_and_magnitude() {
        let g = GridEquivalent::new(0.1, 0.5 / 314.0, 314.0).unwrap();
        let grid = FrequencyGrid::new((1..=8).map(|k| k as f64 * 1e-9).collect()).unwrap();
        let sp = grid_impedance_spectrum(&g, &grid);
        let z = sp.values[0];
        assert!((z.get(0, 0) - C64::new(0.1, 0.0)).norm() < 1e-9);
        assert!((z.get(0, 1) - C64::new(-0.5, 0.0)).norm() < 1e-12);
        assert!((z.get(1, 0) - C64::new(0.5, 0.0)).norm() < 1e-12);

        let z = g.impedance(C64::new(0.0, 314.0));
        let want = (0.1f64.powi(2) + 0.5f64.powi(2)).sqrt();
        assert!((z.get(0, 0).norm() - want).abs() < 1e-12);
    }

    #[test]
    fn zero_inductance_grid_rejected() {
        assert!(GridEquivalent::new(0.1, 0.0, 314.0).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::new(vec![1.0; 3]).is_err());
        assert!(FrequencyGrid::new((1..=8).rev().map(|k| k as f64).collect()).is_err());
        let g = FrequencyGrid::default_band();
        assert_eq!(g.len(), 400);
        assert!((g.omega_min() - 2.0 * std::f64::consts::PI).abs() < 1e-9);
        assert!((g.omega_max() - 400.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn near_eigenvalue_evaluation_errors() {
        let a = DMatrix::from_row_slice(1, 1, &[-2.0]);
        let m = StateSpaceModel::new(
            a,
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::zeros(2, 2),
            None,
        )
        .unwrap();
        assert!(matches!(
            evaluate_impedance(&m, C64::new(-2.0, 0.0)),
            Err(Error::NearSingularEvaluation { .. })
        ));
        assert!(evaluate_impedance(&m, C64::new(-2.0, 1e-3)).is_ok());
    }
}
