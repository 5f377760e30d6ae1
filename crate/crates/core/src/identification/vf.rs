//! Vector fitting of a 2x2 frequency response with a common pole set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dq::ImpedanceSpectrum;
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, DqMatrix, C64, J};

/// Fit error above which the result is flagged as poor.
pub const POOR_FIT_THRESHOLD: f64 = 1e-3;
const STALL_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-10;

/// `Y(s) = sum_k R_k / (s - p_k) + D + s E`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleResidueModel {
    pub poles: Vec<C64>,
    pub residues: Vec<DqMatrix>,
    pub feedthrough: DqMatrix,
    #[serde(default)]
    pub linear: Option<DqMatrix>,
}

impl PoleResidueModel {
    pub fn new(poles: Vec<C64>, residues: Vec<DqMatrix>, feedthrough: DqMatrix, linear: Option<DqMatrix>) -> Result<Self> {
        if poles.len() != residues.len() {
            return Err(Error::InvalidInput("one residue per pole required".into()));
        }
        let m = PoleResidueModel {
            poles,
            residues,
            feedthrough,
            linear,
        };
        m.check_conjugate_closure()?;
        Ok(m)
    }

    fn check_conjugate_closure(&self) -> Result<()> {
        for (k, p) in self.poles.iter().enumerate() {
            if p.im == 0.0 {
                continue;
            }
            let tol = 1e-9 * p.norm();
            let partner = self
                .poles
                .iter()
                .enumerate()
                .find(|(i, q)| *i != k && (**q - p.conj()).norm() <= tol);
            match partner {
                Some((i, _)) => {
                    let rtol = 1e-9 * self.residues[k].norm_fro().max(1e-300);
                    if (self.residues[i] - self.residues[k].conj()).norm_fro() > rtol.max(1e-12) {
                        return Err(Error::InvalidInput("conjugate poles need conjugate residues".into()));
                    }
                }
                None => {
                    return Err(Error::InvalidInput(format!("pole {p} lacks its conjugate partner")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: C64) -> DqMatrix {
        let mut y = self.feedthrough;
        for (p, r) in self.poles.iter().zip(&self.residues) {
            y = y + r.scale(C64::new(1.0, 0.0) / (s - p));
        }
        if let Some(e) = self.linear {
            y = y + e.scale(s);
        }
        y
    }

    pub fn spectrum(&self, grid: &crate::dq::FrequencyGrid) -> Result<ImpedanceSpectrum> {
        ImpedanceSpectrum::from_fn(grid, |s| Ok(self.eval(s)))
    }

    /// Index of the pole matching `lambda` within `rel_tol` relative distance.
    pub fn find_pole(&self, lambda: C64, rel_tol: f64) -> Option<usize> {
        self.poles
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - lambda).norm()))
            .filter(|(_, d)| *d <= rel_tol * lambda.norm().max(f64::MIN_POSITIVE))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFit {
    pub model: PoleResidueModel,
    /// Relative RMS error over all samples and entries.
    pub rms_error: f64,
    pub iterations: usize,
    pub poor_fit: bool,
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Real(f64),
    // pole with positive imaginary part
    Pair(C64),
}

fn slots(poles: &[C64]) -> Vec<Slot> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < poles.len() {
        let p = poles[k];
        if p.im == 0.0 {
            out.push(Slot::Real(p.re));
            k += 1;
        } else {
            out.push(Slot::Pair(C64::new(p.re, p.im.abs())));
            k += 2;
        }
    }
    out
}

fn n_real(slots: &[Slot]) -> usize {
    slots.iter().map(|s| if matches!(s, Slot::Real(_)) { 1 } else { 2 }).sum()
}

/// Real-coefficient basis values at `s`.
fn basis(slots: &[Slot], s: C64) -> Vec<C64> {
    let mut out = Vec::with_capacity(n_real(slots));
    for sl in slots {
        match *sl {
            Slot::Real(a) => out.push(C64::new(1.0, 0.0) / (s - a)),
            Slot::Pair(a) => {
                let u = C64::new(1.0, 0.0) / (s - a);
                let v = C64::new(1.0, 0.0) / (s - a.conj());
                out.push(u + v);
                out.push(J * u - J * v);
            }
        }
    }
    out
}

fn column_scale(m: &mut DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|c| {
            let n = m.column(c).norm();
            let k = if n > 0.0 { 1.0 / n } else { 1.0 };
            m.column_mut(c).scale_mut(k);
            k
        })
        .collect()
}

/// Minimum-norm least squares with singular values below `RANK_TOL * max(1, s_max)` dropped.
fn lstsq(m: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    if !smax.is_finite() {
        return Err(Error::Conditioning("non-finite least-squares system".into()));
    }
    let x = svd
        .solve(b, RANK_TOL * smax.max(1.0))
        .map_err(|e| Error::Conditioning(e.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("non-finite least-squares solution".into()));
    }
    Ok(x)
}

fn entries(y: &ImpedanceSpectrum, e: usize) -> Vec<C64> {
    y.values.iter().map(|m| m.get(e / 2, e % 2)).collect()
}

/// Residues and feedthrough for fixed poles; returns the model and its
/// relative RMS error.
fn fit_residues(y: &ImpedanceSpectrum, poles: &[C64]) -> Result<(PoleResidueModel, f64)> {
    let sl = slots(poles);
    let nb = n_real(&sl);
    let pts = y.grid.points();
    let k = pts.len();
    let mut a = DMatrix::<f64>::zeros(2 * k, nb + 1);
    for (i, &w) in pts.iter().enumerate() {
        let phi = basis(&sl, C64::new(0.0, w));
        for (c, v) in phi.iter().enumerate() {
            a[(i, c)] = v.re;
            a[(k + i, c)] = v.im;
        }
        a[(i, nb)] = 1.0;
    }
    let scale = column_scale(&mut a);
    let mut coef = vec![[0.0; 4]; nb + 1];
    for e in 0..4 {
        let f = entries(y, e);
        let b = DVector::from_iterator(2 * k, f.iter().map(|z| z.re).chain(f.iter().map(|z| z.im)));
        let x = lstsq(a.clone(), &b)?;
        for c in 0..=nb {
            coef[c][e] = x[c] * scale[c];
        }
    }
    let to_dq = |v: [C64; 4]| DqMatrix::new(v[0], v[1], v[2], v[3]);
    let mut out_poles = Vec::new();
    let mut residues = Vec::new();
    let mut c = 0;
    for s in &sl {
        match *s {
            Slot::Real(p) => {
                out_poles.push(C64::new(p, 0.0));
                residues.push(to_dq(coef[c].map(|x| C64::new(x, 0.0))));
                c += 1;
            }
            Slot::Pair(p) => {
                let mut r = [C64::new(0.0, 0.0); 4];
                for e in 0..4 {
                    r[e] = C64::new(coef[c][e], coef[c + 1][e]);
                }
                let r = to_dq(r);
                out_poles.push(p);
                residues.push(r);
                out_poles.push(p.conj());
                residues.push(r.conj());
                c += 2;
            }
        }
    }
    let d = to_dq(coef[nb].map(|x| C64::new(x, 0.0)));
    let model = PoleResidueModel::new(out_poles, residues, d, None)?;
    let err = model.spectrum(&y.grid)?.relative_rms(y);
    Ok((model, err))
}

/// One pole relocation step.
fn relocate(y: &ImpedanceSpectrum, poles: &[C64]) -> Result<Vec<C64>> {
    let sl = slots(poles);
    let nb = n_real(&sl);
    let pts = y.grid.points();
    let k = pts.len();
    let phis: Vec<Vec<C64>> = pts.iter().map(|&w| basis(&sl, C64::new(0.0, w))).collect();

    // per entry: [phi, 1 | -f phi] x = f; keep the block acting on the sigma coefficients
    let mut reduced = DMatrix::<f64>::zeros(4 * nb, nb);
    let mut rhs = DVector::<f64>::zeros(4 * nb);
    for e in 0..4 {
        let f = entries(y, e);
        let mut m = DMatrix::<f64>::zeros(2 * k, 2 * nb + 1);
        for i in 0..k {
            for c in 0..nb {
                let p = phis[i][c];
                let q = -f[i] * p;
                m[(i, c)] = p.re;
                m[(k + i, c)] = p.im;
                m[(i, nb + 1 + c)] = q.re;
                m[(k + i, nb + 1 + c)] = q.im;
            }
            m[(i, nb)] = 1.0;
        }
        let b = DVector::from_iterator(2 * k, f.iter().map(|z| z.re).chain(f.iter().map(|z| z.im)));
        let scale = column_scale(&mut m);
        let qr = m.qr();
        let r = qr.r();
        let qtb = qr.q().transpose() * &b;
        for row in 0..nb {
            for c in 0..nb {
                reduced[(e * nb + row, c)] = r[(nb + 1 + row, nb + 1 + c)] / scale[nb + 1 + c];
            }
            rhs[e * nb + row] = qtb[nb + 1 + row];
        }
    }
    let cs = column_scale(&mut reduced);
    let mut ct = lstsq(reduced, &rhs)?;
    for (v, s) in ct.iter_mut().zip(&cs) {
        *v *= s;
    }

    // zeros of sigma(s) = 1 + sum ct_b phi_b(s)
    let mut a = DMatrix::<f64>::zeros(nb, nb);
    let mut bvec = DVector::<f64>::zeros(nb);
    let mut c = 0;
    for s in &sl {
        match *s {
            Slot::Real(p) => {
                a[(c, c)] = p;
                bvec[c] = 1.0;
                c += 1;
            }
            Slot::Pair(p) => {
                a[(c, c)] = p.re;
                a[(c, c + 1)] = p.im;
                a[(c + 1, c)] = -p.im;
                a[(c + 1, c + 1)] = p.re;
                bvec[c] = 2.0;
                c += 2;
            }
        }
    }
    let h = a - &bvec * ct.transpose();
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("non-finite relocation matrix".into()));
    }
    Ok(eigenvalues(&h))
}

fn starting_poles(y: &ImpedanceSpectrum, n_poles: usize) -> Vec<C64> {
    let (lo, hi) = (y.grid.omega_min(), y.grid.omega_max());
    let pairs = n_poles / 2;
    let mut out = Vec::with_capacity(n_poles);
    for k in 0..pairs {
        let b = if pairs == 1 {
            (lo * hi).sqrt()
        } else {
            lo * (hi / lo).powf(k as f64 / (pairs - 1) as f64)
        };
        let p = C64::new(-b / 100.0, b);
        out.push(p);
        out.push(p.conj());
    }
    out
}

/// Fits `n_poles` common poles to all four entries of `y`. Unstable poles are
/// kept as found.
pub fn vector_fit(y: &ImpedanceSpectrum, n_poles: usize, n_iter: usize) -> Result<VectorFit> {
    if n_poles == 0 || n_poles % 2 != 0 {
        return Err(Error::InvalidInput(format!("n_poles must be even and positive, got {n_poles}")));
    }
    if n_poles > y.grid.len() / 2 {
        return Err(Error::InvalidInput(format!(
            "n_poles {n_poles} exceeds half the number of frequency points ({})",
            y.grid.len()
        )));
    }
    if y.values.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidInput("spectrum contains non-finite samples".into()));
    }
    let mut poles = starting_poles(y, n_poles);
    let (mut best, mut err) = fit_residues(y, &poles)?;
    let mut iterations = 0;
    for _ in 0..n_iter {
        iterations += 1;
        poles = relocate(y, &poles)?;
        let (model, e) = fit_residues(y, &poles)?;
        let prev = err;
        best = model;
        err = e;
        if err == 0.0 || (prev - err).abs() < STALL_TOL * prev {
            break;
        }
    }
    let poor_fit = !(err <= POOR_FIT_THRESHOLD);
    if poor_fit {
        log::warn!("vector fit error {err:.3e} after {iterations} iterations");
    }
    Ok(VectorFit {
        model: best,
        rms_error: err,
        iterations,
        poor_fit,
    })
}
