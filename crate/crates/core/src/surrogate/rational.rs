//! Rational surrogate `Z_mn = x^T A_mn(rho) x / x^T A_0(rho) x`.
//!
//! `x` is the monomial basis over the normalized complex frequency and the
//! normalized operating-point coordinates; each entry of the symmetric
//! matrices `A` is a polynomial in the normalized control parameters. The fit
//! works on the equivalent canonical form (one coefficient per product
//! monomial and parameter monomial) and writes the result back into
//! symmetric matrices.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::poly::{degree, deriv_real, eval_real, monomials, power_table};
use super::{ImpedanceSurrogate, TrainingDataset};
use crate::dq::{ParamBounds, ParameterVector, N_COORDS, N_OP};
use crate::error::{Error, Result};
use crate::linalg::{DqMatrix, C64};

pub const SURROGATE_FORMAT_VERSION: u32 = 1;
const EVAL_SINGULARITY: f64 = 1e-9;
const LATTICE_MARGIN: f64 = 1e-6;
const EXTRAPOLATION_MARGIN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_rms: f64,
    pub validation_rms: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_coefficients: usize,
    pub sk_iterations: usize,
    pub ridge: f64,
    pub split_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub basis_degree: usize,
    pub rho_degree: usize,
    pub ridge: f64,
    /// Reweighting passes after the initial unweighted solve.
    pub sk_iterations: usize,
    pub validation_fraction: f64,
    pub split_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            basis_degree: 2,
            rho_degree: 2,
            ridge: 1e-10,
            sk_iterations: 5,
            validation_fraction: 0.2,
            split_seed: 0,
        }
    }
}

/// Coordinate-wise affine maps onto `[-1, 1]` and the frequency scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub bounds: ParamBounds,
    /// `s_hat = s / s_scale`.
    pub s_scale: f64,
}

impl Normalization {
    fn y(&self, a: &[f64; N_COORDS], k: usize) -> f64 {
        let b = &self.bounds;
        2.0 * (a[k] - b.lo[k]) / b.width(k) - 1.0
    }

    fn dy(&self, k: usize) -> f64 {
        2.0 / self.bounds.width(k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalSurrogate {
    pub format_version: u32,
    pub basis_degree: usize,
    pub rho_degree: usize,
    pub normalization: Normalization,
    /// Operating-point coordinates present in `x` (after the frequency).
    pub x_vars: Vec<usize>,
    /// Exponents over `[s_hat, x_vars..]`.
    pub x_basis: Vec<Vec<u8>>,
    pub rho_vars: Vec<usize>,
    pub rho_basis: Vec<Vec<u8>>,
    /// Numerators in `dd, dq, qd, qq` order; one symmetric matrix per `rho` monomial.
    pub a: [Vec<DMatrix<f64>>; 4],
    pub a0: Vec<DMatrix<f64>>,
    /// RMS of `|x^T A_0 x|` over the training data.
    pub denominator_scale: f64,
    pub report: Option<FitReport>,
}

struct Parts {
    x: Vec<C64>,
    r: Vec<f64>,
    // d x / d y_p for each x variable p (frequency excluded)
    dx: Vec<Vec<C64>>,
    // d r / d y_q for each rho variable q
    dr: Vec<Vec<f64>>,
}

impl RationalSurrogate {
    /// Zero-coefficient surrogate with the basis implied by `bounds`:
    /// coordinates with degenerate bounds are left out.
    pub fn structure(bounds: &ParamBounds, s_scale: f64, basis_degree: usize, rho_degree: usize) -> Result<Self> {
        if !(s_scale > 0.0 && s_scale.is_finite()) {
            return Err(Error::InvalidInput("frequency scale must be positive".into()));
        }
        let x_vars: Vec<usize> = (0..N_OP).filter(|&k| !bounds.is_degenerate(k)).collect();
        let rho_vars: Vec<usize> = (N_OP..N_COORDS).filter(|&k| !bounds.is_degenerate(k)).collect();
        let x_basis = monomials(1 + x_vars.len(), basis_degree);
        let rho_basis = monomials(rho_vars.len(), rho_degree);
        let zero = vec![DMatrix::zeros(x_basis.len(), x_basis.len()); rho_basis.len()];
        Ok(RationalSurrogate {
            format_version: SURROGATE_FORMAT_VERSION,
            basis_degree,
            rho_degree,
            normalization: Normalization {
                bounds: *bounds,
                s_scale,
            },
            x_vars,
            x_basis,
            rho_vars,
            rho_basis,
            a: [zero.clone(), zero.clone(), zero.clone(), zero.clone()],
            a0: zero,
            denominator_scale: 1.0,
            report: None,
        })
    }

    pub fn n_coefficients(&self) -> usize {
        let nx = self.x_basis.len();
        5 * self.rho_basis.len() * nx * (nx + 1) / 2
    }

    /// True if `v` lies within the training bounds expanded by 10%.
    pub fn in_domain(&self, v: &ParameterVector) -> bool {
        self.normalization.bounds.contains(v, EXTRAPOLATION_MARGIN)
    }

    fn parts(&self, v: &ParameterVector, s: C64, with_grad: bool) -> Parts {
        let a = v.to_array();
        let n = &self.normalization;
        let sh = s / n.s_scale;
        let yx: Vec<f64> = self.x_vars.iter().map(|&k| n.y(&a, k)).collect();
        let yr: Vec<f64> = self.rho_vars.iter().map(|&k| n.y(&a, k)).collect();
        let pw_x = power_table(&yx, self.basis_degree);
        let pw_r = power_table(&yr, self.rho_degree);
        let mut s_pow = vec![C64::new(1.0, 0.0); self.basis_degree + 1];
        for k in 1..s_pow.len() {
            s_pow[k] = s_pow[k - 1] * sh;
        }
        let x: Vec<C64> = self
            .x_basis
            .iter()
            .map(|m| s_pow[m[0] as usize] * eval_real(&m[1..], &pw_x))
            .collect();
        let r: Vec<f64> = self.rho_basis.iter().map(|m| eval_real(m, &pw_r)).collect();
        let (mut dx, mut dr) = (Vec::new(), Vec::new());
        if with_grad {
            dx = (0..self.x_vars.len())
                .map(|p| {
                    self.x_basis
                        .iter()
                        .map(|m| s_pow[m[0] as usize] * deriv_real(&m[1..], &pw_x, p))
                        .collect()
                })
                .collect();
            dr = (0..self.rho_vars.len())
                .map(|q| self.rho_basis.iter().map(|m| deriv_real(m, &pw_r, q)).collect())
                .collect();
        }
        Parts { x, r, dx, dr }
    }

    fn quad(m: &DMatrix<f64>, x: &[C64]) -> C64 {
        let n = x.len();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for j in 0..n {
                row += x[j] * m[(i, j)];
            }
            acc += x[i] * row;
        }
        acc
    }

    fn value(tensor: &[DMatrix<f64>], p: &Parts) -> C64 {
        tensor
            .iter()
            .zip(&p.r)
            .filter(|(_, &r)| r != 0.0)
            .map(|(m, &r)| Self::quad(m, &p.x) * r)
            .sum()
    }

    /// Value and derivative with respect to every normalized active variable
    /// (x variables first, then rho variables).
    fn value_grad(&self, tensor: &[DMatrix<f64>], p: &Parts) -> (C64, Vec<C64>) {
        let nx = p.x.len();
        let mut val = C64::new(0.0, 0.0);
        let mut g = vec![C64::new(0.0, 0.0); p.dx.len() + p.dr.len()];
        for (t, m) in tensor.iter().enumerate() {
            // y = M x
            let y: Vec<C64> = (0..nx)
                .map(|i| (0..nx).map(|j| p.x[j] * m[(i, j)]).sum::<C64>())
                .collect();
            let q: C64 = y.iter().zip(&p.x).map(|(a, b)| a * b).sum();
            val += q * p.r[t];
            for (k, dxk) in p.dx.iter().enumerate() {
                let dq: C64 = y.iter().zip(dxk).map(|(a, b)| a * b).sum::<C64>() * 2.0;
                g[k] += dq * p.r[t];
            }
            for (k, drk) in p.dr.iter().enumerate() {
                g[p.dx.len() + k] += q * drk[t];
            }
        }
        (val, g)
    }

    fn check_denominator(&self, d: C64) -> Result<()> {
        if !(d.norm() >= EVAL_SINGULARITY * self.denominator_scale) || !d.is_finite() {
            return Err(Error::EvaluationSingularity(d.norm() / self.denominator_scale));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: RationalSurrogate = serde_json::from_str(text)?;
        if s.format_version != SURROGATE_FORMAT_VERSION {
            return Err(Error::InvalidSurrogate(format!(
                "unsupported surrogate format version {}",
                s.format_version
            )));
        }
        let nx = s.x_basis.len();
        let nr = s.rho_basis.len();
        let ok = s
            .a
            .iter()
            .chain(std::iter::once(&s.a0))
            .all(|t| t.len() == nr && t.iter().all(|m| m.nrows() == nx && m.ncols() == nx));
        if !ok {
            return Err(Error::InvalidSurrogate("coefficient tensors do not match the basis".into()));
        }
        Ok(s)
    }
}

impl ImpedanceSurrogate for RationalSurrogate {
    fn eval(&self, v: &ParameterVector, s: C64) -> Result<DqMatrix> {
        if !self.in_domain(v) {
            log::debug!("surrogate extrapolating at {:?}", v.to_array());
        }
        let p = self.parts(v, s, false);
        let d = Self::value(&self.a0, &p);
        self.check_denominator(d)?;
        let n: Vec<C64> = self.a.iter().map(|t| Self::value(t, &p) / d).collect();
        Ok(DqMatrix::new(n[0], n[1], n[2], n[3]))
    }

    fn grad(&self, v: &ParameterVector, s: C64) -> Result<[DqMatrix; N_COORDS]> {
        let p = self.parts(v, s, true);
        let (d, dd) = self.value_grad(&self.a0, &p);
        self.check_denominator(d)?;
        let nums: Vec<(C64, Vec<C64>)> = self.a.iter().map(|t| self.value_grad(t, &p)).collect();
        let coords: Vec<usize> = self.x_vars.iter().chain(&self.rho_vars).copied().collect();
        let mut out = [DqMatrix::zeros(); N_COORDS];
        for (k, &coord) in coords.iter().enumerate() {
            let scale = self.normalization.dy(coord);
            let e: Vec<C64> = nums
                .iter()
                .map(|(n, dn)| (dn[k] * d - n * dd[k]) / (d * d) * scale)
                .collect();
            out[coord] = DqMatrix::new(e[0], e[1], e[2], e[3]);
        }
        Ok(out)
    }
}

/// Canonical feature `s_hat^a * chi_b(op) * r_t(rho)`.
struct Features {
    // per product monomial: power of s_hat and the op exponents
    prod: Vec<Vec<u8>>,
    n_rho: usize,
    max_s: usize,
}

impl Features {
    fn len(&self) -> usize {
        self.prod.len() * self.n_rho
    }

    fn s_power(&self, f: usize) -> usize {
        self.prod[f / self.n_rho][0] as usize
    }

    /// Frequency-independent factor of every feature at one parameter vector.
    fn static_part(&self, sur: &RationalSurrogate, v: &ParameterVector) -> Vec<f64> {
        let a = v.to_array();
        let n = &sur.normalization;
        let yx: Vec<f64> = sur.x_vars.iter().map(|&k| n.y(&a, k)).collect();
        let yr: Vec<f64> = sur.rho_vars.iter().map(|&k| n.y(&a, k)).collect();
        let pw_x = power_table(&yx, self.max_s);
        let pw_r = power_table(&yr, sur.rho_degree);
        let r: Vec<f64> = sur.rho_basis.iter().map(|m| eval_real(m, &pw_r)).collect();
        let mut out = Vec::with_capacity(self.len());
        for p in &self.prod {
            let chi = eval_real(&p[1..], &pw_x);
            for rt in &r {
                out.push(chi * rt);
            }
        }
        out
    }
}

struct Normal {
    g: DMatrix<f64>,
    c: [DMatrix<f64>; 4],
    h: DMatrix<f64>,
    mean: DVector<f64>,
}

fn s_powers(s: C64, max: usize) -> Vec<C64> {
    let mut p = vec![C64::new(1.0, 0.0); max + 1];
    for k in 1..=max {
        p[k] = p[k - 1] * s;
    }
    p
}

/// Normal-equation blocks of the linearized problem over a subset of samples.
fn assemble(
    feats: &Features,
    stat: &[Vec<f64>],
    targets: &[Vec<[C64; 4]>],
    weights: &[Vec<f64>],
    s_hat: &[C64],
) -> Normal {
    let k = feats.len();
    let na = feats.max_s + 1;
    let sp: Vec<Vec<C64>> = s_hat.iter().map(|&s| s_powers(s, feats.max_s)).collect();
    let chunk = 8;
    let idx: Vec<usize> = (0..stat.len()).collect();
    let partials: Vec<Normal> = idx
        .par_chunks(chunk)
        .map(|ids| {
            let mut acc = Normal {
                g: DMatrix::zeros(k, k),
                c: std::array::from_fn(|_| DMatrix::zeros(k, k)),
                h: DMatrix::zeros(k, k),
                mean: DVector::zeros(k),
            };
            for &i in ids {
                // frequency moments
                let mut m0 = vec![0.0; na * na];
                let mut mz = vec![vec![0.0; na * na]; 4];
                let mut mzz = vec![0.0; na * na];
                let mut mean_s = vec![0.0; na];
                for (f, p) in sp.iter().enumerate() {
                    let w = weights[i][f];
                    let z = &targets[i][f];
                    let z2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
                    for a1 in 0..na {
                        mean_s[a1] += p[a1].re;
                        let pc = p[a1].conj() * w;
                        for a2 in 0..na {
                            let base = pc * p[a2];
                            m0[a1 * na + a2] += base.re;
                            mzz[a1 * na + a2] += base.re * z2;
                            for e in 0..4 {
                                mz[e][a1 * na + a2] += (base * z[e]).re;
                            }
                        }
                    }
                }
                let phi = &stat[i];
                for f1 in 0..k {
                    let a1 = feats.s_power(f1);
                    acc.mean[f1] += mean_s[a1] * phi[f1];
                    if phi[f1] == 0.0 {
                        continue;
                    }
                    for f2 in 0..k {
                        let a2 = feats.s_power(f2);
                        let pp = phi[f1] * phi[f2];
                        let q = a1 * na + a2;
                        acc.g[(f1, f2)] += m0[q] * pp;
                        acc.h[(f1, f2)] += mzz[q] * pp;
                        for e in 0..4 {
                            acc.c[e][(f1, f2)] += mz[e][q] * pp;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut it = partials.into_iter();
    let mut total = it.next().expect("at least one sample");
    for p in it {
        total.g += p.g;
        total.h += p.h;
        total.mean += p.mean;
        for e in 0..4 {
            total.c[e] += &p.c[e];
        }
    }
    total.mean /= (stat.len() * s_hat.len()) as f64;
    total
}

fn ridge_add(m: &mut DMatrix<f64>, ridge: f64) {
    let n = m.nrows();
    let tr = m.trace() / n as f64;
    let lam = ridge.max(1e-14) * tr.max(f64::MIN_POSITIVE);
    for i in 0..n {
        m[(i, i)] += lam;
    }
}

fn spd_solve(m: DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => m
            .lu()
            .solve(b)
            .ok_or_else(|| Error::Conditioning(format!("singular {what} block"))),
    }
}

/// `(numerator coefficients, denominator coefficients)` of one linearized solve.
fn solve_sk(mut n: Normal, ridge: f64) -> Result<([DVector<f64>; 4], DVector<f64>)> {
    let k = n.g.nrows();
    ridge_add(&mut n.g, ridge);
    let g_inv_c: Vec<DMatrix<f64>> = n
        .c
        .iter()
        .map(|c| spd_solve(n.g.clone(), c, "numerator"))
        .collect::<Result<_>>()?;
    let mut s = n.h.clone();
    for e in 0..4 {
        s -= n.c[e].transpose() * &g_inv_c[e];
    }
    s = (&s + s.transpose()) * 0.5;
    ridge_add(&mut s, ridge);
    let rhs = DMatrix::from_column_slice(k, 1, n.mean.as_slice());
    let y = spd_solve(s, &rhs, "denominator")?.column(0).into_owned();
    let denom = n.mean.dot(&y);
    if !(denom.abs() > 0.0) || !denom.is_finite() {
        return Err(Error::Conditioning("denominator normalization failed".into()));
    }
    let d = y / denom;
    let c = std::array::from_fn(|e| &g_inv_c[e] * &d);
    Ok((c, d))
}

fn train_residual(
    feats: &Features,
    stat: &[Vec<f64>],
    targets: &[Vec<[C64; 4]>],
    sp: &[Vec<C64>],
    c: &[DVector<f64>; 4],
    den: &DVector<f64>,
) -> f64 {
    let (mut num, mut tot) = (0.0, 0.0);
    for (st, tg) in stat.iter().zip(targets) {
        for (p, t) in sp.iter().zip(tg) {
            let dv = feature_value(feats, st, p, den);
            for e in 0..4 {
                num += (feature_value(feats, st, p, &c[e]) / dv - t[e]).norm_sqr();
                tot += t[e].norm_sqr();
            }
        }
    }
    let r = (num / tot).sqrt();
    if r.is_finite() { r } else { f64::INFINITY }
}

fn feature_value(feats: &Features, stat: &[f64], sp: &[C64], coef: &DVector<f64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for f in 0..feats.len() {
        if stat[f] != 0.0 && coef[f] != 0.0 {
            acc += sp[feats.s_power(f)] * (stat[f] * coef[f]);
        }
    }
    acc
}

pub fn fit_surrogate(d: &TrainingDataset, basis_degree: usize, rho_degree: usize, ridge: f64) -> Result<RationalSurrogate> {
    fit_surrogate_with(
        d,
        &FitOptions {
            basis_degree,
            rho_degree,
            ridge,
            ..FitOptions::default()
        },
    )
}

/// Sanathanan-Koerner fit of the rational form with ridge regularization and
/// a seeded hold-out split.
pub fn fit_surrogate_with(d: &TrainingDataset, opts: &FitOptions) -> Result<RationalSurrogate> {
    if !(opts.ridge >= 0.0) {
        return Err(Error::InvalidInput("ridge must be non-negative".into()));
    }
    if !(opts.validation_fraction > 0.0 && opts.validation_fraction < 1.0) {
        return Err(Error::InvalidInput("validation fraction must lie in (0, 1)".into()));
    }
    if d.len() < 2 {
        return Err(Error::InsufficientData {
            observations: d.len(),
            coefficients: 0,
        });
    }
    let grid = d.grid();
    let mut sur = RationalSurrogate::structure(&d.bounds, grid.omega_max(), opts.basis_degree, opts.rho_degree)?;

    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.split_seed));
    let n_val = ((d.len() as f64 * opts.validation_fraction).ceil() as usize).clamp(1, d.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let mut val_idx = val_idx.to_vec();
    val_idx.sort_unstable();

    let feats = Features {
        prod: monomials(1 + sur.x_vars.len(), 2 * opts.basis_degree),
        n_rho: sur.rho_basis.len(),
        max_s: 2 * opts.basis_degree,
    };
    let n_coef = 5 * feats.len();
    let observations = train_idx.len() * grid.len() * 8;
    if observations < 3 * n_coef {
        return Err(Error::InsufficientData {
            observations,
            coefficients: n_coef,
        });
    }

    let s_hat: Vec<C64> = grid.points().iter().map(|&w| C64::new(0.0, w / sur.normalization.s_scale)).collect();
    let sp: Vec<Vec<C64>> = s_hat.iter().map(|&s| s_powers(s, feats.max_s)).collect();
    let z_scale = {
        let (mut acc, mut cnt) = (0.0, 0usize);
        for &i in &train_idx {
            for m in &d.samples[i].1.values {
                acc += m.norm_fro().powi(2);
                cnt += 4;
            }
        }
        (acc / cnt as f64).sqrt()
    };
    if !(z_scale > 0.0) || !z_scale.is_finite() {
        return Err(Error::Dataset("training spectra are zero or non-finite".into()));
    }
    let to_targets = |ids: &[usize]| -> Vec<Vec<[C64; 4]>> {
        ids.iter()
            .map(|&i| {
                d.samples[i]
                    .1
                    .values
                    .iter()
                    .map(|m| std::array::from_fn(|e| m.get(e / 2, e % 2) / z_scale))
                    .collect()
            })
            .collect()
    };
    let targets = to_targets(&train_idx);
    let stat: Vec<Vec<f64>> = train_idx.iter().map(|&i| feats.static_part(&sur, &d.samples[i].0)).collect();
    let mut weights = vec![vec![1.0; grid.len()]; train_idx.len()];

    let mut sol = None;
    for pass in 0..=opts.sk_iterations {
        let normal = assemble(&feats, &stat, &targets, &weights, &s_hat);
        let (c, den) = solve_sk(normal, opts.ridge)?;
        if pass < opts.sk_iterations {
            for (i, w) in weights.iter_mut().enumerate() {
                for (f, wf) in w.iter_mut().enumerate() {
                    let dv = feature_value(&feats, &stat[i], &sp[f], &den).norm_sqr();
                    *wf = if dv > 0.0 && dv.is_finite() { 1.0 / dv } else { 1.0 };
                }
            }
            // keep the weights O(1) for conditioning
            let mean = weights.iter().flatten().sum::<f64>() / (weights.len() * grid.len()) as f64;
            for w in weights.iter_mut().flatten() {
                *w /= mean;
            }
        }
        // the iteration is not monotone; keep the best pass
        let err = train_residual(&feats, &stat, &targets, &sp, &c, &den);
        log::debug!("SK pass {pass}: relative training residual {err:.4e}");
        if sol.as_ref().is_none_or(|(e, _, _)| err < *e) {
            sol = Some((err, c, den));
        }
    }
    let (_, c, den) = sol.expect("at least one pass");

    // write the canonical coefficients into symmetric matrices
    let index: HashMap<Vec<u8>, usize> = sur.x_basis.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
    for (pi, p) in feats.prod.iter().enumerate() {
        let mut left = vec![0u8; p.len()];
        let mut budget = opts.basis_degree;
        for (v, &e) in p.iter().enumerate() {
            let take = (e as usize).min(budget);
            left[v] = take as u8;
            budget -= take;
        }
        let right: Vec<u8> = p.iter().zip(&left).map(|(a, b)| a - b).collect();
        debug_assert!(degree(&right) <= opts.basis_degree);
        let (i, j) = (index[&left], index[&right]);
        for t in 0..feats.n_rho {
            let f = pi * feats.n_rho + t;
            let put = |m: &mut DMatrix<f64>, v: f64| {
                if i == j {
                    m[(i, i)] += v;
                } else {
                    m[(i, j)] += 0.5 * v;
                    m[(j, i)] += 0.5 * v;
                }
            };
            for e in 0..4 {
                put(&mut sur.a[e][t], c[e][f] * z_scale);
            }
            put(&mut sur.a0[t], den[f]);
        }
    }

    // denominator scale and lattice margin over every sample and grid point
    let all_stat: Vec<Vec<f64>> = d.samples.iter().map(|(v, _)| feats.static_part(&sur, v)).collect();
    let den_vals: Vec<Vec<f64>> = all_stat
        .iter()
        .map(|st| sp.iter().map(|p| feature_value(&feats, st, p, &den).norm()).collect())
        .collect();
    let cnt = (d.len() * grid.len()) as f64;
    sur.denominator_scale = (den_vals.iter().flatten().map(|x| x * x).sum::<f64>() / cnt).sqrt();
    let worst = den_vals.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(worst >= LATTICE_MARGIN * sur.denominator_scale) {
        return Err(Error::InvalidSurrogate(format!(
            "denominator nearly vanishes on the validation lattice (min {:.3e} relative)",
            worst / sur.denominator_scale
        )));
    }

    let rms = |ids: &[usize]| -> f64 {
        let (mut num, mut den_acc) = (0.0, 0.0);
        for &i in ids {
            let st = &all_stat[i];
            for (f, m) in d.samples[i].1.values.iter().enumerate() {
                let dv = feature_value(&feats, st, &sp[f], &den);
                for e in 0..4 {
                    let pred = feature_value(&feats, st, &sp[f], &c[e]) / dv * z_scale;
                    let truth = m.get(e / 2, e % 2);
                    num += (pred - truth).norm_sqr();
                    den_acc += truth.norm_sqr();
                }
            }
        }
        (num / den_acc).sqrt()
    };
    sur.report = Some(FitReport {
        train_rms: rms(&train_idx),
        validation_rms: rms(&val_idx),
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
        n_coefficients: n_coef,
        sk_iterations: opts.sk_iterations,
        ridge: opts.ridge,
        split_seed: opts.split_seed,
    });
    Ok(sur)
}
