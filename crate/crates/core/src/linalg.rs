//! Small dense linear-algebra helpers shared by the modelling and
//! identification code: the 2x2 complex dq matrix and a general real
//! eigendecomposition with complex eigenvectors.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

pub const J: C64 = C64::new(0.0, 1.0);

/// A 2x2 complex matrix in the dq frame, indexed `(m, n)` with `0 = d`, `1 = q`.
///
/// Used both for impedances (ohm) and admittances (siemens).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DqMatrix(pub Matrix2<C64>);

impl DqMatrix {
    pub fn new(dd: C64, dq: C64, qd: C64, qq: C64) -> Self {
        DqMatrix(Matrix2::new(dd, dq, qd, qq))
    }

    pub fn zeros() -> Self {
        DqMatrix(Matrix2::zeros())
    }

    pub fn identity() -> Self {
        DqMatrix(Matrix2::identity())
    }

    pub fn from_real(m: &Matrix2<f64>) -> Self {
        DqMatrix(m.map(|x| C64::new(x, 0.0)))
    }

    /// Unit matrix `E_mn` with a single one at `(m, n)`.
    pub fn unit(m: usize, n: usize) -> Self {
        let mut z = Matrix2::zeros();
        z[(m, n)] = C64::new(1.0, 0.0);
        DqMatrix(z)
    }

    /// dq-frame matrix of a series `R + sL` branch in a frame rotating at `omega0`.
    pub fn series_rl(r: f64, l: f64, omega0: f64, s: C64) -> Self {
        let diag = C64::new(r, 0.0) + s * l;
        let x = C64::new(omega0 * l, 0.0);
        DqMatrix::new(diag, -x, x, diag)
    }

    /// dq-frame admittance of a shunt capacitance.
    pub fn shunt_c(c: f64, omega0: f64, s: C64) -> Self {
        let diag = s * c;
        let b = C64::new(omega0 * c, 0.0);
        DqMatrix::new(diag, -b, b, diag)
    }

    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.0[(m, n)]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn conj(&self) -> Self {
        DqMatrix(self.0.map(|z| z.conj()))
    }

    pub fn transpose(&self) -> Self {
        DqMatrix(self.0.transpose())
    }

    pub fn adjoint(&self) -> Self {
        DqMatrix(self.0.adjoint())
    }

    pub fn scale(&self, k: C64) -> Self {
        DqMatrix(self.0 * k)
    }

    pub fn det(&self) -> C64 {
        self.0[(0, 0)] * self.0[(1, 1)] - self.0[(0, 1)] * self.0[(1, 0)]
    }

    pub fn trace(&self) -> C64 {
        self.0[(0, 0)] + self.0[(1, 1)]
    }

    /// Singular values `(sigma_max, sigma_min)` in closed form.
    pub fn singular_values(&self) -> (f64, f64) {
        let t: f64 = self.0.iter().map(|z| z.norm_sqr()).sum();
        let d = self.det().norm();
        let disc = (t * t - 4.0 * d * d).max(0.0).sqrt();
        let hi = ((t + disc) / 2.0).max(0.0).sqrt();
        let lo = if hi > 0.0 { d / hi } else { 0.0 };
        (hi, lo)
    }

    /// 2-norm condition number; infinite when singular.
    pub fn condition(&self) -> f64 {
        let (hi, lo) = self.singular_values();
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.re.is_finite() || !d.im.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(DqMatrix(
            Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / d,
        ))
    }

    /// Frobenius inner product `<self, other> = sum conj(self_mn) * other_mn`.
    pub fn inner(&self, other: &DqMatrix) -> C64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Express a matrix given in a frame rotated by `theta` in the reference frame.
    pub fn rotate(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let t = Matrix2::new(c, -s, s, c).map(|x| C64::new(x, 0.0));
        let ti = t.transpose();
        DqMatrix(t * self.0 * ti)
    }

    /// Equivalent positive-sequence quantity `(dd + qq)/2 + j(qd - dq)/2`.
    pub fn positive_sequence(&self) -> C64 {
        (self.get(0, 0) + self.get(1, 1)) * 0.5 + J * (self.get(1, 0) - self.get(0, 1)) * 0.5
    }
}

impl Add for DqMatrix {
    type Output = DqMatrix;
    fn add(self, rhs: DqMatrix) -> DqMatrix {
        DqMatrix(self.0 + rhs.0)
    }
}

impl Sub for DqMatrix {
    type Output = DqMatrix;
    fn sub(self, rhs: DqMatrix) -> DqMatrix {
        DqMatrix(self.0 - rhs.0)
    }
}

impl Mul for DqMatrix {
    type Output = DqMatrix;
    fn mul(self, rhs: DqMatrix) -> DqMatrix {
        DqMatrix(self.0 * rhs.0)
    }
}

impl Neg for DqMatrix {
    type Output = DqMatrix;
    fn neg(self) -> DqMatrix {
        DqMatrix(-self.0)
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Eigenvalues of a real square matrix, conjugate pairs adjacent, positive
/// imaginary part first within a pair.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<C64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<C64> = balance(a).complex_eigenvalues().iter().copied().collect();
    canonical_pairs(&mut ev);
    ev
}

/// Diagonal similarity `D^-1 A D` with power-of-two scalings that roughly
/// equalize row and column norms (Parlett-Reinsch). Eigenvalues are unchanged.
pub fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut b = a.clone();
    for _ in 0..100 {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let s = c + r;
            let (mut cc, mut rr) = (c, r);
            while cc < rr / 2.0 {
                cc *= 2.0;
                rr /= 2.0;
                f *= 2.0;
            }
            while cc >= rr * 2.0 {
                cc /= 2.0;
                rr *= 2.0;
                f /= 2.0;
            }
            if (cc + rr) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    b
}

/// Polishes an approximate simple eigenvalue by Newton iteration on the
/// bordered system `(A - lambda I) v = 0`, `v[k] = 1`.
pub fn refine_eigenvalue(a: &DMatrix<f64>, lambda: C64) -> C64 {
    let n = a.nrows();
    if n == 0 {
        return lambda;
    }
    let ac = to_complex(a);
    let mut v = eigenvector(&ac, lambda);
    let k = (0..n).max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm())).unwrap_or(0);
    v /= v[k];
    let mut lam = lambda;
    for _ in 0..8 {
        let mut m = DMatrix::<C64>::zeros(n + 1, n + 1);
        let shifted = &ac - DMatrix::<C64>::identity(n, n) * lam;
        m.view_mut((0, 0), (n, n)).copy_from(&shifted);
        m.view_mut((0, n), (n, 1)).copy_from(&(-&v));
        m[(n, k)] = C64::new(1.0, 0.0);
        let mut rhs = nalgebra::DVector::<C64>::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-(&shifted * &v)));
        let Some(step) = m.lu().solve(&rhs) else { break };
        if step.iter().any(|z| !z.is_finite()) {
            break;
        }
        v += step.rows(0, n);
        lam += step[n];
        if step[n].norm() <= 1e-15 * lam.norm().max(1.0) {
            break;
        }
    }
    if lambda.im == 0.0 {
        C64::new(lam.re, 0.0)
    } else {
        lam
    }
}

/// Snap near-real eigenvalues onto the real axis and enforce exact conjugate
/// symmetry so downstream code can rely on pair structure.
pub(crate) fn canonical_pairs(ev: &mut Vec<C64>) {
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut out = Vec::with_capacity(ev.len());
    let mut used = vec![false; ev.len()];
    // Order by real part descending, then by |imag| to make pairing stable.
    let mut idx: Vec<usize> = (0..ev.len()).collect();
    idx.sort_by(|&i, &j| {
        ev[j].re
            .partial_cmp(&ev[i].re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ev[i].im.abs().partial_cmp(&ev[j].im.abs()).unwrap_or(std::cmp::Ordering::Equal))
    });
    for &i in &idx {
        if used[i] {
            continue;
        }
        used[i] = true;
        let z = ev[i];
        if z.im.abs() <= 1e-13 * scale {
            out.push(C64::new(z.re, 0.0));
            continue;
        }
        // find conjugate partner
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for &k in &idx {
            if used[k] {
                continue;
            }
            let d = (ev[k] - z.conj()).norm();
            if d < best_d {
                best_d = d;
                best = Some(k);
            }
        }
        match best {
            Some(k) if best_d <= 1e-6 * scale.max(z.norm()) => {
                used[k] = true;
                let re = 0.5 * (z.re + ev[k].re);
                let im = 0.5 * (z.im.abs() + ev[k].im.abs());
                out.push(C64::new(re, im));
                out.push(C64::new(re, -im));
            }
            _ => out.push(z),
        }
    }
    *ev = out;
}

/// Right eigenvector for a known eigenvalue, from the smallest right singular
/// vector of `A - mu I`. Normalized to unit 2-norm.
pub fn eigenvector(a: &DMatrix<C64>, mu: C64) -> nalgebra::DVector<C64> {
    let n = a.nrows();
    let shifted = a - DMatrix::<C64>::identity(n, n) * mu;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    // singular values are sorted descending by nalgebra's svd
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let row = v_t.row(imin);
    let mut v = nalgebra::DVector::from_iterator(n, row.iter().map(|z| z.conj()));
    let nrm = v.norm();
    if nrm > 0.0 {
        v /= C64::new(nrm, 0.0);
    }
    v
}

/// Eigendecomposition `A = W diag(mu) W^-1` for a real matrix with distinct
/// eigenvalues. Conjugate eigenvalues receive conjugate eigenvectors.
pub fn eig_decompose(a: &DMatrix<f64>) -> (Vec<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let mu = eigenvalues(a);
    let ac = to_complex(a);
    let mut w = DMatrix::<C64>::zeros(n, n);
    let mut k = 0;
    while k < n {
        let v = eigenvector(&ac, mu[k]);
        w.set_column(k, &v);
        if mu[k].im != 0.0 && k + 1 < n && mu[k + 1] == mu[k].conj() {
            w.set_column(k + 1, &v.map(|z| z.conj()));
            k += 2;
        } else {
            k += 1;
        }
    }
    (mu, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dq_inverse_roundtrip() {
        let z = DqMatrix::new(
            C64::new(1.0, 2.0),
            C64::new(-0.5, 0.1),
            C64::new(0.3, 0.0),
            C64::new(2.0, -1.0),
        );
        let p = z * z.inverse().unwrap();
        assert!((p - DqMatrix::identity()).norm_fro() < 1e-14);
    }

    #[test]
    fn singular_values_match_svd() {
        let z = DqMatrix::new(
            C64::new(1.0, 2.0),
            C64::new(-0.5, 0.1),
            C64::new(0.3, 0.0),
            C64::new(2.0, -1.0),
        );
        let svd = z.0.svd(false, false);
        let (hi, lo) = z.singular_values();
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((hi - s[0]).abs() < 1e-12);
        assert!((lo - s[1]).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_reciprocal_blocks() {
        let z = DqMatrix::series_rl(0.1, 1e-3, 314.0, C64::new(0.0, 50.0));
        let r = z.rotate(0.7);
        assert!((r - z).norm_fro() < 1e-13);
    }

    #[test]
    fn eig_decompose_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 5.0, 0.2, -5.0, -1.0, 0.0, 0.3, 0.1, -7.0]);
        let (mu, w) = eig_decompose(&a);
        let winv = w.clone().try_inverse().unwrap();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(mu));
        let rec = &w * d * winv;
        for (x, y) in rec.iter().zip(a.iter()) {
            assert!((x.re - y).abs() < 1e-10 && x.im.abs() < 1e-10);
        }
    }
}
