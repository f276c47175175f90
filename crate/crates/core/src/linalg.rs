//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`. The FFT uses the
//! unitary convention (`1/sqrt(N)` in both directions), so `fft` is the
//! matrix `F` and `ifft` is `F^H`.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

fn check_pow2(len: usize) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    Ok(())
}

/// In-place unitary forward DFT.
pub fn fft_in_place(buf: &mut [C64]) -> Result<()> {
    check_pow2(buf.len())?;
    plan(buf.len(), false).process(buf);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

/// In-place unitary inverse DFT.
pub fn ifft_in_place(buf: &mut [C64]) -> Result<()> {
    check_pow2(buf.len())?;
    plan(buf.len(), true).process(buf);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

pub fn fft(v: &[C64]) -> Result<Vec<C64>> {
    let mut out = v.to_vec();
    fft_in_place(&mut out)?;
    Ok(out)
}

pub fn ifft(v: &[C64]) -> Result<Vec<C64>> {
    let mut out = v.to_vec();
    ifft_in_place(&mut out)?;
    Ok(out)
}

/// Applies the unitary DFT to every row of `m` (i.e. computes `m * F`).
pub fn fft_rows(m: &CMatrix) -> Result<CMatrix> {
    transform_rows(m, false)
}

/// Computes `m * F^H`.
pub fn ifft_rows(m: &CMatrix) -> Result<CMatrix> {
    transform_rows(m, true)
}

fn transform_rows(m: &CMatrix, inverse: bool) -> Result<CMatrix> {
    let (rows, cols) = m.shape();
    check_pow2(cols)?;
    let mut out = CMatrix::zeros(rows, cols);
    let mut row = vec![C64::new(0.0, 0.0); cols];
    for r in 0..rows {
        for c in 0..cols {
            row[c] = m[(r, c)];
        }
        if inverse {
            ifft_in_place(&mut row)?;
        } else {
            fft_in_place(&mut row)?;
        }
        for c in 0..cols {
            out[(r, c)] = row[c];
        }
    }
    Ok(out)
}

// Thin SVD `A = U diag(s) V^H`. Strongly rectangular inputs are first
// reduced by a Householder QR so the iterative part only sees a square core.
fn thin_svd(a: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let (rows, cols) = a.shape();
    if cols > 2 * rows {
        // A^H = Q R  =>  A = R^H Q^H
        let qr = a.adjoint().qr();
        let (q, r) = (qr.q(), qr.r());
        let core = SVD::new(r.adjoint(), true, true);
        let u = core.u.expect("u requested");
        let v = q * core.v_t.expect("v_t requested").adjoint();
        (u, core.singular_values.iter().cloned().collect(), v)
    } else if rows > 2 * cols {
        let qr = a.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        let core = SVD::new(r, true, true);
        let u = q * core.u.expect("u requested");
        let v = core.v_t.expect("v_t requested").adjoint();
        (u, core.singular_values.iter().cloned().collect(), v)
    } else {
        let core = SVD::new(a.clone(), true, true);
        let u = core.u.expect("u requested");
        let v = core.v_t.expect("v_t requested").adjoint();
        (u, core.singular_values.iter().cloned().collect(), v)
    }
}

/// Moore-Penrose pseudo-inverse through the SVD, with singular values below
/// `RANK_CUTOFF * sigma_max` dropped.
pub fn pinv(a: &CMatrix) -> CMatrix {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return CMatrix::zeros(cols, rows);
    }
    let (u, s, mut v) = thin_svd(a);
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_CUTOFF * s_max;
    // A+ = V diag(1/s) U^H
    for (k, &sk) in s.iter().enumerate() {
        let inv = if sk > cutoff && sk > 0.0 { 1.0 / sk } else { 0.0 };
        v.column_mut(k).iter_mut().for_each(|x| *x *= inv);
    }
    v * u.adjoint()
}

/// Largest singular value.
pub fn max_singular_value(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let svd = SVD::new(a.clone(), false, false);
    svd.singular_values.iter().cloned().fold(0.0, f64::max)
}

/// Minimizes `||B - W A||_F` over `W`, returning `W = B A^+`.
pub fn lstsq(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    LeastSquares::new(a).solve(b)
}

/// A factored regressor `A` that solves `min ||B - W A||_F` for several
/// targets `B` at the cost of one decomposition.
pub struct LeastSquares {
    cols: usize,
    // Wide regressors keep the QR of `A^H` and fold `Q` into the target.
    qr: Option<nalgebra::QR<C64, nalgebra::Dyn, nalgebra::Dyn>>,
    u: CMatrix,
    s_inv: Vec<f64>,
    v: CMatrix,
}

impl LeastSquares {
    pub fn new(a: &CMatrix) -> Self {
        let (rows, cols) = a.shape();
        let (qr, u, s, v) = if rows > 0 && cols > 2 * rows {
            let qr = a.adjoint().qr();
            let core = SVD::new(qr.r().adjoint(), true, true);
            let u = core.u.expect("u requested");
            let v = core.v_t.expect("v_t requested").adjoint();
            (Some(qr), u, core.singular_values.iter().cloned().collect(), v)
        } else if rows == 0 || cols == 0 {
            (None, CMatrix::zeros(rows, 0), Vec::new(), CMatrix::zeros(cols, 0))
        } else {
            let (u, s, v) = thin_svd(a);
            (None, u, s, v)
        };
        let s_max = s.iter().cloned().fold(0.0, f64::max);
        let cutoff = RANK_CUTOFF * s_max;
        let s_inv = s.iter().map(|&x| if x > cutoff && x > 0.0 { 1.0 / x } else { 0.0 }).collect();
        Self { cols, qr, u, s_inv, v }
    }

    /// Numerical rank of the regressor.
    pub fn rank(&self) -> usize {
        self.s_inv.iter().filter(|&&x| x > 0.0).count()
    }

    /// Returns `W = B A^+`.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        if b.ncols() != self.cols {
            return Err(Error::Dimension(format!(
                "lstsq: regressor has {} columns but target has {}",
                self.cols,
                b.ncols()
            )));
        }
        // B V (or B Q V for wide regressors)
        let mut bv = match &self.qr {
            Some(qr) => {
                let mut bh = b.adjoint();
                qr.q_tr_mul(&mut bh);
                let k = self.v.nrows();
                bh.rows(0, k).adjoint() * &self.v
            }
            None => b * &self.v,
        };
        for (k, &si) in self.s_inv.iter().enumerate() {
            bv.column_mut(k).iter_mut().for_each(|x| *x *= si);
        }
        Ok(bv * self.u.adjoint())
    }
}

/// Frobenius norm of `B - W A`.
pub fn residual_norm(a: &CMatrix, b: &CMatrix, w: &CMatrix) -> f64 {
    (b - w * a).norm()
}

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
