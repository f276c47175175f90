//! Coherent baseline receivers: LMMSE channel estimation from pilots,
//! LMMSE equalization and exact maximum-likelihood sphere decoding.

use crate::channel::FrequencyResponse;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::modem::{Constellation, PilotSource, ResourceGrid};

/// Prior channel covariance assumed by the estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Uncorrelated unit-variance subcarriers.
    Identity,
    /// Independent taps with the given delays and powers.
    TapDiagonal { delays: Vec<usize>, powers: Vec<f64> },
    /// Full `N_c x N_c` frequency-domain covariance.
    Dense(CMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiSource {
    Comb,
    ScatteredInterpolated,
    Perfect,
}

/// Channel estimate for every OFDM symbol of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiEstimate {
    pub symbols: Vec<FrequencyResponse>,
    pub source: CsiSource,
    /// Set when some pair had a single pilot subcarrier and was extrapolated flat.
    pub flat_extrapolated: bool,
}

impl CsiEstimate {
    pub fn perfect(symbols: Vec<FrequencyResponse>) -> Self {
        Self { symbols, source: CsiSource::Perfect, flat_extrapolated: false }
    }

    /// Mean squared error per cell against the true responses.
    pub fn mse(&self, truth: &[FrequencyResponse]) -> f64 {
        let cells: usize = truth.iter().map(|h| h.n_tx * h.n_rx * h.n_subcarriers).sum();
        let err: f64 = self.symbols.iter().zip(truth).map(|(a, b)| a.squared_error(b)).sum();
        err / cells as f64
    }
}

fn steering(n: usize, delay: usize, n_subcarriers: usize) -> C64 {
    C64::from_polar(1.0, -2.0 * std::f64::consts::PI * ((n * delay) % n_subcarriers) as f64 / n_subcarriers as f64)
}

// Solves A x = b for Hermitian positive definite A by LDL^H elimination.
fn solve_hpd(mut a: CMatrix, mut b: CVector) -> CVector {
    let n = a.nrows();
    for k in 0..n {
        let d = a[(k, k)].re;
        for i in k + 1..n {
            let f = a[(i, k)] / d;
            if f == C64::default() {
                continue;
            }
            for j in k..n {
                let v = a[(k, j)];
                a[(i, j)] -= f * v;
            }
            let bk = b[k];
            b[i] -= f * bk;
        }
    }
    let mut x = CVector::zeros(n);
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[(k, j)] * x[j];
        }
        x[k] = s / a[(k, k)].re;
    }
    x
}

// General square solve with partial pivoting.
fn solve_general(a: &CMatrix, b: &CVector) -> Result<CVector> {
    a.clone().lu().solve(b).ok_or_else(|| Error::Dimension("singular system".into()))
}

/// LMMSE estimate of `H` on the subcarriers `cells` given
/// `y[n] = x[n] H[n] + w[n]` there, returning the estimate on the same cells.
pub fn lmmse_cells(
    cells: &[usize],
    y: &[C64],
    x: &[C64],
    cov: &Covariance,
    sigma2: f64,
    n_subcarriers: usize,
) -> Result<Vec<C64>> {
    if cells.len() != y.len() || cells.len() != x.len() {
        return Err(Error::Dimension("cells, observations and pilots must align".into()));
    }
    match cov {
        Covariance::Identity => Ok(y.iter().zip(x).map(|(y, x)| x.conj() * y / (x.norm_sqr() + sigma2)).collect()),
        Covariance::TapDiagonal { delays, powers } => {
            // H = G a, a ~ CN(0, D):  H^ = G (G^H X^H X G + s2 D^-1)^-1 G^H X^H y
            let l = delays.len();
            let g = CMatrix::from_fn(cells.len(), l, |r, c| steering(cells[r], delays[c], n_subcarriers));
            let mut a = CMatrix::zeros(l, l);
            let mut rhs = CVector::zeros(l);
            for (r, (&xv, &yv)) in x.iter().zip(y).enumerate() {
                let phi = xv.norm_sqr();
                let xy = xv.conj() * yv;
                for i in 0..l {
                    let gi = g[(r, i)].conj();
                    rhs[i] += gi * xy;
                    for j in 0..l {
                        a[(i, j)] += gi * g[(r, j)] * phi;
                    }
                }
            }
            for i in 0..l {
                if powers[i] > 0.0 {
                    a[(i, i)] += C64::new(sigma2 / powers[i], 0.0);
                } else {
                    a[(i, i)] += C64::new(1e300, 0.0);
                }
            }
            let taps = if sigma2 > 0.0 { solve_hpd(a, rhs) } else { solve_general(&a, &rhs)? };
            Ok((&g * taps).iter().cloned().collect())
        }
        Covariance::Dense(r) => {
            if r.nrows() != n_subcarriers || r.ncols() != n_subcarriers {
                return Err(Error::Dimension("dense covariance must be N_c x N_c".into()));
            }
            let m = cells.len();
            let r_pp = CMatrix::from_fn(m, m, |i, j| r[(cells[i], cells[j])]);
            // R_yy = X R X^H + s2 I,  H^ = R X^H R_yy^-1 y
            let mut r_yy = CMatrix::from_fn(m, m, |i, j| x[i] * r_pp[(i, j)] * x[j].conj());
            for i in 0..m {
                r_yy[(i, i)] += C64::new(sigma2, 0.0);
            }
            let yv = CVector::from_iterator(m, y.iter().cloned());
            let u = solve_general(&r_yy, &yv)?;
            let xu = CVector::from_iterator(m, x.iter().zip(u.iter()).map(|(x, u)| x.conj() * u));
            Ok((r_pp * xu).iter().cloned().collect())
        }
    }
}

/// Comb LMMSE estimate `h = R_hy R_yy^-1 y` over all subcarriers of one
/// pilot symbol.
pub fn lmmse_ce_comb(y: &[C64], pilots: &[C64], cov: &Covariance, sigma2: f64) -> Result<Vec<C64>> {
    let cells: Vec<usize> = (0..y.len()).collect();
    lmmse_cells(&cells, y, pilots, cov, sigma2, y.len())
}

/// Linear interpolation of values known at sorted positions `at` onto
/// `0..len`, holding the end values outside the known range.
pub fn interpolate_linear(at: &[usize], values: &[C64], len: usize) -> Vec<C64> {
    let mut out = vec![C64::default(); len];
    if at.is_empty() {
        return out;
    }
    for (n, o) in out.iter_mut().enumerate() {
        let k = at.partition_point(|&a| a <= n);
        *o = if k == 0 {
            values[0]
        } else if k == at.len() {
            values[at.len() - 1]
        } else {
            let (a0, a1) = (at[k - 1], at[k]);
            let t = (n - a0) as f64 / (a1 - a0) as f64;
            values[k - 1] * (1.0 - t) + values[k] * t
        };
    }
    out
}

/// Demodulated received frame: one `N_c` spectrum per (OFDM symbol, rx antenna),
/// stored as a grid whose streams are the receive antennas.
pub type RxSpectrum = ResourceGrid;

fn spectrum_of(rx: &RxSpectrum, i: usize, q: usize) -> Vec<C64> {
    rx.column(i, q)
}

/// Estimates every (tx, rx) pair from orthogonal pilot cells: cells where
/// stream `p` carries a pilot while every other stream is nulled. Each pilot
/// symbol gets an LMMSE estimate on its cells, interpolated linearly across
/// subcarriers; symbols between pilot symbols are interpolated linearly in
/// time and the edges are held.
pub fn lmmse_ce(rx: &RxSpectrum, pilots: &dyn PilotSource, cov: &Covariance, sigma2: f64) -> Result<CsiEstimate> {
    let (n_sym, n_sc, n_tx) = pilots.dims();
    let n_rx = rx.n_streams();
    if rx.n_subcarriers() != n_sc || rx.n_symbols() != n_sym {
        return Err(Error::Dimension("rx spectrum and pilot grid disagree".into()));
    }
    let mut per_symbol: Vec<FrequencyResponse> = (0..n_sym).map(|_| FrequencyResponse::zeros(n_tx, n_rx, n_sc)).collect();
    let mut flat = false;
    let mut all_full = true;
    for p in 0..n_tx {
        // pilot symbols of stream p with their orthogonal cells
        let mut known: Vec<(usize, Vec<usize>)> = Vec::new();
        for i in 0..n_sym {
            let cells: Vec<usize> = (0..n_sc)
                .filter(|&n| pilots.pilot(i, n, p).is_some() && (0..n_tx).all(|o| o == p || pilots.is_null(i, n, o)))
                .collect();
            if !cells.is_empty() {
                all_full &= cells.len() == n_sc;
                known.push((i, cells));
            }
        }
        if known.is_empty() {
            return Err(Error::Pilot(format!("stream {p} has no orthogonal pilot cells; LMMSE estimation is not applicable")));
        }
        for q in 0..n_rx {
            let mut times = Vec::with_capacity(known.len());
            let mut curves: Vec<Vec<C64>> = Vec::with_capacity(known.len());
            for (i, cells) in &known {
                let spec = spectrum_of(rx, *i, q);
                let y: Vec<C64> = cells.iter().map(|&n| spec[n]).collect();
                let x: Vec<C64> = cells.iter().map(|&n| pilots.pilot(*i, n, p).unwrap()).collect();
                let est = lmmse_cells(cells, &y, &x, cov, sigma2, n_sc)?;
                if cells.len() == 1 {
                    flat = true;
                }
                times.push(*i);
                curves.push(if cells.len() == n_sc { est } else { interpolate_linear(cells, &est, n_sc) });
            }
            for n in 0..n_sc {
                let vals: Vec<C64> = curves.iter().map(|c| c[n]).collect();
                let line = interpolate_linear(&times, &vals, n_sym);
                for (i, v) in line.into_iter().enumerate() {
                    per_symbol[i].set(p, q, n, v);
                }
            }
        }
    }
    let source = if all_full { CsiSource::Comb } else { CsiSource::ScatteredInterpolated };
    Ok(CsiEstimate { symbols: per_symbol, source, flat_extrapolated: flat })
}

/// Scalar LMMSE equalizer `x = h* y / (|h|^2 + s2)`.
pub fn lmmse_equalize_siso(y: C64, h: C64, sigma2: f64) -> C64 {
    h.conj() * y / (h.norm_sqr() + sigma2)
}

/// Matrix LMMSE equalizer `x = (H^H H + s2 I)^-1 H^H y`.
pub fn lmmse_equalize_mimo(y: &CVector, h: &CMatrix, sigma2: f64) -> CVector {
    let nt = h.ncols();
    let mut a = CMatrix::zeros(nt, nt);
    let mut b = CVector::zeros(nt);
    for i in 0..nt {
        for k in 0..h.nrows() {
            b[i] += h[(k, i)].conj() * y[k];
        }
        for j in 0..nt {
            for k in 0..h.nrows() {
                a[(i, j)] += h[(k, i)].conj() * h[(k, j)];
            }
        }
        a[(i, i)] += C64::new(sigma2, 0.0);
    }
    if sigma2 > 0.0 {
        solve_hpd(a, b)
    } else {
        solve_general(&a, &b).unwrap_or_else(|_| CVector::zeros(nt))
    }
}

/// Per-subcarrier SISO LMMSE detection followed by quantization.
pub fn lmmse_detect_siso(y: &[C64], h: &[C64], sigma2: f64, c: &Constellation) -> Vec<C64> {
    y.iter().zip(h).map(|(&y, &h)| c.nearest(lmmse_equalize_siso(y, h, sigma2))).collect()
}

/// Per-subcarrier MIMO LMMSE detection followed by quantization.
pub fn lmmse_detect_mimo(y: &CVector, h: &CMatrix, sigma2: f64, c: &Constellation) -> Vec<C64> {
    lmmse_equalize_mimo(y, h, sigma2).iter().map(|&z| c.nearest(z)).collect()
}

/// Squared Euclidean metric `||y - H x||^2`.
pub fn ml_metric(y: &CVector, h: &CMatrix, x: &[C64]) -> f64 {
    let xv = CVector::from_column_slice(x);
    (y - h * xv).norm_squared()
}

/// Exhaustive maximum-likelihood search over `C^N`.
pub fn exhaustive_ml(y: &CVector, h: &CMatrix, c: &Constellation) -> Vec<C64> {
    let nt = h.ncols();
    let m = c.order();
    let total = m.pow(nt as u32);
    let mut best = vec![C64::default(); nt];
    let mut best_d = f64::INFINITY;
    let mut x = vec![C64::default(); nt];
    for idx in 0..total {
        let mut r = idx;
        for xk in x.iter_mut() {
            *xk = c.points()[r % m];
            r /= m;
        }
        let d = ml_metric(y, h, &x);
        if d < best_d {
            best_d = d;
            best.copy_from_slice(&x);
        }
    }
    best
}

const EXHAUSTIVE_LIMIT: usize = 1 << 16;

/// Exact ML detection by depth-first sphere search on the QR-reduced
/// system, visiting children in order of distance and starting from the
/// radius of the Babai (ZF-SIC) point. Rank-deficient channels are solved
/// exhaustively when the candidate set is small, and otherwise regularized.
pub fn sphere_decode(y: &CVector, h: &CMatrix, c: &Constellation) -> Vec<C64> {
    let nt = h.ncols();
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let qr = h.clone().qr();
    let r = qr.r();
    let deficient = h.nrows() < nt || (0..nt).any(|k| r[(k, k)].norm() < 1e-12 * scale);
    if deficient {
        if c.order().checked_pow(nt as u32).is_some_and(|t| t <= EXHAUSTIVE_LIMIT) {
            return exhaustive_ml(y, h, c);
        }
        let eps = (1e-6 * scale).powi(2);
        let mut aug = CMatrix::zeros(h.nrows() + nt, nt);
        aug.rows_mut(0, h.nrows()).copy_from(h);
        for k in 0..nt {
            aug[(h.nrows() + k, k)] = C64::new(eps.sqrt(), 0.0);
        }
        let mut y_aug = CVector::zeros(h.nrows() + nt);
        y_aug.rows_mut(0, h.nrows()).copy_from(y);
        return sphere_decode(&y_aug, &aug, c);
    }
    let mut z = y.clone();
    qr.q_tr_mul(&mut z);
    let z = z.rows(0, nt).into_owned();
    SphereSearch::new(&r, &z, c).run()
}

struct SphereSearch<'a> {
    r: &'a CMatrix,
    z: &'a CVector,
    c: &'a Constellation,
    n: usize,
    x: Vec<C64>,
    best: Vec<C64>,
    best_d: f64,
}

impl<'a> SphereSearch<'a> {
    fn new(r: &'a CMatrix, z: &'a CVector, c: &'a Constellation) -> Self {
        let n = r.ncols();
        Self { r, z, c, n, x: vec![C64::default(); n], best: vec![C64::default(); n], best_d: f64::INFINITY }
    }

    // residual target of level k given decisions on levels above it
    fn center(&self, k: usize) -> C64 {
        let mut s = self.z[k];
        for j in k + 1..self.n {
            s -= self.r[(k, j)] * self.x[j];
        }
        s
    }

    fn run(mut self) -> Vec<C64> {
        // Babai point fixes the starting radius
        for k in (0..self.n).rev() {
            let e = self.center(k) / self.r[(k, k)];
            self.x[k] = self.c.nearest(e);
        }
        self.best_d = self.distance(0) + 1e-12 * (1.0 + self.z.norm_squared());
        self.best.copy_from_slice(&self.x);
        self.descend(self.n, 0.0);
        self.best
    }

    fn distance(&self, from: usize) -> f64 {
        (from..self.n).map(|k| (self.center(k) - self.r[(k, k)] * self.x[k]).norm_sqr()).sum()
    }

    fn descend(&mut self, level: usize, partial: f64) {
        if level == 0 {
            if partial < self.best_d {
                self.best_d = partial;
                self.best.copy_from_slice(&self.x);
            }
            return;
        }
        let k = level - 1;
        let center = self.center(k);
        let rkk = self.r[(k, k)];
        let mut children: Vec<(f64, C64)> =
            self.c.points().iter().map(|&s| ((center - rkk * s).norm_sqr(), s)).collect();
        children.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (d, s) in children {
            let total = partial + d;
            if total >= self.best_d {
                break;
            }
            self.x[k] = s;
            self.descend(k, total);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, draw_channel, freq_response, symbol_duration, ChannelProfile};
    use crate::linalg::c64;
    use crate::modem::{build_pilot_pattern, PilotKind, RbGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmatrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| complex_gaussian(rng, 1.0))
    }

    fn random_cvector(rng: &mut ChaCha8Rng, n: usize, var: f64) -> CVector {
        CVector::from_fn(n, |_, _| complex_gaussian(rng, var))
    }

    fn tap_covariance(delays: &[usize], powers: &[f64], n_sc: usize) -> CMatrix {
        CMatrix::from_fn(n_sc, n_sc, |a, b| {
            delays.iter().zip(powers).map(|(&d, &p)| steering(a, d, n_sc) * steering(b, d, n_sc).conj() * p).sum()
        })
    }

    #[test]
    fn identity_prior_is_per_subcarrier() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y: Vec<C64> = (0..16).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let x: Vec<C64> = (0..16).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let h = lmmse_ce_comb(&y, &x, &Covariance::Identity, 0.3).unwrap();
        for n in 0..16 {
            assert!((h[n] - x[n].conj() * y[n] / (x[n].norm_sqr() + 0.3)).norm() < 1e-15);
        }
        // identity in the dense form as well
        let dense = lmmse_ce_comb(&y, &x, &Covariance::Dense(CMatrix::identity(16, 16)), 0.3).unwrap();
        for n in 0..16 {
            assert!((h[n] - dense[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_gives_zero_forcing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<C64> = (0..32).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let delays = vec![0, 2, 5];
        let powers = vec![0.6, 0.3, 0.1];
        let h_true: Vec<C64> = {
            let a: Vec<C64> = powers.iter().map(|&p| complex_gaussian(&mut rng, p)).collect();
            (0..32).map(|n| delays.iter().zip(&a).map(|(&d, &a)| a * steering(n, d, 32)).sum()).collect()
        };
        let y: Vec<C64> = x.iter().zip(&h_true).map(|(x, h)| x * h).collect();
        let cov = Covariance::TapDiagonal { delays, powers };
        let h = lmmse_ce_comb(&y, &x, &cov, 1e-14).unwrap();
        for n in 0..32 {
            assert!((h[n] - y[n] / x[n]).norm() < 1e-6);
        }
    }

    #[test]
    fn tap_domain_form_equals_dense_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n_sc = 48;
        let delays = vec![0, 1, 4, 7];
        let powers = vec![0.4, 0.3, 0.2, 0.1];
        let dense = Covariance::Dense(tap_covariance(&delays, &powers, n_sc));
        let tap = Covariance::TapDiagonal { delays, powers };
        let cells: Vec<usize> = (0..n_sc).step_by(3).collect();
        let y: Vec<C64> = cells.iter().map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let x: Vec<C64> = cells.iter().map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let a = lmmse_cells(&cells, &y, &x, &tap, 0.05, n_sc).unwrap();
        let b = lmmse_cells(&cells, &y, &x, &dense, 0.05, n_sc).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn matches_monte_carlo_wiener_filter() {
        // E[h y^H] (E[y y^H])^-1 y estimated from draws, compared by MSE
        let n_sc = 8;
        let delays = vec![0, 1, 3];
        let powers = vec![0.5, 0.3, 0.2];
        let sigma2 = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<C64> = (0..n_sc).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let draw = |rng: &mut ChaCha8Rng| {
            let a: Vec<C64> = powers.iter().map(|&p| complex_gaussian(rng, p)).collect();
            let h = CVector::from_fn(n_sc, |n, _| delays.iter().zip(&a).map(|(&d, &a)| a * steering(n, d, n_sc)).sum());
            let y = CVector::from_fn(n_sc, |n, _| x[n] * h[n] + complex_gaussian(rng, sigma2));
            (h, y)
        };
        let mut r_hy = CMatrix::zeros(n_sc, n_sc);
        let mut r_yy = CMatrix::zeros(n_sc, n_sc);
        let draws = 200_000;
        for _ in 0..draws {
            let (h, y) = draw(&mut rng);
            r_hy += &h * y.adjoint();
            r_yy += &y * y.adjoint();
        }
        let wiener = r_hy * r_yy.try_inverse().unwrap();
        let cov = Covariance::TapDiagonal { delays: delays.clone(), powers: powers.clone() };
        let (mut mse_a, mut mse_b) = (0.0, 0.0);
        for _ in 0..5000 {
            let (h, y) = draw(&mut rng);
            let est = lmmse_ce_comb(y.as_slice(), &x, &cov, sigma2).unwrap();
            mse_a += est.iter().zip(h.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
            mse_b += (&wiener * &y - &h).norm_squared();
        }
        assert!((mse_a / mse_b - 1.0).abs() < 0.02, "{}", mse_a / mse_b);
    }

    #[test]
    fn interpolation_holds_edges() {
        let v = interpolate_linear(&[2, 6], &[c64(1.0, 0.0), c64(3.0, 0.0)], 9);
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 1.0, 1.0, 1.5, 2.0, 2.5, 3.0, 3.0, 3.0]);
    }

    fn siso_frame(kind: PilotKind, n_sc: usize, h: &dyn Fn(usize) -> C64, sigma2: f64, seed: u64) -> (ResourceGrid, ResourceGrid) {
        let c = Constellation::qam(16).unwrap();
        let (_, mut grid) = build_pilot_pattern(kind, 1, n_sc, RbGeometry::default(), &c, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        grid.fill_data(&c, &mut rng);
        let mut rx = ResourceGrid::new(n_sc, 7, 1);
        for i in 0..7 {
            for n in 0..n_sc {
                rx.set(i, n, 0, h(n) * grid.get(i, n, 0) + complex_gaussian(&mut rng, sigma2));
            }
        }
        (grid, rx)
    }

    #[test]
    fn full_mask_scattered_path_equals_comb() {
        let h = |n: usize| c64(1.0 + 0.01 * n as f64, -0.5);
        let (grid, rx) = siso_frame(PilotKind::SisoCombFull, 64, &h, 0.01, 5);
        let cov = Covariance::TapDiagonal { delays: vec![0, 3], powers: vec![0.7, 0.3] };
        let est = lmmse_ce(&rx, &grid, &cov, 0.01).unwrap();
        assert_eq!(est.source, CsiSource::Comb);
        let direct = lmmse_ce_comb(&rx.column(0, 0), &grid.column(0, 0), &cov, 0.01).unwrap();
        for i in 0..7 {
            assert_eq!(est.symbols[i].pair(0, 0), &direct[..]);
        }
    }

    #[test]
    fn flat_channel_interpolation_is_exact() {
        let g = c64(0.8, 0.6);
        let h = move |_n: usize| g;
        let (grid, rx) = siso_frame(PilotKind::SisoScattered, 96, &h, 0.0, 6);
        let est = lmmse_ce(&rx, &grid, &Covariance::Identity, 0.0).unwrap();
        assert_eq!(est.source, CsiSource::ScatteredInterpolated);
        for i in 0..7 {
            for n in 0..96 {
                assert!((est.symbols[i].get(0, 0, n) - g).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_pilot_subcarrier_is_flagged() {
        let c = Constellation::qam(4).unwrap();
        let (_, grid) = build_pilot_pattern(PilotKind::SisoScattered, 1, 4, RbGeometry::default(), &c, 1).unwrap();
        let mut rx = ResourceGrid::new(4, 7, 1);
        for i in 0..7 {
            for n in 0..4 {
                rx.set(i, n, 0, grid.get(i, n, 0));
            }
        }
        let est = lmmse_ce(&rx, &grid, &Covariance::Identity, 0.0).unwrap();
        assert!(est.flat_extrapolated);
        assert!((est.symbols[0].get(0, 0, 3) - c64(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn overlapping_pilots_reject_lmmse_estimation() {
        let c = Constellation::qam(4).unwrap();
        let (_, grid) = build_pilot_pattern(PilotKind::RcMimoOverlapping(3), 4, 16, RbGeometry::default(), &c, 1).unwrap();
        let rx = ResourceGrid::new(16, 7, 4);
        assert!(matches!(lmmse_ce(&rx, &grid, &Covariance::Identity, 0.1), Err(Error::Pilot(_))));
    }

    #[test]
    fn scattered_estimate_within_3db_of_dense() {
        let n_sc = 192;
        let cp = 24;
        let profile = ChannelProfile::exponential(6, cp - 1, 3.0, 0.0, symbol_duration(n_sc, cp, 15e3), 1, 1).unwrap();
        let sigma2 = 0.01;
        // per-subcarrier prior, so both layouts share the estimator
        let cov = Covariance::Identity;
        let c = Constellation::qam(16).unwrap();
        let (_, dense_grid) = build_pilot_pattern(PilotKind::SisoCombFull, 1, n_sc, RbGeometry::default(), &c, 1).unwrap();
        let (_, sparse_grid) = build_pilot_pattern(PilotKind::SisoCombDecimated, 1, n_sc, RbGeometry::default(), &c, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut mse_dense, mut mse_sparse) = (0.0, 0.0);
        for _ in 0..200 {
            let real = draw_channel(&profile, 7, &mut rng);
            let truth: Vec<FrequencyResponse> = (0..7).map(|i| freq_response(&real, i, n_sc)).collect();
            let noise: Vec<C64> = (0..7 * n_sc).map(|_| complex_gaussian(&mut rng, sigma2)).collect();
            for (grid, acc) in [(&dense_grid, &mut mse_dense), (&sparse_grid, &mut mse_sparse)] {
                let mut rx = ResourceGrid::new(n_sc, 7, 1);
                for i in 0..7 {
                    for n in 0..n_sc {
                        rx.set(i, n, 0, truth[i].get(0, 0, n) * grid.get(i, n, 0) + noise[i * n_sc + n]);
                    }
                }
                *acc += lmmse_ce(&rx, grid, &cov, sigma2).unwrap().mse(&truth);
            }
        }
        let gap_db = 10.0 * (mse_sparse / mse_dense).log10();
        assert!(gap_db < 3.0, "gap {gap_db} dB");
    }

    #[test]
    fn mimo_equalizer_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_cvector(&mut rng, 3, 1.0);
        let eye = CMatrix::identity(3, 3);
        let out = lmmse_equalize_mimo(&x, &eye, 0.0);
        assert!((out - &x).norm() < 1e-15);
        let h = random_cmatrix(&mut rng, 3, 3) + CMatrix::identity(3, 3) * c64(3.0, 0.0);
        let y = &h * &x;
        let out = lmmse_equalize_mimo(&y, &h, 1e-14);
        let zf = h.clone().lu().solve(&y).unwrap();
        assert!((out - zf).norm() < 1e-6);
    }

    #[test]
    fn siso_and_mimo_equalizers_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let h = complex_gaussian(&mut rng, 1.0);
            let y = complex_gaussian(&mut rng, 1.0);
            let s2: f64 = rng.random_range(0.001..1.0);
            let a = lmmse_equalize_siso(y, h, s2);
            let b = lmmse_equalize_mimo(&CVector::from_element(1, y), &CMatrix::from_element(1, 1, h), s2)[0];
            assert_eq!(a, b);
        }
    }

    #[test]
    fn siso_detection_edge_cases() {
        let c = Constellation::qam(16).unwrap();
        let x = c.points().to_vec();
        let h: Vec<C64> = (0..16).map(|k| c64(0.5 + k as f64 * 0.1, 0.2)).collect();
        let y: Vec<C64> = x.iter().zip(&h).map(|(x, h)| x * h).collect();
        assert_eq!(lmmse_detect_siso(&y, &h, 0.0, &c), x);
        // a dead subcarrier equalizes to 0, which the quantizer maps to the
        // lexicographically first of the four inner points
        let out = lmmse_detect_siso(&[c64(1.0, 1.0)], &[C64::default()], 0.1, &c);
        let a = 1.0 / 10f64.sqrt();
        assert_eq!(out[0], c64(-a, -a));
    }

    #[test]
    fn sphere_decoder_identity_channel_slices() {
        let c = Constellation::qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y = random_cvector(&mut rng, 3, 1.0);
        let out = sphere_decode(&y, &CMatrix::identity(3, 3), &c);
        for k in 0..3 {
            assert_eq!(out[k], c.nearest(y[k]));
        }
    }

    #[test]
    fn sphere_decoder_is_exact_ml() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (order, n, trials) in [(16, 2, 300), (4, 4, 100), (4, 3, 100)] {
            let c = Constellation::qam(order).unwrap();
            for _ in 0..trials {
                let h = random_cmatrix(&mut rng, n, n);
                let x: Vec<C64> = (0..n).map(|_| c.points()[rng.random_range(0..order)]).collect();
                let y = &h * CVector::from_column_slice(&x) + random_cvector(&mut rng, n, 0.3);
                assert_eq!(sphere_decode(&y, &h, &c), exhaustive_ml(&y, &h, &c));
            }
        }
    }

    #[test]
    fn sphere_decoder_handles_rank_deficiency() {
        let c = Constellation::qam(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let col = random_cvector(&mut rng, 2, 1.0);
        let h = CMatrix::from_columns(&[col.clone(), col * c64(2.0, 0.0)]);
        let y = random_cvector(&mut rng, 2, 1.0);
        let out = sphere_decode(&y, &h, &c);
        let best = ml_metric(&y, &h, &exhaustive_ml(&y, &h, &c));
        assert!((ml_metric(&y, &h, &out) - best).abs() < 1e-12);
    }

    #[test]
    fn lmmse_and_sphere_agree_at_high_snr() {
        let c = Constellation::qam(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        // 25 dB per stream
        let sigma2 = 10f64.powf(-2.5);
        let mut agree = 0;
        let trials = 2000;
        for _ in 0..trials {
            let h = random_cmatrix(&mut rng, 2, 2);
            let x: Vec<C64> = (0..2).map(|_| c.points()[rng.random_range(0..4)]).collect();
            let y = &h * CVector::from_column_slice(&x) + random_cvector(&mut rng, 2, sigma2);
            agree += (lmmse_detect_mimo(&y, &h, sigma2, &c) == sphere_decode(&y, &h, &c)) as usize;
        }
        assert!(agree as f64 >= 0.99 * trials as f64, "{agree}");
    }
}
