//! Short-term memory capacity measurement.
//!
//! A system is driven by an i.i.d. real sequence `u(n)` uniform on
//! `[-0.5, 0.5]`, and for every delay `m` a linear readout of the system's
//! regressor is trained to reproduce `u(n - m)`. The regressor at time `n`
//! is the system state before `u(n)` arrives, so a buffer of length `M`
//! holds exactly `u(n-1), ..., u(n-M)`. The delay-`m` capacity is the
//! squared correlation between target and reconstruction on a held-out
//! half of the sequence.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, LeastSquares};
use crate::wesn::{InputCoupling, Reservoir, ReservoirConfig, WeightKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StmSystem {
    /// Tapped delay line of length `buffer_len`; the regressor is its content.
    Buffer { buffer_len: usize },
    /// Reservoir driven by the current input; the regressor is its state.
    Esn { n_neurons: usize },
    /// Buffered reservoir; the regressor is buffer and state together.
    Wesn { n_neurons: usize, buffer_len: usize },
}

impl StmSystem {
    pub fn regressor_width(&self) -> usize {
        match *self {
            StmSystem::Buffer { buffer_len } => buffer_len,
            StmSystem::Esn { n_neurons } => n_neurons,
            StmSystem::Wesn { n_neurons, buffer_len } => n_neurons + buffer_len,
        }
    }

    /// Default largest delay, twice the regressor width.
    pub fn default_m_max(&self) -> usize {
        2 * self.regressor_width()
    }

    pub fn name(&self) -> String {
        match *self {
            StmSystem::Buffer { buffer_len } => format!("buffer(M={buffer_len})"),
            StmSystem::Esn { n_neurons } => format!("esn(N_n={n_neurons})"),
            StmSystem::Wesn { n_neurons, buffer_len } => format!("wesn(N_n={n_neurons},M={buffer_len})"),
        }
    }
}

/// Reservoir settings shared by the ESN and WESN systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StmReservoir {
    pub spectral_target: f64,
    pub input_scale: f64,
    pub seed: u64,
}

impl Default for StmReservoir {
    fn default() -> Self {
        Self { spectral_target: 0.9, input_scale: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub system: StmSystem,
    /// Held-out capacity per delay `m = 1..=m_max`.
    pub mc_m: Vec<f64>,
    /// Training-set capacity per delay.
    pub train_mc_m: Vec<f64>,
    pub mc_total: f64,
    pub m_max: usize,
    pub n_samples: usize,
    pub noise_floor: f64,
}

impl McReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,mc_m,noise_floor\n");
        for (k, v) in self.mc_m.iter().enumerate() {
            let _ = writeln!(s, "{},{:.6e},{:.6e}", k + 1, v, self.noise_floor);
        }
        s
    }
}

/// Squared Pearson correlation.
pub fn squared_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab * sab / (saa * sbb)
    }
}

// Regressor columns r(n) for n = 0..len, where r(n) is the state after u(n-1).
fn regressors(system: StmSystem, res: &StmReservoir, u: &[f64]) -> Result<CMatrix> {
    let len = u.len();
    let width = system.regressor_width();
    // shift by one so column n only holds inputs up to n - 1
    let mut shifted = CMatrix::zeros(1, len);
    for n in 1..len {
        shifted[(0, n)] = c64(u[n - 1], 0.0);
    }
    let out = match system {
        StmSystem::Buffer { buffer_len } => {
            let mut r = CMatrix::zeros(width, len);
            for n in 0..len {
                for k in 0..buffer_len.min(n + 1) {
                    r[(k, n)] = shifted[(0, n - k)];
                }
            }
            r
        }
        StmSystem::Esn { n_neurons } => {
            let r = Reservoir::build(&reservoir_config(n_neurons, 1, InputCoupling::Current, res))?;
            r.run_states(&shifted, 0)?.states()
        }
        StmSystem::Wesn { n_neurons, buffer_len } => {
            let r = Reservoir::build(&reservoir_config(n_neurons, buffer_len, InputCoupling::Buffered, res))?;
            r.run_states(&shifted, 0)?.ext
        }
    };
    Ok(out)
}

fn reservoir_config(n_neurons: usize, buffer_len: usize, coupling: InputCoupling, res: &StmReservoir) -> ReservoirConfig {
    let mut cfg = ReservoirConfig::new(n_neurons, buffer_len, 1, 1, res.seed);
    cfg.spectral_target = res.spectral_target;
    cfg.input_scale = res.input_scale;
    cfg.coupling = coupling;
    cfg.weights = WeightKind::Real;
    cfg
}

const WASHOUT: usize = 100;
const FLOOR_CONTROLS: usize = 20;

/// Measures `MC_m` for `m = 1..=m_max` (default `2 x regressor width`) from
/// `n_samples` usable steps, half for training and half held out.
pub fn measure_mc(
    system: StmSystem,
    res: &StmReservoir,
    m_max: Option<usize>,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<McReport> {
    let width = system.regressor_width();
    if width == 0 {
        return Err(Error::Config("empty regressor".into()));
    }
    if n_samples < 10 * width {
        return Err(Error::Training(format!(
            "{n_samples} samples are fewer than 10x the regressor width {width}"
        )));
    }
    let m_max = m_max.unwrap_or_else(|| system.default_m_max());
    let lead = m_max + WASHOUT;
    let total = lead + n_samples;
    let u: Vec<f64> = (0..total).map(|_| rng.random_range(-0.5..=0.5)).collect();
    let reg = regressors(system, res, &u)?;

    let n_train = n_samples / 2;
    let n_test = n_samples - n_train;
    let x_train = reg.columns(lead, n_train).into_owned();
    let x_test = reg.columns(lead + n_train, n_test).into_owned();

    // targets: rows 0..m_max are u(n - m); the rest are shuffled controls
    let rows = m_max + FLOOR_CONTROLS;
    let mut targets = CMatrix::zeros(rows, n_samples);
    for m in 1..=m_max {
        for k in 0..n_samples {
            targets[(m - 1, k)] = c64(u[lead + k - m], 0.0);
        }
    }
    for c in 0..FLOOR_CONTROLS {
        let mut perm: Vec<f64> = u[lead..].to_vec();
        perm.shuffle(rng);
        for (k, v) in perm.into_iter().enumerate() {
            targets[(m_max + c, k)] = c64(v, 0.0);
        }
    }
    let t_train = targets.columns(0, n_train).into_owned();
    let t_test = targets.columns(n_train, n_test).into_owned();
    let w = LeastSquares::new(&x_train).solve(&t_train)?;
    let fit_train = &w * &x_train;
    let fit_test = &w * &x_test;

    let corr = |t: &CMatrix, f: &CMatrix, row: usize| {
        let a: Vec<f64> = t.row(row).iter().map(|v| v.re).collect();
        let b: Vec<f64> = f.row(row).iter().map(|v| v.re).collect();
        squared_correlation(&a, &b)
    };
    let mc_m: Vec<f64> = (0..m_max).map(|r| corr(&t_test, &fit_test, r)).collect();
    let train_mc_m: Vec<f64> = (0..m_max).map(|r| corr(&t_train, &fit_train, r)).collect();
    let noise_floor = (m_max..rows).map(|r| corr(&t_test, &fit_test, r)).sum::<f64>() / FLOOR_CONTROLS as f64;
    let mc_total = mc_m.iter().map(|v| (v - noise_floor).max(0.0)).sum();
    Ok(McReport { system, mc_m, train_mc_m, mc_total, m_max, n_samples, noise_floor })
}

/// Reference values for the buffer/ESN combination inequality at measured
/// capacities: `2 min(MC_W, MC_ESN)` for the linear weighting and
/// `2 MC_W MC_ESN / (MC_W + MC_ESN)` for the squared weighting, each the
/// infimum over the mixing weight.
pub fn combination_bounds(mc_buffer: f64, mc_esn: f64) -> (f64, f64) {
    let linear = 2.0 * mc_buffer.min(mc_esn);
    let squared = if mc_buffer + mc_esn > 0.0 { 2.0 * mc_buffer * mc_esn / (mc_buffer + mc_esn) } else { 0.0 };
    (linear, squared)
}
