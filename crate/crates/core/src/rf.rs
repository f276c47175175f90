//! Transmit front end: oversampling, RAPP power amplifier and band limiting.
//!
//! Power levels are expressed in dB on the same scale as `|u_sat|^2`, so an
//! operating point of `P` dB means a PA input with mean power `10^(P/10)`.

use crate::error::Result;
use crate::linalg::{self, C64};

pub const OVERSAMPLING: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaConfig {
    pub gain: f64,
    /// Saturation amplitude; `f64::INFINITY` gives a linear amplifier.
    pub u_sat: f64,
    pub smoothness: f64,
    /// Mean input power in dB.
    pub input_power_db: f64,
}

impl PaConfig {
    /// Unit-gain RAPP amplifier with `|u_sat|^2 = usat_db` and smoothness `p`.
    pub fn rapp(usat_db: f64, p: f64, input_power_db: f64) -> Self {
        Self { gain: 1.0, u_sat: 10f64.powf(usat_db / 20.0), smoothness: p, input_power_db }
    }

    pub fn linear() -> Self {
        Self { gain: 1.0, u_sat: f64::INFINITY, smoothness: 3.0, input_power_db: 0.0 }
    }

    pub fn is_linear(&self) -> bool {
        self.u_sat.is_infinite()
    }

    /// Input power (dB) at which the AM/AM gain is compressed by 1 dB.
    pub fn compression_point_db(&self) -> f64 {
        let p = self.smoothness;
        let a = self.u_sat * (10f64.powf(p / 10.0) - 1.0).powf(1.0 / (2.0 * p));
        20.0 * a.log10()
    }

    /// Upper edge of the linear region, 3 dB below the 1 dB compression point.
    pub fn linear_threshold_db(&self) -> f64 {
        self.compression_point_db() - 3.0
    }

    pub fn with_input_power(mut self, db: f64) -> Self {
        self.input_power_db = db;
        self
    }

    fn input_scale(&self) -> f64 {
        10f64.powf(self.input_power_db / 20.0)
    }
}

#[inline]
fn rapp_sample(u: C64, cfg: &PaConfig) -> C64 {
    if cfg.is_linear() {
        return u * cfg.gain;
    }
    let two_p = 2.0 * cfg.smoothness;
    let r = u.norm() / cfg.u_sat;
    u * (cfg.gain / (1.0 + r.powf(two_p)).powf(1.0 / two_p))
}

/// Memoryless RAPP AM/AM law `g(u) = G0 u / (1 + (|u|/u_sat)^(2p))^(1/(2p))`.
pub fn rapp_pa(u: &[C64], cfg: &PaConfig) -> Vec<C64> {
    u.iter().map(|&v| rapp_sample(v, cfg)).collect()
}

// Places an N-bin spectrum into the low-pass bins of an L*N grid.
fn zero_pad_spectrum(x: &[C64], factor: usize) -> Vec<C64> {
    let n = x.len();
    let mut out = vec![C64::default(); n * factor];
    let half = n / 2;
    out[..half].copy_from_slice(&x[..half]);
    out[n * factor - (n - half)..].copy_from_slice(&x[half..]);
    out
}

fn take_baseband(x: &[C64], n: usize) -> Vec<C64> {
    let big = x.len();
    let half = n / 2;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&x[..half]);
    out.extend_from_slice(&x[big - (n - half)..]);
    out
}

/// Ideal band-limited interpolation of a periodic block by `factor`.
pub fn upsample(core: &[C64], factor: usize) -> Result<Vec<C64>> {
    let spec = linalg::fft(core)?;
    let mut up = linalg::ifft(&zero_pad_spectrum(&spec, factor))?;
    let g = (factor as f64).sqrt();
    up.iter_mut().for_each(|v| *v *= g);
    Ok(up)
}

/// Brick-wall low-pass to the original band followed by decimation.
pub fn downsample(up: &[C64], factor: usize) -> Result<Vec<C64>> {
    let n = up.len() / factor;
    let spec = linalg::fft(up)?;
    let mut out = linalg::ifft(&take_baseband(&spec, n))?;
    let g = 1.0 / (factor as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= g);
    Ok(out)
}

/// PA output on the oversampled grid for one OFDM symbol core, after input
/// scaling and before band limiting.
pub fn amplify_core(core: &[C64], cfg: &PaConfig) -> Result<Vec<C64>> {
    let s = cfg.input_scale();
    let mut up = upsample(core, OVERSAMPLING)?;
    up.iter_mut().for_each(|v| *v = rapp_sample(*v * s, cfg));
    Ok(up)
}

/// Front end for one OFDM symbol core: scale to the operating point,
/// oversample, amplify, band-limit, decimate and undo the scale and gain, so
/// a linear amplifier leaves the core unchanged.
pub fn front_end_core(core: &[C64], cfg: &PaConfig) -> Result<Vec<C64>> {
    if cfg.is_linear() {
        return Ok(core.to_vec());
    }
    let up = amplify_core(core, cfg)?;
    let mut out = downsample(&up, OVERSAMPLING)?;
    let undo = 1.0 / (cfg.input_scale() * cfg.gain);
    out.iter_mut().for_each(|v| *v *= undo);
    Ok(out)
}

/// Applies the front end to a frame of CP-OFDM symbols. Each core is
/// processed as a periodic block and its cyclic prefix regenerated, which
/// is what a PA sees on a CP-consistent continuous waveform.
pub fn front_end(tx: &[C64], symbol_len: usize, cp_len: usize, cfg: &PaConfig) -> Result<Vec<C64>> {
    if cfg.is_linear() {
        return Ok(tx.to_vec());
    }
    let mut out = Vec::with_capacity(tx.len());
    for sym in tx.chunks(symbol_len) {
        let core = front_end_core(&sym[cp_len..], cfg)?;
        out.extend_from_slice(&core[core.len() - cp_len..]);
        out.extend_from_slice(&core);
    }
    Ok(out)
}

/// Fraction of oversampled PA output power falling outside the signal band.
pub fn out_of_band_ratio(core: &[C64], cfg: &PaConfig) -> Result<f64> {
    let up = amplify_core(core, cfg)?;
    let spec = linalg::fft(&up)?;
    let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    let inband: f64 = take_baseband(&spec, core.len()).iter().map(|v| v.norm_sqr()).sum();
    Ok((total - inband).max(0.0) / total)
}

/// Error vector magnitude of `y` against `reference`, as an RMS ratio.
pub fn evm(reference: &[C64], y: &[C64]) -> f64 {
    let err: f64 = reference.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum();
    let sig: f64 = reference.iter().map(|a| a.norm_sqr()).sum();
    (err / sig).sqrt()
}

/// AM/AM transfer curve sampled at `n` input amplitudes spanning
/// `[0, max_ratio * u_sat]`.
pub fn am_am_curve(cfg: &PaConfig, n: usize, max_ratio: f64) -> Vec<(f64, f64)> {
    let top = if cfg.is_linear() { max_ratio } else { max_ratio * cfg.u_sat };
    (0..n)
        .map(|k| {
            let a = top * k as f64 / (n.max(2) - 1) as f64;
            (a, rapp_sample(C64::new(a, 0.0), cfg).norm())
        })
        .collect()
}
