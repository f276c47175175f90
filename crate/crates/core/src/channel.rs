//! Tap-delay Rayleigh fading with an exponential power-delay profile,
//! Bessel-correlated evolution across OFDM symbols, and AWGN.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, C64};

/// Subcarrier spacing used to derive the OFDM symbol duration.
pub const SUBCARRIER_SPACING_HZ: f64 = 15_000.0;

/// Duration of one CP-OFDM symbol when `n_subcarriers` span
/// `n_subcarriers * spacing` Hz of sampling rate.
pub fn symbol_duration(n_subcarriers: usize, cp_len: usize, spacing_hz: f64) -> f64 {
    (n_subcarriers + cp_len) as f64 / (n_subcarriers as f64 * spacing_hz)
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian(rng: &mut impl Rng, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re * s, im * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub tap_delays: Vec<usize>,
    pub pdp_decay: f64,
    pub doppler_hz: f64,
    pub symbol_duration: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    tap_powers: Vec<f64>,
}

impl ChannelProfile {
    /// `n_taps` taps spread evenly over `[0, tau_max]` samples with powers
    /// `exp(-alpha * tau / tau_max)`, normalized to unit sum.
    pub fn exponential(
        n_taps: usize,
        tau_max: usize,
        alpha: f64,
        doppler_hz: f64,
        symbol_duration: f64,
        n_tx: usize,
        n_rx: usize,
    ) -> Result<Self> {
        if n_taps == 0 {
            return Err(Error::Profile("at least one tap is required".into()));
        }
        if n_taps > 1 && tau_max < n_taps - 1 {
            return Err(Error::Profile(format!("{n_taps} taps cannot have distinct delays within {tau_max} samples")));
        }
        let delays = if n_taps == 1 {
            vec![0]
        } else {
            (0..n_taps)
                .map(|l| ((l * tau_max) as f64 / (n_taps - 1) as f64).round() as usize)
                .collect()
        };
        Self::with_delays(delays, alpha, doppler_hz, symbol_duration, n_tx, n_rx)
    }

    pub fn with_delays(
        tap_delays: Vec<usize>,
        alpha: f64,
        doppler_hz: f64,
        symbol_duration: f64,
        n_tx: usize,
        n_rx: usize,
    ) -> Result<Self> {
        if tap_delays.is_empty() || tap_delays[0] != 0 {
            return Err(Error::Profile("first tap must sit at delay 0".into()));
        }
        if tap_delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Profile("tap delays must be strictly increasing".into()));
        }
        if !(doppler_hz >= 0.0) || !alpha.is_finite() || !(symbol_duration > 0.0) {
            return Err(Error::Profile("doppler, decay and symbol duration must be valid".into()));
        }
        if n_tx == 0 || n_rx == 0 {
            return Err(Error::Profile("antenna counts must be positive".into()));
        }
        let tau_max = *tap_delays.last().unwrap() as f64;
        let raw: Vec<f64> = tap_delays
            .iter()
            .map(|&t| if tau_max > 0.0 { (-alpha * t as f64 / tau_max).exp() } else { 1.0 })
            .collect();
        let total: f64 = raw.iter().sum();
        let tap_powers = raw.iter().map(|p| p / total).collect();
        Ok(Self { tap_delays, pdp_decay: alpha, doppler_hz, symbol_duration, n_tx, n_rx, tap_powers })
    }

    pub fn n_taps(&self) -> usize {
        self.tap_delays.len()
    }

    /// Normalized tap variances, summing to one.
    pub fn tap_powers(&self) -> &[f64] {
        &self.tap_powers
    }

    pub fn max_delay(&self) -> usize {
        *self.tap_delays.last().unwrap()
    }

    /// Correlation between the taps of adjacent OFDM symbols.
    pub fn symbol_correlation(&self) -> f64 {
        libm::j0(2.0 * std::f64::consts::PI * self.doppler_hz * self.symbol_duration)
    }
}

/// Tap coefficients per (OFDM symbol, tx antenna, rx antenna, tap).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub n_symbols: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub delays: Vec<usize>,
    taps: Vec<C64>,
}

impl ChannelRealization {
    #[inline]
    fn idx(&self, symbol: usize, tx: usize, rx: usize, tap: usize) -> usize {
        ((symbol * self.n_tx + tx) * self.n_rx + rx) * self.delays.len() + tap
    }

    pub fn tap(&self, symbol: usize, tx: usize, rx: usize, tap: usize) -> C64 {
        self.taps[self.idx(symbol, tx, rx, tap)]
    }

    pub fn taps(&self, symbol: usize, tx: usize, rx: usize) -> &[C64] {
        let i = self.idx(symbol, tx, rx, 0);
        &self.taps[i..i + self.delays.len()]
    }

    pub fn max_delay(&self) -> usize {
        *self.delays.last().unwrap()
    }

    /// A single-antenna channel with fixed taps on every symbol.
    pub fn fixed(delays: Vec<usize>, taps: Vec<C64>, n_symbols: usize) -> Self {
        assert_eq!(delays.len(), taps.len());
        let all = (0..n_symbols).flat_map(|_| taps.iter().cloned()).collect();
        Self { n_symbols, n_tx: 1, n_rx: 1, delays, taps: all }
    }
}

/// Draws i.i.d. Rayleigh taps for the first symbol and evolves them with
/// `a[i+1] = rho a[i] + sqrt(1 - rho^2) w`, `rho = J0(2 pi f_D dt)`.
pub fn draw_channel(profile: &ChannelProfile, n_symbols: usize, rng: &mut impl Rng) -> ChannelRealization {
    let n_taps = profile.n_taps();
    let per_symbol = profile.n_tx * profile.n_rx * n_taps;
    let mut taps = Vec::with_capacity(per_symbol * n_symbols);
    let powers = profile.tap_powers();
    for k in 0..per_symbol {
        taps.push(complex_gaussian(rng, powers[k % n_taps]));
    }
    let rho = profile.symbol_correlation();
    let innov = (1.0 - rho * rho).max(0.0).sqrt();
    for i in 1..n_symbols {
        let prev = (i - 1) * per_symbol;
        for k in 0..per_symbol {
            let a = taps[prev + k];
            let next = if innov == 0.0 { a } else { a * rho + complex_gaussian(rng, powers[k % n_taps]) * innov };
            taps.push(next);
        }
    }
    ChannelRealization { n_symbols, n_tx: profile.n_tx, n_rx: profile.n_rx, delays: profile.tap_delays.clone(), taps }
}

/// Receiver noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    /// Fixed complex noise variance per sample.
    Variance(f64),
    /// Noise variance set per receive antenna from the measured signal power
    /// over the useful (post-CP) window.
    SnrDb(f64),
}

/// Noise variance giving `snr_db` at a receive antenna when each of `n_tx`
/// antennas transmits unit average power through a unit-power profile.
pub fn nominal_noise_variance(snr_db: f64, n_tx: usize) -> f64 {
    n_tx as f64 / 10f64.powf(snr_db / 10.0)
}

/// Passes one CP-OFDM symbol per transmit antenna through the channel of
/// OFDM symbol `symbol`. Each sequence holds `cp_len` prefix samples followed
/// by the symbol core; history before the symbol is taken as zero, so the
/// post-CP window is the circular convolution of the core with the taps.
pub fn apply_channel(
    tx: &[Vec<C64>],
    cp_len: usize,
    real: &ChannelRealization,
    symbol: usize,
    noise: Noise,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<C64>>> {
    if tx.len() != real.n_tx {
        return Err(Error::Dimension(format!("{} tx streams for a {}-antenna channel", tx.len(), real.n_tx)));
    }
    if real.max_delay() > cp_len {
        return Err(Error::DelaySpread { delay: real.max_delay(), cp: cp_len });
    }
    let len = tx.first().map_or(0, |t| t.len());
    if tx.iter().any(|t| t.len() != len) || len <= cp_len {
        return Err(Error::Dimension("tx streams must share one length longer than the CP".into()));
    }
    let mut rx = vec![vec![C64::default(); len]; real.n_rx];
    for (q, out) in rx.iter_mut().enumerate() {
        for (p, x) in tx.iter().enumerate() {
            convolve_into(out, 0, len, x, &real.delays, real.taps(symbol, p, q));
        }
    }
    add_noise(&mut rx, cp_len, noise, rng);
    Ok(rx)
}

/// Passes a whole frame (consecutive CP-OFDM symbols of `symbol_len` samples
/// each) through the channel. Output sample `t` of symbol `i` uses the taps
/// of symbol `i`, and the delay line carries across symbol boundaries.
pub fn apply_channel_frame(
    tx: &[Vec<C64>],
    symbol_len: usize,
    cp_len: usize,
    real: &ChannelRealization,
    noise: Noise,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<C64>>> {
    if tx.len() != real.n_tx {
        return Err(Error::Dimension(format!("{} tx streams for a {}-antenna channel", tx.len(), real.n_tx)));
    }
    if real.max_delay() > cp_len {
        return Err(Error::DelaySpread { delay: real.max_delay(), cp: cp_len });
    }
    let len = tx.first().map_or(0, |t| t.len());
    if tx.iter().any(|t| t.len() != len) || len != symbol_len * real.n_symbols {
        return Err(Error::Dimension(format!(
            "frame of {len} samples does not hold {} symbols of {symbol_len}",
            real.n_symbols
        )));
    }
    let mut rx = vec![vec![C64::default(); len]; real.n_rx];
    for (q, out) in rx.iter_mut().enumerate() {
        for i in 0..real.n_symbols {
            for (p, x) in tx.iter().enumerate() {
                convolve_into(out, i * symbol_len, (i + 1) * symbol_len, x, &real.delays, real.taps(i, p, q));
            }
        }
    }
    if !matches!(noise, Noise::None) {
        // measured-SNR noise is referenced to each symbol's post-CP window
        for i in 0..real.n_symbols {
            let (start, end) = (i * symbol_len, (i + 1) * symbol_len);
            let vars = noise_variance(&rx, start + cp_len, end, noise);
            for (out, var) in rx.iter_mut().zip(vars) {
                if var > 0.0 && var.is_finite() {
                    for v in out[start..end].iter_mut() {
                        *v += complex_gaussian(rng, var);
                    }
                }
            }
        }
    }
    Ok(rx)
}

// out[t] += sum_l a_l x[t - d_l] for t in [start, end)
fn convolve_into(out: &mut [C64], start: usize, end: usize, x: &[C64], delays: &[usize], taps: &[C64]) {
    for (&d, &a) in delays.iter().zip(taps) {
        for t in start.max(d)..end {
            out[t] += a * x[t - d];
        }
    }
}

fn noise_variance(rx: &[Vec<C64>], start: usize, end: usize, noise: Noise) -> Vec<f64> {
    match noise {
        Noise::None => vec![0.0; rx.len()],
        Noise::Variance(v) => vec![v; rx.len()],
        Noise::SnrDb(db) => {
            let lin = 10f64.powf(db / 10.0);
            rx.iter()
                .map(|r| r[start..end].iter().map(|v| v.norm_sqr()).sum::<f64>() / (end - start) as f64 / lin)
                .collect()
        }
    }
}

fn add_noise(rx: &mut [Vec<C64>], cp_len: usize, noise: Noise, rng: &mut impl Rng) {
    if matches!(noise, Noise::None) {
        return;
    }
    let len = rx[0].len();
    let vars = noise_variance(rx, cp_len, len, noise);
    for (r, var) in rx.iter_mut().zip(vars) {
        if var == 0.0 || !var.is_finite() {
            continue;
        }
        for v in r.iter_mut() {
            *v += complex_gaussian(rng, var);
        }
    }
}

/// Per-subcarrier channel gains `H[n] = sum_l a_l exp(-2 pi j n tau_l / N_c)`
/// of one OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_subcarriers: usize,
    data: Vec<C64>,
}

impl FrequencyResponse {
    pub fn zeros(n_tx: usize, n_rx: usize, n_subcarriers: usize) -> Self {
        Self { n_tx, n_rx, n_subcarriers, data: vec![C64::default(); n_tx * n_rx * n_subcarriers] }
    }

    #[inline]
    fn idx(&self, tx: usize, rx: usize, n: usize) -> usize {
        (tx * self.n_rx + rx) * self.n_subcarriers + n
    }

    pub fn get(&self, tx: usize, rx: usize, n: usize) -> C64 {
        self.data[self.idx(tx, rx, n)]
    }

    pub fn set(&mut self, tx: usize, rx: usize, n: usize, v: C64) {
        let i = self.idx(tx, rx, n);
        self.data[i] = v;
    }

    pub fn pair(&self, tx: usize, rx: usize) -> &[C64] {
        let i = self.idx(tx, rx, 0);
        &self.data[i..i + self.n_subcarriers]
    }

    /// `n_rx x n_tx` channel matrix of subcarrier `n`.
    pub fn matrix(&self, n: usize) -> CMatrix {
        CMatrix::from_fn(self.n_rx, self.n_tx, |q, p| self.get(p, q, n))
    }

    pub fn squared_error(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum()
    }
}

pub fn freq_response(real: &ChannelRealization, symbol: usize, n_subcarriers: usize) -> FrequencyResponse {
    let mut h = FrequencyResponse::zeros(real.n_tx, real.n_rx, n_subcarriers);
    let w = -2.0 * std::f64::consts::PI / n_subcarriers as f64;
    for p in 0..real.n_tx {
        for q in 0..real.n_rx {
            let taps = real.taps(symbol, p, q);
            for n in 0..n_subcarriers {
                let v: C64 = real
                    .delays
                    .iter()
                    .zip(taps)
                    .map(|(&d, &a)| a * C64::from_polar(1.0, w * ((n * d) % n_subcarriers) as f64))
                    .sum();
                h.set(p, q, n, v);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fft;
    use crate::modem::add_cyclic_prefix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dt() -> f64 {
        symbol_duration(512, 64, SUBCARRIER_SPACING_HZ)
    }

    fn random_seq(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| complex_gaussian(rng, 1.0)).collect()
    }

    #[test]
    fn delays_and_powers() {
        let p = ChannelProfile::exponential(6, 63, 3.0, 0.0, dt(), 1, 1).unwrap();
        assert_eq!(p.tap_delays, vec![0, 13, 25, 38, 50, 63]);
        assert!((p.tap_powers().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ratio = p.tap_powers()[5] / p.tap_powers()[0];
        assert!((ratio - (-3.0f64).exp()).abs() < 1e-12);
        assert!(ChannelProfile::exponential(6, 3, 3.0, 0.0, dt(), 1, 1).is_err());
        assert!(ChannelProfile::with_delays(vec![1, 2], 3.0, 0.0, dt(), 1, 1).is_err());
    }

    #[test]
    fn zero_doppler_is_block_fading() {
        let p = ChannelProfile::exponential(6, 63, 3.0, 0.0, dt(), 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = draw_channel(&p, 7, &mut rng);
        for i in 1..7 {
            for a in 0..2 {
                for b in 0..2 {
                    assert_eq!(r.taps(i, a, b), r.taps(0, a, b));
                }
            }
        }
    }

    #[test]
    fn tap_variances_follow_profile() {
        let p = ChannelProfile::exponential(6, 63, 3.0, 0.0, dt(), 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let mut acc = [0.0; 6];
        for _ in 0..draws {
            let r = draw_channel(&p, 1, &mut rng);
            for (l, a) in r.taps(0, 0, 0).iter().enumerate() {
                acc[l] += a.norm_sqr();
            }
        }
        for (l, s) in acc.iter().enumerate() {
            let emp = s / draws as f64;
            let want = p.tap_powers()[l];
            // relative standard error of the estimate is 1/sqrt(draws)
            assert!((emp / want - 1.0).abs() < 0.01, "tap {l}: {emp} vs {want}");
        }
    }

    #[test]
    fn identity_channel_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_seq(&mut rng, 72);
        let r = ChannelRealization::fixed(vec![0], vec![c64(1.0, 0.0)], 1);
        let y = apply_channel(std::slice::from_ref(&x), 8, &r, 0, Noise::None, &mut rng).unwrap();
        assert_eq!(y[0], x);
        // infinite SNR adds nothing either
        let y = apply_channel(std::slice::from_ref(&x), 8, &r, 0, Noise::SnrDb(f64::INFINITY), &mut rng).unwrap();
        assert_eq!(y[0], x);
    }

    #[test]
    fn delay_beyond_cp_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = ChannelRealization::fixed(vec![0, 9], vec![c64(1.0, 0.0), c64(0.5, 0.0)], 1);
        let x = random_seq(&mut rng, 72);
        assert!(matches!(apply_channel(&[x], 8, &r, 0, Noise::None, &mut rng), Err(Error::DelaySpread { .. })));
    }

    #[test]
    fn post_cp_window_matches_frequency_response() {
        let n = 64;
        let cp = 8;
        let p = ChannelProfile::exponential(4, 8, 2.0, 0.0, dt(), 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let real = draw_channel(&p, 1, &mut rng);
        let freqs: Vec<Vec<C64>> = (0..2).map(|_| random_seq(&mut rng, n)).collect();
        let tx: Vec<Vec<C64>> =
            freqs.iter().map(|f| add_cyclic_prefix(&crate::linalg::ifft(f).unwrap(), cp)).collect();
        let rx = apply_channel(&tx, cp, &real, 0, Noise::None, &mut rng).unwrap();
        let h = freq_response(&real, 0, n);
        for q in 0..3 {
            let y = fft(&rx[q][cp..]).unwrap();
            for k in 0..n {
                let want: C64 = (0..2).map(|pp| h.get(pp, q, k) * freqs[pp][k]).sum();
                assert!((y[k] - want).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn freq_response_cases() {
        let a = c64(0.3, -0.7);
        let r = ChannelRealization::fixed(vec![0], vec![a], 1);
        assert!(freq_response(&r, 0, 16).pair(0, 0).iter().all(|v| (v - a).norm() < 1e-15));
        let r = ChannelRealization::fixed(vec![0, 8], vec![c64(1.0, 0.0), c64(1.0, 0.0)], 1);
        let h = freq_response(&r, 0, 16);
        for k in (1..16).step_by(2) {
            assert!(h.get(0, 0, k).norm() < 1e-12);
        }
        // FFT of the zero-padded tap vector, scaled back from the unitary convention
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let delays = vec![0, 3, 5, 11];
        let taps = random_seq(&mut rng, 4);
        let r = ChannelRealization::fixed(delays.clone(), taps.clone(), 1);
        let mut padded = vec![C64::default(); 32];
        for (d, t) in delays.iter().zip(&taps) {
            padded[*d] = *t;
        }
        let oracle = fft(&padded).unwrap();
        let h = freq_response(&r, 0, 32);
        for k in 0..32 {
            assert!((h.get(0, 0, k) - oracle[k] * (32f64).sqrt()).norm() < 1e-12);
        }
    }

    #[test]
    fn received_energy_matches_transmitted_in_expectation() {
        let n = 64;
        let cp = 8;
        let p = ChannelProfile::exponential(6, 8, 3.0, 0.0, dt(), 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut rx_e, mut tx_e) = (0.0, 0.0);
        for _ in 0..10_000 {
            let core = random_seq(&mut rng, n);
            let x = add_cyclic_prefix(&core, cp);
            let real = draw_channel(&p, 1, &mut rng);
            let y = apply_channel(&[x], cp, &real, 0, Noise::None, &mut rng).unwrap();
            rx_e += y[0][cp..].iter().map(|v| v.norm_sqr()).sum::<f64>();
            tx_e += core.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        assert!((rx_e / tx_e - 1.0).abs() < 0.02, "{}", rx_e / tx_e);
    }

    #[test]
    fn measured_snr_sets_noise_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = ChannelRealization::fixed(vec![0], vec![c64(1.0, 0.0)], 1);
        let x = random_seq(&mut rng, 20_008);
        let clean = apply_channel(std::slice::from_ref(&x), 8, &r, 0, Noise::None, &mut rng).unwrap();
        let noisy = apply_channel(&[x], 8, &r, 0, Noise::SnrDb(10.0), &mut rng).unwrap();
        let sig: f64 = clean[0][8..].iter().map(|v| v.norm_sqr()).sum();
        let err: f64 = clean[0][8..].iter().zip(&noisy[0][8..]).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!((10.0 * (sig / err).log10() - 10.0).abs() < 0.2);
    }

    #[test]
    fn frame_application_matches_per_symbol_on_block_fading() {
        let n = 32;
        let cp = 4;
        let p = ChannelProfile::exponential(3, 4, 1.0, 0.0, dt(), 1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let real = draw_channel(&p, 3, &mut rng);
        let symbols: Vec<Vec<C64>> = (0..3).map(|_| add_cyclic_prefix(&random_seq(&mut rng, n), cp)).collect();
        let frame: Vec<C64> = symbols.concat();
        let rx = apply_channel_frame(&[frame], n + cp, cp, &real, Noise::None, &mut rng).unwrap();
        for (i, s) in symbols.iter().enumerate() {
            let single = apply_channel(std::slice::from_ref(s), cp, &real, i, Noise::None, &mut rng).unwrap();
            for q in 0..2 {
                // identical after the CP; the CP itself sees the previous symbol's tail
                let got = &rx[q][i * (n + cp) + cp..(i + 1) * (n + cp)];
                for (a, b) in got.iter().zip(&single[q][cp..]) {
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }
}
