//! Monte-Carlo BER experiments.
//!
//! Every trial draws one frame: pilots and random data on a 7-symbol grid,
//! the transmit front end, a fading channel and noise. Each detector sees
//! the received waveforms and the pilot-only grid, and its decisions on the
//! data cells are scored against the transmitted bits. Trial `t` draws from
//! substreams `4t..4t+3` of a ChaCha generator keyed by the master seed, so
//! results do not depend on scheduling and every sweep point sees the same
//! random draws.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{CovarianceModel, Detector, ExperimentConfig, PaModel, SweepPoint};
use crate::baselines::{self, CsiEstimate, Covariance, RxSpectrum};
use crate::channel::{self, ChannelProfile, ChannelRealization, Noise, SUBCARRIER_SPACING_HZ};
use crate::error::Result;
use crate::linalg::{CMatrix, CVector, C64};
use crate::modem::{self, Constellation, PilotKind, PilotPattern, PilotSource, RbGeometry, ResourceGrid};
use crate::rf::{self, PaConfig};
use crate::wesn::{self, FrameLayout, Reservoir, ReservoirConfig};

/// How trials are scheduled. Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Worker pool of the given size (0 picks the rayon default).
    Parallel { jobs: usize },
}

impl Execution {
    /// `--jobs` value, falling back to `WESN_JOBS`; one job means sequential.
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        let jobs = jobs.or_else(|| std::env::var("WESN_JOBS").ok().and_then(|v| v.trim().parse().ok()));
        match jobs {
            Some(1) => Self::Sequential,
            Some(j) => Self::Parallel { jobs: j },
            None => Self::Parallel { jobs: 0 },
        }
    }

    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match *self {
            Self::Sequential => (0..n).map(f).collect(),
            Self::Parallel { jobs } => parallel_map(jobs, n, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync + Send>(jobs: usize, n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync + Send>(_jobs: usize, n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Everything fixed at one sweep point.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub n_antennas: usize,
    pub layout: FrameLayout,
    pub constellation: Constellation,
    pub pilot_kind: PilotKind,
    pub profile: ChannelProfile,
    pub pa: PaConfig,
    pub sigma2: f64,
    pub covariance: Covariance,
    pub n_neurons: usize,
    pub buffer_len: usize,
    pub spectral_target: f64,
    pub input_scale: f64,
    pub readout_delay: usize,
}

impl Scenario {
    pub fn new(cfg: &ExperimentConfig, pt: &SweepPoint) -> Result<Self> {
        let n = cfg.n_antennas;
        let n_sym = RbGeometry::default().symbols;
        let layout = FrameLayout { n_subcarriers: cfg.n_subcarriers, cp_len: cfg.cp_len, n_symbols: n_sym };
        let dt = channel::symbol_duration(cfg.n_subcarriers, cfg.cp_len, SUBCARRIER_SPACING_HZ);
        let profile = ChannelProfile::exponential(cfg.n_taps, cfg.tau_max, cfg.pdp_decay, pt.doppler_hz, dt, n, n)?;
        let pa = match cfg.pa {
            PaModel::Linear => PaConfig::linear(),
            PaModel::Rapp => PaConfig::rapp(cfg.usat_db, cfg.smoothness, pt.pa_power_db),
        };
        let covariance = match cfg.covariance {
            CovarianceModel::Identity => Covariance::Identity,
            CovarianceModel::Tap => {
                Covariance::TapDiagonal { delays: profile.tap_delays.clone(), powers: profile.tap_powers().to_vec() }
            }
        };
        Ok(Self {
            n_antennas: n,
            layout,
            constellation: Constellation::qam(cfg.modulation)?,
            pilot_kind: cfg.pilots.kind(pt.pilot_symbols),
            profile,
            pa,
            sigma2: channel::nominal_noise_variance(pt.snr_db, n),
            covariance,
            n_neurons: pt.n_neurons,
            buffer_len: pt.buffer_len,
            spectral_target: cfg.spectral_target,
            input_scale: cfg.input_scale,
            readout_delay: cfg.readout_delay,
        })
    }

    pub fn reservoir_config(&self, buffer_len: usize, seed: u64) -> ReservoirConfig {
        let mut rc = ReservoirConfig::new(self.n_neurons, buffer_len, self.n_antennas, self.n_antennas, seed);
        rc.spectral_target = self.spectral_target;
        rc.input_scale = self.input_scale;
        rc
    }
}

/// One simulated transmission.
#[derive(Debug, Clone)]
pub struct Frame {
    pub pattern: PilotPattern,
    /// Pilot and null cells only; data cells are zero.
    pub pilots: ResourceGrid,
    /// Transmitted grid.
    pub grid: ResourceGrid,
    /// Data bits in `grid.data_cells()` order.
    pub bits: Vec<u8>,
    pub rx: Vec<Vec<C64>>,
    pub channel: ChannelRealization,
    pub reservoir_seed: u64,
}

fn substream(master: u64, trial: usize, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(4 * trial as u64 + k);
    r
}

pub fn simulate_frame(scn: &Scenario, master_seed: u64, trial: usize) -> Result<Frame> {
    let mut seeds = substream(master_seed, trial, 0);
    let pilot_seed: u64 = seeds.random();
    let reservoir_seed: u64 = seeds.random();
    let mut data_rng = substream(master_seed, trial, 1);
    let mut channel_rng = substream(master_seed, trial, 2);
    let mut noise_rng = substream(master_seed, trial, 3);

    let l = scn.layout;
    let (pattern, pilots) = modem::build_pilot_pattern(
        scn.pilot_kind,
        scn.n_antennas,
        l.n_subcarriers,
        RbGeometry::default(),
        &scn.constellation,
        pilot_seed,
    )?;
    let mut grid = pilots.clone();
    let bits = grid.fill_data(&scn.constellation, &mut data_rng);
    let mut tx = Vec::with_capacity(scn.n_antennas);
    for p in 0..scn.n_antennas {
        let mut wave = Vec::with_capacity(l.frame_len());
        for i in 0..l.n_symbols {
            wave.extend(modem::ofdm_modulate(&grid.column(i, p), l.cp_len)?);
        }
        tx.push(rf::front_end(&wave, l.symbol_len(), l.cp_len, &scn.pa)?);
    }
    let real = channel::draw_channel(&scn.profile, l.n_symbols, &mut channel_rng);
    let rx = channel::apply_channel_frame(&tx, l.symbol_len(), l.cp_len, &real, Noise::Variance(scn.sigma2), &mut noise_rng)?;
    Ok(Frame { pattern, pilots, grid, bits, rx, channel: real, reservoir_seed })
}

/// Decided grid of one detector plus its pilot-cell (training) decisions.
#[derive(Debug, Clone)]
pub struct Detection {
    pub decided: ResourceGrid,
    pub trained_on_pilots: bool,
}

/// Runs `det` on a frame. Detectors only read `frame.rx`, `frame.pilots`
/// and `frame.pattern`; the perfect-CSI baseline also reads the channel.
pub fn run_detector(det: Detector, scn: &Scenario, frame: &Frame) -> Result<Detection> {
    detect_with(det, scn, &frame.rx, &frame.pilots, &frame.pattern, &frame.channel, frame.reservoir_seed)
}

pub fn detect_with(
    det: Detector,
    scn: &Scenario,
    rx: &[Vec<C64>],
    pilots: &dyn PilotSource,
    pattern: &PilotPattern,
    channel_truth: &ChannelRealization,
    reservoir_seed: u64,
) -> Result<Detection> {
    match det {
        Detector::Wesn | Detector::Esn => {
            let m = if det == Detector::Esn { 1 } else { scn.buffer_len };
            let res = Reservoir::build(&scn.reservoir_config(m, reservoir_seed))?;
            // the delayed target must stay inside the buffer window
            let delay = scn.readout_delay.min(m - 1);
            let states = res.frame_states(rx, scn.layout, delay)?;
            let readout = wesn::train_for_pattern(&states, pilots, pattern)?;
            let decided = wesn::detect(&states, &readout, &scn.constellation)?;
            Ok(Detection { decided, trained_on_pilots: true })
        }
        Detector::LmmseLmmse | Detector::LmmseSd | Detector::PerfectLmmse => {
            let spec = rx_spectrum(rx, scn.layout)?;
            let csi = if det == Detector::PerfectLmmse {
                let n_sc = scn.layout.n_subcarriers;
                CsiEstimate::perfect((0..scn.layout.n_symbols).map(|i| channel::freq_response(channel_truth, i, n_sc)).collect())
            } else {
                baselines::lmmse_ce(&spec, pilots, &scn.covariance, scn.sigma2)?
            };
            let decided = coherent_detect(&spec, &csi, pilots, scn, det == Detector::LmmseSd);
            Ok(Detection { decided, trained_on_pilots: false })
        }
    }
}

/// Demodulates every OFDM symbol of every receive antenna.
pub fn rx_spectrum(rx: &[Vec<C64>], l: FrameLayout) -> Result<RxSpectrum> {
    let mut spec = ResourceGrid::new(l.n_subcarriers, l.n_symbols, rx.len());
    for (q, wave) in rx.iter().enumerate() {
        for i in 0..l.n_symbols {
            let s = modem::ofdm_demodulate(&wave[i * l.symbol_len()..(i + 1) * l.symbol_len()], l.cp_len)?;
            for (n, v) in s.into_iter().enumerate() {
                spec.set(i, n, q, v);
            }
        }
    }
    Ok(spec)
}

// Per-cell detection; known streams of a cell are cancelled before solving
// for the unknown ones.
fn coherent_detect(spec: &RxSpectrum, csi: &CsiEstimate, pilots: &dyn PilotSource, scn: &Scenario, sphere: bool) -> ResourceGrid {
    let (n_sym, n_sc, n_tx) = pilots.dims();
    let n_rx = spec.n_streams();
    let c = &scn.constellation;
    let mut out = ResourceGrid::new(n_sc, n_sym, n_tx);
    for i in 0..n_sym {
        for n in 0..n_sc {
            let known: Vec<Option<C64>> =
                (0..n_tx).map(|p| pilots.pilot(i, n, p).or_else(|| pilots.is_null(i, n, p).then(C64::default))).collect();
            let unknown: Vec<usize> = (0..n_tx).filter(|&p| known[p].is_none()).collect();
            if unknown.is_empty() {
                continue;
            }
            let h = csi.symbols[i].matrix(n);
            let mut y = CVector::from_fn(n_rx, |q, _| spec.get(i, n, q));
            for (p, v) in known.iter().enumerate() {
                if let Some(v) = v {
                    y -= h.column(p) * *v;
                }
            }
            let hu = CMatrix::from_fn(n_rx, unknown.len(), |q, k| h[(q, unknown[k])]);
            let x = if sphere { baselines::sphere_decode(&y, &hu, c) } else { baselines::lmmse_detect_mimo(&y, &hu, scn.sigma2, c) };
            for (k, &p) in unknown.iter().enumerate() {
                out.set(i, n, p, x[k]);
            }
        }
    }
    out
}

/// Bit errors of `decided` over the transmitted grid's data cells.
pub fn data_bit_errors(grid: &ResourceGrid, bits: &[u8], decided: &ResourceGrid, c: &Constellation) -> (usize, usize) {
    let k = c.bits_per_symbol();
    let mut errors = 0;
    let mut buf = Vec::with_capacity(k);
    let mut count = 0;
    for (idx, (i, n, p)) in grid.data_cells().enumerate() {
        buf.clear();
        c.label_bits(c.nearest_label(decided.get(i, n, p)), &mut buf);
        errors += buf.iter().zip(&bits[idx * k..(idx + 1) * k]).filter(|(a, b)| a != b).count();
        count += k;
    }
    (errors, count)
}

/// Bit errors of `decided` over the pilot cells (training-set BER).
pub fn pilot_bit_errors(pilots: &ResourceGrid, decided: &ResourceGrid, c: &Constellation) -> (usize, usize) {
    let (n_sym, n_sc, n_st) = pilots.dims();
    let k = c.bits_per_symbol();
    let (mut a, mut b) = (Vec::with_capacity(k), Vec::with_capacity(k));
    let (mut errors, mut count) = (0, 0);
    for i in 0..n_sym {
        for n in 0..n_sc {
            for p in 0..n_st {
                if let Some(v) = pilots.pilot(i, n, p) {
                    a.clear();
                    b.clear();
                    c.label_bits(c.nearest_label(v), &mut a);
                    c.label_bits(c.nearest_label(decided.get(i, n, p)), &mut b);
                    errors += a.iter().zip(&b).filter(|(x, y)| x != y).count();
                    count += k;
                }
            }
        }
    }
    (errors, count)
}

/// Per-detector score of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialScore {
    pub errors: usize,
    pub bits: usize,
    pub train: Option<(usize, usize)>,
}

impl TrialScore {
    pub fn ber(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }
}

pub fn run_trial(cfg: &ExperimentConfig, scn: &Scenario, trial: usize) -> Result<Vec<TrialScore>> {
    let frame = simulate_frame(scn, cfg.master_seed, trial)?;
    cfg.detectors
        .iter()
        .map(|&det| {
            let d = run_detector(det, scn, &frame)?;
            let (errors, bits) = data_bit_errors(&frame.grid, &frame.bits, &d.decided, &scn.constellation);
            let train = (cfg.training_ber && d.trained_on_pilots)
                .then(|| pilot_bit_errors(&frame.pilots, &d.decided, &scn.constellation));
            Ok(TrialScore { errors, bits, train })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerReport {
    pub detector: Detector,
    pub point: SweepPoint,
    pub n_trials: usize,
    pub n_bits: usize,
    pub bit_errors: usize,
    /// Mean of the per-trial BERs.
    pub ber_mean: f64,
    /// Half-width of the normal-approximation 95% interval of the mean.
    pub ber_ci95: f64,
    pub train_ber: Option<f64>,
}

impl BerReport {
    pub fn ci(&self) -> (f64, f64) {
        (self.ber_mean - self.ber_ci95, self.ber_mean + self.ber_ci95)
    }
}

pub fn summarize(detector: Detector, point: SweepPoint, scores: &[TrialScore]) -> BerReport {
    let n = scores.len();
    let bers: Vec<f64> = scores.iter().map(TrialScore::ber).collect();
    let mean = bers.iter().sum::<f64>() / n as f64;
    let ci = if n > 1 {
        let var = bers.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    let train = scores.iter().map(|s| s.train).collect::<Option<Vec<_>>>().filter(|t| !t.is_empty()).map(|t| {
        let (e, b) = t.iter().fold((0, 0), |(e, b), (x, y)| (e + x, b + y));
        e as f64 / b as f64
    });
    BerReport {
        detector,
        point,
        n_trials: n,
        n_bits: scores.iter().map(|s| s.bits).sum(),
        bit_errors: scores.iter().map(|s| s.errors).sum(),
        ber_mean: mean,
        ber_ci95: ci,
        train_ber: train,
    }
}

/// Runs every (sweep point, trial) pair and aggregates per detector.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<BerReport>> {
    cfg.validate()?;
    let points = cfg.sweep_points();
    let scenarios: Vec<Scenario> = points.iter().map(|p| Scenario::new(cfg, p)).collect::<Result<_>>()?;
    let n_trials = cfg.n_trials;
    let results = exec.map(points.len() * n_trials, |task| run_trial(cfg, &scenarios[task / n_trials], task % n_trials));
    let mut reports = Vec::with_capacity(points.len() * cfg.detectors.len());
    let mut iter = results.into_iter();
    for pt in &points {
        let per_trial: Vec<Vec<TrialScore>> = iter.by_ref().take(n_trials).collect::<Result<_>>()?;
        for (k, &det) in cfg.detectors.iter().enumerate() {
            let scores: Vec<TrialScore> = per_trial.iter().map(|t| t[k]).collect();
            reports.push(summarize(det, *pt, &scores));
        }
    }
    Ok(reports)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6e}")
}

pub const BER_CSV_HEADER: &str =
    "detector,snr_db,pa_power_db,n_neurons,buffer_len,pilot_symbols,doppler_hz,n_trials,n_bits,bit_errors,ber_mean,ber_ci95,train_ber";

pub fn reports_to_csv(reports: &[BerReport]) -> String {
    let mut s = String::from(BER_CSV_HEADER);
    s.push('\n');
    for r in reports {
        let p = &r.point;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.detector,
            fmt_f(p.snr_db),
            fmt_f(p.pa_power_db),
            p.n_neurons,
            p.buffer_len,
            p.pilot_symbols,
            fmt_f(p.doppler_hz),
            r.n_trials,
            r.n_bits,
            r.bit_errors,
            fmt_f(r.ber_mean),
            fmt_f(r.ber_ci95),
            r.train_ber.map(fmt_f).unwrap_or_default()
        );
    }
    s
}
