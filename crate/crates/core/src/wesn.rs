//! Windowed echo state network (WESN) symbol detector.
//!
//! Each receive antenna feeds a tapped delay buffer of `M` samples. The
//! buffer drives a fixed random reservoir with split-complex `tanh`
//! activation, and a linear readout acting on the buffer contents and the
//! reservoir states together is fitted to the time-domain pilot waveforms.
//! With `M = 1` the detector is a plain ESN.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::complex_gaussian;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMatrix, CVector, C64};
use crate::modem::{Constellation, PilotKind, PilotPattern, PilotSource, ResourceGrid};

/// How the input buffer reaches the reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputCoupling {
    /// The whole buffer drives the reservoir through the input layer.
    Buffered,
    /// Only the newest sample drives the reservoir; the buffer reaches the
    /// readout alone.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    Complex,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_neurons: usize,
    pub buffer_len: usize,
    pub spectral_target: f64,
    pub input_scale: f64,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub seed: u64,
    pub coupling: InputCoupling,
    pub weights: WeightKind,
}

impl ReservoirConfig {
    pub fn new(n_neurons: usize, buffer_len: usize, n_inputs: usize, n_outputs: usize, seed: u64) -> Self {
        Self {
            n_neurons,
            buffer_len,
            spectral_target: 0.9,
            input_scale: 0.5,
            n_inputs,
            n_outputs,
            seed,
            coupling: InputCoupling::Buffered,
            weights: WeightKind::Complex,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_neurons == 0 {
            return Err(Error::Reservoir("at least one neuron is required".into()));
        }
        if self.buffer_len == 0 {
            return Err(Error::Reservoir("buffer length must be at least 1".into()));
        }
        if !(self.spectral_target > 0.0 && self.spectral_target < 1.0) {
            return Err(Error::Reservoir(format!("spectral target {} is outside (0, 1)", self.spectral_target)));
        }
        if !(self.input_scale > 0.0) || !self.input_scale.is_finite() {
            return Err(Error::Reservoir("input scale must be positive".into()));
        }
        if self.n_inputs == 0 || self.n_outputs == 0 {
            return Err(Error::Reservoir("input and output counts must be positive".into()));
        }
        Ok(())
    }

    /// Length of the buffer part of the extended state.
    pub fn buffer_width(&self) -> usize {
        self.buffer_len * self.n_inputs
    }

    /// Length of the extended state `[buffer; states]`.
    pub fn regressor_width(&self) -> usize {
        self.buffer_width() + self.n_neurons
    }

    fn input_width(&self) -> usize {
        match self.coupling {
            InputCoupling::Buffered => self.buffer_width(),
            InputCoupling::Current => self.n_inputs,
        }
    }
}

#[inline]
fn split_tanh(z: C64) -> C64 {
    c64(z.re.tanh(), z.im.tanh())
}

/// A fixed random reservoir. `W` is rescaled so that its largest singular
/// value equals the spectral target, which makes the state map a
/// contraction and guarantees the echo state property.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    pub config: ReservoirConfig,
    w_in: CMatrix,
    w: CMatrix,
}

impl Reservoir {
    pub fn build(config: &ReservoirConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_neurons;
        let mut w_rng = ChaCha8Rng::seed_from_u64(config.seed);
        w_rng.set_stream(1);
        let mut w = CMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                w[(i, j)] = match config.weights {
                    WeightKind::Complex => complex_gaussian(&mut w_rng, 1.0),
                    WeightKind::Real => c64(complex_gaussian(&mut w_rng, 2.0).re, 0.0),
                };
            }
        }
        let s = linalg::max_singular_value(&w);
        w *= c64(config.spectral_target / s, 0.0);

        // Tap-major column order keeps shorter buffers a prefix of longer ones.
        let mut in_rng = ChaCha8Rng::seed_from_u64(config.seed);
        in_rng.set_stream(2);
        let a = config.input_scale;
        let width = config.input_width();
        let mut w_in = CMatrix::zeros(n, width);
        for j in 0..width {
            for i in 0..n {
                let re = in_rng.random_range(-a..=a);
                let im = in_rng.random_range(-a..=a);
                w_in[(i, j)] = match config.weights {
                    WeightKind::Complex => c64(re, im),
                    WeightKind::Real => c64(re, 0.0),
                };
            }
        }
        Ok(Self { config: config.clone(), w_in, w })
    }

    pub fn w_in(&self) -> &CMatrix {
        &self.w_in
    }

    pub fn w(&self) -> &CMatrix {
        &self.w
    }

    /// Runs the reservoir over `inputs` (`n_inputs x T`) from the zero state
    /// and returns the extended states with the first `washout` steps dropped.
    pub fn run_states(&self, inputs: &CMatrix, washout: usize) -> Result<Trajectory> {
        self.run_from(inputs, None, washout)
    }

    /// As `run_states`, starting from `initial` (the state before the first input).
    pub fn run_from(&self, inputs: &CMatrix, initial: Option<&CVector>, washout: usize) -> Result<Trajectory> {
        let cfg = &self.config;
        if inputs.nrows() != cfg.n_inputs {
            return Err(Error::Dimension(format!("{} input rows for {} inputs", inputs.nrows(), cfg.n_inputs)));
        }
        let t_len = inputs.ncols();
        if t_len <= washout {
            return Err(Error::Training(format!("{t_len} steps do not exceed a washout of {washout}")));
        }
        let nr = cfg.n_inputs;
        let bw = cfg.buffer_width();
        let width = cfg.regressor_width();
        let n = cfg.n_neurons;

        let mut ext = CMatrix::zeros(width, t_len);
        for t in 0..t_len {
            for k in 0..cfg.buffer_len.min(t + 1) {
                for j in 0..nr {
                    ext[(k * nr + j, t)] = inputs[(j, t - k)];
                }
            }
        }
        // input drive for every step at once
        let drive = match cfg.coupling {
            InputCoupling::Buffered => &self.w_in * ext.rows(0, bw),
            InputCoupling::Current => &self.w_in * inputs,
        };
        let mut state = match initial {
            Some(s) if s.len() != n => return Err(Error::Dimension("initial state length".into())),
            Some(s) => s.clone(),
            None => CVector::zeros(n),
        };
        let mut next = CVector::zeros(n);
        for t in 0..t_len {
            next.copy_from(&drive.column(t));
            next.gemv(c64(1.0, 0.0), &self.w, &state, c64(1.0, 0.0));
            for (dst, src) in state.iter_mut().zip(next.iter()) {
                *dst = split_tanh(*src);
            }
            ext.view_mut((bw, t), (n, 1)).copy_from(&state);
        }
        let keep = ext.columns(washout, t_len - washout).into_owned();
        Ok(Trajectory { buffer_width: bw, ext: keep })
    }
}

/// Extended-state trajectory: rows are `[buffer (M*N_r); states (N_n)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub buffer_width: usize,
    pub ext: CMatrix,
}

impl Trajectory {
    pub fn states(&self) -> CMatrix {
        let n = self.ext.nrows() - self.buffer_width;
        self.ext.rows(self.buffer_width, n).into_owned()
    }

    pub fn buffer(&self) -> CMatrix {
        self.ext.rows(0, self.buffer_width).into_owned()
    }
}

/// Trained linear readout mapping extended states to output streams.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub w_out: CMatrix,
}

/// Time layout of a received frame of CP-OFDM symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub n_subcarriers: usize,
    pub cp_len: usize,
    pub n_symbols: usize,
}

impl FrameLayout {
    pub fn symbol_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    pub fn frame_len(&self) -> usize {
        self.symbol_len() * self.n_symbols
    }
}

/// Reservoir response to one received frame. The first CP warms the
/// reservoir up, states carry over between symbols, and `N_c` regressor
/// columns are kept per symbol starting `readout_delay` samples after the CP.
#[derive(Debug, Clone)]
pub struct FrameStates {
    pub layout: FrameLayout,
    pub readout_delay: usize,
    ext: CMatrix,
}

impl FrameStates {
    /// Regressor block `(M*N_r + N_n) x N_c` of OFDM symbol `i`.
    pub fn symbol_block(&self, i: usize) -> CMatrix {
        let l = &self.layout;
        let start = i * l.symbol_len() + l.cp_len + self.readout_delay;
        self.ext.columns(start, l.n_subcarriers).into_owned()
    }

    pub fn width(&self) -> usize {
        self.ext.nrows()
    }
}

/// Root-mean-square amplitude over all antennas and samples.
pub fn rms(rx: &[Vec<C64>]) -> f64 {
    let (sum, count) = rx.iter().fold((0.0, 0usize), |(s, c), r| (s + r.iter().map(|v| v.norm_sqr()).sum::<f64>(), c + r.len()));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

impl Reservoir {
    /// Drives the reservoir with a received frame (one waveform per antenna),
    /// normalized to unit RMS. `readout_delay` zero samples are appended so
    /// the last symbol keeps its full block.
    pub fn frame_states(&self, rx: &[Vec<C64>], layout: FrameLayout, readout_delay: usize) -> Result<FrameStates> {
        let nr = self.config.n_inputs;
        if rx.len() != nr {
            return Err(Error::Dimension(format!("{} rx waveforms for {nr} reservoir inputs", rx.len())));
        }
        let len = layout.frame_len();
        if rx.iter().any(|r| r.len() != len) {
            return Err(Error::Dimension(format!("rx waveforms must hold {len} samples")));
        }
        if readout_delay > layout.cp_len {
            return Err(Error::Reservoir(format!("readout delay {readout_delay} exceeds the CP")));
        }
        let level = rms(rx);
        let g = if level > 0.0 { 1.0 / level } else { 1.0 };
        let inputs = CMatrix::from_fn(nr, len + readout_delay, |j, t| if t < len { rx[j][t] * g } else { C64::default() });
        let traj = self.run_states(&inputs, 0)?;
        Ok(FrameStates { layout, readout_delay, ext: traj.ext })
    }
}

fn symbol_fully_known(pilots: &dyn PilotSource, i: usize) -> bool {
    let (_, n_sc, n_st) = pilots.dims();
    (0..n_sc).all(|n| (0..n_st).all(|p| pilots.pilot(i, n, p).is_some() || pilots.is_null(i, n, p)))
}

fn known_value(pilots: &dyn PilotSource, i: usize, n: usize, p: usize) -> Option<C64> {
    pilots.pilot(i, n, p).or_else(|| pilots.is_null(i, n, p).then(C64::default))
}

/// Comb training over fully known OFDM symbols: `W = X S^+` with `X` the
/// time-domain pilot waveforms `x^T F^H` and `S` the concatenated regressor
/// blocks of those symbols.
pub fn train_comb(states: &FrameStates, pilots: &dyn PilotSource, symbols: &[usize]) -> Result<ReadoutWeights> {
    let (_, n_sc, n_st) = pilots.dims();
    if symbols.is_empty() {
        return Err(Error::Training("no pilot symbols".into()));
    }
    if n_sc != states.layout.n_subcarriers {
        return Err(Error::Dimension("pilot grid and frame disagree on N_c".into()));
    }
    let width = states.width();
    let mut s = CMatrix::zeros(width, n_sc * symbols.len());
    let mut x = CMatrix::zeros(n_st, n_sc * symbols.len());
    for (k, &i) in symbols.iter().enumerate() {
        if !symbol_fully_known(pilots, i) {
            return Err(Error::Training(format!("OFDM symbol {i} is not fully known")));
        }
        s.columns_mut(k * n_sc, n_sc).copy_from(&states.symbol_block(i));
        for p in 0..n_st {
            let col: Vec<C64> = (0..n_sc).map(|n| known_value(pilots, i, n, p).unwrap()).collect();
            let wave = linalg::ifft(&col)?;
            for (t, v) in wave.into_iter().enumerate() {
                x[(p, k * n_sc + t)] = v;
            }
        }
    }
    Ok(ReadoutWeights { w_out: linalg::lstsq(&s, &x)? })
}

/// Frequency-domain comb training `W = x (S F)^+`; equal to `train_comb`
/// under the unitary transform.
pub fn train_comb_frequency(states: &FrameStates, pilots: &dyn PilotSource, symbols: &[usize]) -> Result<ReadoutWeights> {
    let (_, n_sc, n_st) = pilots.dims();
    let width = states.width();
    let mut sf = CMatrix::zeros(width, n_sc * symbols.len());
    let mut x = CMatrix::zeros(n_st, n_sc * symbols.len());
    for (k, &i) in symbols.iter().enumerate() {
        if !symbol_fully_known(pilots, i) {
            return Err(Error::Training(format!("OFDM symbol {i} is not fully known")));
        }
        sf.columns_mut(k * n_sc, n_sc).copy_from(&linalg::fft_rows(&states.symbol_block(i))?);
        for p in 0..n_st {
            for n in 0..n_sc {
                x[(p, k * n_sc + n)] = known_value(pilots, i, n, p).unwrap();
            }
        }
    }
    Ok(ReadoutWeights { w_out: linalg::lstsq(&sf, &x)? })
}

/// Scattered training in the frequency domain on the known cells only:
/// each output stream fits its pilot (and null) cells on the pilot symbols
/// using the selected columns of `S_i F`. Streams sharing one set of known
/// cells are solved together.
pub fn train_scattered(states: &FrameStates, pilots: &dyn PilotSource, pattern: &PilotPattern) -> Result<ReadoutWeights> {
    let (_, n_sc, n_st) = pilots.dims();
    let width = states.width();
    let spectra: Vec<CMatrix> =
        pattern.pilot_symbols.iter().map(|&i| linalg::fft_rows(&states.symbol_block(i))).collect::<Result<_>>()?;
    let known: Vec<Vec<(usize, usize)>> = (0..n_st)
        .map(|p| {
            pattern
                .pilot_symbols
                .iter()
                .enumerate()
                .flat_map(|(k, &i)| (0..n_sc).filter(move |&n| known_value(pilots, i, n, p).is_some()).map(move |n| (k, n)))
                .collect()
        })
        .collect();
    if known.iter().any(|k| k.is_empty()) {
        return Err(Error::Training("a stream has no known cells".into()));
    }
    let mut w_out = CMatrix::zeros(n_st, width);
    let mut done = vec![false; n_st];
    for p in 0..n_st {
        if done[p] {
            continue;
        }
        let group: Vec<usize> = (p..n_st).filter(|&q| !done[q] && known[q] == known[p]).collect();
        let cells = &known[p];
        let mut g = CMatrix::zeros(width, cells.len());
        for (c, &(k, n)) in cells.iter().enumerate() {
            g.set_column(c, &spectra[k].column(n));
        }
        let mut x = CMatrix::zeros(group.len(), cells.len());
        for (r, &q) in group.iter().enumerate() {
            for (c, &(k, n)) in cells.iter().enumerate() {
                x[(r, c)] = known_value(pilots, pattern.pilot_symbols[k], n, q).unwrap();
            }
        }
        let w = linalg::lstsq(&g, &x)?;
        for (r, &q) in group.iter().enumerate() {
            w_out.set_row(q, &w.row(r));
            done[q] = true;
        }
    }
    Ok(ReadoutWeights { w_out })
}

/// Picks the comb or scattered training rule for the pilot layout.
pub fn train_for_pattern(states: &FrameStates, pilots: &dyn PilotSource, pattern: &PilotPattern) -> Result<ReadoutWeights> {
    match pattern.kind {
        PilotKind::SisoCombFull | PilotKind::MimoCombOrthogonal | PilotKind::RcMimoOverlapping(_) => {
            train_comb(states, pilots, &pattern.pilot_symbols)
        }
        _ => train_scattered(states, pilots, pattern),
    }
}

/// Readout output `Z_i = W_out S_i` transformed to the frequency domain,
/// one `N_t x N_c` matrix per OFDM symbol.
pub fn soft_output(states: &FrameStates, readout: &ReadoutWeights) -> Result<Vec<CMatrix>> {
    (0..states.layout.n_symbols).map(|i| linalg::fft_rows(&(&readout.w_out * states.symbol_block(i)))).collect()
}

/// Hard decisions `Q_C(Z_i F)` for every cell of the frame.
pub fn detect(states: &FrameStates, readout: &ReadoutWeights, c: &Constellation) -> Result<ResourceGrid> {
    let l = states.layout;
    let n_st = readout.w_out.nrows();
    let mut grid = ResourceGrid::new(l.n_subcarriers, l.n_symbols, n_st);
    for (i, z) in soft_output(states, readout)?.into_iter().enumerate() {
        for p in 0..n_st {
            for n in 0..l.n_subcarriers {
                grid.set(i, n, p, c.nearest(z[(p, n)]));
            }
        }
    }
    Ok(grid)
}

/// SISO comb training on one received frame.
pub fn train_comb_siso(
    r: &Reservoir,
    rx: &[C64],
    layout: FrameLayout,
    pilots: &dyn PilotSource,
    readout_delay: usize,
) -> Result<ReadoutWeights> {
    let states = r.frame_states(&[rx.to_vec()], layout, readout_delay)?;
    train_comb(&states, pilots, &[0])
}

/// MIMO comb training jointly over the first `n_pilot_symbols` symbols.
pub fn train_comb_mimo(
    r: &Reservoir,
    rx: &[Vec<C64>],
    layout: FrameLayout,
    pilots: &dyn PilotSource,
    n_pilot_symbols: usize,
    readout_delay: usize,
) -> Result<ReadoutWeights> {
    let states = r.frame_states(rx, layout, readout_delay)?;
    let symbols: Vec<usize> = (0..n_pilot_symbols).collect();
    train_comb(&states, pilots, &symbols)
}

/// A reservoir with its trained readout.
#[derive(Debug, Clone, PartialEq)]
pub struct WesnDetector {
    pub reservoir: Reservoir,
    pub readout: ReadoutWeights,
    pub readout_delay: usize,
}

#[derive(Serialize, Deserialize)]
struct MatrixData {
    rows: usize,
    cols: usize,
    /// Row-major `[re, im]` pairs.
    data: Vec<[f64; 2]>,
}

impl MatrixData {
    fn from(m: &CMatrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    fn to_matrix(&self, rows: usize, cols: usize, what: &str) -> Result<CMatrix> {
        if self.rows != rows || self.cols != cols || self.data.len() != rows * cols {
            return Err(Error::Dimension(format!("{what}: expected {rows}x{cols}")));
        }
        Ok(CMatrix::from_fn(rows, cols, |i, j| {
            let [re, im] = self.data[i * cols + j];
            c64(re, im)
        }))
    }
}

#[derive(Serialize, Deserialize)]
struct DetectorFile {
    config: ReservoirConfig,
    seed: u64,
    readout_delay: usize,
    w_in: MatrixData,
    w: MatrixData,
    w_out: MatrixData,
}

impl WesnDetector {
    /// JSON container with the configuration, seed and all three weight matrices.
    pub fn to_json(&self) -> Result<String> {
        let file = DetectorFile {
            config: self.reservoir.config.clone(),
            seed: self.reservoir.config.seed,
            readout_delay: self.readout_delay,
            w_in: MatrixData::from(&self.reservoir.w_in),
            w: MatrixData::from(&self.reservoir.w),
            w_out: MatrixData::from(&self.readout.w_out),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: DetectorFile = serde_json::from_str(s)?;
        let cfg = f.config;
        cfg.validate()?;
        let n = cfg.n_neurons;
        let w_in = f.w_in.to_matrix(n, cfg.input_width(), "w_in")?;
        let w = f.w.to_matrix(n, n, "w")?;
        let w_out = f.w_out.to_matrix(cfg.n_outputs, cfg.regressor_width(), "w_out")?;
        Ok(Self { reservoir: Reservoir { config: cfg, w_in, w }, readout: ReadoutWeights { w_out }, readout_delay: f.readout_delay })
    }

    pub fn detect(&self, rx: &[Vec<C64>], layout: FrameLayout, c: &Constellation) -> Result<ResourceGrid> {
        let states = self.reservoir.frame_states(rx, layout, self.readout_delay)?;
        detect(&states, &self.readout, c)
    }
}
