//! QAM mapping, CP-OFDM modulation and resource-grid pilot layouts.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, C64};

/// Square Gray-labeled QAM with unit average energy.
///
/// A label's first `log2(order)/2` bits (MSB first) select the in-phase
/// level and the remaining bits the quadrature level, each through a binary
/// reflected Gray code over levels ordered from most negative to most
/// positive. Label `0` is therefore the corner `(-a, -a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_axis: usize,
    scale: f64,
    points: Vec<C64>,
}

fn gray_to_index(g: usize) -> usize {
    let mut b = g;
    let mut shift = g >> 1;
    while shift != 0 {
        b ^= shift;
        shift >>= 1;
    }
    b
}

fn index_to_gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self> {
        let bits_per_axis = match order {
            4 => 1,
            16 => 2,
            64 => 3,
            other => return Err(Error::ModulationOrder(other)),
        };
        let side = 1usize << bits_per_axis;
        let scale = 1.0 / (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let level = |i: usize| (2.0 * i as f64 - (side as f64 - 1.0)) * scale;
        let points = (0..order)
            .map(|label| {
                let gi = label >> bits_per_axis;
                let gq = label & (side - 1);
                c64(level(gray_to_index(gi)), level(gray_to_index(gq)))
            })
            .collect();
        Ok(Self { order, bits_per_axis, scale, points })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[C64] {
        &self.points
    }

    fn side(&self) -> usize {
        1 << self.bits_per_axis
    }

    // Nearest level index along one axis; exact midpoints go to the lower level.
    fn slice_axis(&self, v: f64) -> usize {
        let side = self.side();
        let t = (v / self.scale + (side as f64 - 1.0)) / 2.0;
        let i = (t - 0.5).ceil();
        i.clamp(0.0, side as f64 - 1.0) as usize
    }

    /// Label of the Euclidean-nearest point. Ties go to the lexicographically
    /// smallest `(re, im)` point.
    pub fn nearest_label(&self, z: C64) -> usize {
        let i = self.slice_axis(z.re);
        let q = self.slice_axis(z.im);
        (index_to_gray(i) << self.bits_per_axis) | index_to_gray(q)
    }

    pub fn nearest(&self, z: C64) -> C64 {
        self.points[self.nearest_label(z)]
    }

    pub fn label_bits(&self, label: usize, out: &mut Vec<u8>) {
        let n = self.bits_per_symbol();
        for b in (0..n).rev() {
            out.push(((label >> b) & 1) as u8);
        }
    }

    /// Smallest distance between two distinct points.
    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }
}

pub fn qam_map(bits: &[u8], c: &Constellation) -> Result<Vec<C64>> {
    let k = c.bits_per_symbol();
    if !bits.len().is_multiple_of(k) {
        return Err(Error::BitCount { bits: bits.len(), bits_per_symbol: k });
    }
    Ok(bits
        .chunks(k)
        .map(|chunk| {
            let label = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
            c.points[label]
        })
        .collect())
}

/// Hard demapping to bits through the nearest point.
pub fn qam_demap(symbols: &[C64], c: &Constellation) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * c.bits_per_symbol());
    for &z in symbols {
        c.label_bits(c.nearest_label(z), &mut out);
    }
    out
}

pub fn quantize(z: &[C64], c: &Constellation) -> Vec<C64> {
    z.iter().map(|&v| c.nearest(v)).collect()
}

/// Unitary IFFT of one grid column with a cyclic prefix of `cp_len` samples.
pub fn ofdm_modulate(column: &[C64], cp_len: usize) -> Result<Vec<C64>> {
    if cp_len > column.len() {
        return Err(Error::CyclicPrefix { cp: cp_len, n: column.len() });
    }
    let core = linalg::ifft(column)?;
    Ok(add_cyclic_prefix(&core, cp_len))
}

pub fn add_cyclic_prefix(core: &[C64], cp_len: usize) -> Vec<C64> {
    let n = core.len();
    let mut out = Vec::with_capacity(n + cp_len);
    out.extend_from_slice(&core[n - cp_len..]);
    out.extend_from_slice(core);
    out
}

pub fn ofdm_demodulate(waveform: &[C64], cp_len: usize) -> Result<Vec<C64>> {
    if cp_len > waveform.len() / 2 {
        return Err(Error::CyclicPrefix { cp: cp_len, n: waveform.len().saturating_sub(cp_len) });
    }
    linalg::fft(&waveform[cp_len..])
}

/// Resource-block tile used to lay pilots out across the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RbGeometry {
    pub subcarriers: usize,
    pub symbols: usize,
}

impl Default for RbGeometry {
    fn default() -> Self {
        Self { subcarriers: 12, symbols: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotKind {
    /// First OFDM symbol, every subcarrier.
    SisoCombFull,
    /// First OFDM symbol, every third subcarrier.
    SisoCombDecimated,
    /// Symbols 0 and 4, every sixth subcarrier, staggered by three.
    SisoScattered,
    /// Stream `p` owns OFDM symbol `p`; the other streams are nulled there.
    MimoCombOrthogonal,
    /// Per-stream scattered pilots on symbols 0 and 4 on disjoint subcarriers,
    /// with the other streams nulled on each pilot cell.
    MimoScatteredNulls,
    /// The first `T` symbols carry pilots on every stream and subcarrier at once.
    RcMimoOverlapping(usize),
    /// Symbols 0 and 4 carry overlapping pilots on every third subcarrier
    /// (staggered by one) on all streams.
    RcMimoScattered,
}

impl PilotKind {
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "siso-comb" | "siso-comb-full" => PilotKind::SisoCombFull,
            "siso-comb-decimated" => PilotKind::SisoCombDecimated,
            "siso-scattered" => PilotKind::SisoScattered,
            "mimo-comb" | "mimo-comb-orthogonal" => PilotKind::MimoCombOrthogonal,
            "mimo-scattered" | "mimo-scattered-nulls" => PilotKind::MimoScatteredNulls,
            "rc-scattered" => PilotKind::RcMimoScattered,
            _ => {
                if let Some(t) = lower.strip_prefix("rc-overlapping") {
                    let t = t.trim_start_matches([':', '-', '(']).trim_end_matches(')');
                    let t = t.parse::<usize>().map_err(|_| Error::Config(format!("bad pilot kind `{s}`")))?;
                    PilotKind::RcMimoOverlapping(t)
                } else {
                    return Err(Error::Config(format!("unknown pilot kind `{s}`")));
                }
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            PilotKind::SisoCombFull => "siso-comb".into(),
            PilotKind::SisoCombDecimated => "siso-comb-decimated".into(),
            PilotKind::SisoScattered => "siso-scattered".into(),
            PilotKind::MimoCombOrthogonal => "mimo-comb".into(),
            PilotKind::MimoScatteredNulls => "mimo-scattered".into(),
            PilotKind::RcMimoOverlapping(t) => format!("rc-overlapping:{t}"),
            PilotKind::RcMimoScattered => "rc-scattered".into(),
        }
    }
}

/// Read-only access to the known (pilot and null) cells of a frame. This is
/// the only view of the transmitted grid a receiver gets to train on.
pub trait PilotSource {
    fn dims(&self) -> (usize, usize, usize);
    /// Pilot value, or `None` when the cell is not a pilot.
    fn pilot(&self, symbol: usize, subcarrier: usize, stream: usize) -> Option<C64>;
    fn is_null(&self, symbol: usize, subcarrier: usize, stream: usize) -> bool;
}

/// Frequency-domain frame indexed by (OFDM symbol, subcarrier, stream).
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    n_subcarriers: usize,
    n_symbols: usize,
    n_streams: usize,
    values: Vec<C64>,
    pilot_mask: Vec<bool>,
    null_mask: Vec<bool>,
}

impl ResourceGrid {
    pub fn new(n_subcarriers: usize, n_symbols: usize, n_streams: usize) -> Self {
        let n = n_subcarriers * n_symbols * n_streams;
        Self {
            n_subcarriers,
            n_symbols,
            n_streams,
            values: vec![C64::default(); n],
            pilot_mask: vec![false; n],
            null_mask: vec![false; n],
        }
    }

    #[inline]
    fn idx(&self, symbol: usize, subcarrier: usize, stream: usize) -> usize {
        (symbol * self.n_subcarriers + subcarrier) * self.n_streams + stream
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    pub fn get(&self, symbol: usize, subcarrier: usize, stream: usize) -> C64 {
        self.values[self.idx(symbol, subcarrier, stream)]
    }

    pub fn set(&mut self, symbol: usize, subcarrier: usize, stream: usize, v: C64) {
        let i = self.idx(symbol, subcarrier, stream);
        self.values[i] = v;
    }

    pub fn is_pilot(&self, symbol: usize, subcarrier: usize, stream: usize) -> bool {
        self.pilot_mask[self.idx(symbol, subcarrier, stream)]
    }

    pub fn is_null_cell(&self, symbol: usize, subcarrier: usize, stream: usize) -> bool {
        self.null_mask[self.idx(symbol, subcarrier, stream)]
    }

    pub fn is_data(&self, symbol: usize, subcarrier: usize, stream: usize) -> bool {
        let i = self.idx(symbol, subcarrier, stream);
        !self.pilot_mask[i] && !self.null_mask[i]
    }

    fn mark_pilot(&mut self, symbol: usize, subcarrier: usize, stream: usize, v: C64) {
        let i = self.idx(symbol, subcarrier, stream);
        debug_assert!(!self.null_mask[i]);
        self.pilot_mask[i] = true;
        self.values[i] = v;
    }

    fn mark_null(&mut self, symbol: usize, subcarrier: usize, stream: usize) {
        let i = self.idx(symbol, subcarrier, stream);
        if !self.pilot_mask[i] {
            self.null_mask[i] = true;
            self.values[i] = C64::default();
        }
    }

    /// One OFDM symbol of one stream, across all subcarriers.
    pub fn column(&self, symbol: usize, stream: usize) -> Vec<C64> {
        (0..self.n_subcarriers).map(|n| self.get(symbol, n, stream)).collect()
    }

    /// Data cells in (symbol, subcarrier, stream) order.
    pub fn data_cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n_symbols).flat_map(move |i| {
            (0..self.n_subcarriers)
                .flat_map(move |n| (0..self.n_streams).map(move |p| (i, n, p)))
                .filter(move |&(i, n, p)| self.is_data(i, n, p))
        })
    }

    pub fn n_data_cells(&self) -> usize {
        self.pilot_mask.iter().zip(&self.null_mask).filter(|(p, n)| !**p && !**n).count()
    }

    /// Fills every data cell with random Gray-mapped symbols and returns the
    /// bits in `data_cells` order.
    pub fn fill_data(&mut self, c: &Constellation, rng: &mut impl Rng) -> Vec<u8> {
        let k = c.bits_per_symbol();
        let cells: Vec<_> = self.data_cells().collect();
        let mut bits = Vec::with_capacity(cells.len() * k);
        for (i, n, p) in cells {
            let label: usize = rng.random_range(0..c.order());
            c.label_bits(label, &mut bits);
            self.set(i, n, p, c.points()[label]);
        }
        bits
    }

    /// CSV dump, one cell per row: `symbol,subcarrier,stream,re,im,is_pilot,is_null`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("symbol,subcarrier,stream,re,im,is_pilot,is_null\n");
        for i in 0..self.n_symbols {
            for n in 0..self.n_subcarriers {
                for p in 0..self.n_streams {
                    let v = self.get(i, n, p);
                    let _ = writeln!(
                        s,
                        "{i},{n},{p},{:.12e},{:.12e},{},{}",
                        v.re,
                        v.im,
                        self.is_pilot(i, n, p) as u8,
                        self.is_null_cell(i, n, p) as u8
                    );
                }
            }
        }
        s
    }
}

impl PilotSource for ResourceGrid {
    fn dims(&self) -> (usize, usize, usize) {
        (self.n_symbols, self.n_subcarriers, self.n_streams)
    }

    fn pilot(&self, symbol: usize, subcarrier: usize, stream: usize) -> Option<C64> {
        self.is_pilot(symbol, subcarrier, stream).then(|| self.get(symbol, subcarrier, stream))
    }

    fn is_null(&self, symbol: usize, subcarrier: usize, stream: usize) -> bool {
        self.is_null_cell(symbol, subcarrier, stream)
    }
}

/// Pilot layout of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    pub kind: PilotKind,
    pub n_streams: usize,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// OFDM symbols that carry at least one pilot.
    pub pilot_symbols: Vec<usize>,
    /// Streams that carry pilots.
    pub pilot_streams: Vec<usize>,
    /// Pilot subcarriers per (stream, pilot symbol), matching `pilot_symbols`.
    pub pilot_subcarriers: Vec<Vec<Vec<usize>>>,
    /// Fraction of subcarriers used on a pilot symbol.
    pub kappa: f64,
    /// Fraction of OFDM symbols that carry pilots.
    pub delta: f64,
}

impl PilotPattern {
    pub fn subcarriers(&self, stream: usize, symbol: usize) -> &[usize] {
        match self.pilot_symbols.iter().position(|&s| s == symbol) {
            Some(k) => &self.pilot_subcarriers[stream][k],
            None => &[],
        }
    }
}

/// Lays out the pilots of `kind` and fills them with QAM symbols drawn from
/// a stream seeded by `pilot_seed`. Data cells are left at zero.
pub fn build_pilot_pattern(
    kind: PilotKind,
    n_streams: usize,
    n_subcarriers: usize,
    rb: RbGeometry,
    c: &Constellation,
    pilot_seed: u64,
) -> Result<(PilotPattern, ResourceGrid)> {
    use rand::SeedableRng;
    if n_streams == 0 || n_subcarriers == 0 {
        return Err(Error::Pilot("empty grid".into()));
    }
    let n_symbols = rb.symbols;
    let rb_sc = rb.subcarriers;
    let all: Vec<usize> = (0..n_subcarriers).collect();
    let every = |m: usize, r: usize| -> Vec<usize> { (0..n_subcarriers).filter(|n| n % m == r).collect() };

    // (symbol, stream, subcarriers) triples; `nulls` lists cells other streams blank.
    let mut layout: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    let mut nulls_on_other_streams = false;
    let (kappa, delta);
    match kind {
        PilotKind::SisoCombFull | PilotKind::SisoCombDecimated | PilotKind::SisoScattered => {
            if n_streams != 1 {
                return Err(Error::Pilot(format!("{} needs a single stream", kind.name())));
            }
            match kind {
                PilotKind::SisoCombFull => {
                    layout.push((0, 0, all.clone()));
                    kappa = 1.0;
                    delta = 1.0 / n_symbols as f64;
                }
                PilotKind::SisoCombDecimated => {
                    layout.push((0, 0, every(3, 0)));
                    kappa = 1.0 / 3.0;
                    delta = 1.0 / n_symbols as f64;
                }
                _ => {
                    if n_symbols < 5 {
                        return Err(Error::Pilot("scattered pilots need at least 5 symbols".into()));
                    }
                    let half = rb_sc / 2;
                    layout.push((0, 0, every(half, 0)));
                    layout.push((4, 0, every(half, half / 2)));
                    kappa = 1.0 / half as f64;
                    delta = 2.0 / n_symbols as f64;
                }
            }
        }
        PilotKind::MimoCombOrthogonal => {
            if n_streams > n_symbols {
                return Err(Error::Pilot(format!("{n_streams} streams do not fit {n_symbols} symbols")));
            }
            for p in 0..n_streams {
                layout.push((p, p, all.clone()));
            }
            nulls_on_other_streams = true;
            kappa = 1.0;
            delta = 1.0 / n_symbols as f64;
        }
        PilotKind::MimoScatteredNulls => {
            let half = rb_sc / 2;
            if n_streams > half / 2 * 2 || n_symbols < 5 {
                return Err(Error::Pilot(format!("mimo-scattered supports at most {} streams", half / 2 * 2)));
            }
            for p in 0..n_streams {
                layout.push((0, p, every(half, p)));
                layout.push((4, p, every(half, (p + half / 2) % half)));
            }
            nulls_on_other_streams = true;
            kappa = 1.0 / half as f64;
            delta = 2.0 / n_symbols as f64;
        }
        PilotKind::RcMimoOverlapping(t) => {
            if t == 0 || t > n_symbols {
                return Err(Error::Pilot(format!("{t} pilot symbols do not fit a {n_symbols}-symbol frame")));
            }
            for i in 0..t {
                for p in 0..n_streams {
                    layout.push((i, p, all.clone()));
                }
            }
            kappa = 1.0;
            delta = t as f64 / n_symbols as f64;
        }
        PilotKind::RcMimoScattered => {
            if n_symbols < 5 {
                return Err(Error::Pilot("scattered pilots need at least 5 symbols".into()));
            }
            for p in 0..n_streams {
                layout.push((0, p, every(3, 0)));
                layout.push((4, p, every(3, 1)));
            }
            kappa = 1.0 / 3.0;
            delta = 2.0 / n_symbols as f64;
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(pilot_seed);
    let mut grid = ResourceGrid::new(n_subcarriers, n_symbols, n_streams);
    for (i, p, scs) in &layout {
        for &n in scs {
            let label = rng.random_range(0..c.order());
            grid.mark_pilot(*i, n, *p, c.points()[label]);
        }
    }
    if nulls_on_other_streams {
        for (i, p, scs) in &layout {
            for &n in scs {
                for q in (0..n_streams).filter(|q| q != p) {
                    grid.mark_null(*i, n, q);
                }
            }
        }
    }

    let mut pilot_symbols: Vec<usize> = layout.iter().map(|(i, _, _)| *i).collect();
    pilot_symbols.sort_unstable();
    pilot_symbols.dedup();
    let mut pilot_streams: Vec<usize> = layout.iter().map(|(_, p, _)| *p).collect();
    pilot_streams.sort_unstable();
    pilot_streams.dedup();
    let pilot_subcarriers = (0..n_streams)
        .map(|p| {
            pilot_symbols
                .iter()
                .map(|&i| {
                    layout
                        .iter()
                        .filter(|(li, lp, _)| *li == i && *lp == p)
                        .flat_map(|(_, _, s)| s.iter().cloned())
                        .collect()
                })
                .collect()
        })
        .collect();

    let pattern = PilotPattern {
        kind,
        n_streams,
        n_subcarriers,
        n_symbols,
        pilot_symbols,
        pilot_streams,
        pilot_subcarriers,
        kappa,
        delta,
    };
    Ok((pattern, grid))
}
