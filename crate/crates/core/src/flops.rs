//! Symbolic FLOPS model for the detectors.
//!
//! Counts follow the closed-form complexity expressions for channel
//! estimation plus detection per frame. Computation inside the reservoir is
//! excluded from the detector rows; [`reservoir_update_flops`] reports it
//! separately.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

pub fn matmul(m: usize, n: usize, p: usize) -> f64 {
    2.0 * m as f64 * n as f64 * p as f64
}

pub fn inverse(n: usize) -> f64 {
    let n = n as f64;
    n * n * n + n * n + n
}

/// Pseudo-inverse of a full column rank `m x n` matrix.
pub fn pinv(m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    3.0 * m * n * n + 2.0 * n * n * n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlopsMethod {
    SisoLmmse,
    SisoWesn,
    MimoLmmse,
    MimoSphere,
    MimoWesn,
}

impl FlopsMethod {
    pub const ALL: [FlopsMethod; 5] =
        [Self::SisoLmmse, Self::SisoWesn, Self::MimoLmmse, Self::MimoSphere, Self::MimoWesn];

    pub fn name(&self) -> &'static str {
        match self {
            Self::SisoLmmse => "siso-lmmse-lmmse",
            Self::SisoWesn => "siso-esn-wesn",
            Self::MimoLmmse => "mimo-lmmse-lmmse",
            Self::MimoSphere => "mimo-lmmse-sd",
            Self::MimoWesn => "mimo-esn-wesn",
        }
    }

    pub fn is_mimo(&self) -> bool {
        matches!(self, Self::MimoLmmse | Self::MimoSphere | Self::MimoWesn)
    }
}

impl fmt::Display for FlopsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// System parameters. `n_neurons` counts neurons and buffer length together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopsParams {
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub n_neurons: usize,
    /// Fraction of OFDM symbols carrying pilots.
    pub delta: f64,
    /// Fraction of subcarriers carrying pilots.
    pub kappa: f64,
    pub constellation_size: usize,
}

impl FlopsParams {
    pub fn validate(&self) -> Result<()> {
        let ok_frac = |v: f64| v > 0.0 && v <= 1.0;
        if self.n_antennas == 0 || self.n_subcarriers == 0 || self.n_neurons == 0 || self.constellation_size == 0 {
            return Err(Error::Config("FLOPS parameters must be positive".into()));
        }
        if !ok_frac(self.delta) || !ok_frac(self.kappa) {
            return Err(Error::Config(format!("delta {} and kappa {} must lie in (0, 1]", self.delta, self.kappa)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopsReport {
    pub method: FlopsMethod,
    pub params: FlopsParams,
    pub flops: f64,
}

pub fn flops_method(method: FlopsMethod, p: &FlopsParams) -> Result<FlopsReport> {
    p.validate()?;
    let nc = p.n_subcarriers as f64;
    let nn = p.n_neurons as f64;
    let n = if method.is_mimo() { p.n_antennas as f64 } else { 1.0 };
    let (d, k) = (p.delta, p.kappa);
    let ce = d * (k * nc).powi(2) + 7.0 * d * nc * (1.0 - k);
    let flops = match method {
        FlopsMethod::SisoLmmse => ce + (1.0 - d) * nc + d * (1.0 - k) * nc,
        FlopsMethod::SisoWesn => {
            d * (2.0 * (k * nc) * (nn + 1.0) + 3.0 * k * nc * nn * nn + 2.0 * nn.powi(3)) + nn * nc
        }
        FlopsMethod::MimoLmmse => n * n * ce + (1.0 - k * d) * nc * (n.powi(3) + n * n + n),
        FlopsMethod::MimoSphere => {
            let leaves = (p.constellation_size as f64).powf(n);
            n * n * ce + (1.0 - k * d) * nc * leaves * (2.0 * n * n + 2.0 * n - 1.0)
        }
        FlopsMethod::MimoWesn => {
            d * (2.0 * n * n * k * nc * (nn + 1.0) + 3.0 * k * nc * n * nn * nn + 2.0 * nn.powi(3)) + nc * n * nn
        }
    };
    Ok(FlopsReport { method, params: *p, flops })
}

pub fn flops_table(p: &FlopsParams) -> Result<Vec<FlopsReport>> {
    FlopsMethod::ALL.iter().map(|&m| flops_method(m, p)).collect()
}

/// State-update cost of a reservoir over `n_steps` samples: the recurrent
/// and input products plus one activation per neuron, all complex.
pub fn reservoir_update_flops(n_neurons: usize, input_width: usize, n_steps: usize) -> f64 {
    let per_step = matmul(n_neurons, n_neurons, 1) + matmul(n_neurons, input_width, 1) + 2.0 * n_neurons as f64;
    per_step * n_steps as f64
}

pub fn to_csv(reports: &[FlopsReport]) -> String {
    let mut s = String::from("method,params,flops\n");
    for r in reports {
        let p = &r.params;
        let _ = writeln!(
            s,
            "{},N={};N_c={};N_n={};delta={};kappa={};C={},{:.6e}",
            r.method, p.n_antennas, p.n_subcarriers, p.n_neurons, p.delta, p.kappa, p.constellation_size, r.flops
        );
    }
    s
}
