use wesn_core::flops::{FlopsMethod, FlopsParams};

// Row oracles, expanded by hand into sums of monomials.
pub fn oracle(method: FlopsMethod, p: &FlopsParams) -> f64 {
    let nc = p.n_subcarriers as f64;
    let nn = p.n_neurons as f64;
    let d = p.delta;
    let k = p.kappa;
    let c = p.constellation_size as f64;
    match method {
        FlopsMethod::SisoLmmse => d * k * k * nc * nc + 7.0 * d * nc - 7.0 * d * k * nc + nc - d * nc + d * nc - d * k * nc,
        FlopsMethod::SisoWesn => {
            2.0 * d * k * nc * nn + 2.0 * d * k * nc + 3.0 * d * k * nc * nn * nn + 2.0 * d * nn * nn * nn + nn * nc
        }
        FlopsMethod::MimoLmmse => {
            let n = p.n_antennas as f64;
            let ce = n * n * d * k * k * nc * nc + 7.0 * n * n * d * nc - 7.0 * n * n * d * k * nc;
            ce + nc * n * n * n + nc * n * n + nc * n - k * d * nc * n * n * n - k * d * nc * n * n - k * d * nc * n
        }
        FlopsMethod::MimoSphere => {
            let n = p.n_antennas as f64;
            let ce = n * n * d * k * k * nc * nc + 7.0 * n * n * d * nc - 7.0 * n * n * d * k * nc;
            let leaves = c.powi(p.n_antennas as i32);
            ce + (nc - k * d * nc) * leaves * (2.0 * n * n + 2.0 * n - 1.0)
        }
        FlopsMethod::MimoWesn => {
            let n = p.n_antennas as f64;
            2.0 * d * n * n * k * nc * nn
                + 2.0 * d * n * n * k * nc
                + 3.0 * d * k * nc * n * nn * nn
                + 2.0 * d * nn * nn * nn
                + nc * n * nn
        }
    }
}

pub fn parameter_sets() -> Vec<FlopsParams> {
    let mk = |n, nc, nn, delta, kappa, c| FlopsParams {
        n_antennas: n,
        n_subcarriers: nc,
        n_neurons: nn,
        delta,
        kappa,
        constellation_size: c,
    };
    vec![
        mk(1, 64, 8, 1.0 / 7.0, 1.0, 4),
        mk(2, 128, 94, 2.0 / 7.0, 1.0 / 3.0, 16),
        mk(4, 512, 94, 4.0 / 7.0, 1.0 / 6.0, 16),
        mk(4, 1024, 64, 2.0 / 7.0, 0.25, 64),
        mk(3, 256, 512, 0.5, 0.5, 4),
        mk(8, 2048, 30, 1.0, 1.0, 4),
    ]
}
