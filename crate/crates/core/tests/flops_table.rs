mod common;

use common::{oracle, parameter_sets};
use wesn_core::flops::{self, flops_method, FlopsMethod, FlopsParams};

#[test]
fn every_row_matches_its_expression() {
    for p in parameter_sets() {
        for m in FlopsMethod::ALL {
            let got = flops_method(m, &p).unwrap().flops;
            let want = oracle(m, &p);
            assert!(got > 0.0);
            assert!((got - want).abs() <= 1e-9 * want.abs(), "{m} at {p:?}: {got} vs {want}");
        }
    }
}

#[test]
fn hand_evaluated_rows() {
    // N=4, N_c=512, N_n=94, delta=0.5, kappa=0.25, |C|=16, computed by hand
    let p = FlopsParams { n_antennas: 4, n_subcarriers: 512, n_neurons: 94, delta: 0.5, kappa: 0.25, constellation_size: 16 };
    let rows = [
        // 0.5*128^2 + 3.5*512*0.75 + 256 + 0.5*0.75*512
        (FlopsMethod::SisoLmmse, 8192.0 + 1344.0 + 256.0 + 192.0),
        // 0.5*(2*128*95 + 3*128*8836 + 2*830584) + 94*512
        (FlopsMethod::SisoWesn, 0.5 * (24320.0 + 3_393_024.0 + 1_661_168.0) + 48128.0),
        // 16*(8192 + 1344) + 0.875*512*84
        (FlopsMethod::MimoLmmse, 152_576.0 + 37632.0),
        // 16*(9536) + 0.875*512*65536*39
        (FlopsMethod::MimoSphere, 152_576.0 + 1_145_044_992.0),
        // 0.5*(2*16*128*95 + 3*128*4*8836 + 2*830584) + 512*4*94
        (FlopsMethod::MimoWesn, 0.5 * (389_120.0 + 13_572_096.0 + 1_661_168.0) + 192_512.0),
    ];
    for (m, want) in rows {
        assert_eq!(flops_method(m, &p).unwrap().flops, want, "{m}");
    }
}

#[test]
fn primitive_operations() {
    assert_eq!(flops::matmul(2, 3, 4), 48.0);
    assert_eq!(flops::inverse(3), 39.0);
    assert_eq!(flops::pinv(8, 3), 270.0);
    assert_eq!(flops::matmul(1, 1, 1), 2.0);
}

#[test]
fn reservoir_rows_grow_linearly_and_lmmse_quadratically() {
    let at = |nc: usize| FlopsParams { n_antennas: 1, n_subcarriers: nc, n_neurons: 94, delta: 1.0 / 7.0, kappa: 1.0, constellation_size: 16 };
    let ncs: Vec<usize> = (8..=14).map(|e| 1usize << e).collect();
    for w in ncs.windows(2) {
        let (a, b) = (at(w[0]), at(w[1]));
        let wesn = flops_method(FlopsMethod::SisoWesn, &b).unwrap().flops / flops_method(FlopsMethod::SisoWesn, &a).unwrap().flops;
        let lmmse = flops_method(FlopsMethod::SisoLmmse, &b).unwrap().flops / flops_method(FlopsMethod::SisoLmmse, &a).unwrap().flops;
        // doubling N_c: affine-in-N_c row at most doubles, quadratic row approaches 4x
        assert!(wesn <= 2.0 + 1e-12 && wesn > 1.0, "wesn ratio {wesn}");
        assert!(lmmse > 3.0, "lmmse ratio {lmmse}");
    }
    let big = at(1 << 14);
    let slope = flops_method(FlopsMethod::SisoWesn, &big).unwrap().flops / (1u64 << 14) as f64;
    assert!(slope > 0.0);
    // the quadratic row overtakes the linear one once N_c exceeds about 3 N_n^2
    let huge = at(1 << 16);
    assert!(flops_method(FlopsMethod::SisoLmmse, &huge).unwrap().flops > flops_method(FlopsMethod::SisoWesn, &huge).unwrap().flops);
}

#[test]
fn sphere_decoding_dominates_mimo_lmmse() {
    let p = FlopsParams { n_antennas: 4, n_subcarriers: 512, n_neurons: 94, delta: 4.0 / 7.0, kappa: 1.0 / 6.0, constellation_size: 16 };
    let sd = flops_method(FlopsMethod::MimoSphere, &p).unwrap().flops;
    let lm = flops_method(FlopsMethod::MimoLmmse, &p).unwrap().flops;
    assert!(sd >= 1e3 * lm, "{sd} vs {lm}");
}

#[test]
fn sphere_row_is_exponential_in_antennas() {
    let c = 16.0f64;
    let dominant = |n: usize| {
        let p = FlopsParams { n_antennas: n, n_subcarriers: 512, n_neurons: 94, delta: 0.5, kappa: 0.25, constellation_size: 16 };
        let total = flops_method(FlopsMethod::MimoSphere, &p).unwrap().flops;
        let nf = n as f64;
        let ce = nf * nf * (0.5 * (0.25f64 * 512.0).powi(2) + 0.5 * 7.0 * 512.0 * 0.75);
        // strip the estimation part and the polynomial factor
        ((total - ce) / (2.0 * nf * nf + 2.0 * nf - 1.0)).ln()
    };
    for n in 1..6 {
        let slope = dominant(n + 1) - dominant(n);
        assert!((slope - c.ln()).abs() < 1e-9, "slope {slope}");
    }
}

#[test]
fn csv_lists_every_method() {
    let p = parameter_sets()[2];
    let csv = flops::to_csv(&flops::flops_table(&p).unwrap());
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,params,flops"));
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, FlopsMethod::ALL.iter().map(|m| m.name()).collect::<Vec<_>>());
}
