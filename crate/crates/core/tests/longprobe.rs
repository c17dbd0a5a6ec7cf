//! Long-running calibration probes; run explicitly with --ignored.

use spinboson_tempo::bath::{DkMax, GridParams, ModelParams};
use spinboson_tempo::engine::{evolve, TempoEvolution};
use spinboson_tempo::oracle::{ed_evolve, DiscretizedBath};
use spinboson_tempo::probe::{fotoc_at, ProbeParams};
use spinboson_tempo::tensor::CompressionParams;
use std::time::Instant;

#[test]
#[ignore]
fn full_cross_oracle_uncapped() {
    let m = ModelParams {
        delta: 1.0,
        s: 1.0,
        alpha: 0.1,
        omega_c: 10.0,
    };
    let bath = DiscretizedBath::from_model(&m, 3, 6.0, 10).unwrap();
    let corr = bath.correlation();
    let probe = ProbeParams::new(1e-3, true);
    let dt = 0.02;
    let n_steps = 250;
    let ed = ed_evolve(&bath, &m, dt, n_steps, Some(&probe)).unwrap();

    let grid = GridParams::new(dt, n_steps, DkMax::Full);
    let comp = CompressionParams::new(1e-11, None).unwrap();
    let mut evo = TempoEvolution::new(&corr, m, grid, comp).unwrap();
    let t0 = Instant::now();
    let mut p_diff = 0.0f64;
    let mut f_rel = 0.0f64;
    for n in 1..=n_steps {
        evo.step().unwrap();
        let rho = evo.reduced_density().unwrap();
        let p = spinboson_tempo::engine::polarization(&rho);
        let rec = fotoc_at(&evo, &probe).unwrap();
        let ed_rec = &ed.series.records[n];
        let dp: f64 = p - ed_rec.p;
        p_diff = p_diff.max(dp.abs());
        let da: f64 = rec.one_minus_f;
        let db: f64 = 1.0 - ed_rec.f.unwrap();
        f_rel = f_rel.max((da - db).abs() / db.abs().max(1e-300));
        if n % 10 == 0 {
            println!(
                "step {n}: chi {} dP {:.3e} dFrel {:.3e} elapsed {:?}",
                evo.augmented().mps.max_bond(),
                p_diff,
                f_rel,
                t0.elapsed()
            );
        }
    }
    println!(
        "FINAL: max|dP| {:.3e}  max rel d(1-F) {:.3e}  elapsed {:?}",
        p_diff,
        f_rel,
        t0.elapsed()
    );
}

#[test]
#[ignore]
fn ohmic_reference_run_probe() {
    // reference ohmic parameters with the probe, memory-truncated
    let m = ModelParams {
        delta: 1.0,
        s: 1.0,
        alpha: 0.1,
        omega_c: 10.0,
    };
    let corr = spinboson_tempo::bath::OhmicCorrelation::new(&m);
    let probe = ProbeParams::new(1e-3, true);
    let grid = GridParams::new(0.1, 380, DkMax::Lags(70));
    let comp = CompressionParams::new(1e-11, None).unwrap();
    let t0 = Instant::now();
    let series = evolve(&corr, &m, &grid, &comp, Some(&probe)).unwrap();
    println!(
        "ohmic run: {:?}, maxbond {}",
        t0.elapsed(),
        series.meta.max_bond
    );
    for rec in series.records.iter().step_by(10) {
        println!(
            "t {:5.1}  P {:+.6}  scaled {:.6e}",
            rec.t,
            rec.p,
            rec.scaled.unwrap_or(f64::NAN)
        );
    }
}
