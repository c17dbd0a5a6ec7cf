use spinboson_tempo::bath::{DkMax, GridParams, ModelParams};
use spinboson_tempo::engine::evolve;
use spinboson_tempo::oracle::{ed_evolve, DiscretizedBath};
use spinboson_tempo::probe::ProbeParams;
use spinboson_tempo::tensor::CompressionParams;
use std::time::Instant;

#[test]
fn short_uncapped_cross_check() {
    let m = ModelParams {
        delta: 1.0,
        s: 1.0,
        alpha: 0.1,
        omega_c: 10.0,
    };
    let bath = DiscretizedBath::from_model(&m, 2, 4.0, 10).unwrap();
    let corr = bath.correlation();
    let probe = ProbeParams::new(1e-3, true);
    let dt = 0.05;
    let n_steps = 40;

    let ed = ed_evolve(&bath, &m, dt, n_steps, Some(&probe)).unwrap();
    let grid = GridParams::new(dt, n_steps, DkMax::Full);
    let comp = CompressionParams::new(1e-11, None).unwrap();
    let t1 = Instant::now();
    let tempo = evolve(&corr, &m, &grid, &comp, Some(&probe)).unwrap();
    println!("tempo: {:?}  maxbond {}", t1.elapsed(), tempo.meta.max_bond);
    for (a, b) in tempo.records.iter().zip(ed.series.records.iter()).step_by(5) {
        let da: f64 = 1.0 - a.f.unwrap();
        let db: f64 = 1.0 - b.f.unwrap();
        println!(
            "t {:5.2}  P {:+.6} vs {:+.6} (d {:+.2e})   1-F {:.6e} vs {:.6e} (rel {:+.2e})",
            a.t,
            a.p,
            b.p,
            a.p - b.p,
            da,
            db,
            (da - db) / db.abs().max(1e-300)
        );
    }
}
