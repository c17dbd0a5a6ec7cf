use ndarray::Array2;
use ndarray_linalg::SVD;
use num_complex::Complex64 as C64;
use std::time::Instant;

#[test]
fn complex_svd_and_gemm_link() {
    let n = 240;
    let a = Array2::from_shape_fn((n, n), |(i, j)| {
        C64::new(((i * 7 + j * 13) % 17) as f64, ((i + 3 * j) % 11) as f64)
    });
    let t0 = Instant::now();
    let b = a.dot(&a);
    let gemm_t = t0.elapsed();
    let t1 = Instant::now();
    let (u, s, vt) = a.svd(true, true).unwrap();
    let svd_t = t1.elapsed();
    let u = u.unwrap();
    let vt = vt.unwrap();
    let smat = Array2::from_diag(&s.mapv(|x| C64::new(x, 0.0)));
    let recon = u.dot(&smat).dot(&vt);
    let err = (&recon - &a).iter().map(|z| z.norm()).fold(0.0, f64::max);
    println!("gemm {:?}  svd {:?}  recon_err {err:.3e}  b00 {:?}", gemm_t, svd_t, b[[0,0]]);
    assert!(err < 1e-9);
    assert!(svd_t.as_secs_f64() < 2.0);
}
