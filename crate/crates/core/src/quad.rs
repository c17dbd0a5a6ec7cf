//! Adaptive Gauss–Kronrod quadrature for complex-valued integrands.
//!
//! Used as the fallback route for the influence-coefficient window integrals
//! and as the independent check of the closed-form bath correlation function.

use crate::scalar::RealScalar;
use ndarray_linalg::Scalar;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: requested {requested:e}, reached {reached:e} on [{a}, {b}]")]
    NoConvergence {
        requested: f64,
        reached: f64,
        a: f64,
        b: f64,
    },
}

// 15-point Kronrod nodes/weights on [-1, 1] and the embedded 7-point Gauss
// weights, positive half; node 0.0 is shared.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_47,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 15(7) panel: returns (estimate, error estimate).
fn gk15<R: RealScalar, F: Fn(R) -> R::Cplx>(f: &F, a: R, b: R) -> (R::Cplx, R) {
    let half = R::of(0.5);
    let c = (a + b) * half;
    let h = (b - a) * half;
    let mut kron = R::Cplx::zero();
    let mut gauss = R::Cplx::zero();
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let dx = h * R::of(x);
        let val = if x == 0.0 { f(c) } else { f(c - dx) + f(c + dx) };
        kron = kron + val * R::c_re(R::of(wk));
        if i % 2 == 1 {
            gauss = gauss + val * R::c_re(R::of(WG[i / 2]));
        }
    }
    let scale = R::c_re(h);
    let kron = kron * scale;
    let gauss = gauss * scale;
    let err = (kron - gauss).abs();
    (kron, err)
}

/// Adaptive quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<R: RealScalar, F: Fn(R) -> R::Cplx>(
    f: &F,
    a: R,
    b: R,
    tol: R,
) -> Result<R::Cplx, QuadError> {
    // Worst-panel bisection; panel count bounded to catch hostile integrands.
    let (v, e) = gk15(f, a, b);
    let mut panels = vec![(e, a, b, v)];
    let mut total_err = e;
    let max_panels = 4000;
    while total_err > tol {
        if panels.len() >= max_panels {
            return Err(QuadError::NoConvergence {
                requested: tol.to_f64().unwrap_or(f64::NAN),
                reached: total_err.to_f64().unwrap_or(f64::NAN),
                a: a.to_f64().unwrap_or(f64::NAN),
                b: b.to_f64().unwrap_or(f64::NAN),
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.partial_cmp(&y.1 .0).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let (err, pa, pb, _) = panels.swap_remove(worst);
        total_err = total_err - err;
        let mid = (pa + pb) * R::of(0.5);
        for (la, lb) in [(pa, mid), (mid, pb)] {
            let (v, e) = gk15(f, la, lb);
            total_err = total_err + e;
            panels.push((e, la, lb, v));
        }
    }
    let mut sum = R::Cplx::zero();
    for (_, _, _, v) in panels {
        sum = sum + v;
    }
    Ok(sum)
}

/// Nested adaptive double integral ∫ₐᵇ dt' ∫_{lo(t')}^{hi(t')} dt'' f(t', t'').
///
/// The inner integral runs at a tighter tolerance so the requested absolute
/// tolerance holds for the full double integral.
pub fn integrate2<R, F, G, H>(f: &F, a: R, b: R, lo: G, hi: H, tol: R) -> Result<R::Cplx, QuadError>
where
    R: RealScalar,
    F: Fn(R, R) -> R::Cplx,
    G: Fn(R) -> R,
    H: Fn(R) -> R,
{
    let span = num_traits::Float::abs(b - a);
    let inner_tol = if span > R::zero() {
        tol / span * R::of(0.25)
    } else {
        tol
    };
    let outer = |tp: R| -> R::Cplx {
        integrate(&|ts| f(tp, ts), lo(tp), hi(tp), inner_tol)
            .expect("inner quadrature convergence")
    };
    integrate(&outer, a, b, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    #[test]
    fn polynomial_exact() {
        // ∫₀¹ x³ dx = 1/4, exact for GK15
        let v = integrate(&|x: f64| C64::new(x * x * x, 0.0), 0.0, 1.0, 1e-14).unwrap();
        assert!((v.re - 0.25).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn oscillatory_complex() {
        // ∫₀^10 e^{-iωt} dt = (1 - e^{-10iω}) / (iω) at ω = 3
        let om = 3.0;
        let v = integrate(&|t: f64| C64::new(0.0, -om * t).exp(), 0.0, 10.0, 1e-13).unwrap();
        let exact = (C64::new(1.0, 0.0) - C64::new(0.0, -10.0 * om).exp()) / C64::new(0.0, om);
        assert!((v - exact).norm() < 1e-12);
    }

    #[test]
    fn double_integral_triangle() {
        // ∫₀¹ dt' ∫₀^{t'} dt'' 1 = 1/2
        let v = integrate2(
            &|_: f64, _: f64| C64::new(1.0, 0.0),
            0.0,
            1.0,
            |_| 0.0,
            |tp| tp,
            1e-13,
        )
        .unwrap();
        assert!((v.re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f32_instantiation() {
        let v = integrate(
            &|x: f32| num_complex::Complex32::new(x, 0.0),
            0.0f32,
            2.0f32,
            1e-5,
        )
        .unwrap();
        assert!((v.re - 2.0).abs() < 1e-4);
    }
}
