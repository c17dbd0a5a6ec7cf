//! Fidelity probe: weak-perturbation weights over the retained path, the
//! modified reduced density readout, and the derived analysis quantities
//! (scaled deviation curves, extrema, exponential-growth fits, variance
//! relation).

use crate::bath::ProbeKernelTable;
use crate::engine::{bwd_sign, fwd_sign, EngineError, TempoEvolution, TimeSeries};
use crate::scalar::RealScalar;
use crate::tensor::{Mpo, PHYS_DIM};
use ndarray_linalg::Scalar;
use num_traits::{Float, One};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("series has no probe records")]
    MissingProbe,
    #[error("scaled deviation undefined at alpha = 0")]
    UndefinedScaling,
    #[error("series too short: {0} records")]
    TooShort(usize),
    #[error("non-positive deviation 1-F at t = {0}; cannot fit a logarithm")]
    NonPositive(f64),
    #[error("degenerate variance ratio: denominator below 1e-15")]
    Degenerate,
    #[error("records are for different times")]
    MismatchedTimes,
}

/// Probe strength and the switch for the path-independent Gaussian weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeParams<R: RealScalar = f64> {
    /// Perturbation strength ξ.
    pub xi: R,
    /// Include exp(-ξ² Λ/2) with Λ the window-averaged probe variance.
    pub include_self_factor: bool,
}

impl<R: RealScalar> Default for ProbeParams<R> {
    fn default() -> Self {
        Self {
            xi: R::of(1e-3),
            include_self_factor: true,
        }
    }
}

impl<R: RealScalar> ProbeParams<R> {
    pub fn new(xi: R, include_self_factor: bool) -> Self {
        if xi > R::of(1e-2) {
            log::warn!("probe strength xi = {xi} above 1e-2: second-order expansion degrades");
        }
        Self {
            xi,
            include_self_factor,
        }
    }
}

/// One probe observation.
#[derive(Debug, Clone, Copy)]
pub struct FotocRecord<R: RealScalar = f64> {
    pub t: R,
    pub w_expect: R::Cplx,
    pub f: R,
    pub one_minus_f: R,
    /// [1 - F] / (α² ξ²); absent at α = 0.
    pub scaled: Option<R>,
}

/// Location and value of one refined extremum.
#[derive(Debug, Clone, Copy)]
pub struct Extremum<R: RealScalar = f64> {
    pub t: R,
    pub value: R,
    /// Half a grid step: the resolution of the parabolic refinement.
    pub uncertainty: R,
}

/// Extrema of the polarization and of the scaled deviation curve.
#[derive(Debug, Clone, Default)]
pub struct ExtremaReport<R: RealScalar = f64> {
    pub minima_p: Vec<Extremum<R>>,
    pub minima_f: Vec<Extremum<R>>,
    pub maxima_f: Vec<Extremum<R>>,
}

/// Least-squares exponent of log(1-F) over a caller-chosen window.
#[derive(Debug, Clone, Copy)]
pub struct LyapunovFit<R: RealScalar = f64> {
    pub lambda_q: R,
    pub intercept: R,
    pub window: (R, R),
    pub r_squared: R,
    pub rms_residual: R,
}

/// Per-site diagonal probe weights over path indices `lo..=n`, plus the
/// scalar second-order factor. The forward branch couples to γ_pm + γ_pp,
/// the backward branch to the conjugate; the 1/2 absorbs the σ_z/2 vertex.
pub fn probe_site_weights<R: RealScalar>(
    table: &ProbeKernelTable<R>,
    probe: &ProbeParams<R>,
    lo: usize,
    n: usize,
) -> (Vec<[R::Cplx; PHYS_DIM]>, R::Cplx) {
    let half_xi = R::c_re(probe.xi * R::of(0.5));
    let mut weights = Vec::with_capacity(n - lo + 1);
    for j in lo..=n {
        let g = table.gamma_sum(j).expect("retained index");
        let mut w = [R::Cplx::one(); PHYS_DIM];
        for (x, wx) in w.iter_mut().enumerate() {
            let exponent =
                (g * R::c_re(fwd_sign::<R>(x)) - g.conj() * R::c_re(bwd_sign::<R>(x))) * half_xi;
            *wx = exponent.exp();
        }
        weights.push(w);
    }
    let scalar = if probe.include_self_factor {
        (table.lambda_self() * R::c_re(-probe.xi * probe.xi * R::of(0.5))).exp()
    } else {
        R::Cplx::one()
    };
    (weights, scalar)
}

/// Diagonal probe operator over the retained sites.
pub fn probe_mpo<R: RealScalar>(table: &ProbeKernelTable<R>, probe: &ProbeParams<R>) -> Mpo<R> {
    let lo = table.lo();
    let n = table.n_now();
    let (weights, scalar) = probe_site_weights(table, probe, lo, n);
    let mut op = Mpo::diagonal(&weights);
    // fold the scalar into the tail site
    let last = op.len() - 1;
    let mut tail = op.site(last).clone();
    for x in 0..PHYS_DIM {
        tail[[0, x, x, 0]] = tail[[0, x, x, 0]] * scalar;
    }
    let mut sites: Vec<_> = (0..op.len()).map(|i| op.site(i).clone()).collect();
    sites[last] = tail;
    op = Mpo::new(sites).expect("diagonal operator");
    op
}

/// Evaluate the probe on an immutable snapshot of the evolution.
pub fn fotoc_at<R: RealScalar>(
    evo: &TempoEvolution<R>,
    probe: &ProbeParams<R>,
) -> Result<FotocRecord<R>, EngineError> {
    let rho = evo.probe_reduced_density(probe)?;
    let t = evo.grid.dt * R::of(evo.horizon() as f64);
    let w = rho.trace();
    let f = w.abs() * w.abs();
    let one_minus_f = R::one() - f;
    let alpha = evo.model.alpha;
    let scaled = if alpha > R::zero() {
        Some(one_minus_f / (alpha * alpha * probe.xi * probe.xi))
    } else {
        None
    };
    Ok(FotocRecord {
        t,
        w_expect: w,
        f,
        one_minus_f,
        scaled,
    })
}

/// Pointwise [1 - F] / (α² ξ²) of a recorded series.
pub fn scaled_series<R: RealScalar>(
    series: &TimeSeries<R>,
    alpha: R,
    xi: R,
) -> Result<Vec<(R, R)>, ProbeError> {
    if alpha <= R::zero() {
        return Err(ProbeError::UndefinedScaling);
    }
    let denom = alpha * alpha * xi * xi;
    series
        .records
        .iter()
        .map(|rec| {
            let f = rec.f.ok_or(ProbeError::MissingProbe)?;
            Ok((rec.t, (R::one() - f) / denom))
        })
        .collect()
}

/// Local extrema by discrete comparison, refined with a 3-point parabola;
/// plateau ties resolve to the earliest time and extrema within two grid
/// steps of either end are dropped.
fn extrema_of<R: RealScalar>(ts: &[R], ys: &[R], want_min: bool) -> Vec<Extremum<R>> {
    let n = ys.len();
    if n < 3 {
        return Vec::new();
    }
    let dt = ts[1] - ts[0];
    let lo_t = ts[0] + dt * R::of(2.0);
    let hi_t = ts[n - 1] - dt * R::of(2.0);
    let better = |a: R, b: R| if want_min { a < b } else { a > b };
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if !better(ys[i], ys[i - 1]) {
            i += 1;
            continue;
        }
        // scan over a possible plateau
        let mut j = i;
        while j + 1 < n && ys[j + 1] == ys[i] {
            j += 1;
        }
        if j + 1 < n && better(ys[i], ys[j + 1]) {
            // extremum with plateau start at i
            if ts[i] >= lo_t && ts[i] <= hi_t {
                let (t_ref, v_ref) = if j == i {
                    refine_parabola(ts, ys, i)
                } else {
                    (ts[i], ys[i])
                };
                out.push(Extremum {
                    t: t_ref,
                    value: v_ref,
                    uncertainty: dt * R::of(0.5),
                });
            }
            i = j + 1;
        } else {
            i = j + 1;
        }
    }
    out
}

fn refine_parabola<R: RealScalar>(ts: &[R], ys: &[R], i: usize) -> (R, R) {
    let dt = ts[i] - ts[i - 1];
    let a = ys[i - 1];
    let b = ys[i];
    let c = ys[i + 1];
    let denom = a - b - b + c;
    if denom == R::zero() {
        return (ts[i], ys[i]);
    }
    let delta = (a - c) / (denom * R::of(2.0));
    let t = ts[i] + delta * dt;
    let value = b - (a - c) * delta * R::of(0.25);
    (t, value)
}

/// Extrema of the polarization (raw) and of the scaled deviation curve.
pub fn extrema_locations<R: RealScalar>(
    series: &TimeSeries<R>,
) -> Result<ExtremaReport<R>, ProbeError> {
    if series.records.len() < 5 {
        return Err(ProbeError::TooShort(series.records.len()));
    }
    let ts: Vec<R> = series.records.iter().map(|r| r.t).collect();
    let ps: Vec<R> = series.records.iter().map(|r| r.p).collect();
    let mut report = ExtremaReport {
        minima_p: extrema_of(&ts, &ps, true),
        ..Default::default()
    };
    let scaled: Option<Vec<R>> = series.records.iter().map(|r| r.scaled).collect();
    if let Some(sc) = scaled {
        report.minima_f = extrema_of(&ts, &sc, true);
        report.maxima_f = extrema_of(&ts, &sc, false);
    }
    Ok(report)
}

/// Least-squares line on log(1-F) over `window`; slope is the fitted
/// exponent. Valid only on windows where the deviation is positive.
pub fn lyapunov_fit<R: RealScalar>(
    series: &TimeSeries<R>,
    window: (R, R),
) -> Result<LyapunovFit<R>, ProbeError> {
    let mut pts = Vec::new();
    for rec in &series.records {
        if rec.t < window.0 || rec.t > window.1 {
            continue;
        }
        let f = rec.f.ok_or(ProbeError::MissingProbe)?;
        let dev = R::one() - f;
        if dev <= R::zero() {
            return Err(ProbeError::NonPositive(rec.t.to_f64().unwrap_or(f64::NAN)));
        }
        pts.push((rec.t, Float::ln(dev)));
    }
    if pts.len() < 2 {
        return Err(ProbeError::TooShort(pts.len()));
    }
    let n = R::of(pts.len() as f64);
    let sx: R = pts.iter().map(|p| p.0).sum();
    let sy: R = pts.iter().map(|p| p.1).sum();
    let sxx: R = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: R = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = R::zero();
    let mut ss_tot = R::zero();
    for &(x, y) in &pts {
        let e = y - (slope * x + intercept);
        ss_res += e * e;
        let d = y - mean_y;
        ss_tot += d * d;
    }
    let r_squared = if ss_tot > R::zero() {
        R::one() - ss_res / ss_tot
    } else {
        R::one()
    };
    Ok(LyapunovFit {
        lambda_q: slope,
        intercept,
        window,
        r_squared,
        rms_residual: Float::sqrt(ss_res / n),
    })
}

/// Suggested fit window (start, first inflection of log(1-F)); the fit
/// itself never chooses a window silently.
pub fn suggest_lyapunov_window<R: RealScalar>(series: &TimeSeries<R>) -> Option<(R, R)> {
    let mut ys = Vec::new();
    let mut ts = Vec::new();
    for rec in &series.records {
        let f = rec.f?;
        let dev = R::one() - f;
        if dev <= R::zero() {
            break;
        }
        ts.push(rec.t);
        ys.push(Float::ln(dev));
    }
    if ys.len() < 4 {
        return None;
    }
    let d2 = |i: usize| ys[i + 1] - ys[i] - ys[i] + ys[i - 1];
    let first = d2(1);
    for i in 2..ys.len() - 1 {
        if d2(i) * first < R::zero() {
            return Some((ts[0], ts[i]));
        }
    }
    None
}

/// Ratio (1 - F_ξ) / (1 - F_{ξ/2}); approaches 4 as ξ → 0.
pub fn variance_check<R: RealScalar>(
    record_xi: &FotocRecord<R>,
    record_half_xi: &FotocRecord<R>,
) -> Result<R, ProbeError> {
    if record_xi.t != record_half_xi.t {
        return Err(ProbeError::MismatchedTimes);
    }
    if Float::abs(record_half_xi.one_minus_f) < R::of(1e-15) {
        return Err(ProbeError::Degenerate);
    }
    Ok(record_xi.one_minus_f / record_half_xi.one_minus_f)
}
