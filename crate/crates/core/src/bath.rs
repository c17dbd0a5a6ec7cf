//! Zero-temperature bath autocorrelation, contour kernel blocks, and the
//! discretized influence / probe coefficient tables with memory truncation.
//!
//! The path windows are centered on the kick times, `[(j-1/2)dt, (j+1/2)dt]`,
//! clipped to the evolved interval `[0, t]`, so the first and last windows are
//! half width and the window measures sum to `t`. Coefficients are double
//! window integrals of the autocorrelation `C`, evaluated through its second
//! antiderivative in closed form; an adaptive-quadrature build of the same
//! tables exists as an independent route.

use crate::quad::{self, QuadError};
use crate::scalar::{gamma_fn, RealScalar};
use ndarray_linalg::Scalar;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("quadrature failure building kernel table: {0}")]
    Quadrature(#[from] QuadError),
}

/// Physical model parameters in units of the tunneling energy (ħ = k_B = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<R: RealScalar = f64> {
    /// Tunneling energy Δ; the unit of energy.
    pub delta: R,
    /// Spectral exponent s; ohmic at s = 1, subohmic below.
    pub s: R,
    /// Dimensionless coupling strength α.
    pub alpha: R,
    /// Bath cutoff frequency ω_c in units of Δ.
    pub omega_c: R,
}

impl<R: RealScalar> Default for ModelParams<R> {
    fn default() -> Self {
        Self {
            delta: R::one(),
            s: R::one(),
            alpha: R::of(0.1),
            omega_c: R::of(10.0),
        }
    }
}

impl<R: RealScalar> ModelParams<R> {
    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.s > R::zero() && self.s <= R::one()) {
            return Err(KernelError::Domain(format!(
                "spectral exponent must satisfy 0 < s <= 1, got {}",
                self.s
            )));
        }
        if self.alpha < R::zero() {
            return Err(KernelError::Domain(format!(
                "coupling must satisfy alpha >= 0, got {}",
                self.alpha
            )));
        }
        if self.omega_c <= R::zero() {
            return Err(KernelError::Domain(format!(
                "cutoff must satisfy omega_c > 0, got {}",
                self.omega_c
            )));
        }
        if self.delta <= R::zero() {
            return Err(KernelError::Domain(format!(
                "tunneling must satisfy delta > 0, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Memory truncation length: lags beyond this are dropped from the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DkMax {
    /// Keep the full history (no truncation).
    Full,
    /// Keep lags up to this many steps.
    Lags(usize),
}

impl DkMax {
    pub fn effective(self, n_steps: usize) -> usize {
        match self {
            DkMax::Full => n_steps,
            DkMax::Lags(k) => k.min(n_steps),
        }
    }
}

/// Time grid: step, total step count, and memory truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams<R: RealScalar = f64> {
    pub dt: R,
    pub n_steps: usize,
    pub dk_max: DkMax,
}

impl<R: RealScalar> GridParams<R> {
    pub fn new(dt: R, n_steps: usize, dk_max: DkMax) -> Self {
        Self {
            dt,
            n_steps,
            dk_max,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.dt <= R::zero() {
            return Err(KernelError::Domain(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_steps < 1 {
            return Err(KernelError::Domain("n_steps must be >= 1".into()));
        }
        if let DkMax::Lags(k) = self.dk_max {
            if k < 1 || k > self.n_steps {
                return Err(KernelError::Domain(format!(
                    "dk_max must satisfy 1 <= dk_max <= n_steps, got {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn dk(&self) -> usize {
        self.dk_max.effective(self.n_steps)
    }

    pub fn t_final(&self) -> R {
        self.dt * R::of(self.n_steps as f64)
    }
}

/// Spectral density J(ω) = 2 α ω^s ω_c^(1-s) e^(-ω/ω_c).
pub fn spectral_density<R: RealScalar>(omega: R, model: &ModelParams<R>) -> Result<R, KernelError> {
    if omega < R::zero() {
        return Err(KernelError::Domain(format!(
            "spectral density defined for omega >= 0, got {omega}"
        )));
    }
    if omega == R::zero() {
        return Ok(R::zero());
    }
    Ok(R::of(2.0)
        * model.alpha
        * num_traits::Float::powf(omega, model.s)
        * num_traits::Float::powf(model.omega_c, R::one() - model.s)
        * num_traits::Float::exp(-omega / model.omega_c))
}

/// Bath autocorrelation function and its first and second antiderivatives.
///
/// All three are single analytic expressions valid for every real `t`; in
/// particular `c(-t) = conj(c(t))` holds identically, and window integrals
/// over mixed-sign time differences can be taken through `c2` directly.
pub trait Correlation<R: RealScalar>: Send + Sync {
    /// C(t) = ∫₀^∞ dω J(ω) e^(-iωt).
    fn c(&self, t: R) -> R::Cplx;
    /// An antiderivative of `c`.
    fn c1(&self, t: R) -> R::Cplx;
    /// An antiderivative of `c1` (additive constants drop out of all uses).
    fn c2(&self, t: R) -> R::Cplx;
    /// C(0) = ∫ J dω.
    fn c0(&self) -> R::Cplx {
        self.c(R::zero())
    }
}

/// Closed-form correlation of the exponential-cutoff (sub)ohmic bath:
/// C(t) = 2 α Γ(s+1) ω_c² (1 + i ω_c t)^(-(s+1)).
#[derive(Debug, Clone, Copy)]
pub struct OhmicCorrelation<R: RealScalar = f64> {
    s: R,
    omega_c: R,
    /// 2 α Γ(s+1)
    amp: R,
}

impl<R: RealScalar> OhmicCorrelation<R> {
    pub fn new(model: &ModelParams<R>) -> Self {
        let amp = R::of(2.0) * model.alpha * R::of(gamma_fn(1.0 + model.s.to_f64().unwrap()));
        Self {
            s: model.s,
            omega_c: model.omega_c,
            amp,
        }
    }

    fn base(&self, t: R) -> R::Cplx {
        // 1 + i ω_c t, always in the right half plane: principal powers and
        // logs are smooth on the whole real line.
        R::cplx(R::one(), self.omega_c * t)
    }
}

impl<R: RealScalar> Correlation<R> for OhmicCorrelation<R> {
    fn c(&self, t: R) -> R::Cplx {
        let z = self.base(t).powf(-(self.s + R::one()));
        z * R::c_re(self.amp * self.omega_c * self.omega_c)
    }

    fn c1(&self, t: R) -> R::Cplx {
        // amp ω_c (i/s) (1 + i ω_c t)^(-s)
        let z = self.base(t).powf(-self.s);
        z * R::cplx(R::zero(), self.amp * self.omega_c / self.s)
    }

    fn c2(&self, t: R) -> R::Cplx {
        let one_minus_s = R::one() - self.s;
        if num_traits::Float::abs(one_minus_s) < R::of(1e-6) {
            // s -> 1 limit: amp/s [L + (1-s) L²/2], L = ln(1 + i ω_c t).
            // The divergent constant drops from every window difference.
            let l = self.base(t).ln();
            let corr = l * l * R::c_re(one_minus_s * R::of(0.5));
            (l + corr) * R::c_re(self.amp / self.s)
        } else {
            let z = self.base(t).powf(one_minus_s);
            z * R::c_re(self.amp / (self.s * one_minus_s))
        }
    }

    fn c0(&self) -> R::Cplx {
        R::c_re(self.amp * self.omega_c * self.omega_c)
    }
}

/// Correlation of a finite set of discrete modes: C(t) = Σ g_k² e^(-i ω_k t).
#[derive(Debug, Clone)]
pub struct ModeSumCorrelation<R: RealScalar = f64> {
    /// (ω_k, g_k²) pairs, all ω_k > 0.
    pub modes: Vec<(R, R)>,
}

impl<R: RealScalar> Correlation<R> for ModeSumCorrelation<R> {
    fn c(&self, t: R) -> R::Cplx {
        self.modes
            .iter()
            .map(|&(w, g2)| R::cplx(R::zero(), -w * t).exp() * R::c_re(g2))
            .fold(R::Cplx::zero(), |a, b| a + b)
    }

    fn c1(&self, t: R) -> R::Cplx {
        self.modes
            .iter()
            .map(|&(w, g2)| R::cplx(R::zero(), -w * t).exp() * R::cplx(R::zero(), g2 / w))
            .fold(R::Cplx::zero(), |a, b| a + b)
    }

    fn c2(&self, t: R) -> R::Cplx {
        self.modes
            .iter()
            .map(|&(w, g2)| R::cplx(R::zero(), -w * t).exp() * R::c_re(-g2 / (w * w)))
            .fold(R::Cplx::zero(), |a, b| a + b)
    }
}

/// Keldysh-contour branch label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Forward (time-ordered) branch.
    Plus,
    /// Backward (anti-time-ordered) branch.
    Minus,
}

/// Zero-temperature contour kernel block between two branch-labeled times.
///
/// Time-ordered (+,+) pairs give C(|t1-t2|), anti-time-ordered (-,-) their
/// conjugate; on mixed pairs the backward-branch argument is contour-later.
pub fn contour_kernel_block<R: RealScalar>(
    branch1: Branch,
    branch2: Branch,
    t1: R,
    t2: R,
    corr: &dyn Correlation<R>,
) -> R::Cplx {
    use Branch::*;
    match (branch1, branch2) {
        (Plus, Plus) => corr.c(num_traits::Float::abs(t1 - t2)),
        (Minus, Minus) => corr.c(num_traits::Float::abs(t1 - t2)).conj(),
        (Plus, Minus) => corr.c(t2 - t1),
        (Minus, Plus) => corr.c(t1 - t2),
    }
}

/// ∫ₐᵇ dt' ∫_c^d dt'' C(t' - t'') via the second antiderivative.
fn window_integral<R: RealScalar>(
    corr: &(impl Correlation<R> + ?Sized),
    (a, b): (R, R),
    (c, d): (R, R),
) -> R::Cplx {
    corr.c2(b - c) - corr.c2(a - c) - corr.c2(b - d) + corr.c2(a - d)
}

/// Time-ordered self integral ∫ₐᵇ dt' ∫ₐ^t' dt'' C(t' - t'').
fn ordered_self_integral<R: RealScalar>(
    corr: &(impl Correlation<R> + ?Sized),
    (a, b): (R, R),
) -> R::Cplx {
    corr.c2(b - a) - corr.c2(R::zero()) - corr.c1(R::zero()) * R::c_re(b - a)
}

/// Banded table of discretized influence coefficients η_{jk}.
///
/// Bulk entries depend only on the lag j-k (stationary bath, full-width
/// windows); the first column (k = 0), the final row (j = N), and their
/// corner carry explicit edge-window values. Storage is O(dk_max).
#[derive(Debug, Clone)]
pub struct BathKernelTable<R: RealScalar = f64> {
    dt: R,
    n_steps: usize,
    dk: usize,
    /// full row window x full column window; lag 0 is the ordered self term
    bulk: Vec<R::Cplx>,
    /// full row window x first-column half window [0, dt/2]
    fcol: Vec<R::Cplx>,
    /// final-row half window [(n-1/2)dt, n dt] x full column window
    frow: Vec<R::Cplx>,
    /// final-row half window x first-column half window
    corner: Vec<R::Cplx>,
}

impl<R: RealScalar> BathKernelTable<R> {
    /// Build all bands from the closed-form antiderivatives.
    pub fn build(corr: &(impl Correlation<R> + ?Sized), grid: &GridParams<R>) -> Self {
        Self::build_with(corr, grid, false).expect("closed-form build cannot fail")
    }

    /// Build the same bands by nested adaptive quadrature of C (absolute
    /// tolerance 1e-12); the independent route used to validate `build`.
    pub fn build_by_quadrature(
        corr: &(impl Correlation<R> + ?Sized),
        grid: &GridParams<R>,
    ) -> Result<Self, KernelError> {
        Self::build_with(corr, grid, true)
    }

    fn build_with(
        corr: &(impl Correlation<R> + ?Sized),
        grid: &GridParams<R>,
        by_quad: bool,
    ) -> Result<Self, KernelError> {
        let dt = grid.dt;
        let dk = grid.dk();
        let half = dt * R::of(0.5);
        let zero = R::zero();
        let lag_t = |lag: usize| R::of(lag as f64) * dt;

        let pair = |row: (R, R), col: (R, R)| -> Result<R::Cplx, KernelError> {
            if by_quad {
                Ok(quad::integrate2(
                    &|tp, ts| corr.c(tp - ts),
                    row.0,
                    row.1,
                    |_| col.0,
                    |_| col.1,
                    R::of(1e-12),
                )?)
            } else {
                Ok(window_integral(corr, row, col))
            }
        };
        let self_ordered = |win: (R, R)| -> Result<R::Cplx, KernelError> {
            if by_quad {
                Ok(quad::integrate2(
                    &|tp, ts| corr.c(tp - ts),
                    win.0,
                    win.1,
                    move |_| win.0,
                    |tp| tp,
                    R::of(1e-12),
                )?)
            } else {
                Ok(ordered_self_integral(corr, win))
            }
        };

        let mut bulk = Vec::with_capacity(dk + 1);
        let mut fcol = Vec::with_capacity(dk + 1);
        let mut frow = Vec::with_capacity(dk + 1);
        let mut corner = Vec::with_capacity(dk + 1);
        for lag in 0..=dk {
            let t0 = lag_t(lag);
            if lag == 0 {
                bulk.push(self_ordered((-half, half))?);
                fcol.push(self_ordered((zero, half))?);
                frow.push(self_ordered((-half, zero))?);
                // degenerate horizon-0 self window has zero measure
                corner.push(R::Cplx::zero());
            } else {
                let row_full = (t0 - half, t0 + half);
                let row_half = (t0 - half, t0);
                let col_full = (-half, half);
                let col_first = (zero, half);
                bulk.push(pair(row_full, col_full)?);
                fcol.push(pair(row_full, col_first)?);
                frow.push(pair(row_half, col_full)?);
                corner.push(pair(row_half, col_first)?);
            }
        }
        Ok(Self {
            dt,
            n_steps: grid.n_steps,
            dk,
            bulk,
            fcol,
            frow,
            corner,
        })
    }

    pub fn dk(&self) -> usize {
        self.dk
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> R {
        self.dt
    }

    /// η_{jk} for the final horizon N = n_steps; `None` outside the band.
    pub fn eta(&self, j: usize, k: usize) -> Option<R::Cplx> {
        if k > j || j > self.n_steps {
            return None;
        }
        let lag = j - k;
        if lag > self.dk {
            return None;
        }
        let n = self.n_steps;
        Some(match (j == n, k == 0) {
            (true, true) => self.corner[lag],
            (true, false) => self.frow[lag],
            (false, true) => self.fcol[lag],
            (false, false) => self.bulk[lag],
        })
    }

    /// Row of η values applied when path site `n` is attached: the site's
    /// window at full (future-proof) width. Returned as (k, η_{nk}) for the
    /// retained k.
    pub fn attach_row(&self, n: usize) -> Vec<(usize, R::Cplx)> {
        let lo = n.saturating_sub(self.dk);
        (lo..=n)
            .map(|k| {
                let lag = n - k;
                let v = if n == 0 {
                    self.fcol[0]
                } else if k == 0 {
                    self.fcol[lag]
                } else {
                    self.bulk[lag]
                };
                (k, v)
            })
            .collect()
    }

    /// Row of η values for the last site at readout horizon `h`: the final
    /// window is clipped to `[.., h dt]`. Same (k, η) layout as `attach_row`.
    pub fn readout_row(&self, h: usize) -> Vec<(usize, R::Cplx)> {
        let lo = h.saturating_sub(self.dk);
        (lo..=h)
            .map(|k| {
                let lag = h - k;
                let v = if h == 0 {
                    R::Cplx::zero()
                } else if k == 0 {
                    self.corner[lag]
                } else {
                    self.frow[lag]
                };
                (k, v)
            })
            .collect()
    }

    /// All stored entries of the final-horizon table as (lag, j, k, η).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, R::Cplx)> + '_ {
        (0..=self.n_steps).flat_map(move |j| {
            let lo = j.saturating_sub(self.dk);
            (lo..=j).map(move |k| (j - k, j, k, self.eta(j, k).unwrap()))
        })
    }
}

/// Coefficients pairing the retained path points with the probe insertion at
/// step `n_now`, plus the path-independent second-order probe weight.
///
/// At zero temperature the blocks in which the boson-annihilation pairing
/// points at the probe vanish in vacuum, so `gamma_pm`/`gamma_mm` are stored
/// as exact zeros and the full weight sits in `gamma_pp`/`gamma_mp`.
#[derive(Debug, Clone)]
pub struct ProbeKernelTable<R: RealScalar = f64> {
    n_now: usize,
    lo: usize,
    gamma_pp: Vec<R::Cplx>,
    lambda_self: R::Cplx,
}

impl<R: RealScalar> ProbeKernelTable<R> {
    pub fn build(
        corr: &(impl Correlation<R> + ?Sized),
        grid: &GridParams<R>,
        n_now: usize,
    ) -> Result<Self, KernelError> {
        if n_now > grid.n_steps {
            return Err(KernelError::Usage(format!(
                "probe step {n_now} beyond grid extent {}",
                grid.n_steps
            )));
        }
        let dt = grid.dt;
        let half = dt * R::of(0.5);
        let dk = grid.dk();
        let lo = n_now.saturating_sub(dk);
        let tn = R::of(n_now as f64) * dt;
        // The probe window keeps full width: it straddles the contour fold,
        // half on each branch.
        let probe_win = (tn - half, tn + half);
        let inv_dt = R::c_re(R::one() / dt);

        let mut gamma_pp = Vec::with_capacity(n_now - lo + 1);
        for j in lo..=n_now {
            let tj = R::of(j as f64) * dt;
            let a = (tj - half).max(R::zero());
            let b = if n_now == 0 {
                // degenerate horizon: keep the half-step width so the
                // coefficient stays finite; it only contributes a phase
                half
            } else {
                (tj + half).min(tn)
            };
            gamma_pp.push(window_integral(corr, probe_win, (a, b)) * inv_dt);
        }
        // window-averaged variance of the smeared probe operator
        let lambda_self = window_integral(corr, probe_win, probe_win) * inv_dt * inv_dt;
        Ok(Self {
            n_now,
            lo,
            gamma_pp,
            lambda_self,
        })
    }

    pub fn n_now(&self) -> usize {
        self.n_now
    }

    /// First retained path index.
    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn gamma_pp(&self, j: usize) -> Option<R::Cplx> {
        self.gamma_pp.get(j.checked_sub(self.lo)?).copied()
    }

    pub fn gamma_mp(&self, j: usize) -> Option<R::Cplx> {
        self.gamma_pp(j).map(|v| v.conj())
    }

    pub fn gamma_pm(&self, j: usize) -> Option<R::Cplx> {
        self.gamma_pp(j).map(|_| R::Cplx::zero())
    }

    pub fn gamma_mm(&self, j: usize) -> Option<R::Cplx> {
        self.gamma_pm(j).map(|v| v.conj())
    }

    /// Combined forward-branch coefficient γ_pm + γ_pp entering the probe
    /// exponent; the backward-branch coefficient is its conjugate.
    pub fn gamma_sum(&self, j: usize) -> Option<R::Cplx> {
        Some(self.gamma_pm(j)? + self.gamma_pp(j)?)
    }

    pub fn lambda_self(&self) -> R::Cplx {
        self.lambda_self
    }
}
