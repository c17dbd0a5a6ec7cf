//! Exact references: state-vector evolution of the spin plus a handful of
//! discretized bosonic modes in a truncated Fock space, and a brute-force
//! sum over every path configuration of the discretized influence
//! functional.
//!
//! The state-vector route never touches influence functionals, so it checks
//! every sign and ordering convention upstream independently. The path sum
//! shares the kernel tables with the tensor engine and checks thetensor
//! factorization itself.

use crate::bath::{
    GridParams, KernelError, ModeSumCorrelation, ModelParams, ProbeKernelTable, spectral_density,
};
use crate::bath::BathKernelTable;
use crate::engine::{
    influence_pair_weight, polarization, ReducedDensity, RunMeta, StepRecord, SystemPropagator,
    TimeSeries,
};
use crate::probe::{probe_site_weights, FotocRecord, ProbeParams};
use crate::scalar::RealScalar;
use crate::tensor::{CompressionParams, PHYS_DIM};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Scalar, UPLO};
use num_traits::{Float, One, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("Hilbert dimension {0} exceeds the guard of 2e6")]
    DimensionGuard(usize),
    #[error("path sum limited to 7 steps, requested {0}")]
    TooManySteps(usize),
    #[error("Krylov propagation failed to converge below {0:e}")]
    KrylovStalled(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// One bath mode: frequency and (real) coupling.
#[derive(Debug, Clone, Copy)]
pub struct Mode<R: RealScalar = f64> {
    pub omega: R,
    pub g: R,
}

/// A finite stand-in for the continuous bath.
#[derive(Debug, Clone)]
pub struct DiscretizedBath<R: RealScalar = f64> {
    pub modes: Vec<Mode<R>>,
    /// Maximum occupation per mode.
    pub fock_cutoff: usize,
}

impl<R: RealScalar> DiscretizedBath<R> {
    /// Midpoint discretization on a linear frequency grid:
    /// ω_k = (k - 1/2) ω_max / m, g_k² = J(ω_k) ω_max / m.
    pub fn from_model(
        model: &ModelParams<R>,
        m: usize,
        omega_max: R,
        fock_cutoff: usize,
    ) -> Result<Self, KernelError> {
        if m < 1 {
            return Err(KernelError::Usage("need at least one mode".into()));
        }
        if omega_max <= R::zero() {
            return Err(KernelError::Usage("omega_max must be positive".into()));
        }
        let dw = omega_max / R::of(m as f64);
        let mut modes = Vec::with_capacity(m);
        for k in 1..=m {
            let omega = (R::of(k as f64) - R::of(0.5)) * dw;
            let g2 = spectral_density(omega, model)? * dw;
            modes.push(Mode {
                omega,
                g: Float::sqrt(g2),
            });
        }
        Ok(Self { modes, fock_cutoff })
    }

    /// Σ g_k², the discrete stand-in for C(0).
    pub fn sum_g2(&self) -> R {
        self.modes.iter().map(|m| m.g * m.g).sum()
    }

    /// The exactly matching correlation function Σ g_k² e^(-i ω_k t).
    pub fn correlation(&self) -> ModeSumCorrelation<R> {
        ModeSumCorrelation {
            modes: self.modes.iter().map(|m| (m.omega, m.g * m.g)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * (self.fock_cutoff + 1).pow(self.modes.len() as u32)
    }
}

/// Matrix-free operators on the product basis. Index layout is spin-major:
/// idx = s (nf+1)^m + Σ_k n_k (nf+1)^k, spin s ∈ {0: up, 1: down}, mode 0
/// occupation fastest.
struct EdOperators<R: RealScalar> {
    nf1: usize,
    bath_dim: usize,
    modes: Vec<Mode<R>>,
    delta_half: R,
    /// Σ ω_k n_k per bath index.
    bath_energy: Vec<R>,
}

impl<R: RealScalar> EdOperators<R> {
    fn new(bath: &DiscretizedBath<R>, model: &ModelParams<R>) -> Self {
        let nf1 = bath.fock_cutoff + 1;
        let m = bath.modes.len();
        let bath_dim = nf1.pow(m as u32);
        let mut bath_energy = vec![R::zero(); bath_dim];
        for (idx, energy) in bath_energy.iter_mut().enumerate() {
            let mut rem = idx;
            let mut e = R::zero();
            for mode in &bath.modes {
                let n = rem % nf1;
                rem /= nf1;
                e += mode.omega * R::of(n as f64);
            }
            *energy = e;
        }
        Self {
            nf1,
            bath_dim,
            modes: bath.modes.clone(),
            delta_half: model.delta * R::of(0.5),
            bath_energy,
        }
    }

    fn dim(&self) -> usize {
        2 * self.bath_dim
    }

    /// out = H v with H = (Δ/2)σ_x + Σ ω b†b + (σ_z/2) Σ g (b† + b).
    fn h_apply(&self, v: &[R::Cplx], out: &mut [R::Cplx]) {
        let d = self.bath_dim;
        for (s, sz) in [(0usize, R::one()), (1usize, -R::one())] {
            let base = s * d;
            let other = (1 - s) * d;
            for b in 0..d {
                let mut acc = v[base + b] * R::c_re(self.bath_energy[b]);
                // tunneling flips the spin without touching the bath
                acc = acc + v[other + b] * R::c_re(self.delta_half);
                // displacement term, weighted by σ_z/2
                acc = acc + self.displace(v, base, b) * R::c_re(sz * R::of(0.5));
                out[base + b] = acc;
            }
        }
    }

    /// out = A v with A = Σ g (b† + b).
    fn a_apply(&self, v: &[R::Cplx], out: &mut [R::Cplx]) {
        let d = self.bath_dim;
        for s in 0..2 {
            let base = s * d;
            for b in 0..d {
                out[base + b] = self.displace(v, base, b);
            }
        }
    }

    /// Σ_k g_k (b_k† + b_k) contribution to row (base + b).
    fn displace(&self, v: &[R::Cplx], base: usize, b: usize) -> R::Cplx {
        let mut acc = R::Cplx::zero();
        let mut stride = 1usize;
        let mut rem = b;
        for mode in &self.modes {
            let n = rem % self.nf1;
            rem /= self.nf1;
            // b†: from occupation n-1 up to n
            if n > 0 {
                let amp = Float::sqrt(R::of(n as f64)) * mode.g;
                acc = acc + v[base + b - stride] * R::c_re(amp);
            }
            // b: from occupation n+1 down to n
            if n + 1 < self.nf1 {
                let amp = Float::sqrt(R::of((n + 1) as f64)) * mode.g;
                acc = acc + v[base + b + stride] * R::c_re(amp);
            }
            stride *= self.nf1;
        }
        acc
    }

    /// Total population at the top Fock level of any mode.
    fn top_level_population(&self, v: &[R::Cplx]) -> R {
        let d = self.bath_dim;
        let mut pop = R::zero();
        for s in 0..2 {
            for b in 0..d {
                let mut rem = b;
                let mut at_top = false;
                for _ in &self.modes {
                    if rem % self.nf1 == self.nf1 - 1 {
                        at_top = true;
                        break;
                    }
                    rem /= self.nf1;
                }
                if at_top {
                    let z = v[s * d + b];
                    pop += z.abs() * z.abs();
                }
            }
        }
        pop
    }
}

fn norm<R: RealScalar>(v: &[R::Cplx]) -> R {
    Float::sqrt(v.iter().map(|z| z.abs() * z.abs()).sum())
}

/// ψ ← e^(z Op) ψ for Hermitian Op via a Lanczos subspace; the per-call
/// truncation error is driven below `tol`.
fn lanczos_expm<R: RealScalar>(
    apply: &dyn Fn(&[R::Cplx], &mut [R::Cplx]),
    v: &[R::Cplx],
    z: R::Cplx,
    tol: R,
) -> Result<Vec<R::Cplx>, OracleError> {
    let dim = v.len();
    let beta0 = norm::<R>(v);
    if beta0 == R::zero() {
        return Ok(v.to_vec());
    }
    let max_m = 80.min(dim);
    let mut basis: Vec<Vec<R::Cplx>> = Vec::with_capacity(max_m);
    basis.push(v.iter().map(|&x| x * R::c_re(R::one() / beta0)).collect());
    let mut alphas: Vec<R> = Vec::new();
    let mut betas: Vec<R> = Vec::new();
    let mut w = vec![R::Cplx::zero(); dim];
    for m in 0..max_m {
        apply(&basis[m], &mut w);
        let alpha: R::Cplx = basis[m]
            .iter()
            .zip(w.iter())
            .map(|(a, b)| a.conj() * *b)
            .sum();
        alphas.push(alpha.re());
        for (wi, qi) in w.iter_mut().zip(basis[m].iter()) {
            *wi = *wi - *qi * alpha;
        }
        if m > 0 {
            let beta_prev = betas[m - 1];
            for (wi, qi) in w.iter_mut().zip(basis[m - 1].iter()) {
                *wi = *wi - *qi * R::c_re(beta_prev);
            }
        }
        // full reorthogonalization keeps the basis clean over long runs
        for q in basis.iter() {
            let overlap: R::Cplx = q.iter().zip(w.iter()).map(|(a, b)| a.conj() * *b).sum();
            for (wi, qi) in w.iter_mut().zip(q.iter()) {
                *wi = *wi - *qi * overlap;
            }
        }
        let beta = norm::<R>(&w);
        // exponential of the current tridiagonal projection
        let k = m + 1;
        let mut tm = Array2::<R>::zeros((k, k));
        for i in 0..k {
            tm[[i, i]] = alphas[i];
            if i + 1 < k {
                tm[[i, i + 1]] = betas[i];
                tm[[i + 1, i]] = betas[i];
            }
        }
        let (evals, evecs) = tm.eigh(UPLO::Lower).expect("small symmetric eigh");
        let mut coeff = Array1::<R::Cplx>::zeros(k);
        for i in 0..k {
            let phase = (R::c_re(evals[i]) * z).exp();
            for j in 0..k {
                coeff[j] = coeff[j] + R::c_re(evecs[[j, i]]) * phase * R::c_re(evecs[[0, i]]);
            }
        }
        // residual coupling to the next basis vector
        let err = beta * coeff[k - 1].abs() * z.abs().max(R::one());
        let happy = beta < R::of(1e-14);
        if err < tol || happy {
            let mut out = vec![R::Cplx::zero(); dim];
            for (j, q) in basis.iter().enumerate() {
                let c = coeff[j] * R::c_re(beta0);
                for (oi, qi) in out.iter_mut().zip(q.iter()) {
                    *oi = *oi + *qi * c;
                }
            }
            return Ok(out);
        }
        betas.push(beta);
        basis.push(w.iter().map(|&x| x * R::c_re(R::one() / beta)).collect());
    }
    Err(OracleError::KrylovStalled(tol.to_f64().unwrap_or(1e-12)))
}

/// Result of a state-vector run: recorded series plus diagnostics.
#[derive(Debug, Clone)]
pub struct EdRun<R: RealScalar = f64> {
    pub series: TimeSeries<R>,
    pub max_top_level_population: R,
    pub max_norm_drift: R,
}

/// Evolve |+, vacuum⟩ under the full discretized Hamiltonian, recording the
/// polarization and, when a probe is given, the fidelity deviation.
pub fn ed_evolve<R: RealScalar>(
    bath: &DiscretizedBath<R>,
    model: &ModelParams<R>,
    dt: R,
    n_steps: usize,
    probe: Option<&ProbeParams<R>>,
) -> Result<EdRun<R>, OracleError> {
    let dim = bath.dim();
    if dim > 2_000_000 {
        return Err(OracleError::DimensionGuard(dim));
    }
    let ops = EdOperators::new(bath, model);
    let mut psi = vec![R::Cplx::zero(); dim];
    psi[0] = R::Cplx::one(); // spin up, every mode in vacuum
    let tol = R::of(1e-11);
    let h_apply = |v: &[R::Cplx], out: &mut [R::Cplx]| ops.h_apply(v, out);
    let a_apply = |v: &[R::Cplx], out: &mut [R::Cplx]| ops.a_apply(v, out);

    let mut records = Vec::with_capacity(n_steps + 1);
    let mut max_top = R::zero();
    let mut max_drift = R::zero();
    for n in 0..=n_steps {
        if n > 0 {
            psi = lanczos_expm::<R>(&h_apply, &psi, R::cplx(R::zero(), -dt), tol)?;
        }
        let drift = Float::abs(norm::<R>(&psi) - R::one());
        max_drift = max_drift.max(drift);
        max_top = max_top.max(ops.top_level_population(&psi));
        let d = ops.bath_dim;
        let mut p = R::zero();
        for (i, z) in psi.iter().enumerate() {
            let w = z.abs() * z.abs();
            if i < d {
                p += w;
            } else {
                p -= w;
            }
        }
        let (w_rec, f_rec, scaled) = if let Some(pp) = probe {
            let phi = lanczos_expm::<R>(&a_apply, &psi, R::cplx(R::zero(), pp.xi), tol)?;
            let w: R::Cplx = psi
                .iter()
                .zip(phi.iter())
                .map(|(a, b)| a.conj() * *b)
                .sum();
            let f = w.abs() * w.abs();
            let scaled = if model.alpha > R::zero() {
                Some((R::one() - f) / (model.alpha * model.alpha * pp.xi * pp.xi))
            } else {
                None
            };
            (Some(w), Some(f), scaled)
        } else {
            (None, None, None)
        };
        records.push(StepRecord {
            t: dt * R::of(n as f64),
            p,
            w: w_rec,
            f: f_rec,
            scaled,
        });
    }
    if max_top > R::of(1e-6) {
        log::warn!(
            "Fock-cutoff leakage: top-level population reached {max_top:+e}; raise the cutoff"
        );
    }
    Ok(EdRun {
        series: TimeSeries {
            records,
            meta: RunMeta {
                model: *model,
                grid: GridParams::new(dt, n_steps, crate::bath::DkMax::Full),
                comp: CompressionParams::lossless(),
                probe: probe.copied(),
                max_bond: 0,
            },
        },
        max_top_level_population: max_top,
        max_norm_drift: max_drift,
    })
}

/// Brute-force evaluation of the discretized path sum the tensor engine
/// factorizes: every composite configuration is enumerated explicitly.
/// Shares the kernel tables and propagator conventions with the engine.
pub fn direct_path_sum<R: RealScalar>(
    model: &ModelParams<R>,
    grid: &GridParams<R>,
    table: &BathKernelTable<R>,
    probe: Option<(&ProbeKernelTable<R>, &ProbeParams<R>)>,
) -> Result<(ReducedDensity<R>, Option<FotocRecord<R>>), OracleError> {
    let n = grid.n_steps;
    if n > 7 {
        return Err(OracleError::TooManySteps(n));
    }
    let prop = SystemPropagator::new(model, grid.dt);
    let dk = grid.dk();

    // per-row kernel values: full windows for interior rows, the clipped
    // final row at the horizon
    let mut rows: Vec<Vec<(usize, R::Cplx)>> = Vec::with_capacity(n + 1);
    for j in 0..n {
        rows.push(table.attach_row(j));
    }
    rows.push(table.readout_row(n));

    let probe_weights = probe.map(|(gamma, pp)| {
        let lo = n.saturating_sub(dk);
        probe_site_weights::<R>(gamma, pp, lo, n)
    });

    let configs = 4usize.pow((n + 1) as u32);
    let mut rho_plain = [R::Cplx::zero(); PHYS_DIM];
    let mut rho_probe = [R::Cplx::zero(); PHYS_DIM];
    let mut path = vec![0usize; n + 1];
    for cfg in 0..configs {
        let mut rem = cfg;
        for slot in path.iter_mut() {
            *slot = rem % 4;
            rem /= 4;
        }
        // initial state |+,+⟩ only
        if path[0] != 0 {
            continue;
        }
        let mut weight = R::Cplx::one();
        // system links: half kick into the first window, full kicks after
        for j in 1..=n {
            let link = if j == 1 {
                prop.half_step()
            } else {
                prop.full_step()
            };
            weight = weight * link[[path[j], path[j - 1]]];
            if weight == R::Cplx::zero() {
                break;
            }
        }
        if weight == R::Cplx::zero() {
            continue;
        }
        // influence pairs within the memory window
        for j in 0..=n {
            for &(k, eta) in &rows[j] {
                weight = weight * influence_pair_weight::<R>(eta, path[j], path[k]);
            }
        }
        rho_plain[path[n]] = rho_plain[path[n]] + weight;
        if let Some((weights, scalar)) = &probe_weights {
            let lo = n.saturating_sub(dk);
            let mut pw = weight * *scalar;
            for (j, w) in weights.iter().enumerate() {
                pw = pw * w[path[lo + j]];
            }
            rho_probe[path[n]] = rho_probe[path[n]] + pw;
        }
    }
    let finish = |v: &[R::Cplx; PHYS_DIM]| -> ReducedDensity<R> {
        let v = if n >= 1 { prop.apply_half(v) } else { *v };
        ReducedDensity::from_flat(&v)
    };
    let rho = finish(&rho_plain);
    let fotoc = probe.map(|(_, pp)| {
        let rho_xi = finish(&rho_probe);
        let w = rho_xi.trace();
        let f = w.abs() * w.abs();
        let scaled = if model.alpha > R::zero() {
            Some((R::one() - f) / (model.alpha * model.alpha * pp.xi * pp.xi))
        } else {
            None
        };
        FotocRecord {
            t: grid.dt * R::of(n as f64),
            w_expect: w,
            f,
            one_minus_f: R::one() - f,
            scaled,
        }
    });
    Ok((rho, fotoc))
}
