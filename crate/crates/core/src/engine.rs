//! Iterative propagation of the augmented path tensor: symmetrized system
//! propagator, influence-row operators built from the kernel tables, growth
//! with memory termination, and per-step readout of the reduced density
//! matrix.
//!
//! The circuit alternates bath-coupling windows with system kicks:
//! σ₀ —U(dt/2)— σ₁ —U(dt)— σ₂ ... —U(dt)— σ_n, followed by a trailing
//! half kick at readout. Influence rows are applied with full-width windows
//! when a site is attached (correct for every later horizon); readout applies
//! a correction row that clips the newest window to the current horizon, on a
//! copy, so the evolving state is never mutated by observation.

use crate::bath::{BathKernelTable, Correlation, GridParams, KernelError, ModelParams};
use crate::probe::ProbeParams;
use crate::scalar::RealScalar;
use crate::tensor::{
    contract_mpo_raw, CompressionParams, Mpo, Mps, SiteTensor, TensorError, PHYS_DIM,
};
use ndarray::{Array2, Array3, Array4};
use ndarray_linalg::Scalar;
use num_traits::{Float, One, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: String },
}

/// σ_z sign of the forward-branch component of a composite index.
pub(crate) fn fwd_sign<R: RealScalar>(c: usize) -> R {
    if c / 2 == 0 {
        R::one()
    } else {
        -R::one()
    }
}

/// σ_z sign of the backward-branch component.
pub(crate) fn bwd_sign<R: RealScalar>(c: usize) -> R {
    if c % 2 == 0 {
        R::one()
    } else {
        -R::one()
    }
}

/// Influence weight for a given anchor branch difference (0 or ±2) paired
/// with a partner index through η and its conjugate. The 1/4 absorbs the two
/// σ_z/2 vertices for ±1-valued paths.
pub(crate) fn influence_flow_weight<R: RealScalar>(
    eta: R::Cplx,
    flow: R,
    partner: usize,
) -> R::Cplx {
    if flow == R::zero() {
        return R::Cplx::one();
    }
    let coupling =
        eta * R::c_re(fwd_sign::<R>(partner)) - eta.conj() * R::c_re(bwd_sign::<R>(partner));
    (coupling * R::c_re(-flow * R::of(0.25))).exp()
}

/// Influence weight for one (anchor, partner) pair.
pub(crate) fn influence_pair_weight<R: RealScalar>(
    eta: R::Cplx,
    anchor: usize,
    partner: usize,
) -> R::Cplx {
    let flow = fwd_sign::<R>(anchor) - bwd_sign::<R>(anchor);
    influence_flow_weight::<R>(eta, flow, partner)
}

/// The three possible anchor branch differences, indexed 0..3.
const FLOW_CLASSES: [f64; 3] = [0.0, 2.0, -2.0];

/// Bond index of a composite value's branch difference.
fn flow_class(c: usize) -> usize {
    match c {
        0 | 3 => 0,
        1 => 1,
        _ => 2,
    }
}

/// Exact propagator of the two-level system over `dt`, lifted to the
/// composite index, with the half-step kept for symmetrized splitting.
#[derive(Debug, Clone)]
pub struct SystemPropagator<R: RealScalar = f64> {
    half: Array2<R::Cplx>,
    full: Array2<R::Cplx>,
}

impl<R: RealScalar> SystemPropagator<R> {
    pub fn new(model: &ModelParams<R>, dt: R) -> Self {
        Self {
            half: Self::superop(model.delta, dt * R::of(0.5)),
            full: Self::superop(model.delta, dt),
        }
    }

    /// ρ ↦ e^(-i H_S τ) ρ e^(+i H_S τ) with H_S = (Δ/2) σ_x, as a 4x4 matrix
    /// over the composite index. Closed form: cos/sin of Δτ/2.
    fn superop(delta: R, tau: R) -> Array2<R::Cplx> {
        let theta = delta * tau * R::of(0.5);
        let cos = R::c_re(Float::cos(theta));
        let msin = R::cplx(R::zero(), -Float::sin(theta));
        let mut u = Array2::<R::Cplx>::zeros((2, 2));
        u[[0, 0]] = cos;
        u[[1, 1]] = cos;
        u[[0, 1]] = msin;
        u[[1, 0]] = msin;
        let mut sup = Array2::<R::Cplx>::zeros((PHYS_DIM, PHYS_DIM));
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        sup[[2 * a + b, 2 * c + d]] = u[[a, c]] * u[[b, d]].conj();
                    }
                }
            }
        }
        sup
    }

    pub fn half_step(&self) -> &Array2<R::Cplx> {
        &self.half
    }

    pub fn full_step(&self) -> &Array2<R::Cplx> {
        &self.full
    }

    /// Apply the half kick to a flattened density vector.
    pub fn apply_half(&self, v: &[R::Cplx; PHYS_DIM]) -> [R::Cplx; PHYS_DIM] {
        let mut out = [R::Cplx::zero(); PHYS_DIM];
        for (i, out_i) in out.iter_mut().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                *out_i = *out_i + self.half[[i, j]] * *vj;
            }
        }
        out
    }
}

/// 2x2 reduced density matrix of the spin.
#[derive(Debug, Clone)]
pub struct ReducedDensity<R: RealScalar = f64> {
    pub rho: Array2<R::Cplx>,
}

impl<R: RealScalar> ReducedDensity<R> {
    pub fn from_flat(v: &[R::Cplx; PHYS_DIM]) -> Self {
        let mut rho = Array2::zeros((2, 2));
        for r in 0..2 {
            for c in 0..2 {
                rho[[r, c]] = v[2 * r + c];
            }
        }
        Self { rho }
    }

    pub fn trace(&self) -> R::Cplx {
        self.rho[[0, 0]] + self.rho[[1, 1]]
    }

    pub fn hermiticity_defect(&self) -> R {
        let mut worst = R::zero();
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.rho[[r, c]] - self.rho[[c, r]].conj()).abs());
            }
        }
        worst
    }
}

/// P = ⟨σ_z⟩ of a reduced density matrix.
pub fn polarization<R: RealScalar>(rho: &ReducedDensity<R>) -> R {
    (rho.rho[[0, 0]] - rho.rho[[1, 1]]).re()
}

/// One recorded observation.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<R: RealScalar = f64> {
    pub t: R,
    pub p: R,
    /// ⟨W(t)⟩ when the probe is active.
    pub w: Option<R::Cplx>,
    pub f: Option<R>,
    /// [1 - F] / (α² ξ²); absent at α = 0.
    pub scaled: Option<R>,
}

/// Resolved settings a run was produced with.
#[derive(Debug, Clone)]
pub struct RunMeta<R: RealScalar = f64> {
    pub model: ModelParams<R>,
    pub grid: GridParams<R>,
    pub comp: CompressionParams<R>,
    pub probe: Option<ProbeParams<R>>,
    /// Largest bond dimension encountered.
    pub max_bond: usize,
}

/// Per-step records of a single evolution.
#[derive(Debug, Clone)]
pub struct TimeSeries<R: RealScalar = f64> {
    pub records: Vec<StepRecord<R>>,
    pub meta: RunMeta<R>,
}

impl<R: RealScalar> TimeSeries<R> {
    pub fn times(&self) -> Vec<R> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn polarizations(&self) -> Vec<R> {
        self.records.iter().map(|r| r.p).collect()
    }
}

/// The augmented path tensor under iterative growth.
#[derive(Debug, Clone)]
pub struct AugmentedState<R: RealScalar = f64> {
    pub mps: Mps<R>,
    /// Current horizon n (time = n dt).
    pub step_index: usize,
    /// Path index held by the first retained site.
    pub lo: usize,
}

impl<R: RealScalar> AugmentedState<R> {
    pub fn retained(&self) -> usize {
        self.mps.len()
    }
}

/// Diagonal influence row pairing the tail site (path index `n`) with every
/// retained site; `row` lists (k, η_{nk}) with k ascending up to n. The bond
/// carries only the anchor's branch difference (three classes), not its full
/// composite value.
pub fn influence_mpo<R: RealScalar>(row: &[(usize, R::Cplx)], n: usize) -> Mpo<R> {
    let sites_n = row.len();
    let n_cls = FLOW_CLASSES.len();
    let mut sites = Vec::with_capacity(sites_n);
    if sites_n == 1 {
        let mut w = Array4::<R::Cplx>::zeros((1, PHYS_DIM, PHYS_DIM, 1));
        for x in 0..PHYS_DIM {
            w[[0, x, x, 0]] = influence_pair_weight::<R>(row[0].1, x, x);
        }
        debug_assert_eq!(row[0].0, n);
        return Mpo::new(vec![w]).expect("valid single-site row");
    }
    for (pos, &(k, eta)) in row.iter().enumerate() {
        if pos == 0 {
            // leftmost retained site: receive the anchor class from the right
            let mut w = Array4::<R::Cplx>::zeros((1, PHYS_DIM, PHYS_DIM, n_cls));
            for x in 0..PHYS_DIM {
                for (m, &flow) in FLOW_CLASSES.iter().enumerate() {
                    w[[0, x, x, m]] = influence_flow_weight::<R>(eta, R::of(flow), x);
                }
            }
            sites.push(w);
        } else if pos + 1 < sites_n {
            let mut w = Array4::<R::Cplx>::zeros((n_cls, PHYS_DIM, PHYS_DIM, n_cls));
            for x in 0..PHYS_DIM {
                for (m, &flow) in FLOW_CLASSES.iter().enumerate() {
                    w[[m, x, x, m]] = influence_flow_weight::<R>(eta, R::of(flow), x);
                }
            }
            sites.push(w);
        } else {
            debug_assert_eq!(k, n);
            // anchor: emits its branch-difference class leftward
            let mut w = Array4::<R::Cplx>::zeros((n_cls, PHYS_DIM, PHYS_DIM, 1));
            for x in 0..PHYS_DIM {
                w[[flow_class(x), x, x, 0]] = influence_pair_weight::<R>(eta, x, x);
            }
            sites.push(w);
        }
    }
    Mpo::new(sites).expect("valid influence row")
}

/// Driver for one evolution.
pub struct TempoEvolution<'a, R: RealScalar = f64> {
    corr: &'a dyn Correlation<R>,
    pub model: ModelParams<R>,
    pub grid: GridParams<R>,
    pub comp: CompressionParams<R>,
    table: BathKernelTable<R>,
    prop: SystemPropagator<R>,
    aug: AugmentedState<R>,
    max_bond: usize,
}

impl<'a, R: RealScalar> TempoEvolution<'a, R> {
    pub fn new(
        corr: &'a dyn Correlation<R>,
        model: ModelParams<R>,
        grid: GridParams<R>,
        comp: CompressionParams<R>,
    ) -> Result<Self, EngineError> {
        if grid.dt * model.omega_c > R::of(2.0) {
            log::warn!(
                "dt * omega_c = {} > 2: bath memory under-resolved",
                grid.dt * model.omega_c
            );
        }
        let table = BathKernelTable::build(corr, &grid);
        let prop = SystemPropagator::new(&model, grid.dt);
        // initial state |+,0⟩: composite (up, up); the first window's
        // self-weight is applied immediately
        let mut v = [R::Cplx::zero(); PHYS_DIM];
        v[0] = R::Cplx::one();
        let row0 = table.attach_row(0);
        for (x, val) in v.iter_mut().enumerate() {
            *val = *val * influence_pair_weight::<R>(row0[0].1, x, x);
        }
        let mps = Mps::from_vector(v);
        Ok(Self {
            corr,
            model,
            grid,
            comp,
            table,
            prop,
            aug: AugmentedState {
                mps,
                step_index: 0,
                lo: 0,
            },
            max_bond: 1,
        })
    }

    pub fn augmented(&self) -> &AugmentedState<R> {
        &self.aug
    }

    pub fn horizon(&self) -> usize {
        self.aug.step_index
    }

    pub fn table(&self) -> &BathKernelTable<R> {
        &self.table
    }

    pub fn propagator(&self) -> &SystemPropagator<R> {
        &self.prop
    }

    pub fn correlation(&self) -> &dyn Correlation<R> {
        self.corr
    }

    pub fn max_bond(&self) -> usize {
        self.max_bond
    }

    /// Advance one step: split the tail bond, append the propagator-linked
    /// new site, terminate the oldest site once past the memory window, and
    /// apply the new influence row with compression.
    pub fn step(&mut self) -> Result<(), EngineError> {
        let n = self.aug.step_index + 1;
        let dk = self.grid.dk();
        let mut state = std::mem::replace(&mut self.aug.mps, Mps::empty());

        // bond-split the tail: copy its physical value onto the bond
        {
            let sites = state.sites_mut();
            let tail = sites.last().expect("non-empty state").data();
            let (a, _, _) = tail.dim();
            let mut split = Array3::<R::Cplx>::zeros((a, PHYS_DIM, PHYS_DIM));
            for ai in 0..a {
                for x in 0..PHYS_DIM {
                    split[[ai, x, x]] = tail[[ai, x, 0]];
                }
            }
            *sites.last_mut().unwrap() = SiteTensor::new(split)?;

            // new site carries the system link: half kick for the first
            // step, full kick afterwards
            let link = if n == 1 {
                self.prop.half_step()
            } else {
                self.prop.full_step()
            };
            let mut site = Array3::<R::Cplx>::zeros((PHYS_DIM, PHYS_DIM, 1));
            for m in 0..PHYS_DIM {
                for x in 0..PHYS_DIM {
                    site[[m, x, 0]] = link[[x, m]];
                }
            }
            sites.push(SiteTensor::new(site)?);
        }

        // drop the oldest site once it leaves the memory window
        let mut lo = self.aug.lo;
        if state.len() > dk + 1 {
            let sites = state.sites_mut();
            let head = sites.remove(0);
            let d = head.data();
            let (a, _, b) = d.dim();
            let mut v = Array2::<R::Cplx>::zeros((a, b));
            for x in 0..PHYS_DIM {
                for ai in 0..a {
                    for bi in 0..b {
                        v[[ai, bi]] = v[[ai, bi]] + d[[ai, x, bi]];
                    }
                }
            }
            let next = sites[0].data();
            let (_, p, c) = next.dim();
            let merged = v.dot(
                &next
                    .to_owned()
                    .into_shape((b, p * c))
                    .expect("standard layout"),
            );
            sites[0] = SiteTensor::new(merged.into_shape((a, p, c)).unwrap())?;
            lo = n - dk;
        }

        // influence row for the new path point across the retained sites
        let row = self.table.attach_row(n);
        debug_assert_eq!(row.len(), state.len());
        // a decoupled bath leaves the state untouched
        let state = if row.iter().all(|&(_, eta)| eta == R::Cplx::zero()) {
            state
        } else {
            let mpo = influence_mpo::<R>(&row, n);
            let grown = contract_mpo_raw(&mpo, &state)?;
            let (compressed, _) = grown.svd_compress_into(&self.comp)?;
            compressed
        };
        self.max_bond = self.max_bond.max(state.max_bond());

        self.aug = AugmentedState {
            mps: state,
            step_index: n,
            lo,
        };
        Ok(())
    }

    /// Correction row turning attach-time (full window) weights of the tail
    /// site into the clipped weights of the current horizon.
    fn correction_row(&self) -> Vec<(usize, R::Cplx)> {
        let n = self.aug.step_index;
        let applied = self.table.attach_row(n);
        let target = self.table.readout_row(n);
        applied
            .into_iter()
            .zip(target)
            .map(|((k, full), (_, clipped))| (k, clipped - full))
            .collect()
    }

    /// Contract the state on a copy: horizon correction row, optional extra
    /// per-site diagonal weights and scalar, trailing half kick.
    pub fn tail_vector_with(
        &self,
        extra: Option<(&[[R::Cplx; PHYS_DIM]], R::Cplx)>,
    ) -> Result<[R::Cplx; PHYS_DIM], EngineError> {
        let n_sites = self.aug.mps.len();
        let row = self.correction_row();
        debug_assert_eq!(row.len(), n_sites);
        let mut mpo = influence_mpo::<R>(&row, self.aug.step_index);
        if let Some((weights, scalar)) = extra {
            debug_assert_eq!(weights.len(), n_sites);
            mpo = compose_diagonal::<R>(&mpo, weights, scalar);
        }
        let ones = vec![[R::Cplx::one(); PHYS_DIM]; n_sites - 1];
        let v = self.aug.mps.contract_keep_tail(Some(&mpo), &ones)?;
        let v = if self.aug.step_index >= 1 {
            self.prop.apply_half(&v)
        } else {
            v
        };
        for z in &v {
            if !z.re().is_finite() || !z.im().is_finite() {
                return Err(EngineError::NonFinite {
                    step: self.aug.step_index,
                    what: "readout contraction".into(),
                });
            }
        }
        Ok(v)
    }

    /// Reduced density matrix at the current horizon.
    pub fn reduced_density(&self) -> Result<ReducedDensity<R>, EngineError> {
        let v = self.tail_vector_with(None)?;
        Ok(ReducedDensity::from_flat(&v))
    }

    /// Modified reduced density at the current horizon under the probe.
    pub fn probe_reduced_density(
        &self,
        probe: &ProbeParams<R>,
    ) -> Result<ReducedDensity<R>, EngineError> {
        let gamma =
            crate::bath::ProbeKernelTable::build(self.corr, &self.grid, self.aug.step_index)?;
        let (weights, scalar) =
            crate::probe::probe_site_weights::<R>(&gamma, probe, self.aug.lo, self.aug.step_index);
        let v = self.tail_vector_with(Some((&weights, scalar)))?;
        Ok(ReducedDensity::from_flat(&v))
    }
}

/// Multiply per-site diagonal weights (and one scalar, folded into the tail)
/// into a diagonal operator.
fn compose_diagonal<R: RealScalar>(
    op: &Mpo<R>,
    weights: &[[R::Cplx; PHYS_DIM]],
    scalar: R::Cplx,
) -> Mpo<R> {
    let n = op.len();
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        let mut w = op.site(i).clone();
        let (l, _, _, r) = w.dim();
        for m in 0..l {
            for x in 0..PHYS_DIM {
                for mp in 0..r {
                    let mut val = w[[m, x, x, mp]];
                    val = val * weights[i][x];
                    if i == n - 1 {
                        val = val * scalar;
                    }
                    w[[m, x, x, mp]] = val;
                }
            }
        }
        sites.push(w);
    }
    Mpo::new(sites).expect("diagonal composition preserves bonds")
}

/// Evolve the open system and record observables at every step.
///
/// The correlation function is passed separately from the model so a
/// discretized-bath kernel can be fed to the same engine.
pub fn evolve<R: RealScalar>(
    corr: &dyn Correlation<R>,
    model: &ModelParams<R>,
    grid: &GridParams<R>,
    comp: &CompressionParams<R>,
    probe: Option<&ProbeParams<R>>,
) -> Result<TimeSeries<R>, EngineError> {
    let mut evo = TempoEvolution::new(corr, *model, *grid, *comp)?;
    let mut records = Vec::with_capacity(grid.n_steps + 1);
    records.push(observe(&evo, probe)?);
    for n in 1..=grid.n_steps {
        evo.step()?;
        let rec = observe(&evo, probe)?;
        if !rec.p.is_finite() {
            return Err(EngineError::NonFinite {
                step: n,
                what: "polarization".into(),
            });
        }
        records.push(rec);
    }
    Ok(TimeSeries {
        records,
        meta: RunMeta {
            model: *model,
            grid: *grid,
            comp: *comp,
            probe: probe.copied(),
            max_bond: evo.max_bond(),
        },
    })
}

fn observe<R: RealScalar>(
    evo: &TempoEvolution<R>,
    probe: Option<&ProbeParams<R>>,
) -> Result<StepRecord<R>, EngineError> {
    let n = evo.horizon();
    let t = evo.grid.dt * R::of(n as f64);
    let rho = evo.reduced_density()?;
    let p = polarization(&rho);
    let (w, f, scaled) = if let Some(pp) = probe {
        let rec = crate::probe::fotoc_at(evo, pp)?;
        (Some(rec.w_expect), Some(rec.f), rec.scaled)
    } else {
        (None, None, None)
    };
    Ok(StepRecord { t, p, w, f, scaled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{DkMax, OhmicCorrelation};
    use num_complex::Complex64 as C64;

    fn model(s: f64, alpha: f64) -> ModelParams<f64> {
        ModelParams {
            delta: 1.0,
            s,
            alpha,
            omega_c: 10.0,
        }
    }

    #[test]
    fn propagator_identity_limit() {
        let prop = SystemPropagator::new(&model(1.0, 0.0), 2e-8);
        let half = prop.half_step();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((half[[i, j]] - C64::new(want, 0.0)).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn propagator_flips_polarization_at_pi() {
        // two half kicks of dt = π rotate |+⟩⟨+| to |-⟩⟨-|
        let prop = SystemPropagator::new(&model(1.0, 0.0), std::f64::consts::PI);
        let v0 = [
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ];
        let v1 = prop.apply_half(&prop.apply_half(&v0));
        let rho = ReducedDensity::<f64>::from_flat(&v1);
        assert!((polarization(&rho) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn propagator_preserves_trace() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let prop = SystemPropagator::new(&model(1.0, 0.0), 0.37);
        for _ in 0..20 {
            let mut v = [C64::new(0.0, 0.0); 4];
            for z in v.iter_mut() {
                *z = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
            let rho = ReducedDensity::<f64>::from_flat(&v);
            let h = &rho.rho + &rho.rho.t().mapv(|z| z.conj());
            let tr = h[[0, 0]] + h[[1, 1]];
            let v = [
                h[[0, 0]] / tr,
                h[[0, 1]] / tr,
                h[[1, 0]] / tr,
                h[[1, 1]] / tr,
            ];
            let out = prop.apply_half(&v);
            let rho2 = ReducedDensity::<f64>::from_flat(&out);
            assert!((rho2.trace() - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn influence_row_zero_coupling_is_identity() {
        let corr = OhmicCorrelation::new(&model(1.0, 0.0));
        let grid = GridParams::new(0.1, 6, DkMax::Full);
        let tab = BathKernelTable::build(&corr, &grid);
        let row = tab.attach_row(4);
        let mpo = influence_mpo::<f64>(&row, 4);
        let dense = mpo.to_dense();
        let dim = dense.dim().0;
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dense[[i, j]] - C64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn influence_single_site_diagonal_paths_unaffected() {
        let corr = OhmicCorrelation::new(&model(1.0, 0.3));
        let grid = GridParams::new(0.1, 4, DkMax::Full);
        let tab = BathKernelTable::build(&corr, &grid);
        let row = tab.attach_row(0);
        let mpo = influence_mpo::<f64>(&row, 0);
        let dense = mpo.to_dense();
        // composite 0 and 3 have σ⁺ = σ⁻: weight exactly 1
        assert_eq!(dense[[0, 0]], C64::new(1.0, 0.0));
        assert_eq!(dense[[3, 3]], C64::new(1.0, 0.0));
        // off-diagonal paths are damped by the real part of η
        let eta = row[0].1;
        let expect = ((eta * 1.0 - eta.conj() * (-1.0)) * C64::new(-2.0 * 0.25, 0.0)).exp();
        assert!((dense[[1, 1]] - expect).norm() < 1e-14);
        assert!((dense[[1, 1]].norm() - (-eta.re).exp()).abs() < 1e-14);
    }

    #[test]
    fn influence_two_site_matches_direct_exponential() {
        let corr = OhmicCorrelation::new(&model(0.7, 0.4));
        let grid = GridParams::new(0.08, 5, DkMax::Full);
        let tab = BathKernelTable::build(&corr, &grid);
        let row = tab.attach_row(1);
        assert_eq!(row.len(), 2);
        let mpo = influence_mpo::<f64>(&row, 1);
        let dense = mpo.to_dense();
        for c1 in 0..4 {
            for c0 in 0..4 {
                let idx = c0 * 4 + c1;
                let mut want = C64::new(1.0, 0.0);
                for &(k, eta) in &row {
                    let partner = if k == 0 { c0 } else { c1 };
                    want *= influence_pair_weight::<f64>(eta, c1, partner);
                }
                assert!(
                    (dense[[idx, idx]] - want).norm() < 1e-13,
                    "config ({c0},{c1})"
                );
            }
        }
    }

    #[test]
    fn free_spin_cosine() {
        let corr = OhmicCorrelation::new(&model(1.0, 0.0));
        let grid = GridParams::new(0.01, 314, DkMax::Full);
        let comp = CompressionParams::default();
        let series = evolve(&corr, &model(1.0, 0.0), &grid, &comp, None).unwrap();
        assert_eq!(series.records.len(), 315);
        assert_eq!(series.records[0].p, 1.0);
        let mut worst = 0.0f64;
        for rec in &series.records {
            worst = worst.max((rec.p - rec.t.cos()).abs());
        }
        assert!(worst < 1e-6, "max |P - cos| = {worst}");
    }

    #[test]
    fn trace_and_hermiticity_along_run() {
        let corr = OhmicCorrelation::new(&model(1.0, 0.2));
        let m = model(1.0, 0.2);
        let grid = GridParams::new(0.1, 30, DkMax::Lags(12));
        let comp = CompressionParams::default();
        let mut evo = TempoEvolution::new(&corr, m, grid, comp).unwrap();
        for _ in 0..30 {
            evo.step().unwrap();
            let rho = evo.reduced_density().unwrap();
            assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-9);
            assert!(rho.hermiticity_defect() < 1e-9);
        }
    }

    #[test]
    fn initial_state_is_up() {
        let corr = OhmicCorrelation::new(&model(1.0, 0.5));
        let m = model(1.0, 0.5);
        let grid = GridParams::new(0.1, 3, DkMax::Full);
        let evo = TempoEvolution::new(&corr, m, grid, CompressionParams::default()).unwrap();
        let rho = evo.reduced_density().unwrap();
        assert!((rho.rho[[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(polarization(&rho) == 1.0);
    }

    #[test]
    fn memory_truncation_keeps_site_count() {
        let corr = OhmicCorrelation::new(&model(1.0, 0.2));
        let m = model(1.0, 0.2);
        let grid = GridParams::new(0.1, 20, DkMax::Lags(5));
        let mut evo = TempoEvolution::new(&corr, m, grid, CompressionParams::default()).unwrap();
        for n in 1..=20 {
            evo.step().unwrap();
            assert_eq!(evo.augmented().retained(), (n + 1).min(6));
            assert_eq!(evo.augmented().lo, n.saturating_sub(5));
        }
    }
}
