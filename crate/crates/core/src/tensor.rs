//! Minimal tensor-train machinery over the 4-valued composite spin-path
//! index: matrix product states and operators, SVD compression with a
//! relative singular-value cutoff, site attachment/removal, and contraction.
//!
//! The composite index packs the forward/backward branch pair (σ⁺, σ⁻) as
//! {(+,+) → 0, (+,-) → 1, (-,+) → 2, (-,-) → 3}; every module in this crate
//! shares that table.

use crate::scalar::RealScalar;
use ndarray::{s, Array1, Array2, Array3, Array4, Axis};
use ndarray_linalg::{JobSvd, Scalar, SVDDC};
use num_traits::{One, Zero};
use thiserror::Error;

/// Physical dimension of the composite (σ⁺, σ⁻) index.
pub const PHYS_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("physical dimension must be {PHYS_DIM}, got {0}")]
    PhysDim(usize),
    #[error("bond mismatch: left site ends with {left}, right site starts with {right}")]
    BondMismatch { left: usize, right: usize },
    #[error("boundary bond must be 1, got {0}")]
    Boundary(usize),
    #[error("site count mismatch: operator has {op}, state has {state}")]
    SiteCount { op: usize, state: usize },
    #[error("weights list has length {got}, state has {expected} sites")]
    WeightsLength { expected: usize, got: usize },
    #[error("invalid site index {index} for {len} sites")]
    InvalidIndex { index: usize, len: usize },
    #[error("state is empty")]
    Empty,
    #[error("non-finite data in {0}")]
    NonFinite(String),
    #[error("SVD failed at site {0}")]
    Svd(usize),
}

/// One tensor-train core with shape (left bond, physical, right bond).
#[derive(Debug, Clone)]
pub struct SiteTensor<R: RealScalar = f64> {
    data: Array3<R::Cplx>,
}

impl<R: RealScalar> SiteTensor<R> {
    pub fn new(data: Array3<R::Cplx>) -> Result<Self, TensorError> {
        if data.shape()[1] != PHYS_DIM {
            return Err(TensorError::PhysDim(data.shape()[1]));
        }
        Ok(Self { data })
    }

    /// Boundary site from a physical vector (bonds 1 x 1).
    pub fn from_vector(v: [R::Cplx; PHYS_DIM]) -> Self {
        let mut data = Array3::zeros((1, PHYS_DIM, 1));
        for (x, val) in v.into_iter().enumerate() {
            data[[0, x, 0]] = val;
        }
        Self { data }
    }

    pub fn data(&self) -> &Array3<R::Cplx> {
        &self.data
    }

    pub fn left_bond(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn right_bond(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Tensor-train factorization of the augmented path tensor; newest site last.
#[derive(Debug, Clone)]
pub struct Mps<R: RealScalar = f64> {
    sites: Vec<SiteTensor<R>>,
    canonical_center: Option<usize>,
}

/// Four-leg cores (left, phys out, phys in, right).
#[derive(Debug, Clone)]
pub struct Mpo<R: RealScalar = f64> {
    sites: Vec<Array4<R::Cplx>>,
}

/// Relative singular-value cutoff and optional hard bond cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionParams<R: RealScalar = f64> {
    pub epsilon: R,
    pub chi_max: Option<usize>,
}

impl<R: RealScalar> CompressionParams<R> {
    pub fn new(epsilon: R, chi_max: Option<usize>) -> Result<Self, TensorError> {
        if !(epsilon >= R::zero() && epsilon < R::one()) {
            return Err(TensorError::NonFinite(format!(
                "epsilon must satisfy 0 <= eps < 1, got {epsilon}"
            )));
        }
        Ok(Self { epsilon, chi_max })
    }

    pub fn lossless() -> Self {
        Self {
            epsilon: R::zero(),
            chi_max: None,
        }
    }
}

impl<R: RealScalar> Default for CompressionParams<R> {
    fn default() -> Self {
        Self {
            epsilon: R::of(1e-11),
            chi_max: None,
        }
    }
}

/// Outcome of a compression sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct TruncationReport<R: RealScalar = f64> {
    /// Largest discarded fraction Σ dropped λ² / Σ λ² over all bonds.
    pub max_discarded_weight: R,
    /// Largest bond dimension after compression.
    pub max_bond: usize,
}

/// Which end of the chain to grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Head,
    Tail,
}

fn merge_lp<R: RealScalar>(t: &Array3<R::Cplx>) -> Array2<R::Cplx> {
    let (l, p, r) = t.dim();
    t.to_owned().into_shape((l * p, r)).expect("standard layout")
}

fn merge_pr<R: RealScalar>(t: &Array3<R::Cplx>) -> Array2<R::Cplx> {
    let (l, p, r) = t.dim();
    t.to_owned().into_shape((l, p * r)).expect("standard layout")
}

/// Phase-fix each kept left singular vector: its largest-magnitude entry is
/// made real and positive, with the compensating phase pushed into Vt. SVD is
/// unique only up to these phases; fixing them makes results bit-stable.
fn fix_signs<R: RealScalar>(u: &mut Array2<R::Cplx>, vt: &mut Array2<R::Cplx>) {
    let (rows, cols) = u.dim();
    for j in 0..cols {
        let mut best = R::zero();
        let mut arg = 0usize;
        for i in 0..rows {
            let m = u[[i, j]].abs();
            if m > best {
                best = m;
                arg = i;
            }
        }
        if best > R::zero() {
            let phase = u[[arg, j]] * R::c_re(R::one() / best);
            let inv = phase.conj();
            for i in 0..rows {
                u[[i, j]] = u[[i, j]] * inv;
            }
            for k in 0..vt.dim().1 {
                vt[[j, k]] = vt[[j, k]] * phase;
            }
        }
    }
}

struct SvdStep<R: RealScalar> {
    u: Array2<R::Cplx>,
    s: Array1<R>,
    vt: Array2<R::Cplx>,
    discarded: R,
}

/// Truncated SVD with the relative cutoff, hard cap, and sign convention.
fn truncated_svd<R: RealScalar>(
    m: &Array2<R::Cplx>,
    comp: &CompressionParams<R>,
    site: usize,
) -> Result<SvdStep<R>, TensorError> {
    if m.iter().any(|z| !z.re().is_finite() || !z.im().is_finite()) {
        return Err(TensorError::NonFinite(format!("site {site}")));
    }
    let (u, sv, vt) = m
        .svddc(JobSvd::Some)
        .map_err(|_| TensorError::Svd(site))?;
    let u_full = u.ok_or(TensorError::Svd(site))?;
    let vt_full = vt.ok_or(TensorError::Svd(site))?;
    let total: R = sv.iter().map(|&x| x * x).sum();
    let smax = sv.first().copied().unwrap_or_else(R::zero);
    let mut rank = sv.len().max(1).min(u_full.dim().1);
    if smax > R::zero() && comp.epsilon > R::zero() {
        let cut = comp.epsilon * smax;
        rank = sv.iter().take_while(|&&x| x >= cut).count().max(1);
    }
    if let Some(chi) = comp.chi_max {
        rank = rank.min(chi).max(1);
    }
    let discarded = if total > R::zero() {
        sv.iter().skip(rank).map(|&x| x * x).sum::<R>() / total
    } else {
        R::zero()
    };
    let mut u = u_full.slice(s![.., ..rank]).to_owned();
    let mut vt = vt_full.slice(s![..rank, ..]).to_owned();
    let s = sv.slice(s![..rank]).to_owned();
    fix_signs::<R>(&mut u, &mut vt);
    Ok(SvdStep { u, s, vt, discarded })
}

impl<R: RealScalar> Mps<R> {
    pub fn new(sites: Vec<SiteTensor<R>>) -> Result<Self, TensorError> {
        if let Some(first) = sites.first() {
            if first.left_bond() != 1 {
                return Err(TensorError::Boundary(first.left_bond()));
            }
        }
        if let Some(last) = sites.last() {
            if last.right_bond() != 1 {
                return Err(TensorError::Boundary(last.right_bond()));
            }
        }
        for w in sites.windows(2) {
            if w[0].right_bond() != w[1].left_bond() {
                return Err(TensorError::BondMismatch {
                    left: w[0].right_bond(),
                    right: w[1].left_bond(),
                });
            }
        }
        Ok(Self {
            sites,
            canonical_center: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            sites: Vec::new(),
            canonical_center: None,
        }
    }

    /// Single-site state from a physical vector.
    pub fn from_vector(v: [R::Cplx; PHYS_DIM]) -> Self {
        Self {
            sites: vec![SiteTensor::from_vector(v)],
            canonical_center: Some(0),
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, i: usize) -> &SiteTensor<R> {
        &self.sites[i]
    }

    /// Crate-internal mutable access for the growth loop; callers must
    /// preserve the bond-compatibility invariants themselves.
    pub(crate) fn sites_mut(&mut self) -> &mut Vec<SiteTensor<R>> {
        self.canonical_center = None;
        &mut self.sites
    }

    pub(crate) fn from_parts(sites: Vec<SiteTensor<R>>) -> Self {
        Self {
            sites,
            canonical_center: None,
        }
    }

    pub fn canonical_center(&self) -> Option<usize> {
        self.canonical_center
    }

    pub fn max_bond(&self) -> usize {
        self.sites
            .iter()
            .map(|t| t.right_bond())
            .max()
            .unwrap_or(1)
    }

    /// Grow the chain by one site at the chosen end.
    pub fn attach_site(&self, tensor: SiteTensor<R>, end: End) -> Result<Self, TensorError> {
        let mut sites = self.sites.clone();
        match end {
            End::Tail => {
                if let Some(last) = sites.last() {
                    if last.right_bond() != tensor.left_bond() {
                        return Err(TensorError::BondMismatch {
                            left: last.right_bond(),
                            right: tensor.left_bond(),
                        });
                    }
                } else if tensor.left_bond() != 1 {
                    return Err(TensorError::Boundary(tensor.left_bond()));
                }
                if tensor.right_bond() != 1 {
                    return Err(TensorError::Boundary(tensor.right_bond()));
                }
                sites.push(tensor);
            }
            End::Head => {
                if let Some(first) = sites.first() {
                    if tensor.right_bond() != first.left_bond() {
                        return Err(TensorError::BondMismatch {
                            left: tensor.right_bond(),
                            right: first.left_bond(),
                        });
                    }
                } else if tensor.right_bond() != 1 {
                    return Err(TensorError::Boundary(tensor.right_bond()));
                }
                if tensor.left_bond() != 1 {
                    return Err(TensorError::Boundary(tensor.left_bond()));
                }
                sites.insert(0, tensor);
            }
        }
        Ok(Self {
            sites,
            canonical_center: None,
        })
    }

    /// Replace the tail site; bond checks against the neighbor only, so the
    /// tail may temporarily carry a non-unit right bond during growth.
    pub(crate) fn with_tail_relaxed(&self, tensor: SiteTensor<R>) -> Result<Self, TensorError> {
        if self.is_empty() {
            return Err(TensorError::Empty);
        }
        let mut sites = self.sites.clone();
        if sites.len() > 1 {
            let prev = sites[sites.len() - 2].right_bond();
            if prev != tensor.left_bond() {
                return Err(TensorError::BondMismatch {
                    left: prev,
                    right: tensor.left_bond(),
                });
            }
        } else if tensor.left_bond() != 1 {
            return Err(TensorError::Boundary(tensor.left_bond()));
        }
        *sites.last_mut().unwrap() = tensor;
        Ok(Self {
            sites,
            canonical_center: None,
        })
    }

    /// Append a site without requiring the current tail to end in bond 1.
    pub(crate) fn push_site_relaxed(&self, tensor: SiteTensor<R>) -> Result<Self, TensorError> {
        if let Some(last) = self.sites.last() {
            if last.right_bond() != tensor.left_bond() {
                return Err(TensorError::BondMismatch {
                    left: last.right_bond(),
                    right: tensor.left_bond(),
                });
            }
        } else if tensor.left_bond() != 1 {
            return Err(TensorError::Boundary(tensor.left_bond()));
        }
        let mut sites = self.sites.clone();
        sites.push(tensor);
        Ok(Self {
            sites,
            canonical_center: None,
        })
    }

    /// Contract the physical leg of site `index` with `weights` and absorb
    /// the residual matrix into a neighbor; the site count drops by one.
    pub fn trace_out_site(
        &self,
        index: usize,
        weights: &[R::Cplx; PHYS_DIM],
    ) -> Result<Self, TensorError> {
        let len = self.sites.len();
        if index >= len || len == 1 {
            return Err(TensorError::InvalidIndex { index, len });
        }
        let t = self.sites[index].data();
        let (a, _, b) = t.dim();
        let mut v = Array2::<R::Cplx>::zeros((a, b));
        for x in 0..PHYS_DIM {
            let slice = t.index_axis(Axis(1), x);
            v = v + &slice.mapv(|z| z * weights[x]);
        }
        let mut sites = self.sites.clone();
        sites.remove(index);
        if index > 0 {
            let left = sites[index - 1].data();
            let (c, p, _) = left.dim();
            let m = merge_lp::<R>(left).dot(&v);
            sites[index - 1] = SiteTensor::new(m.into_shape((c, p, b)).unwrap())?;
        } else {
            let right = sites[0].data();
            let (_, p, c) = right.dim();
            let m = v.dot(&merge_pr::<R>(right));
            sites[0] = SiteTensor::new(m.into_shape((a, p, c)).unwrap())?;
        }
        Ok(Self {
            sites,
            canonical_center: None,
        })
    }

    /// Full contraction against one weight vector per site; linear in each.
    pub fn contract_all(&self, weights: &[[R::Cplx; PHYS_DIM]]) -> Result<R::Cplx, TensorError> {
        if weights.len() != self.sites.len() {
            return Err(TensorError::WeightsLength {
                expected: self.sites.len(),
                got: weights.len(),
            });
        }
        if self.sites.is_empty() {
            return Ok(R::Cplx::one());
        }
        let mut env = Array1::<R::Cplx>::from_elem(1, R::Cplx::one());
        for (t, w) in self.sites.iter().zip(weights) {
            env = propagate_env::<R>(&env, t.data(), w);
        }
        Ok(env[0])
    }

    /// Contract all sites but the last with weights; returns the open tail
    /// leg as a physical vector. An optional operator is sandwiched in.
    pub fn contract_keep_tail(
        &self,
        op: Option<&Mpo<R>>,
        head_weights: &[[R::Cplx; PHYS_DIM]],
    ) -> Result<[R::Cplx; PHYS_DIM], TensorError> {
        let n = self.sites.len();
        if n == 0 {
            return Err(TensorError::Empty);
        }
        if head_weights.len() != n - 1 {
            return Err(TensorError::WeightsLength {
                expected: n - 1,
                got: head_weights.len(),
            });
        }
        if let Some(op) = op {
            if op.sites.len() != n {
                return Err(TensorError::SiteCount {
                    op: op.sites.len(),
                    state: n,
                });
            }
            // environment over (operator bond, state bond)
            let mut env = Array2::<R::Cplx>::from_elem((1, 1), R::Cplx::one());
            for i in 0..n - 1 {
                env = propagate_env_mpo::<R>(
                    &env,
                    &op.sites[i],
                    self.sites[i].data(),
                    &head_weights[i],
                );
            }
            let w = &op.sites[n - 1];
            let t = self.sites[n - 1].data();
            let (ml, _, _, _) = w.dim();
            let (al, _, _) = t.dim();
            let mut out = [R::Cplx::zero(); PHYS_DIM];
            for o in 0..PHYS_DIM {
                let mut acc = R::Cplx::zero();
                for m in 0..ml {
                    for a in 0..al {
                        let mut inner = R::Cplx::zero();
                        for x in 0..PHYS_DIM {
                            inner = inner + w[[m, o, x, 0]] * t[[a, x, 0]];
                        }
                        acc = acc + env[[m, a]] * inner;
                    }
                }
                out[o] = acc;
            }
            Ok(out)
        } else {
            let mut env = Array1::<R::Cplx>::from_elem(1, R::Cplx::one());
            for i in 0..n - 1 {
                env = propagate_env::<R>(&env, self.sites[i].data(), &head_weights[i]);
            }
            let t = self.sites[n - 1].data();
            let mut out = [R::Cplx::zero(); PHYS_DIM];
            for (o, out_o) in out.iter_mut().enumerate() {
                let mut acc = R::Cplx::zero();
                for a in 0..env.len() {
                    acc = acc + env[a] * t[[a, o, 0]];
                }
                *out_o = acc;
            }
            Ok(out)
        }
    }

    /// Two-sided SVD sweep with relative cutoff and bond cap.
    pub fn svd_compress(
        &self,
        comp: &CompressionParams<R>,
    ) -> Result<(Self, TruncationReport<R>), TensorError> {
        self.clone().svd_compress_into(comp)
    }

    /// Consuming variant of [`Mps::svd_compress`]; the hot path.
    pub fn svd_compress_into(
        self,
        comp: &CompressionParams<R>,
    ) -> Result<(Self, TruncationReport<R>), TensorError> {
        let mut sites: Vec<Array3<R::Cplx>> =
            self.sites.into_iter().map(|t| t.data).collect();
        let n = sites.len();
        let mut report = TruncationReport {
            max_discarded_weight: R::zero(),
            max_bond: 1,
        };
        if n <= 1 {
            let out = Self {
                sites: sites.into_iter().map(SiteTensor::new).collect::<Result<_, _>>()?,
                canonical_center: Some(0),
            };
            return Ok((out, report));
        }
        // left-to-right
        for i in 0..n - 1 {
            let (l, p, r) = sites[i].dim();
            let m = std::mem::take(&mut sites[i])
                .into_shape((l * p, r))
                .expect("layout");
            let step = truncated_svd::<R>(&m, comp, i)?;
            let rank = step.s.len();
            report.max_discarded_weight = report.max_discarded_weight.max(step.discarded);
            report.max_bond = report.max_bond.max(rank);
            sites[i] = step.u.into_shape((l, p, rank)).unwrap();
            let mut carry = step.vt;
            for (j, &sv) in step.s.iter().enumerate() {
                carry.row_mut(j).map_inplace(|z| *z = *z * R::c_re(sv));
            }
            let (rl, rp, rr) = sites[i + 1].dim();
            let next = carry.dot(
                &std::mem::take(&mut sites[i + 1])
                    .into_shape((rl, rp * rr))
                    .expect("layout"),
            );
            sites[i + 1] = next.into_shape((rank, rp, rr)).unwrap();
        }
        // right-to-left
        for i in (1..n).rev() {
            let (l, p, r) = sites[i].dim();
            let m = std::mem::take(&mut sites[i])
                .into_shape((l, p * r))
                .expect("layout");
            let step = truncated_svd::<R>(&m, comp, i)?;
            let rank = step.s.len();
            report.max_discarded_weight = report.max_discarded_weight.max(step.discarded);
            report.max_bond = report.max_bond.max(rank);
            sites[i] = step.vt.into_shape((rank, p, r)).unwrap();
            let mut carry = step.u;
            for (j, &sv) in step.s.iter().enumerate() {
                carry.column_mut(j).map_inplace(|z| *z = *z * R::c_re(sv));
            }
            let (ll, lp, lr) = sites[i - 1].dim();
            debug_assert_eq!(lr, carry.dim().0);
            let prev = std::mem::take(&mut sites[i - 1])
                .into_shape((ll * lp, lr))
                .expect("layout")
                .dot(&carry);
            sites[i - 1] = prev.into_shape((ll, lp, rank)).unwrap();
        }
        let sites = sites
            .into_iter()
            .map(SiteTensor::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok((
            Self {
                sites,
                canonical_center: Some(0),
            },
            report,
        ))
    }

    /// Largest deviation from the orthonormality promised by
    /// `canonical_center`.
    pub fn canonical_defect(&self) -> R {
        let Some(center) = self.canonical_center else {
            return R::zero();
        };
        let mut worst = R::zero();
        for (i, t) in self.sites.iter().enumerate() {
            let d = t.data();
            let (l, _, r) = d.dim();
            if i < center {
                let m = merge_lp::<R>(d);
                let gram = m.t().mapv(|z| z.conj()).dot(&m);
                for a in 0..r {
                    for b in 0..r {
                        let want = if a == b { R::Cplx::one() } else { R::Cplx::zero() };
                        worst = worst.max((gram[[a, b]] - want).abs());
                    }
                }
            } else if i > center {
                let m = merge_pr::<R>(d);
                let gram = m.dot(&m.t().mapv(|z| z.conj()));
                for a in 0..l {
                    for b in 0..l {
                        let want = if a == b { R::Cplx::one() } else { R::Cplx::zero() };
                        worst = worst.max((gram[[a, b]] - want).abs());
                    }
                }
            }
        }
        worst
    }

    /// Dense coefficient vector over the flattened composite path index,
    /// first site slowest. Exponential in the site count; for small checks.
    pub fn to_dense(&self) -> Array1<R::Cplx> {
        let mut acc = Array2::<R::Cplx>::from_elem((1, 1), R::Cplx::one());
        for t in &self.sites {
            let d = t.data();
            let (l, p, r) = d.dim();
            let m = d.to_owned().into_shape((l, p * r)).unwrap();
            acc = acc.dot(&m);
            let rows = acc.dim().0 * p;
            acc = acc.into_shape((rows, r)).unwrap();
        }
        let len = acc.dim().0;
        acc.into_shape(len).unwrap()
    }
}

fn propagate_env<R: RealScalar>(
    env: &Array1<R::Cplx>,
    t: &Array3<R::Cplx>,
    w: &[R::Cplx; PHYS_DIM],
) -> Array1<R::Cplx> {
    let (_, _, b) = t.dim();
    let mut weighted = Array2::<R::Cplx>::zeros((env.len(), b));
    for x in 0..PHYS_DIM {
        let slice = t.index_axis(Axis(1), x);
        weighted = weighted + &slice.mapv(|z| z * w[x]);
    }
    let e2 = env.view().insert_axis(Axis(0));
    e2.dot(&weighted).index_axis_move(Axis(0), 0)
}

fn propagate_env_mpo<R: RealScalar>(
    env: &Array2<R::Cplx>,
    w: &Array4<R::Cplx>,
    t: &Array3<R::Cplx>,
    wt: &[R::Cplx; PHYS_DIM],
) -> Array2<R::Cplx> {
    let (ml, _, _, mr) = w.dim();
    let (al, _, ar) = t.dim();
    // V[m, x, m'] = Σ_o W[m, o, x, m'] wt[o]
    let mut v = Array3::<R::Cplx>::zeros((ml, PHYS_DIM, mr));
    for m in 0..ml {
        for o in 0..PHYS_DIM {
            for x in 0..PHYS_DIM {
                for mp in 0..mr {
                    v[[m, x, mp]] = v[[m, x, mp]] + w[[m, o, x, mp]] * wt[o];
                }
            }
        }
    }
    // F[m, x, b] = Σ_a env[m, a] T[a, x, b]
    let tmat = t.to_owned().into_shape((al, PHYS_DIM * ar)).unwrap();
    let f = env.dot(&tmat).into_shape((ml, PHYS_DIM, ar)).unwrap();
    // E'[m', b] = Σ_{m,x} V[m, x, m'] F[m, x, b]
    let vmat = v
        .permuted_axes([2, 0, 1])
        .as_standard_layout()
        .to_owned()
        .into_shape((mr, ml * PHYS_DIM))
        .unwrap();
    let fmat = f.into_shape((ml * PHYS_DIM, ar)).unwrap();
    vmat.dot(&fmat)
}

impl<R: RealScalar> Mpo<R> {
    pub fn new(sites: Vec<Array4<R::Cplx>>) -> Result<Self, TensorError> {
        for t in &sites {
            if t.shape()[1] != PHYS_DIM || t.shape()[2] != PHYS_DIM {
                return Err(TensorError::PhysDim(t.shape()[1]));
            }
        }
        for w in sites.windows(2) {
            if w[0].shape()[3] != w[1].shape()[0] {
                return Err(TensorError::BondMismatch {
                    left: w[0].shape()[3],
                    right: w[1].shape()[0],
                });
            }
        }
        Ok(Self { sites })
    }

    pub fn identity(n: usize) -> Self {
        let mut site = Array4::<R::Cplx>::zeros((1, PHYS_DIM, PHYS_DIM, 1));
        for x in 0..PHYS_DIM {
            site[[0, x, x, 0]] = R::Cplx::one();
        }
        Self {
            sites: vec![site; n],
        }
    }

    /// Bond-1 diagonal operator from per-site diagonal weights.
    pub fn diagonal(weights: &[[R::Cplx; PHYS_DIM]]) -> Self {
        let sites = weights
            .iter()
            .map(|w| {
                let mut site = Array4::<R::Cplx>::zeros((1, PHYS_DIM, PHYS_DIM, 1));
                for x in 0..PHYS_DIM {
                    site[[0, x, x, 0]] = w[x];
                }
                site
            })
            .collect();
        Self { sites }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, i: usize) -> &Array4<R::Cplx> {
        &self.sites[i]
    }

    /// Dense matrix over the flattened composite index (first site slowest).
    pub fn to_dense(&self) -> Array2<R::Cplx> {
        let n = self.sites.len();
        let dim: usize = PHYS_DIM.pow(n as u32);
        let mut out = Array2::<R::Cplx>::zeros((dim, dim));
        let mut acc = Array2::<R::Cplx>::from_elem((1, 1), R::Cplx::one());
        let mut rows = 1usize;
        for t in &self.sites {
            let (l, _, _, r) = t.dim();
            let mut next = Array2::<R::Cplx>::zeros((rows * PHYS_DIM * PHYS_DIM, r));
            for idx in 0..rows {
                for o in 0..PHYS_DIM {
                    for x in 0..PHYS_DIM {
                        for rb in 0..r {
                            let mut v = R::Cplx::zero();
                            for lb in 0..l {
                                v = v + acc[[idx, lb]] * t[[lb, o, x, rb]];
                            }
                            next[[(idx * PHYS_DIM + o) * PHYS_DIM + x, rb]] = v;
                        }
                    }
                }
            }
            acc = next;
            rows *= PHYS_DIM * PHYS_DIM;
        }
        for row in 0..rows {
            let mut digits = vec![0usize; 2 * n];
            let mut rem = row;
            for d in digits.iter_mut().rev() {
                *d = rem % PHYS_DIM;
                rem /= PHYS_DIM;
            }
            let mut oidx = 0usize;
            let mut xidx = 0usize;
            for site in 0..n {
                oidx = oidx * PHYS_DIM + digits[2 * site];
                xidx = xidx * PHYS_DIM + digits[2 * site + 1];
            }
            out[[oidx, xidx]] = acc[[row, 0]];
        }
        out
    }
}

/// Apply an operator to a state (site counts must match) and compress.
pub fn apply_mpo<R: RealScalar>(
    op: &Mpo<R>,
    state: &Mps<R>,
    comp: &CompressionParams<R>,
) -> Result<Mps<R>, TensorError> {
    let grown = contract_mpo_raw(op, state)?;
    let (compressed, _) = grown.svd_compress(comp)?;
    Ok(compressed)
}

/// Operator-state contraction without compression: bonds multiply.
pub fn contract_mpo_raw<R: RealScalar>(
    op: &Mpo<R>,
    state: &Mps<R>,
) -> Result<Mps<R>, TensorError> {
    if op.len() != state.len() {
        return Err(TensorError::SiteCount {
            op: op.len(),
            state: state.len(),
        });
    }
    let mut sites = Vec::with_capacity(state.len());
    for (w, t) in op.sites.iter().zip(state.sites.iter()) {
        let t = t.data();
        let (l, o_dim, i_dim, r) = w.dim();
        let (a, _, b) = t.dim();
        // W (l,o,i,r) -> (l o r, i)
        let wmat = w
            .view()
            .permuted_axes([0, 1, 3, 2])
            .as_standard_layout()
            .to_owned()
            .into_shape((l * o_dim * r, i_dim))
            .unwrap();
        // T (a,i,b) -> (i, a b)
        let tmat = t
            .view()
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .to_owned()
            .into_shape((i_dim, a * b))
            .unwrap();
        let p = wmat.dot(&tmat); // (l o r, a b)
        let p5 = p.into_shape((l, o_dim, r, a, b)).unwrap();
        let merged = p5
            .permuted_axes([0, 3, 1, 2, 4])
            .as_standard_layout()
            .to_owned()
            .into_shape((l * a, o_dim, r * b))
            .unwrap();
        sites.push(SiteTensor::new(merged)?);
    }
    Ok(Mps {
        sites,
        canonical_center: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rnd(rng: &mut ChaCha8Rng) -> C64 {
        c(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
    }

    fn random_mps(n: usize, chi: usize, seed: u64) -> Mps<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sites = Vec::new();
        for i in 0..n {
            let l = if i == 0 { 1 } else { chi };
            let r = if i == n - 1 { 1 } else { chi };
            let data = Array3::from_shape_fn((l, PHYS_DIM, r), |_| rnd(&mut rng));
            sites.push(SiteTensor::new(data).unwrap());
        }
        Mps::new(sites).unwrap()
    }

    fn random_mpo(n: usize, chi: usize, seed: u64) -> Mpo<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sites = Vec::new();
        for i in 0..n {
            let l = if i == 0 { 1 } else { chi };
            let r = if i == n - 1 { 1 } else { chi };
            sites.push(Array4::from_shape_fn((l, PHYS_DIM, PHYS_DIM, r), |_| {
                rnd(&mut rng)
            }));
        }
        Mpo::new(sites).unwrap()
    }

    fn ones() -> [C64; PHYS_DIM] {
        [c(1.0, 0.0); PHYS_DIM]
    }

    #[test]
    fn product_state_compress_is_identity() {
        let mps = Mps::<f64>::from_vector([c(1.0, 0.0), c(0.5, -0.5), c(0.0, 0.0), c(2.0, 1.0)])
            .attach_site(SiteTensor::from_vector([c(0.3, 0.0); 4]), End::Tail)
            .unwrap();
        let (out, rep) = mps.svd_compress(&CompressionParams::lossless()).unwrap();
        assert_eq!(rep.max_discarded_weight, 0.0);
        assert_eq!(out.max_bond(), 1);
        let a = mps.contract_all(&[ones(), ones()]).unwrap();
        let b = out.contract_all(&[ones(), ones()]).unwrap();
        assert!((a - b).norm() < 1e-13);
    }

    #[test]
    fn lossless_compress_preserves_contraction() {
        let mps = random_mps(5, 6, 42);
        let (out, _) = mps.svd_compress(&CompressionParams::lossless()).unwrap();
        let w: Vec<_> = (0..5).map(|_| ones()).collect();
        let a = mps.contract_all(&w).unwrap();
        let b = out.contract_all(&w).unwrap();
        assert!((a - b).norm() <= 1e-13 * a.norm().max(1.0));
        assert!(out.canonical_defect() < 1e-12);
    }

    #[test]
    fn rank_two_truncates_to_product() {
        // weights 1 and 1e-13 on two orthogonal product terms
        let mut site0 = Array3::<C64>::zeros((1, PHYS_DIM, 2));
        site0[[0, 0, 0]] = c(1.0, 0.0);
        site0[[0, 1, 1]] = c(1e-13, 0.0);
        let mut site1 = Array3::<C64>::zeros((2, PHYS_DIM, 1));
        site1[[0, 0, 0]] = c(1.0, 0.0);
        site1[[1, 1, 0]] = c(1.0, 0.0);
        let mps = Mps::new(vec![
            SiteTensor::new(site0).unwrap(),
            SiteTensor::new(site1).unwrap(),
        ])
        .unwrap();
        let comp = CompressionParams::new(1e-11, None).unwrap();
        let (out, rep) = mps.svd_compress(&comp).unwrap();
        assert_eq!(out.max_bond(), 1);
        assert!(rep.max_discarded_weight > 0.0);
        assert!(rep.max_discarded_weight < 1e-20);
    }

    #[test]
    fn apply_identity_mpo() {
        let mps = random_mps(4, 5, 7);
        let out = apply_mpo(&Mpo::identity(4), &mps, &CompressionParams::lossless()).unwrap();
        let diff = (&mps.to_dense() - &out.to_dense())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn apply_all_ones_diagonal_equals_identity() {
        let mps = random_mps(3, 4, 9);
        let diag = Mpo::diagonal(&vec![ones(); 3]);
        let out = apply_mpo(&diag, &mps, &CompressionParams::lossless()).unwrap();
        let diff = (&mps.to_dense() - &out.to_dense())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn apply_mpo_matches_dense() {
        let mps = random_mps(3, 3, 11);
        let mpo = random_mpo(3, 2, 12);
        let out = apply_mpo(&mpo, &mps, &CompressionParams::lossless()).unwrap();
        let want = mpo.to_dense().dot(&mps.to_dense());
        let got = out.to_dense();
        let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = (&want - &got).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-12 * scale.max(1.0), "diff {diff} scale {scale}");
    }

    #[test]
    fn apply_mpo_associativity_lossless() {
        let mps = random_mps(4, 3, 21);
        let m1 = random_mpo(4, 2, 22);
        let m2 = random_mpo(4, 2, 23);
        let lossless = CompressionParams::lossless();
        let seq = apply_mpo(&m2, &apply_mpo(&m1, &mps, &lossless).unwrap(), &lossless).unwrap();
        let dense = m2.to_dense().dot(&m1.to_dense()).dot(&mps.to_dense());
        let got = seq.to_dense();
        let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = (&dense - &got).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-11 * scale.max(1.0));
    }

    #[test]
    fn attach_one_hot_keeps_contraction_under_partition() {
        let mps = random_mps(3, 4, 31);
        let w: Vec<_> = (0..3).map(|_| ones()).collect();
        let before = mps.contract_all(&w).unwrap();
        let mut v = [c(0.0, 0.0); 4];
        v[0] = c(1.0, 0.0);
        let grown = mps
            .attach_site(SiteTensor::from_vector(v), End::Tail)
            .unwrap();
        let w4: Vec<_> = (0..4).map(|_| ones()).collect();
        let after = grown.contract_all(&w4).unwrap();
        assert!((before - after).norm() < 1e-13);
        // summing one-hot tail weights recovers the ones contraction
        let mut total = c(0.0, 0.0);
        for hot in 0..PHYS_DIM {
            let mut wh = w4.clone();
            wh[3] = [c(0.0, 0.0); 4];
            wh[3][hot] = c(1.0, 0.0);
            total += grown.contract_all(&wh).unwrap();
        }
        assert!((total - after).norm() < 1e-13);
    }

    #[test]
    fn attach_to_empty_gives_single_site() {
        let grown = Mps::<f64>::empty()
            .attach_site(SiteTensor::from_vector([c(1.0, 0.0); 4]), End::Tail)
            .unwrap();
        assert_eq!(grown.len(), 1);
    }

    #[test]
    fn trace_out_matches_dense_partial_sum() {
        let mps = random_mps(3, 4, 41);
        let weights = [c(0.2, 0.1), c(1.0, 0.0), c(-0.5, 0.3), c(0.0, -1.0)];
        let reduced = mps.trace_out_site(1, &weights).unwrap();
        assert_eq!(reduced.len(), 2);
        let dense = mps.to_dense();
        let mut want = Array1::<C64>::zeros(PHYS_DIM * PHYS_DIM);
        for x0 in 0..PHYS_DIM {
            for x1 in 0..PHYS_DIM {
                for x2 in 0..PHYS_DIM {
                    let flat = (x0 * PHYS_DIM + x1) * PHYS_DIM + x2;
                    want[x0 * PHYS_DIM + x2] += dense[flat] * weights[x1];
                }
            }
        }
        let got = reduced.to_dense();
        let diff = (&want - &got).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn trace_out_one_hot_fixes_value() {
        let mps = random_mps(3, 3, 43);
        let mut hot = [c(0.0, 0.0); 4];
        hot[2] = c(1.0, 0.0);
        let reduced = mps.trace_out_site(0, &hot).unwrap();
        let w: Vec<_> = (0..2).map(|_| ones()).collect();
        let got = reduced.contract_all(&w).unwrap();
        let mut wfull: Vec<_> = (0..3).map(|_| ones()).collect();
        wfull[0] = hot;
        let want = mps.contract_all(&wfull).unwrap();
        assert!((got - want).norm() < 1e-13);
    }

    #[test]
    fn trace_out_scalar_factor_on_product_state() {
        let v0 = [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        let v1 = [c(0.5, 0.0); 4];
        let mps = Mps::<f64>::from_vector(v0)
            .attach_site(SiteTensor::from_vector(v1), End::Tail)
            .unwrap();
        let reduced = mps.trace_out_site(0, &ones()).unwrap();
        let got = reduced.contract_all(&[ones()]).unwrap();
        // sum of site-0 entries times the remaining contraction
        assert!((got - c(10.0 * 2.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn contract_all_examples() {
        let v0 = [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        let v1 = [c(1.0, 1.0), c(0.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0)];
        let mps = Mps::<f64>::from_vector(v0)
            .attach_site(SiteTensor::from_vector(v1), End::Tail)
            .unwrap();
        let mut w = vec![[c(0.0, 0.0); 4]; 2];
        w[0][1] = c(1.0, 0.0);
        w[1][0] = c(1.0, 0.0);
        let got = mps.contract_all(&w).unwrap();
        assert!((got - v0[1] * v1[0]).norm() < 1e-14);
        // linearity in one weight vector
        let mps = random_mps(4, 3, 51);
        let mut w1: Vec<_> = (0..4).map(|_| ones()).collect();
        let mut w2 = w1.clone();
        w1[2] = [c(0.3, 0.1), c(0.0, 0.0), c(1.0, -2.0), c(0.2, 0.0)];
        w2[2] = [c(-1.0, 0.5), c(2.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)];
        let mut wsum = w1.clone();
        for x in 0..4 {
            wsum[2][x] = w1[2][x] + w2[2][x];
        }
        let lhs = mps.contract_all(&wsum).unwrap();
        let rhs = mps.contract_all(&w1).unwrap() + mps.contract_all(&w2).unwrap();
        assert!((lhs - rhs).norm() <= 1e-13 * lhs.norm().max(1.0));
    }

    #[test]
    fn contract_all_matches_dense() {
        let mps = random_mps(4, 4, 61);
        let dense = mps.to_dense();
        let w: Vec<_> = (0..4).map(|_| ones()).collect();
        let got = mps.contract_all(&w).unwrap();
        let want: C64 = dense.iter().copied().sum();
        assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0));
    }

    #[test]
    fn contract_keep_tail_matches_dense() {
        let mps = random_mps(3, 4, 71);
        let dense = mps.to_dense();
        let heads = vec![ones(); 2];
        let got = mps.contract_keep_tail(None, &heads).unwrap();
        for o in 0..PHYS_DIM {
            let mut want = c(0.0, 0.0);
            for x0 in 0..PHYS_DIM {
                for x1 in 0..PHYS_DIM {
                    want += dense[(x0 * PHYS_DIM + x1) * PHYS_DIM + o];
                }
            }
            assert!((got[o] - want).norm() < 1e-12);
        }
        let with_op = mps
            .contract_keep_tail(Some(&Mpo::identity(3)), &heads)
            .unwrap();
        for o in 0..PHYS_DIM {
            assert!((with_op[o] - got[o]).norm() < 1e-12);
        }
    }

    #[test]
    fn contract_keep_tail_with_mpo_matches_apply() {
        let mps = random_mps(3, 3, 81);
        let mpo = random_mpo(3, 2, 82);
        let applied = apply_mpo(&mpo, &mps, &CompressionParams::lossless()).unwrap();
        let heads = vec![ones(); 2];
        let direct = mps.contract_keep_tail(Some(&mpo), &heads).unwrap();
        let via_apply = applied.contract_keep_tail(None, &heads).unwrap();
        for o in 0..PHYS_DIM {
            assert!((direct[o] - via_apply[o]).norm() < 1e-11);
        }
    }

    #[test]
    fn compression_idempotent_singular_values() {
        let mps = random_mps(5, 8, 91);
        let comp = CompressionParams::new(1e-6, None).unwrap();
        let (once, _) = mps.svd_compress(&comp).unwrap();
        let (twice, rep2) = once.svd_compress(&comp).unwrap();
        assert!(rep2.max_discarded_weight < 1e-26);
        let w: Vec<_> = (0..5).map(|_| ones()).collect();
        let a = once.contract_all(&w).unwrap();
        let b = twice.contract_all(&w).unwrap();
        assert!((a - b).norm() <= 1e-13 * a.norm().max(1.0));
    }

    #[test]
    fn compression_error_tracks_discarded_weight() {
        let mps = random_mps(6, 10, 101);
        let w: Vec<_> = (0..6).map(|_| ones()).collect();
        let exact = mps.contract_all(&w).unwrap();
        let comp = CompressionParams::new(0.4, None).unwrap();
        let (lossy, rep) = mps.svd_compress(&comp).unwrap();
        let approx = lossy.contract_all(&w).unwrap();
        assert!(rep.max_discarded_weight > 0.0);
        let norm2: f64 = mps.to_dense().iter().map(|z| z.norm_sqr()).sum();
        let wnorm2 = (PHYS_DIM as f64).powi(6);
        // discarded weight bounds the state error fraction per bond; add a
        // roundoff floor proportional to the contraction scale
        let bound = (rep.max_discarded_weight * 12.0 * norm2).sqrt() * wnorm2.sqrt()
            + 1e-11 * (norm2 * wnorm2).sqrt();
        assert!(
            (exact - approx).norm() <= bound,
            "err {} bound {}",
            (exact - approx).norm(),
            bound
        );
    }

    #[test]
    fn deterministic_compression() {
        let mps = random_mps(5, 7, 111);
        let comp = CompressionParams::new(1e-8, Some(12)).unwrap();
        let (a, _) = mps.svd_compress(&comp).unwrap();
        let (b, _) = mps.svd_compress(&comp).unwrap();
        for (ta, tb) in (0..a.len()).map(|i| (a.site(i), b.site(i))) {
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn chi_max_enforced() {
        let mps = random_mps(6, 9, 121);
        let comp = CompressionParams::new(0.0, Some(3)).unwrap();
        let (out, rep) = mps.svd_compress(&comp).unwrap();
        assert!(out.max_bond() <= 3);
        assert!(rep.max_bond <= 3);
    }

    #[test]
    fn error_paths() {
        let mps = random_mps(3, 3, 131);
        assert!(matches!(
            apply_mpo(&Mpo::identity(2), &mps, &CompressionParams::lossless()),
            Err(TensorError::SiteCount { .. })
        ));
        assert!(matches!(
            mps.contract_all(&[ones(); 2]),
            Err(TensorError::WeightsLength { .. })
        ));
        assert!(matches!(
            mps.trace_out_site(5, &ones()),
            Err(TensorError::InvalidIndex { .. })
        ));
        let bad = Array3::<C64>::zeros((1, 3, 1));
        assert!(matches!(
            SiteTensor::<f64>::new(bad),
            Err(TensorError::PhysDim(3))
        ));
        let mut nan_site = Array3::<C64>::zeros((1, PHYS_DIM, 1));
        nan_site[[0, 0, 0]] = c(f64::NAN, 0.0);
        let bad_state = Mps::<f64>::new(vec![
            SiteTensor::new(nan_site).unwrap(),
            SiteTensor::from_vector(ones()),
        ])
        .unwrap();
        assert!(matches!(
            bad_state.svd_compress(&CompressionParams::lossless()),
            Err(TensorError::NonFinite(_))
        ));
    }

    #[test]
    fn f32_tensor_instantiation() {
        use num_complex::Complex32 as C32;
        let v = [C32::new(1.0, 0.0); 4];
        let mps = Mps::<f32>::from_vector(v);
        let (out, _) = mps
            .svd_compress(&CompressionParams::<f32>::lossless())
            .unwrap();
        let got = out.contract_all(&[[C32::new(1.0, 0.0); 4]]).unwrap();
        assert!((got.re - 4.0).abs() < 1e-5);
    }
}
