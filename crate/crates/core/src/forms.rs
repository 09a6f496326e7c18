//! Leafwise exterior calculus on truncated Fourier forms.
//!
//! A degree-`p` form `ω = Σ_J f_J dϖ_J` with `f_J = Σ_m f_{m,J} e_m` is stored
//! as a dense block of `C(k, p)` complex coefficients per mode of a shared
//! [`ModeTable`]. Every operator here acts on one mode at a time, so all
//! identities (`d² = 0`, adjointness, `Δ = dd* + d*d`, the Hodge
//! decomposition) hold per mode up to rounding; truncation only limits which
//! forms can be represented.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foliation::{FoliationFrame, RESONANCE_THRESHOLD};
use crate::lattice::{
    binomial, complement_sign, enumerate_ball, insertion_sign, LatticeMode, MultiIndex,
};

/// Coefficients below this magnitude are stored as exact zeros (except at `m = 0`).
pub const DROP_THRESHOLD: f64 = 1e-15;

/// Default floor on the leaf-frequency magnitude `(Σ_j ⟨m, w_j⟩²)^{1/2}`
/// below which the Green operator reports a small divisor.
pub const DEFAULT_DIVISOR_FLOOR: f64 = 1e-13;

/// `i·v·z` for real `v`.
#[inline]
fn times_i(v: f64, z: Complex64) -> Complex64 {
    Complex64::new(-v * z.im, v * z.re)
}

const MODES_PER_TASK: usize = 8192;

/// Runs `f(mode index, coefficient block)` over every mode of `out`, in
/// parallel over fixed chunks of modes.
fn per_mode(out: &mut [Complex64], stride: usize, f: impl Fn(usize, &mut [Complex64]) + Sync) {
    if stride == 0 {
        return;
    }
    out.par_chunks_mut(stride * MODES_PER_TASK)
        .enumerate()
        .for_each(|(c, chunk)| {
            for (j, block) in chunk.chunks_mut(stride).enumerate() {
                f(c * MODES_PER_TASK + j, block);
            }
        });
}

#[inline]
fn is_zero(c: &Complex64) -> bool {
    c.re == 0.0 && c.im == 0.0
}

/// Modes of a closed ball `‖m‖ ≤ R` together with their leaf frequencies for
/// one frame. Forms built on the same frame share tables; a table of smaller
/// radius is always a prefix of a larger one.
pub struct ModeTable {
    frame: Arc<FoliationFrame>,
    radius: f64,
    modes: Vec<LatticeMode>,
    xi: Vec<f64>,
    lambda: Vec<f64>,
    leaf_norm_sq: Vec<f64>,
    harmonic: Vec<bool>,
    neg: Vec<usize>,
    index: OnceLock<HashMap<LatticeMode, usize>>,
}

impl std::fmt::Debug for ModeTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModeTable")
            .field("frame", &self.frame.id())
            .field("radius", &self.radius)
            .field("modes", &self.modes.len())
            .finish()
    }
}

impl ModeTable {
    pub fn new(frame: Arc<FoliationFrame>, radius: f64) -> Arc<Self> {
        let n = frame.ambient_dim();
        let k = frame.leaf_dim();
        let modes = enumerate_ball(n, radius);
        let mut xi = Vec::with_capacity(modes.len() * k);
        let mut lambda = Vec::with_capacity(modes.len());
        let mut leaf_norm_sq = Vec::with_capacity(modes.len());
        let mut harmonic = Vec::with_capacity(modes.len());
        for m in &modes {
            let f = frame.frequency(m);
            lambda.push(f.norm_sq());
            xi.extend_from_slice(&f.0);
            let s = frame.leaf_norm_sq(m.entries());
            leaf_norm_sq.push(s);
            let kernel = if frame.minimality_asserted() {
                m.is_zero() || s == 0.0
            } else {
                s < RESONANCE_THRESHOLD
            };
            harmonic.push(kernel);
        }
        // Negation reverses lexicographic order inside a norm shell.
        let mut neg = vec![0; modes.len()];
        let mut start = 0;
        while start < modes.len() {
            let shell = modes[start].norm_sq();
            let mut end = start;
            while end < modes.len() && modes[end].norm_sq() == shell {
                end += 1;
            }
            for i in start..end {
                neg[i] = start + end - 1 - i;
            }
            start = end;
        }
        Arc::new(ModeTable {
            frame,
            radius,
            modes,
            xi,
            lambda,
            leaf_norm_sq,
            harmonic,
            neg,
            index: OnceLock::new(),
        })
    }

    pub fn frame(&self) -> &Arc<FoliationFrame> {
        &self.frame
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[LatticeMode] {
        &self.modes
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn xi(&self, i: usize) -> &[f64] {
        let k = self.frame.leaf_dim();
        &self.xi[i * k..(i + 1) * k]
    }

    /// Whether mode `i` belongs to the kernel of the Laplacian: only `m = 0`
    /// (and exact resonances) under asserted minimality, otherwise every mode
    /// with `Σ_j ⟨m, w_j⟩²` below the resonance threshold.
    pub fn is_harmonic(&self, i: usize) -> bool {
        self.harmonic[i]
    }

    pub fn position(&self, m: &LatticeMode) -> Option<usize> {
        self.index
            .get_or_init(|| {
                self.modes
                    .iter()
                    .enumerate()
                    .map(|(i, m)| (m.clone(), i))
                    .collect()
            })
            .get(m)
            .copied()
    }

    /// Nonzero mode with the smallest Laplacian multiplier.
    pub fn min_nonzero_lambda(&self) -> Option<(LatticeMode, f64)> {
        self.modes
            .iter()
            .zip(&self.lambda)
            .skip(1)
            .fold(None, |best: Option<(&LatticeMode, f64)>, (m, &l)| match best {
                Some((_, b)) if b <= l => best,
                _ => Some((m, l)),
            })
            .map(|(m, l)| (m.clone(), l))
    }

    /// `dim ker d` on degree-`p` forms, counted per mode from the numerical
    /// rank of `v ↦ iξ(m) ∧ v`. With `mean_free`, the `m = 0` block is skipped.
    pub fn closed_dimension(&self, p: usize, mean_free: bool) -> usize {
        let k = self.frame.leaf_dim();
        if p > k {
            return 0;
        }
        let src = MultiIndex::all_of_degree(k, p);
        let dst = MultiIndex::all_of_degree(k, p + 1);
        let wedge = wedge_table(k, p);
        let tol = 2.0 * std::f64::consts::PI * RESONANCE_THRESHOLD.sqrt();
        let start = usize::from(mean_free);
        (start..self.len())
            .map(|i| {
                let xi = self.xi(i);
                let mut mat = vec![vec![0.0; src.len()]; dst.len()];
                for e in &wedge {
                    mat[e.dst][e.src] += e.sign * xi[e.axis];
                }
                src.len() - numerical_rank(mat, tol)
            })
            .sum()
    }

    /// Dimension of the image of the harmonic projection on degree-`p` forms.
    pub fn harmonic_dimension(&self, p: usize) -> usize {
        let k = self.frame.leaf_dim();
        self.harmonic.iter().filter(|&&h| h).count() * binomial(k, p)
    }
}

fn numerical_rank(mut mat: Vec<Vec<f64>>, tol: f64) -> usize {
    let rows = mat.len();
    let cols = mat.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot, val) = (rank..rows)
            .map(|r| (r, mat[r][c].abs()))
            .fold((rank, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if val <= tol {
            continue;
        }
        mat.swap(rank, pivot);
        for r in rank + 1..rows {
            let f = mat[r][c] / mat[rank][c];
            for cc in c..cols {
                let v = mat[rank][cc];
                mat[r][cc] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

/// One term `dϖ_{axis} ∧ dϖ_{J_src} = sign · dϖ_{J_dst}` of the wedge map
/// from degree `p` to `p + 1` (indices into the lexicographic basis lists).
#[derive(Debug, Clone, Copy)]
struct WedgeEntry {
    src: usize,
    dst: usize,
    axis: usize,
    sign: f64,
}

fn wedge_table(k: usize, p: usize) -> Vec<WedgeEntry> {
    let src = MultiIndex::all_of_degree(k, p);
    let dst = MultiIndex::all_of_degree(k, p + 1);
    let mut out = Vec::new();
    for (si, &set) in src.iter().enumerate() {
        for j in 1..=k {
            if set.contains(j) {
                continue;
            }
            let target = set.with(j);
            let di = dst.binary_search(&target).expect("target has degree p + 1");
            let sign = insertion_sign(j, set).expect("j not in J").value();
            out.push(WedgeEntry {
                src: si,
                dst: di,
                axis: j - 1,
                sign,
            });
        }
    }
    out
}

/// For each `J` of degree `p`: position of `Jᶜ` in degree `k − p` and the sign
/// of `*dϖ_J = ± dϖ_{Jᶜ}`.
fn star_table(k: usize, p: usize) -> Vec<(usize, f64)> {
    let dst = MultiIndex::all_of_degree(k, k - p);
    MultiIndex::all_of_degree(k, p)
        .into_iter()
        .map(|set| {
            let c = set.complement(k);
            let di = dst.binary_search(&c).expect("complement has degree k - p");
            (di, complement_sign(set, k).value())
        })
        .collect()
}

/// A truncated leafwise form of fixed degree.
#[derive(Debug, Clone)]
pub struct FourierForm {
    degree: usize,
    table: Arc<ModeTable>,
    coeffs: Vec<Complex64>,
    real: bool,
}

/// Modes the Green operator divided by a leaf frequency below the floor, and
/// nonzero modes it could not divide at all.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SmallDivisorWarning {
    pub floor: f64,
    pub small: Vec<LatticeMode>,
    pub resonant: Vec<LatticeMode>,
}

#[derive(Debug, Clone)]
pub struct GreenOutcome {
    pub form: FourierForm,
    pub warning: Option<SmallDivisorWarning>,
}

/// `ω = harmonic + exact + coexact`, pairwise orthogonal.
#[derive(Debug, Clone)]
pub struct HodgeDecomposition {
    pub harmonic: FourierForm,
    pub exact: FourierForm,
    pub coexact: FourierForm,
    pub warning: Option<SmallDivisorWarning>,
}

impl HodgeDecomposition {
    pub fn reconstruct(&self) -> FourierForm {
        &(&self.harmonic + &self.exact) + &self.coexact
    }
}

impl FourierForm {
    /// Coefficients per mode for degree `p` on a `k`-dimensional leaf (zero
    /// above the top degree).
    fn stride(k: usize, p: usize) -> usize {
        binomial(k, p)
    }

    pub fn zero(table: Arc<ModeTable>, degree: usize) -> Self {
        let k = table.frame.leaf_dim();
        let len = table.len() * Self::stride(k, degree);
        FourierForm {
            degree,
            table,
            coeffs: vec![Complex64::new(0.0, 0.0); len],
            real: true,
        }
    }

    fn with_coeffs(&self, degree: usize, coeffs: Vec<Complex64>) -> Self {
        self.raw_with_coeffs(degree, coeffs).pruned()
    }

    /// Unpruned intermediate, so compositions keep full relative accuracy
    /// on modes whose coefficients pass through the drop threshold.
    fn raw_with_coeffs(&self, degree: usize, coeffs: Vec<Complex64>) -> Self {
        FourierForm {
            degree,
            table: Arc::clone(&self.table),
            coeffs,
            real: self.real,
        }
    }

    fn pruned(mut self) -> Self {
        self.prune();
        self
    }

    pub fn from_entries(
        table: Arc<ModeTable>,
        degree: usize,
        entries: impl IntoIterator<Item = (LatticeMode, MultiIndex, Complex64)>,
    ) -> Result<Self> {
        let k = table.frame.leaf_dim();
        if degree > k {
            return Err(Error::Precondition(format!(
                "degree {degree} exceeds leaf dimension {k}"
            )));
        }
        let basis = MultiIndex::all_of_degree(k, degree);
        let stride = basis.len();
        let mut out = Self::zero(table, degree);
        out.real = false;
        for (m, set, c) in entries {
            let mi = out.table.position(&m).ok_or_else(|| {
                Error::Precondition(format!(
                    "mode {m:?} lies outside the truncation radius {}",
                    out.table.radius
                ))
            })?;
            if set.len() != degree || set.max_axis() > k {
                return Err(Error::InvalidMultiIndex {
                    members: set.to_vec(),
                    reason: format!("expected {degree} axes within 1..={k}"),
                });
            }
            let ji = basis.binary_search(&set).expect("validated multi-index");
            out.coeffs[mi * stride + ji] = c;
        }
        out.prune();
        Ok(out)
    }

    /// A form from its dense coefficient vector (mode-major, multi-indices in
    /// lexicographic order).
    pub fn from_coeffs(table: Arc<ModeTable>, degree: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let k = table.frame.leaf_dim();
        let expected = table.len() * Self::stride(k, degree);
        if degree > k || coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: coeffs.len(),
            });
        }
        let mut out = FourierForm {
            degree,
            table,
            coeffs,
            real: false,
        };
        out.prune();
        Ok(out)
    }

    /// The single-mode form `e_m dϖ_J`.
    pub fn basis(table: Arc<ModeTable>, m: &LatticeMode, set: MultiIndex) -> Result<Self> {
        let degree = set.len();
        Self::from_entries(table, degree, [(m.clone(), set, Complex64::new(1.0, 0.0))])
    }

    /// Seeded random form with coefficient magnitudes `~ (1 + ‖m‖)^{-decay}`.
    /// With `real`, coefficients satisfy `f_{-m,J} = conj(f_{m,J})`.
    pub fn random(table: Arc<ModeTable>, degree: usize, decay: f64, seed: u64, real: bool) -> Self {
        assert!(decay >= 0.0, "decay must be nonnegative");
        let k = table.frame.leaf_dim();
        assert!(degree <= k, "degree {degree} exceeds leaf dimension {k}");
        let stride = Self::stride(k, degree);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zero(table, degree);
        for i in 0..out.table.len() {
            let m = &out.table.modes[i];
            if real && !m.is_zero() && !m.is_upper_half() {
                continue;
            }
            let amp = (1.0 + m.norm()).powf(-decay);
            for j in 0..stride {
                let re = rng.gen_range(-1.0..1.0) * amp;
                let im = rng.gen_range(-1.0..1.0) * amp;
                if real && m.is_zero() {
                    out.coeffs[i * stride + j] = Complex64::new(re, 0.0);
                } else {
                    let c = Complex64::new(re, im);
                    out.coeffs[i * stride + j] = c;
                    if real {
                        out.coeffs[out.table.neg[i] * stride + j] = c.conj();
                    }
                }
            }
        }
        out.real = real;
        out.prune();
        out
    }

    fn prune(&mut self) {
        let k = self.table.frame.leaf_dim();
        let stride = Self::stride(k, self.degree);
        // m = 0 sits at index 0 of every table.
        per_mode(&mut self.coeffs, stride, |i, block| {
            if i > 0 {
                for c in block {
                    if c.norm_sqr() < DROP_THRESHOLD * DROP_THRESHOLD {
                        *c = Complex64::new(0.0, 0.0);
                    }
                }
            }
        });
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn table(&self) -> &Arc<ModeTable> {
        &self.table
    }

    pub fn frame(&self) -> &FoliationFrame {
        &self.table.frame
    }

    pub fn truncation_radius(&self) -> f64 {
        self.table.radius
    }

    /// Whether the form is flagged as real (`f_{-m} = conj f_m`).
    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Checks the realness symmetry numerically.
    pub fn check_real(&self, tol: f64) -> bool {
        let stride = self.stride_here();
        (0..self.table.len()).all(|i| {
            let ni = self.table.neg[i];
            (0..stride).all(|j| {
                (self.coeffs[i * stride + j] - self.coeffs[ni * stride + j].conj()).norm() <= tol
            })
        })
    }

    fn stride_here(&self) -> usize {
        Self::stride(self.table.frame.leaf_dim(), self.degree)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, m: &LatticeMode, set: MultiIndex) -> Complex64 {
        let k = self.table.frame.leaf_dim();
        let basis = MultiIndex::all_of_degree(k, self.degree);
        match (self.table.position(m), basis.binary_search(&set)) {
            (Some(mi), Ok(ji)) => self.coeffs[mi * basis.len() + ji],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Stored entries in canonical order: every `m = 0` entry, then nonzero
    /// coefficients by mode and multi-index.
    pub fn entries(&self) -> impl Iterator<Item = (&LatticeMode, MultiIndex, Complex64)> + '_ {
        let basis = MultiIndex::all_of_degree(self.table.frame.leaf_dim(), self.degree);
        let stride = basis.len();
        self.coeffs
            .iter()
            .enumerate()
            .filter(move |(idx, c)| *idx < stride || !is_zero(c))
            .map(move |(idx, &c)| (&self.table.modes[idx / stride], basis[idx % stride], c))
    }

    /// Modes carrying at least one nonzero coefficient.
    pub fn support(&self) -> Vec<LatticeMode> {
        let stride = self.stride_here();
        if stride == 0 {
            return Vec::new();
        }
        self.coeffs
            .chunks(stride)
            .zip(&self.table.modes)
            .filter(|(block, _)| block.iter().any(|c| !is_zero(c)))
            .map(|(_, m)| m.clone())
            .collect()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.degree != other.degree {
            return Err(Error::IncompatibleForms(format!(
                "degrees {} and {} differ",
                self.degree, other.degree
            )));
        }
        if !Arc::ptr_eq(&self.table.frame, &other.table.frame)
            && *self.table.frame != *other.table.frame
        {
            return Err(Error::IncompatibleForms("forms live on different frames".into()));
        }
        Ok(())
    }

    /// `⟨α, β⟩ = Σ_{m,J} conj(α_{m,J}) β_{m,J}` (Haar measure, orthonormal `dϖ_J`).
    pub fn inner_product(&self, other: &Self) -> Result<Complex64> {
        self.check_compatible(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `(Σ_{m,J} (1 + ‖ξ(m)‖²)^l |f_{m,J}|²)^{1/2}`.
    pub fn sobolev_norm(&self, order: u32) -> f64 {
        let stride = self.stride_here();
        if stride == 0 {
            return 0.0;
        }
        self.coeffs
            .chunks(stride)
            .zip(&self.table.lambda)
            .map(|(block, &l)| {
                (1.0 + l).powi(order as i32) * block.iter().map(|c| c.norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Leafwise `d`: `(dω)_{m,K} = Σ_{j∈K} σ(j, K∖j) · iξ_j(m) · f_{m,K∖j}`.
    /// On top-degree input this returns the zero form of degree `k + 1`.
    pub fn exterior_derivative(&self) -> FourierForm {
        self.d_raw().pruned()
    }

    fn d_raw(&self) -> FourierForm {
        let k = self.table.frame.leaf_dim();
        if self.degree >= k {
            log::debug!("exterior derivative of a degree-{} form clamped to zero", self.degree);
            return self.raw_with_coeffs(k + 1, Vec::new());
        }
        let p = self.degree;
        let (ss, ds) = (Self::stride(k, p), Self::stride(k, p + 1));
        let table = wedge_table(k, p);
        let mut out = vec![Complex64::new(0.0, 0.0); self.table.len() * ds];
        per_mode(&mut out, ds, |i, dst| {
            let xi = self.table.xi(i);
            let src = &self.coeffs[i * ss..(i + 1) * ss];
            for e in &table {
                dst[e.dst] += times_i(e.sign * xi[e.axis], src[e.src]);
            }
        });
        self.raw_with_coeffs(p + 1, out)
    }

    /// Leafwise codifferential, the per-mode Hermitian adjoint of `d`:
    /// `(d*ω)_{m,J} = Σ_{j∉J} σ(j, J) · (−iξ_j(m)) · f_{m,J∪j}`.
    /// On functions this returns the zero function.
    pub fn codifferential(&self) -> FourierForm {
        self.codifferential_raw().pruned()
    }

    fn codifferential_raw(&self) -> FourierForm {
        let k = self.table.frame.leaf_dim();
        if self.degree == 0 {
            log::debug!("codifferential of a function clamped to zero");
            return FourierForm::zero(Arc::clone(&self.table), 0);
        }
        if self.degree > k {
            return FourierForm::zero(Arc::clone(&self.table), k);
        }
        let p = self.degree - 1;
        let (ts, ss) = (Self::stride(k, p), Self::stride(k, p + 1));
        let table = wedge_table(k, p);
        let mut out = vec![Complex64::new(0.0, 0.0); self.table.len() * ts];
        per_mode(&mut out, ts, |i, dst| {
            let xi = self.table.xi(i);
            let src = &self.coeffs[i * ss..(i + 1) * ss];
            for e in &table {
                dst[e.src] += times_i(-e.sign * xi[e.axis], src[e.dst]);
            }
        });
        self.raw_with_coeffs(p, out)
    }

    /// `*ω` with `(*ω)_{m,Jᶜ} = complement_sign(J) · f_{m,J}`.
    pub fn hodge_star(&self) -> FourierForm {
        let k = self.table.frame.leaf_dim();
        assert!(self.degree <= k, "Hodge star needs degree <= k");
        let p = self.degree;
        let (ss, ds) = (Self::stride(k, p), Self::stride(k, k - p));
        let table = star_table(k, p);
        let mut out = vec![Complex64::new(0.0, 0.0); self.table.len() * ds];
        per_mode(&mut out, ds, |i, dst| {
            for (j, &(dj, sign)) in table.iter().enumerate() {
                dst[dj] = sign * self.coeffs[i * ss + j];
            }
        });
        self.with_coeffs(k - p, out)
    }

    /// `*d*ω` without any sign correction; agrees with `±d*ω`.
    pub fn star_d_star(&self) -> FourierForm {
        let k = self.table.frame.leaf_dim();
        if self.degree == 0 {
            return FourierForm::zero(Arc::clone(&self.table), 0);
        }
        let inner = self.hodge_star().exterior_derivative();
        debug_assert!(inner.degree <= k);
        inner.hodge_star()
    }

    fn map_modes(&self, f: impl Fn(usize, Complex64) -> Complex64 + Sync) -> FourierForm {
        let stride = self.stride_here();
        let mut coeffs = self.coeffs.clone();
        per_mode(&mut coeffs, stride, |i, block| {
            for c in block {
                *c = f(i, *c);
            }
        });
        self.with_coeffs(self.degree, coeffs)
    }

    /// `(Δω)_{m,J} = λ(m) f_{m,J}`.
    pub fn laplacian(&self) -> FourierForm {
        self.map_modes(|i, c| c * self.table.lambda[i])
    }

    /// `dd*ω + d*dω` by composing the first-order operators.
    pub fn laplacian_by_composition(&self) -> FourierForm {
        let k = self.table.frame.leaf_dim();
        let up = if self.degree < k {
            self.d_raw().codifferential_raw()
        } else {
            FourierForm::zero(Arc::clone(&self.table), self.degree)
        };
        if self.degree == 0 {
            return up.pruned();
        }
        &self.codifferential_raw().d_raw() + &up
    }

    /// Keeps exactly the coefficients on harmonic modes (see
    /// [`ModeTable::is_harmonic`]).
    pub fn harmonic_project(&self) -> FourierForm {
        self.map_modes(|i, c| {
            if self.table.harmonic[i] {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Green operator with the default divisor floor.
    pub fn green_apply(&self) -> GreenOutcome {
        self.green_apply_with_floor(DEFAULT_DIVISOR_FLOOR)
    }

    /// `(Gω)_{m,J} = f_{m,J} / λ(m)` off the harmonic modes, zero on them.
    /// Nonzero input on modes whose leaf frequency lies below `floor` is
    /// still divided and listed in the warning.
    pub fn green_apply_with_floor(&self, floor: f64) -> GreenOutcome {
        let GreenOutcome { form, warning } = self.green_raw(floor);
        GreenOutcome {
            form: form.pruned(),
            warning,
        }
    }

    fn green_raw(&self, floor: f64) -> GreenOutcome {
        let stride = self.stride_here();
        let mut small = Vec::new();
        let mut resonant = Vec::new();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        for i in 0..self.table.len() {
            let block = &self.coeffs[i * stride..(i + 1) * stride];
            let occupied = block.iter().any(|c| !is_zero(c));
            if self.table.harmonic[i] {
                if occupied && !self.table.modes[i].is_zero() && self.table.leaf_norm_sq[i] == 0.0 {
                    resonant.push(self.table.modes[i].clone());
                }
                continue;
            }
            let lambda = self.table.lambda[i];
            if occupied && self.table.leaf_norm_sq[i].sqrt() < floor {
                small.push(self.table.modes[i].clone());
            }
            for j in 0..stride {
                coeffs[i * stride + j] = block[j] / lambda;
            }
        }
        let warning = if small.is_empty() && resonant.is_empty() {
            None
        } else {
            log::warn!(
                "green operator: {} small divisors, {} resonant modes",
                small.len(),
                resonant.len()
            );
            Some(SmallDivisorWarning {
                floor,
                small,
                resonant,
            })
        };
        GreenOutcome {
            form: self.raw_with_coeffs(self.degree, coeffs),
            warning,
        }
    }

    /// `ω = Hω + d(d*Gω) + d*(dGω)`.
    pub fn hodge_decompose(&self) -> HodgeDecomposition {
        let k = self.table.frame.leaf_dim();
        let GreenOutcome { form: g, warning } = self.green_raw(DEFAULT_DIVISOR_FLOOR);
        let exact = if self.degree == 0 {
            FourierForm::zero(Arc::clone(&self.table), 0)
        } else {
            g.codifferential_raw().d_raw().pruned()
        };
        let coexact = if self.degree >= k {
            FourierForm::zero(Arc::clone(&self.table), self.degree)
        } else {
            g.d_raw().codifferential_raw().pruned()
        };
        HodgeDecomposition {
            harmonic: self.harmonic_project(),
            exact,
            coexact,
            warning,
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> FourierForm {
        self.check_compatible(other)
            .unwrap_or_else(|e| panic!("cannot combine forms: {e}"));
        let (big, small, swapped) = if self.coeffs.len() >= other.coeffs.len() {
            (self, other, false)
        } else {
            (other, self, true)
        };
        let zero = Complex64::new(0.0, 0.0);
        let coeffs = big
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let s = small.coeffs.get(i).copied().unwrap_or(zero);
                if swapped {
                    f(s, b)
                } else {
                    f(b, s)
                }
            })
            .collect();
        let mut out = big.with_coeffs(self.degree, coeffs);
        out.real = self.real && other.real;
        out
    }

    pub fn scale(&self, c: Complex64) -> FourierForm {
        let mut out = self.map_modes(|_, x| x * c);
        out.real = self.real && c.im == 0.0;
        out
    }

    /// Largest coefficient-wise difference `max |α_{m,J} − β_{m,J}|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other)
            .coeffs
            .iter()
            .fold(0.0f64, |acc, c| acc.max(c.norm_sqr()))
            .sqrt()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SerializedForm::from(self)).expect("finite coefficients serialize")
    }

    /// Reads a form written by [`FourierForm::to_json`] on `frame`.
    pub fn from_json(json: &str, frame: Arc<FoliationFrame>) -> Result<Self> {
        let raw: SerializedForm =
            serde_json::from_str(json).map_err(|e| Error::Format(e.to_string()))?;
        if raw.frame_id != frame.id() {
            return Err(Error::IncompatibleForms(format!(
                "serialized frame id {} does not match {}",
                raw.frame_id,
                frame.id()
            )));
        }
        let table = ModeTable::new(frame, raw.truncation_radius);
        let entries = raw
            .entries
            .into_iter()
            .map(|SerializedEntry(m, set, re, im)| (m, set, Complex64::new(re, im)));
        Self::from_entries(table, raw.degree, entries)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SerializedForm {
    degree: usize,
    #[serde(rename = "frame-id")]
    frame_id: String,
    #[serde(rename = "truncationRadius")]
    truncation_radius: f64,
    entries: Vec<SerializedEntry>,
}

#[derive(Serialize, Deserialize)]
struct SerializedEntry(LatticeMode, MultiIndex, f64, f64);

impl From<&FourierForm> for SerializedForm {
    fn from(form: &FourierForm) -> Self {
        SerializedForm {
            degree: form.degree,
            frame_id: form.frame().id(),
            truncation_radius: form.table.radius,
            entries: form
                .entries()
                .map(|(m, set, c)| SerializedEntry(m.clone(), set, c.re, c.im))
                .collect(),
        }
    }
}

impl Add for &FourierForm {
    type Output = FourierForm;

    fn add(self, rhs: &FourierForm) -> FourierForm {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &FourierForm {
    type Output = FourierForm;

    fn sub(self, rhs: &FourierForm) -> FourierForm {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &FourierForm {
    type Output = FourierForm;

    fn neg(self) -> FourierForm {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul<f64> for &FourierForm {
    type Output = FourierForm;

    fn mul(self, rhs: f64) -> FourierForm {
        self.scale(Complex64::new(rhs, 0.0))
    }
}

/// Convenience wrapper building the mode table for a one-off random form.
pub fn random_form(
    frame: Arc<FoliationFrame>,
    degree: usize,
    radius: f64,
    decay: f64,
    seed: u64,
) -> FourierForm {
    FourierForm::random(ModeTable::new(frame, radius), degree, decay, seed, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const PHI: f64 = 1.618_033_988_749_895;

    fn golden() -> Arc<FoliationFrame> {
        Arc::new(
            FoliationFrame::build(&[vec![1.0, PHI]])
                .unwrap()
                .with_minimality_asserted(true),
        )
    }

    fn plane3() -> Arc<FoliationFrame> {
        Arc::new(
            FoliationFrame::build(&[
                vec![1.0, 2f64.sqrt(), 3f64.sqrt()],
                vec![3f64.sqrt(), 1.0, 2f64.sqrt()],
            ])
            .unwrap()
            .with_minimality_asserted(true),
        )
    }

    fn m(xs: &[i64]) -> LatticeMode {
        LatticeMode::from_slice(xs)
    }

    fn mi(xs: &[usize]) -> MultiIndex {
        MultiIndex::new(xs).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn d_of_constant_is_zero() {
        let t = ModeTable::new(golden(), 3.0);
        let one = FourierForm::basis(t, &m(&[0, 0]), MultiIndex::empty()).unwrap();
        assert_eq!(one.exterior_derivative().norm(), 0.0);
    }

    #[test]
    fn d_of_single_mode() {
        let t = ModeTable::new(golden(), 3.0);
        let e = FourierForm::basis(t, &m(&[-2, 1]), MultiIndex::empty()).unwrap();
        let de = e.exterior_derivative();
        assert_eq!(de.degree(), 1);
        let got = de.get(&m(&[-2, 1]), mi(&[1]));
        assert!(got.re.abs() < 1e-15);
        assert!((got.im + 1.261_735_337_810_272_5).abs() < 1e-12);
        assert_eq!(de.support(), vec![m(&[-2, 1])]);
    }

    #[test]
    fn top_degree_d_is_clamped() {
        let t = ModeTable::new(golden(), 2.0);
        let w = FourierForm::random(t, 1, 1.0, 3, true);
        let dw = w.exterior_derivative();
        assert_eq!(dw.degree(), 2);
        assert!(dw.coeffs().is_empty());
        let f = FourierForm::random(ModeTable::new(golden(), 2.0), 0, 1.0, 3, true);
        assert_eq!(f.codifferential().norm(), 0.0);
    }

    #[test]
    fn codifferential_single_mode_matches_adjoint() {
        let frame = golden();
        let t = ModeTable::new(frame.clone(), 4.0);
        let mode = m(&[3, -2]);
        let beta = FourierForm::basis(t.clone(), &mode, mi(&[1])).unwrap();
        let xi = frame.frequency(&mode).0[0];
        let got = beta.codifferential().get(&mode, MultiIndex::empty());
        assert!((got - c(0.0, -xi)).norm() < 1e-14);
        // ⟨d f, β⟩ = ⟨f, d*β⟩ for f = e_m
        let f = FourierForm::basis(t, &mode, MultiIndex::empty()).unwrap();
        let lhs = f.exterior_derivative().inner_product(&beta).unwrap();
        let rhs = f.inner_product(&beta.codifferential()).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
        let t0 = ModeTable::new(frame, 1.0);
        let constant = FourierForm::basis(t0, &m(&[0, 0]), mi(&[1])).unwrap();
        assert_eq!(constant.codifferential().norm(), 0.0);
    }

    #[test]
    fn hodge_star_examples() {
        let t = ModeTable::new(plane3(), 1.0);
        let one = FourierForm::basis(t.clone(), &m(&[0, 0, 0]), MultiIndex::empty()).unwrap();
        let vol = one.hodge_star();
        assert_eq!(vol.degree(), 2);
        assert_eq!(vol.get(&m(&[0, 0, 0]), mi(&[1, 2])), c(1.0, 0.0));

        let d1 = FourierForm::basis(t.clone(), &m(&[0, 0, 0]), mi(&[1])).unwrap();
        let d2 = FourierForm::basis(t, &m(&[0, 0, 0]), mi(&[2])).unwrap();
        assert_eq!(d1.hodge_star().get(&m(&[0, 0, 0]), mi(&[2])), c(1.0, 0.0));
        assert_eq!(d2.hodge_star().get(&m(&[0, 0, 0]), mi(&[1])), c(-1.0, 0.0));
    }

    #[test]
    fn inner_product_examples() {
        let t = ModeTable::new(golden(), 2.0);
        let a = FourierForm::basis(t.clone(), &m(&[1, 0]), mi(&[1])).unwrap();
        let b = FourierForm::basis(t.clone(), &m(&[0, 1]), mi(&[1])).unwrap();
        assert_eq!(a.inner_product(&a).unwrap(), c(1.0, 0.0));
        assert_eq!(a.inner_product(&b).unwrap(), c(0.0, 0.0));
        let w = FourierForm::from_entries(
            t.clone(),
            1,
            [
                (m(&[0, 0]), mi(&[1]), c(1.0, 0.0)),
                (m(&[1, 0]), mi(&[1]), c(0.0, 2.0)),
                (m(&[-1, 1]), mi(&[1]), c(-1.0, 0.0)),
            ],
        )
        .unwrap();
        assert_eq!(w.inner_product(&w).unwrap(), c(6.0, 0.0));
        let f = FourierForm::zero(t, 0);
        assert!(matches!(
            w.inner_product(&f),
            Err(Error::IncompatibleForms(_))
        ));
        let other = FourierForm::zero(ModeTable::new(plane3(), 1.0), 1);
        assert!(w.inner_product(&other).is_err());
    }

    #[test]
    fn sobolev_examples() {
        let frame = golden();
        let t = ModeTable::new(frame.clone(), 10.0);
        let mode = m(&[-8, 5]);
        let e = FourierForm::basis(t, &mode, MultiIndex::empty()).unwrap();
        assert!((e.sobolev_norm(0) - 1.0).abs() < 1e-15);
        let lambda = frame.lambda(&mode);
        for l in 0..4 {
            let expected = (1.0 + lambda).powi(l as i32);
            assert!((e.sobolev_norm(l).powi(2) - expected).abs() < 1e-13);
        }
        assert!((e.sobolev_norm(2).powi(2) - 1.185_306_416_028_911_3).abs() < 1e-12);
    }

    #[test]
    fn sobolev_monotone_in_order() {
        let w = random_form(plane3(), 1, 4.0, 1.0, 11);
        let mut last = 0.0;
        for l in 0..5 {
            let s = w.sobolev_norm(l);
            assert!(s >= last);
            last = s;
        }
        assert!((w.sobolev_norm(0) - w.norm()).abs() < 1e-14);
    }

    #[test]
    fn laplacian_examples() {
        let frame = golden();
        let t = ModeTable::new(frame.clone(), 5.0);
        let one = FourierForm::basis(t.clone(), &m(&[0, 0]), MultiIndex::empty()).unwrap();
        assert_eq!(one.laplacian().norm(), 0.0);
        let mode = m(&[2, -3]);
        let e = FourierForm::basis(t, &mode, mi(&[1])).unwrap();
        let direct = e.laplacian();
        let composed = e.laplacian_by_composition();
        let expected = frame.lambda(&mode);
        assert!((direct.get(&mode, mi(&[1])).re - expected).abs() < 1e-12);
        assert!(direct.max_abs_diff(&composed) < 1e-12 * expected);
    }

    #[test]
    fn green_examples() {
        let frame = golden();
        let t = ModeTable::new(frame.clone(), 5.0);
        let one = FourierForm::basis(t.clone(), &m(&[0, 0]), MultiIndex::empty()).unwrap();
        let g = one.green_apply();
        assert_eq!(g.form.norm(), 0.0);
        assert!(g.warning.is_none());
        let mode = m(&[1, 2]);
        let e = FourierForm::basis(t, &mode, MultiIndex::empty()).unwrap();
        let ge = e.green_apply().form;
        let expected = 1.0 / frame.lambda(&mode);
        assert!((ge.get(&mode, MultiIndex::empty()).re - expected).abs() < 1e-15 * expected.max(1.0));
        assert!((ge.laplacian().get(&mode, MultiIndex::empty()) - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn green_flags_small_divisors() {
        let frame = golden();
        let t = ModeTable::new(frame, 10.0);
        let w = FourierForm::random(t, 1, 0.0, 5, true);
        // A huge floor marks every occupied nonzero mode.
        let out = w.green_apply_with_floor(10.0);
        let warn = out.warning.unwrap();
        assert_eq!(warn.small.len(), w.support().len() - 1);
        assert!(warn.resonant.is_empty());
    }

    #[test]
    fn green_on_resonant_frame_without_assertion() {
        // Rational direction: modes orthogonal to e₁ are harmonic.
        let frame = Arc::new(FoliationFrame::build(&[vec![1.0, 0.0]]).unwrap());
        let t = ModeTable::new(frame, 3.0);
        assert_eq!(t.harmonic_dimension(0), 7);
        let w = FourierForm::random(t, 0, 0.0, 1, true);
        let h = w.harmonic_project();
        assert_eq!(h.support().len(), 7);
        let g = w.green_apply();
        let back = &g.form.laplacian() + &h;
        assert!(back.max_abs_diff(&w) < 1e-12);
    }

    #[test]
    fn harmonic_projection_examples() {
        let t = ModeTable::new(golden(), 6.0);
        let f = FourierForm::random(t.clone(), 0, 1.0, 2, true);
        let h = f.harmonic_project();
        assert_eq!(h.support(), vec![m(&[0, 0])]);
        assert_eq!(h.get(&m(&[0, 0]), MultiIndex::empty()), f.get(&m(&[0, 0]), MultiIndex::empty()));
        assert_eq!(t.harmonic_dimension(0), 1);
        assert_eq!(t.harmonic_dimension(1), 1);
        let t3 = ModeTable::new(plane3(), 4.0);
        assert_eq!(t3.harmonic_dimension(1), 2);
    }

    #[test]
    fn hodge_decompose_examples() {
        let t = ModeTable::new(golden(), 6.0);
        let h = FourierForm::from_entries(t.clone(), 1, [(m(&[0, 0]), mi(&[1]), c(2.0, 0.0))]).unwrap();
        let dec = h.hodge_decompose();
        assert_eq!(dec.harmonic.max_abs_diff(&h), 0.0);
        assert_eq!(dec.exact.norm(), 0.0);
        assert_eq!(dec.coexact.norm(), 0.0);

        let f = FourierForm::random(t, 0, 2.0, 9, true);
        let df = f.exterior_derivative();
        let dec = df.hodge_decompose();
        assert!(dec.harmonic.norm() < 1e-15);
        assert!(dec.exact.max_abs_diff(&df) <= 1e-9 * df.norm());
        assert!(dec.coexact.norm() <= 1e-9 * df.norm());
    }

    #[test]
    fn random_form_examples() {
        let frame = golden();
        let a = random_form(frame.clone(), 1, 5.0, 2.0, 42);
        let b = random_form(frame.clone(), 1, 5.0, 2.0, 42);
        assert_eq!(a.coeffs(), b.coeffs());
        assert!(a.check_real(1e-12));
        let constant = random_form(frame.clone(), 0, 0.0, 1.0, 3);
        assert_eq!(constant.table().len(), 1);
        assert_eq!(constant.exterior_derivative().norm(), 0.0);
        // Prefix stability under R → 2R with strong decay.
        for l in 0..3 {
            let small = random_form(frame.clone(), 1, 10.0, 8.0, 5).sobolev_norm(l);
            let large = random_form(frame.clone(), 1, 20.0, 8.0, 5).sobolev_norm(l);
            assert!(small.is_finite());
            assert!((large - small).abs() <= 0.01 * large, "l = {l}: {small} vs {large}");
        }
    }

    #[test]
    fn closed_dimension_counts() {
        let t = ModeTable::new(golden(), 8.0);
        assert_eq!(t.closed_dimension(0, true), 0);
        assert_eq!(t.closed_dimension(0, false), 1);
        // every 1-form on a 1-dimensional leaf is closed
        assert_eq!(t.closed_dimension(1, false), t.len());
        let rational = Arc::new(FoliationFrame::build(&[vec![1.0, 0.0]]).unwrap());
        let t = ModeTable::new(rational, 2.0);
        assert_eq!(t.closed_dimension(0, true), 4);
    }

    #[test]
    fn min_nonzero_lambda_is_positive() {
        let t = ModeTable::new(golden(), 10.0);
        let (mode, l) = t.min_nonzero_lambda().unwrap();
        assert!(l > 0.0);
        assert_eq!(mode.entries().iter().map(|x| x.abs()).collect::<Vec<_>>(), vec![8, 5]);
        assert!((l - 4.0 * PI * PI * (5.0 * PHI - 8.0).powi(2) / (1.0 + PHI * PHI)).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let frame = plane3();
        let w = random_form(frame.clone(), 1, 3.0, 1.5, 8);
        let json = w.to_json();
        let back = FourierForm::from_json(&json, frame).unwrap();
        assert_eq!(back.degree(), 1);
        let bits = |f: &FourierForm| {
            f.coeffs()
                .iter()
                .map(|c| (c.re.to_bits(), c.im.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&w), bits(&back));
        assert_eq!(back.to_json(), json);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["degree", "frame-id", "truncationRadius", "entries"] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert!(FourierForm::from_json(&json, golden()).is_err());
    }

    #[test]
    fn forms_with_different_radii_combine_on_prefix() {
        let frame = golden();
        let a = random_form(frame.clone(), 0, 2.0, 1.0, 1);
        let b = random_form(frame, 0, 4.0, 1.0, 1);
        let s = &a + &b;
        assert_eq!(s.truncation_radius(), 4.0);
        assert!((a.inner_product(&b).unwrap() - a.inner_product(&a).unwrap()).norm() < 1e-14);
    }
}
