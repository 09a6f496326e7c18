//! Ruelle–Sullivan currents of Kronecker solenoids.
//!
//! The current of the solenoid with its (mass-one, Haar) transversal measure
//! evaluates an ambient `k`-form `ω` to `∫_{Tⁿ} ω_x(w₁, …, w_k) dx`, which in
//! Fourier terms keeps only the means `ĝ_I(0)` paired with the Plücker
//! coordinates of the leaf plane. [`rs_spectral`] evaluates that closed form;
//! [`rs_quadrature`] recomputes it for planar 1-solenoids from an explicit
//! flow-box atlas, a smooth partition of unity and Lebesgue transversal
//! measure, as an independent check.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::foliation::FoliationFrame;
use crate::lattice::{enumerate_ball, insertion_sign, LatticeMode, MultiIndex};

/// Trigonometric-polynomial `k`-form on `Tⁿ`:
/// `ω = Σ_{m,I} ĝ_I(m) e_m dx_I`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientForm {
    n: usize,
    degree: usize,
    terms: BTreeMap<(LatticeMode, MultiIndex), Complex64>,
}

impl AmbientForm {
    pub fn zero(n: usize, degree: usize) -> Self {
        assert!(degree <= n, "degree {degree} exceeds dimension {n}");
        AmbientForm {
            n,
            degree,
            terms: BTreeMap::new(),
        }
    }

    /// The constant form `dx_I`.
    pub fn coordinate(n: usize, axes: &[usize]) -> Result<Self> {
        let set = MultiIndex::new(axes)?;
        let mut out = Self::zero(n, set.len());
        out.add_term(LatticeMode::zero(n), set, Complex64::new(1.0, 0.0))?;
        Ok(out)
    }

    pub fn add_term(&mut self, m: LatticeMode, set: MultiIndex, c: Complex64) -> Result<()> {
        if m.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: m.dim(),
            });
        }
        if set.len() != self.degree || set.max_axis() > self.n {
            return Err(Error::InvalidMultiIndex {
                members: set.to_vec(),
                reason: format!("expected {} axes within 1..={}", self.degree, self.n),
            });
        }
        let slot = self.terms.entry((m, set)).or_insert(Complex64::new(0.0, 0.0));
        *slot += c;
        Ok(())
    }

    /// Seeded real form with every coefficient on `‖m‖ ≤ max_norm` drawn
    /// uniformly from the unit square and then conjugate-symmetrized.
    pub fn random_trig(n: usize, degree: usize, max_norm: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zero(n, degree);
        let sets = MultiIndex::all_of_degree(n, degree);
        for m in enumerate_ball(n, max_norm) {
            if !m.is_zero() && !m.is_upper_half() {
                continue;
            }
            for &set in &sets {
                let re = rng.gen_range(-1.0..1.0);
                let im = if m.is_zero() { 0.0 } else { rng.gen_range(-1.0..1.0) };
                let c = Complex64::new(re, im);
                if !m.is_zero() {
                    out.terms.insert((-&m, set), c.conj());
                }
                out.terms.insert((m.clone(), set), c);
            }
        }
        out
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&LatticeMode, MultiIndex, Complex64)> {
        self.terms.iter().map(|((m, s), &c)| (m, *s, c))
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.terms.iter().all(|((m, s), c)| {
            let partner = self
                .terms
                .get(&(-m, *s))
                .copied()
                .unwrap_or(Complex64::new(0.0, 0.0));
            (partner - c.conj()).norm() <= tol
        })
    }

    /// `ĝ_I(0)`.
    pub fn mean(&self, set: MultiIndex) -> Complex64 {
        self.terms
            .get(&(LatticeMode::zero(self.n), set))
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Ambient exterior derivative: `d(g e_m dx_I) = Σ_{j∉I} 2πi m_j g σ(j, I) e_m dx_{I∪j}`.
    pub fn exterior_derivative(&self) -> AmbientForm {
        assert!(self.degree < self.n, "d of a top-degree form");
        let mut out = Self::zero(self.n, self.degree + 1);
        for ((m, set), &c) in &self.terms {
            for j in 1..=self.n {
                if set.contains(j) || m.entries()[j - 1] == 0 {
                    continue;
                }
                let sign = insertion_sign(j, *set).expect("j not in I").value();
                let v = c * Complex64::new(0.0, TAU * m.entries()[j - 1] as f64 * sign);
                *out.terms
                    .entry((m.clone(), set.with(j)))
                    .or_insert(Complex64::new(0.0, 0.0)) += v;
            }
        }
        out.terms.retain(|_, c| c.norm() > 0.0);
        out
    }

    /// Coefficient of `e_m` in `ω(u)` for a 1-form: `Σ_j ĝ_j(m) u_j`.
    fn contract_modes(&self, u: &[f64]) -> BTreeMap<LatticeMode, Complex64> {
        assert_eq!(self.degree, 1);
        let mut out = BTreeMap::new();
        for ((m, set), &c) in &self.terms {
            let j = set.members().next().expect("degree one");
            *out.entry(m.clone()).or_insert(Complex64::new(0.0, 0.0)) += c * u[j - 1];
        }
        out
    }
}

fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .expect("nonempty");
        if a[pivot][c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            a.swap(pivot, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for cc in c..n {
                let v = a[c][cc];
                a[r][cc] -= f * v;
            }
        }
    }
    det
}

/// Plücker coordinates `P_I = det(w_j · e_i)_{i∈I}` of the leaf plane, in
/// lexicographic order of `I`.
pub fn homology_class(frame: &FoliationFrame) -> Vec<(MultiIndex, f64)> {
    let w = frame.directions();
    MultiIndex::all_of_degree(frame.ambient_dim(), frame.leaf_dim())
        .into_iter()
        .map(|set| {
            let rows = set
                .members()
                .map(|i| w.iter().map(|wj| wj[i - 1]).collect())
                .collect();
            (set, determinant(rows))
        })
        .collect()
}

/// `Σ_I ĝ_I(0) P_I(W)`: the current of the mass-one Haar measure.
pub fn rs_spectral(form: &AmbientForm, frame: &FoliationFrame) -> Result<f64> {
    if form.n != frame.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: frame.ambient_dim(),
            found: form.n,
        });
    }
    if form.degree != frame.leaf_dim() {
        return Err(Error::IncompatibleForms(format!(
            "current of a {}-solenoid evaluated on a {}-form",
            frame.leaf_dim(),
            form.degree
        )));
    }
    let value: Complex64 = homology_class(frame)
        .into_iter()
        .map(|(set, p)| form.mean(set) * p)
        .sum();
    Ok(value.re)
}

const CORE_MARGIN: f64 = 1.02;
/// Bumps are positive on the inner `KAPPA` fraction of each box, which is
/// where the cover lives.
const KAPPA: f64 = 0.8;
/// Relative enlargement of the "good" box that must still embed in the torus.
const GOOD_BOX_ENLARGEMENT: f64 = 0.1;
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_69),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_34),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_05),
    (-0.183_434_642_495_649_78, 0.362_683_783_378_361_77),
    (0.183_434_642_495_649_78, 0.362_683_783_378_361_77),
    (0.525_532_409_916_329, 0.313_706_645_877_887_05),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_34),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_69),
];

/// Flow-box atlas of a planar linear foliation: `N` congruent rectangles
/// `c_i + s·u + t·v`, `|s| < a`, `|t| < b`, centred on the cosets of a
/// superlattice `Λ ⊃ ℤ²` of index `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowBoxAtlas {
    pub direction: [f64; 2],
    pub normal: [f64; 2],
    pub centers: Vec<[f64; 2]>,
    pub half_leaf: f64,
    pub half_transversal: f64,
    /// Half-sides of the sub-rectangles whose translates already cover the plane.
    pub core_half_leaf: f64,
    pub core_half_transversal: f64,
    pub good_box_enlargement: f64,
    /// Hermite normal form `[[d₁, h], [0, d₂]]` with `Λ = H⁻¹ℤ²`.
    pub superlattice: [[i64; 2]; 2],
    pub measure_scale: f64,
}

fn rotate(u: [f64; 2], x: [f64; 2]) -> [f64; 2] {
    [u[0] * x[0] + u[1] * x[1], -u[1] * x[0] + u[0] * x[1]]
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// No nonzero `m ∈ ℤ²` fits in the open `2a × 2b` window in rotated coordinates.
fn embeds(u: [f64; 2], a: f64, b: f64) -> bool {
    let reach = (2.0 * (a * a + b * b).sqrt()).ceil() as i64 + 1;
    for m1 in -reach..=reach {
        for m2 in -reach..=reach {
            if (m1, m2) == (0, 0) {
                continue;
            }
            let r = rotate(u, [m1 as f64, m2 as f64]);
            if r[0].abs() < 2.0 * a && r[1].abs() < 2.0 * b {
                return false;
            }
        }
    }
    true
}

/// Builds an `N`-box atlas for the direction `α`. Rationality of `α₂/α₁` is
/// not checked; the cover is valid for any direction.
pub fn build_kronecker_atlas(alpha: [f64; 2], box_count: usize) -> Result<FlowBoxAtlas> {
    if !alpha.iter().all(|x| x.is_finite()) {
        return Err(Error::Precondition("direction must be finite".into()));
    }
    let len = alpha[0].hypot(alpha[1]);
    if len == 0.0 {
        return Err(Error::DegenerateSubspace { expected: 1 });
    }
    if box_count < 2 {
        return Err(Error::AtlasConstruction(format!(
            "{box_count} box cannot form an overlapping good cover of the torus"
        )));
    }
    let u = [alpha[0] / len, alpha[1] / len];
    let n = box_count as i64;
    // Quadrature cost grows with the phase spread `‖m‖·max(a, b)` across a
    // box, so the roundest feasible box wins; area breaks ties.
    let mut best: Option<((f64, f64), FlowBoxAtlas)> = None;
    for d1 in (1..=n).filter(|d| n % d == 0) {
        let d2 = n / d1;
        for h in 0..d1.max(d2) {
            let b1 = rotate(u, [1.0 / d1 as f64, 0.0]);
            let b2 = rotate(u, [-(h as f64) / n as f64, 1.0 / d2 as f64]);
            let span = 2 * n;
            for i in -span..=span {
                for j in 0..=span {
                    if gcd(i, j) != 1 || (j == 0 && i <= 0) {
                        continue;
                    }
                    let x1 = i as f64 * b1[0] + j as f64 * b2[0];
                    let y1 = i as f64 * b1[1] + j as f64 * b2[1];
                    if x1.abs() < 1e-9 {
                        continue;
                    }
                    let a_core = CORE_MARGIN * x1.abs() / 2.0;
                    let b_core = CORE_MARGIN * (1.0 / (n as f64 * x1.abs()) + y1.abs()) / 2.0;
                    let (a, b) = (a_core / KAPPA, b_core / KAPPA);
                    let grow = 1.0 + GOOD_BOX_ENLARGEMENT;
                    if !embeds(u, grow * a, grow * b) {
                        continue;
                    }
                    let key = (a.max(b), a * b);
                    if best.as_ref().is_some_and(|(best_key, _)| *best_key <= key) {
                        continue;
                    }
                    let mut centers = Vec::with_capacity(box_count);
                    for p in 0..d1 {
                        for q in 0..d2 {
                            let x = p as f64 / d1 as f64 - (q * h) as f64 / n as f64;
                            let y = q as f64 / d2 as f64;
                            centers.push([x.rem_euclid(1.0), y]);
                        }
                    }
                    best = Some((
                        key,
                        FlowBoxAtlas {
                            direction: u,
                            normal: [-u[1], u[0]],
                            centers,
                            half_leaf: a,
                            half_transversal: b,
                            core_half_leaf: a_core,
                            core_half_transversal: b_core,
                            good_box_enlargement: GOOD_BOX_ENLARGEMENT,
                            superlattice: [[d1, h], [0, d2]],
                            measure_scale: 1.0,
                        },
                    ));
                }
            }
        }
    }
    best.map(|(_, atlas)| atlas).ok_or_else(|| {
        Error::AtlasConstruction(format!(
            "no superlattice of index {box_count} gives embedded boxes covering the torus"
        ))
    })
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

impl FlowBoxAtlas {
    /// Same atlas with the transversal measure multiplied by `scale`.
    pub fn with_measure_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0, "measure scale must be positive");
        self.measure_scale = scale;
        self
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Box-local coordinates `(s, t)` of `x` in box `i`, if `x` lies in it.
    pub fn local_coordinates(&self, i: usize, x: [f64; 2]) -> Option<[f64; 2]> {
        self.lift(i, x, self.half_leaf, self.half_transversal)
    }

    fn lift(&self, i: usize, x: [f64; 2], a: f64, b: f64) -> Option<[f64; 2]> {
        let c = self.centers[i];
        let y = [x[0] - c[0], x[1] - c[1]];
        let reach = a.hypot(b);
        let (lo0, hi0) = ((y[0] - reach).ceil() as i64, (y[0] + reach).floor() as i64);
        let (lo1, hi1) = ((y[1] - reach).ceil() as i64, (y[1] + reach).floor() as i64);
        for z0 in lo0..=hi0 {
            for z1 in lo1..=hi1 {
                let r = rotate(self.direction, [y[0] - z0 as f64, y[1] - z1 as f64]);
                if r[0].abs() < a && r[1].abs() < b {
                    return Some(r);
                }
            }
        }
        None
    }

    /// Point of the torus (in `ℝ²`, not reduced) with local coordinates `(s, t)` in box `i`.
    pub fn point(&self, i: usize, s: f64, t: f64) -> [f64; 2] {
        let c = self.centers[i];
        let (u, v) = (self.direction, self.normal);
        [c[0] + s * u[0] + t * v[0], c[1] + s * u[1] + t * v[1]]
    }

    /// Unnormalized bump `φ_i(x) = β(s/a) β(t/b)`.
    pub fn raw_weight(&self, i: usize, x: [f64; 2]) -> f64 {
        self.local_coordinates(i, x).map_or(0.0, |[s, t]| {
            bump(s / self.half_leaf) * bump(t / self.half_transversal)
        })
    }

    /// Partition of unity `ρ_i = φ_i / Σ_j φ_j`.
    pub fn partition(&self, x: [f64; 2]) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.len()).map(|i| self.raw_weight(i, x)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Whether each box enlarged by the good-box margin still embeds in the torus.
    pub fn good_boxes_embed(&self) -> bool {
        let grow = 1.0 + self.good_box_enlargement;
        embeds(self.direction, grow * self.half_leaf, grow * self.half_transversal)
    }

    pub fn spec(&self) -> AtlasSpec {
        AtlasSpec {
            box_count: self.len(),
            superlattice: self.superlattice,
            half_leaf: self.half_leaf,
            half_transversal: self.half_transversal,
            good_box_enlargement: self.good_box_enlargement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AtlasSpec {
    pub box_count: usize,
    pub superlattice: [[i64; 2]; 2],
    pub half_leaf: f64,
    pub half_transversal: f64,
    pub good_box_enlargement: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PartitionCheck {
    pub grid: usize,
    /// `max |Σ_i ρ_i − 1|` over the grid.
    pub max_deviation: f64,
    /// `min Σ_i φ_i`: positive iff the bumps cover every grid point.
    pub min_raw_sum: f64,
}

/// Evaluates the partition of unity on a `grid × grid` lattice of the torus.
pub fn partition_check(atlas: &FlowBoxAtlas, grid: usize) -> PartitionCheck {
    let rows: Vec<(f64, f64)> = (0..grid)
        .into_par_iter()
        .map(|r| {
            let mut dev: f64 = 0.0;
            let mut min_raw = f64::INFINITY;
            for c in 0..grid {
                let x = [c as f64 / grid as f64, r as f64 / grid as f64];
                let raw: f64 = (0..atlas.len()).map(|i| atlas.raw_weight(i, x)).sum();
                min_raw = min_raw.min(raw);
                let sum: f64 = atlas.partition(x).iter().sum();
                dev = dev.max((sum - 1.0).abs());
            }
            (dev, min_raw)
        })
        .collect();
    PartitionCheck {
        grid,
        max_deviation: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        min_raw_sum: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HolonomyCheck {
    /// Intervals actually transported into another box.
    pub samples: usize,
    /// Largest change in interval length.
    pub max_deviation: f64,
}

/// Transports up to `samples` seeded transversal intervals along the leaves
/// into an overlapping box and compares their Lebesgue lengths.
pub fn holonomy_check(atlas: &FlowBoxAtlas, samples: usize, seed: u64) -> HolonomyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (atlas.half_leaf, atlas.half_transversal);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < samples && attempts < samples * 1000 {
        attempts += 1;
        let i = rng.gen_range(0..atlas.len());
        let s0 = rng.gen_range(-a..a);
        let t0 = rng.gen_range(-b..b);
        let t1 = (t0 + rng.gen_range(0.0..0.1 * b)).min(b * 0.999);
        let shift = rng.gen_range(-a..a);
        let p0 = atlas.point(i, s0 + shift, t0);
        let p1 = atlas.point(i, s0 + shift, t1);
        // the flowed interval must land in a single other box
        let Some(j) = (0..atlas.len()).find(|&j| {
            j != i && atlas.local_coordinates(j, p0).is_some() && atlas.local_coordinates(j, p1).is_some()
        }) else {
            continue;
        };
        let q0 = atlas.local_coordinates(j, p0).expect("checked");
        let q1 = atlas.local_coordinates(j, p1).expect("checked");
        if (q1[0] - q0[0]).abs() > 1e-9 {
            continue;
        }
        worst = worst.max(((q1[1] - q0[1]) - (t1 - t0)).abs());
        done += 1;
    }
    HolonomyCheck {
        samples: done,
        max_deviation: worst,
    }
}

/// Quadrature moments `M(m) = Σ_i Σ_nodes w ρ_i(x) e_m(x)` of an atlas.
#[derive(Debug, Clone)]
pub struct QuadratureMoments {
    pub resolution: usize,
    modes: Vec<LatticeMode>,
    values: Vec<Complex64>,
    measure_scale: f64,
    direction: [f64; 2],
}

fn composite_gauss(half: f64, resolution: usize) -> Vec<(f64, f64)> {
    let panels = resolution / GL8.len();
    let width = 2.0 * half / panels as f64;
    let mut out = Vec::with_capacity(resolution);
    for p in 0..panels {
        let mid = -half + (p as f64 + 0.5) * width;
        for &(x, w) in &GL8 {
            out.push((mid + 0.5 * width * x, 0.5 * width * w));
        }
    }
    out
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution >= 16 && resolution % 16 == 0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "quadrature resolution must be a positive multiple of 16, got {resolution}"
        )))
    }
}

impl QuadratureMoments {
    pub fn compute(atlas: &FlowBoxAtlas, modes: &[LatticeMode], resolution: usize) -> Result<Self> {
        check_resolution(resolution)?;
        if let Some(m) = modes.iter().find(|m| m.dim() != 2) {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: m.dim(),
            });
        }
        let reach = modes
            .iter()
            .flat_map(|m| m.entries().iter().map(|x| x.unsigned_abs() as usize))
            .max()
            .unwrap_or(0);
        let s_nodes = composite_gauss(atlas.half_leaf, resolution);
        let t_nodes = composite_gauss(atlas.half_transversal, resolution);
        let idx: Vec<(usize, usize)> = modes
            .iter()
            .map(|m| {
                let e = m.entries();
                ((e[0] + reach as i64) as usize, (e[1] + reach as i64) as usize)
            })
            .collect();
        // One task per (box, transversal node); partial sums are combined in
        // task order so the result does not depend on the thread count.
        let tasks: Vec<(usize, usize)> = (0..atlas.len())
            .flat_map(|i| (0..t_nodes.len()).map(move |r| (i, r)))
            .collect();
        let partials: Vec<Vec<Complex64>> = tasks
            .par_iter()
            .map(|&(i, r)| {
                let (t, wt) = t_nodes[r];
                let mut acc = vec![Complex64::new(0.0, 0.0); modes.len()];
                let mut p0 = vec![Complex64::new(0.0, 0.0); 2 * reach + 1];
                let mut p1 = vec![Complex64::new(0.0, 0.0); 2 * reach + 1];
                let bt = bump(t / atlas.half_transversal);
                for &(s, ws) in &s_nodes {
                    let x = atlas.point(i, s, t);
                    let own = bump(s / atlas.half_leaf) * bt;
                    if own == 0.0 {
                        continue;
                    }
                    let total: f64 = (0..atlas.len())
                        .map(|j| if j == i { own } else { atlas.raw_weight(j, x) })
                        .sum();
                    let weight = ws * wt * own / total;
                    powers(x[0], reach, &mut p0);
                    powers(x[1], reach, &mut p1);
                    for (a, &(j0, j1)) in acc.iter_mut().zip(&idx) {
                        *a += p0[j0] * p1[j1] * weight;
                    }
                }
                acc
            })
            .collect();
        let mut values = vec![Complex64::new(0.0, 0.0); modes.len()];
        for part in partials {
            for (v, p) in values.iter_mut().zip(part) {
                *v += p;
            }
        }
        Ok(QuadratureMoments {
            resolution,
            modes: modes.to_vec(),
            values,
            measure_scale: atlas.measure_scale,
            direction: atlas.direction,
        })
    }

    /// `Σ_m (Σ_j ĝ_j(m) u_j) M(m)` scaled by the transversal measure.
    pub fn evaluate(&self, form: &AmbientForm) -> Result<f64> {
        if form.degree != 1 || form.n != 2 {
            return Err(Error::IncompatibleForms(
                "flow-box quadrature evaluates 1-forms on the 2-torus".into(),
            ));
        }
        let mut total = Complex64::new(0.0, 0.0);
        for (m, c) in form.contract_modes(&self.direction) {
            let pos = self.modes.binary_search(&m).map_err(|_| {
                Error::Precondition(format!("mode {m:?} missing from quadrature moments"))
            })?;
            total += c * self.values[pos];
        }
        Ok(total.re * self.measure_scale)
    }
}

/// `out[reach + p] = exp(2πi p x)` for `|p| ≤ reach`.
fn powers(x: f64, reach: usize, out: &mut [Complex64]) {
    let e = Complex64::from_polar(1.0, TAU * x);
    out[reach] = Complex64::new(1.0, 0.0);
    for p in 1..=reach {
        out[reach + p] = out[reach + p - 1] * e;
        out[reach - p] = out[reach + p].conj();
    }
}

/// How the transversal measure is normalized in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasureNormalization {
    pub convention: &'static str,
    pub scale: f64,
}

impl MeasureNormalization {
    pub fn haar(scale: f64) -> Self {
        MeasureNormalization {
            convention: "haar-mass-one",
            scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurrentMethod {
    Spectral,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CurrentReport {
    pub value: f64,
    pub method: CurrentMethod,
    pub estimated_error: f64,
    pub homology_class: Vec<f64>,
    pub atlas_spec: Option<AtlasSpec>,
    pub measure_normalization: MeasureNormalization,
}

impl CurrentReport {
    pub fn spectral(form: &AmbientForm, frame: &FoliationFrame) -> Result<Self> {
        Ok(CurrentReport {
            value: rs_spectral(form, frame)?,
            method: CurrentMethod::Spectral,
            estimated_error: 0.0,
            homology_class: homology_class(frame).into_iter().map(|(_, p)| p).collect(),
            atlas_spec: None,
            measure_normalization: MeasureNormalization::haar(1.0),
        })
    }
}

fn support_modes(forms: &[&AmbientForm]) -> Vec<LatticeMode> {
    let mut modes: Vec<LatticeMode> = forms
        .iter()
        .flat_map(|f| f.terms.keys().map(|(m, _)| m.clone()))
        .collect();
    modes.sort();
    modes.dedup();
    modes
}

/// Evaluates several 1-forms at once, sharing the quadrature moments; the
/// error estimate compares `resolution` against `resolution / 2`.
pub fn rs_quadrature_batch(
    atlas: &FlowBoxAtlas,
    forms: &[&AmbientForm],
    resolution: usize,
) -> Result<Vec<CurrentReport>> {
    check_resolution(resolution)?;
    let modes = support_modes(forms);
    let fine = QuadratureMoments::compute(atlas, &modes, resolution)?;
    let coarse = QuadratureMoments::compute(atlas, &modes, resolution / 2)?;
    let u = atlas.direction;
    forms
        .iter()
        .map(|form| {
            let value = fine.evaluate(form)?;
            Ok(CurrentReport {
                value,
                method: CurrentMethod::Quadrature,
                estimated_error: (value - coarse.evaluate(form)?).abs(),
                homology_class: u.to_vec(),
                atlas_spec: Some(atlas.spec()),
                measure_normalization: MeasureNormalization::haar(atlas.measure_scale),
            })
        })
        .collect()
}

pub fn rs_quadrature(atlas: &FlowBoxAtlas, form: &AmbientForm, resolution: usize) -> Result<CurrentReport> {
    Ok(rs_quadrature_batch(atlas, &[form], resolution)?.remove(0))
}

/// `|S(dη)|` by quadrature: zero for a closed current up to quadrature error.
pub fn exactness_check(atlas: &FlowBoxAtlas, eta: &AmbientForm, resolution: usize) -> Result<f64> {
    if eta.degree != 0 || eta.n != 2 {
        return Err(Error::IncompatibleForms("expected a function on the 2-torus".into()));
    }
    Ok(rs_quadrature(atlas, &eta.exterior_derivative(), resolution)?.value.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI: f64 = 1.618_033_988_749_895;

    fn golden_frame() -> FoliationFrame {
        FoliationFrame::build(&[vec![1.0, PHI]]).unwrap()
    }

    #[test]
    fn spectral_examples() {
        let frame = golden_frame();
        let dx1 = AmbientForm::coordinate(2, &[1]).unwrap();
        let v = rs_spectral(&dx1, &frame).unwrap();
        assert!((v - 1.0 / (1.0 + PHI * PHI).sqrt()).abs() < 1e-15);
        let eta = AmbientForm::random_trig(2, 0, 4.0, 3);
        assert_eq!(rs_spectral(&eta.exterior_derivative(), &frame).unwrap(), 0.0);
        let mut zero_mean = AmbientForm::zero(2, 1);
        zero_mean
            .add_term(LatticeMode::from_slice(&[1, 2]), MultiIndex::new(&[2]).unwrap(), Complex64::new(3.0, 1.0))
            .unwrap();
        assert_eq!(rs_spectral(&zero_mean, &frame).unwrap(), 0.0);
        let two_form = AmbientForm::coordinate(2, &[1, 2]).unwrap();
        assert!(matches!(rs_spectral(&two_form, &frame), Err(Error::IncompatibleForms(_))));
    }

    #[test]
    fn homology_class_examples() {
        let p = homology_class(&golden_frame());
        assert!((p[0].1 - 0.525_731_112_119_133_6).abs() < 1e-15);
        assert!((p[1].1 - 0.850_650_808_352_039_9).abs() < 1e-15);
        let plane = FoliationFrame::build(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let p: Vec<f64> = homology_class(&plane).into_iter().map(|(_, v)| v).collect();
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let tilted = FoliationFrame::build(&[
            vec![1.0, 2f64.sqrt(), 3f64.sqrt(), 0.5],
            vec![3f64.sqrt(), 1.0, 2f64.sqrt(), -1.0],
            vec![0.2, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        let sum: f64 = homology_class(&tilted).iter().map(|(_, p)| p * p).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ambient_d_squared_vanishes() {
        let eta = AmbientForm::random_trig(3, 0, 3.0, 1);
        assert!(eta.is_real(0.0));
        let dd = eta.exterior_derivative().exterior_derivative();
        assert!(dd.terms().all(|(_, _, c)| c.norm() < 1e-10));
    }

    #[test]
    fn atlas_rejects_small_counts() {
        assert!(matches!(
            build_kronecker_atlas([1.0, PHI], 1),
            Err(Error::AtlasConstruction(_))
        ));
        assert!(build_kronecker_atlas([0.0, 0.0], 4).is_err());
    }

    #[test]
    fn atlas_partition_and_good_boxes() {
        for n in [4, 5, 7] {
            let atlas = build_kronecker_atlas([1.0, PHI], n).unwrap();
            assert_eq!(atlas.len(), n);
            assert!(atlas.good_boxes_embed());
            let check = partition_check(&atlas, 64);
            assert!(check.min_raw_sum > 0.0, "N = {n}: {check:?}");
            assert!(check.max_deviation < 1e-12);
        }
    }

    #[test]
    fn holonomy_preserves_lebesgue_measure() {
        let atlas = build_kronecker_atlas([1.0, PHI], 4).unwrap();
        let check = holonomy_check(&atlas, 200, 5);
        assert_eq!(check.samples, 200);
        assert!(check.max_deviation <= 1e-12);
    }

    #[test]
    fn quadrature_matches_spectral_for_constants() {
        let atlas = build_kronecker_atlas([1.0, PHI], 4).unwrap();
        let frame = golden_frame();
        for axis in [1, 2] {
            let form = AmbientForm::coordinate(2, &[axis]).unwrap();
            let report = rs_quadrature(&atlas, &form, 128).unwrap();
            let exact = rs_spectral(&form, &frame).unwrap();
            assert!((report.value - exact).abs() < 1e-6, "{} vs {exact}", report.value);
        }
        let zero = AmbientForm::zero(2, 1);
        assert_eq!(rs_quadrature(&atlas, &zero, 64).unwrap().value, 0.0);
    }

    #[test]
    fn measure_scale_scales_values() {
        let atlas = build_kronecker_atlas([1.0, PHI], 4).unwrap();
        let form = AmbientForm::coordinate(2, &[1]).unwrap();
        let base = rs_quadrature(&atlas, &form, 64).unwrap().value;
        let scaled = rs_quadrature(&atlas.with_measure_scale(2.5), &form, 64).unwrap().value;
        assert!((scaled - 2.5 * base).abs() < 1e-14);
    }

    #[test]
    fn exactness_of_sine() {
        let atlas = build_kronecker_atlas([1.0, PHI], 4).unwrap();
        let mut eta = AmbientForm::zero(2, 0);
        let e = MultiIndex::empty();
        eta.add_term(LatticeMode::from_slice(&[1, 0]), e, Complex64::new(0.0, -0.5)).unwrap();
        eta.add_term(LatticeMode::from_slice(&[-1, 0]), e, Complex64::new(0.0, 0.5)).unwrap();
        assert!(eta.is_real(0.0));
        assert!(exactness_check(&atlas, &eta, 128).unwrap() <= 1e-6);
        assert_eq!(exactness_check(&atlas, &AmbientForm::zero(2, 0), 64).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_rejects_bad_resolution() {
        let atlas = build_kronecker_atlas([1.0, PHI], 4).unwrap();
        let form = AmbientForm::coordinate(2, &[1]).unwrap();
        assert!(rs_quadrature(&atlas, &form, 20).is_err());
    }

    #[test]
    fn report_json_keys() {
        let form = AmbientForm::coordinate(2, &[1]).unwrap();
        let report = CurrentReport::spectral(&form, &golden_frame()).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        for key in ["value", "method", "estimatedError", "homologyClass", "atlasSpec", "measureNormalization"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["method"], "spectral");
    }
}
