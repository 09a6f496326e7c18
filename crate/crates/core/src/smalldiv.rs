//! Small divisors of the Kronecker 1-solenoid.
//!
//! For a leaf direction `α ∈ ℝⁿ` the cohomological equation `D_α a = b`
//! reads `⟨m, α⟩ a_m = b_m` mode by mode. This module works with the bare
//! symbol `⟨m, α⟩`; the leafwise derivative of [`crate::forms`] differs by
//! the constant `2πi/‖α‖`, which [`leafwise_primitive`] absorbs.
//!
//! Modes `m` and `−m` carry the same divisor, so scans report one
//! representative per pair: the one with `⟨m, α⟩ > 0`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::foliation::FoliationFrame;
use crate::forms::{FourierForm, ModeTable};
use crate::lattice::{for_each_in_ball, LatticeMode};

/// Divisors below this are suspected resonances: a float cannot tell a tiny
/// divisor from an exact rational relation.
pub const DEFAULT_DIVISOR_FLOOR: f64 = 1e-13;

/// `b₀` above this magnitude makes the cohomological equation unsolvable.
pub const CONSTANT_OBSTRUCTION_TOL: f64 = 1e-12;

/// Slack subtracted from the predicted decay exponent in decay-transfer fits.
pub const DECAY_FIT_SLACK: f64 = 0.2;

/// An unnormalized leaf direction `α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DirectionVector {
    alpha: Vec<f64>,
    claimed_independence: bool,
}

impl DirectionVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::LeafDimension {
                k: 1,
                n: alpha.len(),
            });
        }
        if alpha.iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("direction must be finite".into()));
        }
        if alpha.iter().all(|&x| x == 0.0) {
            return Err(Error::DegenerateSubspace { expected: 1 });
        }
        Ok(DirectionVector {
            alpha,
            claimed_independence: false,
        })
    }

    /// Records the user's claim that the entries are rationally independent.
    pub fn with_claimed_independence(mut self, claimed: bool) -> Self {
        self.claimed_independence = claimed;
        self
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn claimed_independence(&self) -> bool {
        self.claimed_independence
    }

    /// `⟨m, α⟩`.
    pub fn symbol(&self, m: &[i64]) -> f64 {
        m.iter().zip(&self.alpha).map(|(&a, b)| a as f64 * b).sum()
    }

    /// The one-dimensional leaf frame spanned by `α`.
    pub fn frame(&self) -> Result<FoliationFrame> {
        Ok(FoliationFrame::build(&[self.alpha.clone()])?
            .with_minimality_asserted(self.claimed_independence))
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: n,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DivisorRecord {
    pub mode: LatticeMode,
    pub divisor: f64,
    pub norm: f64,
    pub is_record: bool,
    pub is_minkowski_witness: bool,
}

/// One scanned `±m` pair, canonical sign.
#[derive(Debug, Clone)]
struct Scanned {
    mode: LatticeMode,
    norm_sq: i64,
    divisor: f64,
}

fn canonical(m: &[i64], symbol: f64) -> LatticeMode {
    let mode = LatticeMode::from_slice(m);
    if symbol > 0.0 || (symbol == 0.0 && mode.is_upper_half()) {
        mode
    } else {
        -mode
    }
}

/// Every nonzero `±m` pair with `‖m‖ ≤ radius`, sorted by norm and then by
/// canonical representative.
fn scan_pairs(alpha: &DirectionVector, radius: f64) -> Vec<Scanned> {
    let n = alpha.dim();
    if !(radius >= 1.0) {
        return Vec::new();
    }
    let r = radius.floor() as i64;
    let r_sq = radius * radius;
    let mut out: Vec<Scanned> = (-r..=r)
        .into_par_iter()
        .flat_map_iter(|first| {
            let rest = (r_sq - (first * first) as f64).max(0.0).sqrt();
            let mut local = Vec::new();
            let mut buf = vec![0i64; n];
            buf[0] = first;
            for_each_in_ball(n - 1, rest, |tail| {
                buf[1..].copy_from_slice(tail);
                let last_nonzero = buf.iter().rev().find(|&&x| x != 0);
                // keep one of ±m: the one whose last nonzero entry is positive
                if matches!(last_nonzero, Some(&x) if x > 0) {
                    let s = alpha.symbol(&buf);
                    local.push(Scanned {
                        mode: canonical(&buf, s),
                        norm_sq: buf.iter().map(|x| x * x).sum(),
                        divisor: s.abs(),
                    });
                }
            });
            local
        })
        .collect();
    out.sort_by(|a, b| a.norm_sq.cmp(&b.norm_sq).then_with(|| a.mode.cmp(&b.mode)));
    out
}

fn to_record(s: &Scanned, is_record: bool) -> DivisorRecord {
    let norm = (s.norm_sq as f64).sqrt();
    DivisorRecord {
        mode: s.mode.clone(),
        divisor: s.divisor,
        norm,
        is_record,
        is_minkowski_witness: s.divisor * norm < 1.0,
    }
}

/// Indices of record pairs in a sorted scan: the first minimizer of each
/// norm shell whose divisor beats every smaller shell.
fn record_indices(scan: &[Scanned]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut best = f64::INFINITY;
    let mut start = 0;
    while start < scan.len() {
        let mut end = start;
        let mut arg = start;
        while end < scan.len() && scan[end].norm_sq == scan[start].norm_sq {
            if scan[end].divisor < scan[arg].divisor {
                arg = end;
            }
            end += 1;
        }
        if scan[arg].divisor < best {
            best = scan[arg].divisor;
            out.push(arg);
        }
        start = end;
    }
    out
}

/// Full divisor table over `0 < ‖m‖ ≤ radius`, one row per `±m` pair.
pub fn divisor_scan(alpha: &DirectionVector, radius: f64) -> Vec<DivisorRecord> {
    let scan = scan_pairs(alpha, radius);
    let records = record_indices(&scan);
    let mut flags = vec![false; scan.len()];
    for i in records {
        flags[i] = true;
    }
    scan.iter().zip(flags).map(|(s, f)| to_record(s, f)).collect()
}

/// Modes with `|⟨m, α⟩| · ‖m‖ < 1` in `0 < ‖m‖ ≤ radius`.
pub fn minkowski_witnesses(alpha: &DirectionVector, radius: f64) -> Result<Vec<DivisorRecord>> {
    check_radius(radius)?;
    let scan = scan_pairs(alpha, radius);
    let records = record_indices(&scan);
    Ok(scan
        .iter()
        .enumerate()
        .map(|(i, s)| to_record(s, records.binary_search(&i).is_ok()))
        .filter(|r| r.is_minkowski_witness)
        .collect())
}

fn check_radius(radius: f64) -> Result<()> {
    if radius >= 1.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "scan radius must be finite and at least 1, got {radius}"
        )))
    }
}

/// Running minima of the divisor by norm shell.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordScan {
    pub radius: f64,
    pub records: Vec<DivisorRecord>,
    /// First record whose divisor falls below the divisor floor.
    pub resonance: Option<LatticeMode>,
    pub divisor_floor: f64,
}

pub fn record_divisors(alpha: &DirectionVector, radius: f64) -> Result<RecordScan> {
    check_radius(radius)?;
    let scan = scan_pairs(alpha, radius);
    let records: Vec<DivisorRecord> = record_indices(&scan)
        .into_iter()
        .map(|i| to_record(&scan[i], true))
        .collect();
    let resonance = records
        .iter()
        .find(|r| r.divisor < DEFAULT_DIVISOR_FLOOR)
        .map(|r| r.mode.clone());
    if let Some(m) = &resonance {
        log::warn!("record scan hit a suspected resonance at {m:?}");
    }
    Ok(RecordScan {
        radius,
        records,
        resonance,
        divisor_floor: DEFAULT_DIVISOR_FLOOR,
    })
}

/// Least-squares line `y ≈ slope·x + intercept`; `None` for fewer than two
/// distinct abscissae.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Empirical diophantine condition `|⟨m, α⟩| ≥ γ̂ / ‖m‖^{n+τ̂}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DiophantineEstimate {
    pub tau_hat: f64,
    pub gamma_hat: f64,
    pub scan_radius: f64,
    /// Largest absolute log-residual of the fit.
    pub residual: f64,
    /// Raw fitted decay exponent of the record divisors.
    pub slope: f64,
    pub dim: usize,
    pub record_count: usize,
}

impl DiophantineEstimate {
    /// `γ̂ / ‖m‖^{n+τ̂}`.
    pub fn lower_bound(&self, norm: f64) -> f64 {
        self.gamma_hat / norm.powf(self.dim as f64 + self.tau_hat)
    }
}

/// Fits `log divisor = log γ̂ − slope · log ‖m‖` over records; `τ̂ = max(slope − n, 0)`.
pub fn estimate_exponent(records: &[DivisorRecord], scan_radius: f64) -> Result<DiophantineEstimate> {
    if let Some(r) = records.iter().find(|r| r.divisor < DEFAULT_DIVISOR_FLOOR) {
        return Err(Error::ResonantDirection {
            mode: r.mode.entries().to_vec(),
        });
    }
    let mut distinct: Vec<&LatticeMode> = records.iter().map(|r| &r.mode).collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 distinct records, got {}",
            distinct.len()
        )));
    }
    let dim = records[0].mode.dim();
    let xs: Vec<f64> = records.iter().map(|r| -r.norm.ln()).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.divisor.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys)
        .ok_or_else(|| Error::InsufficientData("records share a single norm".into()))?;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).abs())
        .fold(0.0, f64::max);
    Ok(DiophantineEstimate {
        tau_hat: (slope - dim as f64).max(0.0),
        gamma_hat: intercept.exp(),
        scan_radius,
        residual,
        slope,
        dim,
        record_count: records.len(),
    })
}

/// Partial quotients and convergents `p_i / q_i` of a real number.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ContinuedFraction {
    pub quotients: Vec<i64>,
    pub convergents: Vec<(i64, i64)>,
    /// The expansion ended on an exactly zero fractional part.
    pub terminated: bool,
    /// The expansion stopped early because the next quotient exceeds the
    /// integer range representable by the float.
    pub truncated: bool,
}

const MAX_EXACT_QUOTIENT: f64 = 9_007_199_254_740_992.0; // 2^53

/// `[a₀; a₁, …, a_depth]`, stopping early on exact termination or overflow.
pub fn continued_fraction(x: f64, depth: usize) -> Result<ContinuedFraction> {
    if depth < 1 {
        return Err(Error::Precondition("continued fraction depth must be >= 1".into()));
    }
    if !x.is_finite() || x.abs() >= MAX_EXACT_QUOTIENT {
        return Err(Error::Precondition(format!("cannot expand {x}")));
    }
    let mut quotients = Vec::new();
    let mut convergents = Vec::new();
    // (p_{i-2}, q_{i-2}) and (p_{i-1}, q_{i-1})
    let (mut p2, mut q2) = (0i64, 1i64);
    let (mut p1, mut q1) = (1i64, 0i64);
    let mut y = x;
    let mut terminated = false;
    let mut truncated = false;
    for i in 0..=depth {
        let a = y.floor();
        let ai = a as i64;
        let next = ai
            .checked_mul(p1)
            .and_then(|v| v.checked_add(p2))
            .zip(ai.checked_mul(q1).and_then(|v| v.checked_add(q2)));
        let Some((p, q)) = next else {
            truncated = true;
            break;
        };
        quotients.push(ai);
        convergents.push((p, q));
        (p2, q2, p1, q1) = (p1, q1, p, q);
        let frac = y - a;
        if frac == 0.0 {
            terminated = true;
            break;
        }
        if i == depth {
            break;
        }
        let inv = 1.0 / frac;
        if !inv.is_finite() || inv >= MAX_EXACT_QUOTIENT {
            truncated = true;
            break;
        }
        y = inv;
    }
    Ok(ContinuedFraction {
        quotients,
        convergents,
        terminated,
        truncated,
    })
}

/// Agreement between record modes and continued-fraction convergents of
/// `α₂/α₁` (planar directions only).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergentCrossCheck {
    pub convergent_modes: Vec<LatticeMode>,
    pub record_modes: Vec<LatticeMode>,
    pub missing_from_records: Vec<LatticeMode>,
    pub extra_records: Vec<LatticeMode>,
}

impl ConvergentCrossCheck {
    pub fn agrees(&self) -> bool {
        self.missing_from_records.is_empty() && self.extra_records.is_empty()
    }
}

/// Compares the records in `‖m‖ ≤ radius` with the modes `±(−p_i, q_i)` of
/// the convergents of `α₂/α₁`.
pub fn convergent_cross_check(alpha: &DirectionVector, radius: f64) -> Result<ConvergentCrossCheck> {
    alpha.check_dim(2)?;
    let a = alpha.alpha();
    if a[0] == 0.0 {
        return Err(Error::Precondition("first entry of α must be nonzero".into()));
    }
    let x = a[1] / a[0];
    let scan = record_divisors(alpha, radius)?;
    let canon = |p: i64, q: i64| {
        let m = [-p, q];
        canonical(&m, alpha.symbol(&m))
    };
    let mut convergent_modes = Vec::new();
    let cf = continued_fraction(x, 64)?;
    for &(p, q) in &cf.convergents {
        let m = canon(p, q);
        if m.norm() > radius {
            break;
        }
        if !convergent_modes.contains(&m) {
            convergent_modes.push(m);
        }
    }
    let record_modes: Vec<LatticeMode> = scan.records.iter().map(|r| r.mode.clone()).collect();
    // The first record sits on a unit shell and may be the `1/0` pseudo
    // convergent, so extra records are only counted past it.
    let missing_from_records = convergent_modes
        .iter()
        .filter(|m| !record_modes.contains(m))
        .cloned()
        .collect();
    let extra_records = record_modes
        .iter()
        .skip(1)
        .filter(|m| !convergent_modes.contains(m))
        .cloned()
        .collect();
    Ok(ConvergentCrossCheck {
        convergent_modes,
        record_modes,
        missing_from_records,
        extra_records,
    })
}

/// Witnesses with strictly decreasing divisors and data `b_{m_k} = ⟨m_k, α⟩`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WitnessSequence {
    pub modes: Vec<LatticeMode>,
    pub divisors: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// `Σ_{j≤k} b_{m_j}²`.
    pub coefficient_partial_sums: Vec<f64>,
    /// `Σ_{j≤k} (b_{m_j} / ⟨m_j, α⟩)²`.
    pub solution_partial_sums: Vec<f64>,
}

impl WitnessSequence {
    fn from_witnesses(alpha: &DirectionVector, witnesses: Vec<DivisorRecord>) -> Self {
        let mut seq = WitnessSequence {
            modes: Vec::new(),
            divisors: Vec::new(),
            coefficients: Vec::new(),
            coefficient_partial_sums: Vec::new(),
            solution_partial_sums: Vec::new(),
        };
        let (mut b_sum, mut a_sum) = (0.0, 0.0);
        for w in witnesses {
            let b = alpha.symbol(w.mode.entries());
            let a = b / alpha.symbol(w.mode.entries());
            b_sum += b * b;
            a_sum += a * a;
            seq.modes.push(w.mode);
            seq.divisors.push(w.divisor);
            seq.coefficients.push(b);
            seq.coefficient_partial_sums.push(b_sum);
            seq.solution_partial_sums.push(a_sum);
        }
        seq
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// The data `b` as a degree-1 form on the frame of `α`.
    pub fn data_form(&self, table: Arc<ModeTable>) -> Result<FourierForm> {
        let set = crate::lattice::MultiIndex::full(1);
        FourierForm::from_entries(
            table,
            1,
            self.modes
                .iter()
                .zip(&self.coefficients)
                .map(|(m, &b)| (m.clone(), set, Complex64::new(b, 0.0))),
        )
    }
}

/// Minkowski witnesses in norm order whose divisors strictly decrease.
fn decreasing_witnesses(alpha: &DirectionVector, radius: f64) -> Result<Vec<DivisorRecord>> {
    let mut best = f64::INFINITY;
    Ok(minkowski_witnesses(alpha, radius)?
        .into_iter()
        .filter(|w| {
            let keep = w.divisor < best && w.divisor >= DEFAULT_DIVISOR_FLOOR;
            if keep {
                best = w.divisor;
            }
            keep
        })
        .collect())
}

pub fn build_witness_sequence(
    alpha: &DirectionVector,
    radius: f64,
    count: usize,
) -> Result<WitnessSequence> {
    if count == 0 {
        return Ok(WitnessSequence::from_witnesses(alpha, Vec::new()));
    }
    let mut pool = decreasing_witnesses(alpha, radius)?;
    if pool.len() < count {
        return Err(Error::InsufficientWitnesses {
            requested: count,
            found: pool.len(),
            radius,
        });
    }
    pool.truncate(count);
    Ok(WitnessSequence::from_witnesses(alpha, pool))
}

/// `families` witness sequences of length `count` with pairwise disjoint
/// supports, dealt round-robin from one decreasing witness chain.
pub fn disjoint_witness_families(
    alpha: &DirectionVector,
    radius: f64,
    families: usize,
    count: usize,
) -> Result<Vec<WitnessSequence>> {
    let pool = decreasing_witnesses(alpha, radius)?;
    let needed = families * count;
    if pool.len() < needed {
        return Err(Error::InsufficientWitnesses {
            requested: needed,
            found: pool.len(),
            radius,
        });
    }
    Ok((0..families)
        .map(|f| {
            let picks = pool[..needed].iter().skip(f).step_by(families).cloned().collect();
            WitnessSequence::from_witnesses(alpha, picks)
        })
        .collect())
}

/// Whether no mode appears in two of the sequences.
pub fn supports_disjoint(families: &[WitnessSequence]) -> bool {
    let mut all: Vec<&LatticeMode> = families.iter().flat_map(|f| &f.modes).collect();
    let total = all.len();
    all.sort();
    all.dedup();
    all.len() == total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SolverDiagnostics {
    /// Nested truncation radii `R/4, R/2, R`.
    pub radii: [f64; 3],
    /// `‖a‖_{L²}` restricted to each radius.
    pub norms: [f64; 3],
    /// Least-squares slope of `log ‖a‖` against `log R` over nonzero norms.
    pub divergence_slope: Option<f64>,
    pub divisor_floor: f64,
    /// Occupied modes with `0 < |⟨m, α⟩| < floor`.
    pub small_divisors: Vec<LatticeMode>,
}

#[derive(Debug, Clone)]
pub struct CohomologicalSolution {
    pub solution: FourierForm,
    pub diagnostics: SolverDiagnostics,
}

fn check_direction(frame: &FoliationFrame, alpha: &DirectionVector) -> Result<()> {
    alpha.check_dim(frame.ambient_dim())?;
    if frame.leaf_dim() != 1 {
        return Err(Error::IncompatibleForms(format!(
            "cohomological equation needs a 1-dimensional leaf, got {}",
            frame.leaf_dim()
        )));
    }
    let norm = alpha.alpha().iter().map(|x| x * x).sum::<f64>().sqrt();
    let w = &frame.directions()[0];
    let cos = w.iter().zip(alpha.alpha()).map(|(a, b)| a * b).sum::<f64>() / norm;
    if (cos.abs() - 1.0).abs() > 1e-12 {
        return Err(Error::IncompatibleForms(
            "frame direction is not parallel to α".into(),
        ));
    }
    Ok(())
}

/// `b_m = ⟨m, α⟩ f_m`: the bare-symbol derivative of a function, as degree-1 data.
pub fn apply_symbol(f: &FourierForm, alpha: &DirectionVector) -> Result<FourierForm> {
    check_direction(f.frame(), alpha)?;
    if f.degree() != 0 {
        return Err(Error::IncompatibleForms("expected a function".into()));
    }
    let table = Arc::clone(f.table());
    let coeffs = f
        .coeffs()
        .iter()
        .zip(table.modes())
        .map(|(c, m)| c * alpha.symbol(m.entries()))
        .collect();
    FourierForm::from_coeffs(table, 1, coeffs)
}

/// `a_m = b_m / ⟨m, α⟩` with the default divisor floor.
pub fn solve_cohomological(g: &FourierForm, alpha: &DirectionVector) -> Result<CohomologicalSolution> {
    solve_cohomological_with_floor(g, alpha, DEFAULT_DIVISOR_FLOOR)
}

pub fn solve_cohomological_with_floor(
    g: &FourierForm,
    alpha: &DirectionVector,
    floor: f64,
) -> Result<CohomologicalSolution> {
    check_direction(g.frame(), alpha)?;
    if g.degree() != 1 {
        return Err(Error::IncompatibleForms(format!(
            "expected degree-1 data, got degree {}",
            g.degree()
        )));
    }
    let table = Arc::clone(g.table());
    let b = g.coeffs();
    if b[0].norm() > CONSTANT_OBSTRUCTION_TOL {
        return Err(Error::NotSolvableConstantObstruction {
            re: b[0].re,
            im: b[0].im,
        });
    }
    let radius = table.radius();
    let radii = [radius / 4.0, radius / 2.0, radius];
    let mut norms_sq = [0.0; 3];
    let mut small_divisors = Vec::new();
    let mut a = vec![Complex64::new(0.0, 0.0); b.len()];
    for (i, m) in table.modes().iter().enumerate().skip(1) {
        if b[i].norm() == 0.0 {
            continue;
        }
        let s = alpha.symbol(m.entries());
        if s == 0.0 {
            return Err(Error::ResonantDirection {
                mode: m.entries().to_vec(),
            });
        }
        if s.abs() < floor {
            small_divisors.push(m.clone());
        }
        a[i] = b[i] / s;
        let norm = m.norm();
        for (r, acc) in radii.iter().zip(norms_sq.iter_mut()) {
            if norm <= *r {
                *acc += a[i].norm_sqr();
            }
        }
    }
    let norms = norms_sq.map(f64::sqrt);
    let (xs, ys): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&norms)
        .filter(|(r, n)| **r > 0.0 && **n > 0.0)
        .map(|(r, n)| (r.ln(), n.ln()))
        .unzip();
    if !small_divisors.is_empty() {
        log::warn!("{} divisors below {floor:e}", small_divisors.len());
    }
    Ok(CohomologicalSolution {
        solution: FourierForm::from_coeffs(table, 0, a)?,
        diagnostics: SolverDiagnostics {
            radii,
            norms,
            divergence_slope: least_squares(&xs, &ys).map(|(s, _)| s),
            divisor_floor: floor,
            small_divisors,
        },
    })
}

/// Solves the leafwise equation `df = g` on a 1-dimensional leaf in the
/// derivative convention of [`crate::forms`] (`d e_m = 2πi⟨m, w⟩ e_m dϖ`).
pub fn leafwise_primitive(g: &FourierForm) -> Result<CohomologicalSolution> {
    let frame = g.frame();
    if frame.leaf_dim() != 1 {
        return Err(Error::IncompatibleForms("leafwise primitive needs k = 1".into()));
    }
    let alpha = DirectionVector::new(frame.directions()[0].clone())?;
    let scaled = g.scale(Complex64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI)));
    solve_cohomological(&scaled, &alpha)
}

/// Observed decay of the solution to data with `|b_m| = (1 + ‖m‖)^{-r}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecayTransferReport {
    pub input_decay: f64,
    pub radius: f64,
    pub tau_hat: f64,
    pub dim: usize,
    /// `r − (n + τ̂) − slack`.
    pub required_decay: f64,
    pub slack: f64,
    pub observed_decay: f64,
    /// `(‖m‖, max |a_m|)` at the argmax of each dyadic shell `[2^j, 2^{j+1})`.
    pub shell_maxima: Vec<(f64, f64)>,
    /// Modes skipped because their divisor fell below the floor.
    pub skipped_modes: usize,
    pub meets_bound: bool,
    /// Set when the observed decay falls short of the diophantine prediction.
    pub liouville_behavior: bool,
}

pub fn decay_transfer_report(
    alpha: &DirectionVector,
    estimate: &DiophantineEstimate,
    input_decay: f64,
    radius: f64,
    seed: u64,
) -> Result<DecayTransferReport> {
    let n = alpha.dim();
    let loss = n as f64 + estimate.tau_hat;
    if !(input_decay > loss + 1.0) {
        return Err(Error::Precondition(format!(
            "input decay {input_decay} must exceed n + τ̂ + 1 = {}",
            loss + 1.0
        )));
    }
    check_radius(radius)?;
    let shells = radius.log2().floor() as usize + 1;
    let mut maxima = vec![(0.0f64, 0.0f64); shells];
    let mut skipped = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for_each_in_ball(n, radius, |m| {
        let norm_sq: i64 = m.iter().map(|x| x * x).sum();
        if norm_sq == 0 {
            return;
        }
        let norm = (norm_sq as f64).sqrt();
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let b = Complex64::from_polar((1.0 + norm).powf(-input_decay), phase);
        let s = alpha.symbol(m);
        if s.abs() < DEFAULT_DIVISOR_FLOOR {
            skipped += 1;
            return;
        }
        let a = (b / s).norm();
        let j = (norm.log2().floor() as usize).min(shells - 1);
        if a > maxima[j].1 {
            maxima[j] = (norm, a);
        }
    });
    let shell_maxima: Vec<(f64, f64)> = maxima.into_iter().filter(|&(_, a)| a > 0.0).collect();
    let xs: Vec<f64> = shell_maxima.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = shell_maxima.iter().map(|(_, a)| a.ln()).collect();
    let (slope, _) = least_squares(&xs, &ys)
        .ok_or_else(|| Error::InsufficientData("fewer than two dyadic shells".into()))?;
    let observed_decay = -slope;
    let required_decay = input_decay - loss - DECAY_FIT_SLACK;
    let meets_bound = observed_decay >= required_decay;
    Ok(DecayTransferReport {
        input_decay,
        radius,
        tau_hat: estimate.tau_hat,
        dim: n,
        required_decay,
        slack: DECAY_FIT_SLACK,
        observed_decay,
        shell_maxima,
        skipped_modes: skipped,
        meets_bound,
        liouville_behavior: !meets_bound,
    })
}

/// `(1, Σ_{j≤terms} 10^{-j!})`, a truncated Liouville direction.
pub fn liouville_direction(terms: u32) -> DirectionVector {
    let mut x = 0.0;
    let mut fact = 1u32;
    for j in 1..=terms {
        fact *= j;
        x += 10f64.powi(-(fact as i32));
    }
    DirectionVector::new(vec![1.0, x]).expect("nonzero direction")
}
