//! Leaf frames `W = span(w_1, …, w_k) ⊂ ℝⁿ` and per-mode leaf frequencies.

use std::f64::consts::PI;

use serde::Serialize;
use sha2::{Digest, Sha256};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::lattice::{for_each_in_ball, LatticeMode};

/// Orthonormality tolerance for stored frames.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

/// Threshold on `Σ_j ⟨m, w_j⟩²` below which a nonzero mode counts as resonant.
pub const RESONANCE_THRESHOLD: f64 = 1e-14;

/// Relative residual below which a Gram–Schmidt step is treated as rank loss.
const RANK_TOL: f64 = 1e-10;

/// Orthonormal leaf directions of a linear foliation of `Tⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FoliationFrame {
    n: usize,
    w: Vec<Vec<f64>>,
    minimality_asserted: bool,
}

/// Angular leaf frequencies `ξ_j(m) = 2π⟨m, w_j⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector(pub SmallVec<[f64; 4]>);

impl FrequencyVector {
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }
}

/// Result of [`FoliationFrame::minimality_scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MinimalityReport {
    pub radius: f64,
    pub min_mode: LatticeMode,
    /// `Σ_j ⟨m, w_j⟩²` at `min_mode` (no `4π²` factor).
    pub min_value: f64,
    /// True when `min_value` is below [`RESONANCE_THRESHOLD`].
    pub resonant: bool,
}

impl FoliationFrame {
    /// Orthonormalizes `raw` by Gram–Schmidt (with one re-orthogonalization
    /// pass) into a frame spanning the same subspace.
    pub fn build(raw: &[Vec<f64>]) -> Result<Self> {
        let k = raw.len();
        let n = raw.first().map_or(0, Vec::len);
        if k == 0 || k >= n {
            return Err(Error::LeafDimension { k, n });
        }
        if let Some(bad) = raw.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        if raw.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("frame entries must be finite".into()));
        }
        let mut w: Vec<Vec<f64>> = Vec::with_capacity(k);
        for v in raw {
            let scale = norm(v);
            if scale == 0.0 {
                return Err(Error::DegenerateSubspace { expected: k });
            }
            let mut u: Vec<f64> = v.iter().map(|x| x / scale).collect();
            for _ in 0..2 {
                for q in &w {
                    let c = dot(&u, q);
                    u.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
                }
            }
            let r = norm(&u);
            if r <= RANK_TOL {
                return Err(Error::DegenerateSubspace { expected: k });
            }
            u.iter_mut().for_each(|a| *a /= r);
            w.push(u);
        }
        Ok(FoliationFrame {
            n,
            w,
            minimality_asserted: false,
        })
    }

    /// Accepts an already orthonormal frame, checked to [`ORTHONORMAL_TOL`].
    pub fn from_orthonormal(w: Vec<Vec<f64>>) -> Result<Self> {
        let k = w.len();
        let n = w.first().map_or(0, Vec::len);
        if k == 0 || k >= n {
            return Err(Error::LeafDimension { k, n });
        }
        for (i, a) in w.iter().enumerate() {
            if a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: a.len(),
                });
            }
            for (j, b) in w.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot(a, b) - target).abs() > ORTHONORMAL_TOL {
                    return Err(Error::Precondition(format!(
                        "frame is not orthonormal at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(FoliationFrame {
            n,
            w,
            minimality_asserted: false,
        })
    }

    /// Records the caller's assertion that no nonzero integer mode is
    /// orthogonal to the whole leaf space.
    pub fn with_minimality_asserted(mut self, asserted: bool) -> Self {
        self.minimality_asserted = asserted;
        self
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn leaf_dim(&self) -> usize {
        self.w.len()
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn minimality_asserted(&self) -> bool {
        self.minimality_asserted
    }

    /// Stable identifier derived from the exact bits of the frame.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.w.len() as u64).to_le_bytes());
        for x in self.w.iter().flatten() {
            h.update(x.to_bits().to_le_bytes());
        }
        h.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// `⟨m, w_j⟩` for each leaf axis.
    pub fn projections(&self, m: &[i64]) -> SmallVec<[f64; 4]> {
        debug_assert_eq!(m.len(), self.n);
        self.w
            .iter()
            .map(|wj| m.iter().zip(wj).map(|(&a, &b)| a as f64 * b).sum())
            .collect()
    }

    /// `Σ_j ⟨m, w_j⟩²`, the squared length of the leaf component of `m`.
    pub fn leaf_norm_sq(&self, m: &[i64]) -> f64 {
        self.projections(m).iter().map(|x| x * x).sum()
    }

    pub fn frequency(&self, m: &LatticeMode) -> FrequencyVector {
        FrequencyVector(
            self.projections(m.entries())
                .into_iter()
                .map(|x| 2.0 * PI * x)
                .collect(),
        )
    }

    /// Laplacian multiplier `λ(m) = ‖ξ(m)‖² = 4π² Σ_j ⟨m, w_j⟩²`.
    pub fn lambda(&self, m: &LatticeMode) -> f64 {
        self.frequency(m).norm_sq()
    }

    /// Nonzero mode with `‖m‖ ≤ radius` minimizing `Σ_j ⟨m, w_j⟩²`.
    ///
    /// Only one of `±m` is considered (the one whose last nonzero entry is
    /// positive); ties go to the earlier mode in shell order.
    pub fn minimality_scan(&self, radius: f64) -> Result<MinimalityReport> {
        if !(radius >= 1.0) {
            return Err(Error::Precondition(format!(
                "minimality scan radius must be >= 1, got {radius}"
            )));
        }
        let mut best: Option<(f64, LatticeMode)> = None;
        for_each_in_ball(self.n, radius, |m| {
            let mode = LatticeMode::from_slice(m);
            if !mode.is_upper_half() {
                return;
            }
            let value = self.leaf_norm_sq(m);
            let better = match &best {
                None => true,
                Some((v, bm)) => value < *v || (value == *v && mode < *bm),
            };
            if better {
                best = Some((value, mode));
            }
        });
        let (min_value, min_mode) = best.expect("radius >= 1 always has nonzero modes");
        Ok(MinimalityReport {
            radius,
            min_mode,
            min_value,
            resonant: min_value < RESONANCE_THRESHOLD,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
