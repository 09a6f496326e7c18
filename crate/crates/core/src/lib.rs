//! Leafwise Hodge theory on Kronecker solenoids.
//!
//! A Kronecker solenoid is the flat torus `Tⁿ = ℝⁿ/ℤⁿ` foliated by the
//! translates of a `k`-plane `W ⊂ ℝⁿ`. Every leafwise operator (exterior
//! derivative, codifferential, Hodge star, Laplacian, Green operator) is
//! diagonal in the Fourier basis `e_m(x) = exp(2πi⟨m, x⟩)`, so all of them
//! are computed exactly per mode on a finite truncation of the lattice.
//!
//! Modules:
//!
//! * [`lattice`]: mode enumeration and multi-index sign bookkeeping.
//! * [`foliation`]: orthonormal leaf frames, leaf frequencies, minimality scans.
//! * [`forms`]: truncated Fourier forms and the leafwise Hodge calculus.
//! * [`smalldiv`]: continued fractions, Minkowski witnesses, record divisors,
//!   diophantine exponent fits and the cohomological equation.
//! * [`current`]: Ruelle–Sullivan currents by closed form and by flow-box
//!   quadrature.
//!
//! Derivative convention: `D_{w_j}` acts on `e_m` as multiplication by
//! `i·ξ_j(m)` with `ξ_j(m) = 2π⟨m, w_j⟩`, so the Laplacian multiplier is
//! `λ(m) = 4π² Σ_j ⟨m, w_j⟩²`. The cohomological equation in [`smalldiv`]
//! keeps the bare symbol `⟨m, α⟩` instead; see that module for the conversion.

pub mod current;
pub mod error;
pub mod foliation;
pub mod forms;
pub mod lattice;
pub mod smalldiv;

pub use current::{AmbientForm, CurrentReport, FlowBoxAtlas};
pub use error::{Error, Result};
pub use foliation::{FoliationFrame, FrequencyVector, MinimalityReport};
pub use forms::{FourierForm, HodgeDecomposition, ModeTable, SmallDivisorWarning};
pub use lattice::{LatticeMode, MultiIndex, Sign};
pub use num_complex::Complex64;
pub use smalldiv::{DiophantineEstimate, DirectionVector, DivisorRecord, WitnessSequence};
