//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use solenoid_core::smalldiv::DirectionVector;
use solenoid_core::FoliationFrame;

pub const GOLDEN: f64 = 1.618_033_988_749_895;

/// `α = (1, φ)`.
pub fn golden_direction() -> DirectionVector {
    DirectionVector::new(vec![1.0, GOLDEN])
        .expect("finite direction")
        .with_claimed_independence(true)
}

pub fn golden_frame() -> Arc<FoliationFrame> {
    Arc::new(golden_direction().frame().expect("nonzero direction"))
}

/// A minimal 2-dimensional foliation of `T³`.
pub fn plane_frame() -> Arc<FoliationFrame> {
    let (s2, s3) = (2f64.sqrt(), 3f64.sqrt());
    Arc::new(
        FoliationFrame::build(&[vec![1.0, s2, s3], vec![s3, 1.0, s2]])
            .expect("independent vectors")
            .with_minimality_asserted(true),
    )
}
