//! Shared fixtures for the criterion benches.

use c3t::CodeProfile;

/// Harmonic profile with the optimized radii for `n = 4`.
pub fn profile_n4() -> CodeProfile {
    CodeProfile::harmonic(vec![(2.0f64 / 3.0).sqrt(), (1.0f64 / 3.0).sqrt()]).expect("valid radii")
}

/// Harmonic profile for `n = 6` with the optimizer's radii.
pub fn profile_n6() -> CodeProfile {
    CodeProfile::harmonic_normalized(&[0.67681386, 0.5954203, 0.43289451]).expect("valid radii")
}
