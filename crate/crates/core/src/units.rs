//! Exact SI constants.

pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
pub const PLANCK: f64 = 6.62607015e-34;
/// Cooper-pair charge `2e`.
pub const COOPER_CHARGE: f64 = 2.0 * ELEMENTARY_CHARGE;
/// Superconducting flux quantum `h / 2e`.
pub const FLUX_QUANTUM: f64 = PLANCK / COOPER_CHARGE;
