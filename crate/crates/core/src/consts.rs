//! Physical constants (SI, CODATA 2018).

/// Elementary charge [C].
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity [F/m].
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Electron mass [kg].
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// Boltzmann constant [J/K].
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Reference background density used to scale generated charge fields [m⁻³].
pub const REFERENCE_DENSITY: f64 = 1.0e16;

/// `e·n₀/ε₀` for the reference density [V/m²].
pub fn reference_charge_scale() -> f64 {
    ELEMENTARY_CHARGE * REFERENCE_DENSITY / EPSILON_0
}
