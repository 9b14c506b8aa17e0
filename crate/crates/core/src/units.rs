//! Pinned physical constants. Energies are in cm^-1, fields in tesla,
//! temperatures in kelvin throughout the crate.

/// Bohr magneton in cm^-1 / T.
pub const MU_B: f64 = 0.4668645;

/// Boltzmann constant in cm^-1 / K.
pub const K_B: f64 = 0.6950348;

/// Bohr magneton in erg / G (Gaussian units).
pub const MU_B_ERG_PER_GAUSS: f64 = 9.2740100783e-21;

/// `h c` in erg cm, converts erg to cm^-1.
pub const HC_ERG_CM: f64 = 1.98644586e-16;

/// Speed of light in cm / s.
pub const SPEED_OF_LIGHT_CM_PER_S: f64 = 2.99792458e10;

/// Reduced Planck constant expressed in cm^-1 s, i.e. `1 / (2 pi c)`.
pub const HBAR_CM_S: f64 = 1.0 / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_S);

pub const AVOGADRO: f64 = 6.02214076e23;

pub const ANGSTROM_CM: f64 = 1e-8;

/// Molar susceptibility in cm^3 mol^-1 per (mu_B per molecule / tesla):
/// `N_A * mu_B[erg/G] / 1e4 G`.
pub const MOLAR_CHI_PER_MUB_PER_TESLA: f64 = AVOGADRO * MU_B_ERG_PER_GAUSS / 1.0e4;

/// Curie-law `chi T` of a free multiplet in cm^3 K mol^-1.
pub fn curie_chi_t(g: f64, j: f64) -> f64 {
    MOLAR_CHI_PER_MUB_PER_TESLA * MU_B * g * g * j * (j + 1.0) / (3.0 * K_B)
}
