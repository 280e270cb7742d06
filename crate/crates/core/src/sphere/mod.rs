//! Round-sphere primitives.

mod grid;
mod green;
mod harmonics;
mod io;
mod point;
mod quadrature;

pub use grid::{build_grid, ScalarField, SpectralCoeffs, SphereGrid};
pub use green::{green, green_unchecked, neg_four_pi_green, GREEN_CONSTANT};
pub use harmonics::{lm_index, normalized_legendre, real_harmonics_at, real_ylm};
pub use io::{read_field_csv, write_field_csv};
pub use point::{
    geodesic_distance, inverse_stereographic, stereographic, stereographic_conformal_factor,
    SpherePoint,
};
pub use quadrature::gauss_legendre;
