//! Lattice Green's function machinery: Fourier inversion, exact transition
//! fields, the local CLT density, and the cached radial table.

pub mod exact;
pub mod fourier;
pub mod lclt;
pub mod table;

pub use exact::{green_lower_index, transition_probability_exact, ExactField};
pub use fourier::{characteristic_function, FourierEngine, GreenError, GreenValue};
pub use lclt::{lclt_density, lclt_sup_errors};
pub use table::{build_table, load_or_build, GreenTable};
