pub mod anelastic;
pub mod checkpoint;
pub mod diagnostics;
pub mod grid;
pub mod harness;
pub mod helmholtz;
pub mod hydrostatics;
pub mod operators;
pub mod params;
pub mod primitive;
pub mod spectral;
pub mod state;
