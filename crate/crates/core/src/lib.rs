//! Secondary voltage control for islanded microgrids by switching between a
//! linear and a neural-augmented adaptive controller, identified online from
//! input/output data only.

pub mod control;
pub mod harness;
pub mod identify;
pub mod plant;
pub mod polyalg;
