//! Numerical toolkit for relativistic and multi-speed kinetic flows driven by
//! rough, wave-propagated forces.

pub mod cone;
pub mod field;
pub mod fit;
pub mod flow1d;
pub mod flow3d;
pub mod harness;
pub mod maximal;
pub mod models;
pub mod quad;
pub mod rng;
pub mod sphere;
pub mod wave;

pub use nalgebra::{Vector3, Vector6};
pub use sphere::{QuadratureError, SphereRule};
