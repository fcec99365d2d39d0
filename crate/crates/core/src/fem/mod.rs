//! Reference elements, quadrature, degree-of-freedom management,
//! constraints and intergrid transfer.

pub mod constraints;
pub mod quadrature;
pub mod shape;
pub mod space;
pub mod transfer;

pub use constraints::{build_constraints, ConstraintSet};
pub use quadrature::{gauss_1d, quadrature, Quadrature};
pub use shape::{shape_eval, ElementKind, Shape};
pub use space::{ElementGeometry, FeSpace};
pub use transfer::transfer;
