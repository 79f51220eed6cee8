//! Random-projection classifiers with closed-form readouts, plus the dense
//! linear algebra, data loaders, SGD baseline and analysis tools around them.

pub mod analysis;
pub mod baseline;
pub mod data;
pub mod elm;
pub mod linalg;
pub mod persist;
pub mod rng;

pub use data::{Dataset, DatasetKind, Split};
pub use elm::{GalacticLayer, VoodooModel};
pub use linalg::{Matrix, SolverKind};
