//! Reconstruction of the refractive index of a penetrable scatterer from
//! Cauchy data via Steklov eigenvalues and the reciprocity gap.

pub mod auxiliary;
pub mod bayes;
pub mod error;
pub mod fem;
pub mod forward;
pub mod geometry;
pub mod mesh;
pub mod pipeline;
pub mod rg;
pub mod sparse;
pub mod special;
pub mod steklov;
