pub mod clifford;
pub mod error;
pub mod geometry;
pub mod fields;
pub mod wiener;
pub mod bundles;
pub mod phases;
pub mod spectral;
pub mod loopforms;
pub mod qfunctional;
pub mod integrator;
pub mod bismut;
pub mod localization;
pub mod wiener_checks;
pub mod suites;
