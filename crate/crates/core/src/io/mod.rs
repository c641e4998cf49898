//! Readers and writers for external formats and the native bundle.

pub mod bundle;
pub mod openfoam;
pub mod vtk;
