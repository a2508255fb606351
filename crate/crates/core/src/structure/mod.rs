//! Parametric buildings and their lumped-mass shear-building models.

mod building;
mod eigen;
mod mdof;

pub use building::{
    ranges, sample_building, sample_building_with, BuildingConfig, ConcreteGrade, Direction, StructureType,
    MAX_AXIAL_RATIO,
};
pub use eigen::tridiagonal_eigenvalues;
pub use mdof::{
    apply_scale, assemble_matrices, fundamental_periods, match_period, model_periods, reduce_to_mdof,
    stiffness_scale_factor, story_mass, story_stiffness, LumpedMassModel, ModalSummary, SpringLaw, SymTridiag,
    CONCRETE_DENSITY, DEFAULT_DAMPING_RATIO, LIVE_LOAD_PA,
};
