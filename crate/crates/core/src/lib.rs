//! Kernel-weighted random geometric graphs, their Cheeger-type cut
//! functionals, and the continuum perimeter limits they converge to.

pub mod domain;
pub mod error;
pub mod geograph;
pub mod granulation;
pub mod harness;
pub mod kernel;
pub mod numeric;
pub mod nonlocal;
pub mod objective;
pub mod optimize;

pub use domain::{BoxUnion, ContinuumOptimum, CutSet, DomainDensity, GridDensity, OptimumSource, Shape};
pub use error::{Error, Result};
pub use geograph::{rescaled_estimator, CellIndex, GeoGraph, GraphStats, Partition, PointCloud, DEFAULT_TAIL_EPS};
pub use granulation::{
    box_counts, choose_gamma, chernoff_tail, classify_boxes, kernel_box_bounds, modified_cut, modified_volume, BoxColor,
    BoxColors, BoxGrid, BoxKernel, GammaChoice,
};
pub use harness::{
    run_convergence, weak_convergence_distance, ConvergenceRecord, ExperimentConfig, ObjectiveSpec, RRule,
};
pub use kernel::{Kernel, KernelInfo, Profile, Tabulated};
pub use objective::{BalanceKind, CheegerObjective, VolumeKind};
pub use nonlocal::{nonlocal_tv, recovery_curve, Estimate, IndicatorField, RecoveryRow};
pub use optimize::{
    exact_cheeger, exact_mbis, greyscale_removal, local_search_bisection, refine_pipeline, sweep_cut, GreyscaleMode,
    OptimizerResult, SweepMode,
};
