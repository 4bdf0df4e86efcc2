//! Design points, tabulated probabilities and the Nadaraya-Watson smoother
//! that serves them.

mod design;
mod nw;
mod separable;
mod table;

pub use design::{
    select_design_points_cover, select_design_points_grid, verify_cover, AxisSpec, DesignPointSet,
    DesignSource,
};
pub use nw::NwSmoother;
pub use separable::{grid_values_and_gradients, GridValues};
pub use table::{
    build_ssm_table, nw_evaluate, nw_gradient, SsmTable, TableMetadata, TABLE_FORMAT, TABLE_VERSION,
};
