//! Gradient layouts and the square-grid adjustment used by the denoiser.

mod grid;
mod layout;

pub use grid::{
    adjust, adjust_with, denormalize, grid_side, normalize, restore, AdjustedGrid, GridRule,
    SCALE_FLOOR,
};
pub use layout::{GradientRole, GradientVector, LayerEntry, LayerLayout};
