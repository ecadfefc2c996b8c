//! Terrain tiles and foot contact.

mod contact;
mod heightfield;

pub use contact::{contact_forces, detect_impacts, ContactParams, ContactState, FootContact, FrictionRegime, ImpactEvent};
pub use heightfield::{
    generate_terrain, HeightField, TerrainKind, BOX_SIZE, GRID_RESOLUTION, MAX_BOX_HEIGHT, MAX_NOISE_AMPLITUDE,
    MAX_SLOPE_DEG, TILE_SIZE,
};
