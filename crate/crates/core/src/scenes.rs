//! Built-in demo scenes.

use nalgebra::Point2;
use serde::Serialize;

use crate::descriptor::{affinity_field, AffinityField, IntegrationPolicy, KernelSpec};
use crate::energy::{Configuration, PartAsset};
use crate::error::Result;
use crate::grid::SampleGrid;
use crate::shapes;
use crate::solids::{Polygon2, Solid};

#[derive(Debug, Clone)]
pub struct Scene {
    pub id: &'static str,
    pub description: &'static str,
    pub fixed: Solid,
    pub moving: Solid,
    /// Nominal assembled configuration of the moving part.
    pub snap: Configuration,
    /// Initial, well separated configuration.
    pub start: Configuration,
    /// Grids cover `[-half_extent, half_extent)` on every axis.
    pub half_extent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneInfo {
    pub id: &'static str,
    pub description: &'static str,
    pub dimension: usize,
}

pub const PEG2D: &str = "peg2d";

/// Block with a 1.0 x 1.0 slot open upward; peg 0.96 x 1.0 centered on its model origin,
/// so the seated peg sits flush with the block top.
pub fn peg2d() -> Scene {
    let block = Polygon2::new(vec![vec![
        Point2::new(-2.0, -1.5),
        Point2::new(2.0, -1.5),
        Point2::new(2.0, 0.5),
        Point2::new(0.5, 0.5),
        Point2::new(0.5, -0.5),
        Point2::new(-0.5, -0.5),
        Point2::new(-0.5, 0.5),
        Point2::new(-2.0, 0.5),
    ]])
    .expect("block outline is simple");
    let peg = shapes::rectangle(Point2::new(-0.48, -0.5), Point2::new(0.48, 0.5));
    Scene {
        id: PEG2D,
        description: "2D peg-in-hole: rectangular peg above a slotted block",
        fixed: Solid::from_polygon(block),
        moving: Solid::from_polygon(peg),
        snap: Configuration::planar(0.0, 0.0, 0.0),
        start: Configuration::planar(0.0, 0.0, 2.0),
        half_extent: 4.0,
    }
}

pub fn list() -> Vec<SceneInfo> {
    let s = peg2d();
    vec![SceneInfo {
        id: s.id,
        description: s.description,
        dimension: s.fixed.dimension(),
    }]
}

pub fn builtin(id: &str) -> Option<Scene> {
    match id {
        PEG2D => Some(peg2d()),
        _ => None,
    }
}

/// Descriptor fields and spectra of both parts of a scene.
#[derive(Debug, Clone)]
pub struct SceneAssets {
    pub fixed: PartAsset,
    pub moving: PartAsset,
    pub fixed_field: AffinityField,
    pub moving_field: AffinityField,
}

impl Scene {
    pub fn dimension(&self) -> usize {
        self.fixed.dimension()
    }

    /// Centered grid with `n` nodes per axis.
    pub fn grid(&self, n: usize) -> Result<SampleGrid> {
        Ok(SampleGrid::centered(self.dimension(), n, 2.0 * self.half_extent / n as f64)?)
    }

    pub fn assets(&self, n: usize, spec: &KernelSpec, policy: &IntegrationPolicy) -> Result<SceneAssets> {
        let grid = self.grid(n)?;
        let fixed_field = affinity_field(&self.fixed, &grid, spec, policy)?;
        let moving_field = affinity_field(&self.moving, &grid, spec, policy)?;
        let fixed = PartAsset::from_field("fixed", &fixed_field.field, self.fixed.bounding_box(), false)?;
        let moving = PartAsset::from_field("moving", &moving_field.field, self.moving.bounding_box(), true)?;
        Ok(SceneAssets {
            fixed,
            moving,
            fixed_field,
            moving_field,
        })
    }
}
