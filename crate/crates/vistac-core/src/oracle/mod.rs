//! Synthetic ground truth standing in for the robot, cameras, foundation
//! models, and the gel sensor: raycast views with masks and depth/normal
//! priors, simulated tactile presses, and ground-truth point clouds.

pub mod mesh;
mod render;
mod sample;
mod touch_sim;

pub use mesh::{box_mesh, bunny, bunny_part_label, cylinder, icosphere, Bvh, TriMesh};
pub use render::{camera_rig, render_oracle, OracleRender};
pub use sample::{gt_point_cloud, labeled_cloud};
pub use touch_sim::{simulate_touch, TouchSim};

use crate::math::Vec3;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Appearance class of the object; geometry is unaffected (the point of
/// hull initialization is exactly that it only sees silhouettes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Material {
    Lambertian,
    Dark,
    MirrorLike,
    /// Renders the background straight through the object while the mask
    /// and depth stay geometric.
    TransparentProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Sphere,
    Box,
    Cylinder,
    Bunny,
}

impl Shape {
    pub fn build(self, center: Vec3, size: f64) -> TriMesh {
        match self {
            Shape::Sphere => icosphere(center, size, 4),
            Shape::Box => box_mesh(center, Vec3::new(size, size * 0.8, size * 1.2)),
            Shape::Cylinder => cylinder(center, size * 0.8, size * 1.2, 48),
            Shape::Bunny => bunny(center, size),
        }
    }

    /// Class hint fed to the common-sense ranker.
    pub fn class_hint(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Box => "box",
            Shape::Cylinder => "cylinder",
            Shape::Bunny => "bunny",
        }
    }

    /// Part name of a surface point, mirroring what a part-segmentation
    /// model would produce for this shape.
    pub fn part_label(self, center: Vec3, size: f64, p: Vec3) -> String {
        match self {
            Shape::Sphere => "body".into(),
            Shape::Box => {
                let d = p - center;
                let half = Vec3::new(size, size * 0.8, size * 1.2);
                let rel = Vec3::new(
                    (d.x / half.x).abs(),
                    (d.y / half.y).abs(),
                    (d.z / half.z).abs(),
                );
                let mut near_face = 0;
                for a in 0..3 {
                    if rel[a] > 0.85 {
                        near_face += 1;
                    }
                }
                if near_face >= 2 {
                    "edges".into()
                } else {
                    "faces".into()
                }
            }
            Shape::Cylinder => {
                let d = p - center;
                let radial = (d.x * d.x + d.y * d.y).sqrt() / (size * 0.8);
                let axial = d.z.abs() / (size * 1.2);
                if radial > 0.9 && axial > 0.9 {
                    "rim".into()
                } else if axial > 0.95 {
                    "cap".into()
                } else {
                    "side".into()
                }
            }
            Shape::Bunny => bunny_part_label(center, size, p).into(),
        }
    }
}

/// Complete synthetic scene: the object over background geometry (ground
/// plane and two walls) under one directional light.
pub struct OracleScene {
    pub shape: Shape,
    pub material: Material,
    pub object_center: Vec3,
    pub object_size: f64,
    pub object: TriMesh,
    pub object_bvh: Bvh,
    pub background: TriMesh,
    pub background_bvh: Bvh,
    /// Unit light propagation direction.
    pub light_dir: Vec3,
}

impl OracleScene {
    pub fn new(
        shape: Shape,
        material: Material,
        object_center: Vec3,
        object_size: f64,
    ) -> Result<Self> {
        if object_size <= 0.0 {
            return Err(Error::Config("object size must be positive".into()));
        }
        let object = shape.build(object_center, object_size);
        debug_assert!(object.is_watertight());
        let background = background_geometry();
        let object_bvh = Bvh::build(&object);
        let background_bvh = Bvh::build(&background);
        Ok(Self {
            shape,
            material,
            object_center,
            object_size,
            object,
            object_bvh,
            background,
            background_bvh,
            light_dir: Vec3::new(-0.3, 0.45, -0.84).normalize(),
        })
    }

    /// Desk defaults: a 5 cm object 12 cm above the ground plane.
    pub fn desk(shape: Shape, material: Material) -> Result<Self> {
        Self::new(shape, material, Vec3::new(0.0, 0.0, 0.12), 0.05)
    }
}

/// Ground plane plus two walls, desk scale (z up, ground at z = 0).
fn background_geometry() -> TriMesh {
    let mut vertices = Vec::new();
    let mut tris: Vec<[u32; 3]> = Vec::new();
    let mut quad = |vertices: &mut Vec<Vec3>, a: Vec3, b: Vec3, c: Vec3, d: Vec3| {
        let base = vertices.len() as u32;
        vertices.extend_from_slice(&[a, b, c, d]);
        tris.push([base, base + 1, base + 2]);
        tris.push([base, base + 2, base + 3]);
    };
    let s = 2.0;
    // Ground, normal +z.
    quad(
        &mut vertices,
        Vec3::new(-s, -s, 0.0),
        Vec3::new(s, -s, 0.0),
        Vec3::new(s, s, 0.0),
        Vec3::new(-s, s, 0.0),
    );
    // Wall at y = +1.2, normal -y.
    quad(
        &mut vertices,
        Vec3::new(-s, 1.2, 0.0),
        Vec3::new(-s, 1.2, 1.5),
        Vec3::new(s, 1.2, 1.5),
        Vec3::new(s, 1.2, 0.0),
    );
    // Wall at x = -1.2, normal +x.
    quad(
        &mut vertices,
        Vec3::new(-1.2, -s, 0.0),
        Vec3::new(-1.2, s, 0.0),
        Vec3::new(-1.2, s, 1.5),
        Vec3::new(-1.2, -s, 1.5),
    );
    TriMesh { vertices, tris }
}
