use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use super::svf::DeformationField;
use crate::error::Result;
use crate::volume::sample::{nearest_index, trilinear};
use crate::volume::{Boundary, Geometry, InterpKind, LabelMap, Volume3D};

/// Containers that can be backward-warped.
pub trait Warp: Sized {
    fn warp_with(&self, map: &VoxelWarp<'_>, interp: InterpKind) -> Self;
    fn grid(&self) -> &Geometry;
}

/// Output voxel index -> input voxel coordinate.
pub struct VoxelWarp<'a> {
    /// `A⁻¹ · M`
    to_voxel: Matrix4<f64>,
    /// Voxel-to-world of the output grid.
    affine: Matrix4<f64>,
    field: Option<(&'a DeformationField, super::svf::SourceToGrid)>,
}

impl VoxelWarp<'_> {
    #[inline]
    fn source_coord(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        let p = [x as f64, y as f64, z as f64];
        let mut w = self.affine * Vector4::new(p[0], p[1], p[2], 1.0);
        if let Some((field, map)) = &self.field {
            let u = field.at_source_voxel(map, p);
            w.x += u[0];
            w.y += u[1];
            w.z += u[2];
        }
        let q = self.to_voxel * w;
        [q.x, q.y, q.z]
    }
}

fn fill<T: Copy + Default + Send + Sync>(
    dims: [usize; 3],
    map: &VoxelWarp<'_>,
    sample: impl Fn([f64; 3]) -> T + Sync,
) -> Vec<T> {
    let [nx, ny, nz] = dims;
    let mut out = vec![T::default(); nx * ny * nz];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            for x in 0..nx {
                slab[x + nx * y] = sample(map.source_coord(x, y, z));
            }
        }
    });
    out
}

impl Warp for Volume3D {
    fn warp_with(&self, map: &VoxelWarp<'_>, interp: InterpKind) -> Self {
        let dims = self.dims();
        let src = self.data();
        let data = fill(dims, map, |q| match interp {
            InterpKind::Trilinear => trilinear(src, dims, q, Boundary::Zero),
            InterpKind::NearestNeighbor => {
                nearest_index(dims, q, Boundary::Zero).map_or(0.0, |i| src[i])
            }
        });
        self.with_data(data).expect("same grid")
    }

    fn grid(&self) -> &Geometry {
        self.geometry()
    }
}

impl Warp for LabelMap {
    /// Always nearest neighbour, whatever `interp` says.
    fn warp_with(&self, map: &VoxelWarp<'_>, _interp: InterpKind) -> Self {
        let dims = self.dims();
        let src = self.data();
        let data = fill(dims, map, |q| {
            nearest_index(dims, q, Boundary::Zero).map_or(0, |i| src[i])
        });
        self.with_data(data, self.scheme()).expect("codes copied from a valid map")
    }

    fn grid(&self) -> &Geometry {
        self.geometry()
    }
}

/// Backward warp: output voxel `p` samples the input at world location
/// `M · (A p + u(p))`, where `A` is the grid affine, `M` the world-space
/// `affine` and `u` the displacement field. A translation `t` in `M`
/// therefore moves content by `-t`. Samples outside the input are 0.
pub fn apply_transform<T: Warp>(
    v: &T,
    affine: &Matrix4<f64>,
    field: Option<&DeformationField>,
    interp: InterpKind,
) -> Result<T> {
    let geom = v.grid();
    if let Some(f) = field {
        geom.ensure_matches(f.source())?;
    }
    let map = VoxelWarp {
        to_voxel: geom.world_to_voxel_matrix() * affine,
        affine: *geom.affine(),
        field: field.map(|f| (f, f.source_to_grid())),
    };
    Ok(v.warp_with(&map, interp))
}
