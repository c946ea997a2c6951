//! Geometry-aware scalar volumes and label maps.
//!
//! Voxel data is stored x-fastest: `index = x + nx * (y + ny * z)`. The
//! affine maps voxel indices to world millimetres and carries orientation;
//! data is never reoriented.

mod nifti;
pub(crate) mod resample;
pub(crate) mod sample;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nifti::{
    encode_nifti, read_labels, read_nifti, read_volume, write_nifti, NiftiImage, NiftiRef,
};
pub use resample::{crop_or_pad, resample, resample_labels_onto, resample_onto, Boundary};

/// Interpolation used when sampling a grid at fractional voxel positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterpKind {
    NearestNeighbor,
    Trilinear,
}

/// Voxel grid placement: dimensions, voxel size and voxel-to-world affine.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("zero dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        let lin: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into_owned();
        let det = lin.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidVolume("singular affine".into()));
        }
        Ok(Self {
            dims,
            spacing,
            affine,
        })
    }

    /// Axis-aligned geometry with the origin at voxel (0, 0, 0).
    pub fn from_spacing(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let affine = Matrix4::from_diagonal(&Vector4::new(spacing[0], spacing[1], spacing[2], 1.0));
        Self::new(dims, spacing, affine)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let yz = idx / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    pub fn voxel_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let w = self.affine * Vector4::new(p[0], p[1], p[2], 1.0);
        [w.x, w.y, w.z]
    }

    pub fn world_to_voxel_matrix(&self) -> Matrix4<f64> {
        self.affine
            .try_inverse()
            .expect("affine invertibility is a construction invariant")
    }

    /// World position of the grid centre.
    pub fn center_world(&self) -> [f64; 3] {
        let c = self.dims.map(|d| (d as f64 - 1.0) / 2.0);
        self.voxel_to_world(c)
    }

    /// Geometry equality up to float32 header rounding.
    pub fn matches(&self, other: &Geometry) -> bool {
        const TOL: f64 = 1e-5;
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing)
                .all(|(a, b)| (a - b).abs() <= TOL * a.abs().max(1.0))
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(a, b)| (a - b).abs() <= TOL * a.abs().max(1.0))
    }

    pub fn ensure_matches(&self, other: &Geometry) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "dims {:?} spacing {:?} vs dims {:?} spacing {:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }

    /// A grid covering the same field of view with `dims` voxels, each
    /// `ratio` source voxels wide. Field-of-view corners stay aligned:
    /// new voxel `j` sits at source coordinate `(j + 0.5) * ratio - 0.5`.
    pub fn regrid(&self, dims: [usize; 3], ratio: [f64; 3]) -> Result<Geometry> {
        let mut m = Matrix4::identity();
        for i in 0..3 {
            m[(i, i)] = ratio[i];
            m[(i, 3)] = 0.5 * ratio[i] - 0.5;
        }
        let spacing = [0, 1, 2].map(|i| self.spacing[i] * ratio[i]);
        Geometry::new(dims, spacing, self.affine * m)
    }

    /// Grid of `dims` voxels covering exactly this field of view.
    pub fn regrid_to_dims(&self, dims: [usize; 3]) -> Result<Geometry> {
        let ratio = [0, 1, 2].map(|i| self.dims[i] as f64 / dims[i] as f64);
        self.regrid(dims, ratio)
    }

    /// Linear part of the affine.
    pub(crate) fn linear(&self) -> Matrix3<f64> {
        self.affine.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub(crate) fn linear_inverse(&self) -> Matrix3<f64> {
        self.linear()
            .try_inverse()
            .expect("affine invertibility is a construction invariant")
    }

    #[allow(dead_code)]
    pub(crate) fn world_vec(&self, p: [f64; 3]) -> Vector3<f64> {
        let w = self.voxel_to_world(p);
        Vector3::new(w[0], w[1], w[2])
    }
}

/// Scalar intensity volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    geom: Geometry,
    data: Vec<f32>,
}

impl Volume3D {
    pub fn new(geom: Geometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geom.dims
            )));
        }
        Ok(Self { geom, data })
    }

    pub fn filled(geom: Geometry, value: f32) -> Self {
        let data = vec![value; geom.len()];
        Self { geom, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geom.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.geom.index(x, y, z)]
    }

    /// Same geometry, new data.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.geom.clone(), data)
    }

    /// Minimum and maximum over finite voxels, `None` if there are none.
    pub fn min_max(&self) -> Option<(f32, f32)> {
        self.data
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

/// Integer code conventions a label map can follow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelScheme {
    /// Seven tissue classes plus background: 1 CSF, 2 GM, 3 WM, 4 LV,
    /// 5 CBM, 6 SGM, 7 BSM.
    Feta7,
    /// Draw-EM nine-class neonatal/fetal scheme.
    DrawEm9,
    /// Intensity meta-classes: 1 WM-like, 2 GM-like, 3 CSF-like, 4 non-brain.
    Meta4,
    /// Dense subclass ids produced by intensity clustering.
    Subclass,
}

impl LabelScheme {
    pub fn name(&self) -> &'static str {
        match self {
            LabelScheme::Feta7 => "FETA7",
            LabelScheme::DrawEm9 => "DRAWEM9",
            LabelScheme::Meta4 => "META4",
            LabelScheme::Subclass => "SUBCLASS",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim().to_ascii_uppercase().as_str() {
            "FETA7" => Some(LabelScheme::Feta7),
            "DRAWEM9" => Some(LabelScheme::DrawEm9),
            "META4" => Some(LabelScheme::Meta4),
            "SUBCLASS" => Some(LabelScheme::Subclass),
            _ => None,
        }
    }

    /// Largest admissible code, `None` when unbounded.
    pub fn max_code(&self) -> Option<u16> {
        match self {
            LabelScheme::Feta7 => Some(7),
            LabelScheme::DrawEm9 => Some(9),
            LabelScheme::Meta4 => Some(4),
            LabelScheme::Subclass => None,
        }
    }
}

/// Integer label map.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    geom: Geometry,
    data: Vec<u16>,
    scheme: LabelScheme,
}

impl LabelMap {
    pub fn new(geom: Geometry, data: Vec<u16>, scheme: LabelScheme) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::InvalidVolume(format!(
                "label data length {} does not match dims {:?}",
                data.len(),
                geom.dims
            )));
        }
        if let Some(max) = scheme.max_code() {
            if let Some(&bad) = data.iter().find(|&&v| v > max) {
                return Err(Error::UnknownLabel {
                    value: bad as u32,
                    scheme: scheme.name(),
                });
            }
        }
        Ok(Self { geom, data, scheme })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geom.spacing
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u16> {
        self.data
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u16 {
        self.data[self.geom.index(x, y, z)]
    }

    /// Same geometry, new codes under `scheme`.
    pub fn with_data(&self, data: Vec<u16>, scheme: LabelScheme) -> Result<Self> {
        Self::new(self.geom.clone(), data, scheme)
    }

    /// Sorted distinct codes.
    pub fn unique_values(&self) -> Vec<u16> {
        let mut seen = vec![false; u16::MAX as usize + 1];
        for &v in &self.data {
            seen[v as usize] = true;
        }
        seen.iter()
            .enumerate()
            .filter_map(|(v, &s)| s.then_some(v as u16))
            .collect()
    }

    pub fn count(&self, label: u16) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }
}
