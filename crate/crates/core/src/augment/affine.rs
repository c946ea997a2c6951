use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::uniform;
use crate::volume::Geometry;

/// Symmetric half-widths of the random affine draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffineRanges {
    /// Radians, per axis: `U(-r, r)`.
    pub rotation: f64,
    /// Per-axis scale `U(1 - s, 1 + s)`.
    pub scale: f64,
    /// Millimetres, per axis: `U(-t, t)`.
    pub translation: f64,
    /// Shear coefficients `U(-h, h)`.
    pub shear: f64,
}

impl Default for AffineRanges {
    fn default() -> Self {
        Self {
            rotation: 0.2,
            scale: 0.1,
            translation: 30.0,
            shear: 0.1,
        }
    }
}

impl AffineRanges {
    pub fn zero() -> Self {
        Self {
            rotation: 0.0,
            scale: 0.0,
            translation: 0.0,
            shear: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub rotation: [f64; 3],
    pub scale: [f64; 3],
    pub translation: [f64; 3],
    /// `(xy, xz, yz)` shear coefficients.
    pub shear: [f64; 3],
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            rotation: [0.0; 3],
            scale: [1.0; 3],
            translation: [0.0; 3],
            shear: [0.0; 3],
        }
    }

    /// `T · R · Sh · Sc` in world millimetres, acting about `center`.
    pub fn matrix(&self, center: [f64; 3]) -> Matrix4<f64> {
        let [rx, ry, rz] = self.rotation;
        let r = Rotation3::from_euler_angles(rx, ry, rz).into_inner();
        let sh = Matrix3::new(
            1.0,
            self.shear[0],
            self.shear[1],
            0.0,
            1.0,
            self.shear[2],
            0.0,
            0.0,
            1.0,
        );
        let sc = Matrix3::from_diagonal(&Vector3::from(self.scale));
        let lin = r * sh * sc;
        let c = Vector3::from(center);
        let t = Vector3::from(self.translation) + c - lin * c;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&lin);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }
}

/// Draws rotation, scale, translation and shear, in that order, and
/// returns them with the composed matrix about the grid centre.
pub fn draw_affine<R: Rng + ?Sized>(
    ranges: &AffineRanges,
    geom: &Geometry,
    rng: &mut R,
) -> (AffineParams, Matrix4<f64>) {
    let mut sym = |h: f64| uniform(rng, -h, h);
    let rotation = [(); 3].map(|_| sym(ranges.rotation));
    let scale = [(); 3].map(|_| 1.0 + sym(ranges.scale));
    let translation = [(); 3].map(|_| sym(ranges.translation));
    let shear = [(); 3].map(|_| sym(ranges.shear));
    let p = AffineParams {
        rotation,
        scale,
        translation,
        shear,
    };
    let m = p.matrix(geom.center_world());
    (p, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom() -> Geometry {
        Geometry::from_spacing([20, 30, 40], [0.5; 3]).unwrap()
    }

    #[test]
    fn zero_ranges_give_identity() {
        let (p, m) = draw_affine(&AffineRanges::zero(), &geom(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(p, AffineParams::identity());
        assert!((m - Matrix4::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn pure_translation_matrix() {
        let p = AffineParams {
            translation: [10.0, 0.0, 0.0],
            ..AffineParams::identity()
        };
        let m = p.matrix(geom().center_world());
        assert_eq!(m.fixed_view::<4, 1>(0, 3).into_owned(), nalgebra::Vector4::new(10.0, 0.0, 0.0, 1.0));
        assert_eq!(m.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::identity());
    }

    #[test]
    fn draws_stay_in_range() {
        let r = AffineRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let (p, m) = draw_affine(&r, &geom(), &mut rng);
            assert!(p.rotation.iter().all(|v| v.abs() <= 0.2));
            assert!(p.scale.iter().all(|v| (0.9..=1.1).contains(v)));
            assert!(p.translation.iter().all(|v| v.abs() <= 30.0));
            assert!(p.shear.iter().all(|v| v.abs() <= 0.1));
            assert!(m.fixed_view::<3, 3>(0, 0).determinant() > 0.0);
        }
    }

    #[test]
    fn center_is_fixed_without_translation() {
        let g = geom();
        let p = AffineParams {
            rotation: [0.1, -0.2, 0.15],
            scale: [1.05, 0.95, 1.1],
            shear: [0.05, 0.0, -0.05],
            translation: [0.0; 3],
        };
        let c = g.center_world();
        let m = p.matrix(c);
        let out = m * nalgebra::Vector4::new(c[0], c[1], c[2], 1.0);
        for i in 0..3 {
            assert!((out[i] - c[i]).abs() < 1e-9);
        }
    }
}
