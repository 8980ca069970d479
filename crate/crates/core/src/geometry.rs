//! Pinhole cameras, per-pixel rays, and Plücker ray embeddings.
//!
//! Conventions (fixed here because they are otherwise ambiguous):
//! world frame is right-handed with +y up; the camera looks down +z in its
//! own frame with +x right and +y down in the image; pixel centers sit at
//! (row + 0.5, col + 0.5).

use nalgebra::{Matrix3, Matrix4, Vector3};
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("camera rotation is not orthonormal with det +1 (residual {0:.3e})")]
    NotRigid(f64),
    #[error("focal lengths must be strictly positive, got fx={0}, fy={1}")]
    BadFocal(f64, f64),
    #[error("principal point ({0}, {1}) outside [0,{2}]x[0,{3}]")]
    BadPrincipalPoint(f64, f64, f64, f64),
    #[error("pixel ({row}, {col}) outside resolution {h}x{w}")]
    PixelOutOfBounds {
        row: usize,
        col: usize,
        h: usize,
        w: usize,
    },
    #[error("camera io: {0}")]
    Io(#[from] std::io::Error),
    #[error("camera file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Pinhole camera: intrinsics, world-to-camera rigid transform, resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Matrix3<f64>,
    pub extrinsics: Matrix4<f64>,
    pub height: usize,
    pub width: usize,
}

/// H x W x 6 map of (unit direction, moment o x d) per pixel, world frame.
#[derive(Debug, Clone)]
pub struct PluckerMap {
    pub values: Array3<f64>,
}

impl Camera {
    pub fn new(
        intrinsics: Matrix3<f64>,
        extrinsics: Matrix4<f64>,
        height: usize,
        width: usize,
    ) -> Result<Self, CameraError> {
        let cam = Camera {
            intrinsics,
            extrinsics,
            height,
            width,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let r = self.rotation();
        let residual = (r * r.transpose() - Matrix3::identity()).norm()
            + (r.determinant() - 1.0).abs();
        if residual > 1e-6 {
            return Err(CameraError::NotRigid(residual));
        }
        let (fx, fy) = (self.intrinsics[(0, 0)], self.intrinsics[(1, 1)]);
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CameraError::BadFocal(fx, fy));
        }
        let (cx, cy) = (self.intrinsics[(0, 2)], self.intrinsics[(1, 2)]);
        if cx < 0.0 || cx > self.width as f64 || cy < 0.0 || cy > self.height as f64 {
            return Err(CameraError::BadPrincipalPoint(
                cx,
                cy,
                self.width as f64,
                self.height as f64,
            ));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.extrinsics.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.extrinsics.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates: -R^T t.
    pub fn center(&self) -> Vector3<f64> {
        -self.rotation().transpose() * self.translation()
    }

    /// World point -> camera frame.
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// Camera-frame point -> pixel (col_x, row_y) via the intrinsics.
    /// Caller checks z > 0.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> (f64, f64) {
        let fx = self.intrinsics[(0, 0)];
        let fy = self.intrinsics[(1, 1)];
        let cx = self.intrinsics[(0, 2)];
        let cy = self.intrinsics[(1, 2)];
        (fx * p.x / p.z + cx, fy * p.y / p.z + cy)
    }

    /// Ray through the center of pixel (row, col): world-space origin
    /// (the camera center) and unit direction.
    pub fn pixel_ray(
        &self,
        row: usize,
        col: usize,
    ) -> Result<(Vector3<f64>, Vector3<f64>), CameraError> {
        if row >= self.height || col >= self.width {
            return Err(CameraError::PixelOutOfBounds {
                row,
                col,
                h: self.height,
                w: self.width,
            });
        }
        Ok(self.pixel_ray_unchecked(row as f64 + 0.5, col as f64 + 0.5))
    }

    /// Ray through an arbitrary sub-pixel position (row_y, col_x) in pixels.
    pub fn pixel_ray_unchecked(&self, y: f64, x: f64) -> (Vector3<f64>, Vector3<f64>) {
        let fx = self.intrinsics[(0, 0)];
        let fy = self.intrinsics[(1, 1)];
        let cx = self.intrinsics[(0, 2)];
        let cy = self.intrinsics[(1, 2)];
        let dir_cam = Vector3::new((x - cx) / fx, (y - cy) / fy, 1.0);
        let dir_world = (self.rotation().transpose() * dir_cam).normalize();
        (self.center(), dir_world)
    }

    /// Per-pixel Plücker embedding (d, o x d). Because d x d = 0, sliding the
    /// origin along the ray leaves the moment unchanged.
    pub fn plucker_embedding(&self) -> PluckerMap {
        let mut values = Array3::<f64>::zeros((self.height, self.width, 6));
        let center = self.center();
        let rt = self.rotation().transpose();
        let fx = self.intrinsics[(0, 0)];
        let fy = self.intrinsics[(1, 1)];
        let cx = self.intrinsics[(0, 2)];
        let cy = self.intrinsics[(1, 2)];
        for row in 0..self.height {
            for col in 0..self.width {
                let x = col as f64 + 0.5;
                let y = row as f64 + 0.5;
                let dir_cam = Vector3::new((x - cx) / fx, (y - cy) / fy, 1.0);
                let d = (rt * dir_cam).normalize();
                let m = center.cross(&d);
                for k in 0..3 {
                    values[(row, col, k)] = d[k];
                    values[(row, col, 3 + k)] = m[k];
                }
            }
        }
        PluckerMap { values }
    }

    pub fn save_json(&self, path: &Path) -> Result<(), CameraError> {
        let record = CameraRecord::from(self);
        let text = serde_json::to_string(&record)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, CameraError> {
        let text = std::fs::read_to_string(path)?;
        let record: CameraRecord = serde_json::from_str(&text)?;
        record.try_into()
    }
}

/// On-disk camera schema: row-major K and w2c plus resolution.
#[derive(Debug, Serialize, Deserialize)]
pub struct CameraRecord {
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub w2c: Vec<f64>,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
}

impl From<&Camera> for CameraRecord {
    fn from(cam: &Camera) -> Self {
        let mut k = Vec::with_capacity(9);
        for r in 0..3 {
            for c in 0..3 {
                k.push(cam.intrinsics[(r, c)]);
            }
        }
        let mut w2c = Vec::with_capacity(16);
        for r in 0..4 {
            for c in 0..4 {
                w2c.push(cam.extrinsics[(r, c)]);
            }
        }
        CameraRecord {
            k,
            w2c,
            h: cam.height,
            w: cam.width,
        }
    }
}

impl TryFrom<CameraRecord> for Camera {
    type Error = CameraError;

    fn try_from(rec: CameraRecord) -> Result<Self, CameraError> {
        if rec.k.len() != 9 || rec.w2c.len() != 16 {
            return Err(CameraError::Parse(serde_json::Error::io(
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!(
                        "expected 9 K and 16 w2c entries, got {} and {}",
                        rec.k.len(),
                        rec.w2c.len()
                    ),
                ),
            )));
        }
        let intrinsics = Matrix3::from_row_slice(&rec.k);
        let extrinsics = Matrix4::from_row_slice(&rec.w2c);
        Camera::new(intrinsics, extrinsics, rec.h, rec.w)
    }
}

/// Camera on a sphere of `radius` around the origin, looking at the origin
/// with +y as world up. `azimuth` and `altitude` in radians.
pub fn look_at_camera(
    azimuth: f64,
    altitude: f64,
    radius: f64,
    focal_px: f64,
    height: usize,
    width: usize,
) -> Camera {
    let eye = Vector3::new(
        radius * altitude.cos() * azimuth.cos(),
        radius * altitude.sin(),
        radius * altitude.cos() * azimuth.sin(),
    );
    let forward = (-eye).normalize();
    let up = Vector3::new(0.0, 1.0, 0.0);
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    let mut extrinsics = Matrix4::identity();
    for c in 0..3 {
        extrinsics[(0, c)] = right[c];
        extrinsics[(1, c)] = down[c];
        extrinsics[(2, c)] = forward[c];
    }
    let t = -Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]) * eye;
    extrinsics[(0, 3)] = t.x;
    extrinsics[(1, 3)] = t.y;
    extrinsics[(2, 3)] = t.z;
    let intrinsics = Matrix3::new(
        focal_px,
        0.0,
        width as f64 / 2.0,
        0.0,
        focal_px,
        height as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    );
    Camera {
        intrinsics,
        extrinsics,
        height,
        width,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_camera(h: usize, w: usize, f: f64) -> Camera {
        let k = Matrix3::new(f, 0.0, w as f64 / 2.0, 0.0, f, h as f64 / 2.0, 0.0, 0.0, 1.0);
        Camera::new(k, Matrix4::identity(), h, w).unwrap()
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> Camera {
        let az = rng.gen_range(0.0..std::f64::consts::TAU);
        let alt = rng.gen_range(-0.7..0.7);
        let r = rng.gen_range(2.0..3.0);
        look_at_camera(az, alt, r, 40.0, 16, 16)
    }

    #[test]
    fn center_pixel_looks_down_plus_z() {
        // 17x17 so the principal point is itself a pixel center.
        let cam = identity_camera(17, 17, 30.0);
        let (o, d) = cam.pixel_ray(8, 8).unwrap();
        assert_relative_eq!(o.norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn translation_moves_origin_only() {
        let mut ext = Matrix4::identity();
        // w2c translation for a camera centered at (1,0,0) is t = -R c = (-1,0,0).
        ext[(0, 3)] = -1.0;
        let k = Matrix3::new(30.0, 0.0, 8.5, 0.0, 30.0, 8.5, 0.0, 0.0, 1.0);
        let cam = Camera::new(k, ext, 17, 17).unwrap();
        let (o, d) = cam.pixel_ray(8, 8).unwrap();
        assert_relative_eq!(o.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(o.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(o.z, 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn off_center_pixel_matches_back_projection_oracle() {
        // Oracle: explicit K^-1 back-projection then rotation by R^T.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let cam = random_camera(&mut rng);
            let row = rng.gen_range(0..cam.height);
            let col = rng.gen_range(0..cam.width);
            let (_, d) = cam.pixel_ray(row, col).unwrap();

            let kinv = cam.intrinsics.try_inverse().unwrap();
            let px = Vector3::new(col as f64 + 0.5, row as f64 + 0.5, 1.0);
            let oracle = (cam.rotation().transpose() * (kinv * px)).normalize();
            assert_relative_eq!((d - oracle).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn plucker_of_ray_through_origin_has_zero_moment() {
        let cam = identity_camera(17, 17, 30.0);
        let map = cam.plucker_embedding();
        for k in 0..3 {
            assert_relative_eq!(map.values[(8, 8, k)], [0.0, 0.0, 1.0][k], epsilon = 1e-12);
            assert_relative_eq!(map.values[(8, 8, 3 + k)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn plucker_moment_is_cross_product() {
        // o=(1,0,0), d=(0,0,1) -> m = o x d = (0,-1,0).
        let o = Vector3::new(1.0, 0.0, 0.0);
        let d = Vector3::new(0.0, 0.0, 1.0);
        let m = o.cross(&d);
        assert_eq!((m.x, m.y, m.z), (0.0, -1.0, 0.0));

        let mut ext = Matrix4::identity();
        ext[(0, 3)] = -1.0;
        let k = Matrix3::new(30.0, 0.0, 8.5, 0.0, 30.0, 8.5, 0.0, 0.0, 1.0);
        let cam = Camera::new(k, ext, 17, 17).unwrap();
        let map = cam.plucker_embedding();
        let expect = [0.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        for k in 0..6 {
            assert_relative_eq!(map.values[(8, 8, k)], expect[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn plucker_invariants_on_random_cameras() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let cam = random_camera(&mut rng);
            let map = cam.plucker_embedding();
            for row in 0..cam.height {
                for col in 0..cam.width {
                    let d = Vector3::new(
                        map.values[(row, col, 0)],
                        map.values[(row, col, 1)],
                        map.values[(row, col, 2)],
                    );
                    let m = Vector3::new(
                        map.values[(row, col, 3)],
                        map.values[(row, col, 4)],
                        map.values[(row, col, 5)],
                    );
                    assert!((d.norm() - 1.0).abs() < 1e-6);
                    assert!(d.dot(&m).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn origin_slide_leaves_embedding_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cam = random_camera(&mut rng);
        for _ in 0..50 {
            let row = rng.gen_range(0..cam.height);
            let col = rng.gen_range(0..cam.width);
            let (o, d) = cam.pixel_ray(row, col).unwrap();
            let t: f64 = rng.gen_range(-5.0..5.0);
            let m0 = o.cross(&d);
            let m1 = (o + d * t).cross(&d);
            assert!((m1 - m0).norm() < 1e-6);
        }
    }

    #[test]
    fn distinct_pixels_have_distinct_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cam = random_camera(&mut rng);
        let map = cam.plucker_embedding();
        let mut seen = std::collections::HashSet::new();
        for row in 0..cam.height {
            for col in 0..cam.width {
                let key: Vec<u64> = (0..6)
                    .map(|k| map.values[(row, col, k)].to_bits())
                    .collect();
                assert!(seen.insert(key), "duplicate embedding at ({row},{col})");
            }
        }
    }

    #[test]
    fn camera_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cam = random_camera(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cam.json");
        cam.save_json(&path).unwrap();
        let loaded = Camera::load_json(&path).unwrap();
        assert_eq!(cam, loaded);
    }

    #[test]
    fn invalid_cameras_rejected() {
        let mut ext = Matrix4::identity();
        ext[(0, 0)] = 2.0; // not orthonormal
        let k = Matrix3::new(30.0, 0.0, 8.0, 0.0, 30.0, 8.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(k, ext, 16, 16).is_err());

        let bad_focal = Matrix3::new(-1.0, 0.0, 8.0, 0.0, 30.0, 8.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(bad_focal, Matrix4::identity(), 16, 16).is_err());

        let bad_pp = Matrix3::new(30.0, 0.0, 99.0, 0.0, 30.0, 8.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(bad_pp, Matrix4::identity(), 16, 16).is_err());

        let cam = identity_camera(16, 16, 30.0);
        assert!(cam.pixel_ray(16, 0).is_err());
    }

    proptest! {
        #[test]
        fn look_at_axis_passes_through_origin(az in 0.0..std::f64::consts::TAU,
                                              alt in -0.78..0.78f64,
                                              r in 2.0..3.0f64) {
            let cam = look_at_camera(az, alt, r, 40.0, 8, 8);
            cam.validate().unwrap();
            // Optical axis = third row of R, through the camera center.
            let axis = cam.rotation().transpose() * Vector3::new(0.0, 0.0, 1.0);
            let c = cam.center();
            // Distance from the origin to the line c + s*axis.
            let dist = c.cross(&axis).norm();
            prop_assert!(dist < 1e-6);
        }
    }
}
