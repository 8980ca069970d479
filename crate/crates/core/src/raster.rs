//! Z-buffered triangle rasterization of per-vertex attributes.
//!
//! Produces position maps (canonical coordinates), coverage masks, depth, and
//! Lambertian-shaded RGB for synthetic data. Coverage is decided at pixel
//! centers, interpolation is perspective-correct, triangles are two-sided,
//! and equal depths tie-break to the lower triangle index, so identical
//! input gives bit-identical output.

use crate::body::{pose_mesh, BodyError, BodyPose, ProxyMesh, SkeletonRig};
use crate::geometry::Camera;
use nalgebra::Vector3;
use ndarray::{Array2, Array3};

/// Camera-space z below which geometry is clipped away.
const NEAR_PLANE: f64 = 1e-4;

/// Raster result: H x W x K attributes (background 0), coverage mask, and
/// camera-space depth with +inf at background.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterOutput {
    pub attributes: Array3<f64>,
    pub mask: Array2<bool>,
    pub depth: Array2<f64>,
}

impl RasterOutput {
    pub fn background(h: usize, w: usize, k: usize) -> Self {
        RasterOutput {
            attributes: Array3::zeros((h, w, k)),
            mask: Array2::from_elem((h, w), false),
            depth: Array2::from_elem((h, w), f64::INFINITY),
        }
    }
}

#[derive(Clone)]
struct ClipVertex {
    /// Camera-space position.
    cam: Vector3<f64>,
    attr: Vec<f64>,
}

fn lerp_vertex(a: &ClipVertex, b: &ClipVertex, t: f64) -> ClipVertex {
    ClipVertex {
        cam: a.cam + (b.cam - a.cam) * t,
        attr: a
            .attr
            .iter()
            .zip(&b.attr)
            .map(|(x, y)| x + (y - x) * t)
            .collect(),
    }
}

/// Clip a camera-space triangle against z = NEAR_PLANE. Attribute
/// interpolation is affine over the triangle, so edge lerp is exact.
fn clip_near(tri: [ClipVertex; 3]) -> Vec<ClipVertex> {
    let mut poly: Vec<ClipVertex> = tri.to_vec();
    let mut out: Vec<ClipVertex> = Vec::with_capacity(4);
    for i in 0..poly.len() {
        let cur = &poly[i];
        let next = &poly[(i + 1) % poly.len()];
        let cur_in = cur.cam.z >= NEAR_PLANE;
        let next_in = next.cam.z >= NEAR_PLANE;
        if cur_in {
            out.push(cur.clone());
        }
        if cur_in != next_in {
            let t = (NEAR_PLANE - cur.cam.z) / (next.cam.z - cur.cam.z);
            out.push(lerp_vertex(cur, next, t));
        }
    }
    std::mem::swap(&mut poly, &mut out);
    poly
}

/// Rasterize per-vertex attributes over a camera. Empty meshes yield an
/// all-background output.
pub fn rasterize_attributes(
    posed_vertices: &[Vector3<f64>],
    triangles: &[[usize; 3]],
    vertex_attrs: &[Vec<f64>],
    camera: &Camera,
) -> RasterOutput {
    let k = vertex_attrs.first().map(|a| a.len()).unwrap_or(0);
    assert_eq!(
        posed_vertices.len(),
        vertex_attrs.len(),
        "vertex/attribute count mismatch"
    );
    let (h, w) = (camera.height, camera.width);
    let mut out = RasterOutput::background(h, w, k);

    let cam_pts: Vec<Vector3<f64>> = posed_vertices
        .iter()
        .map(|v| camera.world_to_camera(v))
        .collect();

    for tri in triangles {
        let verts = [
            ClipVertex {
                cam: cam_pts[tri[0]],
                attr: vertex_attrs[tri[0]].clone(),
            },
            ClipVertex {
                cam: cam_pts[tri[1]],
                attr: vertex_attrs[tri[1]].clone(),
            },
            ClipVertex {
                cam: cam_pts[tri[2]],
                attr: vertex_attrs[tri[2]].clone(),
            },
        ];
        let poly = clip_near(verts);
        if poly.len() < 3 {
            continue;
        }
        // Fan-triangulate the clipped polygon.
        for f in 1..poly.len() - 1 {
            raster_one(&[&poly[0], &poly[f], &poly[f + 1]], camera, &mut out);
        }
    }
    out
}

fn raster_one(tri: &[&ClipVertex; 3], camera: &Camera, out: &mut RasterOutput) {
    let (h, w) = (camera.height, camera.width);
    let p: Vec<(f64, f64)> = tri
        .iter()
        .map(|v| camera.project_camera_point(&v.cam))
        .collect();
    let area = edge(p[0], p[1], p[2]);
    if area.abs() < 1e-12 {
        return;
    }
    let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
    let col0 = (min_x - 0.5).floor().max(0.0) as usize;
    let col1 = (max_x - 0.5).ceil().min((w - 1) as f64) as usize;
    let row0 = (min_y - 0.5).floor().max(0.0) as usize;
    let row1 = (max_y - 0.5).ceil().min((h - 1) as f64) as usize;
    if col0 > col1 || row0 > row1 || min_x > w as f64 || max_x < 0.0 {
        return;
    }

    let inv_z = [1.0 / tri[0].cam.z, 1.0 / tri[1].cam.z, 1.0 / tri[2].cam.z];
    let k = tri[0].attr.len();
    for row in row0..=row1 {
        for col in col0..=col1 {
            let pc = (col as f64 + 0.5, row as f64 + 0.5);
            let e0 = edge(p[1], p[2], pc);
            let e1 = edge(p[2], p[0], pc);
            let e2 = edge(p[0], p[1], pc);
            // Two-sided: accept either orientation (signs match the area).
            let inside = if area > 0.0 {
                e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0
            } else {
                e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0
            };
            if !inside {
                continue;
            }
            let b = [e0 / area, e1 / area, e2 / area];
            let zrecip = b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2];
            if zrecip <= 0.0 {
                continue;
            }
            let depth = 1.0 / zrecip;
            if depth < out.depth[(row, col)] {
                out.depth[(row, col)] = depth;
                out.mask[(row, col)] = true;
                // Perspective-correct: interpolate attr/z and divide by 1/z.
                for ch in 0..k {
                    let num = b[0] * tri[0].attr[ch] * inv_z[0]
                        + b[1] * tri[1].attr[ch] * inv_z[1]
                        + b[2] * tri[2].attr[ch] * inv_z[2];
                    out.attributes[(row, col, ch)] = num * depth;
                }
            }
        }
    }
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Pose the body and rasterize its canonical coordinates: each covered pixel
/// carries the canonical-space position of the visible surface point.
pub fn render_position_map(
    mesh: &ProxyMesh,
    rig: &SkeletonRig,
    pose: &BodyPose,
    camera: &Camera,
) -> Result<RasterOutput, BodyError> {
    let posed = pose_mesh(mesh, rig, pose)?;
    let attrs: Vec<Vec<f64>> = mesh
        .canonical_vertices
        .iter()
        .map(|v| vec![v.x, v.y, v.z])
        .collect();
    Ok(rasterize_attributes(&posed, &mesh.triangles, &attrs, camera))
}

/// Lambertian render for synthetic data: per-vertex shading
/// max(n . l, 0.2) * albedo interpolated per pixel, white background.
pub fn shade_rgb(
    mesh: &ProxyMesh,
    rig: &SkeletonRig,
    pose: &BodyPose,
    camera: &Camera,
    albedo: &[Vector3<f64>],
    light_dir: &Vector3<f64>,
) -> Result<RasterOutput, BodyError> {
    let posed = pose_mesh(mesh, rig, pose)?;
    let normals = vertex_normals(&posed, &mesh.triangles);
    let l = light_dir.normalize();
    let attrs: Vec<Vec<f64>> = posed
        .iter()
        .zip(&normals)
        .zip(albedo)
        .map(|((_, n), a)| {
            let shade = n.dot(&l).max(0.2);
            vec![a.x * shade, a.y * shade, a.z * shade]
        })
        .collect();
    let mut out = rasterize_attributes(&posed, &mesh.triangles, &attrs, camera);
    for r in 0..camera.height {
        for c in 0..camera.width {
            if !out.mask[(r, c)] {
                for ch in 0..3 {
                    out.attributes[(r, c, ch)] = 1.0;
                }
            }
        }
    }
    Ok(out)
}

/// Area-weighted vertex normals.
pub fn vertex_normals(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Vec<Vector3<f64>> {
    let mut normals = vec![Vector3::zeros(); vertices.len()];
    for t in triangles {
        let n = (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]]));
        for &vi in t {
            normals[vi] += n;
        }
    }
    for n in &mut normals {
        let len = n.norm();
        if len > 1e-12 {
            *n /= len;
        } else {
            *n = Vector3::new(0.0, 1.0, 0.0);
        }
    }
    normals
}

pub mod oracle {
    //! Brute-force ray-triangle reference rasterizer, kept independent of the
    //! z-buffer path so the two can be compared.

    use super::RasterOutput;
    use crate::geometry::Camera;
    use nalgebra::Vector3;

    /// Moeller-Trumbore intersection. Returns (t, u, v) with the hit at
    /// (1-u-v)*v0 + u*v1 + v*v2; two-sided, no culling.
    pub fn ray_triangle(
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        v0: &Vector3<f64>,
        v1: &Vector3<f64>,
        v2: &Vector3<f64>,
    ) -> Option<(f64, f64, f64)> {
        let e1 = v1 - v0;
        let e2 = v2 - v0;
        let pvec = dir.cross(&e2);
        let det = e1.dot(&pvec);
        if det.abs() < 1e-14 {
            return None;
        }
        let inv_det = 1.0 / det;
        let tvec = origin - v0;
        let u = tvec.dot(&pvec) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let qvec = tvec.cross(&e1);
        let v = dir.dot(&qvec) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(&qvec) * inv_det;
        if t <= 0.0 {
            return None;
        }
        Some((t, u, v))
    }

    /// O(pixels x triangles) nearest-hit reference rasterization.
    pub fn rasterize(
        vertices: &[Vector3<f64>],
        triangles: &[[usize; 3]],
        vertex_attrs: &[Vec<f64>],
        camera: &Camera,
    ) -> RasterOutput {
        let k = vertex_attrs.first().map(|a| a.len()).unwrap_or(0);
        let (h, w) = (camera.height, camera.width);
        let mut out = RasterOutput::background(h, w, k);
        for row in 0..h {
            for col in 0..w {
                let (o, d) = camera.pixel_ray(row, col).unwrap();
                let mut best: Option<(f64, usize, f64, f64)> = None;
                for (ti, tri) in triangles.iter().enumerate() {
                    if let Some((t, u, v)) = ray_triangle(
                        &o,
                        &d,
                        &vertices[tri[0]],
                        &vertices[tri[1]],
                        &vertices[tri[2]],
                    ) {
                        let better = match best {
                            None => true,
                            Some((bt, _, _, _)) => t < bt,
                        };
                        if better {
                            best = Some((t, ti, u, v));
                        }
                    }
                }
                if let Some((t, ti, u, v)) = best {
                    let tri = &triangles[ti];
                    let hit = o + d * t;
                    out.depth[(row, col)] = camera.world_to_camera(&hit).z;
                    out.mask[(row, col)] = true;
                    let b = [1.0 - u - v, u, v];
                    for ch in 0..k {
                        out.attributes[(row, col, ch)] = b[0] * vertex_attrs[tri[0]][ch]
                            + b[1] * vertex_attrs[tri[1]][ch]
                            + b[2] * vertex_attrs[tri[2]][ch];
                    }
                }
            }
        }
        out
    }

    /// Fraction of pixels where two raster outputs agree: both background, or
    /// both covered with matching depth and attributes.
    pub fn agreement(a: &RasterOutput, b: &RasterOutput) -> f64 {
        let (h, w, k) = a.attributes.dim();
        let mut agree = 0usize;
        for r in 0..h {
            for c in 0..w {
                if a.mask[(r, c)] != b.mask[(r, c)] {
                    continue;
                }
                if !a.mask[(r, c)] {
                    agree += 1;
                    continue;
                }
                let dz = (a.depth[(r, c)] - b.depth[(r, c)]).abs();
                let tol = 1e-4 * (1.0 + a.depth[(r, c)].abs());
                let attrs_match = (0..k).all(|ch| {
                    (a.attributes[(r, c, ch)] - b.attributes[(r, c, ch)]).abs() < 1e-3
                });
                if dz < tol && attrs_match {
                    agree += 1;
                }
            }
        }
        agree as f64 / (h * w) as f64
    }
}
