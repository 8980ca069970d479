//! Articulated body proxy: canonical mesh, skeleton, skinning weights, and
//! linear blend skinning. A procedural capsule humanoid stands in for a
//! licensed parametric body; externally supplied bodies in the same schema
//! load through [`load_external_body`].

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BodyError {
    #[error("skin weights not normalized: row {0} sums to {1}")]
    WeightsNotNormalized(usize, f64),
    #[error("skin weights negative at row {0}")]
    WeightsNegative(usize),
    #[error("skeleton not a tree: {0}")]
    NotATree(String),
    #[error("triangle {0} has out-of-range vertex index")]
    BadTriangleIndex(usize),
    #[error("triangle {0} is degenerate (area {1:.3e})")]
    DegenerateTriangle(usize, f64),
    #[error("vertex {0} outside the canonical [-1,1]^3 box")]
    VertexOutOfBox(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("body io: {0}")]
    Io(#[from] std::io::Error),
    #[error("body file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Canonical mesh: vertices in the canonical [-1,1]^3 space plus triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyMesh {
    pub canonical_vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

/// Skeleton: rest joint positions, a parent tree rooted at joint 0, and a
/// row-stochastic vertex-by-joint skinning weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonRig {
    pub joints: Vec<Vector3<f64>>,
    pub parents: Vec<Option<usize>>,
    /// Sparse rows: (joint index, weight) pairs summing to 1 per vertex.
    pub skin_weights: Vec<Vec<(usize, f64)>>,
}

/// Pose parameters: per-joint axis-angle rotations plus a root translation.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPose {
    pub joint_rotations: Vec<Vector3<f64>>,
    pub root_translation: Vector3<f64>,
}

impl BodyPose {
    pub fn identity(n_joints: usize) -> Self {
        BodyPose {
            joint_rotations: vec![Vector3::zeros(); n_joints],
            root_translation: Vector3::zeros(),
        }
    }

    /// Wrap every axis-angle magnitude into [0, pi], flipping the axis when
    /// the wrapped angle exceeds pi.
    pub fn canonicalized(mut self) -> Self {
        for r in &mut self.joint_rotations {
            let angle = r.norm();
            if angle <= std::f64::consts::PI || angle == 0.0 {
                continue;
            }
            let axis = *r / angle;
            let mut a = angle % std::f64::consts::TAU;
            if a > std::f64::consts::PI {
                a = std::f64::consts::TAU - a;
                *r = -axis * a;
            } else {
                *r = axis * a;
            }
        }
        self
    }

    pub fn save_json(&self, path: &Path) -> Result<(), BodyError> {
        let rec = PoseRecord::from(self);
        std::fs::write(path, serde_json::to_string(&rec)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, BodyError> {
        let rec: PoseRecord = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(rec.into())
    }
}

/// On-disk pose schema.
#[derive(Debug, Serialize, Deserialize)]
pub struct PoseRecord {
    pub theta: Vec<[f64; 3]>,
    pub t: [f64; 3],
}

impl From<&BodyPose> for PoseRecord {
    fn from(p: &BodyPose) -> Self {
        PoseRecord {
            theta: p.joint_rotations.iter().map(|r| [r.x, r.y, r.z]).collect(),
            t: [
                p.root_translation.x,
                p.root_translation.y,
                p.root_translation.z,
            ],
        }
    }
}

impl From<PoseRecord> for BodyPose {
    fn from(r: PoseRecord) -> Self {
        BodyPose {
            joint_rotations: r.theta.iter().map(|a| Vector3::new(a[0], a[1], a[2])).collect(),
            root_translation: Vector3::new(r.t[0], r.t[1], r.t[2]),
        }
    }
}

/// Rodrigues formula: axis-angle vector to rotation matrix.
pub fn rodrigues(r: &Vector3<f64>) -> Matrix3<f64> {
    let angle = r.norm();
    if angle < 1e-12 {
        return Matrix3::identity();
    }
    let axis = r / angle;
    let k = Matrix3::new(
        0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
    );
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl ProxyMesh {
    pub fn validate(&self) -> Result<(), BodyError> {
        for (i, v) in self.canonical_vertices.iter().enumerate() {
            if v.iter().any(|c| c.abs() > 1.0) {
                return Err(BodyError::VertexOutOfBox(i));
            }
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&vi| vi >= self.canonical_vertices.len()) {
                return Err(BodyError::BadTriangleIndex(i));
            }
            let area = triangle_area(
                &self.canonical_vertices[t[0]],
                &self.canonical_vertices[t[1]],
                &self.canonical_vertices[t[2]],
            );
            if area <= 1e-10 {
                return Err(BodyError::DegenerateTriangle(i, area));
            }
        }
        Ok(())
    }
}

impl SkeletonRig {
    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self, n_vertices: usize) -> Result<(), BodyError> {
        if self.parents.len() != self.joints.len() {
            return Err(BodyError::DimensionMismatch(format!(
                "{} joints but {} parent entries",
                self.joints.len(),
                self.parents.len()
            )));
        }
        if self.skin_weights.len() != n_vertices {
            return Err(BodyError::DimensionMismatch(format!(
                "{} vertices but {} skin weight rows",
                n_vertices,
                self.skin_weights.len()
            )));
        }
        if self.parents.is_empty() || self.parents[0].is_some() {
            return Err(BodyError::NotATree("joint 0 must be the root".into()));
        }
        // Walking to the root from every joint must terminate without cycles.
        for j in 0..self.parents.len() {
            let mut cur = j;
            let mut steps = 0;
            while let Some(p) = self.parents[cur] {
                if p >= self.parents.len() {
                    return Err(BodyError::NotATree(format!(
                        "joint {cur} has out-of-range parent {p}"
                    )));
                }
                cur = p;
                steps += 1;
                if steps > self.parents.len() {
                    return Err(BodyError::NotATree(format!(
                        "cycle reachable from joint {j}"
                    )));
                }
            }
        }
        for (i, row) in self.skin_weights.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, w) in row {
                if j >= self.joints.len() {
                    return Err(BodyError::NotATree(format!(
                        "weight row {i} references joint {j}"
                    )));
                }
                if w < 0.0 {
                    return Err(BodyError::WeightsNegative(i));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(BodyError::WeightsNotNormalized(i, sum));
            }
        }
        Ok(())
    }

    /// Per-joint posed rigid transforms (R_j, t_j) such that a canonical point
    /// bound to joint j maps to R_j * v + t_j (before root translation).
    ///
    /// Forward kinematics: each joint rotates about its rest position, children
    /// inherit the parent transform.
    pub fn joint_transforms(&self, pose: &BodyPose) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
        assert_eq!(
            pose.joint_rotations.len(),
            self.joints.len(),
            "pose has {} rotations for {} joints",
            pose.joint_rotations.len(),
            self.joints.len()
        );
        // Posed transform P_j maps j-local rest coordinates to world:
        // P_root = T(rest_root) R(theta_root), P_j = P_parent T(rest_j - rest_parent) R(theta_j).
        // The skinning transform is S_j = P_j T(-rest_j).
        let mut posed: Vec<(Matrix3<f64>, Vector3<f64>)> = Vec::with_capacity(self.joints.len());
        for j in 0..self.joints.len() {
            let rot = rodrigues(&pose.joint_rotations[j]);
            match self.parents[j] {
                None => {
                    posed.push((rot, self.joints[j]));
                }
                Some(p) => {
                    let (pr, pt) = posed[p];
                    let offset = self.joints[j] - self.joints[p];
                    let t = pr * offset + pt;
                    posed.push((pr * rot, t));
                }
            }
        }
        posed
            .iter()
            .enumerate()
            .map(|(j, (r, t))| (*r, t - r * self.joints[j]))
            .collect()
    }
}

/// Linear blend skinning: forward kinematics, per-vertex weighted blend of the
/// joint rigid transforms, then the root translation. Inputs are never mutated.
pub fn pose_mesh(
    mesh: &ProxyMesh,
    rig: &SkeletonRig,
    pose: &BodyPose,
) -> Result<Vec<Vector3<f64>>, BodyError> {
    if rig.skin_weights.len() != mesh.canonical_vertices.len() {
        return Err(BodyError::DimensionMismatch(format!(
            "{} vertices vs {} weight rows",
            mesh.canonical_vertices.len(),
            rig.skin_weights.len()
        )));
    }
    if pose.joint_rotations.len() != rig.joints.len() {
        return Err(BodyError::DimensionMismatch(format!(
            "{} joints vs {} pose rotations",
            rig.joints.len(),
            pose.joint_rotations.len()
        )));
    }
    let transforms = rig.joint_transforms(pose);
    let mut out = Vec::with_capacity(mesh.canonical_vertices.len());
    for (vi, v) in mesh.canonical_vertices.iter().enumerate() {
        let mut p = Vector3::zeros();
        for &(j, w) in &rig.skin_weights[vi] {
            let (r, t) = &transforms[j];
            p += (r * v + t) * w;
        }
        out.push(p + pose.root_translation);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Procedural capsule humanoid
// ---------------------------------------------------------------------------

/// Joint indices of the generated humanoid.
pub mod joints {
    pub const PELVIS: usize = 0;
    pub const SPINE: usize = 1;
    pub const CHEST: usize = 2;
    pub const NECK: usize = 3;
    pub const HEAD: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const R_SHOULDER: usize = 8;
    pub const R_ELBOW: usize = 9;
    pub const R_WRIST: usize = 10;
    pub const L_HIP: usize = 11;
    pub const L_KNEE: usize = 12;
    pub const L_ANKLE: usize = 13;
    pub const R_HIP: usize = 14;
    pub const R_KNEE: usize = 15;
    pub const R_ANKLE: usize = 16;
    pub const COUNT: usize = 17;
}

struct PartSpec {
    a: Vector3<f64>,
    b: Vector3<f64>,
    radius: f64,
    /// Joint owning the proximal end.
    joint_prox: usize,
    /// Joint blended in near the distal end, if any.
    joint_dist: Option<usize>,
}

/// Deterministic capsule-and-sphere humanoid in a canonical A-pose, normalized
/// to fit inside [-1,1]^3. `detail` scales tessellation only; the skeleton is
/// fixed. The `seed` reserves room for stochastic shape variation; the current
/// generator is fully deterministic and ignores it beyond recording.
pub fn build_canonical_body(_seed: u64, detail: usize) -> (ProxyMesh, SkeletonRig) {
    use joints::*;

    let mut j = vec![Vector3::zeros(); COUNT];
    j[PELVIS] = Vector3::new(0.0, 0.0, 0.0);
    j[SPINE] = Vector3::new(0.0, 0.15, 0.0);
    j[CHEST] = Vector3::new(0.0, 0.35, 0.0);
    j[NECK] = Vector3::new(0.0, 0.55, 0.0);
    j[HEAD] = Vector3::new(0.0, 0.65, 0.0);
    let arm_dir = Vector3::new(0.643, -0.766, 0.0); // A-pose: ~40 deg from vertical
    j[L_SHOULDER] = Vector3::new(0.20, 0.50, 0.0);
    j[L_ELBOW] = j[L_SHOULDER] + 0.28 * arm_dir;
    j[L_WRIST] = j[L_ELBOW] + 0.26 * arm_dir;
    let arm_dir_r = Vector3::new(-arm_dir.x, arm_dir.y, 0.0);
    j[R_SHOULDER] = Vector3::new(-0.20, 0.50, 0.0);
    j[R_ELBOW] = j[R_SHOULDER] + 0.28 * arm_dir_r;
    j[R_WRIST] = j[R_ELBOW] + 0.26 * arm_dir_r;
    j[L_HIP] = Vector3::new(0.10, -0.05, 0.0);
    j[L_KNEE] = Vector3::new(0.10, -0.45, 0.0);
    j[L_ANKLE] = Vector3::new(0.10, -0.85, 0.0);
    j[R_HIP] = Vector3::new(-0.10, -0.05, 0.0);
    j[R_KNEE] = Vector3::new(-0.10, -0.45, 0.0);
    j[R_ANKLE] = Vector3::new(-0.10, -0.85, 0.0);

    let mut parents = vec![None; COUNT];
    parents[SPINE] = Some(PELVIS);
    parents[CHEST] = Some(SPINE);
    parents[NECK] = Some(CHEST);
    parents[HEAD] = Some(NECK);
    parents[L_SHOULDER] = Some(CHEST);
    parents[L_ELBOW] = Some(L_SHOULDER);
    parents[L_WRIST] = Some(L_ELBOW);
    parents[R_SHOULDER] = Some(CHEST);
    parents[R_ELBOW] = Some(R_SHOULDER);
    parents[R_WRIST] = Some(R_ELBOW);
    parents[L_HIP] = Some(PELVIS);
    parents[L_KNEE] = Some(L_HIP);
    parents[L_ANKLE] = Some(L_KNEE);
    parents[R_HIP] = Some(PELVIS);
    parents[R_KNEE] = Some(R_HIP);
    parents[R_ANKLE] = Some(R_KNEE);

    let parts = vec![
        // torso chain
        PartSpec { a: j[PELVIS], b: j[SPINE], radius: 0.13, joint_prox: PELVIS, joint_dist: Some(SPINE) },
        PartSpec { a: j[SPINE], b: j[CHEST], radius: 0.125, joint_prox: SPINE, joint_dist: Some(CHEST) },
        PartSpec { a: j[CHEST], b: j[NECK], radius: 0.11, joint_prox: CHEST, joint_dist: Some(NECK) },
        PartSpec { a: j[NECK], b: j[HEAD], radius: 0.045, joint_prox: NECK, joint_dist: Some(HEAD) },
        // head sphere as a zero-length capsule
        PartSpec { a: j[HEAD] + Vector3::new(0.0, 0.09, 0.0), b: j[HEAD] + Vector3::new(0.0, 0.091, 0.0), radius: 0.105, joint_prox: HEAD, joint_dist: None },
        // clavicles
        PartSpec { a: j[CHEST] + Vector3::new(0.0, 0.1, 0.0), b: j[L_SHOULDER], radius: 0.055, joint_prox: CHEST, joint_dist: Some(L_SHOULDER) },
        PartSpec { a: j[CHEST] + Vector3::new(0.0, 0.1, 0.0), b: j[R_SHOULDER], radius: 0.055, joint_prox: CHEST, joint_dist: Some(R_SHOULDER) },
        // arms
        PartSpec { a: j[L_SHOULDER], b: j[L_ELBOW], radius: 0.05, joint_prox: L_SHOULDER, joint_dist: Some(L_ELBOW) },
        PartSpec { a: j[L_ELBOW], b: j[L_WRIST], radius: 0.042, joint_prox: L_ELBOW, joint_dist: Some(L_WRIST) },
        PartSpec { a: j[L_WRIST], b: j[L_WRIST] + 0.09 * arm_dir, radius: 0.036, joint_prox: L_WRIST, joint_dist: None },
        PartSpec { a: j[R_SHOULDER], b: j[R_ELBOW], radius: 0.05, joint_prox: R_SHOULDER, joint_dist: Some(R_ELBOW) },
        PartSpec { a: j[R_ELBOW], b: j[R_WRIST], radius: 0.042, joint_prox: R_ELBOW, joint_dist: Some(R_WRIST) },
        PartSpec { a: j[R_WRIST], b: j[R_WRIST] + 0.09 * arm_dir_r, radius: 0.036, joint_prox: R_WRIST, joint_dist: None },
        // legs
        PartSpec { a: j[L_HIP], b: j[L_KNEE], radius: 0.065, joint_prox: L_HIP, joint_dist: Some(L_KNEE) },
        PartSpec { a: j[L_KNEE], b: j[L_ANKLE], radius: 0.052, joint_prox: L_KNEE, joint_dist: Some(L_ANKLE) },
        PartSpec { a: j[L_ANKLE], b: j[L_ANKLE] + Vector3::new(0.0, -0.03, 0.10), radius: 0.038, joint_prox: L_ANKLE, joint_dist: None },
        PartSpec { a: j[R_HIP], b: j[R_KNEE], radius: 0.065, joint_prox: R_HIP, joint_dist: Some(R_KNEE) },
        PartSpec { a: j[R_KNEE], b: j[R_ANKLE], radius: 0.052, joint_prox: R_KNEE, joint_dist: Some(R_ANKLE) },
        PartSpec { a: j[R_ANKLE], b: j[R_ANKLE] + Vector3::new(0.0, -0.03, 0.10), radius: 0.038, joint_prox: R_ANKLE, joint_dist: None },
    ];

    let radial = 10 * (detail + 1);
    let cap_rings = 3 * (detail + 1);
    let body_rings = 2 * (detail + 1);

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut weights: Vec<Vec<(usize, f64)>> = Vec::new();

    for part in &parts {
        let base = vertices.len();
        let (v, t) = capsule_mesh(&part.a, &part.b, part.radius, radial, cap_rings, body_rings);
        let axis = part.b - part.a;
        let len = axis.norm();
        let axis_n = axis / len;
        for p in &v {
            let s = (p - part.a).dot(&axis_n) / len; // <0 prox cap, >1 dist cap
            let w = match part.joint_dist {
                None => vec![(part.joint_prox, 1.0)],
                Some(dist) => {
                    // Blend into the distal joint over the last quarter.
                    let t = ((s - 0.75) / 0.25).clamp(0.0, 1.0);
                    let t = t * t * (3.0 - 2.0 * t); // smoothstep
                    if t <= 0.0 {
                        vec![(part.joint_prox, 1.0)]
                    } else if t >= 1.0 {
                        vec![(dist, 1.0)]
                    } else {
                        vec![(part.joint_prox, 1.0 - t), (dist, t)]
                    }
                }
            };
            weights.push(w);
        }
        vertices.extend(v);
        triangles.extend(t.into_iter().map(|tri| [tri[0] + base, tri[1] + base, tri[2] + base]));
    }

    // Normalize so everything fits inside [-1,1]^3 with a small margin.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in &vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let center = (lo + hi) / 2.0;
    let half = (hi - lo) / 2.0;
    let scale = 0.98 / half.amax();
    for v in &mut vertices {
        *v = (*v - center) * scale;
    }
    for jp in &mut j {
        *jp = (*jp - center) * scale;
    }

    let mesh = ProxyMesh {
        canonical_vertices: vertices,
        triangles,
    };
    let rig = SkeletonRig {
        joints: j,
        parents,
        skin_weights: weights,
    };
    debug_assert!(mesh.validate().is_ok());
    debug_assert!(rig.validate(mesh.canonical_vertices.len()).is_ok());
    (mesh, rig)
}

/// Closed capsule between `a` and `b`: a tube of `body_rings`+1 rings plus two
/// hemispherical caps of `cap_rings` rings each, `radial` segments around.
fn capsule_mesh(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    radius: f64,
    radial: usize,
    cap_rings: usize,
    body_rings: usize,
) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let axis = b - a;
    let len = axis.norm();
    let z = axis / len;
    let helper = if z.x.abs() < 0.9 {
        Vector3::new(1.0, 0.0, 0.0)
    } else {
        Vector3::new(0.0, 1.0, 0.0)
    };
    let x = z.cross(&helper).normalize();
    let y = z.cross(&x);

    let mut verts: Vec<Vector3<f64>> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();

    // Bottom pole.
    verts.push(a - z * radius);
    // Bottom hemisphere rings (from pole towards the tube).
    for ring in 1..=cap_rings {
        let phi = std::f64::consts::FRAC_PI_2 * (ring as f64 / cap_rings as f64);
        let r = radius * phi.sin();
        let h = -radius * phi.cos();
        push_ring(&mut verts, a, &x, &y, &z, r, h, radial);
    }
    // Tube rings (interior only; the boundary rings belong to the caps).
    for ring in 1..body_rings {
        let h = len * (ring as f64 / body_rings as f64);
        push_ring(&mut verts, a, &x, &y, &z, radius, h, radial);
    }
    // Top hemisphere rings (from the tube towards the pole).
    for ring in 0..cap_rings {
        let phi = std::f64::consts::FRAC_PI_2 * (1.0 - ring as f64 / cap_rings as f64);
        let r = radius * phi.sin();
        let h = len + radius * phi.cos();
        push_ring(&mut verts, a, &x, &y, &z, r, h, radial);
    }
    // Top pole.
    verts.push(b + z * radius);

    let n_rings = cap_rings + (body_rings - 1) + cap_rings;
    let ring_start = |ring: usize| 1 + ring * radial;

    // Bottom fan.
    for s in 0..radial {
        let s1 = (s + 1) % radial;
        tris.push([0, ring_start(0) + s1, ring_start(0) + s]);
    }
    // Quads between consecutive rings.
    for ring in 0..n_rings - 1 {
        for s in 0..radial {
            let s1 = (s + 1) % radial;
            let a0 = ring_start(ring) + s;
            let a1 = ring_start(ring) + s1;
            let b0 = ring_start(ring + 1) + s;
            let b1 = ring_start(ring + 1) + s1;
            tris.push([a0, a1, b1]);
            tris.push([a0, b1, b0]);
        }
    }
    // Top fan.
    let top = verts.len() - 1;
    for s in 0..radial {
        let s1 = (s + 1) % radial;
        tris.push([top, ring_start(n_rings - 1) + s, ring_start(n_rings - 1) + s1]);
    }
    (verts, tris)
}

fn push_ring(
    verts: &mut Vec<Vector3<f64>>,
    origin: &Vector3<f64>,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    z: &Vector3<f64>,
    r: f64,
    h: f64,
    radial: usize,
) {
    for s in 0..radial {
        let ang = std::f64::consts::TAU * (s as f64 / radial as f64);
        verts.push(origin + x * (r * ang.cos()) + y * (r * ang.sin()) + z * h);
    }
}

// ---------------------------------------------------------------------------
// External body schema
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct MeshRecord {
    #[serde(rename = "V")]
    v: Vec<[f64; 3]>,
    #[serde(rename = "F")]
    f: Vec<[usize; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RigRecord {
    #[serde(rename = "J")]
    j: Vec<[f64; 3]>,
    parents: Vec<i64>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
}

/// Save a body pair in the external schema (dense weight matrix).
pub fn save_body(
    mesh: &ProxyMesh,
    rig: &SkeletonRig,
    mesh_file: &Path,
    rig_file: &Path,
) -> Result<(), BodyError> {
    let mrec = MeshRecord {
        v: mesh.canonical_vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
        f: mesh.triangles.clone(),
    };
    let mut w = vec![vec![0.0; rig.joints.len()]; mesh.canonical_vertices.len()];
    for (vi, row) in rig.skin_weights.iter().enumerate() {
        for &(j, wt) in row {
            w[vi][j] += wt;
        }
    }
    let rrec = RigRecord {
        j: rig.joints.iter().map(|v| [v.x, v.y, v.z]).collect(),
        parents: rig
            .parents
            .iter()
            .map(|p| p.map(|v| v as i64).unwrap_or(-1))
            .collect(),
        w,
    };
    std::fs::write(mesh_file, serde_json::to_string(&mrec)?)?;
    std::fs::write(rig_file, serde_json::to_string(&rrec)?)?;
    Ok(())
}

/// Load a body pair; every mesh/rig invariant is checked and failures name
/// the violated invariant.
pub fn load_external_body(
    mesh_file: &Path,
    rig_file: &Path,
) -> Result<(ProxyMesh, SkeletonRig), BodyError> {
    let mrec: MeshRecord = serde_json::from_str(&std::fs::read_to_string(mesh_file)?)?;
    let rrec: RigRecord = serde_json::from_str(&std::fs::read_to_string(rig_file)?)?;
    let mesh = ProxyMesh {
        canonical_vertices: mrec.v.iter().map(|a| Vector3::new(a[0], a[1], a[2])).collect(),
        triangles: mrec.f,
    };
    let n_joints = rrec.j.len();
    let mut parents = Vec::with_capacity(n_joints);
    for &p in &rrec.parents {
        if p < 0 {
            parents.push(None);
        } else {
            parents.push(Some(p as usize));
        }
    }
    let skin_weights = rrec
        .w
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(j, &w)| (j, w))
                .collect()
        })
        .collect();
    let rig = SkeletonRig {
        joints: rrec.j.iter().map(|a| Vector3::new(a[0], a[1], a[2])).collect(),
        parents,
        skin_weights,
    };
    mesh.validate()?;
    rig.validate(mesh.canonical_vertices.len())?;
    Ok((mesh, rig))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generator_is_deterministic() {
        let (m1, r1) = build_canonical_body(0, 0);
        let (m2, r2) = build_canonical_body(0, 0);
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
        assert!(r1.n_joints() >= 14);
    }

    #[test]
    fn vertices_inside_canonical_box() {
        for seed in [0, 1, 42] {
            let (mesh, _) = build_canonical_body(seed, 0);
            mesh.validate().unwrap();
        }
    }

    #[test]
    fn detail_increases_vertex_count_only() {
        let (m0, r0) = build_canonical_body(0, 0);
        let (m1, r1) = build_canonical_body(0, 1);
        assert!(m1.canonical_vertices.len() > m0.canonical_vertices.len());
        assert_eq!(r0.n_joints(), r1.n_joints());
    }

    #[test]
    fn mesh_is_watertight() {
        // Every edge of every closed component is shared by exactly two triangles.
        let (mesh, _) = build_canonical_body(0, 0);
        let mut edges: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for t in &mesh.triangles {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (e.0.min(e.1), e.0.max(e.1));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2), "boundary or nonmanifold edge found");
    }

    #[test]
    fn identity_pose_is_identity_map() {
        let (mesh, rig) = build_canonical_body(0, 0);
        let pose = BodyPose::identity(rig.n_joints());
        let posed = pose_mesh(&mesh, &rig, &pose).unwrap();
        for (a, b) in posed.iter().zip(&mesh.canonical_vertices) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn root_translation_shifts_every_vertex() {
        let (mesh, rig) = build_canonical_body(0, 0);
        let mut pose = BodyPose::identity(rig.n_joints());
        pose.root_translation = Vector3::new(0.3, -0.2, 0.5);
        let posed = pose_mesh(&mesh, &rig, &pose).unwrap();
        for (a, b) in posed.iter().zip(&mesh.canonical_vertices) {
            assert_relative_eq!((a - b - pose.root_translation).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rigid_vertex_matches_single_joint_oracle() {
        // One bone, one vertex with weight 1 on the rotated joint: the posed
        // vertex must equal the closed-form rotation about the joint's rest
        // position.
        let rig = SkeletonRig {
            joints: vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.5, 0.1, -0.2)],
            parents: vec![None, Some(0)],
            skin_weights: vec![vec![(1, 1.0)]],
        };
        let mesh = ProxyMesh {
            canonical_vertices: vec![Vector3::new(0.8, 0.3, 0.1)],
            triangles: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let r = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let mut pose = BodyPose::identity(2);
            pose.joint_rotations[1] = r;
            let posed = pose_mesh(&mesh, &rig, &pose).unwrap();
            let rot = rodrigues(&r);
            let oracle = rot * (mesh.canonical_vertices[0] - rig.joints[1]) + rig.joints[1];
            assert_relative_eq!((posed[0] - oracle).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn posing_commutes_with_global_rigid_motion() {
        let (mesh, rig) = build_canonical_body(0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut pose = BodyPose::identity(rig.n_joints());
        for r in pose.joint_rotations.iter_mut().skip(1) {
            *r = Vector3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
        }
        pose.root_translation = Vector3::new(0.1, 0.2, -0.1);

        let extra_axis = Vector3::new(0.3, -0.4, 0.2);
        let extra_rot = rodrigues(&extra_axis);
        let extra_t = Vector3::new(-0.2, 0.5, 0.3);

        // Pose, then move rigidly.
        let posed = pose_mesh(&mesh, &rig, &pose).unwrap();
        let moved: Vec<_> = posed.iter().map(|v| extra_rot * v + extra_t).collect();

        // Fold the rigid motion into the root: R0 and the matching translation.
        let root = rig.joints[0];
        let combined = extra_rot * rodrigues(&pose.joint_rotations[0]);
        let angle = (((combined.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos();
        let axis = if angle.abs() < 1e-12 {
            Vector3::zeros()
        } else {
            Vector3::new(
                combined[(2, 1)] - combined[(1, 2)],
                combined[(0, 2)] - combined[(2, 0)],
                combined[(1, 0)] - combined[(0, 1)],
            ) * (angle / (2.0 * angle.sin()))
        };
        let mut pose2 = pose.clone();
        pose2.joint_rotations[0] = axis;
        pose2.root_translation =
            extra_t + extra_rot * pose.root_translation + extra_rot * root - root;
        let posed2 = pose_mesh(&mesh, &rig, &pose2).unwrap();
        for (a, b) in moved.iter().zip(&posed2) {
            assert!((a - b).norm() < 1e-6, "mismatch {a:?} vs {b:?}");
        }
    }

    #[test]
    fn posing_leaves_weights_untouched() {
        let (mesh, rig) = build_canonical_body(0, 0);
        let before = rig.skin_weights.clone();
        let mut pose = BodyPose::identity(rig.n_joints());
        pose.joint_rotations[1] = Vector3::new(0.3, 0.0, 0.0);
        let _ = pose_mesh(&mesh, &rig, &pose).unwrap();
        assert_eq!(before, rig.skin_weights);
    }

    #[test]
    fn pose_canonicalization_wraps_angles() {
        let pose = BodyPose {
            joint_rotations: vec![Vector3::new(0.0, 0.0, 4.0)], // > pi
            root_translation: Vector3::zeros(),
        };
        let canon = pose.canonicalized();
        let r = canon.joint_rotations[0];
        assert!(r.norm() <= std::f64::consts::PI + 1e-12);
        // Same rotation matrix either way.
        let m1 = rodrigues(&Vector3::new(0.0, 0.0, 4.0));
        let m2 = rodrigues(&r);
        assert_relative_eq!((m1 - m2).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn body_round_trip() {
        let (mesh, rig) = build_canonical_body(0, 0);
        let dir = tempfile::tempdir().unwrap();
        let mf = dir.path().join("mesh.json");
        let rf = dir.path().join("rig.json");
        save_body(&mesh, &rig, &mf, &rf).unwrap();
        let (mesh2, rig2) = load_external_body(&mf, &rf).unwrap();
        assert_eq!(mesh, mesh2);
        assert_eq!(rig.joints, rig2.joints);
        assert_eq!(rig.parents, rig2.parents);
        for (a, b) in rig.skin_weights.iter().zip(&rig2.skin_weights) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn load_rejects_unnormalized_weights() {
        let dir = tempfile::tempdir().unwrap();
        let mf = dir.path().join("mesh.json");
        let rf = dir.path().join("rig.json");
        std::fs::write(
            &mf,
            r#"{"V": [[0,0,0],[0.5,0,0],[0,0.5,0]], "F": [[0,1,2]]}"#,
        )
        .unwrap();
        std::fs::write(
            &rf,
            r#"{"J": [[0,0,0]], "parents": [-1], "W": [[0.9],[1.0],[1.0]]}"#,
        )
        .unwrap();
        let err = load_external_body(&mf, &rf).unwrap_err();
        assert!(err.to_string().contains("skin weights not normalized"), "{err}");
    }

    #[test]
    fn load_rejects_parent_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let mf = dir.path().join("mesh.json");
        let rf = dir.path().join("rig.json");
        std::fs::write(
            &mf,
            r#"{"V": [[0,0,0],[0.5,0,0],[0,0.5,0]], "F": [[0,1,2]]}"#,
        )
        .unwrap();
        std::fs::write(
            &rf,
            r#"{"J": [[0,0,0],[0.1,0,0],[0.2,0,0]], "parents": [-1, 2, 1], "W": [[1,0,0],[1,0,0],[1,0,0]]}"#,
        )
        .unwrap();
        let err = load_external_body(&mf, &rf).unwrap_err();
        assert!(err.to_string().contains("skeleton not a tree"), "{err}");
    }
}
