//! Triangulated closed surfaces with per-element normals, areas and centroids.
//!
//! Geometry is dimensionless; physical lengths enter only through the anomaly
//! scale, centers and the measurement radius.

use crate::error::{CoreError, Result};
use nalgebra::Vector3;
use std::collections::HashMap;
use std::fmt::Write as _;

/// Shape of a reference domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    UnitBall,
    /// Semi-axes along x, y, z.
    Ellipsoid { a: f64, b: f64, c: f64 },
}

/// Generator parameters for a reference surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Icosphere subdivision level; the mesh has `20 * 4^refinement` triangles.
    pub refinement: u32,
}

impl ShapeSpec {
    pub fn unit_ball(refinement: u32) -> Self {
        ShapeSpec {
            kind: ShapeKind::UnitBall,
            refinement,
        }
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64, refinement: u32) -> Self {
        ShapeSpec {
            kind: ShapeKind::Ellipsoid { a, b, c },
            refinement,
        }
    }

    pub fn is_ball(&self) -> bool {
        matches!(self.kind, ShapeKind::UnitBall)
    }
}

/// Class of the smooth surface a mesh discretizes. On spheres the adjoint NP
/// kernel is symmetric, which the assembly exploits; general surfaces get no
/// such structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceClass {
    Sphere,
    General,
}

/// Immutable triangulated closed surface.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Vec<Vector3<f64>>,
    pub areas: Vec<f64>,
    pub centroids: Vec<Vector3<f64>>,
    pub total_area: f64,
    pub surface_class: SurfaceClass,
    max_diameter: f64,
}

impl SurfaceMesh {
    /// Builds derived per-triangle data from vertices and connectivity.
    fn from_parts(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        surface_class: SurfaceClass,
    ) -> Result<Self> {
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut max_diameter: f64 = 0.0;
        for t in &triangles {
            let (v0, v1, v2) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let cross = (v1 - v0).cross(&(v2 - v0));
            let area = 0.5 * cross.norm();
            if area <= 0.0 {
                return Err(CoreError::InvalidShape("degenerate triangle".into()));
            }
            normals.push(cross / (2.0 * area));
            areas.push(area);
            centroids.push((v0 + v1 + v2) / 3.0);
            let d = (v1 - v0)
                .norm()
                .max((v2 - v1).norm())
                .max((v0 - v2).norm());
            max_diameter = max_diameter.max(d);
        }
        let total_area = areas.iter().sum();
        Ok(SurfaceMesh {
            vertices,
            triangles,
            normals,
            areas,
            centroids,
            total_area,
            surface_class,
            max_diameter,
        })
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn max_element_diameter(&self) -> f64 {
        self.max_diameter
    }

    /// Vertices of triangle `i`.
    pub fn triangle_vertices(&self, i: usize) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let t = self.triangles[i];
        (
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        )
    }

    /// Triangle indices sharing at least one vertex with triangle `i` (excluding `i`).
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut by_vertex: HashMap<usize, Vec<usize>> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for &v in t {
                by_vertex.entry(v).or_default().push(ti);
            }
        }
        let mut out = vec![Vec::new(); self.triangles.len()];
        for (ti, t) in self.triangles.iter().enumerate() {
            let mut set = Vec::new();
            for &v in t {
                for &tj in &by_vertex[&v] {
                    if tj != ti && !set.contains(&tj) {
                        set.push(tj);
                    }
                }
            }
            out[ti] = set;
        }
        out
    }

    /// Checks that every undirected edge is shared by exactly two triangles
    /// with opposite orientation.
    pub fn is_edge_manifold(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(u, v), &cnt)| {
            cnt == 1 && directed.get(&(v, u)).copied().unwrap_or(0) == 1
        })
    }

    /// Plain-text OFF dump: header, counts, vertex lines, face lines.
    pub fn to_off(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "OFF");
        let _ = writeln!(s, "{} {} 0", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        s
    }
}

/// Base icosahedron vertices (unnormalized) and outward-wound faces.
fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let verts = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ];
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (verts, faces)
}

/// Generates a unit icosphere or ellipsoid surface.
///
/// Subdivision splits each triangle in four at edge midpoints and re-projects
/// new vertices to the unit sphere; ellipsoids are the affine image
/// `(a x, b y, c z)` of the unit icosphere.
pub fn make_mesh(spec: &ShapeSpec) -> Result<SurfaceMesh> {
    if spec.refinement > 7 {
        return Err(CoreError::RefinementOutOfRange(spec.refinement));
    }
    if let ShapeKind::Ellipsoid { a, b, c } = spec.kind {
        if a <= 0.0 || b <= 0.0 || c <= 0.0 {
            return Err(CoreError::InvalidShape(format!(
                "semi-axes must be positive, got ({a}, {b}, {c})"
            )));
        }
    }

    let (mut verts, mut faces) = icosahedron();
    for v in verts.iter_mut() {
        *v = v.normalize();
    }
    for _ in 0..spec.refinement {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for k in 0..3 {
                let (i, j) = (f[k], f[(k + 1) % 3]);
                let key = (i.min(j), i.max(j));
                mids[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = ((verts[i] + verts[j]) / 2.0).normalize();
                    verts.push(m);
                    verts.len() - 1
                });
            }
            new_faces.push([f[0], mids[0], mids[2]]);
            new_faces.push([f[1], mids[1], mids[0]]);
            new_faces.push([f[2], mids[2], mids[1]]);
            new_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = new_faces;
    }

    let mut class = SurfaceClass::Sphere;
    if let ShapeKind::Ellipsoid { a, b, c } = spec.kind {
        for v in verts.iter_mut() {
            *v = Vector3::new(a * v.x, b * v.y, c * v.z);
        }
        if a != b || b != c {
            class = SurfaceClass::General;
        }
    }

    let mesh = SurfaceMesh::from_parts(verts, faces, class)?;
    debug_assert!(mesh
        .normals
        .iter()
        .zip(&mesh.centroids)
        .all(|(n, c)| n.dot(c) > 0.0));
    Ok(mesh)
}

/// Maps `x -> delta * x + z`. Normals are unchanged, areas scale by `delta^2`.
pub fn scale_translate(mesh: &SurfaceMesh, delta: f64, z: &Vector3<f64>) -> Result<SurfaceMesh> {
    if delta <= 0.0 {
        return Err(CoreError::NonPositiveScale(delta));
    }
    let vertices = mesh.vertices.iter().map(|v| delta * v + z).collect();
    SurfaceMesh::from_parts(vertices, mesh.triangles.clone(), mesh.surface_class)
}

/// Divergence-theorem volume `(1/3) sum (centroid . normal) area`.
///
/// Exact for flat-panel polyhedra since `x . nu` is affine per panel.
pub fn enclosed_volume(mesh: &SurfaceMesh) -> f64 {
    mesh.centroids
        .iter()
        .zip(&mesh.normals)
        .zip(&mesh.areas)
        .map(|((c, n), a)| c.dot(n) * a)
        .sum::<f64>()
        / 3.0
}

/// Uniform 4^levels subdivision of a flat triangle; returns `(centroid, area)`
/// per sub-triangle. Areas are exactly `A/4^levels`.
pub fn subdivided_quadrature(
    v0: Vector3<f64>,
    v1: Vector3<f64>,
    v2: Vector3<f64>,
    levels: u32,
) -> Vec<(Vector3<f64>, f64)> {
    let mut tris = vec![(v0, v1, v2)];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(tris.len() * 4);
        for (a, b, c) in tris {
            let ab = (a + b) / 2.0;
            let bc = (b + c) / 2.0;
            let ca = (c + a) / 2.0;
            next.push((a, ab, ca));
            next.push((b, bc, ab));
            next.push((c, ca, bc));
            next.push((ab, bc, ca));
        }
        tris = next;
    }
    tris.into_iter()
        .map(|(a, b, c)| {
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            ((a + b + c) / 3.0, area)
        })
        .collect()
}
