use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SynthError, Texture};

/// Triangle mesh with a per-vertex UV unwrap onto a single texture.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturedMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// `(u, v)` in `[0, 1]²`, `v` growing downward in the texture.
    pub uvs: Vec<[f64; 2]>,
    pub texture: Texture,
}

impl TexturedMesh {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.uvs.len() != self.vertices.len() {
            return Err(SynthError::InvalidMesh(format!(
                "{} uvs for {} vertices",
                self.uvs.len(),
                self.vertices.len()
            )));
        }
        if self.texture.width == 0
            || self.texture.height == 0
            || self.texture.data.len() != self.texture.width * self.texture.height
        {
            return Err(SynthError::InvalidMesh("texture buffer does not match its size".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.vertices.len()) {
                return Err(SynthError::InvalidMesh(format!("triangle {t} index out of range")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(SynthError::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
        }
        if self.uvs.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(SynthError::InvalidMesh("uv outside [0, 1]".into()));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(SynthError::InvalidMesh("non-finite vertex".into()));
        }
        Ok(())
    }

    /// Total surface area.
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| triangle_area(&self.vertices, t)).sum()
    }

    /// Area-weighted deterministic surface samples, used as the evaluation
    /// model for ADD/ADDS.
    pub fn surface_samples(&self, n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in &self.triangles {
            total += triangle_area(&self.vertices, t);
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let pick = rng.random_range(0.0..total);
                let t = cumulative.partition_point(|&c| c <= pick).min(self.triangles.len() - 1);
                let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
                let (mut s, mut r): (f64, f64) = (rng.random(), rng.random());
                if s + r > 1.0 {
                    s = 1.0 - s;
                    r = 1.0 - r;
                }
                a + (b - a) * s + (c - a) * r
            })
            .collect()
    }
}

fn triangle_area(v: &[Vector3<f64>], t: &[usize; 3]) -> f64 {
    0.5 * (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]])).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Box,
    Cylinder,
    Sphere,
    Composite,
}

impl MeshKind {
    pub const ALL: [MeshKind; 4] = [MeshKind::Box, MeshKind::Cylinder, MeshKind::Sphere, MeshKind::Composite];

    /// Geometric symmetry of the bare shape, ignoring texture.
    pub fn is_symmetric(self) -> bool {
        matches!(self, MeshKind::Box | MeshKind::Cylinder | MeshKind::Sphere)
    }
}

impl fmt::Display for MeshKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeshKind::Box => "box",
            MeshKind::Cylinder => "cylinder",
            MeshKind::Sphere => "sphere",
            MeshKind::Composite => "composite",
        })
    }
}

impl FromStr for MeshKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "box" => Ok(MeshKind::Box),
            "cylinder" => Ok(MeshKind::Cylinder),
            "sphere" => Ok(MeshKind::Sphere),
            "composite" => Ok(MeshKind::Composite),
            other => Err(SynthError::InvalidParams(format!("unknown mesh kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TexturePattern {
    Noise,
    Checker,
    Gradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshParams {
    /// Box: side lengths. Cylinder: `extent[0]` diameter, `extent[2]` height.
    /// Sphere: `extent[0]` diameter. Composite: size of the main body.
    pub extent: [f64; 3],
    /// Angular subdivisions of round shapes.
    pub segments: usize,
    /// Latitude bands of the sphere.
    pub rings: usize,
    pub pattern: TexturePattern,
    pub texture_size: usize,
    /// Replaces the procedural pattern when set.
    pub texture: Option<Texture>,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams {
            extent: [0.1, 0.1, 0.1],
            segments: 32,
            rings: 16,
            pattern: TexturePattern::Noise,
            texture_size: 128,
            texture: None,
        }
    }
}

struct Part {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    uvs: Vec<[f64; 2]>,
}

fn box_part(extent: [f64; 3]) -> Part {
    let h = Vector3::new(extent[0], extent[1], extent[2]) / 2.0;
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    // (normal, u axis, v-up axis, cell in a 4x3 cross layout)
    let faces = [
        (x, -z, y, (2, 1)),
        (-x, z, y, (0, 1)),
        (y, x, -z, (1, 0)),
        (-y, x, z, (1, 2)),
        (z, x, y, (1, 1)),
        (-z, -x, y, (3, 1)),
    ];
    let mut part = Part { vertices: Vec::new(), triangles: Vec::new(), uvs: Vec::new() };
    for (n, a, b, (cu, cv)) in faces {
        let base = part.vertices.len();
        for (sa, sb) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            let p = n + a * sa + b * sb;
            part.vertices.push(p.component_mul(&h));
            let lu = (sa + 1.0) / 2.0;
            let lv = (1.0 - sb) / 2.0;
            part.uvs.push([(cu as f64 + lu) / 4.0, (cv as f64 + lv) / 3.0]);
        }
        part.triangles.push([base, base + 1, base + 2]);
        part.triangles.push([base, base + 2, base + 3]);
    }
    part
}

fn cylinder_part(radius: f64, height: f64, segments: usize) -> Part {
    let mut part = Part { vertices: Vec::new(), triangles: Vec::new(), uvs: Vec::new() };
    let hz = height / 2.0;
    let ring = |j: usize| {
        let phi = TAU * j as f64 / segments as f64;
        (phi.cos(), phi.sin())
    };
    // side band in the upper half of the texture; the seam column is duplicated
    for j in 0..=segments {
        let (c, s) = ring(j % segments);
        let u = j as f64 / segments as f64;
        part.vertices.push(Vector3::new(radius * c, radius * s, hz));
        part.uvs.push([u, 0.0]);
        part.vertices.push(Vector3::new(radius * c, radius * s, -hz));
        part.uvs.push([u, 0.5]);
    }
    for j in 0..segments {
        let (t0, b0, t1, b1) = (2 * j, 2 * j + 1, 2 * j + 2, 2 * j + 3);
        part.triangles.push([t0, b0, b1]);
        part.triangles.push([t0, b1, t1]);
    }
    // caps as discs in the lower half
    for (z, center_u) in [(hz, 0.25), (-hz, 0.75)] {
        let center = part.vertices.len();
        part.vertices.push(Vector3::new(0.0, 0.0, z));
        part.uvs.push([center_u, 0.75]);
        for j in 0..segments {
            let (c, s) = ring(j);
            part.vertices.push(Vector3::new(radius * c, radius * s, z));
            part.uvs.push([center_u + 0.24 * c, 0.75 + 0.24 * s]);
        }
        for j in 0..segments {
            let a = center + 1 + j;
            let b = center + 1 + (j + 1) % segments;
            if z > 0.0 {
                part.triangles.push([center, a, b]);
            } else {
                part.triangles.push([center, b, a]);
            }
        }
    }
    part
}

/// Latitude/longitude sphere with `2 · segments · (rings − 1)` triangles.
fn sphere_part(radius: f64, segments: usize, rings: usize) -> Part {
    let mut part = Part { vertices: Vec::new(), triangles: Vec::new(), uvs: Vec::new() };
    for i in 0..=rings {
        let theta = PI * i as f64 / rings as f64;
        for j in 0..=segments {
            let phi = TAU * (j % segments) as f64 / segments as f64;
            let p = if i == 0 {
                Vector3::new(0.0, 0.0, radius)
            } else if i == rings {
                Vector3::new(0.0, 0.0, -radius)
            } else {
                Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()) * radius
            };
            part.vertices.push(p);
            part.uvs.push([j as f64 / segments as f64, i as f64 / rings as f64]);
        }
    }
    let at = |i: usize, j: usize| i * (segments + 1) + j;
    for i in 0..rings {
        for j in 0..segments {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            if i != 0 {
                part.triangles.push([a, b, d]);
            }
            if i + 1 != rings {
                part.triangles.push([b, c, d]);
            }
        }
    }
    part
}

fn procedural_texture(params: &MeshParams, seed: u64) -> Texture {
    let size = params.texture_size;
    match params.pattern {
        TexturePattern::Noise => Texture::noise(size, seed),
        TexturePattern::Gradient => Texture::gradient(size),
        TexturePattern::Checker => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            let b = a.map(|c| 1.0 - c);
            Texture::checker(size, 8, a, b)
        }
    }
}

fn check_params(kind: MeshKind, params: &MeshParams) -> Result<(), SynthError> {
    if params.extent.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(SynthError::InvalidParams(format!("extent must be positive, got {:?}", params.extent)));
    }
    if matches!(kind, MeshKind::Cylinder | MeshKind::Sphere | MeshKind::Composite) && params.segments < 3 {
        return Err(SynthError::InvalidParams("need at least 3 segments".into()));
    }
    if matches!(kind, MeshKind::Sphere | MeshKind::Composite) && params.rings < 2 {
        return Err(SynthError::InvalidParams("need at least 2 rings".into()));
    }
    if params.texture.is_none() && params.texture_size == 0 {
        return Err(SynthError::InvalidParams("texture size must be positive".into()));
    }
    Ok(())
}

/// Builds a closed primitive or a union of primitives with a fixed UV unwrap.
/// The seed drives the procedural texture and the composite arrangement.
pub fn gen_procedural_mesh(kind: MeshKind, params: &MeshParams, seed: u64) -> Result<TexturedMesh, SynthError> {
    check_params(kind, params)?;
    let [ex, _, ez] = params.extent;
    let single = |part: Part| {
        let texture = params.texture.clone().unwrap_or_else(|| procedural_texture(params, seed));
        TexturedMesh { vertices: part.vertices, triangles: part.triangles, uvs: part.uvs, texture }
    };
    let mesh = match kind {
        MeshKind::Box => single(box_part(params.extent)),
        MeshKind::Cylinder => single(cylinder_part(ex / 2.0, ez, params.segments)),
        MeshKind::Sphere => single(sphere_part(ex / 2.0, params.segments, params.rings)),
        MeshKind::Composite => composite(params, seed),
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Box body with a cylinder on top and, for some seeds, a sphere on one side.
/// Each part owns one tile of a 2×2 texture atlas.
fn composite(params: &MeshParams, seed: u64) -> TexturedMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [ex, ey, ez] = params.extent;
    let min_xy = ex.min(ey);
    let mut parts: Vec<(Part, Vector3<f64>)> = vec![(box_part(params.extent), Vector3::zeros())];

    let radius = min_xy * rng.random_range(0.2..0.35);
    let height = ez * rng.random_range(0.4..0.8);
    let offset = Vector3::new(
        rng.random_range(-0.5..0.5) * (ex / 2.0 - radius),
        rng.random_range(-0.5..0.5) * (ey / 2.0 - radius),
        ez / 2.0 + height / 2.0 - 0.1 * height,
    );
    parts.push((cylinder_part(radius, height, params.segments), offset));

    if rng.random_bool(0.5) {
        let r = min_xy * rng.random_range(0.2..0.3);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let offset = Vector3::new(side * (ex / 2.0 + 0.6 * r), rng.random_range(-0.3..0.3) * ey, 0.0);
        parts.push((sphere_part(r, params.segments, params.rings.max(2)), offset));
    }

    let size = params.texture.as_ref().map_or(params.texture_size, |t| t.width.max(t.height));
    let tiles: Vec<Texture> = (0..parts.len())
        .map(|k| match &params.texture {
            Some(t) => t.clone(),
            None => procedural_texture(params, seed.wrapping_add(1 + k as u64)),
        })
        .collect();
    let atlas = Texture::from_fn(2 * size, 2 * size, |r, c| {
        let k = (r / size) * 2 + c / size;
        match tiles.get(k) {
            Some(t) => t.sample(((c % size) as f64 + 0.5) / size as f64, ((r % size) as f64 + 0.5) / size as f64),
            None => [0.5; 3],
        }
    });

    // keep a one-texel margin so bilinear lookups stay inside the tile
    let margin = 1.0 / (2 * size) as f64;
    let mut mesh = TexturedMesh { vertices: Vec::new(), triangles: Vec::new(), uvs: Vec::new(), texture: atlas };
    for (k, (part, offset)) in parts.into_iter().enumerate() {
        let base = mesh.vertices.len();
        let (ou, ov) = (0.5 * (k % 2) as f64, 0.5 * (k / 2) as f64);
        mesh.vertices.extend(part.vertices.iter().map(|v| v + offset));
        mesh.uvs.extend(
            part.uvs
                .iter()
                .map(|[u, v]| [ou + margin + u * (0.5 - 2.0 * margin), ov + margin + v * (0.5 - 2.0 * margin)]),
        );
        mesh.triangles.extend(part.triangles.iter().map(|t| t.map(|i| i + base)));
    }
    mesh
}

fn check_range(range: (f64, f64)) -> Result<(), SynthError> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(SynthError::InvalidRange(format!("[{lo}, {hi}]")));
    }
    Ok(())
}

/// Scales vertices along each object axis by a factor drawn uniformly from
/// the given `(min, max)` range.
pub fn deform_mesh(mesh: &TexturedMesh, scale_range: [(f64, f64); 3], seed: u64) -> Result<TexturedMesh, SynthError> {
    for r in scale_range {
        check_range(r)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = scale_range.map(|(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) });
    Ok(scale_mesh(mesh, factors))
}

pub fn scale_mesh(mesh: &TexturedMesh, factors: [f64; 3]) -> TexturedMesh {
    let s = Vector3::from(factors);
    TexturedMesh { vertices: mesh.vertices.iter().map(|v| v.component_mul(&s)).collect(), ..mesh.clone() }
}

/// Interpolates the triangle's UVs barycentrically and samples the texture
/// bilinearly there.
pub fn blend_texture_color(mesh: &TexturedMesh, triangle: usize, bary: [f64; 3]) -> Result<[f64; 3], SynthError> {
    let tri = mesh.triangles.get(triangle).ok_or_else(|| SynthError::InvalidMesh(format!("no triangle {triangle}")))?;
    if bary.iter().any(|b| !(*b >= 0.0)) || (bary.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SynthError::InvalidBarycentric(bary));
    }
    Ok(blend_unchecked(mesh, tri, bary))
}

#[inline]
pub(crate) fn blend_unchecked(mesh: &TexturedMesh, tri: &[usize; 3], bary: [f64; 3]) -> [f64; 3] {
    let mut u = 0.0;
    let mut v = 0.0;
    for k in 0..3 {
        u += bary[k] * mesh.uvs[tri[k]][0];
        v += bary[k] * mesh.uvs[tri[k]][1];
    }
    mesh.texture.sample(u, v)
}
