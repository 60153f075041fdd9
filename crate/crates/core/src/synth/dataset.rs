//! On-disk synthetic dataset: a `dataset.json` index, per-object models and
//! one directory per rendered scene.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    compose_scene, deform_mesh, gen_procedural_mesh, place_objects, MeshKind, MeshParams, PlacementParams, SceneObject,
    SceneSpec, SynthError, Texture, TexturedMesh,
};
use crate::geom::Pose;
use crate::rgbd::io::{encode_depth_png, encode_mask_png, encode_rgb_png};
use crate::rgbd::Intrinsics;

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub scenes: usize,
    pub objects_per_scene: usize,
    pub seed: u64,
    /// PNG images used as object textures instead of procedural ones.
    pub textures_dir: Option<PathBuf>,
    pub intrinsics: Intrinsics,
    /// Object extent range per axis (meters).
    pub size_range: (f64, f64),
    pub deform_range: (f64, f64),
    pub background_depth: Option<f64>,
    pub placement: PlacementParams,
    /// Leading fraction of scenes labeled as the support split.
    pub support_fraction: f64,
    /// Surface samples stored per object model for ADD/ADDS.
    pub model_points: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            scenes: 40,
            objects_per_scene: 2,
            seed: 0,
            textures_dir: None,
            intrinsics: default_intrinsics(),
            size_range: (0.06, 0.12),
            deform_range: (0.9, 1.1),
            background_depth: Some(1.0),
            placement: PlacementParams::default(),
            support_fraction: 0.5,
            model_points: 1000,
        }
    }
}

pub fn default_intrinsics() -> Intrinsics {
    Intrinsics { fx: 600.0, fy: 600.0, cx: 319.5, cy: 239.5, width: 640, height: 480 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: String,
    pub kind: MeshKind,
    pub symmetric: bool,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub version: u32,
    pub seed: u64,
    pub intrinsics: Intrinsics,
    pub objects: Vec<ObjectEntry>,
    pub support_scenes: Vec<String>,
    pub query_scenes: Vec<String>,
}

/// Stored object model: evaluation points plus the render mesh geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub id: String,
    pub kind: MeshKind,
    pub symmetric: bool,
    pub diameter: f64,
    pub points: Vec<[f64; 3]>,
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub uvs: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObjectMeta {
    pub id: String,
    pub visible_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub scene_id: String,
    pub seed: u64,
    pub spec_digest: String,
    pub background_depth: Option<f64>,
    pub objects: Vec<SceneObjectMeta>,
}

pub fn scene_name(index: usize) -> String {
    format!("scene_{index:04}")
}

pub fn object_name(index: usize) -> String {
    format!("obj_{index:02}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SynthError {
    SynthError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("serializable");
    s.push(b'\n');
    s
}

fn load_textures(dir: &Path) -> Result<Vec<Texture>, SynthError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(SynthError::Io(format!("{}: no PNG textures", dir.display())));
    }
    paths.iter().map(|p| Texture::load_png(p)).collect()
}

/// Catalogue entry, mesh and model surface samples of one object.
pub type LibraryObject = (ObjectEntry, TexturedMesh, Vec<Vector3<f64>>);

/// Deterministic object library for a dataset seed.
pub fn build_objects(spec: &DatasetSpec) -> Result<Vec<LibraryObject>, SynthError> {
    let textures = match &spec.textures_dir {
        Some(dir) => load_textures(dir)?,
        None => Vec::new(),
    };
    let (lo, hi) = spec.size_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(SynthError::InvalidRange(format!("size range [{lo}, {hi}]")));
    }
    let kinds = [MeshKind::Composite, MeshKind::Box, MeshKind::Cylinder, MeshKind::Sphere];
    (0..spec.objects_per_scene)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1 + i as u64);
            let kind = kinds[i % kinds.len()];
            let extent: [f64; 3] = std::array::from_fn(|_| if lo == hi { lo } else { rng.random_range(lo..hi) });
            let texture = (!textures.is_empty()).then(|| textures[(i + spec.seed as usize) % textures.len()].clone());
            let params = MeshParams { extent, texture, ..Default::default() };
            let mesh = gen_procedural_mesh(kind, &params, rng.next_u64())?;
            let mesh = deform_mesh(&mesh, [spec.deform_range; 3], rng.next_u64())?;
            let points = mesh.surface_samples(spec.model_points, rng.next_u64());
            let cloud = crate::geom::PointCloud::new(points.clone());
            let diameter = crate::metrics::diameter(&cloud).map_err(|e| SynthError::InvalidMesh(e.to_string()))?;
            let entry = ObjectEntry { id: object_name(i), kind, symmetric: kind.is_symmetric(), diameter };
            Ok((entry, mesh, points))
        })
        .collect()
}

fn mesh_digest(hasher: &mut Sha256, mesh: &TexturedMesh) {
    for v in &mesh.vertices {
        for c in v.iter() {
            hasher.update(c.to_le_bytes());
        }
    }
    for t in &mesh.triangles {
        for i in t {
            hasher.update((*i as u64).to_le_bytes());
        }
    }
    for uv in &mesh.uvs {
        hasher.update(uv[0].to_le_bytes());
        hasher.update(uv[1].to_le_bytes());
    }
    hasher.update((mesh.texture.width as u64).to_le_bytes());
    for px in &mesh.texture.data {
        for c in px {
            hasher.update(c.to_le_bytes());
        }
    }
}

/// SHA-256 over the full scene description.
pub fn spec_digest(spec: &SceneSpec, ids: &[String], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(serde_json::to_vec(&spec.intrinsics).expect("serializable"));
    h.update(serde_json::to_vec(&spec.background_depth).expect("serializable"));
    h.update(spec.depth_noise.to_le_bytes());
    for (id, obj) in ids.iter().zip(&spec.objects) {
        h.update(id.as_bytes());
        h.update(serde_json::to_vec(&obj.pose).expect("serializable"));
        mesh_digest(&mut h, &obj.mesh);
    }
    hex::encode(h.finalize())
}

struct RenderedScene {
    files: Vec<(String, Vec<u8>)>,
}

fn render_scene(spec: &DatasetSpec, objects: &[LibraryObject], index: usize) -> Result<RenderedScene, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1 << 32 | index as u64);
    let scene_seed = rng.next_u64();
    let meshes: Vec<&TexturedMesh> = objects.iter().map(|o| &o.1).collect();
    let poses = place_objects(&meshes, &spec.intrinsics, &spec.placement, scene_seed)?;
    let scene = SceneSpec {
        objects: objects.iter().zip(&poses).map(|(o, p)| SceneObject { mesh: o.1.clone(), pose: *p }).collect(),
        intrinsics: spec.intrinsics,
        background_depth: spec.background_depth,
        depth_noise: 0.0,
    };
    let ids: Vec<String> = objects.iter().map(|o| o.0.id.clone()).collect();
    let out = compose_scene(&scene, scene_seed);
    let (w, h) = (spec.intrinsics.width, spec.intrinsics.height);
    let enc = |e: crate::rgbd::RgbdError| SynthError::Io(e.to_string());
    let mut files = vec![
        ("rgb.png".to_string(), encode_rgb_png(w, h, &out.patch.rgb).map_err(enc)?),
        ("depth.png".to_string(), encode_depth_png(w, h, &out.patch.depth).map_err(enc)?),
        ("intrinsics.json".to_string(), to_json(&spec.intrinsics)),
    ];
    for ((id, mask), pose) in ids.iter().zip(&out.masks).zip(&out.poses) {
        files.push((format!("mask_{id}.png"), encode_mask_png(w, h, mask).map_err(enc)?));
        files.push((format!("gt_{id}.json"), to_json(pose)));
    }
    let meta = SceneMeta {
        scene_id: scene_name(index),
        seed: scene_seed,
        spec_digest: spec_digest(&scene, &ids, scene_seed),
        background_depth: spec.background_depth,
        objects: ids
            .iter()
            .zip(&out.masks)
            .map(|(id, m)| SceneObjectMeta { id: id.clone(), visible_pixels: m.iter().filter(|&&b| b).count() })
            .collect(),
    };
    files.push(("meta.json".to_string(), to_json(&meta)));
    Ok(RenderedScene { files })
}

/// Renders the whole dataset into `out`. Scenes render in parallel; the
/// output is byte-identical for a fixed spec.
pub fn generate_dataset(spec: &DatasetSpec, out: &Path) -> Result<DatasetIndex, SynthError> {
    if spec.scenes == 0 || spec.objects_per_scene == 0 {
        return Err(SynthError::InvalidParams("need at least one scene and one object".into()));
    }
    if !(0.0..=1.0).contains(&spec.support_fraction) {
        return Err(SynthError::InvalidRange(format!("support fraction {}", spec.support_fraction)));
    }
    spec.intrinsics.validate().map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    let objects = build_objects(spec)?;

    let scenes: Vec<RenderedScene> =
        (0..spec.scenes).into_par_iter().map(|i| render_scene(spec, &objects, i)).collect::<Result<_, _>>()?;

    fs::create_dir_all(out.join("models")).map_err(|e| io_err(out, e))?;
    for (entry, mesh, points) in &objects {
        let model = ModelFile {
            id: entry.id.clone(),
            kind: entry.kind,
            symmetric: entry.symmetric,
            diameter: entry.diameter,
            points: points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            vertices: mesh.vertices.iter().map(|p| [p.x, p.y, p.z]).collect(),
            triangles: mesh.triangles.clone(),
            uvs: mesh.uvs.clone(),
        };
        write(&out.join("models").join(format!("{}.json", entry.id)), &to_json(&model))?;
        let tex = encode_rgb_png(mesh.texture.width, mesh.texture.height, &mesh.texture.data)
            .map_err(|e| SynthError::Io(e.to_string()))?;
        write(&out.join("models").join(format!("{}_texture.png", entry.id)), &tex)?;
    }
    for (i, scene) in scenes.iter().enumerate() {
        let dir = out.join(scene_name(i));
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for (name, bytes) in &scene.files {
            write(&dir.join(name), bytes)?;
        }
    }
    let n_support = ((spec.scenes as f64) * spec.support_fraction).round() as usize;
    let index = DatasetIndex {
        version: DATASET_VERSION,
        seed: spec.seed,
        intrinsics: spec.intrinsics,
        objects: objects.iter().map(|o| o.0.clone()).collect(),
        support_scenes: (0..n_support).map(scene_name).collect(),
        query_scenes: (n_support..spec.scenes).map(scene_name).collect(),
    };
    write(&out.join("dataset.json"), &to_json(&index))?;
    Ok(index)
}

/// Object pose relative to the camera, echoed from the generator.
pub fn read_pose(path: &Path) -> Result<Pose, SynthError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}
