//! Asset catalog: mesh loading, canonicalization and lookup by asset path.
//!
//! A manifest is a JSON Lines file with one asset record per line. Blank
//! lines and lines starting with `#` are skipped. Example:
//!
//! ```text
//! {"asset_path": "/Game/Props/SM_Crate.SM_Crate", "category": "crate", "canonical_scale": 1.0,
//!  "pose_alignment": [0, 90, 0], "caption": "a wooden crate", "mesh_file": "crate.obj"}
//! ```
//!
//! (shown wrapped; each record must be on a single line). Geometry comes from
//! `mesh_file` (OBJ, relative to the manifest), `primitive`, or for composite
//! assets a `components` list of either.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{Pose, Rotator, Vec3};
use crate::mesh::{make_primitive, PrimitiveSpec, TriMesh};
use crate::obj::parse_obj;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetKind {
    #[default]
    Static,
    Composite,
}

#[derive(Debug, Clone)]
pub struct AssetRecord {
    pub asset_path: String,
    pub category: String,
    pub canonical_scale: f64,
    pub pose_alignment: Rotator,
    /// Bottom-center of the mesh in its local frame. Always zero once the
    /// mesh is canonicalized, since the pivot is moved there.
    pub sampling_offset: Vec3,
    pub caption: String,
    pub kind: AssetKind,
    pub extent_unavailable: bool,
    /// Canonicalized geometry.
    pub mesh: Arc<TriMesh>,
}

impl AssetRecord {
    pub fn extent(&self) -> Vec3 {
        self.mesh.aabb().extent()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentEntry {
    #[serde(default)]
    mesh_file: Option<String>,
    #[serde(default)]
    primitive: Option<PrimitiveSpec>,
    #[serde(default)]
    offset: Option<Vec3>,
    #[serde(default)]
    rotation: Option<Rotator>,
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestEntry {
    asset_path: String,
    #[serde(default)]
    category: String,
    #[serde(default = "one")]
    canonical_scale: f64,
    #[serde(default)]
    pose_alignment: Rotator,
    #[serde(default)]
    caption: String,
    #[serde(default)]
    kind: AssetKind,
    #[serde(default)]
    mesh_file: Option<String>,
    #[serde(default)]
    primitive: Option<PrimitiveSpec>,
    #[serde(default)]
    components: Vec<ComponentEntry>,
    #[serde(default)]
    extent_unavailable: bool,
}

const MANIFEST_FIELDS: &[&str] = &[
    "asset_path",
    "category",
    "canonical_scale",
    "pose_alignment",
    "caption",
    "kind",
    "mesh_file",
    "primitive",
    "components",
    "extent_unavailable",
];

fn one() -> f64 {
    1.0
}

/// Rotates by `alignment`, scales by `scale`, then translates so the
/// bottom-center of the bounding box sits at the origin.
pub fn canonicalize(raw: &TriMesh, alignment: Rotator, scale: f64) -> Result<TriMesh> {
    if raw.is_empty() || raw.positions.is_empty() {
        return Err(SimError::AssetEmpty("mesh has no triangles".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(SimError::invalid(format!("canonical_scale must be positive, got {scale}")));
    }
    let mut m = raw.transformed(&Pose::new(Vec3::ZERO, alignment, scale).affine());
    let b = m.aabb();
    let c = b.center();
    m.translate(Vec3::new(-c.x, -c.y, -b.min.z));
    Ok(m)
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    records: IndexMap<String, Arc<AssetRecord>>,
    manifest: Option<String>,
}

impl Catalog {
    pub fn new() -> Catalog {
        Catalog::default()
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Catalog> {
        let path = manifest_path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cat = Catalog::from_manifest_str(&text, &root, &path.display().to_string())?;
        cat.manifest = Some(path.display().to_string());
        Ok(cat)
    }

    pub fn from_manifest_str(text: &str, root: &Path, source_name: &str) -> Result<Catalog> {
        let mut cat = Catalog::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| SimError::parse(source_name, lineno, e.to_string()))?;
            let Some(obj) = value.as_object() else {
                return Err(SimError::parse(source_name, lineno, "expected a JSON object"));
            };
            for key in obj.keys().filter(|k| !MANIFEST_FIELDS.contains(&k.as_str())) {
                log::warn!("{source_name}:{lineno}: ignoring unknown field {key:?}");
            }
            let entry: ManifestEntry = serde_json::from_value(value)
                .map_err(|e| SimError::parse(source_name, lineno, e.to_string()))?;
            if cat.records.contains_key(&entry.asset_path) {
                return Err(SimError::parse(
                    source_name,
                    lineno,
                    format!("duplicate asset_path {:?}", entry.asset_path),
                ));
            }
            let record = build_record(entry, root).map_err(|e| match e {
                SimError::InvalidArgument(msg) => SimError::parse(source_name, lineno, msg),
                other => other,
            })?;
            cat.records.insert(record.asset_path.clone(), Arc::new(record));
        }
        Ok(cat)
    }

    /// A handful of primitive shapes under engine-style paths, available
    /// without a manifest.
    pub fn builtin() -> Catalog {
        let entries = [
            ("/Engine/BasicShapes/Cube.Cube", "cube", PrimitiveSpec::Box { size: [100.0; 3], parts: true }),
            ("/Engine/BasicShapes/Sphere.Sphere", "sphere", PrimitiveSpec::Sphere { radius: 50.0, subdivisions: 3 }),
            (
                "/Engine/BasicShapes/Cylinder.Cylinder",
                "cylinder",
                PrimitiveSpec::Cylinder { radius: 50.0, height: 100.0, segments: 32, parts: true },
            ),
            ("/Engine/BasicShapes/Plane.Plane", "plane", PrimitiveSpec::Plane { size: [100.0, 100.0] }),
        ];
        let mut cat = Catalog::new();
        for (path, category, spec) in entries {
            let rec = AssetRecord::from_primitive(path, category, &spec, 1.0).expect("builtin primitive");
            cat.insert(rec).expect("unique builtin paths");
        }
        cat
    }

    pub fn insert(&mut self, record: AssetRecord) -> Result<()> {
        if self.records.contains_key(&record.asset_path) {
            return Err(SimError::invalid(format!("duplicate asset_path {:?}", record.asset_path)));
        }
        self.records.insert(record.asset_path.clone(), Arc::new(record));
        Ok(())
    }

    pub fn get(&self, asset_path: &str) -> Result<&Arc<AssetRecord>> {
        self.records
            .get(asset_path)
            .ok_or_else(|| SimError::AssetNotFound(asset_path.to_string()))
    }

    pub fn contains(&self, asset_path: &str) -> bool {
        self.records.contains_key(asset_path)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<AssetRecord>> {
        self.records.values()
    }

    /// Assets of one category, in manifest order.
    pub fn by_category<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a Arc<AssetRecord>> + 'a {
        self.records.values().filter(move |r| r.category == category)
    }

    pub fn manifest(&self) -> Option<&str> {
        self.manifest.as_deref()
    }

    pub fn set_manifest(&mut self, manifest: Option<String>) {
        self.manifest = manifest;
    }

    pub fn get_mesh_extent(&self, asset_path: &str) -> Result<Vec3> {
        let rec = self.get(asset_path)?;
        if rec.extent_unavailable {
            return Err(SimError::MeshExtentUnavailable(asset_path.to_string()));
        }
        Ok(rec.extent())
    }
}

pub fn load_catalog(manifest_path: impl AsRef<Path>) -> Result<Catalog> {
    Catalog::load(manifest_path)
}

pub fn get_mesh_extent(catalog: &Catalog, asset_path: &str) -> Result<Vec3> {
    catalog.get_mesh_extent(asset_path)
}

impl AssetRecord {
    pub fn from_primitive(
        asset_path: &str,
        category: &str,
        spec: &PrimitiveSpec,
        canonical_scale: f64,
    ) -> Result<AssetRecord> {
        let raw = make_primitive(spec)?;
        AssetRecord::from_mesh(asset_path, category, &raw, Rotator::ZERO, canonical_scale)
    }

    pub fn from_mesh(
        asset_path: &str,
        category: &str,
        raw: &TriMesh,
        pose_alignment: Rotator,
        canonical_scale: f64,
    ) -> Result<AssetRecord> {
        let mesh = canonicalize(raw, pose_alignment, canonical_scale)
            .map_err(|e| relabel_empty(e, asset_path))?;
        Ok(AssetRecord {
            asset_path: asset_path.to_string(),
            category: category.to_string(),
            canonical_scale,
            pose_alignment,
            sampling_offset: Vec3::ZERO,
            caption: String::new(),
            kind: AssetKind::Static,
            extent_unavailable: false,
            mesh: Arc::new(mesh),
        })
    }
}

fn relabel_empty(e: SimError, asset_path: &str) -> SimError {
    match e {
        SimError::AssetEmpty(_) => SimError::AssetEmpty(asset_path.to_string()),
        other => other,
    }
}

fn load_geometry(
    mesh_file: Option<&str>,
    primitive: Option<&PrimitiveSpec>,
    root: &Path,
    asset_path: &str,
) -> Result<TriMesh> {
    match (mesh_file, primitive) {
        (Some(file), None) => {
            let p: PathBuf = root.join(file);
            let text = std::fs::read_to_string(&p)
                .map_err(|_| SimError::AssetNotFound(format!("{asset_path}: missing mesh file {}", p.display())))?;
            parse_obj(&text, &p.display().to_string())
        }
        (None, Some(spec)) => make_primitive(spec),
        (Some(_), Some(_)) => Err(SimError::invalid("give either mesh_file or primitive, not both")),
        (None, None) => Err(SimError::invalid("entry needs mesh_file, primitive or components")),
    }
}

fn build_record(entry: ManifestEntry, root: &Path) -> Result<AssetRecord> {
    let raw = match entry.kind {
        AssetKind::Static => {
            if !entry.components.is_empty() {
                return Err(SimError::invalid("components are only allowed on composite assets"));
            }
            load_geometry(entry.mesh_file.as_deref(), entry.primitive.as_ref(), root, &entry.asset_path)?
        }
        AssetKind::Composite => {
            if entry.components.is_empty() {
                return Err(SimError::invalid("composite asset needs at least one component"));
            }
            let mut mesh = TriMesh::default();
            for c in &entry.components {
                let part = load_geometry(c.mesh_file.as_deref(), c.primitive.as_ref(), root, &entry.asset_path)?;
                let pose = Pose::new(c.offset.unwrap_or_default(), c.rotation.unwrap_or_default(), 1.0);
                mesh.append(&part.transformed(&pose.affine()));
            }
            mesh
        }
    };
    let mut rec = AssetRecord::from_mesh(
        &entry.asset_path,
        &entry.category,
        &raw,
        entry.pose_alignment,
        entry.canonical_scale,
    )?;
    rec.caption = entry.caption;
    rec.kind = entry.kind;
    rec.extent_unavailable = entry.extent_unavailable;
    Ok(rec)
}
