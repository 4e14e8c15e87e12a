//! Reader and writer for the Wavefront OBJ subset used by mesh assets.
//!
//! Supported: `v`, `f` (polygons are fan-triangulated; `v`, `v/vt`, `v//vn`
//! and `v/vt/vn` references, negative indices), and `g`. Each distinct group
//! name becomes a part, numbered from 1 in order of first appearance. Faces
//! before any `g` line belong to an implicit `default` group. `vn`, `vt`,
//! `o`, `s`, `usemtl` and `mtllib` are accepted and ignored.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Result, SimError};
use crate::geometry::Vec3;
use crate::mesh::TriMesh;

pub fn parse_obj(text: &str, source_name: &str) -> Result<TriMesh> {
    let mut mesh = TriMesh::default();
    let mut groups: HashMap<String, u16> = HashMap::new();
    let mut current: Option<u16> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| SimError::parse(source_name, lineno, format!("bad vertex: {e}")))?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(SimError::parse(source_name, lineno, "vertex needs three finite coordinates"));
                }
                mesh.positions.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "g" => {
                let name = tokens.collect::<Vec<_>>().join(" ");
                let name = if name.is_empty() { "default".to_string() } else { name };
                current = Some(group_id(&mut groups, &mut mesh, name, source_name, lineno)?);
            }
            "f" => {
                let n = mesh.positions.len() as i64;
                let idx = tokens
                    .map(|t| face_index(t, n).ok_or_else(|| SimError::parse(source_name, lineno, format!("bad face index {t:?}"))))
                    .collect::<Result<Vec<u32>>>()?;
                if idx.len() < 3 {
                    return Err(SimError::parse(source_name, lineno, "face needs at least three vertices"));
                }
                let part = match current {
                    Some(p) => p,
                    None => {
                        let p = group_id(&mut groups, &mut mesh, "default".into(), source_name, lineno)?;
                        current = Some(p);
                        p
                    }
                };
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                    mesh.triangle_parts.push(part);
                }
            }
            "vn" | "vt" | "o" | "s" | "usemtl" | "mtllib" | "l" | "p" => {}
            other => {
                log::debug!("{source_name}:{lineno}: ignoring OBJ directive {other:?}");
            }
        }
    }
    Ok(mesh)
}

fn group_id(
    groups: &mut HashMap<String, u16>,
    mesh: &mut TriMesh,
    name: String,
    source_name: &str,
    lineno: usize,
) -> Result<u16> {
    if let Some(&id) = groups.get(&name) {
        return Ok(id);
    }
    if mesh.part_names.len() >= u16::MAX as usize - 1 {
        return Err(SimError::parse(source_name, lineno, "too many groups"));
    }
    mesh.part_names.push(name.clone());
    let id = mesh.part_names.len() as u16;
    groups.insert(name, id);
    Ok(id)
}

fn face_index(token: &str, vertex_count: i64) -> Option<u32> {
    let v: i64 = token.split('/').next()?.parse().ok()?;
    let i = if v < 0 { vertex_count + v } else { v - 1 };
    (0..vertex_count).contains(&i).then_some(i as u32)
}

/// Writes all groups up front in part order, then faces in triangle order,
/// switching groups as needed, so that reading back preserves part ids and
/// triangle order.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for p in &mesh.positions {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for name in &mesh.part_names {
        let _ = writeln!(out, "g {name}");
    }
    let mut current = 0u16;
    for (t, &part) in mesh.triangles.iter().zip(&mesh.triangle_parts) {
        if part != current {
            let _ = writeln!(out, "g {}", mesh.part_names[part as usize - 1]);
            current = part;
        }
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}
