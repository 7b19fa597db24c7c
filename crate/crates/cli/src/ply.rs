//! Gaussian-splat scenes as binary little-endian PLY, in the property layout
//! used by common splatting tools.
//!
//! Vertex properties, all `float`: `x y z nx ny nz f_dc_0..2 f_rest_* opacity
//! scale_0..2 rot_0..3`. Opacity is stored as a logit, scales as logarithms,
//! rotations as `(w, x, y, z)`. `f_rest` is channel-major: all higher-order
//! coefficients of red, then green, then blue. The background colour travels in
//! a `background r g b` header comment.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use gsedit_core::scene::{GaussianSplat, Scene};
use gsedit_core::sh;
use ply_rs_bw::parser::Parser;
use ply_rs_bw::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType, ScalarType,
};
use ply_rs_bw::writer::Writer;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed PLY: {0}")]
    Malformed(String),
    #[error("missing property {0}")]
    MissingProperty(String),
    #[error("invalid scene: {0}")]
    Invalid(#[from] gsedit_core::Error),
}

const BACKGROUND_COMMENT: &str = "background";

fn required_properties() -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z"].map(String::from).to_vec();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

fn property_order(sh_degree: usize) -> Vec<String> {
    let rest = 3 * (sh::coeff_count(sh_degree) - 1);
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"].map(String::from).to_vec();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.extend((0..rest).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

/// Writes `scene` as binary PLY.
pub fn write_scene(out: &mut impl Write, scene: &Scene) -> Result<(), PlyError> {
    scene.validate()?;
    let k = scene.sh_coeffs();
    let names = property_order(scene.sh_degree);
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = Encoding::BinaryLittleEndian;
    let [r, g, b] = scene.background;
    ply.header.comments.push(format!("{BACKGROUND_COMMENT} {r:?} {g:?} {b:?}"));
    let mut vertex = ElementDef::new("vertex".into());
    for name in &names {
        vertex.properties.add(PropertyDef::new(name.clone(), PropertyType::Scalar(ScalarType::Float)));
    }
    vertex.count = scene.len();
    ply.header.elements.add(vertex);

    let rows: Vec<DefaultElement> = scene
        .splats
        .iter()
        .map(|s| {
            let mut values = Vec::with_capacity(names.len());
            values.extend(s.position);
            values.extend([0.0; 3]);
            values.extend(s.sh[0]);
            for c in 0..3 {
                values.extend(s.sh[1..k].iter().map(|coef| coef[c]));
            }
            values.push(s.opacity_logit);
            values.extend(s.log_scale);
            values.extend(s.rotation);
            let mut row = DefaultElement::new();
            for (name, v) in names.iter().zip(values) {
                row.insert(name.clone(), Property::Float(v));
            }
            row
        })
        .collect();
    ply.payload.insert("vertex".into(), rows);
    Writer::new()
        .write_ply(out, &mut ply)
        .map_err(|e| PlyError::Malformed(e.to_string()))?;
    Ok(())
}

fn parse_background(comments: &[String]) -> Result<[f64; 3], PlyError> {
    let Some(rest) = comments
        .iter()
        .find_map(|c| c.strip_prefix(BACKGROUND_COMMENT).map(str::trim))
    else {
        return Ok([1.0; 3]);
    };
    let v: Vec<f64> = rest
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| PlyError::Malformed(format!("bad background comment '{rest}'")))?;
    v.try_into()
        .map_err(|_| PlyError::Malformed(format!("bad background comment '{rest}'")))
}

fn scalar(row: &DefaultElement, name: &str) -> Result<f32, PlyError> {
    match row.get(name) {
        Some(Property::Float(v)) => Ok(*v),
        Some(Property::Double(v)) => Ok(*v as f32),
        Some(other) => Err(PlyError::Malformed(format!("property {name} has non-float type {other:?}"))),
        None => Err(PlyError::MissingProperty(name.into())),
    }
}

/// Reads a binary or ASCII PLY scene.
///
/// Files without `f_rest_*` properties load as SH degree 0.
pub fn read_scene(input: &mut impl Read) -> Result<Scene, PlyError> {
    let ply = Parser::<DefaultElement>::new()
        .read_ply(input)
        .map_err(|e| PlyError::Malformed(e.to_string()))?;
    let def = ply
        .header
        .elements
        .get("vertex")
        .ok_or_else(|| PlyError::Malformed("no vertex element".into()))?;
    for name in required_properties() {
        if !def.properties.contains_key(&name) {
            return Err(PlyError::MissingProperty(name));
        }
    }
    let n_rest = def.properties.keys().filter(|k| k.starts_with("f_rest_")).count();
    let sh_degree = (0..=sh::MAX_SH_DEGREE)
        .find(|&d| 3 * (sh::coeff_count(d) - 1) == n_rest)
        .ok_or_else(|| PlyError::Malformed(format!("{n_rest} f_rest properties match no SH degree")))?;
    for i in 0..n_rest {
        let name = format!("f_rest_{i}");
        if !def.properties.contains_key(&name) {
            return Err(PlyError::MissingProperty(name));
        }
    }
    let background = parse_background(&ply.header.comments)?;
    let k = sh::coeff_count(sh_degree);
    let empty = Vec::new();
    let rows = ply.payload.get("vertex").unwrap_or(&empty);
    let splats = rows
        .iter()
        .map(|row| {
            let f = |name: &str| scalar(row, name);
            let mut sh = vec![[0.0f32; 3]; k];
            sh[0] = [f("f_dc_0")?, f("f_dc_1")?, f("f_dc_2")?];
            for c in 0..3 {
                for j in 1..k {
                    sh[j][c] = f(&format!("f_rest_{}", c * (k - 1) + j - 1))?;
                }
            }
            Ok(GaussianSplat {
                position: [f("x")?, f("y")?, f("z")?],
                rotation: [f("rot_0")?, f("rot_1")?, f("rot_2")?, f("rot_3")?],
                log_scale: [f("scale_0")?, f("scale_1")?, f("scale_2")?],
                opacity_logit: f("opacity")?,
                sh,
            })
        })
        .collect::<Result<Vec<_>, PlyError>>()?;
    let scene = Scene::with_splats(splats, sh_degree, background);
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), PlyError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_scene(&mut out, scene)?;
    out.flush()?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<Scene, PlyError> {
    read_scene(&mut BufReader::new(File::open(path)?))
}
