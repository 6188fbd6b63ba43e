//! Gaussian-splat PLY files, ASCII or binary little-endian.
//!
//! Recognised vertex properties: `x y z`, `opacity`, `scale_0..2`,
//! `rot_0..3` (w, x, y, z), `f_dc_*` and `f_rest_*`. Anything else is read
//! and dropped. Opacity is stored pre-activation and passed through the
//! logistic function unless [`PlyOptions::opacity_raw`] is set.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};

use crate::gaussian::{GaussianCloud, ShCoeffs};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlyOptions {
    /// Opacities in the file are already in [0, 1].
    pub opacity_raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

/// Scalar type used for every property when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyScalar {
    Float,
    #[default]
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn parse_text(self, tok: &str) -> Option<f64> {
        match self {
            Scalar::F32 => tok.parse::<f32>().ok().map(f64::from),
            Scalar::F64 => tok.parse::<f64>().ok(),
            Scalar::I8 => tok.parse::<i8>().ok().map(f64::from),
            Scalar::U8 => tok.parse::<u8>().ok().map(f64::from),
            Scalar::I16 => tok.parse::<i16>().ok().map(f64::from),
            Scalar::U16 => tok.parse::<u16>().ok().map(f64::from),
            Scalar::I32 => tok.parse::<i32>().ok().map(f64::from),
            Scalar::U32 => tok.parse::<u32>().ok().map(f64::from),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    binary: bool,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut lines = Vec::new();
    loop {
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            return Err(parse_err(bytes.len(), "header is not terminated by end_header"));
        };
        let raw = &bytes[offset..offset + len];
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(offset, "header line is not valid UTF-8"))?
            .trim_end_matches('\r');
        lines.push((offset, line));
        offset += len + 1;
        if line.trim() == "end_header" {
            break;
        }
    }

    let mut it = lines.into_iter();
    match it.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(0, "missing `ply` magic")),
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for (at, line) in it {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(parse_err(at, format!("unsupported PLY version `{version}`")));
                }
                binary = Some(match *fmt {
                    "ascii" => false,
                    "binary_little_endian" => true,
                    other => return Err(parse_err(at, format!("unsupported format `{other}`"))),
                });
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(at, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(at, "property before any element"))?;
                let count = Scalar::parse(count).ok_or_else(|| parse_err(at, format!("unknown type `{count}`")))?;
                let item = Scalar::parse(item).ok_or_else(|| parse_err(at, format!("unknown type `{item}`")))?;
                el.properties.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(at, "property before any element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| parse_err(at, format!("unknown type `{ty}`")))?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => {}
            _ => return Err(parse_err(at, format!("unrecognised header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_err(offset, "header has no format line"))?;
    Ok(Header {
        binary,
        elements,
        body_offset: offset,
    })
}

/// Row-wise reader over the body of either encoding.
struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
    binary: bool,
}

impl Body<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64> {
        if self.binary {
            let n = ty.size();
            if self.pos + n > self.bytes.len() {
                return Err(parse_err(self.bytes.len(), "unexpected end of binary data"));
            }
            let v = ty.read_le(&self.bytes[self.pos..self.pos + n]);
            self.pos += n;
            Ok(v)
        } else {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            let start = self.pos;
            while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(parse_err(start, "unexpected end of ASCII data"));
            }
            let tok = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
            ty.parse_text(tok)
                .ok_or_else(|| parse_err(start, format!("cannot read `{tok}` as {ty:?}")))
        }
    }

    fn skip_element(&mut self, el: &Element) -> Result<()> {
        for _ in 0..el.count {
            for p in &el.properties {
                match p {
                    Property::Scalar { ty, .. } => {
                        self.read(*ty)?;
                    }
                    Property::List { count, item } => {
                        let at = self.pos;
                        let n = self.read(*count)?;
                        if !(n >= 0.0) {
                            return Err(parse_err(at, "negative list length"));
                        }
                        for _ in 0..n as usize {
                            self.read(*item)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`logistic`]. Searches a few ulps around `ln(o / (1 − o))`
/// for a value whose logistic is exactly `o`, which always succeeds when
/// `o` was itself produced by [`logistic`]; otherwise returns the closest.
pub fn logit(o: f64) -> f64 {
    let x = (o / (1.0 - o)).ln();
    if !x.is_finite() {
        return x;
    }
    let mut best = x;
    let mut cand = x;
    for _ in 0..16 {
        let y = logistic(cand);
        if y == o {
            return cand;
        }
        if (y - o).abs() < (logistic(best) - o).abs() {
            best = cand;
        }
        cand = if y < o { cand.next_up() } else { cand.next_down() };
    }
    best
}

fn slot(names: &[&str], wanted: &str) -> Option<usize> {
    names.iter().position(|n| *n == wanted)
}

fn numbered(names: &[&str], prefix: &str) -> Vec<usize> {
    let mut found: Vec<(usize, usize)> = names
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.strip_prefix(prefix)?.parse::<usize>().ok().map(|k| (k, i)))
        .collect();
    found.sort_unstable();
    found.into_iter().map(|(_, i)| i).collect()
}

/// Parses a PLY file already in memory.
pub fn parse_ply(bytes: &[u8], opts: PlyOptions) -> Result<GaussianCloud> {
    let header = parse_header(bytes)?;
    let Some(vi) = header.elements.iter().position(|e| e.name == "vertex") else {
        return Err(Error::Schema("no `vertex` element".into()));
    };
    let vertex = &header.elements[vi];
    let mut names = Vec::new();
    let mut types = Vec::new();
    for p in &vertex.properties {
        match p {
            Property::Scalar { name, ty } => {
                names.push(name.as_str());
                types.push(*ty);
            }
            Property::List { .. } => return Err(Error::Schema("list properties on `vertex` are not supported".into())),
        }
    }
    let (Some(ix), Some(iy), Some(iz)) = (slot(&names, "x"), slot(&names, "y"), slot(&names, "z")) else {
        return Err(Error::Schema("vertex element lacks x, y or z".into()));
    };
    let i_op = slot(&names, "opacity");
    let i_scale: Vec<usize> = ["scale_0", "scale_1", "scale_2"]
        .iter()
        .filter_map(|n| slot(&names, n))
        .collect();
    let i_rot: Vec<usize> = ["rot_0", "rot_1", "rot_2", "rot_3"]
        .iter()
        .filter_map(|n| slot(&names, n))
        .collect();
    let i_dc = numbered(&names, "f_dc_");
    let i_rest = numbered(&names, "f_rest_");
    if !(i_scale.is_empty() || i_scale.len() == 3) {
        return Err(Error::Schema("scale_0..2 must be all present or all absent".into()));
    }
    if !(i_rot.is_empty() || i_rot.len() == 4) {
        return Err(Error::Schema("rot_0..3 must be all present or all absent".into()));
    }

    let mut body = Body {
        bytes,
        pos: header.body_offset,
        binary: header.binary,
    };
    for el in &header.elements[..vi] {
        body.skip_element(el)?;
    }

    let n = vertex.count;
    let mut row = vec![0.0; names.len()];
    let mut positions = Vec::with_capacity(n);
    let mut opacities = Vec::with_capacity(n);
    let mut scales = Vec::new();
    let mut rotations = Vec::new();
    let sh_width = i_dc.len() + i_rest.len();
    let mut sh = Vec::with_capacity(n * sh_width);
    let mut bad_positions = Vec::new();
    let mut bad_opacity = Vec::new();
    for v in 0..n {
        for (slot, ty) in row.iter_mut().zip(&types) {
            *slot = body.read(*ty)?;
        }
        let p = Point3::new(row[ix], row[iy], row[iz]);
        if !p.iter().all(|c| c.is_finite()) {
            bad_positions.push(v);
        }
        positions.push(p);
        let o = match i_op {
            Some(k) if opts.opacity_raw => row[k],
            Some(k) => logistic(row[k]),
            None => 1.0,
        };
        if !(0.0..=1.0).contains(&o) {
            bad_opacity.push(v);
        }
        opacities.push(o);
        if !i_scale.is_empty() {
            scales.push(Vector3::new(row[i_scale[0]], row[i_scale[1]], row[i_scale[2]]));
        }
        if !i_rot.is_empty() {
            let q = Quaternion::new(row[i_rot[0]], row[i_rot[1]], row[i_rot[2]], row[i_rot[3]]);
            let n2 = q.norm_squared();
            if !(n2 > 0.0 && n2.is_finite()) {
                bad_positions.push(v);
                rotations.push(UnitQuaternion::identity());
            } else if (n2 - 1.0).abs() <= 4.0 * f64::EPSILON {
                rotations.push(UnitQuaternion::new_unchecked(q));
            } else {
                rotations.push(UnitQuaternion::from_quaternion(q));
            }
        }
        sh.extend(i_dc.iter().chain(&i_rest).map(|&k| row[k]));
    }
    if !bad_positions.is_empty() {
        bad_positions.sort_unstable();
        bad_positions.dedup();
        return Err(Error::Data { indices: bad_positions });
    }
    if !bad_opacity.is_empty() {
        return Err(Error::Data { indices: bad_opacity });
    }

    let mut cloud = GaussianCloud::new(positions, opacities)?;
    if !scales.is_empty() {
        cloud = cloud.with_scales(scales)?;
    }
    if !rotations.is_empty() {
        cloud = cloud.with_rotations(rotations)?;
    }
    if sh_width > 0 {
        cloud = cloud.with_sh(ShCoeffs {
            per_gaussian: sh_width,
            values: sh,
        })?;
    }
    Ok(cloud)
}

pub fn load_ply_gaussians(path: impl AsRef<Path>, opts: PlyOptions) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes, opts)
}

/// Names of the `f_*` columns written for `width` SH values per Gaussian:
/// three DC terms, the rest as `f_rest_*`.
fn sh_names(width: usize) -> Vec<String> {
    let dc = width.min(3);
    (0..dc)
        .map(|i| format!("f_dc_{i}"))
        .chain((0..width - dc).map(|i| format!("f_rest_{i}")))
        .collect()
}

/// Serialises a cloud. Opacities are written pre-activation unless
/// `opts.opacity_raw`.
pub fn write_ply(cloud: &GaussianCloud, format: PlyFormat, scalar: PlyScalar, opts: PlyOptions) -> Vec<u8> {
    let mut names: Vec<String> = ["x", "y", "z", "opacity"].iter().map(|s| s.to_string()).collect();
    if cloud.scales().is_some() {
        names.extend((0..3).map(|i| format!("scale_{i}")));
    }
    if cloud.rotations().is_some() {
        names.extend((0..4).map(|i| format!("rot_{i}")));
    }
    if let Some(sh) = cloud.sh() {
        names.extend(sh_names(sh.per_gaussian));
    }
    let ty = match scalar {
        PlyScalar::Float => "float",
        PlyScalar::Double => "double",
    };
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(out, "ply\nformat {fmt} 1.0\nelement vertex {}", cloud.len()).unwrap();
    for n in &names {
        writeln!(out, "property {ty} {n}").unwrap();
    }
    writeln!(out, "end_header").unwrap();

    let mut row = Vec::with_capacity(names.len());
    for i in 0..cloud.len() {
        row.clear();
        row.extend(cloud.positions()[i].iter());
        let o = cloud.opacities()[i];
        row.push(if opts.opacity_raw { o } else { logit(o) });
        if let Some(s) = cloud.scales() {
            row.extend(s[i].iter());
        }
        if let Some(r) = cloud.rotations() {
            let q = r[i].quaternion();
            row.extend([q.w, q.i, q.j, q.k]);
        }
        if let Some(sh) = cloud.sh() {
            row.extend_from_slice(sh.row(i));
        }
        match (format, scalar) {
            (PlyFormat::Ascii, PlyScalar::Double) => {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
            (PlyFormat::Ascii, PlyScalar::Float) => {
                let line: Vec<String> = row.iter().map(|&v| (v as f32).to_string()).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
            (PlyFormat::BinaryLittleEndian, PlyScalar::Double) => {
                row.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
            (PlyFormat::BinaryLittleEndian, PlyScalar::Float) => {
                row.iter()
                    .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes()));
            }
        }
    }
    out
}

pub fn save_ply(
    path: impl AsRef<Path>,
    cloud: &GaussianCloud,
    format: PlyFormat,
    scalar: PlyScalar,
    opts: PlyOptions,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_ply(cloud, format, scalar, opts)).map_err(|e| Error::io(path, e))
}
