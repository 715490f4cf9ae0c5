//! PLY tables (ASCII and binary little-endian) plus point-cloud and
//! Gaussian-map conventions on top of them.

use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use nalgebra::{Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{logit, Gaussian, GaussianMap, PointCloud};

/// Zeroth-order spherical harmonic constant; color = 0.5 + SH_C0·f_dc.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarKind {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarKind::I8,
            "uchar" | "uint8" => ScalarKind::U8,
            "short" | "int16" => ScalarKind::I16,
            "ushort" | "uint16" => ScalarKind::U16,
            "int" | "int32" => ScalarKind::I32,
            "uint" | "uint32" => ScalarKind::U32,
            "float" | "float32" => ScalarKind::F32,
            "double" | "float64" => ScalarKind::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            ScalarKind::I8 => "char",
            ScalarKind::U8 => "uchar",
            ScalarKind::I16 => "short",
            ScalarKind::U16 => "ushort",
            ScalarKind::I32 => "int",
            ScalarKind::U32 => "uint",
            ScalarKind::F32 => "float",
            ScalarKind::F64 => "double",
        }
    }

    pub fn size(self) -> usize {
        match self {
            ScalarKind::I8 | ScalarKind::U8 => 1,
            ScalarKind::I16 | ScalarKind::U16 => 2,
            ScalarKind::I32 | ScalarKind::U32 | ScalarKind::F32 => 4,
            ScalarKind::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, ScalarKind::F32 | ScalarKind::F64)
    }

    fn range(self) -> (f64, f64) {
        match self {
            ScalarKind::I8 => (i8::MIN as f64, i8::MAX as f64),
            ScalarKind::U8 => (0.0, u8::MAX as f64),
            ScalarKind::I16 => (i16::MIN as f64, i16::MAX as f64),
            ScalarKind::U16 => (0.0, u16::MAX as f64),
            ScalarKind::I32 => (i32::MIN as f64, i32::MAX as f64),
            ScalarKind::U32 => (0.0, u32::MAX as f64),
            ScalarKind::F32 => (f64::NEG_INFINITY, f64::INFINITY),
            ScalarKind::F64 => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            ScalarKind::I8 => b[0] as i8 as f64,
            ScalarKind::U8 => b[0] as f64,
            ScalarKind::I16 => LittleEndian::read_i16(b) as f64,
            ScalarKind::U16 => LittleEndian::read_u16(b) as f64,
            ScalarKind::I32 => LittleEndian::read_i32(b) as f64,
            ScalarKind::U32 => LittleEndian::read_u32(b) as f64,
            ScalarKind::F32 => LittleEndian::read_f32(b) as f64,
            ScalarKind::F64 => LittleEndian::read_f64(b),
        }
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        let mut buf = [0u8; 8];
        let n = self.size();
        match self {
            ScalarKind::I8 => buf[0] = v as i8 as u8,
            ScalarKind::U8 => buf[0] = v as u8,
            ScalarKind::I16 => LittleEndian::write_i16(&mut buf, v as i16),
            ScalarKind::U16 => LittleEndian::write_u16(&mut buf, v as u16),
            ScalarKind::I32 => LittleEndian::write_i32(&mut buf, v as i32),
            ScalarKind::U32 => LittleEndian::write_u32(&mut buf, v as u32),
            ScalarKind::F32 => LittleEndian::write_f32(&mut buf, v as f32),
            ScalarKind::F64 => LittleEndian::write_f64(&mut buf, v),
        }
        out.extend_from_slice(&buf[..n]);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyProperty {
    pub name: String,
    pub kind: ScalarKind,
}

/// One element block. Values are held as f64, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyElement {
    pub name: String,
    pub properties: Vec<PlyProperty>,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl PlyElement {
    pub fn new(name: &str, properties: Vec<PlyProperty>) -> Self {
        PlyElement { name: name.into(), properties, rows: 0, data: Vec::new() }
    }

    pub fn property_index(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.properties.len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.properties.len());
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// Column of `name`, or a parse error naming the missing property.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.property_index(name).ok_or_else(|| Error::Parse {
            offset: 0,
            message: format!("element `{}` lacks property `{name}`", self.name),
        })?;
        Ok((0..self.rows).map(|i| self.row(i)[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyData {
    pub format: PlyFormat,
    pub comments: Vec<String>,
    pub elements: Vec<PlyElement>,
}

impl PlyData {
    pub fn element(&self, name: &str) -> Result<&PlyElement> {
        self.elements
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Parse { offset: 0, message: format!("no `{name}` element") })
    }
}

fn perr(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset: offset as u64, message: message.into() }
}

/// Upper bound on declared rows, so a corrupt header cannot request
/// unbounded allocation before the payload is checked.
const MAX_ROWS: usize = 1 << 31;

pub fn parse_ply(bytes: &[u8]) -> Result<PlyData> {
    // header: lines up to and including "end_header\n"
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<(usize, String)> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| start + i)
            .ok_or_else(|| perr(start, "header ends before `end_header`"))?;
        *pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end]).map_err(|_| perr(start, "header is not valid UTF-8"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (_, magic) = next_line(&mut pos)?;
    if magic.trim() != "ply" {
        return Err(perr(0, "missing `ply` magic"));
    }
    let mut format = None;
    let mut comments = Vec::new();
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (at, line) = next_line(&mut pos)?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("end_header") => break,
            Some("comment") | Some("obj_info") => {
                comments.push(line.splitn(2, char::is_whitespace).nth(1).unwrap_or("").to_string());
            }
            Some("format") => {
                format = Some(match (tok.next(), tok.next()) {
                    (Some("ascii"), Some("1.0")) => PlyFormat::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => PlyFormat::BinaryLittleEndian,
                    (Some(f), _) => return Err(perr(at, format!("unsupported format `{f}`"))),
                    _ => return Err(perr(at, "malformed format line")),
                })
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| perr(at, "element without a name"))?;
                let rows: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| perr(at, format!("element `{name}` has no valid count")))?;
                if rows > MAX_ROWS {
                    return Err(perr(at, format!("element `{name}` declares {rows} rows")));
                }
                let mut e = PlyElement::new(name, Vec::new());
                e.rows = rows;
                elements.push(e);
            }
            Some("property") => {
                let e = elements.last_mut().ok_or_else(|| perr(at, "property before any element"))?;
                let ty = tok.next().ok_or_else(|| perr(at, "property without a type"))?;
                if ty == "list" {
                    return Err(perr(at, format!("list property in element `{}` is not supported", e.name)));
                }
                let kind = ScalarKind::parse(ty).ok_or_else(|| perr(at, format!("unknown property type `{ty}`")))?;
                let name = tok.next().ok_or_else(|| perr(at, "property without a name"))?;
                if e.property_index(name).is_some() {
                    return Err(perr(at, format!("duplicate property `{name}`")));
                }
                e.properties.push(PlyProperty { name: name.into(), kind });
            }
            Some(other) => return Err(perr(at, format!("unexpected header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| perr(pos, "header has no format line"))?;

    match format {
        PlyFormat::BinaryLittleEndian => {
            for e in &mut elements {
                let stride: usize = e.properties.iter().map(|p| p.kind.size()).sum();
                let need = stride.checked_mul(e.rows).ok_or_else(|| perr(pos, "payload size overflows"))?;
                if bytes.len() - pos < need {
                    return Err(perr(
                        bytes.len(),
                        format!("truncated payload in element `{}`: need {need} bytes from offset {pos}", e.name),
                    ));
                }
                e.data.reserve(e.rows * e.properties.len());
                for _ in 0..e.rows {
                    for p in &e.properties {
                        e.data.push(p.kind.decode(&bytes[pos..pos + p.kind.size()]));
                        pos += p.kind.size();
                    }
                }
            }
        }
        PlyFormat::Ascii => {
            let body = &bytes[pos..];
            let text = std::str::from_utf8(body).map_err(|e| perr(pos + e.valid_up_to(), "ASCII body is not valid UTF-8"))?;
            let mut words = text
                .split_ascii_whitespace()
                .map(|w| (pos + (w.as_ptr() as usize - text.as_ptr() as usize), w));
            for e in &mut elements {
                for _ in 0..e.rows {
                    for p in &e.properties {
                        let (at, w) = words.next().ok_or_else(|| {
                            perr(bytes.len(), format!("truncated payload in element `{}`", e.name))
                        })?;
                        let mut v: f64 = w.parse().map_err(|_| perr(at, format!("bad value `{w}` for `{}`", p.name)))?;
                        if p.kind == ScalarKind::F32 {
                            v = v as f32 as f64;
                        }
                        if p.kind.is_integer() {
                            let (lo, hi) = p.kind.range();
                            if v.fract() != 0.0 || v < lo || v > hi {
                                return Err(perr(at, format!("value `{w}` out of range for `{}`", p.name)));
                            }
                        }
                        e.data.push(v);
                    }
                }
            }
        }
    }
    Ok(PlyData { format, comments, elements })
}

pub fn encode_ply(ply: &PlyData) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\n");
    out.extend_from_slice(match ply.format {
        PlyFormat::Ascii => b"format ascii 1.0\n".as_slice(),
        PlyFormat::BinaryLittleEndian => b"format binary_little_endian 1.0\n".as_slice(),
    });
    for c in &ply.comments {
        writeln!(out, "comment {}", c.replace('\n', " ")).expect("writing to memory");
    }
    for e in &ply.elements {
        writeln!(out, "element {} {}", e.name, e.rows).expect("writing to memory");
        for p in &e.properties {
            writeln!(out, "property {} {}", p.kind.name(), p.name).expect("writing to memory");
        }
    }
    out.extend_from_slice(b"end_header\n");
    for e in &ply.elements {
        for i in 0..e.rows {
            let row = e.row(i);
            match ply.format {
                PlyFormat::BinaryLittleEndian => {
                    for (p, v) in e.properties.iter().zip(row) {
                        p.kind.encode(*v, &mut out);
                    }
                }
                PlyFormat::Ascii => {
                    let line: Vec<String> = e
                        .properties
                        .iter()
                        .zip(row)
                        .map(|(p, v)| match p.kind {
                            ScalarKind::F32 => format!("{}", *v as f32),
                            _ => format!("{v}"),
                        })
                        .collect();
                    writeln!(out, "{}", line.join(" ")).expect("writing to memory");
                }
            }
        }
    }
    out
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    parse_ply(&std::fs::read(path)?)
}

pub fn write_ply(path: &Path, ply: &PlyData) -> Result<()> {
    super::write_atomic(path, &encode_ply(ply))
}

fn props(names: &[&str], kind: ScalarKind) -> Vec<PlyProperty> {
    names.iter().map(|n| PlyProperty { name: (*n).into(), kind }).collect()
}

/// Cloud as a `vertex` element with double-precision x, y, z.
pub fn cloud_to_ply(cloud: &PointCloud, format: PlyFormat) -> PlyData {
    let mut e = PlyElement::new("vertex", props(&["x", "y", "z"], ScalarKind::F64));
    for p in &cloud.points {
        e.push_row(p.as_slice());
    }
    PlyData { format, comments: Vec::new(), elements: vec![e] }
}

pub fn cloud_from_ply(ply: &PlyData) -> Result<PointCloud> {
    let v = ply.element("vertex")?;
    let (x, y, z) = (v.column("x")?, v.column("y")?, v.column("z")?);
    let points = (0..v.rows).map(|i| Vector3::new(x[i], y[i], z[i])).collect();
    PointCloud::new(points)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    cloud_from_ply(&read_ply(path)?)
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_ply(path, &cloud_to_ply(cloud, PlyFormat::BinaryLittleEndian))
}

const GAUSSIAN_PROPS: [&str; 18] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
    "rot_2", "rot_3", "gcs", "nx", "ny", "nz",
];

/// Gaussian map in the common splatting layout (log scales, opacity logit,
/// wxyz quaternion, DC color coefficients) plus a `gcs` column holding γ.
/// Values are single precision; the background goes in a comment.
pub fn map_to_ply(map: &GaussianMap) -> PlyData {
    let mut e = PlyElement::new("vertex", props(&GAUSSIAN_PROPS, ScalarKind::F32));
    for g in &map.gaussians {
        let dc = (g.color - Vector3::repeat(0.5)) / SH_C0;
        e.push_row(&[
            g.mean.x,
            g.mean.y,
            g.mean.z,
            dc.x,
            dc.y,
            dc.z,
            g.opacity_logit,
            g.log_scale.x,
            g.log_scale.y,
            g.log_scale.z,
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
            g.gcs(),
            0.0,
            0.0,
            0.0,
        ]);
    }
    let b = map.background;
    PlyData {
        format: PlyFormat::BinaryLittleEndian,
        comments: vec![format!("background {} {} {}", b.x, b.y, b.z)],
        elements: vec![e],
    }
}

pub fn map_from_ply(ply: &PlyData) -> Result<GaussianMap> {
    let v = ply.element("vertex")?;
    let required = &GAUSSIAN_PROPS[..15];
    let cols: Vec<Vec<f64>> = required.iter().map(|n| v.column(n)).collect::<Result<_>>()?;
    let mut gaussians = Vec::with_capacity(v.rows);
    for i in 0..v.rows {
        let c = |k: usize| cols[k][i];
        let q = Vector4::new(c(10), c(11), c(12), c(13));
        let n = q.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(perr(0, format!("gaussian {i} has a degenerate quaternion")));
        }
        let gamma = c(14);
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(perr(0, format!("gaussian {i} has gcs {gamma} outside (0, 1)")));
        }
        let g = Gaussian {
            mean: Vector3::new(c(0), c(1), c(2)),
            rotation: q / n,
            log_scale: Vector3::new(c(7), c(8), c(9)),
            color: Vector3::new(c(3), c(4), c(5)) * SH_C0 + Vector3::repeat(0.5),
            opacity_logit: c(6),
            gcs_logit: logit(gamma),
        };
        if !g.is_finite() {
            return Err(perr(0, format!("gaussian {i} has non-finite parameters")));
        }
        gaussians.push(g);
    }
    let mut background = Vector3::zeros();
    for c in &ply.comments {
        if let Some(rest) = c.strip_prefix("background ") {
            let v: Vec<f64> = rest.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            if v.len() == 3 {
                background = Vector3::new(v[0], v[1], v[2]);
            }
        }
    }
    Ok(GaussianMap::new(gaussians, background))
}

pub fn read_map(path: &Path) -> Result<GaussianMap> {
    map_from_ply(&read_ply(path)?)
}

pub fn write_map(path: &Path, map: &GaussianMap) -> Result<()> {
    write_ply(path, &map_to_ply(map))
}

/// Raw scan in the common float32 `x y z intensity` record layout.
pub fn parse_float_bin(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % 16 != 0 {
        return Err(perr(bytes.len() - bytes.len() % 16, "scan length is not a multiple of 16 bytes"));
    }
    let points = bytes
        .chunks_exact(16)
        .map(|c| {
            Vector3::new(
                LittleEndian::read_f32(&c[0..4]) as f64,
                LittleEndian::read_f32(&c[4..8]) as f64,
                LittleEndian::read_f32(&c[8..12]) as f64,
            )
        })
        .collect();
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|i| Vector3::new(i as f64 * 0.37, -(i as f64).sqrt(), 1e-3 * i as f64)).collect())
            .unwrap()
    }

    #[test]
    fn cloud_round_trips_in_both_formats() {
        let c = cloud(10);
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let back = cloud_from_ply(&parse_ply(&encode_ply(&cloud_to_ply(&c, format))).unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn missing_z_names_the_property() {
        let text = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n";
        let err = cloud_from_ply(&parse_ply(text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("`z`"), "{err}");
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let mut bytes = encode_ply(&cloud_to_ply(&cloud(4), PlyFormat::BinaryLittleEndian));
        bytes.truncate(bytes.len() - 5);
        match parse_ply(&bytes) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset as usize, bytes.len());
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ascii_bad_token_reports_its_offset() {
        let text = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\nabc\n";
        match parse_ply(text) {
            Err(Error::Parse { offset, .. }) => assert_eq!(&text[offset as usize..offset as usize + 3], b"abc"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_properties_survive_copy_through() {
        let text = b"ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar label\nproperty double t\nend_header\n1 2 3 7 0.125\n4 5 6 255 -1e300\n";
        let ply = parse_ply(text).unwrap();
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let copy = PlyData { format, ..ply.clone() };
            let back = parse_ply(&encode_ply(&copy)).unwrap();
            assert_eq!(back.elements, ply.elements);
            assert_eq!(back.comments, vec!["hi".to_string()]);
        }
    }

    #[test]
    fn gaussian_map_round_trips_at_single_precision() {
        let gs = (0..20)
            .map(|i| {
                let f = i as f64;
                Gaussian::new(
                    Vector3::new(f * 0.1, -f, 3.3),
                    Vector4::new(1.0, 0.1 * f, -0.2, 0.05),
                    Vector3::new(0.01 + 0.01 * f, 0.2, 0.03),
                    Vector3::new(0.1, 0.5, (f / 20.0).min(1.0)),
                    0.05 + 0.04 * f,
                    0.001 + 0.049 * f,
                )
                .unwrap()
            })
            .collect();
        let map = GaussianMap::new(gs, Vector3::new(0.55, 0.7, 0.9));
        let back = map_from_ply(&parse_ply(&encode_ply(&map_to_ply(&map))).unwrap()).unwrap();
        assert_eq!(back.len(), map.len());
        assert_eq!(back.background, map.background);
        for (a, b) in map.gaussians.iter().zip(&back.gaussians) {
            assert_eq!(b.gcs() as f32, a.gcs() as f32);
            assert_eq!(b.mean.map(|v| v as f32), a.mean.map(|v| v as f32));
            assert_eq!(b.opacity_logit as f32, a.opacity_logit as f32);
            assert!((a.color - b.color).amax() < 1e-6);
            assert!((a.rotation - b.rotation).amax() < 1e-6);
        }
        // a second pass is exact
        let again = map_from_ply(&parse_ply(&encode_ply(&map_to_ply(&back))).unwrap()).unwrap();
        for (a, b) in back.gaussians.iter().zip(&again.gaussians) {
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.gcs() as f32, b.gcs() as f32);
        }
    }

    #[test]
    fn float_bin_scans() {
        let mut bytes = Vec::new();
        for v in [1.5f32, -2.0, 0.25, 9.0, 3.0, 4.0, 5.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = parse_float_bin(&bytes).unwrap();
        assert_eq!(c.points, vec![Vector3::new(1.5, -2.0, 0.25), Vector3::new(3.0, 4.0, 5.0)]);
        assert!(parse_float_bin(&bytes[..20]).is_err());
    }

    proptest! {
        #[test]
        fn float32_payloads_round_trip(vals in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..60)) {
            let n = vals.len() / 3;
            let mut e = PlyElement::new("vertex", props(&["x", "y", "z"], ScalarKind::F32));
            for i in 0..n {
                e.push_row(&[vals[3 * i] as f64, vals[3 * i + 1] as f64, vals[3 * i + 2] as f64]);
            }
            for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
                let ply = PlyData { format, comments: vec![], elements: vec![e.clone()] };
                let back = parse_ply(&encode_ply(&ply)).unwrap();
                prop_assert_eq!(&back.elements[0], &e);
            }
        }

        #[test]
        fn never_panics_on_garbage(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
            let _ = parse_ply(&bytes);
        }

        #[test]
        fn never_panics_on_mutated_headers(cut in 0usize..200, flip in 0usize..200, byte in any::<u8>()) {
            let mut bytes = encode_ply(&cloud_to_ply(&cloud(5), PlyFormat::BinaryLittleEndian));
            let i = flip % bytes.len();
            bytes[i] = byte;
            bytes.truncate(bytes.len().saturating_sub(cut));
            let _ = parse_ply(&bytes);
        }
    }
}
