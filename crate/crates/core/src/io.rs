//! MVT binary tensor files, report CSV files and raw SPD-field ingestion.
//!
//! MVT layout (all integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `MVT1` |
//! | 2     | format version (1) |
//! | 1     | endianness tag (0 = little) |
//! | 1     | manifold kind (0 Euclidean, 1 sphere, 2 SPD) |
//! | 4     | intrinsic dimension |
//! | 4     | embedding dimension |
//! | 4     | order n |
//! | 8·n   | shape |
//!
//! followed by `∏shape · embedding` little-endian `f64` values, entries in
//! row-major order with each entry's coordinates contiguous.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{Method, SweepRow};
use crate::linalg::{from_row_major, sym_eigen_desc, symmetrize, to_row_major};
use crate::manifold::{ManifoldDescriptor, ManifoldKind, ManifoldPoint, VALIDATION_TOL};
use crate::tensor::{num_entries, MvTensor};

pub const MVT_MAGIC: &[u8; 4] = b"MVT1";
pub const MVT_VERSION: u16 = 1;
const LITTLE_ENDIAN: u8 = 0;
/// Default relative eigenvalue floor for SPD projection.
pub const DEFAULT_CLAMP_REL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MvtHeader {
    pub version: u16,
    pub descriptor: ManifoldDescriptor,
    pub shape: Vec<usize>,
}

impl MvtHeader {
    pub fn byte_len(&self) -> usize {
        20 + 8 * self.shape.len()
    }

    pub fn payload_len(&self) -> usize {
        num_entries(&self.shape) * self.descriptor.embedding_dim() * 8
    }
}

/// What to do with entries that violate the manifold invariants on read.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Repair {
    /// Fail with `InvariantViolation`.
    #[default]
    Reject,
    /// Project onto the manifold: renormalize sphere points, symmetrize and
    /// clamp SPD eigenvalues at `clamp_rel · λ_max`.
    Project { clamp_rel: f64 },
}

fn kind_code(kind: ManifoldKind) -> u8 {
    match kind {
        ManifoldKind::Euclidean => 0,
        ManifoldKind::Sphere => 1,
        ManifoldKind::Spd => 2,
    }
}

fn kind_from_code(code: u8) -> Result<ManifoldKind> {
    match code {
        0 => Ok(ManifoldKind::Euclidean),
        1 => Ok(ManifoldKind::Sphere),
        2 => Ok(ManifoldKind::Spd),
        other => Err(Error::ShapeMismatch(format!("unknown manifold kind code {other}"))),
    }
}

fn to_u32(x: usize, what: &str) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::InvalidArgument(format!("{what} {x} does not fit the MVT header")))
}

/// Serializes a tensor into MVT bytes.
pub fn encode_mvt(t: &MvTensor) -> Result<Vec<u8>> {
    let desc = t.descriptor();
    let header = MvtHeader {
        version: MVT_VERSION,
        descriptor: desc,
        shape: t.shape().to_vec(),
    };
    let mut out = Vec::with_capacity(header.byte_len() + header.payload_len());
    out.extend_from_slice(MVT_MAGIC);
    out.extend_from_slice(&MVT_VERSION.to_le_bytes());
    out.push(LITTLE_ENDIAN);
    out.push(kind_code(desc.kind()));
    out.extend_from_slice(&to_u32(desc.intrinsic_dim(), "intrinsic dimension")?.to_le_bytes());
    out.extend_from_slice(&to_u32(desc.embedding_dim(), "embedding dimension")?.to_le_bytes());
    out.extend_from_slice(&to_u32(t.order(), "order")?.to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for e in t.entries() {
        for x in e.coords() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N).map(|s| s.try_into().expect("slice length checked"))
    }
}

/// Parses the header; `BadMagic` for foreign or truncated headers.
pub fn decode_header(bytes: &[u8]) -> Result<MvtHeader> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4) != Some(&MVT_MAGIC[..]) {
        return Err(Error::BadMagic);
    }
    let version = u16::from_le_bytes(c.array().ok_or(Error::BadMagic)?);
    let endian = c.array::<1>().ok_or(Error::BadMagic)?[0];
    let kind = c.array::<1>().ok_or(Error::BadMagic)?[0];
    let intrinsic = u32::from_le_bytes(c.array().ok_or(Error::BadMagic)?) as usize;
    let embedding = u32::from_le_bytes(c.array().ok_or(Error::BadMagic)?) as usize;
    let order = u32::from_le_bytes(c.array().ok_or(Error::BadMagic)?) as usize;
    if version != MVT_VERSION {
        return Err(Error::ShapeMismatch(format!("unsupported MVT version {version}")));
    }
    if endian != LITTLE_ENDIAN {
        return Err(Error::ShapeMismatch(format!("unsupported endianness tag {endian}")));
    }
    let descriptor = ManifoldDescriptor::from_parts(kind_from_code(kind)?, intrinsic, embedding)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let mut shape = Vec::with_capacity(order.min(64));
    for _ in 0..order {
        let d = u64::from_le_bytes(c.array().ok_or(Error::BadMagic)?);
        shape.push(usize::try_from(d).map_err(|_| Error::ShapeMismatch(format!("dimension {d} too large")))?);
    }
    Ok(MvtHeader {
        version,
        descriptor,
        shape,
    })
}

/// Parses MVT bytes, validating every entry under the given repair policy.
pub fn decode_mvt(bytes: &[u8], repair: Repair) -> Result<MvTensor> {
    let header = decode_header(bytes)?;
    let m = header.descriptor.embedding_dim();
    let expected = shape_payload(&header)?;
    let payload = &bytes[header.byte_len()..];
    if payload.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let n = num_entries(&header.shape);
    let mut entries = Vec::with_capacity(n);
    for (i, chunk) in payload.chunks_exact(m * 8).enumerate() {
        let coords: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        entries.push(load_point(header.descriptor, coords, repair, i)?);
    }
    MvTensor::new(header.shape, entries)
}

fn shape_payload(h: &MvtHeader) -> Result<usize> {
    h.shape
        .iter()
        .try_fold(h.descriptor.embedding_dim() * 8, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::ShapeMismatch(format!("shape {:?} overflows", h.shape)))
}

fn load_point(desc: ManifoldDescriptor, coords: Vec<f64>, repair: Repair, index: usize) -> Result<ManifoldPoint> {
    if coords.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("entry {index}")));
    }
    match ManifoldPoint::new(desc, coords.clone()) {
        Ok(p) => Ok(p),
        Err(err) => match repair {
            Repair::Reject => Err(Error::InvariantViolation(format!("entry {index}: {err}"))),
            Repair::Project { clamp_rel } => {
                project_point(desc, coords, clamp_rel).map_err(|e| Error::InvariantViolation(format!("entry {index}: {e}")))
            }
        },
    }
}

fn project_point(desc: ManifoldDescriptor, coords: Vec<f64>, clamp_rel: f64) -> Result<ManifoldPoint> {
    match desc.kind() {
        ManifoldKind::Euclidean => ManifoldPoint::new(desc, coords),
        ManifoldKind::Sphere => {
            let n = crate::linalg::norm(&coords);
            if !(n > VALIDATION_TOL) {
                return Err(Error::InvalidPoint("zero vector cannot be projected onto the sphere".into()));
            }
            ManifoldPoint::new(desc, coords.iter().map(|x| x / n).collect())
        }
        ManifoldKind::Spd => {
            let k = desc.matrix_size().unwrap_or(0);
            ManifoldPoint::spd(&project_spd(&from_row_major(k, &coords), clamp_rel)?)
        }
    }
}

/// Symmetrizes `a` and raises eigenvalues below `clamp_rel · λ_max` to that
/// floor; `λ_max` falls back to 1 when no eigenvalue is positive. Matrices
/// that need no clamping are returned symmetrized but otherwise untouched.
pub fn project_spd(a: &DMatrix<f64>, clamp_rel: f64) -> Result<DMatrix<f64>> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    if !(clamp_rel > 0.0) || !clamp_rel.is_finite() {
        return Err(Error::InvalidArgument(format!("clamp_rel must be positive, got {clamp_rel}")));
    }
    let s = symmetrize(a);
    let (vals, vecs) = sym_eigen_desc(&s);
    let lmax = vals.first().copied().filter(|&l| l > 0.0).unwrap_or(1.0);
    let floor = clamp_rel * lmax;
    if vals.iter().all(|&l| l >= floor) && ManifoldPoint::spd(&s).is_ok() {
        return Ok(s);
    }
    Ok(crate::linalg::sym_apply(&vals, &vecs, |l| l.max(floor)))
}

pub fn write_mvt(path: impl AsRef<Path>, t: &MvTensor) -> Result<()> {
    let bytes = encode_mvt(t)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_mvt(path: impl AsRef<Path>, repair: Repair) -> Result<MvTensor> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_mvt(&bytes, repair)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    method: String,
    rank: String,
    eps_rel: f64,
    delta_rel: Option<f64>,
    lower_bound: f64,
    time_s: Option<f64>,
    iters: Option<usize>,
}

/// `"3x3"` for the rank tuple `(3, 3)`.
pub fn format_rank(r: &[usize]) -> String {
    r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x")
}

pub fn parse_rank(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad rank {s:?}")))
        })
        .collect()
}

/// Writes report rows with the header `method,rank,eps_rel,delta_rel,lower_bound,time_s,iters`.
/// Floats use the shortest representation that parses back to the same value.
pub fn write_report_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(CsvRow {
            method: r.method.to_string(),
            rank: format_rank(&r.rank),
            eps_rel: r.eps_rel,
            delta_rel: r.delta_rel,
            lower_bound: r.lower_bound,
            time_s: r.time_s,
            iters: r.iters,
        })?;
    }
    if rows.is_empty() {
        wr.write_record(["method", "rank", "eps_rel", "delta_rel", "lower_bound", "time_s", "iters"])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        let row: CsvRow = rec?;
        rows.push(SweepRow {
            method: row.method.parse::<Method>()?,
            rank: parse_rank(&row.rank)?,
            eps_rel: row.eps_rel,
            delta_rel: row.delta_rel,
            lower_bound: row.lower_bound,
            time_s: row.time_s,
            iters: row.iters,
        });
    }
    Ok(rows)
}

pub fn write_report_file(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    write_report_csv(File::create(path)?, rows)
}

pub fn read_report_file(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    read_report_csv(File::open(path)?)
}

/// Sub-block of a 3D voxel grid: half-open x and y ranges and one z slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Crop {
    pub x: (usize, usize),
    pub y: (usize, usize),
    pub z: usize,
}

/// Reads a raw field of 3×3 matrices (9 little-endian `f64` per voxel,
/// row-major within a voxel, x fastest, then y, then z) and projects every
/// voxel onto 𝒫(3). Without a crop the result has shape `[X, Y, Z]`; with one
/// it is the 2D slice `[x1 − x0, y1 − y0]`.
pub fn ingest_spd_image(path: impl AsRef<Path>, dims: [usize; 3], crop: Option<&Crop>, clamp_rel: f64) -> Result<MvTensor> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    ingest_spd_bytes(&bytes, dims, crop, clamp_rel)
}

pub fn ingest_spd_bytes(bytes: &[u8], dims: [usize; 3], crop: Option<&Crop>, clamp_rel: f64) -> Result<MvTensor> {
    let [nx, ny, nz] = dims;
    let voxels = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .ok_or_else(|| Error::ShapeMismatch(format!("dims {dims:?} overflow")))?;
    if bytes.len() != voxels * 72 {
        return Err(Error::ShapeMismatch(format!(
            "raw field has {} bytes, dims {dims:?} need {}",
            bytes.len(),
            voxels * 72
        )));
    }
    let (xr, yr, zr, shape) = match crop {
        Some(c) => {
            if c.x.0 >= c.x.1 || c.x.1 > nx || c.y.0 >= c.y.1 || c.y.1 > ny || c.z >= nz {
                return Err(Error::InvalidArgument(format!("crop {c:?} outside dims {dims:?}")));
            }
            (c.x, c.y, (c.z, c.z + 1), vec![c.x.1 - c.x.0, c.y.1 - c.y.0])
        }
        None => ((0, nx), (0, ny), (0, nz), vec![nx, ny, nz]),
    };
    let mut entries = Vec::with_capacity(num_entries(&shape));
    for x in xr.0..xr.1 {
        for y in yr.0..yr.1 {
            for z in zr.0..zr.1 {
                let v = x + nx * (y + ny * z);
                let m: Vec<f64> = bytes[v * 72..(v + 1) * 72]
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect();
                if m.iter().any(|a| !a.is_finite()) {
                    return Err(Error::NonFinite(format!("voxel ({x}, {y}, {z})")));
                }
                let a = from_row_major(3, &m);
                entries.push(ManifoldPoint::spd(&project_spd(&a, clamp_rel)?)?);
            }
        }
    }
    MvTensor::new(shape, entries)
}

/// Raw bytes of an SPD field in the ingestion layout, for tests and tooling.
pub fn encode_spd_field(field: &[DMatrix<f64>], dims: [usize; 3]) -> Result<Vec<u8>> {
    if field.len() != dims.iter().product::<usize>() {
        return Err(Error::ShapeMismatch(format!("{} voxels for dims {dims:?}", field.len())));
    }
    let mut out = Vec::with_capacity(field.len() * 72);
    for m in field {
        if m.nrows() != 3 || m.ncols() != 3 {
            return Err(Error::ShapeMismatch("voxels must be 3×3".into()));
        }
        for x in to_row_major(m) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}
