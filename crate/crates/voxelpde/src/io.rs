//! Field file I/O: VTK legacy ASCII output and raw little-endian volumes.
//!
//! Raw volumes are bare arrays in x-fastest order accompanied by a JSON
//! sidecar (`<file>.json`) recording dims, spacing, origin, dtype and the
//! field name. Segmented tomograms convert to this format trivially.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, VoxelFields};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Element type of a raw volume on disk. In-memory fields are always `f64`;
/// `f32` volumes are widened on read and narrowed on write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// JSON sidecar written next to every raw volume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub dtype: Dtype,
    pub field: String,
}

fn sidecar_path(raw: &Path) -> PathBuf {
    let mut os = raw.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Writes one field as a raw little-endian array plus its JSON sidecar.
pub fn write_raw(vf: &VoxelFields, field: &str, dtype: Dtype, path: &Path) -> Result<()> {
    let data = vf.field(field)?;
    let mut bytes = Vec::with_capacity(data.len() * dtype.size());
    match dtype {
        Dtype::F64 => {
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::F32 => {
            for v in data {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    fs::write(path, &bytes)?;
    let sidecar = RawSidecar {
        dims: vf.grid().dims,
        spacing: vf.grid().spacing,
        origin: vf.grid().origin,
        dtype,
        field: field.to_string(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar encode: {e}")))?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Reads a bare raw array for a known grid; the file size must match exactly.
pub fn read_raw(path: &Path, grid: &GridSpec, dtype: Dtype) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    let expected = grid.len() * dtype.size();
    if bytes.len() != expected {
        return Err(Error::SizeMismatch { expected, got: bytes.len() });
    }
    let mut out = Vec::with_capacity(grid.len());
    match dtype {
        Dtype::F64 => {
            for chunk in bytes.chunks_exact(8) {
                out.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        Dtype::F32 => {
            for chunk in bytes.chunks_exact(4) {
                out.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
    }
    Ok(out)
}

/// Reads a raw volume through its JSON sidecar into a one-field container.
pub fn read_raw_with_sidecar(path: &Path) -> Result<VoxelFields> {
    let json = fs::read_to_string(sidecar_path(path))?;
    let sidecar: RawSidecar =
        serde_json::from_str(&json).map_err(|e| Error::Format(format!("sidecar decode: {e}")))?;
    let grid = GridSpec::with_origin(sidecar.dims, sidecar.spacing, sidecar.origin)?;
    let data = read_raw(path, &grid, sidecar.dtype)?;
    let mut vf = VoxelFields::create(grid);
    vf.add_from(&sidecar.field, data)?;
    Ok(vf)
}

/// Writes all fields as VTK legacy ASCII structured points.
///
/// Values are point data placed at cell centers (ORIGIN is the first cell
/// center), in x-fastest order as the format requires.
pub fn write_vtk(vf: &VoxelFields, path: &Path) -> Result<()> {
    let grid = vf.grid();
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "voxelpde fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", grid.dims[0], grid.dims[1], grid.dims[2])?;
    let first = grid.cell_center(0, 0, 0);
    writeln!(w, "ORIGIN {:?} {:?} {:?}", first[0], first[1], first[2])?;
    writeln!(w, "SPACING {:?} {:?} {:?}", grid.spacing[0], grid.spacing[1], grid.spacing[2])?;
    writeln!(w, "POINT_DATA {}", grid.len())?;
    for name in vf.names() {
        let data = vf.field(name)?;
        writeln!(w, "SCALARS {} double 1", sanitize_name(name))?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for row in data.chunks(grid.dims[0]) {
            let mut line = String::new();
            for (idx, v) in row.iter().enumerate() {
                if idx > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{v:?}"));
            }
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// VTK attribute names must not contain whitespace.
fn sanitize_name(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}
