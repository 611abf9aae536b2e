//! Grid artifacts: raw binary, CSV and PNG slices.
//!
//! Raw layout (little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `VAIG` |
//! | 2 | version (u16, currently 1) |
//! | 12 | dims, 3 × u32 |
//! | 48 | origin then spacing, 6 × f64 |
//! | 8·N | values, f64, row-major (last axis fastest) |

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::migration::ImageGrid;

pub const RAW_MAGIC: &[u8; 4] = b"VAIG";
pub const RAW_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 12 + 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridFormat {
    Raw,
    Csv,
    Png,
}

impl GridFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            GridFormat::Raw => "vaig",
            GridFormat::Csv => "csv",
            GridFormat::Png => "png",
        }
    }
}

impl FromStr for GridFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(GridFormat::Raw),
            "csv" => Ok(GridFormat::Csv),
            "png" => Ok(GridFormat::Png),
            other => Err(Error::config(format!("unknown grid format {other:?}; expected raw, csv or png"))),
        }
    }
}

/// A real 3D grid in the artifact layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGrid {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

impl RawGrid {
    pub fn new(dims: [usize; 3], origin: [f64; 3], spacing: [f64; 3], values: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != values.len() {
            return Err(Error::config(format!("dims {dims:?} do not match {} values", values.len())));
        }
        if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(Error::config(format!("grid dims {dims:?} out of range")));
        }
        Ok(Self { dims, origin, spacing, values })
    }

    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    pub fn point(&self, i: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|k| self.origin[k] + i[k] as f64 * self.spacing[k])
    }

    /// Image magnitudes (the envelope for an analytic image).
    pub fn from_image(image: &ImageGrid) -> Result<Self> {
        Self::new(image.dims, image.origin, image.spacing, image.magnitudes())
    }

    /// Axes `(q, q', lag)`; the lag axis starts at `−max_lag·Δτ`.
    pub fn from_correlations(c: &CorrelationMatrix) -> Result<Self> {
        let nq = c.n_receivers();
        Self::new(
            [nq, nq, c.n_lags()],
            [0.0, 0.0, -c.max_lag_time()],
            [1.0, 1.0, c.dtau],
            c.values.clone(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(RAW_MAGIC);
        out.extend_from_slice(&RAW_VERSION.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.origin.iter().chain(&self.spacing).chain(&self.values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != RAW_MAGIC {
            return Err(Error::Format("not a VAIG grid".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != RAW_VERSION {
            return Err(Error::Format(format!("unsupported VAIG version {version}")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let dims = [u32_at(6), u32_at(10), u32_at(14)];
        let origin = [f64_at(18), f64_at(26), f64_at(34)];
        let spacing = [f64_at(42), f64_at(50), f64_at(58)];
        let n: usize = dims.iter().product();
        if bytes.len() != HEADER_LEN + 8 * n {
            return Err(Error::Format(format!(
                "VAIG payload holds {} bytes, dims {dims:?} need {}",
                bytes.len() - HEADER_LEN,
                8 * n
            )));
        }
        let values = (0..n).map(|i| f64_at(HEADER_LEN + 8 * i)).collect();
        Self::new(dims, origin, spacing, values)
    }

    /// Header `i,j,k,x,y,z,value`, then one row per voxel in row-major order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,k,x,y,z,value\n");
        for i in 0..self.dims[0] {
            for j in 0..self.dims[1] {
                for k in 0..self.dims[2] {
                    let p = self.point([i, j, k]);
                    let v = self.values[self.index([i, j, k])];
                    s.push_str(&format!("{i},{j},{k},{:?},{:?},{:?},{v:?}\n", p[0], p[1], p[2]));
                }
            }
        }
        s
    }

    /// 8-bit slice normal to `slice.axis`; rows run along the lower remaining
    /// axis and columns along the higher one.
    pub fn slice_pixels(&self, slice: Slice) -> Result<SlicePixels> {
        if slice.axis > 2 || slice.index >= self.dims[slice.axis] {
            return Err(Error::config(format!("slice {slice:?} outside grid dims {:?}", self.dims)));
        }
        let (ra, ca) = match slice.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (rows, cols) = (self.dims[ra], self.dims[ca]);
        let mut vals = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let mut i = [0; 3];
                i[slice.axis] = slice.index;
                i[ra] = r;
                i[ca] = c;
                vals.push(self.values[self.index(i)]);
            }
        }
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::numerical("slice contains non-finite values"));
        }
        let span = max - min;
        let pixels = vals
            .iter()
            .map(|&v| if span > 0.0 { (255.0 * (v - min) / span).round() as u8 } else { 0 })
            .collect();
        Ok(SlicePixels {
            rows,
            cols,
            pixels,
            min,
            max,
            slice,
        })
    }
}

/// A plane of a 3D grid: all voxels with `i[axis] == index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub axis: usize,
    pub index: usize,
}

impl Slice {
    /// The first single-voxel axis, else the middle plane normal to axis 1.
    pub fn default_for(dims: [usize; 3]) -> Self {
        match dims.iter().position(|&d| d == 1) {
            Some(axis) => Slice { axis, index: 0 },
            None => Slice { axis: 1, index: dims[1] / 2 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicePixels {
    pub rows: usize,
    pub cols: usize,
    /// Row-major grayscale.
    pub pixels: Vec<u8>,
    pub min: f64,
    pub max: f64,
    pub slice: Slice,
}

impl SlicePixels {
    pub fn sidecar(&self) -> String {
        format!(
            "slice_axis = {}\nslice_index = {}\nmin = {:?}\nmax = {:?}\nmapping = \"pixel = round(255 * (value - min) / (max - min))\"\n",
            self.slice.axis, self.slice.index, self.min, self.max
        )
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.cols as u32, self.rows as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
            w.write_image_data(&self.pixels).map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(out)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes `grid` to `path` in `format`; PNG also writes `<path>.txt` with the
/// normalization. Returns every file written.
pub fn emit_grid(grid: &RawGrid, path: &Path, format: GridFormat, slice: Option<Slice>) -> Result<Vec<std::path::PathBuf>> {
    match format {
        GridFormat::Raw => write_file(path, &grid.to_bytes())?,
        GridFormat::Csv => write_file(path, grid.to_csv().as_bytes())?,
        GridFormat::Png => {
            let px = grid.slice_pixels(slice.unwrap_or_else(|| Slice::default_for(grid.dims)))?;
            write_file(path, &px.to_png()?)?;
            let side = sidecar_path(path);
            write_file(&side, px.sidecar().as_bytes())?;
            return Ok(vec![path.to_path_buf(), side]);
        }
    }
    Ok(vec![path.to_path_buf()])
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    s.into()
}

pub fn read_raw(path: &Path) -> Result<RawGrid> {
    RawGrid::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Lowercase hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RawGrid {
        RawGrid::new([2, 2, 1], [0.0, 10.0, -1.0], [0.5, 1.0, 2.0], vec![0.0, 1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn raw_round_trip_is_bit_identical() {
        let g = RawGrid::new([3, 2, 4], [1.0, -2.5, 1e-300], [0.1, 0.2, 0.3], (0..24).map(|i| (i as f64).sin() / 7.0).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.vaig");
        emit_grid(&g, &p, GridFormat::Raw, None).unwrap();
        let back = read_raw(&p).unwrap();
        assert_eq!(back.to_bytes(), g.to_bytes());
        assert!(back.values.iter().zip(&g.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_layout() {
        let b = small().to_bytes();
        assert_eq!(&b[..4], b"VAIG");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[14..18].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(b[26..34].try_into().unwrap()), 10.0);
        assert_eq!(b.len(), 66 + 32);
    }

    #[test]
    fn truncated_raw_is_rejected() {
        let b = small().to_bytes();
        assert!(RawGrid::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(RawGrid::from_bytes(b"XXXX").is_err());
    }

    #[test]
    fn csv_enumerates_row_major() {
        let csv = small().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "i,j,k,x,y,z,value");
        assert_eq!(lines[1], "0,0,0,0.0,10.0,-1.0,0.0");
        assert_eq!(lines[2], "0,1,0,0.0,11.0,-1.0,1.0");
        assert_eq!(lines[3], "1,0,0,0.5,10.0,-1.0,2.0");
        assert_eq!(lines[4], "1,1,0,0.5,11.0,-1.0,3.0");
    }

    #[test]
    fn png_of_ramp_is_monotone() {
        let g = RawGrid::new([1, 1, 16], [0.0; 3], [1.0; 3], (0..16).map(|i| 0.3 * i as f64 - 1.0).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ramp.png");
        let files = emit_grid(&g, &p, GridFormat::Png, Some(Slice { axis: 0, index: 0 })).unwrap();
        assert_eq!(files.len(), 2);
        let decoder = png::Decoder::new(std::io::BufReader::new(fs::File::open(&p).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (16, 1));
        let px = &buf[..16];
        assert!(px.windows(2).all(|w| w[0] < w[1]));
        assert_eq!((px[0], px[15]), (0, 255));
        let side = fs::read_to_string(sidecar_path(&p)).unwrap();
        assert!(side.contains("min = -1.0") && side.contains("max = 3.5"));
    }

    #[test]
    fn bad_slice_is_rejected() {
        assert!(small().slice_pixels(Slice { axis: 2, index: 1 }).is_err());
        assert!(small().slice_pixels(Slice { axis: 3, index: 0 }).is_err());
    }
}
