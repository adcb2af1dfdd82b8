//! Raster containers and their on-disk formats.
//!
//! A [`FeatureStack`] holds `bands` explanatory planes plus one elevation
//! plane on a `rows x cols` grid. It is stored as `SKIHL-RASTER 1`: an ASCII
//! header line `SKIHL-RASTER 1 <rows> <cols> <bands>\n` followed by the band
//! planes (plane by plane, row-major within a plane) and then the elevation
//! plane, all as little-endian `f32`.
//!
//! Probability maps ([`LabelMap`]) are exported as binary PGM (`P5`, maxval
//! 255) for viewing and as a headerless little-endian `f32` sidecar for exact
//! reloads. Sparse labels are plain `row,col,label` CSV.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const RASTER_MAGIC: &str = "SKIHL-RASTER";
const RASTER_VERSION: u32 = 1;

/// Explanatory feature bands plus elevation on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    rows: usize,
    cols: usize,
    bands: usize,
    values: Vec<f32>,
    elevation: Vec<f32>,
}

impl FeatureStack {
    pub fn new(
        rows: usize,
        cols: usize,
        bands: usize,
        values: Vec<f32>,
        elevation: Vec<f32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::Dimensions(format!(
                "rows, cols and bands must be positive (got {rows}x{cols}x{bands})"
            )));
        }
        let n = rows * cols;
        if values.len() != n * bands {
            return Err(Error::Length {
                expected: n * bands,
                got: values.len(),
            });
        }
        if elevation.len() != n {
            return Err(Error::Length {
                expected: n,
                got: elevation.len(),
            });
        }
        if let Some(index) = values
            .iter()
            .chain(elevation.iter())
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            rows,
            cols,
            bands,
            values,
            elevation,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    /// One band plane, row-major.
    pub fn band(&self, band: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.values[band * n..(band + 1) * n]
    }

    pub fn elevation(&self) -> &[f32] {
        &self.elevation
    }

    #[inline]
    pub fn value(&self, band: usize, row: usize, col: usize) -> f32 {
        self.values[band * self.pixel_count() + row * self.cols + col]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = format!(
            "{RASTER_MAGIC} {RASTER_VERSION} {} {} {}\n",
            self.rows, self.cols, self.bands
        );
        let mut out = Vec::with_capacity(header.len() + 4 * (self.values.len() + self.elevation.len()));
        out.extend_from_slice(header.as_bytes());
        for v in self.values.iter().chain(self.elevation.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::BadHeader("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|_| Error::BadHeader("header is not ASCII".into()))?;
        let fields: Vec<&str> = header.split_ascii_whitespace().collect();
        if fields.len() != 5 || fields[0] != RASTER_MAGIC {
            return Err(Error::BadHeader(format!("unrecognised header {header:?}")));
        }
        if fields[1] != RASTER_VERSION.to_string() {
            return Err(Error::BadHeader(format!("unsupported version {}", fields[1])));
        }
        let dim = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::BadHeader(format!("{what} is not a count: {s:?}")))
        };
        let rows = dim(fields[2], "rows")?;
        let cols = dim(fields[3], "cols")?;
        let bands = dim(fields[4], "bands")?;
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::BadHeader(format!(
                "dimensions must be positive: {rows} {cols} {bands}"
            )));
        }

        let n = rows * cols;
        let floats = n * (bands + 1);
        let body = &bytes[newline + 1..];
        if body.len() != floats * 4 {
            return Err(Error::TruncatedBody {
                expected: floats * 4,
                found: body.len(),
            });
        }
        let mut all: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(index) = all.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let elevation = all.split_off(n * bands);
        Self::new(rows, cols, bands, all, elevation)
    }
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<FeatureStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureStack::from_bytes(&bytes)
}

pub fn save_raster(stack: &FeatureStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, stack.to_bytes()).map_err(|e| Error::io(path, e))
}

/// A single observed pixel label. `flood == true` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SparseLabel {
    pub row: usize,
    pub col: usize,
    pub flood: bool,
}

/// A small set of observed pixel labels, unique per coordinate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparseLabels {
    entries: Vec<SparseLabel>,
}

impl SparseLabels {
    /// Validates bounds and uniqueness against a `rows x cols` grid.
    pub fn new(entries: Vec<SparseLabel>, rows: usize, cols: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.row >= rows || e.col >= cols {
                return Err(Error::Labels {
                    line: i + 1,
                    msg: format!("({}, {}) is outside the {rows}x{cols} grid", e.row, e.col),
                });
            }
            if !seen.insert((e.row, e.col)) {
                return Err(Error::Labels {
                    line: i + 1,
                    msg: format!("duplicate coordinate ({}, {})", e.row, e.col),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn parse_csv(text: &str, rows: usize, cols: usize) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Labels { line: i + 1, msg };
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(bad(format!("expected row,col,label but got {line:?}")));
            }
            let row = parts[0]
                .parse::<usize>()
                .map_err(|_| bad(format!("bad row {:?}", parts[0])))?;
            let col = parts[1]
                .parse::<usize>()
                .map_err(|_| bad(format!("bad col {:?}", parts[1])))?;
            let flood = match parts[2] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("label must be 0 or 1, got {other:?}"))),
            };
            if row >= rows || col >= cols {
                return Err(bad(format!("({row}, {col}) is outside the {rows}x{cols} grid")));
            }
            if !seen.insert((row, col)) {
                return Err(bad(format!("duplicate coordinate ({row}, {col})")));
            }
            entries.push(SparseLabel { row, col, flood });
        }
        Ok(Self { entries })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.row, e.col, u8::from(e.flood)));
        }
        out
    }

    pub fn entries(&self) -> &[SparseLabel] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.entries.iter().any(|e| e.row == row && e.col == col)
    }

    /// Row-major mask of labelled pixels.
    pub fn mask(&self, rows: usize, cols: usize) -> Vec<bool> {
        let mut mask = vec![false; rows * cols];
        for e in &self.entries {
            mask[e.row * cols + e.col] = true;
        }
        mask
    }
}

pub fn load_sparse_labels(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<SparseLabels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SparseLabels::parse_csv(&text, rows, cols)
}

pub fn save_sparse_labels(labels: &SparseLabels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, labels.to_csv()).map_err(|e| Error::io(path, e))
}

/// A per-pixel map of values in `[0, 1]`: probabilities, soft labels or a
/// binary truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl LabelMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimensions(format!("{rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Length {
                expected: rows * cols,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Contract(format!(
                "label map value {} at index {i} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn same_shape(&self, other: &LabelMap) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// Binary P5 PGM with `round(255 * p)` grey levels.
    pub fn to_pgm(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n255\n", self.cols, self.rows);
        let mut out = Vec::with_capacity(header.len() + self.values.len());
        out.extend_from_slice(header.as_bytes());
        out.extend(self.values.iter().map(|&p| pgm_byte(p)));
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        // P5 header: magic, width, height, maxval separated by whitespace,
        // then exactly one whitespace byte before the raster.
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Image("truncated PGM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P5" {
            return Err(Error::Image(format!("expected P5, found {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Image(format!("bad PGM number {s:?}")))
        };
        let cols = parse(&fields[1])?;
        let rows = parse(&fields[2])?;
        let maxval = parse(&fields[3])?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Image(format!("unsupported maxval {maxval}")));
        }
        let body = bytes.get(pos..).unwrap_or(&[]);
        if body.len() != rows * cols {
            return Err(Error::Image(format!(
                "expected {} pixels, found {}",
                rows * cols,
                body.len()
            )));
        }
        let values = body.iter().map(|&b| b as f64 / maxval as f64).collect();
        Self::new(rows, cols, values)
    }

    /// Headerless little-endian `f32` payload.
    pub fn to_raw(&self) -> Vec<u8> {
        self.values
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }

    pub fn from_raw(bytes: &[u8], rows: usize, cols: usize) -> Result<Self> {
        if bytes.len() != rows * cols * 4 {
            return Err(Error::TruncatedBody {
                expected: rows * cols * 4,
                found: bytes.len(),
            });
        }
        let mut values = Vec::with_capacity(rows * cols);
        for (index, c) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            values.push(v as f64);
        }
        Self::new(rows, cols, values)
    }
}

/// Grey level for a probability, rounding half up.
pub fn pgm_byte(p: f64) -> u8 {
    (255.0 * p.clamp(0.0, 1.0)).round() as u8
}

pub fn save_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, map.to_pgm()).map_err(|e| Error::io(path, e))
}

pub fn save_label_map_raw(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, map.to_raw()).map_err(|e| Error::io(path, e))
}

pub fn load_label_map_pgm(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LabelMap::from_pgm(&bytes)
}

pub fn load_label_map_raw(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LabelMap::from_raw(&bytes, rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stack_2x3() -> FeatureStack {
        FeatureStack::new(
            2,
            3,
            1,
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![10.0, 11.0, 12.0, 13.0, 14.0, 15.0],
        )
        .unwrap()
    }

    #[test]
    fn header_and_body_round_trip() {
        let stack = stack_2x3();
        let bytes = stack.to_bytes();
        assert!(bytes.starts_with(b"SKIHL-RASTER 1 2 3 1\n"));
        assert_eq!(bytes.len(), 21 + 12 * 4);
        assert_eq!(FeatureStack::from_bytes(&bytes).unwrap(), stack);
    }

    #[test]
    fn truncated_body_is_rejected() {
        let mut bytes = b"SKIHL-RASTER 1 4 4 1\n".to_vec();
        // 4x4 features + 4x4 elevation = 32 floats; provide only 15.
        for i in 0..15 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        match FeatureStack::from_bytes(&bytes) {
            Err(Error::TruncatedBody { expected, found }) => {
                assert_eq!(expected, 128);
                assert_eq!(found, 60);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_offset_is_reported() {
        let stack = stack_2x3();
        let mut bytes = stack.to_bytes();
        let header = 21;
        bytes[header + 7 * 4..header + 8 * 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match FeatureStack::from_bytes(&bytes) {
            Err(Error::NonFinite { index }) => assert_eq!(index, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_headers() {
        assert!(matches!(
            FeatureStack::from_bytes(b"NOPE 1 2 2 1\n"),
            Err(Error::BadHeader(_))
        ));
        assert!(matches!(
            FeatureStack::from_bytes(b"SKIHL-RASTER 1 2 x 1\n"),
            Err(Error::BadHeader(_))
        ));
        assert!(matches!(
            FeatureStack::from_bytes(b"SKIHL-RASTER 2 1 1 1\n"),
            Err(Error::BadHeader(_))
        ));
        assert!(matches!(
            FeatureStack::from_bytes(b"SKIHL-RASTER 1 1 1 1"),
            Err(Error::BadHeader(_))
        ));
    }

    #[test]
    fn pgm_bytes() {
        assert_eq!(pgm_byte(1.0), 255);
        assert_eq!(pgm_byte(0.5), 128);
        assert_eq!(pgm_byte(0.0), 0);
    }

    #[test]
    fn pgm_round_trip_header() {
        let map = LabelMap::new(2, 3, vec![0.0, 0.5, 1.0, 1.0, 0.0, 0.2]).unwrap();
        let pgm = map.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        let back = LabelMap::from_pgm(&pgm).unwrap();
        assert_eq!(back.rows(), 2);
        assert_eq!(back.cols(), 3);
        for (a, b) in back.values().iter().zip(map.values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn raw_sidecar_round_trip() {
        let map = LabelMap::new(1, 3, vec![0.25, 0.5, 0.75]).unwrap();
        assert_eq!(LabelMap::from_raw(&map.to_raw(), 1, 3).unwrap(), map);
    }

    #[test]
    fn label_csv_errors() {
        assert!(matches!(
            SparseLabels::parse_csv("0,0,1\n0,0,0", 4, 4),
            Err(Error::Labels { line: 2, .. })
        ));
        assert!(matches!(
            SparseLabels::parse_csv("5,5,1", 4, 4),
            Err(Error::Labels { line: 1, .. })
        ));
        assert!(matches!(
            SparseLabels::parse_csv("1,1,2", 4, 4),
            Err(Error::Labels { .. })
        ));
        let ok = SparseLabels::parse_csv("0,0,1\n3,2,0\n", 4, 4).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(SparseLabels::parse_csv(&ok.to_csv(), 4, 4).unwrap(), ok);
    }

    #[test]
    fn label_map_rejects_out_of_range() {
        assert!(LabelMap::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(LabelMap::new(1, 2, vec![0.5]).is_err());
    }

    proptest! {
        #[test]
        fn raster_round_trip_is_bit_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            bands in 1usize..4,
            seed in any::<u64>(),
        ) {
            let n = rows * cols;
            let mut x = seed | 1;
            let mut next = || {
                // xorshift over finite f32 bit patterns
                x ^= x << 13; x ^= x >> 7; x ^= x << 17;
                let v = f32::from_bits(x as u32);
                if v.is_finite() { v } else { (x % 1000) as f32 }
            };
            let values: Vec<f32> = (0..n * bands).map(|_| next()).collect();
            let elevation: Vec<f32> = (0..n).map(|_| next()).collect();
            let stack = FeatureStack::new(rows, cols, bands, values, elevation).unwrap();
            let back = FeatureStack::from_bytes(&stack.to_bytes()).unwrap();
            for (a, b) in back.values.iter().zip(&stack.values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in back.elevation.iter().zip(&stack.elevation) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn pgm_export_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(pgm_byte(lo) <= pgm_byte(hi));
        }
    }
}
