//! Thickness maps on the unrolled pipe surface.
//!
//! Rows run around the circumference, columns along the pipe axis. Cell
//! `(row, col)` covers one sensor footprint; its reading is attributed to
//! the footprint centroid.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sensor footprint edge.
pub const DEFAULT_PITCH_MM: f64 = 50.0;
/// Default upper bound accepted for a thickness reading.
pub const DEFAULT_MAX_THICKNESS_MM: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipeGeometry {
    pub diameter_mm: f64,
    pub length_mm: f64,
    pub sensor_pitch_mm: f64,
    pub n_circ: usize,
    pub n_long: usize,
}

impl PipeGeometry {
    pub fn new(diameter_mm: f64, length_mm: f64, sensor_pitch_mm: f64, n_circ: usize, n_long: usize) -> Result<Self> {
        let g = Self {
            diameter_mm,
            length_mm,
            sensor_pitch_mm,
            n_circ,
            n_long,
        };
        g.validate()?;
        Ok(g)
    }

    /// Geometry whose circumference and length are tiled exactly by the grid.
    pub fn tiled(n_circ: usize, n_long: usize, sensor_pitch_mm: f64) -> Result<Self> {
        Self::new(
            n_circ as f64 * sensor_pitch_mm / PI,
            n_long as f64 * sensor_pitch_mm,
            sensor_pitch_mm,
            n_circ,
            n_long,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.diameter_mm) || !pos(self.length_mm) || !pos(self.sensor_pitch_mm) {
            return Err(Error::Geometry(
                "diameter, length and pitch must be positive and finite".into(),
            ));
        }
        if self.n_circ == 0 || self.n_long == 0 {
            return Err(Error::Geometry("grid must have at least one cell".into()));
        }
        let around = self.n_circ as f64 * self.sensor_pitch_mm;
        if (around - PI * self.diameter_mm).abs() > self.sensor_pitch_mm + 1e-9 {
            return Err(Error::Geometry(format!(
                "{} cells of {} mm do not wrap a {} mm diameter",
                self.n_circ, self.sensor_pitch_mm, self.diameter_mm
            )));
        }
        if self.n_long as f64 * self.sensor_pitch_mm > self.length_mm + self.sensor_pitch_mm + 1e-9 {
            return Err(Error::Geometry(format!(
                "{} cells of {} mm exceed the {} mm section",
                self.n_long, self.sensor_pitch_mm, self.length_mm
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_circ * self.n_long
    }

    /// Circumferential extent covered by the rows; the wrap-around period.
    pub fn circumference_mm(&self) -> f64 {
        self.n_circ as f64 * self.sensor_pitch_mm
    }

    /// Footprint centroid of a cell as `(circ_mm, long_mm)`.
    pub fn centroid(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (row as f64 + 0.5) * self.sensor_pitch_mm,
            (col as f64 + 0.5) * self.sensor_pitch_mm,
        )
    }

    fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_long + col
    }

    fn check_cell(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.n_circ || col >= self.n_long {
            return Err(Error::OutOfRange {
                row,
                col,
                n_circ: self.n_circ,
                n_long: self.n_long,
            });
        }
        Ok(())
    }
}

/// Boolean selection over the cells of a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    n_circ: usize,
    n_long: usize,
    bits: Vec<bool>,
}

impl CellMask {
    pub fn new(n_circ: usize, n_long: usize, value: bool) -> Self {
        Self {
            n_circ,
            n_long,
            bits: vec![value; n_circ * n_long],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.n_long + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.n_long + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_circ, self.n_long)
    }

    pub fn not(&self) -> Self {
        Self {
            n_circ: self.n_circ,
            n_long: self.n_long,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n_long = self.n_long;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / n_long, i % n_long))
    }
}

/// A thickness map with an observation mask. Unobserved cells hold no value.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeGrid {
    geometry: PipeGeometry,
    max_thickness_mm: f64,
    cells: Vec<Option<f64>>,
}

impl PipeGrid {
    /// Grid with nothing observed.
    pub fn empty(geometry: PipeGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry,
            max_thickness_mm: DEFAULT_MAX_THICKNESS_MM,
            cells: vec![None; geometry.n_cells()],
        })
    }

    /// Builds a grid from explicit cells. Listing a cell twice is an error.
    pub fn from_cells<I>(geometry: PipeGeometry, max_thickness_mm: f64, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut grid = Self::empty(geometry)?;
        grid.max_thickness_mm = max_thickness_mm;
        for (row, col, value) in cells {
            grid.insert(row, col, value)?;
        }
        Ok(grid)
    }

    /// Fully observed grid with `f(row, col)` in every cell.
    pub fn from_fn<F>(geometry: PipeGeometry, max_thickness_mm: f64, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> f64,
    {
        let cells = (0..geometry.n_circ)
            .flat_map(|r| (0..geometry.n_long).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, f(r, c)))
            .collect::<Vec<_>>();
        Self::from_cells(geometry, max_thickness_mm, cells)
    }

    fn insert(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        self.geometry.check_cell(row, col)?;
        if !value.is_finite() || value <= 0.0 || value > self.max_thickness_mm {
            return Err(Error::BadThickness { row, col, value });
        }
        let idx = self.geometry.index(row, col);
        if self.cells[idx].is_some() {
            return Err(Error::DuplicateCell { row, col });
        }
        self.cells[idx] = Some(value);
        Ok(())
    }

    pub fn geometry(&self) -> &PipeGeometry {
        &self.geometry
    }

    pub fn max_thickness_mm(&self) -> f64 {
        self.max_thickness_mm
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row >= self.geometry.n_circ || col >= self.geometry.n_long {
            return None;
        }
        self.cells[self.geometry.index(row, col)]
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_some()
    }

    pub fn observed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    pub fn mask(&self) -> CellMask {
        CellMask {
            n_circ: self.geometry.n_circ,
            n_long: self.geometry.n_long,
            bits: self.cells.iter().map(Option::is_some).collect(),
        }
    }

    /// Observed cells in row-major order.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n_long = self.geometry.n_long;
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(i, c)| c.map(|v| (i / n_long, i % n_long, v)))
    }

    pub fn observed_values(&self) -> Vec<f64> {
        self.cells.iter().flatten().copied().collect()
    }

    /// Unobserved cells in row-major order.
    pub fn unobserved(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n_long = self.geometry.n_long;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(move |(i, _)| (i / n_long, i % n_long))
    }

    /// Copy of this grid with the listed cells filled in. Cells that are
    /// already observed keep their value; values are validated as usual.
    pub fn filled<I>(&self, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut out = self.clone();
        for (row, col, value) in values {
            if !out.is_observed(row, col) {
                out.insert(row, col, value)?;
            }
        }
        Ok(out)
    }

    /// Copy keeping only the cells selected by `mask`.
    pub fn restricted(&self, mask: &CellMask) -> Result<Self> {
        if mask.dims() != (self.geometry.n_circ, self.geometry.n_long) {
            return Err(Error::InvalidInput("mask shape does not match grid".into()));
        }
        let mut out = self.clone();
        for (slot, &keep) in out.cells.iter_mut().zip(&mask.bits) {
            if !keep {
                *slot = None;
            }
        }
        Ok(out)
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.cells.iter().flatten().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Writes the observed cells as `row,col,thickness_mm` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "col", "thickness_mm"]).map_err(csv_io)?;
        for (row, col, v) in self.observed() {
            w.write_record([row.to_string(), col.to_string(), v.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Deserialize)]
struct CsvCell {
    row: usize,
    col: usize,
    thickness_mm: f64,
}

/// Reads a `row,col,thickness_mm` CSV into a grid over `geometry`.
pub fn load_csv(path: impl AsRef<Path>, geometry: PipeGeometry) -> Result<PipeGrid> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_csv(file, geometry, path)
}

pub fn read_csv<R: Read>(reader: R, geometry: PipeGeometry, label: &Path) -> Result<PipeGrid> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(label, 1, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["row", "col", "thickness_mm"] {
        return Err(Error::Csv {
            path: label.to_path_buf(),
            line: 1,
            msg: format!(
                "expected header row,col,thickness_mm, found {:?}",
                header.iter().collect::<Vec<_>>()
            ),
        });
    }
    let mut grid = PipeGrid::empty(geometry)?;
    for record in rdr.deserialize::<CsvCell>() {
        let cell = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(label, line, e)
        })?;
        grid.insert(cell.row, cell.col, cell.thickness_mm)?;
    }
    Ok(grid)
}

fn csv_error(path: &Path, line: u64, e: csv::Error) -> Error {
    Error::Csv {
        path: PathBuf::from(path),
        line,
        msg: e.to_string(),
    }
}

/// Scans just the CSV for its largest row/column indices, for callers that
/// have no geometry on hand.
pub fn infer_extent(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let mut extent: Option<(usize, usize)> = None;
    for record in rdr.deserialize::<CsvCell>() {
        let cell = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(path, line, e)
        })?;
        let (r, c) = extent.unwrap_or((0, 0));
        extent = Some((r.max(cell.row + 1), c.max(cell.col + 1)));
    }
    extent.ok_or_else(|| Error::InvalidInput(format!("{}: no cells", path.display())))
}

/// The circumferential lines covered by one pass of the tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanPattern {
    pub sensor_lines: Vec<usize>,
    pub shift: i64,
}

pub const DEFAULT_SENSOR_LINES: usize = 6;

impl ScanPattern {
    pub fn new(sensor_lines: Vec<usize>, shift: i64) -> Self {
        Self { sensor_lines, shift }
    }

    /// `n_lines` sensors spread evenly around `n_circ` rows, sensor 1 on
    /// row `shift`.
    pub fn evenly_spaced(n_circ: usize, n_lines: usize, shift: i64) -> Self {
        let lines = (0..n_lines).map(|k| k * n_circ / n_lines.max(1)).collect();
        Self::new(lines, shift)
    }

    /// Passes needed before every row has been seen at least once.
    pub fn runs_to_full_coverage(&self, n_circ: usize) -> usize {
        let n = self.sensor_lines.len();
        if n == 0 {
            return 0;
        }
        n_circ.div_ceil(n)
    }

    /// Rows actually covered once the shift is applied.
    pub fn rows(&self, n_circ: usize) -> Result<Vec<usize>> {
        let mut seen = HashSet::new();
        for &line in &self.sensor_lines {
            if line >= n_circ {
                return Err(Error::InvalidInput(format!(
                    "sensor line {line} outside a {n_circ}-row grid"
                )));
            }
            if !seen.insert(line) {
                return Err(Error::InvalidInput(format!("sensor line {line} listed twice")));
            }
        }
        let n = n_circ as i64;
        Ok(self
            .sensor_lines
            .iter()
            .map(|&r| (r as i64 + self.shift).rem_euclid(n) as usize)
            .collect())
    }
}

/// Keeps only the rows swept by `pattern`. The input must be fully observed.
pub fn apply_scan(grid: &PipeGrid, pattern: &ScanPattern) -> Result<PipeGrid> {
    if !grid.is_fully_observed() {
        return Err(Error::InvalidInput(
            "scan simulation needs a fully observed ground truth".into(),
        ));
    }
    let g = grid.geometry();
    let rows = pattern.rows(g.n_circ)?;
    let mut mask = CellMask::new(g.n_circ, g.n_long, false);
    for &r in &rows {
        for c in 0..g.n_long {
            mask.set(r, c, true);
        }
    }
    grid.restricted(&mask)
}

/// Root mean square thickness difference over the cells selected by `mask`.
pub fn rmse(predicted: &PipeGrid, truth: &PipeGrid, mask: &CellMask) -> Result<f64> {
    if predicted.geometry() != truth.geometry() {
        return Err(Error::InvalidInput("grids have different geometry".into()));
    }
    let g = truth.geometry();
    if mask.dims() != (g.n_circ, g.n_long) {
        return Err(Error::InvalidInput("mask shape does not match grid".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (row, col) in mask.cells() {
        let (Some(p), Some(t)) = (predicted.get(row, col), truth.get(row, col)) else {
            return Err(Error::InvalidInput(format!(
                "cell ({row}, {col}) selected for scoring is not observed in both grids"
            )));
        };
        sum += (p - t) * (p - t);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty scoring mask".into()));
    }
    Ok((sum / n as f64).sqrt())
}
