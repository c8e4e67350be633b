//! Datasaurus ingestion and the 3x3 Datasaurus-Grid construction.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// The thirteen set names of the Datasaurus Dozen file.
pub const DATASAURUS_NAMES: [&str; 13] = [
    "away",
    "bullseye",
    "circle",
    "dino",
    "dots",
    "h_lines",
    "high_lines",
    "slant_down",
    "slant_up",
    "star",
    "v_lines",
    "wide_lines",
    "x_shape",
];

/// Default grid selection, cell 0 (bottom-left) to cell 8 (top-right), row by row.
pub const DEFAULT_SELECTION: [&str; 9] = [
    "dino", "away", "bullseye", "circle", "dots", "h_lines", "slant_up", "star", "x_shape",
];

pub const DEFAULT_SPACING: f64 = 3.0;

/// Number of replicas of the training set used as ground truth.
pub const GROUND_TRUTH_REPLICAS: usize = 5;

/// Labeled 2D points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet2D {
    pub points: Vec<[f64; 2]>,
    pub labels: Option<Vec<usize>>,
}

impl PointSet2D {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self {
            points,
            labels: None,
        }
    }

    pub fn with_labels(points: Vec<[f64; 2]>, labels: Vec<usize>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::config(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        Ok(Self {
            points,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor2 {
        let data = self.points.iter().flat_map(|p| p.iter().copied()).collect();
        Tensor2::from_vec(self.points.len(), 2, data).expect("two columns")
    }

    pub fn from_tensor(t: &Tensor2) -> Result<Self> {
        if t.cols() != 2 {
            return Err(Error::config(format!(
                "expected 2 columns, got {}",
                t.cols()
            )));
        }
        Ok(Self::new(
            (0..t.rows()).map(|r| [t.get(r, 0), t.get(r, 1)]).collect(),
        ))
    }

    /// Attaches grid-region labels.
    pub fn label_regions(mut self, spacing: f64) -> Self {
        self.labels = Some(self.points.iter().map(|p| region_of(*p, spacing)).collect());
        self
    }

    /// Points of one region under spacing `spacing`.
    pub fn region(&self, id: usize, spacing: f64) -> PointSet2D {
        PointSet2D::new(
            self.points
                .iter()
                .copied()
                .filter(|p| region_of(*p, spacing) == id)
                .collect(),
        )
    }

    /// `copies` back-to-back copies of the set.
    pub fn replicate(&self, copies: usize) -> PointSet2D {
        let points = self.points.repeat(copies);
        let labels = self.labels.as_ref().map(|l| l.repeat(copies));
        PointSet2D { points, labels }
    }

    /// Writes `cell,x,y` (or `x,y` without labels).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        match &self.labels {
            Some(labels) => {
                writeln!(w, "cell,x,y")?;
                for (p, l) in self.points.iter().zip(labels) {
                    writeln!(w, "{l},{},{}", p[0], p[1])?;
                }
            }
            None => {
                writeln!(w, "x,y")?;
                for p in &self.points {
                    writeln!(w, "{},{}", p[0], p[1])?;
                }
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV with `x` and `y` columns and an optional `cell` column.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| ingestion(1, e))?,
            None => return Err(ingestion(1, "empty file")),
        };
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let find = |name: &str| cols.iter().position(|c| *c == name);
        let (xi, yi) = match (find("x"), find("y")) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                return Err(ingestion(
                    1,
                    format!("header `{header}` lacks x and y columns"),
                ))
            }
        };
        let ci = find("cell");
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| ingestion(line_no, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |idx: usize| -> Result<&str> {
                fields
                    .get(idx)
                    .copied()
                    .ok_or_else(|| ingestion(line_no, "missing column"))
            };
            let x = parse_real(get(xi)?, line_no)?;
            let y = parse_real(get(yi)?, line_no)?;
            points.push([x, y]);
            if let Some(ci) = ci {
                labels.push(
                    get(ci)?
                        .parse::<usize>()
                        .map_err(|_| ingestion(line_no, "cell is not a nonnegative integer"))?,
                );
            }
        }
        Ok(Self {
            points,
            labels: ci.map(|_| labels),
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn ingestion(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Ingestion {
        line,
        message: msg.to_string(),
    }
}

fn parse_real(field: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ingestion(line, format!("`{field}` is not a finite number"))),
    }
}

/// Maps raw Datasaurus coordinates (roughly 0..100) to roughly [-1, 1].
pub fn normalize(v: f64) -> f64 {
    (v - 50.0) / 50.0
}

pub fn denormalize(v: f64) -> f64 {
    v * 50.0 + 50.0
}

/// Parses the `dataset\tx\ty` TSV and normalizes every coordinate.
pub fn parse_datasaurus<R: BufRead>(reader: R) -> Result<BTreeMap<String, PointSet2D>> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| ingestion(1, e))?,
        None => return Err(ingestion(1, "empty file")),
    };
    let cols: Vec<&str> = header.trim().split('\t').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let (di, xi, yi) = match (find("dataset"), find("x"), find("y")) {
        (Some(d), Some(x), Some(y)) => (d, x, y),
        _ => {
            return Err(ingestion(
                1,
                format!(
                    "header must name dataset, x and y columns, found `{}`",
                    header.trim()
                ),
            ))
        }
    };
    let mut sets: BTreeMap<String, PointSet2D> = BTreeMap::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| ingestion(line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let need = di.max(xi).max(yi) + 1;
        if fields.len() < need {
            return Err(ingestion(
                line_no,
                format!(
                    "expected {need} tab-separated columns, found {}",
                    fields.len()
                ),
            ));
        }
        let name = fields[di].trim_matches('"');
        if !DATASAURUS_NAMES.contains(&name) {
            return Err(ingestion(line_no, format!("unknown dataset name `{name}`")));
        }
        let x = normalize(parse_real(fields[xi], line_no)?);
        let y = normalize(parse_real(fields[yi], line_no)?);
        sets.entry(name.to_string())
            .or_default()
            .points
            .push([x, y]);
    }
    Ok(sets)
}

pub fn load_datasaurus(path: &Path) -> Result<BTreeMap<String, PointSet2D>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_datasaurus(std::io::BufReader::new(file))
}

/// Per-cell scale factors.
#[derive(Debug, Clone, PartialEq)]
pub enum CellScales {
    Uniform(f64),
    PerCell([f64; 9]),
}

impl CellScales {
    pub fn get(&self, cell: usize) -> f64 {
        match self {
            CellScales::Uniform(s) => *s,
            CellScales::PerCell(s) => s[cell],
        }
    }

    /// Nine factors log-spaced over [0.05, 1], cell 0 smallest.
    pub fn hetero_default() -> Self {
        let (lo, hi) = (0.05f64.ln(), 1.0f64.ln());
        let mut s = [0.0; 9];
        for (k, v) in s.iter_mut().enumerate() {
            *v = (lo + (hi - lo) * k as f64 / 8.0).exp();
        }
        s[8] = 1.0;
        CellScales::PerCell(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub spacing: f64,
    pub scales: CellScales,
    pub selection: Vec<String>,
}

impl GridSpec {
    pub fn uniform(scale: f64) -> Self {
        Self {
            spacing: DEFAULT_SPACING,
            scales: CellScales::Uniform(scale),
            selection: DEFAULT_SELECTION.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn hetero() -> Self {
        Self {
            scales: CellScales::hetero_default(),
            ..Self::uniform(1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::config(format!(
                "grid spacing must be positive, got {}",
                self.spacing
            )));
        }
        if self.selection.len() != 9 {
            return Err(Error::config(format!(
                "the grid needs exactly nine source sets, got {}",
                self.selection.len()
            )));
        }
        for k in 0..9 {
            let s = self.scales.get(k);
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!(
                    "cell {k} scale must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Centre of cell `k`: column `k % 3` along x, row `k / 3` along y.
    pub fn centre(&self, cell: usize) -> [f64; 2] {
        let col = (cell % 3) as f64 - 1.0;
        let row = (cell / 3) as f64 - 1.0;
        [col * self.spacing, row * self.spacing]
    }
}

/// Scales each selected source and places it at its cell centre; labels are cell ids.
pub fn build_grid(sources: &BTreeMap<String, PointSet2D>, spec: &GridSpec) -> Result<PointSet2D> {
    spec.validate()?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (cell, name) in spec.selection.iter().enumerate() {
        let src = sources
            .get(name)
            .ok_or_else(|| Error::config(format!("source set `{name}` is not available")))?;
        let s = spec.scales.get(cell);
        let c = spec.centre(cell);
        for p in &src.points {
            points.push([p[0] * s + c[0], p[1] * s + c[1]]);
            labels.push(cell);
        }
    }
    PointSet2D::with_labels(points, labels)
}

/// Grid region 0..=8 of a point: each axis splits at `-spacing/2` and `spacing/2`,
/// with boundaries belonging to the upper interval. Id is `3 * row + col`.
pub fn region_of(p: [f64; 2], spacing: f64) -> usize {
    let half = spacing / 2.0;
    let axis = |v: f64| {
        if v < -half {
            0
        } else if v < half {
            1
        } else {
            2
        }
    };
    3 * axis(p[1]) + axis(p[0])
}
