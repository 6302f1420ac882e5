//! Raster output for thickness maps: plain PGM/PPM and a CSV matrix.

use std::fmt::Write as _;

use clap::ValueEnum;
use rwt_core::grid::PipeGrid;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMap {
    Grayscale,
    Thermal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Pgm,
    Ppm,
    Csv,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Pgm => "pgm",
            OutputFormat::Ppm => "ppm",
            OutputFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub color_map: ColorMap,
    /// Fixed scale bounds; the observed range is used when absent.
    pub min_mm: Option<f64>,
    pub max_mm: Option<f64>,
    pub output_format: OutputFormat,
}

impl RenderSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        for v in [self.min_mm, self.max_mm].into_iter().flatten() {
            if !v.is_finite() {
                return Err(CliError::Usage(format!("scale bound {v} is not finite")));
            }
        }
        if let (Some(lo), Some(hi)) = (self.min_mm, self.max_mm) {
            if lo >= hi {
                return Err(CliError::Usage(format!(
                    "scale minimum {lo} must be below maximum {hi}"
                )));
            }
        }
        Ok(())
    }
}

/// Observed range rounded outward to 0.5 mm, at least 0.5 mm wide.
pub fn auto_scale(grid: &PipeGrid) -> Option<(f64, f64)> {
    let (lo, hi) = grid.min_max()?;
    let lo = (lo * 2.0).floor() / 2.0;
    let hi = (hi * 2.0).ceil() / 2.0;
    Some(if hi > lo { (lo, hi) } else { (lo, lo + 0.5) })
}

/// Resolves the scale: fixed bounds win, missing ones come from
/// [`auto_scale`].
pub fn scale_for(grid: &PipeGrid, spec: &RenderSpec) -> Result<(f64, f64), CliError> {
    spec.validate()?;
    let auto = auto_scale(grid);
    let lo = spec.min_mm.or(auto.map(|a| a.0));
    let hi = spec.max_mm.or(auto.map(|a| a.1));
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo < hi => Ok((lo, hi)),
        (Some(lo), Some(hi)) => Err(CliError::Usage(format!("empty color scale [{lo}, {hi}]"))),
        _ => Err(CliError::Usage("grid has no observed cells to scale".into())),
    }
}

/// Gray level in 1..=255 for an observed value; 0 marks unobserved cells.
pub fn level(value: f64, (lo, hi): (f64, f64)) -> u8 {
    let x = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
    1 + (x * 254.0).round() as u8
}

/// Black, red, yellow, white ramp.
pub fn thermal(level: u8) -> [u8; 3] {
    if level == 0 {
        return [0, 0, 0];
    }
    let x = (level - 1) as f64 / 254.0 * 3.0;
    let ramp = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ramp(x), ramp(x - 1.0), ramp(x - 2.0)]
}

/// Renders the grid with one pixel per cell: circumferential rows down,
/// longitudinal columns across.
pub fn render(grid: &PipeGrid, spec: &RenderSpec) -> Result<String, CliError> {
    let g = grid.geometry();
    let scale = scale_for(grid, spec)?;
    let mut out = String::new();
    match spec.output_format {
        OutputFormat::Csv => {
            for r in 0..g.n_circ {
                let row: Vec<String> = (0..g.n_long)
                    .map(|c| grid.get(r, c).map(|v| v.to_string()).unwrap_or_default())
                    .collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        OutputFormat::Pgm | OutputFormat::Ppm => {
            let color = spec.output_format == OutputFormat::Ppm;
            let (magic, per_pixel) = if color { ("P3", 3) } else { ("P2", 1) };
            writeln!(out, "{magic}\n# thickness scale {} to {} mm", scale.0, scale.1).unwrap();
            writeln!(out, "{} {}\n255", g.n_long, g.n_circ).unwrap();
            for r in 0..g.n_circ {
                let mut row = Vec::with_capacity(g.n_long * per_pixel);
                for c in 0..g.n_long {
                    let l = grid.get(r, c).map_or(0, |v| level(v, scale));
                    if !color {
                        row.push(l);
                    } else {
                        let rgb = match spec.color_map {
                            ColorMap::Grayscale => [l; 3],
                            ColorMap::Thermal => thermal(l),
                        };
                        row.extend(rgb);
                    }
                }
                let text: Vec<String> = row.iter().map(u8::to_string).collect();
                out.push_str(&text.join(" "));
                out.push('\n');
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rwt_core::grid::PipeGeometry;

    fn spec(format: OutputFormat) -> RenderSpec {
        RenderSpec {
            color_map: ColorMap::Thermal,
            min_mm: None,
            max_mm: None,
            output_format: format,
        }
    }

    #[test]
    fn auto_scale_rounds_outward() {
        let g = PipeGeometry::tiled(2, 2, 50.0).unwrap();
        let grid = PipeGrid::from_fn(g, 30.0, |r, c| 10.2 + r as f64 + 0.6 * c as f64).unwrap();
        assert_eq!(auto_scale(&grid), Some((10.0, 12.0)));
        let flat = PipeGrid::from_fn(g, 30.0, |_, _| 7.0).unwrap();
        assert_eq!(auto_scale(&flat), Some((7.0, 7.5)));
    }

    #[test]
    fn constant_grid_renders_one_level() {
        let g = PipeGeometry::tiled(3, 4, 50.0).unwrap();
        let grid = PipeGrid::from_fn(g, 30.0, |_, _| 12.3).unwrap();
        let pgm = render(&grid, &spec(OutputFormat::Pgm)).unwrap();
        let pixels: Vec<&str> = pgm.lines().skip(4).flat_map(|l| l.split(' ')).collect();
        assert_eq!(pixels.len(), 12);
        assert!(pixels.iter().all(|p| *p == pixels[0]));
    }

    #[test]
    fn levels_and_ramp_ends() {
        assert_eq!(level(1.0, (1.0, 2.0)), 1);
        assert_eq!(level(2.0, (1.0, 2.0)), 255);
        assert_eq!(level(9.0, (1.0, 2.0)), 255);
        assert_eq!(thermal(0), [0, 0, 0]);
        assert_eq!(thermal(1), [0, 0, 0]);
        assert_eq!(thermal(255), [255, 255, 255]);
    }

    #[test]
    fn fixed_bounds_are_checked() {
        let s = RenderSpec {
            min_mm: Some(5.0),
            max_mm: Some(5.0),
            ..spec(OutputFormat::Csv)
        };
        assert!(s.validate().is_err());
    }
}
