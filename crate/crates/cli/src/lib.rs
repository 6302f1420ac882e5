//! Command-line front end: synthetic pipes, marginal fitting, goodness of
//! fit, map prediction, shifted-scan evaluation and raster rendering.

pub mod render;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rwt_core::gof::{compare_families, compare_marginals, GofConfig, GofReport};
use rwt_core::grid::{self, PipeGeometry, PipeGrid, DEFAULT_PITCH_MM};
use rwt_core::marginals::{Family, MarginalModel};
use rwt_core::pipeline::{predict_unscanned, run_experiment, ExperimentSpec, PipelineConfig};
use rwt_core::synthetic::{generate_synthetic, SyntheticSpec};
use serde::Serialize;

use render::{ColorMap, OutputFormat, RenderSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rwt_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON object describing the error.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

type Result<T> = std::result::Result<T, CliError>;

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rwt",
    version,
    about = "Remaining-wall-thickness maps from partial pipe scans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Seed for every random choice (0 when absent; synth then keeps the
    /// spec's own seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".", global = true)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct GridInput {
    /// Grid CSV with columns row,col,thickness_mm.
    pub grid: PathBuf,
    /// Geometry JSON; otherwise tiled from the CSV extent.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Cell pitch in mm used when the geometry is inferred.
    #[arg(long, default_value_t = DEFAULT_PITCH_MM)]
    pub pitch: f64,
}

#[derive(Debug, Args, Clone)]
pub struct GpFlags {
    /// Hyperparameter search starts.
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    /// Objective evaluations per start.
    #[arg(long, default_value_t = 200)]
    pub max_evals: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ground-truth pipe from a JSON spec.
    Synth {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit one marginal family and score it.
    Fit {
        #[command(flatten)]
        input: GridInput,
        #[arg(long, default_value = "gm")]
        family: Family,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Compare Gaussian mixture, Gumbel and Weibull marginals.
    Gof {
        #[command(flatten)]
        input: GridInput,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Fill the unscanned cells of a partial grid.
    Predict {
        #[command(flatten)]
        input: GridInput,
        #[arg(long, default_value = "gm")]
        family: Family,
        #[command(flatten)]
        gp: GpFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate shifted scans on a ground truth and score each family.
    Evaluate {
        #[command(flatten)]
        input: GridInput,
        /// Comma-separated start-line shifts.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2", allow_negative_numbers = true)]
        shifts: Vec<i64>,
        /// Number of sensor lines per run.
        #[arg(long, default_value_t = 6)]
        lines: usize,
        /// Families to evaluate; all three by default.
        #[arg(long, value_delimiter = ',')]
        family: Vec<Family>,
        #[command(flatten)]
        gp: GpFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Write a raster or CSV matrix of a grid.
    Render {
        #[command(flatten)]
        input: GridInput,
        #[arg(long, value_enum, default_value = "grayscale")]
        color_map: ColorMap,
        #[arg(long, value_enum, default_value = "pgm")]
        format: OutputFormat,
        #[arg(long)]
        min_mm: Option<f64>,
        #[arg(long)]
        max_mm: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out).map_err(|source| CliError::Io {
        path: common.out.clone(),
        source,
    })?;
    Ok(&common.out)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value).map_err(rwt_core::Error::from)? + "\n")
}

fn geometry_for(input: &GridInput) -> Result<PipeGeometry> {
    match &input.geometry {
        Some(path) => {
            let g: PipeGeometry = serde_json::from_str(&read_text(path)?).map_err(rwt_core::Error::from)?;
            g.validate()?;
            Ok(g)
        }
        None => {
            let (n_circ, n_long) = grid::infer_extent(&input.grid)?;
            Ok(PipeGeometry::tiled(n_circ, n_long, input.pitch)?)
        }
    }
}

fn load_grid(input: &GridInput) -> Result<PipeGrid> {
    Ok(grid::load_csv(&input.grid, geometry_for(input)?)?)
}

fn pipeline_config(seed: u64, gp: &GpFlags) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.gp.rng_seed = seed;
    cfg.gp.restarts = gp.restarts;
    cfg.gp.max_evals = gp.max_evals;
    cfg.marginal.em.rng_seed = seed;
    cfg
}

fn gof_config(seed: u64, alpha: f64) -> GofConfig {
    let mut cfg = GofConfig {
        alpha,
        ..GofConfig::default()
    };
    cfg.marginal.em.rng_seed = seed;
    cfg
}

/// Messages for stdout, one per line.
pub type Report = Vec<String>;

fn cmd_synth(spec_path: &Path, common: &Common) -> Result<Report> {
    let mut spec = SyntheticSpec::from_json(&read_text(spec_path)?)?;
    spec.rng_seed = common.seed.unwrap_or(spec.rng_seed);
    let grid = generate_synthetic(&spec)?;
    let dir = out_dir(common)?;
    let csv = dir.join("grid.csv");
    grid.save_csv(&csv)?;
    let geo = dir.join("geometry.json");
    write_text(&geo, &to_json(&spec.geometry)?)?;
    Ok(vec![
        format!("wrote {}", csv.display()),
        format!("wrote {}", geo.display()),
    ])
}

fn cmd_fit(input: &GridInput, family: Family, alpha: f64, common: &Common) -> Result<Report> {
    let grid = load_grid(input)?;
    let values = grid.observed_values();
    let cfg = gof_config(common.seed(), alpha);
    let report: GofReport = compare_families(&values, &[family], &cfg)?;
    let model: &MarginalModel = report.families[0]
        .model
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{family} fit failed")))?;
    let dir = out_dir(common)?;
    let marginal = dir.join(format!("marginal_{family}.json"));
    write_text(&marginal, &(model.to_json()? + "\n"))?;
    let gof = dir.join(format!("gof_{family}.json"));
    write_text(&gof, &to_json(&report)?)?;
    Ok(vec![
        report.render_table(),
        format!("wrote {}", marginal.display()),
        format!("wrote {}", gof.display()),
    ])
}

fn cmd_gof(input: &GridInput, alpha: f64, common: &Common) -> Result<Report> {
    let grid = load_grid(input)?;
    let report = compare_marginals(&grid.observed_values(), &gof_config(common.seed(), alpha))?;
    let path = out_dir(common)?.join("gof.json");
    write_text(&path, &to_json(&report)?)?;
    Ok(vec![report.render_table(), format!("wrote {}", path.display())])
}

fn cmd_predict(input: &GridInput, family: Family, gp: &GpFlags, common: &Common) -> Result<Report> {
    let partial = load_grid(input)?;
    let result = predict_unscanned(&partial, family, &pipeline_config(common.seed(), gp))?;
    let dir = out_dir(common)?;
    let mut lines = vec![];
    let csv = dir.join("predicted.csv");
    result.predicted.save_csv(&csv)?;
    lines.push(format!("wrote {}", csv.display()));
    let marginal = dir.join("marginal.json");
    write_text(&marginal, &(result.marginal.to_json()? + "\n"))?;
    lines.push(format!("wrote {}", marginal.display()));
    if let Some(model) = &result.gp {
        let path = dir.join("gp.json");
        write_text(&path, &(model.to_json()? + "\n"))?;
        lines.push(format!("wrote {}", path.display()));
    }
    Ok(lines)
}

fn cmd_evaluate(
    input: &GridInput,
    shifts: &[i64],
    lines: usize,
    families: &[Family],
    gp: &GpFlags,
    common: &Common,
) -> Result<Report> {
    let truth = load_grid(input)?;
    let mut spec = ExperimentSpec::new(truth, common.seed());
    spec.scan_shifts = shifts.to_vec();
    spec.sensor_lines = lines;
    if !families.is_empty() {
        spec.families = families.to_vec();
    }
    spec.pipeline = pipeline_config(common.seed(), gp);
    let report = run_experiment(&spec)?;
    let dir = out_dir(common)?;
    let csv = dir.join("eval.csv");
    write_text(&csv, &report.to_csv_string())?;
    let json = dir.join("eval.json");
    write_text(&json, &(report.to_json()? + "\n"))?;
    let mut out: Report = spec
        .families
        .iter()
        .map(|&f| match report.mean_rmse(f) {
            Some(r) => format!("{:<8} mean rmse {r:.4} mm", f.as_str()),
            None => format!("{:<8} failed", f.as_str()),
        })
        .collect();
    if let Some(b) = report.mean_baseline_rmse() {
        out.push(format!("{:<8} mean rmse {b:.4} mm", "baseline"));
    }
    out.push(format!("wrote {}", csv.display()));
    out.push(format!("wrote {}", json.display()));
    Ok(out)
}

fn cmd_render(input: &GridInput, spec: &RenderSpec, common: &Common) -> Result<Report> {
    let grid = load_grid(input)?;
    let text = render::render(&grid, spec)?;
    let stem = input.grid.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
    let suffix = if spec.output_format == OutputFormat::Csv {
        "_matrix"
    } else {
        ""
    };
    let path = out_dir(common)?.join(format!("{stem}{suffix}.{}", spec.output_format.extension()));
    write_text(&path, &text)?;
    Ok(vec![format!("wrote {}", path.display())])
}

pub fn execute(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Synth { spec, common } => cmd_synth(spec, common),
        Command::Fit {
            input,
            family,
            alpha,
            common,
        } => cmd_fit(input, *family, *alpha, common),
        Command::Gof { input, alpha, common } => cmd_gof(input, *alpha, common),
        Command::Predict {
            input,
            family,
            gp,
            common,
        } => cmd_predict(input, *family, gp, common),
        Command::Evaluate {
            input,
            shifts,
            lines,
            family,
            gp,
            common,
        } => cmd_evaluate(input, shifts, *lines, family, gp, common),
        Command::Render {
            input,
            color_map,
            format,
            min_mm,
            max_mm,
            common,
        } => {
            let spec = RenderSpec {
                color_map: *color_map,
                min_mm: *min_mm,
                max_mm: *max_mm,
                output_format: *format,
            };
            cmd_render(input, &spec, common)
        }
    }
}

/// Parses arguments and runs the command. Returns the process exit code;
/// failures print a single JSON line on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).to_json_line());
            return 2;
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{}", l.trim_end());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            1
        }
    }
}
