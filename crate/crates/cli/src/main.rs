use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use hybridmatch::experiment::{reflow_grid, PRESETS};
use hybridmatch::io::{read_shape, shape_extension, write_shape};
use hybridmatch::{
    run_experiment, seminorm_value, stiffness_value, Backend, CurveMetricKind, CurveMetricSpec, Dataset, ExperimentConfig, ShapeState, SurfaceMetricSpec,
};

#[derive(Parser)]
#[command(name = "hybridmatch", version, about = "Hybrid diffeomorphic registration of curves and surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic template/target pair and the matching preset configs.
    Synth {
        /// Dataset (cardioids, nested_ellipses, rays, half_circles, three_ellipsoids).
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run one registration and write its artifacts.
    Register {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in configuration instead of a config file.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        /// precond or lbfgs.
        #[arg(long)]
        backend: Option<Backend>,
    },
    /// Evaluate a shape seminorm of a vector field on a shape.
    EvalNorm {
        #[arg(long)]
        shape: PathBuf,
        /// JSON array of per-vertex vectors, all components concatenated.
        #[arg(long)]
        field: PathBuf,
        /// none, h1_general, h1_rot_invariant or h1_rot_scale_invariant; ignored for meshes.
        #[arg(long, default_value = "h1_rot_invariant")]
        kind: CurveMetricKind,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
    },
    /// Redraw the deformation grid of a finished run.
    FlowGrid {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 21)]
        resolution: usize,
    },
}

fn synth(name: &str, out: &Path) -> Result<()> {
    let dataset: Dataset = name.parse()?;
    if dataset == Dataset::Files {
        bail!("`files` is not a synthetic dataset");
    }
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut shapes = None;
    for preset in PRESETS {
        let config = ExperimentConfig::preset(preset)?;
        if config.dataset != dataset {
            continue;
        }
        if shapes.is_none() {
            shapes = Some(config.shapes()?);
        }
        let path = out.join(format!("{preset}.json"));
        fs::write(&path, config.to_json())?;
        written.push(path);
    }
    let (template, target, _) = shapes.context("no preset uses this dataset")?;
    let ext = shape_extension(&template);
    for (stem, shape) in [("template", &template), ("target", &target)] {
        let path = out.join(format!("{stem}.{ext}"));
        write_shape(&path, shape)?;
        written.push(path);
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn register(
    config: Option<PathBuf>,
    preset: Option<String>,
    out: Option<PathBuf>,
    template: Option<PathBuf>,
    target: Option<PathBuf>,
    backend: Option<Backend>,
) -> Result<()> {
    let mut c = match (config, preset) {
        (Some(path), _) => ExperimentConfig::load(&path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(name)) => ExperimentConfig::preset(&name)?,
        (None, None) => bail!("either --config or --preset is required"),
    };
    if template.is_some() {
        c.template = template;
    }
    if target.is_some() {
        c.target = target;
    }
    if let Some(b) = backend {
        c.optimizer.backend = b;
    }
    let run = run_experiment(&c, out.as_deref())?;
    let s = &run.summary;
    println!(
        "{}: {:?} after {} iterations, distance {:.6e} -> {:.6e}, output in {}",
        s.name,
        s.status,
        s.iterations,
        s.initial_distance,
        s.final_distance,
        run.dir.display()
    );
    Ok(())
}

fn eval_norm(shape: &Path, field: &Path, kind: CurveMetricKind, alpha: f64, weight: f64) -> Result<()> {
    let shape = read_shape(shape)?;
    let text = fs::read_to_string(field).with_context(|| format!("reading {}", field.display()))?;
    let field: Vec<Vec<f64>> = serde_json::from_str(&text).with_context(|| format!("parsing {}", field.display()))?;
    if field.iter().any(|v| v.len() != shape.dim()) {
        bail!("every field vector must have {} entries", shape.dim());
    }
    if field.len() != shape.vertex_count() {
        bail!("field has {} vectors, shape has {} vertices", field.len(), shape.vertex_count());
    }
    match &shape {
        ShapeState::Curves(curves) => {
            let spec = CurveMetricSpec::new(kind, alpha, weight)?;
            let mut off = 0;
            let mut total = 0.0;
            for (i, c) in curves.iter().enumerate() {
                let h: Vec<[f64; 2]> = field[off..off + c.len()].iter().map(|v| [v[0], v[1]]).collect();
                off += c.len();
                let v = seminorm_value(c, &h, &spec)?;
                println!("curve {i}: {v}");
                total += v;
            }
            println!("total: {total}");
        }
        ShapeState::Mesh(m) => {
            let h: Vec<[f64; 3]> = field.iter().map(|v| [v[0], v[1], v[2]]).collect();
            println!("total: {}", stiffness_value(m, &h, &SurfaceMetricSpec::new(weight)?)?);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { name, out } => synth(&name, &out),
        Command::Register { config, preset, out, template, target, backend } => register(config, preset, out, template, target, backend),
        Command::EvalNorm { shape, field, kind, alpha, weight } => eval_norm(&shape, &field, kind, alpha, weight),
        Command::FlowGrid { run_dir, resolution } => {
            let n = reflow_grid(&run_dir, resolution)?;
            println!("wrote {n} grid frames to {}", run_dir.join("grid").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
