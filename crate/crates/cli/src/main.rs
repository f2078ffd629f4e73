//! `eipart`: command-line front end for the part layout engine.
//!
//! Exit codes: 0 success, 1 validation error, 2 stage failure,
//! 3 external completer failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eipart_core::completion::{Axis, Completer, CompletionError, CompletionRequest, ExternalCommand, Method, MirrorPivot};
use eipart_core::curation::{curate, CurationConfig};
use eipart_core::explode::{optimize_explosion, ExplodeConfig, ExplosionRecord};
use eipart_core::implode::{implode, Granularity, ImplodeConfig, StopMode};
use eipart_core::mesh::{load_mesh, normalize_to_unit_cube, split_connected_components, Part};
use eipart_core::metrics::{evaluate, CdConvention, EvalConfig, EvalGeometry, EvalPart, Normalization};
use eipart_core::pipeline::{
    inspect, read_part_meshes, read_voxel_parts, run_pipeline, write_part_meshes, write_voxel_parts, MethodName,
    PipelineConfig, PipelineError,
};
use eipart_core::render::{render_six, write_views};
use eipart_core::voxel::voxelize;
use eipart_core::Similarity;

#[derive(Parser)]
#[command(name = "eipart", version, about = "Explode/implode part layout engine")]
struct Cli {
    /// Worker threads for parallel kernels (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, split and merge authored meshes into part sets.
    Curate(CurateArgs),
    /// Render six-view normal, CCM and mask images of a mesh.
    Render(RenderArgs),
    /// Surface-voxelize parts into a .voxels file.
    Voxelize(VoxelizeArgs),
    /// Push parts apart until pairwise separated.
    Explode(ExplodeArgs),
    /// Complete exploded parts with a baseline or external completer.
    Complete(CompleteArgs),
    /// Step completed parts back toward the centre until they collide.
    Implode(ImplodeArgs),
    /// Compare predicted parts against ground truth.
    Evaluate(EvaluateArgs),
    /// Run or resume the whole chain in one directory.
    Pipeline(PipelineArgs),
    /// Print the stage table of a run manifest.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct CurateArgs {
    /// A mesh file or a directory of .obj/.glb files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    max_parts: usize,
    #[arg(long, default_value_t = 0.0)]
    collision_margin: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 512)]
    size: u32,
    /// Write 16-bit normal and CCM images.
    #[arg(long)]
    sixteen_bit: bool,
    /// Render the mesh as given instead of normalizing it to the unit cube.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VoxelizeArgs {
    /// A directory of part_<id>.obj files (unit-cube frame) or a mesh file,
    /// which is normalized and split into connected components.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 64)]
    resolution: u32,
    /// Scale from the unit-cube frame into the grid.
    #[arg(long, default_value_t = 0.5)]
    fit: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    margin: u32,
    /// World units or `auto` (one cell).
    #[arg(long, default_value = "auto")]
    step: String,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    record: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Identity,
    Closing,
    Mirror,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, ValueEnum)]
enum PivotArg {
    Part,
    Grid,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long, value_enum, default_value = "identity")]
    method: MethodArg,
    #[arg(long)]
    exploded: PathBuf,
    #[arg(long)]
    record: PathBuf,
    /// Frontal normal map handed to external completers.
    #[arg(long)]
    normal: Option<PathBuf>,
    /// Imploded layout; when given the completer refines it.
    #[arg(long)]
    imploded: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: u32,
    #[arg(long, value_enum, default_value = "x")]
    axis: AxisArg,
    #[arg(long, value_enum, default_value = "part")]
    pivot: PivotArg,
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    #[arg(long)]
    out: PathBuf,
    /// Provenance JSON of the completion.
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// External program and its arguments; the exchange directory is appended.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    cmd: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GranularityArg {
    Voxel,
    Aabb,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    PerPart,
    Global,
}

#[derive(Args)]
struct ImplodeArgs {
    /// Completed parts in their exploded positions.
    #[arg(long)]
    exploded: PathBuf,
    #[arg(long)]
    record: PathBuf,
    /// World units or `auto` (one cell).
    #[arg(long, default_value = "auto")]
    alpha: String,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long, value_enum, default_value = "voxel")]
    granularity: GranularityArg,
    #[arg(long, value_enum, default_value = "per-part")]
    stop_mode: StopArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CdArg {
    Mean,
    Sum,
    Squared,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Gt,
    None,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory (or file) of .voxels and/or part meshes.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    resolution: u32,
    #[arg(long, value_enum, default_value = "mean")]
    cd_convention: CdArg,
    #[arg(long, value_enum, default_value = "gt")]
    normalize: NormArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    resolution: Option<u32>,
    #[arg(long)]
    margin: Option<u32>,
    /// World units or `auto`.
    #[arg(long)]
    step: Option<String>,
    /// World units or `auto`.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long, value_enum)]
    completer: Option<MethodArg>,
    #[arg(long, value_enum)]
    refiner: Option<MethodArg>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_parts: Option<usize>,
    #[arg(long)]
    size: Option<u32>,
    /// External completer program and arguments.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    cmd: Vec<String>,
}

#[derive(Args)]
struct InspectArgs {
    /// Path to manifest.json, or the run directory holding it.
    manifest: PathBuf,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> CliError {
        CliError { code: 1, message: message.into() }
    }

    fn stage(message: impl Into<String>) -> CliError {
        CliError { code: 2, message: message.into() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError { code: e.exit_code() as u8, message: e.to_string() }
    }
}

type CliResult = Result<(), CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::stage(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

fn parse_auto(name: &str, v: &str) -> Result<Option<f64>, CliError> {
    if v == "auto" {
        return Ok(None);
    }
    match v.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(Some(x)),
        _ => Err(CliError::validation(format!("--{name} must be `auto` or a positive number, got `{v}`"))),
    }
}

fn mesh_files(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let rd = std::fs::read_dir(input).map_err(|e| CliError::validation(format!("{}: {e}", input.display())))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("obj" | "glb")))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_curate(a: CurateArgs) -> CliResult {
    let cfg = CurationConfig { max_parts: a.max_parts, collision_margin: a.collision_margin, ..Default::default() };
    cfg.validate().map_err(|e| CliError::validation(e.to_string()))?;
    let files = mesh_files(&a.input)?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let mut rejected = String::new();
    for file in files {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("object").to_string();
        let outcome = load_mesh(&file)
            .map_err(|e| e.to_string())
            .and_then(|m| normalize_to_unit_cube(&m).map_err(|e| e.to_string()))
            .and_then(|(m, tf)| curate(&m, &cfg).map(|r| (r, tf)).map_err(|e| e.to_string()));
        match outcome {
            Ok((Ok(obj), tf)) => {
                let dir = a.out.join(&stem);
                write_part_meshes(&dir, &obj.parts).map_err(|e| io_err(&dir, e))?;
                let parts = serde_json::json!({
                    "source": file.display().to_string(),
                    "source_objects": obj.source_objects,
                    "normalization": tf,
                    "parts": obj.parts.iter().map(|p| serde_json::json!({
                        "id": p.id,
                        "file": format!("part_{}.obj", p.id),
                        "triangles": p.mesh.triangle_count(),
                    })).collect::<Vec<_>>(),
                });
                write_file(&dir.join("parts.json"), json(&parts))?;
                write_file(&dir.join("report.json"), json(&obj.report))?;
                println!("{stem}: {} parts, {} merges", obj.parts.len(), obj.report.merges.len());
            }
            Ok((Err(reason), _)) => {
                let line = serde_json::json!({ "input": file.display().to_string(), "rejected": reason });
                rejected.push_str(&format!("{line}\n"));
                println!("{stem}: rejected");
            }
            Err(e) => {
                let line = serde_json::json!({ "input": file.display().to_string(), "error": e });
                rejected.push_str(&format!("{line}\n"));
                println!("{stem}: error: {e}");
            }
        }
    }
    write_file(&a.out.join("rejected.jsonl"), rejected)
}

fn cmd_render(a: RenderArgs) -> CliResult {
    if a.size == 0 {
        return Err(CliError::validation("--size must be positive"));
    }
    let mesh = load_mesh(&a.input).map_err(|e| io_err(&a.input, e))?;
    let mesh = if a.raw { mesh } else { normalize_to_unit_cube(&mesh).map_err(|e| io_err(&a.input, e))?.0 };
    let views = render_six(&mesh, a.size, a.size);
    write_views(&a.out, &views, a.sixteen_bit).map_err(|e| io_err(&a.out, e))
}

fn cmd_voxelize(a: VoxelizeArgs) -> CliResult {
    if a.resolution < 2 || !(a.fit > 0.0 && a.fit <= 1.0) {
        return Err(CliError::validation("--resolution must be >= 2 and --fit in (0, 1]"));
    }
    let parts: Vec<Part> = if a.input.is_dir() {
        read_part_meshes(&a.input).map_err(CliError::stage)?
    } else {
        let mesh = load_mesh(&a.input).map_err(|e| io_err(&a.input, e))?;
        let (mesh, _) = normalize_to_unit_cube(&mesh).map_err(|e| io_err(&a.input, e))?;
        split_connected_components(&mesh)
    };
    if parts.is_empty() {
        return Err(CliError::stage(format!("{}: no parts", a.input.display())));
    }
    let tf = Similarity { scale: a.fit, translation: [0.0; 3] };
    let occ = parts
        .iter()
        .map(|p| voxelize(&p.mesh.transformed(&tf), p.id, a.resolution))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::stage(e.to_string()))?;
    write_voxel_parts(&a.out, &occ).map_err(CliError::stage)
}

fn cmd_explode(a: ExplodeArgs) -> CliResult {
    let cfg = ExplodeConfig { margin: a.margin, step: parse_auto("step", &a.step)?, max_rounds: a.max_rounds };
    let parts = read_voxel_parts(&a.input).map_err(CliError::stage)?;
    let state = optimize_explosion(&parts, &cfg).map_err(|e| CliError::stage(e.to_string()))?;
    write_voxel_parts(&a.out, &state.parts).map_err(CliError::stage)?;
    write_file(&a.record, state.record.to_json())
}

fn read_record(path: &Path) -> Result<ExplosionRecord, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    ExplosionRecord::from_json(&text).map_err(|e| io_err(path, e))
}

fn cmd_complete(a: CompleteArgs) -> CliResult {
    let method = match a.method {
        MethodArg::Identity => Method::Identity,
        MethodArg::Closing if a.k == 0 => return Err(CliError::validation("--k must be >= 1")),
        MethodArg::Closing => Method::Closing(a.k),
        MethodArg::Mirror => Method::Mirror(
            match a.axis {
                AxisArg::X => Axis::X,
                AxisArg::Y => Axis::Y,
                AxisArg::Z => Axis::Z,
            },
            match a.pivot {
                PivotArg::Part => MirrorPivot::Part,
                PivotArg::Grid => MirrorPivot::Grid,
            },
        ),
        MethodArg::External => {
            if a.cmd.is_empty() {
                return Err(CliError::validation("--method external needs --cmd"));
            }
            if !(a.timeout > 0.0) || !a.timeout.is_finite() {
                return Err(CliError::validation("--timeout must be positive"));
            }
            Method::External(ExternalCommand {
                program: PathBuf::from(&a.cmd[0]),
                args: a.cmd[1..].to_vec(),
                timeout: Duration::from_secs_f64(a.timeout),
            })
        }
    };
    let parts = read_voxel_parts(&a.exploded).map_err(CliError::stage)?;
    let mut req = CompletionRequest::new(parts, read_record(&a.record)?).map_err(|e| CliError::stage(e.to_string()))?;
    if let Some(n) = &a.normal {
        req.normal_front = Some(std::fs::read(n).map_err(|e| io_err(n, e))?);
    }
    if let Some(i) = &a.imploded {
        req.imploded = Some(read_voxel_parts(i).map_err(CliError::stage)?);
    }
    let res = method.complete(&req).map_err(|e| {
        let external = matches!(method, Method::External(_))
            && matches!(e, CompletionError::ExternalFailure(_) | CompletionError::ContractViolation { .. });
        CliError { code: if external { 3 } else { 2 }, message: e.to_string() }
    })?;
    write_voxel_parts(&a.out, res.parts()).map_err(CliError::stage)?;
    if let Some(p) = &a.provenance {
        write_file(p, json(res.provenance()))?;
    }
    Ok(())
}

fn cmd_implode(a: ImplodeArgs) -> CliResult {
    let cfg = ImplodeConfig {
        alpha: parse_auto("alpha", &a.alpha)?,
        max_iterations: a.max_iterations,
        granularity: match a.granularity {
            GranularityArg::Voxel => Granularity::Voxel,
            GranularityArg::Aabb => Granularity::Aabb,
        },
        stop_mode: match a.stop_mode {
            StopArg::PerPart => StopMode::PerPart,
            StopArg::Global => StopMode::Global,
        },
    };
    if cfg.max_iterations == Some(0) {
        return Err(CliError::validation("--max-iterations must be >= 1"));
    }
    let parts = read_voxel_parts(&a.exploded).map_err(CliError::stage)?;
    let record = read_record(&a.record)?;
    let state = implode(&record, &parts, &cfg).map_err(|e| CliError::stage(e.to_string()))?;
    write_voxel_parts(&a.out, &state.parts).map_err(CliError::stage)?;
    if let Some(r) = &a.report {
        write_file(r, json(&state.report(&record, &cfg)))?;
    }
    Ok(())
}

/// `.voxels` files contribute their parts; each mesh file is one part whose
/// id comes from a `part_<id>` stem, otherwise from its sorted position.
fn eval_parts(path: &Path) -> Result<Vec<EvalPart>, CliError> {
    let files: Vec<PathBuf> = if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        let rd = std::fs::read_dir(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let mut v: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
        v.sort();
        v
    };
    let mut parts = Vec::new();
    let mut next_id = 0u32;
    for f in files {
        match f.extension().and_then(|e| e.to_str()) {
            Some("voxels") => {
                for p in read_voxel_parts(&f).map_err(CliError::stage)? {
                    parts.push(EvalPart { id: p.part_id(), geometry: EvalGeometry::Voxels(p) });
                }
            }
            Some("obj" | "glb") => {
                let mesh = load_mesh(&f).map_err(|e| io_err(&f, e))?;
                let id = f
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.strip_prefix("part_"))
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(next_id);
                next_id = next_id.max(id) + 1;
                parts.push(EvalPart { id, geometry: EvalGeometry::Mesh(mesh) });
            }
            _ => {}
        }
    }
    if parts.is_empty() {
        return Err(CliError::validation(format!("{}: no parts found", path.display())));
    }
    Ok(parts)
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    if a.points == 0 {
        return Err(CliError::validation("--points must be >= 1"));
    }
    let cfg = EvalConfig {
        points: a.points,
        seed: a.seed,
        resolution: a.resolution,
        cd: match a.cd_convention {
            CdArg::Mean => CdConvention::Mean,
            CdArg::Sum => CdConvention::Sum,
            CdArg::Squared => CdConvention::Squared,
        },
        normalization: match a.normalize {
            NormArg::Gt => Normalization::Gt,
            NormArg::None => Normalization::None,
        },
    };
    let pred = eval_parts(&a.pred)?;
    let gt = eval_parts(&a.gt)?;
    let report = evaluate(&pred, &gt, &cfg).map_err(|e| CliError::stage(e.to_string()))?;
    write_file(&a.out, json(&report))
}

fn method_name(m: MethodArg) -> MethodName {
    match m {
        MethodArg::Identity => MethodName::Identity,
        MethodArg::Closing => MethodName::Closing,
        MethodArg::Mirror => MethodName::Mirror,
        MethodArg::External => MethodName::External,
    }
}

fn cmd_pipeline(a: PipelineArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?;
            PipelineConfig::from_toml(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(r) = a.resolution {
        cfg.resolution = r;
    }
    if let Some(m) = a.margin {
        cfg.explode.margin = m;
    }
    if let Some(s) = &a.step {
        cfg.explode.step = parse_auto("step", s)?;
    }
    if let Some(s) = &a.alpha {
        // a non-positive alpha must reach config validation, not the flag parser
        cfg.implode.alpha = if s == "auto" {
            None
        } else {
            Some(s.parse().map_err(|_| CliError::validation(format!("--alpha: bad number `{s}`")))?)
        };
    }
    if let Some(m) = a.completer {
        cfg.completer.method = method_name(m);
    }
    if let Some(m) = a.refiner {
        cfg.refiner.method = method_name(m);
    }
    if !a.cmd.is_empty() {
        cfg.completer.command = a.cmd.clone();
        cfg.refiner.command = a.cmd.clone();
    }
    if let Some(p) = a.points {
        cfg.metrics.points = p;
    }
    if let Some(s) = a.seed {
        cfg.metrics.seed = s;
    }
    if let Some(m) = a.max_parts {
        cfg.curation.max_parts = m;
    }
    if let Some(s) = a.size {
        cfg.render.size = s;
    }
    let outcome = run_pipeline(&a.input, &a.out, &cfg)?;
    for s in &outcome.reused {
        println!("{s}: reused");
    }
    for s in &outcome.executed {
        println!("{s}: done");
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> CliResult {
    let path = if a.manifest.is_dir() { a.manifest.join("manifest.json") } else { a.manifest };
    print!("{}", inspect(&path)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Curate(a) => cmd_curate(a),
        Command::Render(a) => cmd_render(a),
        Command::Voxelize(a) => cmd_voxelize(a),
        Command::Explode(a) => cmd_explode(a),
        Command::Complete(a) => cmd_complete(a),
        Command::Implode(a) => cmd_implode(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
