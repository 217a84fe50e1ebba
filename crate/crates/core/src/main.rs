use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pntkit::fock::operator_matrix;
use pntkit::geometry::{holonomy_dimension, sample_points, BlockRef, TowerOptions, DEFAULT_RANK_TOL, DEFAULT_SEED, DEFAULT_STEP};
use pntkit::holonomy::{
    adiabatic_check, commutator_defect, geometric_phase_area, holonomy_ordered_exp, holonomy_projector_transport, loop_polygon, AdiabaticOptions,
    HolonomyOptions, HolonomyResult, ParameterLoop,
};
use pntkit::models::{builtin, hamiltonian_at, parse_model, serialize_model, ModelSpec, ParameterPoint, BUILTINS};
use pntkit::pnt::{composite_pnt, pnt_scan, ScanConfig};
use pntkit::report::{matrix_json, rows_csv, rows_text, Report, RunManifest};
use pntkit::spectral::{basis_for, default_cluster_tol, eigen_blocks, local_frame, BlockSelector, Gauge};
use pntkit::{Error, Result};

#[derive(Parser)]
#[command(name = "pntkit", version, about = "Holonomy groups and particle-number thresholds of bosonic Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenvalues and degenerate blocks at one parameter point.
    Spectrum(SpectrumArgs),
    /// Rank of curvature and covariant derivatives of one eigenspace.
    Curvature(CurvatureArgs),
    /// Holonomy of one eigenspace around a loop.
    Holonomy(HolonomyArgs),
    /// Particle-number threshold scan.
    Pnt(PntArgs),
    /// Parse and check a model document.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Model document, or the name of a builtin model.
    #[arg(long)]
    model: String,
    /// Fock layer (number-conserving models) or maximum particle number (pnt).
    #[arg(long = "N")]
    n: Option<u32>,
    /// Per-mode cutoff for truncated models.
    #[arg(long)]
    cutoff: Option<u32>,
    /// Seed for random sample points.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Parameter value `name=value`; unset parameters come from the base or a seeded random point.
    #[arg(long = "param")]
    params: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Document)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with code 4 on truncation or reliability warnings.
    #[arg(long)]
    strict: bool,
    /// Record the wall-clock time in the manifest.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Document,
    Table,
    Text,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CurvatureArgs {
    #[command(flatten)]
    common: Common,
    /// Eigenvalue of the block (default: the most degenerate block).
    #[arg(long, allow_hyphen_values = true)]
    eigenvalue: Option<f64>,
    /// Highest covariant-derivative order.
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Random sample points in addition to the base point.
    #[arg(long, default_value_t = 3)]
    points: usize,
    /// Relative singular-value threshold.
    #[arg(long = "rank-tol", default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Method {
    OrderedExp,
    Projector,
    Adiabatic,
    Both,
}

#[derive(Args)]
struct HolonomyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    eigenvalue: Option<f64>,
    /// Loop document.
    #[arg(long = "loop")]
    loop_doc: PathBuf,
    /// Second loop for the commutator defect.
    #[arg(long = "loop2")]
    loop2: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::OrderedExp)]
    method: Method,
    /// Finite-difference step for the connection.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    /// Total evolution time for the adiabatic method.
    #[arg(long, default_value_t = 100.0)]
    time: f64,
}

#[derive(Args)]
struct PntArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Random sample points in addition to the base point.
    #[arg(long, default_value_t = 3)]
    points: usize,
    #[arg(long = "rank-tol", default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: String,
}

struct Output {
    report: Report,
    table: String,
    text: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let strict = match &cli.cmd {
        Cmd::Spectrum(a) => a.common.strict,
        Cmd::Curvature(a) => a.common.strict,
        Cmd::Holonomy(a) => a.common.strict,
        Cmd::Pnt(a) => a.common.strict,
        Cmd::Validate(_) => false,
    };
    let run = match cli.cmd {
        Cmd::Spectrum(a) => spectrum(&a).map(|o| (o, a.common)),
        Cmd::Curvature(a) => curvature(&a).map(|o| (o, a.common)),
        Cmd::Holonomy(a) => holonomy(&a).map(|o| (o, a.common)),
        Cmd::Pnt(a) => pnt(&a).map(|o| (o, a.common)),
        Cmd::Validate(a) => return validate(&a),
    };
    match run.and_then(|(o, common)| emit(o, &common)) {
        Ok(warned) if warned && strict => ExitCode::from(4),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else if strict && matches!(e, Error::Truncation(_)) {
                ExitCode::from(4)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn emit(o: Output, common: &Common) -> Result<bool> {
    let mut report = o.report;
    if common.timestamp {
        report.manifest.timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs());
    }
    let body = match common.format {
        Format::Document => report.to_json(),
        Format::Table => o.table,
        Format::Text => o.text,
    };
    match &common.out {
        Some(p) => std::fs::write(p, body).map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))?,
        None => print!("{body}"),
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(!report.warnings.is_empty())
}

fn validate(a: &ValidateArgs) -> ExitCode {
    match load_model(&a.model, None) {
        Ok((spec, _)) => {
            println!("{}: ok ({} parameters, {} boson modes)", spec.name, spec.params.len(), spec.system.boson_modes);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

fn load_model(arg: &str, cutoff: Option<u32>) -> Result<(ModelSpec, String)> {
    let path = Path::new(arg);
    let (mut spec, doc) = if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {arg}: {e}")))?;
        (parse_model(&text)?, text)
    } else if BUILTINS.contains(&arg) {
        let s = builtin(arg)?;
        let doc = serialize_model(&s);
        (s, doc)
    } else {
        return Err(Error::Config(format!("`{arg}` is neither a file nor a builtin model ({})", BUILTINS.join(", "))));
    };
    if let Some(c) = cutoff {
        if spec.system.cutoff.is_none() {
            return Err(Error::Config("--cutoff applies only to truncated models".into()));
        }
        spec.system.cutoff = Some(c);
    }
    spec.validate()?;
    Ok((spec, doc))
}

fn resolve_point(spec: &ModelSpec, common: &Common) -> Result<ParameterPoint> {
    let mut p = sample_points(spec, common.seed, 1).into_iter().next().unwrap_or_default();
    for kv in &common.params {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("expected name=value, got `{kv}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("bad value in `{kv}`")))?;
        if !spec.param_names().iter().any(|n| n == k.trim()) {
            return Err(Error::UnboundParameter(k.trim().into()));
        }
        p.set(k.trim(), v);
    }
    spec.check_point(&p)?;
    Ok(p)
}

fn layer_of(spec: &ModelSpec, common: &Common) -> Option<u32> {
    if spec.number_conserving() {
        Some(common.n.unwrap_or(1))
    } else {
        None
    }
}

fn spectrum_blocks(spec: &ModelSpec, point: &ParameterPoint, layer: Option<u32>) -> Result<Vec<pntkit::spectral::EigenspaceBlock>> {
    let basis = basis_for(spec, layer)?;
    let c = spec.compiled();
    let h = if c.isospectral() { operator_matrix(&c.h, &basis, point)? } else { hamiltonian_at(spec, point, &basis)? };
    eigen_blocks(&h, default_cluster_tol(spec))
}

fn pick_block(spec: &ModelSpec, point: &ParameterPoint, layer: Option<u32>, eigenvalue: Option<f64>) -> Result<(f64, BlockRef)> {
    let blocks = spectrum_blocks(spec, point, layer)?;
    let b = match eigenvalue {
        Some(e) => blocks
            .iter()
            .min_by(|a, b| (a.eigenvalue - e).abs().total_cmp(&(b.eigenvalue - e).abs()))
            .filter(|b| (b.eigenvalue - e).abs() < 1e-6 * e.abs().max(1.0))
            .ok_or_else(|| Error::Config(format!("no eigenvalue {e} in the selected basis")))?,
        None => blocks.iter().max_by(|a, b| a.dimension.cmp(&b.dimension).then(b.eigenvalue.total_cmp(&a.eigenvalue))).ok_or_else(|| Error::Config("empty basis".into()))?,
    };
    Ok((b.eigenvalue, BlockRef { layer, spectral_index: b.spectral_index, dimension: b.dimension }))
}

fn manifest(spec: &ModelSpec, doc: &str, config: Value) -> RunManifest {
    RunManifest::new(&spec.name, doc, config)
}

fn spectrum(a: &SpectrumArgs) -> Result<Output> {
    let c = &a.common;
    let (spec, doc) = load_model(&c.model, c.cutoff)?;
    let point = resolve_point(&spec, c)?;
    let layer = layer_of(&spec, c);
    let blocks = spectrum_blocks(&spec, &point, layer)?;
    let mut warnings = Vec::new();
    let rows: Vec<Value> = blocks
        .iter()
        .map(|b| {
            if b.ill_conditioned {
                warnings.push(format!("eigenvalue {} is ill-conditioned", b.eigenvalue));
            }
            json!({"eigenvalue": b.eigenvalue, "degeneracy": b.dimension, "spectral_index": b.spectral_index, "ill_conditioned": b.ill_conditioned})
        })
        .collect();
    let mut table = String::from("eigenvalue,degeneracy\n");
    let mut text = format!("{} at {}\n", spec.name, fmt_point(&point));
    for b in &blocks {
        table.push_str(&format!("{},{}\n", b.eigenvalue, b.dimension));
        text.push_str(&format!("{:>12.6}  x{}\n", b.eigenvalue, b.dimension));
    }
    let config = json!({"layer": layer, "cutoff": spec.system.cutoff, "point": point, "seed": c.seed, "cluster_tol": default_cluster_tol(&spec)});
    let result = json!({"point": point, "layer": layer, "blocks": rows});
    Ok(Output { report: Report::new("spectrum", manifest(&spec, &doc, config), result, warnings), table, text })
}

fn curvature(a: &CurvatureArgs) -> Result<Output> {
    let c = &a.common;
    let (spec, doc) = load_model(&c.model, c.cutoff)?;
    let layer = layer_of(&spec, c);
    let mut points = sample_points(&spec, c.seed, a.points);
    if !c.params.is_empty() || points.is_empty() {
        points.insert(0, resolve_point(&spec, c)?);
    }
    let (eps, blk) = pick_block(&spec, &points[0], layer, a.eigenvalue)?;
    let opts = TowerOptions { k_max: a.order, ..Default::default() };
    let r = holonomy_dimension(&spec, std::slice::from_ref(&blk), &points, &opts, a.rank_tol)?;
    let mut warnings: Vec<String> = r.skipped.iter().map(|s| format!("skipped sample point: {}", s.reason)).collect();
    if r.stagnation_order.is_none() && a.order > 0 {
        warnings.push(format!("rank still growing at order {}", a.order));
    }
    let mut table = String::from("order,rank\n");
    for (k, v) in r.rank_by_order.iter().enumerate() {
        table.push_str(&format!("{k},{v}\n"));
    }
    let text = format!(
        "{} block eps={} d={}: dim F = {}, rank = {} (by order {:?}, bound {})\n",
        spec.name, eps, blk.dimension, r.dim_f, r.rank, r.rank_by_order, r.max_dimension
    );
    let config = json!({"layer": layer, "cutoff": spec.system.cutoff, "order": a.order, "seed": c.seed, "points": a.points, "rank_tol": a.rank_tol, "eigenvalue": eps});
    let result = json!({"eigenvalue": eps, "block": blk, "span": r});
    Ok(Output { report: Report::new("curvature", manifest(&spec, &doc, config), result, warnings), table, text })
}

fn read_loop(path: &Path) -> Result<ParameterLoop> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ParameterLoop::parse(&text)
}

fn holonomy(a: &HolonomyArgs) -> Result<Output> {
    let c = &a.common;
    let (spec, doc) = load_model(&c.model, c.cutoff)?;
    let layer = layer_of(&spec, c);
    let lp = read_loop(&a.loop_doc)?;
    spec.check_point(lp.base())?;
    let (eps, _) = pick_block(&spec, lp.base(), layer, a.eigenvalue)?;
    let gauge = if spec.compiled().isospectral() && spec.number_conserving() { Gauge::Isospectral } else { Gauge::ProjectorTransport };
    let field = local_frame(&spec, lp.base(), &BlockSelector { layer, eigenvalue: eps }, gauge, default_cluster_tol(&spec))?;
    let hopts = HolonomyOptions { step: a.step, ..Default::default() };
    let run = |lp: &ParameterLoop, m: Method| -> Result<HolonomyResult> {
        match m {
            Method::Projector => holonomy_projector_transport(&field, lp, &hopts),
            Method::Adiabatic => adiabatic_check(&field, lp, &AdiabaticOptions { total_time: a.time, ..Default::default() }),
            _ => holonomy_ordered_exp(&field, lp, &hopts),
        }
    };
    let methods = if a.method == Method::Both { vec![Method::OrderedExp, Method::Projector] } else { vec![a.method] };
    let results: Vec<HolonomyResult> = methods.iter().map(|&m| run(&lp, m)).collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let describe = |r: &HolonomyResult| {
        let phases: Vec<f64> = r.eigenvalues().iter().map(|z| z.arg()).collect();
        json!({"method": r.method, "unitary": matrix_json(&r.unitary), "eigenphases": phases, "estimate": r.estimate, "segments": r.segments, "unitarity_defect": r.unitarity_defect})
    };
    let mut result = json!({"eigenvalue": eps, "dimension": field.dimension(), "results": results.iter().map(describe).collect::<Vec<_>>()});
    let mut text = format!("{} block eps={} d={}\n", spec.name, eps, field.dimension());
    let mut table = String::from("method,index,eigenphase\n");
    for r in &results {
        let phases: Vec<f64> = r.eigenvalues().iter().map(|z| z.arg()).collect();
        text.push_str(&format!("{:?}: eigenphases {:?} (change {:.2e}, {} segments)\n", r.method, phases, r.estimate, r.segments));
        for (i, p) in phases.iter().enumerate() {
            table.push_str(&format!("{},{},{}\n", serde_json::to_value(r.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(), i, p));
        }
        if r.unitarity_defect > 1e-6 {
            warnings.push(format!("{:?} holonomy unitarity defect {:.2e}", r.method, r.unitarity_defect));
        }
    }
    if results.len() == 2 {
        let dev = pntkit::linalg::op_norm(&(&results[0].unitary - &results[1].unitary));
        result["cross_method_deviation"] = json!(dev);
        text.push_str(&format!("cross-method deviation {dev:.3e}\n"));
    }
    if spec.name == "lambda" && lp.moving().iter().all(|m| m == "theta" || m == "phi") {
        if let Ok(area) = loop_polygon(&lp, "theta", "phi").and_then(|v| geometric_phase_area(&v)) {
            result["geometric_phase_area"] = json!(area);
            text.push_str(&format!("area phase {area}\n"));
        }
    }
    if let Some(p2) = &a.loop2 {
        let l2 = read_loop(p2)?;
        let u2 = run(&l2, methods[0])?;
        let defect = commutator_defect(&results[0].unitary, &u2.unitary);
        result["commutator_defect"] = json!(defect);
        result["second_loop"] = describe(&u2);
        text.push_str(&format!("commutator defect {defect:.3e}\n"));
    }
    let config = json!({"layer": layer, "cutoff": spec.system.cutoff, "method": format!("{:?}", methods), "step": a.step, "time": a.time,
        "min_segments": hopts.min_segments, "tol": hopts.tol, "loop": lp.to_toml()});
    Ok(Output { report: Report::new("holonomy", manifest(&spec, &doc, config), result, warnings), table, text })
}

fn pnt(a: &PntArgs) -> Result<Output> {
    let c = &a.common;
    let (spec, doc) = load_model(&c.model, c.cutoff)?;
    let cfg = ScanConfig { n_max: c.n.unwrap_or(4), k_max: a.order, samples: a.points, seed: c.seed, rank_tol: a.rank_tol, ..Default::default() };
    let r = if spec.kind == pntkit::models::ModelKind::Composite { composite_pnt(&spec, &cfg)? } else { pnt_scan(&spec, &cfg)? };
    let warnings: Vec<String> = r.rows.iter().flat_map(|row| row.flags.iter().map(move |f| format!("row {}: {f}", row.label))).collect();
    let text = format!("{}N_t = {}\nD(N) = {:?}\n{}\n", rows_text(&r.rows), r.n_t, r.attainment, r.caveat);
    let table = rows_csv(&r.rows);
    let config = serde_json::to_value(&cfg).expect("config serializes");
    let result = serde_json::to_value(&r).expect("report serializes");
    Ok(Output { report: Report::new("pnt", manifest(&spec, &doc, config), result, warnings), table, text })
}

fn fmt_point(p: &ParameterPoint) -> String {
    p.values.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}
