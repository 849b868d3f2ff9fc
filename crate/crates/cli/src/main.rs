use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use hermloc::detect::detect;
use hermloc::moments::{convert_side, moments_from_density, moments_from_masses, perturb, DensityGrid};
use hermloc::pio::pio_eval_grid;
use hermloc::verify::{run_suite, summary_json, CheckName, SuiteOptions};
use hermloc::{DetectConfig, FilterKind, FilterSpec, GridOptions, MomentSet, PerturbationSpec, Scenario, Side, Summation, Threshold};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

mod manifest;
mod synth;

use manifest::RunManifest;

/// A problem with how the tool was invoked rather than with the data.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "hermloc", version, about = "Count, locate and weigh point masses from Hermite moments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Write a ground-truth scenario file.
    Synth(SynthArgs),
    /// Compute (and optionally perturb) moments of a scenario or density grid.
    Moments(MomentsArgs),
    /// Rewrite a moment file on the other side.
    Convert(ConvertArgs),
    /// Detect spikes from a moment file.
    Recover(RecoverArgs),
    /// Run the kernel verification checks.
    Verify(VerifyArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("box '{s}' is not of the form lo..hi"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound in '{s}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound in '{s}'"))?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(format!("box '{s}' needs finite lo <= hi"));
    }
    Ok((lo, hi))
}

fn parse_side(s: &str) -> Result<Side, String> {
    s.parse().map_err(|e: hermloc::Error| e.to_string())
}

fn parse_filter(s: &str) -> Result<FilterKind, String> {
    s.parse().map_err(|e: hermloc::Error| e.to_string())
}

fn parse_check(s: &str) -> Result<CheckName, String> {
    s.parse().map_err(|e: hermloc::Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<String, String> {
    s.parse::<PerturbationSpec>().map_err(|e| e.to_string())?;
    Ok(s.to_string())
}

fn parse_summation(s: &str) -> Result<Summation, String> {
    match s {
        "plain" => Ok(Summation::Plain),
        "compensated" => Ok(Summation::Compensated),
        other => Err(format!("unknown summation '{other}' (plain or compensated)")),
    }
}

fn parse_spike(s: &str) -> Result<String, String> {
    synth::parse_spike(s)?;
    Ok(s.to_string())
}

fn parse_grid(s: &str) -> Result<String, String> {
    synth::parse_grid(s)?;
    Ok(s.to_string())
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SynthArgs {
    /// JSON file with the same keys as the long flags; flags given on the
    /// command line are ignored when it is present.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// `x1,..,xq@a` or `x1,..,xq@re,im`; repeatable.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_spike)]
    #[serde(default)]
    pub spike: Vec<String>,
    /// `lo..hi`, once for all axes or once per axis. Defaults to the smallest
    /// integer cube holding every spike with a margin of one.
    #[arg(long = "box", allow_hyphen_values = true, value_parser = parse_interval)]
    #[serde(default, rename = "box")]
    pub region: Vec<(f64, f64)>,
    /// `RxC` lattice of spike groups (q = 2).
    #[arg(long, value_parser = parse_grid)]
    pub grid_of_groups: Option<String>,
    #[arg(long, default_value_t = 4.0)]
    pub group_pitch: f64,
    #[arg(long, value_enum, default_value_t = synth::Template::Triangle)]
    pub group_template: synth::Template,
    #[arg(long, default_value_t = 0.6)]
    pub template_scale: f64,
    /// Add this many randomly placed spikes.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub min_separation: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[command(group(ArgGroup::new("source").required(true).args(["scenario", "density"])))]
pub struct MomentsArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Density grid JSON (`q`, `box`, `shape`, `values`).
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Moments with total degree below n^2 are written.
    #[arg(long)]
    pub n: usize,
    /// `none` or `uniform_disk:<eps>:<seed>`; applied on the spatial side.
    #[arg(long, default_value = "none", value_parser = parse_noise)]
    pub noise: String,
    #[arg(long, default_value = "spatial", value_parser = parse_side)]
    pub side: Side,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ConvertArgs {
    #[arg(long)]
    pub moments: PathBuf,
    /// Target side.
    #[arg(long, value_parser = parse_side)]
    pub side: Side,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[command(group(ArgGroup::new("threshold").required(true).args(["threshold_abs", "threshold_rel"])))]
pub struct RecoverArgs {
    #[arg(long)]
    pub moments: PathBuf,
    /// Defaults to the largest n the moment file supports.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub refine_factor: usize,
    #[arg(long)]
    pub threshold_abs: Option<f64>,
    /// Fraction of the grid maximum of |T_n|.
    #[arg(long)]
    pub threshold_rel: Option<f64>,
    #[arg(long)]
    pub linkage_radius: Option<f64>,
    /// `lo..hi`, once for all axes or once per axis.
    #[arg(long = "box", required = true, allow_hyphen_values = true, value_parser = parse_interval)]
    #[serde(rename = "box")]
    pub region: Vec<(f64, f64)>,
    /// Coarse lattice spacing.
    #[arg(long, default_value_t = 0.1)]
    pub spacing: f64,
    #[arg(long, default_value = "smooth_bump", value_parser = parse_filter)]
    pub filter: FilterKind,
    #[arg(long, default_value = "plain", value_parser = parse_summation)]
    pub summation: Summation,
    #[arg(long, default_value_t = hermloc::pio::DEFAULT_MAX_NODES)]
    pub max_nodes: usize,
    /// Group detected spikes that chain together within this radius.
    #[arg(long)]
    pub group: Option<f64>,
    /// Also write the coarse grid and gnuplot scripts (q = 1 or 2).
    #[arg(long)]
    pub plot: bool,
    /// Worker threads; never changes the output bytes.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Checks to run (comma separated); all by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_check)]
    #[serde(default)]
    pub only: Vec<CheckName>,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// Replace every selected check's tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Directory for one JSON report per check, a summary and a manifest.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write the primary output here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum Outcome {
    Done,
    VerificationFailed,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// `out` with its extension replaced by `suffix`, e.g. `r.json` -> `r.groups.csv`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Synth(a) => synth_cmd(a),
        Command::Moments(a) => moments_cmd(a),
        Command::Convert(a) => convert_cmd(a),
        Command::Recover(a) => recover_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Replay(a) => replay_cmd(a),
    }
}

fn synth_cmd(args: SynthArgs) -> Result<Outcome> {
    let resolved = match &args.spec {
        Some(path) => {
            let mut spec: Value = serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
            // The output path always comes from the command line.
            if let Some(obj) = spec.as_object_mut() {
                obj.insert("out".into(), json!(args.out));
                obj.remove("spec");
            }
            let mut from_file = synth_defaults(&args.out);
            merge_synth(&mut from_file, spec)?;
            from_file
        }
        None => args.clone(),
    };
    let q = resolved.q;
    if q == 0 {
        return Err(Usage("dimension q must be at least 1".into()).into());
    }
    let mut masses = Vec::new();
    for s in &resolved.spike {
        let (x, a) = synth::parse_spike(s).map_err(Usage)?;
        if x.len() != q {
            return Err(Usage(format!("spike '{s}' has {} coordinates, q = {q}", x.len())).into());
        }
        masses.push(hermloc::PointMass::new(hermloc::Point::new(x)?, a));
    }
    if let Some(g) = &resolved.grid_of_groups {
        if q != 2 {
            return Err(Usage("--grid-of-groups needs q = 2".into()).into());
        }
        let (rows, cols) = synth::parse_grid(g).map_err(Usage)?;
        masses.extend(synth::grid_of_groups(&synth::GroupLayout {
            rows,
            cols,
            pitch: resolved.group_pitch,
            template: resolved.group_template,
            scale: resolved.template_scale,
        }));
    }
    let region = if resolved.region.is_empty() {
        if resolved.random.is_some() {
            hermloc::Region::cube(q, -3.0, 3.0)?
        } else {
            synth::auto_box(q, &masses)?
        }
    } else {
        synth::region_from_intervals(q, &resolved.region)?
    };
    if let Some(count) = resolved.random {
        let extra = synth::random_masses(count, &region, resolved.min_separation, resolved.seed, &masses)?;
        masses.extend(extra);
    }
    let scenario = synth::build(q, masses, region.clone())?;
    write(&resolved.out, &with_newline(scenario.to_json_string()))?;
    let mut inputs = Vec::new();
    if let Some(p) = &args.spec {
        inputs.push(p.clone());
    }
    RunManifest::new(
        Command::Synth(args.clone()),
        json!({"synth": resolved, "box": region, "spikes": scenario.len()}),
        inputs,
        vec![resolved.out.clone()],
        resolved.random.map(|_| resolved.seed),
    )
    .write_for(&resolved.out)?;
    eprintln!("wrote {} spike(s) to {}", scenario.len(), resolved.out.display());
    Ok(Outcome::Done)
}

fn synth_defaults(out: &Path) -> SynthArgs {
    SynthArgs::try_parse_from_defaults(out)
}

impl SynthArgs {
    fn try_parse_from_defaults(out: &Path) -> SynthArgs {
        #[derive(Parser)]
        struct Wrapper {
            #[command(flatten)]
            args: SynthArgs,
        }
        Wrapper::parse_from(["synth", "--out", &out.to_string_lossy()]).args
    }
}

fn merge_synth(base: &mut SynthArgs, spec: Value) -> Result<()> {
    let mut merged = serde_json::to_value(&*base)?;
    let (Some(obj), Value::Object(extra)) = (merged.as_object_mut(), spec) else {
        return Err(Usage("synth spec must be a JSON object".into()).into());
    };
    for (k, v) in extra {
        if !obj.contains_key(&k) {
            return Err(Usage(format!("unknown key '{k}' in synth spec")).into());
        }
        obj.insert(k, v);
    }
    *base = serde_json::from_value(merged).context("synth spec")?;
    for s in &base.spike {
        synth::parse_spike(s).map_err(Usage)?;
    }
    Ok(())
}

fn moments_cmd(args: MomentsArgs) -> Result<Outcome> {
    let noise: PerturbationSpec = args.noise.parse().map_err(|e: hermloc::Error| Usage(e.to_string()))?;
    let (set, input) = match (&args.scenario, &args.density) {
        (Some(path), _) => {
            let scenario = Scenario::from_json_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
            (moments_from_masses(&scenario, args.n)?, path.clone())
        }
        (None, Some(path)) => {
            let grid = DensityGrid::from_json_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
            (moments_from_density(&grid, args.n)?, path.clone())
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let set = perturb(&set, &noise)?;
    let set = if args.side == Side::Fourier { convert_side(&set) } else { set };
    write(&args.out, &with_newline(set.to_json_string()))?;
    let seed = match noise {
        PerturbationSpec::UniformDisk { seed, .. } => Some(seed),
        _ => None,
    };
    RunManifest::new(
        Command::Moments(args.clone()),
        json!({"q": set.q(), "max_total_degree": set.max_total_degree(), "entries": set.len(), "noise_bound": set.spatial_noise_bound()}),
        vec![input],
        vec![args.out.clone()],
        seed,
    )
    .write_for(&args.out)?;
    eprintln!("wrote {} moment(s) to {}", set.len(), args.out.display());
    Ok(Outcome::Done)
}

fn convert_cmd(args: ConvertArgs) -> Result<Outcome> {
    let set = MomentSet::from_json_str(&read(&args.moments)?).with_context(|| format!("parsing {}", args.moments.display()))?;
    let set = if set.side() == args.side { set } else { convert_side(&set) };
    write(&args.out, &with_newline(set.to_json_string()))?;
    RunManifest::new(
        Command::Convert(args.clone()),
        json!({"side": set.side()}),
        vec![args.moments.clone()],
        vec![args.out.clone()],
        None,
    )
    .write_for(&args.out)?;
    Ok(Outcome::Done)
}

fn recover_cmd(args: RecoverArgs) -> Result<Outcome> {
    let moments = MomentSet::from_json_str(&read(&args.moments)?).with_context(|| format!("parsing {}", args.moments.display()))?;
    let q = moments.q();
    let n = match args.n {
        Some(n) => n,
        None => {
            let mut n = 0;
            while (n + 1) * (n + 1) <= moments.max_total_degree() {
                n += 1;
            }
            if n == 0 {
                return Err(Usage("moment file is too shallow for n = 1".into()).into());
            }
            n
        }
    };
    if args.plot && q > 2 {
        return Err(Usage(format!("--plot needs q = 1 or 2, moment file has q = {q}")).into());
    }
    let region = synth::region_from_intervals(q, &args.region)?;
    let threshold = match (args.threshold_abs, args.threshold_rel) {
        (Some(t), None) => Threshold::Absolute(t),
        (None, Some(f)) => Threshold::Relative(f),
        _ => unreachable!("clap enforces exactly one threshold"),
    };
    let mut cfg = DetectConfig::new(n, region.clone(), args.spacing, threshold).with_refine_factor(args.refine_factor);
    cfg.filter = FilterSpec::new(args.filter);
    cfg.summation = args.summation;
    cfg.max_nodes = args.max_nodes;
    if let Some(r) = args.linkage_radius {
        cfg = cfg.with_linkage_radius(r);
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(Usage("--workers must be at least 1".into()).into());
        }
        cfg = cfg.with_workers(w);
    }
    if let Err(e) = cfg.validate() {
        return Err(Usage(e.to_string()).into());
    }
    let result = detect(&cfg, &moments)?;
    let mut outputs = vec![args.out.clone()];
    write(&args.out, &with_newline(result.to_json_string()))?;
    let csv = sibling(&args.out, "csv");
    write(&csv, &result.to_csv(q))?;
    outputs.push(csv.clone());

    let mut groups_csv = None;
    if let Some(radius) = args.group {
        let report = hermloc::group::group_report(&result.spikes, radius).map_err(|e| Usage(e.to_string()))?;
        let json_path = sibling(&args.out, "groups.json");
        let csv_path = sibling(&args.out, "groups.csv");
        let stats_path = sibling(&args.out, "groups.stats.csv");
        write(&json_path, &with_newline(report.to_json_string()))?;
        write(&csv_path, &report.to_csv(q))?;
        write(&stats_path, &report.stats_csv(q))?;
        outputs.extend([json_path, csv_path.clone(), stats_path]);
        groups_csv = Some(csv_path);
    }

    if args.plot {
        let mut opts = GridOptions::default().with_max_nodes(args.max_nodes);
        if let Some(w) = args.workers {
            opts = opts.with_workers(w);
        }
        let grid = pio_eval_grid(&cfg.pio()?, &moments.to_spatial(), &region, args.spacing, &opts)?;
        let grid_path = sibling(&args.out, "grid.csv");
        write(&grid_path, &grid.to_csv())?;
        let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let script = hermloc::plot::grid_script(q, &name(&grid_path), Some(&name(&csv)))?;
        let script_path = sibling(&args.out, "gp");
        write(&script_path, &script)?;
        outputs.extend([grid_path, script_path]);
        if let Some(g) = groups_csv {
            let path = sibling(&args.out, "groups.gp");
            write(&path, &hermloc::plot::group_script(q, &name(&g))?)?;
            outputs.push(path);
        }
    }

    RunManifest::new(
        Command::Recover(args.clone()),
        serde_json::to_value(&cfg)?,
        vec![args.moments.clone()],
        outputs,
        None,
    )
    .write_for(&args.out)?;
    eprintln!("detected {} spike(s); wrote {}", result.count(), args.out.display());
    Ok(Outcome::Done)
}

fn verify_cmd(args: VerifyArgs) -> Result<Outcome> {
    if args.q == 0 || args.q > 3 {
        return Err(Usage(format!("verify supports q = 1, 2 or 3, got {}", args.q)).into());
    }
    let options = SuiteOptions {
        q: args.q,
        only: if args.only.is_empty() { None } else { Some(args.only.clone()) },
        tolerance: args.tolerance,
    };
    let reports = run_suite(&options)?;
    let summary = summary_json(&reports);
    for r in &reports {
        println!("{}", serde_json::to_string(r)?);
    }
    let failed = reports.iter().filter(|r| r.failed()).count();
    println!("{}", json!({"checks": reports.len(), "failed": failed, "status": if failed == 0 { "pass" } else { "fail" }}));
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut outputs = Vec::new();
        for r in &reports {
            let path = dir.join(format!("{}.json", r.name));
            write(&path, &with_newline(r.to_json_string()))?;
            outputs.push(path);
        }
        let path = dir.join("summary.json");
        write(&path, &with_newline(serde_json::to_string_pretty(&summary)?))?;
        outputs.push(path);
        RunManifest::new(Command::Verify(args.clone()), serde_json::to_value(&options)?, Vec::new(), outputs, None)
            .write_to(&dir.join("manifest.json"))?;
    }
    Ok(if failed == 0 { Outcome::Done } else { Outcome::VerificationFailed })
}

fn replay_cmd(args: ReplayArgs) -> Result<Outcome> {
    let manifest = RunManifest::from_json_str(&read(&args.manifest)?).with_context(|| format!("parsing {}", args.manifest.display()))?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest was written by version {}, this is {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let mut command = manifest.config;
    if let Some(out) = args.out {
        match &mut command {
            Command::Synth(a) => a.out = out,
            Command::Moments(a) => a.out = out,
            Command::Convert(a) => a.out = out,
            Command::Recover(a) => a.out = out,
            Command::Verify(a) => a.out_dir = Some(out),
            Command::Replay(_) => {}
        }
    }
    if matches!(command, Command::Replay(_)) {
        return Err(Usage("a manifest cannot record a replay".into()).into());
    }
    run(command)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}
