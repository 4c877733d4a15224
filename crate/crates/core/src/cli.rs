//! Command-line front end: `shadow`, `render`, `eval` and `study`.
//!
//! Exit codes: 0 success, 1 replay mismatch, 2 invalid input (manifest,
//! files, flags, votes), 3 shadow geometry failure, 4 denoiser or transport
//! failure, 5 non-finite latents. Every command computes all of its results
//! before it writes the first file.

use crate::denoisers::{IdentityCodec, SidecarClient, SidecarCodec, SidecarDenoiser, ToyDenoiser};
use crate::guidance::{Codec, Denoiser, GuidanceConfig, NegativeMode, PredictionKind, SamplerError};
use crate::imagecore::{color_transfer, ColorSpace, PixelMap};
use crate::io::{encode_mask_png, encode_pfm, encode_png_bytes, read_mask_png, read_png, BitDepth, IoError};
use crate::manifest::{
    hash_inputs, load_scene, sha256_file, DenoiserChoice, ManifestError, RenderRecord, SceneManifest, ShadowSpec,
    RECORD_SCHEMA,
};
use crate::metrics::{
    metrics_csv, metrics_markdown, pixel_metrics, read_votes_csv, study_csv, study_markdown, thurstone_case_v,
    MetricKind, MetricRow, MetricsError,
};
use crate::pipeline::{build_shadows, relight, scene_bundle, PipelineError, Relit, ShadowPair};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REPLAY_MISMATCH: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_GEOMETRY: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;
pub const EXIT_NON_FINITE: i32 = 5;

pub const SIDECAR_ENV: &str = "SPOTLIGHT_SIDECAR_ADDR";

/// Files written by `render`, in write order (the negative shadow is optional).
pub const RENDER_OUTPUTS: [&str; 6] = [
    "composite.png",
    "matte.pfm",
    "with.png",
    "without.png",
    "shadow.png",
    "shadow_neg.png",
];
pub const RECORD_FILE: &str = "record.json";

#[derive(Debug, Parser)]
#[command(name = "spotlight", version, about = "Shadow-conditioned object relighting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize shadow masks from a scene manifest.
    Shadow(ShadowArgs),
    /// Relight the manifest's object and composite it into the background.
    Render(RenderArgs),
    /// Compare predicted images against references.
    Eval(EvalArgs),
    /// Thurstone Case V scores from paired-comparison votes.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShadowMode {
    /// Shadow mapping of the object depth layer onto the background depth.
    Map,
    /// Pixel-height soft shadow from a 2D point light.
    Pixht,
    /// User-drawn shadow strokes.
    Scribble,
}

#[derive(Debug, Args)]
pub struct ShadowArgs {
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ShadowMode,
    /// Positive mask path; the negative goes next to it with a `_neg` suffix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenoiserArg {
    Toy,
    Sidecar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NegativeArg {
    Opposite,
    Noshadow,
    None,
}

impl From<NegativeArg> for NegativeMode {
    fn from(n: NegativeArg) -> Self {
        match n {
            NegativeArg::Opposite => NegativeMode::Opposite,
            NegativeArg::Noshadow => NegativeMode::NoShadow,
            NegativeArg::None => NegativeMode::None,
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Scene manifest; taken from the record with `--replay`.
    #[arg(required_unless_present = "replay")]
    pub manifest: Option<PathBuf>,
    /// Sampling steps (manifest default otherwise).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Guidance scale inside the object mask.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Shadow latent blend weight in [0, 1].
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = DenoiserArg::Toy)]
    pub denoiser: DenoiserArg,
    /// host:port of a sidecar speaking the wire protocol.
    #[arg(long, env = SIDECAR_ENV)]
    pub sidecar_addr: Option<String>,
    /// Connect and per-message timeout for the sidecar.
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    /// Negative conditioning for guidance.
    #[arg(long, value_enum)]
    pub negative: Option<NegativeArg>,
    /// Disable latent shadow blending.
    #[arg(long)]
    pub no_blend: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Re-run a previous render from its record and compare output hashes.
    #[arg(long, conflicts_with_all = ["steps", "gamma", "beta", "seed", "negative", "no_blend"])]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted PNGs.
    pub pred: PathBuf,
    /// Directory of reference PNGs with the same file names.
    pub reference: PathBuf,
    /// Optional directory of masks with the same file names.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Comma-separated: psnr, ssim, rmse, mae, lpips.
    #[arg(long, value_delimiter = ',', default_value = "psnr,ssim,rmse,mae")]
    pub metrics: Vec<String>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Sidecar serving LPIPS.
    #[arg(long, env = SIDECAR_ENV)]
    pub sidecar_addr: Option<String>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// CSV with columns observer,left_method,right_method,choice.
    pub votes: PathBuf,
    /// Bootstrap replicates for the 95% interval; 0 reports point estimates only.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// A failed command: message for stderr and the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn input(message: impl std::fmt::Display) -> Self {
        Self::new(EXIT_INPUT, message.to_string())
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        Self::input(e)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::input(e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Manifest(_) | PipelineError::Image(_) => EXIT_INPUT,
            PipelineError::Shadow(_) => EXIT_GEOMETRY,
            PipelineError::Sampler(s) => match s {
                SamplerError::Denoiser { .. } | SamplerError::Codec(_) => EXIT_BACKEND,
                SamplerError::NonFinite { .. } => EXIT_NON_FINITE,
                SamplerError::Config(_) | SamplerError::Image(_) | SamplerError::Schedule(_) => EXIT_INPUT,
            },
        };
        Self::new(code, e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cmd: &Command) -> Result<i32, CliError> {
    match cmd {
        Command::Shadow(a) => cmd_shadow(a).map(|_| EXIT_OK),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a).map(|_| EXIT_OK),
        Command::Study(a) => cmd_study(a).map(|_| EXIT_OK),
    }
}

/// `shadow.png` -> `shadow_neg.png`.
pub fn negative_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = out
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "png".into());
    out.with_file_name(format!("{stem}_neg.{ext}"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn cmd_shadow(a: &ShadowArgs) -> Result<ShadowPair, CliError> {
    let m = SceneManifest::load(&a.manifest)?;
    let matches = matches!(
        (a.mode, &m.shadow),
        (ShadowMode::Map, ShadowSpec::Directional { .. })
            | (ShadowMode::Pixht, ShadowSpec::Point { .. })
            | (ShadowMode::Scribble, ShadowSpec::Scribble { .. })
    );
    if !matches {
        return Err(CliError::input(format!(
            "mode {:?} needs a matching shadow spec, manifest has '{}'",
            a.mode,
            m.shadow.kind()
        )));
    }
    let scene = load_scene(&m)?;
    let pair = build_shadows(&m, &scene)?;
    if pair.is_empty() {
        eprintln!("warning: shadow mask is empty");
    }
    let negative = pair.negative.as_ref().map(encode_mask_png).transpose()?;
    write_file(&a.out, &encode_mask_png(&pair.positive)?)?;
    if let Some(bytes) = negative {
        write_file(&negative_path(&a.out), &bytes)?;
    }
    Ok(pair)
}

/// What `render` runs, after flags, manifest and record are merged.
#[derive(Debug, Clone)]
struct RenderPlan {
    manifest_path: PathBuf,
    manifest: SceneManifest,
    config: GuidanceConfig,
    denoiser: DenoiserChoice,
    expected: Option<RenderRecord>,
}

fn canonical(p: &Path) -> Result<PathBuf, CliError> {
    p.canonicalize()
        .map_err(|e| CliError::input(format!("{}: {e}", p.display())))
}

fn plan_render(a: &RenderArgs) -> Result<RenderPlan, CliError> {
    if let Some(rec_path) = &a.replay {
        let rec = RenderRecord::load(rec_path)?;
        let manifest = SceneManifest::load(&rec.manifest)?;
        if sha256_file(&rec.manifest)? != rec.manifest_sha256 {
            return Err(CliError::input(format!(
                "manifest {} changed since the record",
                rec.manifest.display()
            )));
        }
        let changed = rec.changed_inputs();
        if !changed.is_empty() {
            return Err(CliError::input(format!(
                "inputs changed since the record: {}",
                changed.join(", ")
            )));
        }
        let denoiser = match (&rec.denoiser, &a.sidecar_addr) {
            (DenoiserChoice::Sidecar { .. }, Some(addr)) => DenoiserChoice::Sidecar { addr: addr.clone() },
            (d, _) => d.clone(),
        };
        return Ok(RenderPlan {
            manifest_path: rec.manifest.clone(),
            manifest,
            config: rec.config.clone(),
            denoiser,
            expected: Some(rec),
        });
    }
    let path = canonical(a.manifest.as_ref().expect("clap requires a manifest"))?;
    let manifest = SceneManifest::load(&path)?;
    let mut config = manifest.guidance.clone();
    if let Some(s) = a.steps {
        config.steps = s;
    }
    if let Some(g) = a.gamma {
        config.gamma = g;
    }
    if let Some(b) = a.beta {
        config.beta = b;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(n) = a.negative {
        config.negative = n.into();
    }
    if a.no_blend {
        config.blend = false;
    }
    config.validate().map_err(CliError::input)?;
    let denoiser = match a.denoiser {
        DenoiserArg::Toy => DenoiserChoice::Toy { rule: manifest.toy },
        DenoiserArg::Sidecar => DenoiserChoice::Sidecar {
            addr: a
                .sidecar_addr
                .clone()
                .ok_or_else(|| CliError::input(format!("--denoiser sidecar needs --sidecar-addr or {SIDECAR_ENV}")))?,
        },
    };
    Ok(RenderPlan {
        manifest_path: path,
        manifest,
        config,
        denoiser,
        expected: None,
    })
}

type Backend = (Box<dyn Denoiser>, Box<dyn Codec>);

fn backend(choice: &DenoiserChoice, cfg: &GuidanceConfig, timeout: Duration) -> Result<Backend, CliError> {
    let transport = |e: crate::denoisers::SidecarError| CliError::new(EXIT_BACKEND, format!("sidecar: {e}"));
    Ok(match choice {
        DenoiserChoice::Toy { rule } => (
            Box::new(ToyDenoiser::new(cfg.train_steps, *rule).map_err(CliError::input)?),
            Box::new(IdentityCodec::rgb()),
        ),
        DenoiserChoice::Sidecar { addr } => {
            let den = SidecarDenoiser::connect(addr, timeout, PredictionKind::V).map_err(transport)?;
            let codec = SidecarCodec::new(SidecarClient::connect(addr.as_str(), timeout).map_err(transport)?)
                .map_err(transport)?;
            (Box::new(den), Box::new(codec))
        }
    })
}

fn png_bytes(img: &PixelMap) -> Result<Vec<u8>, CliError> {
    let img = match img.space() {
        ColorSpace::Linear => color_transfer(img, ColorSpace::Srgb).map_err(CliError::input)?,
        _ => img.clone(),
    };
    Ok(encode_png_bytes(&img, BitDepth::Eight)?)
}

/// Encoded render artifacts keyed by file name.
fn encode_outputs(relit: &Relit, shadows: &ShadowPair) -> Result<Vec<(&'static str, Vec<u8>)>, CliError> {
    let mut out = vec![
        (RENDER_OUTPUTS[0], png_bytes(&relit.composite)?),
        (RENDER_OUTPUTS[1], encode_pfm(relit.matte.map())),
        (RENDER_OUTPUTS[2], png_bytes(&relit.sampler.image_with)?),
        (RENDER_OUTPUTS[3], png_bytes(&relit.sampler.image_without)?),
        (RENDER_OUTPUTS[4], encode_mask_png(&shadows.positive)?),
    ];
    if let Some(n) = &shadows.negative {
        out.push((RENDER_OUTPUTS[5], encode_mask_png(n)?));
    }
    Ok(out)
}

pub fn cmd_render(a: &RenderArgs) -> Result<i32, CliError> {
    let plan = plan_render(a)?;
    let m = &plan.manifest;
    let scene = load_scene(m)?;
    let shadows = build_shadows(m, &scene)?;
    if shadows.is_empty() {
        eprintln!("warning: shadow mask is empty; the render carries no shadow guidance");
    }
    let inputs = hash_inputs(m)?;
    let manifest_sha256 = sha256_file(&plan.manifest_path)?;
    let (denoiser, codec) = backend(&plan.denoiser, &plan.config, Duration::from_secs(a.timeout_secs))?;
    let relit = relight(
        &scene_bundle(&scene, &shadows),
        &plan.config,
        denoiser.as_ref(),
        codec.as_ref(),
    )?;
    let files = encode_outputs(&relit, &shadows)?;
    let outputs: BTreeMap<String, String> = files
        .iter()
        .map(|(name, bytes)| (name.to_string(), crate::manifest::sha256_hex(bytes)))
        .collect();
    let record = RenderRecord {
        schema: RECORD_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        manifest: plan.manifest_path.clone(),
        manifest_sha256,
        inputs,
        config: plan.config.clone(),
        denoiser: plan.denoiser.clone(),
        outputs,
    };

    for (name, bytes) in &files {
        write_file(&a.out.join(name), bytes)?;
    }
    write_file(&a.out.join(RECORD_FILE), record.to_json().as_bytes())?;
    eprintln!(
        "rendered {} steps, gamma {}, beta {}, seed {}, negative {:?} -> {}",
        plan.config.steps,
        plan.config.gamma,
        plan.config.beta,
        plan.config.seed,
        relit.sampler.negative,
        a.out.display()
    );

    if let Some(expected) = &plan.expected {
        let differing: Vec<&String> = expected
            .outputs
            .iter()
            .filter(|(k, v)| record.outputs.get(*k) != Some(*v))
            .map(|(k, _)| k)
            .chain(record.outputs.keys().filter(|k| !expected.outputs.contains_key(*k)))
            .collect();
        if !differing.is_empty() {
            eprintln!("replay mismatch: {differing:?}");
            return Ok(EXIT_REPLAY_MISMATCH);
        }
        println!("replay: {} outputs identical", record.outputs.len());
    }
    Ok(EXIT_OK)
}

fn png_names(dir: &Path) -> Result<Vec<String>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| CliError::input(e.to_string()))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            names.push(p.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Brings two decoded images to the same channel count and color space.
fn comparable(a: PixelMap, b: PixelMap) -> Result<(PixelMap, PixelMap), MetricsError> {
    let (a, b) = if a.channels() == b.channels() {
        (a, b)
    } else {
        (a.to_rgb(), b.to_rgb())
    };
    if a.space() == b.space() {
        return Ok((a, b));
    }
    Ok((
        color_transfer(&a, ColorSpace::Srgb)?,
        color_transfer(&b, ColorSpace::Srgb)?,
    ))
}

fn parse_metrics(names: &[String]) -> Result<Vec<MetricKind>, CliError> {
    let mut out = Vec::new();
    for n in names {
        let k = MetricKind::parse(n).ok_or_else(|| CliError::input(format!("unknown metric '{n}'")))?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(CliError::input("no metrics requested"));
    }
    Ok(out)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Vec<MetricRow>, CliError> {
    let cols = parse_metrics(&a.metrics)?;
    let wants_lpips = cols.contains(&MetricKind::Lpips);
    if wants_lpips && a.sidecar_addr.is_none() {
        return Err(CliError::input(format!("lpips needs --sidecar-addr or {SIDECAR_ENV}")));
    }
    let pred = png_names(&a.pred)?;
    let refs = png_names(&a.reference)?;
    let unmatched: Vec<&String> = pred
        .iter()
        .filter(|n| refs.binary_search(n).is_err())
        .chain(refs.iter().filter(|n| pred.binary_search(n).is_err()))
        .collect();
    if !unmatched.is_empty() {
        return Err(CliError::input(format!("unmatched files: {unmatched:?}")));
    }
    if pred.is_empty() {
        return Err(CliError::input(format!("no PNG files in {}", a.pred.display())));
    }
    if let Some(md) = &a.masks {
        let missing: Vec<&String> = pred.iter().filter(|n| !md.join(n).is_file()).collect();
        if !missing.is_empty() {
            return Err(CliError::input(format!("masks missing for {missing:?}")));
        }
    }

    let load = |name: &String| -> Result<(PixelMap, PixelMap), CliError> {
        let (p, r) = comparable(read_png(&a.pred.join(name))?, read_png(&a.reference.join(name))?)
            .map_err(|e| CliError::input(format!("{name}: {e}")))?;
        Ok((p, r))
    };
    let mut rows: Vec<MetricRow> = pred
        .par_iter()
        .map(|name| {
            let (p, r) = load(name)?;
            let mask = match &a.masks {
                Some(md) => Some(read_mask_png(&md.join(name))?),
                None => None,
            };
            let report = pixel_metrics(&p, &r, mask.as_ref()).map_err(|e| CliError::input(format!("{name}: {e}")))?;
            Ok(MetricRow::new(name.clone(), report))
        })
        .collect::<Result<_, CliError>>()?;

    if wants_lpips {
        let addr = a.sidecar_addr.as_deref().unwrap_or_default();
        let backend = |e: crate::denoisers::SidecarError| CliError::new(EXIT_BACKEND, format!("sidecar: {e}"));
        let mut client = SidecarClient::connect(addr, Duration::from_secs(30)).map_err(backend)?;
        for row in &mut rows {
            let (p, r) = load(&row.name)?;
            row.lpips = Some(client.lpips(&p, &r).map_err(backend)?);
        }
    }

    print!("{}", metrics_markdown(&rows, &cols));
    if let Some(csv) = &a.csv {
        write_file(csv, metrics_csv(&rows, &cols).as_bytes())?;
    }
    Ok(rows)
}

pub fn cmd_study(a: &StudyArgs) -> Result<crate::metrics::StudyResult, CliError> {
    let file = std::fs::File::open(&a.votes).map_err(|e| CliError::input(format!("{}: {e}", a.votes.display())))?;
    let votes = read_votes_csv(std::io::BufReader::new(file)).map_err(CliError::input)?;
    let result = thurstone_case_v(&votes, a.bootstrap, a.seed).map_err(CliError::input)?;
    println!("{} observers, {} votes", result.observers, votes.len());
    print!("{}", study_markdown(&result));
    if let Some(csv) = &a.csv {
        write_file(csv, study_csv(&result).as_bytes())?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_suffix() {
        assert_eq!(negative_path(Path::new("out/s.png")), PathBuf::from("out/s_neg.png"));
        assert_eq!(negative_path(Path::new("s")), PathBuf::from("s_neg.png"));
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "spotlight",
            "render",
            "scene.json",
            "--gamma",
            "1",
            "--negative",
            "noshadow",
            "--no-blend",
            "--out",
            "o",
        ])
        .unwrap();
        let Command::Render(r) = cli.command else { panic!() };
        assert_eq!(
            (r.gamma, r.negative, r.no_blend),
            (Some(1.0), Some(NegativeArg::Noshadow), true)
        );
        assert!(Cli::try_parse_from(["spotlight", "render", "--out", "o"]).is_err());
        assert!(Cli::try_parse_from([
            "spotlight",
            "render",
            "--replay",
            "r.json",
            "--gamma",
            "2",
            "--out",
            "o"
        ])
        .is_err());
        assert!(Cli::try_parse_from(["spotlight", "render", "--replay", "r.json", "--out", "o"]).is_ok());
    }

    #[test]
    fn metric_names() {
        let v = |s: &[&str]| parse_metrics(&s.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        assert_eq!(
            v(&["psnr", "SSIM", "psnr"]).unwrap(),
            vec![MetricKind::Psnr, MetricKind::Ssim]
        );
        assert_eq!(v(&["fid"]).unwrap_err().code, EXIT_INPUT);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["spotlight", "render", "--bogus"]), EXIT_INPUT);
        assert_eq!(run(["spotlight", "--help"]), EXIT_OK);
    }

    #[test]
    fn error_codes() {
        let nan = CliError::from(PipelineError::Sampler(SamplerError::NonFinite {
            step: 3,
            timestep: 940,
        }));
        assert_eq!(nan.code, EXIT_NON_FINITE);
        assert!(nan.message.contains("step 3"));
        let geo = CliError::from(PipelineError::Shadow(crate::shadowsynth::ShadowError::EmptyMask));
        assert_eq!(geo.code, EXIT_GEOMETRY);
    }
}
