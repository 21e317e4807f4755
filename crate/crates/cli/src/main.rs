//! `ethoradar`: simulate FMCW recordings, segment them, train the fusion
//! classifier and decode activity timelines.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ethoradar_core::ethogram::{EventClassifier, NnEventClassifier};
use ethoradar_core::features::{evaluate, NnOptions};
use ethoradar_core::io::{self, PbcRow};
use ethoradar_core::pipeline::{build_corpus, md_power_image, range_db_image};
use ethoradar_core::preprocess::{
    column_normalize, eclean, floor_relative, kernel_clean, remove_outliers, CleanMode,
};
use ethoradar_core::rdmap::{log_magnitude, range_map_truncated};
use ethoradar_core::scenarios::{
    burst_case, class_sample, jitter_kinematics, walk_stop_case, Example, DEFAULT_NOISE_SIGMA,
};
use ethoradar_core::sim::{synthesize_baseband, Kinematics};
use ethoradar_core::{
    decode_backward, decode_forward, reconcile, run_pipeline, ClassId, Dims, FeatureModel,
    PipelineConfig, Scenario, Snippet, StateDiagram,
};

#[derive(Debug, Parser)]
#[command(
    name = "ethoradar",
    version,
    about = "Radar activity recognition pipeline"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Pipeline configuration (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for simulation noise and randomized scenarios.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; falls back to the config's `out_dir`, then `.`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a scripted scenario as JSON.
    Scenario {
        #[arg(value_enum)]
        kind: ScenarioKind,
        /// Class for `class` scenarios, as a roman numeral.
        #[arg(long)]
        class: Option<ClassId>,
        /// Randomize walking speed and limb motion of the examples.
        #[arg(long)]
        jitter: bool,
        #[arg(long, default_value_t = DEFAULT_NOISE_SIGMA)]
        noise: f64,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Synthesize baseband data for a scenario into an IQF1 file.
    Simulate { scenario: PathBuf, output: PathBuf },
    /// Run the full processing chain and write images, curves and segments.
    Pipeline { input: PathBuf },
    /// Processing-resolution dB range-map of a recording (RDM1).
    Rangemap { input: PathBuf, output: PathBuf },
    /// dB micro-Doppler spectrogram of a recording (RDM1).
    Spectrogram { input: PathBuf, output: PathBuf },
    /// Apply one cleaning stage to an RDM1 image.
    Clean {
        #[arg(value_enum)]
        stage: CleanStage,
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Rangemap)]
        mode: Mode,
    },
    /// Simulate a labeled snippet dataset.
    Corpus {
        #[arg(long, default_value_t = 30)]
        per_class: usize,
        /// Classes to include; all fifteen when absent.
        #[arg(long, value_delimiter = ',')]
        classes: Vec<ClassId>,
        #[arg(long, default_value_t = DEFAULT_NOISE_SIGMA)]
        noise: f64,
    },
    /// Train a 2-D PCA fusion model from a labeled snippet dataset.
    Train {
        dataset: PathBuf,
        output: PathBuf,
        /// Components kept for micro-Doppler and range-map, `d_md,d_rm`.
        #[arg(long, value_parser = parse_dims, default_value = "14,4")]
        dims: Dims,
        /// Classes that must be present in the dataset.
        #[arg(long, value_delimiter = ',')]
        classes: Vec<ClassId>,
    },
    /// Classify a labeled dataset and write its confusion matrix.
    Evaluate {
        model: PathBuf,
        dataset: PathBuf,
        /// Restrict to the class set and dims of a registered classifier.
        #[arg(long)]
        classifier: Option<u8>,
    },
    /// Decode segments into an activity timeline.
    Decode {
        segments: PathBuf,
        snippets: PathBuf,
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = DecodeDirection::Both)]
        direction: DecodeDirection,
    },
    /// Render an RDM1 image as PGM.
    Plot { input: PathBuf, output: PathBuf },
    /// Write the state diagram as JSON.
    Diagram {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioKind {
    Example1,
    Example2,
    Example3,
    WalkStop,
    Burst,
    Class,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CleanStage {
    Floor,
    Normalize,
    Eclean,
    Outliers,
    Kernel,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Rangemap,
    Spectrogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecodeDirection {
    Forward,
    Backward,
    Both,
}

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let (a, b) = s.split_once(',').ok_or("expected `d_md,d_rm`")?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad dimension `{v}`: {e}"))
    };
    Ok(Dims {
        d_md: parse(a)?,
        d_rm: parse(b)?,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 usage, 2 IO and file formats, 3 processing.
fn exit_code(e: &anyhow::Error) -> u8 {
    use ethoradar_core::Error as E;
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<E>() {
            return match core {
                E::Io(_) | E::Csv(_) | E::Json(_) | E::Format(_) => 2,
                _ => 3,
            };
        }
    }
    3
}

/// Bad arguments that clap cannot catch.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.global.config {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    let out_dir = cli
        .global
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.global.seed;
    match cli.command {
        Command::Scenario {
            kind,
            class,
            jitter,
            noise,
            output,
        } => cmd_scenario(kind, class, jitter, noise, seed, output.as_deref()),
        Command::Simulate { scenario, output } => cmd_simulate(&scenario, &output, seed, &cfg),
        Command::Pipeline { input } => cmd_pipeline(&input, &cfg, &out_dir),
        Command::Rangemap { input, output } => {
            let bb =
                io::read_iqf(&input).with_context(|| format!("reading {}", input.display()))?;
            let rm = range_map_truncated(&bb, cfg.range_bins)?;
            io::write_rdm(&output, &range_db_image(&rm, &bb.params, &cfg)?)?;
            Ok(())
        }
        Command::Spectrogram { input, output } => {
            let bb =
                io::read_iqf(&input).with_context(|| format!("reading {}", input.display()))?;
            let rm = range_map_truncated(&bb, cfg.range_bins)?;
            let power = md_power_image(&rm, &bb.params, &cfg)?;
            let db = log_magnitude(&power.pixels, cfg.log_floor_db);
            io::write_rdm(&output, &power.with_pixels(db))?;
            Ok(())
        }
        Command::Clean {
            stage,
            input,
            output,
            mode,
        } => cmd_clean(stage, &input, &output, mode, &cfg),
        Command::Corpus {
            per_class,
            classes,
            noise,
        } => cmd_corpus(per_class, &classes, noise, seed, &cfg, &out_dir),
        Command::Train {
            dataset,
            output,
            dims,
            classes,
        } => cmd_train(&dataset, dims, &classes, &output),
        Command::Evaluate {
            model,
            dataset,
            classifier,
        } => cmd_evaluate(&model, &dataset, classifier, &cfg, &out_dir),
        Command::Decode {
            segments,
            snippets,
            model,
            direction,
        } => cmd_decode(&segments, &snippets, &model, direction, &cfg, &out_dir),
        Command::Plot { input, output } => {
            let img =
                io::read_rdm(&input).with_context(|| format!("reading {}", input.display()))?;
            io::write_pgm(&output, &img.pixels)?;
            Ok(())
        }
        Command::Diagram { output } => {
            write_text(output.as_deref(), &StateDiagram::standard().to_json()?)
        }
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_scenario(
    kind: ScenarioKind,
    class: Option<ClassId>,
    jitter: bool,
    noise: f64,
    seed: u64,
    output: Option<&Path>,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kin = if jitter {
        jitter_kinematics(&mut rng)
    } else {
        Kinematics::default()
    };
    let scenario = match kind {
        ScenarioKind::Example1 => Example::One.scenario(&kin, noise)?,
        ScenarioKind::Example2 => Example::Two.scenario(&kin, noise)?,
        ScenarioKind::Example3 => Example::Three.scenario(&kin, noise)?,
        ScenarioKind::WalkStop => walk_stop_case(&mut rng, noise)?.0,
        ScenarioKind::Burst => burst_case(&mut rng, noise)?.0,
        ScenarioKind::Class => {
            let class = class.ok_or_else(|| usage("`class` scenarios need --class"))?;
            class_sample(class, &mut rng, noise)?
        }
    };
    write_text(output, &scenario.to_json()?)
}

fn cmd_simulate(scenario: &Path, output: &Path, seed: u64, cfg: &PipelineConfig) -> Result<()> {
    let text =
        fs::read_to_string(scenario).with_context(|| format!("reading {}", scenario.display()))?;
    let mut scenario = Scenario::from_json(&text).context("parsing scenario")?;
    if let Some(radar) = &cfg.radar {
        scenario.params = radar.clone();
        scenario.validate()?;
    }
    let bb = synthesize_baseband(&scenario, seed)?;
    io::write_iqf(output, &bb).with_context(|| format!("writing {}", output.display()))?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "label,onset_s,offset_s")?;
    for t in &scenario.truth {
        writeln!(stdout, "{},{:.3},{:.3}", t.label, t.onset, t.offset)?;
    }
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_pipeline(input: &Path, cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    let bb = io::read_iqf(input).with_context(|| format!("reading {}", input.display()))?;
    let out = run_pipeline(&bb, cfg)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    io::write_pgm(&out_dir.join("rangemap.pgm"), &out.range_db.pixels)?;
    io::write_pgm(
        &out_dir.join("rangemap_clean.pgm"),
        &out.rm_stages.kernel_cleaned,
    )?;
    io::write_pgm(&out_dir.join("spectrogram.pgm"), &out.md_db)?;
    io::write_pgm(
        &out_dir.join("spectrogram_clean.pgm"),
        &out.md_stages.outliers_removed,
    )?;
    io::write_pgm(&out_dir.join("radon.pgm"), &out.radon.values)?;

    let rows: Vec<PbcRow> = (0..out.pc.len())
        .map(|i| PbcRow {
            t_s: i as f64 / out.frame_rate,
            pc: out.pc[i],
            pcf: out.pcf[i],
            active: out.pbc_active[i] as u8,
        })
        .collect();
    io::write_pbc_csv(create(out_dir, "pbc.csv")?, &rows)?;
    io::write_timeline_csv(create(out_dir, "timeline.csv")?, &out.timeline)?;
    io::write_segments_csv(create(out_dir, "segments.csv")?, &out.segments)?;

    let mut ids = Vec::new();
    let mut snippets = Vec::new();
    for (i, s) in out
        .segment_snippets(cfg.snippet_size)?
        .into_iter()
        .enumerate()
    {
        if let Some(s) = s {
            ids.push(i);
            snippets.push(s);
        }
    }
    io::write_snippet_set(&out_dir.join("snippets"), &ids, &snippets)?;

    for b in &out.timeline.breakpoints {
        println!("breakpoint {:.2} s", b.t);
    }
    println!("{} segments, {} events", out.segments.len(), ids.len());
    Ok(())
}

fn cmd_clean(
    stage: CleanStage,
    input: &Path,
    output: &Path,
    mode: Mode,
    cfg: &PipelineConfig,
) -> Result<()> {
    let img = io::read_rdm(input).with_context(|| format!("reading {}", input.display()))?;
    let mode = match mode {
        Mode::Rangemap => CleanMode::RangeMap,
        Mode::Spectrogram => CleanMode::Spectrogram,
    };
    let p = &cfg.clean;
    let pixels = match stage {
        CleanStage::Floor => floor_relative(&img.pixels),
        CleanStage::Normalize => column_normalize(&img.pixels),
        CleanStage::Eclean => eclean(&img.pixels, p, mode)?,
        CleanStage::Outliers => {
            let min = match mode {
                CleanMode::RangeMap => p.outlier_min_pixels_rm,
                CleanMode::Spectrogram => p.outlier_min_pixels_md,
            };
            remove_outliers(&img.pixels, min)
        }
        CleanStage::Kernel => kernel_clean(&img.pixels, p.kernel_win)?,
    };
    io::write_rdm(output, &img.with_pixels(pixels))?;
    Ok(())
}

fn cmd_corpus(
    per_class: usize,
    classes: &[ClassId],
    noise: f64,
    seed: u64,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<()> {
    let classes = if classes.is_empty() {
        ClassId::ALL.to_vec()
    } else {
        classes.to_vec()
    };
    let corpus = build_corpus(&classes, per_class, seed, noise, cfg)?;
    let ids: Vec<usize> = (0..corpus.len()).collect();
    let snippets: Vec<Snippet> = corpus.into_iter().map(|c| c.snippet).collect();
    io::write_snippet_set(out_dir, &ids, &snippets)?;
    println!(
        "{} snippets written to {}",
        snippets.len(),
        out_dir.display()
    );
    Ok(())
}

fn read_dataset(dir: &Path) -> Result<Vec<Snippet>> {
    let set = io::read_snippet_set(dir)
        .with_context(|| format!("reading snippet set {}", dir.display()))?;
    Ok(set.into_iter().map(|(_, s)| s).collect())
}

fn cmd_train(dataset: &Path, dims: Dims, classes: &[ClassId], output: &Path) -> Result<()> {
    let snippets = read_dataset(dataset)?;
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for s in &snippets {
        let label = s
            .label
            .ok_or_else(|| usage("training snippets must be labeled"))?;
        *counts.entry(label).or_default() += 1;
    }
    for c in classes {
        if !counts.contains_key(c) {
            return Err(ethoradar_core::Error::MissingClass {
                class: c.to_string(),
            }
            .into());
        }
    }
    let model = FeatureModel::train(&snippets, dims)?;
    io::write_model(output, &model).with_context(|| format!("writing {}", output.display()))?;
    let mut stdout = std::io::stdout().lock();
    for (c, n) in &counts {
        writeln!(stdout, "{c}\t{n}")?;
    }
    Ok(())
}

fn cmd_evaluate(
    model: &Path,
    dataset: &Path,
    classifier: Option<u8>,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<()> {
    let model = io::read_model(model).with_context(|| format!("reading {}", model.display()))?;
    let registry = cfg.registry()?;
    let (class_set, dims) = match classifier {
        Some(id) => {
            let spec = registry
                .get(id)
                .ok_or_else(|| usage(format!("no classifier with id {id}")))?;
            (spec.classes.clone(), spec.dims)
        }
        None => (model.classes(), model.dims()),
    };
    let dims = Dims {
        d_md: dims.d_md.min(model.d_md),
        d_rm: dims.d_rm.min(model.d_rm),
    };
    let mut test = Vec::new();
    for s in read_dataset(dataset)? {
        let Some(label) = s.label else { continue };
        if class_set.contains(&label) {
            test.push((model.features(&s)?, label));
        }
    }
    if test.is_empty() {
        bail!("no test snippets belong to the evaluated class set");
    }
    let cm = evaluate(&model, &test, &class_set, &NnOptions { k: cfg.k, dims })?;
    fs::create_dir_all(out_dir)?;
    io::write_confusion_csv(create(out_dir, "confusion.csv")?, &cm)?;
    println!("accuracy {:.4} over {} snippets", cm.accuracy(), test.len());
    Ok(())
}

fn cmd_decode(
    segments: &Path,
    snippets: &Path,
    model: &Path,
    direction: DecodeDirection,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<()> {
    let segs = io::read_segments_csv(BufReader::new(
        File::open(segments).with_context(|| format!("reading {}", segments.display()))?,
    ))?;
    let model = io::read_model(model).with_context(|| format!("reading {}", model.display()))?;
    let mut features = vec![None; segs.len()];
    for (id, s) in
        io::read_snippet_set(snippets).with_context(|| format!("reading {}", snippets.display()))?
    {
        let slot = features
            .get_mut(id)
            .ok_or_else(|| usage(format!("snippet {id} has no matching segment")))?;
        *slot = Some(model.features(&s)?);
    }
    let registry = cfg.registry()?;
    let opts = cfg.decoder_options()?;
    let clf = NnEventClassifier {
        model: &model,
        features,
        registry: &registry,
        k: cfg.k,
    };
    let diagram = StateDiagram::standard();
    let clf: &dyn EventClassifier = &clf;
    let fwd = match direction {
        DecodeDirection::Forward | DecodeDirection::Both => {
            Some(decode_forward(&segs, clf, &diagram, &opts)?)
        }
        DecodeDirection::Backward => None,
    };
    let bwd = match direction {
        DecodeDirection::Backward | DecodeDirection::Both => {
            Some(decode_backward(&segs, clf, &diagram, &opts)?)
        }
        DecodeDirection::Forward => None,
    };

    fs::create_dir_all(out_dir)?;
    let rows = io::decoded_rows(fwd.as_ref(), bwd.as_ref());
    io::write_decoded_csv(create(out_dir, "decoded.csv")?, &rows)?;
    if let (Some(f), Some(b)) = (&fwd, &bwd) {
        let report = reconcile(f, b);
        io::write_reconcile_csv(create(out_dir, "reconcile.csv")?, &report)?;
        println!("forward/backward agreement {:.3}", report.agreement_rate());
    }
    let mut stdout = std::io::stdout().lock();
    for r in &rows {
        writeln!(
            stdout,
            "{:>6.2}-{:<6.2} fwd {:<5} bwd {:<5} -> {}",
            r.onset_s, r.offset_s, r.fwd_label, r.bwd_label, r.state_after
        )?;
    }
    Ok(())
}
