use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use c2g::augment::{augment_traced, AugmentConfig, AugmentTrace};
use c2g::compressor::{
    compress_batch, estimate_grid_spacing, BatchOptions, BatchReport, BatchStats,
};
use c2g::container::{read_c2g, write_c2g, write_tiff};
use c2g::ingest::{
    default_property_names, load_object_csv, load_object_csv_lenient, read_sidecar, sidecar_path,
    write_object_csv, write_sidecar, CsvSchema, ImageMetadata,
};
use c2g::nn::{read_model, write_model};
use c2g::preview::export_preview;
use c2g::synth::{generate, SynthSpec};
use c2g::train::inspect_first_layer;
use c2g::train::{evaluate, repeat_runs, Architecture};
use c2g::{seed, C2GImage, ObjectImage};
use serde::Serialize;

use crate::args::{ArchitectureName, Command, CsvArgs, Preset, ReportFormat};
use crate::config::{stage_seed, CliConfig};
use crate::error::UsageError;

pub struct Session {
    pub cfg: CliConfig,
    pub jobs: usize,
}

pub fn run(cmd: Command, mut ctx: Session) -> Result<()> {
    let global = ctx.cfg.seed;
    let stage = cmd.name();
    match cmd {
        Command::EstimateGrid {
            inputs,
            csv,
            round,
            report,
        } => {
            apply_csv_args(&mut ctx.cfg, &csv);
            log_config(&ctx.cfg, stage, None);
            estimate_grid(
                &inputs,
                &ctx.cfg,
                round || ctx.cfg.compress.round_to_int,
                report,
            )
        }
        Command::Compress {
            inputs,
            out,
            d_um,
            auto,
            round,
            tiff,
            csv,
            report,
        } => {
            apply_csv_args(&mut ctx.cfg, &csv);
            let c = &mut ctx.cfg.compress;
            if let Some(d) = d_um {
                if !(d.is_finite() && d > 0.0) {
                    return Err(
                        UsageError(format!("--d must be a positive number, got {d}")).into(),
                    );
                }
                c.d_um = Some(d);
            }
            if auto {
                c.d_um = None;
            }
            c.round_to_int |= round;
            c.tiff |= tiff;
            log_config(&ctx.cfg, stage, None);
            compress(&inputs, &out, &ctx.cfg, report)
        }
        Command::Augment {
            inputs,
            out,
            copies,
            preview,
            channels,
            report,
        } => {
            let s = stage_seed(global, stage);
            ctx.cfg.augment.seed = s;
            log_config(&ctx.cfg, stage, Some(s));
            let map = [channels[0], channels[1], channels[2]];
            augment(
                &inputs,
                &out,
                copies,
                preview.as_deref(),
                map,
                &ctx.cfg.augment,
                report,
            )
        }
        Command::Synth {
            out,
            per_class,
            preset,
        } => {
            let s = stage_seed(global, stage);
            if let Some(n) = per_class {
                ctx.cfg.synth.per_class = n;
            }
            if let Some(p) = preset {
                ctx.cfg.synth.preset = match p {
                    Preset::Planted => "planted",
                    Preset::Null => "null",
                }
                .into();
                ctx.cfg.synth.spec = None;
            }
            let mut spec = match (&ctx.cfg.synth.spec, ctx.cfg.synth.preset.as_str()) {
                (Some(spec), _) => spec.clone(),
                (None, "planted") => SynthSpec::planted_default(s),
                (None, "null") => SynthSpec::null_task(s),
                (None, other) => {
                    return Err(UsageError(format!(
                        "synth.preset must be `planted` or `null`, got `{other}`"
                    ))
                    .into())
                }
            };
            spec.seed = s;
            ctx.cfg.synth.spec = Some(spec.clone());
            log_config(&ctx.cfg, stage, Some(s));
            synth(&out, &spec, ctx.cfg.synth.per_class)
        }
        Command::Train {
            inputs,
            out,
            architecture,
            epochs,
            runs,
            batch_size,
            no_augment,
            report,
        } => {
            let s = stage_seed(global, stage);
            let t = &mut ctx.cfg.train;
            t.seed = s;
            if let Some(a) = architecture {
                t.architecture = match a {
                    ArchitectureName::Deeplnino => Architecture::DeepLNiNo,
                    ArchitectureName::Deepcnet => Architecture::DeepCNet {
                        layers: 8,
                        growth: 32,
                        dense_units: 128,
                    },
                };
            }
            if epochs.is_some() {
                t.epochs = epochs;
            }
            if let Some(r) = runs {
                t.runs = r;
            }
            if let Some(b) = batch_size {
                t.batch_size = b;
            }
            if no_augment {
                t.augment = AugmentConfig::disabled();
            }
            t.parallel_runs |= ctx.jobs > 1;
            t.validate().map_err(|e| UsageError(e.to_string()))?;
            log_config(&ctx.cfg, stage, Some(s));
            train(&inputs, &out, &ctx.cfg, report)
        }
        Command::Eval {
            model,
            inputs,
            report,
        } => {
            log_config(&ctx.cfg, stage, None);
            eval(&model, &inputs, report)
        }
        Command::InspectWeights {
            model,
            threshold,
            csv,
            heatmap,
            cell,
        } => {
            if let Some(t) = threshold {
                ctx.cfg.inspect.threshold = t;
            }
            log_config(&ctx.cfg, stage, None);
            inspect(
                &model,
                ctx.cfg.inspect.threshold,
                csv.as_deref(),
                heatmap.as_deref(),
                cell,
            )
        }
    }
}

fn log_config(cfg: &CliConfig, stage: &str, stage_seed: Option<u64>) {
    match stage_seed {
        Some(s) => log::info!("{stage}: global seed {}, stage seed {s}", cfg.seed),
        None => log::info!("{stage}: global seed {}", cfg.seed),
    }
    log::info!(
        "resolved config: {}",
        serde_json::to_string(cfg).expect("config serializes")
    );
}

fn apply_csv_args(cfg: &mut CliConfig, a: &CsvArgs) {
    if let Some(x) = &a.x_column {
        cfg.csv.x_column = x.clone();
    }
    if let Some(y) = &a.y_column {
        cfg.csv.y_column = y.clone();
    }
    if let Some(p) = &a.properties {
        cfg.csv.property_columns = p.clone();
    }
    cfg.compress.lenient |= a.lenient;
}

/// Files named directly plus files with extension `ext` inside named
/// directories (sorted by name).
fn collect_inputs(inputs: &[PathBuf], ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            found.retain(|f| f.is_file() && f.extension().is_some_and(|e| e == ext));
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(UsageError(format!("no .{ext} inputs found")).into());
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn load_tables(paths: &[PathBuf], schema: &CsvSchema, lenient: bool) -> Result<Vec<ObjectImage>> {
    paths
        .iter()
        .map(|p| {
            let meta = read_sidecar(&sidecar_path(p))?;
            if lenient {
                let r = load_object_csv_lenient(p, schema, &meta)?;
                if !r.rejected.is_empty() {
                    log::warn!(
                        "{}: skipped {} of {} rows",
                        p.display(),
                        r.rejected.len(),
                        r.rows
                    );
                }
                Ok(r.image)
            } else {
                Ok(load_object_csv(p, schema, &meta)?)
            }
        })
        .collect::<Result<Vec<_>>>()
}

fn load_grids(inputs: &[PathBuf]) -> Result<(Vec<PathBuf>, Vec<C2GImage>)> {
    let paths = collect_inputs(inputs, "c2g")?;
    let imgs = paths
        .iter()
        .map(|p| read_c2g(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok((paths, imgs))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(&text)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Seconds {
    seconds: f64,
}

#[derive(Serialize)]
struct EstimateReport {
    d_um: f64,
    rounded: bool,
    images: usize,
    mean_density: f64,
}

fn estimate_grid(
    inputs: &[PathBuf],
    cfg: &CliConfig,
    round: bool,
    report: ReportFormat,
) -> Result<()> {
    let paths = collect_inputs(inputs, "csv")?;
    let imgs = load_tables(&paths, &cfg.csv, cfg.compress.lenient)?;
    let stats = BatchStats::from_images(&imgs)?;
    let d_um = estimate_grid_spacing(&stats, round);
    let r = EstimateReport {
        d_um,
        rounded: round,
        images: stats.n(),
        mean_density: stats.densities().iter().sum::<f64>() / stats.n() as f64,
    };
    match report {
        ReportFormat::Json => print_json(&r),
        ReportFormat::Text => emit(&format!("d = {d_um} µm from {} images\n", r.images)),
    }
}

#[derive(Serialize)]
struct CompressReport<'a> {
    #[serde(flatten)]
    batch: &'a BatchReport,
    deleted_fraction: f64,
    outputs: Vec<String>,
    timing: Seconds,
}

fn compress(inputs: &[PathBuf], out: &Path, cfg: &CliConfig, report: ReportFormat) -> Result<()> {
    let start = Instant::now();
    let paths = collect_inputs(inputs, "csv")?;
    let imgs = load_tables(&paths, &cfg.csv, cfg.compress.lenient)?;
    let batch = compress_batch(
        &imgs,
        BatchOptions {
            d_override: cfg.compress.d_um,
            round_to_int: cfg.compress.round_to_int,
        },
    )?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut outputs = Vec::with_capacity(paths.len());
    for (p, img) in paths.iter().zip(&batch.images) {
        let name = format!("{}.c2g", stem(p));
        let target = out.join(&name);
        write_c2g(img, &target).with_context(|| format!("writing {}", target.display()))?;
        if cfg.compress.tiff {
            write_tiff(img, &target.with_extension("tif"))?;
        }
        outputs.push(name);
    }
    let r = CompressReport {
        batch: &batch.report,
        deleted_fraction: batch.report.deleted_fraction(),
        outputs,
        timing: Seconds {
            seconds: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&r, &out.join("report.json"))?;
    let b = &batch.report;
    log::info!(
        "compressed {} images at d = {} µm: {} objects, {} kept, {} deleted",
        b.images.len(),
        b.d_um,
        b.total_objects,
        b.total_kept,
        b.total_deleted
    );
    match report {
        ReportFormat::Json => print_json(&r),
        ReportFormat::Text => {
            let mut t = String::new();
            let _ = writeln!(
                t,
                "d_um {}{}",
                b.d_um,
                if b.estimated { " (estimated)" } else { "" }
            );
            let _ = writeln!(t, "id\tobjects\tkept\tshifted\tdeleted\tconflicts");
            for s in &b.images {
                let _ = writeln!(
                    t,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    s.id,
                    s.objects,
                    s.kept(),
                    s.shifted,
                    s.deleted,
                    s.conflicted_nodes
                );
            }
            let _ = writeln!(
                t,
                "total\t{}\t{}\t{}\t{}\t{}",
                b.total_objects,
                b.total_kept,
                b.total_shifted,
                b.total_deleted,
                b.total_conflicted_nodes
            );
            emit(&t)
        }
    }
}

#[derive(Serialize)]
struct AugmentRecord {
    input: String,
    output: String,
    seed: u64,
    trace: AugmentTrace,
}

fn augment(
    inputs: &[PathBuf],
    out: &Path,
    copies: usize,
    preview: Option<&Path>,
    channels: [usize; 3],
    cfg: &AugmentConfig,
    report: ReportFormat,
) -> Result<()> {
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let (paths, imgs) = load_grids(inputs)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if let Some(dir) = preview {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut records = Vec::new();
    for (i, (p, img)) in paths.iter().zip(&imgs).enumerate() {
        let name = stem(p);
        if let Some(dir) = preview {
            export_preview(img, channels, &dir.join(format!("{name}.before.png")))?;
        }
        let image_seed = seed::derive_index(cfg.seed, i as u64);
        for k in 0..copies {
            let s = seed::derive_index(image_seed, k as u64);
            let (aug, trace) = augment_traced(img, cfg, &mut seed::rng(s))?;
            let file = format!("{name}.aug{k}.c2g");
            write_c2g(&aug, &out.join(&file))?;
            if let Some(dir) = preview {
                export_preview(&aug, channels, &dir.join(format!("{name}.aug{k}.png")))?;
            }
            records.push(AugmentRecord {
                input: p.display().to_string(),
                output: file,
                seed: s,
                trace,
            });
        }
    }
    match report {
        ReportFormat::Json => print_json(&records),
        ReportFormat::Text => emit(&format!(
            "wrote {} augmented images to {}\n",
            records.len(),
            out.display()
        )),
    }
}

#[derive(Serialize)]
struct SynthReport {
    images: usize,
    per_class: usize,
    classes: usize,
    seed: u64,
}

fn synth(out: &Path, spec: &SynthSpec, per_class: usize) -> Result<()> {
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let imgs = generate(spec, per_class)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let names = default_property_names(spec.channels);
    for img in &imgs {
        let csv = out.join(format!("{}.csv", img.id()));
        write_object_csv(&csv, img, &names)?;
        write_sidecar(
            &sidecar_path(&csv),
            &ImageMetadata {
                id: Some(img.id().to_owned()),
                width_um: img.width_um(),
                height_um: img.height_um(),
                resolution_um_per_px: img.resolution_um_per_px(),
                label: img.label(),
            },
        )?;
    }
    write_json(spec, &out.join("synth_spec.json"))?;
    print_json(&SynthReport {
        images: imgs.len(),
        per_class,
        classes: spec.classes.len(),
        seed: spec.seed,
    })
}

fn train(inputs: &[PathBuf], out: &Path, cfg: &CliConfig, report: ReportFormat) -> Result<()> {
    let (_, imgs) = load_grids(inputs)?;
    let result = repeat_runs(&imgs, &cfg.train)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (i, m) in result.models.iter().enumerate() {
        write_model(m, &out.join(format!("run_{i:02}.c2gm")))?;
    }
    write_json(&result.report, &out.join("report.json"))?;
    match report {
        ReportFormat::Json => print_json(&result.report),
        ReportFormat::Text => emit(&result.report.table()),
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    model: String,
    images: usize,
    #[serde(flatten)]
    evaluation: &'a c2g::train::Evaluation,
}

fn eval(model: &Path, inputs: &[PathBuf], report: ReportFormat) -> Result<()> {
    let m = read_model(model).with_context(|| format!("reading {}", model.display()))?;
    let (_, imgs) = load_grids(inputs)?;
    let e = evaluate(&m, &imgs)?;
    match report {
        ReportFormat::Json => print_json(&EvalReport {
            model: model.display().to_string(),
            images: imgs.len(),
            evaluation: &e,
        }),
        ReportFormat::Text => emit(&format!(
            "balanced accuracy {:.4}  accuracy {:.4}  ({} images)\n",
            e.balanced_accuracy,
            e.accuracy,
            imgs.len()
        )),
    }
}

fn inspect(
    model: &Path,
    threshold: f32,
    csv: Option<&Path>,
    heatmap: Option<&Path>,
    cell: u32,
) -> Result<()> {
    if cell == 0 {
        return Err(UsageError("--cell must be at least 1".into()).into());
    }
    let m = read_model(model).with_context(|| format!("reading {}", model.display()))?;
    let w = inspect_first_layer(&m, threshold)?;
    if let Some(p) = csv {
        w.write_csv(p)?;
    }
    if let Some(p) = heatmap {
        w.heatmap(cell).write_png(p)?;
    }
    print_json(&w)
}
