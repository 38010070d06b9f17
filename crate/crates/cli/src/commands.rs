//! Implementations of the CLI subcommands.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use disentune::eval::{
    eta_sweep, fi_only_probe, fs_only_probe, full_evaluation, run_ablations, stitch_images,
    EvalContext, ETA_GRID,
};
use disentune::io::checkpoint::Checkpoint;
use disentune::io::csvio::{
    self, ManifestRow, ReportRow, TrainSetRow, STEP_LOG_HEADER,
};
use disentune::io::ppm;
use disentune::io::runconfig::RunConfig;
use disentune::pipeline::{
    load_run, sample_seed, state_to_checkpoint, LoadedRun, Pipeline,
};
use disentune::synthbench::{
    default_subjects, full_grid, grid_image_name, load_probes, make_subject_set, save_probes,
    train_probes, ProbeSet, SubjectSet,
};
use disentune::tensor::Tensor;
use disentune::tuning::{trainable_param_count, StepRecord, Trainer};

/// Command outcomes distinguish usage mistakes (exit 1) from runtime
/// failures (exit 2).
pub enum CmdError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CmdError {
    fn from(e: E) -> Self {
        CmdError::Runtime(e.into())
    }
}

pub type CmdResult = Result<(), CmdError>;

fn data_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("data")
}

fn probes_path(out_dir: &Path) -> PathBuf {
    data_dir(out_dir).join("probes.ckpt")
}

/// Rebuild the benchmark subject sets exactly as gen-data defined them.
fn benchmark_subjects(run: &RunConfig) -> anyhow::Result<Vec<SubjectSet<f32>>> {
    default_subjects()
        .iter()
        .enumerate()
        .map(|(sid, spec)| {
            make_subject_set::<f32>(sid, *spec, run.k_images, run.seed)
                .map_err(|e| anyhow!(e))
        })
        .collect()
}

// ── gen-data ─────────────────────────────────────────────────────────

pub fn gen_data(config: &Path, out_override: Option<&Path>) -> CmdResult {
    let run = RunConfig::load(config).map_err(|e| CmdError::Usage(e.to_string()))?;
    let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&run.out_dir));
    let data = data_dir(&out_dir);
    let images_dir = data.join("images");
    fs::create_dir_all(&images_dir)
        .with_context(|| format!("creating {}", images_dir.display()))?;

    // full grid + manifest
    let subjects = default_subjects();
    let grid = full_grid::<f32>(&subjects);
    let mut rows = Vec::with_capacity(grid.len());
    for item in &grid {
        let name = grid_image_name(item.subject_id, &item.scene);
        ppm::write_file(&images_dir.join(&name), &item.image)?;
        rows.push(ManifestRow {
            image_path: format!("images/{name}"),
            subject_id: item.subject_id,
            subject: item.subject,
            scene: item.scene,
        });
    }
    csvio::write_manifest(&data.join("manifest.csv"), &rows)?;
    println!("wrote {} grid images and manifest", rows.len());

    // subject training sets reference grid images
    let sets = benchmark_subjects(&run)?;
    let mut train_rows = Vec::new();
    for set in &sets {
        for scene in &set.scenes {
            train_rows.push(TrainSetRow {
                subject_id: set.subject_id,
                image_path: format!("images/{}", grid_image_name(set.subject_id, scene)),
                prompt: set.prompt.clone(),
            });
        }
    }
    csvio::write_trainsets(&data.join("trainsets.csv"), &train_rows)?;

    // probes, trained once per benchmark seed and cached
    println!("training probe classifiers...");
    let probes = train_probes(&grid, run.seed)?;
    println!(
        "probe held-out accuracy: subject {:.4}, background {:.4}",
        probes.subject_accuracy, probes.background_accuracy
    );
    save_probes(&probes, &probes_path(&out_dir))?;
    println!("cached probes at {}", probes_path(&out_dir).display());
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

pub fn train(
    config: &Path,
    subject_id: usize,
    out: &Path,
    lambda2: Option<f64>,
    lambda3: Option<f64>,
    no_adapter: bool,
) -> CmdResult {
    let mut run = RunConfig::load(config).map_err(|e| CmdError::Usage(e.to_string()))?;
    if let Some(l2) = lambda2 {
        run.lambda2 = l2;
    }
    if let Some(l3) = lambda3 {
        run.lambda3 = l3;
    }
    run.validate().map_err(|e| CmdError::Usage(e.to_string()))?;
    if subject_id >= default_subjects().len() {
        return Err(CmdError::Usage(format!(
            "subject {subject_id} outside the benchmark inventory (0..{})",
            default_subjects().len() - 1
        )));
    }

    let out_dir = PathBuf::from(&run.out_dir);
    let trainsets = csvio::read_trainsets(&data_dir(&out_dir).join("trainsets.csv"))
        .map_err(|e| CmdError::Runtime(anyhow!("{e}: run gen-data first")))?;
    let mine: Vec<&TrainSetRow> =
        trainsets.iter().filter(|r| r.subject_id == subject_id).collect();
    if mine.is_empty() {
        return Err(CmdError::Runtime(anyhow!(
            "no training rows for subject {subject_id}; rerun gen-data"
        )));
    }
    let prompt = mine[0].prompt.clone();
    let images: Vec<Tensor<f32>> = mine
        .iter()
        .map(|r| ppm::read_file(&data_dir(&out_dir).join(&r.image_path)).map_err(|e| anyhow!(e)))
        .collect::<anyhow::Result<_>>()?;

    let pipeline = Pipeline::<f32>::from_run_config(&run)?;
    let cfg = run.train_config();
    let state = pipeline.fresh_state(&cfg, !no_adapter)?;

    let trainable = trainable_param_count(&state);
    let mut frozen = 0usize;
    pipeline.denoiser.visit_params(|_, t| frozen += t.numel());
    println!(
        "trainable parameters: {trainable} (frozen denoiser: {frozen}, total: {})",
        trainable + frozen
    );

    let (fs_tokens, latents, pooled) = pipeline.trainer_inputs(&prompt, &images)?;
    let mut trainer = Trainer::new(&pipeline.denoiser, &pipeline.schedule, cfg, state)?;

    let variant = match (run.lambda2 == 0.0, run.lambda3 == 0.0, no_adapter) {
        (_, _, true) => "no_adapter",
        (true, false, _) => "no_l2",
        (false, true, _) => "no_l3",
        _ => "full",
    };

    // append-only step log next to the checkpoint
    let log_path = out.with_extension("log.csv");
    let mut log = fs::File::create(&log_path)
        .with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(log, "{STEP_LOG_HEADER}")?;

    let run_for_save = run.clone();
    let out_path = out.to_path_buf();
    let mut log_err: Option<std::io::Error> = None;
    trainer.train(
        &latents,
        &pooled,
        &fs_tokens,
        |r: &StepRecord| {
            if log_err.is_none() {
                if let Err(e) = writeln!(
                    log,
                    "{},{},{},{},{},{},{}",
                    r.iteration, r.t, r.l1, r.l2, r.l3, r.total, r.grad_norm
                ) {
                    log_err = Some(e);
                }
            }
        },
        |iteration, state, optimizer| {
            // intermediate saves carry optimizer moments; the final save is
            // rewritten without them below
            let ckpt = state_to_checkpoint(
                &run_for_save,
                subject_id,
                variant,
                state,
                Some(optimizer),
            )?;
            ckpt.save(&out_path)?;
            let _ = iteration;
            Ok(())
        },
    )?;
    if let Some(e) = log_err {
        return Err(CmdError::Runtime(anyhow!("writing step log: {e}")));
    }

    let ckpt = state_to_checkpoint(&run, subject_id, variant, &trainer.state, None)?;
    ckpt.save(out)?;
    println!("wrote checkpoint {} and step log {}", out.display(), log_path.display());
    Ok(())
}

// ── sample ───────────────────────────────────────────────────────────

pub fn sample(
    ckpt_path: &Path,
    prompt: &str,
    reference: Option<&Path>,
    eta: f64,
    n: usize,
    seed: Option<u64>,
    out: &Path,
) -> CmdResult {
    if eta < 0.0 {
        return Err(CmdError::Usage("eta must be >= 0".into()));
    }
    if eta > 0.0 && reference.is_none() {
        return Err(CmdError::Usage("--eta > 0 requires --ref".into()));
    }
    let ckpt = Checkpoint::load(ckpt_path)?;
    let loaded: LoadedRun<f32> = load_run(&ckpt)?;
    let pipeline = &loaded.pipeline;
    let seed = seed.unwrap_or(pipeline.run.seed);

    let fs = pipeline
        .encode_prompt(prompt)
        .map_err(|e| match e {
            disentune::Error::Vocabulary(_) | disentune::Error::PromptLength { .. } => {
                CmdError::Usage(e.to_string())
            }
            other => CmdError::Runtime(anyhow!(other)),
        })?;

    let visual = match reference {
        Some(path) => {
            let image: Tensor<f32> = ppm::read_file(path)?;
            Some(pipeline.visual_embedding(&loaded.state, &image)?)
        }
        None => None,
    };
    let cond = pipeline.compose_condition(&fs, visual.as_ref().map(|v| (v, eta)))?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut sidecar = String::new();
    sidecar.push_str(&format!("prompt = {prompt}\nseed = {seed}\neta = {eta}\n"));
    if let Some(r) = reference {
        sidecar.push_str(&format!("reference = {}\n", r.display()));
    }
    for i in 0..n {
        let s = sample_seed(seed, "cli-sample", i as u64);
        let img = pipeline.sample(&loaded.state, &cond, pipeline.run.ddim_steps, s)?;
        let img = ppm::quantize(&img.map(|v| v.clamp(-1.0, 1.0)));
        let name = format!("sample_{i:03}.ppm");
        ppm::write_file(&out.join(&name), &img)?;
        sidecar.push_str(&format!("{name} = {s}\n"));
    }
    fs::write(out.join("provenance.txt"), sidecar)
        .with_context(|| "writing provenance sidecar")?;
    println!("wrote {n} samples to {}", out.display());
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────

fn load_eval_inputs(
    ckpt_path: &Path,
) -> Result<(LoadedRun<f32>, ProbeSet<f32>, Vec<SubjectSet<f32>>), CmdError> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let loaded: LoadedRun<f32> = load_run(&ckpt)?;
    let out_dir = PathBuf::from(&loaded.pipeline.run.out_dir);
    let ppath = probes_path(&out_dir);
    if !ppath.exists() {
        return Err(CmdError::Runtime(anyhow!(
            "missing cached probes at {}; run gen-data first",
            ppath.display()
        )));
    }
    let probes = load_probes::<f32>(&ppath, loaded.pipeline.run.image_size)?;
    let sets = benchmark_subjects(&loaded.pipeline.run)?;
    Ok((loaded, probes, sets))
}

pub fn eval(ckpt_path: &Path, suite: &str, out: &Path) -> CmdResult {
    let (loaded, probes, sets) = load_eval_inputs(ckpt_path)?;
    let pipeline = &loaded.pipeline;
    let ctx = EvalContext::new(pipeline, &probes, &sets);
    let seed = pipeline.run.seed;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let write_grid = |name: &str, images: &[Tensor<f32>]| -> anyhow::Result<()> {
        if images.is_empty() {
            return Ok(());
        }
        let grid = stitch_images(images, 8)?;
        ppm::write_file(&out.join(name), &grid)?;
        Ok(())
    };

    let mut rows: Vec<ReportRow> = Vec::new();
    match suite {
        "metrics" => {
            let report = full_evaluation(&ctx, &loaded.state, loaded.subject_id, seed, false)?;
            rows.extend(report.to_rows());
        }
        "probes" => {
            let fs = fs_only_probe(&ctx, &loaded.state, loaded.subject_id, seed)?;
            let fi = fi_only_probe(&ctx, &loaded.state, loaded.subject_id, seed)?;
            rows.push(ReportRow::metric("fs_subject_acc", fs.subject_acc, seed, ctx.n_samples));
            rows.push(ReportRow::metric(
                "fs_background_acc",
                fs.background_acc,
                seed,
                ctx.n_samples,
            ));
            rows.push(ReportRow::metric("fi_subject_acc", fi.subject_acc, seed, ctx.n_samples));
            rows.push(ReportRow::metric(
                "fi_background_acc",
                fi.background_acc,
                seed,
                ctx.n_samples,
            ));
            write_grid("fs_only_grid.ppm", &fs.images)?;
            write_grid("fi_only_grid.ppm", &fi.images)?;
        }
        "sweep" => {
            let set = &sets[loaded.subject_id];
            let curve = eta_sweep(
                &ctx,
                &loaded.state,
                &set.prompt,
                &set.images[0],
                &ETA_GRID,
                sample_seed(seed, "eta", 0),
            )?;
            for (eta, cos) in curve {
                rows.push(ReportRow::metric(format!("eta_{eta}"), cos, seed, 1));
            }
        }
        "ablate" => {
            let base = pipeline.run.train_config();
            let table = run_ablations(&ctx, loaded.subject_id, &base, seed);
            for row in table {
                match row.outcome {
                    Ok((_, report)) => {
                        for r in report.to_rows() {
                            rows.push(ReportRow {
                                name: format!("{}.{}", row.variant.name(), r.name),
                                ..r
                            });
                        }
                    }
                    Err(e) => {
                        rows.push(ReportRow::text(
                            format!("{}.error", row.variant.name()),
                            e.to_string(),
                            seed,
                        ));
                    }
                }
            }
        }
        other => return Err(CmdError::Usage(format!("unknown suite {other:?}"))),
    }

    let report_path = out.join("report.csv");
    csvio::write_report(&report_path, &rows)?;
    println!("wrote {}", report_path.display());
    Ok(())
}
