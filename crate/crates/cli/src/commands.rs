use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use s2c_tensor::Tensor;
use s2cformer::codec::{self, CompressedObject};
use s2cformer::config::PRESET_NAMES;
use s2cformer::evaluation::bdrate::{curves_from_rows, read_rows, write_rows, Quality};
use s2cformer::evaluation::erf::encoder_erf;
use s2cformer::evaluation::{bd_rate, ms_ssim, profile_latency, psnr, LatencyProfile, RdRow};
use s2cformer::training::{list_images, load_image, save_image, Checkpoint, Metric, PatchSource, Trainer};
use s2cformer::Model;
use toml::{Table, Value};

use crate::error::{io_err, CliError, CliResult};
use crate::manifest::RunManifest;
use crate::settings::{model_table, resolve_model, resolve_train, train_table, ConfigFile, ModelSource};
use crate::{
    BdrateArgs, CompressArgs, DecompressArgs, ErfArgs, EvalArgs, MetricArg, ModelArgs, PlotRdArgs, ProfileArgs,
    QualityArg, TrainArgs,
};

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn metric(m: MetricArg) -> Metric {
    match m {
        MetricArg::Mse => Metric::Mse,
        MetricArg::Msssim => Metric::Msssim,
    }
}

fn quality(q: QualityArg) -> Quality {
    match q {
        QualityArg::Psnr => Quality::Psnr,
        QualityArg::Msssim => Quality::Msssim,
    }
}

fn source(m: &ModelArgs) -> ModelSource<'_> {
    ModelSource {
        checkpoint: m.checkpoint.as_deref(),
        preset: m.preset.as_deref(),
        config: m.config.as_deref(),
        seed: m.seed,
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// What a viewer sees: clamped and rounded to 8 bits.
fn displayable(x: &Tensor) -> Tensor {
    x.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

fn fmt_msssim(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let mut flags = Table::new();
    let mut set = |k: &str, v: Value| {
        flags.insert(k.into(), v);
    };
    if let Some(v) = a.lambda {
        set("lambda", Value::Float(v));
    }
    if let Some(m) = a.metric {
        set("metric", Value::String(metric(m).to_string()));
    }
    if let Some(v) = a.steps {
        set("steps", Value::Integer(v as i64));
    }
    if let Some(v) = a.batch_size {
        set("batch_size", Value::Integer(v as i64));
    }
    if let Some(v) = a.patch_size {
        set("patch_size", Value::Integer(v as i64));
    }
    if let Some(v) = a.lr {
        set("lr", Value::Float(v));
    }
    if let Some(v) = a.seed {
        set("seed", Value::Integer(v as i64));
    }
    if let Some(v) = a.checkpoint_every {
        set("checkpoint_every", Value::Integer(v as i64));
    }
    if a.cosine {
        set("cosine", Value::Boolean(true));
    }
    if a.no_flips {
        set("flips", Value::Boolean(false));
    }
    if let Some(v) = &a.dataset {
        set("dataset_path", Value::String(v.display().to_string()));
    }
    if let Some(v) = &a.out {
        set("out_dir", Value::String(v.display().to_string()));
    }
    let cfg = resolve_train(&file, &flags)?;
    if !cfg.dataset_path.is_dir() {
        return Err(CliError::Data(format!("dataset folder {} does not exist", cfg.dataset_path.display())));
    }

    let model = match &a.resume {
        Some(_) if a.preset.is_some() || !file.model.is_empty() => {
            return Err(CliError::Usage("--resume takes the model from the checkpoint; drop --preset and [model]".into()))
        }
        Some(_) => None,
        None => Some(resolve_model(&file, a.preset.as_deref())?),
    };
    let src = PatchSource::from_dir(&cfg.dataset_path, cfg.patch_size, cfg.seed)?;
    let mut trainer = match (&a.resume, model) {
        (Some(ck), _) => Trainer::resume(Checkpoint::load(ck)?, cfg.clone(), src)?,
        (None, Some(m)) => Trainer::new(Model::new(m, cfg.seed)?, cfg.clone(), src)?,
        (None, None) => unreachable!("model resolved above"),
    };

    create_dir(&cfg.out_dir)?;
    let mut resolved = Table::new();
    resolved.insert("model".into(), Value::Table(model_table(&trainer.model.config)));
    resolved.insert("train".into(), Value::Table(train_table(&cfg)));
    if let Some(ck) = &a.resume {
        resolved.insert("resume".into(), Value::String(ck.display().to_string()));
        resolved.insert("resume_step".into(), Value::Integer(trainer.step as i64));
    }
    RunManifest::new("train", a.config.as_deref(), Some(cfg.seed), &cfg.out_dir, resolved).write()?;

    let first = trainer.step;
    let last_step = cfg.steps.saturating_sub(1);
    let every = a.log_every.max(1);
    let summary = trainer.run(|l| {
        if l.step == first || l.step == last_step || l.step % every == 0 {
            println!(
                "step {} loss {:.12e} bpp_y {:.6} bpp_z {:.6} distortion {:.6e} psnr {:.4}",
                l.step, l.loss, l.bpp_y, l.bpp_z, l.distortion, l.psnr
            );
        }
    })?;
    println!(
        "trained {} steps, {:.3} samples/s, checkpoint {}",
        summary.steps_run,
        summary.samples_per_sec,
        summary.checkpoint.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct CodedRow {
    image: String,
    width: usize,
    height: usize,
    bytes: usize,
    bpp: f64,
    psnr: f64,
    msssim: Option<f64>,
    encode_ms: f64,
    decode_ms: f64,
}

impl CodedRow {
    fn print(&self) {
        println!(
            "{}: {} bytes, {:.6} bpp, PSNR {:.4} dB, MS-SSIM {}, encode {:.1} ms, decode {:.1} ms",
            self.image,
            self.bytes,
            self.bpp,
            self.psnr,
            fmt_msssim(self.msssim),
            self.encode_ms,
            self.decode_ms
        );
    }
}

/// Encode, then decode the bitstream again to measure what a receiver gets.
fn code_image(model: &Model, path: &Path, lambda_index: u8) -> CliResult<(Vec<u8>, CodedRow)> {
    let x = load_image(path)?;
    let (_, _, h, w) = x.dims4();
    let t = Instant::now();
    let enc = codec::compress(model, &x, lambda_index)?;
    let bytes = enc.object.to_bytes();
    let encode_ms = ms_since(t);
    let t = Instant::now();
    let dec = codec::decompress(model, &CompressedObject::from_bytes(&bytes)?)?;
    let decode_ms = ms_since(t);
    let x_hat = displayable(&dec.x_hat);
    let row = CodedRow {
        image: path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        width: w,
        height: h,
        bytes: bytes.len(),
        bpp: (bytes.len() * 8) as f64 / (h * w) as f64,
        psnr: psnr(&x, &x_hat)?,
        msssim: ms_ssim(&x, &x_hat).ok(),
        encode_ms,
        decode_ms,
    };
    Ok((bytes, row))
}

fn images_in(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(CliError::Data(format!("no images in {}", dir.display())));
    }
    Ok(paths)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn compress(a: CompressArgs) -> CliResult<()> {
    let (model, mut resolved) = source(&a.model).load()?;
    let lambda_index = a.lambda.map_or(255, |l| metric(a.metric).lambda_index(l));
    resolved.insert("lambda_index".into(), Value::Integer(lambda_index.into()));
    resolved.insert("input".into(), Value::String(a.input.display().to_string()));
    let batch = a.input.is_dir();
    let paths = if batch { images_in(&a.input)? } else { vec![a.input.clone()] };
    create_dir(&a.out)?;
    let mut rows = Vec::new();
    for p in &paths {
        let (bytes, row) = code_image(&model, p, lambda_index)?;
        let out = a.out.join(format!("{}.s2c", stem(p)));
        std::fs::write(&out, &bytes).map_err(|e| io_err(&out, e))?;
        row.print();
        rows.push(row);
    }
    if batch {
        write_csv(&a.out.join("compress.csv"), &rows)?;
    }
    RunManifest::new("compress", a.model.config.as_deref(), Some(a.model.seed), &a.out, resolved).write()?;
    Ok(())
}

pub fn decompress(a: DecompressArgs) -> CliResult<()> {
    let (model, mut resolved) = source(&a.model).load()?;
    resolved.insert("input".into(), Value::String(a.input.display().to_string()));
    let bytes = std::fs::read(&a.input).map_err(|e| io_err(&a.input, e))?;
    let t = Instant::now();
    let obj = CompressedObject::from_bytes(&bytes)?;
    let dec = codec::decompress(&model, &obj)?;
    let decode_ms = ms_since(t);
    let x_hat = displayable(&dec.x_hat);
    let (_, _, h, w) = x_hat.dims4();
    let mut line = format!(
        "{}: {} bytes, {:.6} bpp, decode {:.1} ms",
        a.input.display(),
        bytes.len(),
        (bytes.len() * 8) as f64 / (h * w) as f64,
        decode_ms
    );
    if let Some(orig) = &a.original {
        let x = load_image(orig)?;
        line += &format!(", PSNR {:.4} dB, MS-SSIM {}", psnr(&x, &x_hat)?, fmt_msssim(ms_ssim(&x, &x_hat).ok()));
    }
    create_dir(&a.out)?;
    let out = a.out.join(format!("{}.png", stem(&a.input)));
    save_image(&out, &x_hat)?;
    println!("{line}");
    RunManifest::new("decompress", a.model.config.as_deref(), Some(a.model.seed), &a.out, resolved).write()?;
    Ok(())
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let (model, mut resolved) = source(&a.model).load()?;
    resolved.insert("images".into(), Value::String(a.images.display().to_string()));
    let paths = images_in(&a.images)?;
    create_dir(&a.out)?;
    let mut rows = Vec::new();
    for p in &paths {
        let (_, row) = code_image(&model, p, 255)?;
        row.print();
        rows.push(row);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&CodedRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let msssim = rows.iter().map(|r| r.msssim).collect::<Option<Vec<f64>>>();
    let summary = RdRow {
        label: a.label.clone().unwrap_or_else(|| model.config.variant_name.clone()),
        bpp: mean(|r| r.bpp),
        psnr: mean(|r| r.psnr),
        msssim: msssim.map(|v| v.iter().sum::<f64>() / n),
    };
    println!(
        "{}: mean {:.6} bpp, PSNR {:.4} dB, MS-SSIM {} over {} images",
        summary.label,
        summary.bpp,
        summary.psnr,
        fmt_msssim(summary.msssim),
        rows.len()
    );
    write_csv(&a.out.join("per_image.csv"), &rows)?;
    write_rows(&a.out.join("rd.csv"), &[summary])?;
    RunManifest::new("eval", a.model.config.as_deref(), Some(a.model.seed), &a.out, resolved).write()?;
    Ok(())
}

#[derive(Serialize)]
struct ProfileReport<'a> {
    profile: &'a [LatencyProfile],
}

#[derive(Serialize)]
struct ProfileRow {
    variant: String,
    total_ms: f64,
    spatial_ms: f64,
    channel_ms: f64,
    other_ms: f64,
    spatial_share: f64,
    spatial_channel_ratio: f64,
    reconciliation_error: f64,
}

pub fn profile(a: ProfileArgs) -> CliResult<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let names: Vec<String> = if !a.presets.is_empty() {
        a.presets.clone()
    } else if a.config.is_some() {
        vec![file.preset.clone().unwrap_or_else(|| crate::settings::DEFAULT_PRESET.into())]
    } else {
        PRESET_NAMES.iter().map(|s| s.to_string()).collect()
    };
    let configs = names
        .iter()
        .map(|n| resolve_model(&file, Some(n)))
        .collect::<CliResult<Vec<_>>>()?;
    create_dir(&a.out)?;
    let mut profiles = Vec::new();
    let mut rows = Vec::new();
    for cfg in configs {
        let model = Model::new(cfg, 0)?;
        let p = profile_latency(&model, a.height, a.width, a.reps, a.warmup)?;
        let b = p.main_blocks;
        println!(
            "{}: total {:.2} ms, blocks spatial {:.2} ms / channel {:.2} ms / other {:.2} ms, spatial share {:.2}%, spatial:channel {:.3}, reconciliation {:.2}%",
            p.variant,
            p.total_ms,
            b.spatial_ms,
            b.channel_ms,
            b.other_ms,
            100.0 * p.spatial_share_of_blocks(),
            p.spatial_channel_ratio(),
            100.0 * p.reconciliation_error()
        );
        rows.push(ProfileRow {
            variant: p.variant.clone(),
            total_ms: p.total_ms,
            spatial_ms: b.spatial_ms,
            channel_ms: b.channel_ms,
            other_ms: b.other_ms,
            spatial_share: p.spatial_share_of_blocks(),
            spatial_channel_ratio: p.spatial_channel_ratio(),
            reconciliation_error: p.reconciliation_error(),
        });
        profiles.push(p);
    }
    let report = a.out.join("profile.toml");
    let text = toml::to_string_pretty(&ProfileReport { profile: &profiles }).expect("profiles serialize");
    std::fs::write(&report, text).map_err(|e| io_err(&report, e))?;
    write_csv(&a.out.join("profile.csv"), &rows)?;
    crate::plot::latency_bars(&a.out.join("profile.svg"), &profiles)?;

    let mut resolved = Table::new();
    resolved.insert("presets".into(), Value::Array(names.into_iter().map(Value::String).collect()));
    resolved.insert("model_overrides".into(), Value::Table(file.model.clone()));
    for (k, v) in [("height", a.height), ("width", a.width), ("reps", a.reps), ("warmup", a.warmup)] {
        resolved.insert(k.into(), Value::Integer(v as i64));
    }
    RunManifest::new("profile", a.config.as_deref(), None, &a.out, resolved).write()?;
    Ok(())
}

/// Smooth random images: a few low-frequency sinusoids per channel.
fn synthetic_probes(n: usize, side: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let imgs: Vec<Tensor> = (0..n)
        .map(|_| {
            let waves: Vec<[f64; 4]> = (0..9)
                .map(|_| [rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2), rng.gen_range(0.0..6.3), rng.gen_range(0.05..0.15)])
                .collect();
            Tensor::from_fn(&[1, 3, side, side], |i| {
                let (c, r, q) = (i / (side * side), (i / side) % side, i % side);
                let v: f64 = waves[c * 3..c * 3 + 3]
                    .iter()
                    .map(|[fy, fx, ph, amp]| amp * (fy * r as f64 + fx * q as f64 + ph).sin())
                    .sum();
                (0.5 + v).clamp(0.0, 1.0)
            })
        })
        .collect();
    Tensor::stack_batch(&imgs)
}

pub fn erf(a: ErfArgs) -> CliResult<()> {
    let (model, mut resolved) = source(&a.model).load()?;
    if a.size == 0 || a.size % s2cformer::config::SIZE_MULTIPLE != 0 {
        return Err(CliError::Usage(format!(
            "--size must be a positive multiple of {}",
            s2cformer::config::SIZE_MULTIPLE
        )));
    }
    let probes = match &a.probes {
        Some(dir) => PatchSource::from_dir(dir, a.size, a.probe_seed)?.batch(0, a.num_probes),
        None => synthetic_probes(a.num_probes, a.size, a.probe_seed),
    };
    let map = encoder_erf(&model, &probes)?;
    create_dir(&a.out)?;
    map.save_png(&a.out.join("erf.png"))?;
    map.save_csv(&a.out.join("erf.csv"))?;
    match map.support_box() {
        Some((t, b, l, r)) => println!(
            "ERF over {} probes at latent center {:?}: support rows {t}..={b}, cols {l}..={r}",
            map.probes, map.center
        ),
        None => println!("ERF over {} probes: empty support", map.probes),
    }
    resolved.insert(
        "probes".into(),
        Value::String(a.probes.as_ref().map_or_else(|| "synthetic".into(), |p| p.display().to_string())),
    );
    resolved.insert("num_probes".into(), Value::Integer(a.num_probes as i64));
    resolved.insert("size".into(), Value::Integer(a.size as i64));
    resolved.insert("probe_seed".into(), Value::Integer(a.probe_seed as i64));
    RunManifest::new("erf", a.model.config.as_deref(), Some(a.probe_seed), &a.out, resolved).write()?;
    Ok(())
}

#[derive(Serialize)]
struct BdRow {
    anchor: String,
    test: String,
    quality: String,
    bd_rate_percent: f64,
}

pub fn bdrate(a: BdrateArgs) -> CliResult<()> {
    let q = quality(a.quality);
    let anchors = curves_from_rows(&read_rows(&a.anchor)?, q)?;
    let tests = curves_from_rows(&read_rows(&a.test)?, q)?;
    let qname = format!("{q:?}").to_lowercase();
    let mut table = Vec::new();
    for t in &tests {
        for an in &anchors {
            let r = bd_rate(an, t)?;
            println!("{} vs {} ({qname}): {r:.1}%", t.label, an.label);
            table.push(BdRow {
                anchor: an.label.clone(),
                test: t.label.clone(),
                quality: qname.clone(),
                bd_rate_percent: r,
            });
        }
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_csv(&out.join("bdrate.csv"), &table)?;
        let all: Vec<_> = anchors.iter().chain(&tests).cloned().collect();
        crate::plot::rd_curves(&out.join("bdrate.svg"), &all, q)?;
        let mut resolved = Table::new();
        resolved.insert("anchor".into(), Value::String(a.anchor.display().to_string()));
        resolved.insert("test".into(), Value::String(a.test.display().to_string()));
        resolved.insert("quality".into(), Value::String(qname));
        RunManifest::new("bdrate", None, None, out, resolved).write()?;
    }
    Ok(())
}

pub fn plot_rd(a: PlotRdArgs) -> CliResult<()> {
    let q = quality(a.quality);
    let mut rows: Vec<RdRow> = Vec::new();
    for p in &a.inputs {
        rows.extend(read_rows(p)?);
    }
    let curves = curves_from_rows(&rows, q)?;
    create_dir(&a.out)?;
    let fig = a.out.join("rd.svg");
    crate::plot::rd_curves(&fig, &curves, q)?;
    println!("{} curves -> {}", curves.len(), fig.display());
    let mut resolved = Table::new();
    resolved.insert(
        "inputs".into(),
        Value::Array(a.inputs.iter().map(|p| Value::String(p.display().to_string())).collect()),
    );
    resolved.insert("quality".into(), Value::String(format!("{q:?}").to_lowercase()));
    RunManifest::new("plot-rd", None, None, &a.out, resolved).write()?;
    Ok(())
}
