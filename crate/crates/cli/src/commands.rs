use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use firesr::dataset::{
    assign_splits, build_sample, burnable_index, synth_generate_with, temp_deviation, DatasetInfo,
    DatasetManifest, LandcoverMapping, MonthlyRaster, Sample, SampleOptions, Split, SynthParams,
    YearMonth,
};
use firesr::evaluation::{
    evaluate_models, evaluate_predictions_with, evaluate_regions, format_table, predict_samples,
    write_report_csv, write_triptych, EvalOptions, EvalReport,
};
use firesr::model::{export_layer1_filters, load_weights, NetworkWeights};
use firesr::raster::{
    read_csv_raster, read_raster, write_pgm, write_raster, ChannelStack, GeoTransform, Raster,
};
use firesr::training::{load_checkpoint, save_checkpoint, write_log_csv, Trainer};
use firesr::{Error, Scale};

use crate::config::RunConfig;
use crate::record::RunRecord;
use crate::CliError;

fn scale_of(v: u32) -> Result<Scale, CliError> {
    Ok(Scale::try_from(v)?)
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

/// Dataset scale, checked against an explicit `--scale`.
fn open_dataset(cfg: &mut RunConfig, path: &Path) -> Result<DatasetManifest, CliError> {
    let manifest = DatasetManifest::read(path)?;
    let ds = u32::from(manifest.info.scale);
    match cfg.scale {
        Some(s) if s != ds => {
            return Err(CliError::Core(Error::Shape(format!(
                "--scale {s} but the dataset is built for {ds}x"
            ))))
        }
        _ => cfg.scale = Some(ds),
    }
    Ok(manifest)
}

fn write_dataset(
    out: &Path,
    samples: &[Sample],
    cfg: &RunConfig,
    info: DatasetInfo,
) -> Result<DatasetManifest, CliError> {
    let keys: Vec<_> = samples
        .iter()
        .map(|s| (s.when, s.region.as_str()))
        .collect();
    let assignment = assign_splits(&keys, &cfg.split)?;
    let manifest = DatasetManifest::write(out, samples, &assignment, info)?;
    log::info!(
        "wrote {} samples: {} train, {} val, {} test",
        manifest.records.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        manifest.count(Split::Test)
    );
    Ok(manifest)
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    let scale = scale_of(*cfg.scale.get_or_insert(4))?;
    let s = &cfg.synth;
    let mut p = SynthParams::new(cfg.seed, s.months, (s.width, s.height), scale);
    p.start = s.start;
    p.regions = s.regions.clone();
    p.normalization = cfg.normalization;
    p.blob_density = s.blob_density;

    let record = RunRecord::start("synth", &cfg)?;
    log::info!(
        "generating {} months of {}x{} at {scale}, seed {}",
        p.n_months,
        p.width,
        p.height,
        p.seed
    );
    let samples = synth_generate_with(&p)?;
    let info = DatasetInfo {
        scale,
        normalization: cfg.normalization,
        degradation: Default::default(),
        seed: Some(cfg.seed),
        split: cfg.split.clone(),
    };
    write_dataset(record.out(), &samples, &cfg, info)?;
    write_json(&record.out().join("synth_params.json"), &p)?;
    record.finish(&cfg)
}

/// Optional per-region grid description, needed for CSV rasters.
#[derive(Debug, Deserialize)]
struct GridFile {
    width: usize,
    height: usize,
    origin_lon: f64,
    origin_lat: f64,
    pixel_size: f64,
}

struct RegionInput {
    dir: PathBuf,
    grid: Option<(usize, usize, GeoTransform)>,
}

impl RegionInput {
    fn open(dir: PathBuf) -> Result<Self, CliError> {
        let grid_path = dir.join("grid.json");
        let grid = if grid_path.is_file() {
            let text = fs::read_to_string(&grid_path).map_err(|e| Error::Io {
                path: grid_path.clone(),
                source: e,
            })?;
            let g: GridFile = serde_json::from_str(&text)
                .map_err(|e| Error::Format(format!("{}: {e}", grid_path.display())))?;
            Some((
                g.width,
                g.height,
                GeoTransform::new(g.origin_lon, g.origin_lat, g.pixel_size)?,
            ))
        } else {
            None
        };
        Ok(Self { dir, grid })
    }

    fn read(&self, path: &Path) -> Result<Raster, CliError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let (w, h, geo) = self.grid.ok_or_else(|| {
                    Error::Format(format!(
                        "{} is CSV but {} has no grid.json",
                        path.display(),
                        self.dir.display()
                    ))
                })?;
                Ok(read_csv_raster(path, w, h, geo)?)
            }
            _ => Ok(read_raster(path)?),
        }
    }

    /// `dir/<sub>/YYYY-MM.{fsr,csv}`, sorted by month.
    fn monthly(&self, sub: &str) -> Result<Vec<MonthlyRaster>, CliError> {
        let dir = self.dir.join(sub);
        let entries = fs::read_dir(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let mut paths = BTreeMap::new();
        for entry in entries {
            let path = entry
                .map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?
                .path();
            let ext = path.extension().and_then(|e| e.to_str());
            if !matches!(ext, Some("fsr" | "csv")) {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let when: YearMonth = stem.parse().map_err(|_| {
                Error::Format(format!("{}: expected a YYYY-MM file name", path.display()))
            })?;
            if paths.insert(when, path.clone()).is_some() {
                return Err(Error::DataQuality(format!(
                    "{when} appears twice in {}",
                    dir.display()
                ))
                .into());
            }
        }
        paths
            .into_iter()
            .map(|(when, p)| {
                Ok(MonthlyRaster {
                    when,
                    raster: self.read(&p)?,
                })
            })
            .collect()
    }

    fn single(&self, name: &str) -> Result<Raster, CliError> {
        for ext in ["fsr", "csv"] {
            let p = self.dir.join(format!("{name}.{ext}"));
            if p.is_file() {
                return self.read(&p);
            }
        }
        Err(Error::Io {
            path: self.dir.join(format!("{name}.fsr")),
            source: std::io::ErrorKind::NotFound.into(),
        }
        .into())
    }
}

fn region_samples(
    region: &str,
    input: &RegionInput,
    opts: &SampleOptions,
    cfg: &RunConfig,
) -> Result<Vec<Sample>, CliError> {
    let fire = input.monthly("fire")?;
    let temp = temp_deviation(&input.monthly("temperature")?, &cfg.build.climatology)?;
    let temp: BTreeMap<YearMonth, Raster> = temp.into_iter().map(|m| (m.when, m.raster)).collect();
    let Some(first) = fire.first() else {
        return Err(Error::DataQuality(format!("region {region} has no fire rasters")).into());
    };
    let mapping_path = input.dir.join("landcover_mapping.json");
    let mapping = if mapping_path.is_file() {
        LandcoverMapping::load(&mapping_path)?
    } else {
        LandcoverMapping::for_region(region).ok_or_else(|| {
            Error::DataQuality(format!(
                "region {region} has no preset land cover mapping; add {}",
                mapping_path.display()
            ))
        })?
    };
    let (w, h) = first.raster.dims();
    let burnable =
        burnable_index(&input.single("landcover")?, &mapping, w, h)?.with_geo(first.raster.geo());
    fire.iter()
        .map(|m| {
            let t = temp.get(&m.when).ok_or_else(|| {
                Error::DataQuality(format!("region {region}: no temperature for {}", m.when))
            })?;
            Ok(build_sample(&m.raster, t, &burnable, m.when, region, opts)?)
        })
        .collect()
}

pub fn build_dataset(cfg: &RunConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    let input = required(&cfg.build.input, "--input")?.clone();
    let scale = scale_of(*cfg.scale.get_or_insert(4))?;
    let opts = SampleOptions {
        scale,
        normalization: cfg.normalization,
        degradation: cfg.build.degradation,
    };
    let mut record = RunRecord::start("build-dataset", &cfg)?;
    record.input(&input);
    let entries = fs::read_dir(&input).map_err(|e| Error::Io {
        path: input.clone(),
        source: e,
    })?;
    let mut regions = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::Io {
                path: input.clone(),
                source: e,
            })?
            .path();
        if path.is_dir() {
            regions.push(path);
        }
    }
    regions.sort();
    if regions.is_empty() {
        return Err(
            Error::DataQuality(format!("{} holds no region directories", input.display())).into(),
        );
    }
    let mut samples = Vec::new();
    for dir in regions {
        let region = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        log::info!("building region {region}");
        samples.extend(region_samples(
            &region,
            &RegionInput::open(dir)?,
            &opts,
            &cfg,
        )?);
    }
    let info = DatasetInfo {
        scale,
        normalization: cfg.normalization,
        degradation: cfg.build.degradation,
        seed: None,
        split: cfg.split.clone(),
    };
    write_dataset(record.out(), &samples, &cfg, info)?;
    record.finish(&cfg)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    let data_path = required(&cfg.train.dataset, "--dataset")?.clone();
    let manifest = open_dataset(&mut cfg, &data_path)?;
    cfg.train.params.seed = cfg.seed;
    let mut record = RunRecord::start("train", &cfg)?;
    record.input(&data_path);

    let train = manifest.load_split(Split::Train)?;
    let val = manifest.load_split(Split::Val)?;
    log::info!(
        "training on {} samples, validating on {}",
        train.len(),
        val.len()
    );
    let mut trainer = match &cfg.train.resume {
        Some(ckpt) => {
            record.input(ckpt);
            let mut state = load_checkpoint(ckpt)?;
            state.config.max_epochs = cfg.train.params.max_epochs;
            state.config.patience = cfg.train.params.patience;
            Trainer::resume(state, &train, &val)?
        }
        None => Trainer::new(cfg.train.params, &train, &val)?,
    };
    log::info!(
        "initial validation loss {:.6e}",
        trainer.state().initial_val_loss
    );
    while !trainer.finished() {
        let r = trainer.step_epoch()?;
        log::info!(
            "epoch {:>3}  train {:.6e}  val {:.6e}{}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            if r.best { "  *" } else { "" }
        );
    }
    let outcome = trainer.outcome();
    let out = record.out();
    firesr::model::save_weights(&outcome.weights, out.join("weights.fsw"))?;
    write_log_csv(&outcome.log, out.join("train_log.csv"))?;
    if cfg.train.checkpoint {
        save_checkpoint(trainer.state(), out.join("checkpoint.fsc"))?;
    }
    log::info!(
        "best validation loss {:.6e} at epoch {} of {}",
        outcome.best_val_loss,
        outcome.best_epoch,
        outcome.epochs_run
    );
    record.finish(&cfg)
}

fn load_nets(paths: &[PathBuf], record: &mut RunRecord) -> Result<Vec<NetworkWeights>, CliError> {
    paths
        .iter()
        .map(|p| {
            record.input(p);
            Ok(load_weights(p)?)
        })
        .collect()
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    let data_path = required(&cfg.evaluate.dataset, "--dataset")?.clone();
    let e = cfg.evaluate.clone();
    if e.weights.is_empty() && e.predictions.is_none() {
        return Err(CliError::Usage(
            "give --weights and/or --predictions to evaluate".into(),
        ));
    }
    let manifest = open_dataset(&mut cfg, &data_path)?;
    let scale = manifest.info.scale;
    let mut record = RunRecord::start("evaluate", &cfg)?;
    record.input(&data_path);
    let nets = load_nets(&e.weights, &mut record)?;

    let opts = EvalOptions {
        threshold: cfg.threshold,
        pooling: e.pooling,
    };
    let mut rows: Vec<EvalReport> = evaluate_models(&manifest, &nets, opts)?;
    if e.by_region {
        for net in &nets {
            rows.extend(evaluate_regions(&manifest, net, opts)?);
        }
    }
    if let Some(dir) = &e.predictions {
        record.input(dir);
        let mut preds = Vec::new();
        let mut targets = Vec::new();
        for r in manifest.records_in(Split::Test) {
            preds.push(read_raster(dir.join(format!("{}.fsr", r.id)))?);
            targets.push(read_raster(manifest.root.join(&r.hr_fire))?);
        }
        rows.push(evaluate_predictions_with(
            &format!("Predictions-{scale}"),
            scale,
            &preds,
            &targets,
            opts,
        )?);
    }

    let out = record.out();
    let table = format_table(&rows);
    print!("{table}");
    write_text(&out.join("report.txt"), &table)?;
    write_report_csv(&rows, out.join("report.csv"))?;
    write_json(&out.join("report.json"), &rows)?;

    if !e.triptych.is_empty() {
        let net = nets
            .first()
            .ok_or_else(|| CliError::Usage("--triptych needs a network (--weights)".into()))?;
        for id in &e.triptych {
            let rec = manifest
                .records
                .iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| Error::DataQuality(format!("no sample {id} in the dataset")))?;
            let s = manifest.load_sample(rec)?;
            let (sr, bic) = predict_samples(net, std::slice::from_ref(&s))?;
            write_triptych(
                &s.hr_target,
                &sr[0],
                &bic[0],
                out.join(format!("triptych_{id}.ppm")),
            )?;
        }
    }
    record.finish(&cfg)
}

pub fn infer(cfg: &RunConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    let i = cfg.infer.clone();
    let weights = required(&i.weights, "--weights")?;
    let net = load_weights(weights)?;
    let ws = u32::from(net.scale);
    match cfg.scale {
        Some(s) if s != ws => {
            return Err(CliError::Core(Error::Shape(format!(
                "--scale {s} but the network is {ws}x"
            ))))
        }
        _ => cfg.scale = Some(ws),
    }
    let lr = [&i.lr_fire, &i.lr_temp_dev, &i.lr_burnable];
    let coarse = [&i.coarse_fire, &i.coarse_temp_dev, &i.burnable];
    let use_lr = lr.iter().any(|p| p.is_some());
    let use_coarse = coarse.iter().any(|p| p.is_some());
    if use_lr == use_coarse {
        return Err(CliError::Usage(
            "give either --lr-fire/--lr-temp-dev/--lr-burnable or \
             --coarse-fire/--coarse-temp-dev/--burnable"
                .into(),
        ));
    }
    let mut record = RunRecord::start("infer", &cfg)?;
    record.input(weights);
    let out = record.out().to_path_buf();
    let sr = if use_lr {
        let [f, t, b] = [
            required(&i.lr_fire, "--lr-fire")?,
            required(&i.lr_temp_dev, "--lr-temp-dev")?,
            required(&i.lr_burnable, "--lr-burnable")?,
        ];
        for p in [f, t, b] {
            record.input(p);
        }
        let stack =
            ChannelStack::fire_temp_burnable(read_raster(f)?, read_raster(t)?, read_raster(b)?)?;
        net.forward(&stack)?
    } else {
        let [f, t, b] = [
            required(&i.coarse_fire, "--coarse-fire")?,
            required(&i.coarse_temp_dev, "--coarse-temp-dev")?,
            required(&i.burnable, "--burnable")?,
        ];
        let dims = *required(&i.lr_dims, "--lr-dims")?;
        for p in [f, t, b] {
            record.input(p);
        }
        let res = firesr::evaluation::infer_coarse(
            &net,
            &read_raster(f)?,
            &read_raster(t)?,
            &read_raster(b)?,
            dims,
            &i.coarse,
        )?;
        for (ch, name) in res
            .lr_input
            .channels()
            .iter()
            .zip(["fire", "temp_dev", "burnable"])
        {
            write_raster(ch, out.join(format!("lr_{name}.fsr")))?;
        }
        res.output
    };
    write_raster(&sr, out.join("sr.fsr"))?;
    write_pgm(&sr, out.join("sr.pgm"))?;
    log::info!("wrote {}x{} output", sr.width(), sr.height());
    record.finish(&cfg)
}

pub fn export_filters(cfg: &RunConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    let weights = required(&cfg.export_filters.weights, "--weights")?.clone();
    let net = load_weights(&weights)?;
    cfg.scale = Some(u32::from(net.scale));
    let mut record = RunRecord::start("export-filters", &cfg)?;
    record.input(&weights);
    let written = export_layer1_filters(&net, record.out(), cfg.export_filters.mode)?;
    log::info!("wrote {} filter images", written.len());
    record.finish(&cfg)
}
