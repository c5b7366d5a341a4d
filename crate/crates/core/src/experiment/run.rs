//! Config-driven runs and the run-directory layout.
//!
//! ```text
//! <run-dir>/
//!   config.toml              copy of the config; re-running it reproduces the metrics
//!   dataset.csv              samples in raw units
//!   standardization.csv      per-feature mean and std (standardized runs only)
//!   metrics.csv              one row per completed epoch
//!   boundary.csv             classifier grid after the last epoch
//!   cloud_epoch_NNNN.csv     synthetic clouds at the configured epochs
//!   models/classifier.mlp    final networks
//!   models/generator_KKK.mlp
//!   models/epoch_NNNN/       networks at each cloud epoch
//!   timing.txt               wall-clock time, kept out of metrics.csv
//!   aborted.txt              only if training diverged
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::data::Dataset;
use crate::engine::{init_classifier, train_epoch, EpochMetrics, GeneratorPopulation, TrainObserver, TrainState};
use crate::error::{Error, Result};
use crate::experiment::boundary::{boundary_grid, BoundaryGrid, GridSpec};
use crate::experiment::cloud::{cloud_to_csv, synthetic_cloud, CloudRow};
use crate::experiment::config::RunConfig;
use crate::nn::{dump, MlpNetwork, OutputMode};

pub const CONFIG_FILE: &str = "config.toml";
pub const DATASET_FILE: &str = "dataset.csv";
pub const STATS_FILE: &str = "standardization.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BOUNDARY_FILE: &str = "boundary.csv";
pub const TIMING_FILE: &str = "timing.txt";
pub const ABORT_FILE: &str = "aborted.txt";
pub const MODELS_DIR: &str = "models";
pub const CLASSIFIER_DUMP: &str = "classifier.mlp";

pub fn generator_dump_name(k: usize) -> String {
    format!("generator_{k:03}.mlp")
}

pub fn cloud_file_name(epoch: usize) -> String {
    format!("cloud_epoch_{epoch:04}.csv")
}

pub fn epoch_models_dir(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join(MODELS_DIR).join(format!("epoch_{epoch:04}"))
}

/// In-memory training state for one configured run.
#[derive(Debug, Clone)]
pub struct Session {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub classifier: MlpNetwork,
    pub population: Option<GeneratorPopulation>,
    pub state: TrainState,
}

impl Session {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let dataset = config.load_dataset()?;
        let t = &config.training;
        let classifier = init_classifier(&config.classifier.dims, config.classifier.dropout, t.seed)?;
        let population = if t.mode.uses_generators() {
            Some(GeneratorPopulation::new(t.generators, &config.generator.dims, t.seed)?)
        } else {
            None
        };
        Ok(Session {
            config: config.clone(),
            dataset,
            classifier,
            population,
            state: TrainState::new(t),
        })
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.config.training.epochs
    }

    pub fn step(&mut self, observer: Option<&mut dyn TrainObserver>) -> Result<&EpochMetrics> {
        train_epoch(
            &mut self.classifier,
            self.population.as_mut(),
            &self.dataset,
            &self.config.training,
            &mut self.state,
            observer,
        )?;
        Ok(self.state.last().expect("an epoch was just recorded"))
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            resolution: self.config.export.grid_resolution,
            margin: self.config.export.grid_margin,
        }
    }

    pub fn boundary(&self) -> Result<BoundaryGrid> {
        boundary_grid(
            &self.classifier,
            &self.dataset.raw_bounds(),
            self.dataset.stats(),
            self.grid_spec(),
            self.config.training.exec,
        )
    }

    /// Empty for baseline runs.
    pub fn cloud(&self) -> Result<Vec<CloudRow>> {
        match &self.population {
            Some(p) => synthetic_cloud(p, &self.dataset, &self.classifier, self.config.training.exec),
            None => Ok(Vec::new()),
        }
    }

    pub fn save_models(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        dump::save(&self.classifier, &dir.join(CLASSIFIER_DUMP))?;
        if let Some(p) = &self.population {
            for (k, g) in p.generators().enumerate() {
                dump::save(g, &dir.join(generator_dump_name(k)))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub session: Session,
    pub wall_time: Duration,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn run(config: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    run_observed(config, dir, None)
}

/// Trains `config` to completion, writing the run directory as it goes.
pub fn run_observed(
    config: &RunConfig,
    dir: &Path,
    mut observer: Option<&mut dyn TrainObserver>,
) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut session = Session::new(config)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(CONFIG_FILE), &config.to_toml())?;
    write(&dir.join(DATASET_FILE), &raw_dataset_csv(&session.dataset))?;
    if let Some(st) = session.dataset.stats() {
        write(&dir.join(STATS_FILE), &st.to_csv())?;
    }

    let metrics_path = dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut metrics = BufWriter::new(file);
    let io = |e| Error::io(&metrics_path, e);
    writeln!(metrics, "{}", EpochMetrics::CSV_HEADER).map_err(io)?;

    while !session.is_finished() {
        let obs = observer.as_mut().map(|o| &mut **o as &mut dyn TrainObserver);
        let row = match session.step(obs) {
            Ok(m) => m.to_csv_row(),
            Err(e) => {
                metrics.flush().map_err(io)?;
                let epoch = match &e {
                    Error::Diverged { epoch, .. } => *epoch,
                    _ => session.state.epoch + 1,
                };
                write(&dir.join(ABORT_FILE), &format!("epoch = {epoch}\nerror = {e}\n"))?;
                return Err(e);
            }
        };
        writeln!(metrics, "{row}").map_err(io)?;
        let done = session.state.epoch;
        if config.export.cloud_epochs.contains(&done) && session.population.is_some() {
            metrics.flush().map_err(io)?;
            write(&dir.join(cloud_file_name(done)), &cloud_to_csv(&session.cloud()?))?;
            session.save_models(&epoch_models_dir(dir, done))?;
        }
    }
    metrics.flush().map_err(io)?;

    session.save_models(&dir.join(MODELS_DIR))?;
    write(&dir.join(BOUNDARY_FILE), &session.boundary()?.to_csv())?;
    let wall_time = started.elapsed();
    write(
        &dir.join(TIMING_FILE),
        &format!("wall_time_s = {:.3}\n", wall_time.as_secs_f64()),
    )?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        session,
        wall_time,
    })
}

fn raw_dataset_csv(ds: &Dataset) -> String {
    match ds.stats() {
        None => ds.to_csv(),
        Some(_) => {
            let raw: Vec<_> = (0..ds.len())
                .map(|i| crate::data::Sample {
                    features: ds.raw_features(i),
                    label: ds.samples()[i].label,
                })
                .collect();
            Dataset::new(raw, ds.class_count())
                .expect("raw copy of a valid dataset is valid")
                .to_csv()
        }
    }
}

/// Run config, dataset (with its standardization) and the networks saved
/// in `models_dir`.
fn reload(run_dir: &Path, models_dir: &Path) -> Result<(RunConfig, Dataset, MlpNetwork, Option<GeneratorPopulation>)> {
    let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let dataset = config.load_dataset()?;
    let classifier = dump::load(&models_dir.join(CLASSIFIER_DUMP), OutputMode::Softmax)?;
    let population = if config.training.mode.uses_generators() {
        let nets = (0..config.training.generators)
            .map(|k| dump::load(&models_dir.join(generator_dump_name(k)), OutputMode::Linear))
            .collect::<Result<Vec<_>>>()?;
        Some(GeneratorPopulation::from_networks(nets)?)
    } else {
        None
    };
    Ok((config, dataset, classifier, population))
}

/// Recomputes `boundary.csv` from the final classifier dump of a run.
pub fn export_boundary(run_dir: &Path, resolution: Option<usize>) -> Result<PathBuf> {
    let (config, dataset, classifier, _) = reload(run_dir, &run_dir.join(MODELS_DIR))?;
    let spec = GridSpec {
        resolution: resolution.unwrap_or(config.export.grid_resolution),
        margin: config.export.grid_margin,
    };
    let grid = boundary_grid(&classifier, &dataset.raw_bounds(), dataset.stats(), spec, config.training.exec)?;
    let path = run_dir.join(BOUNDARY_FILE);
    write(&path, &grid.to_csv())?;
    Ok(path)
}

/// Writes the synthetic cloud for the final networks, or for a snapshot
/// epoch saved during the run.
pub fn export_cloud(run_dir: &Path, epoch: Option<usize>) -> Result<PathBuf> {
    let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    if !config.training.mode.uses_generators() {
        return Err(Error::Config("baseline runs have no generators".into()));
    }
    let final_epoch = config.training.epochs;
    let epoch = epoch.unwrap_or(final_epoch);
    let models = if epoch == final_epoch {
        run_dir.join(MODELS_DIR)
    } else {
        let dir = epoch_models_dir(run_dir, epoch);
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "no model snapshot for epoch {epoch} in {}",
                run_dir.display()
            )));
        }
        dir
    };
    let (config, dataset, classifier, population) = reload(run_dir, &models)?;
    let population = population.expect("mode checked above");
    let rows = synthetic_cloud(&population, &dataset, &classifier, config.training.exec)?;
    let path = run_dir.join(cloud_file_name(epoch));
    write(&path, &cloud_to_csv(&rows))?;
    Ok(path)
}
