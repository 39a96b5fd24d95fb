use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use pignpi_core::graph::{
    corrupt_positions, split_timesteps, DatasetManifest, GraphDataset, Topology, DEFAULT_RATIOS,
};
use pignpi_core::lj::simulate_lj_runs;
use pignpi_core::metrics::{
    aggregate, force_suite, potential_suite, render_field, write_aggregate_csv, Aggregate,
    GridSpec, MetricsReport, Predictor, Probe,
};
use pignpi_core::model::{Model, ModelKind};
use pignpi_core::sim::{io, sample_initial_system, simulate, Interaction, Trajectory};
use pignpi_core::train::train;
use pignpi_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{repetition_seed, Cell, ExperimentConfig, Source};

pub const DATA_ROOT_ENV: &str = "PIGNPI_DATA_ROOT";

/// Paths of one experiment directory.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub data: PathBuf,
}

impl Experiment {
    /// `data` defaults to `$PIGNPI_DATA_ROOT/<name>` and then `<out>/data`.
    pub fn new(config: ExperimentConfig, out: &Path, data: Option<PathBuf>) -> Self {
        let data = data
            .or_else(|| {
                std::env::var_os(DATA_ROOT_ENV).map(|root| PathBuf::from(root).join(&config.name))
            })
            .unwrap_or_else(|| out.join("data"));
        Self {
            config,
            out: out.to_path_buf(),
            data,
        }
    }

    /// Reads the config snapshot of an existing run directory.
    pub fn open(out: &Path, data: Option<PathBuf>) -> Result<Self> {
        let cfg = ExperimentConfig::load(&out.join("config.toml"))?;
        Ok(Self::new(cfg, out, data))
    }

    fn trajectory_paths(&self) -> Result<Vec<PathBuf>> {
        Ok(match self.config.dataset.source()? {
            Source::Analytic(_) => vec![self.data.join("trajectory.bin")],
            Source::Lj(spec) => (0..spec.n_runs)
                .map(|k| self.data.join(format!("run_{k:02}.bin")))
                .collect(),
        })
    }

    fn training_trajectory(&self) -> Result<PathBuf> {
        let paths = self.trajectory_paths()?;
        let k = match self.config.dataset.source()? {
            Source::Lj(_) => self.config.dataset.train_run,
            Source::Analytic(_) => 0,
        };
        Ok(paths[k].clone())
    }

    fn cell_dir(&self, cell: &Cell) -> PathBuf {
        self.out.join("runs").join(cell.label())
    }

    fn write_config(&self) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(
            self.out.join("config.toml"),
            toml::to_string(&self.config).context("serializing config")?,
        )?;
        Ok(())
    }
}

/// Simulation record written next to the trajectories.
#[derive(Debug, Serialize, Deserialize)]
struct DataManifest {
    name: String,
    seed: u64,
    files: Vec<PathBuf>,
}

pub fn cmd_simulate(exp: &Experiment, force: bool) -> Result<Vec<PathBuf>> {
    let paths = exp.trajectory_paths()?;
    if !force && paths.iter().any(|p| p.exists()) {
        return Err(Error::Config(format!(
            "{} already holds trajectories; pass --force to overwrite",
            exp.data.display()
        ))
        .into());
    }
    fs::create_dir_all(&exp.data)?;
    let ds = &exp.config.dataset;
    let seed = exp.config.seed;
    let trajectories = match ds.source()? {
        Source::Analytic(law) => {
            let sys = sample_initial_system(ds.n_particles, ds.dim, seed)?;
            vec![simulate(&sys, law, ds.n_steps, ds.dt, seed)?]
        }
        Source::Lj(spec) => simulate_lj_runs(&spec, seed)?,
    };
    for (t, p) in trajectories.iter().zip(&paths) {
        io::save(t, p)?;
        info!("wrote {} ({} steps)", p.display(), t.n_steps());
    }
    let manifest = DataManifest {
        name: exp.config.name.clone(),
        seed,
        files: paths.clone(),
    };
    fs::write(
        exp.data.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(paths)
}

fn load_trajectory(path: &Path) -> Result<Trajectory> {
    if !path.exists() {
        return Err(Error::Data(format!(
            "missing trajectory {}; run `pignpi simulate` first",
            path.display()
        ))
        .into());
    }
    Ok(io::load(path)?)
}

/// What a repetition directory records about its own provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepRecord {
    pub cell: Cell,
    pub repetition: usize,
    pub seed: u64,
    pub interaction: Interaction,
    pub reference_step: usize,
    pub dataset: DatasetManifest,
}

fn run_suite(
    kind: ModelKind,
    predictor: &dyn Predictor,
    ds: &GraphDataset,
    steps: &[usize],
    reference_step: usize,
) -> pignpi_core::Result<MetricsReport> {
    if kind.is_potential() {
        potential_suite(predictor, ds, steps, reference_step)
    } else {
        force_suite(predictor, ds, steps)
    }
}

fn write_report(report: &MetricsReport, dir: &Path, stem: &str) -> Result<()> {
    report.save_json(dir.join(format!("{stem}.json")))?;
    report.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
    Ok(())
}

fn train_repetition(
    exp: &Experiment,
    clean: &Trajectory,
    source: &Path,
    cell: &Cell,
    repetition: usize,
) -> Result<Option<MetricsReport>> {
    let cfg = &exp.config;
    let dir = exp.cell_dir(cell).join(format!("rep_{repetition}"));
    fs::create_dir_all(&dir)?;
    let seed = repetition_seed(cfg.seed, repetition);
    let noise_seed = seed.wrapping_add(1);
    let n = clean.n_steps();
    let mut split = split_timesteps(n, DEFAULT_RATIOS, cfg.seed)?;
    let trajectory = if cell.beta > 0.0 {
        // One-sided stencils at the ends are less accurate.
        split = split.without(&[0, n - 1]);
        corrupt_positions(clean, cell.beta, noise_seed)?
    } else {
        clean.clone()
    };
    let topology = Topology::default_for(&trajectory);
    let ds = GraphDataset::new(trajectory, topology);
    let record = RepRecord {
        cell: cell.clone(),
        repetition,
        seed,
        interaction: *clean.interaction(),
        reference_step: cfg.evaluate.reference_step,
        dataset: DatasetManifest {
            source: source.to_path_buf(),
            topology,
            layout: ds.layout,
            split: split.clone(),
            beta: cell.beta,
            noise_seed,
        },
    };
    fs::write(dir.join("record.json"), serde_json::to_string_pretty(&record)?)?;
    let model = Model::new(
        cell.kind,
        ds.layout,
        cfg.arch(cell.activation),
        ds.trajectory.n_particles(),
        seed,
    )?;
    let tc = cfg.train_config(cell.kind, cell.alpha, seed)?;
    fs::write(dir.join("train_config.json"), serde_json::to_string_pretty(&tc)?)?;
    let outcome = match train(model, &ds, &split, &tc) {
        Ok(o) => o,
        Err(e @ (Error::NonFiniteLoss { .. } | Error::Diverged { .. })) => {
            warn!("{} rep {repetition}: {e}", cell.label());
            fs::write(dir.join("failure.txt"), format!("{e}\n"))?;
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    outcome.history.save_csv(dir.join("history.csv"))?;
    outcome.best.save(dir.join("best.json"), Some(seed))?;
    outcome.last.save(dir.join("final.json"), Some(seed))?;
    let report = run_suite(cell.kind, &outcome.best, &ds, &split.test, cfg.evaluate.reference_step)?;
    report.check()?;
    write_report(&report, &dir, "metrics")?;
    info!(
        "{} rep {repetition}: best epoch {:?}",
        cell.label(),
        outcome.history.best_epoch
    );
    Ok(Some(report))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building worker pool")
}

fn write_aggregates(path: &Path, rows: &[Aggregate]) -> Result<()> {
    write_aggregate_csv(rows, fs::File::create(path)?)?;
    Ok(())
}

/// Trains every cell and repetition, evaluates each selected model on its
/// test split, and writes one aggregate row per cell.
pub fn cmd_train(exp: &Experiment, force: bool, jobs: usize) -> Result<Vec<Aggregate>> {
    let runs = exp.out.join("runs");
    if runs.exists() && !force {
        return Err(Error::Config(format!(
            "{} already exists; pass --force to overwrite",
            runs.display()
        ))
        .into());
    }
    exp.write_config()?;
    let source = exp.training_trajectory()?;
    let clean = load_trajectory(&source)?;
    let cells = exp.config.cells()?;
    let work: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..exp.config.repetitions).map(move |r| (c, r)))
        .collect();
    let results: Vec<Result<Option<MetricsReport>>> = pool(jobs)?.install(|| {
        work.par_iter()
            .map(|&(c, r)| train_repetition(exp, &clean, &source, &cells[c], r))
            .collect()
    });
    let mut rows = Vec::new();
    let mut results = results.into_iter();
    for cell in &cells {
        let mut reports = Vec::new();
        for _ in 0..exp.config.repetitions {
            if let Some(rep) = results.next().unwrap()? {
                reports.push(rep);
            }
        }
        if reports.is_empty() {
            warn!("{}: every repetition failed", cell.label());
            continue;
        }
        let agg = aggregate(cell.label(), &reports)?;
        write_aggregates(&exp.cell_dir(cell).join("aggregate.csv"), std::slice::from_ref(&agg))?;
        rows.push(agg);
    }
    if rows.is_empty() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            param_norm: f64::NAN,
        })
        .context("no repetition finished training");
    }
    write_aggregates(&exp.out.join("aggregate.csv"), &rows)?;
    Ok(rows)
}

fn rep_dirs(cell_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(cell_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("best.json").exists())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Re-evaluates every trained repetition. With `trajectory` set, all of its
/// steps are the test set (generalization); otherwise each repetition's
/// own test split is used. Results are written as `metrics_<tag>`.
pub fn cmd_evaluate(exp: &Experiment, trajectory: Option<&Path>, tag: &str) -> Result<Vec<Aggregate>> {
    let external = trajectory.map(load_trajectory).transpose()?;
    let mut rows = Vec::new();
    for cell in exp.config.cells()? {
        let cell_dir = exp.cell_dir(&cell);
        if !cell_dir.exists() {
            continue;
        }
        let mut reports = Vec::new();
        for dir in rep_dirs(&cell_dir)? {
            let record: RepRecord =
                serde_json::from_str(&fs::read_to_string(dir.join("record.json"))?)?;
            let model = Model::load(dir.join("best.json"))?;
            let (ds, steps) = match &external {
                Some(t) => {
                    let ds = GraphDataset::new(t.clone(), Topology::default_for(t));
                    let steps = (0..ds.n_steps()).collect::<Vec<_>>();
                    (ds, steps)
                }
                None => {
                    let clean = load_trajectory(&record.dataset.source)?;
                    let t = if record.dataset.beta > 0.0 {
                        corrupt_positions(&clean, record.dataset.beta, record.dataset.noise_seed)?
                    } else {
                        clean
                    };
                    let topology = record.dataset.topology;
                    (GraphDataset::new(t, topology), record.dataset.split.test.clone())
                }
            };
            model.layout.check_compatible(&ds.layout)?;
            if model.kind == ModelKind::GnPlus && ds.trajectory.n_particles() != model.node_scalars.as_ref().map_or(0, |s| s.nrows()) {
                warn!("GN+ keeps one scalar per training particle and cannot predict accelerations here; reporting pairwise metrics only");
            }
            let report = run_suite(model.kind, &model, &ds, &steps, record.reference_step)?;
            report.check()?;
            write_report(&report, &dir, &format!("metrics_{tag}"))?;
            reports.push(report);
        }
        if reports.is_empty() {
            continue;
        }
        let agg = aggregate(cell.label(), &reports)?;
        write_aggregates(&cell_dir.join(format!("aggregate_{tag}.csv")), std::slice::from_ref(&agg))?;
        rows.push(agg);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("no trained checkpoints under {}", exp.out.display())).into());
    }
    write_aggregates(&exp.out.join(format!("aggregate_{tag}.csv")), &rows)?;
    Ok(rows)
}

/// Field of pair forces around a resting unit particle at the origin.
pub fn cmd_render(rep_dir: &Path, out: &Path, grid: &GridSpec) -> Result<()> {
    let record: RepRecord = serde_json::from_str(
        &fs::read_to_string(rep_dir.join("record.json"))
            .with_context(|| format!("{} is not a repetition directory", rep_dir.display()))?,
    )?;
    let model = Model::load(rep_dir.join("best.json"))?;
    let probe = Probe::at_origin(model.layout.dim);
    let field = render_field(&model, &record.interaction, &model.layout, &probe, grid)?;
    field.write_csv(fs::File::create(out)?)?;
    Ok(())
}

/// Collects every `aggregate*.csv` of the experiment into `report.csv`, one
/// block per evaluation tag.
pub fn cmd_report(exp: &Experiment) -> Result<PathBuf> {
    let mut names: Vec<PathBuf> = fs::read_dir(&exp.out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("aggregate") && n.ends_with(".csv"))
        })
        .collect();
    if names.is_empty() {
        return Err(Error::Data(format!("nothing to report in {}", exp.out.display())).into());
    }
    names.sort();
    let mut text = String::new();
    for p in names {
        let tag = p.file_stem().unwrap().to_string_lossy().replace("aggregate", "test");
        text.push_str(&format!("# {}\n", tag.trim_start_matches("test_")));
        text.push_str(&fs::read_to_string(&p)?);
    }
    let path = exp.out.join("report.csv");
    fs::write(&path, text)?;
    Ok(path)
}

/// Simulate (unless the data already exists), train, evaluate
/// generalization when configured, and report.
pub fn cmd_sweep(exp: &Experiment, force: bool, jobs: usize) -> Result<PathBuf> {
    if force || !exp.trajectory_paths()?.iter().all(|p| p.exists()) {
        cmd_simulate(exp, true)?;
    }
    cmd_train(exp, force, jobs)?;
    if let Some(g) = &exp.config.generalization {
        let ds = &exp.config.dataset;
        let Source::Analytic(law) = ds.source()? else {
            return Err(Error::Config("generalization runs need an analytic law".into()).into());
        };
        let seed = g.seed.unwrap_or(exp.config.seed + 1);
        let sys = sample_initial_system(g.n_particles, ds.dim, seed)?;
        let traj = simulate(&sys, law, g.n_steps, ds.dt, seed)?;
        let path = exp.data.join("generalization.bin");
        io::save(&traj, &path)?;
        cmd_evaluate(exp, Some(&path), "generalization")?;
    }
    cmd_report(exp)
}
