use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use rpd_core::data::{self, GridSpec, PointSet2D};
use rpd_core::metrics;
use rpd_core::predictor::{Mode, Predictor};
use rpd_core::prior::{PriorModel, StandardNormal, VqVae, VqVaeConfig};
use rpd_core::sampler::{self, SampleConfig};
use rpd_core::schedule::{Schedule, ScheduleSpec, StepSequence};
use rpd_core::train::{self, TrainConfig};
use rpd_core::verify::Verifier;

use crate::svg::Plot;
use crate::{
    Command, EvalArgs, MakeDataArgs, PlotArgs, SampleArgs, ScheduleArgs, SeedArgs, TrainArgs,
    TrainPriorArgs, VerifyArgs,
};

/// Bad invocation: missing files, inconsistent flags. Exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A verification check or metric did not hold. Exit code 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if cause.is::<CheckFailed>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<rpd_core::Error>() {
            return match e {
                rpd_core::Error::Metric(_) | rpd_core::Error::Training { .. } => 1,
                _ => 2,
            };
        }
    }
    1
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::MakeData(a) => make_data(a),
        Command::TrainPrior(a) => train_prior(a),
        Command::Train(a) => train_predictor(a),
        Command::Sample(a) => sample(a),
        Command::Eval(a) => eval(a),
        Command::Verify(a) => verify(a),
        Command::Plot(a) => plot(a),
        Command::Schedule(a) => schedule(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| UsageError(format!("cannot create {}: {e}", dir.display())).into())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(UsageError(format!("{what} not found: {}", path.display())).into())
    }
}

fn load_points(path: &Path) -> Result<PointSet2D> {
    require_file(path, "point CSV")?;
    Ok(PointSet2D::load_csv(path)?)
}

fn datasaurus_path(arg: Option<PathBuf>) -> PathBuf {
    arg.unwrap_or_else(|| match std::env::var_os("RPD_DATA_DIR") {
        Some(dir) => Path::new(&dir).join("DatasaurusDozen.tsv"),
        None => PathBuf::from("data/DatasaurusDozen.tsv"),
    })
}

fn make_data(a: MakeDataArgs) -> Result<()> {
    let path = datasaurus_path(a.datasaurus);
    require_file(
        &path,
        "Datasaurus TSV (pass --datasaurus or set RPD_DATA_DIR)",
    )?;
    let sources = data::load_datasaurus(&path)?;
    let mut spec = if a.hetero {
        GridSpec::hetero()
    } else {
        GridSpec::uniform(a.scale)
    };
    spec.spacing = a.spacing;
    if let Some(sel) = a.selection {
        spec.selection = sel;
    }
    let grid = data::build_grid(&sources, &spec)?;
    let truth = grid.replicate(data::GROUND_TRUTH_REPLICAS);
    create_dir(&a.out)?;
    grid.save_csv(&a.out.join("train.csv"))?;
    truth.save_csv(&a.out.join("ground_truth.csv"))?;
    println!(
        "wrote {} training points and {} ground-truth points to {}",
        grid.len(),
        truth.len(),
        a.out.display()
    );
    Ok(())
}

fn train_prior(a: TrainPriorArgs) -> Result<()> {
    let points = load_points(&a.data)?;
    let mut config = if a.desk {
        VqVaeConfig::desk(a.seed)
    } else {
        VqVaeConfig {
            seed: a.seed,
            ..VqVaeConfig::default()
        }
    };
    if let Some(iters) = a.iters {
        config.iterations = iters;
        config.variance_frozen_iters = iters * 2 / 3;
    }
    if let Some(frozen) = a.frozen_iters {
        config.variance_frozen_iters = frozen;
    }
    config.codes = a.codes;
    let (model, log) = VqVae::train(&points.to_tensor(), &config)?;
    for w in model.warnings() {
        eprintln!("warning: {w}");
    }
    create_dir(&a.out)?;
    model.save(&a.out.join("prior.txt"))?;
    let log_path = a.out.join("prior_log.csv");
    write_file(&log_path, |w| {
        writeln!(w, "iteration,loss,reconstruction_mse,sigma")?;
        for (i, ((l, m), s)) in log
            .loss
            .iter()
            .zip(&log.reconstruction_mse)
            .zip(&log.sigma)
            .enumerate()
        {
            writeln!(w, "{},{l},{m},{s}", i + 1)?;
        }
        Ok(())
    })?;
    let used = model.frequencies().iter().filter(|f| **f > 0.0).count();
    println!(
        "prior trained: {used} of {} codes used, decoder sigma {:.4}",
        model.frequencies().len(),
        model.sigma()
    );
    Ok(())
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| UsageError(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}

/// Runs `job` once per seed, in `OUT/seed-N/` when several seeds are given.
fn for_each_seed(
    seeds: &SeedArgs,
    out: &Path,
    job: impl Fn(u64, &Path) -> Result<()> + Sync,
) -> Result<()> {
    let Some(list) = &seeds.seeds else {
        create_dir(out)?;
        return job(seeds.seed, out);
    };
    let next = AtomicUsize::new(0);
    let errors = Mutex::new(Vec::new());
    let workers = seeds.jobs.clamp(1, list.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = list.get(i) else { break };
                let dir = out.join(format!("seed-{seed}"));
                let result = create_dir(&dir).and_then(|_| job(seed, &dir));
                if let Err(e) = result {
                    errors
                        .lock()
                        .expect("poisoned")
                        .push(e.context(format!("seed {seed}")));
                }
            });
        }
    });
    match errors.into_inner().expect("poisoned").into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn load_prior(mode: Mode, path: Option<&Path>, dim: usize) -> Result<Box<dyn PriorModel>> {
    if mode.is_baseline() {
        return Ok(Box::new(StandardNormal::new(dim)));
    }
    let Some(path) = path else {
        return Err(UsageError(format!("mode {mode} needs --prior")).into());
    };
    require_file(path, "prior checkpoint")?;
    Ok(Box::new(VqVae::load(path)?))
}

fn train_predictor(a: TrainArgs) -> Result<()> {
    let points = load_points(&a.data)?;
    let data = points.to_tensor();
    let base = if a.full {
        TrainConfig::full(a.mode)
    } else {
        TrainConfig::desk(a.mode)
    };
    let config = TrainConfig {
        iterations: a.iters.unwrap_or(base.iterations),
        batch: a.batch,
        learning_rate: a.lr,
        schedule: if a.linear_t1000 {
            ScheduleSpec::LinearT1000
        } else {
            ScheduleSpec::LogLinear {
                steps: a.steps,
                sigma_min: 0.01,
                sigma_max: 100.0,
            }
        },
        aux: a.aux.unwrap_or(base.aux),
        delta: a.delta,
        hidden: a.hidden.clone(),
        time_dim: a.time_dim,
        log_interval: a.log_interval,
        checkpoint_interval: a.checkpoint_interval,
        ..base
    };
    let prior = load_prior(a.mode, a.prior.as_deref(), data.cols())?;
    let tagged = a.seeds.seeds.is_some();
    for_each_seed(&a.seeds, &a.out, |seed, dir| {
        let config = TrainConfig {
            seed,
            checkpoint_dir: Some(dir.to_path_buf()),
            ..config.clone()
        };
        let (predictor, log) = train::train_observed(&data, prior.as_ref(), &config, &mut |r| {
            let tag = if tagged {
                format!("seed {seed}: ")
            } else {
                String::new()
            };
            eprintln!(
                "{tag}iteration {} loss {:.5} ({:.1}s)",
                r.iteration, r.loss, r.wall_seconds
            );
        })?;
        predictor.save(&dir.join("predictor.txt"))?;
        log.save_csv(&dir.join("train_log.csv"))?;
        Ok(())
    })
}

fn with_seed(template: &str, seed: u64) -> PathBuf {
    PathBuf::from(template.replace("{seed}", &seed.to_string()))
}

fn sample(a: SampleArgs) -> Result<()> {
    for_each_seed(&a.seeds, &a.out, |seed, dir| {
        let path = with_seed(&a.predictor, seed);
        require_file(&path, "predictor checkpoint")?;
        let predictor = Predictor::load(&path)?;
        if let Some(mode) = a.mode {
            if mode != predictor.mode {
                return Err(rpd_core::Error::Config(format!(
                    "--mode {mode} does not match the checkpoint, which was trained as {}",
                    predictor.mode
                ))
                .into());
            }
        }
        let prior_path = a.prior.as_ref().map(|p| with_seed(p, seed));
        let prior = load_prior(
            predictor.mode,
            prior_path.as_deref(),
            predictor.layout.data_dim,
        )?;
        let schedule = predictor.schedule.build()?;
        let config = SampleConfig {
            sigma_min: a.sigma_min,
            record_trajectories: a.trajectories > 0,
            ..SampleConfig::new(predictor.mode, a.count, seed)
        };
        let samples = match a.infer_steps {
            Some(s) => {
                sampler::generate(&predictor, prior.as_ref(), &schedule.reduce(s)?, &config)?
            }
            None => sampler::generate(&predictor, prior.as_ref(), &schedule, &config)?,
        };
        PointSet2D::from_tensor(&samples.points)?.save_csv(&dir.join("samples.csv"))?;
        if let Some(traj) = &samples.trajectories {
            write_file(&dir.join("trajectories.csv"), |w| {
                writeln!(w, "sample,step,x,y")?;
                for i in 0..a.trajectories.min(a.count) {
                    for (step, states) in traj.iter().enumerate() {
                        let p = states.row(i);
                        writeln!(w, "{i},{step},{},{}", p[0], p[1])?;
                    }
                }
                Ok(())
            })?;
        }
        Ok(())
    })
}

fn eval(a: EvalArgs) -> Result<()> {
    let samples = load_points(&a.samples)?;
    let reference = load_points(&a.reference)?;
    let global = metrics::wasserstein1(&samples, &reference, a.seed)?;
    let regional = metrics::region_wise_w1(&samples, &reference, a.spacing)?;
    for w in &regional.warnings {
        eprintln!("warning: {w}");
    }
    create_dir(&a.out)?;
    let path = a.out.join("metrics.csv");
    write_file(&path, |w| {
        metrics::write_report(w, Some(&global), &regional)
    })?;
    let exactness = if global.exact {
        "exact".to_string()
    } else {
        format!("subsampled to {} vs {}", global.n_a, global.n_b)
    };
    println!("w1 {:.6} ({exactness})", global.value);
    println!("rw_w1 {:.6}", regional.mean);
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let report = Verifier {
        seed: a.seed,
        draws: a.draws,
        delta: a.delta,
        ..Verifier::default()
    }
    .run()?;
    report.write_text(&mut std::io::stdout().lock())?;
    if report.passed() {
        Ok(())
    } else {
        Err(CheckFailed(format!("failed: {}", report.failures().join(", "))).into())
    }
}

fn read_trajectories(path: &Path) -> Result<BTreeMap<usize, Vec<[f64; 2]>>> {
    require_file(path, "trajectory CSV")?;
    let reader =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut paths: BTreeMap<usize, Vec<(usize, [f64; 2])>> = BTreeMap::new();
    for (n, line) in reader.lines().enumerate().skip(1) {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (|| -> Option<(usize, usize, f64, f64)> {
            Some((
                f.first()?.parse().ok()?,
                f.get(1)?.parse().ok()?,
                f.get(2)?.parse().ok()?,
                f.get(3)?.parse().ok()?,
            ))
        })();
        let Some((sample, step, x, y)) = parsed else {
            return Err(UsageError(format!(
                "{}:{}: expected sample,step,x,y",
                path.display(),
                n + 1
            ))
            .into());
        };
        paths.entry(sample).or_default().push((step, [x, y]));
    }
    Ok(paths
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by_key(|(s, _)| *s);
            (k, v.into_iter().map(|(_, p)| p).collect())
        })
        .collect())
}

fn plot(a: PlotArgs) -> Result<()> {
    let points = load_points(&a.points)?;
    let reference = a.reference.as_deref().map(load_points).transpose()?;
    create_dir(&a.out)?;

    let mut all = points.points.clone();
    if let Some(r) = &reference {
        all.extend_from_slice(&r.points);
    }
    let mut overview = Plot::fitting(&all, 0.05);
    overview.region_lines(a.spacing);
    if let Some(r) = &reference {
        overview.points(&r.points, "#888", 1.0, 0.35);
    }
    overview.points(&points.points, "#1f5fbf", 1.0, 0.5);
    overview.title(&format!("{} points", points.len()));
    std::fs::write(a.out.join("overview.svg"), overview.render())?;

    for id in 0..9 {
        let mine = points.region(id, a.spacing);
        let theirs = reference.as_ref().map(|r| r.region(id, a.spacing));
        let frame = match &theirs {
            Some(t) if !t.is_empty() => &t.points,
            _ => &mine.points,
        };
        let mut cell = Plot::fitting(frame, 0.15);
        if let Some(t) = &theirs {
            cell.points(&t.points, "#888", 1.5, 0.35);
        }
        cell.points(&mine.points, "#1f5fbf", 1.5, 0.6);
        cell.title(&format!("region {id}: {} points", mine.len()));
        std::fs::write(a.out.join(format!("cell-{id}.svg")), cell.render())?;
    }

    if let Some(path) = &a.trajectories {
        let paths = read_trajectories(path)?;
        let ends: Vec<[f64; 2]> = paths.values().filter_map(|p| p.last().copied()).collect();
        let mut frame = all.clone();
        frame.extend(ends.iter().copied());
        let mut t = Plot::fitting(&frame, 0.05);
        if let Some(r) = &reference {
            t.points(&r.points, "#888", 1.0, 0.3);
        }
        for p in paths.values() {
            t.polyline(p, "#c0392b", 0.6);
        }
        t.points(&ends, "#1f5fbf", 2.0, 0.9);
        t.title(&format!("{} reverse trajectories", paths.len()));
        std::fs::write(a.out.join("trajectories.svg"), t.render())?;
    }
    println!("plots written to {}", a.out.display());
    Ok(())
}

fn schedule(a: ScheduleArgs) -> Result<()> {
    let s = if a.linear_t1000 {
        Schedule::linear_t1000()
    } else {
        Schedule::log_linear(a.steps, a.noise_min, a.noise_max)?
    };
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match a.infer_steps {
        None => s.write_csv(&mut w)?,
        Some(count) => {
            let r = s.reduce(count)?;
            writeln!(w, "position,t,alpha_effective,alpha_bar")?;
            for pos in 1..=r.len() {
                let c = r.coeffs(pos);
                writeln!(w, "{pos},{},{},{}", c.t, c.alpha, c.alpha_bar)?;
            }
        }
    }
    Ok(())
}
