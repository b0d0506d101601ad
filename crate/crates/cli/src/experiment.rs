//! One experiment end to end: training, evaluation and artifacts.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use homopinn::analysis::{self, KernelReport};
use homopinn::net::{self, init_xavier};
use homopinn::problems::{sample_collocation, AllenCahn2dPseudoTime, SamplingMode};
use homopinn::reference::{self, fdm_ac2d_steady, FdmConfig, GridField2D};
use homopinn::trainer::{self, EpochRecord, PathOutcome};
use homopinn::{CollocationSet, Homotopy, NetworkParams, Points};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Strategy};
use crate::CliError;

/// Seed of the random evaluation set in more than two dimensions; fixed so
/// every run of a problem is scored on the same points.
const EVAL_SEED: u64 = 0x5EED_E7A1;

pub const HISTORY_HEADER: [&str; 7] = ["epoch", "eps", "l_res", "l_bc", "l_heps", "total", "l2re"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub k: usize,
    pub eps: f64,
    pub loss: f64,
    pub l_heps: f64,
    pub epochs: usize,
    pub stalled: bool,
    pub l2re: Option<f64>,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub problem: String,
    pub strategy: Strategy,
    pub seed: u64,
    /// Path parameter the final network is scored at.
    #[serde(deserialize_with = "null_as_nan")]
    pub final_eps: f64,
    /// `L_res + lambda L_bc` of the final network at `final_eps`; `null` in
    /// the file when the run failed.
    #[serde(deserialize_with = "null_as_nan")]
    pub final_loss: f64,
    pub final_l2re: Option<f64>,
    /// Path-tracking steps taken after Phase I.
    pub steps: usize,
    pub total_epochs: usize,
    /// Learning rate of Phase I or of the classical run, after any grid search.
    pub lr: f64,
    pub path: Vec<PathEntry>,
    pub warnings: Vec<String>,
    pub elapsed_seconds: f64,
    pub config: ExperimentConfig,
}

fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Summary {
    fn failed(cfg: &ExperimentConfig, err: &CliError, elapsed: f64) -> Self {
        Summary {
            status: "error".into(),
            error: Some(err.to_string()),
            problem: cfg.problem.clone(),
            strategy: cfg.strategy,
            seed: cfg.seed,
            final_eps: f64::NAN,
            final_loss: f64::NAN,
            final_l2re: None,
            steps: 0,
            total_epochs: 0,
            lr: cfg.phase1_config().optimizer.lr(),
            path: Vec::new(),
            warnings: Vec::new(),
            elapsed_seconds: elapsed,
            config: cfg.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Evaluation set: 1024 uniform points in 1D, a 128 x 128 grid in 2D and 4096
/// seeded uniform points above that.
pub fn evaluation_points(problem: &dyn Homotopy) -> Result<Points, CliError> {
    let dom = problem.domain();
    let lin = |n: usize| -> Vec<f64> { (0..n).map(|i| dom.lo + (dom.hi - dom.lo) * i as f64 / (n - 1) as f64).collect() };
    Ok(match dom.dim {
        1 => Points::from_scalars(&lin(1024)),
        2 => {
            let g = lin(128);
            let rows: Vec<[f64; 2]> = g.iter().flat_map(|&y| g.iter().map(move |&x| [x, y])).collect();
            Points::from_rows(&rows)?
        }
        _ => sample_collocation(problem, 4096, 1, SamplingMode::UniformRandom, EVAL_SEED)?.interior,
    })
}

/// Finite-difference steady state of the 2D Allen–Cahn family at `s = 0`,
/// read from `cache` when present and written there otherwise.
pub fn ac2d_reference(n: usize, cache: Option<&Path>) -> Result<GridField2D, CliError> {
    if let Some(path) = cache {
        if path.exists() {
            let field = GridField2D::read_binary(BufReader::new(File::open(path)?))?;
            if field.nx == n && field.ny == n {
                return Ok(field);
            }
        }
    }
    let eps = AllenCahn2dPseudoTime::default().eps_of(0.0);
    let field = fdm_ac2d_steady(&FdmConfig::semi_implicit(eps, n))?;
    if let Some(path) = cache {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        field.write_binary(BufWriter::new(File::create(path)?))?;
    }
    Ok(field)
}

/// Ground truth on the evaluation set at the schedule target, if one exists.
fn truth(cfg: &ExperimentConfig, problem: &dyn Homotopy, points: &Points, eps: f64) -> Result<Option<Vec<f64>>, CliError> {
    if problem.has_exact() {
        return Ok(Some(reference::eval_exact(problem, points, eps)?));
    }
    if problem.id() == "ac2d" && eps == 0.0 {
        let field = ac2d_reference(cfg.reference.n, cfg.reference.cache.as_deref())?;
        return Ok(Some(field.sample_points(points)?));
    }
    Ok(None)
}

struct Trained {
    params: NetworkParams,
    history: Vec<EpochRecord>,
    path: Option<PathOutcome>,
    lr: f64,
}

fn train(cfg: &ExperimentConfig, problem: &dyn Homotopy, colloc: &CollocationSet, eval: Option<&Points>) -> Result<Trained, CliError> {
    let schedule = cfg.schedule.resolve()?;
    let start = init_xavier(&cfg.dims(problem), cfg.seed)?;
    if cfg.strategy == Strategy::Classical {
        let out = trainer::train_classical(problem, &start, colloc, schedule.target(), &cfg.train)?;
        return Ok(Trained { params: out.params, history: out.history, path: None, lr: out.lr });
    }
    let p1 = trainer::train_phase1(problem, &start, colloc, schedule.head(), cfg.phase1_config())?;
    let path = match cfg.strategy {
        Strategy::S1 => trainer::track_strategy1(problem, &p1.params, &schedule, colloc, &cfg.train, eval)?,
        _ => trainer::track_strategy2(problem, &p1.params, &schedule, colloc, &cfg.train, eval)?,
    };
    let offset = p1.history.len();
    let mut history = p1.history;
    history.extend(path.history.iter().map(|r| EpochRecord { epoch: r.epoch + offset, ..*r }));
    Ok(Trained { params: path.final_params().clone(), history, path: Some(path), lr: p1.lr })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_history(path: &Path, rows: &[EpochRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.eps.to_string(),
            r.l_res.to_string(),
            r.l_bc.to_string(),
            r.l_heps.to_string(),
            r.total.to_string(),
            opt(r.l2re),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn coord_header(d: usize) -> Vec<String> {
    match d {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        _ => (1..=d).map(|i| format!("x{i}")).collect(),
    }
}

fn write_solution(path: &Path, points: &Points, pred: &[f64], truth: Option<&[f64]>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = coord_header(points.dim());
    header.extend(["u_pred".to_string(), "u_ref".to_string()]);
    w.write_record(&header)?;
    for (i, x) in points.rows().enumerate() {
        let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        row.push(pred[i].to_string());
        row.push(opt(truth.map(|t| t[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Profiles of the checkpointed path steps: the whole line in 1D, the `y = 0`
/// section in 2D.
fn write_profiles(path: &Path, problem: &dyn Homotopy, run: &PathOutcome, every: usize) -> Result<(), CliError> {
    let dom = problem.domain();
    let xs: Vec<f64> = (0..256).map(|i| dom.lo + (dom.hi - dom.lo) * i as f64 / 255.0).collect();
    let points = match dom.dim {
        1 => Points::from_scalars(&xs),
        2 => Points::from_rows(&xs.iter().map(|&x| [x, 0.5 * (dom.lo + dom.hi)]).collect::<Vec<_>>())?,
        _ => return Ok(()),
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "eps", "x", "u"])?;
    for k in checkpoint_steps(run.steps.len(), every) {
        let u = net::forward(&run.params[k], &points)?;
        for (x, u) in xs.iter().zip(u) {
            w.write_record([k.to_string(), run.steps[k].eps.to_string(), x.to_string(), u.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `0, every, 2 every, ...` and the last step.
fn checkpoint_steps(n: usize, every: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..n).step_by(every.max(1)).collect();
    if ks.last() != Some(&(n - 1)) {
        ks.push(n - 1);
    }
    ks
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn kernel_rows(problem: &dyn Homotopy, colloc: &CollocationSet, cfg: &ExperimentConfig, t: &Trained) -> Result<Vec<KernelReport>, CliError> {
    let mut rows = Vec::new();
    match &t.path {
        Some(run) => {
            let every = cfg.analysis.kernel_every.unwrap_or(10);
            for k in checkpoint_steps(run.steps.len(), every) {
                rows.push(analysis::kernel_spectrum(problem, &run.params[k], colloc, run.steps[k].eps)?);
            }
        }
        None => {
            let eps = cfg.schedule.resolve()?.target();
            rows.push(analysis::kernel_spectrum(problem, &t.params, colloc, eps)?);
        }
    }
    Ok(rows)
}

fn execute(cfg: &ExperimentConfig, out: &Path, started: Instant) -> Result<Summary, CliError> {
    let problem = cfg.problem()?;
    let problem = problem.as_ref();
    let schedule = cfg.schedule.resolve()?;
    let c = &cfg.collocation;
    let colloc = sample_collocation(problem, c.n_res, c.n_bc, c.mode, c.seed.unwrap_or(cfg.seed))?;
    let eval = evaluation_points(problem)?;
    let target = schedule.target();
    let exact_eval = problem.has_exact().then_some(&eval);

    let t = train(cfg, problem, &colloc, exact_eval)?;

    let ckpt = out.join("checkpoints");
    fs::create_dir_all(&ckpt)?;
    write_history(&out.join("history.csv"), &t.history)?;
    match &t.path {
        Some(run) => {
            for (k, p) in run.params.iter().enumerate() {
                fs::write(ckpt.join(format!("step_{k:04}.json")), p.to_json()?)?;
            }
            write_profiles(&out.join("profiles.csv"), problem, run, cfg.analysis.kernel_every.unwrap_or(10))?;
        }
        None => fs::write(ckpt.join("final.json"), t.params.to_json()?)?,
    }

    let pred = net::forward(&t.params, &eval)?;
    let truth = truth(cfg, problem, &eval, target)?;
    write_solution(&out.join("solution.csv"), &eval, &pred, truth.as_deref())?;
    let final_l2re = truth.as_deref().map(|tr| reference::l2re(&pred, tr)).transpose()?;

    if cfg.analysis.kernel {
        let rows = kernel_rows(problem, &colloc, cfg, &t)?;
        analysis::write_kernel_csv(BufWriter::new(File::create(out.join("kernel.csv"))?), &rows)?;
    }

    let final_report = homopinn::loss::loss_pinn(problem, &t.params, &colloc, target, cfg.train.lambda)?;
    let (path, steps, warnings) = match &t.path {
        Some(run) => (
            run.steps
                .iter()
                .map(|s| PathEntry { k: s.k, eps: s.eps, loss: s.total, l_heps: s.l_heps, epochs: s.epochs, stalled: s.stalled, l2re: s.l2re })
                .collect(),
            run.steps.len() - 1,
            run.warnings.clone(),
        ),
        None => (Vec::new(), 0, Vec::new()),
    };
    Ok(Summary {
        status: "ok".into(),
        error: None,
        problem: cfg.problem.clone(),
        strategy: cfg.strategy,
        seed: cfg.seed,
        final_eps: target,
        final_loss: final_report.total,
        final_l2re,
        steps,
        total_epochs: t.history.len(),
        lr: t.lr,
        path,
        warnings,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
    })
}

/// Runs `cfg` into `out` (the config's `out_dir` when `None`) and writes
/// `summary.json`, also when the run fails.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Summary, CliError> {
    let started = Instant::now();
    let out: PathBuf = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&out)?;
    let mut echoed = cfg.clone();
    echoed.out_dir = out.clone();
    match execute(&echoed, &out, started) {
        Ok(summary) => {
            write_json(&out.join("summary.json"), &summary)?;
            Ok(summary)
        }
        Err(e) => {
            write_json(&out.join("summary.json"), &Summary::failed(&echoed, &e, started.elapsed().as_secs_f64()))?;
            Err(e)
        }
    }
}
