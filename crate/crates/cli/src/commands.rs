//! The subcommands, as library functions that write their artefacts into a
//! directory and return the in-memory results.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hyperdisc::intersections::{disc_grid, intersection_sign, self_proximity, Fixture, TRANSVERSALITY_FLOOR};
use hyperdisc::invariants::{consistency_check, homfly_table};
use hyperdisc::network::init_params;
use hyperdisc::training::{self, monte_carlo_eval, Progress};
use hyperdisc::{
    residual, DiscMap, DoublePointRecord, IntersectionReport, McStats, ModelMap, SearchParams, TrainConfig,
    TrainReport, Verdict,
};

use crate::checkpoint::{Checkpoint, Metadata};
use crate::config::ExperimentConfig;
use crate::export::{num, polar_mesh, read_floats, KeyValues, Mesh, MeshModel, Table};

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "HYPERDISC_OUT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train_config_lines(kv: &mut KeyValues, t: &TrainConfig) {
    kv.put("n_data", t.n_data)
        .put("batch", t.batch)
        .put("adam_epochs", t.adam_epochs)
        .put("eta0", num(t.eta0))
        .put("eta_min", num(t.eta_min))
        .put("n_lbfgs", t.n_lbfgs)
        .put("lbfgs_iters", t.lbfgs_iters)
        .put("history", t.history)
        .put("delta_g", num(t.delta_g))
        .put("delta_theta", num(t.delta_theta))
        .put("seed", t.seed);
}

pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Trains, then writes `config.toml` (echo), `checkpoint.toml`,
/// `train_report.txt` and `losses.csv`.
pub fn cmd_train(cfg: &ExperimentConfig, dir: &Path, observer: &mut dyn FnMut(&Progress)) -> Result<TrainOutput> {
    let model_cfg = cfg.model_config()?;
    let tcfg = cfg.train.resolve();
    tcfg.validate()?;
    prepare(dir)?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;

    let model = hyperdisc::SurfaceModel::new(model_cfg.clone())?;
    let init = init_params(model.arch(), cfg.model.init, cfg.model.init_seed).0;
    let (params, report) = training::train(&model, &init, &tcfg, observer)?;

    let phase = if report.lbfgs.losses.len() > 1 {
        "lbfgs"
    } else if report.adam.losses.is_empty() {
        "init"
    } else {
        "adam"
    };
    let meta = Metadata {
        phase: phase.into(),
        best_loss: report.best_loss.is_finite().then_some(report.best_loss),
        init_seed: cfg.model.init_seed,
        train_seed: tcfg.seed,
        termination: report.termination.map(|t| t.as_str().to_string()),
    };
    let checkpoint = Checkpoint::new(model_cfg, params, meta);
    checkpoint.save(&dir.join("checkpoint.toml"))?;

    let mut kv = KeyValues::default();
    kv.put("knot", &checkpoint.model.curve.label).put("parameters", checkpoint.params.len());
    train_config_lines(&mut kv, &tcfg);
    kv.put("adam_epochs_run", report.adam.losses.len())
        .put("lbfgs_iterations", report.lbfgs.losses.len().saturating_sub(1))
        .put("termination", report.termination.map_or("none", |t| t.as_str()))
        .put("aborted", report.aborted.as_deref().unwrap_or("none"))
        .put("best_loss", num(report.best_loss))
        .put("wall_time_s", format!("{:.3}", report.wall_time_s));
    write(&dir.join("train_report.txt"), kv.as_str())?;

    let mut losses = Table::new(&["phase", "step", "loss"]);
    for (name, phase) in [("adam", &report.adam), ("lbfgs", &report.lbfgs)] {
        for (i, l) in phase.losses.iter().enumerate() {
            losses.row(&[name.to_string(), i.to_string(), num(*l)]);
        }
    }
    losses.write(&dir.join("losses.csv"))?;
    Ok(TrainOutput { checkpoint, report })
}

pub struct EvalOutput {
    pub stats: McStats,
    /// `mean ± std (max)`.
    pub line: String,
}

/// Monte Carlo loss statistics plus a residual heatmap over the masked
/// Cartesian grid of side `heatmap_grid`. Writes `eval.txt`,
/// `mc_losses.csv` and `residual_heatmap.csv`.
pub fn cmd_eval(
    ckpt: &Checkpoint,
    samples: usize,
    size: usize,
    seed: u64,
    heatmap_grid: usize,
    dir: &Path,
) -> Result<EvalOutput> {
    let model = ckpt.surface()?;
    let stats = monte_carlo_eval(&model, &ckpt.params, samples, size, seed)?;
    let line = stats.to_string();
    prepare(dir)?;
    let mut kv = KeyValues::default();
    kv.put("knot", &ckpt.model.curve.label)
        .put("samples", samples)
        .put("size", size)
        .put("seed", seed)
        .put("mean", num(stats.mean))
        .put("std", num(stats.std))
        .put("max", num(stats.max))
        .put("summary", &line);
    write(&dir.join("eval.txt"), kv.as_str())?;
    let mut t = Table::new(&["sample", "loss"]);
    for (i, l) in stats.losses.iter().enumerate() {
        t.row(&[i.to_string(), num(*l)]);
    }
    t.write(&dir.join("mc_losses.csv"))?;

    if heatmap_grid >= 2 {
        let grid = disc_grid(heatmap_grid);
        let values = residual::sq_norms(&model, &ckpt.params, &grid)?;
        let mut h = Table::new(&["x", "y", "sq_norm"]);
        for (p, v) in grid.iter().zip(&values) {
            h.floats(&[p[0], p[1], *v]);
        }
        h.write(&dir.join("residual_heatmap.csv"))?;
    }
    Ok(EvalOutput { stats, line })
}

/// What `intersect` runs on: a trained checkpoint or an analytic fixture.
pub enum Target {
    Checkpoint(Box<Checkpoint>),
    Fixture(Fixture),
}

impl Target {
    /// `fixture:<name>` or a checkpoint path.
    pub fn parse(arg: &str) -> Result<Self> {
        match arg.strip_prefix("fixture:") {
            Some(name) => Ok(Target::Fixture(Fixture::from_name(name)?)),
            None => Ok(Target::Checkpoint(Box::new(Checkpoint::load(Path::new(arg))?))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Target::Checkpoint(c) => c.model.curve.label.clone(),
            Target::Fixture(f) => format!("fixture:{}", f.name()),
        }
    }
}

const RECORD_HEADER: [&str; 14] = [
    "p1_x",
    "p1_y",
    "p2_x",
    "p2_y",
    "X",
    "Y1",
    "Y2",
    "Y3",
    "residual",
    "jac_det",
    "normalized_det",
    "newton_iters",
    "transverse",
    "sign",
];

fn record_row(r: &DoublePointRecord) -> Result<Vec<f64>> {
    let transverse = r.normalized_det.abs() >= TRANSVERSALITY_FLOOR;
    let sign = if transverse { intersection_sign(r)? } else { 0 };
    let mut row = vec![r.p1[0], r.p1[1], r.p2[0], r.p2[1]];
    row.extend(r.image);
    row.extend([r.residual, r.jac_det, r.normalized_det, r.newton_iters as f64, f64::from(u8::from(transverse))]);
    row.push(f64::from(sign));
    Ok(row)
}

/// Runs the double-point search. Writes `proximity.csv` (log₁₀ of the
/// self-proximity field on a grid of side `field_grid`; skipped when 0),
/// `candidates.csv`, `records.csv` (transverse and non-transverse) and
/// `intersect.txt`.
pub fn cmd_intersect(
    target: &Target,
    params: &SearchParams,
    field_grid: usize,
    dir: &Path,
) -> Result<IntersectionReport> {
    let model;
    let map: &dyn DiscMap = match target {
        Target::Fixture(f) => f,
        Target::Checkpoint(c) => {
            model = c.surface()?;
            &ModelMap::new(&model, &c.params)
        }
    };
    let report = hyperdisc::intersections::find_double_points(map, params)?;
    prepare(dir)?;

    if field_grid > 0 {
        let field = self_proximity(map, field_grid, params.epsilon)?;
        let mut t = Table::new(&["x", "y", "log10_distance"]);
        for (p, v) in field.grid.iter().zip(&field.values) {
            t.floats(&[p[0], p[1], v.log10()]);
        }
        t.write(&dir.join("proximity.csv"))?;
    }

    let mut c = Table::new(&["i", "j", "p1_x", "p1_y", "p2_x", "p2_y", "image_distance"]);
    for cand in &report.candidates {
        let mut row = vec![cand.i.to_string(), cand.j.to_string()];
        row.extend([cand.p1[0], cand.p1[1], cand.p2[0], cand.p2[1], cand.image_distance].map(num));
        c.row(&row);
    }
    c.write(&dir.join("candidates.csv"))?;

    let mut r = Table::new(&RECORD_HEADER);
    for rec in report.records.iter().chain(&report.non_transverse) {
        r.floats(&record_row(rec)?);
    }
    r.write(&dir.join("records.csv"))?;

    let mut kv = KeyValues::default();
    kv.put("target", target.label())
        .put("grid", params.grid_res)
        .put("epsilon", num(params.epsilon))
        .put("tau", num(params.tau))
        .put("candidates", report.candidates.len())
        .put("newton_failures", report.newton_failures)
        .put("records", report.records.len())
        .put("non_transverse", report.non_transverse.len())
        .put("self_intersection", report.self_intersection);
    write(&dir.join("intersect.txt"), kv.as_str())?;
    Ok(report)
}

/// Signed count from a `records.csv`; `None` if any record is not
/// transverse.
pub fn signed_count_from_records(text: &str) -> Result<Option<i32>> {
    let (header, rows) = read_floats(text)?;
    let col =
        |name: &str| header.iter().position(|h| h == name).with_context(|| format!("records have no `{name}` column"));
    let (t, s) = (col("transverse")?, col("sign")?);
    if rows.iter().any(|r| r[t] == 0.0) {
        return Ok(None);
    }
    Ok(Some(rows.iter().map(|r| r[s] as i32).sum()))
}

/// Reads `mean`, `std` and `max` from an `eval.txt`.
pub fn mc_from_eval(text: &str) -> Result<McStats> {
    let get = |key: &str| -> Result<f64> {
        text.lines()
            .filter_map(|l| l.split_once(" = "))
            .find(|(k, _)| *k == key)
            .with_context(|| format!("eval summary has no `{key}`"))?
            .1
            .parse()
            .with_context(|| format!("bad `{key}` value"))
    };
    Ok(McStats { mean: get("mean")?, std: get("std")?, max: get("max")?, losses: Vec::new() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub knot: String,
    /// `None` when a double point was not transverse.
    pub self_intersection: Option<i32>,
    /// `None` for knots without a stored polynomial.
    pub verdict: Option<Verdict>,
    pub mc: Option<String>,
}

impl ReportRow {
    pub fn header() -> &'static str {
        "knot | self-intersection | HOMFLY term | MC loss"
    }
}

impl std::fmt::Display for ReportRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.self_intersection.map_or("?".to_string(), |d| d.to_string());
        let v = self.verdict.as_ref().map_or("no polynomial stored".to_string(), ToString::to_string);
        write!(f, "{} | {} | {} | {}", self.knot, d, v, self.mc.as_deref().unwrap_or("-"))
    }
}

/// One summary row: the knot, its signed double-point count, the HOMFLY
/// verdict and (if given) Monte Carlo statistics. Without `records` the
/// search runs with `params`.
pub fn cmd_report(
    ckpt: &Checkpoint,
    records: Option<&Path>,
    eval: Option<&Path>,
    params: &SearchParams,
) -> Result<ReportRow> {
    let d = match records {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            signed_count_from_records(&text)?
        }
        None => {
            let model = ckpt.surface()?;
            let rep = hyperdisc::intersections::find_double_points(&ModelMap::new(&model, &ckpt.params), params)?;
            rep.non_transverse.is_empty().then_some(rep.self_intersection)
        }
    };
    let mc = match eval {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(mc_from_eval(&text)?.to_string())
        }
        None => None,
    };
    let knot = ckpt.model.curve.label.clone();
    let verdict = homfly_table(&knot).ok().map(|p| consistency_check(d, &p));
    Ok(ReportRow { knot, self_intersection: d, verdict, mc })
}

/// Writes `surface_<model>_vertices.csv` (disc coordinates then image
/// coordinates) and `surface_<model>_faces.csv`.
pub fn cmd_export_surface(
    ckpt: &Checkpoint,
    rings: usize,
    sectors: usize,
    kind: MeshModel,
    dir: &Path,
) -> Result<Mesh> {
    let model = ckpt.surface()?;
    let mesh = polar_mesh(&model, &ckpt.params, rings, sectors, kind)?;
    prepare(dir)?;
    let name = match kind {
        MeshModel::Halfspace => "halfspace",
        MeshModel::Ball => "ball",
    };
    let n = model.ambient_dim();
    let mut header: Vec<String> = vec!["u".into(), "v".into()];
    match kind {
        MeshModel::Halfspace => {
            header.push("X".into());
            header.extend((1..=n).map(|k| format!("Y{k}")));
        }
        MeshModel::Ball => header.extend((0..=n).map(|k| format!("B{k}"))),
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut v = Table::new(&header);
    for (p, x) in mesh.domain.iter().zip(&mesh.vertices) {
        let mut row = p.to_vec();
        row.extend(x);
        v.floats(&row);
    }
    v.write(&dir.join(format!("surface_{name}_vertices.csv")))?;
    let mut f = Table::new(&["a", "b", "c"]);
    for t in &mesh.faces {
        f.row(&t.map(|i| i.to_string()));
    }
    f.write(&dir.join(format!("surface_{name}_faces.csv")))?;
    Ok(mesh)
}

/// Directory next to a checkpoint file.
pub fn beside(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
