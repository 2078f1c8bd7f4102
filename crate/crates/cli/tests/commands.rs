use std::path::Path;
use std::process::Command;

use hyperdisc::boundary::preset_curve;
use hyperdisc::intersections::{Fixture, SearchParams};
use hyperdisc::invariants::Verdict;
use hyperdisc::network::init_params;
use hyperdisc::{InitScheme, ModelConfig, Preset};
use hyperdisc_cli::checkpoint::{Checkpoint, Metadata};
use hyperdisc_cli::commands::{self, Target};
use hyperdisc_cli::export::{read_floats, MeshModel};
use hyperdisc_cli::ExperimentConfig;

const TINY: &str = r#"
out_dir = "tiny"

[curve]
knot = "unknot"
perturbation = { sigma = 0.1, modes = 3, seed = 1 }

[model]
width = 6
depth = 2
init_seed = 5

[train]
profile = "custom"
n_data = 128
batch = 32
adam_epochs = 3
n_lbfgs = 128
lbfgs_iters = 5
seed = 2
"#;

fn zero_unknot() -> Checkpoint {
    let model = ModelConfig::standard(preset_curve(Preset::Unknot), 8, 2).unwrap();
    let params = vec![0.0; model.arch.param_count()];
    let meta = Metadata { phase: "init".into(), best_loss: None, init_seed: 0, train_seed: 0, termination: None };
    Checkpoint::new(model, params, meta)
}

fn relabelled(label: &str) -> Checkpoint {
    let mut c = zero_unknot();
    c.model.curve.label = label.into();
    c
}

fn records_with_signs(dir: &Path, signs: &[i32]) -> std::path::PathBuf {
    let mut text = String::from("transverse,sign\n");
    for s in signs {
        text.push_str(&format!("1,{s}\n"));
    }
    let p = dir.join("records.csv");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn zero_epoch_training_keeps_initialisation() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("adam_epochs = 3", "adam_epochs = 0").replace("lbfgs_iters = 5", "lbfgs_iters = 0");
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let out = commands::cmd_train(&cfg, tmp.path(), &mut |_| {}).unwrap();
    let model = cfg.model_config().unwrap();
    let init = init_params(&model.arch, InitScheme::GlorotZeroHead, 5).0;
    let saved = Checkpoint::load(&tmp.path().join("checkpoint.toml")).unwrap();
    assert_eq!(saved.params, init);
    assert_eq!(saved, out.checkpoint);
    assert_eq!(saved.meta.phase, "init");
}

#[test]
fn training_writes_artefacts_and_is_deterministic() {
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = commands::cmd_train(&cfg, a.path(), &mut |_| {}).unwrap();
    let rb = commands::cmd_train(&cfg, b.path(), &mut |_| {}).unwrap();
    assert!(ra.report.same_run(&rb.report));
    for f in ["checkpoint.toml", "config.toml", "losses.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(ExperimentConfig::load(&a.path().join("config.toml")).unwrap(), cfg);
    let report = std::fs::read_to_string(a.path().join("train_report.txt")).unwrap();
    assert!(report.contains("adam_epochs = 3") && report.contains("batch = 32"));
    let losses = std::fs::read_to_string(a.path().join("losses.csv")).unwrap();
    assert_eq!(losses.lines().filter(|l| l.starts_with("adam,")).count(), 3);
    let ckpt = Checkpoint::load(&a.path().join("checkpoint.toml")).unwrap();
    assert_eq!(ckpt.meta.phase, "lbfgs");
    // the saved parameters reproduce the reported loss
    let model = ckpt.surface().unwrap();
    let pool = hyperdisc::training::lbfgs_pool(&cfg.train.resolve());
    let loss = hyperdisc::residual::loss(&model, &ckpt.params, &pool).unwrap();
    assert_eq!(loss, ra.report.best_loss);
}

#[test]
fn full_profile_echoes_reference_hyperparameters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&TINY.replace("\"custom\"", "\"full\"")).unwrap();
    let t = cfg.train.resolve();
    // overrides still apply on top of the profile
    assert_eq!((t.n_data, t.adam_epochs), (128, 3));
    let plain = ExperimentConfig::parse(
        "out_dir = \"f\"\n[curve]\nknot = \"unknot\"\n[model]\ninit_seed = 0\n[train]\nprofile = \"full\"\nseed = 0\n",
    )
    .unwrap();
    let t = plain.train.resolve();
    assert_eq!(
        (t.n_data, t.batch, t.adam_epochs, t.eta0, t.eta_min, t.n_lbfgs, t.lbfgs_iters, t.history),
        (16384, 1024, 10_000, 1e-3, 1e-5, 16384, 10_000, 100)
    );
    assert_eq!((t.delta_g, t.delta_theta), (1e-12, 1e-14));
    assert_eq!(plain.width(), 64);
    std::fs::write(tmp.path().join("c.toml"), plain.to_toml()).unwrap();
    assert_eq!(ExperimentConfig::load(&tmp.path().join("c.toml")).unwrap(), plain);
}

#[test]
fn eval_of_exact_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let c = zero_unknot();
    let res = commands::cmd_eval(&c, 4, 512, 1, 32, tmp.path()).unwrap();
    assert!(res.stats.mean <= 1e-18 && res.stats.max <= 1e-18);
    let small = commands::cmd_eval(&c, 2, 16, 1, 0, tmp.path()).unwrap();
    assert!(small.stats.std.is_finite());
    let summary = std::fs::read_to_string(tmp.path().join("eval.txt")).unwrap();
    assert_eq!(commands::mc_from_eval(&summary).unwrap().mean, small.stats.mean);
    let (h, rows) = read_floats(&std::fs::read_to_string(tmp.path().join("residual_heatmap.csv")).unwrap()).unwrap();
    assert_eq!(h, ["x", "y", "sq_norm"]);
    assert!(rows.iter().all(|r| r[2] <= 1e-18));
}

#[test]
fn eval_line_format() {
    let tmp = tempfile::tempdir().unwrap();
    let res = commands::cmd_eval(&zero_unknot(), 3, 64, 0, 0, tmp.path()).unwrap();
    let parts: Vec<&str> = res.line.split(' ').collect();
    assert_eq!(parts.len(), 4, "{}", res.line);
    assert_eq!(parts[1], "±");
    let sci = |s: &str| {
        let (m, e) = s.split_once('e').unwrap();
        m.len() == 4 && m.parse::<f64>().is_ok() && (e.starts_with('-') || e.starts_with('+')) && e.len() == 3
    };
    assert!(sci(parts[0]) && sci(parts[2]));
    assert!(parts[3].starts_with('(') && parts[3].ends_with(')') && sci(&parts[3][1..parts[3].len() - 1]));
}

#[test]
fn intersect_on_fixtures_and_geodesic_disc() {
    let tmp = tempfile::tempdir().unwrap();
    let params = SearchParams { grid_res: 96, ..SearchParams::default() };
    for f in Fixture::ALL {
        let dir = tmp.path().join(f.name());
        let rep = commands::cmd_intersect(&Target::Fixture(f), &params, 24, &dir).unwrap();
        assert_eq!(rep.records.len(), f.crossings().len(), "{}", f.name());
        assert_eq!(rep.self_intersection, f.signed_count());
        let text = std::fs::read_to_string(dir.join("records.csv")).unwrap();
        assert_eq!(commands::signed_count_from_records(&text).unwrap(), Some(f.signed_count()));
        assert!(dir.join("proximity.csv").exists() && dir.join("candidates.csv").exists());
    }
    let rep = commands::cmd_intersect(&Target::Checkpoint(Box::new(zero_unknot())), &params, 0, tmp.path()).unwrap();
    assert!(rep.records.is_empty() && rep.candidates.is_empty());
    assert!(Target::parse("fixture:nope").is_err());
}

#[test]
fn report_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("3_1", vec![1], "CONSISTENT (2a²)"),
        ("5_2", vec![1, 1, 1], "CONSISTENT (−a⁶)"),
        ("square", vec![1, -1], "CONSISTENT (5)"),
        ("3_1", vec![-1], "NOT PREDICTED"),
    ];
    for (knot, signs, expected) in cases {
        let rec = records_with_signs(tmp.path(), &signs);
        let row = commands::cmd_report(&relabelled(knot), Some(&rec), None, &SearchParams::default()).unwrap();
        assert_eq!(row.verdict.unwrap().to_string(), expected, "{knot}");
    }
    std::fs::write(tmp.path().join("records.csv"), "transverse,sign\n1,1\n0,0\n").unwrap();
    let row =
        commands::cmd_report(&relabelled("3_1"), Some(&tmp.path().join("records.csv")), None, &SearchParams::default())
            .unwrap();
    assert_eq!(row.verdict, Some(Verdict::Indeterminate));
    assert_eq!(row.self_intersection, None);

    let rec = records_with_signs(tmp.path(), &[1]);
    let row = commands::cmd_report(&relabelled("7_4"), Some(&rec), None, &SearchParams::default()).unwrap();
    assert!(row.verdict.is_none());
    assert!(row.to_string().contains("no polynomial stored"));

    commands::cmd_eval(&zero_unknot(), 2, 32, 0, 0, tmp.path()).unwrap();
    let params = SearchParams { grid_res: 48, ..SearchParams::default() };
    let row = commands::cmd_report(&zero_unknot(), None, Some(&tmp.path().join("eval.txt")), &params).unwrap();
    assert_eq!(row.self_intersection, Some(0));
    assert_eq!(row.verdict.unwrap().to_string(), "CONSISTENT (1)");
    assert!(row.mc.unwrap().contains(" ± "));
}

#[test]
fn ball_mesh_of_geodesic_disc() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = commands::cmd_export_surface(&zero_unknot(), 8, 24, MeshModel::Ball, tmp.path()).unwrap();
    assert_eq!(mesh.vertices.len(), 1 + 8 * 24);
    assert_eq!(mesh.faces.len(), 24 + 2 * 7 * 24);
    for v in &mesh.vertices {
        assert!(v.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1.0 + 1e-12);
    }
    for v in &mesh.vertices[1 + 7 * 24..] {
        assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= 1e-12);
    }
    let (h, rows) =
        read_floats(&std::fs::read_to_string(tmp.path().join("surface_ball_vertices.csv")).unwrap()).unwrap();
    assert_eq!(h, ["u", "v", "B0", "B1", "B2", "B3"]);
    for (r, v) in rows.iter().zip(&mesh.vertices) {
        assert_eq!(&r[2..], &v[..]);
    }
    let half = commands::cmd_export_surface(&zero_unknot(), 4, 8, MeshModel::Halfspace, tmp.path()).unwrap();
    assert!(half.vertices[1 + 3 * 8..].iter().all(|v| v[0] == 0.0));
    assert!(tmp.path().join("surface_halfspace_faces.csv").exists());
}

fn hyperdisc(args: &[&str], out_root: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_hyperdisc")).args(args).env("HYPERDISC_OUT", out_root).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn binary_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    hyperdisc(&["train", cfg.to_str().unwrap()], root);
    let ckpt = root.join("tiny/checkpoint.toml");
    assert!(ckpt.exists());
    let ck = ckpt.to_str().unwrap();
    let line = hyperdisc(&["eval", ck, "--samples", "2", "--size", "64", "--heatmap-grid", "0"], root);
    assert!(line.contains(" ± "));

    let runs: Vec<String> = ["1", "3"]
        .iter()
        .map(|t| {
            let dir = root.join(format!("t{t}"));
            let args =
                ["--threads", t, "intersect", ck, "--grid", "48", "--field-grid", "16", "--out", dir.to_str().unwrap()];
            hyperdisc(&args, root);
            std::fs::read_to_string(dir.join("records.csv")).unwrap()
                + &std::fs::read_to_string(dir.join("proximity.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let report = hyperdisc(&["report", ck, "--records", root.join("t1/records.csv").to_str().unwrap()], root);
    assert!(report.lines().nth(1).unwrap().starts_with("unknot | "));
    hyperdisc(&["export-surface", ck, "--model", "halfspace", "--rings", "3", "--sectors", "6"], root);
    assert!(root.join("surface_halfspace_vertices.csv").exists());
    let fixture = hyperdisc(&["intersect", "fixture:one-crossing", "--grid", "64", "--field-grid", "0"], root);
    assert!(fixture.contains("self-intersection number 1"));
    assert!(root.join("fixture-one-crossing/records.csv").exists());
}

#[test]
fn binary_reports_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hyperdisc"))
        .args(["eval", "missing.toml"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap();
            n += 1;
        }
    }
    assert!(n >= 3);
}
