//! Shared setup for the benchmarks in `benches/`.

use hyperdisc::boundary::{perturb, preset_curve};
use hyperdisc::network::init_params;
use hyperdisc::training::sample_disc;
use hyperdisc::{InitScheme, ModelConfig, Preset, SurfaceModel};

/// A perturbed unknot model with initialised parameters and `points`
/// collocation points.
pub fn workload(width: usize, points: usize) -> (SurfaceModel, Vec<f64>, Vec<[f64; 2]>) {
    let curve = perturb(&preset_curve(Preset::Unknot), 0.1, 3, 1).expect("embedded curve");
    let model = SurfaceModel::new(ModelConfig::standard(curve, width, 4).expect("config")).expect("model");
    let params = init_params(model.arch(), InitScheme::GlorotZeroHead, 0).0;
    (model, params, sample_disc(points, 0))
}
