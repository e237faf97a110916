use hbfill::inversion::{add_noise, estimate_params, relative_error};
use hbfill::solver::run_to_wall_touch;
use hbfill::surrogate::{l2_distance, TrainingMetadata};
use hbfill::{Config, Domain, InversionOptions, Model, NoiseSpec, Observation, Params, Reduction, Samples};

const NX: usize = 41;

fn domain() -> Domain<f64> {
    Domain::from_bounds((10.0, 60.0), (10.0, 60.0))
}

fn solve(b: f64, s: f64) -> hbfill::Profile {
    run_to_wall_touch(&Params::new(b, s, 1.0), &Config::with_nx(NX))
        .unwrap()
        .final_profile
}

fn samples(couples: &[(f64, f64)]) -> Samples {
    let profiles: Vec<_> = couples.iter().map(|&(b, s)| solve(b, s)).collect();
    Samples::from_profiles(&profiles, TrainingMetadata::default()).unwrap()
}

fn grid(k: usize) -> Vec<(f64, f64)> {
    let at = |i: usize| 10.0 + 50.0 * i as f64 / (k - 1) as f64;
    (0..k).flat_map(|i| (0..k).map(move |j| (at(i), at(j)))).collect()
}

fn model() -> Model {
    Model::train(&samples(&grid(6)), domain(), 5, Reduction::Pca { p: 4 }).unwrap()
}

#[test]
fn surrogate_tracks_solver_off_grid() {
    let model = model();
    let held_out = samples(&[(17.0, 44.0), (33.0, 21.0), (52.0, 52.0), (41.0, 13.0)]);
    let report = model.validate(&held_out).unwrap();
    assert_eq!(report.errors.len(), 4);
    let zero = vec![0.0; NX];
    for (e, h) in report.errors.iter().zip(&held_out.outputs) {
        assert!(*e < 0.05 * l2_distance(h, &zero), "error {e}");
    }
}

#[test]
fn saved_model_reloads_identically() {
    let model = model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, model);
    let p = Params::new(27.5, 38.25, 1.0);
    let (a, b) = (model.evaluate(&p).unwrap(), back.evaluate(&p).unwrap());
    assert!(a.h.iter().zip(&b.h).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn inversion_recovers_surrogate_profile() {
    let model = model();
    let truth = Params::new(35.0, 25.0, 1.0);
    let obs = Observation::new(model.evaluate(&truth).unwrap(), Some(truth));
    let result = estimate_params(&obs, &model, &InversionOptions::default()).unwrap();
    assert!(result.converged);
    assert!(relative_error(&truth, &result.estimate) < 1e-4, "{:?}", result.estimate);
}

#[test]
fn inversion_of_noisy_solver_profile() {
    let model = model();
    let truth = Params::new(35.0, 25.0, 1.0);
    let noisy = add_noise(&solve(truth.b, truth.s), &NoiseSpec { alpha: 0.02, seed: 5 });
    let obs = Observation::new(noisy, Some(truth));
    let result = estimate_params(&obs, &model, &InversionOptions::default()).unwrap();
    assert!(result.converged);
    assert!(relative_error(&truth, &result.estimate) < 0.2, "{:?}", result.estimate);
}

#[test]
fn single_precision_solver_agrees() {
    let wide = solve(30.0, 30.0);
    let narrow = run_to_wall_touch(
        &hbfill::RheoParams::<f32>::new(30.0, 30.0, 1.0),
        &hbfill::SolverConfig::<f32>::with_nx(NX),
    )
    .unwrap()
    .final_profile;
    let narrow: Vec<f64> = narrow.h.iter().map(|&v| f64::from(v)).collect();
    let zero = vec![0.0; NX];
    assert!(l2_distance(&narrow, &wide.h) < 1e-3 * l2_distance(&wide.h, &zero));
}
