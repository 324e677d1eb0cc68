use ndarray::Array2;
use pual_cli::envelope::ModelEnvelope;
use pual_core::{
    fit_model, Hyperparams, KernelSpec, KnnParams, ModelKind, PUDataset, StopCriteria,
    TrainingProblem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn block(rng: &mut ChaCha8Rng, rows: usize, shift: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, 3), |(_, j)| {
        rng.random_range(-1.0..1.0) * (j + 1) as f64 + shift
    })
}

#[test]
fn saved_models_predict_bit_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let data = PUDataset::from_blocks(block(&mut rng, 12, 1.0), block(&mut rng, 30, -0.5)).unwrap();
    let hp = Hyperparams {
        cp: 1.0,
        cu: 0.2,
        lambda: 0.7,
        mu1: 1.0,
        knn: KnnParams::new(4, 2.0),
    };
    let problem = TrainingProblem::new(&data, 4, true).unwrap();
    let probe = block(&mut rng, 50, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let kernels = [
        KernelSpec::Rbf { width: 1.5 },
        KernelSpec::LinearViaB { b_params: hp },
    ];
    let stop = StopCriteria {
        max_iter: 300,
        ..StopCriteria::default()
    };
    for kind in ModelKind::ALL {
        let specs: Vec<Option<&KernelSpec>> = if kind.is_kernel() {
            kernels.iter().map(Some).collect()
        } else {
            vec![None]
        };
        for spec in specs {
            let (model, report) = fit_model(&problem, kind, &hp, spec, &stop).unwrap();
            let path = dir.path().join(format!("{kind}.toml"));
            ModelEnvelope::new(kind, hp, &model, report.as_ref())
                .save(&path)
                .unwrap();
            let loaded = ModelEnvelope::load(&path).unwrap().classifier().unwrap();
            let a = model.predict(probe.view()).unwrap();
            let b = loaded.predict(probe.view()).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.scores), bits(&b.scores), "{kind} {spec:?}");
            assert_eq!(a.labels, b.labels);
        }
    }
}
