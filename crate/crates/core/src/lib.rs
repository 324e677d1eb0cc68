//! Positive-unlabeled learning with an asymmetric loss and a local
//! (graph-Laplacian) constraint, trained by ADMM in linear and kernel form,
//! together with the GLLC baseline and the PUF-score tuning machinery.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gllc;
pub mod learner;
pub mod linalg;
pub mod model;
pub mod problem;
pub mod pual_kernel;
pub mod pual_linear;
pub mod similarity;

pub use dataset::{
    apply_standardizer, fit_standardizer, read_features, read_features_csv, split, synth_generate,
    EvalDataset, Fraction, Label, PUDataset, Split, SplitMode, SplitSpec, Standardizer, SynthSpec,
};
pub use error::{Error, ErrorKind, Result};
pub use evaluation::{
    f1_score, greedy_refine, grid_search, kfold_cv, puf_score, ConfusionCounts, GridSpec,
    PufScenario, TuneResult,
};
pub use gllc::{fit_gllc_kernel, fit_gllc_kernel_with_gram, fit_gllc_linear, GllcModel};
pub use learner::{
    fit_model, Candidate, Classifier, KernelChoice, ModelKind, ModelLearner, PuLearner,
};
pub use model::{Prediction, SolveReport, StopCriteria};
pub use problem::TrainingProblem;
pub use pual_kernel::{
    fit_kernel, fit_kernel_with_gram, predict_kernel, read_gram_csv, GramBlocks, KernelModel,
    KernelSpec,
};
pub use pual_linear::{fit, predict_linear, Hyperparams, LinearModel};
pub use similarity::{laplacian, mutual_knn_weights, KnnParams, LaplacianMatrix, SimilarityGraph};
