//! F1 and PUF scores, stratified k-fold cross-validation, exhaustive grid
//! search and greedy ±10% refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, PUDataset, Sampler};
use crate::error::{Error, Result};
use crate::learner::{Candidate, PuLearner};
use crate::problem::TrainingProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_labels(predicted: &[Label], truth: &[Label]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let mut c = ConfusionCounts::default();
        for (p, t) in predicted.iter().zip(truth) {
            match (p.is_positive(), t.is_positive()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.r#fn += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.r#fn + self.tn
    }
}

/// `2tp / (2tp + fp + fn)`, or 0 when nothing is positive in either labeling.
pub fn f1_score(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.r#fn;
    if denom == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Which population estimates `P[f(x) ≥ 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PufScenario {
    /// Labeled and unlabeled rows are one sample: the pool is `X_pu`.
    SingleTrainingSet,
    /// The unlabeled set is its own sample: the pool is `X_u`.
    CaseControl,
}

impl PufScenario {
    pub fn name(self) -> &'static str {
        match self {
            PufScenario::SingleTrainingSet => "single-training-set",
            PufScenario::CaseControl => "case-control",
        }
    }

    /// The denominator pool given predictions on both blocks.
    pub fn pool<'a>(self, labeled: &'a [Label], unlabeled: &'a [Label]) -> Vec<Label> {
        match self {
            PufScenario::SingleTrainingSet => labeled.iter().chain(unlabeled).copied().collect(),
            PufScenario::CaseControl => unlabeled.to_vec(),
        }
    }
}

impl std::str::FromStr for PufScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-training-set" | "single" => Ok(PufScenario::SingleTrainingSet),
            "case-control" => Ok(PufScenario::CaseControl),
            _ => Err(Error::invalid(
                "scenario",
                format!("unknown scenario `{s}`"),
            )),
        }
    }
}

/// `recall² / p̂` with recall over the labeled positives and `p̂` the
/// positive rate on the scenario's pool; 0 when `p̂ = 0`.
pub fn puf_score(labeled: &[Label], pool: &[Label], _scenario: PufScenario) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let rate =
        |xs: &[Label]| xs.iter().filter(|l| l.is_positive()).count() as f64 / xs.len() as f64;
    let p_hat = rate(pool);
    if p_hat == 0.0 {
        return Ok(0.0);
    }
    let recall = rate(labeled);
    Ok(recall * recall / p_hat)
}

/// Stratified fold ids for the labeled-positive and unlabeled rows: each
/// stratum is shuffled and dealt round-robin.
pub fn fold_assignment(
    n_p: usize,
    n_u: usize,
    folds: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if folds < 2 {
        return Err(Error::invalid(
            "folds",
            format!("need at least 2 folds, got {folds}"),
        ));
    }
    if folds > n_p {
        return Err(Error::FoldWithoutLabeledPositive {
            fold: n_p,
            n_p,
            folds,
        });
    }
    let mut sampler = Sampler::new(seed);
    let mut deal = |n: usize| {
        let mut order: Vec<usize> = (0..n).collect();
        sampler.shuffle(&mut order);
        let mut ids = vec![0; n];
        for (pos, &row) in order.iter().enumerate() {
            ids[row] = pos % folds;
        }
        ids
    };
    let p = deal(n_p);
    let u = deal(n_u);
    Ok((p, u))
}

struct Fold {
    problem: TrainingProblem,
    held_out: PUDataset,
}

/// Fold problems prepared once and reused for every candidate.
pub struct CrossValidator<'a, L: PuLearner> {
    learner: &'a L,
    scenario: PufScenario,
    folds: Vec<Fold>,
}

impl<'a, L: PuLearner> CrossValidator<'a, L> {
    pub fn new(
        train: &PUDataset,
        learner: &'a L,
        folds: usize,
        scenario: PufScenario,
        seed: u64,
    ) -> Result<Self> {
        let (fp, fu) = fold_assignment(train.n_p(), train.n_u(), folds, seed)?;
        let rows = |ids: &[usize], f: usize, inside: bool| -> Vec<usize> {
            (0..ids.len())
                .filter(|&i| (ids[i] == f) == inside)
                .collect()
        };
        let mut prepared = Vec::with_capacity(folds);
        for f in 0..folds {
            let held_out = train.select(&rows(&fp, f, true), &rows(&fu, f, true))?;
            let fit_on = train.select(&rows(&fp, f, false), &rows(&fu, f, false))?;
            if scenario == PufScenario::CaseControl && held_out.n_u() == 0 {
                return Err(Error::EmptyPool);
            }
            let problem = TrainingProblem::new(&fit_on, learner.knn(), learner.standardize())?;
            prepared.push(Fold { problem, held_out });
        }
        Ok(CrossValidator {
            learner,
            scenario,
            folds: prepared,
        })
    }

    pub fn folds(&self) -> usize {
        self.folds.len()
    }

    /// Mean held-out PUF score.
    pub fn try_mean_puf(&self, c: &Candidate) -> Result<f64> {
        let mut total = 0.0;
        for fold in &self.folds {
            let (p, u) = self.learner.fit_predict(&fold.problem, c, &fold.held_out)?;
            total += puf_score(&p, &self.scenario.pool(&p, &u), self.scenario)?;
        }
        Ok(total / self.folds.len() as f64)
    }

    /// As [`Self::try_mean_puf`], with any failure scored `-∞`.
    pub fn mean_puf(&self, c: &Candidate) -> f64 {
        match self.try_mean_puf(c) {
            Ok(v) if !v.is_nan() => v,
            _ => f64::NEG_INFINITY,
        }
    }
}

pub fn kfold_cv<L: PuLearner>(
    train: &PUDataset,
    candidate: &Candidate,
    learner: &L,
    folds: usize,
    scenario: PufScenario,
    seed: u64,
) -> Result<f64> {
    CrossValidator::new(train, learner, folds, scenario, seed)?.try_mean_puf(candidate)
}

/// Candidate sets for `λ`, `σ` and `C_u`, with `C_p`, `K`, `μ₁` held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub cu_grid: Vec<f64>,
    pub cp: f64,
    pub k: usize,
    pub mu1: f64,
}

fn decades(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

impl GridSpec {
    fn with(lambda_grid: Vec<f64>, sigma_grid: Vec<f64>, cu_grid: Vec<f64>) -> Self {
        GridSpec {
            lambda_grid,
            sigma_grid,
            cu_grid,
            cp: 1.0,
            k: 5,
            mu1: 1.0,
        }
    }

    /// `{1..5} × {0.1, 1, 10, 100}` (all pairwise products) for `λ` and `σ`,
    /// `C_u ∈ {0.01, 0.02, ..., 0.5}`.
    pub fn synthetic() -> Self {
        let mut prod: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
            .iter()
            .flat_map(|&s| (1..=5).map(move |i| i as f64 * s))
            .collect();
        prod.sort_by(f64::total_cmp);
        let cu = (1..=50).map(|i| i as f64 / 100.0).collect();
        Self::with(prod.clone(), prod, cu)
    }

    /// Decades `1e-4 .. 1e4` for `λ` and `σ`, `C_u ∈ {0.01, 0.05, 0.1, 0.3, 0.5}`.
    pub fn real() -> Self {
        Self::with(
            decades(-4, 4),
            decades(-4, 4),
            vec![0.01, 0.05, 0.1, 0.3, 0.5],
        )
    }

    /// Eight decades `1e-3 .. 1e4` for `λ` and `σ`, `C_u ∈ {0.05, 0.10, ..., 0.5}`.
    pub fn reduced() -> Self {
        Self::with(
            decades(-3, 4),
            decades(-3, 4),
            (1..=10).map(|i| i as f64 * 5.0 / 100.0).collect(),
        )
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "synthetic" => Ok(Self::synthetic()),
            "real" => Ok(Self::real()),
            "reduced" => Ok(Self::reduced()),
            _ => Err(Error::invalid(
                "preset",
                format!("unknown grid preset `{name}`"),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("lambda_grid", &self.lambda_grid),
            ("sigma_grid", &self.sigma_grid),
            ("cu_grid", &self.cu_grid),
        ] {
            if grid.is_empty() {
                return Err(Error::invalid(name, "empty grid"));
            }
            if grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid(
                    name,
                    "grid values must be positive and finite",
                ));
            }
        }
        if self.k == 0 {
            return Err(Error::invalid("knn", "K must be at least 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lambda_grid.len() * self.sigma_grid.len() * self.cu_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All triples in lexicographic `(λ, σ, C_u)` order.
    pub fn candidates(&self) -> Vec<Candidate> {
        let sorted = |g: &[f64]| {
            let mut v = g.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (ls, ss, cs) = (
            sorted(&self.lambda_grid),
            sorted(&self.sigma_grid),
            sorted(&self.cu_grid),
        );
        let mut out = Vec::with_capacity(ls.len() * ss.len() * cs.len());
        for &l in &ls {
            for &s in &ss {
                for &c in &cs {
                    out.push(Candidate::new(l, s, c));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub lambda: f64,
    pub sigma: f64,
    pub cu: f64,
    /// Mean held-out PUF; `-inf` for a failed fit.
    pub score: f64,
}

impl ScoredCandidate {
    pub fn new(c: Candidate, score: f64) -> Self {
        ScoredCandidate {
            lambda: c.lambda,
            sigma: c.sigma,
            cu: c.cu,
            score,
        }
    }

    pub fn candidate(&self) -> Candidate {
        Candidate::new(self.lambda, self.sigma, self.cu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: ScoredCandidate,
    pub grid_scores: Vec<ScoredCandidate>,
    /// Starts at the grid winner; strictly increasing scores.
    pub greedy_trace: Vec<ScoredCandidate>,
    pub folds: usize,
    pub seed: u64,
}

/// Higher score wins; equal scores go to the lexicographically smaller
/// candidate.
fn better(a: &ScoredCandidate, b: &ScoredCandidate) -> bool {
    a.score > b.score || (a.score == b.score && a.candidate().lex_cmp(&b.candidate()).is_lt())
}

fn argmax(scored: &[ScoredCandidate]) -> Option<ScoredCandidate> {
    let mut best: Option<ScoredCandidate> = None;
    for s in scored {
        if best.as_ref().is_none_or(|b| better(s, b)) {
            best = Some(*s);
        }
    }
    best
}

/// Scores every candidate of `grid` with `score` (in parallel when the
/// thread pool has more than one thread) and picks the best.
pub fn grid_search_with(
    grid: &GridSpec,
    score: impl Fn(&Candidate) -> f64 + Sync,
    folds: usize,
    seed: u64,
) -> Result<TuneResult> {
    grid.validate()?;
    let grid_scores: Vec<ScoredCandidate> = grid
        .candidates()
        .par_iter()
        .map(|c| {
            let s = score(c);
            ScoredCandidate::new(*c, if s.is_nan() { f64::NEG_INFINITY } else { s })
        })
        .collect();
    let best = argmax(&grid_scores).expect("validated grid is nonempty");
    debug_assert!(grid_scores.iter().all(|s| s.score <= best.score));
    Ok(TuneResult {
        best,
        grid_scores,
        greedy_trace: vec![best],
        folds,
        seed,
    })
}

/// Grid search with mean held-out PUF as the score. The fold assignment is
/// shared by all candidates.
pub fn grid_search<L: PuLearner>(
    train: &PUDataset,
    grid: &GridSpec,
    learner: &L,
    folds: usize,
    scenario: PufScenario,
    seed: u64,
) -> Result<TuneResult> {
    grid.validate()?;
    let cv = CrossValidator::new(train, learner, folds, scenario, seed)?;
    grid_search_with(grid, |c| cv.mean_puf(c), folds, seed)
}

/// Upper bound on neighbor sweeps; never reached on bounded scores in
/// practice.
pub const MAX_GREEDY_SWEEPS: usize = 10_000;

/// The six ±10% moves of one coordinate each.
pub fn neighbors(c: &Candidate) -> [Candidate; 6] {
    [
        Candidate::new(c.lambda * 1.1, c.sigma, c.cu),
        Candidate::new(c.lambda * 0.9, c.sigma, c.cu),
        Candidate::new(c.lambda, c.sigma * 1.1, c.cu),
        Candidate::new(c.lambda, c.sigma * 0.9, c.cu),
        Candidate::new(c.lambda, c.sigma, c.cu * 1.1),
        Candidate::new(c.lambda, c.sigma, c.cu * 0.9),
    ]
}

/// Hill-climbs from `start`: each sweep scores the six neighbors and moves
/// to the best one iff it strictly beats the current score. Moves compound
/// from the current point. Returns the trace, starting with `start`.
pub fn greedy_refine_with(
    start: ScoredCandidate,
    score: impl Fn(&Candidate) -> f64 + Sync,
) -> Vec<ScoredCandidate> {
    let mut trace = vec![start];
    let mut current = start;
    for _ in 0..MAX_GREEDY_SWEEPS {
        let scored: Vec<ScoredCandidate> = neighbors(&current.candidate())
            .par_iter()
            .map(|c| {
                let s = score(c);
                ScoredCandidate::new(*c, if s.is_nan() { f64::NEG_INFINITY } else { s })
            })
            .collect();
        match argmax(&scored) {
            Some(next) if next.score > current.score => {
                trace.push(next);
                current = next;
            }
            _ => break,
        }
    }
    trace
}

/// Greedy refinement with cross-validated PUF, appended to a grid result.
pub fn greedy_refine<L: PuLearner>(
    train: &PUDataset,
    tuned: TuneResult,
    learner: &L,
    scenario: PufScenario,
) -> Result<TuneResult> {
    let cv = CrossValidator::new(train, learner, tuned.folds, scenario, tuned.seed)?;
    let trace = greedy_refine_with(tuned.best, |c| cv.mean_puf(c));
    let best = *trace.last().expect("trace starts with the grid winner");
    Ok(TuneResult {
        best,
        greedy_trace: trace,
        ..tuned
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn f1_examples() {
        let c = |tp, fp, r#fn| ConfusionCounts {
            tp,
            fp,
            r#fn,
            tn: 0,
        };
        assert_eq!(f1_score(&c(1, 0, 0)), 1.0);
        assert_eq!(f1_score(&c(1, 1, 1)), 0.5);
        assert_eq!(f1_score(&c(0, 0, 0)), 0.0);
    }

    #[test]
    fn confusion_from_labels() {
        let c = ConfusionCounts::from_labels(&[P, P, N, N], &[P, N, P, N]).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                fp: 1,
                r#fn: 1,
                tn: 1
            }
        );
        assert_eq!(c.total(), 4);
        assert!(ConfusionCounts::from_labels(&[P], &[]).is_err());
    }

    #[test]
    fn puf_examples() {
        let s = PufScenario::SingleTrainingSet;
        assert_eq!(puf_score(&[P, P], &[P, N], s).unwrap(), 2.0);
        assert_eq!(puf_score(&[N, N], &[P, N, P], s).unwrap(), 0.0);
        assert_eq!(puf_score(&[N], &[N, N], s).unwrap(), 0.0);
        assert!(matches!(
            puf_score(&[], &[P], s),
            Err(Error::EmptyLabeledSet)
        ));
        assert!(matches!(puf_score(&[P], &[], s), Err(Error::EmptyPool)));
    }

    #[test]
    fn pools_differ_by_scenario() {
        let lab = [P, P];
        let unl = [P, N, N, N];
        let single = PufScenario::SingleTrainingSet.pool(&lab, &unl);
        let cc = PufScenario::CaseControl.pool(&lab, &unl);
        assert_eq!(single.len(), 6);
        assert_eq!(cc, unl.to_vec());
        assert_eq!(
            puf_score(&lab, &single, PufScenario::SingleTrainingSet).unwrap(),
            2.0
        );
        assert_eq!(puf_score(&lab, &cc, PufScenario::CaseControl).unwrap(), 4.0);
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let (p, u) = fold_assignment(10, 23, 4, 7).unwrap();
        for f in 0..4 {
            let np = p.iter().filter(|&&x| x == f).count();
            assert!((2..=3).contains(&np));
            let nu = u.iter().filter(|&&x| x == f).count();
            assert!((5..=6).contains(&nu));
        }
        assert_eq!(fold_assignment(10, 23, 4, 7).unwrap(), (p, u));
        assert!(matches!(
            fold_assignment(3, 10, 4, 0),
            Err(Error::FoldWithoutLabeledPositive { .. })
        ));
    }

    #[test]
    fn synthetic_grid_size() {
        let g = GridSpec::synthetic();
        assert_eq!(g.lambda_grid.len(), 20);
        assert_eq!(g.cu_grid.len(), 50);
        assert_eq!(g.len(), 20_000);
        assert_eq!(GridSpec::reduced().len(), 640);
        assert_eq!(GridSpec::real().len(), 405);
    }

    #[test]
    fn single_candidate_grid() {
        let g = GridSpec {
            lambda_grid: vec![2.0],
            sigma_grid: vec![3.0],
            cu_grid: vec![0.1],
            ..GridSpec::synthetic()
        };
        let r = grid_search_with(&g, |_| 0.7, 4, 1).unwrap();
        assert_eq!(r.best.candidate(), Candidate::new(2.0, 3.0, 0.1));
    }

    #[test]
    fn failures_never_win() {
        let g = GridSpec {
            lambda_grid: vec![1.0, 2.0],
            sigma_grid: vec![1.0],
            cu_grid: vec![0.1],
            ..GridSpec::synthetic()
        };
        let r = grid_search_with(
            &g,
            |c| {
                if c.lambda == 1.0 {
                    f64::NEG_INFINITY
                } else {
                    0.1
                }
            },
            4,
            1,
        )
        .unwrap();
        assert_eq!(r.best.lambda, 2.0);
        assert_eq!(r.grid_scores[0].score, f64::NEG_INFINITY);
    }

    #[test]
    fn ties_go_to_smallest_candidate() {
        let g = GridSpec {
            lambda_grid: vec![3.0, 1.0],
            sigma_grid: vec![2.0, 1.0],
            cu_grid: vec![0.2, 0.1],
            ..GridSpec::synthetic()
        };
        let r = grid_search_with(&g, |_| 1.0, 4, 1).unwrap();
        assert_eq!(r.best.candidate(), Candidate::new(1.0, 1.0, 0.1));
    }

    #[test]
    fn greedy_stops_at_local_max() {
        let start = ScoredCandidate::new(Candidate::new(1.0, 1.0, 0.1), 1.0);
        let trace = greedy_refine_with(start, |c| {
            if c.lambda == 1.0 && c.sigma == 1.0 && c.cu == 0.1 {
                1.0
            } else {
                0.5
            }
        });
        assert_eq!(trace, vec![start]);
    }

    #[test]
    fn greedy_follows_planted_chain() {
        // Score rises with λ for three steps, then flattens.
        let score = |c: &Candidate| {
            let steps = (c.lambda.ln() / 1.1f64.ln()).round();
            if c.sigma == 1.0 && c.cu == 0.1 && (0.0..=3.0).contains(&steps) {
                steps
            } else {
                -1.0
            }
        };
        let start = ScoredCandidate::new(Candidate::new(1.0, 1.0, 0.1), 0.0);
        let trace = greedy_refine_with(start, score);
        assert_eq!(trace.len(), 4);
        assert!(trace.windows(2).all(|w| w[1].score > w[0].score));
    }
}
