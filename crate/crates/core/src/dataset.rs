//! PU and ground-truth datasets, CSV I/O, the synthetic trifurcate generator,
//! the two train/test split protocols and z-score standardization.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth or predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// Sign rule for scores: zero counts as positive.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// A non-negative rational `num/den`, used for sampling fractions so that
/// subset sizes are computed exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::invalid("fraction", "zero denominator"));
        }
        let g = gcd(num, den);
        Ok(Fraction {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numerator(self) -> u64 {
        self.num
    }

    pub fn denominator(self) -> u64 {
        self.den
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `1 - self`; requires `self ≤ 1`.
    pub fn complement(self) -> Self {
        debug_assert!(self.num <= self.den);
        Fraction::new(self.den - self.num, self.den).expect("nonzero denominator")
    }

    /// `round(self · count)` with halves rounded up, computed in integers.
    pub fn round_half_up(self, count: usize) -> usize {
        let count = count as u128;
        let (num, den) = (self.num as u128, self.den as u128);
        ((2 * num * count + den) / (2 * den)) as usize
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Fraction {
    type Err = Error;

    /// Accepts `a/b` or a plain decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("fraction", format!("cannot parse `{s}`"));
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            return Fraction::new(a, b);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 15 || (int.is_empty() && frac.is_empty()) {
            return Err(bad());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_v: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        Fraction::new(num, den)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Training data: a labeled-positive block and an unlabeled block over the
/// same `m` features. The stacked matrix (positives first) is `X_pu`.
#[derive(Debug, Clone, PartialEq)]
pub struct PUDataset {
    features_p: Array2<f64>,
    features_u: Array2<f64>,
    feature_names: Vec<String>,
}

impl PUDataset {
    pub fn new(
        features_p: Array2<f64>,
        features_u: Array2<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let m = feature_names.len();
        if m == 0 {
            return Err(Error::Malformed("dataset has no feature columns".into()));
        }
        if features_p.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: features_p.ncols(),
            });
        }
        if features_u.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: features_u.ncols(),
            });
        }
        if features_p.nrows() == 0 {
            return Err(Error::EmptyLabeledSet);
        }
        if features_u.nrows() == 0 {
            return Err(Error::NoUnlabeled);
        }
        if features_p
            .iter()
            .chain(features_u.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Malformed("non-finite feature value".into()));
        }
        Ok(PUDataset {
            features_p,
            features_u,
            feature_names,
        })
    }

    /// Convenience constructor with generated names `f1..fm`.
    pub fn from_blocks(features_p: Array2<f64>, features_u: Array2<f64>) -> Result<Self> {
        let names = default_names(features_p.ncols());
        PUDataset::new(features_p, features_u, names)
    }

    pub fn features_p(&self) -> ArrayView2<'_, f64> {
        self.features_p.view()
    }

    pub fn features_u(&self) -> ArrayView2<'_, f64> {
        self.features_u.view()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_p(&self) -> usize {
        self.features_p.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.features_u.nrows()
    }

    pub fn n(&self) -> usize {
        self.n_p() + self.n_u()
    }

    pub fn m(&self) -> usize {
        self.feature_names.len()
    }

    /// `X_pu`: labeled positives stacked above the unlabeled rows.
    pub fn stacked(&self) -> Array2<f64> {
        concatenate(Axis(0), &[self.features_p.view(), self.features_u.view()])
            .expect("blocks share a column count")
    }

    /// Keeps the given rows of each block, in the order given.
    pub fn select(&self, rows_p: &[usize], rows_u: &[usize]) -> Result<PUDataset> {
        PUDataset::new(
            self.features_p.select(Axis(0), rows_p),
            self.features_u.select(Axis(0), rows_u),
            self.feature_names.clone(),
        )
    }

    /// Applies `f` to both blocks (used for standardization).
    pub fn map_features(
        &self,
        mut f: impl FnMut(ArrayView2<f64>) -> Result<Array2<f64>>,
    ) -> Result<PUDataset> {
        PUDataset::new(
            f(self.features_p.view())?,
            f(self.features_u.view())?,
            self.feature_names.clone(),
        )
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let (names, rows) = read_table(reader, |tok, line| match tok {
            "p" => Ok(true),
            "u" => Ok(false),
            other => Err(Error::InvalidLabel {
                line,
                token: other.to_string(),
            }),
        })?;
        let m = names.len();
        let (p, u): (Vec<_>, Vec<_>) = rows.into_iter().partition(|(_, lab)| *lab);
        let block = |rows: Vec<(Vec<f64>, bool)>| {
            let n = rows.len();
            let flat: Vec<f64> = rows.into_iter().flat_map(|(r, _)| r).collect();
            Array2::from_shape_vec((n, m), flat).expect("row lengths checked")
        };
        PUDataset::new(block(p), block(u), names)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_writer(std::io::BufWriter::new(file))
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        write_header(&mut w, &self.feature_names)?;
        for row in self.features_p.rows() {
            write_row(&mut w, row.iter(), "p")?;
        }
        for row in self.features_u.rows() {
            write_row(&mut w, row.iter(), "u")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Data with ground truth, used for evaluation and as the source of splits.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDataset {
    features: Array2<f64>,
    labels: Vec<Label>,
    feature_names: Vec<String>,
}

impl EvalDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<Label>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                found: features.ncols(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("non-finite feature value".into()));
        }
        Ok(EvalDataset {
            features,
            labels,
            feature_names,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    fn subset(&self, rows: &[usize]) -> EvalDataset {
        EvalDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let (names, rows) = read_table(reader, |tok, line| match tok {
            "1" | "+1" => Ok(Label::Positive),
            "-1" => Ok(Label::Negative),
            other => Err(Error::InvalidLabel {
                line,
                token: other.to_string(),
            }),
        })?;
        let n = rows.len();
        let m = names.len();
        let mut labels = Vec::with_capacity(n);
        let mut flat = Vec::with_capacity(n * m);
        for (r, l) in rows {
            flat.extend(r);
            labels.push(l);
        }
        let features = Array2::from_shape_vec((n, m), flat).expect("row lengths checked");
        EvalDataset::new(features, labels, names)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_writer(std::io::BufWriter::new(file))
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        write_header(&mut w, &self.feature_names)?;
        for (row, label) in self.features.rows().into_iter().zip(&self.labels) {
            let tok = if label.is_positive() { "1" } else { "-1" };
            write_row(&mut w, row.iter(), tok)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn default_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("f{i}")).collect()
}

type Table<L> = (Vec<String>, Vec<(Vec<f64>, L)>);

fn read_table<L>(
    reader: impl Read,
    parse_label: impl Fn(&str, usize) -> Result<L>,
) -> Result<Table<L>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Malformed(e.to_string()))?
        .clone();
    let ncols = header.len();
    if ncols < 2 || header.get(ncols - 1) != Some("label") {
        return Err(Error::Malformed(
            "header must end with a `label` column after at least one feature".into(),
        ));
    }
    let names: Vec<String> = header.iter().take(ncols - 1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != ncols {
            return Err(Error::RaggedRow {
                line,
                expected: ncols,
                found: rec.len(),
            });
        }
        let label = parse_label(&rec[ncols - 1], line)?;
        let mut values = Vec::with_capacity(ncols - 1);
        for (j, tok) in rec.iter().take(ncols - 1).enumerate() {
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::NonNumericFeature {
                        line,
                        column: names[j].clone(),
                        token: tok.to_string(),
                    })
                }
            }
        }
        rows.push((values, label));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((names, rows))
}

/// Reads a headed CSV of features for scoring. A trailing `label` column,
/// if present, is ignored.
pub fn read_features(reader: impl Read) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Malformed(e.to_string()))?
        .clone();
    let ncols = header.len();
    let m = if header.get(ncols.saturating_sub(1)) == Some("label") {
        ncols - 1
    } else {
        ncols
    };
    if m == 0 {
        return Err(Error::Malformed("no feature columns".into()));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != ncols {
            return Err(Error::RaggedRow {
                line,
                expected: ncols,
                found: rec.len(),
            });
        }
        for (j, tok) in rec.iter().take(m).enumerate() {
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::NonNumericFeature {
                        line,
                        column: header[j].to_string(),
                        token: tok.to_string(),
                    })
                }
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(Array2::from_shape_vec((n, m), values).expect("n rows of m values"))
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_features(std::fs::File::open(path)?)
}

fn write_header(w: &mut impl Write, names: &[String]) -> std::io::Result<()> {
    for name in names {
        write!(w, "{name},")?;
    }
    writeln!(w, "label")
}

fn write_row<'a>(
    w: &mut impl Write,
    values: impl Iterator<Item = &'a f64>,
    label: &str,
) -> std::io::Result<()> {
    // `{}` on f64 prints the shortest representation that parses back exactly.
    for v in values {
        write!(w, "{v},")?;
    }
    writeln!(w, "{label}")
}

/// Seeded sampling used by the generator and the split protocols.
///
/// The stream is ChaCha20 seeded through `seed_from_u64`; Gaussian draws use
/// the Box–Muller transform and consume uniforms in pairs.
pub(crate) struct Sampler {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Sampler {
    pub(crate) fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub(crate) fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle, walking from the back.
    pub(crate) fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.random_range(0..=i);
            items.swap(i, j);
        }
    }

    /// `k` indices drawn uniformly without replacement from `0..n`.
    pub(crate) fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx.truncate(k);
        idx
    }
}

/// Parameters of the synthetic trifurcate generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Both coordinates of the second positive cluster's center.
    pub mean_p2: f64,
    pub seed: u64,
}

pub const SYNTH_CLUSTER_SIZE: usize = 200;
pub const SYNTH_NEGATIVES: usize = 400;
pub const SYNTH_VARIANCE: f64 = 50.0;
pub const SYNTH_NEGATIVE_COVARIANCE: f64 = 0.2;
pub const SYNTH_NEAR_MEAN: f64 = 15.0;

/// Draws the 800-row, two-feature trifurcate dataset.
///
/// Rows come out in generation order: 200 positives around `(15, 15)`, 200
/// positives around `(mean_p2, mean_p2)`, then 400 negatives around the
/// origin with covariance `[[50, 0.2], [0.2, 50]]`.
pub fn synth_generate(spec: &SynthSpec) -> Result<EvalDataset> {
    if !spec.mean_p2.is_finite() {
        return Err(Error::invalid("mean_p2", "must be finite"));
    }
    let mut sampler = Sampler::new(spec.seed);
    let n = 2 * SYNTH_CLUSTER_SIZE + SYNTH_NEGATIVES;
    let mut features = Array2::<f64>::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);

    // Lower Cholesky factor of the negative covariance.
    let l11 = SYNTH_VARIANCE.sqrt();
    let l21 = SYNTH_NEGATIVE_COVARIANCE / l11;
    let l22 = (SYNTH_VARIANCE - l21 * l21).sqrt();

    let clusters = [
        (SYNTH_NEAR_MEAN, SYNTH_CLUSTER_SIZE, Label::Positive),
        (spec.mean_p2, SYNTH_CLUSTER_SIZE, Label::Positive),
        (0.0, SYNTH_NEGATIVES, Label::Negative),
    ];
    let mut row = 0;
    for (center, count, label) in clusters {
        for _ in 0..count {
            let z1 = sampler.standard_normal();
            let z2 = sampler.standard_normal();
            let (x1, x2) = match label {
                Label::Positive => (l11 * z1, l11 * z2),
                Label::Negative => (l11 * z1, l21 * z1 + l22 * z2),
            };
            features[[row, 0]] = center + x1;
            features[[row, 1]] = center + x2;
            labels.push(label);
            row += 1;
        }
    }
    EvalDataset::new(features, labels, default_names(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitMode {
    /// A random training share; a fraction of its positives become labeled.
    SingleTrainingSet { labeled_fraction: Fraction },
    /// A fraction of all positives is labeled; the rest of the data forms an
    /// unlabeled pool that is split between training and test.
    CaseControl { gamma_prime: Fraction },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub test_fraction: Fraction,
    pub seed: u64,
}

impl SplitSpec {
    pub fn single_training_set(seed: u64) -> Self {
        SplitSpec {
            mode: SplitMode::SingleTrainingSet {
                labeled_fraction: Fraction::new(1, 4).unwrap(),
            },
            test_fraction: Fraction::new(3, 10).unwrap(),
            seed,
        }
    }

    pub fn case_control(gamma_prime: Fraction, seed: u64) -> Self {
        SplitSpec {
            mode: SplitMode::CaseControl { gamma_prime },
            test_fraction: Fraction::new(3, 10).unwrap(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let tf = self.test_fraction;
        if tf.numerator() == 0 || tf.numerator() >= tf.denominator() {
            return Err(Error::invalid("test_fraction", "must lie in (0, 1)"));
        }
        let (name, f) = match self.mode {
            SplitMode::SingleTrainingSet { labeled_fraction } => {
                ("labeled_fraction", labeled_fraction)
            }
            SplitMode::CaseControl { gamma_prime } => ("gamma_prime", gamma_prime),
        };
        if f.numerator() == 0 || f.numerator() > f.denominator() {
            return Err(Error::invalid(name, "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Output of a split: PU training data, a ground-truth test set, and the
/// hidden labels of the training unlabeled block (for diagnostics only).
#[derive(Debug, Clone)]
pub struct Split {
    pub train: PUDataset,
    pub test: EvalDataset,
    pub hidden_labels: Vec<Label>,
}

impl Split {
    /// Fraction of training positives that are labeled.
    pub fn label_frequency(&self) -> f64 {
        let hidden_pos = self
            .hidden_labels
            .iter()
            .filter(|l| l.is_positive())
            .count();
        let n_p = self.train.n_p();
        n_p as f64 / (n_p + hidden_pos) as f64
    }
}

/// Dispatches on the split mode.
pub fn split(data: &EvalDataset, spec: &SplitSpec) -> Result<Split> {
    match spec.mode {
        SplitMode::SingleTrainingSet { .. } => split_single_training_set(data, spec),
        SplitMode::CaseControl { .. } => split_case_control(data, spec),
    }
}

fn assemble_split(
    data: &EvalDataset,
    mut labeled: Vec<usize>,
    mut unlabeled: Vec<usize>,
    mut test: Vec<usize>,
) -> Result<Split> {
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    test.sort_unstable();
    let train = PUDataset::new(
        data.features.select(Axis(0), &labeled),
        data.features.select(Axis(0), &unlabeled),
        data.feature_names.clone(),
    )?;
    Ok(Split {
        train,
        test: data.subset(&test),
        hidden_labels: unlabeled.iter().map(|&i| data.labels[i]).collect(),
    })
}

/// Training share first, then a labeled subset of the training positives.
pub fn split_single_training_set(data: &EvalDataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let SplitMode::SingleTrainingSet { labeled_fraction } = spec.mode else {
        return Err(Error::invalid("mode", "expected single-training-set"));
    };
    if data.n_positive() == 0 {
        return Err(Error::NoLabeledPositives);
    }
    let n = data.len();
    let mut sampler = Sampler::new(spec.seed);
    let n_train = spec.test_fraction.complement().round_half_up(n);
    let mut order: Vec<usize> = (0..n).collect();
    sampler.shuffle(&mut order);
    let test = order.split_off(n_train);
    let train_rows = order;

    let train_pos: Vec<usize> = train_rows
        .iter()
        .copied()
        .filter(|&i| data.labels[i].is_positive())
        .collect();
    let n_labeled = labeled_fraction.round_half_up(train_pos.len());
    if n_labeled == 0 {
        return Err(Error::NoLabeledPositives);
    }
    let chosen = sampler.sample_indices(train_pos.len(), n_labeled);
    let mut is_labeled = vec![false; n];
    for c in chosen {
        is_labeled[train_pos[c]] = true;
    }
    let (labeled, unlabeled): (Vec<usize>, Vec<usize>) =
        train_rows.into_iter().partition(|&i| is_labeled[i]);
    if unlabeled.is_empty() {
        return Err(Error::NoUnlabeled);
    }
    assemble_split(data, labeled, unlabeled, test)
}

/// Labeled positives first, then the remaining pool is split train/test.
pub fn split_case_control(data: &EvalDataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let SplitMode::CaseControl { gamma_prime } = spec.mode else {
        return Err(Error::invalid("mode", "expected case-control"));
    };
    let positives: Vec<usize> = (0..data.len())
        .filter(|&i| data.labels[i].is_positive())
        .collect();
    if positives.is_empty() {
        return Err(Error::NoLabeledPositives);
    }
    let mut sampler = Sampler::new(spec.seed);
    let n_labeled = gamma_prime.round_half_up(positives.len());
    if n_labeled == 0 {
        return Err(Error::NoLabeledPositives);
    }
    let chosen = sampler.sample_indices(positives.len(), n_labeled);
    let mut is_labeled = vec![false; data.len()];
    for c in chosen {
        is_labeled[positives[c]] = true;
    }
    let (labeled, mut pool): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| is_labeled[i]);
    if pool.is_empty() {
        return Err(Error::NoUnlabeled);
    }
    sampler.shuffle(&mut pool);
    let n_train = spec.test_fraction.complement().round_half_up(pool.len());
    if n_train == 0 {
        return Err(Error::NoUnlabeled);
    }
    let test = pool.split_off(n_train);
    assemble_split(data, labeled, pool, test)
}

/// Column-wise z-scoring with population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    /// Columns that were constant in the fitting data; they map to zero.
    pub constant: Vec<bool>,
}

impl Standardizer {
    /// A pass-through transform over `m` columns.
    pub fn identity(m: usize) -> Self {
        Standardizer {
            means: vec![0.0; m],
            std_devs: vec![1.0; m],
            constant: vec![false; m],
        }
    }

    pub fn fit(features: ArrayView2<f64>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let m = features.ncols();
        let mut means = Vec::with_capacity(m);
        let mut std_devs = Vec::with_capacity(m);
        let mut constant = Vec::with_capacity(m);
        for col in features.columns() {
            let first = col[0];
            let is_const = col.iter().all(|&v| v == first);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            means.push(if is_const { first } else { mean });
            std_devs.push(if is_const { 1.0 } else { var.sqrt() });
            constant.push(is_const);
        }
        Ok(Standardizer {
            means,
            std_devs,
            constant,
        })
    }

    /// Fits on the stacked training block `X_pu`.
    pub fn fit_pu(train: &PUDataset) -> Result<Self> {
        Self::fit(train.stacked().view())
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn is_identity(&self) -> bool {
        self.means.iter().all(|&v| v == 0.0)
            && self.std_devs.iter().all(|&v| v == 1.0)
            && self.constant.iter().all(|c| !c)
    }

    pub fn apply(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.ncols(),
            });
        }
        let mut out = features.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if self.constant[j] {
                col.fill(0.0);
            } else {
                let (mu, sd) = (self.means[j], self.std_devs[j]);
                col.mapv_inplace(|v| (v - mu) / sd);
            }
        }
        Ok(out)
    }

    pub fn apply_pu(&self, data: &PUDataset) -> Result<PUDataset> {
        data.map_features(|x| self.apply(x))
    }
}

/// Both free functions mirror the methods; kept for call sites that read better
/// with a verb.
pub fn fit_standardizer(train: &PUDataset) -> Result<Standardizer> {
    Standardizer::fit_pu(train)
}

pub fn apply_standardizer(s: &Standardizer, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    s.apply(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pu(text: &str) -> Result<PUDataset> {
        PUDataset::from_reader(text.as_bytes())
    }

    #[test]
    fn loads_minimal_file() {
        let d = pu("f1,f2,label\n0.0,0.0,p\n1.0,1.0,u").unwrap();
        assert_eq!((d.n_p(), d.n_u(), d.m()), (1, 1, 2));
        assert_eq!(d.features_u()[[0, 1]], 1.0);
    }

    #[test]
    fn load_errors() {
        assert!(
            matches!(pu("f1,label\n0.5,x"), Err(Error::InvalidLabel { token, .. }) if token == "x")
        );
        assert!(matches!(pu("f1,f2,label\n"), Err(Error::EmptyDataset)));
        assert!(matches!(
            pu("f1,label\nabc,p\n1,u"),
            Err(Error::NonNumericFeature { .. })
        ));
        assert!(matches!(
            pu("f1,label\nnan,p\n1,u"),
            Err(Error::NonNumericFeature { .. })
        ));
        assert!(matches!(
            pu("f1,f2,label\n1,p\n1,2,u"),
            Err(Error::RaggedRow { line: 2, .. })
        ));
        assert!(matches!(pu("f1,y\n1,p"), Err(Error::Malformed(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = PUDataset::from_blocks(
            array![[0.1, 1.0 / 3.0], [-2.5e-300, 7.0]],
            array![[std::f64::consts::PI, -0.0], [1e17, 2.0f64.sqrt()]],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.to_writer(&mut buf).unwrap();
        let back = PUDataset::from_reader(buf.as_slice()).unwrap();
        assert_eq!(d, back);
        let mut buf2 = Vec::new();
        back.to_writer(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn fraction_parsing_and_rounding() {
        let f: Fraction = "7/17".parse().unwrap();
        assert_eq!((f.numerator(), f.denominator()), (7, 17));
        let q: Fraction = "0.25".parse().unwrap();
        assert_eq!(q, Fraction::new(1, 4).unwrap());
        assert_eq!(q.round_half_up(280), 70);
        // half rounds up: 0.5 * 3 = 1.5 -> 2
        assert_eq!(Fraction::new(1, 2).unwrap().round_half_up(3), 2);
        assert_eq!(Fraction::new(7, 10).unwrap().round_half_up(800), 560);
        assert!("abc".parse::<Fraction>().is_err());
        assert!("1/0".parse::<Fraction>().is_err());
    }

    #[test]
    fn synth_shape_and_determinism() {
        let spec = SynthSpec {
            mean_p2: 50.0,
            seed: 7,
        };
        let a = synth_generate(&spec).unwrap();
        assert_eq!(a.len(), 800);
        assert_eq!(a.n_positive(), 400);
        assert_eq!(a.labels().iter().filter(|l| !l.is_positive()).count(), 400);
        let b = synth_generate(&spec).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.to_writer(&mut ba).unwrap();
        b.to_writer(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let c = synth_generate(&SynthSpec {
            mean_p2: 0.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!(c.len(), 800);
        assert!(synth_generate(&SynthSpec {
            mean_p2: f64::NAN,
            seed: 1
        })
        .is_err());
    }

    #[test]
    fn single_training_set_counts() {
        let data = synth_generate(&SynthSpec {
            mean_p2: 50.0,
            seed: 3,
        })
        .unwrap();
        let s = split_single_training_set(&data, &SplitSpec::single_training_set(11)).unwrap();
        assert_eq!(s.train.n(), 560);
        assert_eq!(s.test.len(), 240);
        let train_pos = s.train.n_p() + s.hidden_labels.iter().filter(|l| l.is_positive()).count();
        assert_eq!(
            s.train.n_p(),
            Fraction::new(1, 4).unwrap().round_half_up(train_pos)
        );
    }

    #[test]
    fn tiny_labeled_fraction_fails() {
        let data = synth_generate(&SynthSpec {
            mean_p2: 50.0,
            seed: 3,
        })
        .unwrap();
        let mut spec = SplitSpec::single_training_set(1);
        spec.mode = SplitMode::SingleTrainingSet {
            labeled_fraction: Fraction::new(1, 10_000).unwrap(),
        };
        assert!(matches!(
            split(&data, &spec),
            Err(Error::NoLabeledPositives)
        ));
    }

    #[test]
    fn case_control_empty_pool() {
        let data = EvalDataset::new(
            array![[1.0], [2.0], [3.0]],
            vec![Label::Positive; 3],
            default_names(1),
        )
        .unwrap();
        let spec = SplitSpec::case_control(Fraction::new(1, 1).unwrap(), 0);
        assert!(matches!(
            split_case_control(&data, &spec),
            Err(Error::NoUnlabeled)
        ));
    }

    #[test]
    fn standardizer_examples() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        let t = s.apply(x.view()).unwrap();
        assert_eq!(t, array![[-1.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(
            s.apply(array![[1.0, 2.0, 3.0]].view()),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
        assert!(Standardizer::identity(2).is_identity());
    }

    #[test]
    fn feature_reader_drops_label_column() {
        let x = read_features("a,b,label\n1,2,1\n3,4,-1\n".as_bytes()).unwrap();
        assert_eq!(x, array![[1.0, 2.0], [3.0, 4.0]]);
        let y = read_features("a,b\n1,2\n".as_bytes()).unwrap();
        assert_eq!(y, array![[1.0, 2.0]]);
        assert!(matches!(
            read_features("a\n".as_bytes()),
            Err(Error::EmptyDataset)
        ));
    }
}
