//! Unseen-class classifiers trained on constructed samples, top-1 accuracy
//! and the baseline construction strategies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{replaced_dims, ConstructedSample, Provenance, SourcePlan};
use crate::data::{AttributeTable, ClassId, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::linear::{train_linear, SparseLinearModel, TrainParams};
use crate::relation::RelationMatrix;

/// ℓ2 strength of the one-vs-rest classifiers.
pub const DEFAULT_OVR_RIDGE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    NearestCentroid,
    #[default]
    LinearOvr,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest_centroid" => Ok(ClassifierKind::NearestCentroid),
            "linear_ovr" => Ok(ClassifierKind::LinearOvr),
            other => Err(Error::Config(format!(
                "unknown classifier '{other}' (expected nearest_centroid or linear_ovr)"
            ))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::NearestCentroid => "nearest_centroid",
            ClassifierKind::LinearOvr => "linear_ovr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    M1,
    M2,
    M3,
    #[serde(rename = "IBSC")]
    Ibsc,
    #[serde(rename = "IBSC_S")]
    IbscS,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::M1, Strategy::M2, Strategy::M3, Strategy::Ibsc, Strategy::IbscS];

    /// Offset added to the run seed for this strategy's RNG streams.
    pub fn index(self) -> u64 {
        self as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::M1 => "M1",
            Strategy::M2 => "M2",
            Strategy::M3 => "M3",
            Strategy::Ibsc => "IBSC",
            Strategy::IbscS => "IBSC_S",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum UnseenClassifier {
    NearestCentroid {
        classes: Vec<ClassId>,
        centroids: Vec<Array1<f64>>,
    },
    LinearOvr {
        classes: Vec<ClassId>,
        /// Empty when only one class was trained.
        models: Vec<SparseLinearModel>,
    },
}

impl UnseenClassifier {
    pub fn classes(&self) -> &[ClassId] {
        match self {
            UnseenClassifier::NearestCentroid { classes, .. } | UnseenClassifier::LinearOvr { classes, .. } => classes,
        }
    }

    /// Predicted class; ties go to the lower class id.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<ClassId> {
        match self {
            UnseenClassifier::NearestCentroid { classes, centroids } => {
                if centroids[0].len() != x.len() {
                    return Err(Error::Dimension {
                        expected: centroids[0].len(),
                        actual: x.len(),
                    });
                }
                let mut best = (f64::INFINITY, classes[0]);
                for (c, mu) in classes.iter().zip(centroids) {
                    let d: f64 = mu.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, *c);
                    }
                }
                Ok(best.1)
            }
            UnseenClassifier::LinearOvr { classes, models } => {
                if models.is_empty() {
                    return Ok(classes[0]);
                }
                let mut best = (f64::NEG_INFINITY, classes[0]);
                for (c, m) in classes.iter().zip(models) {
                    let f = m.decision_value(x)?;
                    if f > best.0 {
                        best = (f, *c);
                    }
                }
                Ok(best.1)
            }
        }
    }
}

/// Trains on rows `x` labeled `labels`; every class in `classes` needs at
/// least one row.
pub fn train_unseen_classifier(
    x: ArrayView2<'_, f64>,
    labels: &[ClassId],
    classes: &BTreeSet<ClassId>,
    kind: ClassifierKind,
    seed: u64,
) -> Result<UnseenClassifier> {
    if labels.len() != x.nrows() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            actual: labels.len(),
        });
    }
    if classes.is_empty() {
        return Err(Error::Validation("no classes to train".into()));
    }
    if let Some(&l) = labels.iter().find(|l| !classes.contains(l)) {
        return Err(Error::Validation(format!("training label {l} is not a target class")));
    }
    for &c in classes {
        if !labels.contains(&c) {
            return Err(Error::EmptyClass(c));
        }
    }
    let class_list: Vec<ClassId> = classes.iter().copied().collect();
    match kind {
        ClassifierKind::NearestCentroid => {
            let centroids = class_list
                .iter()
                .map(|&c| {
                    let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
                    let mut mu = Array1::zeros(x.ncols());
                    for &r in &rows {
                        mu += &x.row(r);
                    }
                    mu / rows.len() as f64
                })
                .collect();
            Ok(UnseenClassifier::NearestCentroid {
                classes: class_list,
                centroids,
            })
        }
        ClassifierKind::LinearOvr => {
            if class_list.len() == 1 {
                return Ok(UnseenClassifier::LinearOvr {
                    classes: class_list,
                    models: Vec::new(),
                });
            }
            let models = class_list
                .par_iter()
                .map(|&c| {
                    let y: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                    let params = TrainParams {
                        lambda: 0.0,
                        ridge: DEFAULT_OVR_RIDGE,
                        seed: seed.wrapping_add(c as u64),
                        ..TrainParams::default()
                    };
                    train_linear(x, &y, &params)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(UnseenClassifier::LinearOvr {
                classes: class_list,
                models,
            })
        }
    }
}

fn predictions(classifier: &UnseenClassifier, x: ArrayView2<'_, f64>) -> Result<Vec<ClassId>> {
    x.rows().into_iter().map(|r| classifier.predict(r)).collect()
}

/// Fraction of rows predicted as their label.
pub fn top1_accuracy(classifier: &UnseenClassifier, x: ArrayView2<'_, f64>, labels: &[ClassId]) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::EmptyTestSet);
    }
    if labels.len() != x.nrows() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            actual: labels.len(),
        });
    }
    let hits = predictions(classifier, x)?
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy restricted to the rows of each label present.
pub fn per_class_accuracy(
    classifier: &UnseenClassifier,
    x: ArrayView2<'_, f64>,
    labels: &[ClassId],
) -> Result<BTreeMap<ClassId, f64>> {
    if x.nrows() == 0 {
        return Err(Error::EmptyTestSet);
    }
    let pred = predictions(classifier, x)?;
    let mut tally: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (p, l) in pred.iter().zip(labels) {
        let e = tally.entry(*l).or_default();
        e.0 += usize::from(p == l);
        e.1 += 1;
    }
    Ok(tally.into_iter().map(|(c, (h, n))| (c, h as f64 / n as f64)).collect())
}

/// Stacks constructed samples into a training matrix, ordered by class and
/// then by their order in each class list.
pub fn stack_samples(samples: &BTreeMap<ClassId, Vec<ConstructedSample>>) -> Result<(Array2<f64>, Vec<ClassId>)> {
    let all: Vec<&ConstructedSample> = samples.values().flatten().collect();
    let p = all
        .first()
        .map(|s| s.feature.len())
        .ok_or_else(|| Error::Validation("no constructed samples".into()))?;
    let mut x = Array2::zeros((all.len(), p));
    for (i, s) in all.iter().enumerate() {
        if s.feature.len() != p {
            return Err(Error::Dimension {
                expected: p,
                actual: s.feature.len(),
            });
        }
        x.row_mut(i).assign(&ArrayView1::from(&s.feature[..]));
    }
    Ok((x, all.iter().map(|s| s.target_class).collect()))
}

/// Real samples of the unseen classes.
pub fn unseen_test_set(dataset: &Dataset, split: &SplitSpec) -> (Array2<f64>, Vec<ClassId>) {
    let rows = dataset.indices_in(split.unseen());
    let labels = rows.iter().map(|&r| dataset.labels()[r]).collect();
    (dataset.select_rows(&rows), labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    M1,
    M2,
    M3,
}

impl BaselineMode {
    pub fn strategy(self) -> Strategy {
        match self {
            BaselineMode::M1 => Strategy::M1,
            BaselineMode::M2 => Strategy::M2,
            BaselineMode::M3 => Strategy::M3,
        }
    }
}

/// Per-dimension minimum and maximum over the seen-class samples.
pub fn seen_feature_ranges(dataset: &Dataset, split: &SplitSpec) -> Result<Vec<(f64, f64)>> {
    let rows = dataset.indices_in(split.seen());
    if rows.is_empty() {
        return Err(Error::Validation("no seen-class samples".into()));
    }
    Ok((0..dataset.p())
        .map(|j| {
            rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = dataset.features()[[r, j]];
                (lo.min(v), hi.max(v))
            })
        })
        .collect())
}

fn draw_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Baseline constructions from the primary source `S1` of each unseen class.
///
/// `M1` relabels the `S1` samples unchanged. `M2` overwrites `r` uniformly
/// chosen dims per sample, where `r` is the number of dims the splice would
/// replace; `M3` overwrites exactly those dims. Overwrites are uniform draws
/// within the seen data's per-dimension range.
pub fn baseline_construct(
    dataset: &Dataset,
    attrs: &AttributeTable,
    split: &SplitSpec,
    relation: &RelationMatrix,
    plan: &SourcePlan,
    mode: BaselineMode,
    seed: u64,
) -> Result<BTreeMap<ClassId, Vec<ConstructedSample>>> {
    let ranges = seen_feature_ranges(dataset, split)?;
    let p = dataset.p();
    let mut out = BTreeMap::new();
    for &u in split.unseen() {
        let s1 = plan.get(u)?.primary();
        let bases = dataset.indices_of(s1);
        if bases.is_empty() {
            return Err(Error::EmptyClass(s1));
        }
        let replaced: Vec<usize> = replaced_dims(attrs, split, relation, u, s1).into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(mode.strategy().index()));
        rng.set_stream(u as u64);
        let samples = bases
            .iter()
            .map(|&base| {
                let mut feature = dataset.row(base).to_vec();
                let mut provenance = vec![Provenance::Retained; p];
                let dims: Vec<usize> = match mode {
                    BaselineMode::M1 => Vec::new(),
                    BaselineMode::M2 => index::sample(&mut rng, p, replaced.len()).into_vec(),
                    BaselineMode::M3 => replaced.clone(),
                };
                for j in dims {
                    feature[j] = draw_in(&mut rng, ranges[j]);
                    provenance[j] = Provenance::Drawn;
                }
                ConstructedSample {
                    feature,
                    target_class: u,
                    base_sample: base,
                    provenance,
                    screen_score: None,
                }
            })
            .collect();
        out.insert(u, samples);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub top1: f64,
    /// Keyed by class id in decimal.
    pub per_class: BTreeMap<String, f64>,
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Trains on `samples` and scores on the real unseen-class data.
pub fn evaluate_samples(
    dataset: &Dataset,
    split: &SplitSpec,
    samples: &BTreeMap<ClassId, Vec<ConstructedSample>>,
    kind: ClassifierKind,
    seed: u64,
) -> Result<StrategyResult> {
    let (x, labels) = stack_samples(samples)?;
    let classifier = train_unseen_classifier(x.view(), &labels, split.unseen(), kind, seed)?;
    let (tx, tl) = unseen_test_set(dataset, split);
    Ok(StrategyResult {
        top1: top1_accuracy(&classifier, tx.view(), &tl)?,
        per_class: per_class_accuracy(&classifier, tx.view(), &tl)?
            .into_iter()
            .map(|(c, a)| (c.to_string(), a))
            .collect(),
        train_samples: labels.len(),
        test_samples: tl.len(),
    })
}

/// JSON report: one key per strategy plus `config` and `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub strategies: BTreeMap<String, StrategyResult>,
    pub config: serde_json::Value,
    pub seed: u64,
}

impl EvalReport {
    pub fn top1(&self, s: Strategy) -> Option<f64> {
        self.strategies.get(s.name()).map(|r| r.top1)
    }
}

/// Inputs shared by all strategies.
#[derive(Clone, Copy)]
pub struct StrategyInputs<'a> {
    pub dataset: &'a Dataset,
    pub attrs: &'a AttributeTable,
    pub split: &'a SplitSpec,
    pub relation: &'a RelationMatrix,
    pub plan: &'a SourcePlan,
    /// All spliced samples per unseen class.
    pub constructed: &'a BTreeMap<ClassId, Vec<ConstructedSample>>,
    /// Samples kept by screening.
    pub screened: &'a BTreeMap<ClassId, Vec<ConstructedSample>>,
}

/// Evaluates `strategies` concurrently with the same classifier kind; each
/// strategy derives its seeds from `seed` plus its index.
pub fn compare_strategies(
    inputs: &StrategyInputs<'_>,
    strategies: &[Strategy],
    kind: ClassifierKind,
    seed: u64,
) -> Result<BTreeMap<Strategy, StrategyResult>> {
    let results = strategies
        .par_iter()
        .map(|&s| {
            let train_seed = seed.wrapping_add(s.index());
            let result = match s {
                Strategy::Ibsc => evaluate_samples(inputs.dataset, inputs.split, inputs.constructed, kind, train_seed),
                Strategy::IbscS => evaluate_samples(inputs.dataset, inputs.split, inputs.screened, kind, train_seed),
                Strategy::M1 | Strategy::M2 | Strategy::M3 => {
                    let mode = match s {
                        Strategy::M1 => BaselineMode::M1,
                        Strategy::M2 => BaselineMode::M2,
                        _ => BaselineMode::M3,
                    };
                    let samples = baseline_construct(
                        inputs.dataset,
                        inputs.attrs,
                        inputs.split,
                        inputs.relation,
                        inputs.plan,
                        mode,
                        seed,
                    )?;
                    evaluate_samples(inputs.dataset, inputs.split, &samples, kind, train_seed)
                }
            }?;
            Ok((s, result))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().collect())
}
