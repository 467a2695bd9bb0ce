//! Evaluation harness: error rates, ROC/AUC, EER thresholds and the
//! train/test protocols.
//!
//! Scores are attack-positive: a sample is classified as an attack when its
//! score is strictly greater than the threshold. `Unknown` labels are ignored
//! by every metric.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::areas::{self, AreasError, Ranking, SampleSectors, SectorInput, SectorTable};
use crate::imageio::{DatasetManifest, ImageIoError, Label, ManifestEntry};
use crate::roi::{self, RoiError};
use crate::score::{self, ScoreError};
use crate::stats;
use crate::stereo::{self, LightRig, StereoError};

pub const TAG_AUTHENTIC: &str = "none";
pub const TAG_REGULAR: &str = "textured-regular";
pub const TAG_IRREGULAR: &str = "textured-irregular";
pub const TAG_CLEAR: &str = "clear";

/// Number of repetitions of the mixed protocol.
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both bona fide and attack scores are required")]
    SingleClass,
    #[error("score {0} is not finite")]
    InvalidScore(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("manifest tags do not support this scenario: {0}")]
    TagMismatch(String),
    #[error(transparent)]
    Areas(#[from] AreasError),
    #[error(transparent)]
    Stereo(#[from] StereoError),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

fn class_counts(scores: &[(f64, Label)]) -> Result<(usize, usize)> {
    let mut pos = 0;
    let mut neg = 0;
    for &(s, l) in scores {
        if l == Label::Unknown {
            continue;
        }
        if !s.is_finite() {
            return Err(EvalError::InvalidScore(s));
        }
        match l {
            Label::Attack => pos += 1,
            Label::BonaFide => neg += 1,
            Label::Unknown => {}
        }
    }
    Ok((pos, neg))
}

/// A threshold `t` with `lower <= t < upper`.
fn between(lower: f64, upper: f64) -> f64 {
    let mid = lower + (upper - lower) / 2.0;
    if mid < upper {
        mid
    } else {
        lower
    }
}

/// Cumulative counts at each candidate threshold, from "nothing is an
/// attack" to "everything is an attack". Entries are
/// `(threshold, attacks above, bona fide above)`.
fn sweep(scores: &[(f64, Label)]) -> Vec<(f64, usize, usize)> {
    let mut s: Vec<(f64, Label)> = scores
        .iter()
        .copied()
        .filter(|(_, l)| *l != Label::Unknown)
        .collect();
    s.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::with_capacity(s.len() + 1);
    let Some(&(top, _)) = s.first() else {
        return out;
    };
    out.push((top, 0, 0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < s.len() {
        let v = s[i].0;
        while i < s.len() && s[i].0 == v {
            match s[i].1 {
                Label::Attack => tp += 1,
                _ => fp += 1,
            }
            i += 1;
        }
        let thr = match s.get(i) {
            Some(&(next, _)) => between(next, v),
            None => v - v.abs().max(1.0),
        };
        out.push((thr, tp, fp));
    }
    out
}

/// ROC over every distinct score with tied scores grouped into one step,
/// and its trapezoidal area.
pub fn roc_auc(scores: &[(f64, Label)]) -> Result<(Vec<RocPoint>, f64)> {
    let (pos, neg) = class_counts(scores)?;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let pts = sweep(scores);
    // Twice the area in units of (1 / pos) x (1 / neg), accumulated exactly.
    let mut twice_area: u128 = 0;
    for w in pts.windows(2) {
        let (_, tp0, fp0) = w[0];
        let (_, tp1, fp1) = w[1];
        twice_area += (fp1 - fp0) as u128 * (tp0 + tp1) as u128;
    }
    let auc = twice_area as f64 / (2.0 * pos as f64 * neg as f64);
    let roc = pts
        .into_iter()
        .map(|(threshold, tp, fp)| RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold,
        })
        .collect();
    Ok((roc, auc))
}

/// Error rates at a threshold. A rate is `None` when its class is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub apcer: Option<f64>,
    pub bpcer: Option<f64>,
    pub accuracy: Option<f64>,
}

pub fn apcer_bpcer(scores: &[(f64, Label)], threshold: f64) -> ErrorRates {
    let (mut na, mut nb, mut missed, mut false_alarm) = (0usize, 0usize, 0usize, 0usize);
    for &(s, l) in scores {
        match l {
            Label::Attack => {
                na += 1;
                if s <= threshold || s.is_nan() {
                    missed += 1;
                }
            }
            Label::BonaFide => {
                nb += 1;
                if s > threshold {
                    false_alarm += 1;
                }
            }
            Label::Unknown => {}
        }
    }
    let total = na + nb;
    ErrorRates {
        apcer: (na > 0).then(|| missed as f64 / na as f64),
        bpcer: (nb > 0).then(|| false_alarm as f64 / nb as f64),
        accuracy: (total > 0).then(|| (total - missed - false_alarm) as f64 / total as f64),
    }
}

/// Operating point where APCER and BPCER are closest; ties go to the lower
/// BPCER, then the lower threshold. Returns `(threshold, (apcer + bpcer) / 2)`.
pub fn eer_threshold(scores: &[(f64, Label)]) -> Result<(f64, f64)> {
    let (pos, neg) = class_counts(scores)?;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let (p, n) = (pos as u128, neg as u128);
    // Compare |APCER - BPCER| and BPCER exactly on the common denominator.
    let mut best: Option<(u128, u128, f64, usize, usize)> = None;
    for (thr, tp, fp) in sweep(scores) {
        let missed = (pos - tp) as u128;
        let fa = fp as u128;
        let gap = (missed * n).abs_diff(fa * p);
        let key = (gap, fa * p);
        let better = match best {
            None => true,
            Some((g, b, t, _, _)) => key < (g, b) || (key == (g, b) && thr < t),
        };
        if better {
            best = Some((key.0, key.1, thr, pos - tp, fp));
        }
    }
    let (_, _, thr, missed, fa) = best.expect("sweep is non-empty");
    let eer = (missed as f64 / pos as f64 + fa as f64 / neg as f64) / 2.0;
    Ok((thr, eer))
}

// ---------------------------------------------------------------------------
// Protocols

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Train on regular-pattern lenses, test on irregular ones.
    TrainRegularTestIrregular,
    /// The swap of the above.
    TrainIrregularTestRegular,
    /// Mixed lens types, repeated resampled folds; test bona fide are authentic eyes.
    MixedCrossVal,
    /// As `MixedCrossVal`, but test bona fide are clear-lens eyes.
    ClearLensTest,
    /// Tag filters supplied by the caller.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Base,
    WeightedAreas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub scenario: Scenario,
    /// `Custom` only: a sample is in training if it has any of these tags.
    pub train_tags: Vec<String>,
    /// `Custom` only: a sample is tested if it has any of these tags.
    pub test_tags: Vec<String>,
    pub folds: usize,
    pub seed: u64,
    /// Partition the pool into disjoint folds instead of drawing each
    /// training set with replacement.
    pub classic_kfold: bool,
}

impl SplitSpec {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        let folds = match scenario {
            Scenario::MixedCrossVal | Scenario::ClearLensTest => DEFAULT_FOLDS,
            _ => 1,
        };
        Self {
            scenario,
            train_tags: Vec::new(),
            test_tags: Vec::new(),
            folds,
            seed,
            classic_kfold: false,
        }
    }

    pub fn custom(train_tags: Vec<String>, test_tags: Vec<String>) -> Self {
        Self {
            train_tags,
            test_tags,
            ..Self::new(Scenario::Custom, 0)
        }
    }
}

/// Minimal per-sample view the split logic needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub id: String,
    pub label: Label,
    pub tags: Vec<String>,
}

impl SampleMeta {
    fn has(&self, tags: &[&str]) -> bool {
        self.tags.iter().any(|t| tags.contains(&t.as_str()))
    }

    fn is_clear(&self) -> bool {
        self.label == Label::BonaFide && self.has(&[TAG_CLEAR])
    }

    fn is_authentic(&self) -> bool {
        self.label == Label::BonaFide && !self.has(&[TAG_CLEAR])
    }

    fn is_regular(&self) -> bool {
        self.label == Label::Attack && self.has(&[TAG_REGULAR, "regular"])
    }

    fn is_irregular(&self) -> bool {
        self.label == Label::Attack && self.has(&[TAG_IRREGULAR, "irregular"])
    }
}

impl From<&ManifestEntry> for SampleMeta {
    fn from(e: &ManifestEntry) -> Self {
        Self {
            id: e.sample_id.clone(),
            label: e.label,
            tags: e.tags.clone(),
        }
    }
}

/// One train/test split by sample index. `train` may repeat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn fold_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn indices(meta: &[SampleMeta], pred: impl Fn(&SampleMeta) -> bool) -> Vec<usize> {
    (0..meta.len()).filter(|&i| pred(&meta[i])).collect()
}

/// Builds the folds for a split.
pub fn make_folds(meta: &[SampleMeta], spec: &SplitSpec) -> Result<Vec<Fold>> {
    let authentic = indices(meta, SampleMeta::is_authentic);
    let folds = match spec.scenario {
        Scenario::TrainRegularTestIrregular | Scenario::TrainIrregularTestRegular => {
            let regular = indices(meta, SampleMeta::is_regular);
            let irregular = indices(meta, SampleMeta::is_irregular);
            let (train_att, test_att) = if spec.scenario == Scenario::TrainRegularTestIrregular {
                (regular, irregular)
            } else {
                (irregular, regular)
            };
            if train_att.is_empty() || test_att.is_empty() {
                return Err(EvalError::TagMismatch(format!(
                    "need attacks tagged `{TAG_REGULAR}` and `{TAG_IRREGULAR}`"
                )));
            }
            if authentic.len() < 2 {
                return Err(EvalError::TagMismatch(format!(
                    "need at least two bona fide samples tagged `{TAG_AUTHENTIC}`"
                )));
            }
            let mut auth = authentic;
            auth.shuffle(&mut fold_rng(spec.seed, 0));
            let share = train_att.len() as f64 / (train_att.len() + test_att.len()) as f64;
            let n_train = ((auth.len() as f64 * share).round() as usize).clamp(1, auth.len() - 1);
            let mut train = train_att;
            train.extend_from_slice(&auth[..n_train]);
            let mut test = test_att;
            test.extend_from_slice(&auth[n_train..]);
            vec![Fold { train, test }]
        }
        Scenario::MixedCrossVal | Scenario::ClearLensTest => {
            let attacks = indices(meta, |m| m.label == Label::Attack);
            let clear = indices(meta, SampleMeta::is_clear);
            if attacks.is_empty() || authentic.is_empty() {
                return Err(EvalError::InsufficientData(
                    "the pool needs bona fide and attack samples".into(),
                ));
            }
            if spec.scenario == Scenario::ClearLensTest && clear.is_empty() {
                return Err(EvalError::TagMismatch(format!("no bona fide samples tagged `{TAG_CLEAR}`")));
            }
            if spec.folds == 0 {
                return Err(EvalError::InsufficientData("fold count must be positive".into()));
            }
            let mut pool = authentic;
            pool.extend(attacks);
            pool.sort_unstable();
            let test_bonafide_clear = spec.scenario == Scenario::ClearLensTest;
            let finish = |train: Vec<usize>, held_out: Vec<usize>| -> Fold {
                let mut test: Vec<usize> = held_out
                    .into_iter()
                    .filter(|&i| !test_bonafide_clear || meta[i].label == Label::Attack)
                    .collect();
                if test_bonafide_clear {
                    test.extend(&clear);
                }
                Fold { train, test }
            };
            if spec.classic_kfold {
                if spec.folds > pool.len() {
                    return Err(EvalError::InsufficientData(format!(
                        "{} folds for {} samples",
                        spec.folds,
                        pool.len()
                    )));
                }
                let mut shuffled = pool.clone();
                shuffled.shuffle(&mut fold_rng(spec.seed, 0));
                (0..spec.folds)
                    .map(|k| {
                        let lo = k * shuffled.len() / spec.folds;
                        let hi = (k + 1) * shuffled.len() / spec.folds;
                        let held: Vec<usize> = shuffled[lo..hi].to_vec();
                        let train: Vec<usize> = shuffled[..lo].iter().chain(&shuffled[hi..]).copied().collect();
                        finish(train, held)
                    })
                    .collect()
            } else {
                (0..spec.folds)
                    .map(|k| {
                        let mut rng = fold_rng(spec.seed, k as u64);
                        let train: Vec<usize> = (0..pool.len())
                            .map(|_| pool[rng.random_range(0..pool.len())])
                            .collect();
                        let drawn: HashSet<&str> = train.iter().map(|&i| meta[i].id.as_str()).collect();
                        let held: Vec<usize> = pool
                            .iter()
                            .copied()
                            .filter(|&i| !drawn.contains(meta[i].id.as_str()))
                            .collect();
                        finish(train, held)
                    })
                    .collect()
            }
        }
        Scenario::Custom => {
            let tr: Vec<&str> = spec.train_tags.iter().map(String::as_str).collect();
            let te: Vec<&str> = spec.test_tags.iter().map(String::as_str).collect();
            let train = indices(meta, |m| m.has(&tr));
            let ids: HashSet<&str> = train.iter().map(|&i| meta[i].id.as_str()).collect();
            let test = indices(meta, |m| m.has(&te) && !ids.contains(m.id.as_str()));
            if train.is_empty() || test.is_empty() {
                return Err(EvalError::TagMismatch(format!(
                    "train tags {:?} / test tags {:?} select an empty set",
                    spec.train_tags, spec.test_tags
                )));
            }
            vec![Fold { train, test }]
        }
    };
    Ok(folds)
}

// ---------------------------------------------------------------------------
// Prepared samples and scenario runs

/// Scores precomputed once per sample so folds only index into them.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub meta: SampleMeta,
    /// Base score over the usable annulus, or the reason it failed.
    pub base: Result<f64, String>,
    /// Sector tables for each grid in [`PreparedSet::grids`] order; empty
    /// when the sample failed or only the base method was prepared.
    pub sectors: Vec<SampleSectors>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    pub grids: Vec<(usize, usize)>,
    pub samples: Vec<PreparedSample>,
}

impl PreparedSet {
    pub fn meta(&self) -> Vec<SampleMeta> {
        self.samples.iter().map(|s| s.meta.clone()).collect()
    }

    pub fn failures(&self) -> usize {
        self.samples.iter().filter(|s| s.base.is_err()).count()
    }
}

fn prepare_entry(
    entry: &ManifestEntry,
    rig: &LightRig,
    grids: &[(usize, usize)],
) -> Result<(f64, Vec<SampleSectors>)> {
    let pair = entry.load_pair()?;
    let field = stereo::estimate_normals(&pair, rig)?;
    let mut region = roi::combined_mask(&pair)?;
    if let Some(g) = &entry.annulus {
        region = region.and(&roi::annulus_mask(g, pair.width(), pair.height())?)?;
    }
    let base = score::base_score(&field, &region)?.value;
    let mut sectors = Vec::with_capacity(grids.len());
    if !grids.is_empty() {
        let geometry = entry.annulus.ok_or_else(|| {
            EvalError::InsufficientData(format!("sample `{}` has no annulus circles", entry.sample_id))
        })?;
        let input = SectorInput {
            field: &field,
            mask: &region,
            geometry,
        };
        for &(r, t) in grids {
            sectors.push(areas::sample_sectors(&input, r, t)?);
        }
    }
    Ok((base, sectors))
}

/// Loads and scores every manifest entry. `grids` may be empty when only
/// the base method is evaluated. Per-sample failures are recorded, not fatal.
pub fn prepare(manifest: &DatasetManifest, rig: &LightRig, grids: &[(usize, usize)]) -> PreparedSet {
    let grids = areas::ordered_grids(grids);
    let samples = manifest
        .entries
        .par_iter()
        .map(|e| {
            let meta = SampleMeta::from(e);
            match prepare_entry(e, rig, &grids) {
                Ok((base, sectors)) => PreparedSample {
                    meta,
                    base: Ok(base),
                    sectors,
                },
                Err(err) => {
                    log::warn!("sample `{}` failed: {err}", e.sample_id);
                    PreparedSample {
                        meta,
                        base: Err(err.to_string()),
                        sectors: Vec::new(),
                    }
                }
            }
        })
        .collect();
    PreparedSet { grids, samples }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean: stats::mean(&v)?,
            median: stats::quantile_sorted(&v, 0.5)?,
            q1: stats::quantile_sorted(&v, 0.25)?,
            q3: stats::quantile_sorted(&v, 0.75)?,
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSummary {
    pub r: usize,
    pub t: usize,
    pub selected: usize,
    pub global_dprime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    /// Training draws, counting repeats.
    pub train_size: usize,
    pub test_size: usize,
    /// Distinct training ids, sorted.
    pub train_ids: Vec<String>,
    /// Test ids, sorted.
    pub test_ids: Vec<String>,
    pub threshold: f64,
    pub train_eer: f64,
    pub apcer: f64,
    pub bpcer: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub skipped: usize,
    pub area_model: Option<AreaSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub method: Method,
    pub seed: u64,
    pub folds: usize,
    /// Fold means for multi-fold runs.
    pub apcer: f64,
    pub bpcer: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub threshold: f64,
    /// ROC of the pooled test scores of all folds.
    pub roc: Vec<RocPoint>,
    pub per_fold: Option<Vec<FoldReport>>,
    pub box_stats: Option<BTreeMap<String, BoxStats>>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `fpr,tpr,threshold` rows.
    pub fn roc_csv(&self) -> String {
        let mut s = String::from("fpr,tpr,threshold\n");
        for p in &self.roc {
            let _ = writeln!(s, "{},{},{}", p.fpr, p.tpr, p.threshold);
        }
        s
    }

    pub fn folds_csv(&self) -> String {
        let mut s = String::from("fold,train_size,test_size,threshold,apcer,bpcer,accuracy,auc,eer\n");
        for f in self.per_fold.iter().flatten() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                f.fold, f.train_size, f.test_size, f.threshold, f.apcer, f.bpcer, f.accuracy, f.auc, f.eer
            );
        }
        s
    }

    /// ROC polyline on a unit square.
    pub fn roc_svg(&self) -> String {
        let size = 400.0;
        let pad = 40.0;
        let pts: Vec<String> = self
            .roc
            .iter()
            .map(|p| format!("{:.2},{:.2}", pad + p.fpr * size, pad + (1.0 - p.tpr) * size))
            .collect();
        format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{w}\" viewBox=\"0 0 {w} {w}\">\n",
                "<rect x=\"{pad}\" y=\"{pad}\" width=\"{s}\" height=\"{s}\" fill=\"none\" stroke=\"#888\"/>\n",
                "<line x1=\"{pad}\" y1=\"{end}\" x2=\"{end}\" y2=\"{pad}\" stroke=\"#ccc\" stroke-dasharray=\"4\"/>\n",
                "<polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\" points=\"{pts}\"/>\n",
                "<text x=\"{pad}\" y=\"{tb}\" font-size=\"12\">FPR (BPCER)</text>\n",
                "<text x=\"4\" y=\"{pad}\" font-size=\"12\">TPR</text>\n",
                "<text x=\"{tx}\" y=\"{ty}\" font-size=\"12\">AUC {auc:.4}</text>\n",
                "</svg>\n"
            ),
            w = size + 2.0 * pad,
            s = size,
            pad = pad,
            end = pad + size,
            tb = size + pad + 25.0,
            tx = pad + size * 0.6,
            ty = pad + size * 0.9,
            pts = pts.join(" "),
            auc = self.auc,
        )
    }
}

struct FoldOutcome {
    report: FoldReport,
    test_scores: Vec<(f64, Label)>,
}

fn run_fold(
    set: &PreparedSet,
    fold_index: usize,
    fold: &Fold,
    method: Method,
    ranking: Ranking,
) -> Result<FoldOutcome> {
    let ok = |i: &usize| set.samples[*i].base.is_ok();
    let train: Vec<usize> = fold.train.iter().copied().filter(ok).collect();
    let test: Vec<usize> = fold.test.iter().copied().filter(ok).collect();
    let skipped = (fold.train.len() - train.len()) + (fold.test.len() - test.len());
    let label = |i: usize| set.samples[i].meta.label;

    let (train_scores, test_scores, area_model) = match method {
        Method::Base => {
            let base = |i: usize| set.samples[i].base.clone().ok().map(|s| (s, label(i)));
            (
                train.iter().filter_map(|&i| base(i)).collect::<Vec<_>>(),
                test.iter().filter_map(|&i| base(i)).collect::<Vec<_>>(),
                None,
            )
        }
        Method::WeightedAreas => {
            if set.grids.is_empty() {
                return Err(EvalError::InsufficientData(
                    "weighted areas need prepared sector tables".into(),
                ));
            }
            let labels: Vec<Label> = train.iter().map(|&i| label(i)).collect();
            let tables: Vec<SectorTable> = set
                .grids
                .iter()
                .enumerate()
                .map(|(g, &(r, t))| SectorTable {
                    radial: r,
                    angular: t,
                    rows: train.iter().map(|&i| set.samples[i].sectors[g].clone()).collect(),
                })
                .collect();
            let trained = areas::grid_search_tables(&tables, &labels, ranking)?;
            let model = trained.model;
            let g = set
                .grids
                .iter()
                .position(|&rt| rt == (model.radial, model.angular))
                .expect("model grid comes from the prepared grids");
            let score = |i: usize| {
                model
                    .score_sectors(&set.samples[i].sectors[g])
                    .map(|s| (s, label(i)))
            };
            let summary = AreaSummary {
                r: model.radial,
                t: model.angular,
                selected: model.selected.len(),
                global_dprime: model.global_dprime(),
            };
            (
                train.iter().filter_map(|&i| score(i)).collect(),
                test.iter().filter_map(|&i| score(i)).collect(),
                Some(summary),
            )
        }
    };

    let (threshold, train_eer) = eer_threshold(&train_scores).map_err(|e| match e {
        EvalError::SingleClass => EvalError::InsufficientData(format!("fold {fold_index}: training set has one class")),
        other => other,
    })?;
    let rates = apcer_bpcer(&test_scores, threshold);
    let (_, auc) = roc_auc(&test_scores).map_err(|e| match e {
        EvalError::SingleClass => EvalError::InsufficientData(format!("fold {fold_index}: test set has one class")),
        other => other,
    })?;
    let (_, eer) = eer_threshold(&test_scores)?;

    let ids = |idx: &[usize]| -> Vec<String> {
        let mut v: Vec<String> = idx.iter().map(|&i| set.samples[i].meta.id.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    Ok(FoldOutcome {
        report: FoldReport {
            fold: fold_index,
            train_size: fold.train.len(),
            test_size: fold.test.len(),
            train_ids: ids(&fold.train),
            test_ids: ids(&fold.test),
            threshold,
            train_eer,
            apcer: rates.apcer.expect("test has attacks"),
            bpcer: rates.bpcer.expect("test has bona fide"),
            accuracy: rates.accuracy.expect("test is non-empty"),
            auc,
            eer,
            skipped,
            area_model,
        },
        test_scores,
    })
}

type Metric = fn(&FoldReport) -> f64;

/// Runs a protocol on prepared samples.
pub fn run_prepared(set: &PreparedSet, spec: &SplitSpec, method: Method, ranking: Ranking) -> Result<EvalReport> {
    let meta = set.meta();
    let folds = make_folds(&meta, spec)?;
    let outcomes = folds
        .par_iter()
        .enumerate()
        .map(|(k, f)| run_fold(set, k, f, method, ranking))
        .collect::<Result<Vec<_>>>()?;

    let pooled: Vec<(f64, Label)> = outcomes.iter().flat_map(|o| o.test_scores.iter().copied()).collect();
    let (roc, _) = roc_auc(&pooled)?;
    let reports: Vec<FoldReport> = outcomes.into_iter().map(|o| o.report).collect();
    let col = |f: fn(&FoldReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let mean = |f: fn(&FoldReport) -> f64| stats::mean(&col(f)).expect("at least one fold");

    let multi = reports.len() > 1;
    let box_stats = multi.then(|| {
        let mut m = BTreeMap::new();
        let metrics: [(&str, Metric); 5] = [
            ("accuracy", |f| f.accuracy),
            ("apcer", |f| f.apcer),
            ("bpcer", |f| f.bpcer),
            ("auc", |f| f.auc),
            ("eer", |f| f.eer),
        ];
        for (name, f) in metrics {
            if let Some(b) = BoxStats::from_values(&col(f)) {
                m.insert(name.to_string(), b);
            }
        }
        m
    });
    Ok(EvalReport {
        scenario: spec.scenario,
        method,
        seed: spec.seed,
        folds: reports.len(),
        apcer: mean(|f| f.apcer),
        bpcer: mean(|f| f.bpcer),
        accuracy: mean(|f| f.accuracy),
        auc: mean(|f| f.auc),
        eer: mean(|f| f.eer),
        threshold: mean(|f| f.threshold),
        roc,
        per_fold: Some(reports),
        box_stats,
    })
}

/// Loads, scores and evaluates a manifest under one protocol.
pub fn run_scenario(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
    method: Method,
    rig: &LightRig,
    options: &areas::TrainOptions,
) -> Result<EvalReport> {
    let grids: &[(usize, usize)] = match method {
        Method::Base => &[],
        Method::WeightedAreas => &options.grids,
    };
    let set = prepare(manifest, rig, grids);
    run_prepared(&set, spec, method, options.ranking)
}
