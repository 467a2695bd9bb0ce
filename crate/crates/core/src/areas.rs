//! Weighted local-area training.
//!
//! Each sample's annulus is cut into an r x t sector grid and scored per
//! sector. Per-sector separability `d'` between bona fide and attack score
//! distributions ranks the sectors; for every prefix of that ranking the
//! weighted score is evaluated over the training set and the prefix with the
//! best global `d'` becomes the model.
//!
//! With `d' = (mu_bonafide - mu_attack) / sqrt((s_b^2 + s_a^2) / 2)`, useful
//! sectors have *negative* `d'` because attack scores are larger. Ranking is
//! therefore by `|d'|` unless [`Ranking::Signed`] is requested; signed values
//! are always stored.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{BinaryMask, ImageIoError, Label};
use crate::roi::{AnnulusGeometry, RoiError, SectorGrid};
use crate::score::{self, PadScore, ScoreError};
use crate::stats::{self, CompensatedSum};
use crate::stereo::{NormalField, Vec3};

/// Radial section counts searched by default.
pub const RADIAL_CHOICES: [usize; 2] = [4, 5];
/// Angular section counts searched by default.
pub const ANGULAR_CHOICES: [usize; 2] = [10, 15];

pub const GEOMETRY_CONVENTION: &str = "pupil-ray";

#[derive(Debug, Error)]
pub enum AreasError {
    #[error("training data must contain both bona fide and attack samples")]
    SingleClassDataset,
    #[error("every sector is degenerate; no separability can be computed")]
    AllSectorsDegenerate,
    #[error("{labels} labels for {rows} samples")]
    LabelCountMismatch { labels: usize, rows: usize },
    #[error("no grids to search")]
    EmptyGridList,
    #[error("area model grid {model:?} does not match sector table grid {table:?}")]
    GridMismatch {
        model: (usize, usize),
        table: (usize, usize),
    },
    #[error("invalid area model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Io(#[from] ImageIoError),
}

pub type Result<T, E = AreasError> = std::result::Result<T, E>;

/// Separability of two score distributions. Both spreads zero gives
/// `+-inf` by the sign of the mean difference, or 0 when the means agree.
pub fn dprime(mu_authentic: f64, sigma_authentic: f64, mu_contact: f64, sigma_contact: f64) -> f64 {
    let diff = mu_authentic - mu_contact;
    let pooled = 0.5 * (sigma_authentic * sigma_authentic + sigma_contact * sigma_contact);
    if pooled > 0.0 {
        diff / pooled.sqrt()
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// `d'` between the bona fide and attack members of `scores`. Missing scores
/// and `Unknown` labels are skipped; `None` if a class has no scores.
pub fn class_dprime(scores: &[Option<f64>], labels: &[Label]) -> Option<f64> {
    let (a, c) = split_by_class(scores.iter().copied(), labels);
    let (mu_a, s_a) = stats::moments(&a)?;
    let (mu_c, s_c) = stats::moments(&c)?;
    Some(dprime(mu_a, s_a, mu_c, s_c))
}

fn split_by_class(scores: impl Iterator<Item = Option<f64>>, labels: &[Label]) -> (Vec<f64>, Vec<f64>) {
    let mut authentic = Vec::new();
    let mut contact = Vec::new();
    for (s, l) in scores.zip(labels) {
        match (s, l) {
            (Some(v), Label::BonaFide) => authentic.push(v),
            (Some(v), Label::Attack) => contact.push(v),
            _ => {}
        }
    }
    (authentic, contact)
}

/// How sectors and prefixes are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ranking {
    /// Larger `|d'|` is better.
    #[default]
    Absolute,
    /// Larger signed `d'` is better.
    Signed,
}

impl Ranking {
    fn key(self, d: f64) -> f64 {
        match self {
            Ranking::Absolute => d.abs(),
            Ranking::Signed => d,
        }
    }
}

/// Per-sector pixel statistics of one sample, centered on the sample's
/// annulus mean normal to keep the second moments well conditioned.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SectorMoments {
    pub count: usize,
    /// Sum of `n - ref`.
    pub first: Vec3,
    /// Sum of `(n - ref)(n - ref)^T`, upper triangle `xx xy xz yy yz zz`.
    pub second: [f64; 6],
}

/// Sector scores and moments of one sample under one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSectors {
    /// Base score per sector id; `None` when fewer than two usable pixels.
    pub scores: Vec<Option<f64>>,
    pub moments: Vec<SectorMoments>,
    /// Centering normal for `moments`.
    pub reference: Vec3,
}

/// A normal field with the region it may be scored on.
#[derive(Debug, Clone, Copy)]
pub struct SectorInput<'a> {
    pub field: &'a NormalField,
    /// Occlusion mask; pixels outside the annulus are dropped by the grid.
    pub mask: &'a BinaryMask,
    pub geometry: AnnulusGeometry,
}

/// Samples x sectors table for one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorTable {
    pub radial: usize,
    pub angular: usize,
    pub rows: Vec<SampleSectors>,
}

impl SectorTable {
    pub fn sector_count(&self) -> usize {
        self.radial * self.angular
    }

    /// Column of base scores for one sector.
    pub fn column(&self, sector: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.scores[sector]).collect()
    }
}

/// Scores and moments for every sector of one sample.
pub fn sample_sectors(input: &SectorInput<'_>, radial: usize, angular: usize) -> Result<SampleSectors> {
    let grid = SectorGrid::new(input.geometry, radial, angular)?;
    let field = input.field;
    if !input.mask.same_dims(field.width(), field.height()) {
        return Err(ScoreError::DimensionMismatch(format!(
            "field {}x{}, mask {}x{}",
            field.width(),
            field.height(),
            input.mask.width(),
            input.mask.height()
        ))
        .into());
    }
    let w = field.width();
    let normals = field.normals();
    let valid = field.valid().bits();
    let mask = input.mask.bits();
    let sectors = grid.sector_count();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sectors];
    for i in 0..normals.len() {
        if mask[i] && valid[i] {
            if let Some(s) = grid.sector_id(i % w, i / w) {
                members[s].push(i);
            }
        }
    }

    let mut ref_acc = [CompensatedSum::new(); 3];
    let mut total = 0usize;
    for idx in &members {
        for &i in idx {
            for c in 0..3 {
                ref_acc[c].add(normals[i][c]);
            }
        }
        total += idx.len();
    }
    let reference = if total > 0 {
        [0, 1, 2].map(|c| ref_acc[c].value() / total as f64)
    } else {
        [0.0; 3]
    };

    let mut scores = Vec::with_capacity(sectors);
    let mut moments = Vec::with_capacity(sectors);
    for idx in &members {
        let mut m = SectorMoments {
            count: idx.len(),
            ..Default::default()
        };
        let mut first = [CompensatedSum::new(); 3];
        let mut second = [CompensatedSum::new(); 6];
        let mut mean = [CompensatedSum::new(); 3];
        for &i in idx {
            let n = normals[i];
            let e = [n[0] - reference[0], n[1] - reference[1], n[2] - reference[2]];
            for c in 0..3 {
                first[c].add(e[c]);
                mean[c].add(n[c]);
            }
            second[0].add(e[0] * e[0]);
            second[1].add(e[0] * e[1]);
            second[2].add(e[0] * e[2]);
            second[3].add(e[1] * e[1]);
            second[4].add(e[1] * e[2]);
            second[5].add(e[2] * e[2]);
        }
        m.first = first.map(|s| s.value());
        m.second = second.map(|s| s.value());
        moments.push(m);

        scores.push(if idx.len() >= 2 {
            let k = idx.len() as f64;
            let mean = mean.map(|s| s.value() / k);
            let d: Vec<f64> = idx
                .iter()
                .map(|&i| {
                    let n = normals[i];
                    ((n[0] - mean[0]).powi(2) + (n[1] - mean[1]).powi(2) + (n[2] - mean[2]).powi(2)).sqrt()
                })
                .collect();
            stats::population_variance(&d)
        } else {
            None
        });
    }
    Ok(SampleSectors {
        scores,
        moments,
        reference,
    })
}

/// Per-sample per-sector base scores (with moments) for a dataset.
pub fn sector_scores(dataset: &[SectorInput<'_>], radial: usize, angular: usize) -> Result<SectorTable> {
    let rows = dataset
        .par_iter()
        .map(|s| sample_sectors(s, radial, angular))
        .collect::<Result<Vec<_>>>()?;
    Ok(SectorTable {
        radial,
        angular,
        rows,
    })
}

/// Weighted score of one sample from its sector moments.
///
/// For unit normals `l = |n - m|^2 = 1 - 2 n.m + |m|^2` is affine in `n`,
/// so its weighted variance is `4 m^T C_w m` with `C_w` the weighted
/// covariance of the normals. `weights` pairs sector ids with positive
/// weights. Returns `None` when the selected sectors hold no pixels.
pub fn weighted_from_moments(sample: &SampleSectors, weights: &[(usize, f64)]) -> Option<f64> {
    let mut n = 0usize;
    let mut first = [0.0; 3];
    let mut wsum = 0.0;
    let mut wfirst = [0.0; 3];
    let mut wsecond = [0.0; 6];
    for &(s, w) in weights {
        let m = &sample.moments[s];
        if m.count == 0 {
            continue;
        }
        n += m.count;
        wsum += w * m.count as f64;
        for c in 0..3 {
            first[c] += m.first[c];
            wfirst[c] += w * m.first[c];
        }
        for (acc, v) in wsecond.iter_mut().zip(&m.second) {
            *acc += w * v;
        }
    }
    if n == 0 || wsum <= 0.0 {
        return None;
    }
    let r = sample.reference;
    let mean = [0, 1, 2].map(|c| r[c] + first[c] / n as f64);
    let mw = wfirst.map(|v| v / wsum);
    let cov = [
        wsecond[0] / wsum - mw[0] * mw[0],
        wsecond[1] / wsum - mw[0] * mw[1],
        wsecond[2] / wsum - mw[0] * mw[2],
        wsecond[3] / wsum - mw[1] * mw[1],
        wsecond[4] / wsum - mw[1] * mw[2],
        wsecond[5] / wsum - mw[2] * mw[2],
    ];
    let [x, y, z] = mean;
    let q = cov[0] * x * x
        + cov[3] * y * y
        + cov[5] * z * z
        + 2.0 * (cov[1] * x * y + cov[2] * x * z + cov[4] * y * z);
    Some((4.0 * q).max(0.0))
}

/// Class-conditional moments and separability of one sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorStats {
    pub i: usize,
    pub j: usize,
    pub mu_authentic: f64,
    pub sigma_authentic: f64,
    pub mu_contact: f64,
    pub sigma_contact: f64,
    pub n_authentic: usize,
    pub n_contact: usize,
    /// `None` when either class has no scores in this sector.
    pub dprime: Option<f64>,
}

impl SectorStats {
    pub fn recomputed_dprime(&self) -> f64 {
        dprime(
            self.mu_authentic,
            self.sigma_authentic,
            self.mu_contact,
            self.sigma_contact,
        )
    }
}

/// Per-sector statistics over the labeled rows of a table.
pub fn sector_stats(table: &SectorTable, labels: &[Label]) -> Result<Vec<SectorStats>> {
    if labels.len() != table.rows.len() {
        return Err(AreasError::LabelCountMismatch {
            labels: labels.len(),
            rows: table.rows.len(),
        });
    }
    Ok((0..table.sector_count())
        .map(|s| {
            let (a, c) = split_by_class(table.rows.iter().map(|r| r.scores[s]), labels);
            let (mu_a, sd_a) = stats::moments(&a).unwrap_or((f64::NAN, f64::NAN));
            let (mu_c, sd_c) = stats::moments(&c).unwrap_or((f64::NAN, f64::NAN));
            let d = (!a.is_empty() && !c.is_empty()).then(|| dprime(mu_a, sd_a, mu_c, sd_c));
            SectorStats {
                i: s / table.angular,
                j: s % table.angular,
                mu_authentic: mu_a,
                sigma_authentic: sd_a,
                mu_contact: mu_c,
                sigma_contact: sd_c,
                n_authentic: a.len(),
                n_contact: c.len(),
                dprime: d,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedSector {
    pub i: usize,
    pub j: usize,
    /// Signed separability; the pixel weight is its magnitude.
    pub dprime: f64,
}

/// Trained selection of weighted sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaModel {
    #[serde(rename = "r")]
    pub radial: usize,
    #[serde(rename = "t")]
    pub angular: usize,
    pub geometry_convention: String,
    pub selected: Vec<SelectedSector>,
    /// Global training-set `d'` after including the top `p` sectors.
    pub history: Vec<(usize, Option<f64>)>,
}

impl AreaModel {
    pub fn sector_count(&self) -> usize {
        self.radial * self.angular
    }

    /// Per-sector weights `|d'|` for selected sectors, 0 elsewhere.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.sector_count()];
        for s in &self.selected {
            w[s.i * self.angular + s.j] = s.dprime.abs();
        }
        w
    }

    fn weight_pairs(&self) -> Vec<(usize, f64)> {
        self.selected
            .iter()
            .map(|s| (s.i * self.angular + s.j, s.dprime.abs()))
            .collect()
    }

    /// Global `d'` at the chosen prefix.
    pub fn global_dprime(&self) -> Option<f64> {
        self.history
            .get(self.selected.len().checked_sub(1)?)
            .and_then(|h| h.1)
    }

    pub fn grid(&self, geometry: AnnulusGeometry) -> Result<SectorGrid> {
        Ok(SectorGrid::new(geometry, self.radial, self.angular)?)
    }

    /// Weighted score of a full normal field.
    pub fn weighted_score(
        &self,
        field: &NormalField,
        mask: &BinaryMask,
        geometry: AnnulusGeometry,
    ) -> Result<PadScore> {
        let grid = self.grid(geometry)?;
        Ok(score::weighted_score(field, mask, &grid, &self.weights())?)
    }

    /// Weighted score from precomputed sector moments of the same grid.
    pub fn score_sectors(&self, sample: &SampleSectors) -> Option<f64> {
        weighted_from_moments(sample, &self.weight_pairs())
    }

    pub fn validate(&self) -> Result<()> {
        if self.radial == 0 || self.angular == 0 {
            return Err(AreasError::InvalidModel("grid must be at least 1x1".into()));
        }
        if self.selected.is_empty() {
            return Err(AreasError::InvalidModel("no selected sectors".into()));
        }
        let mut seen = vec![false; self.sector_count()];
        for s in &self.selected {
            if s.i >= self.radial || s.j >= self.angular {
                return Err(AreasError::InvalidModel(format!("sector ({}, {}) outside grid", s.i, s.j)));
            }
            if !s.dprime.is_finite() || s.dprime == 0.0 {
                return Err(AreasError::InvalidModel(format!(
                    "sector ({}, {}) has unusable weight {}",
                    s.i, s.j, s.dprime
                )));
            }
            let id = s.i * self.angular + s.j;
            if std::mem::replace(&mut seen[id], true) {
                return Err(AreasError::InvalidModel(format!("sector ({}, {}) listed twice", s.i, s.j)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("area model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: AreaModel =
            serde_json::from_str(text).map_err(|e| AreasError::InvalidModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        crate::imageio::write_bytes(path.as_ref(), text.as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ImageIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub ranking: Ranking,
    /// `(r, t)` candidates for [`grid_search`].
    pub grids: Vec<(usize, usize)>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let mut grids = Vec::new();
        for &r in &RADIAL_CHOICES {
            for &t in &ANGULAR_CHOICES {
                grids.push((r, t));
            }
        }
        Self {
            ranking: Ranking::Absolute,
            grids,
        }
    }
}

/// Full training output, including the statistics behind the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAreas {
    pub model: AreaModel,
    pub stats: Vec<SectorStats>,
}

fn class_counts(labels: &[Label]) -> (usize, usize) {
    labels.iter().fold((0, 0), |(b, a), l| match l {
        Label::BonaFide => (b + 1, a),
        Label::Attack => (b, a + 1),
        Label::Unknown => (b, a),
    })
}

/// Ranks sectors by separability and keeps the prefix with the best global
/// `d'` of the weighted score (ties go to the shortest prefix).
///
/// Sectors whose `d'` is missing, zero or infinite cannot act as weights;
/// they are ranked last and contribute nothing when included.
pub fn train_area_model(table: &SectorTable, labels: &[Label], ranking: Ranking) -> Result<TrainedAreas> {
    let (nb, na) = class_counts(labels);
    if labels.len() != table.rows.len() {
        return Err(AreasError::LabelCountMismatch {
            labels: labels.len(),
            rows: table.rows.len(),
        });
    }
    if nb == 0 || na == 0 {
        return Err(AreasError::SingleClassDataset);
    }
    let stats = sector_stats(table, labels)?;
    let usable = |s: &SectorStats| s.dprime.filter(|d| d.is_finite() && *d != 0.0);

    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = usable(&stats[a]).map(|d| ranking.key(d));
        let kb = usable(&stats[b]).map(|d| ranking.key(d));
        match (ka, kb) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.cmp(&b),
        }
    });
    if usable(&stats[order[0]]).is_none() {
        return Err(AreasError::AllSectorsDegenerate);
    }

    let mut weights: Vec<(usize, f64)> = Vec::new();
    let mut history = Vec::with_capacity(order.len());
    let mut best: Option<(usize, f64)> = None;
    for (step, &s) in order.iter().enumerate() {
        let p = step + 1;
        if let Some(d) = usable(&stats[s]) {
            weights.push((s, d.abs()));
        }
        let scores: Vec<Option<f64>> = table
            .rows
            .iter()
            .map(|row| weighted_from_moments(row, &weights))
            .collect();
        let global = class_dprime(&scores, labels).filter(|d| !d.is_nan());
        history.push((p, global.filter(|d| d.is_finite())));
        if let Some(g) = global {
            let key = ranking.key(g);
            if best.is_none_or(|(_, k)| key > k) {
                best = Some((p, key));
            }
        }
    }
    let (p, _) = best.ok_or(AreasError::AllSectorsDegenerate)?;
    let selected = order[..p]
        .iter()
        .filter_map(|&s| {
            usable(&stats[s]).map(|d| SelectedSector {
                i: stats[s].i,
                j: stats[s].j,
                dprime: d,
            })
        })
        .collect();
    Ok(TrainedAreas {
        model: AreaModel {
            radial: table.radial,
            angular: table.angular,
            geometry_convention: GEOMETRY_CONVENTION.to_string(),
            selected,
            history,
        },
        stats,
    })
}

/// Deterministic grid order: smaller `r * t` first, then smaller `r`.
pub fn ordered_grids(grids: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut g = grids.to_vec();
    g.sort_by_key(|&(r, t)| (r * t, r));
    g.dedup();
    g
}

/// Trains on precomputed tables (one per grid) and keeps the model with the
/// best global `d'`; ties go to the first grid in [`ordered_grids`] order.
pub fn grid_search_tables(tables: &[SectorTable], labels: &[Label], ranking: Ranking) -> Result<TrainedAreas> {
    let (nb, na) = class_counts(labels);
    if nb == 0 || na == 0 {
        return Err(AreasError::SingleClassDataset);
    }
    let mut sorted: Vec<&SectorTable> = tables.iter().collect();
    sorted.sort_by_key(|t| (t.radial * t.angular, t.radial));
    if sorted.is_empty() {
        return Err(AreasError::EmptyGridList);
    }
    let mut best: Option<(f64, TrainedAreas)> = None;
    let mut last_err = None;
    for table in sorted {
        match train_area_model(table, labels, ranking) {
            Ok(trained) => {
                let key = trained
                    .model
                    .global_dprime()
                    .map(|d| ranking.key(d))
                    .unwrap_or(f64::NEG_INFINITY);
                if best.as_ref().is_none_or(|(k, _)| key > *k) {
                    best = Some((key, trained));
                }
            }
            Err(AreasError::AllSectorsDegenerate) => last_err = Some(AreasError::AllSectorsDegenerate),
            Err(e) => return Err(e),
        }
    }
    best.map(|(_, t)| t)
        .ok_or_else(|| last_err.unwrap_or(AreasError::AllSectorsDegenerate))
}

/// Builds sector tables for every candidate grid and runs [`grid_search_tables`].
pub fn grid_search(dataset: &[SectorInput<'_>], labels: &[Label], options: &TrainOptions) -> Result<TrainedAreas> {
    let (nb, na) = class_counts(labels);
    if nb == 0 || na == 0 {
        return Err(AreasError::SingleClassDataset);
    }
    if options.grids.is_empty() {
        return Err(AreasError::EmptyGridList);
    }
    let tables = ordered_grids(&options.grids)
        .into_iter()
        .map(|(r, t)| sector_scores(dataset, r, t))
        .collect::<Result<Vec<_>>>()?;
    grid_search_tables(&tables, labels, options.ranking)
}
