//! PAD scores from a normal field.
//!
//! The base score is the population variance of the distances
//! `d = |n - n_mean|` over the usable iris pixels. The weighted score uses the
//! squared distances `l = |n - n_mean|^2`, weighted by the separability of
//! the sector each pixel belongs to, and returns their weighted population
//! variance. Both statistics are kept exactly as defined; they are not the
//! same quantity even with uniform weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::BinaryMask;
use crate::roi::SectorGrid;
use crate::stats::{self, CompensatedSum};
use crate::stereo::{NormalField, Vec3};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("no usable pixels in the region")]
    EmptyRegion,
    #[error("region has {0} usable pixels, at least 2 are needed")]
    DegenerateRegion(usize),
    #[error("no usable pixel carries a positive weight")]
    AllZeroWeights,
    #[error("invalid sector weights: {0}")]
    InvalidWeights(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T, E = ScoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreVariant {
    Base,
    Weighted,
}

impl ScoreVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreVariant::Base => "base",
            ScoreVariant::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadScore {
    pub value: f64,
    pub n_pixels: usize,
    pub variant: ScoreVariant,
}

/// Mean normal over a region and the per-pixel deviations from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationField {
    pub width: usize,
    pub height: usize,
    /// Arithmetic mean of the included unit normals; not renormalized.
    pub mean_normal: Vec3,
    /// `|n - n_mean|` per included pixel, `None` elsewhere.
    pub deviations: Vec<Option<f64>>,
}

fn check_dims(field: &NormalField, mask: &BinaryMask) -> Result<()> {
    if !mask.same_dims(field.width(), field.height()) {
        return Err(ScoreError::DimensionMismatch(format!(
            "field {}x{}, mask {}x{}",
            field.width(),
            field.height(),
            mask.width(),
            mask.height()
        )));
    }
    Ok(())
}

/// Indices of pixels that are in `mask` and hold a valid normal.
fn included<'a>(field: &'a NormalField, mask: &'a BinaryMask) -> impl Iterator<Item = usize> + 'a {
    let valid = field.valid().bits();
    let bits = mask.bits();
    (0..bits.len()).filter(move |&i| bits[i] && valid[i])
}

fn mean_of(field: &NormalField, idx: impl Iterator<Item = usize>) -> Option<(Vec3, usize)> {
    let mut acc = [CompensatedSum::new(); 3];
    let mut n = 0usize;
    let normals = field.normals();
    for i in idx {
        for c in 0..3 {
            acc[c].add(normals[i][c]);
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    Some(([acc[0].value() / nf, acc[1].value() / nf, acc[2].value() / nf], n))
}

#[inline]
fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Mean of the unit normals over `mask` ∧ valid.
pub fn mean_normal(field: &NormalField, mask: &BinaryMask) -> Result<Vec3> {
    check_dims(field, mask)?;
    mean_of(field, included(field, mask))
        .map(|(m, _)| m)
        .ok_or(ScoreError::EmptyRegion)
}

pub fn deviation_field(field: &NormalField, mask: &BinaryMask) -> Result<DeviationField> {
    let mean = mean_normal(field, mask)?;
    let mut deviations = vec![None; field.width() * field.height()];
    for i in included(field, mask) {
        deviations[i] = Some(dist2(&field.normals()[i], &mean).sqrt());
    }
    Ok(DeviationField {
        width: field.width(),
        height: field.height(),
        mean_normal: mean,
        deviations,
    })
}

/// Population variance of `|n - n_mean|` over `mask` ∧ valid.
pub fn base_score(field: &NormalField, mask: &BinaryMask) -> Result<PadScore> {
    check_dims(field, mask)?;
    let (mean, n) = mean_of(field, included(field, mask)).ok_or(ScoreError::EmptyRegion)?;
    if n < 2 {
        return Err(ScoreError::DegenerateRegion(n));
    }
    let normals = field.normals();
    let d: Vec<f64> = included(field, mask)
        .map(|i| dist2(&normals[i], &mean).sqrt())
        .collect();
    let value = stats::population_variance(&d).expect("n >= 2");
    Ok(PadScore {
        value,
        n_pixels: n,
        variant: ScoreVariant::Base,
    })
}

/// Weighted population variance of `l = |n - n_mean|^2`.
///
/// `weights` holds one non-negative weight per sector id of `grid`. The mean
/// normal is the unweighted mean over included pixels whose sector weight is
/// positive; pixels in zero-weight sectors or outside the annulus take no
/// part at all.
pub fn weighted_score(
    field: &NormalField,
    mask: &BinaryMask,
    grid: &SectorGrid,
    weights: &[f64],
) -> Result<PadScore> {
    check_dims(field, mask)?;
    if weights.len() != grid.sector_count() {
        return Err(ScoreError::InvalidWeights(format!(
            "{} weights for {} sectors",
            weights.len(),
            grid.sector_count()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(ScoreError::InvalidWeights(format!("weight {w} is not a finite non-negative value")));
    }
    let w = field.width();
    let mut pix: Vec<(usize, f64)> = Vec::new();
    let mut any_region = false;
    for i in included(field, mask) {
        if let Some(s) = grid.sector_id(i % w, i / w) {
            any_region = true;
            if weights[s] > 0.0 {
                pix.push((i, weights[s]));
            }
        }
    }
    if pix.is_empty() {
        return Err(if any_region {
            ScoreError::AllZeroWeights
        } else {
            ScoreError::EmptyRegion
        });
    }
    let (mean, n) = mean_of(field, pix.iter().map(|p| p.0)).expect("non-empty");
    let normals = field.normals();
    let l: Vec<f64> = pix.iter().map(|&(i, _)| dist2(&normals[i], &mean)).collect();
    let wsum = stats::sum(pix.iter().map(|p| p.1));
    let lw = stats::sum(pix.iter().zip(&l).map(|(p, l)| p.1 * l)) / wsum;
    let value = stats::sum(pix.iter().zip(&l).map(|(p, l)| p.1 * (l - lw) * (l - lw))) / wsum;
    Ok(PadScore {
        value,
        n_pixels: n,
        variant: ScoreVariant::Weighted,
    })
}

/// One CSV line `sample_id,variant,score,n_pixels,label`.
pub fn score_csv_row(sample_id: &str, score: &PadScore, label: crate::imageio::Label) -> String {
    format!(
        "{},{},{},{},{}",
        sample_id,
        score.variant.as_str(),
        score.value,
        score.n_pixels,
        label.as_str()
    )
}
