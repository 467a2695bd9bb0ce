//! Subcommand implementations behind the `irispad` binary.
//!
//! Every command writes into an output directory and returns the number of
//! per-sample failures; configuration and input errors are returned as
//! [`PipelineError`]. Outputs are written in manifest order after parallel
//! work completes, so repeated runs are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::areas::{self, AreaModel, AreasError, Ranking, SampleSectors, SectorInput, SectorTable, TrainOptions};
use crate::eval::{self, EvalError, Method, SplitSpec};
use crate::imageio::{self, ImageIoError, ImagePair, Label, ManifestEntry};
use crate::roi::{self, AnnulusGeometry, RoiError};
use crate::score::{self, PadScore, ScoreError, ScoreVariant};
use crate::stereo::{self, LightRig, NormalField, StereoError};
use crate::synth::{self, CorpusParams, SynthError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Stereo(#[from] StereoError),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Areas(#[from] AreasError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Completed run. `failures` counts samples that could not be processed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub failures: usize,
}

impl Outcome {
    /// 0 when every sample succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.failures > 0)
    }
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    imageio::write_bytes(path, text.as_bytes())?;
    Ok(path.to_path_buf())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| {
        PipelineError::Image(ImageIoError::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

/// Pixels scored for a sample: both occlusion masks, limited to the annulus
/// when circles are given.
pub fn scoring_region(pair: &ImagePair, annulus: Option<&AnnulusGeometry>) -> Result<imageio::BinaryMask> {
    let mut region = roi::combined_mask(pair)?;
    if let Some(g) = annulus {
        region = region.and(&roi::annulus_mask(g, pair.width(), pair.height())?)?;
    }
    Ok(region)
}

// ---------------------------------------------------------------------------
// normals

/// SVG arrows of the in-plane normal components, one per `step` pixels.
pub fn quiver_svg(field: &NormalField) -> String {
    let (w, h) = (field.width(), field.height());
    let step = (w.max(h) / 32).max(1);
    let scale = 0.9 * step as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <g stroke=\"#1f5fbf\" stroke-width=\"{sw}\" fill=\"none\">\n",
        sw = (step as f64 / 8.0).max(0.1)
    );
    for y in (step / 2..h).step_by(step) {
        for x in (step / 2..w).step_by(step) {
            if !field.is_valid(x, y) {
                continue;
            }
            let n = field.normal(x, y);
            let (x0, y0) = (x as f64 + 0.5, y as f64 + 0.5);
            let (x1, y1) = (x0 + scale * n[0], y0 + scale * n[1]);
            let _ = writeln!(
                s,
                "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\"/>\
                 <circle cx=\"{x1:.2}\" cy=\"{y1:.2}\" r=\"{r:.2}\"/>",
                r = step as f64 / 10.0
            );
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

pub struct NormalsArgs<'a> {
    pub left: &'a Path,
    pub right: &'a Path,
    pub mask_left: Option<&'a Path>,
    pub mask_right: Option<&'a Path>,
}

/// Writes `normals.nrm`, `quiver.svg` and `nx.pgm`/`ny.pgm`/`nz.pgm`.
pub fn cmd_normals(args: &NormalsArgs<'_>, rig: &LightRig, out: &Path) -> Result<Outcome> {
    let left = imageio::load_gray(args.left)?;
    let right = imageio::load_gray(args.right)?;
    let full = || imageio::BinaryMask::filled(left.width(), left.height(), true);
    let mask_left = match args.mask_left {
        Some(p) => imageio::load_mask(p)?,
        None => full()?,
    };
    let mask_right = match args.mask_right {
        Some(p) => imageio::load_mask(p)?,
        None => full()?,
    };
    let pair = ImagePair::new(left, right, mask_left, mask_right, Label::Unknown, "")?;
    let mut field = stereo::estimate_normals(&pair, rig)?;
    let region = roi::combined_mask(&pair)?;
    field = field.restricted(&region)?;
    ensure_dir(out)?;
    let nrm = out.join("normals.nrm");
    field.save_nrm1(&nrm)?;
    let quiver = write_text(&out.join("quiver.svg"), &quiver_svg(&field))?;
    stereo::save_component_images(&field, out)?;
    Ok(Outcome {
        outputs: vec![nrm, quiver, out.join("nx.pgm"), out.join("ny.pgm"), out.join("nz.pgm")],
        failures: 0,
    })
}

// ---------------------------------------------------------------------------
// score

pub struct ScoreArgs<'a> {
    pub manifest: &'a Path,
    pub area_model: Option<&'a Path>,
    pub threshold: Option<f64>,
}

fn score_entry(entry: &ManifestEntry, rig: &LightRig, model: Option<&AreaModel>) -> Result<PadScore> {
    let pair = entry.load_pair()?;
    let field = stereo::estimate_normals(&pair, rig)?;
    let region = scoring_region(&pair, entry.annulus.as_ref())?;
    match model {
        None => Ok(score::base_score(&field, &region)?),
        Some(m) => {
            let g = entry.annulus.ok_or_else(|| {
                PipelineError::Config(format!("sample `{}` has no annulus circles", entry.sample_id))
            })?;
            Ok(m.weighted_score(&field, &region, g)?)
        }
    }
}

/// Writes `scores.csv`: `sample_id,variant,score,n_pixels,label` plus a
/// `decision` column when a threshold is given. Failed rows read `error`.
pub fn cmd_score(args: &ScoreArgs<'_>, rig: &LightRig, out: &Path) -> Result<Outcome> {
    if let Some(t) = args.threshold {
        if !t.is_finite() {
            return Err(PipelineError::Config(format!("threshold {t} is not finite")));
        }
    }
    let manifest = imageio::load_manifest(args.manifest)?;
    let model = args.area_model.map(AreaModel::load).transpose()?;
    let variant = if model.is_some() {
        ScoreVariant::Weighted
    } else {
        ScoreVariant::Base
    };
    let results: Vec<Result<PadScore>> = manifest
        .entries
        .par_iter()
        .map(|e| score_entry(e, rig, model.as_ref()))
        .collect();

    let mut csv = String::from("sample_id,variant,score,n_pixels,label");
    if args.threshold.is_some() {
        csv.push_str(",decision");
    }
    csv.push('\n');
    let mut failures = 0;
    for (entry, result) in manifest.entries.iter().zip(results) {
        match result {
            Ok(s) => {
                csv.push_str(&score::score_csv_row(&entry.sample_id, &s, entry.label));
                if let Some(t) = args.threshold {
                    csv.push_str(if s.value > t { ",attack" } else { ",bonafide" });
                }
            }
            Err(err) => {
                log::warn!("sample `{}` failed: {err}", entry.sample_id);
                failures += 1;
                let _ = write!(
                    csv,
                    "{},{},error,,{}",
                    entry.sample_id,
                    variant.as_str(),
                    entry.label.as_str()
                );
                if args.threshold.is_some() {
                    csv.push_str(",error");
                }
            }
        }
        csv.push('\n');
    }
    ensure_dir(out)?;
    if failures > 0 {
        log::warn!("{failures} of {} samples failed", manifest.entries.len());
    }
    Ok(Outcome {
        outputs: vec![write_text(&out.join("scores.csv"), &csv)?],
        failures,
    })
}

// ---------------------------------------------------------------------------
// train-areas

/// Canonical geometry of the significance map raster.
const MAP_SIZE: usize = 128;
const MAP_PUPIL: f64 = 20.0;
const MAP_IRIS: f64 = 60.0;

/// `|d'|` per sector painted on a canonical annulus, scaled so the largest
/// finite magnitude is 255. Pixels outside the annulus are 0.
pub fn significance_map(radial: usize, angular: usize, stats: &[areas::SectorStats]) -> Result<imageio::GrayImage> {
    let c = MAP_SIZE as f64 / 2.0;
    let geometry = AnnulusGeometry::concentric((c, c), MAP_PUPIL, MAP_IRIS)?;
    let grid = roi::SectorGrid::new(geometry, radial, angular)?;
    let mut magnitude = vec![0.0f64; radial * angular];
    for s in stats {
        if let Some(d) = s.dprime.filter(|d| d.is_finite()) {
            magnitude[s.i * angular + s.j] = d.abs();
        }
    }
    let peak = magnitude.iter().copied().fold(0.0, f64::max);
    let pixels = grid
        .sector_map(MAP_SIZE, MAP_SIZE)
        .into_iter()
        .map(|id| match id {
            Some(k) if peak > 0.0 => (magnitude[k] / peak * 255.0).round() as u8,
            _ => 0,
        })
        .collect();
    Ok(imageio::GrayImage::new(MAP_SIZE, MAP_SIZE, pixels)?)
}

pub struct TrainArgs<'a> {
    pub manifest: &'a Path,
    pub options: TrainOptions,
}

fn entry_sectors(entry: &ManifestEntry, rig: &LightRig, grids: &[(usize, usize)]) -> Result<Vec<SampleSectors>> {
    let geometry = entry.annulus.ok_or_else(|| {
        PipelineError::Config(format!("sample `{}` has no annulus circles", entry.sample_id))
    })?;
    let pair = entry.load_pair()?;
    let field = stereo::estimate_normals(&pair, rig)?;
    let region = scoring_region(&pair, Some(&geometry))?;
    let input = SectorInput {
        field: &field,
        mask: &region,
        geometry,
    };
    grids
        .iter()
        .map(|&(r, t)| Ok(areas::sample_sectors(&input, r, t)?))
        .collect()
}

/// Writes `area_model.json`, `sector_stats.csv` and `significance.pgm`.
pub fn cmd_train_areas(args: &TrainArgs<'_>, rig: &LightRig, out: &Path) -> Result<Outcome> {
    let manifest = imageio::load_manifest(args.manifest)?;
    if args.options.grids.is_empty() {
        return Err(AreasError::EmptyGridList.into());
    }
    let grids = areas::ordered_grids(&args.options.grids);
    let results: Vec<Result<Vec<SampleSectors>>> =
        manifest.entries.par_iter().map(|e| entry_sectors(e, rig, &grids)).collect();
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<SampleSectors>> = Vec::new();
    let mut failures = 0;
    for (entry, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(s) => {
                labels.push(entry.label);
                rows.push(s);
            }
            Err(err) => {
                log::warn!("sample `{}` failed: {err}", entry.sample_id);
                failures += 1;
            }
        }
    }
    let tables: Vec<SectorTable> = grids
        .iter()
        .enumerate()
        .map(|(g, &(r, t))| SectorTable {
            radial: r,
            angular: t,
            rows: rows.iter().map(|s| s[g].clone()).collect(),
        })
        .collect();
    let trained = areas::grid_search_tables(&tables, &labels, args.options.ranking)?;
    let model = &trained.model;

    ensure_dir(out)?;
    let model_path = out.join("area_model.json");
    model.save(&model_path)?;
    let mut stats_csv = String::from("i,j,mu_authentic,sigma_authentic,mu_contact,sigma_contact,n_authentic,n_contact,dprime\n");
    for s in &trained.stats {
        let _ = writeln!(
            stats_csv,
            "{},{},{},{},{},{},{},{},{}",
            s.i,
            s.j,
            s.mu_authentic,
            s.sigma_authentic,
            s.mu_contact,
            s.sigma_contact,
            s.n_authentic,
            s.n_contact,
            s.dprime.map(|d| d.to_string()).unwrap_or_default()
        );
    }
    let stats_path = write_text(&out.join("sector_stats.csv"), &stats_csv)?;
    let map_path = out.join("significance.pgm");
    imageio::save_gray(&significance_map(model.radial, model.angular, &trained.stats)?, &map_path)?;
    log::info!(
        "selected {} of {} sectors on a {}x{} grid",
        model.selected.len(),
        model.sector_count(),
        model.radial,
        model.angular
    );
    Ok(Outcome {
        outputs: vec![model_path, stats_path, map_path],
        failures,
    })
}

// ---------------------------------------------------------------------------
// eval

pub struct EvalArgs<'a> {
    pub manifest: &'a Path,
    pub spec: SplitSpec,
    pub method: Method,
    pub options: TrainOptions,
}

/// Writes `report.json`, `roc.csv`, `roc.svg` and `folds.csv`.
pub fn cmd_eval(args: &EvalArgs<'_>, rig: &LightRig, out: &Path) -> Result<Outcome> {
    let manifest = imageio::load_manifest(args.manifest)?;
    let grids: Vec<(usize, usize)> = match args.method {
        Method::Base => Vec::new(),
        Method::WeightedAreas => args.options.grids.clone(),
    };
    let set = eval::prepare(&manifest, rig, &grids);
    let report = eval::run_prepared(&set, &args.spec, args.method, args.options.ranking)?;
    ensure_dir(out)?;
    let mut json = report.to_json();
    json.push('\n');
    let outputs = vec![
        write_text(&out.join("report.json"), &json)?,
        write_text(&out.join("roc.csv"), &report.roc_csv())?,
        write_text(&out.join("roc.svg"), &report.roc_svg())?,
        write_text(&out.join("folds.csv"), &report.folds_csv())?,
    ];
    Ok(Outcome {
        outputs,
        failures: set.failures(),
    })
}

// ---------------------------------------------------------------------------
// synth

/// Renders a corpus into `out` and writes the rig used as `rig.json`.
pub fn cmd_synth(params: &CorpusParams, rig: &LightRig, seed: u64, out: &Path) -> Result<Outcome> {
    let corpus = synth::generate_corpus(out, params, rig, seed)?;
    let rig_path = write_text(&out.join("rig.json"), &format!("{}\n", rig.to_json()))?;
    if corpus.clamped > 0 {
        log::warn!("{} rendered values were clamped to [0, 1]", corpus.clamped);
    }
    Ok(Outcome {
        outputs: vec![corpus.manifest_path, rig_path],
        failures: 0,
    })
}

/// Loads the rig file; a rig is required input for every command that reads
/// images.
pub fn require_rig(path: Option<&Path>) -> Result<LightRig> {
    match path {
        Some(p) => Ok(LightRig::load(p)?),
        None => Err(PipelineError::Config("--rig FILE is required".into())),
    }
}

/// Ranking for `--signed-dprime`.
pub fn ranking(signed: bool) -> Ranking {
    if signed {
        Ranking::Signed
    } else {
        Ranking::Absolute
    }
}
