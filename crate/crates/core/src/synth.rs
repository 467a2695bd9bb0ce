//! Lambertian forward renderer producing image pairs with known normals.
//!
//! Surfaces are a base normal tilted by seeded value noise. Bona fide irises
//! are nearly flat; lens attacks add strong slopes plus opaque printed dots
//! whose shadow falls in only one of the two images.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{TAG_AUTHENTIC, TAG_CLEAR, TAG_IRREGULAR, TAG_REGULAR};
use crate::imageio::{self, DatasetManifest, GrayImage, ImageIoError, ImagePair, Label, ManifestEntry};
use crate::roi::{self, AnnulusGeometry, RoiError};
use crate::stereo::{cross, dot, norm, LightRig, NormalField, Vec3};

/// Largest slope amplitude a flat iris may carry.
pub const FLAT_AMPLITUDE_LIMIT: f64 = 0.05;
pub const DEFAULT_FLAT_AMPLITUDE: f64 = 0.02;
pub const DEFAULT_BUMP_AMPLITUDE: f64 = 0.12;
pub const DEFAULT_BUMP_COUNT: usize = 16;
pub const DEFAULT_FLAT_BUMP_COUNT: usize = 6;
pub const DEFAULT_DOT_FRACTION: f64 = 0.01;
pub const DEFAULT_RIM_AMPLITUDE: f64 = 0.12;
pub const DEFAULT_ALBEDO: [f64; 2] = [0.5, 0.9];
pub const DEFAULT_NOISE: f64 = 0.0;
pub const DEFAULT_SIZE: usize = 96;

/// Cells across the image for the albedo texture.
const ALBEDO_CELLS: usize = 12;
const DOT_RADIUS: f64 = 1.5;
/// Shadow displacement from its dot, in pixels.
const SHADOW_OFFSET: f64 = 2.0;
/// Intensity multiplier inside a shadow.
const SHADOW_DARKENING: f64 = 0.25;
/// Radial half-width of the clear-lens rim, as a fraction of the annulus.
const RIM_WIDTH: f64 = 0.08;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceKind {
    FlatIris,
    BumpyLens,
}

/// Placement of printed dots on a lens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DotLayout {
    /// Evenly spaced along concentric rings.
    Lattice,
    /// Uniformly scattered over the annulus.
    Scattered,
}

/// Window in rubber-sheet coordinates; angles in radians, `theta` may wrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarWindow {
    pub rho: [f64; 2],
    pub theta: [f64; 2],
}

impl PolarWindow {
    pub fn band(rho_low: f64, rho_high: f64) -> Self {
        Self {
            rho: [rho_low, rho_high],
            theta: [0.0, TAU],
        }
    }

    pub fn contains(&self, rho: f64, theta: f64) -> bool {
        if rho < self.rho[0] || rho > self.rho[1] {
            return false;
        }
        let span = (self.theta[1] - self.theta[0]).rem_euclid(TAU);
        if self.theta[1] - self.theta[0] >= TAU {
            return true;
        }
        (theta - self.theta[0]).rem_euclid(TAU) < span
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
    pub base_normal: Vec3,
    pub texture_seed: u64,
    /// Slope scale of the value-noise perturbation.
    pub bump_amplitude: f64,
    /// Value-noise cells across the image width.
    pub bump_count: usize,
    /// Fraction of the annulus covered by zero-albedo dots.
    pub opaque_dot_fraction: f64,
    pub albedo_range: [f64; 2],
    pub dot_layout: DotLayout,
    /// Radial slope of a ring at the outer iris boundary.
    pub rim_amplitude: f64,
    /// Region carrying the bumps. `None` bumps everywhere.
    pub bump_region: Option<PolarWindow>,
    /// Slope scale of the iris texture outside `bump_region`, at flat-iris
    /// cell size.
    pub background_amplitude: f64,
}

impl SurfaceSpec {
    pub fn flat(texture_seed: u64) -> Self {
        Self {
            kind: SurfaceKind::FlatIris,
            base_normal: [0.0, 0.0, 1.0],
            texture_seed,
            bump_amplitude: DEFAULT_FLAT_AMPLITUDE,
            bump_count: DEFAULT_FLAT_BUMP_COUNT,
            opaque_dot_fraction: 0.0,
            albedo_range: DEFAULT_ALBEDO,
            dot_layout: DotLayout::Scattered,
            rim_amplitude: 0.0,
            bump_region: None,
            background_amplitude: DEFAULT_FLAT_AMPLITUDE,
        }
    }

    pub fn bumpy(texture_seed: u64) -> Self {
        Self {
            kind: SurfaceKind::BumpyLens,
            bump_amplitude: DEFAULT_BUMP_AMPLITUDE,
            bump_count: DEFAULT_BUMP_COUNT,
            opaque_dot_fraction: DEFAULT_DOT_FRACTION,
            ..Self::flat(texture_seed)
        }
    }

    /// Flat iris behind a clear lens with a faint boundary ring.
    pub fn clear(texture_seed: u64) -> Self {
        Self {
            rim_amplitude: DEFAULT_RIM_AMPLITUDE,
            ..Self::flat(texture_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if (norm(&self.base_normal) - 1.0).abs() > 1e-9 {
            return bad(format!("base normal {:?} is not unit length", self.base_normal));
        }
        if !(self.bump_amplitude >= 0.0 && self.bump_amplitude.is_finite()) {
            return bad(format!("bump amplitude {} must be finite and >= 0", self.bump_amplitude));
        }
        if !(0.0..=FLAT_AMPLITUDE_LIMIT).contains(&self.background_amplitude) {
            return bad(format!(
                "background amplitude {} outside [0, {FLAT_AMPLITUDE_LIMIT}]",
                self.background_amplitude
            ));
        }
        if !(self.rim_amplitude >= 0.0 && self.rim_amplitude.is_finite()) {
            return bad(format!("rim amplitude {} must be finite and >= 0", self.rim_amplitude));
        }
        if self.bump_count == 0 {
            return bad("bump count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.opaque_dot_fraction) {
            return bad(format!("dot fraction {} outside [0, 1]", self.opaque_dot_fraction));
        }
        let [lo, hi] = self.albedo_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("albedo range [{lo}, {hi}] must satisfy 0 < low <= high <= 1"));
        }
        if self.kind == SurfaceKind::FlatIris {
            if self.bump_amplitude > FLAT_AMPLITUDE_LIMIT {
                return bad(format!(
                    "flat iris amplitude {} exceeds {FLAT_AMPLITUDE_LIMIT}",
                    self.bump_amplitude
                ));
            }
            if self.opaque_dot_fraction != 0.0 {
                return bad("flat iris cannot carry opaque dots".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub pair: ImagePair,
    pub truth_normals: NormalField,
    pub geometry: AnnulusGeometry,
    /// Rendered values that fell outside [0, 1] before quantization.
    pub clamped: usize,
}

/// Seeded lattice of values in [-1, 1], bilinearly interpolated.
struct ValueNoise {
    cells: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(cells: usize, rng: &mut impl Rng) -> Self {
        let values = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        Self { cells, values }
    }

    /// `u`, `v` in [0, 1].
    fn sample(&self, u: f64, v: f64) -> f64 {
        let n = self.cells;
        let (fx, fy) = (u.clamp(0.0, 1.0) * n as f64, v.clamp(0.0, 1.0) * n as f64);
        let (x0, y0) = ((fx.floor() as usize).min(n - 1), (fy.floor() as usize).min(n - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let at = |x: usize, y: usize| self.values[y * (n + 1) + x];
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let t1 = cross(&helper, n);
    let l = norm(&t1);
    let t1 = [t1[0] / l, t1[1] / l, t1[2] / l];
    (t1, cross(n, &t1))
}

fn dot_centers(spec: &SurfaceSpec, geometry: &AnnulusGeometry, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let annulus_area = std::f64::consts::PI * (geometry.iris_radius.powi(2) - geometry.pupil_radius.powi(2));
    let dot_area = std::f64::consts::PI * DOT_RADIUS * DOT_RADIUS;
    let count = (spec.opaque_dot_fraction * annulus_area / dot_area).round() as usize;
    if count == 0 {
        return Vec::new();
    }
    let (cx, cy) = geometry.pupil_center;
    let (rp, ri) = (geometry.pupil_radius, geometry.iris_radius);
    match spec.dot_layout {
        DotLayout::Lattice => {
            const RINGS: usize = 3;
            let radii: Vec<f64> = (0..RINGS)
                .map(|k| rp + (ri - rp) * (k as f64 + 0.5) / RINGS as f64)
                .collect();
            let total: f64 = radii.iter().sum();
            let mut out = Vec::with_capacity(count);
            for r in radii {
                let per_ring = ((count as f64 * r / total).round() as usize).max(1);
                let phase = rng.random_range(0.0..TAU);
                for j in 0..per_ring {
                    let a = phase + TAU * j as f64 / per_ring as f64;
                    out.push((cx + r * a.cos(), cy + r * a.sin()));
                }
            }
            out
        }
        DotLayout::Scattered => (0..count)
            .map(|_| {
                let r = (rng.random_range(rp * rp..ri * ri)).sqrt();
                let a = rng.random_range(0.0..TAU);
                (cx + r * a.cos(), cy + r * a.sin())
            })
            .collect(),
    }
}

/// Renders one sample. `rig` must have exactly two lights.
pub fn generate(
    spec: &SurfaceSpec,
    geometry: AnnulusGeometry,
    rig: &LightRig,
    width: usize,
    height: usize,
    noise_sigma: f64,
) -> Result<SynthSample> {
    spec.validate()?;
    geometry.validate()?;
    if rig.len() != 2 {
        return Err(SynthError::InvalidSpec(format!("image pairs need a two-light rig, got {}", rig.len())));
    }
    if width == 0 || height == 0 {
        return Err(SynthError::InvalidSpec("image dimensions must be positive".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SynthError::InvalidSpec(format!("noise sigma {noise_sigma} must be finite and >= 0")));
    }

    let mut rng = rng_for(spec.texture_seed, 0);
    let slope_x = ValueNoise::new(spec.bump_count, &mut rng);
    let slope_y = ValueNoise::new(spec.bump_count, &mut rng);
    let albedo_noise = ValueNoise::new(ALBEDO_CELLS, &mut rng);
    let dots = dot_centers(spec, &geometry, &mut rng);
    // Iris texture outside `bump_region`, from its own stream so unrestricted
    // surfaces render identically.
    let outside = spec.bump_region.map(|_| {
        let mut r = rng_for(spec.texture_seed, 2);
        let sx = ValueNoise::new(DEFAULT_FLAT_BUMP_COUNT, &mut r);
        let sy = ValueNoise::new(DEFAULT_FLAT_BUMP_COUNT, &mut r);
        (sx, sy)
    });
    let shadow_light: Vec<usize> = match spec.dot_layout {
        DotLayout::Lattice => (0..dots.len()).map(|i| i % 2).collect(),
        DotLayout::Scattered => (0..dots.len()).map(|_| rng.random_range(0..2)).collect(),
    };

    let n_px = width * height;
    let base = spec.base_normal;
    let (t1, t2) = tangent_basis(&base);
    let [alo, ahi] = spec.albedo_range;
    let mut normals = Vec::with_capacity(n_px);
    let mut albedo = Vec::with_capacity(n_px);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = ((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64);
            let polar = geometry.polar(x, y);
            let inside = match (&spec.bump_region, polar) {
                (None, _) => true,
                (Some(w), Some((rho, theta))) => w.contains(rho, theta),
                (Some(_), None) => false,
            };
            let mut p = match &outside {
                Some((sx, sy)) if !inside => [
                    spec.background_amplitude * sx.sample(u, v),
                    spec.background_amplitude * sy.sample(u, v),
                ],
                _ => [
                    spec.bump_amplitude * slope_x.sample(u, v),
                    spec.bump_amplitude * slope_y.sample(u, v),
                ],
            };
            if spec.rim_amplitude > 0.0 {
                if let Some((rho, _)) = polar {
                    let (dx, dy) = (
                        x as f64 + 0.5 - geometry.pupil_center.0,
                        y as f64 + 0.5 - geometry.pupil_center.1,
                    );
                    let d = dx.hypot(dy);
                    let g = (-((1.0 - rho) / RIM_WIDTH).powi(2)).exp();
                    p[0] += spec.rim_amplitude * g * dx / d;
                    p[1] += spec.rim_amplitude * g * dy / d;
                }
            }
            let n = [
                base[0] + p[0] * t1[0] + p[1] * t2[0],
                base[1] + p[0] * t1[1] + p[1] * t2[1],
                base[2] + p[0] * t1[2] + p[1] * t2[2],
            ];
            let l = norm(&n);
            normals.push([n[0] / l, n[1] / l, n[2] / l]);
            albedo.push(alo + (ahi - alo) * (albedo_noise.sample(u, v) + 1.0) / 2.0);
        }
    }

    let lights = rig.directions();
    let mut shade = vec![vec![1.0f64; n_px]; 2];
    let r2 = DOT_RADIUS * DOT_RADIUS;
    let stamp = |cx: f64, cy: f64, mut f: Box<dyn FnMut(usize) + '_>| {
        let (x0, x1) = ((cx - DOT_RADIUS).floor().max(0.0) as usize, (cx + DOT_RADIUS).ceil() as usize);
        let (y0, y1) = ((cy - DOT_RADIUS).floor().max(0.0) as usize, (cy + DOT_RADIUS).ceil() as usize);
        for y in y0..y1.min(height) {
            for x in x0..x1.min(width) {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r2 {
                    f(y * width + x);
                }
            }
        }
    };
    for (&(cx, cy), &d) in dots.iter().zip(&shadow_light) {
        let (lx, ly) = (lights[d][0], lights[d][1]);
        let lxy = lx.hypot(ly);
        if lxy > 1e-9 {
            let (sx, sy) = (cx - SHADOW_OFFSET * lx / lxy, cy - SHADOW_OFFSET * ly / lxy);
            let layer = &mut shade[d];
            stamp(sx, sy, Box::new(|i| layer[i] = SHADOW_DARKENING));
        }
    }
    for &(cx, cy) in &dots {
        stamp(cx, cy, Box::new(|i| albedo[i] = 0.0));
    }

    let mut noise_rng = rng_for(spec.texture_seed, 1);
    let gauss = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("sigma is finite and positive"));
    let mut clamped = 0usize;
    let mut images = [vec![0u8; n_px], vec![0u8; n_px]];
    for i in 0..n_px {
        for (d, image) in images.iter_mut().enumerate() {
            let mut v = albedo[i] * dot(&lights[d], &normals[i]).max(0.0) * shade[d][i];
            if let Some(g) = &gauss {
                v += g.sample(&mut noise_rng);
            }
            if !(0.0..=1.0).contains(&v) {
                clamped += 1;
            }
            image[i] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }

    let mask = roi::annulus_mask(&geometry, width, height)?;
    let [left, right] = images;
    let pair = ImagePair::new(
        GrayImage::new(width, height, left)?,
        GrayImage::new(width, height, right)?,
        mask.clone(),
        mask,
        match spec.kind {
            SurfaceKind::FlatIris => Label::BonaFide,
            SurfaceKind::BumpyLens => Label::Attack,
        },
        "",
    )?;
    let truth_normals =
        NormalField::from_normals(width, height, normals).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(SynthSample {
        pair,
        truth_normals,
        geometry,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub n_bonafide: usize,
    pub n_attack: usize,
    pub n_clear: usize,
    pub width: usize,
    pub height: usize,
    pub geometry: AnnulusGeometry,
    pub noise_sigma: f64,
    pub flat_amplitude: f64,
    pub bump_amplitude: f64,
    pub bump_count: usize,
    pub dot_fraction: f64,
    pub rim_amplitude: f64,
    pub albedo_range: [f64; 2],
    /// Attacks carry their bumps only here when set.
    pub attack_region: Option<PolarWindow>,
}

impl Default for CorpusParams {
    fn default() -> Self {
        let c = DEFAULT_SIZE as f64 / 2.0;
        Self {
            n_bonafide: 100,
            n_attack: 100,
            n_clear: 0,
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
            geometry: AnnulusGeometry::concentric((c, c), 14.0, 42.0).expect("default geometry is valid"),
            noise_sigma: DEFAULT_NOISE,
            flat_amplitude: DEFAULT_FLAT_AMPLITUDE,
            bump_amplitude: DEFAULT_BUMP_AMPLITUDE,
            bump_count: DEFAULT_BUMP_COUNT,
            dot_fraction: DEFAULT_DOT_FRACTION,
            rim_amplitude: DEFAULT_RIM_AMPLITUDE,
            albedo_range: DEFAULT_ALBEDO,
            attack_region: None,
        }
    }
}

/// What sample `index` of a corpus looks like, before rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub sample_id: String,
    pub label: Label,
    pub tag: &'static str,
    pub spec: SurfaceSpec,
}

/// Sample plan of a corpus: bona fide, then attacks alternating regular and
/// irregular dot layouts, then clear-lens bona fide.
pub fn corpus_plan(params: &CorpusParams, seed: u64) -> Vec<CorpusItem> {
    let total = params.n_bonafide + params.n_attack + params.n_clear;
    (0..total)
        .map(|index| {
            let texture_seed = rng_for(seed, index as u64).next_u64();
            let mut flat = SurfaceSpec::flat(texture_seed);
            flat.bump_amplitude = params.flat_amplitude;
            flat.albedo_range = params.albedo_range;
            if index < params.n_bonafide {
                CorpusItem {
                    sample_id: format!("bf{index:04}"),
                    label: Label::BonaFide,
                    tag: TAG_AUTHENTIC,
                    spec: flat,
                }
            } else if index < params.n_bonafide + params.n_attack {
                let k = index - params.n_bonafide;
                let regular = k.is_multiple_of(2);
                let spec = SurfaceSpec {
                    kind: SurfaceKind::BumpyLens,
                    bump_amplitude: params.bump_amplitude,
                    bump_count: params.bump_count,
                    opaque_dot_fraction: params.dot_fraction,
                    dot_layout: if regular { DotLayout::Lattice } else { DotLayout::Scattered },
                    bump_region: params.attack_region,
                    background_amplitude: params.flat_amplitude,
                    ..flat
                };
                CorpusItem {
                    sample_id: format!("at{k:04}"),
                    label: Label::Attack,
                    tag: if regular { TAG_REGULAR } else { TAG_IRREGULAR },
                    spec,
                }
            } else {
                let k = index - params.n_bonafide - params.n_attack;
                CorpusItem {
                    sample_id: format!("cl{k:04}"),
                    label: Label::BonaFide,
                    tag: TAG_CLEAR,
                    spec: SurfaceSpec {
                        rim_amplitude: params.rim_amplitude,
                        ..flat
                    },
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    /// Total clamped values across all samples.
    pub clamped: usize,
}

/// Renders a corpus into `dir` with a `manifest.csv`.
pub fn generate_corpus(dir: impl AsRef<Path>, params: &CorpusParams, rig: &LightRig, seed: u64) -> Result<Corpus> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| ImageIoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let plan = corpus_plan(params, seed);
    let rendered = plan
        .par_iter()
        .map(|item| -> Result<(ManifestEntry, usize)> {
            let s = generate(&item.spec, params.geometry, rig, params.width, params.height, params.noise_sigma)?;
            let left = dir.join(format!("{}_left.pgm", item.sample_id));
            let right = dir.join(format!("{}_right.pgm", item.sample_id));
            let mask = dir.join(format!("{}_mask.pgm", item.sample_id));
            imageio::save_gray(&s.pair.left, &left)?;
            imageio::save_gray(&s.pair.right, &right)?;
            imageio::save_mask(&s.pair.mask_left, &mask)?;
            Ok((
                ManifestEntry {
                    sample_id: item.sample_id.clone(),
                    left,
                    right,
                    mask_left: mask.clone(),
                    mask_right: mask,
                    annulus: Some(params.geometry),
                    label: item.label,
                    tags: vec![item.tag.to_string()],
                },
                s.clamped,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let clamped = rendered.iter().map(|(_, c)| c).sum();
    if clamped > 0 {
        log::info!("{clamped} rendered values were clamped to [0, 1]");
    }
    let manifest = DatasetManifest {
        entries: rendered.into_iter().map(|(e, _)| e).collect(),
    };
    let manifest_path = dir.join("manifest.csv");
    imageio::write_manifest(&manifest, &manifest_path)?;
    Ok(Corpus {
        manifest,
        manifest_path,
        clamped,
    })
}
