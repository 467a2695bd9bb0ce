//! Per-pixel surface normals from k >= 2 images under known light directions.
//!
//! The light matrix `L` is k x 3 with one direction per row, so that the
//! Lambertian observation is `I = L * n_hat` with `n_hat = albedo * n`. The
//! solver applies the Moore-Penrose pseudoinverse of `L`. For k = 2 that is
//! the minimum-norm solution `L^T (L L^T)^-1 I`, which has no component along
//! `d1 x d2`; for k >= 3 it is the ordinary least-squares solution.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{self, BinaryMask, GrayImage, ImageIoError, ImagePair};

/// Below this `|n_hat|` the normal is undefined and the pixel is marked invalid.
pub const NULL_NORM: f64 = 1e-12;
/// Rig directions must be unit length to this tolerance.
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Relative singular value cutoff for rank deficiency.
pub const RANK_TOLERANCE: f64 = 1e-9;
/// JSON rig vectors shorter than this are rejected before normalization.
pub const MIN_JSON_NORM: f64 = 1e-6;

const NRM_MAGIC: &[u8; 4] = b"NRM1";

#[derive(Debug, Error)]
pub enum StereoError {
    #[error("light rig needs at least 2 directions, got {0}")]
    TooFewLights(usize),
    #[error("light direction {index} is not unit length (norm {norm})")]
    NotUnit { index: usize, norm: f64 },
    #[error("light directions {0} and {1} are parallel")]
    ParallelLights(usize, usize),
    #[error("light matrix is rank deficient (singular value ratio {0:e})")]
    RankDeficient(f64),
    #[error("non-finite intensity input")]
    NonFiniteInput,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid light rig file: {0}")]
    InvalidRigFile(String),
    #[error("invalid normal field file: {0}")]
    InvalidNormalFile(String),
    #[error(transparent)]
    Io(#[from] ImageIoError),
}

pub type Result<T, E = StereoError> = std::result::Result<T, E>;

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Unit illumination directions, pointing from the surface toward each light.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LightRig {
    directions: Vec<Vec3>,
}

#[derive(Deserialize)]
struct RigFile {
    directions: Vec<Vec<f64>>,
}

impl LightRig {
    pub fn new(directions: Vec<Vec3>) -> Result<Self> {
        if directions.len() < 2 {
            return Err(StereoError::TooFewLights(directions.len()));
        }
        for (index, d) in directions.iter().enumerate() {
            let n = norm(d);
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(StereoError::NotUnit { index, norm: n });
            }
        }
        for i in 0..directions.len() {
            for j in i + 1..directions.len() {
                if dot(&directions[i], &directions[j]).abs() >= 1.0 - UNIT_TOLERANCE {
                    return Err(StereoError::ParallelLights(i, j));
                }
            }
        }
        Ok(Self { directions })
    }

    /// Normalizes each vector first; fails if any is shorter than [`MIN_JSON_NORM`].
    pub fn from_unnormalized(directions: Vec<Vec3>) -> Result<Self> {
        let mut out = Vec::with_capacity(directions.len());
        for (index, d) in directions.into_iter().enumerate() {
            let n = norm(&d);
            if !n.is_finite() || n < MIN_JSON_NORM {
                return Err(StereoError::NotUnit { index, norm: n });
            }
            if (n - 1.0).abs() <= UNIT_TOLERANCE {
                out.push(d);
            } else {
                out.push([d[0] / n, d[1] / n, d[2] / n]);
            }
        }
        Self::new(out)
    }

    /// Two lights at `angle` radians either side of the optical axis in the
    /// x-z plane: left `(-sin, 0, cos)`, right `(sin, 0, cos)`.
    pub fn symmetric(angle: f64) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        Self::new(vec![[-s, 0.0, c], [s, 0.0, c]])
    }

    /// Symmetric pair at 20 degrees, used by synthetic experiments.
    pub fn default_test_rig() -> Self {
        Self::symmetric(20f64.to_radians()).expect("20 degree rig is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RigFile =
            serde_json::from_str(text).map_err(|e| StereoError::InvalidRigFile(e.to_string()))?;
        let dirs = file
            .directions
            .into_iter()
            .map(|v| {
                <[f64; 3]>::try_from(v.as_slice())
                    .map_err(|_| StereoError::InvalidRigFile(format!("direction {v:?} is not a 3-vector")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_unnormalized(dirs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| {
            StereoError::Io(ImageIoError::Io {
                path: path.to_path_buf(),
                source,
            })
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rig serializes")
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Unit `d1 x d2` for the first two lights: the direction a k = 2 solve cannot see.
    pub fn null_direction(&self) -> Vec3 {
        let c = cross(&self.directions[0], &self.directions[1]);
        let n = norm(&c);
        [c[0] / n, c[1] / n, c[2] / n]
    }
}

/// Rig-level factorization: the 3 x k pseudoinverse, computed once.
#[derive(Debug, Clone)]
pub struct PixelSolver {
    k: usize,
    /// Row-major 3 x k.
    pinv: Vec<f64>,
}

impl PixelSolver {
    pub fn new(rig: &LightRig) -> Result<Self> {
        let k = rig.len();
        let l = DMatrix::from_fn(k, 3, |i, j| rig.directions[i][j]);
        let svd = l.svd(true, true);
        let sv = &svd.singular_values;
        let rank = k.min(3);
        let max = sv.max();
        let min = sv.iter().copied().take(rank).fold(f64::INFINITY, f64::min);
        if max.is_nan() || max <= 0.0 || min < RANK_TOLERANCE * max {
            return Err(StereoError::RankDeficient(if max > 0.0 { min / max } else { 0.0 }));
        }
        let pinv = svd
            .pseudo_inverse(RANK_TOLERANCE * max)
            .map_err(|_| StereoError::RankDeficient(min / max))?;
        debug_assert_eq!(pinv.shape(), (3, k));
        let mut flat = Vec::with_capacity(3 * k);
        for r in 0..3 {
            for c in 0..k {
                flat.push(pinv[(r, c)]);
            }
        }
        Ok(Self { k, pinv: flat })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Solves one pixel without validation.
    #[inline]
    pub(crate) fn apply(&self, intensities: &[f64]) -> Vec3 {
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.pinv[r * self.k..(r + 1) * self.k];
            *o = row.iter().zip(intensities).map(|(p, i)| p * i).sum();
        }
        out
    }

    pub fn solve(&self, intensities: &[f64]) -> Result<Vec3> {
        if intensities.len() != self.k {
            return Err(StereoError::DimensionMismatch(format!(
                "{} intensities for a {}-light rig",
                intensities.len(),
                self.k
            )));
        }
        if intensities.iter().any(|v| !v.is_finite()) {
            return Err(StereoError::NonFiniteInput);
        }
        Ok(self.apply(intensities))
    }
}

/// Least-squares (k >= 3) or minimum-norm (k = 2) solution of `I = L n_hat`.
pub fn solve_pixel(intensities: &[f64], rig: &LightRig) -> Result<Vec3> {
    PixelSolver::new(rig)?.solve(intensities)
}

/// Per-pixel unit normals with their unnormalized solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    width: usize,
    height: usize,
    normals: Vec<Vec3>,
    raw: Vec<Vec3>,
    valid: BinaryMask,
}

impl NormalField {
    /// Builds a field from raw solutions, normalizing each and marking
    /// pixels with `|n_hat| < NULL_NORM` invalid.
    pub fn from_raw(width: usize, height: usize, raw: Vec<Vec3>) -> Result<Self> {
        if raw.len() != width * height {
            return Err(StereoError::DimensionMismatch(format!(
                "{} vectors for {width}x{height}",
                raw.len()
            )));
        }
        let mut normals = Vec::with_capacity(raw.len());
        let mut valid = Vec::with_capacity(raw.len());
        for v in &raw {
            let n = norm(v);
            if n.is_finite() && n >= NULL_NORM {
                normals.push([v[0] / n, v[1] / n, v[2] / n]);
                valid.push(true);
            } else {
                normals.push([0.0; 3]);
                valid.push(false);
            }
        }
        let valid = BinaryMask::new(width, height, valid)?;
        Ok(Self {
            width,
            height,
            normals,
            raw,
            valid,
        })
    }

    /// Builds a field from unit normals. Zero vectors become invalid pixels.
    pub fn from_normals(width: usize, height: usize, normals: Vec<Vec3>) -> Result<Self> {
        Self::from_raw(width, height, normals)
    }

    /// Copy with pixels outside `mask` marked invalid.
    pub fn restricted(&self, mask: &BinaryMask) -> Result<Self> {
        if !mask.same_dims(self.width, self.height) {
            return Err(StereoError::DimensionMismatch(format!(
                "mask {}x{} for field {}x{}",
                mask.width(),
                mask.height(),
                self.width,
                self.height
            )));
        }
        let mut out = self.clone();
        let bits: Vec<bool> = self.valid.bits().iter().zip(mask.bits()).map(|(a, b)| *a && *b).collect();
        for (n, keep) in out.normals.iter_mut().zip(&bits) {
            if !keep {
                *n = [0.0; 3];
            }
        }
        out.valid = BinaryMask::new(self.width, self.height, bits)?;
        Ok(out)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn raw(&self) -> &[Vec3] {
        &self.raw
    }

    pub fn valid(&self) -> &BinaryMask {
        &self.valid
    }

    pub fn normal(&self, x: usize, y: usize) -> Vec3 {
        self.normals[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.get(x, y)
    }

    /// Little-endian `NRM1` encoding: magic, width and height as u32, three
    /// f64 per pixel (unit normal, zero where invalid), then the validity
    /// bitmap packed LSB-first in row-major order.
    pub fn to_nrm1(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(12 + n * 24 + n.div_ceil(8));
        out.extend_from_slice(NRM_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.normals {
            for c in v {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        let mut bitmap = vec![0u8; n.div_ceil(8)];
        for (i, &b) in self.valid.bits().iter().enumerate() {
            if b {
                bitmap[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bitmap);
        out
    }

    /// Decodes `NRM1`. The raw solutions are not stored, so `raw()` of the
    /// result equals `normals()`.
    pub fn from_nrm1(data: &[u8]) -> Result<Self> {
        let bad = |m: &str| StereoError::InvalidNormalFile(m.to_string());
        let mut cur = data;
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != NRM_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u = [0u8; 4];
        cur.read_exact(&mut u).map_err(|_| bad("truncated header"))?;
        let width = u32::from_le_bytes(u) as usize;
        cur.read_exact(&mut u).map_err(|_| bad("truncated header"))?;
        let height = u32::from_le_bytes(u) as usize;
        if width == 0 || height == 0 {
            return Err(bad("zero dimension"));
        }
        let n = width * height;
        if cur.len() != n * 24 + n.div_ceil(8) {
            return Err(bad("payload size does not match dimensions"));
        }
        let mut normals = Vec::with_capacity(n);
        let mut f = [0u8; 8];
        for _ in 0..n {
            let mut v = [0.0; 3];
            for c in v.iter_mut() {
                cur.read_exact(&mut f).map_err(|_| bad("truncated payload"))?;
                *c = f64::from_le_bytes(f);
            }
            normals.push(v);
        }
        let bits: Vec<bool> = (0..n).map(|i| cur[i / 8] & (1 << (i % 8)) != 0).collect();
        for (v, &b) in normals.iter().zip(&bits) {
            if b && ((norm(v) - 1.0).abs() > 1e-6) {
                return Err(bad("valid pixel with non-unit normal"));
            }
        }
        Ok(Self {
            width,
            height,
            raw: normals.clone(),
            normals,
            valid: BinaryMask::new(width, height, bits)?,
        })
    }

    pub fn save_nrm1(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|source| ImageIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        f.write_all(&self.to_nrm1()).map_err(|source| ImageIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }

    pub fn load_nrm1(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|source| ImageIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_nrm1(&data)
    }

    /// One component mapped from [-1, 1] to [0, 255]; invalid pixels are 0.
    pub fn component_image(&self, axis: usize) -> GrayImage {
        let pixels = self
            .normals
            .iter()
            .zip(self.valid.bits())
            .map(|(v, &ok)| {
                if ok {
                    ((v[axis].clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
                } else {
                    0
                }
            })
            .collect();
        GrayImage::new(self.width, self.height, pixels).expect("dimensions already validated")
    }
}

/// Normals for a two-image pair. Intensities are divided by 255 before solving.
pub fn estimate_normals(pair: &ImagePair, rig: &LightRig) -> Result<NormalField> {
    if rig.len() != 2 {
        return Err(StereoError::DimensionMismatch(format!(
            "an image pair needs a 2-light rig, got {} lights",
            rig.len()
        )));
    }
    estimate_normals_multi(&[&pair.left, &pair.right], rig)
}

/// Normals from k co-registered images, one per rig direction.
pub fn estimate_normals_multi(images: &[&GrayImage], rig: &LightRig) -> Result<NormalField> {
    if images.len() != rig.len() {
        return Err(StereoError::DimensionMismatch(format!(
            "{} images for a {}-light rig",
            images.len(),
            rig.len()
        )));
    }
    let (w, h) = (images[0].width(), images[0].height());
    if images.iter().any(|im| im.width() != w || im.height() != h) {
        return Err(StereoError::DimensionMismatch(
            "images have different dimensions".into(),
        ));
    }
    let solver = PixelSolver::new(rig)?;
    let k = images.len();
    let mut raw = vec![[0.0; 3]; w * h];
    raw.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut buf = vec![0.0; k];
        for (x, out) in row.iter_mut().enumerate() {
            for (b, im) in buf.iter_mut().zip(images) {
                *b = im.get(x, y) as f64 / 255.0;
            }
            *out = solver.apply(&buf);
        }
    });
    NormalField::from_raw(w, h, raw)
}

/// Writes `nx.pgm`, `ny.pgm` and `nz.pgm` visualizations into `dir`.
pub fn save_component_images(field: &NormalField, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for (axis, name) in ["nx.pgm", "ny.pgm", "nz.pgm"].iter().enumerate() {
        imageio::save_gray(&field.component_image(axis), dir.join(name))?;
    }
    Ok(())
}

/// Applies the same scaling to every intensity; used by invariance checks.
#[cfg(test)]
fn scaled(v: &[f64], a: f64) -> Vec<f64> {
    v.iter().map(|x| x * a).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn identity_rig_returns_intensities() {
        let rig = LightRig::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let n = solve_pixel(&[0.3, 0.4, 0.5], &rig).unwrap();
        assert!(close(n, [0.3, 0.4, 0.5], 1e-15));
    }

    #[test]
    fn two_axis_rig_has_zero_out_of_span_component() {
        let rig = LightRig::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let n = solve_pixel(&[0.6, 0.8], &rig).unwrap();
        assert!(close(n, [0.6, 0.8, 0.0], 1e-15));
        let f = NormalField::from_raw(1, 1, vec![n]).unwrap();
        assert!(close(f.normal(0, 0), [0.6, 0.8, 0.0], 1e-15));
    }

    #[test]
    fn rig_validation() {
        assert!(matches!(
            LightRig::new(vec![[1.0, 0.0, 0.0]]),
            Err(StereoError::TooFewLights(1))
        ));
        assert!(matches!(
            LightRig::new(vec![[1.0, 0.0, 0.0], [0.5, 0.0, 0.0]]),
            Err(StereoError::NotUnit { index: 1, .. })
        ));
        assert!(matches!(
            LightRig::new(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
            Err(StereoError::ParallelLights(0, 1))
        ));
        assert!(matches!(
            LightRig::from_json(r#"{"directions": [[0,0,1e-7],[1,0,0]]}"#),
            Err(StereoError::NotUnit { index: 0, .. })
        ));
    }

    #[test]
    fn coplanar_k3_rig_is_rank_deficient() {
        let s = 0.5f64.sqrt();
        let rig = LightRig::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [s, s, 0.0]]).unwrap();
        assert!(matches!(PixelSolver::new(&rig), Err(StereoError::RankDeficient(_))));
    }

    #[test]
    fn json_rig_is_normalized() {
        let rig = LightRig::from_json(r#"{"directions": [[-1, 0, 2], [1, 0, 2]]}"#).unwrap();
        for d in rig.directions() {
            assert!((norm(d) - 1.0).abs() < 1e-15);
        }
        let back = LightRig::from_json(&rig.to_json()).unwrap();
        assert_eq!(back, rig);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let rig = LightRig::default_test_rig();
        assert!(matches!(
            solve_pixel(&[f64::NAN, 0.1], &rig),
            Err(StereoError::NonFiniteInput)
        ));
    }

    #[test]
    fn scaling_invariance_of_unit_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rig = LightRig::default_test_rig();
        let solver = PixelSolver::new(&rig).unwrap();
        for _ in 0..200 {
            let i = [rng.random::<f64>(), rng.random::<f64>()];
            let a = rng.random_range(0.01..10.0);
            let n1 = solver.solve(&i).unwrap();
            let n2 = solver.solve(&scaled(&i, a)).unwrap();
            for c in 0..3 {
                assert!((n2[c] - a * n1[c]).abs() <= 1e-12 * (1.0 + a));
            }
            let u1 = NormalField::from_raw(1, 1, vec![n1]).unwrap().normal(0, 0);
            let u2 = NormalField::from_raw(1, 1, vec![n2]).unwrap().normal(0, 0);
            assert!(close(u1, u2, 1e-12));
        }
    }

    #[test]
    fn minimum_norm_solution_is_orthogonal_to_null_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0];
            let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0];
            let Ok(rig) = LightRig::from_unnormalized(vec![a, b]) else { continue };
            let Ok(solver) = PixelSolver::new(&rig) else { continue };
            let n = solver.solve(&[rng.random(), rng.random()]).unwrap();
            let c = rig.null_direction();
            assert!(dot(&n, &c).abs() < 1e-9);
        }
    }

    #[test]
    fn residual_is_optimal_for_overdetermined_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dirs: Vec<Vec3> = (0..6)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..1.0)])
            .collect();
        let rig = LightRig::from_unnormalized(dirs).unwrap();
        let intens: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        let n = solve_pixel(&intens, &rig).unwrap();
        let residual = |v: &Vec3| -> f64 {
            rig.directions()
                .iter()
                .zip(&intens)
                .map(|(d, i)| (dot(d, v) - i).powi(2))
                .sum::<f64>()
        };
        let best = residual(&n);
        for _ in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-6.0..0.0));
            let v = [
                n[0] + scale * rng.random_range(-1.0..1.0),
                n[1] + scale * rng.random_range(-1.0..1.0),
                n[2] + scale * rng.random_range(-1.0..1.0),
            ];
            assert!(best <= residual(&v) + 1e-15);
        }
    }

    #[test]
    fn constant_pair_under_symmetric_rig_points_up() {
        let rig = LightRig::symmetric(0.4).unwrap();
        let img = GrayImage::filled(5, 4, 90).unwrap();
        let pair = ImagePair::unmasked(img.clone(), img).unwrap();
        let f = estimate_normals(&pair, &rig).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert!(f.is_valid(x, y));
                assert!(close(f.normal(x, y), [0.0, 0.0, 1.0], 1e-12));
            }
        }
    }

    #[test]
    fn dark_pixel_is_invalid() {
        let rig = LightRig::default_test_rig();
        let left = GrayImage::new(2, 1, vec![0, 50]).unwrap();
        let right = GrayImage::new(2, 1, vec![0, 60]).unwrap();
        let pair = ImagePair::unmasked(left, right).unwrap();
        let f = estimate_normals(&pair, &rig).unwrap();
        assert!(!f.is_valid(0, 0));
        assert!(f.is_valid(1, 0));
        assert!((norm(&f.normal(1, 0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_needs_two_light_rig() {
        let rig = LightRig::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let img = GrayImage::filled(2, 2, 10).unwrap();
        let m = BinaryMask::filled(2, 2, true).unwrap();
        let pair = ImagePair::new(img.clone(), img, m.clone(), m, Label::Unknown, "s").unwrap();
        assert!(matches!(
            estimate_normals(&pair, &rig),
            Err(StereoError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn nrm1_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw: Vec<Vec3> = (0..35)
            .map(|i| {
                if i % 7 == 0 {
                    [0.0; 3]
                } else {
                    [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0)]
                }
            })
            .collect();
        let f = NormalField::from_raw(7, 5, raw).unwrap();
        let bytes = f.to_nrm1();
        assert_eq!(&bytes[..4], b"NRM1");
        let back = NormalField::from_nrm1(&bytes).unwrap();
        assert_eq!(back.normals(), f.normals());
        assert_eq!(back.valid(), f.valid());
        assert_eq!(back.to_nrm1(), bytes);
        assert!(NormalField::from_nrm1(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn component_image_mapping() {
        let f = NormalField::from_raw(3, 1, vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]]).unwrap();
        assert_eq!(f.component_image(0).pixels(), &[0, 255, 0]);
        assert_eq!(f.component_image(1).pixels(), &[128, 128, 0]);
    }
}
