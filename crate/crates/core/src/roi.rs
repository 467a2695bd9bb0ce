//! Regions of interest: mask intersection, the iris annulus, and its
//! decomposition into radial x angular sectors.
//!
//! Pixels are sampled at their centers `(x + 0.5, y + 0.5)`. Sector angles
//! are measured around the pupil center from the +x axis, increasing toward
//! +y (image rows grow downward, so this is visually clockwise). The radial
//! coordinate follows the rubber-sheet convention: along the ray from the
//! pupil center, 0 at the pupil boundary and 1 at the iris boundary, so
//! non-concentric circles are handled.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{self, BinaryMask, ImageIoError, ImagePair};

#[derive(Debug, Error)]
pub enum RoiError {
    #[error("invalid annulus geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid sector grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

pub type Result<T, E = RoiError> = std::result::Result<T, E>;

/// Pupil and iris boundary circles in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusGeometry {
    pub pupil_center: (f64, f64),
    pub pupil_radius: f64,
    pub iris_center: (f64, f64),
    pub iris_radius: f64,
}

impl AnnulusGeometry {
    pub fn new(
        pupil_center: (f64, f64),
        pupil_radius: f64,
        iris_center: (f64, f64),
        iris_radius: f64,
    ) -> Result<Self> {
        let g = Self {
            pupil_center,
            pupil_radius,
            iris_center,
            iris_radius,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn concentric(center: (f64, f64), pupil_radius: f64, iris_radius: f64) -> Result<Self> {
        Self::new(center, pupil_radius, center, iris_radius)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.pupil_center.0,
            self.pupil_center.1,
            self.pupil_radius,
            self.iris_center.0,
            self.iris_center.1,
            self.iris_radius,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(RoiError::InvalidGeometry("non-finite parameter".into()));
        }
        if self.pupil_radius <= 0.0 {
            return Err(RoiError::InvalidGeometry(format!(
                "pupil radius {} must be positive",
                self.pupil_radius
            )));
        }
        if self.pupil_radius >= self.iris_radius {
            return Err(RoiError::InvalidGeometry(format!(
                "pupil radius {} must be smaller than iris radius {}",
                self.pupil_radius, self.iris_radius
            )));
        }
        let offset = (self.pupil_center.0 - self.iris_center.0)
            .hypot(self.pupil_center.1 - self.iris_center.1);
        if offset + self.pupil_radius > self.iris_radius {
            return Err(RoiError::InvalidGeometry(
                "pupil circle is not contained in the iris circle".into(),
            ));
        }
        Ok(())
    }

    /// Pixel-center containment test: inside the iris circle (inclusive) and
    /// outside the pupil circle (exclusive).
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let (ix, iy) = (px - self.iris_center.0, py - self.iris_center.1);
        let (ux, uy) = (px - self.pupil_center.0, py - self.pupil_center.1);
        ix * ix + iy * iy <= self.iris_radius * self.iris_radius
            && ux * ux + uy * uy > self.pupil_radius * self.pupil_radius
    }

    /// Rubber-sheet polar coordinates `(rho, theta)` of a pixel center, with
    /// `rho` in [0, 1] between the boundaries and `theta` in [0, 2pi).
    /// Returns `None` outside the annulus.
    pub fn polar(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        if !self.contains(x, y) {
            return None;
        }
        let (dx, dy) = (
            x as f64 + 0.5 - self.pupil_center.0,
            y as f64 + 0.5 - self.pupil_center.1,
        );
        let dist = dx.hypot(dy);
        let (ux, uy) = (dx / dist, dy / dist);
        // Distance along the ray to the iris circle: |w + s u| = R_i with
        // w = pupil_center - iris_center.
        let (wx, wy) = (
            self.pupil_center.0 - self.iris_center.0,
            self.pupil_center.1 - self.iris_center.1,
        );
        let b = ux * wx + uy * wy;
        let c = wx * wx + wy * wy - self.iris_radius * self.iris_radius;
        let outer = -b + (b * b - c).max(0.0).sqrt();
        let span = outer - self.pupil_radius;
        let rho = if span > 0.0 {
            ((dist - self.pupil_radius) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let mut theta = dy.atan2(dx);
        if theta < 0.0 {
            theta += TAU;
        }
        if theta >= TAU {
            theta = 0.0;
        }
        Some((rho, theta))
    }
}

/// Logical AND of the left and right occlusion masks.
pub fn combined_mask(pair: &ImagePair) -> Result<BinaryMask> {
    Ok(pair.mask_left.and(&pair.mask_right)?)
}

pub fn annulus_mask(geom: &AnnulusGeometry, width: usize, height: usize) -> Result<BinaryMask> {
    geom.validate()?;
    let mut bits = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            bits.push(geom.contains(x, y));
        }
    }
    Ok(BinaryMask::new(width, height, bits)?)
}

/// The annulus split into `radial` rings and `angular` wedges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorGrid {
    geometry: AnnulusGeometry,
    radial: usize,
    angular: usize,
}

impl SectorGrid {
    pub fn new(geometry: AnnulusGeometry, radial: usize, angular: usize) -> Result<Self> {
        geometry.validate()?;
        if radial == 0 || angular == 0 {
            return Err(RoiError::InvalidGrid(format!(
                "grid {radial}x{angular} must have at least one section each way"
            )));
        }
        Ok(Self {
            geometry,
            radial,
            angular,
        })
    }

    pub fn geometry(&self) -> &AnnulusGeometry {
        &self.geometry
    }

    pub fn radial(&self) -> usize {
        self.radial
    }

    pub fn angular(&self) -> usize {
        self.angular
    }

    pub fn sector_count(&self) -> usize {
        self.radial * self.angular
    }

    /// `(i, j)` for a pixel in the annulus, `None` outside it.
    pub fn sector_index(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let (rho, theta) = self.geometry.polar(x, y)?;
        let i = ((self.radial as f64 * rho).floor() as usize).min(self.radial - 1);
        let j = ((self.angular as f64 * theta / TAU).floor() as usize).min(self.angular - 1);
        Some((i, j))
    }

    /// Flat sector id `i * angular + j`.
    pub fn sector_id(&self, x: usize, y: usize) -> Option<usize> {
        self.sector_index(x, y).map(|(i, j)| i * self.angular + j)
    }

    /// Sector id of every pixel in row-major order.
    pub fn sector_map(&self, width: usize, height: usize) -> Vec<Option<usize>> {
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                out.push(self.sector_id(x, y));
            }
        }
        out
    }

    /// 16-bit PGM with `id + 1` per pixel and 0 outside the annulus.
    pub fn save_sector_map(&self, width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
        let values: Vec<u16> = self
            .sector_map(width, height)
            .into_iter()
            .map(|s| s.map(|id| (id + 1).min(u16::MAX as usize) as u16).unwrap_or(0))
            .collect();
        Ok(imageio::save_gray16(width, height, &values, path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::{GrayImage, Label};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_with_masks(a: BinaryMask, b: BinaryMask) -> ImagePair {
        let img = GrayImage::filled(a.width(), a.height(), 0).unwrap();
        ImagePair::new(img.clone(), img, a, b, Label::Unknown, "t").unwrap()
    }

    #[test]
    fn combined_mask_cases() {
        let t = BinaryMask::filled(4, 3, true).unwrap();
        assert_eq!(combined_mask(&pair_with_masks(t.clone(), t.clone())).unwrap().count(), 12);
        let left: Vec<bool> = (0..12).map(|i| i < 6).collect();
        let right: Vec<bool> = (0..12).map(|i| i >= 6).collect();
        let p = pair_with_masks(
            BinaryMask::new(4, 3, left).unwrap(),
            BinaryMask::new(4, 3, right).unwrap(),
        );
        assert_eq!(combined_mask(&p).unwrap().count(), 0);
    }

    #[test]
    fn combined_mask_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
            let a: Vec<bool> = (0..w * h).map(|_| rng.random()).collect();
            let b: Vec<bool> = (0..w * h).map(|_| rng.random()).collect();
            let mut naive = 0;
            for y in 0..h {
                for x in 0..w {
                    if a[y * w + x] && b[y * w + x] {
                        naive += 1;
                    }
                }
            }
            let ma = BinaryMask::new(w, h, a).unwrap();
            let mb = BinaryMask::new(w, h, b).unwrap();
            let out = combined_mask(&pair_with_masks(ma.clone(), mb.clone())).unwrap();
            assert_eq!(out.count(), naive);
            // commutative, idempotent, subset
            assert_eq!(out, mb.and(&ma).unwrap());
            assert_eq!(out.and(&out).unwrap(), out);
            for (i, &bit) in out.bits().iter().enumerate() {
                assert!(!bit || (ma.bits()[i] && mb.bits()[i]));
            }
        }
    }

    #[test]
    fn combined_mask_dimension_mismatch() {
        let a = BinaryMask::filled(2, 2, true).unwrap();
        let b = BinaryMask::filled(3, 2, true).unwrap();
        assert!(a.and(&b).is_err());
    }

    #[test]
    fn small_annulus_matches_enumeration() {
        // Centers at (3.5, 3.5): pixel-center offsets are integers, so the
        // squared distances below are exact.
        let g = AnnulusGeometry::concentric((3.5, 3.5), 1.0, 3.0).unwrap();
        let m = annulus_mask(&g, 7, 7).unwrap();
        let mut expected = Vec::new();
        for y in 0i64..7 {
            for x in 0i64..7 {
                let d2 = (x - 3).pow(2) + (y - 3).pow(2);
                expected.push(d2 <= 9 && d2 > 1);
            }
        }
        assert_eq!(m.bits(), expected.as_slice());
        // 29 pixels within radius 3, minus the 5 within radius 1.
        assert_eq!(m.count(), 24);
    }

    #[test]
    fn equal_radii_are_invalid() {
        let g = AnnulusGeometry {
            pupil_center: (5.0, 5.0),
            pupil_radius: 3.0,
            iris_center: (5.0, 5.0),
            iris_radius: 3.0,
        };
        assert!(matches!(annulus_mask(&g, 10, 10), Err(RoiError::InvalidGeometry(_))));
        assert!(AnnulusGeometry::concentric((5.0, 5.0), 0.0, 3.0).is_err());
        assert!(AnnulusGeometry::new((1.0, 5.0), 2.0, (5.0, 5.0), 4.0).is_err());
    }

    #[test]
    fn large_annulus_area() {
        let g = AnnulusGeometry::concentric((150.0, 150.0), 40.0, 100.0).unwrap();
        let m = annulus_mask(&g, 300, 300).unwrap();
        let area = std::f64::consts::PI * (100.0f64.powi(2) - 40.0f64.powi(2));
        let perimeter = TAU * (100.0 + 40.0);
        assert!((m.count() as f64 - area).abs() <= perimeter);
    }

    #[test]
    fn growing_iris_never_removes_pixels() {
        let small = annulus_mask(&AnnulusGeometry::concentric((20.0, 21.0), 5.0, 12.0).unwrap(), 40, 40).unwrap();
        let big = annulus_mask(&AnnulusGeometry::concentric((20.0, 21.0), 5.0, 15.5).unwrap(), 40, 40).unwrap();
        assert_eq!(small.and(&big).unwrap(), small);
    }

    #[test]
    fn single_sector_grid() {
        let g = AnnulusGeometry::concentric((16.0, 16.0), 4.0, 14.0).unwrap();
        let grid = SectorGrid::new(g, 1, 1).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(grid.sector_index(x, y).is_some(), g.contains(x, y));
                if let Some(ij) = grid.sector_index(x, y) {
                    assert_eq!(ij, (0, 0));
                }
            }
        }
    }

    #[test]
    fn sector_formula_at_ten_degrees() {
        // Pixel center placed at 10 degrees, rho = 0.75.
        let (cx, cy) = (50.5, 50.5);
        let (rp, ri) = (10.0, 30.0);
        let dist = rp + 0.75 * (ri - rp);
        let a = 10f64.to_radians();
        let x = (cx + dist * a.cos() - 0.5).round() as usize;
        let y = (cy + dist * a.sin() - 0.5).round() as usize;
        let g = AnnulusGeometry::concentric((cx, cy), rp, ri).unwrap();
        let grid = SectorGrid::new(g, 2, 4).unwrap();
        assert_eq!(grid.sector_index(x, y), Some((1, 0)));
        // Rows grow downward: positive y offset is the first quadrant.
        let below = SectorGrid::new(g, 1, 4).unwrap();
        assert_eq!(below.sector_index(50, 70), Some((0, 1)));
        assert_eq!(below.sector_index(50, 30), Some((0, 3)));
    }

    #[test]
    fn sectors_tile_random_annuli() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let ri = rng.random_range(8.0..30.0);
            let rp = rng.random_range(1.0..ri * 0.6);
            let slack = ri - rp;
            let ic = (rng.random_range(30.0..40.0), rng.random_range(30.0..40.0));
            let off = rng.random_range(0.0..slack * 0.9);
            let ang = rng.random_range(0.0..TAU);
            let pc = (ic.0 + off * ang.cos(), ic.1 + off * ang.sin());
            let g = AnnulusGeometry::new(pc, rp, ic, ri).unwrap();
            let (r, t) = (rng.random_range(1..6), rng.random_range(1..16));
            let grid = SectorGrid::new(g, r, t).unwrap();
            let mask = annulus_mask(&g, 72, 72).unwrap();
            let mut counts = vec![0usize; r * t];
            for y in 0..72 {
                for x in 0..72 {
                    match grid.sector_index(x, y) {
                        Some((i, j)) => {
                            assert!(mask.get(x, y));
                            assert!(i < r && j < t);
                            counts[i * t + j] += 1;
                        }
                        None => assert!(!mask.get(x, y)),
                    }
                }
            }
            assert_eq!(counts.iter().sum::<usize>(), mask.count());
        }
    }
}
