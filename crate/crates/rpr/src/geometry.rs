//! Polar-to-Cartesian projection and the spin (azimuth roll) augmentation.
//!
//! Spinning is done in polar space as an exact row permutation, before
//! projection, so the augmentation is lossless and matches the sensor's
//! rotational symmetry.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::PolarScan;

/// Output raster geometry for projected scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub side_pixels: usize,
    pub metres_per_pixel: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            side_pixels: 256,
            metres_per_pixel: 0.5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.side_pixels < 16 || !self.side_pixels.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "side_pixels must be even and >= 16, got {}",
                self.side_pixels
            )));
        }
        if self.metres_per_pixel <= 0.0 {
            return Err(Error::Config("metres_per_pixel must be > 0".into()));
        }
        Ok(())
    }

    /// Pixel-space coordinate of the vehicle (between the four central
    /// pixels).
    pub fn center(&self) -> f64 {
        self.side_pixels as f64 / 2.0 - 0.5
    }
}

/// Metric top-down view of one scan: forward = up, right = +columns,
/// vehicle at the grid center.
#[derive(Debug, Clone)]
pub struct CartesianFrame {
    pub pixels: Array2<f32>,
    pub source_timestamp: i64,
}

impl CartesianFrame {
    pub fn side(&self) -> usize {
        self.pixels.nrows()
    }
}

/// Project a polar scan onto a Cartesian grid.
///
/// Each output pixel samples the polar grid at its (bearing, range) with
/// bilinear interpolation: linear in azimuth with wraparound, linear in
/// range. Pixels beyond the maximum range are zero. Range bin `i` is
/// centred at `(i + 0.5) * range_resolution`.
pub fn polar_to_cartesian(scan: &PolarScan, grid: &GridSpec) -> Result<CartesianFrame> {
    grid.validate()?;
    let side = grid.side_pixels;
    let a_count = scan.azimuths;
    let r_count = scan.range_bins;
    let center = grid.center();
    let max_range = scan.max_range();
    let az_per_rad = a_count as f64 / TAU;

    // Sample with clamp-to-first-bin below the first bin centre and a
    // linear fade to zero past the last bin centre.
    let sample_range = |a: usize, rc: f64| -> f32 {
        let row = scan.power.row(a);
        if rc <= 0.0 {
            return row[0];
        }
        let r0 = rc.floor() as usize;
        if r0 + 1 < r_count {
            let w = (rc - r0 as f64) as f32;
            row[r0] * (1.0 - w) + row[r0 + 1] * w
        } else if r0 < r_count {
            let w = (rc - r0 as f64) as f32;
            row[r0] * (1.0 - w)
        } else {
            0.0
        }
    };

    let mut pixels = Array2::zeros((side, side));
    for r in 0..side {
        let fwd = (center - r as f64) * grid.metres_per_pixel;
        for c in 0..side {
            let right = (c as f64 - center) * grid.metres_per_pixel;
            let rho = (fwd * fwd + right * right).sqrt();
            if rho > max_range {
                continue;
            }
            // Bearing clockwise from vehicle-forward, in [0, TAU).
            let bearing = right.atan2(fwd).rem_euclid(TAU);
            let az = bearing * az_per_rad;
            let a0 = az.floor() as usize % a_count;
            let a1 = (a0 + 1) % a_count;
            let wa = (az - az.floor()) as f32;
            let rc = rho / scan.range_resolution - 0.5;
            let v = sample_range(a0, rc) * (1.0 - wa) + sample_range(a1, rc) * wa;
            pixels[[r, c]] = v;
        }
    }
    Ok(CartesianFrame {
        pixels,
        source_timestamp: scan.timestamp,
    })
}

/// Circularly roll the azimuth rows of a scan by `shift`.
///
/// Row `a` of the result is row `(a + shift) mod A` of the input: the
/// spun scan reads as if the sensor's zero azimuth were rotated by
/// `shift` bins. Pure permutation; metadata preserved.
pub fn spin_polar(scan: &PolarScan, shift: usize) -> Result<PolarScan> {
    let a_count = scan.azimuths;
    if shift >= a_count {
        return Err(Error::Argument(format!(
            "spin shift {shift} out of range for {a_count} azimuths (reduce mod A first)"
        )));
    }
    let mut power = Array2::zeros((a_count, scan.range_bins));
    for a in 0..a_count {
        let src = (a + shift) % a_count;
        power.row_mut(a).assign(&scan.power.row(src));
    }
    Ok(PolarScan {
        power,
        ..scan.clone()
    })
}

/// Draw a spin shift uniform on {0, ..., A-1}.
pub fn random_spin<R: Rng + ?Sized>(rng: &mut R, azimuths: usize) -> usize {
    debug_assert!(azimuths >= 4);
    rng.random_range(0..azimuths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scan_from_fn(a: usize, r: usize, f: impl Fn(usize, usize) -> f32) -> PolarScan {
        PolarScan {
            azimuths: a,
            range_bins: r,
            power: Array2::from_shape_fn((a, r), |(i, j)| f(i, j)),
            timestamp: 42,
            range_resolution: 0.5,
        }
    }

    #[test]
    fn zero_scan_projects_to_zero_frame() {
        let scan = scan_from_fn(16, 8, |_, _| 0.0);
        let frame = polar_to_cartesian(&scan, &GridSpec { side_pixels: 16, metres_per_pixel: 0.5 }).unwrap();
        assert!(frame.pixels.iter().all(|&p| p == 0.0));
        assert_eq!(frame.source_timestamp, 42);
    }

    #[test]
    fn constant_scan_fills_disc() {
        let scan = scan_from_fn(64, 32, |_, _| 1.0); // max range 16 m
        let grid = GridSpec { side_pixels: 64, metres_per_pixel: 0.5 };
        let frame = polar_to_cartesian(&scan, &grid).unwrap();
        let c = grid.center();
        for r in 0..64 {
            for col in 0..64 {
                let x = (col as f64 - c) * 0.5;
                let y = (c - r as f64) * 0.5;
                let rho = (x * x + y * y).sqrt();
                let v = frame.pixels[[r, col]];
                if rho < 15.0 {
                    assert!((v - 1.0).abs() < 1e-6, "inside disc at ({r},{col}): {v}");
                } else if rho > 16.0 {
                    assert_eq!(v, 0.0, "outside disc at ({r},{col})");
                }
            }
        }
    }

    #[test]
    fn bright_cell_lands_at_predicted_pixel() {
        // Direct geometric oracle: a single bright polar cell should
        // project brightest within one pixel of its analytic location.
        let a_total = 128;
        for &(a0, r0) in &[(0usize, 20usize), (17, 30), (64, 10), (100, 25)] {
            let scan = scan_from_fn(a_total, 40, |a, r| if a == a0 && r == r0 { 1.0 } else { 0.0 });
            let grid = GridSpec { side_pixels: 128, metres_per_pixel: 0.5 };
            let frame = polar_to_cartesian(&scan, &grid).unwrap();
            let theta = TAU * a0 as f64 / a_total as f64;
            let rho = (r0 as f64 + 0.5) * scan.range_resolution;
            let exp_col = grid.center() + rho * theta.sin() / grid.metres_per_pixel;
            let exp_row = grid.center() - rho * theta.cos() / grid.metres_per_pixel;
            let ((br, bc), _) = frame
                .pixels
                .indexed_iter()
                .fold(((0, 0), -1.0f32), |acc, (idx, &v)| if v > acc.1 { (idx, v) } else { acc });
            assert!(
                (br as f64 - exp_row).abs() <= 1.0 && (bc as f64 - exp_col).abs() <= 1.0,
                "cell ({a0},{r0}): brightest at ({br},{bc}), expected ({exp_row:.1},{exp_col:.1})"
            );
        }
    }

    #[test]
    fn spin_zero_is_identity() {
        let scan = scan_from_fn(16, 8, |a, r| (a * r) as f32 / 128.0);
        let spun = spin_polar(&scan, 0).unwrap();
        assert_eq!(spun.power, scan.power);
    }

    #[test]
    fn spin_full_turn_is_error() {
        let scan = scan_from_fn(16, 8, |_, _| 0.5);
        assert!(matches!(spin_polar(&scan, 16), Err(Error::Argument(_))));
        // Callers reduce mod A; shift 16 mod 16 = 0 is the identity.
        let spun = spin_polar(&scan, 16 % 16).unwrap();
        assert_eq!(spun.power, scan.power);
    }

    #[test]
    fn spin_then_unspin_is_exact_identity() {
        let scan = scan_from_fn(32, 8, |a, r| ((a * 7 + r * 3) % 11) as f32 / 11.0);
        for k in 1..32 {
            let back = spin_polar(&spin_polar(&scan, k).unwrap(), 32 - k).unwrap();
            assert_eq!(back.power, scan.power, "k={k}");
        }
    }

    #[test]
    fn spin_equivariance_with_image_rotation() {
        // Smooth scan so interpolation error stays small.
        let a_total = 128usize;
        let scan = scan_from_fn(a_total, 40, |a, r| {
            let ang = TAU * a as f64 / a_total as f64;
            (0.5 + 0.3 * ang.sin() + 0.2 * (r as f64 / 40.0 * TAU).cos() * ang.cos()).clamp(0.0, 1.0) as f32
        });
        let grid = GridSpec { side_pixels: 64, metres_per_pixel: 0.5 };
        let spun_proj = polar_to_cartesian(&spin_polar(&scan, a_total / 4).unwrap(), &grid).unwrap();
        let orig_proj = polar_to_cartesian(&scan, &grid).unwrap();
        // Spin by A/4 reads bearings 90 degrees clockwise of the
        // original: rotated[r][c] = orig[c][side-1-r].
        let side = grid.side_pixels;
        let mut total = 0.0f64;
        for r in 0..side {
            for c in 0..side {
                let rotated = orig_proj.pixels[[c, side - 1 - r]];
                total += (spun_proj.pixels[[r, c]] - rotated).abs() as f64;
            }
        }
        let mean = total / (side * side) as f64;
        assert!(mean <= 0.02, "mean abs diff {mean}");
    }

    #[test]
    fn random_spin_is_reproducible_and_in_range() {
        let mut rng1 = ChaCha8Rng::seed_from_u64(7);
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<usize> = (0..50).map(|_| random_spin(&mut rng1, 4)).collect();
        let b: Vec<usize> = (0..50).map(|_| random_spin(&mut rng2, 4)).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|&s| s < 4));
    }

    #[test]
    fn random_spin_is_uniform() {
        // Binomial oracle: each bin count within 5 sigma of n/A.
        let a_total = 400usize;
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0usize; a_total];
        for _ in 0..n {
            counts[random_spin(&mut rng, a_total)] += 1;
        }
        let p = 1.0 / a_total as f64;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 5.0 * sigma,
                "bin {i}: count {c}, mean {mean:.1}, sigma {sigma:.1}"
            );
        }
    }
}
