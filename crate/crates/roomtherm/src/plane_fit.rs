//! Robust plane estimation with MSAC and iterative multi-plane extraction.
//!
//! MSAC scores a candidate plane by the bounded loss Σ min(r², t²) over all
//! points, so far-away points pay a flat penalty instead of dominating the
//! fit. The winning candidate is refined by a least-squares fit over its
//! inliers before being returned.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{Point3, PointCloud};

/// Cross-product norm below which a 3-point sample counts as collinear.
const DEGENERACY_EPS: f64 = 1e-9;
/// Consecutive degenerate samples tolerated before giving up on a cloud.
const MAX_DEGENERATE_STREAK: usize = 1000;

/// An infinite plane {p : normal·p + d = 0} with ‖normal‖ = 1.
///
/// The normal is canonicalized so its largest-magnitude component is
/// positive, which removes the sign ambiguity from comparisons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub d: f64,
}

impl PlaneModel {
    pub fn new(normal: Vector3<f64>, d: f64) -> Result<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || norm < DEGENERACY_EPS {
            return Err(Error::InvalidInput(format!(
                "degenerate plane normal {normal:?}"
            )));
        }
        let mut plane = PlaneModel {
            normal: normal / norm,
            d: d / norm,
        };
        plane.canonicalize();
        Ok(plane)
    }

    /// Plane through three points, or `None` when they are collinear.
    pub fn from_points(a: &Point3, b: &Point3, c: &Point3) -> Option<Self> {
        let va = a.as_vector();
        let cross = (b.as_vector() - va).cross(&(c.as_vector() - va));
        if cross.norm() <= DEGENERACY_EPS {
            return None;
        }
        let normal = cross.normalize();
        let mut plane = PlaneModel {
            normal,
            d: -normal.dot(&va),
        };
        plane.canonicalize();
        Some(plane)
    }

    fn canonicalize(&mut self) {
        let n = &self.normal;
        let idx = [n.x.abs(), n.y.abs(), n.z.abs()]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if self.normal[idx] < 0.0 {
            self.normal = -self.normal;
            self.d = -self.d;
        }
    }

    /// Unsigned point-plane distance |normal·p + d| in meters.
    pub fn distance(&self, p: &Point3) -> f64 {
        (self.normal.dot(&p.as_vector()) + self.d).abs()
    }

    /// Acute angle in radians between this plane's normal and `dir`.
    pub fn angle_to(&self, dir: &Vector3<f64>) -> f64 {
        let cos = self.normal.dot(&dir.normalize()).abs().min(1.0);
        cos.acos()
    }
}

/// Orientation gate on candidate planes: the acute angle between the fitted
/// normal and `reference` must stay within `max_angle_deg`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationConstraint {
    pub reference: [f64; 3],
    pub max_angle_deg: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MsacConfig {
    /// Inlier distance threshold t, meters.
    pub distance_threshold: f64,
    /// Desired probability of having sampled at least one all-inlier triple.
    pub confidence: f64,
    /// Hard cap on candidate samples.
    pub max_iterations: usize,
    /// Fits supported by fewer inliers than this are rejected.
    pub min_inliers: usize,
    pub orientation_constraint: Option<OrientationConstraint>,
    pub seed: u64,
}

impl Default for MsacConfig {
    fn default() -> Self {
        MsacConfig {
            distance_threshold: 0.02,
            confidence: 0.99,
            max_iterations: 1000,
            min_inliers: 50,
            orientation_constraint: None,
            seed: 0,
        }
    }
}

impl MsacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0) {
            return Err(Error::InvalidInput(format!(
                "distance_threshold must be > 0 (got {})",
                self.distance_threshold
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidInput(format!(
                "confidence must be in (0, 1) (got {})",
                self.confidence
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// A fitted plane, the indices of its inliers in the input cloud, and its
/// MSAC loss (m², lower is better) over that cloud.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub plane: PlaneModel,
    pub inlier_indices: Vec<usize>,
    pub score: f64,
}

/// MSAC loss Σ min(rᵢ², t²) of `plane` over the whole cloud.
pub fn msac_score(plane: &PlaneModel, cloud: &PointCloud, t: f64) -> f64 {
    let t2 = t * t;
    cloud
        .points()
        .iter()
        .map(|p| {
            let r = plane.distance(p);
            (r * r).min(t2)
        })
        .sum()
}

fn score_and_inliers(plane: &PlaneModel, points: &[Point3], t: f64) -> (f64, Vec<usize>) {
    let t2 = t * t;
    let mut score = 0.0;
    let mut inliers = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let r = plane.distance(p);
        if r <= t {
            score += r * r;
            inliers.push(i);
        } else {
            score += t2;
        }
    }
    (score, inliers)
}

/// Standard RANSAC stopping rule: samples needed so that with probability
/// `confidence` at least one of them is outlier-free, given inlier ratio
/// `inlier_ratio` and minimal sample size `sample_size`.
pub fn required_iterations(confidence: f64, inlier_ratio: f64, sample_size: u32) -> usize {
    if inlier_ratio >= 1.0 {
        return 1;
    }
    let w_n = inlier_ratio.powi(sample_size as i32);
    let denom = (1.0 - w_n).ln();
    if denom >= 0.0 {
        return 1;
    }
    let iters = ((1.0 - confidence).ln() / denom).ceil();
    if !iters.is_finite() || iters >= usize::MAX as f64 {
        usize::MAX
    } else {
        (iters as usize).max(1)
    }
}

/// Least-squares plane through a point set: centroid plus the direction of
/// smallest spread (smallest eigenvector of the scatter matrix).
pub fn least_squares_plane(points: &[Point3]) -> Option<PlaneModel> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.as_vector())
        / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p.as_vector() - centroid;
        scatter += d * d.transpose();
    }
    let eigen = scatter.symmetric_eigen();
    let (mut min_idx, mut min_val) = (0, eigen.eigenvalues[0]);
    for i in 1..3 {
        if eigen.eigenvalues[i] < min_val {
            min_val = eigen.eigenvalues[i];
            min_idx = i;
        }
    }
    let normal = eigen.eigenvectors.column(min_idx).into_owned();
    if !normal.iter().all(|v| v.is_finite()) {
        return None;
    }
    PlaneModel::new(normal, -normal.dot(&centroid)).ok()
}

/// Least-squares refinement of the winning candidate, in two passes.
///
/// A plain fit over the inlier set is biased by points that belong to
/// adjacent surfaces but fall inside the distance band where surfaces meet.
/// The second pass refits on inliers whose residual sits within 2.5 robust
/// standard deviations of the median, which drops those junction strips; on
/// exact data the band collapses and the fit becomes exact.
fn refine_plane(points: &[Point3], inliers: &[usize]) -> Option<PlaneModel> {
    let inlier_points: Vec<Point3> = inliers.iter().map(|&i| points[i]).collect();
    let refined = least_squares_plane(&inlier_points)?;

    let signed: Vec<f64> = inlier_points
        .iter()
        .map(|p| refined.normal.dot(&p.as_vector()) + refined.d)
        .collect();
    let median = |values: &mut Vec<f64>| -> f64 {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values[values.len() / 2]
    };
    let center = median(&mut signed.clone());
    let mut deviations: Vec<f64> = signed.iter().map(|r| (r - center).abs()).collect();
    let scale = 1.4826 * median(&mut deviations);
    let band = (2.5 * scale).max(1e-12);

    let trimmed: Vec<Point3> = inlier_points
        .iter()
        .zip(&signed)
        .filter(|(_, &r)| (r - center).abs() <= band)
        .map(|(p, _)| *p)
        .collect();
    if trimmed.len() >= 3 {
        if let Some(tight) = least_squares_plane(&trimmed) {
            // A degenerate trimmed subset yields an arbitrary normal; only
            // accept the tighter fit when it agrees with the plain one.
            if tight.angle_to(&refined.normal) < 5f64.to_radians() {
                return Some(tight);
            }
        }
    }
    Some(refined)
}

/// Fit a single plane to `cloud` with MSAC.
///
/// Candidate triples are drawn from a seeded RNG, so the result is a pure
/// function of `(cloud, config)`. Collinear samples are redrawn without
/// consuming iteration budget; the budget itself shrinks adaptively via
/// [`required_iterations`] as better inlier ratios are found.
pub fn fit_plane(cloud: &PointCloud, config: &MsacConfig) -> Result<FitResult> {
    config.validate()?;
    let points = cloud.points();
    if points.len() < 3 {
        return Err(Error::NoPlaneFound(format!(
            "need at least 3 points, have {}",
            points.len()
        )));
    }
    let t = config.distance_threshold;
    let orientation = config.orientation_constraint.map(|c| {
        let reference = Vector3::from(c.reference).normalize();
        (reference, c.max_angle_deg.to_radians().cos())
    });
    let accepts = |plane: &PlaneModel| match &orientation {
        Some((reference, cos_min)) => plane.normal.dot(reference).abs() >= *cos_min,
        None => true,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, PlaneModel, Vec<usize>)> = None;
    let mut budget = config.max_iterations;
    let mut candidates = 0usize;
    let mut degenerate_streak = 0usize;

    while candidates < budget {
        let sample = rand::seq::index::sample(&mut rng, points.len(), 3);
        let (a, b, c) = (
            &points[sample.index(0)],
            &points[sample.index(1)],
            &points[sample.index(2)],
        );
        let Some(plane) = PlaneModel::from_points(a, b, c) else {
            degenerate_streak += 1;
            if degenerate_streak > MAX_DEGENERATE_STREAK {
                break;
            }
            continue;
        };
        degenerate_streak = 0;
        candidates += 1;
        if !accepts(&plane) {
            continue;
        }
        let (score, inliers) = score_and_inliers(&plane, points, t);
        if best.as_ref().is_none_or(|(s, ..)| score < *s) {
            let ratio = inliers.len() as f64 / points.len() as f64;
            budget = required_iterations(config.confidence, ratio, 3).min(config.max_iterations);
            best = Some((score, plane, inliers));
        }
    }

    let (mut score, mut plane, mut inliers) =
        best.ok_or_else(|| Error::NoPlaneFound("no valid candidate sampled".into()))?;

    if let Some(refined) = refine_plane(points, &inliers) {
        if accepts(&refined) {
            let (s, inl) = score_and_inliers(&refined, points, t);
            plane = refined;
            score = s;
            inliers = inl;
        }
    }

    if inliers.len() < config.min_inliers {
        return Err(Error::NoPlaneFound(format!(
            "best model has {} inliers, need {}",
            inliers.len(),
            config.min_inliers
        )));
    }
    Ok(FitResult {
        plane,
        inlier_indices: inliers,
        score,
    })
}

/// Extract up to `max_planes` planes by repeatedly fitting and removing
/// inliers. Inlier index sets refer to the original cloud and are pairwise
/// disjoint. Stops when a fit fails, too few points remain, or the cap is
/// reached; an empty list is a valid outcome.
pub fn extract_planes(cloud: &PointCloud, config: &MsacConfig, max_planes: usize) -> Vec<FitResult> {
    let mut remaining: Vec<usize> = (0..cloud.len()).collect();
    let mut results = Vec::new();
    let mut round: u64 = 0;
    while results.len() < max_planes && remaining.len() >= config.min_inliers.max(3) {
        let sub = cloud.select(&remaining);
        let mut round_config = config.clone();
        round_config.seed = config.seed.wrapping_add(round);
        match fit_plane(&sub, &round_config) {
            Ok(fit) => {
                let mapped: Vec<usize> =
                    fit.inlier_indices.iter().map(|&i| remaining[i]).collect();
                let mut taken = vec![false; cloud.len()];
                for &i in &mapped {
                    taken[i] = true;
                }
                remaining.retain(|&i| !taken[i]);
                results.push(FitResult {
                    plane: fit.plane,
                    inlier_indices: mapped,
                    score: fit.score,
                });
            }
            Err(_) => break,
        }
        round += 1;
    }
    results
}

/// One row of the segmentation report.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneRecord {
    pub normal: [f64; 3],
    pub d: f64,
    pub inlier_count: usize,
    pub score: f64,
}

impl PlaneRecord {
    pub fn from_fit(fit: &FitResult) -> Self {
        PlaneRecord {
            normal: [fit.plane.normal.x, fit.plane.normal.y, fit.plane.normal.z],
            d: fit.plane.d,
            inlier_count: fit.inlier_indices.len(),
            score: fit.score,
        }
    }

    pub fn plane(&self) -> Result<PlaneModel> {
        PlaneModel::new(Vector3::from(self.normal), self.d)
    }
}

pub fn write_report(path: &Path, fits: &[FitResult]) -> Result<()> {
    let records: Vec<PlaneRecord> = fits.iter().map(PlaneRecord::from_fit).collect();
    let json = serde_json::to_string_pretty(&records).expect("serialize plane records");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Vec<PlaneRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// Rebuild fit results from report planes by assigning every cloud point to
/// its nearest recorded plane within `t`. This is how downstream stages
/// recover inlier sets from a report that only stores plane equations.
pub fn fits_from_records(
    cloud: &PointCloud,
    records: &[PlaneRecord],
    t: f64,
) -> Result<Vec<FitResult>> {
    let planes: Vec<PlaneModel> = records
        .iter()
        .map(PlaneRecord::plane)
        .collect::<Result<_>>()?;
    let mut inliers: Vec<Vec<usize>> = vec![Vec::new(); planes.len()];
    for (i, p) in cloud.points().iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (k, plane) in planes.iter().enumerate() {
            let r = plane.distance(p);
            if r <= t && best.is_none_or(|(_, b)| r < b) {
                best = Some((k, r));
            }
        }
        if let Some((k, _)) = best {
            inliers[k].push(i);
        }
    }
    Ok(planes
        .into_iter()
        .zip(inliers)
        .map(|(plane, inlier_indices)| {
            let score = msac_score(&plane, cloud, t);
            FitResult {
                plane,
                inlier_indices,
                score,
            }
        })
        .collect())
}
