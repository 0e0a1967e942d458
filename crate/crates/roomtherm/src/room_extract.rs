//! Turn extracted planes into a labeled, measured room: floor/ceiling/wall
//! labels, room dimensions from opposing wall pairs, rectangular openings
//! found on walls, and the geometry record handed to the thermal stage.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane_fit::{FitResult, PlaneModel};
use crate::pointcloud::{Point3, PointCloud};
use crate::thermal::{BuildingGeometry, GeomSurface, SurfaceClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceLabel {
    Floor,
    Ceiling,
    Wall,
    Unknown,
}

/// Bounding rectangle of a plane's inliers in an in-plane frame.
///
/// For near-vertical planes `u_axis` runs horizontally along the wall and
/// `v_axis` points up; for near-horizontal planes the axes follow the
/// principal directions of the inlier footprint. `origin` sits on the plane
/// at the (min u, min v) corner.
#[derive(Clone, Debug)]
pub struct PlanarExtent {
    pub origin: Vector3<f64>,
    pub u_axis: Vector3<f64>,
    pub v_axis: Vector3<f64>,
    pub width: f64,
    pub height: f64,
}

impl PlanarExtent {
    fn build(plane: &PlaneModel, points: &[Point3]) -> PlanarExtent {
        let n = plane.normal;
        let (u_axis, v_axis) = if n.z.abs() < 0.9 {
            let u = Vector3::z().cross(&n).normalize();
            let mut v = n.cross(&u);
            if v.z < 0.0 {
                v = -v;
            }
            (u, v)
        } else {
            // Principal axes of the horizontal footprint.
            let e1 = n.cross(&Vector3::x()).normalize();
            let e2 = n.cross(&e1);
            let centroid = points
                .iter()
                .fold(Vector3::zeros(), |acc, p| acc + p.as_vector())
                / points.len().max(1) as f64;
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for p in points {
                let d = p.as_vector() - centroid;
                let (a, b) = (d.dot(&e1), d.dot(&e2));
                sxx += a * a;
                sxy += a * b;
                syy += b * b;
            }
            let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
            let u = e1 * theta.cos() + e2 * theta.sin();
            (u, n.cross(&u))
        };

        let centroid = points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.as_vector())
            / points.len().max(1) as f64;
        let anchor = centroid - n * (n.dot(&centroid) + plane.d);
        let (mut min_u, mut max_u) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_v, mut max_v) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let rel = p.as_vector() - anchor;
            let u = rel.dot(&u_axis);
            let v = rel.dot(&v_axis);
            min_u = min_u.min(u);
            max_u = max_u.max(u);
            min_v = min_v.min(v);
            max_v = max_v.max(v);
        }
        if points.is_empty() {
            (min_u, max_u, min_v, max_v) = (0.0, 0.0, 0.0, 0.0);
        }
        PlanarExtent {
            origin: anchor + u_axis * min_u + v_axis * min_v,
            u_axis,
            v_axis,
            width: max_u - min_u,
            height: max_v - min_v,
        }
    }

    /// In-plane coordinates of a point relative to the extent origin.
    pub fn project(&self, p: &Point3) -> (f64, f64) {
        let rel = p.as_vector() - self.origin;
        (rel.dot(&self.u_axis), rel.dot(&self.v_axis))
    }
}

/// A plane with its role in the room.
#[derive(Clone, Debug)]
pub struct LabeledSurface {
    pub plane: PlaneModel,
    pub label: SurfaceLabel,
    pub extent: PlanarExtent,
    /// Raw z-span of the inliers, meters.
    pub vertical_extent: f64,
    pub inlier_indices: Vec<usize>,
    pub mean_z: f64,
}

impl LabeledSurface {
    fn build(fit: &FitResult, cloud: &PointCloud, label: SurfaceLabel) -> LabeledSurface {
        let points: Vec<Point3> = fit
            .inlier_indices
            .iter()
            .map(|&i| cloud.points()[i])
            .collect();
        let extent = PlanarExtent::build(&fit.plane, &points);
        let (mut min_z, mut max_z, mut sum_z) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for p in &points {
            min_z = min_z.min(p.z);
            max_z = max_z.max(p.z);
            sum_z += p.z;
        }
        let (vertical_extent, mean_z) = if points.is_empty() {
            (0.0, 0.0)
        } else {
            (max_z - min_z, sum_z / points.len() as f64)
        };
        LabeledSurface {
            plane: fit.plane,
            label,
            extent,
            vertical_extent,
            inlier_indices: fit.inlier_indices.clone(),
            mean_z,
        }
    }

    fn same_plane(&self, other: &FitResult) -> bool {
        (self.plane.normal - other.plane.normal).norm() < 1e-12
            && (self.plane.d - other.plane.d).abs() < 1e-12
    }
}

fn is_horizontal(plane: &PlaneModel, angle_tol_deg: f64) -> bool {
    plane.normal.z.abs() >= angle_tol_deg.to_radians().cos()
}

fn is_vertical(plane: &PlaneModel, angle_tol_deg: f64) -> bool {
    plane.normal.z.abs() <= angle_tol_deg.to_radians().sin()
}

/// Pick the floor: the horizontal plane with the lowest mean inlier height.
pub fn detect_floor(
    fits: &[FitResult],
    cloud: &PointCloud,
    angle_tol_deg: f64,
) -> Result<LabeledSurface> {
    let mut best: Option<LabeledSurface> = None;
    for fit in fits {
        if !is_horizontal(&fit.plane, angle_tol_deg) {
            continue;
        }
        let surface = LabeledSurface::build(fit, cloud, SurfaceLabel::Floor);
        if best.as_ref().is_none_or(|b| surface.mean_z < b.mean_z) {
            best = Some(surface);
        }
    }
    best.ok_or_else(|| {
        Error::NoFloor(format!(
            "no horizontal plane within {angle_tol_deg}° of the vertical axis among {} planes",
            fits.len()
        ))
    })
}

/// Label every plane: the floor keeps its label, the highest remaining
/// horizontal plane at least 1 m above the floor becomes the ceiling, and
/// vertical planes tall enough relative to the tallest one become walls.
/// Everything else is Unknown; each input plane gets exactly one label.
pub fn label_surfaces(
    fits: &[FitResult],
    cloud: &PointCloud,
    floor: &LabeledSurface,
    height_fraction: f64,
    angle_tol_deg: f64,
) -> Vec<LabeledSurface> {
    let mut labeled: Vec<LabeledSurface> = fits
        .iter()
        .map(|fit| {
            let label = if floor.same_plane(fit) {
                SurfaceLabel::Floor
            } else {
                SurfaceLabel::Unknown
            };
            LabeledSurface::build(fit, cloud, label)
        })
        .collect();

    // Ceiling: highest horizontal plane, if clearly above the floor.
    let ceiling_idx = labeled
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.label != SurfaceLabel::Floor && is_horizontal(&s.plane, angle_tol_deg)
        })
        .max_by(|a, b| a.1.mean_z.partial_cmp(&b.1.mean_z).unwrap())
        .map(|(i, _)| i);
    if let Some(i) = ceiling_idx {
        if labeled[i].mean_z >= floor.mean_z + 1.0 {
            labeled[i].label = SurfaceLabel::Ceiling;
        }
    }

    // Walls: vertical planes within height_fraction of the tallest.
    let tallest = labeled
        .iter()
        .filter(|s| is_vertical(&s.plane, angle_tol_deg))
        .map(|s| s.vertical_extent)
        .fold(0.0, f64::max);
    for s in &mut labeled {
        if s.label == SurfaceLabel::Unknown
            && is_vertical(&s.plane, angle_tol_deg)
            && s.vertical_extent >= height_fraction * tallest
        {
            s.label = SurfaceLabel::Wall;
        }
    }
    labeled
}

/// Room frame: two dominant horizontal wall-normal directions and the plane
/// spans along them.
#[derive(Clone, Debug)]
pub struct RoomFrame {
    pub axis_a: Vector3<f64>,
    pub axis_b: Vector3<f64>,
    pub span_a: f64,
    pub span_b: f64,
    pub height: f64,
    /// Cluster (0 = axis_a, 1 = axis_b) of each wall, in input order.
    pub wall_cluster: Vec<u8>,
}

/// Perpendicularity tolerance for wall clustering, degrees.
const FRAME_TOL_DEG: f64 = 10.0;
/// Parallel walls closer than this are treated as one side of the room.
const MIN_SPAN: f64 = 0.05;

/// Tail fraction trimmed from each end when estimating a span from sample
/// extremes; the span is rescaled to compensate. Raw minima/maxima would
/// carry the noise tails straight into the estimate.
const TRIM: f64 = 0.005;

fn sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values
}

fn quantile(sorted_values: &[f64], q: f64) -> f64 {
    let n = sorted_values.len();
    sorted_values[((q * (n - 1) as f64).round() as usize).min(n - 1)]
}

fn trimmed_span(values: Vec<f64>) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let values = sorted(values);
    (quantile(&values, 1.0 - TRIM) - quantile(&values, TRIM)) / (1.0 - 2.0 * TRIM)
}

/// Height of a wall above the floor plane, from the trimmed upper quantile
/// of its inlier heights. One-sided because the wall's bottom strip tends to
/// be claimed by the floor plane during extraction.
fn wall_height_above(floor_z: f64, zs: Vec<f64>) -> f64 {
    if zs.is_empty() {
        return 0.0;
    }
    let zs = sorted(zs);
    (quantile(&zs, 1.0 - TRIM) - floor_z) / (1.0 - TRIM)
}

fn horizontal_dir(normal: &Vector3<f64>) -> Result<Vector3<f64>> {
    let h = Vector3::new(normal.x, normal.y, 0.0);
    let norm = h.norm();
    if norm < 1e-9 {
        return Err(Error::Dimensions(
            "wall normal has no horizontal component".into(),
        ));
    }
    Ok(h / norm)
}

/// Align the room to the two dominant perpendicular wall directions and
/// measure the spans between opposing wall planes. When one side of a pair
/// is missing, the floor's footprint along that axis stands in.
pub fn solve_room_frame(
    floor: &LabeledSurface,
    walls: &[LabeledSurface],
    ceiling: Option<&LabeledSurface>,
    cloud: &PointCloud,
) -> Result<RoomFrame> {
    if walls.len() < 2 {
        return Err(Error::Dimensions(format!(
            "need at least 2 walls to measure the room, found {}",
            walls.len()
        )));
    }
    let dirs: Vec<Vector3<f64>> = walls
        .iter()
        .map(|w| horizontal_dir(&w.plane.normal))
        .collect::<Result<_>>()?;

    let a0 = dirs[0];
    let cos_parallel = FRAME_TOL_DEG.to_radians().cos();
    let cos_perp = (90.0 - FRAME_TOL_DEG).to_radians().cos();
    let mut cluster = Vec::with_capacity(walls.len());
    for (i, dir) in dirs.iter().enumerate() {
        let c = dir.dot(&a0).abs();
        if c >= cos_parallel {
            cluster.push(0u8);
        } else if c <= cos_perp {
            cluster.push(1u8);
        } else {
            return Err(Error::Dimensions(format!(
                "wall {i} normal is {:.1}° from the principal axis; room is not rectangular",
                c.acos().to_degrees()
            )));
        }
    }
    if !cluster.contains(&1) {
        return Err(Error::Dimensions(format!(
            "all {} walls are parallel; need two perpendicular wall directions",
            walls.len()
        )));
    }

    let mean_axis = |id: u8, reference: Vector3<f64>| -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        for (i, dir) in dirs.iter().enumerate() {
            if cluster[i] == id {
                acc += dir * dir.dot(&reference).signum();
            }
        }
        acc.normalize()
    };
    let axis_a = mean_axis(0, a0);
    let b0 = Vector3::new(-a0.y, a0.x, 0.0);
    let axis_b = mean_axis(1, b0);

    let span_along = |id: u8, axis: &Vector3<f64>| -> f64 {
        let offsets: Vec<f64> = walls
            .iter()
            .zip(&cluster)
            .filter(|(_, &c)| c == id)
            .map(|(w, _)| {
                let sign = w.plane.normal.dot(axis).signum();
                -w.plane.d * sign
            })
            .collect();
        let span = offsets.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - offsets.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if span > MIN_SPAN {
            span
        } else {
            // Single wall (or coincident walls): fall back to the floor's
            // trimmed footprint along this axis.
            let proj: Vec<f64> = floor
                .inlier_indices
                .iter()
                .map(|&i| cloud.points()[i].as_vector().dot(axis))
                .collect();
            trimmed_span(proj)
        }
    };
    let span_a = span_along(0, &axis_a);
    let span_b = span_along(1, &axis_b);

    let floor_z = -floor.plane.d / floor.plane.normal.z;
    let height = match ceiling {
        // Plane-to-plane distance is exact; inlier spans are not.
        Some(c) => {
            let ceiling_z = -c.plane.d / c.plane.normal.z;
            (ceiling_z - floor_z).abs()
        }
        None => {
            let mut spans: Vec<f64> = walls
                .iter()
                .map(|w| {
                    let zs: Vec<f64> = w
                        .inlier_indices
                        .iter()
                        .map(|&i| cloud.points()[i].z)
                        .collect();
                    wall_height_above(floor_z, zs)
                })
                .collect();
            spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = spans.len();
            if n % 2 == 1 {
                spans[n / 2]
            } else {
                0.5 * (spans[n / 2 - 1] + spans[n / 2])
            }
        }
    };

    Ok(RoomFrame {
        axis_a,
        axis_b,
        span_a,
        span_b,
        height,
        wall_cluster: cluster,
    })
}

/// Room dimensions (length ≥ width, height).
pub fn room_dimensions(
    floor: &LabeledSurface,
    walls: &[LabeledSurface],
    ceiling: Option<&LabeledSurface>,
    cloud: &PointCloud,
) -> Result<(f64, f64, f64)> {
    let frame = solve_room_frame(floor, walls, ceiling, cloud)?;
    let length = frame.span_a.max(frame.span_b);
    let width = frame.span_a.min(frame.span_b);
    Ok((length, width, frame.height))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpeningKind {
    Window,
    Door,
    Unknown,
}

impl OpeningKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpeningKind::Window => "window",
            OpeningKind::Door => "door",
            OpeningKind::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> OpeningKind {
        match s {
            "window" => OpeningKind::Window,
            "door" => OpeningKind::Door,
            _ => OpeningKind::Unknown,
        }
    }
}

/// Opening rectangle in the owning wall's extent frame (u along the wall,
/// v up from the extent's bottom edge).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpeningRect {
    pub u: f64,
    pub v: f64,
    pub width: f64,
    pub height: f64,
}

impl OpeningRect {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Clone, Debug)]
pub struct Opening {
    pub wall_index: usize,
    pub rect: OpeningRect,
    pub kind: OpeningKind,
}

struct Grid {
    nu: usize,
    nv: usize,
    cells: Vec<bool>,
}

impl Grid {
    fn idx(&self, iu: usize, iv: usize) -> usize {
        iv * self.nu + iu
    }

    fn get(&self, iu: i64, iv: i64) -> Option<bool> {
        if iu < 0 || iv < 0 || iu >= self.nu as i64 || iv >= self.nv as i64 {
            None
        } else {
            Some(self.cells[self.idx(iu as usize, iv as usize)])
        }
    }
}

/// 3×3 erosion of the empty mask. Out-of-grid neighbors count as occupied
/// except below the bottom edge, where the floor continues an opening.
fn erode(grid: &Grid) -> Vec<bool> {
    morph(grid, |all_empty| all_empty)
}

/// 3×3 dilation of the empty mask.
fn dilate(grid: &Grid) -> Vec<bool> {
    let mut out = vec![false; grid.cells.len()];
    for iv in 0..grid.nv as i64 {
        for iu in 0..grid.nu as i64 {
            let mut any = false;
            'scan: for dv in -1..=1 {
                for du in -1..=1 {
                    if grid.get(iu + du, iv + dv) == Some(true) {
                        any = true;
                        break 'scan;
                    }
                }
            }
            out[grid.idx(iu as usize, iv as usize)] = any;
        }
    }
    out
}

fn morph(grid: &Grid, keep: impl Fn(bool) -> bool) -> Vec<bool> {
    let mut out = vec![false; grid.cells.len()];
    for iv in 0..grid.nv as i64 {
        for iu in 0..grid.nu as i64 {
            let mut all = true;
            'scan: for dv in -1..=1 {
                for du in -1..=1 {
                    let neighbor = match grid.get(iu + du, iv + dv) {
                        Some(e) => e,
                        // Below the floor edge counts as empty.
                        None => iv + dv < 0,
                    };
                    if !neighbor {
                        all = false;
                        break 'scan;
                    }
                }
            }
            out[grid.idx(iu as usize, iv as usize)] = keep(all);
        }
    }
    out
}

/// Largest all-true axis-aligned rectangle in `mask`, by the histogram
/// method. Returns (iu0, iv0, iu1, iv1) inclusive, or None.
fn largest_rectangle(mask: &[bool], nu: usize, nv: usize) -> Option<(usize, usize, usize, usize)> {
    let mut heights = vec![0usize; nu];
    let mut best: Option<(usize, usize, usize, usize, usize)> = None; // area + rect
    for iv in 0..nv {
        for iu in 0..nu {
            heights[iu] = if mask[iv * nu + iu] { heights[iu] + 1 } else { 0 };
        }
        // Max rectangle in histogram via a monotonic stack.
        let mut stack: Vec<usize> = Vec::new();
        for iu in 0..=nu {
            let h = if iu < nu { heights[iu] } else { 0 };
            while let Some(&top) = stack.last() {
                if heights[top] <= h {
                    break;
                }
                stack.pop();
                let height = heights[top];
                let left = stack.last().map_or(0, |&l| l + 1);
                let width = iu - left;
                let area = height * width;
                if best.is_none_or(|(a, ..)| area > a) {
                    best = Some((area, left, iv + 1 - height, iu - 1, iv));
                }
            }
            stack.push(iu);
        }
    }
    best.map(|(_, a, b, c, d)| (a, b, c, d))
}

/// Detect rectangular openings in a wall by rasterizing its inliers onto an
/// occupancy grid, smoothing out sampling speckle, and keeping enclosed (or
/// floor-touching) empty regions large enough to matter. Edges are refined
/// from the nearest occupied cells' points, so reported rectangles are much
/// more accurate than the grid pitch.
pub fn detect_openings(
    wall: &LabeledSurface,
    wall_index: usize,
    cloud: &PointCloud,
    grid_res: f64,
    min_area: f64,
) -> Vec<Opening> {
    let projected: Vec<(f64, f64)> = wall
        .inlier_indices
        .iter()
        .map(|&i| wall.extent.project(&cloud.points()[i]))
        .collect();
    let (w, h) = (wall.extent.width, wall.extent.height);
    if projected.is_empty() || w < grid_res || h < grid_res {
        return Vec::new();
    }
    // Clutter points that happen to fall inside the plane's inlier band land
    // anywhere on the wall, including inside real openings, where a single
    // stray cell can clip the detected rectangle. Genuine wall points sit at
    // sampling density; strays inside holes are isolated, so a neighbor
    // count separates them.
    let points = density_filter(projected, w, h);
    let nu = (w / grid_res).ceil() as usize;
    let nv = (h / grid_res).ceil() as usize;
    let (du, dv) = (w / nu as f64, h / nv as f64);
    let mut occupied = vec![false; nu * nv];
    for &(u, v) in &points {
        let iu = ((u / du) as usize).min(nu - 1);
        let iv = ((v / dv) as usize).min(nv - 1);
        occupied[iv * nu + iu] = true;
    }

    let empty: Vec<bool> = occupied.iter().map(|&o| !o).collect();
    let mut grid = Grid { nu, nv, cells: empty };
    // Opening then closing: drop empty speckle inside the wall, then fill
    // stray occupied cells inside genuine holes.
    grid.cells = erode(&grid);
    grid.cells = dilate(&grid);
    grid.cells = dilate(&grid);
    grid.cells = erode(&grid);

    // Connected components (4-neighborhood) of the smoothed empty mask.
    let mut component = vec![usize::MAX; nu * nv];
    let mut n_components = 0usize;
    for start in 0..nu * nv {
        if !grid.cells[start] || component[start] != usize::MAX {
            continue;
        }
        let id = n_components;
        n_components += 1;
        let mut stack = vec![start];
        component[start] = id;
        while let Some(cell) = stack.pop() {
            let (iu, iv) = (cell % nu, cell / nu);
            let neighbors = [
                (iu.wrapping_sub(1), iv),
                (iu + 1, iv),
                (iu, iv.wrapping_sub(1)),
                (iu, iv + 1),
            ];
            for (ju, jv) in neighbors {
                if ju < nu && jv < nv {
                    let j = jv * nu + ju;
                    if grid.cells[j] && component[j] == usize::MAX {
                        component[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
    }

    // Reject components that touch the side or top borders; those are not
    // enclosed by wall material.
    let mut touches_border = vec![false; n_components];
    for iv in 0..nv {
        for iu in 0..nu {
            let id = component[iv * nu + iu];
            if id != usize::MAX && (iu == 0 || iu == nu - 1 || iv == nv - 1) {
                touches_border[id] = true;
            }
        }
    }

    let mut openings = Vec::new();
    for id in 0..n_components {
        if touches_border[id] {
            continue;
        }
        let mask: Vec<bool> = component.iter().map(|&c| c == id).collect();
        let Some((cu0, cv0, cu1, cv1)) = largest_rectangle(&mask, nu, nv) else {
            continue;
        };
        let cells_area = (cu1 - cu0 + 1) as f64 * du * (cv1 - cv0 + 1) as f64 * dv;
        if cells_area < min_area {
            continue;
        }

        // Refine each edge from the points in the adjacent occupied band;
        // fall back to a half-cell correction where the band is empty.
        let band_v = (cv0 as f64 * dv, (cv1 + 1) as f64 * dv);
        let band_u = (cu0 as f64 * du, (cu1 + 1) as f64 * du);
        let column = |c: usize| (c as f64 * du, (c + 1) as f64 * du);
        let row = |r: usize| (r as f64 * dv, (r + 1) as f64 * dv);

        let left = if cu0 == 0 {
            0.0
        } else {
            let (lo, hi) = column(cu0 - 1);
            points
                .iter()
                .filter(|&&(u, v)| u >= lo && u < hi && v >= band_v.0 && v <= band_v.1)
                .map(|&(u, _)| u)
                .fold(f64::NEG_INFINITY, f64::max)
                .max_finite_or(cu0 as f64 * du - du / 2.0)
        };
        let right = if cu1 + 1 >= nu {
            w
        } else {
            let (lo, hi) = column(cu1 + 1);
            points
                .iter()
                .filter(|&&(u, v)| u >= lo && u < hi && v >= band_v.0 && v <= band_v.1)
                .map(|&(u, _)| u)
                .fold(f64::INFINITY, f64::min)
                .min_finite_or((cu1 + 1) as f64 * du + du / 2.0)
        };
        let bottom = if cv0 == 0 {
            0.0
        } else {
            let (lo, hi) = row(cv0 - 1);
            points
                .iter()
                .filter(|&&(u, v)| v >= lo && v < hi && u >= band_u.0 && u <= band_u.1)
                .map(|&(_, v)| v)
                .fold(f64::NEG_INFINITY, f64::max)
                .max_finite_or(cv0 as f64 * dv - dv / 2.0)
        };
        let top = if cv1 + 1 >= nv {
            h
        } else {
            let (lo, hi) = row(cv1 + 1);
            points
                .iter()
                .filter(|&&(u, v)| v >= lo && v < hi && u >= band_u.0 && u <= band_u.1)
                .map(|&(_, v)| v)
                .fold(f64::INFINITY, f64::min)
                .min_finite_or((cv1 + 1) as f64 * dv + dv / 2.0)
        };

        let rect = OpeningRect {
            u: left.max(0.0),
            v: bottom.max(0.0),
            width: (right.min(w) - left.max(0.0)).max(0.0),
            height: (top.min(h) - bottom.max(0.0)).max(0.0),
        };
        if rect.area() < min_area {
            continue;
        }
        let kind = if cv0 == 0 && rect.height >= 1.8 {
            OpeningKind::Door
        } else {
            OpeningKind::Window
        };
        openings.push(Opening { wall_index, rect, kind });
    }
    openings.sort_by(|a, b| {
        (a.rect.u, a.rect.v)
            .partial_cmp(&(b.rect.u, b.rect.v))
            .unwrap()
    });
    openings
}

/// Keep points with at least 3 in-plane neighbors within 1.5 mean spacings.
fn density_filter(points: Vec<(f64, f64)>, w: f64, h: f64) -> Vec<(f64, f64)> {
    let n = points.len();
    if n < 20 {
        return points;
    }
    let radius = 1.5 * (w * h / n as f64).sqrt();
    let r2 = radius * radius;
    let nu = ((w / radius).ceil() as usize).max(1);
    let nv = ((h / radius).ceil() as usize).max(1);
    let bucket = |u: f64, v: f64| -> (usize, usize) {
        (
            ((u / radius) as usize).min(nu - 1),
            ((v / radius) as usize).min(nv - 1),
        )
    };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nu * nv];
    for (i, &(u, v)) in points.iter().enumerate() {
        let (bu, bv) = bucket(u, v);
        buckets[bv * nu + bu].push(i);
    }
    let survivors: Vec<(f64, f64)> = points
        .iter()
        .enumerate()
        .filter(|&(i, &(u, v))| {
            let (bu, bv) = bucket(u, v);
            let mut neighbors = 0;
            for dv in bv.saturating_sub(1)..=(bv + 1).min(nv - 1) {
                for du in bu.saturating_sub(1)..=(bu + 1).min(nu - 1) {
                    for &j in &buckets[dv * nu + du] {
                        if j == i {
                            continue;
                        }
                        let (pu, pv) = points[j];
                        if (pu - u) * (pu - u) + (pv - v) * (pv - v) <= r2 {
                            neighbors += 1;
                            if neighbors >= 3 {
                                return true;
                            }
                        }
                    }
                }
            }
            false
        })
        .map(|(_, &p)| p)
        .collect();
    if survivors.len() < 20 {
        points
    } else {
        survivors
    }
}

trait FiniteOr {
    fn max_finite_or(self, fallback: f64) -> f64;
    fn min_finite_or(self, fallback: f64) -> f64;
}

impl FiniteOr for f64 {
    fn max_finite_or(self, fallback: f64) -> f64 {
        if self.is_finite() {
            self
        } else {
            fallback
        }
    }

    fn min_finite_or(self, fallback: f64) -> f64 {
        if self.is_finite() {
            self
        } else {
            fallback
        }
    }
}

/// One wall in an assembled room: the labeled plane plus its lateral span
/// (the room dimension it runs along).
#[derive(Clone, Debug)]
pub struct RoomWall {
    pub surface: LabeledSurface,
    pub span: f64,
}

#[derive(Clone, Debug)]
pub struct RoomGeometry {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub floor: LabeledSurface,
    pub walls: Vec<RoomWall>,
    pub ceiling: Option<LabeledSurface>,
    pub openings: Vec<Opening>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractParams {
    pub angle_tol_deg: f64,
    pub height_fraction: f64,
    pub grid_res: f64,
    pub min_opening_area: f64,
    pub max_planes: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            angle_tol_deg: 5.0,
            height_fraction: 0.8,
            grid_res: 0.1,
            min_opening_area: 0.3,
            max_planes: 8,
        }
    }
}

/// Slack allowed between a wall's raw inlier z-span (noise tails included)
/// and the estimated room height.
const HEIGHT_SLACK: f64 = 0.25;

/// Full extraction: label planes, measure the room, find openings, assemble.
pub fn extract_room(
    cloud: &PointCloud,
    fits: &[FitResult],
    params: &ExtractParams,
) -> Result<RoomGeometry> {
    let floor = detect_floor(fits, cloud, params.angle_tol_deg)?;
    let labeled = label_surfaces(fits, cloud, &floor, params.height_fraction, params.angle_tol_deg);
    let walls: Vec<LabeledSurface> = labeled
        .iter()
        .filter(|s| s.label == SurfaceLabel::Wall)
        .cloned()
        .collect();
    let ceiling = labeled
        .iter()
        .find(|s| s.label == SurfaceLabel::Ceiling)
        .cloned();

    let frame = solve_room_frame(&floor, &walls, ceiling.as_ref(), cloud)?;
    let length = frame.span_a.max(frame.span_b);
    let width = frame.span_a.min(frame.span_b);
    let height = frame.height;
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::Dimensions(format!(
            "degenerate room {length:.3} x {width:.3} x {height:.3}"
        )));
    }
    for (i, wall) in walls.iter().enumerate() {
        if wall.vertical_extent > height + HEIGHT_SLACK {
            return Err(Error::Geometry(format!(
                "wall {i} z-span {:.3} m exceeds room height {height:.3} m",
                wall.vertical_extent
            )));
        }
    }

    let mut openings = Vec::new();
    let mut room_walls = Vec::with_capacity(walls.len());
    for (i, wall) in walls.into_iter().enumerate() {
        openings.extend(detect_openings(
            &wall,
            i,
            cloud,
            params.grid_res,
            params.min_opening_area,
        ));
        let span = if frame.wall_cluster[i] == 0 {
            frame.span_b
        } else {
            frame.span_a
        };
        room_walls.push(RoomWall { surface: wall, span });
    }

    Ok(RoomGeometry {
        length,
        width,
        height,
        floor,
        walls: room_walls,
        ceiling,
        openings,
    })
}

/// Surface areas for the thermal stage: floor and roof carry the footprint
/// area (the roof is synthesized when no ceiling was scanned), walls carry
/// their gross area minus openings, and each opening becomes its own
/// window/door surface.
pub fn to_building_geometry(room: &RoomGeometry) -> Result<BuildingGeometry> {
    RoomGeometryFile::from_room(room)?.to_building_geometry()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeningRecord {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
    pub kind: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallRecord {
    pub normal: [f64; 3],
    pub d: f64,
    /// Net area with openings already subtracted, m².
    pub area: f64,
    pub openings: Vec<OpeningRecord>,
}

/// The on-disk geometry contract between the extraction and thermal stages.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomGeometryFile {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub walls: Vec<WallRecord>,
    pub volume: f64,
}

impl RoomGeometryFile {
    pub fn from_room(room: &RoomGeometry) -> Result<RoomGeometryFile> {
        let mut walls = Vec::with_capacity(room.walls.len());
        for (i, wall) in room.walls.iter().enumerate() {
            let gross = wall.span * room.height;
            let openings: Vec<OpeningRecord> = room
                .openings
                .iter()
                .filter(|o| o.wall_index == i)
                .map(|o| OpeningRecord {
                    u: o.rect.u,
                    v: o.rect.v,
                    w: o.rect.width,
                    h: o.rect.height,
                    kind: o.kind.as_str().to_string(),
                })
                .collect();
            let open_area: f64 = openings.iter().map(|o| o.w * o.h).sum();
            if open_area >= gross {
                return Err(Error::Geometry(format!(
                    "openings on wall {i} cover {open_area:.2} m² of a {gross:.2} m² wall"
                )));
            }
            let n = wall.surface.plane.normal;
            walls.push(WallRecord {
                normal: [n.x, n.y, n.z],
                d: wall.surface.plane.d,
                area: gross - open_area,
                openings,
            });
        }
        Ok(RoomGeometryFile {
            length: room.length,
            width: room.width,
            height: room.height,
            walls,
            volume: room.length * room.width * room.height,
        })
    }

    pub fn to_building_geometry(&self) -> Result<BuildingGeometry> {
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Geometry(format!(
                "degenerate room dimensions {} x {} x {}",
                self.length, self.width, self.height
            )));
        }
        let footprint = self.length * self.width;
        let mut surfaces = vec![
            GeomSurface {
                name: "floor".into(),
                class: SurfaceClass::Floor,
                area: footprint,
            },
            GeomSurface {
                name: "roof".into(),
                class: SurfaceClass::Roof,
                area: footprint,
            },
        ];
        let mut windows = 0usize;
        let mut doors = 0usize;
        for (i, wall) in self.walls.iter().enumerate() {
            if !(wall.area > 0.0) {
                return Err(Error::Geometry(format!(
                    "wall {i} has non-positive net area {}",
                    wall.area
                )));
            }
            surfaces.push(GeomSurface {
                name: format!("wall_{i}"),
                class: SurfaceClass::Wall,
                area: wall.area,
            });
            for o in &wall.openings {
                if !(o.w > 0.0 && o.h > 0.0) {
                    return Err(Error::Geometry(format!(
                        "opening on wall {i} has non-positive size {}x{}",
                        o.w, o.h
                    )));
                }
                let (name, class) = match OpeningKind::parse(&o.kind) {
                    OpeningKind::Door => {
                        doors += 1;
                        (format!("door_{}", doors - 1), SurfaceClass::Door)
                    }
                    // Unclassified openings are treated as glazing.
                    _ => {
                        windows += 1;
                        (format!("window_{}", windows - 1), SurfaceClass::Window)
                    }
                };
                surfaces.push(GeomSurface {
                    name,
                    class,
                    area: o.w * o.h,
                });
            }
        }
        Ok(BuildingGeometry {
            volume: self.volume,
            surfaces,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("serialize geometry");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<RoomGeometryFile> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}
