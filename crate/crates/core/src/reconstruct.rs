//! Absolute phase to 3D points: camera–projector triangulation and
//! phase-matched two-camera triangulation, plus ASCII PLY output.

use std::io::Write;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use crate::geometry::{intersect_fringe_plane, triangulate_two_view, CameraModel, ProjectorModel};
use crate::{Grid, Mask};

/// World-frame points (mm) with the camera-1 pixel each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub pixels: Vec<(usize, usize)>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points whose source pixel satisfies `keep`.
    pub fn select(&self, mut keep: impl FnMut(usize, usize) -> bool) -> PointCloud {
        let mut out = PointCloud::default();
        for (p, &(x, y)) in self.points.iter().zip(&self.pixels) {
            if keep(x, y) {
                out.points.push(*p);
                out.pixels.push((x, y));
            }
        }
        out
    }

    pub fn write_ply(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", self.points.len())?;
        writeln!(w, "property double x")?;
        writeln!(w, "property double y")?;
        writeln!(w, "property double z")?;
        writeln!(w, "end_header")?;
        for p in &self.points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }

    pub fn save_ply(&self, path: &Path) -> std::io::Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_ply(f)
    }

    /// Reads the vertex positions of an ASCII PLY written by [`write_ply`](Self::write_ply).
    pub fn read_ply(text: &str) -> Result<Vec<Vector3<f64>>, String> {
        let mut lines = text.lines();
        let mut count = None;
        for line in lines.by_ref() {
            if let Some(n) = line.strip_prefix("element vertex ") {
                count = Some(n.trim().parse::<usize>().map_err(|e| e.to_string())?);
            }
            if line == "end_header" {
                break;
            }
        }
        let count = count.ok_or("missing vertex count")?;
        let pts = lines
            .take(count)
            .map(|l| {
                let v: Vec<f64> = l
                    .split_whitespace()
                    .map(|s| s.parse::<f64>().map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?;
                if v.len() < 3 {
                    return Err(format!("short vertex line: {l}"));
                }
                Ok(Vector3::new(v[0], v[1], v[2]))
            })
            .collect::<Result<Vec<_>, String>>()?;
        if pts.len() != count {
            return Err("truncated vertex list".into());
        }
        Ok(pts)
    }
}

/// Intersects every masked pixel's ray with the fringe plane of its absolute
/// phase. Returns the world-z depth map (NaN where unresolved) and the cloud.
pub fn reconstruct_camera_projector(
    abs_phase: &Grid<f64>,
    mask: &Mask,
    cam: &CameraModel,
    proj: &ProjectorModel,
) -> (Grid<f64>, PointCloud) {
    let (w, h) = abs_phase.dims();
    let mut depth = Grid::filled(w, h, f64::NAN);
    let mut cloud = PointCloud::default();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) {
                continue;
            }
            let Ok(coord) = proj.phase_to_coordinate(*abs_phase.get(x, y)) else {
                continue;
            };
            let Ok(ray) = cam.backproject_ray(&Vector2::new(x as f64, y as f64)) else {
                continue;
            };
            if let Ok((p, _)) = intersect_fringe_plane(&ray, coord, proj) {
                depth.set(x, y, p.z);
                cloud.points.push(p);
                cloud.pixels.push((x, y));
            }
        }
    }
    (depth, cloud)
}

fn keys(t: f64) -> [f64; 4] {
    // Keys cubic convolution weights, a = −0.5
    let a = -0.5;
    let w = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
        } else if x < 2.0 {
            a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
        } else {
            0.0
        }
    };
    [w(1.0 + t), w(t), w(1.0 - t), w(2.0 - t)]
}

/// Bicubic sample of a smooth (unwrapped) map; `None` unless the whole 4×4
/// support is valid and free of jumps larger than `max_step`.
fn bicubic(map: &Grid<f64>, mask: &Mask, px: &Vector2<f64>, max_step: f64) -> Option<f64> {
    let (w, h) = map.dims();
    let (x0, y0) = (px.x.floor() as isize - 1, px.y.floor() as isize - 1);
    if x0 < 0 || y0 < 0 || x0 + 3 >= w as isize || y0 + 3 >= h as isize {
        return None;
    }
    let (x0, y0) = (x0 as usize, y0 as usize);
    let mut v = [[0.0; 4]; 4];
    for (j, row) in v.iter_mut().enumerate() {
        for (i, val) in row.iter_mut().enumerate() {
            if !*mask.get(x0 + i, y0 + j) {
                return None;
            }
            *val = *map.get(x0 + i, y0 + j);
        }
    }
    for j in 0..4 {
        for i in 0..3 {
            if (v[j][i + 1] - v[j][i]).abs() > max_step || (v[i + 1][j] - v[i][j]).abs() > max_step {
                return None;
            }
        }
    }
    let wx = keys(px.x - (x0 + 1) as f64);
    let wy = keys(px.y - (y0 + 1) as f64);
    let mut s = 0.0;
    for j in 0..4 {
        for i in 0..4 {
            s += wy[j] * wx[i] * v[j][i];
        }
    }
    Some(s)
}

/// Two-camera reconstruction: for each camera-1 pixel, the point along its
/// ray whose camera-2 projection carries the same absolute phase (found by
/// secant iteration from the camera–projector estimate) is triangulated from
/// both cameras. Pixels whose camera-2 neighbourhood is invalid or not smooth
/// are skipped.
pub fn reconstruct_two_view(
    abs1: &Grid<f64>,
    mask1: &Mask,
    abs2: &Grid<f64>,
    mask2: &Mask,
    cam1: &CameraModel,
    cam2: &CameraModel,
    proj: &ProjectorModel,
) -> (Grid<f64>, PointCloud) {
    let max_step = std::f64::consts::PI;
    let (w, h) = abs1.dims();
    let mut depth = Grid::filled(w, h, f64::NAN);
    let mut cloud = PointCloud::default();
    for y in 0..h {
        for x in 0..w {
            if !*mask1.get(x, y) {
                continue;
            }
            let target = *abs1.get(x, y);
            let p1 = Vector2::new(x as f64, y as f64);
            let Ok(ray) = cam1.backproject_ray(&p1) else { continue };
            let Ok(coord) = proj.phase_to_coordinate(target) else { continue };
            let Ok((start, _)) = intersect_fringe_plane(&ray, coord, proj) else { continue };
            let s0 = (start - ray.origin).norm();
            let f = |s: f64| -> Option<(f64, Vector2<f64>)> {
                let px = cam2.project(&ray.at(s)).ok()?;
                Some((bicubic(abs2, mask2, &px, max_step)? - target, px))
            };
            let (mut sa, mut sb) = (s0, s0 + 0.5);
            let Some((mut fa, _)) = f(sa) else { continue };
            let Some((mut fb, mut px)) = f(sb) else { continue };
            let mut ok = false;
            for _ in 0..30 {
                if (fb - fa).abs() < 1e-15 {
                    break;
                }
                let sn = sb - fb * (sb - sa) / (fb - fa);
                let Some((fnew, pnew)) = f(sn) else { break };
                (sa, fa, sb, fb, px) = (sb, fb, sn, fnew, pnew);
                if fb.abs() < 1e-11 || (sb - sa).abs() < 1e-10 {
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue;
            }
            if let Ok(tv) = triangulate_two_view(&p1, cam1, &px, cam2) {
                depth.set(x, y, tv.point.z);
                cloud.points.push(tv.point);
                cloud.pixels.push((x, y));
            }
        }
    }
    (depth, cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rig, RigScale};
    use crate::simulator::{render_rig, tilted_plane_scene, NoiseModel};

    #[test]
    fn camera_projector_depth_matches_truth() {
        let rig = Rig::synthetic(RigScale::Desk, 12);
        let r = render_rig(&tilted_plane_scene(-20.0, 10.0, NoiseModel::none()), &rig, 3, 0).unwrap();
        let t = &r[0].1;
        let (depth, cloud) =
            reconstruct_camera_projector(&t.abs_phase, &t.mask, &rig.cameras[0], &rig.projector);
        assert_eq!(cloud.len(), t.mask.count());
        for (x, y, &m) in t.mask.indexed() {
            if m {
                assert!((depth.get(x, y) - t.depth.get(x, y)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_view_depth_matches_truth_on_a_plane() {
        let rig = Rig::synthetic(RigScale::Desk, 12);
        let r = render_rig(&tilted_plane_scene(-20.0, 10.0, NoiseModel::none()), &rig, 3, 0).unwrap();
        let (t1, t2) = (&r[0].1, &r[1].1);
        let (depth, cloud) = reconstruct_two_view(
            &t1.abs_phase,
            &t1.mask,
            &t2.abs_phase,
            &t2.mask,
            &rig.cameras[0],
            &rig.cameras[1],
            &rig.projector,
        );
        assert!(cloud.len() as f64 > 0.8 * t1.mask.count() as f64, "{}", cloud.len());
        let mut worst: f64 = 0.0;
        for &(x, y) in &cloud.pixels {
            worst = worst.max((depth.get(x, y) - t1.depth.get(x, y)).abs());
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn ply_roundtrip() {
        let cloud = PointCloud {
            points: vec![Vector3::new(1.0, -2.5, 3.125), Vector3::new(0.1, 0.2, 0.3)],
            pixels: vec![(0, 0), (1, 0)],
        };
        let mut buf = Vec::new();
        cloud.write_ply(&mut buf).unwrap();
        let back = PointCloud::read_ply(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, cloud.points);
    }
}
