use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraConfig, Position};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    /// Vertical field of view, degrees.
    pub fov_deg: f64,
    /// Downward tilt of the view axis, degrees.
    pub pitch_deg: f64,
    /// Near clipping depth (m).
    pub near: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            fov_deg: 60.0,
            pitch_deg: 20.0,
            near: 0.05,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width > 8192 || self.height > 8192 {
            return Err(Error::Config(format!("image size {}x{} out of range", self.width, self.height)));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 170.0) {
            return Err(Error::Config(format!("fov {} out of (0, 170)", self.fov_deg)));
        }
        if !(self.pitch_deg.abs() < 89.0) || !(self.near > 0.0) {
            return Err(Error::Config("pitch must be within ±89° and near > 0".into()));
        }
        Ok(())
    }
}

pub(crate) type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Pinhole camera derived from a [`CameraConfig`] and a [`RenderConfig`].
///
/// Rays are parameterized so that the ray parameter equals view depth.
#[derive(Clone, Copy, Debug)]
pub struct CameraView {
    pub eye: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
}

/// Screen-space bounding box, half-open pixel ranges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn area(&self) -> f64 {
        f64::from(self.x1.saturating_sub(self.x0)) * f64::from(self.y1.saturating_sub(self.y0))
    }
}

/// Continuous projected bounds of a box, before clipping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScreenBounds {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl ScreenBounds {
    pub fn area(&self) -> f64 {
        (self.u_max - self.u_min).max(0.0) * (self.v_max - self.v_min).max(0.0)
    }

    /// Intersection area divided by the smaller area.
    pub fn overlap_coefficient(&self, other: &ScreenBounds) -> f64 {
        let w = self.u_max.min(other.u_max) - self.u_min.max(other.u_min);
        let h = self.v_max.min(other.v_max) - self.v_min.max(other.v_min);
        if w <= 0.0 || h <= 0.0 {
            return 0.0;
        }
        let smaller = self.area().min(other.area());
        if smaller <= 0.0 {
            0.0
        } else {
            w * h / smaller
        }
    }
}

/// How a box relates to the view frustum's near plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    /// Every corner is in front of the near plane.
    Bounded(ScreenBounds),
    /// Some corners are behind the near plane; screen bounds are unknown.
    Straddling,
    /// Entirely behind the near plane.
    Behind,
}

pub(crate) fn box_corners(center: Position, extents: [f64; 3]) -> [Vec3; 8] {
    let h = [extents[0] / 2.0, extents[1] / 2.0, extents[2] / 2.0];
    let mut out = [[0.0; 3]; 8];
    for (i, c) in out.iter_mut().enumerate() {
        let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
        *c = [center.x + s(0) * h[0], center.y + s(1) * h[1], center.z + s(2) * h[2]];
    }
    out
}

impl CameraView {
    pub fn new(camera: &CameraConfig, cfg: &RenderConfig) -> Self {
        let yaw = camera.theta_c.to_radians();
        let pitch = cfg.pitch_deg.to_radians();
        let forward = [yaw.cos() * pitch.cos(), -pitch.sin(), yaw.sin() * pitch.cos()];
        let right = [-yaw.sin(), 0.0, yaw.cos()];
        // up = right × forward
        let up = [
            right[1] * forward[2] - right[2] * forward[1],
            right[2] * forward[0] - right[0] * forward[2],
            right[0] * forward[1] - right[1] * forward[0],
        ];
        let focal = f64::from(cfg.height) / 2.0 / (cfg.fov_deg.to_radians() / 2.0).tan();
        Self {
            eye: [camera.x_c, camera.y_c, camera.z_c],
            forward,
            right,
            up,
            focal,
            cx: f64::from(cfg.width) / 2.0,
            cy: f64::from(cfg.height) / 2.0,
            width: cfg.width,
            height: cfg.height,
            near: cfg.near,
        }
    }

    /// Projects a point to continuous pixel coordinates and view depth.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let d = sub(p, self.eye);
        let depth = dot(d, self.forward);
        if depth <= self.near {
            return None;
        }
        let u = self.cx + self.focal * dot(d, self.right) / depth;
        let v = self.cy - self.focal * dot(d, self.up) / depth;
        Some((u, v, depth))
    }

    pub fn project_box(&self, center: Position, extents: [f64; 3]) -> Projection {
        let corners = box_corners(center, extents);
        let mut behind = 0;
        let mut b = ScreenBounds {
            u_min: f64::INFINITY,
            u_max: f64::NEG_INFINITY,
            v_min: f64::INFINITY,
            v_max: f64::NEG_INFINITY,
        };
        for c in corners {
            match self.project(c) {
                Some((u, v, _)) => {
                    b.u_min = b.u_min.min(u);
                    b.u_max = b.u_max.max(u);
                    b.v_min = b.v_min.min(v);
                    b.v_max = b.v_max.max(v);
                }
                None => behind += 1,
            }
        }
        match behind {
            0 => Projection::Bounded(b),
            8 => Projection::Behind,
            _ => Projection::Straddling,
        }
    }

    pub fn clip(&self, b: &ScreenBounds) -> Option<PixelRect> {
        let clamp_x = |u: f64| u.clamp(0.0, f64::from(self.width)) as u32;
        let clamp_y = |v: f64| v.clamp(0.0, f64::from(self.height)) as u32;
        let r = PixelRect {
            x0: clamp_x(b.u_min.floor() - 1.0),
            x1: clamp_x(b.u_max.ceil() + 1.0),
            y0: clamp_y(b.v_min.floor() - 1.0),
            y1: clamp_y(b.v_max.ceil() + 1.0),
        };
        (r.x0 < r.x1 && r.y0 < r.y1).then_some(r)
    }

    pub fn inside_image(&self, b: &ScreenBounds) -> bool {
        b.u_min >= 0.0
            && b.v_min >= 0.0
            && b.u_max <= f64::from(self.width)
            && b.v_max <= f64::from(self.height)
    }

    /// Direction through the center of pixel (x, y); its forward component is 1.
    pub fn pixel_ray(&self, x: u32, y: u32) -> Vec3 {
        let a = (f64::from(x) + 0.5 - self.cx) / self.focal;
        let b = (self.cy - f64::from(y) - 0.5) / self.focal;
        [
            self.forward[0] + a * self.right[0] + b * self.up[0],
            self.forward[1] + a * self.right[1] + b * self.up[1],
            self.forward[2] + a * self.right[2] + b * self.up[2],
        ]
    }

    /// Entry depth of the ray through (x, y) into the box, if it hits beyond the near plane.
    pub fn hit_depth(&self, x: u32, y: u32, lo: Vec3, hi: Vec3) -> Option<f64> {
        let dir = self.pixel_ray(x, y);
        let mut t_in = f64::NEG_INFINITY;
        let mut t_out = f64::INFINITY;
        for k in 0..3 {
            if dir[k] == 0.0 {
                if self.eye[k] < lo[k] || self.eye[k] > hi[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[k];
            let (mut t0, mut t1) = ((lo[k] - self.eye[k]) * inv, (hi[k] - self.eye[k]) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_in = t_in.max(t0);
            t_out = t_out.min(t1);
        }
        if t_in > t_out || t_out <= self.near {
            return None;
        }
        Some(t_in.max(self.near))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level_view() -> CameraView {
        let cam = CameraConfig::new(0.0, 1.0, 0.0, 0.0, 0.0);
        CameraView::new(&cam, &RenderConfig { pitch_deg: 0.0, ..RenderConfig::default() })
    }

    #[test]
    fn basis_is_orthonormal() {
        let cam = CameraConfig::new(1.0, 1.5, -2.0, 37.0, 0.0);
        let v = CameraView::new(&cam, &RenderConfig::default());
        for (a, b) in [(v.forward, v.right), (v.forward, v.up), (v.right, v.up)] {
            assert!(dot(a, b).abs() < 1e-12);
        }
        for a in [v.forward, v.right, v.up] {
            assert!((dot(a, a) - 1.0).abs() < 1e-12);
        }
        assert!(v.up[1] > 0.0);
    }

    #[test]
    fn point_on_axis_projects_to_center() {
        let v = level_view();
        let (u, y, d) = v.project([3.0, 1.0, 0.0]).unwrap();
        assert!((u - 128.0).abs() < 1e-9 && (y - 128.0).abs() < 1e-9);
        assert!((d - 3.0).abs() < 1e-12);
        // +z is to the right when looking along +x
        assert!(v.project([3.0, 1.0, 0.5]).unwrap().0 > 128.0);
    }

    #[test]
    fn center_ray_hits_box_face() {
        let v = level_view();
        let d = v.hit_depth(128, 128, [2.0, 0.5, -0.5], [3.0, 1.5, 0.5]).unwrap();
        assert!((d - 2.0).abs() < 1e-9);
        assert!(v.hit_depth(0, 0, [2.0, 0.9, -0.05], [3.0, 1.1, 0.05]).is_none());
    }

    #[test]
    fn boxes_behind_the_camera() {
        let v = level_view();
        let c = Position::new(-3.0, 1.0, 0.0);
        assert_eq!(v.project_box(c, [0.5, 0.5, 0.5]), Projection::Behind);
        let c = Position::new(0.0, 1.0, 0.0);
        assert_eq!(v.project_box(c, [1.0, 0.5, 0.5]), Projection::Straddling);
    }
}
