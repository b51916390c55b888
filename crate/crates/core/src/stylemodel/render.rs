//! Pose-warped heightfield rendering into normal, albedo and Lambertian maps.

use ndarray::{s, Array1, Array3};

use super::attributes::{Block, StyleAttributes};
use super::basis::{canonical, inside_face, StyleBasis};
use super::sh;

const INVERSE_ITERATIONS: usize = 12;

/// Rendered conditioning maps, each `(3, H, W)` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderMaps {
    pub normals: Array3<f32>,
    pub albedo: Array3<f32>,
    pub lambertian: Array3<f32>,
}

impl RenderMaps {
    pub fn height(&self) -> usize {
        self.normals.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.normals.shape()[2]
    }

    /// Channel concatenation `normals || albedo || lambertian`, `(9, H, W)`.
    pub fn concat(&self) -> Array3<f32> {
        let (h, w) = (self.height(), self.width());
        let mut out = Array3::zeros((9, h, w));
        out.slice_mut(s![0..3, .., ..]).assign(&self.normals);
        out.slice_mut(s![3..6, .., ..]).assign(&self.albedo);
        out.slice_mut(s![6..9, .., ..]).assign(&self.lambertian);
        out
    }

    /// Decodes the normal at a pixel from its `[0, 1]` encoding.
    pub fn normal_at(&self, y: usize, x: usize) -> [f64; 3] {
        let d = |c: usize| 2.0 * self.normals[[c, y, x]] as f64 - 1.0;
        [d(0), d(1), d(2)]
    }
}

/// Per-pixel surface lookup produced by the pose warp.
#[derive(Debug, Clone)]
pub struct Rasterization {
    pub height: usize,
    pub width: usize,
    /// Canonical surface coordinate `(u, v)` seen at each pixel.
    pub coords: Vec<(f64, f64)>,
    pub foreground: Vec<bool>,
    /// Rotated unit normals.
    pub normals: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    rot: [[f64; 3]; 3],
    scale: f64,
    tx: f64,
    ty: f64,
}

impl Pose {
    fn from_attributes(p: &[f64]) -> Self {
        let (yaw, pitch, roll) = (p[0], p[1], p[2]);
        let ry = [[yaw.cos(), 0.0, yaw.sin()], [0.0, 1.0, 0.0], [-yaw.sin(), 0.0, yaw.cos()]];
        let rx = [[1.0, 0.0, 0.0], [0.0, pitch.cos(), -pitch.sin()], [0.0, pitch.sin(), pitch.cos()]];
        let rz = [[roll.cos(), -roll.sin(), 0.0], [roll.sin(), roll.cos(), 0.0], [0.0, 0.0, 1.0]];
        let rot = matmul(&rz, &matmul(&rx, &ry));
        Self {
            rot,
            scale: p[3].exp(),
            tx: p[4],
            ty: p[5],
        }
    }

    fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let r = &self.rot;
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        ]
    }
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Bilinear lookup on a row-major grid indexed by canonical coordinates.
struct Grid<'a> {
    data: &'a [f64],
    h: usize,
    w: usize,
}

impl Grid<'_> {
    fn sample(&self, u: f64, v: f64) -> f64 {
        let fx = ((u + 1.0) * 0.5 * (self.w - 1) as f64).clamp(0.0, (self.w - 1) as f64);
        let fy = ((v + 1.0) * 0.5 * (self.h - 1) as f64).clamp(0.0, (self.h - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.w - 1), (y0 + 1).min(self.h - 1));
        let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
        let at = |x: usize, y: usize| self.data[y * self.w + x];
        let top = at(x0, y0) * (1.0 - ax) + at(x1, y0) * ax;
        let bottom = at(x0, y1) * (1.0 - ax) + at(x1, y1) * ax;
        top * (1.0 - ay) + bottom * ay
    }
}

/// Geometry on the canonical grid for attributes `p`.
fn heightfield(basis: &StyleBasis, p: &StyleAttributes) -> Array1<f64> {
    let shape = Array1::from(p.block(Block::Shape).to_vec());
    let expr = Array1::from(p.block(Block::Expression).to_vec());
    let mut height = basis.base_mesh.clone();
    height += &basis.shape.t().dot(&shape);
    height += &basis.expression.t().dot(&expr);
    height
}

fn gradients(height: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    // Grid spacing in canonical units is 2 / (n - 1).
    let (sx, sy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let mut gu = vec![0.0; h * w];
    let mut gv = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gu[y * w + x] = (height[y * w + xr] - height[y * w + xl]) / (xr - xl) as f64 * sx;
            gv[y * w + x] = (height[yd * w + x] - height[yu * w + x]) / (yd - yu) as f64 * sy;
        }
    }
    (gu, gv)
}

/// Warps the posed surface into image space: for each output pixel, finds
/// the canonical point whose rotated, scaled and translated projection lands
/// there (fixed-point iteration on the heightfield).
pub fn rasterize(basis: &StyleBasis, p: &StyleAttributes) -> Rasterization {
    let (h, w) = (basis.height, basis.width);
    let height = heightfield(basis, p);
    let (gu, gv) = gradients(height.as_slice().expect("contiguous"), h, w);
    let hgrid = Grid { data: height.as_slice().expect("contiguous"), h, w };
    let ugrid = Grid { data: &gu, h, w };
    let vgrid = Grid { data: &gv, h, w };
    let pose = Pose::from_attributes(p.pose());
    let r = pose.rot;
    // Projection rows: image = M_uv (u, v) + m_h * height.
    let det = r[0][0] * r[1][1] - r[0][1] * r[1][0];
    let inv = [[r[1][1] / det, -r[0][1] / det], [-r[1][0] / det, r[0][0] / det]];

    let mut coords = Vec::with_capacity(h * w);
    let mut foreground = Vec::with_capacity(h * w);
    let mut normals = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let qx = (canonical(x as f64, w) - pose.tx) / pose.scale;
            let qy = (canonical(y as f64, h) - pose.ty) / pose.scale;
            let (mut u, mut v) = (0.0, 0.0);
            let mut z = 0.0;
            for _ in 0..INVERSE_ITERATIONS {
                let (bx, by) = (qx - r[0][2] * z, qy - r[1][2] * z);
                u = inv[0][0] * bx + inv[0][1] * by;
                v = inv[1][0] * bx + inv[1][1] * by;
                z = hgrid.sample(u, v);
            }
            let fg = det.abs() > 1e-9 && u.abs() <= 1.0 && v.abs() <= 1.0 && inside_face(u, v) && u.is_finite() && v.is_finite();
            let n = if fg {
                let (du, dv) = (ugrid.sample(u, v), vgrid.sample(u, v));
                let len = (du * du + dv * dv + 1.0).sqrt();
                let n = pose.rotate([-du / len, -dv / len, 1.0 / len]);
                let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                [n[0] / l, n[1] / l, n[2] / l]
            } else {
                [0.0; 3]
            };
            coords.push((u, v));
            foreground.push(fg);
            normals.push(n);
        }
    }
    Rasterization {
        height: h,
        width: w,
        coords,
        foreground,
        normals,
    }
}

/// Samples a channel-major `(3, H, W)` canonical field at the surface
/// coordinates of a rasterization.
pub(crate) fn sample_surface(field: &[f64], raster: &Rasterization, channel: usize, pixel: usize) -> f64 {
    let (h, w) = (raster.height, raster.width);
    let grid = Grid {
        data: &field[channel * h * w..(channel + 1) * h * w],
        h,
        w,
    };
    let (u, v) = raster.coords[pixel];
    grid.sample(u, v)
}

/// Renders maps together with the unclamped irradiance `(3, H, W)`.
pub fn render_with_irradiance(basis: &StyleBasis, p: &StyleAttributes) -> (RenderMaps, Array3<f64>) {
    render_detailed(basis, p, None)
}

/// Like [`render_with_irradiance`], with an optional extra albedo field
/// (channel-major `(3, H, W)` on the canonical grid) added before shading.
pub fn render_detailed(basis: &StyleBasis, p: &StyleAttributes, detail: Option<&[f64]>) -> (RenderMaps, Array3<f64>) {
    let (h, w) = (basis.height, basis.width);
    let raster = rasterize(basis, p);
    let tex = Array1::from(p.block(Block::Texture).to_vec());
    let mut albedo_field = basis.base_color.clone();
    albedo_field += &basis.texture.t().dot(&tex);
    if let Some(d) = detail {
        albedo_field += &ndarray::ArrayView1::from(d);
    }
    let albedo_field = albedo_field.as_slice().expect("contiguous");
    let light = p.illumination();

    let mut normals = Array3::zeros((3, h, w));
    let mut albedo = Array3::zeros((3, h, w));
    let mut lambertian = Array3::zeros((3, h, w));
    let mut irradiance = Array3::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !raster.foreground[i] {
                continue;
            }
            let n = raster.normals[i];
            let e = sh::irradiance(n, light);
            for c in 0..3 {
                let a = sample_surface(albedo_field, &raster, c, i).clamp(0.0, 1.0);
                normals[[c, y, x]] = ((n[c] + 1.0) * 0.5) as f32;
                albedo[[c, y, x]] = a as f32;
                irradiance[[c, y, x]] = e[c];
                lambertian[[c, y, x]] = (a * e[c]).clamp(0.0, 1.0) as f32;
            }
        }
    }
    (
        RenderMaps {
            normals,
            albedo,
            lambertian,
        },
        irradiance,
    )
}

pub fn render(basis: &StyleBasis, p: &StyleAttributes) -> RenderMaps {
    render_with_irradiance(basis, p).0
}
