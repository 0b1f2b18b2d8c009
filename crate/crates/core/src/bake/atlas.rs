use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::math::{Vec2, Vec3};

/// Square atlas region of one face. Texel `(i, j)` of the chart sits at
/// atlas pixel `(x + i, y + j)`; its center maps to `(u, v) = ((i + ½)/R, (j + ½)/R)`
/// with `β = (1 − u − v, u, v)`, projected onto the triangle when `u + v > 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chart {
    pub face: usize,
    pub x: usize,
    pub y: usize,
    pub res: usize,
}

impl Chart {
    pub fn texel_barycentric(&self, i: usize, j: usize) -> Vec3 {
        texel_barycentric(i, j, self.res)
    }

    /// Continuous texel coordinates of a barycentric point.
    pub fn texel_coords(&self, beta: &Vec3) -> Vec2 {
        let r = self.res as f64;
        Vec2::new(beta[1] * r - 0.5, beta[2] * r - 0.5)
    }

    pub fn overlaps(&self, o: &Chart, gutter: usize) -> bool {
        let (a0, a1) = (self.x, self.x + self.res + gutter);
        let (b0, b1) = (o.x, o.x + o.res + gutter);
        let (c0, c1) = (self.y, self.y + self.res + gutter);
        let (d0, d1) = (o.y, o.y + o.res + gutter);
        a0 < b1 && b0 < a1 && c0 < d1 && d0 < c1
    }
}

pub fn texel_barycentric(i: usize, j: usize, res: usize) -> Vec3 {
    let r = res as f64;
    let (mut u, mut v) = ((i as f64 + 0.5) / r, (j as f64 + 0.5) / r);
    let s = u + v;
    if s > 1.0 {
        u /= s;
        v /= s;
    }
    Vec3::new((1.0 - u - v).max(0.0), u, v)
}

/// Texels between neighbouring charts.
pub const GUTTER: usize = 1;

/// Shelf packing in face order: charts go left to right, a new shelf starts
/// when the row would exceed the target width.
pub fn pack_charts(resolutions: &[usize]) -> (Vec<Chart>, usize, usize) {
    let area: usize = resolutions.iter().map(|r| (r + GUTTER) * (r + GUTTER)).sum();
    let widest = resolutions.iter().copied().max().unwrap_or(0) + GUTTER;
    let target = ((area as f64).sqrt().ceil() as usize).max(widest);
    let mut charts = Vec::with_capacity(resolutions.len());
    let (mut x, mut y, mut shelf, mut width) = (0, 0, 0, 0);
    for (face, &res) in resolutions.iter().enumerate() {
        let size = res + GUTTER;
        if x + size > target && x > 0 {
            x = 0;
            y += shelf;
            shelf = 0;
        }
        charts.push(Chart { face, x, y, res });
        x += size;
        width = width.max(x);
        shelf = shelf.max(size);
    }
    (charts, width, y + shelf)
}

/// Baked diffuse (RGB + coverage), tangent-space normal (encoded to
/// `[0, 1]`) and displacement atlases with their chart table.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeAtlas {
    pub diffuse: Image,
    pub normal: Image,
    pub displacement: Image,
    pub charts: Vec<Chart>,
}

impl AttributeAtlas {
    /// Empty atlas: black, zero coverage, flat normals, zero displacement.
    pub fn empty(charts: Vec<Chart>, width: usize, height: usize) -> Self {
        let mut normal = Image::new(width, height, 3);
        for p in 0..normal.num_pixels() {
            normal.pixel_mut(p).copy_from_slice(&[0.5, 0.5, 1.0]);
        }
        Self {
            diffuse: Image::new(width, height, 4),
            normal,
            displacement: Image::new(width, height, 1),
            charts,
        }
    }

    pub fn width(&self) -> usize {
        self.diffuse.width
    }

    pub fn height(&self) -> usize {
        self.diffuse.height
    }

    /// Bilinear lookup inside a face's chart (clamped to the chart).
    pub fn sample(&self, image: &Image, face: usize, beta: &Vec3) -> Vec<f64> {
        let chart = &self.charts[face];
        let t = chart.texel_coords(beta);
        let max = (chart.res - 1) as f64;
        let x = t.x.clamp(0.0, max);
        let y = t.y.clamp(0.0, max);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(chart.res - 1), (y0 + 1).min(chart.res - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        (0..image.channels)
            .map(|c| {
                let g = |i: usize, j: usize| image.get(chart.x + i, chart.y + j, c);
                (1.0 - fy) * ((1.0 - fx) * g(x0, y0) + fx * g(x1, y0)) + fy * ((1.0 - fx) * g(x0, y1) + fx * g(x1, y1))
            })
            .collect()
    }

    /// Decoded tangent-space normal of one texel.
    pub fn decoded_normal(&self, x: usize, y: usize) -> Vec3 {
        Vec3::new(
            2.0 * self.normal.get(x, y, 0) - 1.0,
            2.0 * self.normal.get(x, y, 1) - 1.0,
            2.0 * self.normal.get(x, y, 2) - 1.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texel_barycentrics_are_valid() {
        for res in [1, 4, 7, 64] {
            for i in 0..res {
                for j in 0..res {
                    let b = texel_barycentric(i, j, res);
                    assert!(b.iter().all(|x| *x >= 0.0));
                    assert!((b.sum() - 1.0).abs() < 1e-12);
                }
            }
        }
        let b = texel_barycentric(0, 0, 4);
        assert_eq!(b, Vec3::new(0.75, 0.125, 0.125));
    }

    #[test]
    fn packing_is_disjoint_and_inside() {
        let res: Vec<usize> = (0..57).map(|i| 4 + (i * 7) % 20).collect();
        let (charts, w, h) = pack_charts(&res);
        for (k, c) in charts.iter().enumerate() {
            assert_eq!(c.face, k);
            assert!(c.x + c.res <= w && c.y + c.res <= h);
            for d in &charts[k + 1..] {
                assert!(!c.overlaps(d, GUTTER), "{c:?} {d:?}");
            }
        }
    }

    #[test]
    fn sampling_a_constant_chart() {
        let (charts, w, h) = pack_charts(&[5, 5]);
        let mut atlas = AttributeAtlas::empty(charts, w, h);
        let c = atlas.charts[1];
        for i in 0..5 {
            for j in 0..5 {
                atlas.displacement.set(c.x + i, c.y + j, 0, 0.25);
            }
        }
        let v = atlas.sample(&atlas.displacement, 1, &Vec3::new(0.2, 0.5, 0.3));
        assert!((v[0] - 0.25).abs() < 1e-15);
        let v = atlas.sample(&atlas.displacement, 0, &Vec3::new(0.2, 0.5, 0.3));
        assert_eq!(v[0], 0.0);
    }
}
