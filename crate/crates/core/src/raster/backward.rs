use super::forward::{pixel_sums, RenderTape, EPS_ALPHA};
use super::project::energy_gradient;
use super::TILE_SIZE;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{quat_matrix_vjp, Mat3, Quat, Vec2, Vec3};
use crate::par::map_indexed;
use crate::splats::SplatMode;

/// Loss gradients with respect to the rendered quantities. Missing images
/// count as zero.
#[derive(Clone, Debug, Default)]
pub struct ImageGrads {
    pub color: Option<Image>,
    pub depth: Option<Image>,
    pub normal: Option<Image>,
    pub alpha: Option<Image>,
    /// Per contributor (indexed like `RenderTape::contributors`): gradient
    /// with respect to its compositing weight `α·T`.
    pub weight: Option<Vec<f64>>,
    /// Per contributor: gradient with respect to its depth.
    pub contributor_depth: Option<Vec<f64>>,
}

/// World-space gradients per splat.
#[derive(Clone, Debug, Default)]
pub struct SplatGrads {
    pub position: Vec<Vec3>,
    /// Gradient with respect to the world rotation quaternion `q_k`.
    pub rotation: Vec<Quat>,
    pub log_scale: Vec<Vec3>,
    pub opacity_logit: Vec<f64>,
    pub color: Vec<Vec3>,
    /// Image-plane positional gradient norm in pixel units, used for
    /// densification.
    pub screen: Vec<f64>,
}

impl SplatGrads {
    pub fn zeros(n: usize) -> Self {
        Self {
            position: vec![Vec3::zeros(); n],
            rotation: vec![Quat::new(0.0, 0.0, 0.0, 0.0); n],
            log_scale: vec![Vec3::zeros(); n],
            opacity_logit: vec![0.0; n],
            color: vec![Vec3::zeros(); n],
            screen: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.rotation.iter().all(|q| q.is_finite())
            && self.log_scale.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.opacity_logit.iter().all(|x| x.is_finite())
            && self.color.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Camera-space accumulators for one splat.
#[derive(Clone, Copy)]
struct Raw {
    position: Vec3,
    cov: Mat3,
    rotation: Mat3,
    scale: Vec2,
    opacity: f64,
    color: Vec3,
}

impl Raw {
    fn zero() -> Self {
        Self {
            position: Vec3::zeros(),
            cov: Mat3::zeros(),
            rotation: Mat3::zeros(),
            scale: Vec2::zeros(),
            opacity: 0.0,
            color: Vec3::zeros(),
        }
    }

    fn add(&mut self, o: &Raw) {
        self.position += o.position;
        self.cov += o.cov;
        self.rotation += o.rotation;
        self.scale += o.scale;
        self.opacity += o.opacity;
        self.color += o.color;
    }
}

fn check_image(img: &Option<Image>, tape: &RenderTape, channels: usize, name: &str) -> Result<()> {
    if let Some(i) = img {
        if i.width != tape.camera.width || i.height != tape.camera.height || i.channels != channels {
            return Err(Error::DimensionMismatch(format!("{name} gradient image has the wrong shape")));
        }
    }
    Ok(())
}

fn read3(img: &Option<Image>, p: usize) -> Vec3 {
    img.as_ref().map_or(Vec3::zeros(), |i| Vec3::from_column_slice(i.pixel(p)))
}

fn read1(img: &Option<Image>, p: usize) -> f64 {
    img.as_ref().map_or(0.0, |i| i.data[p])
}

/// Reverse pass from image gradients to per-splat world-space gradients.
pub fn backward(tape: &RenderTape, grads: &ImageGrads) -> Result<SplatGrads> {
    check_image(&grads.color, tape, 3, "color")?;
    check_image(&grads.depth, tape, 1, "depth")?;
    check_image(&grads.normal, tape, 3, "normal")?;
    check_image(&grads.alpha, tape, 1, "alpha")?;
    for v in [&grads.weight, &grads.contributor_depth].into_iter().flatten() {
        if v.len() != tape.contributors.len() {
            return Err(Error::DimensionMismatch("per-contributor gradient length".into()));
        }
    }
    let n = tape.world.len();
    let (width, height) = (tape.camera.width, tape.camera.height);
    let bands = height.div_ceil(TILE_SIZE);
    let partials = map_indexed(bands, tape.settings.parallel, |band| {
        let mut acc = vec![Raw::zero(); n];
        for y in band * TILE_SIZE..((band + 1) * TILE_SIZE).min(height) {
            for x in 0..width {
                pixel_backward(tape, grads, y * width + x, &mut acc);
            }
        }
        acc
    });
    let mut acc = vec![Raw::zero(); n];
    for part in &partials {
        for (a, p) in acc.iter_mut().zip(part) {
            a.add(p);
        }
    }
    Ok(finalize(tape, &acc))
}

fn pixel_backward(tape: &RenderTape, grads: &ImageGrads, pixel: usize, acc: &mut [Raw]) {
    let cs = tape.pixel_contributors(pixel);
    if cs.is_empty() {
        return;
    }
    let (start, _) = tape.ranges[pixel];
    let g_color = read3(&grads.color, pixel);
    let g_depth = read1(&grads.depth, pixel);
    let g_normal = read3(&grads.normal, pixel);
    let g_alpha = read1(&grads.alpha, pixel);
    let sums = pixel_sums(tape, pixel);
    let denom = sums.weight.max(EPS_ALPHA);
    let weight_clamped = sums.weight <= EPS_ALPHA;
    let two_d = tape.mode == SplatMode::TwoD;
    let ray = tape.ray(pixel);
    let xn = Vec2::new(ray.x, ray.y);

    // dL/dw for each contributor.
    let gw: Vec<f64> = cs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = c.splat as usize;
            let mut g = g_color.dot(&tape.world[k].color) + g_alpha;
            if two_d {
                g += g_normal.dot(&tape.planes[k].as_ref().unwrap().normal());
            }
            g += if weight_clamped {
                g_depth * c.depth / denom
            } else {
                g_depth * (c.depth / denom - sums.depth_sum / (denom * denom))
            };
            if let Some(w) = &grads.weight {
                g += w[start + i];
            }
            g
        })
        .collect();

    let mut suffix = 0.0;
    for i in (0..cs.len()).rev() {
        let c = &cs[i];
        let k = c.splat as usize;
        let w = c.weight();
        let d_alpha = c.transmittance * gw[i] - suffix / (1.0 - c.alpha);
        suffix += gw[i] * w;

        let mut d_depth = g_depth * w / denom;
        if let Some(zd) = &grads.contributor_depth {
            d_depth += zd[start + i];
        }
        let a = &mut acc[k];
        a.color += g_color * w;

        let opacity = tape.world[k].opacity;
        let (d_opacity, d_gauss) = if opacity * c.gauss < tape.settings.alpha_max {
            (d_alpha * c.gauss, d_alpha * opacity)
        } else {
            (0.0, 0.0)
        };
        a.opacity += d_opacity;
        let d_energy = -c.gauss * d_gauss;

        if two_d {
            let plane = tape.planes[k].as_ref().unwrap();
            let Some(hit) = plane.intersect(&ray, tape.settings.z_near) else {
                continue;
            };
            let (ta, tb, nn) = (plane.rotation.column(0), plane.rotation.column(1), plane.rotation.column(2));
            let (s1, s2) = (plane.scale.x, plane.scale.y);
            let du = d_energy * hit.local.x;
            let dv = d_energy * hit.local.y;
            let dq = ta * (du / s1) + tb * (dv / s2);
            let gt = d_depth + dq.dot(&ray);
            a.position += -dq + nn * (gt / hit.ray_dot_n);
            let d_normal = g_normal * w - hit.offset * (gt / hit.ray_dot_n);
            let mut col = a.rotation.column_mut(0);
            col += hit.offset * (du / s1);
            let mut col = a.rotation.column_mut(1);
            col += hit.offset * (dv / s2);
            let mut col = a.rotation.column_mut(2);
            col += d_normal;
            a.scale += Vec2::new(-du * hit.local.x / s1, -dv * hit.local.y / s2);
        } else {
            let proj = tape.projected[k].as_ref().unwrap();
            let eg = energy_gradient(proj, xn);
            a.position += eg.d_mean * d_energy;
            a.position.z += d_depth;
            a.cov += eg.d_cov * d_energy;
        }
    }
}

fn finalize(tape: &RenderTape, acc: &[Raw]) -> SplatGrads {
    let w = tape.camera.rotation_matrix();
    let wt = w.transpose();
    let mut out = SplatGrads::zeros(acc.len());
    for (k, raw) in acc.iter().enumerate() {
        let ws = &tape.world[k];
        out.position[k] = wt * raw.position;
        out.color[k] = raw.color;
        out.opacity_logit[k] = raw.opacity * ws.opacity * (1.0 - ws.opacity);
        let r = ws.rotation_matrix;
        let (d_rot, d_scale) = match tape.mode {
            SplatMode::ThreeD => {
                let Some(_) = tape.projected[k] else { continue };
                let mut s = ws.scale;
                let thickness = tape.thickness.get(k).copied().flatten();
                if let Some(t) = thickness {
                    s.z = t;
                }
                let g = wt * (0.5 * (raw.cov + raw.cov.transpose())) * w;
                let s2 = Mat3::from_diagonal(&s.component_mul(&s));
                let d_rot = 2.0 * g * r * s2;
                let rgr = r.transpose() * g * r;
                let mut ds = Vec3::new(2.0 * s.x * rgr[(0, 0)], 2.0 * s.y * rgr[(1, 1)], 2.0 * s.z * rgr[(2, 2)]);
                if thickness.is_some() {
                    let share = 0.5 * tape.settings.flat_thickness * ds.z;
                    ds = Vec3::new(ds.x + share, ds.y + share, 0.0);
                }
                (d_rot, ds)
            }
            SplatMode::TwoD => {
                if tape.planes[k].is_none() {
                    continue;
                }
                (wt * raw.rotation, Vec3::new(raw.scale.x, raw.scale.y, 0.0))
            }
        };
        out.rotation[k] = quat_matrix_vjp(ws.rotation, &d_rot);
        out.log_scale[k] = d_scale.component_mul(&ws.scale);
        let depth = tape.camera.world_to_camera(ws.position).z.max(tape.settings.z_near);
        out.screen[k] = (raw.position.x.powi(2) + raw.position.y.powi(2)).sqrt() * depth / tape.camera.fx;
    }
    out
}
