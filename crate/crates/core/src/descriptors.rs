//! Scale-invariant keypoint detection and 128-dimensional gradient-histogram
//! descriptors (difference-of-Gaussians detector, SIFT-style descriptor).

use std::io::{Read as _, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::imaging::SessionImageFrame;

/// Descriptor dimensionality: 4x4 spatial grid x 8 orientation bins.
pub const DESCRIPTOR_DIM: usize = 128;
/// Per-frame descriptor cap used when nothing else is configured.
pub const DEFAULT_MAX_DESCRIPTORS: usize = 500;

const DESCR_GRID: usize = 4;
const DESCR_ORI_BINS: usize = 8;
const ORI_HIST_BINS: usize = 36;
const CONTRAST_PREFILTER: f32 = 0.5;
const MAX_REFINE_STEPS: usize = 5;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed descriptor dump: {0}")]
    MalformedDump(String),
}

/// Detector/descriptor parameters. Defaults are the literature-standard set.
#[derive(Debug, Clone)]
pub struct SiftParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub sigma0: f64,
    /// Applied to |D| of unit-normalized intensity at the refined extremum.
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub max_descriptors: usize,
}

impl Default for SiftParams {
    fn default() -> Self {
        SiftParams {
            octaves: 4,
            scales_per_octave: 3,
            sigma0: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            max_descriptors: DEFAULT_MAX_DESCRIPTORS,
        }
    }
}

impl SiftParams {
    /// Parameters tuned for rendered session frames. Translucent polygon
    /// fills composite to roughly a tenth to a third of full intensity, so
    /// the photographic default contrast threshold starves the detector.
    /// Renders carry no sensor noise — the only floor is u8 quantization,
    /// which tops out near 4e-4 in DoG response — so a far lower threshold
    /// is safe and keeps single-polygon features detectable.
    pub fn for_rendered_frames() -> Self {
        SiftParams {
            contrast_threshold: 0.004,
            ..SiftParams::default()
        }
    }
}

/// A detected scale-space extremum with its dominant gradient orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Sub-pixel canvas coordinates.
    pub x: f64,
    pub y: f64,
    /// Blur level of the detection, in pixels of the original raster.
    pub scale: f64,
    /// Radians in [0, 2*pi).
    pub orientation: f64,
    /// |D| at the refined extremum; used for the per-frame cap.
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f32>,
}

/// Parallel keypoint/descriptor sequences for one frame.
#[derive(Debug, Clone, Default)]
pub struct DescriptorSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl DescriptorSet {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

/// Luma of the alpha-premultiplied pixel: round(0.299R' + 0.587G' + 0.114B')
/// where C' = round(C * A / 255) composites the color against black.
pub fn to_grayscale(width: u32, height: u32, rgba: &[u8]) -> Vec<u8> {
    assert_eq!(rgba.len(), (width as usize) * (height as usize) * 4);
    rgba.chunks_exact(4)
        .map(|px| {
            let a = f64::from(px[3]) / 255.0;
            let pre = |c: u8| (f64::from(c) * a).round();
            let luma = 0.299 * pre(px[0]) + 0.587 * pre(px[1]) + 0.114 * pre(px[2]);
            luma.round().min(255.0) as u8
        })
        .collect()
}

#[derive(Clone)]
struct Image {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Image {
    fn new(w: usize, h: usize) -> Self {
        Image {
            w,
            h,
            data: vec![0.0; w * h],
        }
    }

    fn from_gray(gray: &[u8], w: usize, h: usize) -> Self {
        Image {
            w,
            h,
            data: gray.iter().map(|&g| f32::from(g) / 255.0).collect(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }
}

/// Mirror index without repeating the border sample (reflect-101).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k.iter().map(|&v| v as f32).collect()
}

fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let (w, h) = (img.w, img.h);

    // Horizontal pass.
    let mut tmp = Image::new(w, h);
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        let out = &mut tmp.data[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                let xi = reflect(x as isize + k as isize - radius as isize, w);
                acc += kv * row[xi];
            }
            *o = acc;
        }
    }

    // Vertical pass, accumulated row-wise for sequential memory access.
    let mut out = Image::new(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (k, &kv) in kernel.iter().enumerate() {
            let yi = reflect(y as isize + k as isize - radius as isize, h);
            let src = &tmp.data[yi * w..(yi + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

fn downsample(img: &Image) -> Image {
    let w2 = (img.w / 2).max(1);
    let h2 = (img.h / 2).max(1);
    let mut out = Image::new(w2, h2);
    for y in 0..h2 {
        for x in 0..w2 {
            out.data[y * w2 + x] = img.at(x * 2, y * 2);
        }
    }
    out
}

struct Pyramid {
    /// gaussians[o][l]: octave o, blur level l in 0..=s+2.
    gaussians: Vec<Vec<Image>>,
    /// dogs[o][l] = gaussians[o][l+1] - gaussians[o][l], l in 0..=s+1.
    dogs: Vec<Vec<Image>>,
}

fn build_pyramid(base: &Image, params: &SiftParams) -> Pyramid {
    let s = params.scales_per_octave;
    let per_octave = s + 3;
    // The raw raster is treated as already blurred by 0.5 px.
    let initial = (params.sigma0 * params.sigma0 - 0.25).max(0.0).sqrt();
    let mut gaussians: Vec<Vec<Image>> = Vec::new();
    let mut current = gaussian_blur(base, initial);
    for _ in 0..params.octaves {
        if current.w < 8 || current.h < 8 {
            break;
        }
        let mut stack = Vec::with_capacity(per_octave);
        stack.push(current);
        for l in 1..per_octave {
            let sig_prev = params.sigma0 * 2f64.powf((l as f64 - 1.0) / s as f64);
            let sig_next = params.sigma0 * 2f64.powf(l as f64 / s as f64);
            let delta = (sig_next * sig_next - sig_prev * sig_prev).sqrt();
            let blurred = gaussian_blur(&stack[l - 1], delta);
            stack.push(blurred);
        }
        // The level with blur 2*sigma0 seeds the next octave at half size.
        current = downsample(&stack[s]);
        gaussians.push(stack);
    }
    let dogs = gaussians
        .iter()
        .map(|stack| {
            (0..stack.len() - 1)
                .map(|l| {
                    let mut d = Image::new(stack[l].w, stack[l].h);
                    for i in 0..d.data.len() {
                        d.data[i] = stack[l + 1].data[i] - stack[l].data[i];
                    }
                    d
                })
                .collect()
        })
        .collect();
    Pyramid { gaussians, dogs }
}

/// One extremum candidate in octave coordinates.
struct Candidate {
    octave: usize,
    level: f64,
    x: f64,
    y: f64,
    response: f64,
}

fn solve3(h: [[f64; 3]; 3], g: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [
        [h[0][0], h[0][1], h[0][2], -g[0]],
        [h[1][0], h[1][1], h[1][2], -g[1]],
        [h[2][0], h[2][1], h[2][2], -g[2]],
    ];
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

fn refine_extremum(
    dogs: &[Image],
    level0: usize,
    x0: usize,
    y0: usize,
    params: &SiftParams,
) -> Option<(f64, f64, f64, f64)> {
    let (w, h) = (dogs[0].w, dogs[0].h);
    let max_level = dogs.len() - 2;
    let (mut l, mut x, mut y) = (level0, x0, y0);
    for step in 0..=MAX_REFINE_STEPS {
        let v = |dl: usize, dy: isize, dx: isize| -> f64 {
            f64::from(dogs[dl].at((x as isize + dx) as usize, (y as isize + dy) as usize))
        };
        let d = v(l, 0, 0);
        let gx = (v(l, 0, 1) - v(l, 0, -1)) / 2.0;
        let gy = (v(l, 1, 0) - v(l, -1, 0)) / 2.0;
        let gs = (v(l + 1, 0, 0) - v(l - 1, 0, 0)) / 2.0;
        let dxx = v(l, 0, 1) + v(l, 0, -1) - 2.0 * d;
        let dyy = v(l, 1, 0) + v(l, -1, 0) - 2.0 * d;
        let dss = v(l + 1, 0, 0) + v(l - 1, 0, 0) - 2.0 * d;
        let dxy = (v(l, 1, 1) - v(l, 1, -1) - v(l, -1, 1) + v(l, -1, -1)) / 4.0;
        let dxs = (v(l + 1, 0, 1) - v(l + 1, 0, -1) - v(l - 1, 0, 1) + v(l - 1, 0, -1)) / 4.0;
        let dys = (v(l + 1, 1, 0) - v(l + 1, -1, 0) - v(l - 1, 1, 0) + v(l - 1, -1, 0)) / 4.0;
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let offset = solve3(hess, [gx, gy, gs])?;
        let [ox, oy, os] = offset;
        if ox.abs() < 0.5 && oy.abs() < 0.5 && os.abs() < 0.5 {
            let contrast = d + 0.5 * (gx * ox + gy * oy + gs * os);
            if contrast.abs() < params.contrast_threshold {
                return None;
            }
            // Reject edge-like responses via the 2x2 spatial Hessian.
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = params.edge_ratio;
            if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
                return None;
            }
            return Some((x as f64 + ox, y as f64 + oy, l as f64 + os, contrast.abs()));
        }
        if step == MAX_REFINE_STEPS {
            return None;
        }
        // Move toward the offset and re-fit.
        let nx = x as isize + ox.round() as isize;
        let ny = y as isize + oy.round() as isize;
        let nl = l as isize + os.round() as isize;
        if nx < 1 || nx >= w as isize - 1 || ny < 1 || ny >= h as isize - 1 || nl < 1 || nl > max_level as isize
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        l = nl as usize;
    }
    None
}

fn find_candidates(pyr: &Pyramid, params: &SiftParams) -> Vec<Candidate> {
    let prefilter = (params.contrast_threshold as f32) * CONTRAST_PREFILTER;
    let mut out = Vec::new();
    for (o, dogs) in pyr.dogs.iter().enumerate() {
        let (w, h) = (dogs[0].w, dogs[0].h);
        for l in 1..dogs.len() - 1 {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let c = dogs[l].at(x, y);
                    if c.abs() < prefilter {
                        continue;
                    }
                    // Non-strict comparisons (with a sign condition) keep
                    // extrema that sit on flat ridges, where exact ties
                    // would otherwise suppress every sample.
                    let mut is_max = c > 0.0;
                    let mut is_min = c < 0.0;
                    'scan: for dl in [l - 1, l, l + 1] {
                        for dy in -1isize..=1 {
                            for dx in -1isize..=1 {
                                if dl == l && dy == 0 && dx == 0 {
                                    continue;
                                }
                                let n = dogs[dl].at((x as isize + dx) as usize, (y as isize + dy) as usize);
                                if c < n {
                                    is_max = false;
                                }
                                if c > n {
                                    is_min = false;
                                }
                                if !is_max && !is_min {
                                    break 'scan;
                                }
                            }
                        }
                    }
                    if !is_max && !is_min {
                        continue;
                    }
                    if let Some((rx, ry, rl, resp)) = refine_extremum(dogs, l, x, y, params) {
                        out.push(Candidate {
                            octave: o,
                            level: rl,
                            x: rx,
                            y: ry,
                            response: resp,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Gradient (dx, dy) by central differences; None at the raster border.
fn gradient(img: &Image, x: usize, y: usize) -> Option<(f32, f32)> {
    if x == 0 || y == 0 || x + 1 >= img.w || y + 1 >= img.h {
        return None;
    }
    Some((
        img.at(x + 1, y) - img.at(x - 1, y),
        img.at(x, y + 1) - img.at(x, y - 1),
    ))
}

const TWO_PI: f64 = std::f64::consts::TAU;

/// Dominant gradient directions from a smoothed 36-bin histogram with
/// parabolic peak interpolation. Every local peak within 80% of the
/// strongest yields an orientation, so corner-like points with two edge
/// directions produce one keypoint per direction.
fn dominant_orientations(img: &Image, x: f64, y: f64, sigma_rel: f64) -> Vec<f64> {
    let radius = (3.0 * 1.5 * sigma_rel).round().max(1.0) as isize;
    let weight_denom = 2.0 * (1.5 * sigma_rel) * (1.5 * sigma_rel);
    let cx = x.round() as isize;
    let cy = y.round() as isize;
    let mut hist = [0.0f64; ORI_HIST_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let px = cx + dx;
            let py = cy + dy;
            if px < 0 || py < 0 || px as usize >= img.w || py as usize >= img.h {
                continue;
            }
            let Some((gx, gy)) = gradient(img, px as usize, py as usize) else {
                continue;
            };
            let mag = f64::from(gx).hypot(f64::from(gy));
            if mag == 0.0 {
                continue;
            }
            let theta = f64::from(gy).atan2(f64::from(gx)).rem_euclid(TWO_PI);
            let w = (-(dx as f64 * dx as f64 + dy as f64 * dy as f64) / weight_denom).exp();
            let bin = ((theta / TWO_PI) * ORI_HIST_BINS as f64) as usize % ORI_HIST_BINS;
            hist[bin] += mag * w;
        }
    }
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    // Two circular box-smoothing passes stabilize the peaks.
    for _ in 0..2 {
        let prev = hist;
        for i in 0..ORI_HIST_BINS {
            let l = prev[(i + ORI_HIST_BINS - 1) % ORI_HIST_BINS];
            let r = prev[(i + 1) % ORI_HIST_BINS];
            hist[i] = (l + prev[i] + r) / 3.0;
        }
    }
    let h_max = hist.iter().cloned().fold(f64::MIN, f64::max);
    let mut out = Vec::new();
    for i in 0..ORI_HIST_BINS {
        let l = hist[(i + ORI_HIST_BINS - 1) % ORI_HIST_BINS];
        let c = hist[i];
        let r = hist[(i + 1) % ORI_HIST_BINS];
        if c > l && c > r && c >= 0.8 * h_max {
            let denom = l - 2.0 * c + r;
            let shift = if denom.abs() < 1e-18 { 0.0 } else { 0.5 * (l - r) / denom };
            let bin = i as f64 + shift;
            out.push(((bin + 0.5) / ORI_HIST_BINS as f64 * TWO_PI).rem_euclid(TWO_PI));
        }
    }
    if out.is_empty() {
        // Plateau histogram (exact ties on both sides of the maximum): fall back
        // to the lowest-index global maximum so the result stays deterministic.
        let peak = (0..ORI_HIST_BINS)
            .max_by(|&a, &b| hist[a].partial_cmp(&hist[b]).unwrap().then(b.cmp(&a)))
            .unwrap();
        out.push(((peak as f64 + 0.5) / ORI_HIST_BINS as f64 * TWO_PI).rem_euclid(TWO_PI));
    }
    out
}

fn keypoints_from_candidate(pyr: &Pyramid, c: &Candidate, params: &SiftParams) -> Vec<Keypoint> {
    let s = params.scales_per_octave as f64;
    let factor = (1usize << c.octave) as f64;
    let sigma_rel = params.sigma0 * 2f64.powf(c.level / s);
    let stack = &pyr.gaussians[c.octave];
    let level_idx = (c.level.round() as usize).min(stack.len() - 1);
    let img = &stack[level_idx];
    dominant_orientations(img, c.x, c.y, sigma_rel)
        .into_iter()
        .map(|orientation| Keypoint {
            x: c.x * factor,
            y: c.y * factor,
            scale: sigma_rel * factor,
            orientation,
            response: c.response,
        })
        .collect()
}

/// Detects scale-space extrema and assigns each its dominant orientation.
/// Rasters smaller than 32x32 yield no keypoints.
pub fn detect_keypoints(gray: &[u8], width: u32, height: u32, params: &SiftParams) -> Vec<Keypoint> {
    if width < 32 || height < 32 {
        return Vec::new();
    }
    let base = Image::from_gray(gray, width as usize, height as usize);
    let pyr = build_pyramid(&base, params);
    let mut kps: Vec<Keypoint> = find_candidates(&pyr, params)
        .iter()
        .flat_map(|c| keypoints_from_candidate(&pyr, c, params))
        .filter(|k| k.x >= 0.0 && k.y >= 0.0 && k.x <= f64::from(width - 1) && k.y <= f64::from(height - 1))
        .collect();
    sort_by_response(&mut kps);
    kps
}

/// Descending response; ties broken by (y, x, scale, orientation) for a stable cap.
fn sort_by_response(kps: &mut [Keypoint]) {
    kps.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
            .then(a.scale.partial_cmp(&b.scale).unwrap())
            .then(a.orientation.partial_cmp(&b.orientation).unwrap())
    });
}

/// Maps a canvas-coordinate keypoint back into its pyramid octave.
fn octave_of(kp: &Keypoint, params: &SiftParams, n_octaves: usize) -> (usize, f64) {
    let log = (kp.scale / params.sigma0).log2();
    let octave = (log.floor() as isize).clamp(0, n_octaves as isize - 1) as usize;
    let level = (log - octave as f64) * params.scales_per_octave as f64;
    (octave, level)
}

fn describe_one(
    img: &Image,
    x: f64,
    y: f64,
    sigma_rel: f64,
    orientation: f64,
) -> Option<Descriptor> {
    let d = DESCR_GRID as f64;
    let hist_width = 3.0 * sigma_rel;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
    let cx = x.round() as isize;
    let cy = y.round() as isize;
    let cos_t = orientation.cos();
    let sin_t = orientation.sin();
    let exp_scale = -2.0 / (d * d);

    let mut hist = vec![0.0f64; DESCR_GRID * DESCR_GRID * DESCR_ORI_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            // Rotate the offset into the keypoint frame (by -orientation).
            let rx = (dx as f64 * cos_t + dy as f64 * sin_t) / hist_width;
            let ry = (-(dx as f64) * sin_t + dy as f64 * cos_t) / hist_width;
            let cbin = rx + d / 2.0 - 0.5;
            let rbin = ry + d / 2.0 - 0.5;
            if !(-1.0..d).contains(&rbin) || !(-1.0..d).contains(&cbin) {
                continue;
            }
            let px = cx + dx;
            let py = cy + dy;
            if px < 1 || py < 1 || px as usize + 1 >= img.w || py as usize + 1 >= img.h {
                continue;
            }
            let Some((gx, gy)) = gradient(img, px as usize, py as usize) else {
                continue;
            };
            let mag = f64::from(gx).hypot(f64::from(gy));
            if mag == 0.0 {
                continue;
            }
            let theta = (f64::from(gy).atan2(f64::from(gx)) - orientation).rem_euclid(TWO_PI);
            let obin = theta / TWO_PI * DESCR_ORI_BINS as f64;
            let w = ((rx * rx + ry * ry) * exp_scale).exp();
            trilinear_add(&mut hist, rbin, cbin, obin, mag * w);
        }
    }

    let energy: f64 = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if energy < 1e-9 {
        return None;
    }
    let mut vals: Vec<f64> = hist.iter().map(|v| v / energy).collect();
    // Clamp-renormalize: a single clamp followed by renormalization can push
    // components back over the cap, so the joint fixpoint (unit norm AND every
    // component <= 0.2) is computed in closed form. It saturates the s largest
    // bins at 0.2 and scales the remainder to carry the rest of the norm,
    // taking the smallest s for which the scaled tail stays under the cap —
    // exactly the limit of iterating clamp + renormalize. Patches whose energy
    // lives in fewer than 25 bins admit no such vector and are dropped like
    // flat patches.
    if vals.iter().any(|&v| v > 0.2) {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
        // suffix_sq[s] = sum of squares of the sorted values from rank s on.
        let mut suffix_sq = vec![0.0f64; order.len() + 1];
        for s in (0..order.len()).rev() {
            suffix_sq[s] = suffix_sq[s + 1] + vals[order[s]] * vals[order[s]];
        }
        let mut solved = false;
        for s in 0..order.len() {
            let rem = 0.04f64.mul_add(-(s as f64), 1.0);
            if rem < 0.0 {
                break;
            }
            if suffix_sq[s] <= 0.0 {
                break;
            }
            let lambda = (rem / suffix_sq[s]).sqrt();
            if lambda * vals[order[s]] <= 0.2 {
                for (rank, &i) in order.iter().enumerate() {
                    vals[i] = if rank < s { 0.2 } else { lambda * vals[i] };
                }
                solved = true;
                break;
            }
        }
        if !solved {
            return None;
        }
    }
    // Renormalize once more after the f32 cast so the stored vector itself
    // is unit length.
    let cast: Vec<f32> = vals.iter().map(|&v| v as f32).collect();
    let n3 = cast.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
    let values: Vec<f32> = cast.iter().map(|&v| (f64::from(v) / n3) as f32).collect();
    Some(Descriptor { values })
}

fn trilinear_add(hist: &mut [f64], rbin: f64, cbin: f64, obin: f64, value: f64) {
    let r0 = rbin.floor();
    let c0 = cbin.floor();
    let o0 = obin.floor();
    let dr = rbin - r0;
    let dc = cbin - c0;
    let do_ = obin - o0;
    for (ri, rw) in [(r0 as isize, 1.0 - dr), (r0 as isize + 1, dr)] {
        if ri < 0 || ri >= DESCR_GRID as isize {
            continue;
        }
        for (ci, cw) in [(c0 as isize, 1.0 - dc), (c0 as isize + 1, dc)] {
            if ci < 0 || ci >= DESCR_GRID as isize {
                continue;
            }
            for (oi, ow) in [(o0 as isize, 1.0 - do_), (o0 as isize + 1, do_)] {
                let o = (oi.rem_euclid(DESCR_ORI_BINS as isize)) as usize;
                let idx = (ri as usize * DESCR_GRID + ci as usize) * DESCR_ORI_BINS + o;
                hist[idx] += value * rw * cw * ow;
            }
        }
    }
}

fn describe_with_pyramid(pyr: &Pyramid, keypoints: &[Keypoint], params: &SiftParams) -> DescriptorSet {
    let mut set = DescriptorSet::default();
    for kp in keypoints {
        let (octave, level) = octave_of(kp, params, pyr.gaussians.len());
        let stack = &pyr.gaussians[octave];
        let level_idx = (level.round().max(0.0) as usize).min(stack.len() - 1);
        let img = &stack[level_idx];
        let factor = (1usize << octave) as f64;
        let sigma_rel = kp.scale / factor;
        if let Some(desc) = describe_one(img, kp.x / factor, kp.y / factor, sigma_rel, kp.orientation)
        {
            set.keypoints.push(*kp);
            set.descriptors.push(desc);
        }
    }
    set
}

/// Computes descriptors for pre-detected keypoints. Near-zero-energy patches
/// are dropped, so the output may be shorter than the input.
pub fn describe(gray: &[u8], width: u32, height: u32, keypoints: &[Keypoint], params: &SiftParams) -> DescriptorSet {
    if keypoints.is_empty() {
        return DescriptorSet::default();
    }
    let base = Image::from_gray(gray, width as usize, height as usize);
    let pyr = build_pyramid(&base, params);
    describe_with_pyramid(&pyr, keypoints, params)
}

/// Detect, cap at `max_descriptors` by descending response, then describe —
/// building the pyramid only once.
pub fn extract_descriptors(gray: &[u8], width: u32, height: u32, params: &SiftParams) -> DescriptorSet {
    if width < 32 || height < 32 {
        return DescriptorSet::default();
    }
    let base = Image::from_gray(gray, width as usize, height as usize);
    let pyr = build_pyramid(&base, params);
    let mut kps: Vec<Keypoint> = find_candidates(&pyr, params)
        .iter()
        .flat_map(|c| keypoints_from_candidate(&pyr, c, params))
        .filter(|k| k.x >= 0.0 && k.y >= 0.0 && k.x <= f64::from(width - 1) && k.y <= f64::from(height - 1))
        .collect();
    sort_by_response(&mut kps);
    kps.truncate(params.max_descriptors);
    describe_with_pyramid(&pyr, &kps, params)
}

/// Grayscale conversion plus extraction for a rendered frame.
pub fn extract_from_frame(frame: &SessionImageFrame, params: &SiftParams) -> DescriptorSet {
    let gray = to_grayscale(frame.width, frame.height, &frame.pixels);
    extract_descriptors(&gray, frame.width, frame.height, params)
}

const DUMP_MAGIC: &[u8; 8] = b"SYNDSC1\0";

/// Debug dump: 32-byte header (magic, count, dim, reserved) then
/// little-endian f32 rows.
pub fn write_descriptors_bin(set: &DescriptorSet, path: &Path) -> Result<(), DescriptorError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(DUMP_MAGIC)?;
    f.write_all(&(set.descriptors.len() as u64).to_le_bytes())?;
    f.write_all(&(DESCRIPTOR_DIM as u64).to_le_bytes())?;
    f.write_all(&[0u8; 8])?;
    let mut buf = Vec::with_capacity(set.descriptors.len() * DESCRIPTOR_DIM * 4);
    for d in &set.descriptors {
        for v in &d.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_descriptors_bin(path: &Path) -> Result<Vec<Descriptor>, DescriptorError> {
    let mut f = std::fs::File::open(path)?;
    let mut header = [0u8; 32];
    f.read_exact(&mut header)?;
    if &header[0..8] != DUMP_MAGIC {
        return Err(DescriptorError::MalformedDump("bad magic".into()));
    }
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    if dim != DESCRIPTOR_DIM {
        return Err(DescriptorError::MalformedDump(format!("dim {dim} != {DESCRIPTOR_DIM}")));
    }
    let mut body = Vec::new();
    f.read_to_end(&mut body)?;
    if body.len() != count * dim * 4 {
        return Err(DescriptorError::MalformedDump(format!(
            "body {} bytes, expected {}",
            body.len(),
            count * dim * 4
        )));
    }
    let mut out = Vec::with_capacity(count);
    for row in body.chunks_exact(dim * 4) {
        let values: Vec<f32> = row
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push(Descriptor { values });
    }
    Ok(out)
}
