//! Rendering of projected sessions as filled convex polygons on fixed-size
//! canvases, plus slicing of a capture into a time-windowed frame stream.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{featurize, Session};
use crate::projection::{project_point, PlanePoint, ProjectionBasis, ProjectionError};

/// Canvas edge length used when nothing else is configured.
pub const DEFAULT_CANVAS_SIZE: u32 = 1000;
/// Tumbling-window length used when nothing else is configured.
pub const DEFAULT_WINDOW_US: u64 = 5_000_000;

const GOLDEN_RATIO_FRAC: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("empty input: need at least one point")]
    EmptyInput,
    #[error("projection failed: {0}")]
    Projection(#[from] ProjectionError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

/// Frame class used during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameLabel {
    Legitimate,
    Ddos,
    Unlabeled,
}

/// One session's convex outline and fill color.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionPolygon {
    pub session_id: u64,
    /// Counter-clockwise hull vertices in plane coordinates.
    pub hull: Vec<PlanePoint>,
    /// RGBA fill color.
    pub color: [u8; 4],
}

/// One rendered time window.
#[derive(Debug, Clone)]
pub struct SessionImageFrame {
    pub width: u32,
    pub height: u32,
    /// Row-major RGBA bytes, length width*height*4.
    pub pixels: Vec<u8>,
    pub window_start: u64,
    pub window_end: u64,
    pub polygons: Vec<SessionPolygon>,
    pub label: FrameLabel,
}

impl SessionImageFrame {
    pub fn blank(width: u32, height: u32, window_start: u64, window_end: u64) -> Self {
        let mut pixels = vec![0u8; (width as usize) * (height as usize) * 4];
        for px in pixels.chunks_exact_mut(4) {
            px[3] = 255; // opaque black background
        }
        SessionImageFrame {
            width,
            height,
            pixels,
            window_start,
            window_end,
            polygons: Vec::new(),
            label: FrameLabel::Unlabeled,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = ((y as usize) * (self.width as usize) + x as usize) * 4;
        [
            self.pixels[i],
            self.pixels[i + 1],
            self.pixels[i + 2],
            self.pixels[i + 3],
        ]
    }
}

/// Affine world-to-pixel map for a fixed canvas, frozen at training time so
/// prediction renders into the same coordinate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanvasCalibration {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub width: u32,
    pub height: u32,
}

impl CanvasCalibration {
    /// Maps (u_min,v_min) to pixel (0,0) and (u_max,v_max) to (W-1,H-1).
    pub fn new(bounds: (f64, f64, f64, f64), width: u32, height: u32) -> Self {
        let (u_min, u_max, v_min, v_max) = bounds;
        CanvasCalibration {
            u_min,
            u_max,
            v_min,
            v_max,
            width,
            height,
        }
    }

    pub fn for_basis(basis: &ProjectionBasis, width: u32, height: u32) -> Self {
        Self::new(crate::projection::coordinate_bounds(basis), width, height)
    }

    /// Continuous pixel coordinates; callers clamp to the canvas.
    pub fn to_pixel(&self, p: PlanePoint) -> (f64, f64) {
        let span_u = (self.u_max - self.u_min).max(f64::MIN_POSITIVE);
        let span_v = (self.v_max - self.v_min).max(f64::MIN_POSITIVE);
        let x = (p.u - self.u_min) / span_u * f64::from(self.width - 1);
        let y = (p.v - self.v_min) / span_v * f64::from(self.height - 1);
        (x, y)
    }

    fn clamp(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            x.clamp(0.0, f64::from(self.width - 1)),
            y.clamp(0.0, f64::from(self.height - 1)),
        )
    }
}

fn cross(o: PlanePoint, a: PlanePoint, b: PlanePoint) -> f64 {
    (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u)
}

/// Andrew monotone chain. Returns the hull counter-clockwise with collinear
/// interior vertices dropped; one distinct point yields a 1-vertex hull, two
/// distinct or fully collinear points a 2-vertex segment.
pub fn convex_hull(points: &[PlanePoint]) -> Result<Vec<PlanePoint>, ImagingError> {
    if points.is_empty() {
        return Err(ImagingError::EmptyInput);
    }
    let mut pts: Vec<PlanePoint> = points.to_vec();
    pts.sort_by(|p, q| {
        p.u.partial_cmp(&q.u)
            .unwrap()
            .then(p.v.partial_cmp(&q.v).unwrap())
    });
    pts.dedup_by(|p, q| p.u == q.u && p.v == q.v);
    if pts.len() == 1 {
        return Ok(pts);
    }

    let mut lower: Vec<PlanePoint> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<PlanePoint> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    Ok(lower)
}

/// Deterministic per-session fill color: golden-ratio hue walk at fixed
/// saturation 0.8, value 0.9, alpha 0.5.
pub fn session_color(session_id: u64) -> [u8; 4] {
    let hue = (session_id as f64 * GOLDEN_RATIO_FRAC).fract() * 360.0;
    let (s, v) = (0.8f64, 0.9f64);
    let c = v * s;
    let hp = hue / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_byte = |f: f64| -> u8 { (f * 255.0 + 0.5).floor() as u8 };
    [
        to_byte(r1 + m),
        to_byte(g1 + m),
        to_byte(b1 + m),
        to_byte(0.5),
    ]
}

/// Integer alpha-over with round-half-up: out = floor((2p+255)/510) where
/// p = src*a + dst*(255-a). Pure integer arithmetic for cross-platform
/// bit-exactness.
fn blend_channel(src: u8, dst: u8, alpha: u8) -> u8 {
    let p = u32::from(src) * u32::from(alpha) + u32::from(dst) * (255 - u32::from(alpha));
    ((2 * p + 255) / 510) as u8
}

fn composite_pixel(pixels: &mut [u8], width: u32, x: u32, y: u32, color: [u8; 4]) {
    let i = ((y as usize) * (width as usize) + x as usize) * 4;
    let a = color[3];
    pixels[i] = blend_channel(color[0], pixels[i], a);
    pixels[i + 1] = blend_channel(color[1], pixels[i + 1], a);
    pixels[i + 2] = blend_channel(color[2], pixels[i + 2], a);
    // Canvas stays opaque.
}

/// Pixel set of a 3-pixel-wide stamp around a point, clamped to the canvas.
fn stamp_point(set: &mut Vec<(u32, u32)>, x: f64, y: f64, width: u32, height: u32) {
    let cx = x.round() as i64;
    let cy = y.round() as i64;
    for dy in -1..=1i64 {
        for dx in -1..=1i64 {
            let px = (cx + dx).clamp(0, i64::from(width) - 1) as u32;
            let py = (cy + dy).clamp(0, i64::from(height) - 1) as u32;
            set.push((px, py));
        }
    }
}

/// Composites one polygon onto the frame through the calibration: scanline
/// fill for proper hulls, 3-pixel-wide stamps for degenerate ones. Every
/// covered pixel is blended exactly once.
pub fn rasterize(frame: &mut SessionImageFrame, poly: &SessionPolygon, cal: &CanvasCalibration) {
    let (w, h) = (frame.width, frame.height);
    let verts: Vec<(f64, f64)> = poly
        .hull
        .iter()
        .map(|&p| cal.clamp(cal.to_pixel(p)))
        .collect();
    match verts.len() {
        0 => {}
        1 => {
            let mut set = Vec::new();
            stamp_point(&mut set, verts[0].0, verts[0].1, w, h);
            set.sort_unstable();
            set.dedup();
            for (x, y) in set {
                composite_pixel(&mut frame.pixels, w, x, y, poly.color);
            }
        }
        2 => {
            let (x0, y0) = verts[0];
            let (x1, y1) = verts[1];
            let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as u32;
            let mut set = Vec::new();
            for i in 0..=steps {
                let t = f64::from(i) / f64::from(steps);
                stamp_point(&mut set, x0 + t * (x1 - x0), y0 + t * (y1 - y0), w, h);
            }
            set.sort_unstable();
            set.dedup();
            for (x, y) in set {
                composite_pixel(&mut frame.pixels, w, x, y, poly.color);
            }
        }
        _ => {
            let y_lo = verts.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            let y_hi = verts.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
            let row_lo = y_lo.ceil().max(0.0) as u32;
            let row_hi = y_hi.floor().min(f64::from(h - 1)) as u32;
            for y in row_lo..=row_hi {
                let yf = f64::from(y);
                let mut x_lo = f64::INFINITY;
                let mut x_hi = f64::NEG_INFINITY;
                for i in 0..verts.len() {
                    let (ax, ay) = verts[i];
                    let (bx, by) = verts[(i + 1) % verts.len()];
                    if (ay - yf).abs() == 0.0 && (by - yf).abs() == 0.0 {
                        // Horizontal edge on this row.
                        x_lo = x_lo.min(ax.min(bx));
                        x_hi = x_hi.max(ax.max(bx));
                    } else if (yf >= ay.min(by)) && (yf <= ay.max(by)) && ay != by {
                        let t = (yf - ay) / (by - ay);
                        let x = ax + t * (bx - ax);
                        x_lo = x_lo.min(x);
                        x_hi = x_hi.max(x);
                    }
                }
                if x_lo > x_hi {
                    continue;
                }
                let col_lo = x_lo.ceil().max(0.0) as u32;
                let col_hi = x_hi.floor().min(f64::from(w - 1)) as u32;
                for x in col_lo..=col_hi {
                    composite_pixel(&mut frame.pixels, w, x, y, poly.color);
                }
            }
        }
    }
}

/// Projects every packet of a session into the plane.
pub fn project_session(
    session: &Session,
    basis: &ProjectionBasis,
) -> Result<Vec<PlanePoint>, ProjectionError> {
    session
        .packets
        .iter()
        .map(|p| project_point(&featurize(p).values, basis))
        .collect()
}

/// Builds the polygon for one session from an explicit point subset.
pub fn polygon_for(session_id: u64, points: &[PlanePoint]) -> Result<SessionPolygon, ImagingError> {
    Ok(SessionPolygon {
        session_id,
        hull: convex_hull(points)?,
        color: session_color(session_id),
    })
}

/// Number of tumbling windows covering [t_min, t_max].
pub fn window_count(t_min: u64, t_max: u64, window_us: u64) -> usize {
    let span = t_max.saturating_sub(t_min);
    (span.div_ceil(window_us)).max(1) as usize
}

/// Renders the capture as a sequence of tumbling-window frames. Sessions are
/// composited in (first_seen, session_id) order; a session contributes to a
/// window if at least one of its packets falls inside it, and only those
/// packets shape its polygon there. The final window is right-inclusive so
/// the last packet always lands in a frame.
pub fn frame_stream(
    sessions: &[Session],
    basis: &ProjectionBasis,
    cal: &CanvasCalibration,
    window_us: u64,
) -> Result<Vec<SessionImageFrame>, ImagingError> {
    assert!(window_us > 0, "window must be positive");
    let mut ordered: Vec<&Session> = sessions.iter().filter(|s| !s.packets.is_empty()).collect();
    ordered.sort_by_key(|s| (s.first_seen, s.session_id));
    if ordered.is_empty() {
        return Ok(Vec::new());
    }
    let t_min = ordered.iter().map(|s| s.first_seen).min().unwrap();
    let t_max = ordered.iter().map(|s| s.last_seen).max().unwrap();
    let n_frames = window_count(t_min, t_max, window_us);

    // Project once per packet, then bucket by window.
    let mut frames: Vec<SessionImageFrame> = (0..n_frames)
        .map(|i| {
            let start = t_min + (i as u64) * window_us;
            SessionImageFrame::blank(cal.width, cal.height, start, start + window_us)
        })
        .collect();

    for session in &ordered {
        let points = project_session(session, basis)?;
        let mut per_window: Vec<Vec<PlanePoint>> = vec![Vec::new(); n_frames];
        for (pkt, pt) in session.packets.iter().zip(points) {
            let idx = (((pkt.timestamp - t_min) / window_us) as usize).min(n_frames - 1);
            per_window[idx].push(pt);
        }
        for (idx, pts) in per_window.iter().enumerate() {
            if pts.is_empty() {
                continue;
            }
            let poly = polygon_for(session.session_id, pts)?;
            rasterize(&mut frames[idx], &poly, cal);
            frames[idx].polygons.push(poly);
        }
    }
    Ok(frames)
}

/// Per-pixel absolute difference stream: frame 0 is differenced against the
/// opaque black background (leaving its own content), frame i>0 against frame
/// i-1. RGB channels only; alpha stays 255.
pub fn diff_frames(frames: &[SessionImageFrame]) -> Vec<SessionImageFrame> {
    let mut out: Vec<SessionImageFrame> = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let mut d = f.clone();
        if i > 0 {
            let prev = &frames[i - 1].pixels;
            for (j, chunk) in d.pixels.chunks_exact_mut(4).enumerate() {
                for c in 0..3 {
                    let a = chunk[c];
                    let b = prev[j * 4 + c];
                    chunk[c] = a.abs_diff(b);
                }
                chunk[3] = 255;
            }
        }
        out.push(d);
    }
    out
}

/// One line of the frames.jsonl manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameManifestEntry {
    pub index: usize,
    pub file: String,
    pub window_start_us: u64,
    pub window_end_us: u64,
    pub label: FrameLabel,
    pub session_count: usize,
}

pub fn frame_file_name(index: usize, window_start_us: u64) -> String {
    format!("frame_{index}_{window_start_us}.png")
}

/// Writes one frame as an 8-bit RGBA PNG.
pub fn write_frame_png(frame: &SessionImageFrame, path: &Path) -> Result<(), ImagingError> {
    let img = image::RgbaImage::from_raw(frame.width, frame.height, frame.pixels.clone())
        .expect("pixel buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads any PNG back as (width, height, RGBA bytes).
pub fn read_png_rgba(path: &Path) -> Result<(u32, u32, Vec<u8>), ImagingError> {
    let img = image::open(path)?.into_rgba8();
    let (w, h) = img.dimensions();
    Ok((w, h, img.into_raw()))
}

/// Writes all frames plus the frames.jsonl manifest into `dir`.
pub fn write_frames(frames: &[SessionImageFrame], dir: &Path) -> Result<Vec<FrameManifestEntry>, ImagingError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Vec::with_capacity(frames.len());
    for (index, frame) in frames.iter().enumerate() {
        let file = frame_file_name(index, frame.window_start);
        write_frame_png(frame, &dir.join(&file))?;
        manifest.push(FrameManifestEntry {
            index,
            file,
            window_start_us: frame.window_start,
            window_end_us: frame.window_end,
            label: frame.label,
            session_count: frame.polygons.len(),
        });
    }
    let mut buf = Vec::new();
    for entry in &manifest {
        serde_json::to_writer(&mut buf, entry).expect("manifest serializes");
        buf.push(b'\n');
    }
    let tmp = dir.join(".frames.jsonl.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, dir.join("frames.jsonl"))?;
    Ok(manifest)
}

/// Reads a frames.jsonl manifest back.
pub fn read_manifest(dir: &Path) -> Result<Vec<FrameManifestEntry>, ImagingError> {
    let text = std::fs::read_to_string(dir.join("frames.jsonl"))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: FrameManifestEntry = serde_json::from_str(line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.push(entry);
    }
    Ok(out)
}

pub fn manifest_paths(dir: &Path, manifest: &[FrameManifestEntry]) -> Vec<PathBuf> {
    manifest.iter().map(|e| dir.join(&e.file)).collect()
}
