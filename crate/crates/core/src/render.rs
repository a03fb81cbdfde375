//! Point sets to binary PPM (P6) rasters.
//!
//! One dot per point, gray levels only, `y` axis pointing up. Output bytes
//! depend only on the points and the [`RenderSpec`].

use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Result};
use crate::spaces::Space;

/// Projective points whose chart denominator is at most this in magnitude
/// sit on the chart's horizon.
pub const HORIZON: f64 = 1e-9;

/// How ground coordinates become plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    /// The first two coordinates as they are (Euclidean plane, circle).
    Plane,
    /// Circle points by angle in `[0, 2 pi)` along `x`, at the middle row.
    Angle,
    /// Line coordinate along `x`, at the middle row (Euclidean line).
    Line,
    /// Projective affine chart `x = 1`: plots `(y/x, z/x)`.
    X,
    /// Projective affine chart `y = 1`: plots `(x/y, z/y)`.
    Y,
    /// Projective affine chart `z = 1`: plots `(x/z, y/z)`.
    Z,
}

impl Chart {
    pub fn check(self, space: Space) -> Result<()> {
        let ok = match self {
            Chart::Plane => matches!(space, Space::Circle | Space::Euclidean { dim: 2 }),
            Chart::Angle => matches!(space, Space::Circle),
            Chart::Line => matches!(space, Space::Euclidean { dim: 1 }),
            Chart::X | Chart::Y | Chart::Z => matches!(space, Space::Projective2),
        };
        if ok {
            Ok(())
        } else {
            usage(format!("chart {self:?} does not apply to {space} points"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub width: usize,
    pub height: usize,
    /// `[xmin, xmax, ymin, ymax]` in chart coordinates.
    pub viewport: [f64; 4],
    pub chart: Chart,
    /// Dot radius in pixels; 0 lights a single pixel.
    pub radius: u32,
    pub background: u8,
    pub foreground: u8,
}

impl RenderSpec {
    pub fn check(&self, space: Space) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return usage("image width and height must be at least 1");
        }
        let [x0, x1, y0, y1] = self.viewport;
        if !(x0 < x1 && y0 < y1) || self.viewport.iter().any(|v| !v.is_finite()) {
            return usage(format!("viewport {:?} is degenerate", self.viewport));
        }
        self.chart.check(space)
    }
}

/// What happened to the points of one render.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStats {
    pub plotted: usize,
    /// Outside the viewport; not drawn.
    pub outside: usize,
    /// On or beyond a projective horizon; drawn clamped to the border.
    pub clamped: usize,
}

enum Placed {
    At(f64, f64),
    Horizon(f64, f64),
}

fn chart_point(chart: Chart, p: &[f64]) -> Placed {
    let ratio = |num: [f64; 2], den: f64| {
        if den.abs() <= HORIZON {
            // Direction to infinity; the magnitude only needs to pass the border.
            Placed::Horizon(num[0] * 1e300, num[1] * 1e300)
        } else {
            Placed::At(num[0] / den, num[1] / den)
        }
    };
    match chart {
        Chart::Plane => Placed::At(p[0], p[1]),
        Chart::Angle => Placed::At(p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU), f64::NAN),
        Chart::Line => Placed::At(p[0], f64::NAN),
        Chart::X => ratio([p[1], p[2]], p[0]),
        Chart::Y => ratio([p[0], p[2]], p[1]),
        Chart::Z => ratio([p[0], p[1]], p[2]),
    }
}

/// Pixel column and row of a chart point, `None` outside the viewport.
pub fn pixel_of(spec: &RenderSpec, u: f64, v: f64) -> Option<(usize, usize)> {
    let [x0, x1, y0, y1] = spec.viewport;
    let fx = (u - x0) / (x1 - x0) * spec.width as f64;
    let row = if v.is_nan() {
        spec.height / 2
    } else {
        let fy = (v - y0) / (y1 - y0) * spec.height as f64;
        if !(0.0..spec.height as f64).contains(&fy) {
            return None;
        }
        spec.height - 1 - fy as usize
    };
    if !(0.0..spec.width as f64).contains(&fx) {
        return None;
    }
    Some((fx as usize, row))
}

/// Chart coordinates of the center of pixel `(col, row)`.
pub fn pixel_center(spec: &RenderSpec, col: usize, row: usize) -> (f64, f64) {
    let [x0, x1, y0, y1] = spec.viewport;
    let u = x0 + (col as f64 + 0.5) / spec.width as f64 * (x1 - x0);
    let v = y0 + ((spec.height - 1 - row) as f64 + 0.5) / spec.height as f64 * (y1 - y0);
    (u, v)
}

/// Rasterizes the canonical coordinates `coords` of `space` points.
pub fn render(space: Space, coords: &[f64], spec: &RenderSpec) -> Result<(Vec<u8>, RenderStats)> {
    spec.check(space)?;
    if coords.is_empty() {
        return domain("nothing to render: the point set is empty");
    }
    let (w, h) = (spec.width, spec.height);
    let mut lit = vec![false; w * h];
    let mut stats = RenderStats::default();
    let [x0, x1, y0, y1] = spec.viewport;
    let r = spec.radius as i64;
    for p in coords.chunks_exact(space.dim()) {
        let (u, v) = match chart_point(spec.chart, p) {
            Placed::At(u, v) => (u, v),
            Placed::Horizon(u, v) => {
                stats.clamped += 1;
                (u.clamp(x0, x1 - (x1 - x0) * 1e-12), v.clamp(y0, y1 - (y1 - y0) * 1e-12))
            }
        };
        let Some((col, row)) = pixel_of(spec, u, v) else {
            stats.outside += 1;
            continue;
        };
        stats.plotted += 1;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (c, rr) = (col as i64 + dx, row as i64 + dy);
                if (0..w as i64).contains(&c) && (0..h as i64).contains(&rr) {
                    lit[rr as usize * w + c as usize] = true;
                }
            }
        }
    }
    let header = format!("P6\n{w} {h}\n255\n");
    let mut out = Vec::with_capacity(header.len() + 3 * w * h);
    out.extend_from_slice(header.as_bytes());
    for &on in &lit {
        let g = if on { spec.foreground } else { spec.background };
        out.extend_from_slice(&[g, g, g]);
    }
    Ok((out, stats))
}

/// Parses a P6 image back into `(width, height, rgb bytes)`.
pub fn parse_ppm(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    let bad = || crate::Error::Format("not a binary PPM".into());
    let mut fields = Vec::new();
    let mut at = 0;
    while fields.len() < 4 {
        while at < bytes.len() && bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..at]).map_err(|_| bad())?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let body = bytes.get(at + 1..).ok_or_else(bad)?;
    if body.len() != 3 * w * h {
        return Err(bad());
    }
    Ok((w, h, body))
}
