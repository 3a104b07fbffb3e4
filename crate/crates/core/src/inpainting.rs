//! Transport inpainting: a time function built from the hole, a causal
//! level-line field from past-masked structure tensors, and a stripe solve with `f = 0`.
//!
//! Pixel `(col, row)` is grid cell `(col, row)` with centre `((col + 0.5) p, (row + 0.5) p)`
//! for pixel pitch `p`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::characteristics::IntegratorConfig;
use crate::error::{Error, Result};
use crate::fields::{normal_or_default, BoundaryData, FnRhs, FunctionalField, PointField};
use crate::geometry::{t0_of, BBox, Domain, GridTime, Point2, StopSet, TimeFunction, Vec2};
use crate::grid::{DomainGrid, Grid, ScalarGridField};
use crate::io::{read_pgm_file, write_pgm};
use crate::quasilinear::{solve_quasilinear, QuasiConfig, QuasiProblem, SolveDiagnostics, StripePlan};

/// Grayscale image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub pitch: f64,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Config(format!(
                "image of {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(k) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!(
                "pixel ({}, {}) = {} is outside [0, 1]",
                k % width,
                k / width,
                pixels[k]
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
            pitch: 1.0,
        })
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        GrayImage::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let (w, h, bytes) = read_pgm_file(path)?;
        GrayImage::from_bytes(w, h, &bytes)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_pgm(file, self.width, self.height, &self.to_bytes())
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Vertical stripes alternating between 1 and 0 every `period / 2` columns.
    pub fn stripe_card(width: usize, height: usize, period: usize) -> Self {
        let half = (period / 2).max(1);
        let pixels = (0..width * height)
            .map(|k| if (k % width / half).is_multiple_of(2) { 1.0 } else { 0.0 })
            .collect();
        GrayImage::new(width, height, pixels).expect("values are 0 or 1")
    }

    /// `a + b col + c row`, clamped to `[0, 1]`.
    pub fn ramp(width: usize, height: usize, a: f64, b: f64, c: f64) -> Self {
        let pixels = (0..width * height)
            .map(|k| (a + b * (k % width) as f64 + c * (k / width) as f64).clamp(0.0, 1.0))
            .collect();
        GrayImage::new(width, height, pixels).expect("clamped")
    }

    /// Mean absolute difference over the damaged pixels of `mask`.
    pub fn hole_mae(&self, other: &GrayImage, mask: &InpaintMask) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (k, s) in mask.states.iter().enumerate() {
            if *s == PixelState::Damaged {
                sum += (self.pixels[k] - other.pixels[k]).abs();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelState {
    Known,
    Damaged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InpaintMask {
    pub width: usize,
    pub height: usize,
    pub states: Vec<PixelState>,
}

impl InpaintMask {
    /// From PGM bytes: 0 is damaged, 255 is known.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(Error::MaskInvalid(format!(
                "expected {} mask bytes, got {}",
                width * height,
                bytes.len()
            )));
        }
        let states = bytes
            .iter()
            .enumerate()
            .map(|(k, b)| match b {
                0 => Ok(PixelState::Damaged),
                255 => Ok(PixelState::Known),
                other => Err(Error::MaskInvalid(format!(
                    "pixel ({}, {}) has value {other}; expected 0 or 255",
                    k % width,
                    k / width
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InpaintMask { width, height, states })
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let (w, h, bytes) = read_pgm_file(path)?;
        InpaintMask::from_bytes(w, h, &bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.states
            .iter()
            .map(|s| if *s == PixelState::Known { 255 } else { 0 })
            .collect()
    }

    /// A `side x side` damaged square centred in a `width x height` image.
    pub fn centered_square(width: usize, height: usize, side: usize) -> Self {
        let (c0, r0) = ((width - side) / 2, (height - side) / 2);
        let states = (0..width * height)
            .map(|k| {
                let (c, r) = (k % width, k / width);
                if (c0..c0 + side).contains(&c) && (r0..r0 + side).contains(&r) {
                    PixelState::Damaged
                } else {
                    PixelState::Known
                }
            })
            .collect();
        InpaintMask { width, height, states }
    }

    #[inline]
    pub fn is_damaged(&self, k: usize) -> bool {
        self.states[k] == PixelState::Damaged
    }

    pub fn damaged_count(&self) -> usize {
        self.states.iter().filter(|s| **s == PixelState::Damaged).count()
    }

    /// Damaged region nonempty, 4-connected, without enclosed known pixels, and
    /// surrounded by a known collar (never touching the image border).
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width, self.height);
        let damaged: Vec<bool> = self.states.iter().map(|s| *s == PixelState::Damaged).collect();
        if !damaged.iter().any(|d| *d) {
            return Err(Error::MaskInvalid("no damaged pixels".into()));
        }
        for (k, &d) in damaged.iter().enumerate() {
            let (c, r) = (k % w, k / w);
            if d && (c == 0 || r == 0 || c + 1 == w || r + 1 == h) {
                return Err(Error::MaskInvalid(format!(
                    "damaged pixel ({c}, {r}) touches the image border; a known collar is required"
                )));
            }
        }
        let parts = flood_components(&damaged, w, h, false);
        if parts > 1 {
            return Err(Error::MaskInvalid(format!(
                "damaged region has {parts} connected components; it must be connected"
            )));
        }
        let known: Vec<bool> = damaged.iter().map(|d| !d).collect();
        let outside = flood_components(&known, w, h, true);
        if outside > 1 {
            return Err(Error::MaskInvalid(
                "damaged region encloses known pixels; it must be simply connected".into(),
            ));
        }
        Ok(())
    }
}

/// Component count by flood fill, 4- or 8-connected.
fn flood_components(on: &[bool], w: usize, h: usize, diagonal: bool) -> usize {
    let mut seen = vec![false; on.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (c, r) = ((k % w) as isize, (k / w) as isize);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if (dr == 0 && dc == 0) || (!diagonal && dr != 0 && dc != 0) {
                        continue;
                    }
                    let (cc, rr) = (c + dc, r + dr);
                    if cc < 0 || rr < 0 || cc >= w as isize || rr >= h as isize {
                        continue;
                    }
                    let kk = rr as usize * w + cc as usize;
                    if on[kk] && !seen[kk] {
                        seen[kk] = true;
                        stack.push(kk);
                    }
                }
            }
        }
    }
    count
}

/// Exact squared Euclidean distance to the nearest `true` pixel (separable lower envelope).
pub fn squared_distance_transform(feature: &[bool], w: usize, h: usize) -> Vec<f64> {
    let inf = 1e20;
    let mut d: Vec<f64> = feature.iter().map(|f| if *f { 0.0 } else { inf }).collect();
    let mut buf = vec![0.0; w.max(h)];
    let mut out = vec![0.0; w.max(h)];
    for c in 0..w {
        for r in 0..h {
            buf[r] = d[r * w + c];
        }
        lower_envelope(&buf[..h], &mut out[..h]);
        for r in 0..h {
            d[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        buf[..w].copy_from_slice(&d[r * w..(r + 1) * w]);
        lower_envelope(&buf[..w], &mut out[..w]);
        d[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    d
}

fn lower_envelope(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let meet = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Time function of a raster hole and its domain.
#[derive(Clone)]
pub struct RasterTime {
    pub time: Arc<GridTime>,
    pub domain: Domain,
    /// Pixels of the discrete argmax ridge.
    pub ridge: Vec<(usize, usize)>,
}

/// `T = d / max d` from the distance to the hole boundary, Gaussian-smoothed inside
/// the hole. Known pixels carry the negative distance, so `T = 0` runs between
/// known and damaged pixel centres and `{T > 0}` is exactly the damaged set.
pub fn time_from_mask(mask: &InpaintMask, sigma: f64, q: f64, pitch: f64) -> Result<RasterTime> {
    mask.validate()?;
    if !(sigma >= 0.0) || !(q > 0.0) || !(pitch > 0.0) {
        return Err(Error::Config(format!(
            "time from mask needs sigma >= 0, q > 0, pitch > 0 (got {sigma}, {q}, {pitch})"
        )));
    }
    let (w, h) = (mask.width, mask.height);
    let known: Vec<bool> = mask.states.iter().map(|s| *s == PixelState::Known).collect();
    let damaged: Vec<bool> = known.iter().map(|k| !k).collect();
    let to_known = squared_distance_transform(&known, w, h);
    let to_damaged = squared_distance_transform(&damaged, w, h);
    let signed: Vec<f64> = (0..w * h)
        .map(|k| {
            if damaged[k] {
                to_known[k].sqrt() - 0.5
            } else {
                -(to_damaged[k].sqrt() - 0.5)
            }
        })
        .collect();
    let mut inner = signed.clone();
    if sigma > 0.0 {
        let r = (3.0 * sigma).ceil() as isize;
        let weights: Vec<f64> = (-r..=r)
            .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        // Normalized convolution over damaged pixels only, keeping the hole positive.
        let smooth = |src: &[f64], horizontal: bool| -> Vec<f64> {
            let mut dst = src.to_vec();
            for k in (0..w * h).filter(|&k| damaged[k]) {
                let (c, rw) = ((k % w) as isize, (k / w) as isize);
                let (mut num, mut den) = (0.0, 0.0);
                for (i, d) in (-r..=r).enumerate() {
                    let (cc, rr) = if horizontal { (c + d, rw) } else { (c, rw + d) };
                    if cc < 0 || rr < 0 || cc >= w as isize || rr >= h as isize {
                        continue;
                    }
                    let kk = rr as usize * w + cc as usize;
                    if damaged[kk] {
                        num += weights[i] * src[kk];
                        den += weights[i];
                    }
                }
                dst[k] = num / den;
            }
            dst
        };
        let smoothed = smooth(&smooth(&inner, true), false);
        // One-sided windows bias the smoothing near the boundary, so it fades in
        // over the first 2 sigma of depth and the raw distance keeps its slope there.
        for k in (0..w * h).filter(|&k| damaged[k]) {
            let a = (signed[k] / (2.0 * sigma)).clamp(0.0, 1.0);
            inner[k] = (1.0 - a) * signed[k] + a * smoothed[k];
        }
    }
    let max = (0..w * h)
        .filter(|&k| damaged[k])
        .map(|k| inner[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let values: Vec<f64> = (0..w * h).map(|k| inner[k] / max).collect();
    let eps_sigma = 1e-9;
    let ridge: Vec<(usize, usize)> = (0..w * h)
        .filter(|&k| damaged[k] && values[k] >= 1.0 - eps_sigma)
        .map(|k| (k % w, k / w))
        .collect();
    let centre = |(c, r): (usize, usize)| Point2::new((c as f64 + 0.5) * pitch, (r as f64 + 0.5) * pitch);
    let bbox = BBox::new(Point2::ZERO, Point2::new(w as f64 * pitch, h as f64 * pitch));
    let stop = StopSet::PixelRidge(ridge.iter().copied().map(centre).collect());
    let time = Arc::new(GridTime::new(bbox, w, h, values, q, stop)?);
    let t = time.clone();
    let domain = Domain {
        name: "raster-hole".into(),
        boundary: None,
        time: time.clone(),
        bbox,
        inside: Arc::new(move |p: Point2| bbox.contains(p) && t.value(p) > 0.0),
    };
    Ok(RasterTime { time, domain, ridge })
}

/// Boundary data read from the known pixel nearest to a boundary point.
pub struct ImageBoundary {
    width: usize,
    height: usize,
    pitch: f64,
    values: Vec<f64>,
    known: Vec<bool>,
    variation: f64,
}

impl ImageBoundary {
    pub fn new(image: &GrayImage, mask: &InpaintMask) -> Self {
        let known: Vec<bool> = mask.states.iter().map(|s| *s == PixelState::Known).collect();
        let (w, h) = (image.width, image.height);
        // Sum of jumps between 8-adjacent collar pixels bounds the variation along the boundary.
        let collar: Vec<bool> = (0..w * h)
            .map(|k| {
                known[k] && {
                    let (c, r) = (k % w, k / w);
                    neighbours8(c, r, w, h).any(|kk| !known[kk])
                }
            })
            .collect();
        let mut variation = 0.0;
        for k in (0..w * h).filter(|&k| collar[k]) {
            let (c, r) = (k % w, k / w);
            for kk in neighbours8(c, r, w, h).filter(|&kk| kk > k && collar[kk]) {
                variation += (image.pixels[k] - image.pixels[kk]).abs();
            }
        }
        ImageBoundary {
            width: w,
            height: h,
            pitch: image.pitch,
            values: image.pixels.clone(),
            known,
            variation,
        }
    }
}

fn neighbours8(c: usize, r: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    (-1isize..=1).flat_map(move |dr| {
        (-1isize..=1).filter_map(move |dc| {
            let (cc, rr) = (c as isize + dc, r as isize + dr);
            ((dc, dr) != (0, 0) && cc >= 0 && rr >= 0 && cc < w as isize && rr < h as isize)
                .then(|| rr as usize * w + cc as usize)
        })
    })
}

impl BoundaryData for ImageBoundary {
    fn value_at(&self, p: Point2) -> Result<f64> {
        let fx = p.x / self.pitch;
        let fy = p.y / self.pitch;
        let (c, r) = (fx.floor() as isize, fy.floor() as isize);
        let mut best: Option<(f64, usize)> = None;
        for dr in -2isize..=2 {
            for dc in -2isize..=2 {
                let (cc, rr) = (c + dc, r + dr);
                if cc < 0 || rr < 0 || cc >= self.width as isize || rr >= self.height as isize {
                    continue;
                }
                let k = rr as usize * self.width + cc as usize;
                if !self.known[k] {
                    continue;
                }
                let d = (cc as f64 + 0.5 - fx).powi(2) + (rr as f64 + 0.5 - fy).powi(2);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, k));
                }
            }
        }
        best.map(|(_, k)| self.values[k])
            .ok_or_else(|| Error::BoundaryData(format!("no known pixel near {p}")))
    }

    fn sup_bound(&self) -> f64 {
        1.0
    }

    fn variation_bound(&self) -> f64 {
        self.variation
    }
}

#[derive(Clone, Copy, Debug)]
struct WindowTerm {
    /// Latest `T0` read by the gradient stencil; `-inf` when it reads only known pixels.
    key: f64,
    weight: f64,
    pixel: u32,
}

/// Level-line field from structure tensors over the known pixels and the
/// already-determined part of the argument.
///
/// The tensor at `x` sums only gradient stencils whose damaged pixels all satisfy
/// `T0 < T0(x)`, so the field never reads the argument in the future of `x`.
pub struct TangentField {
    width: usize,
    height: usize,
    pitch: f64,
    known: Vec<bool>,
    image: Vec<f64>,
    time: Arc<GridTime>,
    beta_floor: f64,
    /// Per pixel: `(start, len)` into `terms`, with `start = u32::MAX` when the pixel is not active.
    offsets: Vec<(u32, u32)>,
    /// Per pixel: number of active pixels before it, so its prefix sums start at `start + slot`.
    slots: Vec<u32>,
    terms: Vec<WindowTerm>,
}

/// Below this coherence the tensor is treated as isotropic and `c = N`.
const MIN_COHERENCE: f64 = 0.05;

impl TangentField {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    fn pixel_of(&self, p: Point2) -> Option<usize> {
        let (fx, fy) = (p.x / self.pitch, p.y / self.pitch);
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (c, r) = (fx as usize, fy as usize);
        (c < self.width && r < self.height).then(|| r * self.width + c)
    }

    /// Minor-eigenvector direction of `[[a, b], [b, d]]`, aligned with `n` and
    /// rotated toward it until `<c, n> >= beta_floor`.
    fn orient(&self, j: [f64; 3], n: Vec2) -> Vec2 {
        let [a, b, d] = j;
        let trace = a + d;
        let gap = ((a - d).powi(2) + 4.0 * b * b).sqrt();
        if !(trace > 1e-12) || gap < MIN_COHERENCE * trace {
            return n;
        }
        let theta = 0.5 * (2.0 * b).atan2(a - d);
        let mut t = Vec2::new(-theta.sin(), theta.cos());
        if t.dot(n) < 0.0 {
            t = -t;
        }
        let along = t.dot(n);
        if along >= self.beta_floor {
            return t;
        }
        let side = t - n * along;
        let side = side.normalized().unwrap_or_else(|| n.perp());
        let s = (1.0 - self.beta_floor * self.beta_floor).sqrt();
        n * self.beta_floor + side * s
    }
}

/// Builds the tangent field on pixels of the hole and a two-pixel band around it.
pub fn causal_tangent_field(
    image: &GrayImage,
    mask: &InpaintMask,
    raster: &RasterTime,
    dg: &DomainGrid,
    rho: f64,
    beta_floor: f64,
) -> Result<TangentField> {
    if !(rho >= 1.0) {
        return Err(Error::Config(format!(
            "structure-tensor radius must be >= 1 pixel, got {rho}"
        )));
    }
    if !(beta_floor > 0.0 && beta_floor < 1.0) {
        return Err(Error::Config(format!(
            "beta_floor must lie in (0, 1), got {beta_floor}"
        )));
    }
    let (w, h) = (image.width, image.height);
    if (mask.width, mask.height) != (w, h) || (dg.grid.nx, dg.grid.ny) != (w, h) {
        return Err(Error::Config("image, mask and grid sizes differ".into()));
    }
    let known: Vec<bool> = mask.states.iter().map(|s| *s == PixelState::Known).collect();
    let band = squared_distance_transform(&known.iter().map(|k| !k).collect::<Vec<_>>(), w, h);
    let active: Vec<bool> = band.iter().map(|d| *d <= 8.0).collect();
    let key_of = |k: usize| if known[k] { f64::NEG_INFINITY } else { dg.t0[k] };
    let radius = (3.0 * rho).ceil() as isize;
    let mut offsets = vec![(u32::MAX, 0u32); w * h];
    let mut slots = vec![0u32; w * h];
    let mut terms = Vec::new();
    for (slot, k) in (0..w * h).filter(|&k| active[k]).enumerate() {
        slots[k] = slot as u32;
        let (c, r) = ((k % w) as isize, (k / w) as isize);
        let start = terms.len();
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                let d2 = (dr * dr + dc * dc) as f64;
                if d2 > (radius * radius) as f64 {
                    continue;
                }
                let (cc, rr) = (c + dc, r + dr);
                if cc < 1 || rr < 1 || cc + 1 >= w as isize || rr + 1 >= h as isize {
                    continue;
                }
                let y = rr as usize * w + cc as usize;
                let key = [y - 1, y + 1, y - w, y + w]
                    .into_iter()
                    .map(key_of)
                    .fold(f64::NEG_INFINITY, f64::max);
                terms.push(WindowTerm {
                    key,
                    weight: (-d2 / (2.0 * rho * rho)).exp(),
                    pixel: y as u32,
                });
            }
        }
        terms[start..].sort_by(|a, b| a.key.total_cmp(&b.key).then(a.pixel.cmp(&b.pixel)));
        offsets[k] = (start as u32, (terms.len() - start) as u32);
    }
    Ok(TangentField {
        width: w,
        height: h,
        pitch: image.pitch,
        known,
        image: image.pixels.clone(),
        time: raster.time.clone(),
        beta_floor,
        offsets,
        slots,
        terms,
    })
}

struct FrozenTangent<'a> {
    field: &'a TangentField,
    /// Prefix sums of weighted tensor terms, one extra leading zero per active pixel.
    prefix: Vec<[f64; 3]>,
}

impl PointField for FrozenTangent<'_> {
    fn direction(&self, p: Point2) -> Vec2 {
        let f = self.field;
        let time: &dyn TimeFunction = f.time.as_ref();
        let n = normal_or_default(time, p);
        let Some(k) = f.pixel_of(p) else { return n };
        let (start, len) = f.offsets[k];
        if start == u32::MAX {
            return n;
        }
        let (start, len) = (start as usize, len as usize);
        let tau = t0_of(time, p);
        let count = f.terms[start..start + len].partition_point(|t| t.key < tau);
        f.orient(self.prefix[start + f.slots[k] as usize + count], n)
    }
}

impl FunctionalField for TangentField {
    fn freeze<'a>(&'a self, v: &'a ScalarGridField) -> Box<dyn PointField + 'a> {
        let w = self.width;
        let value = |k: usize| if self.known[k] { self.image[k] } else { v.values[k] };
        let mut prefix = Vec::with_capacity(self.terms.len() + self.offsets.len());
        for (k, &(start, len)) in self.offsets.iter().enumerate() {
            if start == u32::MAX {
                continue;
            }
            debug_assert_eq!(prefix.len(), start as usize + self.slots[k] as usize);
            let mut acc = [0.0f64; 3];
            prefix.push(acc);
            for t in &self.terms[start as usize..(start + len) as usize] {
                let y = t.pixel as usize;
                let gx = 0.5 * (value(y + 1) - value(y - 1));
                let gy = 0.5 * (value(y + w) - value(y - w));
                acc[0] += t.weight * gx * gx;
                acc[1] += t.weight * gx * gy;
                acc[2] += t.weight * gy * gy;
                prefix.push(acc);
            }
        }
        Box::new(FrozenTangent { field: self, prefix })
    }

    fn beta(&self) -> f64 {
        self.beta_floor
    }

    /// The eigenvector map is not Lipschitz across isotropic tensors.
    fn lipschitz(&self) -> f64 {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpaintConfig {
    pub q: f64,
    pub beta_floor: f64,
    /// Structure-tensor Gaussian radius in pixels.
    pub rho: f64,
    pub stripe_h: f64,
    pub tol: f64,
    pub max_iterations: usize,
    /// Smoothing of the distance transform, in pixels.
    pub sigma: f64,
    pub integrator: IntegratorConfig,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig {
            q: 4.0,
            beta_floor: 0.1,
            rho: 3.0,
            stripe_h: 0.05,
            tol: 1e-6,
            max_iterations: 200,
            sigma: 2.0,
            integrator: IntegratorConfig {
                dt: 2e-3,
                ..IntegratorConfig::default()
            },
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} out of range: {v}")));
        if !(self.q > 0.0 && self.q.is_finite()) {
            return bad("q", self.q);
        }
        if !(self.beta_floor > 0.0 && self.beta_floor < 1.0) {
            return bad("beta_floor", self.beta_floor);
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return bad("rho", self.rho);
        }
        if !(self.stripe_h > 0.0 && self.stripe_h <= 1.0) {
            return bad("stripe_h", self.stripe_h);
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma", self.sigma);
        }
        QuasiConfig {
            tol: self.tol,
            max_iterations: self.max_iterations,
            ..Default::default()
        }
        .validate()?;
        self.integrator.validate()
    }
}

pub struct InpaintResult {
    pub image: GrayImage,
    pub diagnostics: SolveDiagnostics,
}

/// Fills the damaged pixels; known pixels are copied unchanged and the fill is clamped to `[0, 1]`.
pub fn inpaint(image: &GrayImage, mask: &InpaintMask, cfg: &InpaintConfig) -> Result<InpaintResult> {
    cfg.validate()?;
    if (image.width, image.height) != (mask.width, mask.height) {
        return Err(Error::MaskInvalid(format!(
            "mask is {}x{} but the image is {}x{}",
            mask.width, mask.height, image.width, image.height
        )));
    }
    let raster = time_from_mask(mask, cfg.sigma, cfg.q, image.pitch)?;
    let grid = Grid::new(raster.domain.bbox, image.width, image.height);
    let dg = DomainGrid::new(&raster.domain, grid, cfg.integrator.eps_stop);
    if let Some(k) = (0..grid.len()).find(|&k| dg.mask[k].in_domain() != mask.is_damaged(k)) {
        return Err(Error::GeometryInconsistency(format!(
            "time function sign disagrees with the mask at pixel ({}, {})",
            k % image.width,
            k / image.width
        )));
    }
    let field = causal_tangent_field(image, mask, &raster, &dg, cfg.rho, cfg.beta_floor)?;
    let rhs = FnRhs::zero();
    let boundary = ImageBoundary::new(image, mask);
    let problem = QuasiProblem {
        domain: &raster.domain,
        c: &field,
        f: &rhs,
        u0: &boundary,
    };
    let plan = StripePlan::new(1.0 - dg.eps_stop, cfg.stripe_h)?;
    let qcfg = QuasiConfig {
        tol: cfg.tol,
        max_iterations: cfg.max_iterations,
        ..Default::default()
    };
    let guess = ScalarGridField::zeros(&dg);
    let (u, diagnostics) = solve_quasilinear(&problem, &dg, &plan, &guess, &qcfg, &cfg.integrator)?;
    let pixels = (0..grid.len())
        .map(|k| {
            if mask.is_damaged(k) {
                u.values[k].clamp(0.0, 1.0)
            } else {
                image.pixels[k]
            }
        })
        .collect();
    Ok(InpaintResult {
        image: GrayImage {
            pixels,
            ..image.clone()
        },
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{audit_functional_causality, Coefficient};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hole(w: usize, h: usize, inside: impl Fn(usize, usize) -> bool) -> InpaintMask {
        let states = (0..w * h)
            .map(|k| {
                if inside(k % w, k / w) {
                    PixelState::Damaged
                } else {
                    PixelState::Known
                }
            })
            .collect();
        InpaintMask {
            width: w,
            height: h,
            states,
        }
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let (w, h) = (23, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feature: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.05)).collect();
        let d = squared_distance_transform(&feature, w, h);
        for (k, &dk) in d.iter().enumerate() {
            let (c, r) = ((k % w) as f64, (k / w) as f64);
            let brute = (0..w * h)
                .filter(|&j| feature[j])
                .map(|j| ((j % w) as f64 - c).powi(2) + ((j / w) as f64 - r).powi(2))
                .fold(1e20, f64::min);
            assert_eq!(dk, brute);
        }
    }

    #[test]
    fn mask_validation() {
        assert!(InpaintMask::centered_square(16, 16, 4).validate().is_ok());
        let two = hole(16, 16, |c, r| {
            (3..5).contains(&r) && ((2..4).contains(&c) || (8..10).contains(&c))
        });
        assert!(matches!(two.validate(), Err(Error::MaskInvalid(m)) if m.contains("2 connected")));
        let ring = hole(16, 16, |c, r| {
            (4..12).contains(&c) && (4..12).contains(&r) && !(c == 8 && r == 8)
        });
        assert!(matches!(ring.validate(), Err(Error::MaskInvalid(m)) if m.contains("simply")));
        let edge = hole(16, 16, |c, r| c < 3 && (4..8).contains(&r));
        assert!(matches!(edge.validate(), Err(Error::MaskInvalid(_))));
        assert!(InpaintMask::from_bytes(2, 1, &[0, 7]).is_err());
        assert!(hole(8, 8, |_, _| false).validate().is_err());
    }

    #[test]
    fn single_pixel_hole() {
        let mask = hole(9, 9, |c, r| c == 4 && r == 4);
        let rt = time_from_mask(&mask, 2.0, 4.0, 1.0).unwrap();
        assert_eq!(rt.ridge, vec![(4, 4)]);
        assert_eq!(rt.time.values()[4 * 9 + 4], 1.0);
        assert!(rt.time.values()[4 * 9 + 3] < 0.0);
    }

    #[test]
    fn circular_hole_time_is_radial() {
        let (n, rad) = (64usize, 20.0);
        let mask = hole(n, n, |c, r| {
            ((c as f64 - 31.5).powi(2) + (r as f64 - 31.5).powi(2)).sqrt() < rad
        });
        let rt = time_from_mask(&mask, 0.0, 4.0, 1.0).unwrap();
        let v = rt.time.values();
        let max = (0..n * n).map(|k| v[k]).fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
        // The centre pixels are furthest from the boundary.
        for (c, r) in &rt.ridge {
            assert!((*c as f64 - 31.5).abs() <= 1.0 && (*r as f64 - 31.5).abs() <= 1.0);
        }
        // Along a radius T falls off roughly linearly to the boundary.
        let row = 32;
        let t_edge = v[row * n + 12];
        let t_mid = v[row * n + 22];
        assert!(t_edge > 0.0 && t_edge < 0.1);
        assert!((t_mid - 0.5).abs() < 0.1, "t_mid {t_mid}");
    }

    #[test]
    fn rectangular_hole_ridge_is_medial_segment() {
        let mask = hole(48, 24, |c, r| (6..42).contains(&c) && (8..16).contains(&r));
        let rt = time_from_mask(&mask, 0.0, 4.0, 1.0).unwrap();
        assert!(rt.ridge.len() > 4);
        assert!(rt.ridge.iter().all(|(_, r)| *r == 11 || *r == 12));
    }

    #[test]
    fn sign_of_time_matches_mask() {
        let mask = InpaintMask::centered_square(40, 40, 12);
        for sigma in [0.0, 1.0, 2.0, 4.0] {
            let rt = time_from_mask(&mask, sigma, 4.0, 1.0).unwrap();
            for k in 0..40 * 40 {
                assert_eq!(rt.time.values()[k] > 0.0, mask.is_damaged(k));
            }
        }
    }

    #[test]
    fn constant_image_is_unchanged() {
        let img = GrayImage::new(40, 40, vec![0.4; 1600]).unwrap();
        let mask = InpaintMask::centered_square(40, 40, 10);
        let out = inpaint(&img, &mask, &InpaintConfig::default()).unwrap();
        assert_eq!(out.image.to_bytes(), img.to_bytes());
        assert!(out.image.pixels.iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn ramp_is_continued() {
        let img = GrayImage::ramp(64, 64, 0.0, 1.0 / 128.0, 1.0 / 128.0);
        let mask = InpaintMask::centered_square(64, 64, 16);
        let out = inpaint(&img, &mask, &InpaintConfig::default()).unwrap();
        assert!(out.image.hole_mae(&img, &mask) <= 0.02);
    }

    #[test]
    fn known_pixels_are_byte_identical_and_fill_is_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = GrayImage::from_bytes(48, 48, &(0..48 * 48).map(|_| rng.gen::<u8>()).collect::<Vec<_>>()).unwrap();
        let mask = InpaintMask::centered_square(48, 48, 10);
        let out = inpaint(&img, &mask, &InpaintConfig::default()).unwrap();
        let (a, b) = (img.to_bytes(), out.image.to_bytes());
        let collar: Vec<f64> = (0..48 * 48)
            .filter(|&k| !mask.is_damaged(k))
            .filter(|&k| neighbours8(k % 48, k / 48, 48, 48).any(|kk| mask.is_damaged(kk)))
            .map(|k| img.pixels[k])
            .collect();
        let (lo, hi) = collar.iter().fold((1.0f64, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        for k in 0..48 * 48 {
            if mask.is_damaged(k) {
                assert!(out.image.pixels[k] >= lo - 1e-12 && out.image.pixels[k] <= hi + 1e-12);
            } else {
                assert_eq!(a[k], b[k]);
            }
        }
    }

    #[test]
    fn tangent_field_is_exactly_causal() {
        let img = GrayImage::stripe_card(64, 64, 16);
        let mask = InpaintMask::centered_square(64, 64, 20);
        let rt = time_from_mask(&mask, 2.0, 4.0, 1.0).unwrap();
        let dg = DomainGrid::new(&rt.domain, Grid::new(rt.domain.bbox, 64, 64), 1e-3);
        let field = causal_tangent_field(&img, &mask, &rt, &dg, 3.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = ScalarGridField::zeros(&dg);
        v.values.iter_mut().for_each(|x| *x = rng.gen());
        let probes: Vec<Point2> = (0..100)
            .map(|_| Point2::new(rng.gen_range(22.0..42.0), rng.gen_range(22.0..42.0)))
            .collect();
        let audit = audit_functional_causality(Coefficient::Field(&field), &v, &dg, rt.time.as_ref(), &probes);
        assert_eq!(audit.max_discrepancy, 0.0);
    }

    #[test]
    fn stripes_give_vertical_tangent() {
        let img = GrayImage::stripe_card(64, 64, 16);
        let mask = InpaintMask::centered_square(64, 64, 20);
        let rt = time_from_mask(&mask, 2.0, 4.0, 1.0).unwrap();
        let dg = DomainGrid::new(&rt.domain, Grid::new(rt.domain.bbox, 64, 64), 1e-3);
        let field = causal_tangent_field(&img, &mask, &rt, &dg, 3.0, 0.1).unwrap();
        let mut v = ScalarGridField::zeros(&dg);
        v.values.copy_from_slice(&img.pixels);
        let frozen = field.freeze(&v);
        // Just inside the top edge N is vertical, so the tangent needs no blending.
        let c = frozen.direction(Point2::new(32.5, 22.5));
        assert!(c.x.abs() < 1e-9 && c.y > 0.99, "{c}");
        // On the left side N is horizontal and the floor is reached exactly.
        let p = Point2::new(22.5, 32.5);
        let n = normal_or_default(rt.time.as_ref(), p);
        let c = frozen.direction(p);
        assert!((c.dot(n) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn config_round_trip_and_ranges() {
        let cfg = InpaintConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<InpaintConfig>(&json).unwrap(), cfg);
        let bad: InpaintConfig = serde_json::from_str(r#"{"beta_floor": 1.5}"#).unwrap();
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<InpaintConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
