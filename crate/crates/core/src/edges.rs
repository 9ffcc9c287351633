//! Sub-pixel edge detection on vertical line/space patterns, CD traces and
//! mean CD.
//!
//! Nominal edge columns come from the column-mean profile. Each row is then
//! box-smoothed, a polynomial is least-squares fitted around the nominal
//! crossing, and the edge is where that polynomial crosses the row's own
//! threshold level. Column `j` covers `[jΔ, (j+1)Δ)`, so its sample sits at
//! `(j + 0.5)Δ` nm.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Fraction of rows an edge may lose before detection is declared unreliable.
pub const MAX_REJECTED_FRACTION: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDetectParams {
    pub threshold_fraction: f64,
    pub poly_order: usize,
    pub fit_halfwidth: usize,
    pub smoothing_halfwidth: usize,
    pub min_run: usize,
    /// Rows averaged on each side when placing the fit window; the edge
    /// itself is always fitted on the single row.
    #[serde(default = "default_guide")]
    pub guide_halfwidth: usize,
}

fn default_guide() -> usize {
    4
}

impl Default for EdgeDetectParams {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.5,
            poly_order: 3,
            fit_halfwidth: 5,
            smoothing_halfwidth: 1,
            min_run: 4,
            guide_halfwidth: default_guide(),
        }
    }
}

impl EdgeDetectParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(Error::param(format!(
                "threshold_fraction {} not in (0, 1)",
                self.threshold_fraction
            )));
        }
        if self.poly_order < 1 {
            return Err(Error::param("poly_order must be at least 1"));
        }
        if 2 * self.fit_halfwidth < self.poly_order {
            return Err(Error::param(format!(
                "fit_halfwidth {} too small for polynomial order {}",
                self.fit_halfwidth, self.poly_order
            )));
        }
        Ok(())
    }
}

/// Per-row edge positions (nm) of one line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineEdges {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSet {
    pub lines: Vec<LineEdges>,
    pub rows: usize,
    /// Image row of each trace entry; rejected rows are absent.
    pub row_indices: Vec<usize>,
    pub pixel_size: f64,
    pub params: EdgeDetectParams,
}

impl EdgeSet {
    pub fn new(lines: Vec<LineEdges>, pixel_size: f64, params: EdgeDetectParams) -> Result<Self> {
        let rows = lines.first().map_or(0, |l| l.left.len());
        for (i, l) in lines.iter().enumerate() {
            if l.left.len() != rows || l.right.len() != rows {
                return Err(Error::LengthMismatch {
                    expected: rows,
                    got: l.left.len().min(l.right.len()),
                });
            }
            for r in 0..rows {
                let (a, b) = (l.left[r], l.right[r]);
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::param(format!("line {i} row {r}: left {a} !< right {b}")));
                }
                if let Some(next) = lines.get(i + 1) {
                    if !(b < next.left[r]) {
                        return Err(Error::param(format!("lines {i} and {} overlap at row {r}", i + 1)));
                    }
                }
            }
        }
        Ok(Self {
            lines,
            rows,
            row_indices: (0..rows).collect(),
            pixel_size,
            params,
        })
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn width_trace(&self, line_index: usize) -> Result<Vec<f64>> {
        width_trace(self, line_index)
    }

    /// Every left and right trace, line by line.
    pub fn edge_traces(&self) -> impl Iterator<Item = &[f64]> {
        self.lines
            .iter()
            .flat_map(|l| [l.left.as_slice(), l.right.as_slice()])
    }
}

pub fn width_trace(edge_set: &EdgeSet, line_index: usize) -> Result<Vec<f64>> {
    let line = edge_set
        .lines
        .get(line_index)
        .ok_or(Error::IndexOutOfRange {
            index: line_index,
            len: edge_set.lines.len(),
        })?;
    Ok(line.right.iter().zip(&line.left).map(|(r, l)| r - l).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdReport {
    pub mean_cd: f64,
    pub cd_std: f64,
    pub per_line_mean: Vec<f64>,
    pub n_lines: usize,
    pub rows: usize,
}

pub fn mean_cd(edge_set: &EdgeSet) -> Result<CdReport> {
    if edge_set.lines.is_empty() || edge_set.rows == 0 {
        return Err(Error::NoLineFound);
    }
    let mut pooled = Vec::with_capacity(edge_set.rows * edge_set.lines.len());
    let mut per_line_mean = Vec::with_capacity(edge_set.lines.len());
    for i in 0..edge_set.lines.len() {
        let w = width_trace(edge_set, i)?;
        per_line_mean.push(w.iter().sum::<f64>() / w.len() as f64);
        pooled.extend(w);
    }
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let var = pooled.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    Ok(CdReport {
        mean_cd: mean,
        cd_std: var.sqrt(),
        per_line_mean,
        n_lines: edge_set.lines.len(),
        rows: edge_set.rows,
    })
}

/// Signed mean-CD change in percent of the noisy value.
pub fn cd_delta(cd_noisy: f64, cd_denoised: f64) -> Result<f64> {
    if cd_noisy == 0.0 || !cd_noisy.is_finite() {
        return Err(Error::param("noisy CD must be nonzero"));
    }
    Ok((cd_noisy - cd_denoised) / cd_noisy * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Rising,
    Falling,
}

#[derive(Clone, Copy, Debug)]
struct NominalEdge {
    /// Column coordinate of the crossing (fractional).
    column: f64,
    direction: Direction,
    search_radius: f64,
}

/// Median of the lower and upper halves of `values`.
pub(crate) fn plateau_levels(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (median_sorted(&sorted[..n / 2]), median_sorted(&sorted[n - n / 2..]))
}

fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    median_sorted(values)
}

/// Runs of equal mask values as `(start, len, value)`.
pub(crate) fn runs(mask: &[bool]) -> Vec<(usize, usize, bool)> {
    let mut out: Vec<(usize, usize, bool)> = Vec::new();
    for (i, &m) in mask.iter().enumerate() {
        match out.last_mut() {
            Some(run) if run.2 == m => run.1 += 1,
            _ => out.push((i, 1, m)),
        }
    }
    out
}

/// Flip runs shorter than `min_run` until none are left.
pub(crate) fn clean_mask(mask: &mut [bool], min_run: usize) {
    loop {
        let r = runs(mask);
        if r.len() <= 1 {
            return;
        }
        // shortest offending run, first one on ties
        let Some(&(start, len, value)) = r
            .iter()
            .filter(|run| run.1 < min_run)
            .min_by_key(|run| run.1)
        else {
            return;
        };
        mask[start..start + len].iter_mut().for_each(|m| *m = !value);
    }
}

/// Lines found in the column-mean profile, as (left, right) nominal edges.
fn nominal_lines(profile: &[f64], params: &EdgeDetectParams) -> Result<Vec<(NominalEdge, NominalEdge)>> {
    let (low, high) = plateau_levels(profile);
    if !(high - low > 1e-9) {
        return Err(Error::NoLineFound);
    }
    let thr = low + params.threshold_fraction * (high - low);
    let mut mask: Vec<bool> = profile.iter().map(|&v| v > thr).collect();
    clean_mask(&mut mask, params.min_run.max(1));
    let r = runs(&mask);
    let n = profile.len();
    let mut lines = Vec::new();
    for (idx, &(start, len, value)) in r.iter().enumerate() {
        if !value || start == 0 || start + len == n {
            continue;
        }
        let end = start + len - 1;
        let left_space = r[idx - 1].1 as f64;
        let right_space = r[idx + 1].1 as f64;
        let a = start - 1;
        let left_col = a as f64 + (thr - profile[a]) / (profile[start] - profile[a]);
        let right_col = end as f64 + (profile[end] - thr) / (profile[end] - profile[end + 1]);
        lines.push((
            NominalEdge {
                column: left_col,
                direction: Direction::Rising,
                search_radius: 0.5 * left_space.min(len as f64),
            },
            NominalEdge {
                column: right_col,
                direction: Direction::Falling,
                search_radius: 0.5 * right_space.min(len as f64),
            },
        ));
    }
    if lines.is_empty() {
        return Err(Error::NoLineFound);
    }
    Ok(lines)
}

/// Box smoothing with mirrored borders. Pairs are summed symmetrically so a
/// mirrored row smooths to the exact mirror.
fn box_smooth(row: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return row.to_vec();
    }
    let n = row.len() as isize;
    let at = |i: isize| -> f64 {
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i } else { 2 * (n - 1) - i };
        }
        row[i as usize]
    };
    (0..n)
        .map(|j| {
            let mut s = row[j as usize];
            for d in 1..=half as isize {
                s += at(j - d) + at(j + d);
            }
            s / (2 * half + 1) as f64
        })
        .collect()
}

/// Mean of rows `y - half ..= y + half`, mirrored at the raster border.
fn vertical_mean(image: &GrayImage, y: usize, half: usize) -> Vec<f64> {
    if half == 0 {
        return image.row(y).to_vec();
    }
    let h = image.height() as isize;
    let at = |i: isize| -> usize {
        let mut i = i;
        while i < 0 || i >= h {
            i = if i < 0 { -i } else { 2 * (h - 1) - i };
        }
        i as usize
    };
    let mut acc = image.row(y).to_vec();
    for d in 1..=half as isize {
        let (a, b) = (image.row(at(y as isize - d)), image.row(at(y as isize + d)));
        for ((s, u), v) in acc.iter_mut().zip(a).zip(b) {
            *s += u + v;
        }
    }
    let n = (2 * half + 1) as f64;
    acc.iter_mut().for_each(|s| *s /= n);
    acc
}

/// Least-squares polynomial on the fixed grid `t = -h..=h`, precomputed once.
struct LocalPolyFit {
    half: usize,
    order: usize,
    /// `(order+1) x (2h+1)` pseudo-inverse of the Vandermonde matrix.
    pinv: DMatrix<f64>,
}

impl LocalPolyFit {
    fn new(half: usize, order: usize) -> Self {
        let m = 2 * half + 1;
        let scale = half.max(1) as f64;
        let vander = DMatrix::from_fn(m, order + 1, |i, k| {
            ((i as f64 - half as f64) / scale).powi(k as i32)
        });
        let vt = vander.transpose();
        let pinv = (&vt * &vander)
            .try_inverse()
            .expect("Vandermonde normal matrix is nonsingular for distinct nodes")
            * vt;
        Self { half, order, pinv }
    }

    /// Coefficients in the scaled variable `t / h`.
    fn coefficients(&self, samples: &[f64]) -> Vec<f64> {
        (0..=self.order)
            .map(|k| {
                self.pinv
                    .row(k)
                    .iter()
                    .zip(samples)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    fn eval(&self, coef: &[f64], t: f64) -> f64 {
        let x = t / self.half.max(1) as f64;
        coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

struct RowContext<'a> {
    lines: &'a [(NominalEdge, NominalEdge)],
    line_cols: Vec<usize>,
    space_cols: Vec<usize>,
    params: &'a EdgeDetectParams,
    poly: LocalPolyFit,
    width: usize,
}

impl RowContext<'_> {
    fn row_threshold(&self, row: &[f64]) -> Option<f64> {
        let mut line: Vec<f64> = self.line_cols.iter().map(|&j| row[j]).collect();
        let mut space: Vec<f64> = self.space_cols.iter().map(|&j| row[j]).collect();
        let hi = median(&mut line);
        let lo = median(&mut space);
        (hi > lo).then_some(lo + self.params.threshold_fraction * (hi - lo))
    }

    /// Linear-interpolated threshold crossing with the edge's direction
    /// nearest to the nominal column.
    fn coarse(&self, smooth: &[f64], thr: f64, edge: &NominalEdge) -> Option<f64> {
        let crosses = |j: usize| -> bool {
            let (a, b) = (smooth[j], smooth[j + 1]);
            match edge.direction {
                Direction::Rising => a < thr && b >= thr,
                Direction::Falling => a >= thr && b < thr,
            }
        };
        let lo = (edge.column - edge.search_radius).floor().max(0.0) as usize;
        let hi = ((edge.column + edge.search_radius).ceil() as usize).min(self.width - 2);
        let mut best: Option<(usize, f64)> = None;
        for j in lo..=hi {
            if !crosses(j) {
                continue;
            }
            let frac = (thr - smooth[j]) / (smooth[j + 1] - smooth[j]);
            let x = j as f64 + frac;
            if (x - edge.column).abs() > edge.search_radius {
                continue;
            }
            if best.is_none_or(|(_, bx)| (x - edge.column).abs() < (bx - edge.column).abs()) {
                best = Some((j, frac));
            }
        }
        best.map(|(j, frac)| j as f64 + frac)
    }

    /// Sub-pixel edge in column coordinates near `guess`, or `None` if no
    /// fitted polynomial has a crossing in its window.
    ///
    /// The crossings from the windows centred on the two samples around
    /// `guess` are blended linearly by sub-pixel phase, which keeps the
    /// estimate continuous and free of window-asymmetry bias at mid-pixel.
    fn locate(&self, smooth: &[f64], thr: f64, edge: &NominalEdge, guess: f64) -> Option<f64> {
        let j = guess.floor().max(0.0) as usize;
        let frac = guess - j as f64;
        let a = self.locate_in(smooth, thr, edge, guess, j);
        let b = self.locate_in(smooth, thr, edge, guess, j + 1);
        match (a, b) {
            (Some(a), Some(b)) => Some((1.0 - frac) * a + frac * b),
            (a, b) => a.or(b),
        }
    }

    fn locate_in(&self, smooth: &[f64], thr: f64, edge: &NominalEdge, guess: f64, center: usize) -> Option<f64> {
        let h = self.poly.half;
        if center < h || center + h >= self.width {
            return None;
        }
        let coef = self.poly.coefficients(&smooth[center - h..=center + h]);
        let g = |t: f64| self.poly.eval(&coef, t) - thr;
        let target = guess - center as f64;

        // bracket the crossing with the right slope sign nearest to `target`
        let steps = 8 * h;
        let dt = 2.0 * h as f64 / steps as f64;
        let mut bracket: Option<(f64, f64)> = None;
        for s in 0..steps {
            let (a, b) = (-(h as f64) + s as f64 * dt, -(h as f64) + (s + 1) as f64 * dt);
            let (ga, gb) = (g(a), g(b));
            let ok = match edge.direction {
                Direction::Rising => ga < 0.0 && gb >= 0.0,
                Direction::Falling => ga >= 0.0 && gb < 0.0,
            };
            if ok {
                let mid = 0.5 * (a + b);
                if bracket.is_none_or(|(x, y)| (mid - target).abs() < (0.5 * (x + y) - target).abs()) {
                    bracket = Some((a, b));
                }
            }
        }
        let (mut a, mut b) = bracket?;
        let ga = g(a);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            let gm = g(m);
            if (gm < 0.0) == (ga < 0.0) {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-13 {
                break;
            }
        }
        Some(center as f64 + 0.5 * (a + b))
    }
}

pub fn detect_edges(image: &GrayImage, params: &EdgeDetectParams) -> Result<EdgeSet> {
    params.validate()?;
    let width = image.width();
    let profile = image.column_means();
    let lines = nominal_lines(&profile, params)?;

    // plateau columns: at least `guard` columns away from every nominal edge
    let guard = params.fit_halfwidth.max(2) as f64;
    let mut line_cols = Vec::new();
    let mut space_cols = Vec::new();
    for j in 0..width {
        let x = j as f64;
        let near = lines
            .iter()
            .any(|(l, r)| (x - l.column).abs() < guard || (x - r.column).abs() < guard);
        if near {
            continue;
        }
        if lines.iter().any(|(l, r)| x > l.column && x < r.column) {
            line_cols.push(j);
        } else {
            space_cols.push(j);
        }
    }
    if line_cols.is_empty() || space_cols.is_empty() {
        return Err(Error::NoLineFound);
    }

    let ctx = RowContext {
        lines: &lines,
        line_cols,
        space_cols,
        params,
        poly: LocalPolyFit::new(params.fit_halfwidth, params.poly_order),
        width,
    };

    let n_edges = 2 * lines.len();
    let per_row: Vec<Vec<Option<f64>>> = (0..image.height())
        .into_par_iter()
        .map(|y| {
            let row = image.row(y);
            let Some(thr) = ctx.row_threshold(row) else {
                return vec![None; n_edges];
            };
            let smooth = box_smooth(row, params.smoothing_halfwidth);
            let guide_row = vertical_mean(image, y, params.guide_halfwidth);
            let guide_thr = ctx.row_threshold(&guide_row);
            let guide = box_smooth(&guide_row, params.smoothing_halfwidth);
            let mut found: Vec<Option<f64>> = ctx
                .lines
                .iter()
                .flat_map(|(l, r)| [l, r])
                .map(|edge| {
                    let guess = guide_thr
                        .and_then(|t| ctx.coarse(&guide, t, edge))
                        .unwrap_or(edge.column);
                    ctx.locate(&smooth, thr, edge, guess)
                })
                .collect();
            // ordering: left < right within a line, lines strictly left to right
            for e in 0..n_edges - 1 {
                if let (Some(a), Some(b)) = (found[e], found[e + 1]) {
                    if a >= b {
                        found[e] = None;
                    }
                }
            }
            found
        })
        .collect();

    let rows = image.height();
    for e in 0..n_edges {
        let rejected = per_row.iter().filter(|r| r[e].is_none()).count();
        if rejected as f64 > MAX_REJECTED_FRACTION * rows as f64 {
            return Err(Error::EdgeDetectionUnreliable {
                edge: e,
                rejected,
                rows,
            });
        }
    }

    let dx = image.pixel_size();
    let mut out: Vec<LineEdges> = (0..lines.len())
        .map(|_| LineEdges {
            left: Vec::with_capacity(rows),
            right: Vec::with_capacity(rows),
        })
        .collect();
    let mut row_indices = Vec::with_capacity(rows);
    for (y, found) in per_row.iter().enumerate() {
        if found.iter().any(Option::is_none) {
            continue;
        }
        row_indices.push(y);
        for (i, line) in out.iter_mut().enumerate() {
            line.left.push((found[2 * i].unwrap() + 0.5) * dx);
            line.right.push((found[2 * i + 1].unwrap() + 0.5) * dx);
        }
    }
    if row_indices.is_empty() {
        return Err(Error::NoLineFound);
    }
    Ok(EdgeSet {
        rows: row_indices.len(),
        lines: out,
        row_indices,
        pixel_size: dx,
        params: *params,
    })
}
