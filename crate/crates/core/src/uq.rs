//! Approximate HPD credible regions and local credible intervals.
//!
//! The HPD threshold is replaced by the concentration bound
//! `gamma' = mu f(x*) + g(x*) + sqrt(16 log(3/alpha)) sqrt(N) + N`.
//! A local credible interval for a superpixel `Omega_i` is the set of
//! constants `xi >= 0` that can replace the MAP values on `Omega_i` while
//! keeping the objective below `gamma'`.
//!
//! Along one region the modified image is affine in `xi`:
//! `x(xi) = x_base + xi * zeta_i`. The residual and the analysis coefficients
//! are therefore affine too, so each evaluation of
//! `phi(xi) = mu ||b + xi c||_1 + ||r + xi d||^2 / 2 sigma^2`
//! costs `O(|support(c)|)` after one forward and one analysis transform of the
//! base image and of the indicator. Only coefficients touched by the region
//! are revisited; the rest enter as a constant.
//!
//! For synthesis models the image is mapped to coefficients through
//! `a = Psi^dagger x`, which makes `phi` the same function for both prior
//! forms; they differ only through `N` and the MAP objective in `gamma'`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linops::{re_dot, ImageGrid};
use crate::model::PosteriorModel;
use crate::solver::MapResult;

#[derive(Clone, Debug, PartialEq)]
pub struct HpdThreshold {
    pub alpha: f64,
    pub gamma_prime: f64,
    pub objective_at_map: f64,
    pub n_dim: usize,
}

impl HpdThreshold {
    pub fn from_parts(objective_at_map: f64, n_dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            gamma_prime: gamma_prime(objective_at_map, n_dim, alpha),
            objective_at_map,
            n_dim,
        })
    }

    /// `gamma'` recomputed from the stored fields.
    pub fn recompute(&self) -> f64 {
        gamma_prime(self.objective_at_map, self.n_dim, self.alpha)
    }
}

fn gamma_prime(objective_at_map: f64, n_dim: usize, alpha: f64) -> f64 {
    let n = n_dim as f64;
    objective_at_map + (16.0 * (3.0 / alpha).ln()).sqrt() * n.sqrt() + n
}

/// Threshold for the model's variable dimension (`N` for analysis, `L` for
/// synthesis).
pub fn hpd_threshold(m: &PosteriorModel, map_res: &MapResult, alpha: f64) -> Result<HpdThreshold> {
    let objective = m.objective(&map_res.point)?;
    HpdThreshold::from_parts(objective, m.dim(), alpha)
}

pub fn in_hpd(m: &PosteriorModel, x: &ImageGrid, th: &HpdThreshold) -> Result<bool> {
    Ok(m.objective_of_image(x)? <= th.gamma_prime)
}

/// Disjoint square tiles covering the grid in raster order.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelPartition {
    pub rows: usize,
    pub cols: usize,
    pub scale: usize,
    /// Tile row count and column count.
    pub tiles: (usize, usize),
    pub regions: Vec<Vec<usize>>,
}

impl SuperpixelPartition {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Top-left pixel of region `i`.
    pub fn origin(&self, i: usize) -> (usize, usize) {
        let (_, tile_cols) = self.tiles;
        ((i / tile_cols) * self.scale, (i % tile_cols) * self.scale)
    }

    /// Spread one value per region over a full image.
    pub fn assemble(&self, per_region: &[f64]) -> ImageGrid {
        let mut img = ImageGrid::zeros(self.rows, self.cols);
        for (region, &v) in self.regions.iter().zip(per_region) {
            for &p in region {
                img.values_mut()[p] = v;
            }
        }
        img
    }
}

pub fn partition_grid(rows: usize, cols: usize, scale: usize) -> Result<SuperpixelPartition> {
    if rows == 0 || cols == 0 || scale == 0 {
        return Err(Error::InvalidParameter(format!(
            "partition needs positive sizes, got {rows}x{cols} at scale {scale}"
        )));
    }
    let tile_rows = rows.div_ceil(scale);
    let tile_cols = cols.div_ceil(scale);
    let mut regions = Vec::with_capacity(tile_rows * tile_cols);
    for tr in 0..tile_rows {
        for tc in 0..tile_cols {
            let mut region = Vec::new();
            for r in tr * scale..((tr + 1) * scale).min(rows) {
                for c in tc * scale..((tc + 1) * scale).min(cols) {
                    region.push(r * cols + c);
                }
            }
            regions.push(region);
        }
    }
    Ok(SuperpixelPartition {
        rows,
        cols,
        scale,
        tiles: (tile_rows, tile_cols),
        regions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Maximum number of bracket doublings when searching for the upper endpoint.
pub const MAX_EXPANSIONS: usize = 60;

/// Objective restricted to the line `x_base + xi * zeta_i`.
#[derive(Clone, Debug)]
pub struct RegionObjective {
    mu: f64,
    inv_two_sigma2: f64,
    rr: f64,
    rd: f64,
    dd: f64,
    prior_rest: f64,
    base: Vec<f64>,
    slope: Vec<f64>,
}

impl RegionObjective {
    pub fn new(m: &PosteriorModel, map_image: &ImageGrid, region: &[usize]) -> Self {
        let n = map_image.len();
        let mut base = map_image.values().to_vec();
        let mut indicator = vec![0.0; n];
        for &p in region {
            base[p] = 0.0;
            indicator[p] = 1.0;
        }
        let r = m.residual(&base);
        let d = m.op().apply_slice(&indicator);
        let b = m.dict().analyze_slice(&base);
        let c = m.dict().analyze_slice(&indicator);

        let mut prior_rest = 0.0;
        let mut kept_base = Vec::new();
        let mut kept_slope = Vec::new();
        for (bj, cj) in b.into_iter().zip(c) {
            if cj != 0.0 {
                kept_base.push(bj);
                kept_slope.push(cj);
            } else {
                prior_rest += bj.abs();
            }
        }
        let sigma = m.sigma();
        Self {
            mu: m.mu(),
            inv_two_sigma2: 1.0 / (2.0 * sigma * sigma),
            rr: re_dot(&r, &r),
            rd: re_dot(&r, &d),
            dd: re_dot(&d, &d),
            prior_rest,
            base: kept_base,
            slope: kept_slope,
        }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let prior: f64 = self.prior_rest
            + self
                .base
                .iter()
                .zip(&self.slope)
                .map(|(b, c)| (b + xi * c).abs())
                .sum::<f64>();
        let data = (self.rr + 2.0 * xi * self.rd + xi * xi * self.dd) * self.inv_two_sigma2;
        self.mu * prior + data
    }
}

/// Endpoints of `{xi >= 0 : phi(xi) <= level}` for a convex `phi`, each on
/// the feasible side and within `tol` of the true endpoint. `start` is a
/// first guess inside the set, `span` the initial bracket width. Returns
/// `None` if the set is empty.
pub fn feasible_interval(
    phi: impl Fn(f64) -> f64,
    level: f64,
    start: f64,
    span: f64,
    tol: f64,
) -> Result<Option<Interval>> {
    if !(tol > 0.0) || !(span > 0.0) {
        return Err(Error::InvalidParameter(
            "interval search needs positive tol and span".into(),
        ));
    }
    let mut mid = start.max(0.0);
    if phi(mid) > level {
        let (arg, value) = minimize_convex(&phi, mid, span, tol)?;
        if value > level {
            return Ok(None);
        }
        mid = arg;
    }

    let lower = if phi(0.0) <= level {
        0.0
    } else {
        let (mut out, mut inside) = (0.0, mid);
        while inside - out > tol {
            let probe = 0.5 * (out + inside);
            if probe <= out || probe >= inside {
                break;
            }
            if phi(probe) <= level {
                inside = probe;
            } else {
                out = probe;
            }
        }
        inside
    };

    let mut inside = mid;
    let mut step = span;
    let mut out = mid + step;
    let mut expansions = 0;
    while phi(out) <= level {
        inside = out;
        step *= 2.0;
        out = mid + step;
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::BracketExpansion(MAX_EXPANSIONS));
        }
    }
    while out - inside > tol {
        let probe = 0.5 * (inside + out);
        if probe <= inside || probe >= out {
            break;
        }
        if phi(probe) <= level {
            inside = probe;
        } else {
            out = probe;
        }
    }
    Ok(Some(Interval {
        lower,
        upper: inside,
    }))
}

/// Golden-section search for the minimum of a convex function on `[0, inf)`.
fn minimize_convex(phi: &impl Fn(f64) -> f64, start: f64, span: f64, tol: f64) -> Result<(f64, f64)> {
    let mut prev = phi(start);
    let mut step = span;
    let mut hi = start + step;
    let mut expansions = 0;
    loop {
        let v = phi(hi);
        if v >= prev {
            break;
        }
        prev = v;
        step *= 2.0;
        hi = start + step;
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::BracketExpansion(MAX_EXPANSIONS));
        }
    }
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while b - a > 0.1 * tol && c > a && d < b && c < d {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = phi(d);
        }
    }
    let candidates = [(a, phi(a)), (c, fc), (d, fd), (b, phi(b))];
    let best = candidates
        .into_iter()
        .fold((0.0, f64::INFINITY), |acc, cand| if cand.1 < acc.1 { cand } else { acc });
    Ok(best)
}

/// Default bisection tolerance: `1e-4` of the image dynamic range.
pub fn default_tolerance(map_image: &ImageGrid) -> f64 {
    1e-4 * span_of(map_image)
}

fn span_of(img: &ImageGrid) -> f64 {
    let range = img.dynamic_range();
    if range > f64::EPSILON.sqrt() * img.max_abs().max(1.0) {
        range
    } else {
        img.max_abs().max(1.0)
    }
}

fn region_mean(img: &ImageGrid, region: &[usize]) -> f64 {
    region.iter().map(|&p| img.values()[p]).sum::<f64>() / region.len() as f64
}

/// Local credible interval for region `i`; `Ok(None)` marks an empty
/// feasible set.
pub fn local_interval(
    m: &PosteriorModel,
    map_res: &MapResult,
    th: &HpdThreshold,
    part: &SuperpixelPartition,
    i: usize,
    tol: f64,
) -> Result<Option<Interval>> {
    let map_image = m.point_to_image(&map_res.point)?;
    check_partition(&map_image, part)?;
    let region = part
        .regions
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("region {i} out of range")))?;
    interval_for_region(m, &map_image, th, region, tol)
}

fn interval_for_region(
    m: &PosteriorModel,
    map_image: &ImageGrid,
    th: &HpdThreshold,
    region: &[usize],
    tol: f64,
) -> Result<Option<Interval>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let phi = RegionObjective::new(m, map_image, region);
    feasible_interval(
        |xi| phi.eval(xi),
        th.gamma_prime,
        region_mean(map_image, region),
        span_of(map_image),
        tol,
    )
}

fn check_partition(img: &ImageGrid, part: &SuperpixelPartition) -> Result<()> {
    if part.rows != img.rows() || part.cols != img.cols() {
        return Err(Error::Dimension(format!(
            "partition is {}x{}, image is {}x{}",
            part.rows,
            part.cols,
            img.rows(),
            img.cols()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CredibleIntervalMap {
    pub xi_minus: ImageGrid,
    pub xi_plus: ImageGrid,
    pub partition: SuperpixelPartition,
    pub alpha: f64,
    /// Per-region endpoints in region order.
    pub intervals: Vec<Interval>,
}

impl CredibleIntervalMap {
    pub fn from_intervals(part: SuperpixelPartition, alpha: f64, intervals: Vec<Interval>) -> Self {
        let lower: Vec<f64> = intervals.iter().map(|iv| iv.lower).collect();
        let upper: Vec<f64> = intervals.iter().map(|iv| iv.upper).collect();
        Self {
            xi_minus: part.assemble(&lower),
            xi_plus: part.assemble(&upper),
            partition: part,
            alpha,
            intervals,
        }
    }

    pub fn lengths(&self) -> ImageGrid {
        let v = self
            .xi_plus
            .values()
            .iter()
            .zip(self.xi_minus.values())
            .map(|(p, m)| p - m)
            .collect();
        ImageGrid::from_raw(self.xi_plus.rows(), self.xi_plus.cols(), v)
    }

    /// Mean interval length over pixels.
    pub fn mean_length(&self) -> f64 {
        let l = self.lengths();
        l.values().iter().sum::<f64>() / l.len() as f64
    }
}

/// All regions' intervals. Regions are computed in parallel on the current
/// rayon pool and assembled in region order. An empty feasible set is
/// reported as [`Error::EmptyInterval`].
pub fn credible_map(
    m: &PosteriorModel,
    map_res: &MapResult,
    th: &HpdThreshold,
    part: &SuperpixelPartition,
    tol: f64,
) -> Result<CredibleIntervalMap> {
    let map_image = m.point_to_image(&map_res.point)?;
    check_partition(&map_image, part)?;
    let intervals = part
        .regions
        .par_iter()
        .enumerate()
        .map(|(i, region)| {
            interval_for_region(m, &map_image, th, region, tol)?.ok_or(Error::EmptyInterval(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CredibleIntervalMap::from_intervals(part.clone(), th.alpha, intervals))
}

/// Mean over pixels of `|len_a - len_b| / (max(truth) - min(truth))`.
pub fn relative_length_error(len_a: &ImageGrid, len_b: &ImageGrid, truth: &ImageGrid) -> Result<f64> {
    if !len_a.same_shape(len_b) || !len_a.same_shape(truth) {
        return Err(Error::Dimension("length maps and truth differ in shape".into()));
    }
    let range = truth.dynamic_range();
    if !(range > 0.0) {
        return Err(Error::InvalidParameter("truth image is constant".into()));
    }
    let total: f64 = len_a
        .values()
        .iter()
        .zip(len_b.values())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / (len_a.len() as f64 * range))
}
