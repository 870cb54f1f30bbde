//! Synthetic test images with non-negative values and unit peak.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linops::ImageGrid;
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    /// A handful of narrow Gaussians on a dark background.
    PointSources,
    /// A few wide, overlapping bumps.
    Blobs,
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomKind::PointSources => "point_sources",
            PhantomKind::Blobs => "blobs",
        })
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "point_sources" | "points" => Ok(PhantomKind::PointSources),
            "blobs" => Ok(PhantomKind::Blobs),
            other => Err(Error::InvalidParameter(format!("unknown phantom '{other}'"))),
        }
    }
}

pub fn phantom(rows: usize, cols: usize, kind: PhantomKind, seed: u64) -> Result<ImageGrid> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("empty phantom grid".into()));
    }
    let mut rng = SeededRng::new(seed);
    let n = rows * cols;
    let extent = rows.min(cols) as f64;
    let (count, width_lo, width_hi, amp_lo) = match kind {
        PhantomKind::PointSources => ((n / 128).clamp(4, 64), 0.6, 1.4, 0.2),
        PhantomKind::Blobs => (5, extent / 6.0, extent / 3.0, 0.4),
    };

    let mut img = ImageGrid::zeros(rows, cols);
    for _ in 0..count {
        let cr = rng.uniform() * rows as f64;
        let cc = rng.uniform() * cols as f64;
        let width = width_lo + (width_hi - width_lo) * rng.uniform();
        let amp = amp_lo + (1.0 - amp_lo) * rng.uniform();
        let inv = 1.0 / (2.0 * width * width);
        for r in 0..rows {
            for c in 0..cols {
                let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                img.values_mut()[r * cols + c] += amp * (-d2 * inv).exp();
            }
        }
    }
    let peak = img.max();
    img.values_mut().iter_mut().for_each(|v| *v /= peak);
    Ok(img)
}
