//! Orthonormal Daubechies filters and periodic Mallat transforms.

/// Scaling (low-pass reconstruction) filters for DB1..DB8, normalised so that
/// `sum(h) = sqrt(2)` and `||h||_2 = 1`.
const DB_FILTERS: [&[f64]; 8] = [
    &[0.7071067811865476, 0.7071067811865476],
    &[
        0.48296291314453416,
        0.8365163037378079,
        0.2241438680420134,
        -0.12940952255126037,
    ],
    &[
        0.33267055295008263,
        0.8068915093110925,
        0.45987750211849154,
        -0.13501102001025458,
        -0.08544127388202666,
        0.03522629188570953,
    ],
    &[
        0.2303778133088965,
        0.7148465705529157,
        0.6308807679298589,
        -0.027983769416859854,
        -0.18703481171909309,
        0.030841381835560764,
        0.0328830116668852,
        -0.010597401785069032,
    ],
    &[
        0.16010239797419293,
        0.6038292697971896,
        0.7243085284377729,
        0.13842814590132074,
        -0.24229488706638203,
        -0.032244869584638375,
        0.07757149384004572,
        -0.006241490212798274,
        -0.012580751999081999,
        0.0033357252854737712,
    ],
    &[
        0.11154074335010947,
        0.49462389039845306,
        0.7511339080210954,
        0.31525035170919763,
        -0.22626469396543983,
        -0.12976686756726194,
        0.09750160558732304,
        0.027522865530305727,
        -0.03158203931748603,
        0.0005538422011614961,
        0.004777257510945511,
        -0.0010773010853084796,
    ],
    &[
        0.07785205408500918,
        0.3965393194819173,
        0.7291320908462351,
        0.4697822874051931,
        -0.14390600392856498,
        -0.22403618499387498,
        0.07130921926683026,
        0.08061260915108308,
        -0.03802993693501441,
        -0.01657454163066688,
        0.01255099855609984,
        0.0004295779729213665,
        -0.0018016407040474908,
        0.00035371379997452024,
    ],
    &[
        0.05441584224310401,
        0.31287159091429995,
        0.6756307362972898,
        0.5853546836542067,
        -0.015829105256349306,
        -0.2840155429615469,
        0.0004724845739132828,
        0.12874742662047847,
        -0.017369301001807547,
        -0.044088253930794755,
        0.013981027917398282,
        0.008746094047405777,
        -0.004870352993451574,
        -0.00039174037337694705,
        0.0006754494064505693,
        -0.00011747678412476953,
    ],
];

pub const MAX_ORDER: usize = 8;

#[derive(Clone, Debug)]
pub struct FilterPair {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// Low-pass `h` and quadrature-mirror high-pass `g[j] = (-1)^j h[L-1-j]`.
pub fn daubechies(order: usize) -> Option<FilterPair> {
    if !(1..=MAX_ORDER).contains(&order) {
        return None;
    }
    let low = DB_FILTERS[order - 1].to_vec();
    let n = low.len();
    let high = (0..n)
        .map(|j| if j % 2 == 0 { low[n - 1 - j] } else { -low[n - 1 - j] })
        .collect();
    Some(FilterPair { low, high })
}

/// One periodic analysis step; `out[..n/2]` receives the approximation,
/// `out[n/2..]` the detail.
fn analyze_1d(f: &FilterPair, input: &[f64], out: &mut [f64], ext: &mut Vec<f64>) {
    let n = input.len();
    let half = n / 2;
    let taps = f.low.len();
    ext.clear();
    ext.extend((0..n + taps).map(|i| input[i % n]));
    for k in 0..half {
        let window = &ext[2 * k..2 * k + taps];
        let mut a = 0.0;
        let mut d = 0.0;
        for ((&h, &g), &x) in f.low.iter().zip(&f.high).zip(window) {
            a += h * x;
            d += g * x;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

/// Transpose of [`analyze_1d`].
fn synthesize_1d(f: &FilterPair, input: &[f64], out: &mut [f64], ext: &mut Vec<f64>) {
    let n = input.len();
    let half = n / 2;
    let taps = f.low.len();
    ext.clear();
    ext.resize(n + taps, 0.0);
    for k in 0..half {
        let a = input[k];
        let d = input[half + k];
        for ((&h, &g), e) in f.low.iter().zip(&f.high).zip(&mut ext[2 * k..2 * k + taps]) {
            *e += h * a + g * d;
        }
    }
    out.fill(0.0);
    for (i, e) in ext.iter().enumerate() {
        out[i % n] += e;
    }
}

/// Single 2-D level on the top-left `r x c` block of a row-major buffer with
/// row stride `stride`. Quadrants afterwards: LL top-left, HL top-right
/// (high-pass along rows), LH bottom-left, HH bottom-right.
fn analyze_level(f: &FilterPair, buf: &mut [f64], stride: usize, r: usize, c: usize) {
    let mut line = vec![0.0; r.max(c)];
    let mut out = vec![0.0; r.max(c)];
    let mut ext = Vec::new();
    for row in 0..r {
        let start = row * stride;
        line[..c].copy_from_slice(&buf[start..start + c]);
        analyze_1d(f, &line[..c], &mut out[..c], &mut ext);
        buf[start..start + c].copy_from_slice(&out[..c]);
    }
    for col in 0..c {
        for row in 0..r {
            line[row] = buf[row * stride + col];
        }
        analyze_1d(f, &line[..r], &mut out[..r], &mut ext);
        for row in 0..r {
            buf[row * stride + col] = out[row];
        }
    }
}

fn synthesize_level(f: &FilterPair, buf: &mut [f64], stride: usize, r: usize, c: usize) {
    let mut line = vec![0.0; r.max(c)];
    let mut out = vec![0.0; r.max(c)];
    let mut ext = Vec::new();
    for col in 0..c {
        for row in 0..r {
            line[row] = buf[row * stride + col];
        }
        synthesize_1d(f, &line[..r], &mut out[..r], &mut ext);
        for row in 0..r {
            buf[row * stride + col] = out[row];
        }
    }
    for row in 0..r {
        let start = row * stride;
        line[..c].copy_from_slice(&buf[start..start + c]);
        synthesize_1d(f, &line[..c], &mut out[..c], &mut ext);
        buf[start..start + c].copy_from_slice(&out[..c]);
    }
}

/// Blocks of the packed coefficient vector as `(row0, col0, height, width)`
/// in the Mallat layout: coarsest LL, then (HL, LH, HH) per level from
/// coarsest to finest.
fn block_layout(rows: usize, cols: usize, levels: usize) -> Vec<(usize, usize, usize, usize)> {
    let (rj, cj) = (rows >> levels, cols >> levels);
    let mut blocks = vec![(0, 0, rj, cj)];
    for level in (1..=levels).rev() {
        let (h, w) = (rows >> level, cols >> level);
        blocks.push((0, w, h, w));
        blocks.push((h, 0, h, w));
        blocks.push((h, w, h, w));
    }
    blocks
}

pub(crate) fn forward_2d(
    f: &FilterPair,
    rows: usize,
    cols: usize,
    levels: usize,
    image: &[f64],
    packed: &mut [f64],
) {
    let mut buf = image.to_vec();
    for level in 0..levels {
        analyze_level(f, &mut buf, cols, rows >> level, cols >> level);
    }
    let mut pos = 0;
    for (r0, c0, h, w) in block_layout(rows, cols, levels) {
        for r in r0..r0 + h {
            packed[pos..pos + w].copy_from_slice(&buf[r * cols + c0..r * cols + c0 + w]);
            pos += w;
        }
    }
}

pub(crate) fn inverse_2d(
    f: &FilterPair,
    rows: usize,
    cols: usize,
    levels: usize,
    packed: &[f64],
    image: &mut [f64],
) {
    let mut pos = 0;
    for (r0, c0, h, w) in block_layout(rows, cols, levels) {
        for r in r0..r0 + h {
            image[r * cols + c0..r * cols + c0 + w].copy_from_slice(&packed[pos..pos + w]);
            pos += w;
        }
    }
    for level in (0..levels).rev() {
        synthesize_level(f, image, cols, rows >> level, cols >> level);
    }
}
