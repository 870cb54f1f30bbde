//! File formats: UQGRID v1 grids, UQMASK v1 masks and flat `key = value`
//! model configurations.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::dictionaries::{dictionary_by_name, CoeffVector, Dictionary};
use crate::error::{Error, Result};
use crate::linops::{ForwardOp, ImageGrid, MeasurementVector};
use crate::model::{PosteriorModel, PriorForm};

const GRID_MAGIC: &str = "UQGRID v1";
const MASK_MAGIC: &str = "UQMASK v1";

/// Raw contents of a UQGRID file.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub rows: usize,
    pub cols: usize,
    /// 1 for real data, 2 for interleaved complex.
    pub channels: usize,
    pub data: Vec<f64>,
}

impl GridFile {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        if !(self.channels == 1 || self.channels == 2) {
            return Err(Error::Format(format!("unsupported channel count {}", self.channels)));
        }
        if self.data.len() != self.rows * self.cols * self.channels {
            return Err(Error::Dimension(format!(
                "grid {}x{}x{} holds {} values",
                self.rows,
                self.cols,
                self.channels,
                self.data.len()
            )));
        }
        writeln!(w, "{GRID_MAGIC}")?;
        writeln!(w, "{} {} {}", self.rows, self.cols, self.channels)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let magic = read_line(r)?;
        if magic != GRID_MAGIC {
            return Err(Error::Format(format!("expected '{GRID_MAGIC}', found '{magic}'")));
        }
        let dims = read_line(r)?;
        let parts: Vec<usize> = dims
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Format(format!("bad grid dimensions '{dims}'"))))
            .collect::<Result<_>>()?;
        let [rows, cols, channels] = parts[..] else {
            return Err(Error::Format(format!("bad grid dimensions '{dims}'")));
        };
        if !(channels == 1 || channels == 2) {
            return Err(Error::Format(format!("unsupported channel count {channels}")));
        }
        let count = rows * cols * channels;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(Error::Format(format!(
                "expected {} bytes of payload, found {}",
                count * 8,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            rows,
            cols,
            channels,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(fs::File::open(path)?))
    }
}

fn read_line(r: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Format("unexpected end of file".into()));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

pub fn save_image(path: &Path, img: &ImageGrid) -> Result<()> {
    GridFile {
        rows: img.rows(),
        cols: img.cols(),
        channels: 1,
        data: img.values().to_vec(),
    }
    .save(path)
}

pub fn load_image(path: &Path) -> Result<ImageGrid> {
    let g = GridFile::load(path)?;
    if g.channels != 1 {
        return Err(Error::Format(format!(
            "{} is complex; an image needs one channel",
            path.display()
        )));
    }
    ImageGrid::new(g.rows, g.cols, g.data)
}

/// Measurements as an `M x 1` complex grid.
pub fn save_measurements(path: &Path, y: &[Complex64]) -> Result<()> {
    GridFile {
        rows: y.len(),
        cols: 1,
        channels: 2,
        data: y.iter().flat_map(|c| [c.re, c.im]).collect(),
    }
    .save(path)
}

pub fn load_measurements(path: &Path) -> Result<Vec<Complex64>> {
    let g = GridFile::load(path)?;
    if g.channels != 2 || g.cols != 1 {
        return Err(Error::Format(format!(
            "{} is not an M x 1 complex grid",
            path.display()
        )));
    }
    Ok(g.data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

/// Coefficients as an `L x 1` real grid.
pub fn save_coeffs(path: &Path, a: &CoeffVector) -> Result<()> {
    GridFile {
        rows: a.values.len(),
        cols: 1,
        channels: 1,
        data: a.values.clone(),
    }
    .save(path)
}

pub fn load_coeffs(path: &Path, dict: &Dictionary) -> Result<CoeffVector> {
    let g = GridFile::load(path)?;
    if g.channels != 1 || g.cols != 1 || g.rows != dict.coeff_len() {
        return Err(Error::Format(format!(
            "{} does not hold {} coefficients",
            path.display(),
            dict.coeff_len()
        )));
    }
    Ok(dict.coeffs(g.data))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskFile {
    pub rows: usize,
    pub cols: usize,
    pub indices: Vec<usize>,
}

impl MaskFile {
    pub fn to_text(&self) -> String {
        let mut s = format!("{MASK_MAGIC} {} {}\n", self.rows, self.cols);
        for i in &self.indices {
            writeln!(s, "{i}").expect("write to string");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty mask file".into()))?;
        let rest = header
            .strip_prefix(MASK_MAGIC)
            .ok_or_else(|| Error::Format(format!("expected '{MASK_MAGIC}', found '{header}'")))?;
        let dims: Vec<usize> = rest
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Format(format!("bad mask header '{header}'"))))
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Format(format!("bad mask header '{header}'")));
        };
        let indices = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad mask index '{l}'")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows, cols, indices })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn from_op(op: &ForwardOp) -> Option<Self> {
        op.mask().map(|m| Self {
            rows: op.rows(),
            cols: op.cols(),
            indices: m.to_vec(),
        })
    }

    pub fn to_op(&self) -> Result<ForwardOp> {
        ForwardOp::masked_fourier(self.rows, self.cols, self.indices.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MuSpec {
    Auto,
    Value(f64),
}

/// Flat `key = value` description of a posterior model. Relative paths are
/// resolved against the directory of the configuration file.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// `masked_fourier` or `identity`.
    pub operator: String,
    pub rows: usize,
    pub cols: usize,
    pub mask: Option<PathBuf>,
    pub dict: String,
    pub levels: usize,
    pub prior: PriorForm,
    pub mu: MuSpec,
    pub sigma: f64,
    pub measurement: PathBuf,
}

impl ModelConfig {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to string");
        kv("operator", self.operator.clone());
        kv("rows", self.rows.to_string());
        kv("cols", self.cols.to_string());
        if let Some(mask) = &self.mask {
            kv("mask", mask.display().to_string());
        }
        kv("dict", self.dict.clone());
        kv("levels", self.levels.to_string());
        kv("prior", self.prior.to_string());
        kv(
            "mu",
            match self.mu {
                MuSpec::Auto => "auto".into(),
                MuSpec::Value(v) => format!("{v:?}"),
            },
        );
        kv("sigma", format!("{:?}", self.sigma));
        kv("measurement", self.measurement.display().to_string());
        kv("q", "2".into());
        kv("s", "1".into());
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key = value", n + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("missing key '{k}'")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("key '{k}' is not a number")))
        };
        let int = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("key '{k}' is not an integer")))
        };
        for (key, expected) in [("q", 2.0), ("s", 1.0)] {
            if map.contains_key(key) && num(key)? != expected {
                return Err(Error::InvalidParameter(format!(
                    "only {key} = {expected} is supported"
                )));
            }
        }
        let mu = match get("mu")?.as_str() {
            "auto" => MuSpec::Auto,
            _ => MuSpec::Value(num("mu")?),
        };
        Ok(Self {
            operator: get("operator")?,
            rows: int("rows")?,
            cols: int("cols")?,
            mask: map.get("mask").map(PathBuf::from),
            dict: get("dict")?,
            levels: int("levels")?,
            prior: get("prior")?.parse()?,
            mu,
            sigma: num("sigma")?,
            measurement: PathBuf::from(get("measurement")?),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn operator(&self, base: &Path) -> Result<ForwardOp> {
        match self.operator.as_str() {
            "masked_fourier" => {
                let path = self
                    .mask
                    .as_ref()
                    .ok_or_else(|| Error::Format("masked_fourier needs a mask path".into()))?;
                let mask = MaskFile::load(&base.join(path))?;
                if (mask.rows, mask.cols) != (self.rows, self.cols) {
                    return Err(Error::Dimension(format!(
                        "mask is {}x{}, model is {}x{}",
                        mask.rows, mask.cols, self.rows, self.cols
                    )));
                }
                mask.to_op()
            }
            "identity" => ForwardOp::identity(self.rows, self.cols),
            other => Err(Error::Format(format!("unknown operator '{other}'"))),
        }
    }

    /// Model at the configured `mu`; `auto` yields the `mu = 1` starting
    /// template used by automatic selection.
    pub fn build(&self, base: &Path) -> Result<PosteriorModel> {
        let op = self.operator(base)?;
        let dict = dictionary_by_name(&self.dict, self.rows, self.cols, self.levels)?;
        let y = MeasurementVector::new(load_measurements(&base.join(&self.measurement))?, self.sigma)?;
        let mu = match self.mu {
            MuSpec::Auto => 1.0,
            MuSpec::Value(v) => v,
        };
        PosteriorModel::new(op, dict, self.prior, mu, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_bytes_are_exact() {
        let g = GridFile {
            rows: 1,
            cols: 2,
            channels: 1,
            data: vec![1.0, -0.5],
        };
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let mut expect = b"UQGRID v1\n1 2 1\n".to_vec();
        expect.extend(1.0f64.to_le_bytes());
        expect.extend((-0.5f64).to_le_bytes());
        assert_eq!(buf, expect);
        let back = GridFile::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn truncated_or_foreign_grids_are_rejected() {
        let g = GridFile {
            rows: 2,
            cols: 2,
            channels: 2,
            data: vec![0.25; 8],
        };
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(GridFile::read_from(&mut buf.as_slice()), Err(Error::Format(_))));
        assert!(GridFile::read_from(&mut b"P5\n2 2\n".as_slice()).is_err());
        assert!(GridFile::read_from(&mut b"UQGRID v1\n2 2 3\n".as_slice()).is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        let m = MaskFile {
            rows: 4,
            cols: 4,
            indices: vec![0, 3, 9],
        };
        assert_eq!(m.to_text(), "UQMASK v1 4 4\n0\n3\n9\n");
        assert_eq!(MaskFile::parse(&m.to_text()).unwrap(), m);
        assert!(MaskFile::parse("UQMASK v2 4 4\n1\n").is_err());
        assert!(MaskFile::parse("UQMASK v1 4\n1\n").is_err());
    }

    #[test]
    fn config_round_trip_and_exponents() {
        let cfg = ModelConfig {
            operator: "masked_fourier".into(),
            rows: 8,
            cols: 8,
            mask: Some("mask.txt".into()),
            dict: "sara".into(),
            levels: 2,
            prior: PriorForm::Synthesis,
            mu: MuSpec::Value(0.1 + 0.2),
            sigma: 0.031622776601683794,
            measurement: "y.uqgrid".into(),
        };
        let back = ModelConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        let auto = ModelConfig {
            mu: MuSpec::Auto,
            mask: None,
            ..cfg.clone()
        };
        assert_eq!(ModelConfig::parse(&auto.to_text()).unwrap(), auto);
        let q3 = cfg.to_text().replace("q = 2", "q = 3");
        assert!(matches!(ModelConfig::parse(&q3), Err(Error::InvalidParameter(_))));
        let s2 = cfg.to_text().replace("s = 1", "s = 2");
        assert!(matches!(ModelConfig::parse(&s2), Err(Error::InvalidParameter(_))));
        assert!(ModelConfig::parse("operator = identity\n").is_err());
    }
}
