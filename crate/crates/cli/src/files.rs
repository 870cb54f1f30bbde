use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::DynamicImage;
use mapuq::io::load_image;
use mapuq::ImageGrid;

use crate::error::CliError;

/// UQGRID v1 image, or an 8/16-bit PGM scaled to `[0, 1]`.
pub fn read_image_any(path: &Path) -> Result<ImageGrid, CliError> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if !is_pgm {
        return Ok(load_image(path)?);
    }
    let decoded = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| CliError::Io(format!("cannot decode {}: {e}", path.display())))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let values: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(img) => img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(img) => img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        _ => {
            return Err(CliError::Io(format!(
                "{} is not a greyscale PGM",
                path.display()
            )))
        }
    };
    Ok(ImageGrid::new(h, w, values)?)
}

/// Two-column CSV with a header; values use shortest round-trip formatting.
pub fn write_series(path: &Path, header: &str, values: &[f64]) -> Result<(), CliError> {
    let mut s = format!("{header}\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(s, "{i},{v:?}").expect("write to string");
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)?;
    Ok(())
}
