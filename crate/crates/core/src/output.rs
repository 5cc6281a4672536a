//! File output: atomic writes and plain PGM images of height fields.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{param, Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Parameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Plain (P2) greyscale image: row-major heights scaled so the minimum is 0
/// and the maximum 255. A constant field is all 0.
pub fn pgm_string(heights: &[f64], width: usize, height: usize) -> Result<String> {
    if width * height != heights.len() || width == 0 {
        return param(format!(
            "{width}x{height} image does not match {} heights",
            heights.len()
        ));
    }
    if let Some(h) = heights.iter().find(|h| !h.is_finite()) {
        return param(format!("cannot render non-finite height {h}"));
    }
    let lo = heights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P2\n{width} {height}\n255\n");
    for row in heights.chunks(width) {
        let line: Vec<String> = row
            .iter()
            .map(|h| {
                let v = if span > 0.0 { (255.0 * (h - lo) / span).round() } else { 0.0 };
                (v as u8).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn render_field(heights: &[f64], width: usize, height: usize, out: &Path) -> Result<()> {
    write_atomic(out, pgm_string(heights, width, height)?.as_bytes())
}

/// A decoded P2 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub pixels: Vec<u16>,
}

/// Parses a plain PGM, including `#` comments.
pub fn parse_pgm(text: &str) -> Result<Pgm> {
    let mut toks = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let bad = |msg: &str| Error::Parse {
        line: 0,
        msg: format!("PGM: {msg}"),
    };
    if toks.next() != Some("P2") {
        return Err(bad("missing P2 magic"));
    }
    let mut num = |what: &str| -> Result<usize> {
        toks.next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("bad or missing {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let max_value = num("max value")?;
    if max_value == 0 || max_value > u16::MAX as usize {
        return Err(bad("max value out of range"));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let v = num("pixel")?;
        if v > max_value {
            return Err(bad("pixel above max value"));
        }
        pixels.push(v as u16);
    }
    if toks.next().is_some() {
        return Err(bad("trailing data"));
    }
    Ok(Pgm {
        width,
        height,
        max_value: max_value as u16,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_constant() {
        let p = parse_pgm(&pgm_string(&[0.0, 1.0], 2, 1).unwrap()).unwrap();
        assert_eq!(p.pixels, vec![0, 255]);
        let p = parse_pgm(&pgm_string(&[3.5; 6], 3, 2).unwrap()).unwrap();
        assert!(p.pixels.iter().all(|&v| v == p.pixels[0]));
        assert!(pgm_string(&[0.0; 5], 2, 2).is_err());
        assert!(pgm_string(&[f64::NAN, 0.0], 2, 1).is_err());
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse_pgm("P5 1 1 255 0").is_err());
        assert!(parse_pgm("P2 2 1 255 0").is_err());
        assert!(parse_pgm("P2 1 1 255 300").is_err());
        assert!(parse_pgm("P2 # c\n1 1 255 7").is_ok());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        render_field(&[0.0, 2.0, 1.0, 3.0], 2, 2, &p).unwrap();
        let img = parse_pgm(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(img.pixels, vec![0, 170, 85, 255]);
        write_atomic(&p, b"x").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"x");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(render_field(&[0.0], 1, 1, &dir.path().join("no/such/dir.pgm")).is_err());
    }
}
