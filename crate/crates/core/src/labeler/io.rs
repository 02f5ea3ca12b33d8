//! Binary PPM (P6) images, maxval up to 255.

use std::path::Path;

use crate::error::{Error, Result};

use super::Image;

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|msg| Error::Data(format!("{}: {msg}", path.display())))
}

pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let (h, w) = (image.height(), image.width());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for v in image.rgb(y, x) {
                out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PPM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(format!("expected P6 magic, found {:?}", fields[0]));
    }
    let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"));
    let w = parse(&fields[1], "width")?;
    let h = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let m = h * w;
    let raster = bytes.get(pos..pos + 3 * m).ok_or("truncated PPM raster")?;
    let mut pixels = vec![0.0; 3 * m];
    for j in 0..m {
        for c in 0..3 {
            pixels[c * m + j] = raster[3 * j + c] as f64 / maxval as f64;
        }
    }
    Image::new(h, w, pixels).map_err(|e| e.to_string())
}
