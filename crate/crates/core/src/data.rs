//! Datasets: a seeded synthetic shape task and Netpbm (P5/P6) ingestion.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_divisible, OcticError, Result};
use crate::group::{GroupElement, ORDER};
use crate::tensor::Mat;
use crate::steerable::{image_action, Image, IMAGE_CHANNELS};

pub type Sample = (Image, usize);

pub const SHAPE_CLASSES: usize = 8;

/// Class names of the synthetic task, in label order.
pub const SHAPE_NAMES: [&str; SHAPE_CLASSES] =
    ["disk", "ring", "bar", "ell", "plus", "tee", "frame", "dots"];

/// Filled primitives in units of `M/16` pixels, relative to the shape centre
/// (row grows downward).
enum Prim {
    Disk { r: f64, cy: f64, cx: f64 },
    Annulus { outer: f64, inner: f64 },
    Rect { y0: f64, y1: f64, x0: f64, x1: f64 },
}

fn primitives(label: usize) -> Vec<Prim> {
    use Prim::*;
    match label {
        0 => vec![Disk { r: 4.0, cy: 0.0, cx: 0.0 }],
        1 => vec![Annulus { outer: 5.5, inner: 3.0 }],
        2 => vec![Rect { y0: -1.0, y1: 1.0, x0: -5.5, x1: 5.5 }],
        3 => vec![
            Rect { y0: -5.0, y1: 4.0, x0: -3.0, x1: -1.0 },
            Rect { y0: 2.0, y1: 4.0, x0: -3.0, x1: 4.0 },
        ],
        4 => vec![
            Rect { y0: -1.0, y1: 1.0, x0: -5.0, x1: 5.0 },
            Rect { y0: -5.0, y1: 5.0, x0: -1.0, x1: 1.0 },
        ],
        5 => vec![
            Rect { y0: -5.0, y1: -3.0, x0: -5.0, x1: 5.0 },
            Rect { y0: -3.0, y1: 5.0, x0: -1.0, x1: 1.0 },
        ],
        6 => vec![
            Rect { y0: -5.0, y1: -3.0, x0: -5.0, x1: 5.0 },
            Rect { y0: 3.0, y1: 5.0, x0: -5.0, x1: 5.0 },
            Rect { y0: -3.0, y1: 3.0, x0: -5.0, x1: -3.0 },
            Rect { y0: -3.0, y1: 3.0, x0: 3.0, x1: 5.0 },
        ],
        _ => vec![
            Disk { r: 2.0, cy: 0.0, cx: -4.0 },
            Disk { r: 2.0, cy: 0.0, cx: 4.0 },
        ],
    }
}

fn inside(p: &Prim, y: f64, x: f64) -> bool {
    match *p {
        Prim::Disk { r, cy, cx } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
        Prim::Annulus { outer, inner } => {
            let d = y * y + x * x;
            d <= outer * outer && d >= inner * inner
        }
        Prim::Rect { y0, y1, x0, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
    }
}

/// Draw one sample of class `label`. The canonical shape is jittered,
/// coloured and then moved by a random element of D8, so the label is
/// invariant under every image symmetry.
pub fn draw_shape<R: Rng>(label: usize, m: usize, rng: &mut R) -> Image {
    let s = m as f64 / 16.0;
    let prims = primitives(label % SHAPE_CLASSES);
    let jitter = 1.5 * s;
    let cy = m as f64 / 2.0 + rng.gen_range(-jitter..=jitter);
    let cx = m as f64 / 2.0 + rng.gen_range(-jitter..=jitter);
    let fg: [f64; IMAGE_CHANNELS] = std::array::from_fn(|_| rng.gen_range(0.5..1.0));
    let mut img = Image::zeros(m);
    for row in 0..m {
        for col in 0..m {
            // pixel centres, in shape units
            let y = (row as f64 + 0.5 - cy) / s;
            let x = (col as f64 + 0.5 - cx) / s;
            let on = prims.iter().any(|p| inside(p, y, x));
            for (c, &f) in fg.iter().enumerate() {
                let noise = rng.gen_range(-0.1..0.1);
                img.set(c, row, col, if on { f } else { 0.0 } + noise);
            }
        }
    }
    let g = GroupElement::ALL[rng.gen_range(0..GroupElement::ALL.len())];
    image_action(g, &img)
}

/// `n` samples with labels cycling through the eight classes.
pub fn synthetic_shapes(n: usize, m: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % SHAPE_CLASSES;
            (draw_shape(label, m, &mut rng), label)
        })
        .collect()
}

/// Whitespace-separated header fields, skipping `#` comments; returns the
/// fields and the offset of the raster.
fn pnm_header(bytes: &[u8]) -> Result<([usize; 3], u8, usize)> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'5' | b'6') {
        return Err(OcticError::Format("expected a binary PGM (P5) or PPM (P6) file".into()));
    }
    let kind = bytes[1];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(OcticError::Format("truncated Netpbm header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| OcticError::Format("bad number in Netpbm header".into()))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(OcticError::Format("missing whitespace after Netpbm header".into()));
    }
    Ok((fields, kind, pos + 1))
}

/// Decode a P5 or P6 image into `[0, 1]` floats. Grayscale is replicated to
/// three channels. Images must be square.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let ([w, h, maxval], kind, start) = pnm_header(bytes)?;
    if w != h {
        return Err(OcticError::Format(format!("image is {w}x{h}, only square images are supported")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(OcticError::Format(format!("invalid maxval {maxval}")));
    }
    let planes = if kind == b'6' { 3 } else { 1 };
    let width = if maxval < 256 { 1 } else { 2 };
    let need = w * h * planes * width;
    let raster = bytes
        .get(start..start + need)
        .ok_or_else(|| OcticError::Format("truncated raster".into()))?;
    let sample = |i: usize| -> f64 {
        let v = if width == 1 {
            raster[i] as usize
        } else {
            (raster[2 * i] as usize) << 8 | raster[2 * i + 1] as usize
        };
        v as f64 / maxval as f64
    };
    let mut img = Image::zeros(w);
    for row in 0..h {
        for col in 0..w {
            let px = row * w + col;
            for c in 0..IMAGE_CHANNELS {
                let src = if planes == 3 { px * 3 + c } else { px };
                img.set(c, row, col, sample(src));
            }
        }
    }
    Ok(img)
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    decode_pnm(&fs::read(path).map_err(OcticError::at(path))?)
}

/// Write an 8-bit binary PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut f = fs::File::create(path).map_err(OcticError::at(path))?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

/// Gray level of a constant channel.
pub const MID_GRAY: u8 = 128;

/// Sub-block names, used to label octic kernel rows.
pub const BLOCK_NAMES: [&str; ORDER] = ["a1", "a2", "b1", "b2", "e11", "e12", "e21", "e22"];

/// Min-max normalise to `0..=255`, or [`MID_GRAY`] everywhere when the
/// values are constant.
pub fn quantize(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![MID_GRAY; values.len()];
    }
    values.iter().map(|&v| (255.0 * (v - lo) / (hi - lo)).round() as u8).collect()
}

/// One `P×P` grayscale image per (kernel row, input channel) of a `C×3P²`
/// patch kernel, each normalised on its own. Octic rows are named by
/// sub-block and index within it (`e21_003_ch2`), dense rows by row index.
pub fn kernel_images(weight: &Mat, patch: usize, octic: bool) -> Result<Vec<(String, Vec<u8>)>> {
    let pp = patch * patch;
    if weight.cols() != IMAGE_CHANNELS * pp {
        return Err(OcticError::DimensionMismatch(format!(
            "kernel has {} columns, expected {} for patch size {patch}",
            weight.cols(),
            IMAGE_CHANNELS * pp
        )));
    }
    let c = weight.rows();
    if octic {
        check_divisible("channel count", c, ORDER)?;
    }
    let mut out = Vec::with_capacity(c * IMAGE_CHANNELS);
    for r in 0..c {
        let stem = if octic {
            let k = c / ORDER;
            format!("{}_{:03}", BLOCK_NAMES[r / k], r % k)
        } else {
            format!("dense_{r:04}")
        };
        for ch in 0..IMAGE_CHANNELS {
            let vals = &weight.row(r)[ch * pp..(ch + 1) * pp];
            out.push((format!("{stem}_ch{ch}"), quantize(vals)));
        }
    }
    Ok(out)
}

/// Load a `relative-path,integer-label` manifest. Paths are resolved
/// against the manifest's directory; blank lines and `#` lines are skipped.
pub fn load_manifest(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path).map_err(OcticError::at(path))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (file, label) = line.rsplit_once(',').ok_or_else(|| {
            OcticError::Format(format!("{}:{}: expected 'path,label'", path.display(), n + 1))
        })?;
        let label: usize = label.trim().parse().map_err(|_| {
            OcticError::Format(format!("{}:{}: label '{label}' is not an integer", path.display(), n + 1))
        })?;
        out.push((read_pnm(&base.join(file.trim()))?, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_cycle_and_generation_is_seeded() {
        let a = synthetic_shapes(16, 16, 3);
        let b = synthetic_shapes(16, 16, 3);
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|s| s.1).collect::<Vec<_>>()[..9], [0, 1, 2, 3, 4, 5, 6, 7, 0]);
    }

    #[test]
    fn every_class_draws_foreground() {
        for label in 0..SHAPE_CLASSES {
            let mut rng = ChaCha8Rng::seed_from_u64(label as u64);
            let img = draw_shape(label, 16, &mut rng);
            let lit = (0..16 * 16).filter(|&p| img.get(0, p / 16, p % 16) > 0.3).count();
            assert!(lit > 8, "class {label} draws {lit} pixels");
        }
    }

    #[test]
    fn decodes_p6_with_comment() {
        let mut bytes = b"P6\n# hi\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255, 51, 51, 51]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(1, 0, 1), 1.0);
        assert_eq!(img.get(2, 1, 0), 1.0);
        assert!((img.get(1, 1, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn quantize_spans_the_range_and_grays_constants() {
        assert_eq!(quantize(&[-1.0, 0.0, 1.0]), vec![0, 128, 255]);
        assert_eq!(quantize(&[0.0; 4]), vec![MID_GRAY; 4]);
    }

    #[test]
    fn kernel_images_are_named_by_block() {
        let w = Mat::zeros(16, 3 * 4);
        let imgs = kernel_images(&w, 2, true).unwrap();
        assert_eq!(imgs.len(), 48);
        assert_eq!(imgs[0].0, "a1_000_ch0");
        assert_eq!(imgs[47].0, "e22_001_ch2");
    }

    #[test]
    fn rejects_ascii_formats() {
        assert!(decode_pnm(b"P3\n1 1\n255\n0 0 0").is_err());
    }
}
