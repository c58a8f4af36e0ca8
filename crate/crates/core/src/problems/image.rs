//! Test images: a procedural grayscale phantom and a portable-graymap reader.

use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;

fn hash01(i: usize, j: usize) -> f64 {
    let mut h = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic grayscale scene in `[0, 1]`: a smooth sky, a textured
/// ground, a building block on the horizon, and a dark figure with a thin
/// tripod. Flat regions, sharp edges and pixel-scale texture all appear.
pub fn make_phantom_image(height: usize, width: usize) -> Result<Grid> {
    if height < 16 || width < 16 {
        return Err(invalid(
            "phantom size",
            format!("needs at least 16x16, got {height}x{width}"),
        ));
    }
    let horizon = 0.62;
    let img = Grid::from_fn(height, width, |i, j| {
        let b = (i as f64 + 0.5) / height as f64; // 0 at top
        let a = (j as f64 + 0.5) / width as f64;

        let mut v = if b < horizon {
            0.85 - 0.25 * b
        } else {
            // two-pixel grass texture over a slow ramp
            let coarse = hash01(i / 2, j / 2);
            let fine = hash01(i + 7919, j + 104_729);
            0.45 + 0.1 * (b - horizon) + 0.22 * (coarse - 0.5) + 0.08 * (fine - 0.5)
        };

        // building on the horizon with windows
        if (0.62..0.9).contains(&a) && (0.42..horizon).contains(&b) {
            v = 0.7;
            let wx = ((a - 0.62) * 40.0).fract();
            let wy = ((b - 0.42) * 40.0).fract();
            if wx > 0.55 && wy > 0.5 {
                v = 0.35;
            }
        }

        // figure: head, coat, legs
        let head = ((a - 0.33) / 0.055).powi(2) + ((b - 0.2) / 0.07).powi(2);
        let coat_half = 0.06 + 0.12 * ((b - 0.27) / 0.4).clamp(0.0, 1.0);
        let in_coat = (0.27..0.67).contains(&b) && (a - 0.33).abs() < coat_half;
        let in_legs =
            (0.67..0.88).contains(&b) && ((a - 0.28).abs() < 0.025 || (a - 0.38).abs() < 0.025);
        if head < 1.0 {
            v = 0.15;
        }
        if in_coat || in_legs {
            v = 0.06 + 0.03 * ((a * 60.0).sin() * (b * 50.0).sin());
        }

        // camera and tripod legs (thin lines)
        if (0.52..0.6).contains(&a) && (0.24..0.3).contains(&b) {
            v = 0.1;
        }
        for (foot, top) in [(0.47, 0.56), (0.56, 0.56), (0.65, 0.56)] {
            let t = (b - 0.3) / 0.6;
            if (0.0..=1.0).contains(&t) {
                let x = top + (foot - top) * t;
                if (a - x).abs() < 0.006 {
                    v = 0.12;
                }
            }
        }
        v.clamp(0.0, 1.0)
    });
    Ok(img)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::ImageParse {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ImageParse {
                offset: start,
                reason: "number out of range".into(),
            })
    }
}

/// Parses a P2 (ASCII) or P5 (binary) graymap, scaling values to `[0, 1]`.
pub fn parse_pgm(bytes: &[u8]) -> Result<Grid> {
    let mut cur = Cursor { bytes, pos: 0 };
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(cur.err("missing P2/P5 magic number")),
    };
    cur.pos = 2;
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if width == 0 || height == 0 {
        return Err(cur.err("image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| cur.err("image dimensions overflow"))?;
    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(cur.err("expected whitespace before raster"));
        }
        cur.pos += 1;
        let depth = if maxval < 256 { 1 } else { 2 };
        if bytes.len() < cur.pos + n * depth {
            cur.pos = bytes.len();
            return Err(cur.err(format!("raster truncated: need {} bytes", n * depth)));
        }
        for _ in 0..n {
            let v = if depth == 1 {
                bytes[cur.pos] as usize
            } else {
                ((bytes[cur.pos] as usize) << 8) | bytes[cur.pos + 1] as usize
            };
            if v > maxval {
                return Err(cur.err(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 * scale);
            cur.pos += depth;
        }
    } else {
        for _ in 0..n {
            let start = cur.pos;
            let v = cur.number()?;
            if v > maxval {
                cur.pos = start;
                cur.skip_ws_and_comments();
                return Err(cur.err(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 * scale);
        }
    }
    Ok(Grid::from_vec(height, width, data))
}

pub fn load_pgm(path: &Path) -> Result<Grid> {
    let bytes = std::fs::read(path)?;
    parse_pgm(&bytes)
}
