use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer holds {got} values, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("not a binary PGM (P5) file: {0}")]
    BadPgm(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImageError::SizeMismatch { expected, got: pixels.len() });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn put(&mut self, x: u32, y: u32, v: u8) {
        self.pixels[y as usize * self.width as usize + x as usize] = v;
    }
}

/// Skips whitespace and `#` comments, then reads one ASCII decimal token.
fn header_number(data: &[u8], pos: &mut usize) -> Result<u32, ImageError> {
    loop {
        match data.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while data.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(ImageError::BadPgm("truncated header")),
        }
    }
    let start = *pos;
    while data.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(ImageError::BadPgm("bad header number"))
}

impl GrayImage {
    pub fn from_pgm_bytes(data: &[u8]) -> Result<Self, ImageError> {
        if !data.starts_with(b"P5") {
            return Err(ImageError::BadPgm("missing P5 magic"));
        }
        let mut pos = 2;
        let width = header_number(data, &mut pos)?;
        let height = header_number(data, &mut pos)?;
        let maxval = header_number(data, &mut pos)?;
        if maxval == 0 || maxval > 255 {
            return Err(ImageError::BadPgm("only 8-bit maxval is supported"));
        }
        if !data.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(ImageError::BadPgm("missing separator after maxval"));
        }
        pos += 1;
        let n = width as usize * height as usize;
        let raster = data.get(pos..pos + n).ok_or(ImageError::BadPgm("truncated raster"))?;
        let pixels = if maxval == 255 {
            raster.to_vec()
        } else {
            raster
                .iter()
                .map(|&v| ((v.min(maxval as u8) as u32 * 255 + maxval / 2) / maxval) as u8)
                .collect()
        };
        GrayImage::new(width, height, pixels)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    GrayImage::from_pgm_bytes(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> io::Result<()> {
    fs::write(path, img.to_pgm_bytes())
}
