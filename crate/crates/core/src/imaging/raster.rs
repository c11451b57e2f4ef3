use std::io::Write;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use super::ImagingError;

/// A single 8-bit channel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayPlane {
    pub fn new(width: usize, height: usize) -> Self {
        GrayPlane {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayPlane { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// An 8-bit RGB image stored as three planes of equal size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub red: GrayPlane,
    pub green: GrayPlane,
    pub blue: GrayPlane,
}

impl RasterImage {
    pub fn new(width: usize, height: usize) -> Self {
        RasterImage {
            red: GrayPlane::new(width, height),
            green: GrayPlane::new(width, height),
            blue: GrayPlane::new(width, height),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut img = RasterImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn from_gray(plane: GrayPlane) -> Self {
        RasterImage {
            red: plane.clone(),
            green: plane.clone(),
            blue: plane,
        }
    }

    pub fn width(&self) -> usize {
        self.red.width
    }

    pub fn height(&self) -> usize {
        self.red.height
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = y * self.width() + x;
        [self.red.data[i], self.green.data[i], self.blue.data[i]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = y * self.width() + x;
        self.red.data[i] = rgb[0];
        self.green.data[i] = rgb[1];
        self.blue.data[i] = rgb[2];
    }

    pub fn planes(&self) -> [&GrayPlane; 3] {
        [&self.red, &self.green, &self.blue]
    }

    fn interleaved(&self) -> Vec<u8> {
        (0..self.red.data.len())
            .flat_map(|i| [self.red.data[i], self.green.data[i], self.blue.data[i]])
            .collect()
    }
}

/// Decodes a binary PPM (P6) or PGM (P5); gray inputs fill all three planes.
pub fn read_pnm(bytes: &[u8]) -> Result<RasterImage, ImagingError> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)?.to_rgb8();
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let mut img = RasterImage::new(w, h);
    for (i, px) in decoded.pixels().enumerate() {
        img.red.data[i] = px[0];
        img.green.data[i] = px[1];
        img.blue.data[i] = px[2];
    }
    Ok(img)
}

pub fn write_ppm<W: Write>(writer: W, img: &RasterImage) -> Result<(), ImagingError> {
    PnmEncoder::new(writer)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(
            &img.interleaved(),
            img.width() as u32,
            img.height() as u32,
            ExtendedColorType::Rgb8,
        )?;
    Ok(())
}

pub fn write_pgm<W: Write>(writer: W, plane: &GrayPlane) -> Result<(), ImagingError> {
    PnmEncoder::new(writer)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &plane.data,
            plane.width as u32,
            plane.height as u32,
            ExtendedColorType::L8,
        )?;
    Ok(())
}
