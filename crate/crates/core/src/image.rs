//! Floating-point RGB images and single-channel planes, with 8-bit PNG I/O.

use std::path::Path;

use image::{GrayImage, ImageReader, RgbImage};

use crate::error::{check_dim, Error, Result};

/// Row-major `height x width x 3` image with channels nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("image buffer", width * height * 3, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, c: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Pixel by flat index `y * width + x`.
    #[inline]
    pub fn at(&self, p: usize) -> [f64; 3] {
        [self.data[3 * p], self.data[3 * p + 1], self.data[3 * p + 2]]
    }

    pub fn same_size(&self, other: &Image) -> Result<()> {
        check_dim("image width", self.width, other.width)?;
        check_dim("image height", self.height, other.height)
    }

    /// Quantizes to 8 bits and back, exactly as a PNG round trip would.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(to_u8(v)) / 255.0).collect(),
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| to_u8(v)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer size matches dimensions")
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save(path.as_ref())
            .map_err(|e| Error::format(path.as_ref(), e.to_string()))?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::format(path, e.to_string()))?
            .to_rgb8();
        Ok(Self::from_rgb8(&img))
    }
}

/// Row-major `height x width` single-channel buffer (silhouettes, masks).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("plane buffer", width * height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_size(&self, img: &Image) -> Result<()> {
        check_dim("plane width", img.width(), self.width)?;
        check_dim("plane height", img.height(), self.height)
    }

    pub fn to_gray8(&self) -> GrayImage {
        let bytes = self.data.iter().map(|&v| to_u8(v)).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer size matches dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray8().save(path.as_ref())
            .map_err(|e| Error::format(path.as_ref(), e.to_string()))?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::format(path, e.to_string()))?
            .to_luma8();
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_matches_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(3, 2);
        img.set_pixel(1, 1, [0.1, 0.5, 0.99]);
        img.set_pixel(2, 0, [1.2, -0.3, 0.25]);
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        assert_eq!(back, img.quantized());
        assert_eq!(back.pixel(2, 0)[0], 1.0);
        assert_eq!(back.pixel(2, 0)[1], 0.0);
    }

    #[test]
    fn plane_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = Plane::from_vec(2, 2, vec![0.0, 1.0, 0.2, 1.0]).unwrap();
        let path = dir.path().join("s.png");
        p.save_png(&path).unwrap();
        let back = Plane::load_png(&path).unwrap();
        assert_eq!(back.data()[1], 1.0);
        assert!((back.data()[2] - 51.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Image::from_vec(2, 2, vec![0.0; 11]).is_err());
    }
}
