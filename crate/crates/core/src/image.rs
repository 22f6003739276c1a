//! Planar 64-bit image raster, PNG input/output and `.npy` raw dumps.
//!
//! Pixel data is stored plane by plane: sample `(c, y, x)` lives at
//! `c * height * width + y * width + x`. Values loaded from disk lie in
//! `[0, 1]`; band images produced by the decomposition may be signed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from planar data.
    ///
    /// Fails when the channel count is not 1 or 3, the buffer length does
    /// not match the shape, or any sample is NaN/infinite.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "buffer of {} samples for a {}x{}x{} image",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(channel, row, column)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Wraps a buffer produced by internal arithmetic whose shape is already
    /// known to be consistent.
    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of pixels in one plane.
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Applies `f` to every sample.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image::from_parts(
            self.width,
            self.height,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub(crate) fn zip_with(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Image::from_parts(self.width, self.height, self.channels, data)
    }

    pub fn scale(&self, k: f64) -> Image {
        self.map(|v| v * k)
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation over all samples.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let var = self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64;
        var.sqrt()
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Crops a centered `size`x`size` window; images already no larger than
    /// `size` along an axis are left untouched on that axis.
    pub fn center_crop(&self, size: usize) -> Image {
        let w = self.width.min(size);
        let h = self.height.min(size);
        let x0 = (self.width - w) / 2;
        let y0 = (self.height - h) / 2;
        let mut data = Vec::with_capacity(w * h * self.channels);
        for c in 0..self.channels {
            for y in y0..y0 + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        Image::from_parts(w, h, self.channels, data)
    }
}

fn check_shape(width: usize, height: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!("empty image {width}x{height}")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::Parameter(format!(
            "channel count must be 1 or 3, got {channels}"
        )));
    }
    Ok(())
}

/// Elementwise sum; no clamping.
pub fn image_add(a: &Image, b: &Image) -> Result<Image> {
    a.ensure_same_shape(b, "image_add")?;
    Ok(a.zip_with(b, |x, y| x + y))
}

/// Elementwise difference `a - b`; no clamping.
pub fn image_sub(a: &Image, b: &Image) -> Result<Image> {
    a.ensure_same_shape(b, "image_sub")?;
    Ok(a.zip_with(b, |x, y| x - y))
}

/// Details of a decoded PNG that callers may want to surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadInfo {
    pub bit_depth: u8,
    pub alpha_dropped: bool,
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    load_image_with_info(path).map(|(img, _)| img)
}

/// Reads an 8- or 16-bit grayscale/RGB PNG, dropping any alpha channel and
/// scaling samples by `1 / (2^depth - 1)`.
pub fn load_image_with_info(path: impl AsRef<Path>) -> Result<(Image, LoadInfo)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| decode_error(path, e))?;
    let (color, depth) = reader.output_color_type();
    let (src_channels, alpha) = match color {
        png::ColorType::Grayscale => (1, false),
        png::ColorType::GrayscaleAlpha => (2, true),
        png::ColorType::Rgb => (3, false),
        png::ColorType::Rgba => (4, true),
        png::ColorType::Indexed => {
            return Err(Error::Format(format!(
                "{}: indexed color is not supported",
                path.display()
            )))
        }
    };
    let bytes_per_sample = match depth {
        png::BitDepth::Eight => 1,
        png::BitDepth::Sixteen => 2,
        other => {
            return Err(Error::Format(format!(
                "{}: bit depth {:?} is not supported",
                path.display(),
                other
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| decode_error(path, e))?;
    let width = frame.width as usize;
    let height = frame.height as usize;
    let stride = frame.line_size;
    let channels = if src_channels >= 3 { 3 } else { 1 };
    let full_scale = if bytes_per_sample == 1 { 255.0 } else { 65535.0 };

    let plane = width * height;
    let mut data = vec![0.0; plane * channels];
    for y in 0..height {
        let row = &buf[y * stride..y * stride + width * src_channels * bytes_per_sample];
        for x in 0..width {
            for c in 0..channels {
                let s = (x * src_channels + c) * bytes_per_sample;
                let raw = if bytes_per_sample == 1 {
                    row[s] as f64
                } else {
                    u16::from_be_bytes([row[s], row[s + 1]]) as f64
                };
                data[c * plane + y * width + x] = raw / full_scale;
            }
        }
    }
    let info = LoadInfo {
        bit_depth: (bytes_per_sample * 8) as u8,
        alpha_dropped: alpha,
    };
    Ok((Image::new(width, height, channels, data)?, info))
}

fn decode_error(path: &Path, e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Quantizes a sample to a byte: clamp to `[0, 1]`, scale by 255 and round
/// half away from zero.
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit grayscale or RGB PNG.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let w = BufWriter::new(file);
    let mut encoder = png::Encoder::new(w, img.width as u32, img.height as u32);
    encoder.set_color(if img.channels == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| encode_error(path, e))?;

    let plane = img.plane_len();
    let mut bytes = Vec::with_capacity(img.len());
    for p in 0..plane {
        for c in 0..img.channels {
            bytes.push(quantize_u8(img.data[c * plane + p]));
        }
    }
    writer
        .write_image_data(&bytes)
        .map_err(|e| encode_error(path, e))?;
    writer.finish().map_err(|e| encode_error(path, e))
}

fn encode_error(path: &Path, e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

const NPY_MAGIC: &[u8] = b"\x93NUMPY";

/// Writes the image losslessly as a version 1.0 `.npy` array of
/// little-endian doubles with shape `(channels, height, width)`.
pub fn save_npy(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}, {}), }}",
        img.channels, img.height, img.width
    );
    // magic(6) + version(2) + length(2) + header, padded to 64 bytes, '\n'-terminated
    let unpadded = NPY_MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + img.len() * 8);
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in &img.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&out).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `.npy` file written by [`save_npy`] (or any C-ordered `<f8`
/// array of shape `(C, H, W)` or `(H, W)`).
pub fn load_npy(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(bad("missing .npy magic"));
    }
    if bytes[6] != 1 {
        return Err(bad("only .npy version 1 is supported"));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let header = std::str::from_utf8(bytes.get(10..10 + hlen).ok_or_else(|| bad("truncated"))?)
        .map_err(|_| bad("header is not utf-8"))?;
    if !header.contains("'descr': '<f8'") || !header.contains("'fortran_order': False") {
        return Err(bad("expected C-ordered little-endian f8 data"));
    }
    let shape_start = header.find("'shape': (").ok_or_else(|| bad("no shape"))? + 10;
    let shape_end = shape_start + header[shape_start..].find(')').ok_or_else(|| bad("no shape"))?;
    let dims: Vec<usize> = header[shape_start..shape_end]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad("bad shape")))
        .collect::<Result<_>>()?;
    let (c, h, w) = match dims.as_slice() {
        [h, w] => (1, *h, *w),
        [c, h, w] => (*c, *h, *w),
        _ => return Err(bad("expected a 2-D or 3-D array")),
    };
    let body = &bytes[10 + hlen..];
    if body.len() != c * h * w * 8 {
        return Err(bad("payload length does not match shape"));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Image::new(w, h, c, data)
}
