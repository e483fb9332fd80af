//! 8-bit PNG input and output for RGB views, masks and depth previews.

use std::path::Path;

use tridepth_core::synth::{dequantize_u8, quantize_u8};
use tridepth_core::Tensor;

use crate::error::{self, Error, Result};

pub fn encode(width: usize, height: usize, color: png::ColorType, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Invalid(format!("png header: {}", e)))?;
        writer
            .write_image_data(pixels)
            .map_err(|e| Error::Invalid(format!("png data: {}", e)))?;
    }
    Ok(out)
}

/// `[1, 3, H, W]` tensor in `[0, 1]` to interleaved 8-bit RGB.
pub fn rgb_bytes(image: &Tensor<f32>) -> Result<(usize, usize, Vec<u8>)> {
    let (b, c, h, w) = image.dims4()?;
    if b != 1 || c != 3 {
        return Err(Error::Invalid(format!("expected a [1,3,H,W] image, got {:?}", image.shape())));
    }
    let plane = h * w;
    let mut px = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for k in 0..3 {
            px.push(quantize_u8(image.data()[k * plane + i] as f64));
        }
    }
    Ok((w, h, px))
}

pub fn write_rgb(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let (w, h, px) = rgb_bytes(image)?;
    error::write(path, &encode(w, h, png::ColorType::Rgb, &px)?)
}

pub fn write_gray(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    error::write(path, &encode(width, height, png::ColorType::Grayscale, pixels)?)
}

/// Decoded 8-bit image with its channel count (1 to 4).
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Decoded> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "only 8-bit PNG is supported"));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::format(path, "unexpanded palette")),
    };
    buf.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        pixels: buf,
    })
}

pub fn read(path: &Path) -> Result<Decoded> {
    decode(&error::read(path)?, path)
}

/// Reads an RGB PNG as a `[1, 3, H, W]` tensor in `[0, 1]`. Alpha is
/// dropped; grayscale is replicated.
pub fn read_rgb(path: &Path) -> Result<Tensor<f32>> {
    let d = read(path)?;
    let plane = d.width * d.height;
    let mut data = vec![0.0f32; 3 * plane];
    for i in 0..plane {
        for k in 0..3 {
            let src = if d.channels < 3 { 0 } else { k };
            data[k * plane + i] = dequantize_u8(d.pixels[i * d.channels + src]);
        }
    }
    Ok(Tensor::new(&[1, 3, d.height, d.width], data)?)
}
