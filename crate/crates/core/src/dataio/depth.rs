//! Depth maps (16-bit millimetre PNG, 0 = invalid), object masks and gray frames.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};

/// Depth image in integer millimetres; 0 marks an invalid pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    millimeters: Vec<u16>,
}

impl DepthMap {
    pub fn from_millimeters(width: u32, height: u32, millimeters: Vec<u16>) -> Result<Self> {
        if millimeters.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidInput(format!(
                "depth buffer has {} pixels, expected {width}x{height}",
                millimeters.len()
            )));
        }
        Ok(DepthMap {
            width,
            height,
            millimeters,
        })
    }

    pub fn millimeters(&self) -> &[u16] {
        &self.millimeters
    }

    /// Depth in meters at integer pixel `(u, v)`, `None` when invalid or out of bounds.
    pub fn meters(&self, u: u32, v: u32) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        match self.millimeters[(v * self.width + u) as usize] {
            0 => None,
            mm => Some(mm as f64 / 1000.0),
        }
    }

    /// Bilinear interpolation between the four surrounding pixels. `None` when any of
    /// them is invalid or their depths spread more than `max_spread` meters, as across
    /// an occlusion boundary.
    pub fn bilinear(&self, u: f64, v: f64, max_spread: f64) -> Option<f64> {
        if !(u.is_finite() && v.is_finite()) || u < 0.0 || v < 0.0 {
            return None;
        }
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = (u - u0, v - v0);
        let (iu, iv) = (u0 as u32, v0 as u32);
        // on the last row or column the far neighbors carry zero weight
        let at = |du: u32, dv: u32, w: f64| -> Option<f64> {
            if w == 0.0 {
                return Some(f64::NAN);
            }
            self.meters(iu.checked_add(du)?, iv.checked_add(dv)?)
        };
        let w = [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv];
        let d = [at(0, 0, w[0])?, at(1, 0, w[1])?, at(0, 1, w[2])?, at(1, 1, w[3])?];
        let used = d.iter().filter(|x| !x.is_nan());
        let lo = used.clone().fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = used.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if hi - lo > max_spread {
            return None;
        }
        Some(d.iter().zip(&w).filter(|(x, _)| !x.is_nan()).map(|(x, w)| x * w).sum())
    }

    /// Nearest-pixel lookup at sub-pixel coordinates.
    pub fn nearest(&self, u: f64, v: f64) -> Option<f64> {
        let (iu, iv) = nearest_pixel(u, v)?;
        self.meters(iu, iv)
    }
}

/// Binary object mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    inside: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidInput(format!(
                "mask buffer has {} pixels, expected {width}x{height}",
                inside.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            inside,
        })
    }

    pub fn full(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            inside: vec![true; (width as usize) * (height as usize)],
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        match nearest_pixel(u, v) {
            Some((iu, iv)) if iu < self.width && iv < self.height => {
                self.inside[(iv * self.width + iu) as usize]
            }
            _ => false,
        }
    }
}

fn nearest_pixel(u: f64, v: f64) -> Option<(u32, u32)> {
    if !(u.is_finite() && v.is_finite()) {
        return None;
    }
    let (ru, rv) = (u.round(), v.round());
    if ru < 0.0 || rv < 0.0 || ru > u32::MAX as f64 || rv > u32::MAX as f64 {
        return None;
    }
    Some((ru as u32, rv as u32))
}

fn decode(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::IDENTITY);
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = decoder.read_info().map_err(|e| format(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| format(e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

fn encode(path: &Path, width: u32, height: u32, depth: BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(ColorType::Grayscale);
    encoder.set_depth(depth);
    encoder.set_compression(png::Compression::Fast);
    let format = |e: png::EncodingError| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(format)?;
    writer.write_image_data(data).map_err(format)?;
    writer.finish().map_err(format)
}

/// Reads a single-channel 16-bit PNG holding millimetres.
pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let (info, buf) = decode(path)?;
    if info.color_type != ColorType::Grayscale || info.bit_depth != BitDepth::Sixteen {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "expected 16-bit single-channel depth, got {:?} {:?}",
                info.color_type, info.bit_depth
            ),
        });
    }
    let mm = buf
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    DepthMap::from_millimeters(info.width, info.height, mm)
}

pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let data: Vec<u8> = depth
        .millimeters
        .iter()
        .flat_map(|mm| mm.to_be_bytes())
        .collect();
    encode(path, depth.width, depth.height, BitDepth::Sixteen, &data)
}

/// Reads an 8-bit single-channel mask; any non-zero pixel is inside.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let (info, buf) = decode(path)?;
    if info.color_type != ColorType::Grayscale || info.bit_depth != BitDepth::Eight {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "expected 8-bit single-channel mask, got {:?} {:?}",
                info.color_type, info.bit_depth
            ),
        });
    }
    Mask::new(info.width, info.height, buf.iter().map(|&b| b != 0).collect())
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let data: Vec<u8> = mask.inside.iter().map(|&m| if m { 255 } else { 0 }).collect();
    encode(path, mask.width, mask.height, BitDepth::Eight, &data)
}

pub fn write_gray_png(path: &Path, width: u32, height: u32, gray: &[u8]) -> Result<()> {
    if gray.len() != (width as usize) * (height as usize) {
        return Err(Error::InvalidInput("gray buffer size mismatch".into()));
    }
    encode(path, width, height, BitDepth::Eight, gray)
}
