//! RGB frame sequences and their on-disk forms.
//!
//! `raw-rgb24` is planar and frame-major: for each frame the R plane, then G,
//! then B, one byte per sample, no header. `png-dir` is a directory of 8-bit
//! RGB images ordered by the number embedded in each file name.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::tensor::Tensor;

/// `T` frames of `3 x H x W` samples in `[0, 1]`, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFrames {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl VideoFrames {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::Data(format!("video dimensions must be positive, got {frames}x{height}x{width}")));
        }
        if data.len() != frames * 3 * height * width {
            return Err(Error::Data(format!(
                "{frames}x3x{height}x{width} video needs {} samples, got {}",
                frames * 3 * height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("sample {v} outside [0, 1]")));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    /// Stacks `(1, 3, H, W)` or `(3, H, W)` frames.
    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Data("no frames".into()))?;
        let s = first.shape();
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        let mut data = Vec::with_capacity(frames.len() * 3 * h * w);
        for f in frames {
            if f.numel() != 3 * h * w || f.shape()[f.ndim() - 2..] != [h, w] {
                return Err(Error::Data(format!("frame shape {:?} differs from {:?}", f.shape(), s)));
            }
            data.extend_from_slice(f.data());
        }
        Self::new(frames.len(), h, w, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame_len(&self) -> usize {
        3 * self.height * self.width
    }

    /// Frame `i` as a `(1, 3, H, W)` tensor.
    pub fn frame(&self, i: usize) -> Tensor {
        let n = self.frame_len();
        Tensor::new(&[1, 3, self.height, self.width], self.data[i * n..][..n].to_vec()).expect("frame shape")
    }

    /// Whole clip as a `(T, 3, H, W)` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.frames, 3, self.height, self.width], self.data.clone()).expect("video shape")
    }

    /// 8-bit samples, `round(255·v)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn from_bytes(frames: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let expect = frames * 3 * height * width;
        if bytes.len() != expect {
            return Err(Error::Data(format!(
                "raw video of {frames}x{height}x{width} needs {expect} bytes, got {}",
                bytes.len()
            )));
        }
        Self::new(frames, height, width, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    PngDir,
    RawRgb24,
}

impl fmt::Display for FrameFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameFormat::PngDir => "png-dir",
            FrameFormat::RawRgb24 => "raw-rgb24",
        })
    }
}

impl FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "png-dir" => Ok(FrameFormat::PngDir),
            "raw-rgb24" => Ok(FrameFormat::RawRgb24),
            other => Err(Error::Config(format!("unknown frame format '{other}' (expected png-dir|raw-rgb24)"))),
        }
    }
}

/// Geometry that a raw stream cannot carry itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawGeometry {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

pub fn read_frames(path: &Path, format: FrameFormat, raw: Option<RawGeometry>) -> Result<VideoFrames> {
    match format {
        FrameFormat::RawRgb24 => {
            let g = raw.ok_or_else(|| Error::Config("raw-rgb24 input needs frames, height and width".into()))?;
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            VideoFrames::from_bytes(g.frames, g.height, g.width, &bytes)
        }
        FrameFormat::PngDir => read_png_dir(path),
    }
}

pub fn write_frames(video: &VideoFrames, path: &Path, format: FrameFormat) -> Result<()> {
    match format {
        FrameFormat::RawRgb24 => write_atomic(path, &video.to_bytes()),
        FrameFormat::PngDir => write_png_dir(video, path),
    }
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn png_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            paths.push(p);
        }
    }
    paths.sort_by(|a, b| (frame_number(a), a).cmp(&(frame_number(b), b)));
    Ok(paths)
}

fn read_png_dir(dir: &Path) -> Result<VideoFrames> {
    let paths = png_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::Data(format!("no .png frames in {}", dir.display())));
    }
    let mut size = None;
    let mut bytes = Vec::new();
    for p in &paths {
        let img = image::open(p)
            .map_err(|e| Error::Data(format!("{}: {e}", p.display())))?
            .to_rgb8();
        let dims = img.dimensions();
        match size {
            None => size = Some(dims),
            Some(s) if s != dims => {
                return Err(Error::Data(format!(
                    "{} is {}x{}, earlier frames are {}x{}",
                    p.display(),
                    dims.0,
                    dims.1,
                    s.0,
                    s.1
                )))
            }
            _ => {}
        }
        let (w, h) = (dims.0 as usize, dims.1 as usize);
        let raw = img.into_raw();
        for c in 0..3 {
            bytes.extend((0..h * w).map(|i| raw[i * 3 + c]));
        }
    }
    let (w, h) = size.expect("at least one frame");
    VideoFrames::from_bytes(paths.len(), h as usize, w as usize, &bytes)
}

fn write_png_dir(video: &VideoFrames, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = video.to_bytes();
    let (h, w) = (video.height, video.width);
    let plane = h * w;
    for t in 0..video.frames {
        let frame = &bytes[t * 3 * plane..][..3 * plane];
        let mut interleaved = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            interleaved.extend([frame[i], frame[plane + i], frame[2 * plane + i]]);
        }
        let mut png = Vec::new();
        image::write_buffer_with_format(
            &mut std::io::Cursor::new(&mut png),
            &interleaved,
            w as u32,
            h as u32,
            image::ColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Data(format!("png encode: {e}")))?;
        write_atomic(&dir.join(format!("frame_{t:05}.png")), &png)?;
    }
    Ok(())
}

/// Synthetic test clip: a diagonal colour gradient that drifts a little each
/// frame, with a soft bright disc moving across it.
pub fn synthetic_clip(frames: usize, height: usize, width: usize) -> VideoFrames {
    let mut data = Vec::with_capacity(frames * 3 * height * width);
    for t in 0..frames {
        let phase = t as f64 / frames.max(1) as f64;
        let (cx, cy) = (0.25 + 0.5 * phase, 0.5);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    let u = x as f64 / width as f64;
                    let v = y as f64 / height as f64;
                    let base = match c {
                        0 => 0.5 + 0.3 * (std::f64::consts::PI * (u + 0.5 * v + phase)).sin(),
                        1 => 0.3 + 0.4 * v,
                        _ => 0.25 + 0.5 * (1.0 - u) * (1.0 - 0.5 * v),
                    };
                    let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                    let disc = 0.2 * (-d2 / 0.01).exp();
                    data.push((base + disc).clamp(0.0, 1.0));
                }
            }
        }
    }
    VideoFrames::new(frames, height, width, data).expect("synthetic clip is in range")
}
