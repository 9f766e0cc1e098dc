//! `FPI1` float image files.
//!
//! Layout: the ASCII header `FPI1 <width> <height> <channels>\n` followed by
//! `width * height * channels` little-endian `f32` values, row-major with
//! channels interleaved.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::Grid;

#[derive(Debug, Error)]
pub enum FpiError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed FPI1 header: {0}")]
    Header(String),
    #[error("FPI1 payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("expected {expected} channel(s), file has {found}")]
    Channels { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpiImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FpiImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn from_grid(grid: &Grid<f64>) -> Self {
        Self::new(
            grid.width(),
            grid.height(),
            1,
            grid.as_slice().iter().map(|&v| v as f32).collect(),
        )
    }

    /// Interleaves several same-sized grids into one multi-channel image.
    pub fn from_channels(grids: &[&Grid<f64>]) -> Self {
        assert!(!grids.is_empty());
        let (w, h) = grids[0].dims();
        assert!(grids.iter().all(|g| g.dims() == (w, h)));
        let mut data = Vec::with_capacity(w * h * grids.len());
        for i in 0..w * h {
            for g in grids {
                data.push(g.as_slice()[i] as f32);
            }
        }
        Self::new(w, h, grids.len(), data)
    }

    pub fn channel(&self, c: usize) -> Grid<f64> {
        assert!(c < self.channels);
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| v as f64)
            .collect();
        Grid::from_vec(self.width, self.height, data)
    }

    pub fn to_grid(&self) -> Result<Grid<f64>, FpiError> {
        if self.channels != 1 {
            return Err(FpiError::Channels {
                expected: 1,
                found: self.channels,
            });
        }
        Ok(self.channel(0))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), FpiError> {
        write!(w, "FPI1 {} {} {}\n", self.width, self.height, self.channels)?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self, FpiError> {
        let mut r = BufReader::new(r);
        let mut header = Vec::new();
        r.read_until(b'\n', &mut header)?;
        let text = std::str::from_utf8(&header)
            .map_err(|_| FpiError::Header("non-ASCII header".into()))?;
        let fields: Vec<&str> = text.trim_end_matches('\n').split(' ').collect();
        if fields.len() != 4 || fields[0] != "FPI1" || !text.ends_with('\n') {
            return Err(FpiError::Header(text.trim().to_string()));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| FpiError::Header(format!("bad dimension {s:?}")))
        };
        let (width, height, channels) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        let expected = width * height * channels * 4;
        let mut payload = Vec::with_capacity(expected);
        r.read_to_end(&mut payload)?;
        if payload.len() != expected {
            return Err(FpiError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self::new(width, height, channels, data))
    }

    pub fn save(&self, path: &Path) -> Result<(), FpiError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FpiError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

pub fn save_grid(path: &Path, grid: &Grid<f64>) -> Result<(), FpiError> {
    FpiImage::from_grid(grid).save(path)
}

pub fn load_grid(path: &Path) -> Result<Grid<f64>, FpiError> {
    FpiImage::load(path)?.to_grid()
}

pub fn save_mask(path: &Path, mask: &Grid<bool>) -> Result<(), FpiError> {
    save_grid(path, &mask.map(|&m| if m { 1.0 } else { 0.0 }))
}

pub fn load_mask(path: &Path) -> Result<Grid<bool>, FpiError> {
    Ok(load_grid(path)?.map(|&v| v > 0.5))
}

/// Integer maps (fringe orders) are stored as floats, `-1` marks undecided.
pub fn save_orders(path: &Path, orders: &Grid<i32>) -> Result<(), FpiError> {
    save_grid(path, &orders.map(|&k| k as f64))
}

pub fn load_orders(path: &Path) -> Result<Grid<i32>, FpiError> {
    Ok(load_grid(path)?.map(|&v| v.round() as i32))
}
