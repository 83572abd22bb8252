//! Label and binary grids.

use crate::error::{Error, Result};

/// Tissue class labels: 0 = background, then ascending mean intensity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMask {
    dims: Vec<usize>,
    labels: Vec<u8>,
}

impl SegMask {
    pub fn new(dims: &[usize], labels: Vec<u8>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != labels.len() {
            return Err(Error::Dimension(format!(
                "dims {:?} imply {} labels, got {}",
                dims,
                expect,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 3) {
            return Err(Error::Invalid(format!("label {bad} outside 0..=3")));
        }
        Ok(SegMask {
            dims: dims.to_vec(),
            labels,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        SegMask {
            dims: dims.to_vec(),
            labels: vec![0; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Binary mask over a slice or volume.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinMask {
    dims: Vec<usize>,
    data: Vec<u8>,
}

impl BinMask {
    pub fn new(dims: &[usize], data: Vec<u8>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != data.len() {
            return Err(Error::Dimension(format!(
                "dims {:?} imply {} values, got {}",
                dims,
                expect,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Invalid("binary mask values must be 0 or 1".into()));
        }
        Ok(BinMask {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        BinMask {
            dims: dims.to_vec(),
            data: vec![0; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn get(&self, coords: &[usize]) -> u8 {
        let mut idx = 0;
        for (c, d) in coords.iter().zip(&self.dims) {
            idx = idx * d + c;
        }
        self.data[idx]
    }

    pub fn set(&mut self, coords: &[usize], value: u8) {
        let mut idx = 0;
        for (c, d) in coords.iter().zip(&self.dims) {
            idx = idx * d + c;
        }
        self.data[idx] = value;
    }
}
