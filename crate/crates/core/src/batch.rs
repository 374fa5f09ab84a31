use crate::error::{Error, Result};
use crate::vocab::{TokenId, PAD};

/// Right-padded B×T grid of token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    rows: usize,
    cols: usize,
    data: Vec<TokenId>,
    lengths: Vec<usize>,
}

impl TokenBatch {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn get(&self, row: usize, col: usize) -> TokenId {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[TokenId] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// The unpadded prefix of a row.
    pub fn sequence(&self, row: usize) -> &[TokenId] {
        &self.row(row)[..self.lengths[row]]
    }
}

pub fn pad_batch<S: AsRef<[TokenId]>>(sequences: &[S]) -> Result<TokenBatch> {
    if sequences.is_empty() {
        return Err(Error::invalid("cannot pad an empty list of sequences"));
    }
    if let Some(i) = sequences.iter().position(|s| s.as_ref().is_empty()) {
        return Err(Error::invalid(format!("sequence {i} is empty")));
    }
    let rows = sequences.len();
    let cols = sequences.iter().map(|s| s.as_ref().len()).max().unwrap();
    let mut data = vec![PAD; rows * cols];
    let mut lengths = Vec::with_capacity(rows);
    for (i, s) in sequences.iter().enumerate() {
        let s = s.as_ref();
        data[i * cols..i * cols + s.len()].copy_from_slice(s);
        lengths.push(s.len());
    }
    Ok(TokenBatch {
        rows,
        cols,
        data,
        lengths,
    })
}
