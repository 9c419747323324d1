//! Review x hypothesis entailment grid and its on-disk form: one JSON header
//! line followed by little-endian `f32` cells in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::NliError;

#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentMatrix {
    review_ids: Vec<String>,
    hypothesis_ids: Vec<u32>,
    backend: String,
    set_hash: String,
    scores: Vec<f32>,
}

impl EntailmentMatrix {
    pub fn new(
        review_ids: Vec<String>,
        hypothesis_ids: Vec<u32>,
        backend: String,
        set_hash: String,
        scores: Vec<f32>,
    ) -> Result<Self, NliError> {
        if scores.len() != review_ids.len() * hypothesis_ids.len() {
            return Err(NliError::Dimension(format!(
                "{} cells for {} reviews x {} hypotheses",
                scores.len(),
                review_ids.len(),
                hypothesis_ids.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(NliError::InvalidScore(format!("cell value {bad} outside [0, 1]")));
        }
        Ok(EntailmentMatrix {
            review_ids,
            hypothesis_ids,
            backend,
            set_hash,
            scores,
        })
    }

    pub fn review_ids(&self) -> &[String] {
        &self.review_ids
    }

    pub fn hypothesis_ids(&self) -> &[u32] {
        &self.hypothesis_ids
    }

    pub fn backend(&self) -> &str {
        &self.backend
    }

    pub fn set_hash(&self) -> &str {
        &self.set_hash
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn n_reviews(&self) -> usize {
        self.review_ids.len()
    }

    pub fn n_hypotheses(&self) -> usize {
        self.hypothesis_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.n_hypotheses();
        &self.scores[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.review_ids
            .iter()
            .enumerate()
            .map(move |(i, id)| (id.as_str(), self.row(i)))
    }

    pub fn header(&self) -> MatrixHeader {
        MatrixHeader {
            reviews: self.review_ids.clone(),
            hypotheses: self.hypothesis_ids.clone(),
            backend: self.backend.clone(),
            set_hash: self.set_hash.clone(),
        }
    }

    pub fn write_file(&self, path: &Path) -> Result<(), NliError> {
        let mut w = MatrixWriter::create(path, self.header())?;
        for i in 0..self.n_reviews() {
            w.write_row(self.row(i))?;
        }
        w.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub reviews: Vec<String>,
    pub hypotheses: Vec<u32>,
    pub backend: String,
    pub set_hash: String,
}

/// Streams rows to a matrix file without holding the grid in memory.
pub struct MatrixWriter {
    path: PathBuf,
    out: BufWriter<File>,
    width: usize,
    rows_expected: usize,
    rows_written: usize,
}

impl MatrixWriter {
    pub fn create(path: &Path, header: MatrixHeader) -> Result<Self, NliError> {
        let mut out = BufWriter::new(File::create(path).map_err(NliError::io(path))?);
        let mut line = serde_json::to_vec(&header).expect("header serializes");
        line.push(b'\n');
        out.write_all(&line).map_err(NliError::io(path))?;
        Ok(MatrixWriter {
            path: path.to_path_buf(),
            out,
            width: header.hypotheses.len(),
            rows_expected: header.reviews.len(),
            rows_written: 0,
        })
    }

    pub fn write_row(&mut self, row: &[f32]) -> Result<(), NliError> {
        if row.len() != self.width || self.rows_written == self.rows_expected {
            return Err(NliError::Dimension(format!(
                "row {} of width {} (expected {} rows of width {})",
                self.rows_written,
                row.len(),
                self.rows_expected,
                self.width
            )));
        }
        for v in row {
            self.out
                .write_all(&v.to_le_bytes())
                .map_err(NliError::io(&self.path))?;
        }
        self.rows_written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), NliError> {
        if self.rows_written != self.rows_expected {
            return Err(NliError::Dimension(format!(
                "wrote {} of {} rows",
                self.rows_written, self.rows_expected
            )));
        }
        self.out.flush().map_err(NliError::io(&self.path))
    }
}

/// Reads a matrix file row by row.
pub struct MatrixReader {
    path: PathBuf,
    header: MatrixHeader,
    input: BufReader<File>,
    next_row: usize,
}

impl MatrixReader {
    pub fn open(path: &Path) -> Result<Self, NliError> {
        let mut input = BufReader::new(File::open(path).map_err(NliError::io(path))?);
        let mut line = Vec::new();
        input.read_until(b'\n', &mut line).map_err(NliError::io(path))?;
        let header: MatrixHeader = serde_json::from_slice(&line).map_err(|e| NliError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("bad header: {e}"),
        })?;
        Ok(MatrixReader {
            path: path.to_path_buf(),
            header,
            input,
            next_row: 0,
        })
    }

    pub fn header(&self) -> &MatrixHeader {
        &self.header
    }

    /// Next `(review id, row)`, or `None` after the last row.
    pub fn next_row(&mut self) -> Result<Option<(String, Vec<f32>)>, NliError> {
        if self.next_row == self.header.reviews.len() {
            return Ok(None);
        }
        let width = self.header.hypotheses.len();
        let mut buf = vec![0u8; width * 4];
        self.input.read_exact(&mut buf).map_err(|e| NliError::Corrupt {
            path: self.path.clone(),
            reason: format!("row {}: {e}", self.next_row),
        })?;
        let row: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(bad) = row.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(NliError::Corrupt {
                path: self.path.clone(),
                reason: format!("row {}: value {bad} outside [0, 1]", self.next_row),
            });
        }
        let id = self.header.reviews[self.next_row].clone();
        self.next_row += 1;
        Ok(Some((id, row)))
    }
}

pub fn read_matrix_file(path: &Path) -> Result<EntailmentMatrix, NliError> {
    let mut r = MatrixReader::open(path)?;
    let header = r.header().clone();
    let mut scores = Vec::with_capacity(header.reviews.len() * header.hypotheses.len());
    while let Some((_, row)) = r.next_row()? {
        scores.extend(row);
    }
    let mut rest = Vec::new();
    r.input.read_to_end(&mut rest).map_err(NliError::io(path))?;
    if !rest.is_empty() {
        return Err(NliError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes", rest.len()),
        });
    }
    EntailmentMatrix::new(header.reviews, header.hypotheses, header.backend, header.set_hash, scores)
}
