use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::Sample;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub counts: Vec<u64>,
    /// `counts / max(counts)`; all zero when there are no samples.
    pub normalized: Vec<f64>,
}

impl Heatmap {
    fn from_counts(rows: usize, cols: usize, counts: Vec<u64>) -> Self {
        let max = counts.iter().copied().max().unwrap_or(0);
        let normalized = counts
            .iter()
            .map(|&c| if max == 0 { 0.0 } else { c as f64 / max as f64 })
            .collect();
        Heatmap {
            rows,
            cols,
            counts,
            normalized,
        }
    }

    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.cols + col]
    }

    pub fn intensity(&self, row: usize, col: usize) -> f64 {
        self.normalized[row * self.cols + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts as CSV, one line per row, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.counts.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Grid cell of a normalized position. Coordinates on the far edge (1.0)
/// clamp into the last row/column.
pub fn bin(x: f64, y: f64, rows: usize, cols: usize) -> (usize, usize) {
    let r = ((y * rows as f64).floor() as usize).min(rows - 1);
    let c = ((x * cols as f64).floor() as usize).min(cols - 1);
    (r, c)
}

fn count_into(counts: &mut [u64], samples: &[Sample], rows: usize, cols: usize) {
    for s in samples {
        let (r, c) = bin(s.x, s.y, rows, cols);
        counts[r * cols + c] += 1;
    }
}

pub fn heatmap_sequential(samples: &[Sample], rows: usize, cols: usize) -> Heatmap {
    assert!(rows >= 1 && cols >= 1, "heatmap grid must be at least 1x1");
    let mut counts = vec![0u64; rows * cols];
    count_into(&mut counts, samples, rows, cols);
    Heatmap::from_counts(rows, cols, counts)
}

#[cfg(feature = "parallel")]
pub fn heatmap_parallel(samples: &[Sample], rows: usize, cols: usize) -> Heatmap {
    assert!(rows >= 1 && cols >= 1, "heatmap grid must be at least 1x1");
    const CHUNK: usize = 4096;
    let counts = samples
        .par_chunks(CHUNK)
        .fold(
            || vec![0u64; rows * cols],
            |mut acc, chunk| {
                count_into(&mut acc, chunk, rows, cols);
                acc
            },
        )
        .reduce(
            || vec![0u64; rows * cols],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Heatmap::from_counts(rows, cols, counts)
}

pub fn heatmap(samples: &[Sample], rows: usize, cols: usize) -> Heatmap {
    #[cfg(feature = "parallel")]
    {
        heatmap_parallel(samples, rows, cols)
    }
    #[cfg(not(feature = "parallel"))]
    {
        heatmap_sequential(samples, rows, cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64, y: f64) -> Sample {
        Sample { t_ms: 0, x, y }
    }

    #[test]
    fn single_cell() {
        let samples = vec![s(0.1, 0.1); 4];
        let h = heatmap(&samples, 2, 2);
        assert_eq!(h.count(0, 0), 4);
        assert_eq!(h.intensity(0, 0), 1.0);
        assert_eq!(h.total(), 4);
        assert_eq!(h.count(1, 1), 0);
    }

    #[test]
    fn normalizes_by_max() {
        let h = heatmap(&[s(0.1, 0.1), s(0.2, 0.3), s(0.9, 0.9)], 2, 2);
        assert_eq!(h.count(0, 0), 2);
        assert_eq!(h.count(1, 1), 1);
        assert_eq!(h.intensity(0, 0), 1.0);
        assert_eq!(h.intensity(1, 1), 0.5);
    }

    #[test]
    fn far_edge_clamps() {
        let h = heatmap(&[s(1.0, 1.0)], 3, 4);
        assert_eq!(h.count(2, 3), 1);
    }

    #[test]
    fn empty_is_all_zero() {
        let h = heatmap(&[], 2, 3);
        assert!(h.counts.iter().all(|&c| c == 0));
        assert!(h.normalized.iter().all(|&v| v == 0.0));
        assert_eq!(h.to_csv(), "0,0,0\n0,0,0\n");
    }
}
