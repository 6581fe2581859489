//! Discrete Choquet integrals of piecewise-constant functions against
//! distorted Lebesgue capacities.
//!
//! For cell values sorted in decreasing order `v(1) >= ... >= v(m)` with
//! cumulative measures `S_i`, the integral is
//! `sum_i v(i) * (gamma(S_i) - gamma(S_{i-1}))`. This is the asymmetric
//! extension: it is translative for every real shift, so negative integrands
//! need no separate treatment. Ties are broken by cell index.

use crate::capacity::Capacity;
use crate::error::{Error, Result};

/// Values of an integrand on consecutive cells of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBlock {
    values: Vec<f64>,
    cell_width: f64,
}

impl CellBlock {
    pub fn new(values: Vec<f64>, cell_width: f64) -> Result<Self> {
        if !(cell_width.is_finite() && cell_width > 0.0) {
            return Err(Error::InvalidSpec(format!("cell width must be positive, got {cell_width}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite value in cell block".into()));
        }
        Ok(CellBlock { values, cell_width })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn total_measure(&self) -> f64 {
        self.values.len() as f64 * self.cell_width
    }
}

fn descending_order(values: &[f64], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..values.len());
    // stable: equal values keep ascending cell order
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
}

pub fn choquet_integral(block: &CellBlock, cap: &Capacity) -> Result<f64> {
    if block.values.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mut order = Vec::with_capacity(block.values.len());
    descending_order(&block.values, &mut order);
    let w = block.cell_width;
    let mut prev = 0.0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let g = cap.of((rank + 1) as f64 * w);
        sum += block.values[i] * (g - prev);
        prev = g;
    }
    Ok(sum)
}

/// Choquet integral divided by the capacity of the whole block.
pub fn choquet_average(block: &CellBlock, cap: &Capacity) -> Result<f64> {
    let total = cap.of(block.total_measure());
    if total <= 0.0 {
        return Err(Error::DegenerateCapacity);
    }
    Ok(choquet_integral(block, cap)? / total)
}

/// Iterated integral: inner along the second index of `values` for every
/// fixed first index, then outer over the resulting column of row integrals.
pub fn choquet_integral_2d(values: &[Vec<f64>], cell_widths: (f64, f64), cap: &Capacity) -> Result<f64> {
    let first = values.first().ok_or(Error::EmptyDomain)?;
    if first.is_empty() {
        return Err(Error::EmptyDomain);
    }
    if values.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Shape("ragged matrix".into()));
    }
    let rows = values
        .iter()
        .map(|r| choquet_integral(&CellBlock::new(r.clone(), cell_widths.1)?, cap))
        .collect::<Result<Vec<f64>>>()?;
    choquet_integral(&CellBlock::new(rows, cell_widths.0)?, cap)
}

/// Reusable buffers for the weighted kernels.
#[derive(Debug, Default)]
pub struct Scratch {
    order: Vec<usize>,
    vals: Vec<f64>,
    rows: Vec<f64>,
}

/// Choquet integral of a piecewise-constant function whose cells have
/// individual widths (partial cells at window edges). Returns 0 for an empty
/// slice.
pub fn weighted_choquet(values: &[f64], widths: &[f64], cap: &Capacity, scratch: &mut Scratch) -> f64 {
    debug_assert_eq!(values.len(), widths.len());
    descending_order(values, &mut scratch.order);
    let mut measure = 0.0;
    let mut prev = 0.0;
    let mut sum = 0.0;
    for &i in &scratch.order {
        measure += widths[i];
        let g = cap.of(measure);
        sum += values[i] * (g - prev);
        prev = g;
    }
    sum
}

/// Lebesgue integral over the same weighted cells, summed in cell order.
pub fn weighted_lebesgue(values: &[f64], widths: &[f64]) -> f64 {
    values.iter().zip(widths).map(|(v, w)| v * w).sum()
}

/// Iterated Choquet integral over the window `rows x cols`, where each
/// window cell is `(grid index, overlap width)` and `value(i, j)` reads the
/// integrand.
pub fn iterated_window(
    value: impl Fn(usize, usize) -> f64,
    rows: &[(usize, f64)],
    cols: &[(usize, f64)],
    cap: &Capacity,
    scratch: &mut Scratch,
) -> f64 {
    let col_w: Vec<f64> = cols.iter().map(|c| c.1).collect();
    let row_w: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut row_vals = std::mem::take(&mut scratch.rows);
    let mut vals = std::mem::take(&mut scratch.vals);
    row_vals.clear();
    for &(i, _) in rows {
        vals.clear();
        vals.extend(cols.iter().map(|&(j, _)| value(i, j)));
        row_vals.push(weighted_choquet(&vals, &col_w, cap, scratch));
    }
    let out = weighted_choquet(&row_vals, &row_w, cap, scratch);
    scratch.rows = row_vals;
    scratch.vals = vals;
    out
}
