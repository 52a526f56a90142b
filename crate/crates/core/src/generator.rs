//! Assembly of the exclusion and stirring generators as sparse operators
//! on an enumerated state space.

use rayon::prelude::*;

use crate::lattice::{Kernel, Point, StateSpace};
use crate::{Error, Result};

/// Sparse Markov generator in compressed row layout.
///
/// Every row sums to zero, off-diagonal entries are nonnegative and the
/// diagonal nonpositive. Generators built here are symmetric matrices
/// (reversibility with respect to the counting measure).
#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    row_offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    symmetric: bool,
    max_diag: f64,
}

impl SparseOperator {
    pub fn from_rows(dim: usize, rows: Vec<Vec<(u32, f64)>>, symmetric: bool) -> Self {
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut row_offsets = Vec::with_capacity(dim + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_offsets.push(0);
        let mut max_diag = 0.0f64;
        for (i, row) in rows.into_iter().enumerate() {
            for (c, v) in row {
                if c as usize == i {
                    max_diag = max_diag.max(v.abs());
                }
                cols.push(c);
                vals.push(v);
            }
            row_offsets.push(cols.len());
        }
        SparseOperator { dim, row_offsets, cols, vals, symmetric, max_diag }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Largest diagonal magnitude; the uniformization rate `Lambda`.
    pub fn max_diag(&self) -> f64 {
        self.max_diag
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    /// `y = L x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let apply_row = |i: usize| -> f64 {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            acc
        };
        if self.dim >= 4096 {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = apply_row(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = apply_row(i);
            }
        }
    }

    /// `Y = P X` on a 4-column block, where `P = I + L/lambda`.
    pub fn apply_p_block(&self, lambda: f64, x: &[[f64; 4]], y: &mut [[f64; 4]]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let inv = 1.0 / lambda;
        let apply_row = |i: usize, yi: &mut [f64; 4]| {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = [0.0f64; 4];
            for k in lo..hi {
                let v = self.vals[k];
                let xc = &x[self.cols[k] as usize];
                acc[0] += v * xc[0];
                acc[1] += v * xc[1];
                acc[2] += v * xc[2];
                acc[3] += v * xc[3];
            }
            let xi = &x[i];
            yi[0] = xi[0] + inv * acc[0];
            yi[1] = xi[1] + inv * acc[1];
            yi[2] = xi[2] + inv * acc[2];
            yi[3] = xi[3] + inv * acc[3];
        };
        if self.dim >= 2048 {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| apply_row(i, yi));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                apply_row(i, yi);
            }
        }
    }

    /// `y = P x` with `P = I + L/lambda`.
    pub fn apply_p(&self, lambda: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let inv = 1.0 / lambda;
        let apply_row = |i: usize| -> f64 {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            x[i] + inv * acc
        };
        if self.dim >= 4096 {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = apply_row(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = apply_row(i);
            }
        }
    }

    /// Verifies row sums, sign structure and symmetry; used by tests.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for i in 0..self.dim {
            let mut sum = 0.0;
            for (c, v) in self.row(i) {
                sum += v;
                if c as usize == i {
                    if v > tol {
                        return Err(Error::Numerical(format!("positive diagonal at row {i}")));
                    }
                } else if v < -tol {
                    return Err(Error::Numerical(format!("negative off-diagonal at row {i}")));
                }
            }
            if sum.abs() > tol {
                return Err(Error::Numerical(format!("row {i} sums to {sum}")));
            }
        }
        if self.symmetric {
            for i in 0..self.dim {
                for (c, v) in self.row(i) {
                    let j = c as usize;
                    if j == i {
                        continue;
                    }
                    let back = self.row(j).find(|(cc, _)| *cc as usize == i);
                    match back {
                        Some((_, w)) if (w - v).abs() <= tol => {}
                        _ => {
                            return Err(Error::Numerical(format!(
                                "asymmetric entry ({i},{j})"
                            )))
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes the operator in coordinate format, one `row col value` per line.
    pub fn write_coordinate_text<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.dim {
            for (c, v) in self.row(i) {
                writeln!(w, "{} {} {}", i, c, v)?;
            }
        }
        Ok(())
    }
}

/// Transitions out of one configuration under bond exchanges.
///
/// Bonds `{x, x+z}` are enumerated once (z over the half support); for
/// unlabeled spaces a bond internal to the set maps it to itself and is
/// skipped, for labeled spaces it swaps two labels.
fn state_row(space: &StateSpace, kernel: &Kernel, id: usize) -> Vec<(u32, f64)> {
    let config = space.unrank(id);
    let boxed = space.lattice_box();
    let half = kernel.half_support();
    let mut entries: Vec<(u32, f64)> = Vec::new();
    let mut total = 0.0f64;
    let occupied = |site: u32, config: &[u32]| config.iter().position(|&s| s == site);
    let mut scratch: Vec<u32> = Vec::with_capacity(config.len());
    for (i, &site) in config.iter().enumerate() {
        for (z, w) in &half {
            let target = match boxed {
                Some(b) => b.displace(site as usize, z).map(|t| t as u32),
                None => {
                    // explicit site lists: displace through point arithmetic
                    let p = space.site_point(site);
                    let q: Point = p.iter().zip(z).map(|(a, b)| a + b).collect();
                    space.site_of_point(&q)
                }
            };
            let Some(target) = target else { continue };
            match occupied(target, &config) {
                Some(j) => {
                    if space.is_labeled() {
                        // label swap, enumerated once from this end only
                        scratch.clear();
                        scratch.extend_from_slice(&config);
                        scratch.swap(i, j);
                        entries.push((space.rank(&scratch) as u32, *w));
                        total += w;
                    }
                    // unlabeled: A_{x,y} = A, no contribution
                }
                None => {
                    scratch.clear();
                    scratch.extend_from_slice(&config);
                    scratch[i] = target;
                    if !space.is_labeled() {
                        scratch.sort_unstable();
                    }
                    entries.push((space.rank(&scratch) as u32, *w));
                    total += w;
                }
            }
        }
        // jumps in the -z direction onto vacant sites (bonds whose other end
        // is occupied were already handled from that end)
        for (z, w) in &half {
            let neg: Point = z.iter().map(|c| -c).collect();
            let target = match boxed {
                Some(b) => b.displace(site as usize, &neg).map(|t| t as u32),
                None => {
                    let p = space.site_point(site);
                    let q: Point = p.iter().zip(&neg).map(|(a, b)| a + b).collect();
                    space.site_of_point(&q)
                }
            };
            let Some(target) = target else { continue };
            if occupied(target, &config).is_none() {
                scratch.clear();
                scratch.extend_from_slice(&config);
                scratch[i] = target;
                if !space.is_labeled() {
                    scratch.sort_unstable();
                }
                entries.push((space.rank(&scratch) as u32, *w));
                total += w;
            }
        }
    }
    entries.push((id as u32, -total));
    entries.sort_by_key(|(c, _)| *c);
    // merge duplicates (two neighbors of the set can coincide on small tori)
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
    for (c, v) in entries {
        match merged.last_mut() {
            Some((lc, lv)) if *lc == c => *lv += v,
            _ => merged.push((c, v)),
        }
    }
    merged
}

fn build_generator(space: &StateSpace, kernel: &Kernel) -> SparseOperator {
    let rows: Vec<Vec<(u32, f64)>> = (0..space.size())
        .into_par_iter()
        .map(|id| state_row(space, kernel, id))
        .collect();
    SparseOperator::from_rows(space.size(), rows, true)
}

/// Generator of the unlabeled exclusion process on `space`.
pub fn build_unlabeled_generator(space: &StateSpace, kernel: &Kernel) -> Result<SparseOperator> {
    if space.is_labeled() {
        return Err(Error::InvalidInput("expected an unlabeled space".into()));
    }
    Ok(build_generator(space, kernel))
}

/// Generator of the labeled stirring process on `space`.
pub fn build_labeled_generator(space: &StateSpace, kernel: &Kernel) -> Result<SparseOperator> {
    if !space.is_labeled() {
        return Err(Error::InvalidInput("expected a labeled space".into()));
    }
    Ok(build_generator(space, kernel))
}

/// Projects a probability vector on the labeled space down to the unlabeled
/// space by summing over the `n!` labelings of each set.
pub fn lump_labels(
    dist: &[f64],
    labeled: &StateSpace,
    unlabeled: &StateSpace,
) -> Result<Vec<f64>> {
    if !labeled.is_labeled() || unlabeled.is_labeled() {
        return Err(Error::InvalidInput("need (labeled, unlabeled) space pair".into()));
    }
    if dist.len() != labeled.size() {
        return Err(Error::InvalidInput("distribution length mismatch".into()));
    }
    if labeled.particle_count() != unlabeled.particle_count()
        || labeled.site_count() != unlabeled.site_count()
    {
        return Err(Error::InvalidInput("spaces do not match".into()));
    }
    let mut sum = 0.0;
    for &v in dist {
        if v < -1e-12 {
            return Err(Error::InvalidInput(format!("negative probability {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("probabilities sum to {sum}")));
    }
    let mut out = vec![0.0; unlabeled.size()];
    let mut sorted: Vec<u32> = Vec::with_capacity(labeled.particle_count());
    for (id, &v) in dist.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        sorted.clear();
        sorted.extend_from_slice(&labeled.unrank(id));
        sorted.sort_unstable();
        out[unlabeled.rank(&sorted)] += v;
    }
    Ok(out)
}
