//! Batched cache of per-token model state with explicit padding.
//!
//! All rows share one width. A step appends each row's new states starting at
//! the current width and pads the shorter rows, so rows that accept fewer
//! tokens than the longest row accumulate PAD slots. [`PaddedKVCache::rearrange`]
//! squeezes those out.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("cache capacity exceeded: width {needed} > capacity {capacity}")]
    Capacity { needed: usize, capacity: usize },
    #[error("append has {got} rows but the cache has {rows}")]
    RowCount { got: usize, rows: usize },
    #[error("row {0} out of range")]
    Row(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct CacheRow<S> {
    slots: Vec<S>,
    valid: Vec<bool>,
    valid_count: usize,
}

impl<S: Clone + Default> CacheRow<S> {
    fn new() -> Self {
        Self {
            slots: Vec::new(),
            valid: Vec::new(),
            valid_count: 0,
        }
    }
}

/// Occupancy snapshot of the cache.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupancy {
    pub valid: usize,
    pub width: usize,
    pub rows: usize,
}

impl Occupancy {
    /// Valid slots over total slots; 1.0 for an empty cache.
    pub fn ratio(&self) -> f64 {
        let total = self.width * self.rows;
        if total == 0 {
            1.0
        } else {
            self.valid as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaddedKVCache<S> {
    rows: Vec<CacheRow<S>>,
    width: usize,
    capacity: usize,
}

impl<S: Clone + Default> PaddedKVCache<S> {
    pub fn new(rows: usize, capacity: usize) -> Self {
        Self {
            rows: (0..rows).map(|_| CacheRow::new()).collect(),
            width: 0,
            capacity,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn valid_count(&self, row: usize) -> usize {
        self.rows[row].valid_count
    }

    /// Validity bitmap of a row, one entry per slot.
    pub fn validity(&self, row: usize) -> &[bool] {
        &self.rows[row].valid
    }

    /// Valid states of a row in slot order.
    pub fn valid_states(&self, row: usize) -> impl Iterator<Item = &S> + '_ {
        let r = &self.rows[row];
        r.slots
            .iter()
            .zip(&r.valid)
            .filter(|(_, v)| **v)
            .map(|(s, _)| s)
    }

    pub fn occupancy(&self) -> Occupancy {
        Occupancy {
            valid: self.rows.iter().map(|r| r.valid_count).sum(),
            width: self.width,
            rows: self.rows.len(),
        }
    }

    /// True if some row has a PAD slot before one of its valid slots.
    pub fn has_internal_padding(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.valid.iter().skip_while(|v| **v).any(|v| *v))
    }

    /// Appends one batch step: `per_row[r]` is written into row `r` starting at
    /// the current width; rows with fewer new states are padded up to the new
    /// width. An all-empty step leaves the cache unchanged.
    pub fn append(&mut self, per_row: Vec<Vec<S>>) -> Result<(), CacheError> {
        if per_row.len() != self.rows.len() {
            return Err(CacheError::RowCount {
                got: per_row.len(),
                rows: self.rows.len(),
            });
        }
        let grow = per_row.iter().map(Vec::len).max().unwrap_or(0);
        let needed = self.width + grow;
        if needed > self.capacity {
            return Err(CacheError::Capacity {
                needed,
                capacity: self.capacity,
            });
        }
        for (row, states) in self.rows.iter_mut().zip(per_row) {
            debug_assert_eq!(row.slots.len(), self.width);
            let n = states.len();
            row.slots.extend(states);
            row.valid.extend(std::iter::repeat_n(true, n));
            row.valid_count += n;
            row.slots.resize(needed, S::default());
            row.valid.resize(needed, false);
        }
        self.width = needed;
        Ok(())
    }

    /// Stable compaction: each row keeps its valid states, in order, as a
    /// contiguous prefix; the width shrinks to the largest valid count.
    pub fn rearrange(&mut self) {
        let width = self.rows.iter().map(|r| r.valid_count).max().unwrap_or(0);
        for row in &mut self.rows {
            let mut slots = Vec::with_capacity(width);
            for (s, v) in row.slots.drain(..).zip(&row.valid) {
                if *v {
                    slots.push(s);
                }
            }
            let n = slots.len();
            slots.resize(width, S::default());
            row.slots = slots;
            row.valid = (0..width).map(|i| i < n).collect();
        }
        self.width = width;
    }

    /// Consuming form of [`rearrange`](Self::rearrange).
    pub fn rearranged(mut self) -> Self {
        self.rearrange();
        self
    }

    /// Drops a row's valid states beyond the first `keep`, turning them into
    /// PAD slots. Width is unchanged.
    pub fn truncate_row(&mut self, row: usize, keep: usize) -> Result<(), CacheError> {
        let r = self.rows.get_mut(row).ok_or(CacheError::Row(row))?;
        let mut seen = 0;
        for (s, v) in r.slots.iter_mut().zip(r.valid.iter_mut()) {
            if *v {
                seen += 1;
                if seen > keep {
                    *v = false;
                    *s = S::default();
                }
            }
        }
        r.valid_count = r.valid_count.min(keep);
        Ok(())
    }
}
