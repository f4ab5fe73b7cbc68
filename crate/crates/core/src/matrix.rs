//! Sparse D x V token matrix with row-wise and column-wise sweeps.
//!
//! Entry data lives once, in a column-major store where every column is
//! contiguous and sorted by row id. Rows are described by an index of flat
//! offsets into that store, so a row sweep mutates the same memory a column
//! sweep reads.
//!
//! Every entry holds `1 + M` topic slots: slot 0 is the assignment, slots
//! `1..=M` are the stored proposals.

use std::io::{self, Read, Write};
use std::marker::PhantomData;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::partition::{greedy_partition, Partition};

const DUMP_MAGIC: &[u8; 8] = b"WLDAMTX\x01";

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("entry ({row}, {col}) outside a {rows} x {cols} matrix")]
    OutOfRange {
        row: u32,
        col: u32,
        rows: usize,
        cols: usize,
    },
    #[error("entry carries {got} slots, matrix stores {expected}")]
    SlotCount { expected: usize, got: usize },
    #[error("matrix too large: {0} entries exceeds the 32-bit entry index")]
    TooLarge(usize),
    #[error("bad matrix dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum SweepError<E: std::error::Error + 'static> {
    #[error("user function failed on row {row}")]
    Row {
        row: u32,
        #[source]
        source: E,
    },
    #[error("user function failed on column {col}")]
    Column {
        col: u32,
        #[source]
        source: E,
    },
}

impl<E: std::error::Error + 'static> SweepError<E> {
    fn position(&self) -> u32 {
        match self {
            SweepError::Row { row, .. } => *row,
            SweepError::Column { col, .. } => *col,
        }
    }

    pub fn into_source(self) -> E {
        match self {
            SweepError::Row { source, .. } | SweepError::Column { source, .. } => source,
        }
    }
}

/// Accumulates entries before the layout is fixed.
#[derive(Clone, Debug)]
pub struct MatrixBuilder {
    rows: usize,
    cols: usize,
    stride: usize,
    coords: Vec<(u32, u32)>,
    data: Vec<u32>,
}

impl MatrixBuilder {
    /// `proposals` is M, the number of proposal slots per entry.
    pub fn new(rows: usize, cols: usize, proposals: usize) -> Self {
        Self {
            rows,
            cols,
            stride: proposals + 1,
            coords: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn reserve(&mut self, entries: usize) -> Result<(), std::collections::TryReserveError> {
        self.coords.try_reserve_exact(entries)?;
        self.data.try_reserve_exact(entries * self.stride)
    }

    /// Records one entry. `slots` is `[assignment, proposal_1, .., proposal_M]`.
    /// Several entries may share a cell.
    pub fn add_entry(&mut self, row: u32, col: u32, slots: &[u32]) -> Result<(), MatrixError> {
        if row as usize >= self.rows || col as usize >= self.cols {
            return Err(MatrixError::OutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        if slots.len() != self.stride {
            return Err(MatrixError::SlotCount {
                expected: self.stride,
                got: slots.len(),
            });
        }
        self.coords.push((row, col));
        self.data.extend_from_slice(slots);
        Ok(())
    }

    /// Records one entry with all slots zeroed.
    pub fn add_token(&mut self, row: u32, col: u32) -> Result<(), MatrixError> {
        if row as usize >= self.rows || col as usize >= self.cols {
            return Err(MatrixError::OutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        self.coords.push((row, col));
        self.data.extend(std::iter::repeat_n(0, self.stride));
        Ok(())
    }

    pub fn finalize_layout(self) -> Result<TokenTopicMatrix, MatrixError> {
        let n = self.coords.len();
        if n >= u32::MAX as usize {
            return Err(MatrixError::TooLarge(n));
        }
        let stride = self.stride;

        // Two stable counting sorts: by row, then by column. Result is
        // column-major, rows ascending, insertion order within a cell.
        let by_row = counting_order(self.rows, (0..n).map(|i| self.coords[i].0));
        let by_col = counting_order(self.cols, by_row.iter().map(|&i| self.coords[i as usize].1));
        let order: Vec<u32> = by_col.iter().map(|&j| by_row[j as usize]).collect();

        let col_ptr = prefix_offsets(self.cols, self.coords.iter().map(|c| c.1));
        let row_ptr = prefix_offsets(self.rows, self.coords.iter().map(|c| c.0));

        let mut col_rows = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * stride);
        for &i in &order {
            let i = i as usize;
            col_rows.push(self.coords[i].0);
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }

        // Row index: walking the column store in order visits each row's
        // entries in increasing column id.
        let mut fill = row_ptr.clone();
        let mut row_index = vec![0u32; n];
        let mut row_cols = vec![0u32; n];
        let mut col_token = vec![0u32; n];
        for w in 0..self.cols {
            for off in col_ptr[w]..col_ptr[w + 1] {
                let r = col_rows[off] as usize;
                let pos = fill[r];
                fill[r] += 1;
                row_index[pos] = off as u32;
                row_cols[pos] = w as u32;
                col_token[off] = pos as u32;
            }
        }

        Ok(TokenTopicMatrix {
            rows: self.rows,
            cols: self.cols,
            stride,
            col_ptr,
            col_rows,
            col_token,
            data,
            row_ptr,
            row_index,
            row_cols,
        })
    }
}

fn prefix_offsets(buckets: usize, keys: impl Iterator<Item = u32>) -> Vec<usize> {
    let mut ptr = vec![0usize; buckets + 1];
    for k in keys {
        ptr[k as usize + 1] += 1;
    }
    for i in 0..buckets {
        ptr[i + 1] += ptr[i];
    }
    ptr
}

/// Stable counting sort; returns the positions of `keys` in sorted order.
fn counting_order(buckets: usize, keys: impl Iterator<Item = u32> + Clone) -> Vec<u32> {
    let mut fill = prefix_offsets(buckets, keys.clone());
    let n = fill[buckets];
    let mut out = vec![0u32; n];
    for (i, k) in keys.enumerate() {
        out[fill[k as usize]] = i as u32;
        fill[k as usize] += 1;
    }
    out
}

/// The finalized token matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenTopicMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    col_ptr: Vec<usize>,
    /// Row id of each column-store entry.
    col_rows: Vec<u32>,
    /// Row-major position (global token id) of each column-store entry.
    col_token: Vec<u32>,
    data: Vec<u32>,
    row_ptr: Vec<usize>,
    /// Column-store offsets of each row's entries, row-major.
    row_index: Vec<u32>,
    row_cols: Vec<u32>,
}

impl TokenTopicMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry_total(&self) -> usize {
        self.col_rows.len()
    }

    pub fn proposals(&self) -> usize {
        self.stride - 1
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn col_len(&self, c: usize) -> usize {
        self.col_ptr[c + 1] - self.col_ptr[c]
    }

    pub fn row_lengths(&self) -> Vec<u64> {
        (0..self.rows).map(|r| self.row_len(r) as u64).collect()
    }

    pub fn col_lengths(&self) -> Vec<u64> {
        (0..self.cols).map(|c| self.col_len(c) as u64).collect()
    }

    fn slots_at(&self, off: usize) -> &[u32] {
        &self.data[off * self.stride..(off + 1) * self.stride]
    }

    /// `(column, slots)` of row `r`, in increasing column id.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (u32, &[u32])> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.row_cols[range.clone()]
            .iter()
            .zip(&self.row_index[range])
            .map(move |(&c, &off)| (c, self.slots_at(off as usize)))
    }

    /// `(row, slots)` of column `c`, in increasing row id.
    pub fn col_entries(&self, c: usize) -> impl Iterator<Item = (u32, &[u32])> + '_ {
        (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |off| (self.col_rows[off], self.slots_at(off)))
    }

    /// Assignments of row `r`.
    pub fn row_assignments(&self, r: usize) -> impl Iterator<Item = u32> + '_ {
        self.row_entries(r).map(|(_, s)| s[0])
    }

    /// Assignments of column `c`.
    pub fn col_assignments(&self, c: usize) -> impl Iterator<Item = u32> + '_ {
        self.col_entries(c).map(|(_, s)| s[0])
    }

    /// Slot `slot` of every entry in row-major (global token id) order.
    pub fn slot_row_major(&self, slot: usize) -> Vec<u32> {
        self.row_index
            .iter()
            .map(|&off| self.data[off as usize * self.stride + slot])
            .collect()
    }

    /// Column id of every entry in row-major order.
    pub fn cols_row_major(&self) -> &[u32] {
        &self.row_cols
    }

    /// Sequential sweep over rows `0..D`.
    pub fn visit_by_row<E, F>(&mut self, mut f: F) -> Result<(), SweepError<E>>
    where
        E: std::error::Error + 'static,
        F: FnMut(&mut RowView<'_>) -> Result<(), E>,
    {
        let base = SharedSlots(self.data.as_mut_ptr());
        for r in 0..self.rows {
            // SAFETY: `&mut self` gives exclusive access to `data`; one view
            // is alive at a time.
            let mut view = unsafe { self.row_view(r, base) };
            f(&mut view).map_err(|source| SweepError::Row { row: r as u32, source })?;
        }
        Ok(())
    }

    /// Sequential sweep over columns `0..V`.
    pub fn visit_by_column<E, F>(&mut self, mut f: F) -> Result<(), SweepError<E>>
    where
        E: std::error::Error + 'static,
        F: FnMut(&mut ColumnView<'_>) -> Result<(), E>,
    {
        let stride = self.stride;
        let mut rest = self.data.as_mut_slice();
        for c in 0..self.cols {
            let (lo, hi) = (self.col_ptr[c], self.col_ptr[c + 1]);
            let (head, tail) = rest.split_at_mut((hi - lo) * stride);
            rest = tail;
            let mut view = ColumnView {
                col: c as u32,
                rows: &self.col_rows[lo..hi],
                tokens: &self.col_token[lo..hi],
                data: head,
                stride,
            };
            f(&mut view).map_err(|source| SweepError::Column { col: c as u32, source })?;
        }
        Ok(())
    }

    /// Parallel row sweep. Each worker of `exec` walks the rows it owns in
    /// increasing id with its own state from `init`; the per-worker states
    /// are returned in worker order for the caller to reduce.
    pub fn sweep_rows<S, E, I, F>(&mut self, exec: &Executor, init: I, f: F) -> Result<Vec<S>, SweepError<E>>
    where
        S: Send,
        E: std::error::Error + Send + 'static,
        I: Fn(usize) -> S + Sync,
        F: Fn(&mut S, &mut RowView<'_>) -> Result<(), E> + Sync,
    {
        assert_eq!(
            exec.plan.row_owner.len(),
            self.rows,
            "executor built for another matrix"
        );
        let base = SharedSlots(self.data.as_mut_ptr());
        let abort = AtomicBool::new(false);
        let this = &*self;
        let run = |worker: usize, group: &[u32]| -> Result<S, SweepError<E>> {
            let mut state = init(worker);
            for &r in group {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                // SAFETY: the row index is a permutation of the column store,
                // rows are owned by exactly one worker, so no two live views
                // alias an entry; `&mut self` keeps everyone else out.
                let mut view = unsafe { this.row_view(r as usize, base) };
                if let Err(source) = f(&mut state, &mut view) {
                    abort.store(true, Ordering::Relaxed);
                    return Err(SweepError::Row { row: r, source });
                }
            }
            Ok(state)
        };
        let results = exec.run_groups(&exec.row_groups, run);
        collect_results(results)
    }

    /// Parallel column sweep; see [`sweep_rows`](Self::sweep_rows).
    pub fn sweep_columns<S, E, I, F>(&mut self, exec: &Executor, init: I, f: F) -> Result<Vec<S>, SweepError<E>>
    where
        S: Send,
        E: std::error::Error + Send + 'static,
        I: Fn(usize) -> S + Sync,
        F: Fn(&mut S, &mut ColumnView<'_>) -> Result<(), E> + Sync,
    {
        assert_eq!(
            exec.plan.column_owner.len(),
            self.cols,
            "executor built for another matrix"
        );
        let stride = self.stride;
        let mut slices: Vec<Option<&mut [u32]>> = Vec::with_capacity(self.cols);
        let col_ptr = &self.col_ptr;
        let mut rest = self.data.as_mut_slice();
        for c in 0..self.cols {
            let (head, tail) = rest.split_at_mut((col_ptr[c + 1] - col_ptr[c]) * stride);
            slices.push(Some(head));
            rest = tail;
        }
        let groups: Vec<Vec<(u32, &mut [u32])>> = exec
            .col_groups
            .iter()
            .map(|g| g.iter().map(|&c| (c, slices[c as usize].take().unwrap())).collect())
            .collect();

        let abort = AtomicBool::new(false);
        let (col_rows, col_token) = (&self.col_rows, &self.col_token);
        let run = |worker: usize, group: Vec<(u32, &mut [u32])>| -> Result<S, SweepError<E>> {
            let mut state = init(worker);
            for (c, data) in group {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let (lo, hi) = (col_ptr[c as usize], col_ptr[c as usize + 1]);
                let mut view = ColumnView {
                    col: c,
                    rows: &col_rows[lo..hi],
                    tokens: &col_token[lo..hi],
                    data,
                    stride,
                };
                if let Err(source) = f(&mut state, &mut view) {
                    abort.store(true, Ordering::Relaxed);
                    return Err(SweepError::Column { col: c, source });
                }
            }
            Ok(state)
        };
        let results: Vec<Result<S, SweepError<E>>> = match &exec.pool {
            None => groups.into_iter().enumerate().map(|(w, g)| run(w, g)).collect(),
            Some(pool) => pool.install(|| groups.into_par_iter().enumerate().map(|(w, g)| run(w, g)).collect()),
        };
        collect_results(results)
    }

    /// # Safety
    /// The caller must guarantee no other live reference touches row `r`'s
    /// entries while the view exists.
    unsafe fn row_view(&self, r: usize, base: SharedSlots) -> RowView<'_> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        RowView {
            row: r as u32,
            first_token: self.row_ptr[r] as u32,
            offsets: &self.row_index[range.clone()],
            cols: &self.row_cols[range],
            base: base.0,
            stride: self.stride,
            _marker: PhantomData,
        }
    }

    /// Writes the versioned binary dump: magic, D, V, T (u64), M (u32), then
    /// per column its length (u64) and `(row, slots..)` as u32, little-endian.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        for v in [self.rows as u64, self.cols as u64, self.entry_total() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.proposals() as u32).to_le_bytes())?;
        for c in 0..self.cols {
            w.write_all(&(self.col_len(c) as u64).to_le_bytes())?;
            for (r, slots) in self.col_entries(c) {
                w.write_all(&r.to_le_bytes())?;
                for s in slots {
                    w.write_all(&s.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self, MatrixError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(MatrixError::Format(format!("unknown magic {magic:?}")));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let total = read_u64(&mut r)? as usize;
        let proposals = read_u32(&mut r)? as usize;
        let mut b = MatrixBuilder::new(rows, cols, proposals);
        b.reserve(total)
            .map_err(|e| MatrixError::Format(format!("cannot allocate {total} entries: {e}")))?;
        let mut slots = vec![0u32; proposals + 1];
        let mut seen = 0usize;
        for c in 0..cols {
            let len = read_u64(&mut r)? as usize;
            seen += len;
            if seen > total {
                return Err(MatrixError::Format("column lengths exceed entry total".into()));
            }
            for _ in 0..len {
                let row = read_u32(&mut r)?;
                for s in slots.iter_mut() {
                    *s = read_u32(&mut r)?;
                }
                b.add_entry(row, c as u32, &slots)?;
            }
        }
        if seen != total {
            return Err(MatrixError::Format(format!(
                "header says {total} entries, found {seen}"
            )));
        }
        b.finalize_layout()
    }
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn collect_results<S, E: std::error::Error + 'static>(
    results: Vec<Result<S, SweepError<E>>>,
) -> Result<Vec<S>, SweepError<E>> {
    let mut states = Vec::with_capacity(results.len());
    let mut first: Option<SweepError<E>> = None;
    for r in results {
        match r {
            Ok(s) => states.push(s),
            Err(e) => {
                if first.as_ref().is_none_or(|f| e.position() < f.position()) {
                    first = Some(e);
                }
            }
        }
    }
    match first {
        Some(e) => Err(e),
        None => Ok(states),
    }
}

#[derive(Clone, Copy)]
struct SharedSlots(*mut u32);

// SAFETY: only dereferenced through RowView, whose construction sites
// guarantee disjoint access.
unsafe impl Send for SharedSlots {}
unsafe impl Sync for SharedSlots {}

/// Access to the entries presented to a sweep function.
pub trait EntryView {
    /// Row id for a row view, column id for a column view.
    fn id(&self) -> u32;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// The other coordinate of entry `i` (column id in a row view, row id in
    /// a column view).
    fn cross_id(&self, i: usize) -> u32;
    /// Global token id (row-major position) of entry `i`.
    fn token(&self, i: usize) -> u32;
    fn slots(&self, i: usize) -> &[u32];
    fn slots_mut(&mut self, i: usize) -> &mut [u32];

    fn assignment(&self, i: usize) -> u32 {
        self.slots(i)[0]
    }
    fn set_assignment(&mut self, i: usize, z: u32) {
        self.slots_mut(i)[0] = z;
    }
    fn proposals(&self, i: usize) -> &[u32] {
        &self.slots(i)[1..]
    }
    fn proposals_mut(&mut self, i: usize) -> &mut [u32] {
        &mut self.slots_mut(i)[1..]
    }
}

pub struct ColumnView<'a> {
    col: u32,
    rows: &'a [u32],
    tokens: &'a [u32],
    data: &'a mut [u32],
    stride: usize,
}

impl EntryView for ColumnView<'_> {
    fn id(&self) -> u32 {
        self.col
    }
    fn len(&self) -> usize {
        self.rows.len()
    }
    fn cross_id(&self, i: usize) -> u32 {
        self.rows[i]
    }
    fn token(&self, i: usize) -> u32 {
        self.tokens[i]
    }
    #[inline]
    fn slots(&self, i: usize) -> &[u32] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }
    #[inline]
    fn slots_mut(&mut self, i: usize) -> &mut [u32] {
        &mut self.data[i * self.stride..(i + 1) * self.stride]
    }
}

pub struct RowView<'a> {
    row: u32,
    first_token: u32,
    offsets: &'a [u32],
    cols: &'a [u32],
    base: *mut u32,
    stride: usize,
    _marker: PhantomData<&'a mut [u32]>,
}

impl EntryView for RowView<'_> {
    fn id(&self) -> u32 {
        self.row
    }
    fn len(&self) -> usize {
        self.offsets.len()
    }
    fn cross_id(&self, i: usize) -> u32 {
        self.cols[i]
    }
    fn token(&self, i: usize) -> u32 {
        self.first_token + i as u32
    }
    #[inline]
    fn slots(&self, i: usize) -> &[u32] {
        let off = self.offsets[i] as usize * self.stride;
        // SAFETY: offsets index the column store; this view has exclusive
        // access to them for its lifetime.
        unsafe { std::slice::from_raw_parts(self.base.add(off), self.stride) }
    }
    #[inline]
    fn slots_mut(&mut self, i: usize) -> &mut [u32] {
        let off = self.offsets[i] as usize * self.stride;
        // SAFETY: as above; `&mut self` prevents overlapping borrows.
        unsafe { std::slice::from_raw_parts_mut(self.base.add(off), self.stride) }
    }
}

/// Assignment of rows and columns to workers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionPlan {
    pub workers: usize,
    pub column_owner: Vec<u32>,
    pub row_owner: Vec<u32>,
}

impl PartitionPlan {
    /// Greedy token-balanced plan over the matrix's row and column lengths.
    pub fn greedy(m: &TokenTopicMatrix, workers: usize) -> Self {
        let workers = workers.max(1);
        let cols: Partition = greedy_partition(&m.col_lengths(), workers).expect("workers > 0");
        let rows: Partition = greedy_partition(&m.row_lengths(), workers).expect("workers > 0");
        Self {
            workers,
            column_owner: cols.owner,
            row_owner: rows.owner,
        }
    }
}

/// Thread pool plus the partition plan a sweep follows.
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
    plan: PartitionPlan,
    row_groups: Vec<Vec<u32>>,
    col_groups: Vec<Vec<u32>>,
}

impl Executor {
    pub fn new(m: &TokenTopicMatrix, threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let plan = PartitionPlan::greedy(m, threads);
        let pool = if plan.workers > 1 {
            Some(rayon::ThreadPoolBuilder::new().num_threads(plan.workers).build()?)
        } else {
            None
        };
        let group = |owner: &[u32]| {
            let mut g = vec![Vec::new(); plan.workers];
            for (i, &o) in owner.iter().enumerate() {
                g[o as usize].push(i as u32);
            }
            g
        };
        let row_groups = group(&plan.row_owner);
        let col_groups = group(&plan.column_owner);
        Ok(Self {
            pool,
            plan,
            row_groups,
            col_groups,
        })
    }

    pub fn single_threaded(m: &TokenTopicMatrix) -> Self {
        Self::new(m, 1).expect("no pool is built for one worker")
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn workers(&self) -> usize {
        self.plan.workers
    }

    fn run_groups<S, R>(&self, groups: &[Vec<u32>], run: R) -> Vec<S>
    where
        S: Send,
        R: Fn(usize, &[u32]) -> S + Sync,
    {
        match &self.pool {
            None => groups.iter().enumerate().map(|(w, g)| run(w, g)).collect(),
            Some(pool) => pool.install(|| groups.par_iter().enumerate().map(|(w, g)| run(w, g)).collect()),
        }
    }
}

/// Element-wise sum of per-worker count vectors.
pub fn reduce_sum(parts: impl IntoIterator<Item = Vec<u64>>, len: usize) -> Vec<u64> {
    let mut total = vec![0u64; len];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
