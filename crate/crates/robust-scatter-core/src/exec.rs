//! Index-ordered mapping over independent tasks.
//!
//! Grid fits and simulation replicates are embarrassingly parallel. Core
//! routines accept any [`ParMap`] and always receive results in index order,
//! so a threaded implementation cannot change the output.

use alloc::vec::Vec;

pub trait ParMap: Sync {
    /// Evaluates `f(0), f(1), ..., f(len - 1)` and returns them in index order.
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every task on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ParMap for Sequential {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}
