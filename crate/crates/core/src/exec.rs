//! Data-parallel map with a sequential fallback. With the `parallel` feature
//! (default) enabled, `Mode::Parallel` fans work out over rayon; without it,
//! everything runs sequentially. Results are collected by index, so the
//! outcome is identical either way.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl Mode {
    /// Parallel when the feature is compiled in, sequential otherwise.
    pub fn auto() -> Self {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

/// Apply `f` to `0..n`, in parallel when the mode and feature allow it.
pub fn map_indexed<T, F>(n: usize, mode: Mode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if mode == Mode::Parallel && n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..n).map(f).collect()
}
