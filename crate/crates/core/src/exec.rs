//! Execution-mode dispatch for the data-parallel kernels.
//!
//! Kernels only ever parallelize across independent output elements; every
//! per-element accumulation runs in a fixed sequential order. Parallel and
//! sequential execution therefore produce bit-identical results, and the
//! `parallel` feature is purely a throughput switch.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a kernel maps its output index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    /// Plain sequential loop.
    Seq,
    /// rayon parallel iterator over output indices. Falls back to `Seq`
    /// when the `parallel` feature is disabled.
    Par,
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Par
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Seq
        }
    }
}

/// Below this many output elements a fine-grained (cheap per-element)
/// kernel is not worth spawning.
const PAR_THRESHOLD: usize = 4096;

/// Build `out[i] = f(i)` for `i in 0..n`, where `f` is cheap per element.
pub fn map_indexed<T: Send>(exec: Exec, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    match exec {
        Exec::Seq => (0..n).map(f).collect(),
        Exec::Par => {
            #[cfg(feature = "parallel")]
            {
                if n >= PAR_THRESHOLD {
                    return (0..n).into_par_iter().map(f).collect();
                }
                (0..n).map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Build `out[i] = f(i)` for coarse tasks (whole output planes or rows)
/// where each invocation carries enough work to always justify spawning.
pub fn map_tasks<T: Send>(exec: Exec, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    match exec {
        Exec::Seq => (0..n).map(f).collect(),
        Exec::Par => {
            #[cfg(feature = "parallel")]
            {
                if n >= 2 {
                    return (0..n).into_par_iter().map(f).collect();
                }
                (0..n).map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}
