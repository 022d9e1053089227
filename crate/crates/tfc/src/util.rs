use once_cell::sync::Lazy;
use rayon::ThreadPool;

/// Intra-op thread pool for batch-parallel forward/backward passes.
///
/// `TFC_THREADS` caps the worker count; the default is the machine's
/// available parallelism. Gradient reductions are always performed in
/// sample order, so results do not depend on the pool size.
pub fn pool() -> &'static ThreadPool {
    static POOL: Lazy<ThreadPool> = Lazy::new(|| {
        let threads = std::env::var("TFC_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            });
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool construction")
    });
    &POOL
}
