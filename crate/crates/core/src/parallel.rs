//! Order-preserving fan-out over a bounded number of scoped threads.

use std::thread;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "CRELU_LAB_THREADS";

pub fn worker_count() -> usize {
    let available = thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(0) | None => available,
        Some(cap) => cap.min(available).max(1),
    }
}

/// Applies `f` to every item and returns results in item order. Work is
/// split statically, so outputs do not depend on the worker count.
pub fn ordered_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = worker_count().min(items.len()).max(1);
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    let mut out: Vec<R> = Vec::with_capacity(items.len());
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(i, t)| f(c * chunk + i, t))
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        for h in handles {
            out.extend(h.join().expect("worker panicked"));
        }
    });
    out
}
