//! Deterministic parallel replication.
//!
//! Replicas are cut into fixed chunks; each replica draws from its own stream
//! and chunk accumulators are merged in chunk order. The result is the same
//! for any thread count.

use rayon::prelude::*;

use crate::rng::{replica_stream, Stream};

const CHUNK: u64 = 1024;

/// Run `step(acc, replica, rng)` for replicas `0..n` and merge the per-chunk
/// accumulators in order.
pub fn replicate<A, I, F, M>(master: u64, tag: &str, n: u64, init: I, step: F, mut merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, u64, &mut Stream) + Sync + Send,
    M: FnMut(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for r in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut rng = replica_stream(master, tag, r);
                step(&mut acc, r, &mut rng);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

/// Same as [`replicate`] but keeps one value per replica, in order.
pub fn map_replicas<T, F>(master: u64, tag: &str, n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut Stream) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(master, tag, r);
            f(r, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Moments;
    use rand::Rng;

    #[test]
    fn thread_count_does_not_matter() {
        let run = || {
            replicate(
                7,
                "t",
                5000,
                Moments::default,
                |m, _, rng| m.push(rng.random::<f64>()),
                |a, b| a.merge(&b),
            )
        };
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
        assert_eq!(a.mean().to_bits(), b.mean().to_bits());
        assert_eq!(a.count(), 5000);
    }
}
