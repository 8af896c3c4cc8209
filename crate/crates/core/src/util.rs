//! Small shared helpers: stable hashing for cache/fixture keys and a
//! bounded worker pool that preserves input order.

/// FNV-1a 64-bit hash. Stable across platforms and runs, used for
/// content-addressed fixture and cache keys.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Hex form of [`fnv1a64`], fixed 16 characters.
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

/// Runs `f` over `items` with at most `parallelism` worker threads and
/// returns outputs in input order.
///
/// With `parallelism <= 1` the items run inline on the caller thread.
pub fn run_indexed<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    if parallelism <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let workers = parallelism.min(items.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: std::sync::Mutex<Vec<Option<R>>> =
        std::sync::Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("worker slot lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker slot lock")
        .into_iter()
        .map(|s| s.expect("worker produced a result"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_values() {
        // Reference values for the 64-bit FNV-1a parameters.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn run_indexed_preserves_order() {
        let items: Vec<usize> = (0..37).collect();
        let out = run_indexed(&items, 4, |i, &x| {
            assert_eq!(i, x);
            x * 2
        });
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn run_indexed_serial_path() {
        let items = vec![1, 2, 3];
        let out = run_indexed(&items, 1, |_, &x| x + 1);
        assert_eq!(out, vec![2, 3, 4]);
    }
}
