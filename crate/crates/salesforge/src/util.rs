//! Small shared helpers: text normalization, similarity, rounding, and a
//! bounded-worker map.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Lowercase and collapse runs of whitespace to single spaces.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Normalized edit similarity in [0, 1] on whitespace-normalized,
/// case-folded text. 1.0 means identical after normalization.
pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&normalize_ws(a), &normalize_ws(b))
}

/// Remove `*stage directions*` spans and re-collapse the whitespace around
/// them.
pub fn strip_stage_directions(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '*' {
            let mut span = String::new();
            let mut closed = false;
            for d in chars.by_ref() {
                if d == '*' {
                    closed = true;
                    break;
                }
                span.push(d);
            }
            if !closed {
                // Unbalanced asterisk: keep the text as written.
                out.push('*');
                out.push_str(&span);
            }
        } else {
            out.push(c);
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Round to two decimals, the presentation precision of all reports.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Map `f` over `items` with at most `workers` threads, returning results in
/// input order. With `workers <= 1` the map runs inline, which keeps
/// queue-mode mock backends deterministic.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let cursor = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker filled every slot"))
        .collect()
}
