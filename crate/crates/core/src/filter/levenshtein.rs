//! Edit distance with an upper bound, and bounded top-k search.

/// Levenshtein distance over chars, or `None` once it must exceed `bound`.
pub fn bounded_levenshtein(a: &[char], b: &[char], bound: usize) -> Option<usize> {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if a.len() - b.len() > bound {
        return None;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > bound {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= bound).then_some(d)
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    bounded_levenshtein(&a, &b, usize::MAX).unwrap()
}

/// The `k` values closest to `query` (case-insensitive), ordered by
/// (distance, value). Values farther than `cap` are ignored.
pub fn top_k_by_distance<'a, I>(query: &str, values: I, k: usize, cap: usize) -> Vec<(usize, &'a str)>
where
    I: IntoIterator<Item = &'a str>,
{
    if k == 0 {
        return Vec::new();
    }
    let q: Vec<char> = query.to_lowercase().chars().collect();
    let mut best: Vec<(usize, &'a str)> = Vec::with_capacity(k + 1);
    let mut buf: Vec<char> = Vec::new();
    for v in values {
        // Once full, a value must tie or beat the current k-th distance.
        let bound = if best.len() == k { best[k - 1].0.min(cap) } else { cap };
        buf.clear();
        buf.extend(v.to_lowercase().chars());
        let Some(d) = bounded_levenshtein(&q, &buf, bound) else {
            continue;
        };
        let entry = (d, v);
        if best.len() == k && entry >= best[k - 1] {
            continue;
        }
        let pos = best.partition_point(|e| *e < entry);
        best.insert(pos, entry);
        best.truncate(k);
    }
    best
}
