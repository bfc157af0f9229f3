//! Brute-force reference implementations of the evaluation metrics.
#![allow(dead_code)]

use std::collections::HashMap;

pub fn gpe(r: &[f64], h: &[f64], thr: f64) -> Option<f64> {
    let mut n = 0.0;
    let mut bad = 0.0;
    for i in 0..r.len() {
        if r[i] > 0.0 && h[i] > 0.0 {
            n += 1.0;
            if ((h[i] - r[i]) / r[i]).abs() > thr {
                bad += 1.0;
            }
        }
    }
    (n > 0.0).then(|| bad / n * 100.0)
}

pub fn fpe(r: &[f64], h: &[f64], thr: f64) -> Option<f64> {
    let mut e = vec![];
    for i in 0..r.len() {
        if r[i] > 0.0 && h[i] > 0.0 && ((h[i] - r[i]) / r[i]).abs() <= thr {
            e.push(1200.0 * (h[i].ln() - r[i].ln()) / 2f64.ln());
        }
    }
    if e.is_empty() {
        return None;
    }
    let n = e.len() as f64;
    let m2 = e.iter().map(|x| x * x).sum::<f64>() / n;
    let m1 = e.iter().sum::<f64>() / n;
    Some((m2 - m1 * m1).max(0.0).sqrt())
}

pub fn mse(r: &[f64], h: &[f64]) -> Option<f64> {
    let mut acc = vec![];
    for i in 0..r.len() {
        if r[i] > 0.0 && h[i] > 0.0 {
            let d = h[i] / r[i] - 1.0;
            acc.push(d * d);
        }
    }
    (!acc.is_empty()).then(|| acc.iter().sum::<f64>() * 100.0 / acc.len() as f64)
}

pub fn dct(row: &[f64], order: usize) -> Vec<f64> {
    let n = row.len() as f64;
    let mut out = vec![];
    for k in 0..order {
        let mut s = 0.0;
        for (i, x) in row.iter().enumerate() {
            s += x * (std::f64::consts::PI / n * (i as f64 + 0.5) * k as f64).cos();
        }
        let norm = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        out.push(s * norm);
    }
    out
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 1..a.len() {
        s += (a[d] - b[d]) * (a[d] - b[d]);
    }
    10.0 / 10f64.ln() * (2.0 * s).sqrt()
}

/// Top-down memoized search: (total cost, pair count) of the cheapest path
/// from (0,0) to (i,j).
fn best(i: usize, j: usize, a: &[Vec<f64>], b: &[Vec<f64>], memo: &mut HashMap<(usize, usize), (f64, usize)>) -> (f64, usize) {
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let here = dist(&a[i], &b[j]);
    let v = if i == 0 && j == 0 {
        (here, 1)
    } else {
        let mut cands = vec![];
        if i > 0 && j > 0 {
            cands.push(best(i - 1, j - 1, a, b, memo));
        }
        if i > 0 {
            cands.push(best(i - 1, j, a, b, memo));
        }
        if j > 0 {
            cands.push(best(i, j - 1, a, b, memo));
        }
        let (c, n) = cands
            .into_iter()
            .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
            .unwrap();
        (c + here, n + 1)
    };
    memo.insert((i, j), v);
    v
}

pub fn mcd_dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut memo = HashMap::new();
    let (c, n) = best(a.len() - 1, b.len() - 1, a, b, &mut memo);
    c / n as f64
}

pub fn mcd_plain(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dist(x, y)).sum::<f64>() / a.len() as f64
}
