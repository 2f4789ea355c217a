//! Brute-force metric tallies over plain vectors.

pub type Rows = Vec<Vec<f64>>;

/// Label in the first `k` entries of a full sort by (score desc, index asc).
pub fn topk(logits: &Rows, labels: &[usize], k: usize) -> f64 {
    let mut hits = 0;
    for (row, &y) in logits.iter().zip(labels) {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        if order[..k].contains(&y) {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

pub fn tally(pred: &[usize], truth: &[usize], c: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; c]; c];
    for i in 0..c {
        for j in 0..c {
            m[i][j] = pred
                .iter()
                .zip(truth)
                .filter(|&(&p, &t)| t == i && p == j)
                .count() as u64;
        }
    }
    m
}

/// (macro precision, macro recall, macro f1, excluded classes)
pub fn prf(m: &[Vec<u64>]) -> (f64, f64, f64, Vec<usize>) {
    let c = m.len();
    let (mut ps, mut rs, mut fs, mut n) = (0.0, 0.0, 0.0, 0.0);
    let mut excluded = Vec::new();
    for k in 0..c {
        let tp = m[k][k] as f64;
        let mut row = 0.0;
        let mut col = 0.0;
        for j in 0..c {
            row += m[k][j] as f64;
            col += m[j][k] as f64;
        }
        if row == 0.0 {
            excluded.push(k);
            continue;
        }
        let p = if col == 0.0 { 0.0 } else { tp / col };
        let r = tp / row;
        let f = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        ps += p;
        rs += r;
        fs += f;
        n += 1.0;
    }
    (ps / n, rs / n, fs / n, excluded)
}

/// Coarse logits: per parent, the best score among its children.
pub fn remap(
    logits: &Rows,
    labels: &[usize],
    parent: &[usize],
    coarse: usize,
) -> (Rows, Vec<usize>) {
    let rows = logits
        .iter()
        .map(|row| {
            (0..coarse)
                .map(|p| {
                    let mut best = f64::NEG_INFINITY;
                    for (l, &q) in parent.iter().enumerate() {
                        if q == p && row[l] > best {
                            best = row[l];
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    (rows, labels.iter().map(|&l| parent[l]).collect())
}
