/// A cell of a filtered complex. `boundary` lists indices of its facets in the
/// same input slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSimplex {
    pub dim: usize,
    pub value: f64,
    pub boundary: Vec<usize>,
}

/// Standard Z/2 column reduction with clearing. Cells are ordered by
/// (value, dim, input index). Returns `(dim, birth, death)` for every class;
/// `death` is `None` for essential classes. Zero-persistence pairs included.
///
/// Panics if some facet enters after its coface.
pub fn persistence_pairs(cells: &[FilteredSimplex]) -> Vec<(usize, f64, Option<f64>)> {
    let n = cells.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        cells[a]
            .value
            .total_cmp(&cells[b].value)
            .then(cells[a].dim.cmp(&cells[b].dim))
            .then(a.cmp(&b))
    });
    let mut position = vec![0u32; n];
    for (pos, &idx) in order.iter().enumerate() {
        position[idx] = pos as u32;
    }
    let max_dim = cells.iter().map(|c| c.dim).max().unwrap_or(0);

    let mut pivot_owner: Vec<u32> = vec![u32::MAX; n];
    let mut reduced: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut cleared = vec![false; n];
    let mut negative = vec![false; n];
    let mut pairs = Vec::new();

    for dim in (1..=max_dim).rev() {
        for pos in 0..n {
            let idx = order[pos];
            if cells[idx].dim != dim || cleared[pos] {
                continue;
            }
            let mut col: Vec<u32> = cells[idx]
                .boundary
                .iter()
                .map(|&f| {
                    let fp = position[f];
                    assert!(
                        (fp as usize) < pos,
                        "facet {f} enters after cell {idx} in the filtration"
                    );
                    fp
                })
                .collect();
            col.sort_unstable();
            // Z/2: repeated facets cancel.
            col = dedup_mod2(col);
            while let Some(&low) = col.last() {
                let owner = pivot_owner[low as usize];
                if owner == u32::MAX {
                    break;
                }
                col = symmetric_difference(&col, &reduced[owner as usize]);
            }
            if let Some(&low) = col.last() {
                pivot_owner[low as usize] = pos as u32;
                cleared[low as usize] = true;
                negative[pos] = true;
                let birth_cell = &cells[order[low as usize]];
                pairs.push((birth_cell.dim, birth_cell.value, Some(cells[idx].value)));
                reduced[pos] = col;
            }
        }
    }
    for pos in 0..n {
        if !negative[pos] && pivot_owner[pos] == u32::MAX {
            let c = &cells[order[pos]];
            pairs.push((c.dim, c.value, None));
        }
    }
    pairs
}

fn dedup_mod2(sorted: Vec<u32>) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(sorted.len());
    for v in sorted {
        if out.last() == Some(&v) {
            out.pop();
        } else {
            out.push(v);
        }
    }
    out
}

fn symmetric_difference(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
