//! Proportion tables, per-cluster descriptor medians and the monthly chart.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use crate::acoustics::{AcousticProfile, DESCRIPTOR_COLUMNS};
use crate::error::Result;

/// Percentages indexed `[cluster][month]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionTable {
    pub clusters: Vec<u32>,
    pub months: Vec<u8>,
    pub percent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Normalize {
    Rows,
    Columns,
}

fn counts(labels: &[u32], months: &[u8]) -> (Vec<u32>, Vec<u8>, Vec<Vec<f64>>) {
    let clusters: Vec<u32> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let ms: Vec<u8> = months.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut c = vec![vec![0.0; ms.len()]; clusters.len()];
    for (&l, &m) in labels.iter().zip(months) {
        let i = clusters.binary_search(&l).unwrap();
        let j = ms.binary_search(&m).unwrap();
        c[i][j] += 1.0;
    }
    (clusters, ms, c)
}

fn table(labels: &[u32], months: &[u8], how: Normalize) -> ProportionTable {
    assert_eq!(labels.len(), months.len(), "labels and months differ in length");
    let (clusters, months, mut c) = counts(labels, months);
    match how {
        Normalize::Rows => {
            for row in &mut c {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v *= 100.0 / s);
            }
        }
        Normalize::Columns => {
            for j in 0..months.len() {
                let s: f64 = c.iter().map(|r| r[j]).sum();
                c.iter_mut().for_each(|r| r[j] *= 100.0 / s);
            }
        }
    }
    ProportionTable {
        clusters,
        months,
        percent: c,
    }
}

/// Share of each cluster's clips falling in each month; rows sum to 100.
pub fn cluster_by_month(labels: &[u32], months: &[u8]) -> ProportionTable {
    table(labels, months, Normalize::Rows)
}

/// Share of each month's clips falling in each cluster; columns sum to 100.
pub fn month_by_cluster(labels: &[u32], months: &[u8]) -> ProportionTable {
    table(labels, months, Normalize::Columns)
}

impl ProportionTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["cluster".to_string()];
        header.extend(self.months.iter().map(|m| format!("month_{m}")));
        w.write_record(&header)?;
        for (c, row) in self.clusters.iter().zip(&self.percent) {
            let mut rec = vec![c.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.4}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMedians {
    pub cluster: u32,
    pub size: usize,
    pub candidate_garbage: bool,
    pub medians: [Option<f64>; 12],
}

/// Clusters smaller than `fraction * n` are flagged, never removed.
pub fn garbage_clusters(labels: &[u32], fraction: f64) -> Vec<u32> {
    let (clusters, _, c) = counts(labels, &vec![0; labels.len()]);
    let limit = fraction * labels.len() as f64;
    clusters
        .into_iter()
        .zip(c)
        .filter(|(_, row)| row[0] < limit)
        .map(|(k, _)| k)
        .collect()
}

pub fn median_table(labels: &[u32], profiles: &[Option<AcousticProfile>], garbage: &[u32]) -> Vec<ClusterMedians> {
    let clusters: BTreeSet<u32> = labels.iter().copied().collect();
    clusters
        .into_iter()
        .map(|k| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
            let mut medians = [None; 12];
            for (j, m) in medians.iter_mut().enumerate() {
                let mut v: Vec<f64> = members
                    .iter()
                    .filter_map(|&i| profiles[i].as_ref().and_then(|p| p.values()[j]))
                    .collect();
                v.sort_by(f64::total_cmp);
                *m = match v.len() {
                    0 => None,
                    n if n % 2 == 1 => Some(v[n / 2]),
                    n => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
                };
            }
            ClusterMedians {
                cluster: k,
                size: members.len(),
                candidate_garbage: garbage.contains(&k),
                medians,
            }
        })
        .collect()
}

pub fn write_medians_csv<W: Write>(out: W, rows: &[ClusterMedians]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cluster", "size", "candidate_garbage"];
    header.extend(DESCRIPTOR_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.cluster.to_string(), r.size.to_string(), r.candidate_garbage.to_string()];
        rec.extend(r.medians.iter().map(|v| v.map(|v| format!("{v:.4}")).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

/// Stacked per-month bars of cluster shares. Months between the first and
/// last recorded month that have no data are drawn as labelled gaps.
pub fn emit_figure(table: &ProportionTable) -> String {
    let (slot, bar, height, left, top) = (56.0, 36.0, 240.0, 50.0, 40.0);
    let first = table.months.first().copied().unwrap_or(1);
    let last = table.months.last().copied().unwrap_or(1);
    let n_slots = (last - first) as usize + 1;
    let legend_w = 110.0;
    let width = left + slot * n_slots as f64 + 20.0 + legend_w;
    let total_h = top + height + 50.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" viewBox="0 0 {width} {total_h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="20" font-size="13">Monthly production per cluster (%)</text>"#
    );
    for pct in [0, 25, 50, 75, 100] {
        let y = top + height * (1.0 - pct as f64 / 100.0);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{pct}</text>"##,
            left + slot * n_slots as f64,
            left - 6.0,
            y + 4.0
        );
    }
    for (slot_idx, month) in (first..=last).enumerate() {
        let x = left + slot * slot_idx as f64 + (slot - bar) / 2.0;
        let label_x = x + bar / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{label_x}" y="{}" text-anchor="middle">{month}</text>"#,
            top + height + 16.0
        );
        match table.months.iter().position(|&m| m == month) {
            None => {
                let _ = writeln!(
                    s,
                    r##"<rect class="gap" data-month="{month}" x="{x}" y="{top}" width="{bar}" height="{height}" fill="none" stroke="#999" stroke-dasharray="4 3"/><text x="{label_x}" y="{}" text-anchor="middle" fill="#999">no data</text>"##,
                    top + height / 2.0
                );
            }
            Some(j) => {
                let mut y = top + height;
                for (i, (&c, row)) in table.clusters.iter().zip(&table.percent).enumerate() {
                    let h = height * row[j] / 100.0;
                    if h <= 0.0 {
                        continue;
                    }
                    y -= h;
                    let _ = writeln!(
                        s,
                        r#"<rect class="bar" data-month="{month}" data-cluster="{c}" data-percent="{:.4}" x="{x}" y="{y:.3}" width="{bar}" height="{h:.3}" fill="{}"/>"#,
                        row[j],
                        PALETTE[i % PALETTE.len()]
                    );
                }
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">month</text>"#,
        left + slot * n_slots as f64 / 2.0,
        top + height + 36.0
    );
    let lx = left + slot * n_slots as f64 + 20.0;
    for (i, c) in table.clusters.iter().enumerate() {
        let y = top + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}">cluster {c}</text>"#,
            PALETTE[i % PALETTE.len()],
            lx + 14.0,
            y + 9.0
        );
    }
    s.push_str("</svg>\n");
    s
}
