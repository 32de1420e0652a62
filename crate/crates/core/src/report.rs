//! Ranking and significance marking over benchmark results.
//!
//! Rows are grouped into blocks by (shift, classifier). Within a block each
//! dataset ranks the quantifiers by mean error; ties share the average of
//! their ranks. A quantifier is marked best-equivalent on a dataset when a
//! one-sided Welch test at level 0.05 does not find it worse than the
//! quantifier with the lowest mean.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::bench::TrialResult;
use crate::metrics::{mean, standard_error, welch_greater};
use crate::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Ae,
    Rae,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Ae, Metric::Rae];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Ae => "ae",
            Metric::Rae => "rae",
        }
    }

    fn of(self, r: &TrialResult) -> f64 {
        match self {
            Metric::Ae => r.ae,
            Metric::Rae => r.rae,
        }
    }
}

/// Aggregate of one metric for one quantifier on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStat {
    pub mean: f64,
    pub std_error: f64,
    pub rank: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub trials: usize,
    /// Fewer than two trials: no significance test is possible.
    pub insufficient: bool,
    pub ae: CellStat,
    pub rae: CellStat,
}

impl Cell {
    pub fn stat(&self, m: Metric) -> &CellStat {
        match m {
            Metric::Ae => &self.ae,
            Metric::Rae => &self.rae,
        }
    }

    fn stat_mut(&mut self, m: Metric) -> &mut CellStat {
        match m {
            Metric::Ae => &mut self.ae,
            Metric::Rae => &mut self.rae,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub shift: String,
    pub classifier: String,
    pub quantifier: String,
    /// Indexed like [`RankTable::datasets`]; `None` when the quantifier has
    /// no trials on that dataset.
    pub cells: Vec<Option<Cell>>,
    pub avg_rank_ae: f64,
    pub avg_rank_rae: f64,
    /// Lowest average rank in the block.
    pub top_ae: bool,
    pub top_rae: bool,
}

impl RankRow {
    pub fn avg_rank(&self, m: Metric) -> f64 {
        match m {
            Metric::Ae => self.avg_rank_ae,
            Metric::Rae => self.avg_rank_rae,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub datasets: Vec<String>,
    pub rows: Vec<RankRow>,
}

impl RankTable {
    pub fn row(&self, shift: &str, classifier: &str, quantifier: &str) -> Option<&RankRow> {
        self.rows
            .iter()
            .find(|r| r.shift == shift && r.classifier == classifier && r.quantifier == quantifier)
    }

    /// Wide CSV: one row per (shift, classifier, quantifier), dataset columns
    /// left to right, average ranks last.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["shift".to_string(), "classifier".into(), "quantifier".into()];
        for d in &self.datasets {
            for m in Metric::ALL {
                let m = m.as_str();
                header.extend([
                    format!("{d}_{m}"),
                    format!("{d}_{m}_se"),
                    format!("{d}_{m}_rank"),
                    format!("{d}_{m}_best"),
                ]);
            }
            header.push(format!("{d}_trials"));
        }
        header.extend(["avg_rank_ae", "avg_rank_rae", "top_ae", "top_rae"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.shift.clone(), r.classifier.clone(), r.quantifier.clone()];
            for cell in &r.cells {
                match cell {
                    Some(c) => {
                        for m in Metric::ALL {
                            let s = c.stat(m);
                            rec.extend([
                                s.mean.to_string(),
                                s.std_error.to_string(),
                                s.rank.to_string(),
                                s.best.to_string(),
                            ]);
                        }
                        rec.push(c.trials.to_string());
                    }
                    None => rec.extend(std::iter::repeat_n(String::new(), 9)),
                }
            }
            rec.extend([
                r.avg_rank_ae.to_string(),
                r.avg_rank_rae.to_string(),
                r.top_ae.to_string(),
                r.top_rae.to_string(),
            ]);
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::graph::write_file(path, &self.to_csv()?)
    }
}

/// Ranks of `values` in ascending order, starting at 1; equal values share
/// the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

type BlockKey = (String, String);

pub fn rank_and_test(results: &[TrialResult]) -> Result<RankTable> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no trials".into()));
    }
    let datasets: Vec<String> = results
        .iter()
        .map(|r| r.dataset.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    // block -> quantifier -> dataset index -> trials
    let mut groups: BTreeMap<BlockKey, BTreeMap<String, BTreeMap<usize, Vec<&TrialResult>>>> = BTreeMap::new();
    for r in results {
        let d = datasets.binary_search(&r.dataset).expect("dataset collected above");
        groups
            .entry((r.shift.clone(), r.classifier.clone()))
            .or_default()
            .entry(r.quantifier.clone())
            .or_default()
            .entry(d)
            .or_default()
            .push(r);
    }
    if groups.values().all(|qs| qs.len() < 2) {
        return Err(Error::InvalidInput("ranking needs at least two quantifiers".into()));
    }

    let mut rows = Vec::new();
    for ((shift, classifier), quants) in &groups {
        let names: Vec<&String> = quants.keys().collect();
        let mut cells: Vec<Vec<Option<Cell>>> = names
            .iter()
            .map(|q| {
                (0..datasets.len())
                    .map(|d| {
                        quants[*q].get(&d).map(|trials| {
                            let stat = |m: Metric| {
                                let xs: Vec<f64> = trials.iter().map(|r| m.of(r)).collect();
                                CellStat {
                                    mean: mean(&xs),
                                    std_error: standard_error(&xs),
                                    rank: 0.0,
                                    best: false,
                                }
                            };
                            Cell {
                                trials: trials.len(),
                                insufficient: trials.len() < 2,
                                ae: stat(Metric::Ae),
                                rae: stat(Metric::Rae),
                            }
                        })
                    })
                    .collect()
            })
            .collect();

        for d in 0..datasets.len() {
            let present: Vec<usize> = (0..names.len()).filter(|&q| cells[q][d].is_some()).collect();
            for m in Metric::ALL {
                let means: Vec<f64> = present
                    .iter()
                    .map(|&q| cells[q][d].as_ref().unwrap().stat(m).mean)
                    .collect();
                for (&q, r) in present.iter().zip(average_ranks(&means)) {
                    cells[q][d].as_mut().unwrap().stat_mut(m).rank = r;
                }
                let eligible: Vec<usize> = present
                    .iter()
                    .copied()
                    .filter(|&q| !cells[q][d].as_ref().unwrap().insufficient)
                    .collect();
                let Some(&best) = eligible.iter().min_by(|&&a, &&b| {
                    let (ma, mb) = (
                        cells[a][d].as_ref().unwrap().stat(m).mean,
                        cells[b][d].as_ref().unwrap().stat(m).mean,
                    );
                    ma.total_cmp(&mb)
                }) else {
                    continue;
                };
                let xs = |q: usize| -> Vec<f64> { quants[names[q]][&d].iter().map(|r| m.of(r)).collect() };
                let best_xs = xs(best);
                for &q in &eligible {
                    let p = welch_greater(&xs(q), &best_xs)?;
                    cells[q][d].as_mut().unwrap().stat_mut(m).best = p >= SIGNIFICANCE;
                }
            }
        }

        let avg = |cs: &[Option<Cell>], m: Metric| {
            let ranks: Vec<f64> = cs.iter().flatten().map(|c| c.stat(m).rank).collect();
            mean(&ranks)
        };
        let block: Vec<RankRow> = names
            .iter()
            .zip(cells)
            .map(|(q, cs)| RankRow {
                shift: shift.clone(),
                classifier: classifier.clone(),
                quantifier: (*q).clone(),
                avg_rank_ae: avg(&cs, Metric::Ae),
                avg_rank_rae: avg(&cs, Metric::Rae),
                cells: cs,
                top_ae: false,
                top_rae: false,
            })
            .collect();
        let min_ae = block.iter().map(|r| r.avg_rank_ae).fold(f64::INFINITY, f64::min);
        let min_rae = block.iter().map(|r| r.avg_rank_rae).fold(f64::INFINITY, f64::min);
        rows.extend(block.into_iter().map(|mut r| {
            r.top_ae = r.avg_rank_ae == min_ae;
            r.top_rae = r.avg_rank_rae == min_rae;
            r
        }));
    }
    Ok(RankTable { datasets, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(dataset: &str, quantifier: &str, sample_id: usize, ae: f64) -> TrialResult {
        TrialResult {
            dataset: dataset.into(),
            shift: "rw".into(),
            classifier: "logistic".into(),
            quantifier: quantifier.into(),
            split_seed: 0,
            clf_seed: 0,
            sample_id,
            ae,
            rae: 2.0 * ae,
            flags: String::new(),
        }
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[0.3, 0.1, 0.3, 0.2]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(average_ranks(&[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn empty_is_error() {
        let e = rank_and_test(&[]).unwrap_err();
        assert!(e.to_string().contains("no trials"));
    }

    #[test]
    fn identical_columns_share_rank() {
        let rs: Vec<_> = ["A", "B", "C"]
            .iter()
            .flat_map(|q| (0..5).map(move |i| trial("d", q, i, 0.1 * i as f64)))
            .collect();
        let t = rank_and_test(&rs).unwrap();
        for r in &t.rows {
            let c = r.cells[0].as_ref().unwrap();
            assert_eq!(c.ae.rank, 2.0);
            assert!(c.ae.best);
        }
    }

    #[test]
    fn dominating_quantifier_is_sole_best() {
        let mut rs = Vec::new();
        for i in 0..200 {
            let jitter = (i % 7) as f64 * 1e-3;
            rs.push(trial("d", "good", i, 0.01 + jitter));
            rs.push(trial("d", "bad", i, 0.10 + jitter));
            rs.push(trial("d", "worse", i, 0.20 + jitter));
        }
        let t = rank_and_test(&rs).unwrap();
        let good = t.row("rw", "logistic", "good").unwrap();
        assert_eq!(good.avg_rank_ae, 1.0);
        assert!(good.top_ae);
        let best: Vec<&str> = t
            .rows
            .iter()
            .filter(|r| r.cells[0].as_ref().unwrap().ae.best)
            .map(|r| r.quantifier.as_str())
            .collect();
        assert_eq!(best, ["good"]);
    }

    #[test]
    fn hand_ranking_three_by_two() {
        // d1 means: A=0.1, B=0.2, C=0.3 -> ranks 1, 2, 3
        // d2 means: A=0.3, B=0.2, C=0.2 -> ranks 3, 1.5, 1.5
        // averages: A=2, B=1.75, C=2.25
        let mut rs = Vec::new();
        for (d, q, m) in [
            ("d1", "A", 0.1),
            ("d1", "B", 0.2),
            ("d1", "C", 0.3),
            ("d2", "A", 0.3),
            ("d2", "B", 0.2),
            ("d2", "C", 0.2),
        ] {
            rs.push(trial(d, q, 0, m - 0.01));
            rs.push(trial(d, q, 1, m + 0.01));
        }
        let t = rank_and_test(&rs).unwrap();
        let avg = |q| t.row("rw", "logistic", q).unwrap().avg_rank_ae;
        assert!((avg("A") - 2.0).abs() < 1e-12);
        assert!((avg("B") - 1.75).abs() < 1e-12);
        assert!((avg("C") - 2.25).abs() < 1e-12);
        assert!(t.row("rw", "logistic", "B").unwrap().top_ae);
    }

    #[test]
    fn single_trial_cells_are_flagged_not_marked() {
        let rs = vec![
            trial("d", "A", 0, 0.1),
            trial("d", "B", 0, 0.2),
            trial("d", "B", 1, 0.2),
        ];
        let t = rank_and_test(&rs).unwrap();
        let a = t.row("rw", "logistic", "A").unwrap().cells[0].clone().unwrap();
        assert!(a.insufficient && !a.ae.best);
        assert_eq!(a.ae.rank, 1.0);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert!(csv
            .lines()
            .next()
            .unwrap()
            .starts_with("shift,classifier,quantifier,d_ae,d_ae_se"));
        assert_eq!(csv.lines().count(), 3);
    }
}
