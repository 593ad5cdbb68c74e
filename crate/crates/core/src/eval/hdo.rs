//! Embedding tables and ranking by hyperbolic distance from the origin (HDO).

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::manifold::{Curvature, ManifoldKind};
use crate::model::NodeStates;
use crate::{Error, Result};

/// Latent coordinates of every node with their distance from the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub kind: ManifoldKind,
    pub curvature: Curvature,
    /// Ambient coordinates, one row per node (`d + 1` columns on the hyperboloid).
    pub coords: Array2<f64>,
    pub hdo: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_states(states: &NodeStates) -> Result<Self> {
        Ok(EmbeddingTable {
            kind: states.kind(),
            curvature: states.curvature(),
            coords: states.coords().clone(),
            hdo: states.distances_from_origin()?,
        })
    }

    pub fn len(&self) -> usize {
        self.hdo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hdo.is_empty()
    }

    /// CSV with header `node,dim_0,…,dim_{d-1},curvature,hdo`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let dims: Vec<String> = (0..self.coords.ncols())
            .map(|j| format!("dim_{j}"))
            .collect();
        writeln!(w, "node,{},curvature,hdo", dims.join(",")).map_err(io)?;
        for (i, row) in self.coords.rows().into_iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{i},{},{},{}",
                vals.join(","),
                self.curvature.value(),
                self.hdo[i]
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdoMode {
    High,
    Middle,
    Low,
}

impl FromStr for HdoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high" => Ok(HdoMode::High),
            "middle" => Ok(HdoMode::Middle),
            "low" => Ok(HdoMode::Low),
            _ => Err(Error::contract(format!(
                "unknown HDO mode {s:?} (high|middle|low)"
            ))),
        }
    }
}

impl fmt::Display for HdoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HdoMode::High => "high",
            HdoMode::Middle => "middle",
            HdoMode::Low => "low",
        })
    }
}

/// Number of nodes in an `percent`% selection of `n`: `ceil(n·p/100)`.
pub fn selection_size(n: usize, percent: f64) -> usize {
    ((n as f64 * percent / 100.0) - 1e-9)
        .ceil()
        .clamp(0.0, n as f64) as usize
}

/// Median with the two-middle average for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Node ids of the selected `percent`% by HDO: the largest (`High`), the
/// smallest (`Low`) or those closest to the median (`Middle`). Ties go to
/// the lower node id. Ids are returned in ranking order.
pub fn hdo_rank(hdo: &[f64], mode: HdoMode, percent: f64) -> Result<Vec<usize>> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::contract(format!(
            "percentage must be in (0, 100], got {percent}"
        )));
    }
    if hdo.iter().any(|v| v.is_nan()) {
        return Err(Error::contract("HDO values contain NaN"));
    }
    let mut ids: Vec<usize> = (0..hdo.len()).collect();
    match mode {
        HdoMode::High => ids.sort_by(|&a, &b| hdo[b].total_cmp(&hdo[a]).then(a.cmp(&b))),
        HdoMode::Low => ids.sort_by(|&a, &b| hdo[a].total_cmp(&hdo[b]).then(a.cmp(&b))),
        HdoMode::Middle => {
            let m = median(hdo);
            ids.sort_by(|&a, &b| {
                (hdo[a] - m)
                    .abs()
                    .total_cmp(&(hdo[b] - m).abs())
                    .then(a.cmp(&b))
            })
        }
    }
    ids.truncate(selection_size(hdo.len(), percent));
    Ok(ids)
}

/// One histogram bin `[lo, hi)` (the last bin is closed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over `[min, max]`.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 || values.is_empty() {
        return Err(Error::contract(
            "histogram needs values and at least one bin",
        ));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::contract("histogram values must be finite"));
    }
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: if b + 1 == bins {
                hi.max(lo + width)
            } else {
                lo + (b + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    Ok(out)
}

pub fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    let mut s = String::from("bin_lo,bin_hi,count\n");
    for b in bins {
        s.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.count));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold;

    const FIVE: [f64; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];

    #[test]
    fn full_selection_is_everything() {
        for mode in [HdoMode::High, HdoMode::Middle, HdoMode::Low] {
            let mut ids = hdo_rank(&FIVE, mode, 100.0).unwrap();
            ids.sort_unstable();
            assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn twenty_percent_of_five() {
        assert_eq!(hdo_rank(&FIVE, HdoMode::High, 20.0).unwrap(), vec![4]);
        assert_eq!(hdo_rank(&FIVE, HdoMode::Middle, 20.0).unwrap(), vec![2]);
        assert_eq!(hdo_rank(&FIVE, HdoMode::Low, 20.0).unwrap(), vec![0]);
    }

    #[test]
    fn ties_go_to_lower_ids() {
        let h = [1.0, 3.0, 3.0, 0.0, 3.0];
        assert_eq!(hdo_rank(&h, HdoMode::High, 40.0).unwrap(), vec![1, 2]);
        // median 3.0
        assert_eq!(hdo_rank(&h, HdoMode::Middle, 20.0).unwrap(), vec![1]);
    }

    #[test]
    fn bad_percentages() {
        assert!(hdo_rank(&FIVE, HdoMode::High, 0.0).is_err());
        assert!(hdo_rank(&FIVE, HdoMode::High, 100.5).is_err());
    }

    #[test]
    fn histogram_counts_everything() {
        let v = [0.0, 0.5, 1.0, 1.0, 2.0, 3.99, 4.0];
        let h = histogram(&v, 4).unwrap();
        assert_eq!(
            h.iter().map(|b| b.count).collect::<Vec<_>>(),
            vec![2, 2, 1, 2]
        );
        assert_eq!(h[0].lo, 0.0);
        assert_eq!(h[3].hi, 4.0);
        let h = histogram(&[2.0, 2.0], 3).unwrap();
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 2);
    }

    #[test]
    fn hdo_of_origin_is_zero_and_grows_with_radius() {
        let k = Curvature::new(-1.0).unwrap();
        let mut prev = -1.0;
        for i in 0..10 {
            let r = i as f64 * 0.1;
            let states = NodeStates::new(
                ManifoldKind::PoincareBall,
                k,
                Array2::from_shape_vec((1, 2), vec![r * 0.6, r * 0.8]).unwrap(),
            )
            .unwrap();
            let t = EmbeddingTable::from_states(&states).unwrap();
            if i == 0 {
                assert_eq!(t.hdo[0], 0.0);
            }
            assert!(t.hdo[0] > prev);
            prev = t.hdo[0];
        }
        let o = manifold::origin(ManifoldKind::Hyperboloid, 3, k);
        let states = NodeStates::new(
            ManifoldKind::Hyperboloid,
            k,
            Array2::from_shape_vec((1, 4), o.coords().to_vec()).unwrap(),
        )
        .unwrap();
        assert_eq!(EmbeddingTable::from_states(&states).unwrap().hdo[0], 0.0);
    }

    #[test]
    fn csv_layout() {
        let k = Curvature::new(-2.0).unwrap();
        let states = NodeStates::new(
            ManifoldKind::PoincareBall,
            k,
            ndarray::array![[0.1, 0.2], [0.0, 0.0]],
        )
        .unwrap();
        let t = EmbeddingTable::from_states(&states).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        t.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node,dim_0,dim_1,curvature,hdo");
        assert_eq!(lines[2], "1,0,0,-2,0");
    }
}
