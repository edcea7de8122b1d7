use super::GradConflictRecord;
use crate::error::{Error, Result};

/// Five-number summary of one block's cosines. Quartiles interpolate
/// linearly between order statistics (`h = (n − 1)·p`).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockBox {
    pub block: usize,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme data points within 1.5·IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub blocks: Vec<BlockBox>,
    /// Least-squares line of median against block index.
    pub slope: f64,
    pub intercept: f64,
}

/// Quantile `p ∈ [0, 1]` of ascending `sorted` data.
pub fn quantile_r7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box statistics for blocks `1..=n_blocks` and the median regression.
pub fn box_stats(records: &[GradConflictRecord], n_blocks: usize) -> Result<BoxStats> {
    let mut blocks = Vec::with_capacity(n_blocks);
    for block in 1..=n_blocks {
        let mut v: Vec<f64> = records.iter().filter(|r| r.block == block).map(|r| r.cosine).collect();
        if v.is_empty() {
            return Err(Error::invalid("box_stats", format!("block {block} has no records")));
        }
        v.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile_r7(&v, 0.25), quantile_r7(&v, 0.75));
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        blocks.push(BlockBox {
            block,
            n: v.len(),
            min: v[0],
            q1,
            median: quantile_r7(&v, 0.5),
            q3,
            max: v[v.len() - 1],
            whisker_low: v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(v[0]),
            whisker_high: v.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(v[v.len() - 1]),
        });
    }
    let (slope, intercept) = ols(
        &blocks.iter().map(|b| b.block as f64).collect::<Vec<_>>(),
        &blocks.iter().map(|b| b.median).collect::<Vec<_>>(),
    );
    Ok(BoxStats { blocks, slope, intercept })
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
