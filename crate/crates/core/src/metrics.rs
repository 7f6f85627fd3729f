//! Estimate-to-truth matching and error statistics.

use crate::error::{Error, Result};
use crate::geometry::{spatial_freqs_from_ue, UeGroundTruth, UpaGeometry};
use crate::recovery::UeEstimate;

/// Largest scene size the exhaustive assignment accepts.
pub const MAX_MATCH_USERS: usize = 6;

/// Assignment `perm[i]` = index of the estimate paired with `truth[i]`,
/// minimizing the summed squared `(alpha, beta)` distance.
pub fn match_estimates(truth: &[UeGroundTruth], est: &[UeEstimate], geom: &UpaGeometry) -> Result<Vec<usize>> {
    let k = truth.len();
    if est.len() != k {
        return Err(Error::dims(format!("{k} estimates"), est.len()));
    }
    if k > MAX_MATCH_USERS {
        return Err(Error::InvalidParameter(format!(
            "exhaustive matching supports at most {MAX_MATCH_USERS} users, got {k}"
        )));
    }
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            let f = spatial_freqs_from_ue(t, geom);
            est.iter()
                .map(|e| (f.alpha - e.alpha).powi(2) + (f.beta - e.beta).powi(2))
                .collect()
        })
        .collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(p);
        }
    });
    Ok(best)
}

/// Visits every permutation of `p[start..]` by recursive swapping.
fn permute(p: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

/// Per-trial errors over the users of one scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialErrors {
    /// Radians.
    pub rmse_azimuth: f64,
    /// Radians.
    pub rmse_elevation: f64,
    /// Metres.
    pub rmse_range: f64,
    /// `sqrt(1/K sum_k ||p_k - p_hat_k||^2)`, metres.
    pub positioning_error: f64,
}

pub fn trial_errors(truth: &[UeGroundTruth], est: &[UeEstimate], geom: &UpaGeometry) -> Result<TrialErrors> {
    if truth.is_empty() {
        return Err(Error::InvalidParameter("scene without users".into()));
    }
    let perm = match_estimates(truth, est, geom)?;
    let k = truth.len() as f64;
    let (mut az, mut el, mut rg, mut pos) = (0.0, 0.0, 0.0, 0.0);
    for (t, &j) in truth.iter().zip(perm.iter()) {
        let e = &est[j];
        az += (t.azimuth - e.azimuth).powi(2);
        el += (t.elevation - e.elevation).powi(2);
        rg += (t.range - e.range).powi(2);
        let p = t.position();
        pos += (0..3).map(|i| (p[i] - e.position[i]).powi(2)).sum::<f64>();
    }
    Ok(TrialErrors {
        rmse_azimuth: (az / k).sqrt(),
        rmse_elevation: (el / k).sqrt(),
        rmse_range: (rg / k).sqrt(),
        positioning_error: (pos / k).sqrt(),
    })
}

/// Statistics of one error column across trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    /// Root of the mean of squared per-trial values.
    pub rms: f64,
    pub mean: f64,
    pub median: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Some(Summary {
        count: values.len(),
        rms: (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        mean: values.iter().sum::<f64>() / n,
        median,
    })
}
