//! Sweeps over SNR and user count.

use rayon::prelude::*;

use crate::config::Method;
use crate::scene::trial_seed;
use crate::trial::{run_trial, Context, MetricsRow};
use crate::HarnessError;

/// Runs every `(snr, k, trial)` point in parallel and returns the rows in
/// canonical order.
pub fn run_points(ctx: &Context, points: &[(f64, usize)]) -> Result<Vec<MetricsRow>, HarnessError> {
    let cfg = &ctx.config;
    let tasks: Vec<(f64, usize, usize)> = points
        .iter()
        .flat_map(|&(snr, k)| (0..cfg.trials).map(move |t| (snr, k, t)))
        .collect();
    let total = tasks.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let chunks: Vec<Vec<MetricsRow>> = tasks
        .par_iter()
        .map(|&(snr, k, t)| {
            let rows = run_trial(ctx, snr, k, t, trial_seed(cfg.seeds.base, k, t));
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            log::info!("trial {n}/{total} done (snr {snr} dB, k {k}, trial {t})");
            rows
        })
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<MetricsRow> = chunks.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

fn method_rank(name: &str) -> usize {
    Method::ALL.iter().position(|m| m.name() == name).unwrap_or(usize::MAX)
}

/// Canonical order: method, user count, SNR, trial.
pub fn sort_rows(rows: &mut [MetricsRow]) {
    rows.sort_by(|a, b| {
        method_rank(&a.method)
            .cmp(&method_rank(&b.method))
            .then(a.method.cmp(&b.method))
            .then(a.k.cmp(&b.k))
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.trial.cmp(&b.trial))
    });
}

/// RMSE versus SNR at the configured user count.
pub fn run_rmse_vs_snr(ctx: &Context) -> Result<Vec<MetricsRow>, HarnessError> {
    let k = ctx.config.sweep.k;
    let points: Vec<(f64, usize)> = ctx.config.sweep.snr_db.iter().map(|&s| (s, k)).collect();
    run_points(ctx, &points)
}

/// Positioning error versus user count at a fixed SNR.
pub fn run_error_vs_k(ctx: &Context) -> Result<Vec<MetricsRow>, HarnessError> {
    let snr = ctx.config.sweep.k_snr_db;
    let points: Vec<(f64, usize)> = ctx.config.sweep.k_list.iter().map(|&k| (snr, k)).collect();
    run_points(ctx, &points)
}
