//! Technical and market-environment features feeding the jump model.
//!
//! All features at date `t` use only data dated `t` or earlier. Returns-based
//! indicators are computed on a cumulative active-return level path so RSI,
//! %K and MACD stay well defined.

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{cumulative_index, AlignedPanel, PriceIndex, ReturnSeries};
use crate::TRADING_DAYS;

/// Feature family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    EwmaReturn,
    Rsi,
    StochK,
    Macd,
    DownsideDevLog,
    ActiveBeta,
    MktReturn,
    VixLogDiff,
    Y2Diff,
    SlopeDiff,
}

/// One feature to compute: a family plus its window length(s).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub windows: Vec<usize>,
}

impl FeatureSpec {
    fn new(name: String, kind: FeatureKind, windows: Vec<usize>) -> Result<Self> {
        if windows.iter().any(|w| *w < 2) {
            return Err(Error::invalid(format!("{name}: windows must be >= 2")));
        }
        if kind == FeatureKind::Macd && (windows.len() != 2 || windows[0] >= windows[1]) {
            return Err(Error::invalid(format!(
                "{name}: MACD needs two windows with short < long"
            )));
        }
        Ok(Self {
            name,
            kind,
            windows,
        })
    }
}

/// Window overrides for the fixed feature set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Windows for the EWMA return, RSI and %K families.
    pub return_windows: Vec<usize>,
    /// (short, long) pairs for MACD.
    pub macd_pairs: Vec<(usize, usize)>,
    pub downside_window: usize,
    pub beta_window: usize,
    /// Window for the market-environment features.
    pub env_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            return_windows: vec![8, 21, 63],
            macd_pairs: vec![(8, 21), (21, 63)],
            downside_window: 21,
            beta_window: 21,
            env_window: 21,
        }
    }
}

impl FeatureConfig {
    /// Expand the configuration into the ordered feature list.
    pub fn specs(&self) -> Result<Vec<FeatureSpec>> {
        let mut out = Vec::new();
        for &w in &self.return_windows {
            out.push(FeatureSpec::new(
                format!("r_factor_{w}"),
                FeatureKind::EwmaReturn,
                vec![w],
            )?);
        }
        for &w in &self.return_windows {
            out.push(FeatureSpec::new(format!("rsi_{w}"), FeatureKind::Rsi, vec![w])?);
        }
        for &w in &self.return_windows {
            out.push(FeatureSpec::new(
                format!("pct_k_{w}"),
                FeatureKind::StochK,
                vec![w],
            )?);
        }
        for &(s, l) in &self.macd_pairs {
            out.push(FeatureSpec::new(
                format!("macd_{s}_{l}"),
                FeatureKind::Macd,
                vec![s, l],
            )?);
        }
        out.push(FeatureSpec::new(
            format!("log_dd_{}", self.downside_window),
            FeatureKind::DownsideDevLog,
            vec![self.downside_window],
        )?);
        out.push(FeatureSpec::new(
            format!("beta_{}", self.beta_window),
            FeatureKind::ActiveBeta,
            vec![self.beta_window],
        )?);
        let we = self.env_window;
        out.push(FeatureSpec::new(
            format!("r_mkt_{we}"),
            FeatureKind::MktReturn,
            vec![we],
        )?);
        out.push(FeatureSpec::new(
            format!("r_vix_{we}"),
            FeatureKind::VixLogDiff,
            vec![we],
        )?);
        out.push(FeatureSpec::new(
            format!("y2_diff_{we}"),
            FeatureKind::Y2Diff,
            vec![we],
        )?);
        out.push(FeatureSpec::new(
            format!("y10y2_diff_{we}"),
            FeatureKind::SlopeDiff,
            vec![we],
        )?);
        Ok(out)
    }

    /// Rows to drop before the features are considered seasoned.
    pub fn warmup(&self) -> usize {
        let mut m = self.env_window.max(self.downside_window).max(self.beta_window);
        for w in &self.return_windows {
            m = m.max(*w);
        }
        for (s, l) in &self.macd_pairs {
            m = m.max(*s).max(*l);
        }
        m
    }
}

/// Per-feature standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Identity transform (mean 0, std 1) of dimension `d`.
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }
}

/// T×D feature observations with names and the standardization applied.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub x: Array2<f64>,
    /// Present once the matrix has been z-scored.
    pub stats: Option<FeatureStats>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.x.row(t)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Copy of rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            dates: self.dates[start..end].to_vec(),
            names: self.names.clone(),
            x: self.x.slice(ndarray::s![start..end, ..]).to_owned(),
            stats: self.stats.clone(),
        }
    }
}

/// Exponentially weighted moving average with span-convention decay
/// `alpha = 2 / (window + 1)`, initialized at the first observation.
pub fn ewma(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::invalid("ewma of empty series"));
    }
    if window < 2 {
        return Err(Error::invalid("ewma window must be >= 2"));
    }
    let alpha = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(series.len());
    let mut state = series[0];
    out.push(state);
    for v in &series[1..] {
        state = alpha * v + (1.0 - alpha) * state;
        out.push(state);
    }
    Ok(out)
}

fn rsi_from_levels(levels: &[f64], window: usize) -> Result<Vec<f64>> {
    let n = levels.len().saturating_sub(1);
    let mut gains = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n);
    for w in levels.windows(2) {
        let d = w[1] - w[0];
        gains.push(d.max(0.0));
        losses.push((-d).max(0.0));
    }
    let eg = ewma(&gains, window)?;
    let el = ewma(&losses, window)?;
    Ok(eg
        .iter()
        .zip(&el)
        .map(|(g, l)| {
            let denom = g + l;
            if denom == 0.0 {
                50.0
            } else {
                100.0 * g / denom
            }
        })
        .collect())
}

/// Relative strength index on a level path, in `[0, 100]`.
pub fn rsi(index: &PriceIndex, window: usize) -> Result<Vec<f64>> {
    rsi_from_levels(index.levels(), window)
}

fn stochastic_k_from_levels(levels: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::invalid("%K window must be >= 2"));
    }
    let mut out = Vec::with_capacity(levels.len().saturating_sub(1));
    for t in 1..levels.len() {
        let lo = t.saturating_sub(window - 1);
        let slice = &levels[lo..=t];
        let mut mn = f64::INFINITY;
        let mut mx = f64::NEG_INFINITY;
        for v in slice {
            mn = mn.min(*v);
            mx = mx.max(*v);
        }
        out.push(if mx == mn {
            50.0
        } else {
            100.0 * (levels[t] - mn) / (mx - mn)
        });
    }
    Ok(out)
}

/// Stochastic oscillator %K over a trailing rolling window, in `[0, 100]`.
pub fn stochastic_k(index: &PriceIndex, window: usize) -> Result<Vec<f64>> {
    stochastic_k_from_levels(index.levels(), window)
}

fn macd_from_levels(levels: &[f64], short: usize, long: usize) -> Result<Vec<f64>> {
    if short >= long {
        return Err(Error::invalid("MACD short window must be < long window"));
    }
    let es = ewma(levels, short)?;
    let el = ewma(levels, long)?;
    Ok((1..levels.len())
        .map(|t| 100.0 * (es[t] - el[t]) / levels[t])
        .collect())
}

/// MACD as a percentage of the current level.
pub fn macd(index: &PriceIndex, short: usize, long: usize) -> Result<Vec<f64>> {
    macd_from_levels(index.levels(), short, long)
}

const DD_EPS: f64 = 1e-8;

/// Log of annualized downside deviation, `log(sqrt(2) * sqrt(252) * DD + eps)`.
///
/// The `sqrt(2)` aligns the one-sided deviation with a two-sided volatility.
pub fn downside_deviation(r: &ReturnSeries, window: usize) -> Result<Vec<f64>> {
    let sq: Vec<f64> = r.values().iter().map(|v| v.min(0.0).powi(2)).collect();
    let smoothed = ewma(&sq, window)?;
    Ok(smoothed
        .iter()
        .map(|m| (2.0_f64.sqrt() * TRADING_DAYS.sqrt() * m.max(0.0).sqrt() + DD_EPS).ln())
        .collect())
}

const VAR_FLOOR: f64 = 1e-12;

/// EWM regression slope of `active` on `market`, zero when the market
/// variance falls below the floor.
pub fn active_beta(active: &ReturnSeries, market: &ReturnSeries, window: usize) -> Result<Vec<f64>> {
    if active.dates() != market.dates() {
        return Err(Error::CalendarMismatch(
            "active and market series differ".into(),
        ));
    }
    if active.is_empty() {
        return Err(Error::invalid("active_beta of empty series"));
    }
    let alpha = 2.0 / (window as f64 + 1.0);
    let a = active.values();
    let m = market.values();
    let mut mean_a = a[0];
    let mut mean_m = m[0];
    let mut cov = 0.0;
    let mut var = 0.0;
    let mut out = Vec::with_capacity(a.len());
    out.push(0.0);
    for t in 1..a.len() {
        mean_a = alpha * a[t] + (1.0 - alpha) * mean_a;
        mean_m = alpha * m[t] + (1.0 - alpha) * mean_m;
        cov = alpha * (a[t] - mean_a) * (m[t] - mean_m) + (1.0 - alpha) * cov;
        var = alpha * (m[t] - mean_m).powi(2) + (1.0 - alpha) * var;
        out.push(if var < VAR_FLOOR { 0.0 } else { cov / var });
    }
    Ok(out)
}

fn diffs_with_leading_zero(levels: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(levels.len());
    out.push(0.0);
    for w in levels.windows(2) {
        out.push(w[1] - w[0]);
    }
    out
}

fn log_diffs_with_leading_zero(levels: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(levels.len());
    out.push(0.0);
    for w in levels.windows(2) {
        if w[0] <= 0.0 || w[1] <= 0.0 {
            return Err(Error::invalid("log-diff requires positive levels"));
        }
        out.push((w[1] / w[0]).ln());
    }
    Ok(out)
}

/// Compute the full feature matrix for one factor.
///
/// `market` is the market return in excess of the risk-free rate on the same
/// calendar as `factor_active`. `env` holds raw levels for `vix`, `y2` and
/// either `y10y2` or `y10`; it is forward-filled onto the factor calendar
/// before differencing. The leading `config.warmup()` rows are dropped.
pub fn build_features(
    factor_active: &ReturnSeries,
    market: &ReturnSeries,
    env: &AlignedPanel,
    config: &FeatureConfig,
) -> Result<FeatureMatrix> {
    if factor_active.dates() != market.dates() {
        return Err(Error::CalendarMismatch(
            "factor and market series differ".into(),
        ));
    }
    let specs = config.specs()?;
    let warmup = config.warmup();
    let t_total = factor_active.len();
    if t_total <= warmup {
        return Err(Error::InsufficientHistory(format!(
            "{t_total} observations with a warm-up of {warmup}"
        )));
    }

    let env = env.asof_align(factor_active.dates())?;
    let vix = env.column("vix")?;
    let y2 = env.column("y2")?;
    let slope: Vec<f64> = if env.has_column("y10y2") {
        env.column("y10y2")?.to_vec()
    } else {
        let y10 = env.column("y10")?;
        y10.iter().zip(y2).map(|(a, b)| a - b).collect()
    };

    let index = cumulative_index(factor_active);
    let vix_logdiff = log_diffs_with_leading_zero(vix)?;
    let y2_diff = diffs_with_leading_zero(y2);
    let slope_diff = diffs_with_leading_zero(&slope);

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(specs.len());
    for spec in &specs {
        let w = spec.windows[0];
        let col = match spec.kind {
            FeatureKind::EwmaReturn => ewma(factor_active.values(), w)?
                .into_iter()
                .map(|v| v * TRADING_DAYS)
                .collect(),
            FeatureKind::Rsi => rsi(&index, w)?,
            FeatureKind::StochK => stochastic_k(&index, w)?,
            FeatureKind::Macd => macd(&index, spec.windows[0], spec.windows[1])?,
            FeatureKind::DownsideDevLog => downside_deviation(factor_active, w)?,
            FeatureKind::ActiveBeta => active_beta(factor_active, market, w)?,
            FeatureKind::MktReturn => ewma(market.values(), w)?
                .into_iter()
                .map(|v| v * TRADING_DAYS)
                .collect(),
            FeatureKind::VixLogDiff => ewma(&vix_logdiff, w)?,
            FeatureKind::Y2Diff => ewma(&y2_diff, w)?
                .into_iter()
                .map(|v| v * TRADING_DAYS)
                .collect(),
            FeatureKind::SlopeDiff => ewma(&slope_diff, w)?
                .into_iter()
                .map(|v| v * TRADING_DAYS)
                .collect(),
        };
        debug_assert_eq!(col.len(), t_total);
        columns.push(col);
    }

    let t_keep = t_total - warmup;
    let d = specs.len();
    let mut x = Array2::zeros((t_keep, d));
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col[warmup..].iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite feature {} at row {i} after warm-up",
                    specs[j].name
                )));
            }
            x[[i, j]] = *v;
        }
    }

    Ok(FeatureMatrix {
        dates: factor_active.dates()[warmup..].to_vec(),
        names: specs.into_iter().map(|s| s.name).collect(),
        x,
        stats: None,
    })
}

const STD_FLOOR: f64 = 1e-8;

/// Z-score the feature matrix.
///
/// With `stats` absent, per-feature mean and standard deviation are computed
/// from `fm` itself and stored on the result; otherwise the given statistics
/// are applied (the train-then-apply path for online inference). A zero
/// standard deviation is floored at 1e-8 and logged.
pub fn standardize(fm: &FeatureMatrix, stats: Option<&FeatureStats>) -> Result<FeatureMatrix> {
    let d = fm.n_features();
    let t = fm.n_rows();
    if t == 0 {
        return Err(Error::invalid("standardize of empty feature matrix"));
    }
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != d || s.std.len() != d {
                return Err(Error::invalid("standardization stats dimension mismatch"));
            }
            s.clone()
        }
        None => {
            let mut mean = vec![0.0; d];
            let mut std = vec![0.0; d];
            for j in 0..d {
                let col = fm.x.column(j);
                let m = col.sum() / t as f64;
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64;
                mean[j] = m;
                let s = var.sqrt();
                if s < STD_FLOOR {
                    log::warn!(
                        "feature {} has zero variance; flooring std at {STD_FLOOR}",
                        fm.names[j]
                    );
                    std[j] = STD_FLOOR;
                } else {
                    std[j] = s;
                }
            }
            FeatureStats { mean, std }
        }
    };
    let mut x = fm.x.clone();
    for j in 0..d {
        let m = stats.mean[j];
        let s = stats.std[j];
        for v in x.column_mut(j) {
            *v = (*v - m) / s;
        }
    }
    Ok(FeatureMatrix {
        dates: fm.dates.clone(),
        names: fm.names.clone(),
        x,
        stats: Some(stats),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::business_days;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn dates(n: usize) -> Vec<NaiveDate> {
        business_days("2015-01-05".parse().unwrap(), n)
    }

    fn series(values: Vec<f64>) -> ReturnSeries {
        let d = dates(values.len());
        ReturnSeries::new(d, values).unwrap()
    }

    fn index_from_levels(levels: Vec<f64>) -> PriceIndex {
        // Rebuild through returns so the base invariant holds.
        let rets: Vec<f64> = levels.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        cumulative_index(&series(rets))
    }

    #[test]
    fn ewma_basics() {
        assert_eq!(ewma(&[3.0; 10], 5).unwrap(), vec![3.0; 10]);
        let out = ewma(&[1.0, 0.0], 3).unwrap();
        assert_eq!(out, vec![1.0, 0.5]);
        assert!(ewma(&[], 5).is_err());
    }

    #[test]
    fn ewma_long_window_approaches_running_mean() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let out = ewma(&xs, 100_000).unwrap();
        // With alpha -> 0 the smoother barely moves from the first value.
        assert!((out[3] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rsi_saturates_at_extremes() {
        let up = index_from_levels((0..30).map(|i| 1.0 + 0.01 * i as f64).collect());
        let out = rsi(&up, 8).unwrap();
        assert!(out[5..].iter().all(|v| (*v - 100.0).abs() < 1e-9));
        let down = index_from_levels((0..30).map(|i| 2.0 - 0.01 * i as f64).collect());
        let out = rsi(&down, 8).unwrap();
        assert!(out[5..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rsi_alternating_is_near_fifty() {
        // +delta then -delta forever; with a long window both smoothed terms converge.
        let mut level = 1.0;
        let mut levels = vec![level];
        for i in 0..400 {
            level += if i % 2 == 0 { 0.004 } else { -0.004 };
            levels.push(level);
        }
        let out = rsi_from_levels(&levels, 63).unwrap();
        // Independent recursion oracle on the same gains/losses.
        let alpha = 2.0 / 64.0;
        let first = levels[1] - levels[0];
        let mut eg = first.max(0.0);
        let mut el = (-first).max(0.0);
        for t in 2..levels.len() {
            let d = levels[t] - levels[t - 1];
            eg = alpha * d.max(0.0) + (1.0 - alpha) * eg;
            el = alpha * (-d).max(0.0) + (1.0 - alpha) * el;
        }
        let oracle = 100.0 * eg / (eg + el);
        assert!((out.last().unwrap() - oracle).abs() < 1e-10);
        assert!((out.last().unwrap() - 50.0).abs() < 1.0);
    }

    #[test]
    fn stochastic_k_extremes_and_flat() {
        let rising = index_from_levels((0..20).map(|i| 1.0 + 0.05 * i as f64).collect());
        let out = stochastic_k(&rising, 5).unwrap();
        assert!(out.iter().all(|v| (*v - 100.0).abs() < 1e-12));
        let falling = index_from_levels((0..20).map(|i| 3.0 - 0.05 * i as f64).collect());
        let out = stochastic_k(&falling, 5).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        let flat = cumulative_index(&series(vec![0.0; 10]));
        let out = stochastic_k(&flat, 5).unwrap();
        assert!(out.iter().all(|v| (*v - 50.0).abs() < 1e-12));
    }

    #[test]
    fn macd_constant_zero_and_trend_positive() {
        let flat = cumulative_index(&series(vec![0.0; 40]));
        let out = macd(&flat, 8, 21).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        let rising = cumulative_index(&series(vec![0.01; 40]));
        let out = macd(&rising, 8, 21).unwrap();
        assert!(out[10..].iter().all(|v| *v > 0.0));
        assert!(macd(&flat, 21, 8).is_err());
    }

    #[test]
    fn macd_matches_independent_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rets: Vec<f64> = (0..60)
            .map(|_| 0.002 + 0.01 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let idx = cumulative_index(&series(rets));
        let got = macd(&idx, 8, 21).unwrap();
        // Oracle: plain EWM recursions written out longhand.
        let levels = idx.levels();
        let (a_s, a_l) = (2.0 / 9.0, 2.0 / 22.0);
        let (mut es, mut el) = (levels[0], levels[0]);
        for t in 1..levels.len() {
            es = a_s * levels[t] + (1.0 - a_s) * es;
            el = a_l * levels[t] + (1.0 - a_l) * el;
            let oracle = 100.0 * (es - el) / levels[t];
            assert!((got[t - 1] - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn downside_deviation_floors_at_eps() {
        let out = downside_deviation(&series(vec![0.01; 50]), 21).unwrap();
        assert!(out.iter().all(|v| (*v - DD_EPS.ln()).abs() < 1e-9));
    }

    #[test]
    fn downside_deviation_tracks_volatility_for_symmetric_returns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sigma_daily = 0.15 / TRADING_DAYS.sqrt();
        let rets: Vec<f64> = (0..10_000)
            .map(|_| sigma_daily * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let feats = downside_deviation(&series(rets.clone()), 21).unwrap();
        let tail: Vec<f64> = feats[500..].iter().map(|v| v.exp()).collect();
        let mean_ann_dd = tail.iter().sum::<f64>() / tail.len() as f64;
        let sample_vol_ann = {
            let m = rets.iter().sum::<f64>() / rets.len() as f64;
            let var = rets.iter().map(|r| (r - m).powi(2)).sum::<f64>() / rets.len() as f64;
            var.sqrt() * TRADING_DAYS.sqrt()
        };
        assert!(
            (mean_ann_dd - sample_vol_ann).abs() / sample_vol_ann < 0.05,
            "sqrt(2)*DD {mean_ann_dd} vs vol {sample_vol_ann}"
        );
    }

    #[test]
    fn active_beta_exact_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m: Vec<f64> = (0..200)
            .map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ms = series(m.clone());
        let b = active_beta(&ms, &ms, 21).unwrap();
        assert!(b[5..].iter().all(|v| (*v - 1.0).abs() < 1e-10));
        let half = series(m.iter().map(|v| -0.5 * v).collect());
        let b = active_beta(&half, &ms, 21).unwrap();
        assert!(b[5..].iter().all(|v| (*v + 0.5).abs() < 1e-10));
    }

    #[test]
    fn active_beta_independent_noise_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5000;
        let m: Vec<f64> = (0..n)
            .map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let a: Vec<f64> = (0..n)
            .map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        // OLS slope oracle over the whole sample.
        let mean_m = m.iter().sum::<f64>() / n as f64;
        let mean_a = a.iter().sum::<f64>() / n as f64;
        let cov: f64 = m.iter().zip(&a).map(|(x, y)| (x - mean_m) * (y - mean_a)).sum();
        let var: f64 = m.iter().map(|x| (x - mean_m).powi(2)).sum();
        let ols = cov / var;
        let b = active_beta(&series(a), &series(m), 2500).unwrap();
        assert!((b.last().unwrap() - ols).abs() < 0.1);
        assert!(b.last().unwrap().abs() < 0.1);
    }

    fn env_panel(n: usize, vix: f64, y2: f64, y10: f64) -> AlignedPanel {
        AlignedPanel::new(
            dates(n),
            vec!["vix".into(), "y2".into(), "y10".into()],
            vec![vec![vix; n], vec![y2; n], vec![y10; n]],
        )
        .unwrap()
    }

    #[test]
    fn build_features_emits_seventeen_columns() {
        let n = 200;
        let active = series(vec![0.001; n]);
        let market = series(vec![0.0005; n]);
        let env = env_panel(n, 20.0, 4.0, 4.5);
        let fm = build_features(&active, &market, &env, &FeatureConfig::default()).unwrap();
        assert_eq!(fm.n_features(), 17);
        assert_eq!(fm.n_rows(), n - 63);
        assert_eq!(fm.dates.len(), n - 63);
    }

    #[test]
    fn build_features_neutral_on_degenerate_input() {
        let n = 150;
        let active = series(vec![0.0; n]);
        let market = series(vec![0.0; n]);
        let env = env_panel(n, 20.0, 4.0, 4.5);
        let fm = build_features(&active, &market, &env, &FeatureConfig::default()).unwrap();
        let col = |name: &str| {
            let j = fm.feature_index(name).unwrap();
            fm.x.column(j).to_vec()
        };
        assert!(col("r_factor_21").iter().all(|v| v.abs() < 1e-12));
        assert!(col("rsi_21").iter().all(|v| (*v - 50.0).abs() < 1e-9));
        assert!(col("pct_k_21").iter().all(|v| (*v - 50.0).abs() < 1e-9));
        assert!(col("macd_8_21").iter().all(|v| v.abs() < 1e-12));
        assert!(col("r_mkt_21").iter().all(|v| v.abs() < 1e-12));
        assert!(col("y2_diff_21").iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn build_features_requires_env_columns() {
        let n = 100;
        let active = series(vec![0.001; n]);
        let market = series(vec![0.0005; n]);
        let env = AlignedPanel::new(dates(n), vec!["vix".into()], vec![vec![20.0; n]]).unwrap();
        assert!(matches!(
            build_features(&active, &market, &env, &FeatureConfig::default()),
            Err(Error::MissingColumn(_))
        ));
    }

    fn random_inputs(n: usize, seed: u64) -> (ReturnSeries, ReturnSeries, AlignedPanel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let active = series(draw(0.005));
        let market = series(draw(0.01));
        let mut vix = vec![20.0];
        let mut y2 = vec![3.0];
        let mut y10 = vec![4.0];
        for i in 1..n {
            vix.push((vix[i - 1] + 0.3 * rng.sample::<f64, _>(StandardNormal)).max(5.0));
            y2.push(y2[i - 1] + 0.01 * rng.sample::<f64, _>(StandardNormal));
            y10.push(y10[i - 1] + 0.01 * rng.sample::<f64, _>(StandardNormal));
        }
        let env = AlignedPanel::new(
            dates(n),
            vec!["vix".into(), "y2".into(), "y10".into()],
            vec![vix, y2, y10],
        )
        .unwrap();
        (active, market, env)
    }

    #[test]
    fn features_are_causal_under_truncation() {
        let n = 300;
        let (active, market, env) = random_inputs(n, 17);
        let full = build_features(&active, &market, &env, &FeatureConfig::default()).unwrap();
        for cut in [150, 220, 299] {
            let truncated = build_features(
                &active.slice(0, cut),
                &market.slice(0, cut),
                &env.slice(0, cut),
                &FeatureConfig::default(),
            )
            .unwrap();
            for t in 0..truncated.n_rows() {
                for j in 0..truncated.n_features() {
                    assert_eq!(
                        truncated.x[[t, j]],
                        full.x[[t, j]],
                        "feature {} row {t} changed under truncation",
                        full.names[j]
                    );
                }
            }
        }
    }

    #[test]
    fn indicator_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut levels = vec![1.0];
        for _ in 0..120 {
            let r: f64 = 0.01 * rng.sample::<f64, _>(StandardNormal);
            let last = *levels.last().unwrap();
            levels.push(last * (1.0 + r));
        }
        let scaled: Vec<f64> = levels.iter().map(|v| 37.5 * v).collect();
        for w in [8, 21] {
            let a = rsi_from_levels(&levels, w).unwrap();
            let b = rsi_from_levels(&scaled, w).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
            let a = stochastic_k_from_levels(&levels, w).unwrap();
            let b = stochastic_k_from_levels(&scaled, w).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        let a = macd_from_levels(&levels, 8, 21).unwrap();
        let b = macd_from_levels(&scaled, 8, 21).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_zero_mean_unit_std() {
        let n = 250;
        let (active, market, env) = random_inputs(n, 29);
        let fm = build_features(&active, &market, &env, &FeatureConfig::default()).unwrap();
        let z = standardize(&fm, None).unwrap();
        let t = z.n_rows() as f64;
        for j in 0..z.n_features() {
            let col = z.x.column(j);
            let mean = col.sum() / t;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
            assert!(mean.abs() < 1e-10, "column {j} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-10, "column {j} std");
        }
        assert!(z.stats.is_some());
    }

    #[test]
    fn standardize_identity_stats_is_noop() {
        let n = 150;
        let (active, market, env) = random_inputs(n, 31);
        let fm = build_features(&active, &market, &env, &FeatureConfig::default()).unwrap();
        let z = standardize(&fm, Some(&FeatureStats::identity(fm.n_features()))).unwrap();
        assert_eq!(z.x, fm.x);
    }

    #[test]
    fn standardize_applies_train_stats_to_held_out_rows() {
        let n = 260;
        let (active, market, env) = random_inputs(n, 37);
        let fm = build_features(&active, &market, &env, &FeatureConfig::default()).unwrap();
        let train = fm.slice_rows(0, 120);
        let test = fm.slice_rows(120, fm.n_rows());
        let train_z = standardize(&train, None).unwrap();
        let stats = train_z.stats.clone().unwrap();
        let test_z = standardize(&test, Some(&stats)).unwrap();
        for t in 0..test.n_rows() {
            for j in 0..test.n_features() {
                let manual = (test.x[[t, j]] - stats.mean[j]) / stats.std[j];
                assert!((test_z.x[[t, j]] - manual).abs() < 1e-14);
            }
        }
    }
}
