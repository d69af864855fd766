//! Per-load estimation of the characteristic rate constant `K`.
//!
//! The objective is the summed squared v and i residuals over the training
//! points, with an independent `K` for each load. Each `K(i)` enters only its
//! own point's residual, so the problem splits into one bounded scalar
//! minimization per point.
//!
//! Held-out loads take `K` from a piecewise-linear interpolation of the
//! fitted values in `(ln R_ext, ln K)`, clamped to the end values outside the
//! fitted range. The fitted profile can be split into two power-law regimes
//! by a continuous two-segment fit in the same log-log space.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{ExperimentalDataset, Record, Split};
use crate::electrochem::{
    growth_schedule, solve_operating_point, OperatingProblem, PolarizationPoint,
};
use crate::error::{Error, Result};
use crate::format::sci;
use crate::numeric::brent_minimize;
use crate::params::ModelParameters;

/// Default search interval for `K`, 1/m².
pub const DEFAULT_K_BOUNDS: (f64, f64) = (0.0, 1e3);

/// Relative tolerance on `K` for each scalar minimization.
pub const K_REL_TOL: f64 = 1e-10;

/// Geometric scan resolution used to bracket the minimum before refinement.
const SCAN_POINTS_PER_DECADE: usize = 4;
const SCAN_DECADES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEntry {
    /// External load, Ω.
    pub r_ext: f64,
    /// Rate constant, 1/m².
    pub k: f64,
    /// Point SSE at the fitted value; absent for profiles read from file.
    pub sse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedRateProfile {
    /// Sorted by ascending `r_ext`.
    pub entries: Vec<ProfileEntry>,
    pub breakpoint_index: Option<usize>,
    /// `(slope_low, slope_high)` of the two log-log regimes.
    pub slopes: Option<(f64, f64)>,
}

impl FittedRateProfile {
    /// Sorts the entries by load; rejects empty input, non-positive loads,
    /// negative `K` and duplicate loads.
    pub fn new(mut entries: Vec<ProfileEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::validation(
                "profile",
                "at least one entry is required",
            ));
        }
        for e in &entries {
            if !(e.r_ext.is_finite() && e.r_ext > 0.0) {
                return Err(Error::validation(
                    "r_ext_ohm",
                    format!("{} must be positive", e.r_ext),
                ));
            }
            if !(e.k.is_finite() && e.k >= 0.0) {
                return Err(Error::validation(
                    "k_per_m2",
                    format!("{} must be non-negative", e.k),
                ));
            }
        }
        entries.sort_by(|a, b| a.r_ext.total_cmp(&b.r_ext));
        if entries.windows(2).any(|w| w[0].r_ext == w[1].r_ext) {
            return Err(Error::validation("r_ext_ohm", "duplicate load in profile"));
        }
        Ok(Self {
            entries,
            breakpoint_index: None,
            slopes: None,
        })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(r_ext, k)| ProfileEntry {
                    r_ext,
                    k,
                    sse: None,
                })
                .collect(),
        )
    }

    pub fn load_range(&self) -> (f64, f64) {
        (
            self.entries[0].r_ext,
            self.entries[self.entries.len() - 1].r_ext,
        )
    }

    pub fn interpolate(&self, r_ext: f64) -> f64 {
        interpolate_k(self, r_ext)
    }

    /// Profile file: CSV `r_ext_ohm,k_per_m2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_ext_ohm,k_per_m2\n");
        for e in &self.entries {
            out.push_str(&format!("{},{}\n", sci(e.r_ext), sci(e.k)));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != ["r_ext_ohm", "k_per_m2"] {
            return Err(Error::Parse {
                line: 1,
                message: "profile header must be `r_ext_ohm,k_per_m2`".into(),
            });
        }
        let mut pairs = Vec::new();
        for (idx, rec) in reader.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{s}` is not a number"),
                })
            };
            pairs.push((num(&rec[0])?, num(&rec[1])?));
        }
        Self::from_pairs(&pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text)
    }
}

/// Fitted (or predicted) point with its residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResidual {
    /// 0-based index of the record in the dataset file.
    pub record_index: usize,
    pub r_ext: f64,
    pub k: f64,
    pub v_exp: f64,
    pub i_exp: f64,
    pub v_model: f64,
    pub i_model: f64,
}

impl PointResidual {
    pub fn residual_v(&self) -> f64 {
        self.v_exp - self.v_model
    }

    pub fn residual_i(&self) -> f64 {
        self.i_exp - self.i_model
    }

    pub fn sse(&self) -> f64 {
        self.residual_v().powi(2) + self.residual_i().powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub profile: FittedRateProfile,
    pub train_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    /// In dataset order.
    pub residuals: Vec<PointResidual>,
}

impl FitReport {
    pub fn total_sse(&self) -> f64 {
        self.residuals.iter().map(PointResidual::sse).sum()
    }

    /// CSV `r_ext_ohm,k_per_m2,sse,residual_v,residual_i`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_ext_ohm,k_per_m2,sse,residual_v,residual_i\n");
        for r in &self.residuals {
            let row = [r.r_ext, r.k, r.sse(), r.residual_v(), r.residual_i()]
                .map(sci)
                .join(",");
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    /// CSV of measured against predicted values.
    pub fn predictions_csv(&self) -> String {
        let mut out =
            String::from("r_ext_ohm,v_exp_volt,i_exp_amp,v_model_volt,i_model_amp,k_per_m2\n");
        for r in &self.residuals {
            let row = [r.r_ext, r.v_exp, r.i_exp, r.v_model, r.i_model, r.k]
                .map(sci)
                .join(",");
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// RMSE over both residual channels: `sqrt(SSE / (2 n))`.
pub fn rmse(total_sse: f64, points: usize) -> f64 {
    (total_sse / (2 * points) as f64).sqrt()
}

/// Result of a single-point fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFit {
    pub k: f64,
    pub sse: f64,
    pub point: PolarizationPoint,
}

fn point_sse(record: &Record, point: &PolarizationPoint) -> f64 {
    (record.v_exp - point.v).powi(2) + (record.i_exp - point.i).powi(2)
}

/// Fits `K` for one record at culture concentration `x`.
pub fn fit_point_k(
    record: &Record,
    x: f64,
    params: &ModelParameters,
    k_bounds: (f64, f64),
) -> Result<PointFit> {
    let (k_lo, k_hi) = k_bounds;
    if !(k_lo >= 0.0 && k_hi > k_lo && k_hi.is_finite()) {
        return Err(Error::Domain(format!(
            "K bounds [{k_lo}, {k_hi}] must satisfy 0 <= k_lo < k_hi"
        )));
    }
    let forward = |k: f64| -> Result<PolarizationPoint> {
        solve_operating_point(&OperatingProblem::new(record.r_ext, k, x, *params)?)
    };
    // Validates the problem once so the closure below cannot fail.
    forward(k_lo)?;
    let sse = |k: f64| {
        let pt = forward(k).expect("validated operating problem");
        point_sse(record, &pt)
    };

    // The model current is monotone in K, so the SSE is unimodal; a coarse
    // geometric scan locates the basin.
    let floor = if k_lo > 0.0 {
        k_lo
    } else {
        k_hi * 10f64.powi(-(SCAN_DECADES as i32))
    };
    let steps = ((k_hi / floor).log10() * SCAN_POINTS_PER_DECADE as f64).ceil() as usize;
    let mut grid = Vec::with_capacity(steps + 2);
    if k_lo < floor {
        grid.push(k_lo);
    }
    for s in 0..=steps {
        let k = floor * (k_hi / floor).powf(s as f64 / steps as f64);
        grid.push(k.min(k_hi));
    }
    *grid.last_mut().expect("non-empty grid") = k_hi;
    let values: Vec<f64> = grid.iter().map(|&k| sse(k)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < values[best] { i } else { best });

    let (mut k_best, mut sse_best) = (grid[best], values[best]);
    if sse_best > 0.0 {
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(grid.len() - 1)];
        let (k_ref, sse_ref) = brent_minimize(sse, a, b, K_REL_TOL, f64::MIN_POSITIVE);
        if sse_ref <= sse_best {
            k_best = k_ref;
            sse_best = sse_ref;
        }
    }

    // A minimum on the saturated plateau next to k_hi is indistinguishable
    // from one at k_hi.
    let sse_at_hi = values[values.len() - 1];
    if k_best >= k_hi * (1.0 - 1e-9) || sse_at_hi - sse_best <= 1e-9 * sse_best {
        return Err(Error::BoundHit {
            k_hi,
            sse: sse_best,
        });
    }
    let point = forward(k_best)?;
    Ok(PointFit {
        k: k_best,
        sse: point_sse(record, &point),
        point,
    })
}

fn check_dwell(dwell: f64) -> Result<()> {
    if dwell >= 0.0 && dwell.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("dwell {dwell} must be non-negative")))
    }
}

/// Fits `K` for every training record. Training records are visited in file
/// order with the culture advanced by `dwell` seconds before each one.
pub fn fit_dataset(
    data: &ExperimentalDataset,
    params: &ModelParameters,
    dwell: f64,
    k_bounds: (f64, f64),
) -> Result<FitReport> {
    check_dwell(dwell)?;
    let train: Vec<(usize, &Record)> = data.subset(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::validation(
            "split",
            "dataset has no training records",
        ));
    }
    let schedule = growth_schedule(train.len(), params, dwell)?;

    let mut residuals = Vec::with_capacity(train.len());
    let mut entries = Vec::with_capacity(train.len());
    for ((index, record), state) in train.into_iter().zip(schedule) {
        let fit = fit_point_k(record, state.x, params, k_bounds).map_err(|e| Error::AtRecord {
            index: index + 1,
            source: Box::new(e),
        })?;
        entries.push(ProfileEntry {
            r_ext: record.r_ext,
            k: fit.k,
            sse: Some(fit.sse),
        });
        residuals.push(PointResidual {
            record_index: index,
            r_ext: record.r_ext,
            k: fit.k,
            v_exp: record.v_exp,
            i_exp: record.i_exp,
            v_model: fit.point.v,
            i_model: fit.point.i,
        });
    }

    let mut profile = FittedRateProfile::new(entries)?;
    if profile.entries.len() >= 4 && profile.entries.iter().all(|e| e.k > 0.0) {
        let regimes = segment_regimes(&profile)?;
        profile.breakpoint_index = Some(regimes.breakpoint_index);
        profile.slopes = Some((regimes.slope_low, regimes.slope_high));
    }
    let total: f64 = residuals.iter().map(PointResidual::sse).sum();
    let n = residuals.len();
    Ok(FitReport {
        profile,
        train_rmse: Some(rmse(total, n)),
        test_rmse: None,
        residuals,
    })
}

/// `K` at `r_ext` by log-log piecewise-linear interpolation of the profile.
/// Queries outside the fitted range take the nearest end value. A segment
/// with a zero `K` at either end is interpolated linearly in `(R_ext, K)`.
pub fn interpolate_k(profile: &FittedRateProfile, r_ext: f64) -> f64 {
    let e = &profile.entries;
    let first = e[0];
    let last = e[e.len() - 1];
    if r_ext <= first.r_ext {
        return first.k;
    }
    if r_ext >= last.r_ext {
        return last.k;
    }
    let hi = e.partition_point(|p| p.r_ext < r_ext);
    if e[hi].r_ext == r_ext {
        return e[hi].k;
    }
    let (a, b) = (e[hi - 1], e[hi]);
    let k = if a.k > 0.0 && b.k > 0.0 {
        let t = (r_ext.ln() - a.r_ext.ln()) / (b.r_ext.ln() - a.r_ext.ln());
        (a.k.ln() + t * (b.k.ln() - a.k.ln())).exp()
    } else {
        let t = (r_ext - a.r_ext) / (b.r_ext - a.r_ext);
        a.k + t * (b.k - a.k)
    };
    k.clamp(a.k.min(b.k), a.k.max(b.k))
}

/// Predicts every test record with interpolated `K` and reports the test
/// RMSE. Test records are visited in file order with the same dwell
/// convention as fitting.
pub fn validate(
    data: &ExperimentalDataset,
    profile: &FittedRateProfile,
    params: &ModelParameters,
    dwell: f64,
) -> Result<FitReport> {
    check_dwell(dwell)?;
    let test: Vec<(usize, &Record)> = data.subset(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::validation("split", "dataset has no test records"));
    }
    let schedule = growth_schedule(test.len(), params, dwell)?;
    let mut residuals = Vec::with_capacity(test.len());
    for ((index, record), state) in test.into_iter().zip(schedule) {
        let k = interpolate_k(profile, record.r_ext);
        let point = OperatingProblem::new(record.r_ext, k, state.x, *params)
            .and_then(|p| solve_operating_point(&p))
            .map_err(|e| Error::AtRecord {
                index: index + 1,
                source: Box::new(e),
            })?;
        residuals.push(PointResidual {
            record_index: index,
            r_ext: record.r_ext,
            k,
            v_exp: record.v_exp,
            i_exp: record.i_exp,
            v_model: point.v,
            i_model: point.i,
        });
    }
    let total: f64 = residuals.iter().map(PointResidual::sse).sum();
    let n = residuals.len();
    Ok(FitReport {
        profile: profile.clone(),
        train_rmse: None,
        test_rmse: Some(rmse(total, n)),
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSplit {
    /// Index (into the sorted profile) of the first entry of the high-load
    /// regime; the two segments meet at this entry's load.
    pub breakpoint_index: usize,
    pub breakpoint_r_ext: f64,
    pub slope_low: f64,
    pub slope_high: f64,
    /// Residual sum of squares of the best fit, in (ln K)².
    pub rss: f64,
}

/// Continuous two-segment least-squares fit of `ln K` against `ln R_ext`.
///
/// Every admissible knot position is tried: the knot sits at entry `b` and
/// each regime keeps at least two entries (`2 <= b <= n - 2`). Exact ties in
/// residual (within rounding) go to the smallest index.
pub fn segment_regimes(profile: &FittedRateProfile) -> Result<RegimeSplit> {
    let n = profile.entries.len();
    if n < 4 {
        return Err(Error::Degenerate(format!(
            "regime segmentation needs at least 4 entries, got {n}"
        )));
    }
    if let Some(e) = profile.entries.iter().find(|e| !(e.k > 0.0)) {
        return Err(Error::Degenerate(format!(
            "K = {} at R_ext = {} has no logarithm",
            e.k, e.r_ext
        )));
    }
    let xs: Vec<f64> = profile.entries.iter().map(|e| e.r_ext.ln()).collect();
    let ys = DVector::from_iterator(n, profile.entries.iter().map(|e| e.k.ln()));
    let y_mean = ys.mean();
    let spread: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let tie = 1e-12 * (1.0 + spread);

    let mut best: Option<RegimeSplit> = None;
    for b in 2..=n - 2 {
        let knot = xs[b];
        let design = DMatrix::from_fn(n, 3, |row, col| match col {
            0 => 1.0,
            1 => (xs[row] - knot).min(0.0),
            _ => (xs[row] - knot).max(0.0),
        });
        let svd = design.clone().svd(true, true);
        let coef = svd
            .solve(&ys, 1e-14)
            .map_err(|e| Error::Degenerate(e.to_string()))?;
        let rss = (&design * &coef - &ys).norm_squared();
        let candidate = RegimeSplit {
            breakpoint_index: b,
            breakpoint_r_ext: profile.entries[b].r_ext,
            slope_low: coef[1],
            slope_high: coef[2],
            rss,
        };
        match best {
            Some(ref cur) if rss >= cur.rss - tie => {}
            _ => best = Some(candidate),
        }
    }
    Ok(best.expect("at least one admissible knot"))
}
