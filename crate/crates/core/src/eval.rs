//! Model evaluation: regression errors, rank correlation, distribution
//! comparison, and agreement rates.
//!
//! Conventions, echoed in the report JSON:
//!
//! * Spearman's rho uses midranks for ties and the Student-t approximation
//!   `t = rho * sqrt((n-2) / (1-rho^2))` for its two-sided p-value
//!   (rho = +-1 maps to p = 0); an exact permutation p-value is available
//!   for n <= 10.
//! * The Mann-Whitney U statistic is reported for the first sample
//!   (predictions), ties counting 1/2. The two-sided p-value is exact by
//!   enumeration when m + n <= 16, otherwise a normal approximation with
//!   tie and continuity corrections.
//! * Agreement rounds both sides to integers (halves away from zero);
//!   exact agreement (EAR) requires equality, adjacent agreement (AAR)
//!   allows a distance of one and includes exact matches.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::data::{DataProvenance, ScalerMode};
use crate::error::{Error, Result};

/// Root-mean-square error and mean absolute error.
pub fn regression_errors(pred: &[f64], actual: &[f64]) -> Result<(f64, f64)> {
    check_paired(pred, actual)?;
    let n = pred.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (p, a) in pred.iter().zip(actual) {
        let d = p - a;
        sq += d * d;
        abs += d.abs();
    }
    Ok(((sq / n).sqrt(), abs / n))
}

fn check_paired(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::invalid("empty prediction vector"));
    }
    if pred.len() != actual.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions vs {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    if pred.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in evaluation input"));
    }
    Ok(())
}

/// Midranks (1-based, ties averaged).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average of ranks i+1..=j+1
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with its two-sided p-value.
///
/// Both fields are absent when either rank vector is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: Option<f64>,
    pub p: Option<f64>,
}

/// Spearman's rho via Pearson correlation of midranks. Needs n >= 3.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    check_paired(x, y)?;
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid("spearman: need at least 3 pairs"));
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let rho = match pearson(&rx, &ry) {
        Some(r) => r.clamp(-1.0, 1.0),
        None => return Ok(SpearmanResult { rho: None, p: None }),
    };
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(SpearmanResult {
        rho: Some(rho),
        p: Some(p),
    })
}

/// Exact permutation p-value for Spearman's rho, n <= 10.
///
/// Enumerates all n! orderings of `y`; the p-value is the fraction of
/// permutations with |rho| at least the observed |rho| (within 1e-12).
pub fn spearman_exact_p(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y)?;
    let n = x.len();
    if !(3..=10).contains(&n) {
        return Err(Error::invalid(
            "spearman_exact_p: defined for 3 <= n <= 10",
        ));
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let observed = match pearson(&rx, &ry) {
        Some(r) => r.abs(),
        None => return Err(Error::invalid("spearman_exact_p: constant input")),
    };

    let mut perm = ry.clone();
    let mut hits = 0usize;
    let mut total = 0usize;
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; n];
    let mut count_perm = |p: &[f64]| {
        total += 1;
        if let Some(r) = pearson(&rx, p) {
            if r.abs() >= observed - 1e-12 {
                hits += 1;
            }
        }
    };
    count_perm(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            count_perm(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        num += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx <= 0.0 || vy <= 0.0 {
        None
    } else {
        Some(num / (vx * vy).sqrt())
    }
}

/// How a Mann-Whitney p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MannWhitneyMethod {
    /// Enumeration of all group labelings (used when m + n <= 16).
    Exact,
    /// Normal approximation with tie and continuity corrections.
    NormalApprox,
}

/// U statistic for the first sample plus its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyResult {
    pub u: f64,
    pub p: f64,
    pub method: MannWhitneyMethod,
}

/// Mann-Whitney U test; the method is chosen by pooled size (exact when
/// m + n <= 16).
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult> {
    let method = if a.len() + b.len() <= 16 {
        MannWhitneyMethod::Exact
    } else {
        MannWhitneyMethod::NormalApprox
    };
    mann_whitney_u_with(a, b, method)
}

/// Mann-Whitney U test with an explicit p-value method.
pub fn mann_whitney_u_with(
    a: &[f64],
    b: &[f64],
    method: MannWhitneyMethod,
) -> Result<MannWhitneyResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("mann_whitney_u: empty sample"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("mann_whitney_u: non-finite value"));
    }
    let u = u_statistic(a, b);
    let p = match method {
        MannWhitneyMethod::Exact => {
            if a.len() + b.len() > 16 {
                return Err(Error::invalid(
                    "mann_whitney_u: exact enumeration limited to m + n <= 16",
                ));
            }
            exact_p(a, b, u)
        }
        MannWhitneyMethod::NormalApprox => normal_p(a, b, u),
    };
    Ok(MannWhitneyResult { u, p, method })
}

fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided exact p by enumerating all C(m+n, m) labelings of the pooled
/// values: the fraction with |U - mn/2| at least the observed distance.
fn exact_p(a: &[f64], b: &[f64], u_obs: f64) -> f64 {
    let m = a.len();
    let n = b.len();
    let total = m + n;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    // Pairwise comparison table: c[i][j] = score of pooled[i] vs pooled[j].
    let mut cmp = vec![0.0f64; total * total];
    for i in 0..total {
        for j in 0..total {
            cmp[i * total + j] = if pooled[i] > pooled[j] {
                1.0
            } else if pooled[i] == pooled[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    let center = (m * n) as f64 / 2.0;
    let d_obs = (u_obs - center).abs();
    let mut hits = 0u64;
    let mut count = 0u64;
    for mask in 0u32..(1u32 << total) {
        if mask.count_ones() as usize != m {
            continue;
        }
        count += 1;
        let mut u = 0.0;
        for i in 0..total {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in 0..total {
                if mask & (1 << j) == 0 {
                    u += cmp[i * total + j];
                }
            }
        }
        if (u - center).abs() >= d_obs - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / count as f64
}

/// Two-sided normal-approximation p with tie and continuity corrections.
fn normal_p(a: &[f64], b: &[f64], u: f64) -> f64 {
    let m = a.len() as f64;
    let n = b.len() as f64;
    let total = m + n;
    let mean = m * n / 2.0;

    // Tie correction over the pooled sample.
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1] == pooled[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = m * n / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let dist = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - dist.cdf(z))).clamp(0.0, 1.0)
}

/// Exact and adjacent agreement rates on integer-rounded values.
pub fn agreement_rates(pred: &[f64], actual: &[f64]) -> Result<(f64, f64)> {
    check_paired(pred, actual)?;
    let n = pred.len() as f64;
    let mut exact = 0usize;
    let mut adjacent = 0usize;
    for (p, a) in pred.iter().zip(actual) {
        // f64::round rounds halves away from zero.
        let d = (p.round() - a.round()).abs();
        if d == 0.0 {
            exact += 1;
        }
        if d <= 1.0 {
            adjacent += 1;
        }
    }
    Ok((exact as f64 / n, adjacent as f64 / n))
}

/// Provenance block recorded in every evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProvenance {
    pub data: DataProvenance,
    pub seed: u64,
    pub scaler_mode: ScalerMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

/// The six-metric evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    pub spearman_rho: Option<f64>,
    pub spearman_p: Option<f64>,
    pub mann_whitney_u: f64,
    pub mann_whitney_p: f64,
    pub mann_whitney_method: MannWhitneyMethod,
    pub ear: f64,
    pub aar: f64,
    pub provenance: EvalProvenance,
}

/// Run the full metric suite on paired predictions and ground truth.
pub fn evaluate(pred: &[f64], actual: &[f64], provenance: EvalProvenance) -> Result<EvalReport> {
    check_paired(pred, actual)?;
    if pred.len() < 3 {
        return Err(Error::invalid("evaluate: need at least 3 pairs"));
    }
    let (rmse, mae) = regression_errors(pred, actual)?;
    let sp = spearman(pred, actual)?;
    let mw = mann_whitney_u(pred, actual)?;
    let (ear, aar) = agreement_rates(pred, actual)?;
    debug_assert!(rmse >= mae - 1e-12, "rmse {rmse} must dominate mae {mae}");
    debug_assert!(ear <= aar);
    Ok(EvalReport {
        n: pred.len(),
        rmse,
        mae,
        spearman_rho: sp.rho,
        spearman_p: sp.p,
        mann_whitney_u: mw.u,
        mann_whitney_p: mw.p,
        mann_whitney_method: mw.method,
        ear,
        aar,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn errors_known_pair() {
        let (rmse, mae) = regression_errors(&[1.0, 2.0], &[1.0, 4.0]).unwrap();
        assert!((rmse - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae, 1.0);
    }

    #[test]
    fn errors_reject_bad_input() {
        assert!(regression_errors(&[], &[]).is_err());
        assert!(regression_errors(&[1.0], &[1.0, 2.0]).is_err());
        assert!(regression_errors(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn spearman_known_values() {
        let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert!((r.rho.unwrap() - (-0.5)).abs() < 1e-12);

        // Midrank ties: Y = [5,6,7,8,7] -> ranks [1,2,3.5,5,3.5].
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 6.0, 7.0, 8.0, 7.0]).unwrap();
        assert!((r.rho.unwrap() - 8.0 / 95.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spearman_perfect_and_degenerate() {
        let perfect = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!(perfect.rho.unwrap(), 1.0);
        assert_eq!(perfect.p.unwrap(), 0.0);

        let constant = spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap();
        assert!(constant.rho.is_none());
        assert!(constant.p.is_none());

        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_exact_small() {
        // Perfect monotone triple: permutations with |rho| >= 1 are the two
        // monotone orders, so p = 2/6.
        let p = spearman_exact_p(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        assert!(spearman_exact_p(&[1.0; 11], &[1.0; 11]).is_err());
    }

    proptest! {
        #[test]
        fn spearman_monotone_invariant(ys in prop::collection::vec(-50.0f64..50.0, 5..40)) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let base = spearman(&xs, &ys).unwrap();
            let mapped: Vec<f64> = ys.iter().map(|v| (v * 0.1).exp() + 3.0 * v).collect();
            let transformed = spearman(&xs, &mapped).unwrap();
            match (base.rho, transformed.rho) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
            }
        }
    }

    #[test]
    fn mann_whitney_disjoint_groups() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, MannWhitneyMethod::Exact);
        // 20 labelings, the observed ranking is one extreme of 2.
        assert!((r.p - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mann_whitney_identical_groups() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.u, 4.5);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mann_whitney_sides_sum(a in prop::collection::vec(0.0f64..10.0, 1..7),
                                  b in prop::collection::vec(0.0f64..10.0, 1..7)) {
            let ua = mann_whitney_u(&a, &b).unwrap().u;
            let ub = mann_whitney_u(&b, &a).unwrap().u;
            prop_assert!((ua + ub - (a.len() * b.len()) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn mann_whitney_normal_close_to_exact_without_ties() {
        // All tie-free m = n = 5 inputs are rank-equivalent to a choice of 5
        // pooled positions out of 10; check every one of them.
        let pooled: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let mut max_diff: f64 = 0.0;
        for mask in 0u32..(1 << 10) {
            if mask.count_ones() != 5 {
                continue;
            }
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, &v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    a.push(v);
                } else {
                    b.push(v);
                }
            }
            let exact = mann_whitney_u_with(&a, &b, MannWhitneyMethod::Exact).unwrap();
            let approx = mann_whitney_u_with(&a, &b, MannWhitneyMethod::NormalApprox).unwrap();
            assert_eq!(exact.u, approx.u);
            max_diff = max_diff.max((exact.p - approx.p).abs());
        }
        assert!(
            max_diff <= 0.05,
            "normal approximation drifted {max_diff} from exact"
        );
    }

    #[test]
    fn mann_whitney_large_samples_use_normal_path() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64 + 0.5).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, MannWhitneyMethod::NormalApprox);
        assert!(r.p > 0.0 && r.p <= 1.0);
    }

    #[test]
    fn agreement_known_vectors() {
        let (ear, aar) = agreement_rates(&[5.4, 6.6, 3.2], &[5.1, 6.0, 5.0]).unwrap();
        assert!((ear - 1.0 / 3.0).abs() < 1e-15);
        assert!((aar - 2.0 / 3.0).abs() < 1e-15);

        // 4.5 rounds away from zero to 5: adjacent to 4, not exact.
        let (ear, aar) = agreement_rates(&[4.5], &[4.0]).unwrap();
        assert_eq!(ear, 0.0);
        assert_eq!(aar, 1.0);
    }

    #[test]
    fn agreement_bounds_on_random_vectors() {
        let mut rng = rng_from_seed(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..30);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..8.0)).collect();
            let actual: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..8.0)).collect();
            let (ear, aar) = agreement_rates(&pred, &actual).unwrap();
            assert!(ear >= 0.0 && aar <= 1.0 && ear <= aar);
        }
    }

    #[test]
    fn evaluate_perfect_predictions() {
        let provenance = EvalProvenance {
            data: DataProvenance::Raw,
            seed: 0,
            scaler_mode: ScalerMode::FitOnTrain,
            model: None,
        };
        let v = [3.0, 4.0, 5.0, 6.0];
        let report = evaluate(&v, &v, provenance).unwrap();
        assert_eq!(report.rmse, 0.0);
        assert_eq!(report.mae, 0.0);
        assert_eq!(report.spearman_rho.unwrap(), 1.0);
        assert_eq!(report.ear, 1.0);
        assert_eq!(report.aar, 1.0);
        assert!((report.mann_whitney_p - 1.0).abs() < 1e-12);
        assert_eq!(report.mann_whitney_u, 8.0);
    }

    #[test]
    fn report_json_shape() {
        let provenance = EvalProvenance {
            data: DataProvenance::Augmented,
            seed: 7,
            scaler_mode: ScalerMode::FitOnTrain,
            model: Some("gbt".to_string()),
        };
        let report = evaluate(&[3.0, 4.0, 5.0], &[3.5, 4.0, 5.5], provenance).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "n",
            "rmse",
            "mae",
            "spearman_rho",
            "spearman_p",
            "mann_whitney_u",
            "mann_whitney_p",
            "ear",
            "aar",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(json["provenance"]["data"], "augmented");
        assert_eq!(json["provenance"]["scaler_mode"], "fit-on-train");
        let back: EvalReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
    }
}
