//! Outer-bound rate regions, achievability conditions and the closed-form
//! operating points of the symmetric four-topology channel.

use std::fmt::Write as _;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ChannelParams;

/// Tolerance for facet membership of polygon vertices.
pub const VERTEX_TOL: f64 = 1e-9;
/// Float fallback tolerance for threshold comparisons.
pub const THRESHOLD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub r1: f64,
    pub r2: f64,
}

impl RatePair {
    pub fn new(r1: f64, r2: f64) -> Self {
        Self { r1, r2 }
    }

    pub fn sum(&self) -> f64 {
        self.r1 + self.r2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FacetLabel {
    Individual1,
    Individual2,
    Cross1,
    Cross2,
}

impl FacetLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FacetLabel::Individual1 => "individual-1",
            FacetLabel::Individual2 => "individual-2",
            FacetLabel::Cross1 => "cross-1",
            FacetLabel::Cross2 => "cross-2",
        }
    }
}

/// `a1·R1 + a2·R2 ≤ c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub label: FacetLabel,
    pub a1: f64,
    pub a2: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn slack(&self, p: RatePair) -> f64 {
        self.c - (self.a1 * p.r1 + self.a2 * p.r2)
    }
}

/// Convex polygon in the nonnegative quadrant. `vertices` run
/// counter-clockwise starting at the origin; facets that do not touch the
/// polygon stay in `halfplanes` but contribute no vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRegion {
    pub halfplanes: Vec<HalfPlane>,
    pub vertices: Vec<RatePair>,
}

impl RateRegion {
    pub fn facet(&self, label: FacetLabel) -> &HalfPlane {
        self.halfplanes
            .iter()
            .find(|h| h.label == label)
            .expect("every region carries all four facets")
    }

    pub fn contains(&self, p: RatePair, tol: f64) -> bool {
        p.r1 >= -tol && p.r2 >= -tol && self.halfplanes.iter().all(|h| h.slack(p) >= -tol)
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let twice: f64 = (0..n)
            .map(|k| {
                let (a, b) = (v[k], v[(k + 1) % n]);
                a.r1 * b.r2 - b.r1 * a.r2
            })
            .sum();
        twice.abs() / 2.0
    }

    /// Facet block followed by a vertex block.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("facet_label,a1,a2,c\n");
        for h in &self.halfplanes {
            writeln!(out, "{},{},{},{}", h.label.as_str(), h.a1, h.a2, h.c).unwrap();
        }
        out.push_str("vertex_x,vertex_y\n");
        for v in &self.vertices {
            writeln!(out, "{},{}", v.r1, v.r2).unwrap();
        }
        out
    }
}

/// Weight of `R_i` in the cross bound on `R_ī`, zero-based `i`.
pub fn beta(params: &ChannelParams, i: usize) -> Result<f64> {
    assert!(i < 2, "user index {i} out of range");
    let other = 1 - i;
    let denom = 1.0 - params.delta_tx[i];
    if denom <= 0.0 {
        return Err(Error::Degenerate(format!(
            "transmitter {} is never heard (delta_tx = 1)",
            i + 1
        )));
    }
    Ok(params.eps[other] * (1.0 - params.delta[other][i]) / denom)
}

pub fn outer_region(params: &ChannelParams) -> RateRegion {
    // A silent transmitter already has R_i ≤ 1 − δ_ii = 0, so its cross
    // weight is immaterial.
    let b1 = beta(params, 0).unwrap_or(0.0);
    let b2 = beta(params, 1).unwrap_or(0.0);
    let halfplanes = vec![
        HalfPlane {
            label: FacetLabel::Individual1,
            a1: 1.0,
            a2: 0.0,
            c: 1.0 - params.delta[0][0],
        },
        HalfPlane {
            label: FacetLabel::Individual2,
            a1: 0.0,
            a2: 1.0,
            c: 1.0 - params.delta[1][1],
        },
        HalfPlane {
            label: FacetLabel::Cross1,
            a1: b1,
            a2: 1.0,
            c: 1.0 - params.delta_rx[1],
        },
        HalfPlane {
            label: FacetLabel::Cross2,
            a1: 1.0,
            a2: b2,
            c: 1.0 - params.delta_rx[0],
        },
    ];
    let vertices = polygon_vertices(&halfplanes);
    RateRegion {
        halfplanes,
        vertices,
    }
}

fn polygon_vertices(halfplanes: &[HalfPlane]) -> Vec<RatePair> {
    // Lines: every facet plus the two axes.
    let mut lines: Vec<(f64, f64, f64)> = halfplanes.iter().map(|h| (h.a1, h.a2, h.c)).collect();
    lines.push((1.0, 0.0, 0.0));
    lines.push((0.0, 1.0, 0.0));
    let feasible = |p: RatePair| {
        p.r1 >= -VERTEX_TOL
            && p.r2 >= -VERTEX_TOL
            && halfplanes.iter().all(|h| h.slack(p) >= -VERTEX_TOL)
    };
    let mut pts: Vec<RatePair> = Vec::new();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (a, b, c) = lines[i];
            let (d, e, f) = lines[j];
            let det = a * e - b * d;
            if det.abs() < 1e-15 {
                continue;
            }
            let p = RatePair::new((c * e - b * f) / det, (a * f - c * d) / det);
            let p = RatePair::new(clean(p.r1), clean(p.r2));
            if feasible(p) && !pts.iter().any(|q| (q.r1 - p.r1).abs() < 1e-12 && (q.r2 - p.r2).abs() < 1e-12)
            {
                pts.push(p);
            }
        }
    }
    convex_hull_ccw_from_origin(pts)
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-15 {
        0.0
    } else {
        x
    }
}

fn cross(o: RatePair, a: RatePair, b: RatePair) -> f64 {
    (a.r1 - o.r1) * (b.r2 - o.r2) - (a.r2 - o.r2) * (b.r1 - o.r1)
}

/// Monotone-chain hull with collinear points dropped, rotated to start at
/// the origin.
fn convex_hull_ccw_from_origin(mut pts: Vec<RatePair>) -> Vec<RatePair> {
    pts.sort_by(|a, b| a.r1.total_cmp(&b.r1).then(a.r2.total_cmp(&b.r2)));
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<RatePair> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &RatePair>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-14 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if let Some(pos) = hull.iter().position(|p| p.r1 == 0.0 && p.r2 == 0.0) {
        hull.rotate_left(pos);
    }
    hull
}

/// Recovers `p/q` with small `q` if `x` is (to within rounding) such a
/// fraction, so that thresholds like ε = 2/3 compare exactly.
pub fn as_simple_ratio(x: f64) -> Option<Rational64> {
    if !x.is_finite() {
        return None;
    }
    for q in 1..=10_000i64 {
        let p = (x * q as f64).round();
        if (p / q as f64 - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            return Some(Rational64::new(p as i64, q));
        }
    }
    None
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// Closed-form thresholds that appear in the achievability discussion.
pub mod thresholds {
    use super::*;

    /// `δ(1+δ)`: below this ε the cross bounds are redundant.
    pub fn cross_redundant(delta: f64) -> f64 {
        delta * (1.0 + delta)
    }

    pub fn cross_redundant_exact(delta: Rational64) -> Rational64 {
        delta * (r(1, 1) + delta)
    }

    /// `1 / (1 + (1−2δ)⁺/(1+δ))`.
    pub fn sum_capacity(delta: f64) -> f64 {
        1.0 / (1.0 + (1.0 - 2.0 * delta).max(0.0) / (1.0 + delta))
    }

    pub fn sum_capacity_exact(delta: Rational64) -> Rational64 {
        let pos = (r(1, 1) - r(2, 1) * delta).max(r(0, 1));
        r(1, 1) / (r(1, 1) + pos / (r(1, 1) + delta))
    }

    /// `δ(1+δ)/(1−δ)`.
    pub fn corner(delta: f64) -> f64 {
        delta * (1.0 + delta) / (1.0 - delta)
    }

    pub fn corner_exact(delta: Rational64) -> Rational64 {
        delta * (r(1, 1) + delta) / (r(1, 1) - delta)
    }

    /// `(3−√5)/2`: for δ below it the sum-capacity condition already
    /// implies the whole-region condition.
    pub fn region_implied_delta() -> f64 {
        (3.0 - 5f64.sqrt()) / 2.0
    }

    /// `(√3−1)/2`: the δ at which, for ε = 1/2, the cross bound and the
    /// parallel bound give the same sum rate.
    pub fn half_cache_crossover_delta() -> f64 {
        (3f64.sqrt() - 1.0) / 2.0
    }
}

fn geq_threshold(eps: f64, delta: f64, exact: fn(Rational64) -> Rational64, float: fn(f64) -> f64) -> bool {
    match (as_simple_ratio(delta), as_simple_ratio(eps)) {
        (Some(d), Some(e)) => e >= exact(d),
        _ => eps >= float(delta) - THRESHOLD_TOL,
    }
}

/// Symmetric maximum-sum-rate point of the outer bound.
pub fn max_sum_rate_point(delta: f64, eps: f64) -> RatePair {
    if geq_threshold(eps, delta, thresholds::cross_redundant_exact, thresholds::cross_redundant) {
        let v = (1.0 + delta) * (1.0 - delta * delta) / (1.0 + delta + eps);
        RatePair::new(v, v)
    } else {
        RatePair::new(1.0 - delta, 1.0 - delta)
    }
}

/// Corner point where user 2 runs at its point-to-point rate.
pub fn corner_point(delta: f64, eps: f64) -> Result<RatePair> {
    if eps <= 0.0 {
        return Err(Error::Degenerate("corner point needs eps > 0".into()));
    }
    if !geq_threshold(eps, delta, thresholds::cross_redundant_exact, thresholds::cross_redundant) {
        return Err(Error::Scope(format!(
            "corner point requires eps >= delta(1+delta) = {}",
            thresholds::cross_redundant(delta)
        )));
    }
    Ok(RatePair::new(
        delta * (1.0 + delta) * (1.0 - delta) / eps,
        1.0 - delta,
    ))
}

pub fn sum_capacity_condition(delta: f64, eps: f64) -> bool {
    geq_threshold(eps, delta, thresholds::sum_capacity_exact, thresholds::sum_capacity)
}

pub fn sum_capacity_condition_exact(delta: Rational64, eps: Rational64) -> bool {
    eps >= thresholds::sum_capacity_exact(delta)
}

pub fn region_condition(delta: f64, eps: f64) -> Result<bool> {
    if delta >= 1.0 {
        return Err(Error::Degenerate("region condition undefined at delta = 1".into()));
    }
    Ok(sum_capacity_condition(delta, eps)
        && geq_threshold(eps, delta, thresholds::corner_exact, thresholds::corner))
}

pub fn region_condition_exact(delta: Rational64, eps: Rational64) -> Result<bool> {
    if delta >= r(1, 1) {
        return Err(Error::Degenerate("region condition undefined at delta = 1".into()));
    }
    Ok(eps >= thresholds::sum_capacity_exact(delta) && eps >= thresholds::corner_exact(delta))
}

/// `min{2(1−δ), 2(1+δ)(1−δ²)/(1+δ+ε)}`.
pub fn sum_rate_envelope(delta: f64, eps: f64) -> f64 {
    let parallel = 2.0 * (1.0 - delta);
    let cross = 2.0 * (1.0 + delta) * (1.0 - delta * delta) / (1.0 + delta + eps);
    parallel.min(cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::FourTopologyParams;
    use approx::assert_abs_diff_eq;

    fn sym(delta: f64, eps: f64) -> ChannelParams {
        ChannelParams::from_independent(delta, delta, delta, delta, eps, eps).unwrap()
    }

    fn four(delta: f64, eps: f64) -> ChannelParams {
        ChannelParams::from_four_topology(FourTopologyParams::new(delta, eps).unwrap()).unwrap()
    }

    fn assert_square(region: &RateRegion, side: f64) {
        let expected = [
            RatePair::new(0.0, 0.0),
            RatePair::new(side, 0.0),
            RatePair::new(side, side),
            RatePair::new(0.0, side),
        ];
        assert_eq!(region.vertices.len(), 4, "{:?}", region.vertices);
        for (v, e) in region.vertices.iter().zip(expected) {
            assert_abs_diff_eq!(v.r1, e.r1, epsilon = 1e-12);
            assert_abs_diff_eq!(v.r2, e.r2, epsilon = 1e-12);
        }
    }

    #[test]
    fn beta_symmetric_independent() {
        for &(d, e) in &[(0.1, 0.3), (0.25, 5.0 / 7.0), (0.6, 1.0)] {
            let p = sym(d, e);
            assert_abs_diff_eq!(beta(&p, 0).unwrap(), e / (1.0 + d), epsilon = 1e-12);
            assert_abs_diff_eq!(beta(&p, 1).unwrap(), e / (1.0 + d), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(beta(&sym(0.25, 5.0 / 7.0), 0).unwrap(), 4.0 / 7.0, epsilon = 1e-12);
        assert_eq!(beta(&sym(0.3, 0.0), 0).unwrap(), 0.0);
        assert!(matches!(beta(&sym(1.0, 0.5), 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn square_below_threshold() {
        assert_square(&outer_region(&four(0.25, 5.0 / 16.0)), 0.75);
        assert_square(&outer_region(&four(0.25, 0.2)), 0.75);
        assert_square(&outer_region(&four(0.0, 0.0)), 1.0);
    }

    #[test]
    fn no_cache_recovers_prior_cross_bound() {
        let d = 0.3;
        let reg = outer_region(&sym(d, 1.0));
        let f = reg.facet(FacetLabel::Cross1);
        assert_abs_diff_eq!(f.a1, 1.0 / (1.0 + d), epsilon = 1e-12);
        assert_abs_diff_eq!(f.c, 1.0 - d * d, epsilon = 1e-12);
        // Both cross facets cut both individual facets.
        assert_eq!(reg.vertices.len(), 6);
    }

    #[test]
    fn vertices_are_feasible_and_convex() {
        for k in 0..20 {
            for l in 0..20 {
                let (d, e) = (k as f64 / 20.0, l as f64 / 19.0);
                let reg = outer_region(&four(d, e));
                assert_eq!(reg.vertices[0], RatePair::new(0.0, 0.0));
                for v in &reg.vertices {
                    assert!(reg.contains(*v, VERTEX_TOL));
                }
                let n = reg.vertices.len();
                for i in 0..n {
                    let c = cross(reg.vertices[i], reg.vertices[(i + 1) % n], reg.vertices[(i + 2) % n]);
                    assert!(c >= -1e-12, "non-convex at {d},{e}");
                }
            }
        }
    }

    #[test]
    fn area_non_increasing_in_eps() {
        for k in 0..20 {
            let d = k as f64 / 20.0;
            let mut prev = f64::INFINITY;
            for l in 0..20 {
                let e = l as f64 / 19.0;
                let a = outer_region(&four(d, e)).area();
                assert!(a <= prev + 1e-12, "area grew at delta={d}, eps={e}");
                prev = a;
            }
        }
    }

    #[test]
    fn max_sum_rate_examples() {
        let p = max_sum_rate_point(0.2, 2.0 / 3.0);
        assert_abs_diff_eq!(p.r1, 0.617_142_857_142_857_1, epsilon = 1e-12);
        assert_eq!((p.r1 * 100.0).round() / 100.0, 0.62);
        let p = max_sum_rate_point(0.25, 5.0 / 7.0);
        assert_abs_diff_eq!(p.r1, 1.25 * 0.9375 / (1.25 + 5.0 / 7.0), epsilon = 1e-12);
        assert_abs_diff_eq!(p.r1, 0.596_590_909_090_909, epsilon = 1e-12);
        assert_eq!(max_sum_rate_point(0.3, 0.0), RatePair::new(0.7, 0.7));
    }

    #[test]
    fn corner_point_examples() {
        let c = corner_point(0.25, 5.0 / 7.0).unwrap();
        assert_abs_diff_eq!(c.r1, 0.328125, epsilon = 1e-12);
        assert_abs_diff_eq!(c.r2, 0.75, epsilon = 1e-12);
        assert_eq!(corner_point(0.0, 0.4).unwrap(), RatePair::new(0.0, 1.0));
        let d = 0.3;
        let c = corner_point(d, d * (1.0 + d)).unwrap();
        assert_abs_diff_eq!(c.r1, 1.0 - d, epsilon = 1e-12);
        assert_abs_diff_eq!(c.r2, 1.0 - d, epsilon = 1e-12);
        assert!(matches!(corner_point(0.2, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn operating_points_lie_in_region() {
        for k in 0..20 {
            for l in 0..=20 {
                let (d, e) = (k as f64 / 40.0, l as f64 / 20.0);
                let reg = outer_region(&four(d, e));
                assert!(reg.contains(max_sum_rate_point(d, e), VERTEX_TOL));
                if let Ok(c) = corner_point(d, e) {
                    assert!(reg.contains(c, VERTEX_TOL));
                    let f = reg.facet(FacetLabel::Cross1);
                    assert!(f.slack(c).abs() < 1e-12);
                    assert!((c.r2 - (1.0 - d)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sum_capacity_condition_examples() {
        assert_abs_diff_eq!(thresholds::sum_capacity(0.2), 2.0 / 3.0, epsilon = 1e-15);
        assert!(sum_capacity_condition(0.2, 2.0 / 3.0));
        assert!(!sum_capacity_condition(0.2, 2.0 / 3.0 - 1e-9));
        assert!(!sum_capacity_condition(0.75, 0.99));
        assert!(sum_capacity_condition(0.75, 1.0));
        assert!(sum_capacity_condition(0.0, 0.5));
        assert!(sum_capacity_condition_exact(r(1, 5), r(2, 3)));
        assert!(!sum_capacity_condition_exact(r(1, 5), r(2, 3) - r(1, 1_000_000)));
        for k in 0..=50 {
            let d = k as f64 / 100.0;
            assert_abs_diff_eq!(thresholds::sum_capacity(d), (1.0 + d) / (2.0 - d), epsilon = 1e-14);
        }
    }

    #[test]
    fn region_condition_examples() {
        assert!(region_condition(0.25, 5.0 / 7.0).unwrap());
        assert_abs_diff_eq!(thresholds::corner(0.25), 5.0 / 12.0, epsilon = 1e-15);
        assert!(!region_condition(0.45, 1.45 / 1.55).unwrap());
        assert!(thresholds::corner(0.45) > 1.0);
        assert!(matches!(region_condition(1.0, 1.0), Err(Error::Degenerate(_))));
        let cut = thresholds::region_implied_delta();
        for k in 0..=100 {
            let d = cut * k as f64 / 100.0;
            for l in 0..=20 {
                let e = l as f64 / 20.0;
                if sum_capacity_condition(d, e) {
                    assert!(region_condition(d, e).unwrap(), "delta={d}, eps={e}");
                }
            }
        }
        assert!(region_condition_exact(r(1, 4), r(5, 7)).unwrap());
    }

    #[test]
    fn envelope_examples() {
        assert_abs_diff_eq!(sum_rate_envelope(0.5, 0.75), 1.0, epsilon = 1e-15);
        assert_eq!(sum_rate_envelope(0.3, 0.0), 1.4);
        let x = thresholds::half_cache_crossover_delta();
        let parallel = |d: f64| 2.0 * (1.0 - d);
        assert!(sum_rate_envelope(x - 1e-3, 0.5) < parallel(x - 1e-3));
        assert_abs_diff_eq!(sum_rate_envelope(x + 1e-3, 0.5), parallel(x + 1e-3), epsilon = 1e-15);
        assert_abs_diff_eq!(thresholds::cross_redundant(x), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn envelope_switches_at_cross_threshold() {
        for k in 1..20 {
            let d = k as f64 / 20.0;
            let t = thresholds::cross_redundant(d);
            if t >= 1.0 {
                continue;
            }
            let parallel = 2.0 * (1.0 - d);
            assert_abs_diff_eq!(sum_rate_envelope(d, t - 1e-6), parallel, epsilon = 1e-15);
            assert!(sum_rate_envelope(d, t + 1e-6) < parallel);
            assert_abs_diff_eq!(sum_rate_envelope(d, t), parallel, epsilon = 1e-12);
        }
    }

    #[test]
    fn simple_ratio_recovery() {
        assert_eq!(as_simple_ratio(2.0 / 3.0), Some(r(2, 3)));
        assert_eq!(as_simple_ratio(0.2), Some(r(1, 5)));
        assert_eq!(as_simple_ratio(std::f64::consts::PI), None);
    }

    #[test]
    fn csv_layout() {
        let csv = outer_region(&four(0.25, 0.25)).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "facet_label,a1,a2,c");
        assert!(lines[1].starts_with("individual-1,"));
        assert_eq!(lines[5], "vertex_x,vertex_y");
        assert_eq!(lines[6], "0,0");
    }
}
