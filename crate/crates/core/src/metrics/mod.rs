//! Exact 1-Wasserstein distances between 2D point sets under Euclidean cost, and
//! the region-wise average over the 3x3 grid.

mod assignment;
mod transport;

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use assignment::min_cost_assignment;
pub use transport::transport_uniform;

use crate::data::PointSet2D;
use crate::error::{Error, Result};

/// Largest set size solved exactly by [`wasserstein1`]; larger sets are subsampled.
pub const EXACT_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct W1Report {
    pub value: f64,
    /// Sizes actually compared (after any subsampling).
    pub n_a: usize,
    pub n_b: usize,
    /// False when either side was subsampled.
    pub exact: bool,
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cost_matrix(a: &[[f64; 2]], b: &[[f64; 2]]) -> Vec<f64> {
    let mut cost = Vec::with_capacity(a.len() * b.len());
    for p in a {
        for q in b {
            cost.push(euclid(*p, *q));
        }
    }
    cost
}

fn projection_order(points: &[[f64; 2]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let ki = points[i][0] + points[i][1];
        let kj = points[j][0] + points[j][1];
        ki.total_cmp(&kj).then(i.cmp(&j))
    });
    order
}

/// Exact W1 between uniform empirical measures on `a` and `b`.
pub fn wasserstein1_exact(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Metric("W1 needs two nonempty sets".into()));
    }
    let cost = cost_matrix(a, b);
    if a.len() == b.len() {
        let n = a.len();
        let matching = min_cost_assignment(&cost, n);
        let total: f64 = matching
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .sum();
        Ok(total / n as f64)
    } else {
        transport_uniform(
            &cost,
            a.len(),
            b.len(),
            &projection_order(a),
            &projection_order(b),
        )
    }
}

/// W1 with the exact solver; sides larger than [`EXACT_LIMIT`] are reduced to a
/// seeded uniform subsample of that size first.
pub fn wasserstein1(a: &PointSet2D, b: &PointSet2D, seed: u64) -> Result<W1Report> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Metric(format!(
            "W1 needs two nonempty sets, got sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shrink = |pts: &[[f64; 2]]| -> Vec<[f64; 2]> {
        if pts.len() <= EXACT_LIMIT {
            pts.to_vec()
        } else {
            let mut idx = sample(&mut rng, pts.len(), EXACT_LIMIT).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pts[i]).collect()
        }
    };
    let sa = shrink(&a.points);
    let sb = shrink(&b.points);
    let exact = sa.len() == a.len() && sb.len() == b.len();
    Ok(W1Report {
        value: wasserstein1_exact(&sa, &sb)?,
        n_a: sa.len(),
        n_b: sb.len(),
        exact,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionW1 {
    pub region: usize,
    /// `None` when either side has no points in the region.
    pub value: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    /// Mean over regions where both sides are nonempty.
    pub mean: f64,
    pub regions: Vec<RegionW1>,
    pub warnings: Vec<String>,
}

/// Exact W1 inside each of the nine grid regions, averaged.
pub fn region_wise_w1(a: &PointSet2D, b: &PointSet2D, spacing: f64) -> Result<RegionReport> {
    let mut regions = Vec::with_capacity(9);
    let mut warnings = Vec::new();
    let mut sum = 0.0;
    let mut counted = 0;
    for id in 0..9 {
        let ra = a.region(id, spacing);
        let rb = b.region(id, spacing);
        let value = if ra.is_empty() || rb.is_empty() {
            warnings.push(format!(
                "region {id} skipped: {} vs {} points",
                ra.len(),
                rb.len()
            ));
            None
        } else {
            let v = wasserstein1_exact(&ra.points, &rb.points)?;
            sum += v;
            counted += 1;
            Some(v)
        };
        regions.push(RegionW1 {
            region: id,
            value,
            n_a: ra.len(),
            n_b: rb.len(),
        });
    }
    if counted == 0 {
        return Err(Error::Metric(
            "no region holds points from both sets".into(),
        ));
    }
    Ok(RegionReport {
        mean: sum / counted as f64,
        regions,
        warnings,
    })
}

/// Writes `metric,region,value,n_a,n_b,exact_flag` rows.
pub fn write_report<W: Write>(
    w: &mut W,
    global: Option<&W1Report>,
    regional: &RegionReport,
) -> std::io::Result<()> {
    writeln!(w, "metric,region,value,n_a,n_b,exact_flag")?;
    if let Some(g) = global {
        writeln!(
            w,
            "w1,all,{},{},{},{}",
            g.value,
            g.n_a,
            g.n_b,
            u8::from(g.exact)
        )?;
    }
    for r in &regional.regions {
        match r.value {
            Some(v) => writeln!(w, "region_w1,{},{v},{},{},1", r.region, r.n_a, r.n_b)?,
            None => writeln!(w, "region_w1,{},,{},{},skipped", r.region, r.n_a, r.n_b)?,
        }
    }
    let (na, nb) = regional
        .regions
        .iter()
        .fold((0, 0), |(x, y), r| (x + r.n_a, y + r.n_b));
    writeln!(w, "rw_w1,mean,{},{na},{nb},1", regional.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect()
    }

    fn brute_force(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        fn rec(a: &[[f64; 2]], b: &[[f64; 2]], used: &mut Vec<bool>, i: usize) -> f64 {
            if i == a.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..b.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(euclid(a[i], b[j]) + rec(a, b, used, i + 1));
                    used[j] = false;
                }
            }
            best
        }
        rec(a, b, &mut vec![false; b.len()], 0) / a.len() as f64
    }

    #[test]
    fn matches_permutation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=7 {
            let a = random_points(n, &mut rng);
            let b = random_points(n, &mut rng);
            let got = wasserstein1_exact(&a, &b).unwrap();
            assert!((got - brute_force(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn transport_matches_replicated_assignment() {
        // sizes 2 and 3: replicate each side to 6 points and match exhaustively
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let a = random_points(2, &mut rng);
            let b = random_points(3, &mut rng);
            let ra: Vec<_> = a.iter().flat_map(|p| [*p; 3]).collect();
            let rb: Vec<_> = b.iter().flat_map(|p| [*p; 2]).collect();
            let want = brute_force(&ra, &rb);
            let got = wasserstein1_exact(&a, &b).unwrap();
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn transport_agrees_with_assignment_on_equal_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_points(60, &mut rng);
        let b = random_points(60, &mut rng);
        let cost = cost_matrix(&a, &b);
        let via_simplex =
            transport_uniform(&cost, 60, 60, &projection_order(&a), &projection_order(&b)).unwrap();
        let via_assignment = wasserstein1_exact(&a, &b).unwrap();
        assert!((via_simplex - via_assignment).abs() < 1e-12);
    }

    #[test]
    fn translation_gives_shift_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_points(50, &mut rng);
        let d = [0.3, -0.4];
        let b: Vec<_> = a.iter().map(|p| [p[0] + d[0], p[1] + d[1]]).collect();
        let got = wasserstein1_exact(&a, &b).unwrap();
        assert!((got - 0.5).abs() < 1e-9);
    }

    #[test]
    fn empty_set_is_metric_error() {
        let a = PointSet2D::new(vec![]);
        let b = PointSet2D::new(vec![[0.0, 0.0]]);
        assert!(matches!(wasserstein1(&a, &b, 0), Err(Error::Metric(_))));
    }

    #[test]
    fn region_average_of_one_shifted_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for id in 0..9 {
            let cx = ((id % 3) as f64 - 1.0) * 3.0;
            let cy = ((id / 3) as f64 - 1.0) * 3.0;
            for p in random_points(20, &mut rng) {
                let q = [cx + 0.3 * p[0], cy + 0.3 * p[1]];
                a.push(q);
                if id == 4 {
                    b.push([q[0] + 0.06, q[1] + 0.08]);
                } else {
                    b.push(q);
                }
            }
        }
        let report = region_wise_w1(&PointSet2D::new(a.clone()), &PointSet2D::new(b), 3.0).unwrap();
        assert!((report.mean - 0.1 / 9.0).abs() < 1e-9);
        let same = region_wise_w1(&PointSet2D::new(a.clone()), &PointSet2D::new(a), 3.0).unwrap();
        assert_eq!(same.mean, 0.0);
    }

    #[test]
    fn empty_region_is_skipped_with_warning() {
        let a = PointSet2D::new(vec![[0.0, 0.0], [3.0, 3.0]]);
        let b = PointSet2D::new(vec![[0.1, 0.0]]);
        let report = region_wise_w1(&a, &b, 3.0).unwrap();
        assert!((report.mean - 0.1).abs() < 1e-12);
        assert_eq!(report.warnings.len(), 8);
    }

    #[test]
    fn report_csv_mean_is_recomputable() {
        let a = PointSet2D::new(vec![[0.0, 0.0], [3.0, 3.0], [3.1, 3.0]]);
        let b = PointSet2D::new(vec![[0.5, 0.0], [3.0, 3.2]]);
        let report = region_wise_w1(&a, &b, 3.0).unwrap();
        let mut buf = Vec::new();
        write_report(&mut buf, None, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let values: Vec<f64> = text
            .lines()
            .filter(|l| l.starts_with("region_w1,"))
            .filter_map(|l| l.split(',').nth(2).and_then(|v| v.parse().ok()))
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - report.mean).abs() < 1e-15);
    }
}
