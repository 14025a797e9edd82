//! Small statistics used by experiment summaries.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Paired comparison of `a` against `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    /// Sample standard deviation of the differences.
    pub sd_diff: f64,
    pub t: f64,
    /// One-sided p-value for H1: mean(a - b) > 0.
    pub p_greater: f64,
    /// One-sided p-value for H1: mean(a - b) < 0.
    pub p_less: f64,
}

/// One-sided paired t-tests on `a - b`. Needs at least two pairs.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let (t, p_greater) = if sd == 0.0 {
        match m.partial_cmp(&0.0)? {
            std::cmp::Ordering::Greater => (f64::INFINITY, 0.0),
            std::cmp::Ordering::Less => (f64::NEG_INFINITY, 1.0),
            std::cmp::Ordering::Equal => (0.0, 0.5),
        }
    } else {
        let t = m / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
        (t, 1.0 - dist.cdf(t))
    };
    let p_less = if sd == 0.0 { 1.0 - p_greater } else {
        StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?.cdf(t)
    };
    Some(PairedTest {
        n,
        mean_diff: m,
        sd_diff: sd,
        t,
        p_greater,
        p_less,
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && xs[order[end]] == xs[order[k]] {
            end += 1;
        }
        let rank = (k + end + 1) as f64 / 2.0;
        order[k..end].iter().for_each(|&i| ranks[i] = rank);
        k = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_reference_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 40.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        // x ranks 1..5, y ranks [2,1,4,3,5]: 1 - 6·4/(5·24) = 0.8
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn paired_test_reference() {
        // d = [1, 2, 3, 4]: mean 2.5, sd = sqrt(5/3), t = 2.5 / (sd / 2) ≈ 3.87298
        let a = [2.0, 4.0, 6.0, 8.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let t = paired_t_test(&a, &b).unwrap();
        assert!((t.t - 3.872983346207417).abs() < 1e-12);
        // 3 dof closed form: 1/2 - (θ + sinθ cosθ)/π with θ = atan(t/√3)
        assert!((t.p_greater - 0.015233145831085482).abs() < 1e-9);
        assert!((t.p_greater + t.p_less - 1.0).abs() < 1e-12);
        let same = paired_t_test(&a, &a).unwrap();
        assert_eq!(same.p_greater, 0.5);
        assert!(paired_t_test(&a[..1], &b[..1]).is_none());
    }
}
