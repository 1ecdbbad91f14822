use eldt_bench::stats::{aggregate, midranks, wilcoxon_rank_sum};
use proptest::prelude::*;

fn sample(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..20).prop_map(f64::from), 1..max)
}

proptest! {
    #[test]
    fn p_is_a_probability_and_symmetric(a in sample(10), b in sample(10)) {
        let ab = wilcoxon_rank_sum(&a, &b).unwrap();
        let ba = wilcoxon_rank_sum(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.p));
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
    }

    #[test]
    fn ranks_sum_to_triangle(v in sample(30)) {
        let n = v.len() as f64;
        let total: f64 = midranks(&v).iter().sum();
        prop_assert!((total - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn shifting_shifts_the_mean_only(v in sample(30), c in -100.0f64..100.0) {
        let (m, s) = aggregate(&v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let (m2, s2) = aggregate(&shifted).unwrap();
        prop_assert!((m2 - m - c).abs() < 1e-9);
        prop_assert!((s2 - s).abs() < 1e-9);
    }
}
