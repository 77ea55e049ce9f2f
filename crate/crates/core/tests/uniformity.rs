use lsrp_core::sampler::StreamExpander;

/// Upper 1e-6 quantile of chi-square with 40 degrees of freedom.
const CHI2_40_CRIT: f64 = 97.65295741497064;

fn chi_square(q: u64, draws: usize, seed: &[u8]) -> f64 {
    let mut s = StreamExpander::new(b"uniformity", seed);
    let mut counts = vec![0u64; q as usize];
    for _ in 0..draws {
        counts[s.uniform_below(q) as usize] += 1;
    }
    let expected = draws as f64 / q as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

#[test]
fn chi_square_q41() {
    for seed in [b"a".as_slice(), b"b", b"c"] {
        let stat = chi_square(41, 100_000, seed);
        assert!(stat < CHI2_40_CRIT, "chi2 = {stat}");
    }
}

#[test]
fn every_residue_reachable() {
    for q in [3u64, 41, 256, 257, 65537] {
        let mut s = StreamExpander::new(b"cover", &q.to_be_bytes());
        let mut seen = vec![false; q as usize];
        for _ in 0..(q * 40) {
            seen[s.uniform_below(q) as usize] = true;
        }
        assert!(seen.iter().all(|&b| b), "q = {q}");
    }
}
