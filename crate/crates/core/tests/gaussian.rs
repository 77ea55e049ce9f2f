use lsrp_core::regev::RegevParams;
use lsrp_core::sampler::{GaussianTable, StreamExpander};

// Computed with 256-bit mpmath: cdf_i = floor((2^64 - 1) * C_i / C_total), the
// support trimmed from floor(10 tau) until every step is positive.
const CDF_TAU3: [u64; 23] = [
    2,
    4259,
    3235812,
    1223816848,
    230588848856,
    21673959496298,
    1019061988928050,
    24099311813621627,
    289818008691345566,
    1811798119689906919,
    6148914691239748758,
    12297829382469802856,
    16634945954019644695,
    18156926065018206048,
    18422644761895929987,
    18445725011720623564,
    18446722399750055316,
    18446743843120702758,
    18446744072485734766,
    18446744073706315802,
    18446744073709547355,
    18446744073709551612,
    18446744073709551615,
];

const CDF_TAU1: [u64; 7] = [
    8923369,
    59212132171290,
    733794989379369588,
    17712949084330182026,
    18446684861577380324,
    18446744073700628245,
    18446744073709551615,
];

/// Variance of D_{Z,3} over [-30, 30].
const VAR_TAU3: f64 = 1.4323944877419192;

#[test]
fn frozen_tables() {
    let t3 = GaussianTable::new(3.0, 10);
    assert_eq!(t3.bound(), 11);
    assert_eq!(t3.cdf(), CDF_TAU3);
    let t1 = GaussianTable::new(1.0, 10);
    assert_eq!(t1.bound(), 3);
    assert_eq!(t1.cdf(), CDF_TAU1);
    let tr = RegevParams::default_test().noise_table();
    assert_eq!(tr.bound(), 51);
    assert_eq!(tr.cdf().len(), 103);
}

#[test]
fn lookup_boundaries() {
    let t = GaussianTable::new(3.0, 10);
    assert_eq!(t.lookup(0), -11);
    assert_eq!(t.lookup(2), -11);
    assert_eq!(t.lookup(3), -10);
    assert_eq!(t.lookup(u64::MAX), 11);
    assert_eq!(t.lookup(CDF_TAU3[10]), -1);
    assert_eq!(t.lookup(CDF_TAU3[10] + 1), 0);
    assert_eq!(t.lookup(CDF_TAU3[11]), 0);
}

#[test]
fn symmetric_table() {
    for tau in [1.0, 3.0, 4099.0 / 288.0] {
        let t = GaussianTable::new(tau, 10);
        let cdf = t.cdf();
        let k = cdf.len();
        // mass(i) == mass(k-1-i) up to one unit of rounding
        let mass = |i: usize| if i == 0 { cdf[0] } else { cdf[i] - cdf[i - 1] };
        for i in 0..k / 2 {
            assert!(
                mass(i).abs_diff(mass(k - 1 - i)) <= 1,
                "tau {tau} index {i}"
            );
        }
    }
}

#[test]
fn moments() {
    let t = GaussianTable::new(3.0, 10);
    let mut s = StreamExpander::new(b"moments", b"seed");
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| t.sample(&mut s) as f64).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // six standard errors each
    assert!(
        mean.abs() < 6.0 * (VAR_TAU3 / n as f64).sqrt(),
        "mean {mean}"
    );
    assert!(
        (var - VAR_TAU3).abs() < 6.0 * VAR_TAU3 * (2.0 / n as f64).sqrt(),
        "var {var}"
    );
}
