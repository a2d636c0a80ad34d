use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use popowicz::dynamics::{momentum, velocity, State};
use popowicz::ensemble::{rng, BandLimited};
use popowicz::littlewood_paley::{
    bony_decomposition, build_cutoffs, chi, decompose, dealiased_product, phi, BesovParams,
};
use popowicz::spectral::{
    dealias, derivative, helmholtz_forward, helmholtz_inverse, kernel_derivative_convolve, Field,
    Grid, HelmholtzKernel, TWO_THIRDS,
};

fn grid(n: usize) -> Arc<Grid> {
    Grid::new(n, 2.0 * PI).unwrap()
}

fn random_field(g: &Arc<Grid>, seed: u64, max_mode: usize) -> Field {
    BandLimited::new(max_mode, 0.5, 1.0).with_mean().sample(g, &mut rng(seed))
}

/// Pointwise samples spread over the whole grid band, not band-limited.
fn rough_field(g: &Arc<Grid>, seed: u64) -> Field {
    let shape = BandLimited::new(g.n_points() / 2 - 1, 0.0, 1.0);
    shape.sample(g, &mut rng(seed))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    return (x, 2.0 / ((1.0 - x * x) * dp * dp));
                }
            }
        })
        .collect()
}

/// `int_0^L p_per(x - y) |f(y)| dy` with the periodized kernel
/// `cosh(z - L/2) / (2 sinh(L/2))`, split at the kernel kink and at every sign
/// change of `f` so each piece is smooth.
fn periodic_kernel_of_modulus(f: &dyn Fn(f64) -> f64, period: f64, x: f64) -> f64 {
    let kernel = |z: f64| {
        let z = z.rem_euclid(period);
        (z - 0.5 * period).cosh() / (2.0 * (0.5 * period).sinh())
    };
    let fine = 6000;
    let h = period / fine as f64;
    let mut cuts = vec![0.0, x.rem_euclid(period), period];
    for i in 0..fine {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        if f(a) * f(b) < 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rule = gauss_legendre(16);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / 0.25).ceil().max(1.0) as usize;
        let len = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let a = w[0] + p as f64 * len;
            for &(t, wt) in &rule {
                let y = a + 0.5 * len * (t + 1.0);
                total += 0.5 * len * wt * kernel(x - y) * f(y).abs();
            }
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(seed in any::<u64>()) {
        let g = grid(128);
        let f = rough_field(&g, seed);
        let a = f.l2_norm();
        let b = f.spectrum().unwrap().l2_norm();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn helmholtz_pair_is_identity(seed in any::<u64>()) {
        let g = grid(128);
        let k = HelmholtzKernel::new(&g);
        let f = rough_field(&g, seed);
        let back = helmholtz_forward(&helmholtz_inverse(&f, &k).unwrap()).unwrap();
        prop_assert!(back.max_diff(&f).unwrap() <= 1e-10 * f.max_abs());
    }

    #[test]
    fn derivative_of_even_field_is_odd(seed in any::<u64>(), node in 0usize..64) {
        let g = grid(64);
        let f = rough_field(&g, seed);
        let n = g.n_points();
        // symmetrize about `node`
        let vals: Vec<f64> = (0..n)
            .map(|i| 0.5 * (f.values()[i] + f.values()[(2 * node + n - i) % n]))
            .collect();
        let even = Field::new(Arc::clone(&g), vals).unwrap();
        let d = derivative(&even).unwrap();
        let scale = d.max_abs().max(1.0);
        for i in 0..n {
            let j = (2 * node + n - i) % n;
            prop_assert!((d.values()[i] + d.values()[j]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn kernel_derivative_dominated_by_kernel_of_modulus(seed in any::<u64>()) {
        let period = 30.0;
        let g = Grid::new(256, period).unwrap();
        let k = HelmholtzKernel::new(&g);
        let shape = BandLimited::new(20, 1.0, 1.0);
        let f = shape.sample(&g, &mut rng(seed));
        let (mean, modes) = shape.coefficients(&mut rng(seed));
        let exact = move |x: f64| {
            mean + modes
                .iter()
                .map(|&(m, a, ph)| a * (2.0 * PI / period * m as f64 * x + ph).cos())
                .sum::<f64>()
        };
        let px = kernel_derivative_convolve(&f, &k).unwrap();
        for i in (0..256).step_by(16) {
            let bound = periodic_kernel_of_modulus(&exact, period, g.node(i));
            prop_assert!(px.values()[i].abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn dealias_is_idempotent(seed in any::<u64>(), fraction in 0.1f64..=1.0) {
        let g = grid(64);
        let f = rough_field(&g, seed);
        let once = dealias(&f, fraction).unwrap();
        let twice = dealias(&once, fraction).unwrap();
        prop_assert!(once.max_diff(&twice).unwrap() <= 1e-14 * f.max_abs().max(1.0));
    }

    #[test]
    fn momentum_round_trip(seed in any::<u64>()) {
        let g = grid(64);
        let s = State::new(random_field(&g, seed, 12), random_field(&g, seed ^ 1, 12), 0.0).unwrap();
        let back = velocity(&momentum(&s).unwrap()).unwrap();
        let scale = s.max_abs();
        prop_assert!(back.u.max_diff(&s.u).unwrap() <= 1e-10 * scale);
        prop_assert!(back.v.max_diff(&s.v).unwrap() <= 1e-10 * scale);
    }

    #[test]
    fn partition_of_unity(xi in 0.0f64..96.0) {
        let total = chi(xi) + (0..=6).map(|j| phi(xi / 2f64.powi(j))).sum::<f64>();
        prop_assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn reconstruction(seed in any::<u64>()) {
        let g = grid(256);
        let c = build_cutoffs(&g).unwrap();
        // band limit 3/4 * 2^j_max = 48
        let f = random_field(&g, seed, 40);
        let d = decompose(&f, &c).unwrap();
        prop_assert!(d.reconstruct().max_diff(&f).unwrap() <= 1e-10 * f.max_abs());
    }

    #[test]
    fn bony_identity(seed in any::<u64>()) {
        let g = grid(256);
        let c = build_cutoffs(&g).unwrap();
        let u = random_field(&g, seed, 30);
        let v = random_field(&g, seed.wrapping_add(17), 30);
        let terms = bony_decomposition(&u, &v, &c).unwrap();
        let sum = terms.t_uv.add(&terms.t_vu).unwrap().add(&terms.remainder).unwrap();
        let uv = dealiased_product(&u, &v).unwrap();
        prop_assert!(sum.max_diff(&uv).unwrap() <= 1e-8 * uv.max_abs());
    }

    #[test]
    fn almost_orthogonality(seed in any::<u64>()) {
        let g = grid(256);
        let c = build_cutoffs(&g).unwrap();
        let f = rough_field(&g, seed);
        let d = decompose(&f, &c).unwrap();
        for (j, block) in d.iter() {
            let again = decompose(block, &c).unwrap();
            for (jj, b) in again.iter() {
                if (j - jj).abs() >= 2 {
                    prop_assert!(b.max_abs() <= 1e-12, "j = {} j' = {}", j, jj);
                }
            }
        }
    }

    #[test]
    fn besov_interpolation(seed in any::<u64>(), theta in 0.01f64..0.99, s1 in -1.0f64..2.0, ds in 0.1f64..3.0) {
        let g = grid(256);
        let c = build_cutoffs(&g).unwrap();
        let f = rough_field(&g, seed);
        let s2 = s1 + ds;
        let s = theta * s1 + (1.0 - theta) * s2;
        let d = decompose(&f, &c).unwrap();
        let norm = |s| d.besov_norm(&BesovParams::new(s, 2.0, 1.0).unwrap());
        prop_assert!(norm(s) <= norm(s1).powf(theta) * norm(s2).powf(1.0 - theta) * (1.0 + 1e-9));
    }

    #[test]
    fn besov_monotone_in_regularity(seed in any::<u64>(), s1 in -1.0f64..3.0, ds in 0.0f64..2.0) {
        let g = grid(256);
        let c = build_cutoffs(&g).unwrap();
        let f = rough_field(&g, seed);
        // remove the lowest block so every remaining weight is 2^{js}, j >= 0
        let d = decompose(&f, &c).unwrap();
        let high = f.sub(d.block(-1).unwrap()).unwrap();
        let dh = decompose(&high, &c).unwrap();
        let a = dh.besov_norm(&BesovParams::new(s1, 2.0, 2.0).unwrap());
        let b = dh.besov_norm(&BesovParams::new(s1 + ds, 2.0, 2.0).unwrap());
        prop_assert!(a <= b * (1.0 + 1e-12));
    }
}

#[test]
fn cutoff_supports_are_disjoint() {
    for i in 0..=4000 {
        let xi = i as f64 * 0.025;
        for j in 0..7 {
            for jj in (j + 2)..9 {
                assert_eq!(phi(xi / 2f64.powi(j)) * phi(xi / 2f64.powi(jj)), 0.0);
            }
            if j >= 1 {
                assert_eq!(chi(xi) * phi(xi / 2f64.powi(j)), 0.0);
            }
        }
    }
}

#[test]
fn dealiasing_keeps_two_thirds_band() {
    let g = grid(48);
    let f = Field::from_fn(&g, |x| (16.0 * x).cos() + (17.0 * x).cos());
    let d = dealias(&f, TWO_THIRDS).unwrap();
    assert!(d.max_diff(&Field::from_fn(&g, |x| (16.0 * x).cos())).unwrap() < 1e-13);
}
