mod oracle;

use grasp_core::loss::{grasp_huber_loss, grasp_huber_loss_grad, huber, huber_derivative};
use grasp_core::quantize::{posterior, quantize, Codebook};
use grasp_core::{GraspMapSet, Grid};
use oracle::{brute_nearest, central_diff, rel_err};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn huber_tabulated_values() {
    assert_eq!(huber(0.0), 0.0);
    assert_eq!(huber(0.5), 0.125);
    assert_eq!(huber(-0.5), 0.125);
    assert_eq!(huber(2.0), 1.5);
    assert_eq!(huber(1.0), 0.5);
}

fn random_maps(rng: &mut ChaCha8Rng) -> GraspMapSet {
    let mut g = || Grid::from_fn(8, 8, |_, _| rng.random_range(-1.5..1.5));
    GraspMapSet::new(g(), g(), g(), g()).unwrap()
}

fn flatten(m: &GraspMapSet) -> Vec<f64> {
    m.heads().iter().flat_map(|h| h.as_slice().to_vec()).collect()
}

fn unflatten(v: &[f64]) -> GraspMapSet {
    let h = |i: usize| Grid::from_vec(8, 8, v[i * 64..(i + 1) * 64].to_vec()).unwrap();
    GraspMapSet::new(h(0), h(1), h(2), h(3)).unwrap()
}

#[test]
fn grasp_loss_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let target = random_maps(&mut rng);
    let pred = random_maps(&mut rng);
    let (value, grad) = grasp_huber_loss_grad(&target, &pred).unwrap();
    assert_eq!(value, grasp_huber_loss(&target, &pred).unwrap());
    let x = flatten(&pred);
    let g = flatten(&grad);
    let f = |v: &[f64]| grasp_huber_loss(&target, &unflatten(v)).unwrap();
    for i in 0..x.len() {
        // skip points within a step of the quadratic/linear seam
        let t = flatten(&target)[i];
        if ((x[i] - t).abs() - 1.0).abs() < 1e-4 {
            continue;
        }
        let fd = central_diff(f, &x, i, 1e-6);
        assert!(rel_err(fd, g[i]) < 1e-3, "coord {i}: {fd} vs {}", g[i]);
    }
}

fn random_codebook(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Codebook, Vec<Vec<f64>>) {
    let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rows = data.chunks(dim).map(<[f64]>::to_vec).collect();
    (Codebook::new(n, dim, data).unwrap(), rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantizer_matches_brute_force_scan(seed in any::<u64>(), n in 1usize..=512, dim in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (book, rows) = random_codebook(&mut rng, n, dim);
        let latents: Vec<f64> = (0..20 * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (zq, idx) = quantize(&latents, &book).unwrap();
        for (s, site) in latents.chunks(dim).enumerate() {
            let k = brute_nearest(&rows, site);
            prop_assert_eq!(idx[s], k);
            // the quantized site is that row, bit for bit
            let got: Vec<u64> = zq[s * dim..(s + 1) * dim].iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = rows[k].iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
            let p = posterior(site, &book);
            prop_assert_eq!(p.iter().filter(|&&v| v != 0.0).count(), 1);
            prop_assert_eq!(p[k], 1.0);
        }
        let (zq2, idx2) = quantize(&zq, &book).unwrap();
        prop_assert_eq!(zq2, zq);
        prop_assert_eq!(idx2, idx);
    }

    #[test]
    fn huber_is_nonnegative_even_and_continuous(d in -10.0..10.0f64) {
        prop_assert!(huber(d) >= 0.0);
        prop_assert_eq!(huber(d), huber(-d));
        prop_assert!(huber_derivative(d).abs() <= 1.0);
        let fd = (huber(d + 1e-7) - huber(d - 1e-7)) / 2e-7;
        prop_assert!((fd - huber_derivative(d)).abs() < 1e-5);
    }
}
