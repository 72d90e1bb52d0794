mod common;

use common::*;
use exsd_hawkes::diagnostics::{event_residuals, ks_exp1, total_residuals, ResidualKey, ResidualSeries};
use exsd_hawkes::dynamics::{compensator_segment, intensity, RecursionState};
use exsd_hawkes::estimate::{fit, FitOptions};
use exsd_hawkes::simulate::{simulate, ImpactTable, SimConfig};
use exsd_hawkes::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn recursive_intensity_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let model = random_model(&mut rng, 4, 2, true);
        let stream = random_stream(&mut rng, &model.transition, 300, 100.0);
        let mut queries: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..100.0)).collect();
        // also right at event times, where the intensity is left-continuous
        queries.extend(stream.records.iter().step_by(37).map(|r| r.time));
        queries.sort_by(f64::total_cmp);
        let mut rec = RecursionState::new(&model.hawkes);
        let mut next = 0;
        for &t in &queries {
            while next < stream.len() && stream.records[next].time < t {
                let r = &stream.records[next];
                rec.advance(r.time).unwrap();
                rec.register_event(&model.hawkes, r.event, r.state_after);
                next += 1;
            }
            let at = rec.advanced(t).unwrap();
            let state = state_before(&stream, t);
            let iv = intensity(&at, &model, state);
            for e in 0..4 {
                let want = direct_raw_intensity(&stream, &model.hawkes, t, e);
                assert!((iv.raw[e] - want).abs() <= 1e-10 * want, "{} vs {want}", iv.raw[e]);
                let gated = model.transition.gate_value(e, state) * want;
                assert!((iv.lambda_dag[e] - gated).abs() <= 1e-10 * want);
                let tilde: f64 = iv.lambda_tilde.row(e).iter().sum();
                assert!((tilde - iv.lambda_dag[e]).abs() <= 1e-12 * want);
            }
        }
    }
}

#[test]
fn compensator_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let model = random_model(&mut rng, 3, 2, true);
        let mut rec = RecursionState::new(&model.hawkes);
        rec.set_excitation(Tensor3::from_fn([3, 2, 3], |_, _, _| rng.gen_range(0.0..3.0)));
        let dt = rng.gen_range(0.0..4.0);
        let state = rng.gen_range(0..2);
        let got = compensator_segment(&rec, &model, state, dt).unwrap();
        for e in 0..3 {
            let hp = &model.hawkes;
            let r = rec.excitation().clone();
            let f = move |s: f64| {
                let mut v = hp.nu[e];
                for src in 0..3 {
                    for m in 0..2 {
                        v += r[(src, m, e)] * (-hp.beta[(src, m, e)] * s).exp();
                    }
                }
                v
            };
            let want = model.transition.gate_value(e, state) * adaptive_simpson(&f, 0.0, dt, 1e-13);
            assert!((got[e] - want).abs() <= 1e-8, "{} vs {want}", got[e]);
        }
    }
    let model = random_model(&mut rng, 2, 2, false);
    let rec = RecursionState::new(&model.hawkes);
    assert!(compensator_segment(&rec, &model, 0, -1.0).is_err());
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..4 {
        let mut model = random_model(&mut rng, 2, 2, true);
        for a in model.hawkes.alpha.as_mut_slice() {
            *a = a.max(0.05);
        }
        let stream = random_stream(&mut rng, &model.transition, 200, 80.0);
        let gap = log_gradient_gap(&stream, &model, 1e-6, 1e-2);
        assert!(gap < 1e-4, "{gap}");
    }
}

#[test]
fn poisson_rate_is_count_over_admissible_time() {
    let tax = taxonomy(1, 1);
    let model = ModelSpec {
        taxonomy: tax.clone(),
        variant: Variant::Poisson,
        transition: TransitionKernel::uniform(1, 1),
        hawkes: HawkesParams::poisson(vec![0.5], 1),
    };
    let sim = simulate(&model, &ImpactTable::zeros(1, 1), &SimConfig::new(50_000.0, 0, 9)).unwrap();
    let rep = fit(&sim.stream, &tax, Variant::Poisson, &FitOptions::default()).unwrap();
    let nu = rep.model.hawkes.nu[0];
    assert!((nu / 0.5 - 1.0).abs() < 0.05, "{nu}");
    let mle = sim.stream.len() as f64 / 50_000.0;
    assert!((nu / mle - 1.0).abs() < 1e-6);
}

fn one_event_model(gate_state_1: bool) -> ModelSpec {
    let tax = taxonomy(2, 2);
    // E0 moves between states; E1 is admissible in S0 only when asked
    let mut phi = Tensor3::zeros([2, 2, 2]);
    phi.row_mut(0, 0).copy_from_slice(&[0.0, 1.0]);
    phi.row_mut(0, 1).copy_from_slice(&[1.0, 0.0]);
    phi.row_mut(1, 0).copy_from_slice(&[1.0, 0.0]);
    if gate_state_1 {
        phi.row_mut(1, 1).copy_from_slice(&[0.0, 1.0]);
    }
    ModelSpec {
        taxonomy: tax,
        variant: Variant::ExsdHawkes,
        transition: TransitionKernel::from_phi(phi).unwrap(),
        hawkes: HawkesParams::poisson(vec![1.0, 1.0], 2),
    }
}

#[test]
fn unit_rate_residuals() {
    let model = one_event_model(true);
    let rec = |t: f64| EventRecord { time: t, event: 1, state_before: 0, state_after: 0 };
    let stream = EventStream::new(vec![rec(1.0), rec(2.0), rec(3.0)], 0, 4.0);
    let r = event_residuals(&stream, &model).unwrap();
    assert_eq!(r[&1].values, vec![1.0, 1.0, 1.0]);
}

#[test]
fn gate_off_interval_pauses_the_residual() {
    // E1 is inadmissible in S1, which holds on [1, 2]
    let model = one_event_model(false);
    let stream = EventStream::new(
        vec![
            EventRecord { time: 1.0, event: 0, state_before: 0, state_after: 1 },
            EventRecord { time: 2.0, event: 0, state_before: 1, state_after: 0 },
            EventRecord { time: 3.0, event: 1, state_before: 0, state_after: 0 },
        ],
        0,
        4.0,
    );
    let r = event_residuals(&stream, &model).unwrap();
    assert_eq!(r[&1].values, vec![2.0]);
    let t = total_residuals(&stream, &model).unwrap();
    assert_eq!(t[&(1, 0)].values, vec![2.0]);
}

#[test]
fn poisson_thinning_interarrivals_are_exponential() {
    let tax = taxonomy(1, 1);
    let nu = 2.0;
    let model = ModelSpec {
        taxonomy: tax,
        variant: Variant::Poisson,
        transition: TransitionKernel::uniform(1, 1),
        hawkes: HawkesParams::poisson(vec![nu], 1),
    };
    let sim = simulate(&model, &ImpactTable::zeros(1, 1), &SimConfig::new(50_001.0, 0, 12345)).unwrap();
    let mut prev = 0.0;
    let scaled: Vec<f64> = sim
        .stream
        .records
        .iter()
        .take(100_000)
        .map(|r| {
            let d = (r.time - prev) * nu;
            prev = r.time;
            d
        })
        .collect();
    assert_eq!(scaled.len(), 100_000);
    let (_, p) = ks_exp1(&ResidualSeries { key: ResidualKey::Event(0), values: scaled });
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn poisson_mean_count() {
    let tax = taxonomy(1, 1);
    let model = ModelSpec {
        taxonomy: tax,
        variant: Variant::Poisson,
        transition: TransitionKernel::uniform(1, 1),
        hawkes: HawkesParams::poisson(vec![2.0], 1),
    };
    let counts: Vec<f64> = (0..100)
        .map(|i| {
            let cfg = SimConfig::new(10_000.0, 0, exsd_hawkes::simulate::derive_seed(77, i));
            simulate(&model, &ImpactTable::zeros(1, 1), &cfg).unwrap().stream.len() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / 100.0;
    // standard error of the mean count: sqrt(20000 / 100)
    assert!((mean - 20_000.0).abs() < 3.0 * (20_000.0f64 / 100.0).sqrt(), "{mean}");
}

#[test]
fn residual_means_under_the_generating_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut model = random_model(&mut rng, 3, 2, true);
    // keep it comfortably sub-critical
    for (a, b) in model.hawkes.alpha.as_mut_slice().iter_mut().zip(model.hawkes.beta.as_slice()) {
        *a = 0.08 * b;
    }
    let sim = simulate(&model, &ImpactTable::zeros(3, 2), &SimConfig::new(20_000.0, 0, 5)).unwrap();
    let ev = event_residuals(&sim.stream, &model).unwrap();
    for s in ev.values().filter(|s| s.len() >= 1000) {
        let n = s.len() as f64;
        assert!((s.mean() - 1.0).abs() < 3.0 / n.sqrt(), "{:?}: {}", s.key, s.mean());
    }
}

#[test]
fn residuals_are_calibrated_across_seeds() {
    // pooled over many runs, so no single 3-sigma excursion decides it
    let s = exsd_hawkes::scenario::scenario("dual-regime").unwrap();
    let (mut z2, mut rejections, mut m) = (0.0, 0, 0);
    for seed in 0..20 {
        let sim = simulate(&s.model, &s.impact, &SimConfig::new(20_000.0, 0, 500 + seed)).unwrap();
        let ev = event_residuals(&sim.stream, &s.model).unwrap();
        let tot = total_residuals(&sim.stream, &s.model).unwrap();
        for r in ev.values().chain(tot.values()).filter(|r| r.len() >= 1000) {
            let z = (r.mean() - 1.0) * (r.len() as f64).sqrt();
            z2 += z * z;
            rejections += usize::from(ks_exp1(r).1 < 0.05);
            m += 1;
        }
    }
    let rms = (z2 / m as f64).sqrt();
    assert!(m >= 150, "{m}");
    assert!((0.8..1.2).contains(&rms), "rms z {rms}");
    // Binomial(m, 0.05) stays under 10% with overwhelming probability
    assert!((rejections as f64) < 0.1 * m as f64, "{rejections} of {m}");
}
