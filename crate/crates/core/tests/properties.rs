use num_traits::{One, Zero};
use proptest::prelude::*;

use trustrep::audit::{audit_local_ic, Explored};
use trustrep::constants::{derive_unchecked, simplest_between};
use trustrep::construction::{fm_schedule, Class, Construction, FmSchedule};
use trustrep::game::{stackelberg_payoff, v_star, GameSpec, Outcome};
use trustrep::lp::solve_trust_lp;
use trustrep::scalar::{Rational, Scalar};

fn dec(x: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (x * s).round() / s
}

fn two_type_spec() -> impl Strategy<Value = GameSpec> {
    (
        0.05f64..0.4,
        0.05f64..0.5,
        0.6f64..0.95,
        0.3f64..0.7,
        0.05f64..0.3,
    )
        .prop_map(|(t1, gap, p1, gs, excess)| {
            let t1 = dec(t1, 3);
            let t2 = dec((t1 + gap).min(0.95), 3);
            let p1 = dec(p1, 3);
            let c = dec(gs, 2);
            let gstar = c;
            GameSpec {
                b: dec(1.0 - c, 2),
                c,
                thetas: vec![t1, t2],
                prior: vec![p1, dec(1.0 - p1, 3)],
                delta: 0.99,
                gamma: dec((gstar + excess).min(0.98), 3),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lowest_type_bound_is_complete_information_payoff(t1 in 1u32..999, gs in 1u32..999) {
        let t1 = Rational::ratio(t1 as i64, 1000);
        let gs = Rational::ratio(gs as i64, 1000);
        prop_assert_eq!(v_star(&t1, &t1, &gs).unwrap(), Rational::one() - &t1);
    }

    #[test]
    fn bound_never_exceeds_commitment_payoff(t1 in 1u32..500, extra in 0u32..499, gs in 1u32..999) {
        let t1 = Rational::ratio(t1 as i64, 1000);
        let tj = t1.clone() + &Rational::ratio(extra as i64, 1000);
        let gs = Rational::ratio(gs as i64, 1000);
        let v = v_star(&tj, &t1, &gs).unwrap();
        prop_assert!(v <= stackelberg_payoff(&tj, &gs).unwrap());
        let (_, lp) = solve_trust_lp(&tj, &t1, &gs).unwrap();
        prop_assert_eq!(lp, v);
    }

    #[test]
    fn simplest_fraction_is_minimal(a in 1i64..200, b in 1i64..200, den in 2i64..400) {
        let lo = Rational::ratio(a.min(b), den.max(a.max(b) + 1));
        let hi = Rational::ratio(a.max(b) + 1, den.max(a.max(b) + 1));
        let (n, k) = simplest_between(&lo, &hi);
        let q = Rational::ratio(n as i64, k as i64);
        prop_assert!(q > lo && q < hi);
        for kk in 1..k as i64 {
            for nn in 0..=kk {
                let r = Rational::ratio(nn, kk);
                prop_assert!(!(r > lo && r < hi), "{}/{} is simpler", nn, kk);
            }
        }
    }

    #[test]
    fn constant_ordering_chain(spec in two_type_spec()) {
        let c = match derive_unchecked::<Rational>(&spec) {
            Ok(c) => c,
            Err(_) => return Ok(()),
        };
        let one = Rational::one();
        let nk = Rational::ratio(c.n as i64, c.k as i64);
        let nk1 = Rational::ratio(c.n as i64, c.k as i64 - 1);
        let gamma = Rational::from_decimal(spec.gamma);
        prop_assert!(c.gstar < c.gamma_hat && c.gamma_hat < nk && nk < c.gamma_tilde);
        prop_assert!(c.gamma_tilde < nk1 && nk1 < gamma);
        let p1 = Rational::from_decimal(spec.prior[0]);
        prop_assert!(c.eta_star >= c.gstar.clone() * &p1 && c.eta_star < p1);
        let gs = c.gstar.to_f64();
        prop_assert!(c.lambda > Rational::zero() && c.lambda.to_f64() < (1.0 - gs.sqrt()) / gs);
        prop_assert!(c.log_drift > 0.0);
        prop_assert!(c.t >= 1 && c.s >= 1);
        prop_assert!(c.lambda < one);
    }

    #[test]
    fn transitions_keep_identities(spec in two_type_spec(), word in proptest::collection::vec(any::<bool>(), 1..80)) {
        let model = match Construction::<f64>::new(&spec) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        let gstar = model.consts.gstar;
        let mut st = model.initial_state();
        let mut support = st.support();
        let mut visited = Vec::new();
        for (i, &bit) in word.iter().enumerate() {
            let pr = model.prescribe(&st);
            let sum = st.weights.n + st.weights.h + st.weights.l;
            prop_assert!((sum - 1.0).abs() < 1e-9);
            if matches!(st.class, Class::Learning | Class::Screening) {
                let ph = pr.aggregate(&st.posterior, Outcome::H);
                prop_assert!(ph >= gstar - 1e-12);
                let eh = model.transition(&st, Outcome::H);
                let el = model.transition(&st, Outcome::L);
                let e = ph * eh.eta() + (1.0 - ph) * el.eta();
                prop_assert!((e - st.eta()).abs() < 1e-9);
                prop_assert!(st.eta() >= &(model.consts.eta_star - 1e-12));
            }
            visited.push(Explored { state: st.clone(), history: Vec::new() });
            let ys: Vec<Outcome> = [Outcome::N, Outcome::H, Outcome::L]
                .into_iter()
                .filter(|&y| pr.aggregate(&st.posterior, y) > 0.0)
                .collect();
            let y = if ys.len() == 1 { ys[0] } else if bit { Outcome::H } else { Outcome::L };
            st = model.transition(&st, y);
            let now = st.support();
            prop_assert!(now.iter().all(|j| support.contains(j)), "support grew at step {}", i);
            support = now;
        }
        let report = audit_local_ic(&model, &visited);
        prop_assert!(report.get("indifference").unwrap().passed);
    }

    #[test]
    fn schedule_partial_sums_and_tails(q in 0.0f64..=1.0, d in 0.9f64..0.999) {
        let eps = 2.0 * (1.0 - d);
        let sched = fm_schedule(q, d, eps).unwrap();
        let band = FmSchedule::tail_band(&q, &d);
        let mut residual = q;
        let mut acc = 0.0;
        let mut disc = 1.0;
        for (s, y) in sched.take(1500).enumerate() {
            prop_assert!((residual - q).abs() <= band + 1e-9, "tail {} at {}", residual, s);
            if y == Outcome::H {
                acc += (1.0 - d) * disc;
                residual = (residual - (1.0 - d)) / d;
            } else {
                residual /= d;
            }
            residual = residual.clamp(0.0, 1.0);
            disc *= d;
            prop_assert!((q - acc).abs() <= disc + 1e-9);
        }
    }

    #[test]
    fn decimal_lift_is_exact(n in -1_000_000i64..1_000_000, places in 0u32..6) {
        let den = 10i64.pow(places);
        let x = n as f64 / den as f64;
        prop_assert_eq!(Rational::from_decimal(x), Rational::ratio(n, den));
    }
}

#[test]
fn exact_and_float_models_agree_on_canonical_prefixes() {
    let spec = GameSpec::canonical();
    let f = Construction::<f64>::new(&spec).unwrap();
    let q = Construction::<Rational>::new(&spec).unwrap();
    for mask in 0u32..256 {
        let (mut a, mut b) = (f.initial_state(), q.initial_state());
        for i in 0..8 {
            let y = if mask >> i & 1 == 1 {
                Outcome::H
            } else {
                Outcome::L
            };
            if f.prescribe(&a).aggregate(&a.posterior, y) <= 0.0 {
                break;
            }
            a = f.transition(&a, y);
            b = q.transition(&b, y);
            assert_eq!(a.class, b.class);
            assert!((a.weights.h - b.weights.h.to_f64()).abs() < 1e-12);
        }
    }
}
