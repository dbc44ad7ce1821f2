//! The structural C1 conditions against trace containment.

use ftrepair::oracle::c1_by_traces;
use ftrepair::random::ft_model;
use ftrepair::{check_c1, Predicate, Relation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lemma_matches_traces_on_small_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut holds, pairs) = (0, 3000);
    for i in 0..pairs {
        let n = rng.gen_range(2..=4);
        let m = ft_model(&mut rng, n, 2);
        let sp = Predicate::from_fn(n, |s| m.invariant.contains(s) && rng.gen_bool(0.7));
        // mostly a sub-relation of δ_p, sometimes with stray transitions
        let keep = rng.gen_range(0.3..1.0);
        let extra = if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..0.3)
        };
        let mut pp = Relation::from_fn(n, |a, b| {
            if m.delta_p.contains(a, b) {
                rng.gen_bool(keep)
            } else {
                rng.gen_bool(extra)
            }
        });
        pp.difference_with(&m.delta_e);
        let lemma = check_c1(&m, &pp, &sp).unwrap();
        let traces = c1_by_traces(&m, &pp, &sp);
        assert_eq!(lemma, traces, "pair #{i}: {m:?}\np' = {pp:?}\nS' = {sp:?}");
        holds += lemma as usize;
    }
    assert!(
        holds > pairs / 10 && holds < pairs * 9 / 10,
        "C1 held for {holds} of {pairs}"
    );
}
