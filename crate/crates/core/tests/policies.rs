use lossnet::analytic::sss_window;
use lossnet::*;
use proptest::prelude::*;

fn catalog(p: &ModelParams) -> Vec<PolicyKind> {
    let w = sss_window(p, Some(10.0));
    let sss = PolicyKind::Sss(w);
    vec![
        PolicyKind::AcceptAll,
        PolicyKind::Threshold(0),
        PolicyKind::Threshold(3),
        PolicyKind::Pfi,
        sss.clone(),
        PolicyKind::CompositeAe(Box::new(sss.clone()), Box::new(PolicyKind::Pfi)),
        PolicyKind::CompositeRe(Box::new(sss), Box::new(PolicyKind::Pfi)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decisions_on_reachable_states(seed in 0u64..5_000, steps in 0usize..4000, n in 9usize..70, driver in 0usize..7) {
        let p = ModelParams::reference(n);
        let path = SamplePath::new(seed);
        let pols = catalog(&p);
        let mut s = SystemState::new(p, &path);
        for _ in 0..steps {
            s.step(&pols[driver]).unwrap();
        }
        let v = s.view();
        let high: Vec<Decision> = pols.iter().map(|k| k.decide(JobClass::High, &v).unwrap()).collect();
        // every catalog policy serves H whenever a server is free
        prop_assert!(high.iter().all(|d| d.is_accept() == (s.idle() > 0)));
        let low: Vec<Decision> = pols.iter().map(|k| k.decide(JobClass::Low, &v).unwrap()).collect();
        prop_assert_eq!(low[0], low[1]);
        prop_assert_eq!(low[2].is_accept(), s.idle() > 3);
        prop_assert_eq!(low[5].is_accept(), low[3].is_accept() || low[4].is_accept());
        prop_assert_eq!(low[6].is_accept(), low[3].is_accept() && low[4].is_accept());
        if s.idle() <= 1 {
            prop_assert!(!low[3].is_accept() && !low[4].is_accept());
        }
        if s.idle() >= p.sqrt_level() {
            prop_assert!(low[3].is_accept());
        }
        // deciding twice gives the same answer
        prop_assert_eq!(pols[3].decide(JobClass::Low, &v).unwrap(), low[3]);
    }
}

#[test]
fn tiny_window_with_room_accepts() {
    let p = ModelParams::reference(40);
    let path = SamplePath::new(2);
    let mut s = SystemState::new(p, &path);
    let mut checked = 0;
    for _ in 0..5000 {
        if s.idle() >= 3 {
            let gap = s.next_event_time() - s.now();
            let w = PolicyKind::Sss(gap * 0.5);
            assert!(w.decide(JobClass::Low, &s.view()).unwrap().is_accept());
            checked += 1;
        }
        s.step(&PolicyKind::Threshold(2)).unwrap();
    }
    assert!(checked > 100);
}

#[test]
fn composites_of_composites_are_refused() {
    let p = ModelParams::reference(16);
    let inner = PolicyKind::CompositeAe(Box::new(PolicyKind::Pfi), Box::new(PolicyKind::AcceptAll));
    let nested = PolicyKind::CompositeRe(Box::new(inner), Box::new(PolicyKind::Pfi));
    assert!(nested.validate(&p).is_err());
    assert!(run(p, &nested, &RunConfig::new(1.0), 1).is_err());
    assert!(PolicyKind::Threshold(17).validate(&p).is_err());
    assert!("ae:ae:pfi,pfi,pfi".parse::<PolicySpec>().is_err());
}
