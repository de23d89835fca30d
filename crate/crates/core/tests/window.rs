use massact::window::make_schedule;
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..60, 1usize..10).prop_flat_map(|(frames, t_w)| {
        (Just(frames), Just(t_w), 1..=t_w)
            .prop_flat_map(|(frames, t_w, dw)| (Just(frames), Just(t_w), Just(dw), 0..=t_w - dw))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_frame_is_decided_exactly_once((frames, t_w, dw, off) in geometry()) {
        let s = make_schedule(frames, t_w, dw, off).unwrap();
        let mut hits = vec![0usize; frames];
        for (i, w) in s.windows.iter().enumerate() {
            prop_assert!(w.validate().is_ok());
            prop_assert!(w.t_w <= t_w);
            prop_assert!(w.frames().end <= frames);
            for t in w.targets() {
                hits[t] += 1;
                prop_assert_eq!(s.decided_by[t], i);
            }
        }
        prop_assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn windows_advance_by_the_step((frames, t_w, dw, off) in geometry()) {
        let s = make_schedule(frames, t_w, dw, off).unwrap();
        for pair in s.windows.windows(2) {
            prop_assert_eq!(pair[1].t1, pair[0].t1 + dw);
            prop_assert!(pair[1].t0 >= pair[0].t0);
        }
    }

    #[test]
    fn full_windows_have_the_nominal_shape((frames, t_w, dw, off) in geometry()) {
        let s = make_schedule(frames, t_w, dw, off).unwrap();
        for w in &s.windows {
            if w.t1 >= off && w.t1 + t_w - off <= frames {
                prop_assert_eq!(w.t_w, t_w);
                prop_assert_eq!(w.t1 - w.t0, off);
                prop_assert_eq!(w.delta_w, dw);
            }
        }
    }
}

#[test]
fn previous_frame_side_information() {
    let s = make_schedule(6, 2, 1, 1).unwrap();
    assert_eq!(s.windows[0].frames(), 0..1);
    for (t, w) in s.windows.iter().enumerate().skip(1) {
        assert_eq!((w.frames(), w.targets()), (t - 1..t + 1, t..t + 1));
    }
}

#[test]
fn tail_targets_have_no_latency() {
    let s = make_schedule(12, 4, 1, 3).unwrap();
    for w in &s.windows {
        assert_eq!(w.mean_latency(), 0.0);
    }
}

#[test]
fn schedule_prints_one_line_per_window() {
    let s = make_schedule(10, 4, 2, 1).unwrap();
    let text = s.to_string();
    assert!(text.lines().count() >= s.windows.len());
}
