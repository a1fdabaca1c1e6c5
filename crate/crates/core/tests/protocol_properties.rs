use proptest::prelude::*;

use sensornet::protocol::{
    select_new_parent, step, Action, DataPacket, Hops, Input, Message, NodeState, ParentCandidate,
    Payload, ProtocolConfig, TimerKind,
};
use sensornet::time::{SimDuration, SimTime};
use sensornet::NodeId;

const ME: NodeId = NodeId(3);
const NEIGHBORS: [u32; 4] = [1, 2, 4, 5];

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        Just(Payload::Forward),
        (0u32..24).prop_map(|hops| Payload::BackY { hops }),
        (0u32..6).prop_map(|broken_hops| Payload::BackN { broken_hops }),
        Just(Payload::Request),
        (0u32..24, 0u32..7).prop_map(|(hops, p)| Payload::Reply {
            hops,
            parent: NodeId(p)
        }),
        (0u32..6).prop_map(|pending_hops| Payload::Pending { pending_hops }),
        (0u32..24).prop_map(|hops| Payload::Beacon { hops }),
        Just(Payload::JoinProbe),
        prop_oneof![Just(Hops::Infinite), (0u32..24).prop_map(Hops::Finite)]
            .prop_map(|hops| Payload::JoinInfo { hops }),
        (0u32..7, 0u64..4).prop_map(|(o, seq)| Payload::Data(DataPacket {
            origin: NodeId(o),
            seq,
            via: None,
            trail: vec![NodeId(o)],
        })),
    ]
}

#[derive(Debug, Clone)]
enum Stimulus {
    Input(Input),
    /// Fire this timer at its deadline if it is armed.
    Fire(TimerKind),
}

fn timer() -> impl Strategy<Value = TimerKind> {
    prop_oneof![
        Just(TimerKind::Probe),
        Just(TimerKind::Ppt),
        Just(TimerKind::RequestResend),
        Just(TimerKind::Backoff),
        Just(TimerKind::PendingForward),
        Just(TimerKind::ReplyWindow),
        Just(TimerKind::JoinRetry),
        Just(TimerKind::JoinWindow),
        Just(TimerKind::SwitchRace),
    ]
}

fn stimulus() -> impl Strategy<Value = Stimulus> {
    prop_oneof![
        6 => (proptest::sample::select(NEIGHBORS.to_vec()), payload(), any::<bool>()).prop_map(|(from, p, bc)| {
            let m = if bc { Message::broadcast(NodeId(from), p) } else { Message::to(NodeId(from), ME, p) };
            Stimulus::Input(Input::Receive(m))
        }),
        4 => timer().prop_map(Stimulus::Fire),
        1 => Just(Stimulus::Input(Input::GenerateData)),
        1 => Just(Stimulus::Input(Input::Join)),
        1 => Just(Stimulus::Input(Input::Recover)),
    ]
}

fn fresh() -> NodeState {
    NodeState::new(ME, false).with_neighbors(NEIGHBORS.map(NodeId))
}

fn check_invariants(
    s: &NodeState,
    actions: &[Action],
    now: SimTime,
    cfg: &ProtocolConfig,
) -> Result<(), TestCaseError> {
    if let Hops::Finite(h) = s.hops {
        prop_assert!(h < cfg.max_hops, "hops {h} at or above max_hops");
    }
    prop_assert_ne!(s.parent, Some(ME));
    if let Some(p) = s.parent {
        prop_assert!(s.neighbors.contains(&p));
    }
    for a in actions {
        match a {
            Action::Arm(_, at) => prop_assert!(*at >= now),
            Action::Send(m) => {
                prop_assert_eq!(m.src, ME);
                if let Payload::BackY { hops } | Payload::Reply { hops, .. } = m.payload {
                    prop_assert!(hops < cfg.max_hops);
                }
            }
            _ => {}
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn handlers_are_pure_and_respect_the_hops_ceiling(
        script in proptest::collection::vec((stimulus(), 0u64..3_000), 1..60),
        max_hops in 2u32..20,
    ) {
        let cfg = ProtocolConfig { max_hops, ..ProtocolConfig::default() };
        let mut s = fresh();
        let mut now = SimTime::ZERO;
        for (stim, gap_ms) in script {
            now += SimDuration::from_millis(gap_ms);
            let input = match stim {
                Stimulus::Input(i) => i,
                Stimulus::Fire(kind) => match s.timers.get(&kind) {
                    Some(&at) => {
                        now = now.max(at);
                        if at < now {
                            // a deadline already in the past would have fired earlier
                            continue;
                        }
                        Input::Timer(kind)
                    }
                    None => Input::Timer(kind),
                },
            };
            let a = step(&s, &input, now, &cfg);
            let b = step(&s, &input, now, &cfg);
            prop_assert_eq!(&a, &b);
            check_invariants(&a.state, &a.actions, now, &cfg)?;
            s = a.state;
        }
    }

    #[test]
    fn selection_never_picks_a_short_loop(
        offers in proptest::collection::vec((proptest::sample::select(NEIGHBORS.to_vec()), 0u32..20, 0u32..7), 1..8),
        child in proptest::sample::select(NEIGHBORS.to_vec()),
    ) {
        let cfg = ProtocolConfig::default();
        let now = SimTime::ZERO + SimDuration::from_secs(30);
        let mut s = fresh();
        s.children.insert(NodeId(child), now);
        let candidates: Vec<ParentCandidate> = offers
            .iter()
            .map(|&(n, h, p)| ParentCandidate {
                neighbor: NodeId(n),
                hops: Hops::Finite(h),
                neighbor_parent: NodeId(p),
                position: None,
            })
            .collect();
        let t = select_new_parent(&s, &candidates, now, &cfg);
        if let Some(p) = t.state.parent {
            let chosen: Vec<_> = candidates.iter().filter(|c| c.neighbor == p).collect();
            prop_assert!(!chosen.is_empty());
            prop_assert!(chosen.iter().any(|c| c.neighbor_parent != ME && c.neighbor_parent != NodeId(child)));
            prop_assert!(!t.state.children.contains_key(&p));
            let h = t.state.hops.finite().unwrap();
            prop_assert!(h < cfg.max_hops);
            // nothing acceptable was shorter
            let best = candidates
                .iter()
                .filter(|c| c.neighbor_parent != ME && c.neighbor_parent != NodeId(child))
                .filter_map(|c| c.hops.finite())
                .filter(|h| h + 1 < cfg.max_hops)
                .min();
            prop_assert_eq!(Some(h), best.map(|b| b + 1));
        } else {
            let acceptable = candidates.iter().any(|c| {
                c.neighbor_parent != ME
                    && c.neighbor_parent != NodeId(child)
                    && c.hops.finite().is_some_and(|h| h + 1 < cfg.max_hops)
            });
            prop_assert!(!acceptable);
        }
    }
}
