//! Random operation sequences against a single detector state.

use std::collections::BTreeSet;

use manet_fd::{FdState, NodeId, QueryMsg, ResponseMsg, TagSet, TaggedEntry};
use proptest::prelude::*;

pub const ME: NodeId = NodeId(0);
pub const PEERS: u32 = 6;

#[derive(Clone, Debug)]
pub enum Op {
    Query {
        sender: u32,
        suspected: Vec<(u32, u64)>,
        mistake: Vec<(u32, u64)>,
        mobility: bool,
    },
    Begin,
    Respond(u32),
    Harvest(u32),
    Finish,
    Abandon,
}

pub fn tags() -> impl Strategy<Value = Vec<(u32, u64)>> {
    prop::collection::vec((0..PEERS, 0u64..16), 0..5)
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (1..PEERS, tags(), tags(), any::<bool>())
            .prop_map(|(sender, suspected, mistake, mobility)| Op::Query { sender, suspected, mistake, mobility }),
        2 => Just(Op::Begin),
        3 => (1..PEERS).prop_map(Op::Respond),
        1 => (1..PEERS).prop_map(Op::Harvest),
        2 => Just(Op::Finish),
        1 => Just(Op::Abandon),
    ]
}

pub fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(op(), 1..40)
}

pub fn tag_set(entries: &[(u32, u64)]) -> TagSet {
    entries.iter().map(|&(n, t)| TaggedEntry::new(NodeId(n), t)).collect()
}

pub fn stored_tag(s: &FdState, node: NodeId) -> Option<u64> {
    s.suspected().tag_of(node).or_else(|| s.mistake().tag_of(node))
}

fn check_state(s: &FdState) -> Result<(), TestCaseError> {
    let suspected: BTreeSet<NodeId> = s.suspected().nodes().collect();
    let mistaken: BTreeSet<NodeId> = s.mistake().nodes().collect();
    prop_assert!(
        suspected.is_disjoint(&mistaken),
        "{suspected:?} and {mistaken:?} overlap"
    );
    prop_assert!(!suspected.contains(&ME), "suspects itself");
    Ok(())
}

/// Applies `ops` and checks after every step that the counter never
/// decreases, no node is both suspected and mistaken, the node never
/// suspects itself, nothing stored is staler than what was received, and
/// that handling a query twice is the same as handling it once.
pub fn check_sequence(ops: Vec<Op>) -> Result<(), TestCaseError> {
    let mut s = FdState::new(ME, 1, 3).unwrap();
    let mut round = 0;
    for op in ops {
        let counter = s.counter();
        match op {
            Op::Query {
                sender,
                suspected,
                mistake,
                mobility,
            } => {
                let q = QueryMsg {
                    sender: NodeId(sender),
                    round_id: 1,
                    suspected: tag_set(&suspected),
                    mistake: tag_set(&mistake),
                };
                let r = s.handle_query(&q, mobility);
                prop_assert_eq!(
                    r,
                    ResponseMsg {
                        sender: ME,
                        round_id: 1
                    }
                );
                prop_assert!(s.known().contains(&q.sender));

                for e in q.suspected.iter().chain(q.mistake.iter()) {
                    if e.node == ME {
                        prop_assert!(s.mistake().tag_of(ME).is_some_and(|t| t >= e.tag));
                    } else {
                        prop_assert!(stored_tag(&s, e.node).is_some_and(|t| t >= e.tag));
                    }
                }
                if let Some(t) = q.suspected.tag_of(ME) {
                    // a suspicion of oneself is always answered with a newer mistake
                    prop_assert!(s
                        .mistake()
                        .tag_of(ME)
                        .is_some_and(|m| m > t || stored_tag(&s, ME) >= Some(t)));
                }

                let once = s.clone();
                s.handle_query(&q, mobility);
                prop_assert_eq!(&s, &once);
            }
            Op::Begin => {
                if let Ok(q) = s.begin_round() {
                    round = q.round_id;
                    prop_assert_eq!(&q.suspected, s.suspected());
                    prop_assert_eq!(&q.mistake, s.mistake());
                    prop_assert!(s.rec_from().contains(&ME));
                }
            }
            Op::Respond(n) => {
                let _ = s.on_response(&ResponseMsg {
                    sender: NodeId(n),
                    round_id: round,
                });
            }
            Op::Harvest(n) => {
                let _ = s.harvest_response(&ResponseMsg {
                    sender: NodeId(n),
                    round_id: round,
                });
            }
            Op::Finish => {
                let before = s.clone();
                if let Ok(generated) = s.finish_round() {
                    prop_assert!(s.counter() > counter);
                    for e in generated {
                        prop_assert!(before.known().contains(&e.node));
                        prop_assert!(!before.rec_from().contains(&e.node));
                        prop_assert_eq!(s.suspected().tag_of(e.node), Some(e.tag));
                        prop_assert!(e.tag < s.counter());
                    }
                }
            }
            Op::Abandon => s.abandon_round(),
        }
        prop_assert!(s.counter() >= counter, "counter went back");
        check_state(&s)?;
    }
    Ok(())
}

/// Two queries from different senders leave the same freshest tags in
/// either order.
pub fn check_commutes(
    a: Vec<(u32, u64)>,
    ma: Vec<(u32, u64)>,
    b: Vec<(u32, u64)>,
    mb: Vec<(u32, u64)>,
) -> Result<(), TestCaseError> {
    let qa = QueryMsg {
        sender: NodeId(1),
        round_id: 1,
        suspected: tag_set(&a),
        mistake: tag_set(&ma),
    };
    let qb = QueryMsg {
        sender: NodeId(2),
        round_id: 1,
        suspected: tag_set(&b),
        mistake: tag_set(&mb),
    };
    let mut x = FdState::new(ME, 1, 3).unwrap();
    let mut y = x.clone();
    x.handle_query(&qa, false);
    x.handle_query(&qb, false);
    y.handle_query(&qb, false);
    y.handle_query(&qa, false);
    for n in 1..PEERS {
        prop_assert_eq!(stored_tag(&x, NodeId(n)), stored_tag(&y, NodeId(n)));
    }
    Ok(())
}
