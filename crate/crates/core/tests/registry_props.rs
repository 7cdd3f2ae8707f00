use std::collections::HashMap;
use std::sync::Arc;

use fastcycle_core::{
    DropPolicy, Payload, PublishError, Scope, SubscribeOptions, SubscriberId, Timestamp, TopicName,
    TopicRegistry,
};
use proptest::prelude::*;

fn topic(i: usize) -> TopicName {
    TopicName::new(&format!("t{i}")).unwrap()
}

#[derive(Debug, Clone)]
enum Op {
    Publish {
        topic: usize,
        len: usize,
    },
    /// Take and complete up to this many ready tasks.
    Drain(usize),
}

fn ops(topics: usize) -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            4 => (0..topics, 0usize..32).prop_map(|(topic, len)| Op::Publish { topic, len }),
            1 => (0usize..16).prop_map(Op::Drain),
        ],
        0..300,
    )
}

struct Harness {
    reg: TopicRegistry<()>,
    /// Received (topic, seq, instance id) per subscriber, in delivery order.
    seen: HashMap<SubscriberId, Vec<(String, u64, u64)>>,
}

impl Harness {
    fn drain(&mut self, limit: usize) -> usize {
        let mut done = 0;
        while done < limit {
            let tasks = self.reg.take_ready();
            if tasks.is_empty() {
                break;
            }
            for task in tasks {
                let env = &task.envelope;
                self.seen.entry(task.subscriber).or_default().push((
                    env.topic.as_str().to_owned(),
                    env.seq,
                    env.payload.instance_id().get(),
                ));
                assert!(self.reg.complete(task.subscriber));
                done += 1;
            }
        }
        done
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Unbounded queues lose nothing, preserve per-topic order and hand every
    /// subscriber the publisher's payload instance.
    #[test]
    fn unbounded_fanout_is_lossless_and_ordered(
        topics in 1usize..4,
        subs in prop::collection::vec((0usize..4, any::<bool>()), 1..8),
        script in ops(4),
    ) {
        let mut h = Harness { reg: TopicRegistry::new(), seen: HashMap::new() };
        let mut scope_of = Vec::new();
        for (t, wildcard) in &subs {
            let scope = if *wildcard { Scope::All } else { Scope::Topic(topic(t % topics)) };
            let id = h.reg.subscribe(scope.clone(), SubscribeOptions::unbounded(), ());
            scope_of.push((id, scope));
        }

        let mut published: Vec<(String, u64, u64)> = Vec::new();
        for (now, op) in script.iter().enumerate() {
            match op {
                Op::Publish { topic: t, len } => {
                    let name = topic(t % topics);
                    let payload = Arc::new(Payload::from(vec![7u8; *len]));
                    let id = payload.instance_id().get();
                    let receipt = h.reg.publish(&name, payload, Timestamp::from_nanos(now as i64)).unwrap();
                    let expected = scope_of.iter().filter(|(_, s)| match s {
                        Scope::All => true,
                        Scope::Topic(n) => *n == name,
                    }).count();
                    prop_assert_eq!(receipt.delivered_to, expected);
                    published.push((name.as_str().to_owned(), receipt.seq, id));
                }
                Op::Drain(n) => { h.drain(*n); }
            }
            prop_assert!(h.reg.in_flight() == 0);
        }
        h.drain(usize::MAX);
        prop_assert_eq!(h.reg.pending(), 0);

        for (id, scope) in &scope_of {
            let want: Vec<_> = published.iter().filter(|(t, _, _)| match scope {
                Scope::All => true,
                Scope::Topic(n) => n.as_str() == t,
            }).cloned().collect();
            let got = h.seen.remove(id).unwrap_or_default();
            prop_assert_eq!(got, want);
        }

        // seq per topic counts up from zero
        let mut next: HashMap<&str, u64> = HashMap::new();
        for (t, seq, _) in &published {
            let n = next.entry(t.as_str()).or_insert(0);
            prop_assert_eq!(*seq, *n);
            *n += 1;
        }
        let counters = h.reg.counters();
        prop_assert_eq!(counters.published, published.len() as u64);
        prop_assert_eq!(counters.appended, counters.taken);
        prop_assert_eq!(counters.dropped, 0);
    }

    /// Bounded queues never exceed capacity and account for every envelope.
    #[test]
    fn bounded_queues_account_for_everything(
        cap in 1usize..6,
        policy in prop_oneof![Just(DropPolicy::DropOldest), Just(DropPolicy::RejectNew), Just(DropPolicy::Block)],
        script in ops(1),
    ) {
        let mut h = Harness { reg: TopicRegistry::new(), seen: HashMap::new() };
        let id = h.reg.subscribe(Scope::Topic(topic(0)), SubscribeOptions::bounded(cap, policy).unwrap(), ());
        let mut accepted = 0u64;
        let mut blocked = 0u64;
        for op in &script {
            match op {
                Op::Publish { len, .. } => {
                    match h.reg.publish(&topic(0), Arc::new(Payload::from(vec![0u8; *len])), Timestamp::ZERO) {
                        Ok(_) => accepted += 1,
                        Err(PublishError::WouldBlock { subscriber }) => {
                            prop_assert_eq!(policy, DropPolicy::Block);
                            prop_assert_eq!(subscriber, id);
                            blocked += 1;
                        }
                    }
                }
                Op::Drain(n) => { h.drain(*n); }
            }
            prop_assert!(h.reg.entry(id).unwrap().queue().len() <= cap);
        }
        h.drain(usize::MAX);
        let delivered = h.seen.remove(&id).unwrap_or_default();
        let entry = h.reg.entry(id).unwrap();
        prop_assert_eq!(accepted, h.reg.counters().published);
        prop_assert_eq!(delivered.len() as u64 + entry.dropped(), accepted);
        if policy == DropPolicy::Block {
            prop_assert_eq!(entry.dropped(), 0);
        } else {
            prop_assert_eq!(blocked, 0);
        }
        // whatever survived is still in publish order
        prop_assert!(delivered.windows(2).all(|w| w[0].1 < w[1].1));
    }
}

#[test]
fn failed_blocking_publish_changes_nothing() {
    let mut reg: TopicRegistry<()> = TopicRegistry::new();
    let t = topic(0);
    let open = reg.subscribe(Scope::Topic(t.clone()), SubscribeOptions::unbounded(), ());
    let full = reg.subscribe(
        Scope::Topic(t.clone()),
        SubscribeOptions::bounded(1, DropPolicy::Block).unwrap(),
        (),
    );
    reg.publish(&t, Arc::new(Payload::empty()), Timestamp::ZERO)
        .unwrap();
    let before = reg.topic("t0").unwrap().next_seq();
    let err = reg.publish(&t, Arc::new(Payload::empty()), Timestamp::ZERO);
    assert_eq!(
        err.unwrap_err(),
        PublishError::WouldBlock { subscriber: full }
    );
    assert_eq!(reg.topic("t0").unwrap().next_seq(), before);
    assert_eq!(reg.entry(open).unwrap().queue().len(), 1);
}
