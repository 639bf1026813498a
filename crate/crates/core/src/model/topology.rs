//! Publisher/subscriber graph construction.
//!
//! Ids are dense and assigned deterministically: publisher nodes take the
//! lowest node ids, subscriber nodes follow, and topic `k` belongs to the
//! `k`-th publisher.

use super::config::{ConfigError, TopologyKind};

pub type NodeId = u16;
pub type TopicId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Publisher,
    Subscriber,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub node_id: NodeId,
    pub role: Role,
    /// Topics this node publishes (publisher) or subscribes to (subscriber).
    pub topic_ids: Vec<TopicId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicSpec {
    pub topic_id: TopicId,
    pub publisher_node: NodeId,
    pub subscriber_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub nodes: Vec<NodeSpec>,
    pub topics: Vec<TopicSpec>,
}

impl TopologySpec {
    pub fn publishers(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.role == Role::Publisher)
    }

    pub fn subscribers(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.role == Role::Subscriber)
    }

    pub fn topic(&self, topic_id: TopicId) -> Option<&TopicSpec> {
        self.topics.iter().find(|t| t.topic_id == topic_id)
    }
}

/// Builds one of the three graph shapes over `node_count` nodes.
pub fn build_topology(node_count: u32, kind: TopologyKind) -> Result<TopologySpec, ConfigError> {
    if node_count < 2 {
        return Err(ConfigError::Constraint(format!(
            "node_count must be >= 2, got {node_count}"
        )));
    }
    if node_count > u32::from(u16::MAX) {
        return Err(ConfigError::Constraint(format!(
            "node_count must be <= {}",
            u16::MAX
        )));
    }
    if kind == TopologyKind::Paired && !node_count.is_multiple_of(2) {
        return Err(ConfigError::Constraint(
            "PAIRED requires even node_count".into(),
        ));
    }
    let n = node_count as u16;
    let (publisher_count, topics): (u16, Vec<TopicSpec>) = match kind {
        TopologyKind::Paired => {
            let half = n / 2;
            let topics = (0..half)
                .map(|k| TopicSpec {
                    topic_id: k,
                    publisher_node: k,
                    subscriber_nodes: vec![half + k],
                })
                .collect();
            (half, topics)
        }
        TopologyKind::OneToMany => (
            1,
            vec![TopicSpec {
                topic_id: 0,
                publisher_node: 0,
                subscriber_nodes: (1..n).collect(),
            }],
        ),
        TopologyKind::ManyToOne => {
            let sink = n - 1;
            let topics = (0..sink)
                .map(|k| TopicSpec {
                    topic_id: k,
                    publisher_node: k,
                    subscriber_nodes: vec![sink],
                })
                .collect();
            (sink, topics)
        }
    };

    let nodes = (0..n)
        .map(|node_id| {
            if node_id < publisher_count {
                NodeSpec {
                    node_id,
                    role: Role::Publisher,
                    topic_ids: topics
                        .iter()
                        .filter(|t| t.publisher_node == node_id)
                        .map(|t| t.topic_id)
                        .collect(),
                }
            } else {
                NodeSpec {
                    node_id,
                    role: Role::Subscriber,
                    topic_ids: topics
                        .iter()
                        .filter(|t| t.subscriber_nodes.contains(&node_id))
                        .map(|t| t.topic_id)
                        .collect(),
                }
            }
        })
        .collect();

    Ok(TopologySpec {
        kind,
        nodes,
        topics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(t: &TopologySpec) -> (usize, usize, usize) {
        (
            t.publishers().count(),
            t.subscribers().count(),
            t.topics.len(),
        )
    }

    #[test]
    fn one_to_many_32() {
        let t = build_topology(32, TopologyKind::OneToMany).unwrap();
        assert_eq!(counts(&t), (1, 31, 1));
        assert_eq!(t.topics[0].subscriber_nodes.len(), 31);
    }

    #[test]
    fn paired_2() {
        let t = build_topology(2, TopologyKind::Paired).unwrap();
        assert_eq!(counts(&t), (1, 1, 1));
    }

    #[test]
    fn many_to_one_64() {
        let t = build_topology(64, TopologyKind::ManyToOne).unwrap();
        assert_eq!(counts(&t), (63, 1, 63));
        let sink = t.subscribers().next().unwrap();
        assert_eq!(sink.topic_ids.len(), 63);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(build_topology(1, TopologyKind::OneToMany).is_err());
        assert!(build_topology(7, TopologyKind::Paired).is_err());
    }

    fn check_well_formed(t: &TopologySpec, n: u32) {
        let mut seen = vec![0u32; n as usize];
        for node in &t.nodes {
            seen[node.node_id as usize] += 1;
            assert!(!node.topic_ids.is_empty());
        }
        assert!(seen.iter().all(|&c| c == 1));
        for topic in &t.topics {
            let owners = t
                .publishers()
                .filter(|p| p.topic_ids.contains(&topic.topic_id))
                .count();
            assert_eq!(owners, 1);
            assert!(!topic.subscriber_nodes.is_empty());
            assert_eq!(t.nodes[topic.publisher_node as usize].role, Role::Publisher);
            for s in &topic.subscriber_nodes {
                assert_eq!(t.nodes[*s as usize].role, Role::Subscriber);
            }
        }
    }

    proptest! {
        #[test]
        fn shapes_are_well_formed(n in 2u32..200) {
            for kind in TopologyKind::ALL {
                if kind == TopologyKind::Paired && n % 2 == 1 {
                    continue;
                }
                let t = build_topology(n, kind).unwrap();
                check_well_formed(&t, n);
            }
        }

        #[test]
        fn one_to_many_mirrors_many_to_one(n in 2u32..200) {
            let a = build_topology(n, TopologyKind::OneToMany).unwrap();
            let b = build_topology(n, TopologyKind::ManyToOne).unwrap();
            prop_assert_eq!(a.publishers().count(), b.subscribers().count());
            prop_assert_eq!(a.subscribers().count(), b.publishers().count());
        }
    }
}
