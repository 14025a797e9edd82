//! Behavior sequences and policy trees.
//!
//! A length-`t` [`BehaviorSequence`] holds `t` actions and the `t - 1`
//! observations received between them. A [`PolicyTree`] of depth `T` holds an
//! action at every node and one child per observation at every non-leaf
//! node; its full-length root-to-leaf paths are its behavior sequences.
//!
//! Actions and observations are indices into the owning agent's declared
//! identifier lists. Children are stored in declared observation order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BehaviorSequence {
    actions: Vec<usize>,
    observations: Vec<usize>,
}

impl BehaviorSequence {
    pub fn new(actions: Vec<usize>, observations: Vec<usize>) -> Result<Self> {
        if actions.is_empty() || actions.len() != observations.len() + 1 {
            return Err(Error::MalformedTree(format!(
                "sequence with {} actions and {} observations",
                actions.len(),
                observations.len()
            )));
        }
        Ok(BehaviorSequence {
            actions,
            observations,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn observations(&self) -> &[usize] {
        &self.observations
    }

    /// `a1:o2:a2:...` using the given identifier lists.
    pub fn to_compact(&self, actions: &[String], observations: &[String]) -> String {
        let mut out = actions[self.actions[0]].clone();
        for (o, a) in self.observations.iter().zip(&self.actions[1..]) {
            out.push(':');
            out.push_str(&observations[*o]);
            out.push(':');
            out.push_str(&actions[*a]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicyTree {
    action: usize,
    children: Vec<PolicyTree>,
}

impl PolicyTree {
    pub fn leaf(action: usize) -> Self {
        PolicyTree {
            action,
            children: Vec::new(),
        }
    }

    /// Builds an interior node; children must be complete trees of equal depth
    /// and branching.
    pub fn node(action: usize, children: Vec<PolicyTree>) -> Result<Self> {
        if let Some(first) = children.first() {
            let (depth, branching) = (first.depth(), children.len());
            for c in &children {
                if c.depth() != depth {
                    return Err(Error::MalformedTree("children differ in depth".into()));
                }
                if !c.is_leaf() && c.branching() != branching {
                    return Err(Error::MalformedTree("children differ in branching".into()));
                }
            }
        }
        Ok(PolicyTree { action, children })
    }

    /// The depth-`depth` tree that plays `action` at every node.
    pub fn constant(action: usize, branching: usize, depth: usize) -> Self {
        assert!(depth >= 1, "depth must be at least 1");
        if depth == 1 {
            return PolicyTree::leaf(action);
        }
        let child = PolicyTree::constant(action, branching, depth - 1);
        PolicyTree {
            action,
            children: vec![child; branching],
        }
    }

    /// Builds a complete tree from its preorder action list.
    pub fn from_preorder(actions: &[usize], branching: usize, depth: usize) -> Result<Self> {
        let expected = node_count(branching, depth);
        if actions.len() as u128 != expected {
            return Err(Error::MalformedTree(format!(
                "expected {expected} preorder actions for depth {depth}, found {}",
                actions.len()
            )));
        }
        fn build(it: &mut std::slice::Iter<'_, usize>, branching: usize, depth: usize) -> PolicyTree {
            let action = *it.next().expect("length checked");
            let children = if depth == 1 {
                Vec::new()
            } else {
                (0..branching).map(|_| build(it, branching, depth - 1)).collect()
            };
            PolicyTree { action, children }
        }
        Ok(build(&mut actions.iter(), branching, depth))
    }

    pub fn action(&self) -> usize {
        self.action
    }

    pub fn children(&self) -> &[PolicyTree] {
        &self.children
    }

    pub fn child(&self, observation: usize) -> Option<&PolicyTree> {
        self.children.get(observation)
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Children per interior node (0 for a single leaf).
    pub fn branching(&self) -> usize {
        self.children.len()
    }

    pub fn depth(&self) -> usize {
        let mut d = 1;
        let mut node = self;
        while let Some(c) = node.children.first() {
            d += 1;
            node = c;
        }
        d
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(PolicyTree::node_count).sum::<usize>()
    }

    /// Checks completeness and uniform depth against an observation alphabet.
    pub fn validate(&self, num_actions: usize, num_observations: usize) -> Result<()> {
        fn walk(t: &PolicyTree, na: usize, no: usize, depth: usize) -> Result<()> {
            if t.action >= na {
                return Err(Error::MalformedTree(format!("action {} out of range", t.action)));
            }
            if depth == 1 {
                return if t.children.is_empty() {
                    Ok(())
                } else {
                    Err(Error::MalformedTree("leaves at different depths".into()))
                };
            }
            if t.children.len() != no {
                return Err(Error::MalformedTree(format!(
                    "node has {} children, expected {no}",
                    t.children.len()
                )));
            }
            t.children.iter().try_for_each(|c| walk(c, na, no, depth - 1))
        }
        walk(self, num_actions, num_observations, self.depth())
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.node_count());
        fn walk(t: &PolicyTree, out: &mut Vec<usize>) {
            out.push(t.action);
            t.children.iter().for_each(|c| walk(c, out));
        }
        walk(self, &mut out);
        out
    }

    /// Distinct length-`t` sequences, in observation-path order.
    pub fn prefixes(&self, t: usize) -> Result<Vec<BehaviorSequence>> {
        if t == 0 || t > self.depth() {
            return Err(Error::DepthMismatch {
                expected: self.depth(),
                found: t,
            });
        }
        let mut out = Vec::new();
        let mut actions = Vec::with_capacity(t);
        let mut observations = Vec::with_capacity(t);
        fn walk(
            node: &PolicyTree,
            remaining: usize,
            actions: &mut Vec<usize>,
            observations: &mut Vec<usize>,
            out: &mut Vec<BehaviorSequence>,
        ) {
            actions.push(node.action);
            if remaining == 1 {
                out.push(BehaviorSequence {
                    actions: actions.clone(),
                    observations: observations.clone(),
                });
            } else {
                for (o, c) in node.children.iter().enumerate() {
                    observations.push(o);
                    walk(c, remaining - 1, actions, observations, out);
                    observations.pop();
                }
            }
            actions.pop();
        }
        walk(self, t, &mut actions, &mut observations, &mut out);
        Ok(out)
    }

    /// Every full-length sequence of the tree.
    pub fn sequences(&self) -> Vec<BehaviorSequence> {
        self.prefixes(self.depth()).expect("depth is always valid")
    }

    /// True when `seq` is one of the tree's root paths of the same length.
    pub fn contains_sequence(&self, seq: &BehaviorSequence) -> bool {
        let mut node = self;
        if node.action != seq.actions[0] {
            return false;
        }
        for (o, a) in seq.observations.iter().zip(&seq.actions[1..]) {
            match node.children.get(*o) {
                Some(c) if c.action == *a => node = c,
                _ => return false,
            }
        }
        true
    }

    /// The depth-`t` truncation.
    pub fn frame(&self, t: usize) -> Result<PolicyTree> {
        if t == 0 || t > self.depth() {
            return Err(Error::DepthMismatch {
                expected: self.depth(),
                found: t,
            });
        }
        fn cut(node: &PolicyTree, t: usize) -> PolicyTree {
            PolicyTree {
                action: node.action,
                children: if t == 1 {
                    Vec::new()
                } else {
                    node.children.iter().map(|c| cut(c, t - 1)).collect()
                },
            }
        }
        Ok(cut(self, t))
    }

    /// Deterministic byte encoding: a header with branching and depth, then
    /// the preorder actions. Two trees encode equally iff they are equal.
    pub fn canonical_encode(&self) -> Vec<u8> {
        let pre = self.preorder();
        let mut out = Vec::with_capacity(10 + 4 * pre.len());
        out.extend_from_slice(b"PT");
        out.extend_from_slice(&(self.branching() as u32).to_le_bytes());
        out.extend_from_slice(&(self.depth() as u32).to_le_bytes());
        for a in pre {
            out.extend_from_slice(&(a as u32).to_le_bytes());
        }
        out
    }

    pub fn canonical_decode(bytes: &[u8]) -> Result<PolicyTree> {
        let bad = || Error::MalformedTree("invalid canonical encoding".into());
        if bytes.len() < 10 || &bytes[..2] != b"PT" || !(bytes.len() - 10).is_multiple_of(4) {
            return Err(bad());
        }
        let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap()) as usize;
        let (branching, depth) = (word(2), word(6));
        if depth == 0 || (depth > 1 && branching == 0) {
            return Err(bad());
        }
        let actions: Vec<usize> = (10..bytes.len()).step_by(4).map(word).collect();
        PolicyTree::from_preorder(&actions, branching.max(1), depth)
    }

    /// One-line preorder encoding with `|` separators, for CSV cells.
    pub fn to_compact(&self, actions: &[String]) -> String {
        self.preorder()
            .iter()
            .map(|&a| actions[a].as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn from_compact(text: &str, actions: &[String], branching: usize) -> Result<PolicyTree> {
        let pre = text
            .split('|')
            .map(|name| {
                actions
                    .iter()
                    .position(|a| a == name)
                    .ok_or_else(|| Error::MalformedTree(format!("unknown action {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let depth = depth_for_count(branching, pre.len()).ok_or_else(|| {
            Error::MalformedTree(format!(
                "{} nodes do not form a complete tree with branching {branching}",
                pre.len()
            ))
        })?;
        PolicyTree::from_preorder(&pre, branching, depth)
    }

    pub fn to_doc(&self, actions: &[String], observations: &[String]) -> TreeDoc {
        TreeDoc {
            action: actions[self.action].clone(),
            children: self
                .children
                .iter()
                .enumerate()
                .map(|(o, c)| BranchDoc {
                    observation: observations[o].clone(),
                    tree: c.to_doc(actions, observations),
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &TreeDoc, actions: &[String], observations: &[String]) -> Result<Self> {
        let action = actions
            .iter()
            .position(|a| *a == doc.action)
            .ok_or_else(|| Error::MalformedTree(format!("unknown action {:?}", doc.action)))?;
        if !doc.children.is_empty() && doc.children.len() != observations.len() {
            return Err(Error::MalformedTree(format!(
                "node has {} branches, expected {}",
                doc.children.len(),
                observations.len()
            )));
        }
        let mut children = Vec::with_capacity(doc.children.len());
        for (o, b) in doc.children.iter().enumerate() {
            if b.observation != observations[o] {
                return Err(Error::MalformedTree(format!(
                    "branch {o} is labeled {:?}, expected {:?}",
                    b.observation, observations[o]
                )));
            }
            children.push(PolicyTree::from_doc(&b.tree, actions, observations)?);
        }
        PolicyTree::node(action, children)
    }
}

/// Nested document form of a policy tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDoc {
    pub action: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<BranchDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDoc {
    pub observation: String,
    pub tree: TreeDoc,
}

/// Nodes in a complete tree: `(b^T - 1) / (b - 1)`, or `T` when `b = 1`.
pub fn node_count(branching: usize, depth: usize) -> u128 {
    let b = branching.max(1) as u128;
    if b == 1 {
        return depth as u128;
    }
    let mut total = 0u128;
    let mut level = 1u128;
    for _ in 0..depth {
        total = total.saturating_add(level);
        level = level.saturating_mul(b);
    }
    total
}

fn depth_for_count(branching: usize, count: usize) -> Option<usize> {
    (1..=count).find(|&d| node_count(branching, d) == count as u128)
}
