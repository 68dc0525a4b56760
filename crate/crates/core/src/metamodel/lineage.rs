//! Processing lineage: releases, actions and artefacts connected by the
//! inputs and outputs recorded on actions. Tags and annotations never add
//! edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::ids::Id;
use super::types::{Action, Artefact, Release};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageGraph {
    pub nodes: BTreeSet<Id>,
    pub edges: BTreeSet<(Id, Id)>,
}

impl LineageGraph {
    /// Builds the graph and rejects it if it contains a cycle.
    pub fn build<'a>(
        releases: impl IntoIterator<Item = &'a Release>,
        actions: impl IntoIterator<Item = &'a Action>,
        artefacts: impl IntoIterator<Item = &'a Artefact>,
    ) -> Result<Self> {
        let graph = Self::build_unchecked(releases, actions, artefacts);
        if let Some(cycle) = graph.find_cycle() {
            return Err(Error::CycleDetected(cycle.into_iter().map(|id| id.to_string()).collect()));
        }
        Ok(graph)
    }

    /// Builds the graph without the acyclicity check. Edge endpoints that
    /// are not catalog records are still added as nodes so the graph stays
    /// closed.
    pub fn build_unchecked<'a>(
        releases: impl IntoIterator<Item = &'a Release>,
        actions: impl IntoIterator<Item = &'a Action>,
        artefacts: impl IntoIterator<Item = &'a Artefact>,
    ) -> Self {
        let mut graph = LineageGraph::default();
        graph.nodes.extend(releases.into_iter().map(|r| r.id.clone()));
        graph.nodes.extend(artefacts.into_iter().map(|a| a.id.clone()));
        for action in actions {
            graph.nodes.insert(action.id.clone());
            for input in &action.inputs {
                graph.nodes.insert(input.clone());
                graph.edges.insert((input.clone(), action.id.clone()));
            }
            for output in &action.outputs {
                graph.nodes.insert(output.clone());
                graph.edges.insert((action.id.clone(), output.clone()));
            }
        }
        graph
    }

    fn successors(&self) -> BTreeMap<&Id, Vec<&Id>> {
        let mut out: BTreeMap<&Id, Vec<&Id>> = BTreeMap::new();
        for (from, to) in &self.edges {
            out.entry(from).or_default().push(to);
        }
        out
    }

    fn predecessors(&self) -> BTreeMap<&Id, Vec<&Id>> {
        let mut out: BTreeMap<&Id, Vec<&Id>> = BTreeMap::new();
        for (from, to) in &self.edges {
            out.entry(to).or_default().push(from);
        }
        out
    }

    /// One cycle, as a closed walk `a -> b -> ... -> a`, if any exists.
    pub fn find_cycle(&self) -> Option<Vec<Id>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Fresh,
            Open,
            Done,
        }
        let succ = self.successors();
        let mut marks: BTreeMap<&Id, Mark> = self.nodes.iter().map(|n| (n, Mark::Fresh)).collect();
        for start in &self.nodes {
            if marks[start] != Mark::Fresh {
                continue;
            }
            // Iterative DFS keeping the current path for cycle reporting.
            let mut path: Vec<&Id> = vec![start];
            let mut cursor: Vec<usize> = vec![0];
            marks.insert(start, Mark::Open);
            while let Some(&node) = path.last() {
                let i = *cursor.last().unwrap();
                let next = succ.get(node).and_then(|s| s.get(i)).copied();
                match next {
                    Some(child) => {
                        *cursor.last_mut().unwrap() += 1;
                        match marks.get(child).copied().unwrap_or(Mark::Fresh) {
                            Mark::Fresh => {
                                marks.insert(child, Mark::Open);
                                path.push(child);
                                cursor.push(0);
                            }
                            Mark::Open => {
                                let pos = path.iter().position(|n| *n == child).unwrap_or(0);
                                let mut cycle: Vec<Id> = path[pos..].iter().map(|n| (*n).clone()).collect();
                                cycle.push(child.clone());
                                return Some(cycle);
                            }
                            Mark::Done => {}
                        }
                    }
                    None => {
                        marks.insert(node, Mark::Done);
                        path.pop();
                        cursor.pop();
                    }
                }
            }
        }
        None
    }

    /// Every node with a directed path to `node`.
    pub fn ancestors(&self, node: &Id) -> Result<BTreeSet<Id>> {
        self.reach(node, &self.predecessors())
    }

    /// Every node reachable from `node`.
    pub fn descendants(&self, node: &Id) -> Result<BTreeSet<Id>> {
        self.reach(node, &self.successors())
    }

    fn reach(&self, node: &Id, adjacency: &BTreeMap<&Id, Vec<&Id>>) -> Result<BTreeSet<Id>> {
        if !self.nodes.contains(node) {
            return Err(Error::UnknownNode(node.to_string()));
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([node]);
        while let Some(current) = queue.pop_front() {
            for next in adjacency.get(current).into_iter().flatten() {
                if seen.insert((*next).clone()) {
                    queue.push_back(next);
                }
            }
        }
        seen.remove(node);
        Ok(seen)
    }

    /// Out-degree of a node.
    pub fn fan_out(&self, node: &Id) -> usize {
        self.edges.iter().filter(|(from, _)| from == node).count()
    }
}

/// `lineage_ancestors` as a free function.
pub fn lineage_ancestors(graph: &LineageGraph, node: &Id) -> Result<BTreeSet<Id>> {
    graph.ancestors(node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::types::*;
    use chrono::TimeZone;

    fn action(id: &str, inputs: &[&str], outputs: &[&str]) -> Action {
        let t = chrono::Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        Action {
            id: Id::from(id),
            experiment_id: Id::from("experiment-x"),
            kind: ActionKind::Automated,
            operation: "op".into(),
            parameters: Default::default(),
            inputs: inputs.iter().map(|s| Id::from(*s)).collect(),
            outputs: outputs.iter().map(|s| Id::from(*s)).collect(),
            executor: "test".into(),
            evaluation: Default::default(),
            validation_protocol: String::new(),
            started_at: t,
            finished_at: t,
            status: ActionStatus::Succeeded,
        }
    }

    fn ids(items: &[&str]) -> BTreeSet<Id> {
        items.iter().map(|s| Id::from(*s)).collect()
    }

    #[test]
    fn single_action_edges() {
        let a = action("action-a", &["release-1"], &["release-2"]);
        let g = LineageGraph::build([], [&a], []).unwrap();
        let expected: BTreeSet<(Id, Id)> = [
            (Id::from("release-1"), Id::from("action-a")),
            (Id::from("action-a"), Id::from("release-2")),
        ]
        .into_iter()
        .collect();
        assert_eq!(g.edges, expected);
        assert_eq!(g.ancestors(&Id::from("release-2")).unwrap(), ids(&["action-a", "release-1"]));
        assert!(g.ancestors(&Id::from("release-1")).unwrap().is_empty());
    }

    #[test]
    fn empty_catalog() {
        let g = LineageGraph::build([], [], []).unwrap();
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn fan_out_of_two() {
        let a1 = action("action-1", &["release-1"], &["release-2"]);
        let a2 = action("action-2", &["release-1"], &["release-3"]);
        let g = LineageGraph::build([], [&a1, &a2], []).unwrap();
        assert_eq!(g.fan_out(&Id::from("release-1")), 2);
        // Hand-enumerated edge set.
        assert_eq!(g.edges.len(), 4);
    }

    #[test]
    fn diamond_ancestors() {
        let a1 = action("action-1", &["release-1"], &["release-2"]);
        let a2 = action("action-2", &["release-1"], &["release-3"]);
        let a3 = action("action-3", &["release-2", "release-3"], &["release-4"]);
        let g = LineageGraph::build([], [&a1, &a2, &a3], []).unwrap();
        assert_eq!(
            g.ancestors(&Id::from("release-4")).unwrap(),
            ids(&["action-3", "release-2", "release-3", "action-1", "action-2", "release-1"])
        );
    }

    #[test]
    fn cycle_is_reported() {
        let a1 = action("action-1", &["release-1"], &["release-2"]);
        let a2 = action("action-2", &["release-2"], &["release-1"]);
        match LineageGraph::build([], [&a1, &a2], []) {
            Err(Error::CycleDetected(cycle)) => {
                assert_eq!(cycle.first(), cycle.last());
                assert!(cycle.len() >= 3);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn unknown_node() {
        let g = LineageGraph::default();
        assert!(matches!(g.ancestors(&Id::from("release-z")), Err(Error::UnknownNode(_))));
    }
}
