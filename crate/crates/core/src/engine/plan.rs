use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attestation::AttestationMode;
use crate::protocol::{CallExecutionTree, CallPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    #[default]
    Serial,
    Parallel,
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Serial => "serial",
            EngineKind::Parallel => "parallel",
        })
    }
}

impl std::str::FromStr for EngineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "serial" => Ok(EngineKind::Serial),
            "parallel" => Ok(EngineKind::Parallel),
            other => Err(format!(
                "unknown engine {other:?} (expected serial|parallel)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Step {
    Start,
    Segments(Vec<CallPath>),
    Root,
    Signalling,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnginePlan {
    pub tree: CallExecutionTree,
    pub order: EngineKind,
    pub mode: AttestationMode,
    pub schedule: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("segments {0} and {1} conflict and cannot run in the same period")]
    ParallelConflict(CallPath, CallPath),
    #[error("declared conflict names path {0}, which is not in the tree")]
    UnknownPath(CallPath),
}

impl EnginePlan {
    /// Serial: one segment per step in post order. Parallel: one step per tree
    /// depth, deepest first. `conflicts` lists segment pairs where one reads
    /// what the other writes; they may not share a parallel step.
    pub fn new(
        tree: CallExecutionTree,
        order: EngineKind,
        mode: AttestationMode,
        conflicts: &[(CallPath, CallPath)],
    ) -> Result<Self, PlanError> {
        for (a, b) in conflicts {
            for p in [a, b] {
                if tree.resolve(p).is_none() {
                    return Err(PlanError::UnknownPath(p.clone()));
                }
            }
        }
        let segments: Vec<CallPath> = tree
            .post_order()
            .into_iter()
            .filter(|p| !p.is_root())
            .collect();
        let mut schedule = vec![Step::Start];
        match order {
            EngineKind::Serial => {
                schedule.extend(segments.into_iter().map(|p| Step::Segments(vec![p])));
            }
            EngineKind::Parallel => {
                if let Some((a, b)) = conflicts.iter().find(|(a, b)| a.depth() == b.depth()) {
                    return Err(PlanError::ParallelConflict(a.clone(), b.clone()));
                }
                let mut by_depth: BTreeMap<usize, Vec<CallPath>> = BTreeMap::new();
                for p in segments {
                    by_depth.entry(p.depth()).or_default().push(p);
                }
                schedule.extend(by_depth.into_values().rev().map(Step::Segments));
            }
        }
        schedule.push(Step::Root);
        schedule.push(Step::Signalling);
        Ok(Self {
            tree,
            order,
            mode,
            schedule,
        })
    }

    /// Index of the root step.
    pub fn root_step(&self) -> usize {
        self.schedule.len() - 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Address;
    use crate::ids::ChainId;
    use crate::protocol::FunctionCallSpec;

    fn node(c: u64) -> CallExecutionTree {
        CallExecutionTree::leaf(FunctionCallSpec::new(
            ChainId(c),
            Address::derive("x"),
            "f",
            vec![],
        ))
    }

    fn trade_shape() -> CallExecutionTree {
        let mut shipment = node(2);
        shipment.children = vec![node(3), node(4), node(5)];
        let mut root = node(1);
        root.children = vec![shipment];
        root
    }

    #[test]
    fn serial_is_post_order() {
        let p = EnginePlan::new(
            trade_shape(),
            EngineKind::Serial,
            AttestationMode::Direct,
            &[],
        )
        .unwrap();
        assert_eq!(p.schedule.len(), 7);
        assert_eq!(p.schedule[1], Step::Segments(vec![CallPath(vec![1, 1])]));
        assert_eq!(p.schedule[4], Step::Segments(vec![CallPath(vec![1])]));
        assert_eq!(p.root_step(), 5);
    }

    #[test]
    fn parallel_groups_by_depth() {
        let p = EnginePlan::new(
            trade_shape(),
            EngineKind::Parallel,
            AttestationMode::Direct,
            &[],
        )
        .unwrap();
        assert_eq!(p.schedule.len(), 5);
        assert_eq!(
            p.schedule[1],
            Step::Segments(vec![
                CallPath(vec![1, 1]),
                CallPath(vec![1, 2]),
                CallPath(vec![1, 3])
            ])
        );
    }

    #[test]
    fn parallel_refuses_declared_conflicts() {
        let c = [(CallPath(vec![1, 2]), CallPath(vec![1, 3]))];
        assert!(matches!(
            EnginePlan::new(
                trade_shape(),
                EngineKind::Parallel,
                AttestationMode::Direct,
                &c
            ),
            Err(PlanError::ParallelConflict(..))
        ));
        assert!(EnginePlan::new(
            trade_shape(),
            EngineKind::Serial,
            AttestationMode::Direct,
            &c
        )
        .is_ok());
        let bad = [(CallPath(vec![7]), CallPath(vec![1]))];
        assert!(matches!(
            EnginePlan::new(
                trade_shape(),
                EngineKind::Serial,
                AttestationMode::Direct,
                &bad
            ),
            Err(PlanError::UnknownPath(_))
        ));
    }
}
