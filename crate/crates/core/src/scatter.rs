//! Halo exchange: fills each rank's ghost buffer with the remote input-vector
//! entries listed in its `garray`.
//!
//! The exchange is split into [`ScatterPlan::begin`] and [`PendingScatter::end`]
//! so that diagonal-block work can run in between.

use std::ops::Range;

use crate::error::{Result, SpmvError};
use crate::matrix::{DistMatrix, DistVector, OwnershipMap};
use crate::runtime::{Payload, RankContext, SendHandle};

/// Owned entries shipped to one peer, in the order the peer stores them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendList {
    pub peer: usize,
    pub local_indices: Vec<usize>,
}

/// Ghost slots filled by one peer. Slots are contiguous because `garray` is
/// sorted and ownership is by contiguous rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecvList {
    pub peer: usize,
    pub slots: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterPlan {
    rank: usize,
    nlocal: usize,
    nghost: usize,
    sends: Vec<SendList>,
    recvs: Vec<RecvList>,
}

impl ScatterPlan {
    /// Builds the plan collectively. Each rank derives its receive side from
    /// `garray`, then sends every peer the global indices it needs and turns
    /// the requests it receives into local send lists.
    pub fn build(
        ctx: &RankContext<'_>,
        garray: &[usize],
        ownership: &OwnershipMap,
    ) -> Result<Self> {
        let rank = ctx.rank();
        let size = ctx.size();
        if ownership.ranks() != size {
            return Err(SpmvError::InvalidOwnership(format!(
                "ownership has {} ranks but the runtime has {size}",
                ownership.ranks()
            )));
        }
        let owned = ownership.range(rank);

        let mut recvs: Vec<RecvList> = Vec::new();
        let mut fault = None;
        for (slot, &col) in garray.iter().enumerate() {
            let owner = match ownership.owner(col) {
                Some(o) if o != rank => o,
                _ => {
                    fault = Some(SpmvError::GhostOwnedLocally { rank, column: col });
                    break;
                }
            };
            match recvs.last_mut() {
                Some(last) if last.peer == owner && last.slots.end == slot => last.slots.end += 1,
                _ => recvs.push(RecvList {
                    peer: owner,
                    slots: slot..slot + 1,
                }),
            }
        }
        if fault.is_some() || garray.windows(2).any(|w| w[0] >= w[1]) {
            // Keep the collective protocol intact so peers do not hang.
            recvs.clear();
            fault.get_or_insert(SpmvError::Config(
                "garray must be strictly increasing".into(),
            ));
        }

        let mut handles = Vec::with_capacity(size.saturating_sub(1));
        for peer in (0..size).filter(|&p| p != rank) {
            let wanted = recvs
                .iter()
                .find(|r| r.peer == peer)
                .map(|r| garray[r.slots.clone()].to_vec())
                .unwrap_or_default();
            handles.push(ctx.send_nb(peer, Payload::Indices(wanted))?);
        }
        for h in handles {
            ctx.wait(h)?;
        }

        let mut sends = Vec::new();
        for peer in (0..size).filter(|&p| p != rank) {
            let requested = ctx.recv_indices(peer)?;
            if requested.is_empty() {
                continue;
            }
            let mut local_indices = Vec::with_capacity(requested.len());
            for g in requested {
                if !owned.contains(&g) {
                    fault.get_or_insert(SpmvError::ForeignRequest { rank, row: g });
                    continue;
                }
                local_indices.push(g - owned.start);
            }
            sends.push(SendList {
                peer,
                local_indices,
            });
        }

        if let Some(e) = fault {
            return Err(e);
        }
        Ok(Self {
            rank,
            nlocal: owned.len(),
            nghost: garray.len(),
            sends,
            recvs,
        })
    }

    /// Convenience for [`ScatterPlan::build`] on a split matrix.
    pub fn for_matrix(ctx: &RankContext<'_>, m: &DistMatrix) -> Result<Self> {
        Self::build(ctx, m.garray(), m.ownership())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nghost(&self) -> usize {
        self.nghost
    }

    pub fn sends(&self) -> &[SendList] {
        &self.sends
    }

    pub fn recvs(&self) -> &[RecvList] {
        &self.recvs
    }

    /// Messages one scatter sends from this rank.
    pub fn message_count(&self) -> usize {
        self.sends.len()
    }

    /// Ships the owned values every peer needs and returns the in-flight
    /// exchange. The ghost buffer is filled with NaN until [`PendingScatter::end`]
    /// completes, so premature reads show up in results.
    pub fn begin<'g, 'c>(
        &'g self,
        ctx: &'c RankContext<'c>,
        local: &[f64],
        ghost: &'g mut [f64],
    ) -> Result<PendingScatter<'g, 'c>> {
        if ghost.len() != self.nghost {
            return Err(SpmvError::DimensionMismatch {
                what: "ghost buffer",
                expected: self.nghost,
                actual: ghost.len(),
            });
        }
        if local.len() != self.nlocal {
            return Err(SpmvError::DimensionMismatch {
                what: "local vector",
                expected: self.nlocal,
                actual: local.len(),
            });
        }
        ghost.fill(f64::NAN);
        let mut handles = Vec::with_capacity(self.sends.len());
        for s in &self.sends {
            let packed = s.local_indices.iter().map(|&i| local[i]).collect();
            handles.push(ctx.send_nb(s.peer, Payload::Values(packed))?);
        }
        Ok(PendingScatter {
            ctx,
            recvs: &self.recvs,
            handles,
            ghost,
        })
    }

    /// Blocking begin + end on a whole vector.
    pub fn scatter(&self, ctx: &RankContext<'_>, x: &mut DistVector) -> Result<()> {
        let DistVector { local, ghost } = x;
        self.begin(ctx, local, ghost)?.end()
    }
}

/// An exchange started by [`ScatterPlan::begin`]. Completing it consumes it.
#[must_use = "the ghost buffer holds NaN until the scatter is ended"]
pub struct PendingScatter<'g, 'c> {
    ctx: &'c RankContext<'c>,
    recvs: &'g [RecvList],
    handles: Vec<SendHandle>,
    ghost: &'g mut [f64],
}

impl PendingScatter<'_, '_> {
    /// Pushes this rank's queued sends to their peers without blocking on
    /// receives. A dedicated communication worker calls this before `end`.
    pub fn progress(&self) -> Result<()> {
        self.ctx.progress()
    }

    /// Blocks until every ghost slot holds its owner's value, then completes
    /// the outgoing sends.
    pub fn end(self) -> Result<()> {
        let ctx = self.ctx;
        for r in self.recvs {
            let values = ctx.recv_values(r.peer)?;
            if values.len() != r.slots.len() {
                return Err(SpmvError::DimensionMismatch {
                    what: "scatter message",
                    expected: r.slots.len(),
                    actual: values.len(),
                });
            }
            self.ghost[r.slots.clone()].copy_from_slice(&values);
        }
        for h in self.handles {
            ctx.wait(h)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::matrix::{csr_from_coo, split_distributed, CsrMatrix};
    use crate::runtime::{spawn_ranks, RuntimeConfig};

    fn quick() -> RuntimeConfig {
        RuntimeConfig::default().with_timeout(Some(Duration::from_millis(500)))
    }

    fn f1() -> CsrMatrix {
        csr_from_coo(
            &[
                (0, 0, 2.0),
                (0, 3, 1.0),
                (1, 1, 2.0),
                (2, 2, 2.0),
                (3, 0, 1.0),
                (3, 3, 2.0),
            ],
            4,
            4,
        )
        .unwrap()
    }

    #[test]
    fn f1_plans() {
        let a = f1();
        let own = OwnershipMap::even(4, 2).unwrap();
        let plans = spawn_ranks(2, quick(), |ctx| {
            let m = split_distributed(&a, &own, ctx.rank())?;
            ScatterPlan::for_matrix(ctx, &m)
        })
        .unwrap();
        assert_eq!(
            plans[0].recvs(),
            &[RecvList {
                peer: 1,
                slots: 0..1
            }]
        );
        assert_eq!(
            plans[0].sends(),
            &[SendList {
                peer: 1,
                local_indices: vec![0]
            }]
        );
        assert_eq!(
            plans[1].recvs(),
            &[RecvList {
                peer: 0,
                slots: 0..1
            }]
        );
        assert_eq!(
            plans[1].sends(),
            &[SendList {
                peer: 0,
                local_indices: vec![1]
            }]
        );
    }

    #[test]
    fn f1_ghost_values() {
        let a = f1();
        let own = OwnershipMap::even(4, 2).unwrap();
        let xg = [1.0, 2.0, 3.0, 4.0];
        let ghosts = spawn_ranks(2, quick(), |ctx| {
            let m = split_distributed(&a, &own, ctx.rank())?;
            let plan = ScatterPlan::for_matrix(ctx, &m)?;
            let mut x = DistVector::from_global(&m, &xg)?;
            plan.scatter(ctx, &mut x)?;
            Ok(x.ghost)
        })
        .unwrap();
        assert_eq!(ghosts, vec![vec![4.0], vec![1.0]]);
    }

    #[test]
    fn zeros_propagate() {
        let a = f1();
        let own = OwnershipMap::even(4, 2).unwrap();
        let ghosts = spawn_ranks(2, quick(), |ctx| {
            let m = split_distributed(&a, &own, ctx.rank())?;
            let plan = ScatterPlan::for_matrix(ctx, &m)?;
            let mut x = DistVector::zeros(&m);
            x.ghost.fill(7.0);
            plan.scatter(ctx, &mut x)?;
            Ok(x.ghost)
        })
        .unwrap();
        assert_eq!(ghosts, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn block_diagonal_plan_is_empty() {
        let a = CsrMatrix::identity(6);
        let own = OwnershipMap::even(6, 3).unwrap();
        let out = spawn_ranks(3, quick(), |ctx| {
            let m = split_distributed(&a, &own, ctx.rank())?;
            let plan = ScatterPlan::for_matrix(ctx, &m)?;
            let before = ctx.messages_sent();
            let mut x = DistVector::zeros(&m);
            plan.scatter(ctx, &mut x)?;
            Ok((
                plan.message_count(),
                ctx.messages_sent() - before,
                x.ghost.len(),
            ))
        })
        .unwrap();
        assert!(out.iter().all(|&o| o == (0, 0, 0)));
    }

    #[test]
    fn ghost_owned_locally_is_rejected() {
        let own = OwnershipMap::even(4, 2).unwrap();
        let err = spawn_ranks(2, quick(), |ctx| {
            let garray: Vec<usize> = if ctx.rank() == 0 { vec![1] } else { vec![] };
            ScatterPlan::build(ctx, &garray, &own).map(|_| ())
        })
        .unwrap_err();
        match err {
            SpmvError::RankFailures(list) => {
                assert_eq!(list.len(), 1);
                assert!(matches!(
                    list[0].1,
                    SpmvError::GhostOwnedLocally { rank: 0, column: 1 }
                ));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ghost_length_mismatch() {
        let a = f1();
        let own = OwnershipMap::even(4, 2).unwrap();
        let out = spawn_ranks(2, quick(), |ctx| {
            let m = split_distributed(&a, &own, ctx.rank())?;
            let plan = ScatterPlan::for_matrix(ctx, &m)?;
            let local = vec![0.0; m.nlocal()];
            let mut ghost = vec![0.0; 3];
            Ok(matches!(
                plan.begin(ctx, &local, &mut ghost),
                Err(SpmvError::DimensionMismatch { .. })
            ))
        })
        .unwrap();
        assert_eq!(out, vec![true, true]);
    }

    #[test]
    fn rebuild_is_identical() {
        let a = f1();
        let own = OwnershipMap::even(4, 2).unwrap();
        let same = spawn_ranks(2, quick(), |ctx| {
            let m = split_distributed(&a, &own, ctx.rank())?;
            Ok(ScatterPlan::for_matrix(ctx, &m)? == ScatterPlan::for_matrix(ctx, &m)?)
        })
        .unwrap();
        assert_eq!(same, vec![true, true]);
    }
}
