use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::profiles::{Universe, UserGroup};
use crate::topology::{DistanceMatrix, NodeId, Topology};

/// A user group resolved to its dense node index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Demand {
    pub node: usize,
    pub priority: f64,
}

/// A placement/assignment problem: the network, its distances, the user
/// groups and the nodes allowed to host a server.
///
/// Distances are looked up by dense node index; indices follow [`NodeId`]
/// order, which is therefore the tie-breaking order everywhere.
#[derive(Clone, Debug)]
pub struct Instance<'a> {
    pub(crate) topology: &'a Topology,
    pub(crate) dm: &'a DistanceMatrix,
    pub(crate) users: &'a [UserGroup],
    pub(crate) demand: Vec<Demand>,
    pub(crate) sites: Vec<usize>,
    pub(crate) is_site: Vec<bool>,
}

impl<'a> Instance<'a> {
    pub fn new(topology: &'a Topology, dm: &'a DistanceMatrix, users: &'a [UserGroup]) -> Result<Self> {
        if dm.len() != topology.node_count() {
            return Err(Error::Config("distance matrix does not match topology".into()));
        }
        let mut seen = HashSet::new();
        let mut demand = Vec::with_capacity(users.len());
        let universe: Option<&Universe> = users.first().map(|u| u.profile.universe());
        for u in users {
            let node = topology.require(&u.node)?;
            if !seen.insert(node) {
                return Err(Error::DuplicateUser(u.node.to_string()));
            }
            if !(u.priority > 0.0 && u.priority.is_finite()) {
                return Err(Error::NonPositivePriority { node: u.node.to_string(), priority: u.priority });
            }
            if let Some(universe) = universe {
                if !u.profile.universe().same_as(universe) {
                    return Err(Error::UniverseMismatch);
                }
            }
            demand.push(Demand { node, priority: u.priority });
        }
        let n = topology.node_count();
        Ok(Instance { topology, dm, users, demand, sites: (0..n).collect(), is_site: vec![true; n] })
    }

    /// Restricts server locations to `sites`.
    pub fn with_sites(mut self, sites: &[NodeId]) -> Result<Self> {
        let mut idx: Vec<usize> = sites.iter().map(|s| self.topology.require(s)).collect::<Result<_>>()?;
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() {
            return Err(Error::Config("site list is empty".into()));
        }
        self.is_site = vec![false; self.topology.node_count()];
        for &i in &idx {
            self.is_site[i] = true;
        }
        self.sites = idx;
        Ok(self)
    }

    pub fn topology(&self) -> &Topology {
        self.topology
    }

    pub fn distances(&self) -> &DistanceMatrix {
        self.dm
    }

    pub fn users(&self) -> &[UserGroup] {
        self.users
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub(crate) fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.sites.len() {
            return Err(Error::ServerCount { k, max: self.sites.len() });
        }
        Ok(())
    }

    pub(crate) fn node_ids(&self, indices: &[usize]) -> Vec<NodeId> {
        indices.iter().map(|&i| self.topology.id(i).clone()).collect()
    }

    /// Index of the user whose group sits at `node`.
    pub(crate) fn user_index(&self, node: &NodeId) -> Option<usize> {
        self.users.iter().position(|u| &u.node == node)
    }
}
