//! Heterogeneous cluster: per-machine SKU pools, warm model state and spot
//! availability changes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{AgentLibrary, SkuClass};
use crate::optimizer::SkuCapacity;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkuAllotment {
    pub sku_id: String,
    pub units: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSpec {
    pub skus: Vec<SkuAllotment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilityKind {
    SpotGrant,
    SpotRevoke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvailabilityEvent {
    /// Seconds since the start of the run.
    pub time: f64,
    pub sku_id: String,
    pub delta: u32,
    pub kind: AvailabilityKind,
    /// Machine index; when absent the cluster picks the pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub nodes: Vec<MachineSpec>,
    #[serde(default)]
    pub availability_events: Vec<AvailabilityEvent>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("invalid cluster description: {0}")]
    Config(String),
    #[error("unknown sku {0}")]
    UnknownSku(String),
    #[error("allocation {0} was already released")]
    DoubleRelease(u64),
    #[error("unknown allocation {0}")]
    UnknownAllocation(u64),
}

impl ClusterConfig {
    pub fn from_json(text: &str) -> Result<Self, ClusterError> {
        let config: ClusterConfig = serde_json::from_str(text).map_err(|e| ClusterError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), ClusterError> {
        for (m, machine) in self.nodes.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for s in &machine.skus {
                if !seen.insert(&s.sku_id) {
                    return Err(ClusterError::Config(format!("machine {m} lists {} twice", s.sku_id)));
                }
            }
        }
        for e in &self.availability_events {
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(ClusterError::Config(format!("event time {} is invalid", e.time)));
            }
            if let Some(n) = e.node {
                if n >= self.nodes.len() {
                    return Err(ClusterError::Config(format!("event names machine {n}")));
                }
            }
        }
        Ok(())
    }

    /// Every SKU named by the cluster must exist in the library.
    pub fn check_against(&self, library: &AgentLibrary) -> Result<(), ClusterError> {
        let named = self
            .nodes
            .iter()
            .flat_map(|m| m.skus.iter().map(|s| &s.sku_id))
            .chain(self.availability_events.iter().map(|e| &e.sku_id));
        for sku in named {
            if library.sku(sku).is_none() {
                return Err(ClusterError::UnknownSku(sku.clone()));
            }
        }
        Ok(())
    }

    /// Initial capacity per SKU: the largest single pool and the total.
    pub fn capacity(&self) -> BTreeMap<String, SkuCapacity> {
        let mut out: BTreeMap<String, SkuCapacity> = BTreeMap::new();
        for s in self.nodes.iter().flat_map(|m| &m.skus) {
            if s.units == 0 {
                continue;
            }
            let c = out.entry(s.sku_id.clone()).or_insert(SkuCapacity { max_pool: 0, total: 0 });
            c.max_pool = c.max_pool.max(s.units);
            c.total += s.units;
        }
        out
    }
}

/// Units of one SKU on one machine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pool {
    pub machine: usize,
    pub sku: String,
    pub class: SkuClass,
    pub capacity: u32,
    /// Free units that still hold a loaded implementation.
    pub warm_idle: BTreeMap<String, u32>,
    /// Busy units per implementation.
    pub running: BTreeMap<String, u32>,
    pub reserved: u32,
}

impl Pool {
    pub fn busy(&self) -> u32 {
        self.running.values().sum()
    }

    pub fn free(&self) -> u32 {
        self.capacity.saturating_sub(self.busy() + self.reserved)
    }

    pub fn warm_total(&self) -> u32 {
        self.warm_idle.values().sum()
    }

    fn warm_for(&self, implementation: &str) -> u32 {
        self.warm_idle.get(implementation).copied().unwrap_or(0)
    }

    fn take_warm(&mut self, implementation: &str, units: u32) {
        if units == 0 {
            return;
        }
        let slot = self.warm_idle.get_mut(implementation).expect("warm units present");
        *slot -= units;
        if *slot == 0 {
            self.warm_idle.remove(implementation);
        }
    }

    /// Drops warm state until it fits in the free units.
    fn trim_warm(&mut self) {
        let mut excess = self.warm_total().saturating_sub(self.free());
        let names: Vec<String> = self.warm_idle.keys().rev().cloned().collect();
        for name in names {
            if excess == 0 {
                break;
            }
            let take = excess.min(self.warm_for(&name));
            self.take_warm(&name, take);
            excess -= take;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AllocationId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub id: AllocationId,
    pub pool: usize,
    pub machine: usize,
    pub sku: String,
    pub implementation: String,
    pub units: u32,
    /// True when every unit already had the implementation loaded.
    pub warm: bool,
    pub started_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ClusterEvent {
    Allocate {
        time_us: u64,
        allocation: AllocationId,
        machine: usize,
        sku: String,
        implementation: String,
        units: u32,
        warm: bool,
    },
    Release {
        time_us: u64,
        allocation: AllocationId,
    },
    Preempt {
        time_us: u64,
        allocation: AllocationId,
    },
    Capacity {
        time_us: u64,
        machine: usize,
        sku: String,
        capacity: u32,
    },
    Rewarm {
        time_us: u64,
        machine: usize,
        sku: String,
        from: String,
        to: String,
        units: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rewarm {
    pub machine: usize,
    pub sku: String,
    pub from: String,
    pub to: String,
    pub units: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct UnitStats {
    pub capacity: u32,
    pub busy: u32,
    pub warm_idle: u32,
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    pools: Vec<Pool>,
    live: BTreeMap<AllocationId, Allocation>,
    released: BTreeSet<AllocationId>,
    next_id: u64,
    warm_reuse: bool,
    log: Vec<ClusterEvent>,
}

impl ClusterState {
    pub fn new(config: &ClusterConfig, library: &AgentLibrary) -> Result<Self, ClusterError> {
        config.check()?;
        config.check_against(library)?;
        let mut pools = Vec::new();
        for (machine, spec) in config.nodes.iter().enumerate() {
            let mut skus: Vec<&SkuAllotment> = spec.skus.iter().collect();
            skus.sort_by(|a, b| a.sku_id.cmp(&b.sku_id));
            for s in skus {
                pools.push(Pool {
                    machine,
                    sku: s.sku_id.clone(),
                    class: library.sku(&s.sku_id).expect("checked").class,
                    capacity: s.units,
                    warm_idle: BTreeMap::new(),
                    running: BTreeMap::new(),
                    reserved: 0,
                });
            }
        }
        Ok(Self {
            pools,
            live: BTreeMap::new(),
            released: BTreeSet::new(),
            next_id: 0,
            warm_reuse: true,
            log: Vec::new(),
        })
    }

    pub fn with_warm_reuse(mut self, on: bool) -> Self {
        self.warm_reuse = on;
        if !on {
            for p in &mut self.pools {
                p.warm_idle.clear();
            }
        }
        self
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn allocation(&self, id: AllocationId) -> Option<&Allocation> {
        self.live.get(&id)
    }

    pub fn live_allocations(&self) -> impl Iterator<Item = &Allocation> {
        self.live.values()
    }

    pub fn log(&self) -> &[ClusterEvent] {
        &self.log
    }

    /// Pool that would receive the request, if any pool can hold it.
    pub fn choose_pool(&self, implementation: &str, sku: &str, units: u32) -> Option<usize> {
        let fits: Vec<usize> =
            (0..self.pools.len()).filter(|&i| self.pools[i].sku == sku && self.pools[i].free() >= units).collect();
        let sku_free: Vec<(usize, u32)> =
            (0..self.pools.len()).filter(|&i| self.pools[i].sku == sku).map(|i| (i, self.pools[i].free())).collect();
        let largest_after =
            |chosen: usize| sku_free.iter().map(|&(i, f)| if i == chosen { f - units } else { f }).max().unwrap_or(0);
        fits.into_iter().min_by(|&a, &b| {
            let warm_a = self.warm_reuse && self.pools[a].warm_for(implementation) >= units;
            let warm_b = self.warm_reuse && self.pools[b].warm_for(implementation) >= units;
            warm_b
                .cmp(&warm_a)
                .then_with(|| largest_after(b).cmp(&largest_after(a)))
                .then_with(|| self.pools[a].sku.cmp(&self.pools[b].sku))
                .then_with(|| self.pools[a].machine.cmp(&self.pools[b].machine))
        })
    }

    /// Grants `units` of `sku` for `implementation`, or `None` when no single
    /// pool has enough free units.
    pub fn allocate(&mut self, implementation: &str, sku: &str, units: u32, now_us: u64) -> Option<Allocation> {
        let pool = self.choose_pool(implementation, sku, units)?;
        Some(self.allocate_at(pool, implementation, units, now_us))
    }

    fn allocate_at(&mut self, pool_ix: usize, implementation: &str, units: u32, now_us: u64) -> Allocation {
        let warm_reuse = self.warm_reuse;
        let pool = &mut self.pools[pool_ix];
        debug_assert!(pool.free() >= units);
        let from_warm = if warm_reuse { pool.warm_for(implementation).min(units) } else { 0 };
        pool.take_warm(implementation, from_warm);
        let cold = pool.free() - pool.warm_total() - from_warm;
        let mut evict = (units - from_warm).saturating_sub(cold);
        let others: Vec<String> = pool.warm_idle.keys().cloned().collect();
        for name in others {
            if evict == 0 {
                break;
            }
            let take = evict.min(pool.warm_for(&name));
            pool.take_warm(&name, take);
            evict -= take;
        }
        *pool.running.entry(implementation.to_string()).or_insert(0) += units;
        let id = AllocationId(self.next_id);
        self.next_id += 1;
        let alloc = Allocation {
            id,
            pool: pool_ix,
            machine: pool.machine,
            sku: pool.sku.clone(),
            implementation: implementation.to_string(),
            units,
            warm: units > 0 && from_warm == units,
            started_us: now_us,
        };
        self.log.push(ClusterEvent::Allocate {
            time_us: now_us,
            allocation: id,
            machine: alloc.machine,
            sku: alloc.sku.clone(),
            implementation: alloc.implementation.clone(),
            units,
            warm: alloc.warm,
        });
        self.live.insert(id, alloc.clone());
        alloc
    }

    fn drop_running(&mut self, alloc: &Allocation) {
        let pool = &mut self.pools[alloc.pool];
        let slot = pool.running.get_mut(&alloc.implementation).expect("running units present");
        *slot -= alloc.units;
        if *slot == 0 {
            pool.running.remove(&alloc.implementation);
        }
    }

    /// Returns the units to the pool; they stay warm for the implementation.
    pub fn release(&mut self, id: AllocationId, now_us: u64) -> Result<(), ClusterError> {
        let alloc = match self.live.remove(&id) {
            Some(a) => a,
            None if self.released.contains(&id) => return Err(ClusterError::DoubleRelease(id.0)),
            None => return Err(ClusterError::UnknownAllocation(id.0)),
        };
        self.released.insert(id);
        self.drop_running(&alloc);
        if self.warm_reuse {
            let pool = &mut self.pools[alloc.pool];
            *pool.warm_idle.entry(alloc.implementation.clone()).or_insert(0) += alloc.units;
            pool.trim_warm();
        }
        self.log.push(ClusterEvent::Release { time_us: now_us, allocation: id });
        Ok(())
    }

    fn set_capacity(&mut self, pool_ix: usize, capacity: u32, now_us: u64) -> Vec<AllocationId> {
        self.pools[pool_ix].capacity = capacity;
        let mut preempted = Vec::new();
        while self.pools[pool_ix].busy() + self.pools[pool_ix].reserved > capacity {
            let victim = self
                .live
                .values()
                .filter(|a| a.pool == pool_ix)
                .max_by_key(|a| (a.started_us, a.id))
                .cloned()
                .expect("busy units belong to live allocations");
            self.live.remove(&victim.id);
            self.released.insert(victim.id);
            self.drop_running(&victim);
            self.log.push(ClusterEvent::Preempt { time_us: now_us, allocation: victim.id });
            preempted.push(victim.id);
        }
        self.pools[pool_ix].trim_warm();
        self.log.push(ClusterEvent::Capacity {
            time_us: now_us,
            machine: self.pools[pool_ix].machine,
            sku: self.pools[pool_ix].sku.clone(),
            capacity,
        });
        preempted
    }

    /// Applies a spot grant or revoke. Returns the allocations preempted to
    /// make room, newest first.
    pub fn apply_availability(
        &mut self,
        event: &AvailabilityEvent,
        library: &AgentLibrary,
        now_us: u64,
    ) -> Result<Vec<AllocationId>, ClusterError> {
        let class = library.sku(&event.sku_id).ok_or_else(|| ClusterError::UnknownSku(event.sku_id.clone()))?.class;
        let matching: Vec<usize> = (0..self.pools.len())
            .filter(|&i| self.pools[i].sku == event.sku_id && event.node.is_none_or(|n| self.pools[i].machine == n))
            .collect();
        match event.kind {
            AvailabilityKind::SpotGrant => {
                let ix = match matching.first() {
                    Some(&ix) => ix,
                    None => {
                        self.pools.push(Pool {
                            machine: event.node.unwrap_or(0),
                            sku: event.sku_id.clone(),
                            class,
                            capacity: 0,
                            warm_idle: BTreeMap::new(),
                            running: BTreeMap::new(),
                            reserved: 0,
                        });
                        self.pools.len() - 1
                    }
                };
                let cap = self.pools[ix].capacity + event.delta;
                Ok(self.set_capacity(ix, cap, now_us))
            }
            AvailabilityKind::SpotRevoke => {
                let mut order = matching;
                order.sort_by(|&a, &b| {
                    self.pools[b]
                        .free()
                        .cmp(&self.pools[a].free())
                        .then(self.pools[a].machine.cmp(&self.pools[b].machine))
                });
                let mut remaining = event.delta;
                let mut preempted = Vec::new();
                for ix in order {
                    if remaining == 0 {
                        break;
                    }
                    let take = remaining.min(self.pools[ix].capacity);
                    remaining -= take;
                    let cap = self.pools[ix].capacity - take;
                    preempted.extend(self.set_capacity(ix, cap, now_us));
                }
                Ok(preempted)
            }
        }
    }

    /// Capacity, busy and warm-idle units per SKU.
    pub fn snapshot_stats(&self) -> BTreeMap<String, UnitStats> {
        let mut out: BTreeMap<String, UnitStats> = BTreeMap::new();
        for p in &self.pools {
            let s = out.entry(p.sku.clone()).or_default();
            s.capacity += p.capacity;
            s.busy += p.busy();
            s.warm_idle += p.warm_total();
        }
        out
    }

    /// Re-points idle warm units whose capability has no pending work at the
    /// pending capability with the most outstanding work.
    pub fn rebalance_with_lookahead(
        &mut self,
        pending_work: &BTreeMap<String, f64>,
        library: &AgentLibrary,
        now_us: u64,
    ) -> Vec<Rewarm> {
        if !self.warm_reuse {
            return Vec::new();
        }
        let capability_of = |imp: &str| library.implementation(imp).map(|i| i.capability.clone());
        let pending = |cap: &Option<String>| cap.as_ref().and_then(|c| pending_work.get(c)).is_some_and(|w| *w > 0.0);
        let mut covered: BTreeSet<String> =
            self.pools.iter().flat_map(|p| p.warm_idle.keys()).filter_map(|imp| capability_of(imp)).collect();
        let mut targets: Vec<(&String, f64)> =
            pending_work.iter().filter(|(_, w)| **w > 0.0).map(|(c, w)| (c, *w)).collect();
        targets.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut actions = Vec::new();
        for ix in 0..self.pools.len() {
            let stale: Vec<(String, u32)> = self.pools[ix]
                .warm_idle
                .iter()
                .filter(|(imp, _)| !pending(&capability_of(imp)))
                .map(|(imp, u)| (imp.clone(), *u))
                .collect();
            for (from, units) in stale {
                self.pools[ix].take_warm(&from, units);
                let class = self.pools[ix].class;
                let sku = self.pools[ix].sku.clone();
                let target = targets.iter().find_map(|(cap, _)| {
                    if covered.contains(*cap) {
                        return None;
                    }
                    let best = library
                        .implementations_for(cap, 0)
                        .ok()?
                        .into_iter()
                        .find(|i| i.sku_classes.contains(&class))?;
                    Some(((*cap).clone(), best.name.clone()))
                });
                let Some((cap, to)) = target else { continue };
                covered.insert(cap);
                *self.pools[ix].warm_idle.entry(to.clone()).or_insert(0) += units;
                self.log.push(ClusterEvent::Rewarm {
                    time_us: now_us,
                    machine: self.pools[ix].machine,
                    sku: sku.clone(),
                    from: from.clone(),
                    to: to.clone(),
                    units,
                });
                actions.push(Rewarm { machine: self.pools[ix].machine, sku, from, to, units });
            }
        }
        actions
    }
}
