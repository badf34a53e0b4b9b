//! Bundled workloads: read, write, trade finance and the cross-locking pair.

pub mod contracts;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attestation::AttestationMode;
use crate::chain_sim::{ChainSpec, SimError, Simulation};
use crate::codec::{decode_u64, encode_u64, Args};
use crate::crypto::Address;
use crate::engine::{
    drive, simulate_tree, ActorStatus, Actors, Coordinator, CrashPoint, EngineKind, EnginePlan,
    Outcome, PlanError, RunReport, SimulateError, TimeoutAgent,
};
use crate::ids::{ChainId, TxId, XtxRef};
use crate::protocol::{BusinessLogic, CallExecutionTree, CallPath, FunctionCallSpec};
use crate::storage::LockableContractState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Read,
    Write,
    Trade,
    Livelock,
}

impl ScenarioKind {
    pub const TABLE: [ScenarioKind; 3] =
        [ScenarioKind::Read, ScenarioKind::Write, ScenarioKind::Trade];

    pub fn chain_count(self) -> usize {
        match self {
            ScenarioKind::Trade => 5,
            _ => 2,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Read => "read",
            ScenarioKind::Write => "write",
            ScenarioKind::Trade => "trade",
            ScenarioKind::Livelock => "livelock",
        })
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read" => Ok(ScenarioKind::Read),
            "write" => Ok(ScenarioKind::Write),
            "trade" => Ok(ScenarioKind::Trade),
            "livelock" => Ok(ScenarioKind::Livelock),
            other => Err(format!(
                "unknown scenario {other:?} (expected read|write|trade|livelock)"
            )),
        }
    }
}

/// An injected fault. Text form: `crash:<point>`, `fail-segment:<path>`,
/// `byzantine:<count>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fault {
    Crash(CrashPoint),
    FailSegmentAt(CallPath),
    ByzantineSigners(u32),
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::Crash(p) => write!(f, "crash:{p}"),
            Fault::FailSegmentAt(p) => write!(f, "fail-segment:{p}"),
            Fault::ByzantineSigners(k) => write!(f, "byzantine:{k}"),
        }
    }
}

impl std::str::FromStr for Fault {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| format!("fault {s:?} must look like kind:argument"))?;
        match kind {
            "crash" => Ok(Fault::Crash(arg.parse()?)),
            "fail-segment" => CallPath::parse(arg)
                .map(Fault::FailSegmentAt)
                .ok_or_else(|| format!("bad call path {arg:?}")),
            "byzantine" => arg
                .parse()
                .map(Fault::ByzantineSigners)
                .map_err(|_| format!("bad signer count {arg:?}")),
            other => Err(format!("unknown fault kind {other:?}")),
        }
    }
}

impl Serialize for Fault {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fault {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Trade-finance numbers. All post-state expectations derive from these.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeParams {
    pub price: u64,
    pub quantity: u64,
    pub buyer_balance: u64,
    pub seller_balance: u64,
    pub buyer_stock: u64,
    pub seller_stock: u64,
}

impl Default for TradeParams {
    fn default() -> Self {
        Self {
            price: 7,
            quantity: 10,
            buyer_balance: 1000,
            seller_balance: 500,
            buyer_stock: 0,
            seller_stock: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub mode: AttestationMode,
    pub engine: EngineKind,
    pub faults: Vec<Fault>,
    pub timeout_periods: u64,
    /// Rounds to play; livelock only.
    pub retries: u32,
    pub seed: u64,
    pub restrict_to_coordinator: bool,
    /// Whether a recovery agent stands by for a crashed coordinator.
    pub agents: bool,
    /// Permit byzantine counts that break the signer-honesty assumption.
    pub allow_unsafe_byzantine: bool,
    /// Empty means the scenario's default chains.
    pub chains: Vec<ChainSpec>,
    /// Segment pairs where one reads what the other writes.
    pub conflicts: Vec<(CallPath, CallPath)>,
    /// Value held by the read/write source contract.
    pub value: u64,
    pub trade: TradeParams,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, mode: AttestationMode, engine: EngineKind) -> Self {
        Self {
            kind,
            mode,
            engine,
            faults: Vec::new(),
            timeout_periods: 20,
            retries: 3,
            seed: 1,
            restrict_to_coordinator: true,
            agents: true,
            allow_unsafe_byzantine: false,
            chains: Vec::new(),
            conflicts: Vec::new(),
            value: 42,
            trade: TradeParams::default(),
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.faults.push(fault);
        self
    }

    fn crash(&self) -> Option<CrashPoint> {
        self.faults.iter().find_map(|f| match f {
            Fault::Crash(p) => Some(*p),
            _ => None,
        })
    }

    fn byzantine(&self) -> u32 {
        self.faults
            .iter()
            .find_map(|f| match f {
                Fault::ByzantineSigners(k) => Some(*k),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Chain set after defaults and byzantine injection.
    pub fn effective_chains(&self) -> Vec<ChainSpec> {
        let mut chains = if self.chains.is_empty() {
            default_chains(self.kind)
        } else {
            self.chains[..self.kind.chain_count().min(self.chains.len())].to_vec()
        };
        let k = self.byzantine();
        if k > 0 {
            for c in &mut chains {
                c.byzantine = k;
            }
        }
        chains
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        let count = |pred: fn(&Fault) -> bool| self.faults.iter().filter(|f| pred(f)).count();
        if count(|f| matches!(f, Fault::Crash(_))) > 1 {
            return bad("at most one crash fault".into());
        }
        if count(|f| matches!(f, Fault::ByzantineSigners(_))) > 1 {
            return bad("at most one byzantine fault".into());
        }
        if self.timeout_periods == 0 {
            return bad("timeout must be at least one period".into());
        }
        if self.kind == ScenarioKind::Livelock {
            if self.retries == 0 {
                return bad("livelock needs at least one round".into());
            }
            if self
                .faults
                .iter()
                .any(|f| !matches!(f, Fault::ByzantineSigners(_)))
            {
                return bad("livelock accepts only byzantine faults".into());
            }
        }
        if !self.chains.is_empty() && self.chains.len() < self.kind.chain_count() {
            return bad(format!(
                "{} needs {} chains, config lists {}",
                self.kind,
                self.kind.chain_count(),
                self.chains.len()
            ));
        }
        let k = self.byzantine();
        for c in self.effective_chains() {
            if k > c.signers {
                return bad(format!(
                    "{k} byzantine signers but {} has {}",
                    c.id, c.signers
                ));
            }
            let honest_quorum = k < c.threshold && c.signers - k >= c.threshold;
            if !honest_quorum && !self.allow_unsafe_byzantine {
                return bad(format!(
                    "{k} byzantine signers on {} ({} of {} required) breaks signer honesty; \
                     set allow_unsafe_byzantine for a negative test",
                    c.id, c.threshold, c.signers
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("post-state verification failed: {0}")]
    PostState(String),
}

pub fn default_chains(kind: ScenarioKind) -> Vec<ChainSpec> {
    let names: &[&str] = match kind {
        ScenarioKind::Read | ScenarioKind::Write => &["a", "b"],
        ScenarioKind::Trade => &["wallet", "terms", "price-oracle", "finance", "logistics"],
        ScenarioKind::Livelock => &["b1", "b2"],
    };
    names
        .iter()
        .enumerate()
        .map(|(i, n)| ChainSpec::new(i as u64 + 1, n))
        .collect()
}

pub fn buyer() -> Address {
    Address::derive("buyer")
}

pub fn seller() -> Address {
    Address::derive("seller")
}

/// A storage slot whose value the post-state checks track.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Observable {
    pub name: String,
    pub chain: ChainId,
    pub contract: Address,
    #[serde(skip)]
    pub key: Vec<u8>,
}

pub type Snapshot = BTreeMap<String, u64>;

#[derive(Clone, Debug, Serialize)]
pub struct Deployment {
    pub kind: ScenarioKind,
    pub contracts: BTreeMap<String, (ChainId, Address)>,
    /// Entry calls; two for the livelock pair, one otherwise.
    pub entries: Vec<FunctionCallSpec>,
    pub observables: Vec<Observable>,
}

impl Deployment {
    pub fn contract(&self, name: &str) -> (ChainId, Address) {
        self.contracts[name]
    }

    pub fn snapshot(&self, sim: &Simulation) -> Snapshot {
        self.observables
            .iter()
            .map(|o| {
                let v = sim
                    .world(o.chain)
                    .ok()
                    .and_then(|w| w.contracts.get(&o.contract))
                    .map(|c| decode_u64(&c.storage.peek(&o.key)).unwrap_or(u64::MAX))
                    .unwrap_or(u64::MAX);
                (o.name.clone(), v)
            })
            .collect()
    }
}

struct Deployer<'a> {
    sim: &'a mut Simulation,
    d: Deployment,
}

impl Deployer<'_> {
    fn deploy(
        &mut self,
        name: &str,
        chain: ChainId,
        logic: Arc<dyn BusinessLogic>,
        entries: Vec<(Vec<u8>, Vec<u8>)>,
    ) -> Result<Address, SimError> {
        let addr = self.sim.deploy(
            chain,
            name,
            logic,
            LockableContractState::with_entries(entries),
        )?;
        self.d.contracts.insert(name.to_string(), (chain, addr));
        Ok(addr)
    }

    fn observe(&mut self, name: &str, contract: &str, key: Vec<u8>) {
        let (chain, addr) = self.d.contracts[contract];
        self.d.observables.push(Observable {
            name: name.to_string(),
            chain,
            contract: addr,
            key,
        });
    }
}

fn kv(k: &[u8], v: Vec<u8>) -> (Vec<u8>, Vec<u8>) {
    (k.to_vec(), v)
}

/// Deploys the scenario's contracts onto a fresh simulation.
pub fn deploy(sim: &mut Simulation, cfg: &ScenarioConfig) -> Result<Deployment, ScenarioError> {
    let chains: Vec<ChainId> = cfg.effective_chains().iter().map(|c| c.id).collect();
    let mut dep = Deployer {
        sim,
        d: Deployment {
            kind: cfg.kind,
            contracts: BTreeMap::new(),
            entries: Vec::new(),
            observables: Vec::new(),
        },
    };
    use contracts::*;
    match cfg.kind {
        ScenarioKind::Read => {
            let (a, b) = (chains[0], chains[1]);
            let value = dep.deploy(
                "value",
                b,
                Arc::new(ValueHolder),
                vec![kv(b"value", encode_u64(cfg.value))],
            )?;
            let store = dep.deploy(
                "store",
                a,
                Arc::new(Store),
                vec![kv(b"source", link(b, value))],
            )?;
            dep.observe("value", "value", b"value".to_vec());
            dep.observe("stored", "store", b"stored".to_vec());
            dep.d.entries.push(FunctionCallSpec::new(
                a,
                store,
                "readAndStore",
                Args::new().encode(),
            ));
        }
        ScenarioKind::Write => {
            let (a, b) = (chains[0], chains[1]);
            let target = dep.deploy("target", b, Arc::new(ValueHolder), vec![])?;
            let source = dep.deploy(
                "source",
                a,
                Arc::new(Source),
                vec![
                    kv(b"value", encode_u64(cfg.value)),
                    kv(b"target", link(b, target)),
                ],
            )?;
            dep.observe("source", "source", b"value".to_vec());
            dep.observe("target", "target", b"value".to_vec());
            dep.d.entries.push(FunctionCallSpec::new(
                a,
                source,
                "writeRemote",
                Args::new().encode(),
            ));
        }
        ScenarioKind::Trade => {
            let t = &cfg.trade;
            let [wallet_c, terms_c, oracle_c, finance_c, logistics_c] =
                [chains[0], chains[1], chains[2], chains[3], chains[4]];
            let oracle = dep.deploy(
                "oracle",
                oracle_c,
                Arc::new(PriceOracle),
                vec![kv(b"price", encode_u64(t.price))],
            )?;
            let balances = dep.deploy(
                "balances",
                finance_c,
                Arc::new(Balances),
                vec![
                    kv(&balance_key(buyer()), encode_u64(t.buyer_balance)),
                    kv(&balance_key(seller()), encode_u64(t.seller_balance)),
                ],
            )?;
            let stock = dep.deploy(
                "stock",
                logistics_c,
                Arc::new(Stock),
                vec![
                    kv(&stock_key(buyer()), encode_u64(t.buyer_stock)),
                    kv(&stock_key(seller()), encode_u64(t.seller_stock)),
                ],
            )?;
            let terms = dep.deploy(
                "terms",
                terms_c,
                Arc::new(Terms),
                vec![
                    kv(b"oracle", link(oracle_c, oracle)),
                    kv(b"balances", link(finance_c, balances)),
                    kv(b"stock", link(logistics_c, stock)),
                ],
            )?;
            let wallet = dep.deploy(
                "wallet",
                wallet_c,
                Arc::new(TradeWallet),
                vec![kv(b"terms", link(terms_c, terms))],
            )?;
            dep.observe("price", "oracle", b"price".to_vec());
            dep.observe("buyer_balance", "balances", balance_key(buyer()));
            dep.observe("seller_balance", "balances", balance_key(seller()));
            dep.observe("buyer_stock", "stock", stock_key(buyer()));
            dep.observe("seller_stock", "stock", stock_key(seller()));
            let args = Args::new()
                .address(buyer())
                .address(seller())
                .u64(t.quantity)
                .encode();
            dep.d.entries.push(FunctionCallSpec::new(
                wallet_c,
                wallet,
                "executeTrade",
                args,
            ));
        }
        ScenarioKind::Livelock => {
            let (b1, b2) = (chains[0], chains[1]);
            let c1_addr = crate::chain_sim::contract_address(b1, "c1");
            let c2_addr = crate::chain_sim::contract_address(b2, "c2");
            let c1 = dep.deploy(
                "c1",
                b1,
                Arc::new(Counter),
                vec![
                    kv(b"value", encode_u64(cfg.value)),
                    kv(b"peer", link(b2, c2_addr)),
                ],
            )?;
            let c2 = dep.deploy(
                "c2",
                b2,
                Arc::new(Counter),
                vec![
                    kv(b"value", encode_u64(cfg.value)),
                    kv(b"peer", link(b1, c1_addr)),
                ],
            )?;
            dep.observe("c1", "c1", b"value".to_vec());
            dep.observe("c2", "c2", b"value".to_vec());
            dep.d
                .entries
                .push(FunctionCallSpec::new(b1, c1, "bump", Args::new().encode()));
            dep.d
                .entries
                .push(FunctionCallSpec::new(b2, c2, "bump", Args::new().encode()));
        }
    }
    Ok(dep.d)
}

pub fn coordinator_account() -> Address {
    Address::derive("coordinator")
}

pub fn agent_account() -> Address {
    Address::derive("timeout-agent")
}

/// Fresh simulation with the scenario deployed.
pub fn prepare(cfg: &ScenarioConfig) -> Result<(Simulation, Deployment), ScenarioError> {
    cfg.validate()?;
    let mut sim = Simulation::new(&cfg.effective_chains(), cfg.mode, cfg.seed)?;
    sim.set_restrict_to_coordinator(cfg.restrict_to_coordinator);
    let deployment = deploy(&mut sim, cfg)?;
    Ok((sim, deployment))
}

/// Everything a single-transaction run leaves behind.
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub sim: Simulation,
    pub deployment: Deployment,
    pub tree: CallExecutionTree,
    pub xtx: XtxRef,
    pub initial: Snapshot,
    pub coordinator: ActorStatus,
    pub report: RunReport,
}

impl ScenarioRun {
    pub fn final_snapshot(&self) -> Snapshot {
        self.deployment.snapshot(&self.sim)
    }
}

/// Guard on how long a run may take before it counts as non-terminating.
pub fn max_period(cfg: &ScenarioConfig) -> u64 {
    cfg.timeout_periods + 64
}

/// Runs one crosschain transaction without checking the post-state.
pub fn execute(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    if cfg.kind == ScenarioKind::Livelock {
        return Err(ScenarioError::Config(
            "use run_livelock for the livelock pair".into(),
        ));
    }
    let (mut sim, deployment) = prepare(cfg)?;
    let initial = deployment.snapshot(&sim);
    let tree = simulate_tree(&sim.worlds(), deployment.entries[0].clone())?;
    for f in &cfg.faults {
        if let Fault::FailSegmentAt(path) = f {
            let node = tree.resolve(path).ok_or_else(|| {
                ScenarioError::Config(format!("path {path} not in the call tree"))
            })?;
            sim.force_revert(node.node.chain, node.node.contract, &node.node.function)?;
        }
    }
    let plan = EnginePlan::new(tree.clone(), cfg.engine, cfg.mode, &cfg.conflicts)?;
    let tx_id = TxId::derive(&format!("{}-{}", cfg.kind, cfg.seed));
    let coordinator = Coordinator::new(
        "coordinator",
        coordinator_account(),
        tx_id,
        plan,
        cfg.timeout_periods,
        cfg.crash(),
    );
    let xtx = coordinator.xtx();
    let agent = cfg
        .agents
        .then(|| TimeoutAgent::new("agent", agent_account(), xtx, tree.chains()));
    let mut actors = [Actors { coordinator, agent }];
    let terminated = drive(&mut sim, &mut actors, max_period(cfg));
    let [Actors { coordinator, agent }] = actors;
    let mut logs: Vec<&[_]> = vec![&coordinator.log];
    if let Some(a) = &agent {
        logs.push(&a.log);
    }
    let report = RunReport::build(
        &sim,
        &cfg.kind.to_string(),
        cfg.engine,
        xtx,
        &logs,
        terminated,
    );
    Ok(ScenarioRun {
        config: cfg.clone(),
        deployment,
        tree,
        xtx,
        initial,
        coordinator: coordinator.status.clone(),
        report,
        sim,
    })
}

/// Checks the run left every chain consistent with its outcome.
pub fn verify_post_state(run: &ScenarioRun) -> Result<(), String> {
    let r = &run.report;
    if r.terminated && !r.lock_residue.is_empty() {
        return Err(format!("{} contract(s) still locked", r.lock_residue.len()));
    }
    let before = &run.initial;
    let after = run.final_snapshot();
    let expected = match r.outcome {
        Outcome::Commit => expected_after_commit(&run.config, before),
        _ => before.clone(),
    };
    if after != expected {
        return Err(format!(
            "outcome {}: expected {expected:?}, found {after:?}",
            r.outcome
        ));
    }
    if run.config.kind == ScenarioKind::Trade {
        let total = |s: &Snapshot| s["buyer_balance"] + s["seller_balance"];
        if total(&after) != total(before) {
            return Err("balance total not conserved".into());
        }
    }
    Ok(())
}

fn expected_after_commit(cfg: &ScenarioConfig, before: &Snapshot) -> Snapshot {
    let mut s = before.clone();
    match cfg.kind {
        ScenarioKind::Read => {
            s.insert("stored".into(), before["value"]);
        }
        ScenarioKind::Write => {
            s.insert("target".into(), before["source"]);
        }
        ScenarioKind::Trade => {
            let amount = before["price"] * cfg.trade.quantity;
            let q = cfg.trade.quantity;
            s.insert("buyer_balance".into(), before["buyer_balance"] - amount);
            s.insert("seller_balance".into(), before["seller_balance"] + amount);
            s.insert("buyer_stock".into(), before["buyer_stock"] + q);
            s.insert("seller_stock".into(), before["seller_stock"] - q);
        }
        ScenarioKind::Livelock => {}
    }
    s
}

/// Runs a scenario and checks its post-state.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    let run = execute(cfg)?;
    verify_post_state(&run).map_err(ScenarioError::PostState)?;
    Ok(run.report)
}

#[derive(Clone, Debug, Serialize)]
pub struct LivelockRound {
    pub round: u32,
    pub first: RunReport,
    pub second: RunReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct LivelockReport {
    pub rounds: Vec<LivelockRound>,
    pub initial: Snapshot,
    pub last: Snapshot,
    pub lock_residue: Vec<(ChainId, Address)>,
}

impl LivelockReport {
    pub fn every_round_aborted(&self) -> bool {
        self.rounds
            .iter()
            .all(|r| r.first.outcome == Outcome::Abort && r.second.outcome == Outcome::Abort)
    }

    pub fn storage_unchanged(&self) -> bool {
        self.initial == self.last
    }
}

/// Two transactions, each rooted where the other writes, started together
/// for `cfg.retries` rounds.
pub fn run_livelock(cfg: &ScenarioConfig) -> Result<LivelockReport, ScenarioError> {
    let cfg = ScenarioConfig {
        kind: ScenarioKind::Livelock,
        ..cfg.clone()
    };
    let (mut sim, deployment) = prepare(&cfg)?;
    let initial = deployment.snapshot(&sim);
    let mut rounds = Vec::new();
    for round in 1..=cfg.retries {
        let mut actors = Vec::new();
        for (i, entry) in deployment.entries.iter().enumerate() {
            let tree = simulate_tree(&sim.worlds(), entry.clone())?;
            let plan = EnginePlan::new(tree.clone(), cfg.engine, cfg.mode, &[])?;
            let name = format!("t{}", i + 1);
            let coordinator = Coordinator::new(
                &name,
                Address::derive(&format!("coordinator-{name}")),
                TxId::derive(&format!("livelock-{}-round{round}-{name}", cfg.seed)),
                plan,
                cfg.timeout_periods,
                None,
            );
            let agent = TimeoutAgent::new(
                &format!("agent-{name}"),
                agent_account(),
                coordinator.xtx(),
                tree.chains(),
            );
            actors.push(Actors {
                coordinator,
                agent: Some(agent),
            });
        }
        let guard = sim.period() + max_period(&cfg);
        let terminated = drive(&mut sim, &mut actors, guard);
        let mut reports = actors.iter().map(|a| {
            let mut logs: Vec<&[_]> = vec![&a.coordinator.log];
            if let Some(agent) = &a.agent {
                logs.push(&agent.log);
            }
            RunReport::build(
                &sim,
                "livelock",
                cfg.engine,
                a.coordinator.xtx(),
                &logs,
                terminated,
            )
        });
        let first = reports.next().expect("two transactions");
        let second = reports.next().expect("two transactions");
        rounds.push(LivelockRound {
            round,
            first,
            second,
        });
    }
    Ok(LivelockReport {
        rounds,
        last: deployment.snapshot(&sim),
        initial,
        lock_residue: sim.lock_residue(),
    })
}

/// Published latency figures in finalized block periods, per scenario, in
/// the order serial-direct, serial-header, parallel-direct, parallel-header.
pub const TABLE4_EXPECTED: [(ScenarioKind, [u64; 4]); 3] = [
    (ScenarioKind::Read, [3, 5, 3, 5]),
    (ScenarioKind::Write, [4, 7, 4, 7]),
    (ScenarioKind::Trade, [7, 13, 5, 9]),
];

pub const TABLE4_COLUMNS: [(EngineKind, AttestationMode); 4] = [
    (EngineKind::Serial, AttestationMode::Direct),
    (EngineKind::Serial, AttestationMode::Header),
    (EngineKind::Parallel, AttestationMode::Direct),
    (EngineKind::Parallel, AttestationMode::Header),
];

#[derive(Clone, Debug, Serialize)]
pub struct Table4Cell {
    pub scenario: ScenarioKind,
    pub engine: EngineKind,
    pub mode: AttestationMode,
    pub expected: u64,
    pub measured: u64,
    pub outcome: Outcome,
}

impl Table4Cell {
    pub fn pass(&self) -> bool {
        self.expected == self.measured && self.outcome == Outcome::Commit
    }
}

/// Runs all twelve latency cells with no faults.
pub fn table4(seed: u64) -> Result<Vec<Table4Cell>, ScenarioError> {
    let mut cells = Vec::new();
    for (scenario, expected) in TABLE4_EXPECTED {
        for ((engine, mode), expected) in TABLE4_COLUMNS.into_iter().zip(expected) {
            let mut cfg = ScenarioConfig::new(scenario, mode, engine);
            cfg.seed = seed;
            let report = run_scenario(&cfg)?;
            cells.push(Table4Cell {
                scenario,
                engine,
                mode,
                expected,
                measured: report.periods_elapsed,
                outcome: report.outcome,
            });
        }
    }
    Ok(cells)
}
