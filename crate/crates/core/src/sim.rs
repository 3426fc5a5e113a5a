//! The per-run simulation world: owns hosts, circuits, machines, workload
//! state, and the event queue, and dispatches every event single-threaded.
//!
//! Runs differing only in seed share nothing; determinism comes from the
//! total event order, per-entity RNG streams, and the absence of any
//! iteration over unordered collections.

use crate::engine::{EventQueue, RngStream};
use crate::net::{
    Cell, CellKind, Circuit, CircuitId, CircuitStatus, Direction, DropStats, Host, HostId, Role,
};
use crate::padding::{BufloDriver, EndpointSide, MachineCmd, MachineInstance, Trigger};
use crate::scenario::Scenario;
use crate::time::SimTime;
use crate::workload::{cells_for, DownloadRecord, DownloadStatus, ProgressSample};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Ev {
    /// Wire arrival at a host (link traversal done, ingress pipe next).
    Arrive { host: HostId, cell: Cell },
    /// Ingress pipe done; hand the cell to host logic.
    Deliver { host: HostId, cell: Cell },
    /// Egress pipe finished serializing the queue head.
    EgressDone { host: HostId },
    PaddingTimer { machine: usize },
    BufloSlot { driver: usize },
    StartDownload { client: u32 },
    DownloadTimeout { download: u32 },
    BgToggle { session: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CircuitOwner {
    Bench(u32),
    Background(u32),
}

/// Per-circuit attachments and workload linkage.
struct CircuitMeta {
    owner: CircuitOwner,
    client_machine: Option<usize>,
    middle_machine: Option<usize>,
    /// BuFlo driver indices, at most one per direction.
    buflo: Vec<usize>,
    active_download: Option<u32>,
    /// Set when a padding-cell kill draw fired; manifests at the active
    /// download's terminal boundary.
    doomed: bool,
    fail_rng: RngStream,
}

struct BenchClient {
    host: HostId,
    server: HostId,
    relay_pick: (usize, usize, usize),
    circuit: Option<CircuitId>,
    size_cursor: usize,
    attempts: u32,
    think_rng: RngStream,
}

struct BgSession {
    server: HostId,
    circuit: CircuitId,
    rng: RngStream,
    sending: bool,
}

/// Per-host utilization summary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HostUtil {
    pub host: u32,
    pub role: String,
    pub busy_us: u64,
    pub utilization: f64,
}

/// Everything a run produces, before it is written to disk.
pub struct RunOutput {
    pub seed: u64,
    pub downloads: Vec<DownloadRecord>,
    pub drops: DropStats,
    pub dispatched: u64,
    pub host_util: Vec<HostUtil>,
    pub event_log: Option<Vec<String>>,
    pub padding_injected_cells: u64,
    pub chain_overflows: u64,
}

pub struct Simulation {
    seed: u64,
    payload_bytes: u64,
    duration: SimTime,
    timeout_us: Option<u64>,
    downloads_per_client: Option<u32>,
    p_fail: f64,
    size_classes: Vec<u64>,
    think_dist: crate::engine::DistSpec,
    bg_cfg: crate::workload::BackgroundConfig,
    defense_machines: Vec<std::sync::Arc<crate::padding::CompiledMachine>>,
    buflo_cfg: Option<crate::padding::BufloConfig>,

    queue: EventQueue<Ev>,
    hosts: Vec<Host>,
    circuits: Vec<Circuit>,
    meta: Vec<CircuitMeta>,
    machines: Vec<MachineInstance>,
    /// Circuit index for each machine instance.
    machine_circuit: Vec<usize>,
    buflos: Vec<BufloDriver>,
    bench: Vec<BenchClient>,
    bg: Vec<BgSession>,
    downloads: Vec<DownloadRecord>,

    drops: DropStats,
    padding_injected: u64,
    next_cell_id: u64,
    log: Option<Vec<String>>,

    // Topology template for circuit (re)builds.
    guard_hosts: Vec<HostId>,
    middle_hosts: Vec<HostId>,
    exit_hosts: Vec<HostId>,
    latency: crate::scenario::LatencySpec,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        scenario.validate().expect("scenario must be validated before running");
        let defense = scenario.defense.compile("defense").expect("validated defense");
        let defense_machines = defense
            .machines
            .iter()
            .enumerate()
            .map(|(i, m)| m.compile(&format!("defense.machines[{i}]")).expect("validated machine"))
            .collect();

        let mut sim = Simulation {
            seed,
            payload_bytes: scenario.cell_payload_bytes,
            duration: SimTime(scenario.duration_us),
            timeout_us: scenario.workload.download_timeout_us,
            downloads_per_client: scenario.workload.downloads_per_client,
            p_fail: scenario.failure.p_fail_per_padding_cell,
            size_classes: scenario.workload.size_classes_bytes.clone(),
            think_dist: scenario.workload.think_time.clone(),
            bg_cfg: scenario.workload.background.clone(),
            defense_machines,
            buflo_cfg: defense.buflo,
            queue: EventQueue::new(),
            hosts: Vec::new(),
            circuits: Vec::new(),
            meta: Vec::new(),
            machines: Vec::new(),
            machine_circuit: Vec::new(),
            buflos: Vec::new(),
            bench: Vec::new(),
            bg: Vec::new(),
            downloads: Vec::new(),
            drops: DropStats::default(),
            padding_injected: 0,
            next_cell_id: 0,
            log: scenario.emit_events_log.then(Vec::new),
            guard_hosts: Vec::new(),
            middle_hosts: Vec::new(),
            exit_hosts: Vec::new(),
            latency: scenario.topology.latency.clone(),
        };
        sim.build_hosts(scenario);
        sim.seed_workload(scenario);
        sim
    }

    fn add_host(&mut self, role: Role, up: u64, down: u64, cap: Option<usize>) -> HostId {
        let id = HostId(self.hosts.len() as u32);
        self.hosts.push(Host::new(id, role, up, down, cap));
        id
    }

    fn build_hosts(&mut self, scenario: &Scenario) {
        let topo = &scenario.topology;
        let cap = topo.relay_queue_cap;
        for relay in &topo.guards {
            let id = self.add_host(Role::Guard, relay.up_bps, relay.down_bps, cap);
            self.guard_hosts.push(id);
        }
        for relay in &topo.middles {
            let id = self.add_host(Role::Middle, relay.up_bps, relay.down_bps, cap);
            self.middle_hosts.push(id);
        }
        for relay in &topo.exits {
            let id = self.add_host(Role::Exit, relay.up_bps, relay.down_bps, cap);
            self.exit_hosts.push(id);
        }
    }

    fn seed_workload(&mut self, scenario: &Scenario) {
        let topo = &scenario.topology;
        let n_bench = scenario.workload.benchmark_clients;
        for i in 0..n_bench {
            let host = self.add_host(Role::Client, topo.client.up_bps, topo.client.down_bps, None);
            let server = self.add_host(Role::Server, topo.server.up_bps, topo.server.down_bps, None);
            let pick = self.relay_pick(i as usize);
            let mut think_rng = RngStream::new(self.seed, &format!("bench.{i}.think"));
            let first = self.think_dist.sample(&mut think_rng, None).finite_u64().unwrap_or(0);
            self.bench.push(BenchClient {
                host,
                server,
                relay_pick: pick,
                circuit: None,
                size_cursor: 0,
                attempts: 0,
                think_rng,
            });
            self.queue.schedule(SimTime(first), Ev::StartDownload { client: i });
        }
        for j in 0..scenario.workload.background_clients {
            let host = self.add_host(Role::Client, topo.client.up_bps, topo.client.down_bps, None);
            // The background server's egress rate shapes its on-period
            // stream to the configured cell rate.
            let rate_bps = self.bg_cfg.rate_cells_per_s * crate::CELL_SIZE;
            let server = self.add_host(Role::Server, rate_bps, topo.server.down_bps, None);
            let pick = self.relay_pick((n_bench + j) as usize);
            let mut rng = RngStream::new(self.seed, &format!("bg.{j}.toggle"));
            let circuit = self.build_circuit(CircuitOwner::Background(j), host, server, pick);
            let first = self
                .bg_cfg
                .off
                .sample(&mut rng, None)
                .finite_u64()
                .unwrap_or(0);
            let session = self.bg.len();
            self.bg.push(BgSession {
                server,
                circuit,
                rng,
                sending: false,
            });
            self.queue.schedule(SimTime(first), Ev::BgToggle { session });
        }
    }

    fn relay_pick(&self, ordinal: usize) -> (usize, usize, usize) {
        (
            ordinal % self.guard_hosts.len(),
            ordinal % self.middle_hosts.len(),
            ordinal % self.exit_hosts.len(),
        )
    }

    /// Open a circuit and attach the active defense to its endpoints.
    fn build_circuit(
        &mut self,
        owner: CircuitOwner,
        client: HostId,
        server: HostId,
        relay_pick: (usize, usize, usize),
    ) -> CircuitId {
        let id = CircuitId(self.circuits.len() as u32);
        let guard = self.guard_hosts[relay_pick.0];
        let middle = self.middle_hosts[relay_pick.1];
        let exit = self.exit_hosts[relay_pick.2];
        let now = self.queue.now();
        self.circuits.push(Circuit {
            id,
            path: [client, guard, middle, exit, server],
            link_latency_us: [
                self.latency.client_guard_us,
                self.latency.relay_relay_us,
                self.latency.relay_relay_us,
                self.latency.exit_server_us,
            ],
            status: CircuitStatus::Open,
            opened_at: now,
        });

        let mut meta = CircuitMeta {
            owner,
            client_machine: None,
            middle_machine: None,
            buflo: Vec::new(),
            active_download: None,
            doomed: false,
            fail_rng: RngStream::new(self.seed, &format!("fail.{}", id.0)),
        };

        for spec in &self.defense_machines {
            let rng = RngStream::new(self.seed, &format!("machine.{}.{}", id.0, spec.name));
            let idx = self.machines.len();
            self.machines.push(MachineInstance::new(spec.clone(), rng));
            self.machine_circuit.push(id.0 as usize);
            match spec.endpoint {
                EndpointSide::Client => meta.client_machine = Some(idx),
                EndpointSide::Middle => meta.middle_machine = Some(idx),
            }
        }

        if let Some(cfg) = self.buflo_cfg.clone() {
            for &direction in &cfg.directions {
                let host = match direction {
                    Direction::ServerBound => client,
                    Direction::ClientBound => middle,
                };
                let idx = self.buflos.len();
                let mut driver = BufloDriver::new(&cfg, id, host, direction);
                driver.begin_episode(now);
                self.buflos.push(driver);
                self.queue
                    .schedule(now + cfg.slot_us, Ev::BufloSlot { driver: idx });
                meta.buflo.push(idx);
            }
        }

        self.meta.push(meta);
        id
    }

    /// Run to the configured duration and collect outputs.
    pub fn run(mut self) -> RunOutput {
        let end = self.duration;
        let mut dispatched = 0u64;
        while let Some(event) = self.queue.pop_until(end) {
            dispatched += 1;
            self.handle(event.payload);
        }
        // Downloads cut by the end of the run resolve as timeouts (or as the
        // manifestation of a pending kill).
        for c in 0..self.meta.len() {
            if let Some(d) = self.meta[c].active_download {
                let status = if self.meta[c].doomed {
                    DownloadStatus::CircuitFailed
                } else {
                    DownloadStatus::Timeout
                };
                self.finalize_download(d, status);
            }
        }
        self.post_run_checks();

        let duration_us = self.duration.as_micros();
        let host_util = self
            .hosts
            .iter()
            .map(|h| HostUtil {
                host: h.id.0,
                role: h.role.label().to_string(),
                busy_us: h.busy_us,
                utilization: h.busy_us as f64 / duration_us as f64,
            })
            .collect();
        RunOutput {
            seed: self.seed,
            downloads: self.downloads,
            drops: self.drops,
            dispatched,
            host_util,
            event_log: self.log,
            padding_injected_cells: self.padding_injected,
            chain_overflows: self.machines.iter().map(|m| m.chain_overflows).sum(),
        }
    }

    fn post_run_checks(&self) {
        for record in &self.downloads {
            assert!(
                record.status.is_some(),
                "download {} has no terminal status",
                record.id
            );
            if record.status == Some(DownloadStatus::Success) {
                assert_eq!(
                    record.content_bytes(),
                    record.size_bytes,
                    "conservation breach on download {}",
                    record.id
                );
            }
        }
        for m in &self.machines {
            if let Some(budget) = m.spec.budget {
                assert!(m.budget_left().unwrap_or(0) <= budget);
            }
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Arrive { host, cell } => self.on_arrive(host, cell),
            Ev::Deliver { host, cell } => self.deliver_cell(host, cell),
            Ev::EgressDone { host } => self.on_egress_done(host),
            Ev::PaddingTimer { machine } => self.on_padding_timer(machine),
            Ev::BufloSlot { driver } => self.on_buflo_slot(driver),
            Ev::StartDownload { client } => self.start_download(client),
            Ev::DownloadTimeout { download } => self.on_timeout(download),
            Ev::BgToggle { session } => self.on_bg_toggle(session),
        }
    }

    // ---- cell transport ------------------------------------------------

    fn make_cell(&mut self, kind: CellKind, circuit: CircuitId, direction: Direction, payload: u32) -> Cell {
        let id = self.next_cell_id;
        self.next_cell_id += 1;
        Cell {
            id,
            kind,
            circuit,
            direction,
            payload,
            created_at: self.queue.now(),
        }
    }

    fn log_line(&mut self, line: String) {
        if let Some(log) = &mut self.log {
            log.push(line);
        }
    }

    /// Append a cell to a host's egress FIFO, starting the pipe if idle.
    /// Returns false when the queue cap drops the cell.
    fn egress_push(&mut self, host: HostId, cell: Cell) -> bool {
        let h = &mut self.hosts[host.0 as usize];
        if let Some(cap) = h.queue_cap {
            if h.egress.len() >= cap {
                self.drops.queue_full += 1;
                let now = self.queue.now();
                self.log_line(format!(
                    "t={} ev=drop host={} reason=queue_full circ={} cell={}",
                    now.as_micros(),
                    host.0,
                    cell.circuit.0,
                    cell.id
                ));
                return false;
            }
        }
        h.egress.push_back(cell);
        let start = !h.egress_busy;
        if start {
            h.egress_busy = true;
            let ser = h.egress_serialization_us();
            self.queue.schedule_in(ser, Ev::EgressDone { host });
        }
        let now = self.queue.now();
        self.log_line(format!(
            "t={} ev=enqueue host={} circ={} dir={} kind={} cell={}",
            now.as_micros(),
            host.0,
            cell.circuit.0,
            cell.direction.label(),
            cell.kind.label(),
            cell.id
        ));
        true
    }

    fn on_egress_done(&mut self, host: HostId) {
        let now = self.queue.now();
        let h = &mut self.hosts[host.0 as usize];
        let cell = h.egress.pop_front().expect("egress pipe fired with empty queue");
        let ser = h.egress_serialization_us();
        h.busy_us += ser;
        if h.egress.is_empty() {
            h.egress_busy = false;
        } else {
            self.queue.schedule_in(ser, Ev::EgressDone { host });
        }
        self.log_line(format!(
            "t={} ev=egress host={} circ={} dir={} kind={} cell={}",
            now.as_micros(),
            host.0,
            cell.circuit.0,
            cell.direction.label(),
            cell.kind.label(),
            cell.id
        ));
        let circuit = &self.circuits[cell.circuit.0 as usize];
        let (next, latency) = circuit
            .next_hop(host, cell.direction)
            .expect("egressed cell has a next hop");
        self.queue.schedule_in(latency, Ev::Arrive { host: next, cell });
    }

    fn on_arrive(&mut self, host: HostId, cell: Cell) {
        let now = self.queue.now();
        self.log_line(format!(
            "t={} ev=arrive host={} circ={} dir={} kind={} cell={}",
            now.as_micros(),
            host.0,
            cell.circuit.0,
            cell.direction.label(),
            cell.kind.label(),
            cell.id
        ));
        // Ingress pipe: acceptance is bounded by the host's download rate.
        let h = &mut self.hosts[host.0 as usize];
        let start = h.ingress_busy_until.max(now);
        let ready = start + h.ingress_serialization_us();
        h.ingress_busy_until = ready;
        self.queue.schedule(ready, Ev::Deliver { host, cell });
    }

    /// Host logic for a cell that finished the ingress pipe: relays forward,
    /// endpoints consume.
    fn deliver_cell(&mut self, host: HostId, cell: Cell) {
        let Some(circuit) = self.circuits.get(cell.circuit.0 as usize) else {
            self.drops.unknown_circuit += 1;
            return;
        };
        if circuit.status != CircuitStatus::Open {
            self.drops.closed_circuit += 1;
            return;
        }
        let pos = circuit
            .position_of(host)
            .expect("cell delivered to host outside its circuit");
        let now = self.queue.now();
        self.log_line(format!(
            "t={} ev=deliver host={} circ={} dir={} kind={} cell={}",
            now.as_micros(),
            host.0,
            cell.circuit.0,
            cell.direction.label(),
            cell.kind.label(),
            cell.id
        ));
        match pos {
            0 => self.client_consume(cell),
            2 => self.middle_handle(cell),
            4 => self.server_consume(cell),
            // Guard and exit forward opaquely.
            _ => self.forward(host, cell),
        }
    }

    fn forward(&mut self, host: HostId, cell: Cell) {
        self.egress_push(host, cell);
    }

    // ---- endpoint behavior ----------------------------------------------

    fn client_consume(&mut self, cell: Cell) {
        let circ_idx = cell.circuit.0 as usize;
        match cell.kind {
            CellKind::Padding => {
                // Absorbed here; never credited to content.
                if let Some(d) = self.meta[circ_idx].active_download {
                    if self.downloads[d as usize].in_flight() {
                        self.downloads[d as usize].padding_rx_cells += 1;
                        self.fail_draw(circ_idx);
                    }
                }
                self.trigger_machine(self.meta[circ_idx].client_machine, Trigger::PaddingReceived);
            }
            CellKind::Content => {
                let now = self.queue.now();
                let mut completed = false;
                if let Some(d) = self.meta[circ_idx].active_download {
                    let record = &mut self.downloads[d as usize];
                    if record.in_flight() {
                        let cum = record.content_bytes() + cell.payload as u64;
                        assert!(
                            cum <= record.size_bytes,
                            "download {} received {} bytes beyond its size class",
                            record.id,
                            cum - record.size_bytes
                        );
                        if cum == record.size_bytes && self.meta[circ_idx].doomed {
                            // A pending kill manifests instead of completion:
                            // the final bytes are never credited.
                            self.fail_circuit(cell.circuit);
                            return;
                        }
                        record.progress.push(ProgressSample {
                            at: now,
                            content_bytes: cum,
                            padding_rx_cells: record.padding_rx_cells,
                            padding_tx_cells: record.padding_tx_cells,
                        });
                        if cum == record.size_bytes {
                            record.ended_at = Some(now);
                            completed = true;
                        }
                    } else {
                        self.drops.late_content += 1;
                    }
                } else {
                    // Background stream or post-terminal remainder.
                    if matches!(self.meta[circ_idx].owner, CircuitOwner::Bench(_)) {
                        self.drops.late_content += 1;
                    }
                }
                if completed {
                    let d = self.meta[circ_idx].active_download.unwrap();
                    self.finalize_download(d, DownloadStatus::Success);
                }
                self.trigger_machine(self.meta[circ_idx].client_machine, Trigger::NonPaddingReceived);
            }
            CellKind::Control => {
                self.trigger_machine(self.meta[circ_idx].client_machine, Trigger::NonPaddingReceived);
            }
        }
    }

    fn middle_handle(&mut self, cell: Cell) {
        let circ_idx = cell.circuit.0 as usize;
        match cell.direction {
            Direction::ServerBound => {
                if cell.kind.is_padding() {
                    // Client->middle padding terminates the tunnel here.
                    self.trigger_machine(self.meta[circ_idx].middle_machine, Trigger::PaddingReceived);
                } else {
                    self.trigger_machine(self.meta[circ_idx].middle_machine, Trigger::NonPaddingReceived);
                    let middle = self.circuits[circ_idx].middle();
                    self.egress_push(middle, cell);
                }
            }
            Direction::ClientBound => {
                // Client-bound traffic enters the padded tunnel here.
                debug_assert!(!cell.kind.is_padding(), "padding cannot arrive client-bound at middle");
                let middle = self.circuits[circ_idx].middle();
                self.send_from_endpoint(middle, cell, self.meta[circ_idx].middle_machine);
            }
        }
    }

    fn server_consume(&mut self, cell: Cell) {
        // Only the download request reaches the server; it answers by
        // dumping the whole object into its egress pipe, which paces the
        // stream at the server's up rate.
        if cell.kind != CellKind::Control {
            return;
        }
        let circ_idx = cell.circuit.0 as usize;
        let Some(d) = self.meta[circ_idx].active_download else {
            return;
        };
        let record = &self.downloads[d as usize];
        if !record.in_flight() {
            return;
        }
        let size = record.size_bytes;
        let server = self.circuits[circ_idx].server();
        let n = cells_for(size, self.payload_bytes);
        for k in 0..n {
            let payload = (size - k * self.payload_bytes).min(self.payload_bytes) as u32;
            let cell = self.make_cell(CellKind::Content, cell.circuit, Direction::ClientBound, payload);
            self.egress_push(server, cell);
        }
    }

    /// Endpoint send of a non-padding cell: BuFlo holds it when a driver
    /// covers this direction, otherwise it egresses immediately and the
    /// endpoint machine sees NonPaddingSent.
    fn send_from_endpoint(&mut self, host: HostId, cell: Cell, machine: Option<usize>) {
        let circ_idx = cell.circuit.0 as usize;
        for &b in &self.meta[circ_idx].buflo {
            if self.buflos[b].host == host && self.buflos[b].direction == cell.direction {
                let now = self.queue.now();
                if self.buflos[b].enqueue(cell) {
                    self.buflos[b].begin_episode(now);
                    let slot = self.buflos[b].slot_us;
                    self.queue.schedule_in(slot, Ev::BufloSlot { driver: b });
                }
                return;
            }
        }
        if self.egress_push(host, cell) {
            self.trigger_machine(machine, Trigger::NonPaddingSent);
        }
    }

    // ---- padding machines ------------------------------------------------

    fn trigger_machine(&mut self, machine: Option<usize>, trigger: Trigger) {
        let Some(m) = machine else { return };
        let mut cmds = Vec::new();
        self.machines[m].on_trigger(trigger, &mut cmds);
        self.apply_machine_cmds(m, &cmds);
    }

    fn apply_machine_cmds(&mut self, m: usize, cmds: &[MachineCmd]) {
        for cmd in cmds {
            match cmd {
                MachineCmd::CancelTimer => {
                    if let Some(h) = self.machines[m].pending_timer.take() {
                        self.queue.cancel(h);
                    }
                }
                MachineCmd::ScheduleTimer { delay_us } => {
                    debug_assert!(
                        self.machines[m].pending_timer.is_none(),
                        "machine {m} would hold two pending timers"
                    );
                    let h = self
                        .queue
                        .schedule_in(*delay_us, Ev::PaddingTimer { machine: m });
                    self.machines[m].pending_timer = Some(h);
                }
            }
        }
    }

    fn on_padding_timer(&mut self, m: usize) {
        self.machines[m].pending_timer = None;
        let circ_idx = self.machine_circuit[m];
        if self.circuits[circ_idx].status != CircuitStatus::Open {
            // Timer outlived its circuit; discard silently.
            return;
        }
        if !self.machines[m].timer_fired() {
            return;
        }
        let (host, direction) = match self.machines[m].spec.endpoint {
            EndpointSide::Client => (self.circuits[circ_idx].client(), Direction::ServerBound),
            EndpointSide::Middle => (self.circuits[circ_idx].middle(), Direction::ClientBound),
        };
        let cell = self.make_cell(CellKind::Padding, CircuitId(circ_idx as u32), direction, 0);
        if self.egress_push(host, cell) {
            self.padding_injected += 1;
            if self.machines[m].spec.endpoint == EndpointSide::Client {
                if let Some(d) = self.meta[circ_idx].active_download {
                    if self.downloads[d as usize].in_flight() {
                        self.downloads[d as usize].padding_tx_cells += 1;
                        self.fail_draw(circ_idx);
                    }
                }
            }
        }
        let mut cmds = Vec::new();
        self.machines[m].after_padding_sent(&mut cmds);
        self.apply_machine_cmds(m, &cmds);
    }

    // ---- BuFlo -----------------------------------------------------------

    fn on_buflo_slot(&mut self, b: usize) {
        let circuit = self.buflos[b].circuit;
        let circ_idx = circuit.0 as usize;
        if self.circuits[circ_idx].status != CircuitStatus::Open {
            self.buflos[b].hold.clear();
            self.buflos[b].active = false;
            return;
        }
        let now = self.queue.now();
        let host = self.buflos[b].host;
        let direction = self.buflos[b].direction;
        let (cell, kind) = match self.buflos[b].slot_emission() {
            Some(content) => (content, content.kind),
            None => {
                let cell = self.make_cell(CellKind::Padding, circuit, direction, 0);
                (cell, CellKind::Padding)
            }
        };
        self.log_line(format!(
            "t={} ev=slot host={} circ={} dir={} kind={}",
            now.as_micros(),
            host.0,
            circuit.0,
            direction.label(),
            kind.label()
        ));
        if self.egress_push(host, cell) && kind.is_padding() {
            self.padding_injected += 1;
            if direction == Direction::ServerBound {
                if let Some(d) = self.meta[circ_idx].active_download {
                    if self.downloads[d as usize].in_flight() {
                        self.downloads[d as usize].padding_tx_cells += 1;
                        self.fail_draw(circ_idx);
                    }
                }
            }
        }
        if self.buflos[b].continues(now) {
            let slot = self.buflos[b].slot_us;
            self.queue.schedule_in(slot, Ev::BufloSlot { driver: b });
        } else {
            self.buflos[b].park();
        }
    }

    // ---- workload ----------------------------------------------------------

    fn start_download(&mut self, client: u32) {
        let i = client as usize;
        if let Some(limit) = self.downloads_per_client {
            if self.bench[i].attempts >= limit {
                return;
            }
        }
        // (Re)build the circuit if none exists or the old one died.
        let needs_circuit = match self.bench[i].circuit {
            Some(c) => self.circuits[c.0 as usize].status != CircuitStatus::Open,
            None => true,
        };
        if needs_circuit {
            let host = self.bench[i].host;
            let server = self.bench[i].server;
            let pick = self.bench[i].relay_pick;
            let circuit = self.build_circuit(CircuitOwner::Bench(client), host, server, pick);
            self.bench[i].circuit = Some(circuit);
        }
        let circuit = self.bench[i].circuit.unwrap();
        let circ_idx = circuit.0 as usize;

        let size = self.size_classes[self.bench[i].size_cursor % self.size_classes.len()];
        self.bench[i].size_cursor += 1;
        self.bench[i].attempts += 1;

        let id = self.downloads.len() as u32;
        let now = self.queue.now();
        self.downloads.push(DownloadRecord {
            id,
            client_index: client,
            circuit,
            size_bytes: size,
            started_at: now,
            ended_at: None,
            status: None,
            progress: Vec::new(),
            padding_rx_cells: 0,
            padding_tx_cells: 0,
        });
        self.meta[circ_idx].active_download = Some(id);

        if let Some(timeout) = self.timeout_us {
            self.queue.schedule_in(timeout, Ev::DownloadTimeout { download: id });
        }

        let request = self.make_cell(CellKind::Control, circuit, Direction::ServerBound, 0);
        let client_host = self.circuits[circ_idx].client();
        let machine = self.meta[circ_idx].client_machine;
        self.send_from_endpoint(client_host, request, machine);
    }

    fn on_timeout(&mut self, download: u32) {
        if !self.downloads[download as usize].in_flight() {
            return;
        }
        let circ_idx = self.downloads[download as usize].circuit.0 as usize;
        if self.meta[circ_idx].doomed {
            // The kill beats the timeout to the terminal boundary.
            self.fail_circuit(CircuitId(circ_idx as u32));
        } else {
            self.finalize_download(download, DownloadStatus::Timeout);
        }
    }

    /// Background sessions alternate on/off; an on period dumps
    /// `rate * duration` cells into the session server's egress pipe, whose
    /// rate shapes the stream.
    fn on_bg_toggle(&mut self, session: usize) {
        let turning_on = !self.bg[session].sending;
        self.bg[session].sending = turning_on;
        let dist = if turning_on {
            self.bg_cfg.on.clone()
        } else {
            self.bg_cfg.off.clone()
        };
        let period_us = dist
            .sample(&mut self.bg[session].rng, None)
            .finite_u64()
            .unwrap_or(0)
            .max(1);
        if turning_on {
            let circuit = self.bg[session].circuit;
            if self.circuits[circuit.0 as usize].status == CircuitStatus::Open {
                let n = (self.bg_cfg.rate_cells_per_s as u128 * period_us as u128 / 1_000_000) as u64;
                let server = self.bg[session].server;
                let payload = self.payload_bytes as u32;
                for _ in 0..n {
                    let cell = self.make_cell(CellKind::Content, circuit, Direction::ClientBound, payload);
                    self.egress_push(server, cell);
                }
            }
        }
        self.queue.schedule_in(period_us, Ev::BgToggle { session });
    }

    /// Kill draw for one padding cell attributed to the active download.
    fn fail_draw(&mut self, circ_idx: usize) {
        if self.meta[circ_idx].fail_rng.chance(self.p_fail) {
            self.meta[circ_idx].doomed = true;
        }
    }

    /// Immediate circuit failure: the circuit is unusable and any in-flight
    /// download on it terminates as circuit_failed with partial progress.
    pub(crate) fn fail_circuit(&mut self, circuit: CircuitId) {
        let circ_idx = circuit.0 as usize;
        if self.circuits[circ_idx].status != CircuitStatus::Open {
            return;
        }
        self.circuits[circ_idx].status = CircuitStatus::Failed;
        if let Some(d) = self.meta[circ_idx].active_download {
            if self.downloads[d as usize].in_flight() {
                self.finalize_download(d, DownloadStatus::CircuitFailed);
            }
        }
    }

    fn finalize_download(&mut self, download: u32, status: DownloadStatus) {
        let (circuit, circ_idx, client) = {
            let record = &mut self.downloads[download as usize];
            debug_assert!(record.in_flight());
            record.status = Some(status);
            if status != DownloadStatus::Success {
                record.ended_at = None;
            }
            (record.circuit, record.circuit.0 as usize, record.client_index)
        };
        self.meta[circ_idx].active_download = None;

        // Abort the upstream remainder: cells not yet committed to the
        // server's egress pipe vanish with the application session.
        let server = self.circuits[circ_idx].server();
        self.purge_uncommitted(server, circuit);

        // Think, then the next download in the rotation.
        if matches!(self.meta[circ_idx].owner, CircuitOwner::Bench(_)) {
            let proceed = self
                .downloads_per_client
                .is_none_or(|limit| self.bench[client as usize].attempts < limit);
            if proceed {
                let think = self.think_dist.clone();
                let delay = think
                    .sample(&mut self.bench[client as usize].think_rng, None)
                    .finite_u64()
                    .unwrap_or(0);
                self.queue.schedule_in(delay, Ev::StartDownload { client });
            }
        }
    }

    /// Remove queued cells for `circuit` from a host's egress FIFO, keeping
    /// the in-service head.
    fn purge_uncommitted(&mut self, host: HostId, circuit: CircuitId) {
        let h = &mut self.hosts[host.0 as usize];
        if h.egress.is_empty() {
            return;
        }
        let keep_head = h.egress_busy;
        let mut kept = std::collections::VecDeque::with_capacity(h.egress.len());
        for (i, cell) in h.egress.drain(..).enumerate() {
            if (i == 0 && keep_head) || cell.circuit != circuit {
                kept.push_back(cell);
            }
        }
        h.egress = kept;
    }
}

/// Build and run one simulation for `(scenario, seed)`.
pub fn run_one(scenario: &Scenario, seed: u64) -> RunOutput {
    Simulation::new(scenario, seed).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        EdgeHostSpec, FailureConfig, LatencySpec, RelaySpec, Scenario, TopologySpec,
    };
    use crate::workload::{BackgroundConfig, WorkloadConfig};

    fn scenario() -> Scenario {
        let relay = RelaySpec {
            up_bps: 512_000_000,
            down_bps: 512_000_000,
        };
        Scenario {
            name: "drop-paths".into(),
            description: String::new(),
            seeds: vec![1],
            duration_us: 10_000_000,
            warmup_us: 0,
            topology: TopologySpec {
                guards: vec![relay.clone()],
                middles: vec![relay.clone()],
                exits: vec![relay],
                client: EdgeHostSpec {
                    up_bps: 512_000_000,
                    down_bps: 512_000_000,
                },
                server: EdgeHostSpec {
                    up_bps: 512_000_000,
                    down_bps: 512_000_000,
                },
                latency: LatencySpec {
                    client_guard_us: 1_000,
                    relay_relay_us: 1_000,
                    exit_server_us: 1_000,
                },
                relay_queue_cap: None,
            },
            defense: crate::padding::DefenseSpec::None,
            workload: WorkloadConfig {
                benchmark_clients: 1,
                background_clients: 0,
                size_classes_bytes: vec![4_980],
                think_time: crate::engine::DistSpec::Uniform {
                    low: 1_000.0,
                    high: 1_000.0,
                },
                download_timeout_us: None,
                downloads_per_client: Some(1),
                background: BackgroundConfig::default(),
            },
            failure: FailureConfig::default(),
            cell_payload_bytes: 498,
            emit_events_log: false,
        }
    }

    #[test]
    fn unknown_circuit_cells_are_dropped_with_a_statistic() {
        let mut sim = Simulation::new(&scenario(), 1);
        let cell = Cell {
            id: 0,
            kind: CellKind::Content,
            circuit: CircuitId(999),
            direction: Direction::ClientBound,
            payload: 498,
            created_at: SimTime::ZERO,
        };
        sim.deliver_cell(HostId(0), cell);
        assert_eq!(sim.drops.unknown_circuit, 1);
    }

    #[test]
    fn cells_on_a_failed_circuit_are_dropped_with_a_statistic() {
        let mut sim = Simulation::new(&scenario(), 1);
        // Open the benchmark circuit, then kill it and deliver a straggler.
        sim.start_download(0);
        let circuit = sim.bench[0].circuit.unwrap();
        sim.fail_circuit(circuit);
        assert_eq!(sim.circuits[circuit.0 as usize].status, CircuitStatus::Failed);
        let cell = Cell {
            id: 1,
            kind: CellKind::Content,
            circuit,
            direction: Direction::ClientBound,
            payload: 498,
            created_at: SimTime::ZERO,
        };
        let middle = sim.circuits[circuit.0 as usize].middle();
        sim.deliver_cell(middle, cell);
        assert_eq!(sim.drops.closed_circuit, 1);
    }

    #[test]
    fn fail_circuit_closes_the_inflight_download_with_partial_progress() {
        let mut sim = Simulation::new(&scenario(), 1);
        sim.start_download(0);
        let circuit = sim.bench[0].circuit.unwrap();
        let download = sim.meta[circuit.0 as usize].active_download.unwrap();
        // Credit a little progress by hand, then kill the circuit.
        sim.downloads[download as usize].progress.push(crate::workload::ProgressSample {
            at: SimTime(5),
            content_bytes: 498,
            padding_rx_cells: 0,
            padding_tx_cells: 0,
        });
        sim.fail_circuit(circuit);
        let record = &sim.downloads[download as usize];
        assert_eq!(record.status, Some(DownloadStatus::CircuitFailed));
        assert_eq!(record.ended_at, None);
        assert_eq!(record.content_bytes(), 498, "partial progress retained");
    }
}
