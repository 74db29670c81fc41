use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::domain::{Timestamp, MS_PER_HOUR};
use crate::eventlog::LogHeader;
use crate::events::{Event, EventKind, DEPOT_STOP};
use crate::monitoring::{ApplyError, CenterError, MonitoringCenter, OrderStatus};
use crate::rng::SeededRng;
use crate::routing::Stop;
use crate::sensing::{fill_to_distance, vote, SensorChannels};
use crate::telemetry::{Channel, SenderLink, TelemetryMessage, TimeoutAction, VoteSummary};

use super::battery::{Battery, BatteryEvent};
use super::config::{BinConfig, ConfigError, ScenarioConfig};
use super::deposit::DepositProcess;
use super::truck::{Arrival, TruckRun};

const UPLINK_STREAM: u64 = 1;
const DOWNLINK_STREAM: u64 = 2;
const DEPOSIT_STREAM_BASE: u64 = 0x100;
const SENSOR_STREAM_BASE: u64 = 0x10000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Center(#[from] CenterError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub header: LogHeader,
    pub events: Vec<Event>,
    pub center: MonitoringCenter,
    /// Volume left in each bin at the end of the run.
    pub bin_volumes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
enum Action {
    Deposit { bin: usize, volume_l: f64 },
    Read { bin: usize },
    Deliver { msg: TelemetryMessage },
    AckArrive { bin: usize, seq: u64 },
    RetryTimeout { bin: usize, seq: u64 },
    Tick,
    TruckArrive { truck: usize },
}

struct SimBin {
    cfg: BinConfig,
    volume_l: f64,
    battery: Battery,
    channels: SensorChannels,
    link: SenderLink,
    next_seq: u64,
    pending: BTreeMap<u64, TelemetryMessage>,
    deposits: DepositProcess,
    deposit_rng: SeededRng,
    sensor_rng: SeededRng,
    last_read: Option<Timestamp>,
}

struct SimTruck {
    cfg: super::config::TruckConfig,
    queue: VecDeque<String>,
    run: Option<(String, TruckRun)>,
}

struct Engine<'a> {
    config: &'a ScenarioConfig,
    end: Timestamp,
    queue: BTreeMap<(Timestamp, u64), Action>,
    counter: u64,
    events: Vec<Event>,
    center: MonitoringCenter,
    bins: Vec<SimBin>,
    index: BTreeMap<String, usize>,
    trucks: Vec<SimTruck>,
    uplink: Channel,
    downlink: Channel,
    up_rng: SeededRng,
    down_rng: SeededRng,
}

/// Runs a scenario to completion. The same config always yields the same
/// events.
pub fn run(config: &ScenarioConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let start = Timestamp(config.start_at_ms);
    let end = start + config.duration_ms;
    let seed = config.seed;

    let bins: Vec<SimBin> = config
        .bins
        .iter()
        .enumerate()
        .map(|(i, b)| SimBin {
            cfg: b.clone(),
            volume_l: b.initial_volume_l,
            battery: Battery::new(b.initial_battery_v),
            channels: SensorChannels::new(),
            link: SenderLink::new(config.retransmit),
            next_seq: 1,
            pending: BTreeMap::new(),
            deposits: DepositProcess::new(b.arrival_rate_per_day, b.volume, b.geometry.capacity_l, start, end),
            deposit_rng: SeededRng::for_stream(seed, DEPOSIT_STREAM_BASE + i as u64),
            sensor_rng: SeededRng::for_stream(seed, SENSOR_STREAM_BASE + i as u64),
            last_read: None,
        })
        .collect();

    let mut engine = Engine {
        config,
        end,
        queue: BTreeMap::new(),
        counter: 0,
        events: Vec::new(),
        center: MonitoringCenter::new(config.policies.monitoring),
        index: config.bins.iter().enumerate().map(|(i, b)| (b.id.clone(), i)).collect(),
        bins,
        trucks: config
            .trucks
            .iter()
            .map(|t| SimTruck { cfg: t.clone(), queue: VecDeque::new(), run: None })
            .collect(),
        uplink: Channel::new(config.channel),
        downlink: Channel::new(config.channel),
        up_rng: SeededRng::for_stream(seed, UPLINK_STREAM),
        down_rng: SeededRng::for_stream(seed, DOWNLINK_STREAM),
    };

    engine.events.push(Event::new(
        start,
        EventKind::Start {
            scenario_id: config.scenario_id.clone(),
            seed,
            max_wait_ms: config.policies.monitoring.max_wait_ms,
            dispatch_interval_ms: config.policies.monitoring.dispatch_interval_ms,
        },
    ));
    let positions: Vec<_> = config.bins.iter().map(|b| (b.id.clone(), b.position)).collect();
    let trucks: Vec<_> = config.trucks.iter().map(|t| t.info()).collect();
    let reg = engine.center.register(&config.effective_zones(), &positions, &trucks, start)?;
    engine.events.extend(reg);

    for i in 0..engine.bins.len() {
        engine.schedule_next_deposit(i);
        engine.schedule(start, Action::Read { bin: i });
    }
    engine.schedule(start + config.policies.monitoring.dispatch_interval_ms, Action::Tick);

    while let Some(((at, _), action)) = engine.queue.pop_first() {
        if at >= end {
            break;
        }
        engine.step(at, action)?;
    }
    engine.events.push(Event::new(end, EventKind::End));

    Ok(SimOutput {
        header: LogHeader::new(seed, config.config_hash()),
        bin_volumes: engine.bins.iter().map(|b| (b.cfg.id.clone(), b.volume_l)).collect(),
        events: engine.events,
        center: engine.center,
    })
}

impl Engine<'_> {
    fn schedule(&mut self, at: Timestamp, action: Action) {
        if at < self.end {
            self.counter += 1;
            self.queue.insert((at, self.counter), action);
        }
    }

    fn log(&mut self, at: Timestamp, kind: EventKind) {
        self.events.push(Event::new(at, kind));
    }

    fn schedule_next_deposit(&mut self, i: usize) {
        let b = &mut self.bins[i];
        if let Some((at, volume_l)) = b.deposits.next(&mut b.deposit_rng) {
            self.schedule(at, Action::Deposit { bin: i, volume_l });
        }
    }

    fn step(&mut self, now: Timestamp, action: Action) -> Result<(), SimError> {
        match action {
            Action::Deposit { bin, volume_l } => self.deposit(now, bin, volume_l),
            Action::Read { bin } => self.read(now, bin),
            Action::Deliver { msg } => {
                let out = self.center.ingest(&msg, now)?;
                self.events.extend(out.events);
                if let Some(ack) = out.ack {
                    let bin = self.index[&ack.bin_id];
                    for (at, seq) in self.downlink.transmit(&ack.bin_id, ack.seq, now, &mut self.down_rng) {
                        self.schedule(at, Action::AckArrive { bin, seq });
                    }
                }
            }
            Action::AckArrive { bin, seq } => {
                let b = &mut self.bins[bin];
                let id = b.cfg.id.clone();
                let outcome = b.link.on_ack(seq);
                b.pending.remove(&seq);
                self.log(now, EventKind::Ack { bin_id: id.clone(), seq });
                if outcome.restored {
                    self.log(now, EventKind::LinkRestored { bin_id: id });
                }
            }
            Action::RetryTimeout { bin, seq } => self.retry(now, bin, seq),
            Action::Tick => {
                let events = self.center.tick(now)?;
                for e in &events {
                    if let EventKind::OrderCreated { order } = &e.kind {
                        let t = self.trucks.iter().position(|t| t.cfg.id == order.truck_id).expect("registered truck");
                        self.trucks[t].queue.push_back(order.order_id.clone());
                    }
                }
                self.events.extend(events);
                for t in 0..self.trucks.len() {
                    self.start_next_order(now, t)?;
                }
                self.schedule(now + self.config.policies.monitoring.dispatch_interval_ms, Action::Tick);
            }
            Action::TruckArrive { truck } => self.truck_arrive(now, truck)?,
        }
        Ok(())
    }

    fn deposit(&mut self, now: Timestamp, i: usize, volume_l: f64) {
        let b = &mut self.bins[i];
        let cap = b.cfg.geometry.capacity_l;
        let stored_l = volume_l.min(cap - b.volume_l).max(0.0);
        let overflow_l = volume_l - stored_l;
        b.volume_l += stored_l;
        let kind = EventKind::Deposit {
            bin_id: b.cfg.id.clone(),
            volume_l,
            stored_l,
            overflow_l,
            bin_volume_l: b.volume_l,
            fill: b.volume_l / cap,
        };
        let id = b.cfg.id.clone();
        self.log(now, kind);
        if overflow_l > 0.0 {
            self.log(now, EventKind::Overflow { bin_id: id, overflow_l });
        }
        self.schedule_next_deposit(i);
    }

    fn battery_events(&mut self, now: Timestamp, bin: usize, events: Vec<BatteryEvent>) {
        let id = self.bins[bin].cfg.id.clone();
        let battery_v = self.bins[bin].battery.volts;
        for e in events {
            let kind = match e {
                BatteryEvent::Low => EventKind::LowBattery { bin_id: id.clone(), battery_v },
                BatteryEvent::Depleted => EventKind::BatteryDepleted { bin_id: id.clone(), battery_v },
            };
            self.log(now, kind);
        }
    }

    fn read(&mut self, now: Timestamp, i: usize) {
        let params = self.config.battery;
        let tol = self.config.policies.agree_tol;
        let b = &mut self.bins[i];
        let idle_h = b.last_read.map_or(0.0, |t| now.saturating_sub(t) as f64 / MS_PER_HOUR as f64);
        b.last_read = Some(now);
        let ev = b.battery.step(0, idle_h, &params);
        self.battery_events(now, i, ev);

        let b = &mut self.bins[i];
        let (geom, spec) = (b.cfg.geometry, b.cfg.sensor);
        let true_fill = b.volume_l / geom.capacity_l;
        let d = fill_to_distance(true_fill, &geom, &spec);
        let pair = b.channels.measure(d, &b.cfg.fault, &spec, &mut b.sensor_rng, now);
        let outcome = vote(&pair, &geom, &spec, tol);
        let id = b.cfg.id.clone();
        self.log(
            now,
            EventKind::SensorRead {
                bin_id: id.clone(),
                true_fill,
                sensor_a_cm: pair.sensor_a_cm,
                sensor_b_cm: pair.sensor_b_cm,
                vote_kind: outcome.kind,
                vote_fill: outcome.fill,
            },
        );

        let b = &mut self.bins[i];
        if b.battery.can_transmit() {
            let seq = b.next_seq;
            b.next_seq += 1;
            let msg = TelemetryMessage {
                bin_id: id.clone(),
                seq,
                sent_at: now,
                position: b.cfg.position,
                sensor_a_cm: pair.sensor_a_cm,
                sensor_b_cm: pair.sensor_b_cm,
                vote: VoteSummary { kind: outcome.kind, fill: outcome.fill },
                battery_v: b.battery.volts,
            };
            b.link.on_send(seq);
            b.pending.insert(seq, msg.clone());
            let ev = b.battery.step(1, 0.0, &params);
            self.battery_events(now, i, ev);
            self.transmit(now, i, msg, 0);
        }

        let period = self.bins[i].cfg.reporting_period_ms;
        self.schedule(now + period, Action::Read { bin: i });
    }

    fn transmit(&mut self, now: Timestamp, bin: usize, msg: TelemetryMessage, attempt: u32) {
        let (bin_id, seq) = (msg.bin_id.clone(), msg.seq);
        let copies = self.uplink.transmit(&bin_id, msg, now, &mut self.up_rng);
        self.log(now, EventKind::Send { bin_id, seq, attempt, copies: copies.len() as u32 });
        for (at, msg) in copies {
            self.schedule(at, Action::Deliver { msg });
        }
        let timeout = self.config.retransmit.timeout_ms;
        self.schedule(now + timeout, Action::RetryTimeout { bin, seq });
    }

    fn retry(&mut self, now: Timestamp, i: usize, seq: u64) {
        let params = self.config.battery;
        let b = &mut self.bins[i];
        match b.link.on_timeout(seq) {
            TimeoutAction::Settled => {}
            TimeoutAction::Resend { attempt } => {
                if !b.battery.can_transmit() {
                    return;
                }
                let Some(msg) = b.pending.get(&seq).cloned() else { return };
                let ev = b.battery.step(1, 0.0, &params);
                self.battery_events(now, i, ev);
                self.transmit(now, i, msg, attempt);
            }
            TimeoutAction::Exhausted { .. } => {
                b.pending.remove(&seq);
                let bin_id = b.cfg.id.clone();
                self.log(now, EventKind::LinkDegraded { bin_id, seq });
            }
        }
    }

    fn start_next_order(&mut self, now: Timestamp, t: usize) -> Result<(), SimError> {
        if self.trucks[t].run.is_some() {
            return Ok(());
        }
        let Some(order_id) = self.trucks[t].queue.pop_front() else { return Ok(()) };
        let order = &self.center.state().orders[&order_id];
        let route: Vec<Stop> =
            order.visits.iter().map(|v| Stop { bin_id: v.bin_id.clone(), position: v.position }).collect();
        let truck_id = self.trucks[t].cfg.id.clone();
        let mut run = TruckRun::new(self.trucks[t].cfg.clone(), route);
        let leg = run.depart();
        let ev = self.center.set_order_status(&order_id, OrderStatus::InProgress, None, now)?;
        self.events.extend(ev);
        self.log(now, EventKind::TruckDepart { truck_id, order_id: order_id.clone() });
        self.trucks[t].run = Some((order_id, run));
        self.schedule(now + leg.duration_ms, Action::TruckArrive { truck: t });
        Ok(())
    }

    fn truck_arrive(&mut self, now: Timestamp, t: usize) -> Result<(), SimError> {
        let truck_id = self.trucks[t].cfg.id.clone();
        let (order_id, mut run) = self.trucks[t].run.take().expect("arrival for an idle truck");
        let bins = &self.bins;
        let index = &self.index;
        let arrival = run.arrive(|b| bins[index[b]].volume_l);
        match arrival {
            Arrival::AtBin { bin_id, leg_m, collected, next } => {
                self.log(now, EventKind::TruckArrive { truck_id: truck_id.clone(), stop: bin_id.clone(), leg_m });
                if let Some(volume_l) = collected {
                    self.bins[self.index[&bin_id]].volume_l = 0.0;
                    self.log(
                        now,
                        EventKind::Collect {
                            truck_id: truck_id.clone(),
                            order_id: order_id.clone(),
                            bin_id: bin_id.clone(),
                            volume_l,
                        },
                    );
                    let ev = self.center.confirm_collect(&order_id, &bin_id, now)?;
                    self.events.extend(ev);
                }
                self.trucks[t].run = Some((order_id, run));
                self.schedule(now + next.duration_ms, Action::TruckArrive { truck: t });
            }
            Arrival::AtDepot { leg_m, unloaded_l, next } => {
                self.log(now, EventKind::TruckArrive { truck_id: truck_id.clone(), stop: DEPOT_STOP.into(), leg_m });
                self.log(now, EventKind::DepotUnload { truck_id, load_l: unloaded_l });
                match next {
                    Some(leg) => {
                        self.trucks[t].run = Some((order_id, run));
                        self.schedule(now + leg.duration_ms, Action::TruckArrive { truck: t });
                    }
                    None => {
                        let ev = self.center.set_order_status(&order_id, OrderStatus::Done, Some(&[]), now)?;
                        self.events.extend(ev);
                        self.start_next_order(now, t)?;
                    }
                }
            }
        }
        Ok(())
    }
}
