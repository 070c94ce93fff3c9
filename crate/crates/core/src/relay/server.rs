//! Socket runtime around the sans-io relay.
//!
//! A UDP reader thread and one thread per gateway WebSocket connection feed a
//! single event-loop thread that owns the [`Relay`] and every
//! [`GatewayAgent`]. All session state is touched on that loop only.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use tungstenite::{Message, WebSocket};

use super::gateway::{AgentOutput, GatewayAgent};
use super::{Outgoing, Relay, RelayConfig};
use crate::protocol::MAX_DATAGRAM;

pub const TICK_INTERVAL: Duration = Duration::from_millis(50);
const POLL: Duration = Duration::from_millis(50);

/// Where a participant lives: a native UDP peer or a browser connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Udp(SocketAddr),
    Gateway(u64),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub gateway: Option<SocketAddr>,
    pub relay: RelayConfig,
}

enum Input {
    Datagram(SocketAddr, Vec<u8>),
    GatewayOpen(u64, Sender<String>),
    GatewayLine(u64, String),
    GatewayClosed(u64),
}

/// Snapshot of loop counters, published after every loop iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServerStats {
    pub sessions: usize,
    pub participants: usize,
    pub gateway_connections: usize,
    pub malformed: u64,
    pub violations: u64,
}

pub struct RelayServer {
    udp_addr: SocketAddr,
    gateway_addr: Option<SocketAddr>,
    shutdown: Arc<AtomicBool>,
    stats: Arc<std::sync::Mutex<ServerStats>>,
    threads: Vec<JoinHandle<()>>,
}

impl RelayServer {
    pub fn start(config: ServerConfig) -> io::Result<Self> {
        let socket = UdpSocket::bind(config.bind)?;
        socket.set_read_timeout(Some(POLL))?;
        let udp_addr = socket.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(std::sync::Mutex::new(ServerStats::default()));
        let (tx, rx) = mpsc::channel();
        let mut threads = Vec::new();

        let reader = socket.try_clone()?;
        let (stop, tx_udp) = (shutdown.clone(), tx.clone());
        threads.push(thread::Builder::new().name("relay-udp".into()).spawn(move || udp_reader(reader, tx_udp, stop))?);

        let mut gateway_addr = None;
        if let Some(addr) = config.gateway {
            let listener = TcpListener::bind(addr)?;
            listener.set_nonblocking(true)?;
            gateway_addr = Some(listener.local_addr()?);
            let (stop, tx_gw) = (shutdown.clone(), tx.clone());
            threads.push(
                thread::Builder::new().name("relay-gateway".into()).spawn(move || accept_loop(listener, tx_gw, stop))?,
            );
        }
        drop(tx);

        let (stop, st) = (shutdown.clone(), stats.clone());
        let relay_config = config.relay;
        threads.push(
            thread::Builder::new()
                .name("relay-loop".into())
                .spawn(move || EventLoop::new(socket, relay_config, st).run(rx, stop))?,
        );
        info!("relay on udp {udp_addr}, gateway {gateway_addr:?}");
        Ok(Self { udp_addr, gateway_addr, shutdown, stats, threads })
    }

    pub fn udp_addr(&self) -> SocketAddr {
        self.udp_addr
    }

    pub fn gateway_addr(&self) -> Option<SocketAddr> {
        self.gateway_addr
    }

    pub fn stats(&self) -> ServerStats {
        self.stats.lock().expect("stats lock").clone()
    }

    /// Blocks until every thread exits (which only happens after shutdown).
    pub fn join(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.join();
    }
}

fn udp_reader(socket: UdpSocket, tx: Sender<Input>, stop: Arc<AtomicBool>) {
    let mut buf = [0u8; MAX_DATAGRAM + 64];
    while !stop.load(Ordering::SeqCst) {
        match socket.recv_from(&mut buf) {
            Ok((n, src)) => {
                if tx.send(Input::Datagram(src, buf[..n].to_vec())).is_err() {
                    return;
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => debug!("udp recv: {e}"),
        }
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Input>, stop: Arc<AtomicBool>) {
    let mut next_id = 1u64;
    let mut conns = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                debug!("gateway connection {id} from {peer}");
                let (tx, stop) = (tx.clone(), stop.clone());
                conns.push(thread::spawn(move || {
                    if let Err(e) = serve_connection(stream, id, tx.clone(), stop) {
                        debug!("gateway connection {id}: {e}");
                    }
                    let _ = tx.send(Input::GatewayClosed(id));
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => warn!("gateway accept: {e}"),
        }
    }
    for c in conns {
        let _ = c.join();
    }
}

fn serve_connection(stream: TcpStream, id: u64, tx: Sender<Input>, stop: Arc<AtomicBool>) -> Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(20))).map_err(|e| e.to_string())?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    tx.send(Input::GatewayOpen(id, out_tx)).map_err(|e| e.to_string())?;
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                for line in text.lines() {
                    tx.send(Input::GatewayLine(id, line.to_string())).map_err(|e| e.to_string())?;
                }
            }
            Ok(Message::Binary(_)) => {
                tx.send(Input::GatewayLine(id, "<binary>".into())).map_err(|e| e.to_string())?;
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.to_string()),
        }
        let mut wrote = false;
        while let Ok(line) = out_rx.try_recv() {
            ws.write(Message::Text(line)).map_err(|e| e.to_string())?;
            wrote = true;
        }
        if wrote {
            ws.flush().map_err(|e| e.to_string())?;
        }
    }
}

struct EventLoop {
    socket: UdpSocket,
    relay: Relay<Endpoint>,
    agents: HashMap<u64, (GatewayAgent, Sender<String>)>,
    config: RelayConfig,
    start: Instant,
    stats: Arc<std::sync::Mutex<ServerStats>>,
}

impl EventLoop {
    fn new(socket: UdpSocket, config: RelayConfig, stats: Arc<std::sync::Mutex<ServerStats>>) -> Self {
        Self { socket, relay: Relay::new(config.clone()), agents: HashMap::new(), config, start: Instant::now(), stats }
    }

    fn now_us(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    fn run(mut self, rx: Receiver<Input>, stop: Arc<AtomicBool>) {
        let mut last_tick = Instant::now();
        while !stop.load(Ordering::SeqCst) {
            match rx.recv_timeout(TICK_INTERVAL) {
                Ok(input) => self.handle(input),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return,
            }
            if last_tick.elapsed() >= TICK_INTERVAL {
                last_tick = Instant::now();
                self.tick();
            }
            self.publish_stats();
        }
    }

    fn handle(&mut self, input: Input) {
        let now = self.now_us();
        match input {
            Input::Datagram(src, bytes) => {
                let out = self.relay.handle_datagram(Endpoint::Udp(src), &bytes, now);
                self.dispatch(out, now);
            }
            Input::GatewayOpen(id, sink) => {
                let agent = GatewayAgent::new(self.config.framer.clone(), self.config.limit);
                self.agents.insert(id, (agent, sink));
            }
            Input::GatewayLine(id, line) => {
                if let Some((agent, _)) = self.agents.get_mut(&id) {
                    let out = agent.handle_line(&line, now);
                    self.agent_output(id, out, now);
                }
            }
            Input::GatewayClosed(id) => {
                self.agents.remove(&id);
                let out = self.relay.remove_participant(&Endpoint::Gateway(id));
                self.dispatch(out, now);
            }
        }
    }

    fn tick(&mut self) {
        let now = self.now_us();
        let out = self.relay.tick(now);
        self.dispatch(out, now);
        let ids: Vec<u64> = self.agents.keys().copied().collect();
        for id in ids {
            let out = self.agents.get_mut(&id).map(|(a, _)| a.tick(now)).unwrap_or_default();
            self.agent_output(id, out, now);
        }
    }

    /// Sends an agent's events to its browser and its datagrams into the relay.
    fn agent_output(&mut self, id: u64, out: AgentOutput, now: u64) {
        if let Some((_, sink)) = self.agents.get(&id) {
            for e in &out.events {
                let _ = sink.send(e.to_line());
            }
        }
        for d in out.datagrams {
            let routed = self.relay.handle_datagram(Endpoint::Gateway(id), &d, now);
            self.dispatch(routed, now);
        }
    }

    fn dispatch(&mut self, out: Vec<Outgoing<Endpoint>>, now: u64) {
        let mut queue = std::collections::VecDeque::from(out);
        while let Some(o) = queue.pop_front() {
            match o.to {
                Endpoint::Udp(addr) => {
                    if let Err(e) = self.socket.send_to(&o.bytes, addr) {
                        debug!("udp send to {addr}: {e}");
                    }
                }
                Endpoint::Gateway(id) => {
                    let Some((agent, sink)) = self.agents.get_mut(&id) else { continue };
                    let r = agent.handle_datagram(&o.bytes, now);
                    for e in &r.events {
                        let _ = sink.send(e.to_line());
                    }
                    for d in r.datagrams {
                        queue.extend(self.relay.handle_datagram(Endpoint::Gateway(id), &d, now));
                    }
                }
            }
        }
    }

    fn publish_stats(&self) {
        let s = ServerStats {
            sessions: self.relay.sessions().count(),
            participants: self.relay.sessions().map(|s| s.participants().count()).sum(),
            gateway_connections: self.agents.len(),
            malformed: self.relay.malformed,
            violations: self.relay.sessions().map(|s| s.violations).sum(),
        };
        *self.stats.lock().expect("stats lock") = s;
    }
}
