//! Message transports and the per-party mailbox.

use std::collections::{BTreeMap, HashMap};
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{read_frame, write_frame, Body, Envelope, PartyRole};
use super::ProtocolError;

/// Moves JSON payloads between parties. Receiving is from any peer.
pub trait Transport: Send {
    fn send(&mut self, to: PartyRole, payload: Vec<u8>) -> Result<(), ProtocolError>;
    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, ProtocolError>;
}

type Inbound = Result<Vec<u8>, ProtocolError>;

pub struct InProcessTransport {
    inbox: Receiver<Inbound>,
    peers: HashMap<PartyRole, Sender<Inbound>>,
}

/// One connected transport per role.
pub fn in_process_network(roles: &[PartyRole]) -> BTreeMap<PartyRole, InProcessTransport> {
    let (senders, receivers): (HashMap<_, _>, Vec<_>) = roles
        .iter()
        .map(|&r| {
            let (tx, rx) = mpsc::channel();
            ((r, tx), (r, rx))
        })
        .unzip();
    receivers
        .into_iter()
        .map(|(role, inbox)| (role, InProcessTransport { inbox, peers: senders.clone() }))
        .collect()
}

impl Transport for InProcessTransport {
    fn send(&mut self, to: PartyRole, payload: Vec<u8>) -> Result<(), ProtocolError> {
        let peer = self.peers.get(&to).ok_or(ProtocolError::UnknownPeer(to))?;
        // A peer that already finished has dropped its inbox; nothing waits for this.
        let _ = peer.send(Ok(payload));
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, ProtocolError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(msg) => msg.map(Some),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::Io("all peers gone".into())),
        }
    }
}

/// Full mesh over TCP. Each party listens on its own endpoint and opens an
/// outgoing connection to a peer on first send, retrying until the connect
/// timeout while the peer starts up.
pub struct TcpTransport {
    endpoints: BTreeMap<PartyRole, SocketAddr>,
    outgoing: HashMap<PartyRole, TcpStream>,
    inbox: Receiver<Inbound>,
    connect_timeout: Duration,
}

impl TcpTransport {
    pub fn bind(
        me: PartyRole,
        endpoints: BTreeMap<PartyRole, SocketAddr>,
        connect_timeout: Duration,
    ) -> Result<Self, ProtocolError> {
        let addr = *endpoints.get(&me).ok_or(ProtocolError::UnknownPeer(me))?;
        let listener = TcpListener::bind(addr).map_err(|e| ProtocolError::Io(format!("bind {addr}: {e}")))?;
        Ok(Self::with_listener(listener, endpoints, connect_timeout))
    }

    pub fn with_listener(
        listener: TcpListener,
        endpoints: BTreeMap<PartyRole, SocketAddr>,
        connect_timeout: Duration,
    ) -> Self {
        let (tx, inbox) = mpsc::channel();
        thread::spawn(move || accept_loop(listener, tx));
        Self { endpoints, outgoing: HashMap::new(), inbox, connect_timeout }
    }

    fn connect(&self, to: PartyRole) -> Result<TcpStream, ProtocolError> {
        let addr = *self.endpoints.get(&to).ok_or(ProtocolError::UnknownPeer(to))?;
        let deadline = Instant::now() + self.connect_timeout;
        loop {
            match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
                Ok(stream) => {
                    let _ = stream.set_nodelay(true);
                    return Ok(stream);
                }
                Err(e) if Instant::now() >= deadline => {
                    return Err(if e.kind() == ErrorKind::ConnectionRefused {
                        ProtocolError::ConnectionRefused { peer: to, addr: addr.to_string() }
                    } else {
                        ProtocolError::Io(format!("connect {to} at {addr}: {e}"))
                    });
                }
                Err(_) => thread::sleep(Duration::from_millis(50)),
            }
        }
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Inbound>) {
    for stream in listener.incoming() {
        let Ok(mut stream) = stream else { continue };
        let tx = tx.clone();
        thread::spawn(move || loop {
            match read_frame(&mut stream) {
                Ok(Some(payload)) => {
                    if tx.send(Ok(payload)).is_err() {
                        return;
                    }
                }
                Ok(None) => return,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        });
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, to: PartyRole, payload: Vec<u8>) -> Result<(), ProtocolError> {
        if !self.outgoing.contains_key(&to) {
            let stream = self.connect(to)?;
            self.outgoing.insert(to, stream);
        }
        let stream = self.outgoing.get_mut(&to).expect("just inserted");
        write_frame(stream, &payload).map_err(|e| ProtocolError::Io(format!("send to {to}: {e}")))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, ProtocolError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(msg) => msg.map(Some),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::Io("listener stopped".into())),
        }
    }
}

/// Validates incoming envelopes, buffers ones that arrive early and keeps
/// the party's view of the session.
pub(crate) struct Mailbox {
    transport: Box<dyn Transport>,
    me: PartyRole,
    session: String,
    round_timeout: Duration,
    pending: Vec<Envelope>,
    pub(crate) log: Vec<Envelope>,
}

impl Mailbox {
    pub(crate) fn new(transport: Box<dyn Transport>, me: PartyRole, session: &str, round_timeout: Duration) -> Self {
        Self { transport, me, session: session.to_owned(), round_timeout, pending: Vec::new(), log: Vec::new() }
    }

    pub(crate) fn send(&mut self, to: PartyRole, body: Body) -> Result<(), ProtocolError> {
        let env = Envelope::new(&self.session, self.me, to, body);
        self.transport.send(to, env.to_json())?;
        self.log.push(env);
        Ok(())
    }

    /// Next message from `from` whose body satisfies `accept`, waiting at
    /// most one round timeout.
    pub(crate) fn expect<F: Fn(&Body) -> bool>(
        &mut self,
        from: PartyRole,
        what: &str,
        accept: F,
    ) -> Result<Body, ProtocolError> {
        let deadline = Instant::now() + self.round_timeout;
        loop {
            if let Some(pos) = self.pending.iter().position(|e| e.from == from && accept(&e.body)) {
                let env = self.pending.remove(pos);
                let body = env.body.clone();
                self.log.push(env);
                return Ok(body);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ProtocolError::Timeout { role: self.me, waiting_for: format!("{what} from {from}") });
            }
            if let Some(payload) = self.transport.recv(deadline - now)? {
                let env = Envelope::from_json(&payload)?;
                if env.session != self.session {
                    return Err(ProtocolError::Malformed(format!(
                        "message for session {:?} in session {:?}",
                        env.session, self.session
                    )));
                }
                if env.to != self.me {
                    return Err(ProtocolError::Malformed(format!("{} received a message for {}", self.me, env.to)));
                }
                self.pending.push(env);
            }
        }
    }
}
