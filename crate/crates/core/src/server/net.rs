//! Client connections: length-prefixed JSON over TCP, or the same payloads
//! as WebSocket text messages.

use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use tungstenite::Message;

use crate::protocol::{read_frame, write_frame, ClientMsg, ControlMsg, ProtocolError, ServerMsg};

/// Outgoing messages buffered per client before new ones are dropped.
const CLIENT_QUEUE: usize = 256;
const POLL: Duration = Duration::from_millis(5);

pub(crate) type ClientId = u64;

pub(crate) enum NetEvent {
    Joined { id: ClientId, tx: Sender<Arc<str>> },
    Control { id: ClientId, msg: ControlMsg },
    Left { id: ClientId },
}

pub(crate) fn spawn_acceptor(
    listener: TcpListener,
    events: Sender<NetEvent>,
    stop: Arc<AtomicBool>,
) -> io::Result<thread::JoinHandle<()>> {
    listener.set_nonblocking(true)?;
    thread::Builder::new().name("teletwin-accept".into()).spawn(move || {
        let mut next_id: ClientId = 1;
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let id = next_id;
                    next_id += 1;
                    let events = events.clone();
                    let stop = stop.clone();
                    let spawned = thread::Builder::new()
                        .name(format!("teletwin-client-{id}"))
                        .spawn(move || {
                            if let Err(e) = serve_client(id, stream, &events, &stop) {
                                log::debug!("client {id} ({peer}) closed: {e}");
                            }
                            let _ = events.send(NetEvent::Left { id });
                        });
                    if let Err(e) = spawned {
                        log::warn!("could not spawn client thread: {e}");
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    })
}

/// WebSocket clients open with an HTTP request; anything else is framed TCP.
fn is_websocket(stream: &TcpStream) -> io::Result<bool> {
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let mut head = [0u8; 4];
    let res = match stream.peek(&mut head) {
        Ok(n) => Ok(n == 4 && &head == b"GET "),
        Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(false),
        Err(e) => Err(e),
    };
    stream.set_read_timeout(None)?;
    res
}

fn serve_client(
    id: ClientId,
    stream: TcpStream,
    events: &Sender<NetEvent>,
    stop: &AtomicBool,
) -> Result<(), ProtocolError> {
    stream.set_nodelay(true)?;
    let (tx, rx) = bounded::<Arc<str>>(CLIENT_QUEUE);
    if events.send(NetEvent::Joined { id, tx }).is_err() {
        return Ok(());
    }
    if is_websocket(&stream)? {
        serve_websocket(id, stream, rx, events, stop)
    } else {
        serve_framed(id, stream, rx, events, stop)
    }
}

fn forward(id: ClientId, text: &str, events: &Sender<NetEvent>) -> bool {
    match ClientMsg::decode(text) {
        Ok(msg) => events
            .send(NetEvent::Control { id, msg })
            .is_ok(),
        Err(e) => {
            log::debug!("client {id}: dropped message: {e}");
            true
        }
    }
}

fn serve_framed(
    id: ClientId,
    stream: TcpStream,
    rx: Receiver<Arc<str>>,
    events: &Sender<NetEvent>,
    stop: &AtomicBool,
) -> Result<(), ProtocolError> {
    let write_half = stream.try_clone()?;
    let writer = thread::spawn(move || {
        let mut w = BufWriter::new(write_half);
        for msg in rx {
            if write_frame(&mut w, msg.as_bytes()).is_err() {
                break;
            }
        }
        if let Ok(s) = w.into_inner() {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
    });
    let mut r = BufReader::new(stream);
    let res = loop {
        if stop.load(Ordering::Relaxed) {
            break Ok(());
        }
        match read_frame(&mut r) {
            Ok(Some(bytes)) => {
                let text = String::from_utf8_lossy(&bytes);
                if !forward(id, &text, events) {
                    break Ok(());
                }
            }
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        }
    };
    let _ = r.get_ref().shutdown(std::net::Shutdown::Both);
    let _ = writer.join();
    res
}

fn serve_websocket(
    id: ClientId,
    stream: TcpStream,
    rx: Receiver<Arc<str>>,
    events: &Sender<NetEvent>,
    stop: &AtomicBool,
) -> Result<(), ProtocolError> {
    let mut ws = tungstenite::accept(stream).map_err(|e| ProtocolError::Invalid(format!("handshake: {e}")))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let ws_err = |e: tungstenite::Error| ProtocolError::Invalid(format!("websocket: {e}"));
    loop {
        if stop.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            return Ok(());
        }
        loop {
            match rx.try_recv() {
                Ok(msg) => ws.send(Message::text(msg.as_ref())).map_err(ws_err)?,
                Err(crossbeam_channel::TryRecvError::Empty) => break,
                Err(crossbeam_channel::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    return Ok(());
                }
            }
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                if !forward(id, t.as_str(), events) {
                    return Ok(());
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(ws_err(e)),
        }
    }
}

/// Queues `msg` for a client; `false` once the client is gone.
pub(crate) fn offer(tx: &Sender<Arc<str>>, msg: &Arc<str>) -> bool {
    match tx.try_send(msg.clone()) {
        Ok(()) | Err(TrySendError::Full(_)) => true,
        Err(TrySendError::Disconnected(_)) => false,
    }
}

/// Blocking client for the framed TCP transport.
pub struct TcpClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        Ok(TcpClient {
            writer: BufWriter::new(s.try_clone()?),
            reader: BufReader::new(s),
        })
    }

    pub fn peer_addr(&self) -> io::Result<SocketAddr> {
        self.reader.get_ref().peer_addr()
    }

    pub fn send(&mut self, msg: &ControlMsg) -> Result<(), ProtocolError> {
        let text = crate::protocol::encode(&ClientMsg::control(msg.clone()))?;
        write_frame(&mut self.writer, text.as_bytes())
    }

    /// Next server message; `None` when the server closed the connection.
    pub fn recv(&mut self) -> Result<Option<ServerMsg>, ProtocolError> {
        match read_frame(&mut self.reader)? {
            Some(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            None => Ok(None),
        }
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.reader.get_ref().set_read_timeout(t)
    }
}
