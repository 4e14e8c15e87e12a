//! TCP front end. Each connection gets a reader that executes requests in
//! arrival order and a writer that sends responses as they complete, so a
//! slow render never blocks later queries on the same socket.

use std::io::{self, Read};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::dispatch::{Dispatcher, Prepared};
use crate::protocol::{parse_request, write_frame, FrameDecoder, FrameError, Response, MAX_FRAME};

const POLL: Duration = Duration::from_millis(50);
/// Deferred jobs one connection may have in flight before its reader waits.
pub const MAX_IN_FLIGHT: usize = 16;

#[derive(Clone)]
pub struct ShutdownHandle {
    flag: Arc<AtomicBool>,
}

impl ShutdownHandle {
    /// Stops accepting and reading; in-flight requests still get answers.
    pub fn shutdown(&self) {
        self.flag.store(true, Ordering::SeqCst);
    }

    pub fn is_shutdown(&self) -> bool {
        self.flag.load(Ordering::SeqCst)
    }
}

pub struct Server {
    listener: TcpListener,
    dispatcher: Arc<Dispatcher>,
    shutdown: ShutdownHandle,
}

pub struct RunningServer {
    pub addr: SocketAddr,
    pub handle: ShutdownHandle,
    join: JoinHandle<io::Result<()>>,
}

impl RunningServer {
    /// Requests shutdown and waits for every connection to drain.
    pub fn stop(self) -> io::Result<()> {
        self.handle.shutdown();
        self.join.join().expect("server thread panicked")
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, dispatcher: Arc<Dispatcher>) -> io::Result<Server> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Server { listener, dispatcher, shutdown: ShutdownHandle { flag: Arc::new(AtomicBool::new(false)) } })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.shutdown.clone()
    }

    /// Serves on a background thread.
    pub fn spawn(self) -> RunningServer {
        let addr = self.local_addr();
        let handle = self.shutdown_handle();
        RunningServer { addr, handle, join: thread::spawn(move || self.run()) }
    }

    /// Accepts until shutdown, then waits for open connections to finish.
    pub fn run(self) -> io::Result<()> {
        let mut conns: Vec<JoinHandle<()>> = Vec::new();
        while !self.shutdown.is_shutdown() {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    log::debug!("connection from {peer}");
                    let d = Arc::clone(&self.dispatcher);
                    let s = self.shutdown.clone();
                    conns.push(thread::spawn(move || {
                        if let Err(e) = connection(stream, d, s) {
                            log::debug!("connection {peer} ended: {e}");
                        }
                    }));
                    conns.retain(|c| !c.is_finished());
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        for c in conns {
            let _ = c.join();
        }
        Ok(())
    }
}

fn encode(resp: Response) -> Vec<u8> {
    let bytes = resp.to_bytes();
    if bytes.len() <= MAX_FRAME {
        return bytes;
    }
    Response::error(resp.id, "response_too_large", format!("response of {} bytes exceeds the frame limit", bytes.len()))
        .to_bytes()
}

fn connection(stream: TcpStream, dispatcher: Arc<Dispatcher>, shutdown: ShutdownHandle) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let mut out = stream.try_clone()?;
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let writer = thread::spawn(move || {
        let mut broken = false;
        for bytes in rx {
            // After a failed write keep draining so job threads never block.
            if !broken && write_frame(&mut out, &bytes).is_err() {
                broken = true;
            }
        }
    });

    let mut jobs: Vec<JoinHandle<()>> = Vec::new();
    let mut dec = FrameDecoder::default();
    let mut buf = vec![0u8; 64 * 1024];
    let result = 'conn: loop {
        loop {
            let frame = match dec.next_frame() {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(e) => {
                    let _ = tx.send(Response::error(None, "frame_too_large", e.to_string()).to_bytes());
                    break 'conn Err(io::Error::new(io::ErrorKind::InvalidData, e.to_string()));
                }
            };
            let req = match parse_request(&frame) {
                Ok(r) => r,
                Err(resp) => {
                    let _ = tx.send(resp.to_bytes());
                    continue;
                }
            };
            match dispatcher.prepare(&req) {
                Prepared::Ready(r) => {
                    let _ = tx.send(encode(r));
                }
                Prepared::Deferred(job) => {
                    jobs.retain(|j| !j.is_finished());
                    if jobs.len() >= MAX_IN_FLIGHT {
                        let _ = jobs.remove(0).join();
                    }
                    let tx = tx.clone();
                    jobs.push(thread::spawn(move || {
                        let _ = tx.send(encode(job()));
                    }));
                }
            }
        }
        if shutdown.is_shutdown() {
            break Ok(());
        }
        match reader.read(&mut buf) {
            Ok(0) if dec.is_idle() => break Ok(()),
            Ok(0) => break Err(io::Error::new(io::ErrorKind::UnexpectedEof, FrameError::Truncated.to_string())),
            Ok(n) => dec.push(&buf[..n]),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted) => {}
            Err(e) => break Err(e),
        }
    };
    for j in jobs {
        let _ = j.join();
    }
    drop(tx);
    let _ = writer.join();
    let _ = stream.shutdown(Shutdown::Both);
    result
}
