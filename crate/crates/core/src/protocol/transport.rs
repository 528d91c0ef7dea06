//! Line transports: a child process's standard streams, a TCP socket, or an
//! in-process server.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::server::{ModelServer, Session};
use super::{Endpoint, ProtocolError};

pub trait Transport: Send {
    /// Sends one record line; `line` carries no newline.
    fn send(&mut self, line: &str) -> Result<(), ProtocolError>;

    /// Next line from the peer, without its newline.
    fn recv(&mut self, timeout: Duration) -> Result<String, ProtocolError>;
}

/// Writer plus a background reader thread feeding a channel, so that reads
/// can time out.
struct Lines {
    writer: Box<dyn Write + Send>,
    rx: Receiver<std::io::Result<String>>,
}

impl Lines {
    fn new(reader: impl Read + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Lines {
            writer: Box::new(writer),
            rx,
        }
    }

    fn send(&mut self, line: &str) -> Result<(), ProtocolError> {
        let r = self
            .writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush());
        match r {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Err(ProtocolError::Closed),
            r => Ok(r?),
        }
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, ProtocolError> {
        match self.rx.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line.strip_suffix('\r').map(str::to_string).unwrap_or(line)),
            Ok(Err(e)) => Err(e.into()),
            Err(RecvTimeoutError::Timeout) => Err(ProtocolError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::Closed),
        }
    }
}

/// A server launched as a child process. On drop its standard input is
/// closed; a child still running after [`CHILD_GRACE`] is killed.
pub struct ChildTransport {
    child: Child,
    lines: Lines,
}

impl ChildTransport {
    pub fn spawn(argv: &[String]) -> Result<Self, ProtocolError> {
        let (prog, args) = argv
            .split_first()
            .ok_or_else(|| ProtocolError::Config("empty command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ChildTransport {
            child,
            lines: Lines::new(stdout, stdin),
        })
    }
}

impl Transport for ChildTransport {
    fn send(&mut self, line: &str) -> Result<(), ProtocolError> {
        self.lines.send(line)
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, ProtocolError> {
        self.lines.recv(timeout)
    }
}

pub const CHILD_GRACE: Duration = Duration::from_secs(2);

impl Drop for ChildTransport {
    fn drop(&mut self) {
        self.lines.writer = Box::new(std::io::sink());
        let deadline = Instant::now() + CHILD_GRACE;
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                _ => return,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct TcpTransport {
    stream: TcpStream,
    lines: Lines,
}

impl TcpTransport {
    /// Retries refused connections until `timeout` has elapsed.
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, ProtocolError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ProtocolError::Timeout(timeout));
            }
            let addrs: Vec<_> = addr.to_socket_addrs()?.collect();
            let attempt = addrs
                .iter()
                .find_map(|a| TcpStream::connect_timeout(a, left).ok());
            if let Some(stream) = attempt {
                stream.set_nodelay(true)?;
                let lines = Lines::new(stream.try_clone()?, stream.try_clone()?);
                return Ok(TcpTransport { stream, lines });
            }
            thread::sleep(left.min(Duration::from_millis(50)));
        }
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, line: &str) -> Result<(), ProtocolError> {
        self.lines.send(line)
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, ProtocolError> {
        self.lines.recv(timeout)
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

/// Runs a server in the caller's thread. Records still travel as JSON text.
pub struct InProcess<S: ModelServer> {
    pub session: Session<S>,
    queue: VecDeque<String>,
}

impl<S: ModelServer> InProcess<S> {
    pub fn new(server: S) -> Self {
        InProcess {
            session: Session::new(server),
            queue: VecDeque::new(),
        }
    }
}

impl<S: ModelServer + Send> Transport for InProcess<S> {
    fn send(&mut self, line: &str) -> Result<(), ProtocolError> {
        self.queue.push_back(self.session.respond(line));
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, ProtocolError> {
        self.queue
            .pop_front()
            .ok_or(ProtocolError::Timeout(timeout))
    }
}

pub fn connect(
    endpoint: &Endpoint,
    timeout: Duration,
) -> Result<Box<dyn Transport>, ProtocolError> {
    Ok(match endpoint {
        Endpoint::Command(argv) => Box::new(ChildTransport::spawn(argv)?),
        Endpoint::Tcp(addr) => Box::new(TcpTransport::connect(addr, timeout)?),
        Endpoint::InProcess => {
            return Err(ProtocolError::Config(
                "an in-process endpoint needs a server object".into(),
            ))
        }
    })
}
