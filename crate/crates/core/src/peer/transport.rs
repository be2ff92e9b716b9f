//! Byte-stream transports a peer session can run over.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::time::Duration;

use super::PeerConfig;

/// A bidirectional byte stream with a settable read timeout. Reads that hit
/// the timeout fail with `TimedOut` or `WouldBlock`.
pub trait Transport: Read + Write + Send {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()>;
}

impl Transport for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        (**self).set_read_timeout(timeout)
    }
}

/// One end of an in-process duplex pipe.
pub struct MemoryStream {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    pending: VecDeque<u8>,
    timeout: Option<Duration>,
}

/// Two connected in-memory stream ends.
pub fn memory_pair() -> (MemoryStream, MemoryStream) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    let mk = |tx, rx| MemoryStream {
        tx: Some(tx),
        rx,
        pending: VecDeque::new(),
        timeout: None,
    };
    (mk(a_tx, a_rx), mk(b_tx, b_rx))
}

impl MemoryStream {
    /// Close the sending half; the peer sees end-of-stream once drained.
    pub fn shutdown(&mut self) {
        self.tx = None;
    }
}

impl Read for MemoryStream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        if self.pending.is_empty() {
            let chunk = match self.timeout {
                Some(t) if t.is_zero() => match self.rx.try_recv() {
                    Ok(c) => c,
                    Err(TryRecvError::Empty) => return Err(io::ErrorKind::WouldBlock.into()),
                    Err(TryRecvError::Disconnected) => return Ok(0),
                },
                Some(t) => match self.rx.recv_timeout(t) {
                    Ok(c) => c,
                    Err(RecvTimeoutError::Timeout) => return Err(io::ErrorKind::TimedOut.into()),
                    Err(RecvTimeoutError::Disconnected) => return Ok(0),
                },
                None => match self.rx.recv() {
                    Ok(c) => c,
                    Err(_) => return Ok(0),
                },
            };
            self.pending.extend(chunk);
        }
        let n = buf.len().min(self.pending.len());
        for (dst, src) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

impl Write for MemoryStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let tx = self.tx.as_ref().ok_or(io::ErrorKind::BrokenPipe)?;
        tx.send(buf.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Transport for MemoryStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        self.timeout = timeout;
        Ok(())
    }
}

/// Opens transports to peers named in a [`PeerConfig`].
pub trait Connector: Sync {
    fn connect(&self, config: &PeerConfig) -> io::Result<Box<dyn Transport>>;
}

/// Plain TCP, bounded by the config's handshake timeout.
#[derive(Debug, Clone, Copy, Default)]
pub struct TcpConnector;

impl Connector for TcpConnector {
    fn connect(&self, config: &PeerConfig) -> io::Result<Box<dyn Transport>> {
        let mut last_err = io::Error::new(io::ErrorKind::NotFound, "address resolved to nothing");
        for addr in config.address.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, config.handshake_timeout) {
                Ok(s) => {
                    s.set_nodelay(true)?;
                    return Ok(Box::new(s));
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }
}
