//! UDP loopback endpoint: one non-blocking socket per node.

use std::collections::HashMap;
use std::io;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, UdpSocket};
use std::os::fd::AsRawFd;
use std::time::{Duration, Instant};

use bytes::Bytes;
use socket2::{Domain, Protocol, Socket, Type};

use super::wire::MAX_UDP_DATAGRAM;
use super::{Endpoint, Inbound, TransportError};
use crate::model::NodeId;

pub const DEFAULT_SOCKET_BUFFER: usize = 4 * 1024 * 1024;
/// How long a sender waits on a full send buffer before reporting failure.
const SEND_STALL_LIMIT: Duration = Duration::from_secs(1);

#[derive(Debug)]
pub struct UdpEndpoint {
    node: NodeId,
    socket: UdpSocket,
    peers: Vec<SocketAddr>,
    by_addr: HashMap<SocketAddr, NodeId>,
    recv_buf: Vec<u8>,
    stash: Option<Inbound>,
}

impl UdpEndpoint {
    /// Binds `127.0.0.1:port` (0 for an ephemeral port) with enlarged socket buffers.
    pub fn bind(node: NodeId, port: u16, buffer_bytes: usize) -> io::Result<UdpEndpoint> {
        let socket = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
        grow_buffers(&socket, buffer_bytes);
        socket.bind(&SocketAddr::V4(SocketAddrV4::new(Ipv4Addr::LOCALHOST, port)).into())?;
        socket.set_nonblocking(true)?;
        Ok(UdpEndpoint {
            node,
            socket: socket.into(),
            peers: Vec::new(),
            by_addr: HashMap::new(),
            recv_buf: vec![0u8; 65_536],
            stash: None,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Installs the address table, indexed by node id.
    pub fn set_peers(&mut self, peers: Vec<SocketAddr>) {
        self.by_addr = peers
            .iter()
            .enumerate()
            .map(|(i, a)| (*a, i as NodeId))
            .collect();
        self.peers = peers;
    }

    fn recv_now(&mut self) -> Result<Option<Inbound>, TransportError> {
        loop {
            match self.socket.recv_from(&mut self.recv_buf) {
                Ok((len, from)) => {
                    let Some(&source) = self.by_addr.get(&from) else {
                        // stray datagram from outside the run
                        continue;
                    };
                    return Ok(Some(Inbound {
                        source,
                        datagram: Bytes::copy_from_slice(&self.recv_buf[..len]),
                    }));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return Ok(None),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(TransportError::Io(e)),
            }
        }
    }
}

impl Endpoint for UdpEndpoint {
    fn node_id(&self) -> NodeId {
        self.node
    }

    fn send(&mut self, dest: NodeId, datagram: &Bytes, _now_ns: u64) -> Result<(), TransportError> {
        if datagram.len() > MAX_UDP_DATAGRAM {
            return Err(TransportError::DatagramTooLarge(datagram.len()));
        }
        let addr = *self
            .peers
            .get(dest as usize)
            .ok_or(TransportError::UnknownPeer(dest))?;
        let started = Instant::now();
        loop {
            match self.socket.send_to(datagram, addr) {
                Ok(_) => return Ok(()),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if started.elapsed() > SEND_STALL_LIMIT {
                        return Err(TransportError::Io(e));
                    }
                    poll_fd(&self.socket, libc::POLLOUT, Duration::from_millis(10))?;
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(TransportError::Io(e)),
            }
        }
    }

    fn try_recv(&mut self, _now_ns: u64) -> Result<Option<Inbound>, TransportError> {
        if let Some(inbound) = self.stash.take() {
            return Ok(Some(inbound));
        }
        self.recv_now()
    }

    fn wait(&mut self, timeout: Duration) -> Result<(), TransportError> {
        if self.stash.is_some() {
            return Ok(());
        }
        if poll_fd(&self.socket, libc::POLLIN, timeout)? {
            self.stash = self.recv_now()?;
        }
        Ok(())
    }
}

/// Waits for `events` on the socket with nanosecond timeout resolution.
fn poll_fd(socket: &UdpSocket, events: libc::c_short, timeout: Duration) -> io::Result<bool> {
    let mut fd = libc::pollfd {
        fd: socket.as_raw_fd(),
        events,
        revents: 0,
    };
    let ts = libc::timespec {
        tv_sec: timeout.as_secs() as libc::time_t,
        tv_nsec: timeout.subsec_nanos() as libc::c_long,
    };
    // SAFETY: `fd` and `ts` are valid for the duration of the call and the
    // descriptor is owned by `socket`.
    let rc = unsafe { libc::ppoll(&mut fd, 1, &ts, std::ptr::null()) };
    match rc {
        -1 => {
            let err = io::Error::last_os_error();
            if err.kind() == io::ErrorKind::Interrupted {
                Ok(false)
            } else {
                Err(err)
            }
        }
        0 => Ok(false),
        _ => Ok(true),
    }
}

/// Requests `bytes` for both buffers. The kernel caps the plain request at
/// `rmem_max`/`wmem_max`; privileged processes may exceed it with the FORCE
/// variants. Failures leave the kernel default in place.
fn grow_buffers(socket: &Socket, bytes: usize) {
    let _ = socket.set_recv_buffer_size(bytes);
    let _ = socket.set_send_buffer_size(bytes);
    let value = bytes.min(i32::MAX as usize) as libc::c_int;
    for (have, opt) in [
        (socket.recv_buffer_size(), libc::SO_RCVBUFFORCE),
        (socket.send_buffer_size(), libc::SO_SNDBUFFORCE),
    ] {
        if have.map(|h| h < bytes).unwrap_or(true) {
            // SAFETY: plain setsockopt with an int-sized option value.
            unsafe {
                libc::setsockopt(
                    socket.as_raw_fd(),
                    libc::SOL_SOCKET,
                    opt,
                    &value as *const libc::c_int as *const libc::c_void,
                    std::mem::size_of::<libc::c_int>() as libc::socklen_t,
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_roundtrip() {
        let mut a = UdpEndpoint::bind(0, 0, DEFAULT_SOCKET_BUFFER).unwrap();
        let mut b = UdpEndpoint::bind(1, 0, DEFAULT_SOCKET_BUFFER).unwrap();
        let peers = vec![a.local_addr().unwrap(), b.local_addr().unwrap()];
        a.set_peers(peers.clone());
        b.set_peers(peers);

        assert!(b.try_recv(0).unwrap().is_none());
        let msg = Bytes::from(vec![9u8; 60_000]);
        a.send(1, &msg, 0).unwrap();
        b.wait(Duration::from_secs(2)).unwrap();
        let got = b.try_recv(0).unwrap().expect("datagram");
        assert_eq!(got.source, 0);
        assert_eq!(got.datagram, msg);
    }

    #[test]
    fn oversize_and_unknown_peer() {
        let mut a = UdpEndpoint::bind(0, 0, 0).unwrap();
        a.set_peers(vec![a.local_addr().unwrap()]);
        let big = Bytes::from(vec![0u8; MAX_UDP_DATAGRAM + 1]);
        assert!(matches!(
            a.send(0, &big, 0),
            Err(TransportError::DatagramTooLarge(_))
        ));
        assert!(matches!(
            a.send(3, &Bytes::new(), 0),
            Err(TransportError::UnknownPeer(3))
        ));
    }

    #[test]
    fn wait_times_out() {
        let mut a = UdpEndpoint::bind(0, 0, 0).unwrap();
        let start = Instant::now();
        a.wait(Duration::from_millis(20)).unwrap();
        assert!(start.elapsed() >= Duration::from_millis(15));
        assert!(a.try_recv(0).unwrap().is_none());
    }

    #[test]
    fn port_in_use_fails() {
        let a = UdpEndpoint::bind(0, 0, 0).unwrap();
        let port = a.local_addr().unwrap().port();
        assert!(UdpEndpoint::bind(1, port, 0).is_err());
    }
}
