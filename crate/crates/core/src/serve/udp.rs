//! Rate-paced UDP emission of a transport stream, seven packets per datagram.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::{Duration, Instant};

use crate::mpegts::{TsError, TS_PACKET_SIZE};

use super::ServeError;

pub const DATAGRAM_SIZE: usize = 7 * TS_PACKET_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UdpStats {
    pub datagrams: u64,
    pub bytes: u64,
    pub elapsed: Duration,
}

/// Send `packets` to `dest`, releasing each datagram when the bytes before it
/// have taken `bytes * 8 / rate_bps` seconds at the target rate.
pub fn udp_emit<I>(packets: I, rate_bps: u64, dest: &str) -> Result<UdpStats, ServeError>
where
    I: IntoIterator<Item = Result<[u8; TS_PACKET_SIZE], TsError>>,
{
    let target: SocketAddr = dest
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("cannot resolve {dest}")))?;
    let local = if target.is_ipv6() { "[::]:0" } else { "0.0.0.0:0" };
    let socket = UdpSocket::bind(local)?;
    if rate_bps == 0 {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "rate must be positive").into());
    }

    let start = Instant::now();
    let mut stats = UdpStats { datagrams: 0, bytes: 0, elapsed: Duration::ZERO };
    let mut buf = Vec::with_capacity(DATAGRAM_SIZE);
    let send = |buf: &mut Vec<u8>, stats: &mut UdpStats| -> Result<(), ServeError> {
        let due = Duration::from_nanos((stats.bytes as u128 * 8 * 1_000_000_000 / rate_bps as u128) as u64);
        if let Some(wait) = due.checked_sub(start.elapsed()) {
            std::thread::sleep(wait);
        }
        socket.send_to(buf, target)?;
        stats.datagrams += 1;
        stats.bytes += buf.len() as u64;
        buf.clear();
        Ok(())
    };
    for p in packets {
        buf.extend_from_slice(&p?);
        if buf.len() == DATAGRAM_SIZE {
            send(&mut buf, &mut stats)?;
        }
    }
    if !buf.is_empty() {
        send(&mut buf, &mut stats)?;
    }
    stats.elapsed = start.elapsed();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpegts::TsPacket;

    #[test]
    fn datagram_sizes_and_order() {
        let rx = UdpSocket::bind("127.0.0.1:0").unwrap();
        rx.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        let packets: Vec<[u8; 188]> = (0..30u8)
            .map(|i| {
                let mut p = TsPacket::null().serialize();
                p[187] = i;
                p
            })
            .collect();
        let stats = udp_emit(packets.iter().copied().map(Ok), 8_000_000, &rx.local_addr().unwrap().to_string()).unwrap();
        assert_eq!(stats.datagrams, 5);
        let mut got = Vec::new();
        let mut sizes = Vec::new();
        let mut buf = [0u8; 2048];
        for _ in 0..5 {
            let n = rx.recv(&mut buf).unwrap();
            sizes.push(n);
            got.extend_from_slice(&buf[..n]);
        }
        assert_eq!(sizes, [1316, 1316, 1316, 1316, 2 * 188]);
        let order: Vec<u8> = got.chunks(188).map(|c| c[187]).collect();
        assert_eq!(order, (0..30).collect::<Vec<u8>>());
    }
}
