//! TCP listener for bin uplinks: one reading per line in, one reply per line
//! out.

use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

use crate::Service;

/// Longest accepted line. A connection sending more without a newline is
/// closed, since there is no way to find the next frame.
pub const MAX_LINE: usize = 64 * 1024;

pub async fn accept_loop(listener: TcpListener, svc: Service) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let svc = svc.clone();
                tokio::spawn(async move {
                    if let Err(e) = handle(stream, svc).await {
                        tracing::debug!(%peer, "telemetry connection ended: {e}");
                    }
                });
            }
            Err(e) => tracing::warn!("telemetry accept failed: {e}"),
        }
    }
}

async fn handle(stream: TcpStream, svc: Service) -> std::io::Result<()> {
    let (rd, mut wr) = stream.into_split();
    let mut rd = BufReader::new(rd);
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = (&mut rd).take(MAX_LINE as u64 + 1).read_until(b'\n', &mut line).await?;
        if n == 0 {
            return Ok(());
        }
        if !line.ends_with(b"\n") && line.len() > MAX_LINE {
            wr.write_all(&crate::error_line("MALFORMED", &format!("line exceeds {MAX_LINE} bytes"))).await?;
            return Ok(());
        }
        let reply = svc.handle_line(&line);
        if !reply.is_empty() {
            wr.write_all(&reply).await?;
        }
    }
}
