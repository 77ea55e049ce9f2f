//! One handshake per TCP connection, one frame per message.

use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use lsrp_core::credstore::CredentialStore;
use lsrp_core::sampler::fresh_seed;
use lsrp_core::srp::{ClientSession, ProtocolContext, ProtocolError, ServerSession};
use lsrp_core::wire::{read_message, write_message, FrameError, WireMessage};

use crate::{io_err, parse_addr, CliError};

pub const ERR_MALFORMED: u8 = 1;
pub const ERR_AUTH: u8 = 2;
pub const ERR_SEQUENCE: u8 = 3;
pub const ERR_INTERNAL: u8 = 4;

const IO_TIMEOUT: Duration = Duration::from_secs(30);
const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

fn log(line: String) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn send_error(stream: &mut TcpStream, code: u8, message: &str) {
    let _ = write_message(
        stream,
        &WireMessage::Error {
            code,
            message: message.to_string(),
        },
    );
}

/// Accepts connections forever, each on its own thread.
pub fn serve(
    ctx: Arc<ProtocolContext>,
    store: Arc<CredentialStore>,
    listen: &str,
) -> Result<(), CliError> {
    let listener = TcpListener::bind(listen).map_err(io_err(format!("binding {listen}")))?;
    let local = listener
        .local_addr()
        .map_err(io_err("reading local address"))?;
    let decoy_secret = Arc::new(fresh_seed().map_err(ProtocolError::from)?);
    log(format!("listening on {local} ({} ids)", store.len()));
    for conn in listener.incoming() {
        let mut stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log(format!("accept failed: {e}"));
                continue;
            }
        };
        let (ctx, store, decoy_secret) = (ctx.clone(), store.clone(), decoy_secret.clone());
        thread::spawn(move || {
            let peer = stream
                .peer_addr()
                .map_or_else(|_| "?".to_string(), |a| a.to_string());
            let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
            let _ = stream.set_write_timeout(Some(IO_TIMEOUT));
            log(handle(&ctx, &store, &decoy_secret[..], &mut stream, &peer));
        });
    }
    Ok(())
}

fn frame_failure(stream: &mut TcpStream, peer: &str, e: FrameError) -> String {
    if let FrameError::Wire(w) = &e {
        send_error(stream, ERR_MALFORMED, &w.to_string());
    }
    format!("rejected peer={peer} reason=\"{e}\"")
}

fn handle(
    ctx: &Arc<ProtocolContext>,
    store: &CredentialStore,
    decoy_secret: &[u8],
    stream: &mut TcpStream,
    peer: &str,
) -> String {
    let hello = match read_message(stream) {
        Ok(msg) => match msg.into_hello() {
            Some(h) => h,
            None => {
                send_error(stream, ERR_SEQUENCE, "expected Hello");
                return format!("rejected peer={peer} reason=\"expected Hello\"");
            }
        },
        Err(e) => return frame_failure(stream, peer, e),
    };
    let id = String::from_utf8_lossy(&hello.id).into_owned();
    let session = match store.get(&hello.id) {
        Some(record) => ServerSession::new(ctx.clone(), record),
        None => ServerSession::decoy(ctx.clone(), &hello.id, decoy_secret),
    };
    let mut session = match session {
        Ok(s) => s,
        Err(e) => {
            send_error(stream, ERR_INTERNAL, "internal error");
            return format!("error peer={peer} id={id} reason=\"{e}\"");
        }
    };
    let challenge = match session.respond(&hello) {
        Ok(c) => c,
        Err(e) => {
            send_error(stream, ERR_MALFORMED, &e.to_string());
            return format!("rejected peer={peer} id={id} reason=\"{e}\"");
        }
    };
    if let Err(e) = write_message(stream, &challenge.into()) {
        return format!("error peer={peer} id={id} reason=\"{e}\"");
    }
    let m1 = match read_message(stream) {
        Ok(WireMessage::ConfirmC(tag)) => tag,
        Ok(_) => {
            send_error(stream, ERR_SEQUENCE, "expected ConfirmC");
            return format!("rejected peer={peer} id={id} reason=\"expected ConfirmC\"");
        }
        Err(e) => return frame_failure(stream, peer, e),
    };
    match session.confirm_client(&m1) {
        Ok(m2) => {
            let digest = session
                .session_key()
                .map(|k| k.digest())
                .unwrap_or_default();
            if let Err(e) = write_message(stream, &WireMessage::ConfirmS(m2)) {
                return format!("error peer={peer} id={id} reason=\"{e}\"");
            }
            format!("auth ok peer={peer} id={id} key_digest={digest}")
        }
        Err(e) => {
            send_error(stream, ERR_AUTH, "verification failed");
            format!("auth failed peer={peer} id={id} reason=\"{e}\"")
        }
    }
}

fn server_reply(stream: &mut TcpStream) -> Result<WireMessage, CliError> {
    match read_message(stream)? {
        WireMessage::Error { code: ERR_AUTH, .. } => Err(CliError::VerificationFailed),
        WireMessage::Error { code, message } => {
            Err(CliError::Rejected(format!("code {code}: {message}")))
        }
        msg => Ok(msg),
    }
}

/// Runs the client side against `server` and returns the session-key digest.
pub fn login(
    ctx: Arc<ProtocolContext>,
    id: &str,
    password: &[u8],
    server: &str,
) -> Result<String, CliError> {
    let addr = parse_addr(server)?;
    let mut stream = TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT).map_err(|source| {
        CliError::Unreachable {
            addr: server.to_string(),
            source,
        }
    })?;
    stream
        .set_read_timeout(Some(IO_TIMEOUT))
        .map_err(io_err("configuring socket"))?;
    let mut client = ClientSession::new(ctx, id.as_bytes(), password)?;
    write_message(&mut stream, &client.hello()?.into()).map_err(io_err("sending Hello"))?;
    let reply = server_reply(&mut stream)?;
    let kind = reply.kind();
    let challenge = reply
        .into_challenge()
        .ok_or_else(|| CliError::Unexpected(format!("{kind:?}")))?;
    let m1 = client.finish(&challenge)?;
    write_message(&mut stream, &WireMessage::ConfirmC(m1)).map_err(io_err("sending ConfirmC"))?;
    let m2 = match server_reply(&mut stream)? {
        WireMessage::ConfirmS(tag) => tag,
        other => return Err(CliError::Unexpected(format!("{:?}", other.kind()))),
    };
    match client.verify_server(&m2) {
        Ok(key) => Ok(key.digest()),
        Err(ProtocolError::VerificationFailed) => Err(CliError::VerificationFailed),
        Err(e) => Err(e.into()),
    }
}
