//! Client side of the line-delimited JSON protocol spoken by external model
//! servers.
//!
//! The engine launches the server with `sh -c <cmdline>`, reads one `hello`
//! record, then sends one `query` per forward pass and waits for the matching
//! `dists` (or `error`) record before sending the next.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::dist::PositionDistribution;
use crate::error::{BackendError, Error, Result};
use crate::state::{Position, SequenceState, TokenId, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Hello {
        vocab_size: u32,
        mask_id: TokenId,
    },
    Query {
        id: u64,
        tokens: Vec<TokenId>,
        masked: Vec<Position>,
    },
    /// One row per entry of the query's `masked`, in the same order.
    Dists {
        id: u64,
        probs: Vec<Vec<f64>>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

pub struct BridgeBackend {
    child: Child,
    writer: BufWriter<ChildStdin>,
    reader: BufReader<ChildStdout>,
    vocab: Vocab,
    next_id: u64,
}

impl BridgeBackend {
    /// Starts the server and completes the handshake. A server that dies or
    /// talks nonsense before saying hello is a backend fault; a hello with an
    /// impossible vocabulary is a configuration error.
    pub fn spawn(cmdline: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmdline)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::new(format!("cannot start bridge '{cmdline}': {e}")))?;
        let writer = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let mut reader = BufReader::new(child.stdout.take().expect("piped stdout"));

        let hello = read_message(&mut reader)?;
        let vocab = match hello {
            WireMessage::Hello { vocab_size, mask_id } => {
                Vocab::new(vocab_size, mask_id).map_err(|e| Error::Config(format!("bridge handshake: {e}")))?
            }
            other => {
                return Err(BackendError::new(format!("expected hello from bridge, got {other:?}")).into());
            }
        };
        log::debug!("bridge '{cmdline}' ready: vocab {} mask {}", vocab.size(), vocab.mask_id());
        Ok(Self { child, writer, reader, vocab, next_id: 1 })
    }

    /// Fails with a configuration error unless the server's vocabulary is
    /// the expected one.
    pub fn expect_vocab(&self, vocab_size: Option<u32>, mask_id: Option<TokenId>) -> Result<()> {
        if vocab_size.is_some_and(|v| v != self.vocab.size()) || mask_id.is_some_and(|m| m != self.vocab.mask_id()) {
            return Err(Error::Config(format!(
                "bridge vocab (size {}, mask {}) does not match the configured one",
                self.vocab.size(),
                self.vocab.mask_id()
            )));
        }
        Ok(())
    }

    fn round_trip(
        &mut self,
        state: &SequenceState,
        positions: &[Position],
    ) -> std::result::Result<Vec<Vec<f64>>, BackendError> {
        let id = self.next_id;
        self.next_id += 1;
        let query = WireMessage::Query { id, tokens: state.tokens().to_vec(), masked: positions.to_vec() };
        let line = serde_json::to_string(&query).expect("query serializes");
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| BackendError::new(format!("bridge write failed: {e}")))?;
        match read_message(&mut self.reader).map_err(|e| match e {
            Error::Backend(b) => b,
            other => BackendError::new(other.to_string()),
        })? {
            WireMessage::Dists { id: got, probs } if got == id => Ok(probs),
            WireMessage::Dists { id: got, .. } => Err(BackendError::new(format!("response id {got} for request {id}"))),
            WireMessage::Error { message, .. } => Err(BackendError::new(format!("bridge error: {message}"))),
            other => Err(BackendError::new(format!("unexpected bridge message {other:?}"))),
        }
    }
}

fn read_message<R: BufRead>(reader: &mut R) -> Result<WireMessage> {
    let mut line = String::new();
    let n = reader.read_line(&mut line).map_err(|e| BackendError::new(format!("bridge read failed: {e}")))?;
    if n == 0 {
        return Err(BackendError::new("bridge closed its output").into());
    }
    serde_json::from_str(line.trim_end())
        .map_err(|e| BackendError::new(format!("malformed bridge message: {e}")).into())
}

impl ModelBackend for BridgeBackend {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn distributions(
        &mut self,
        state: &SequenceState,
        positions: &[Position],
    ) -> std::result::Result<Vec<PositionDistribution>, BackendError> {
        let rows = self.round_trip(state, positions)?;
        if rows.len() != positions.len() {
            return Err(BackendError::new(format!(
                "bridge returned {} rows for {} positions",
                rows.len(),
                positions.len()
            )));
        }
        positions
            .iter()
            .zip(rows)
            .map(|(&p, row)| PositionDistribution::new(p, row).map_err(|e| BackendError::at(p, e.to_string())))
            .collect()
    }
}

impl Drop for BridgeBackend {
    fn drop(&mut self) {
        let _ = self.writer.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
