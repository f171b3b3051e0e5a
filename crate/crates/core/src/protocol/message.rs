use super::envelope::MessageKind;
use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    TargetAccuracy,
    BudgetExhausted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxIterations => "max_iterations",
            StopReason::TargetAccuracy => "target_accuracy",
            StopReason::BudgetExhausted => "budget_exhausted",
        }
    }

    fn code(self) -> u8 {
        match self {
            StopReason::MaxIterations => 0,
            StopReason::TargetAccuracy => 1,
            StopReason::BudgetExhausted => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self, ProtocolError> {
        Ok(match c {
            0 => StopReason::MaxIterations,
            1 => StopReason::TargetAccuracy,
            2 => StopReason::BudgetExhausted,
            _ => return Err(ProtocolError::Wire(format!("bad stop reason {c}"))),
        })
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Sent once to the admin; `examples` is the sender's local dataset size.
    Register {
        examples: u64,
    },
    IterationStart {
        iteration: u64,
        clipping_round: bool,
        params: Vec<f64>,
    },
    Histogram {
        iteration: u64,
        counts: Vec<f64>,
        total: u64,
    },
    ClipBound {
        iteration: u64,
        bound: f64,
    },
    Mask {
        iteration: u64,
        mask: Vec<f64>,
    },
    MaskedGradient {
        iteration: u64,
        worker: u32,
        payload: Vec<f64>,
    },
    UpdateResult {
        iteration: u64,
        params: Vec<f64>,
        loss: f64,
        accuracy: f64,
    },
    Stop {
        reason: StopReason,
    },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ProtocolError> {
        let out = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| {
            ProtocolError::Wire(format!("payload truncated at byte {}", self.pos))
        })?;
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64, ProtocolError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn vec(&mut self) -> Result<Vec<f64>, ProtocolError> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(ProtocolError::Wire(format!(
                "vector length {n} exceeds payload"
            )));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn finish(self) -> Result<(), ProtocolError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(ProtocolError::Wire("trailing payload bytes".into()))
        }
    }
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Register { .. } => MessageKind::Register,
            Message::IterationStart { .. } => MessageKind::IterationStart,
            Message::Histogram { .. } => MessageKind::Histogram,
            Message::ClipBound { .. } => MessageKind::ClipBound,
            Message::Mask { .. } => MessageKind::Mask,
            Message::MaskedGradient { .. } => MessageKind::MaskedGradient,
            Message::UpdateResult { .. } => MessageKind::UpdateResult,
            Message::Stop { .. } => MessageKind::Stop,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        match self {
            Message::Register { examples } => w.u64(*examples),
            Message::IterationStart {
                iteration,
                clipping_round,
                params,
            } => {
                w.u64(*iteration);
                w.0.push(u8::from(*clipping_round));
                w.vec(params);
            }
            Message::Histogram {
                iteration,
                counts,
                total,
            } => {
                w.u64(*iteration);
                w.vec(counts);
                w.u64(*total);
            }
            Message::ClipBound { iteration, bound } => {
                w.u64(*iteration);
                w.f64(*bound);
            }
            Message::Mask { iteration, mask } => {
                w.u64(*iteration);
                w.vec(mask);
            }
            Message::MaskedGradient {
                iteration,
                worker,
                payload,
            } => {
                w.u64(*iteration);
                w.u64(u64::from(*worker));
                w.vec(payload);
            }
            Message::UpdateResult {
                iteration,
                params,
                loss,
                accuracy,
            } => {
                w.u64(*iteration);
                w.vec(params);
                w.f64(*loss);
                w.f64(*accuracy);
            }
            Message::Stop { reason } => w.0.push(reason.code()),
        }
        w.0
    }

    pub fn decode(kind: MessageKind, payload: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader {
            bytes: payload,
            pos: 0,
        };
        let msg = match kind {
            MessageKind::Register => Message::Register { examples: r.u64()? },
            MessageKind::IterationStart => Message::IterationStart {
                iteration: r.u64()?,
                clipping_round: match r.u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(ProtocolError::Wire(format!("bad flag byte {b}"))),
                },
                params: r.vec()?,
            },
            MessageKind::Histogram => Message::Histogram {
                iteration: r.u64()?,
                counts: r.vec()?,
                total: r.u64()?,
            },
            MessageKind::ClipBound => Message::ClipBound {
                iteration: r.u64()?,
                bound: r.f64()?,
            },
            MessageKind::Mask => Message::Mask {
                iteration: r.u64()?,
                mask: r.vec()?,
            },
            MessageKind::MaskedGradient => Message::MaskedGradient {
                iteration: r.u64()?,
                worker: u32::try_from(r.u64()?)
                    .map_err(|_| ProtocolError::Wire("worker index overflow".into()))?,
                payload: r.vec()?,
            },
            MessageKind::UpdateResult => Message::UpdateResult {
                iteration: r.u64()?,
                params: r.vec()?,
                loss: r.f64()?,
                accuracy: r.f64()?,
            },
            MessageKind::Stop => Message::Stop {
                reason: StopReason::from_code(r.u8()?)?,
            },
        };
        r.finish()?;
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_round_trips() {
        let all = vec![
            Message::Register { examples: 12 },
            Message::IterationStart {
                iteration: 3,
                clipping_round: true,
                params: vec![0.5, -1.25],
            },
            Message::Histogram {
                iteration: 3,
                counts: vec![1.0, 0.0, 4.0],
                total: 5,
            },
            Message::ClipBound {
                iteration: 3,
                bound: 0.75,
            },
            Message::Mask {
                iteration: 3,
                mask: vec![1e-300, -7.0],
            },
            Message::MaskedGradient {
                iteration: 3,
                worker: 2,
                payload: vec![f64::MAX],
            },
            Message::UpdateResult {
                iteration: 3,
                params: vec![],
                loss: 0.69,
                accuracy: 0.5,
            },
            Message::Stop {
                reason: StopReason::BudgetExhausted,
            },
        ];
        for m in all {
            let bytes = m.encode_payload();
            assert_eq!(Message::decode(m.kind(), &bytes).unwrap(), m);
            assert!(Message::decode(m.kind(), &bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn oversized_vector_length_is_rejected() {
        let mut bytes = 1u64.to_le_bytes().to_vec();
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(Message::decode(MessageKind::Mask, &bytes).is_err());
    }
}
