//! Framing between the retailer, meters and auditors.
//!
//! A frame is `len u32 BE ‖ type u8 ‖ payload` where `len` is the payload
//! length. Payloads use the core codec. Requests and responses share a
//! type: an auditor asks for a view by sending `EVIDENCE_AUDITOR` with an
//! empty body, a meter asks for peer material with `QUERY_INCLUSION`.

use std::io::{self, Read, Write};

use pptp_core::audit_random::PeerMaterial;
use pptp_core::codec::{DecodeError, Reader, Writer};
use pptp_core::crypto::SlotSecret;
use pptp_core::protocol::merkle::InclusionWitness;
use pptp_core::protocol::BillStatement;
use thiserror::Error;

pub const MAX_FRAME: usize = 256 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    SubmitMeasurement = 1,
    SlotSecret = 2,
    EvidenceUser = 3,
    EvidenceAuditor = 4,
    Bill = 5,
    QueryInclusion = 6,
    InclusionResp = 7,
    Error = 8,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => MsgType::SubmitMeasurement,
            2 => MsgType::SlotSecret,
            3 => MsgType::EvidenceUser,
            4 => MsgType::EvidenceAuditor,
            5 => MsgType::Bill,
            6 => MsgType::QueryInclusion,
            7 => MsgType::InclusionResp,
            8 => MsgType::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("connection: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("bad payload: {0}")]
    Decode(#[from] DecodeError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Submit {
        user: u32,
        cycle: u64,
        period: u64,
        y: u64,
    },
    SlotSecret {
        user: u32,
        cycle: u64,
        period: u64,
        secret: SlotSecret,
    },
    EvidenceUser {
        cycle: u64,
        period: u64,
        body: Vec<u8>,
    },
    EvidenceAuditor {
        cycle: u64,
        period: u64,
        body: Vec<u8>,
    },
    Bill {
        cycle: u64,
        statement: BillStatement,
    },
    QueryInclusion {
        cycle: u64,
        period: u64,
        target: u64,
    },
    InclusionResp {
        cycle: u64,
        period: u64,
        target: u64,
        material: Option<PeerMaterial>,
    },
    Error(String),
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::Submit { .. } => MsgType::SubmitMeasurement,
            Message::SlotSecret { .. } => MsgType::SlotSecret,
            Message::EvidenceUser { .. } => MsgType::EvidenceUser,
            Message::EvidenceAuditor { .. } => MsgType::EvidenceAuditor,
            Message::Bill { .. } => MsgType::Bill,
            Message::QueryInclusion { .. } => MsgType::QueryInclusion,
            Message::InclusionResp { .. } => MsgType::InclusionResp,
            Message::Error(_) => MsgType::Error,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Message::Submit {
                user,
                cycle,
                period,
                y,
            } => {
                w.u32(*user).u64(*cycle).u64(*period).u64(*y);
            }
            Message::SlotSecret {
                user,
                cycle,
                period,
                secret,
            } => {
                w.u32(*user)
                    .u64(*cycle)
                    .u64(*period)
                    .raw(&secret.to_be_bytes());
            }
            Message::EvidenceUser {
                cycle,
                period,
                body,
            }
            | Message::EvidenceAuditor {
                cycle,
                period,
                body,
            } => {
                w.u64(*cycle).u64(*period).raw(body);
            }
            Message::Bill { cycle, statement } => {
                w.u64(*cycle);
                statement.write(&mut w);
            }
            Message::QueryInclusion {
                cycle,
                period,
                target,
            } => {
                w.u64(*cycle).u64(*period).u64(*target);
            }
            Message::InclusionResp {
                cycle,
                period,
                target,
                material,
            } => {
                w.u64(*cycle)
                    .u64(*period)
                    .u64(*target)
                    .bool(material.is_some());
                if let Some(m) = material {
                    m.witness.write(&mut w);
                    w.var(&m.leaf_proof);
                }
            }
            Message::Error(text) => {
                w.raw(text.as_bytes());
            }
        }
        w.finish()
    }

    pub fn decode(ty: MsgType, payload: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(payload);
        let msg = match ty {
            MsgType::SubmitMeasurement => Message::Submit {
                user: r.u32()?,
                cycle: r.u64()?,
                period: r.u64()?,
                y: r.u64()?,
            },
            MsgType::SlotSecret => Message::SlotSecret {
                user: r.u32()?,
                cycle: r.u64()?,
                period: r.u64()?,
                secret: SlotSecret::from_be_bytes(&r.array()?)
                    .map_err(|_| DecodeError::Invalid("slot secret"))?,
            },
            MsgType::EvidenceUser | MsgType::EvidenceAuditor => {
                let cycle = r.u64()?;
                let period = r.u64()?;
                let body = r.take(r.remaining())?.to_vec();
                if ty == MsgType::EvidenceUser {
                    Message::EvidenceUser {
                        cycle,
                        period,
                        body,
                    }
                } else {
                    Message::EvidenceAuditor {
                        cycle,
                        period,
                        body,
                    }
                }
            }
            MsgType::Bill => Message::Bill {
                cycle: r.u64()?,
                statement: BillStatement::read(&mut r)?,
            },
            MsgType::QueryInclusion => Message::QueryInclusion {
                cycle: r.u64()?,
                period: r.u64()?,
                target: r.u64()?,
            },
            MsgType::InclusionResp => {
                let cycle = r.u64()?;
                let period = r.u64()?;
                let target = r.u64()?;
                let material = if r.bool()? {
                    let witness = InclusionWitness::read(&mut r)?;
                    let leaf_proof = r.var()?.to_vec();
                    Some(PeerMaterial {
                        witness,
                        leaf_proof,
                    })
                } else {
                    None
                };
                Message::InclusionResp {
                    cycle,
                    period,
                    target,
                    material,
                }
            }
            MsgType::Error => {
                let text = r.take(r.remaining())?;
                Message::Error(String::from_utf8_lossy(text).into_owned())
            }
        };
        r.finish()?;
        Ok(msg)
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    let payload = msg.payload();
    if payload.len() > MAX_FRAME {
        return Err(WireError::TooLarge(payload.len()));
    }
    let mut frame = Vec::with_capacity(5 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.push(msg.msg_type() as u8);
    frame.extend_from_slice(&payload);
    w.write_all(&frame)?;
    w.flush()?;
    Ok(())
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Message, WireError> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    let len = u32::from_be_bytes(head[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME {
        return Err(WireError::TooLarge(len));
    }
    let ty = MsgType::from_u8(head[4]).ok_or(WireError::UnknownType(head[4]))?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Message::decode(ty, &payload)?)
}
