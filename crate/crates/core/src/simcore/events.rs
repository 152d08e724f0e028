//! Append-only event log, written as JSON lines.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::simcore::{DriverId, OrderId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Generated {
        step: u32,
        order: OrderId,
        price_cents: i64,
    },
    Served {
        step: u32,
        driver: DriverId,
        order: OrderId,
        price_cents: i64,
        dp: i64,
        pickup_minutes: f64,
    },
    Cancelled {
        step: u32,
        driver: DriverId,
        order: OrderId,
        pickup_minutes: f64,
    },
    Completed {
        step: u32,
        driver: DriverId,
        order: OrderId,
        price_cents: i64,
    },
    Expired {
        step: u32,
        order: OrderId,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut events = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                events.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { events })
    }
}
