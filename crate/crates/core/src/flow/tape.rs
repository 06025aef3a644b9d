//! Merged, time-sorted record of price jumps and trades, with its CSV form.
//!
//! CSV columns: `time,kind,direction,fill,state_s,price`.
//! For a `JUMP` row `direction` is the new jump direction, `state_s` the
//! elapsed time just before the jump and `price` the post-jump mid. For a
//! `TRADE` row `direction` is the exchange side and `price` the current mid.
//! `fill` is the agent's executed quantity on that event (0 if none).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{PricePath, TradeEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "JUMP")]
    Jump,
    #[serde(rename = "TRADE")]
    Trade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapeRow {
    pub time: f64,
    pub kind: EventKind,
    pub direction: i64,
    pub fill: u32,
    pub state_s: f64,
    pub price: f64,
}

pub const TAPE_HEADER: [&str; 6] = ["time", "kind", "direction", "fill", "state_s", "price"];

/// Ordered list of market events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTape {
    pub rows: Vec<TapeRow>,
    /// End of the observation window, when known. Not part of the CSV.
    pub horizon: Option<f64>,
}

impl EventTape {
    /// Merges a price path and its trades; agent fills are left at zero.
    pub fn from_market(path: &PricePath, trades: &[TradeEvent], delta: f64, offset: f64) -> Self {
        let mut rows = Vec::with_capacity(path.jumps.len() + trades.len());
        let mut tick = path.start.tick;
        let mut ti = 0;
        for j in &path.jumps {
            while ti < trades.len() && trades[ti].time < j.time {
                rows.push(trade_row(&trades[ti], tick, delta, offset));
                ti += 1;
            }
            tick += j.direction;
            rows.push(TapeRow {
                time: j.time,
                kind: EventKind::Jump,
                direction: j.direction,
                fill: 0,
                state_s: j.elapsed_before,
                price: offset + 2.0 * delta * tick as f64,
            });
        }
        for tr in &trades[ti..] {
            rows.push(trade_row(tr, tick, delta, offset));
        }
        EventTape {
            rows,
            horizon: Some(path.horizon),
        }
    }

    pub fn jumps(&self) -> impl Iterator<Item = &TapeRow> {
        self.rows.iter().filter(|r| r.kind == EventKind::Jump)
    }

    pub fn trades(&self) -> impl Iterator<Item = &TapeRow> {
        self.rows.iter().filter(|r| r.kind == EventKind::Trade)
    }

    /// Checks strictly increasing times, unit directions and that every
    /// price lies on the `2 * delta` grid through the first price.
    pub fn validate(&self, delta: f64) -> Result<()> {
        for w in self.rows.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::Schema(format!(
                    "tape times not strictly increasing at {}",
                    w[1].time
                )));
            }
        }
        if let Some(first) = self.rows.first() {
            for r in &self.rows {
                if r.direction != 1 && r.direction != -1 {
                    return Err(Error::Schema(format!(
                        "direction {} at t={} is not +-1",
                        r.direction, r.time
                    )));
                }
                let ticks = (r.price - first.price) / (2.0 * delta);
                if (ticks - ticks.round()).abs() > 1e-6 {
                    return Err(Error::Schema(format!(
                        "price {} at t={} is off the tick grid",
                        r.price, r.time
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(TAPE_HEADER).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().ne(TAPE_HEADER.iter().copied()) {
            return Err(Error::Schema(format!(
                "tape header {:?}, expected {:?}",
                header, TAPE_HEADER
            )));
        }
        let mut rows = Vec::new();
        for rec in r.deserialize() {
            rows.push(rec.map_err(csv_err)?);
        }
        Ok(EventTape {
            rows,
            horizon: None,
        })
    }
}

fn trade_row(tr: &TradeEvent, tick: i64, delta: f64, offset: f64) -> TapeRow {
    TapeRow {
        time: tr.time,
        kind: EventKind::Trade,
        direction: tr.side,
        fill: 0,
        state_s: tr.elapsed,
        price: offset + 2.0 * delta * tick as f64,
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarketModel, MarketState};
    use crate::rng::{substream, Stream};
    use crate::testing::weibull_exp_params;

    fn sample_tape() -> EventTape {
        let model = MarketModel::new(weibull_exp_params()).unwrap();
        let mut rng = substream(11, 0, Stream::Market);
        let path =
            PricePath::simulate(&model, MarketState::new(0.0, 0, 1, 0.0), 30.0, &mut rng).unwrap();
        let trades = crate::flow::simulate_trades(&path, &model, &mut rng).unwrap();
        EventTape::from_market(&path, &trades, 0.5, 100.0)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tape = sample_tape();
        tape.validate(0.5).unwrap();
        let mut buf = Vec::new();
        tape.write_csv(&mut buf).unwrap();
        let back = EventTape::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows, tape.rows);
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn empty_tape_is_header_only() {
        let mut buf = Vec::new();
        EventTape::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,kind,direction,fill,state_s,price\n");
    }

    #[test]
    fn rejects_bad_header_and_off_grid_prices() {
        let bad = "t,kind,direction,fill,state_s,price\n";
        assert!(matches!(EventTape::read_csv(bad.as_bytes()), Err(Error::Schema(_))));
        let mut tape = sample_tape();
        tape.rows[1].price += 0.3;
        assert!(tape.validate(0.5).is_err());
    }
}
