//! Simulated two-port transport: one delayed, optionally lossy stream per
//! direction (velocity forward, force backward).
//!
//! Jitter and loss are drawn from a counter-based generator keyed by
//! `(seed, stream id, send index)`, so a sample's fate does not depend on
//! what else was sent.

use std::collections::BTreeMap;

use nalgebra::Vector6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ChannelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayMode {
    Constant,
    Variable,
    Lossy,
}

/// Per-direction delay model. `Variable` and `Lossy` draw the delay
/// uniformly from `base_ms ± jitter_ms` (clamped at zero); only `Lossy`
/// drops samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayProfile {
    pub mode: DelayMode,
    pub base_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub loss: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DelayProfile {
    fn default() -> Self {
        DelayProfile::constant(0.0)
    }
}

impl DelayProfile {
    pub fn constant(base_ms: f64) -> Self {
        DelayProfile {
            mode: DelayMode::Constant,
            base_ms,
            jitter_ms: 0.0,
            loss: 0.0,
            seed: 0,
        }
    }

    pub fn variable(base_ms: f64, jitter_ms: f64, seed: u64) -> Self {
        DelayProfile {
            mode: DelayMode::Variable,
            base_ms,
            jitter_ms,
            loss: 0.0,
            seed,
        }
    }

    pub fn lossy(base_ms: f64, jitter_ms: f64, loss: f64, seed: u64) -> Self {
        DelayProfile {
            mode: DelayMode::Lossy,
            base_ms,
            jitter_ms,
            loss,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::Profile(m.to_string()));
        if !(self.base_ms.is_finite() && self.base_ms >= 0.0) {
            return bad("base delay must be finite and non-negative");
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return bad("jitter must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return bad("loss probability must lie in [0, 1]");
        }
        match self.mode {
            DelayMode::Constant if self.jitter_ms > 0.0 || self.loss > 0.0 => {
                bad("constant profile takes neither jitter nor loss")
            }
            DelayMode::Variable if self.loss > 0.0 => bad("variable profile takes no loss; use lossy"),
            _ => Ok(()),
        }
    }

    /// Delay in ticks of `dt` seconds, or `None` if the sample is lost.
    fn realize(&self, rng: &mut ChaCha8Rng, send_index: u64, dt: f64) -> Option<u64> {
        // two f64 draws consume four 32-bit words
        rng.set_word_pos(send_index as u128 * 4);
        let u_delay: f64 = rng.gen();
        let u_loss: f64 = rng.gen();
        if self.mode == DelayMode::Lossy && u_loss < self.loss {
            return None;
        }
        let ms = match self.mode {
            DelayMode::Constant => self.base_ms,
            _ => (self.base_ms + self.jitter_ms * (2.0 * u_delay - 1.0)).max(0.0),
        };
        Some(ms_to_ticks(ms, dt))
    }
}

/// Nearest whole number of ticks; 150 ms at 1 kHz is exactly 150.
pub fn ms_to_ticks(ms: f64, dt: f64) -> u64 {
    (ms * 1e-3 / dt).round().max(0.0) as u64
}

/// One transmitted sample. Besides the power variable, each sample carries
/// the sender's cumulative input energies for both tasks (index 0: end
/// effector, 1: base) and the task flag at send time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSample {
    pub payload: Vector6<f64>,
    pub send_index: u64,
    pub ns: bool,
    pub energy: [f64; 2],
}

impl ChannelSample {
    pub fn new(payload: Vector6<f64>, send_index: u64, ns: bool, energy: [f64; 2]) -> Self {
        ChannelSample {
            payload,
            send_index,
            ns,
            energy,
        }
    }
}

/// What the receiver sees at a tick.
#[derive(Clone, Debug, PartialEq)]
pub struct Delivery {
    /// Newest sample so far; `None` before anything has arrived.
    pub sample: Option<ChannelSample>,
    /// `now − send_index` of that sample.
    pub age: Option<u64>,
    /// A new sample arrived at this tick.
    pub fresh: bool,
}

impl Delivery {
    pub fn payload(&self) -> Vector6<f64> {
        self.sample.as_ref().map_or_else(Vector6::zeros, |s| s.payload)
    }

    pub fn energy(&self) -> [f64; 2] {
        self.sample.as_ref().map_or([0.0; 2], |s| s.energy)
    }

    pub fn ns(&self) -> Option<bool> {
        self.sample.as_ref().map(|s| s.ns)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn stream_id(self) -> u64 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// One row of the channel trace, written when a sample is sent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub direction: Direction,
    pub send_index: u64,
    /// Realized delay in ms; empty if dropped.
    pub delay_ms: Option<f64>,
    pub dropped: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StreamStats {
    pub sent: u64,
    pub delivered: u64,
    /// Arrived after a newer sample had already been delivered.
    pub superseded: u64,
    pub lost: u64,
    pub in_flight: u64,
}

/// Single-producer single-consumer delayed stream.
#[derive(Clone, Debug)]
pub struct Stream {
    direction: Direction,
    profile: DelayProfile,
    dt: f64,
    rng: ChaCha8Rng,
    last_sent: Option<u64>,
    in_flight: BTreeMap<(u64, u64), ChannelSample>,
    held: Option<ChannelSample>,
    stats: StreamStats,
    trace: Option<Vec<TraceRow>>,
}

impl Stream {
    pub fn new(direction: Direction, profile: DelayProfile, dt: f64) -> Result<Self, ChannelError> {
        profile.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ChannelError::Profile("tick period must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
        rng.set_stream(direction.stream_id());
        Ok(Stream {
            direction,
            profile,
            dt,
            rng,
            last_sent: None,
            in_flight: BTreeMap::new(),
            held: None,
            stats: StreamStats::default(),
            trace: None,
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn profile(&self) -> &DelayProfile {
        &self.profile
    }

    pub fn stats(&self) -> StreamStats {
        StreamStats {
            in_flight: self.in_flight.len() as u64,
            ..self.stats
        }
    }

    pub fn trace(&self) -> &[TraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Enqueue `sample`, sent at tick `sample.send_index`.
    pub fn send(&mut self, sample: ChannelSample) -> Result<(), ChannelError> {
        if let Some(last) = self.last_sent {
            if sample.send_index != last + 1 {
                return Err(ChannelError::IndexRegression {
                    stream: self.direction.name(),
                    expected: last + 1,
                    got: sample.send_index,
                });
            }
        }
        self.last_sent = Some(sample.send_index);
        self.stats.sent += 1;
        let delay = self.profile.realize(&mut self.rng, sample.send_index, self.dt);
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRow {
                tick: sample.send_index,
                direction: self.direction,
                send_index: sample.send_index,
                delay_ms: delay.map(|d| d as f64 * self.dt * 1e3),
                dropped: delay.is_none(),
            });
        }
        match delay {
            Some(d) => {
                self.in_flight.insert((sample.send_index + d, sample.send_index), sample);
            }
            None => self.stats.lost += 1,
        }
        Ok(())
    }

    /// Newest sample with arrival ≤ `now`, holding the last one otherwise.
    pub fn receive(&mut self, now: u64) -> Delivery {
        let mut fresh = false;
        while let Some(entry) = self.in_flight.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let sample = entry.remove();
            let newer = self.held.as_ref().is_none_or(|h| sample.send_index > h.send_index);
            if newer {
                if fresh {
                    // the sample it replaces arrived this tick but was never handed out
                    self.stats.delivered -= 1;
                    self.stats.superseded += 1;
                }
                self.held = Some(sample);
                self.stats.delivered += 1;
                fresh = true;
            } else {
                self.stats.superseded += 1;
            }
        }
        Delivery {
            age: self.held.as_ref().map(|s| now.saturating_sub(s.send_index)),
            sample: self.held.clone(),
            fresh,
        }
    }
}

/// Both directions of the two-port.
#[derive(Clone, Debug)]
pub struct Channel {
    pub forward: Stream,
    pub backward: Stream,
}

impl Channel {
    pub fn new(forward: DelayProfile, backward: DelayProfile, dt: f64) -> Result<Self, ChannelError> {
        Ok(Channel {
            forward: Stream::new(Direction::Forward, forward, dt)?,
            backward: Stream::new(Direction::Backward, backward, dt)?,
        })
    }

    pub fn with_trace(self) -> Self {
        Channel {
            forward: self.forward.with_trace(),
            backward: self.backward.with_trace(),
        }
    }

    /// Trace rows of both directions ordered by tick, forward first.
    pub fn trace(&self) -> Vec<TraceRow> {
        let mut rows: Vec<TraceRow> = self.forward.trace().iter().chain(self.backward.trace()).cloned().collect();
        rows.sort_by_key(|r| (r.tick, r.direction == Direction::Backward));
        rows
    }
}
