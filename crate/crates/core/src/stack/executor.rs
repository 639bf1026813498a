//! Single-threaded executor: fixed-rate timers plus one inbound event source.
//!
//! Each iteration runs the earliest due timer tick if there is one, otherwise
//! one inbound event. Handlers run to completion, so callbacks of one node
//! never overlap. Ticks that fell due while a handler ran execute afterwards
//! in deadline order against their original deadlines; none are skipped.

use std::time::Duration;

use super::clock::Clock;

pub type TimerId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerSpec {
    pub first_deadline_ns: u64,
    pub period_ns: u64,
    /// Stop after this many ticks.
    pub max_ticks: Option<u64>,
    /// No tick executes at or after this instant, however overdue.
    pub expires_ns: Option<u64>,
}

impl TimerSpec {
    pub fn periodic(first_deadline_ns: u64, period_ns: u64) -> Self {
        TimerSpec {
            first_deadline_ns,
            period_ns,
            max_ticks: None,
            expires_ns: None,
        }
    }
}

#[derive(Debug, Clone)]
struct Timer {
    spec: TimerSpec,
    next_deadline_ns: u64,
    ticks: u64,
}

impl Timer {
    fn live_deadline(&self, now_ns: u64) -> Option<u64> {
        if self.spec.max_ticks.is_some_and(|m| self.ticks >= m) {
            return None;
        }
        if let Some(exp) = self.spec.expires_ns {
            if self.next_deadline_ns >= exp || now_ns >= exp {
                return None;
            }
        }
        Some(self.next_deadline_ns)
    }
}

/// The callbacks an executor dispatches to.
pub trait Handler<C: Clock> {
    fn on_timer(&mut self, timer: TimerId, deadline_ns: u64, clock: &mut C);

    /// Processes one inbound event if one is available now.
    fn on_inbound(&mut self, clock: &mut C) -> bool;

    /// When the next inbound event becomes available, if known.
    fn next_inbound_ns(&self) -> Option<u64> {
        None
    }

    /// Blocks up to `timeout` waiting for inbound activity (real clocks only).
    fn wait_inbound(&mut self, timeout: Duration) {
        std::thread::sleep(timeout);
    }
}

#[derive(Debug)]
pub struct Executor<C: Clock> {
    clock: C,
    timers: Vec<Timer>,
    processed: u64,
}

impl<C: Clock> Executor<C> {
    pub fn new(clock: C) -> Self {
        Executor {
            clock,
            timers: Vec::new(),
            processed: 0,
        }
    }

    pub fn add_timer(&mut self, spec: TimerSpec) -> TimerId {
        assert!(spec.period_ns > 0, "timer period must be positive");
        self.timers.push(Timer {
            spec,
            next_deadline_ns: spec.first_deadline_ns,
            ticks: 0,
        });
        self.timers.len() - 1
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    pub fn clock_mut(&mut self) -> &mut C {
        &mut self.clock
    }

    pub fn into_clock(self) -> C {
        self.clock
    }

    /// Ticks executed so far by `timer`.
    pub fn ticks(&self, timer: TimerId) -> u64 {
        self.timers[timer].ticks
    }

    /// Total events processed since creation.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    fn earliest_timer(&self, now_ns: u64) -> Option<(TimerId, u64)> {
        self.timers
            .iter()
            .enumerate()
            .filter_map(|(id, t)| t.live_deadline(now_ns).map(|d| (id, d)))
            .min_by_key(|&(id, d)| (d, id))
    }

    /// Instant of the next thing this executor would do.
    pub fn next_wakeup_ns<H: Handler<C>>(&self, handler: &H) -> Option<u64> {
        let now = self.clock.now_ns();
        let timer = self.earliest_timer(now).map(|(_, d)| d);
        let inbound = handler.next_inbound_ns();
        match (timer, inbound) {
            (Some(a), Some(b)) => Some(a.min(b).max(now)),
            (a, b) => a.or(b).map(|t| t.max(now)),
        }
    }

    /// One iteration at the current instant. Returns whether anything ran.
    pub fn step<H: Handler<C>>(&mut self, handler: &mut H) -> bool {
        let now = self.clock.now_ns();
        if let Some((id, deadline)) = self.earliest_timer(now).filter(|&(_, d)| d <= now) {
            let timer = &mut self.timers[id];
            timer.ticks += 1;
            timer.next_deadline_ns += timer.spec.period_ns;
            handler.on_timer(id, deadline, &mut self.clock);
            self.processed += 1;
            return true;
        }
        if handler.on_inbound(&mut self.clock) {
            self.processed += 1;
            return true;
        }
        false
    }

    /// Runs until the clock reaches `until_ns`; returns the events processed.
    /// Nothing starts at or after `until_ns`.
    pub fn spin<H: Handler<C>>(&mut self, handler: &mut H, until_ns: u64) -> u64 {
        let mut count = 0;
        loop {
            let now = self.clock.now_ns();
            if now >= until_ns {
                break;
            }
            if self.step(handler) {
                count += 1;
                continue;
            }
            let wake = self
                .next_wakeup_ns(handler)
                .map_or(until_ns, |w| w.min(until_ns));
            if self.clock.is_virtual() {
                // an idle virtual node with nothing due before `wake` jumps there
                self.clock
                    .advance_to(if wake > now { wake } else { until_ns });
            } else if wake > now {
                handler.wait_inbound(Duration::from_nanos(wake - now));
            }
        }
        count
    }
}
