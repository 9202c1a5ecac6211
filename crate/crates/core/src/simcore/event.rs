use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::pktmodel::SimTime;

/// A scheduled event. Execution order is `(time, seq)`.
#[derive(Debug)]
pub struct Event<E> {
    pub time: SimTime,
    pub seq: u64,
    pub kind: E,
}

impl<E> PartialEq for Event<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<E> Eq for Event<E> {}

impl<E> PartialOrd for Event<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Event<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Future event list with a monotone clock.
#[derive(Debug)]
pub struct Scheduler<E> {
    heap: BinaryHeap<Event<E>>,
    next_seq: u64,
    now: SimTime,
    processed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn pending_events(&self) -> impl Iterator<Item = &Event<E>> {
        self.heap.iter()
    }

    /// Schedules `kind` at `at` with the next sequence number.
    ///
    /// Panics if `at` lies in the past.
    pub fn schedule(&mut self, at: SimTime, kind: E) -> u64 {
        let seq = self.next_seq;
        self.schedule_event(Event { time: at, seq, kind });
        seq
    }

    /// Schedules a fully formed event. Caller-chosen sequence numbers must
    /// be unique.
    pub fn schedule_event(&mut self, e: Event<E>) {
        assert!(e.time >= self.now, "event scheduled in the past ({} < {})", e.time, self.now);
        self.next_seq = self.next_seq.max(e.seq + 1);
        self.heap.push(e);
    }

    /// Pops the next event if it is due no later than `t_end`.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<E>> {
        if self.heap.peek()?.time > t_end {
            return None;
        }
        let e = self.heap.pop()?;
        debug_assert!(e.time >= self.now);
        self.now = e.time;
        self.processed += 1;
        Some(e)
    }

    /// Runs every event due by `t_end` through `handler`; returns how many
    /// ran. The clock ends at `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<E>),
    {
        assert!(t_end >= self.now, "run_until target lies in the past");
        let start = self.processed;
        while let Some(e) = self.pop_until(t_end) {
            handler(self, e);
        }
        self.now = t_end;
        self.processed - start
    }

    pub fn into_pending(self) -> impl Iterator<Item = Event<E>> {
        self.heap.into_vec().into_iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiebreak_on_seq() {
        let mut s = Scheduler::new();
        let t = SimTime::from_micros(10.0);
        s.schedule_event(Event { time: t, seq: 9, kind: "nine" });
        s.schedule_event(Event { time: t, seq: 5, kind: "five" });
        let mut order = Vec::new();
        s.run_until(SimTime::from_micros(20.0), |_, e| order.push(e.kind));
        assert_eq!(order, vec!["five", "nine"]);
    }

    #[test]
    fn empty_run() {
        let mut s: Scheduler<()> = Scheduler::new();
        assert_eq!(s.run_until(SimTime::from_secs(1.0), |_, _| {}), 0);
        assert_eq!(s.now(), SimTime::from_secs(1.0));
    }

    #[test]
    fn clock_is_monotone_and_handlers_can_schedule() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_micros(3.0), 3u32);
        s.schedule(SimTime::from_micros(1.0), 1u32);
        let mut seen = Vec::new();
        let n = s.run_until(SimTime::from_micros(100.0), |sch, e| {
            seen.push((sch.now(), e.kind));
            if e.kind == 1 {
                sch.schedule(sch.now() + SimTime::from_micros(1.0), 2);
            }
        });
        assert_eq!(n, 3);
        assert_eq!(seen.iter().map(|x| x.1).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(seen.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn events_beyond_horizon_stay_queued() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_micros(50.0), ());
        assert_eq!(s.run_until(SimTime::from_micros(10.0), |_, _| {}), 0);
        assert_eq!(s.pending(), 1);
    }

    #[test]
    #[should_panic(expected = "in the past")]
    fn past_scheduling_aborts() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_micros(5.0), ());
        s.run_until(SimTime::from_micros(5.0), |_, _| {});
        s.schedule(SimTime::from_micros(1.0), ());
    }
}
