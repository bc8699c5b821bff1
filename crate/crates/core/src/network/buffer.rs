use super::packet::TimedPacket;
use crate::base::Micros;

/// What happened to a packet offered to a [`FreshestBuffer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offer {
    /// Server was idle; the packet is now in service.
    Served,
    /// Server busy, slot was empty; the packet waits.
    Queued,
    /// The waiting packet was older and was discarded in favour of this one.
    ReplacedStale { discarded: Micros },
    /// The arrival was not fresher than the waiting packet and was discarded.
    DroppedStale { discarded: Micros },
}

impl Offer {
    pub fn accepted(self) -> bool {
        !matches!(self, Offer::DroppedStale { .. })
    }

    pub fn discarded(self) -> Option<Micros> {
        match self {
            Offer::ReplacedStale { discarded } | Offer::DroppedStale { discarded } => Some(discarded),
            _ => None,
        }
    }
}

/// Single server with one waiting slot that always keeps the freshest packet
/// (the M/M/1/2* discipline, without its Poisson assumptions).
#[derive(Debug, Clone)]
pub struct FreshestBuffer<P> {
    in_service: Option<TimedPacket<P>>,
    waiting: Option<TimedPacket<P>>,
    discarded: u64,
}

impl<P> Default for FreshestBuffer<P> {
    fn default() -> Self {
        Self {
            in_service: None,
            waiting: None,
            discarded: 0,
        }
    }
}

impl<P> FreshestBuffer<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_busy(&self) -> bool {
        self.in_service.is_some()
    }

    pub fn in_service(&self) -> Option<&TimedPacket<P>> {
        self.in_service.as_ref()
    }

    pub fn waiting(&self) -> Option<&TimedPacket<P>> {
        self.waiting.as_ref()
    }

    pub fn discarded_count(&self) -> u64 {
        self.discarded
    }

    pub fn offer(&mut self, pkt: TimedPacket<P>) -> Offer {
        if self.in_service.is_none() {
            self.in_service = Some(pkt);
            return Offer::Served;
        }
        match &self.waiting {
            None => {
                self.waiting = Some(pkt);
                Offer::Queued
            }
            Some(w) if pkt.t_origin > w.t_origin => {
                let discarded = w.t_origin;
                self.waiting = Some(pkt);
                self.discarded += 1;
                Offer::ReplacedStale { discarded }
            }
            Some(_) => {
                self.discarded += 1;
                Offer::DroppedStale {
                    discarded: pkt.t_origin,
                }
            }
        }
    }

    /// Finishes the packet in service and starts the waiting one, if any.
    /// Returns the finished packet.
    pub fn complete(&mut self) -> Option<TimedPacket<P>> {
        let done = self.in_service.take();
        self.in_service = self.waiting.take();
        done
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(t: i64) -> TimedPacket<()> {
        TimedPacket::new((), Micros(t))
    }

    #[test]
    fn idle_buffer_serves_immediately() {
        let mut b = FreshestBuffer::new();
        assert_eq!(b.offer(pkt(1)), Offer::Served);
        assert!(b.waiting().is_none());
    }

    #[test]
    fn fresher_arrival_replaces_waiting() {
        let mut b = FreshestBuffer::new();
        b.offer(pkt(1));
        b.offer(pkt(10));
        assert_eq!(b.offer(pkt(20)), Offer::ReplacedStale { discarded: Micros(10) });
        assert_eq!(b.waiting().unwrap().t_origin, Micros(20));
    }

    #[test]
    fn late_stale_arrival_is_dropped() {
        let mut b = FreshestBuffer::new();
        b.offer(pkt(1));
        b.offer(pkt(20));
        assert_eq!(b.offer(pkt(10)), Offer::DroppedStale { discarded: Micros(10) });
        assert_eq!(b.waiting().unwrap().t_origin, Micros(20));
        assert_eq!(b.complete().unwrap().t_origin, Micros(1));
        assert_eq!(b.in_service().unwrap().t_origin, Micros(20));
        assert_eq!(b.complete().unwrap().t_origin, Micros(20));
        assert!(!b.is_busy());
    }
}
