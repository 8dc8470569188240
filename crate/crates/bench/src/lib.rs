//! Fixtures shared by the criterion benches.

use bff_core::rng::stream;
use bff_core::tracks::{Event, EventTable};
use rand::Rng;

/// `n` bubbles scattered over a 10 mm wide, 5–20 mm deep slab in frame 0.
pub fn scattered_events(n: usize, seed: u64) -> Vec<Event> {
    let mut rng = stream(seed);
    (0..n as u64)
        .map(|bubble_id| Event {
            frame: 0,
            bubble_id,
            position: [rng.random_range(-5e-3..5e-3), 0.0, rng.random_range(5e-3..20e-3)],
            speed: None,
            r_frac: None,
        })
        .collect()
}

pub fn table(events: Vec<Event>) -> EventTable {
    EventTable::from_rows(events)
}
