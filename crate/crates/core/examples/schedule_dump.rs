//! Prints a gate's pulse schedule as text and parses it back.

use std::f64::consts::PI;

use geophase::experiments::GateKind;
use geophase::schedule::{FrameParams, GateTimings, PulseSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gate: GateKind = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(GateKind::ConditionalAdiabatic {
            delta_gamma: PI / 8.0,
        });
    let schedule = gate.build(FrameParams::default(), GateTimings::default())?;
    let text = schedule.to_text()?;
    print!("{text}");
    for (start, seg) in schedule.timeline() {
        println!("# t = {start:>9.4}  {:>9.4}", seg.duration());
    }
    assert_eq!(PulseSchedule::from_text(&text)?, schedule);
    Ok(())
}
