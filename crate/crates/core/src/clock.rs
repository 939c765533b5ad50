//! Per-iteration wall clock. `std::time::Instant` is unavailable on
//! `wasm32-unknown-unknown`, where laps read as zero.

#[cfg(not(target_arch = "wasm32"))]
pub(crate) struct Stopwatch(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Stopwatch {
    pub fn start() -> Self {
        Self(std::time::Instant::now())
    }

    /// Nanoseconds since the previous lap.
    pub fn lap_ns(&mut self) -> u64 {
        let now = std::time::Instant::now();
        let ns = now.duration_since(self.0).as_nanos() as u64;
        self.0 = now;
        ns
    }
}

#[cfg(target_arch = "wasm32")]
pub(crate) struct Stopwatch;

#[cfg(target_arch = "wasm32")]
impl Stopwatch {
    pub fn start() -> Self {
        Self
    }

    pub fn lap_ns(&mut self) -> u64 {
        0
    }
}
