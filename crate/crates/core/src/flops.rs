//! Thread-local operation counter.
//!
//! Kernels add their complex multiply-accumulate counts here in the same units
//! as the closed-form complexity expressions: one unit per complex
//! multiplication, `n^3` for an `n x n` inversion. The counter is per thread,
//! so concurrent trials never interfere.

use std::cell::Cell;

thread_local! {
    static COUNT: Cell<u64> = const { Cell::new(0) };
}

/// Adds `n` operations to this thread's counter.
#[inline]
pub fn add(n: u64) {
    COUNT.with(|c| c.set(c.get().wrapping_add(n)));
}

/// Current value of this thread's counter.
pub fn read() -> u64 {
    COUNT.with(Cell::get)
}

/// Runs `f` and returns its result with the number of operations it added.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = read();
    let out = f();
    (out, read().wrapping_sub(start))
}
