//! Per-thread tally of complex multiply-accumulate operations.
//!
//! Every kernel that performs a complex multiply-add reports it here. The tally
//! is thread local, so concurrent workers never contend; callers that want a
//! count for a piece of work wrap it in [`measure`] on the thread doing it.

use std::cell::Cell;

thread_local! {
    static TALLY: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub fn add(n: u64) {
    TALLY.with(|t| t.set(t.get() + n));
}

/// Current cumulative count on this thread.
pub fn current() -> u64 {
    TALLY.with(Cell::get)
}

/// Runs `f` and returns its result with the number of operations it performed.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = current();
    let out = f();
    (out, current() - start)
}
