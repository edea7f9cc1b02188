"""Global epoch counter with guard/advance coordination.

The counter starts at 1 (0 is reserved as "before any transaction"). Reading
it is wait-free. Begin-side critical sections take a shared guard; advance()
is the exclusive side: it waits for all guards to drain, runs the registered
end-of-epoch callbacks for the closing epoch, and only then publishes the new
value. Writers get priority over new guards so a steady stream of begins
cannot starve the ticker.
"""

from __future__ import annotations

import threading
from typing import Callable, List, Optional

FIRST_EPOCH = 1


class EpochGuard:
    """Shared-side guard token; release exactly once."""

    __slots__ = ("_manager", "_released")

    def __init__(self, manager: "EpochManager"):
        self._manager = manager
        self._released = False

    def release(self) -> None:
        if not self._released:
            self._released = True
            self._manager._release_shared()

    def __enter__(self) -> "EpochGuard":
        return self

    def __exit__(self, *exc) -> None:
        self.release()


class EpochManager:
    def __init__(self, period_ms: int = 0):
        self._epoch = FIRST_EPOCH
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._guards = 0
        self._advancing = False
        self._writers_waiting = 0
        self._callbacks: List[Callable[[int], None]] = []
        self._period_ms = period_ms
        self._ticker: Optional[threading.Thread] = None
        self._stop = threading.Event()

    # -- reading ----------------------------------------------------------

    def current(self) -> int:
        # plain int load; wait-free
        return self._epoch

    def bootstrap(self, epoch: int) -> None:
        """Jump-start the counter (recovery). Only valid before any guards,
        advances, or ticker activity."""
        with self._cond:
            assert self._guards == 0 and not self._advancing
            if epoch > self._epoch:
                self._epoch = epoch
                self._cond.notify_all()

    def wait_for(self, epoch: int, timeout: Optional[float] = None) -> bool:
        """Block until the published epoch reaches `epoch`."""
        with self._cond:
            return self._cond.wait_for(lambda: self._epoch >= epoch, timeout)

    # -- shared guards -----------------------------------------------------

    def acquire_guard(self) -> EpochGuard:
        with self._cond:
            # writer priority: do not slip a new guard under a pending advance
            self._cond.wait_for(
                lambda: not self._advancing and self._writers_waiting == 0
            )
            self._guards += 1
            return EpochGuard(self)

    def _release_shared(self) -> None:
        with self._cond:
            self._guards -= 1
            if self._guards == 0:
                self._cond.notify_all()

    # -- exclusive advance ---------------------------------------------------

    def on_epoch_close(self, fn: Callable[[int], None]) -> None:
        """Register an end-of-epoch callback. Called with the closing epoch,
        after guards drain and before the next epoch is published."""
        self._callbacks.append(fn)

    def advance(self) -> int:
        """Close the current epoch and publish its successor.

        Blocks while any guard is held. Concurrent calls serialize; each
        performs exactly one increment.
        """
        with self._cond:
            self._writers_waiting += 1
            self._cond.wait_for(lambda: self._guards == 0 and not self._advancing)
            self._writers_waiting -= 1
            self._advancing = True
            closing = self._epoch
        try:
            for fn in self._callbacks:
                fn(closing)
        finally:
            with self._cond:
                self._epoch = closing + 1
                self._advancing = False
                self._cond.notify_all()
        return closing + 1

    # -- ticker -----------------------------------------------------------

    @property
    def manual(self) -> bool:
        return self._period_ms == 0

    def start_ticker(self) -> None:
        if self._period_ms <= 0 or self._ticker is not None:
            return

        def loop() -> None:
            while not self._stop.wait(self._period_ms / 1000.0):
                self.advance()

        self._ticker = threading.Thread(target=loop, name="epoch-ticker", daemon=True)
        self._ticker.start()

    def stop_ticker(self) -> None:
        self._stop.set()
        if self._ticker is not None:
            self._ticker.join()
            self._ticker = None
