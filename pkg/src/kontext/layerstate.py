"""Durable layer state: a small file read by every shimmed process.

The file holds exactly one `generation=<uint>` line plus one
`layer/<name>=<value>` line per active layer (name order). Writers take an
advisory flock on `<path>.lock`, re-read the current state, bump the
generation, write a temp file in the same directory, and rename it over the
target. Readers never lock: the rename keeps every read a complete snapshot.

Generations only grow. A missing file is the empty state at generation 0;
any grammar deviation in an existing file raises CorruptStateError with the
offending line number.
"""

from __future__ import annotations

import errno
import fcntl
import os
import signal
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, List, Optional

from .context import ContextState, check_layer_name, check_layer_value
from .errors import CorruptStateError, InvalidLayerError, LockTimeoutError
from .fsutil import PathLike, atomic_write_text

GENERATION_FIELD = "generation"
LAYER_PREFIX = "layer/"
LOCK_SUFFIX = ".lock"
DEFAULT_LOCK_TIMEOUT = 2.0

SIGNAL_WHITELIST = {
    "HUP": signal.SIGHUP,
    "USR1": signal.SIGUSR1,
    "USR2": signal.SIGUSR2,
}


def default_state_path() -> Path:
    """${XDG_RUNTIME_DIR:-/tmp}/kontext/state.ks"""
    runtime = os.environ.get("XDG_RUNTIME_DIR") or "/tmp"
    return Path(runtime) / "kontext" / "state.ks"


def state_serialize(ctx: ContextState) -> str:
    lines = [f"{GENERATION_FIELD}={ctx.generation}"]
    for name in sorted(ctx.layers):
        lines.append(f"{LAYER_PREFIX}{name}={ctx.layers[name]}")
    return "\n".join(lines) + "\n"


def state_parse(text: str) -> ContextState:
    """Strict parse of state file content. Raises CorruptStateError."""
    generation: Optional[int] = None
    layers = {}
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line:
            continue
        if "=" not in line:
            raise CorruptStateError(line_no, f"expected NAME=VALUE, got {line!r}")
        name, value = line.split("=", 1)
        if name == GENERATION_FIELD:
            if generation is not None:
                raise CorruptStateError(line_no, "second generation line")
            if not value.isdigit():
                raise CorruptStateError(line_no, f"bad generation {value!r}")
            generation = int(value)
            continue
        if not name.startswith(LAYER_PREFIX):
            raise CorruptStateError(line_no, f"unexpected entry {name!r}")
        layer = name[len(LAYER_PREFIX) :]
        if layer in layers:
            raise CorruptStateError(line_no, f"layer {layer!r} listed twice")
        try:
            check_layer_name(layer)
            check_layer_value(value)
        except InvalidLayerError as exc:
            raise CorruptStateError(line_no, str(exc)) from None
        layers[layer] = value
    if generation is None:
        raise CorruptStateError(0, "missing generation line")
    return ContextState(layers, generation)


def state_read(path: PathLike) -> ContextState:
    """Read the state file; a missing file is the empty state at gen 0."""
    try:
        with open(path, "r", encoding="utf-8", errors="strict") as handle:
            text = handle.read()
    except FileNotFoundError:
        return ContextState({}, 0)
    except UnicodeDecodeError:
        raise CorruptStateError(0, "state file is not valid UTF-8") from None
    return state_parse(text)


def state_write(path: PathLike, ctx: ContextState) -> None:
    """Atomically publish a state snapshot (no locking; see state_set_layer)."""
    atomic_write_text(path, state_serialize(ctx))


class _StateLock:
    """flock on <path>.lock with a polling deadline."""

    def __init__(self, path: PathLike, timeout: float):
        self._lock_path = str(path) + LOCK_SUFFIX
        self._timeout = timeout
        self._fd: Optional[int] = None

    def __enter__(self):
        Path(self._lock_path).parent.mkdir(parents=True, exist_ok=True)
        fd = os.open(self._lock_path, os.O_CREAT | os.O_RDWR, 0o644)
        deadline = time.monotonic() + self._timeout
        try:
            while True:
                try:
                    fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
                    break
                except OSError as exc:
                    if exc.errno not in (errno.EAGAIN, errno.EACCES):
                        raise
                    if time.monotonic() >= deadline:
                        raise LockTimeoutError(
                            f"lock {self._lock_path} busy for {self._timeout:.1f}s"
                        ) from None
                    time.sleep(0.001)
        except BaseException:
            os.close(fd)
            raise
        self._fd = fd
        return self

    def __exit__(self, *exc_info):
        if self._fd is not None:
            os.close(self._fd)  # closing drops the flock
            self._fd = None
        return False


def state_set_layer(
    path: PathLike,
    name: str,
    value: Optional[str],
    timeout: float = DEFAULT_LOCK_TIMEOUT,
    _after_write: Optional[Callable[[], None]] = None,
) -> int:
    """Set (value given) or unset (value None) one layer, under the lock.

    Returns the new generation. The generation advances on every call,
    including unsetting a layer that was not present. _after_write is a
    test hook invoked between the temp-file write and the rename.
    """
    check_layer_name(name)
    if value is not None:
        check_layer_value(value)
    with _StateLock(path, timeout):
        current = state_read(path)
        if value is None:
            updated = current.without_layer(name)
        else:
            updated = current.with_layer(name, value)
        if _after_write is None:
            state_write(path, updated)
        else:
            # split write for crash-consistency tests
            _write_with_hook(path, updated, _after_write)
        return updated.generation


def _write_with_hook(path: PathLike, ctx: ContextState, hook: Callable[[], None]) -> None:
    import tempfile

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    with os.fdopen(fd, "w", encoding="utf-8") as handle:
        handle.write(state_serialize(ctx))
        handle.flush()
        os.fsync(handle.fileno())
    hook()
    os.replace(tmp, target)


@dataclass(frozen=True)
class NotifyResult:
    pid: int
    ok: bool
    error: Optional[str] = None


def notify(pids: Iterable[int], signal_name: str) -> List[NotifyResult]:
    """Send a whitelisted signal to each pid; per-pid results, no raise.

    Non-positive pids are rejected before any kill(2) call: pid 0 and
    negative pids address whole process groups.
    """
    name = signal_name.upper()
    if name.startswith("SIG"):
        name = name[3:]
    if name not in SIGNAL_WHITELIST:
        allowed = ", ".join(sorted(SIGNAL_WHITELIST))
        raise ValueError(f"signal {signal_name!r} not allowed (one of: {allowed})")
    signum = SIGNAL_WHITELIST[name]

    results: List[NotifyResult] = []
    for pid in pids:
        if pid <= 0:
            results.append(NotifyResult(pid, False, "non-positive pid rejected"))
            continue
        try:
            os.kill(pid, signum)
        except ProcessLookupError:
            results.append(NotifyResult(pid, False, "no such process"))
        except PermissionError:
            results.append(NotifyResult(pid, False, "not permitted"))
        except OSError as exc:
            results.append(NotifyResult(pid, False, exc.strerror or str(exc)))
        else:
            results.append(NotifyResult(pid, True))
    return results
