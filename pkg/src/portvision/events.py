"""Event-stream handling: binary I/O, histogram frames, and a simulator.

An event is (t microseconds, x, y, polarity).  The pipeline never looks at
single events; it consumes histograms of exactly N consecutive events
(polarity-agnostic), so a stream's only required structure is timestamp
order.  Trailing events that do not fill a window are discarded.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

EVENT_MAGIC = b"PORTEVT1"
EVENT_VERSION = 1

# in-memory events are packed; on disk each record is padded to 16 bytes
EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
_DISK_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "V3")]
)


class EventFormatError(ValueError):
    """Base class for event container problems."""


class EventMagicError(EventFormatError):
    """File does not start with the PORTEVT1 magic."""


class EventTruncatedError(EventFormatError):
    """Payload shorter than the header-declared record count."""


class EventSchemaError(EventFormatError):
    """Record contents violate the schema (order, bounds, CSV shape)."""


@dataclass
class EventStream:
    width: int
    height: int
    events: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.events)
        if ev.dtype != EVENT_DTYPE:
            raise EventSchemaError(f"events must use dtype {EVENT_DTYPE}")
        if ev.size:
            if np.any(np.diff(ev["t"].astype(np.int64)) < 0):
                raise EventSchemaError("event timestamps must be non-decreasing")
            if int(ev["x"].max()) >= self.width or int(ev["y"].max()) >= self.height:
                raise EventSchemaError("event coordinates exceed sensor dimensions")
        self.events = ev

    def __len__(self) -> int:
        return int(self.events.shape[0])


@dataclass
class EventHistogram:
    """Per-pixel count of one N-event window."""

    counts: np.ndarray
    t_start: int
    t_end: int

    def __post_init__(self):
        if self.counts.ndim != 2:
            raise EventSchemaError("histogram counts must be 2D")
        if self.t_start > self.t_end:
            raise EventSchemaError("histogram window has t_start > t_end")


def build_histograms(stream: EventStream, n: int) -> list:
    """Split the stream into consecutive windows of exactly n events each."""
    if n < 1:
        raise EventSchemaError("histogram window size must be >= 1")
    ev = stream.events
    out = []
    full = len(ev) // n
    for w in range(full):
        chunk = ev[w * n : (w + 1) * n]
        counts = np.zeros((stream.height, stream.width), dtype=np.uint32)
        np.add.at(counts, (chunk["y"].astype(np.intp), chunk["x"].astype(np.intp)), 1)
        out.append(
            EventHistogram(
                counts=counts, t_start=int(chunk["t"][0]), t_end=int(chunk["t"][-1])
            )
        )
    return out


def histogram_to_frame(hist: EventHistogram, c_max: int = 5) -> np.ndarray:
    """Clamp counts at c_max and scale to [0, 1]."""
    if c_max < 1:
        raise EventSchemaError("c_max must be >= 1")
    return np.minimum(hist.counts, c_max).astype(float) / float(c_max)


def simulate_events(
    frame_a,
    frame_b,
    t_a: int,
    t_b: int,
    contrast: float = 0.2,
    rng=None,
    noise_rate: float = 0.0,
) -> EventStream:
    """Contrast-threshold event generation between two intensity frames.

    A pixel whose log-intensity changes by k full thresholds emits k events of
    that sign, timestamps spread over (t_a, t_b] by linear interpolation.
    ``noise_rate`` adds uniform impostor events per pixel per second.  The
    log is taken on intensity + 1/255 so black pixels stay finite.
    """
    a = np.asarray(frame_a, dtype=float)
    b = np.asarray(frame_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise EventSchemaError("frames must be 2D and equally shaped")
    if not t_b > t_a:
        raise EventSchemaError("need t_b > t_a")
    if contrast <= 0:
        raise EventSchemaError("contrast threshold must be positive")
    height, width = a.shape
    eps = 1.0 / 255.0
    dlog = np.log(b + eps) - np.log(a + eps)
    k = np.floor(np.abs(dlog) / contrast).astype(np.int64)
    pol = np.where(dlog >= 0, 1, -1).astype(np.int8)

    ys, xs = np.nonzero(k)
    counts = k[ys, xs]
    total = int(counts.sum())
    dt = t_b - t_a

    ev = np.empty(total, dtype=EVENT_DTYPE)
    if total:
        ev["x"] = np.repeat(xs.astype(np.uint16), counts)
        ev["y"] = np.repeat(ys.astype(np.uint16), counts)
        ev["p"] = np.repeat(pol[ys, xs], counts)
        # event j of k at t_a + ceil(j*dt/k): strictly inside (t_a, t_b]
        j = np.concatenate([np.arange(1, c + 1) for c in counts])
        kk = np.repeat(counts, counts)
        ev["t"] = t_a + ((j * dt + kk - 1) // kk).astype(np.uint64)

    if noise_rate > 0.0:
        if rng is None:
            raise EventSchemaError("noise_rate > 0 requires an rng")
        lam = noise_rate * (dt * 1e-6) * width * height
        n_noise = int(rng.poisson(lam))
        noise = np.empty(n_noise, dtype=EVENT_DTYPE)
        noise["t"] = rng.integers(t_a + 1, t_b + 1, size=n_noise, dtype=np.uint64)
        noise["x"] = rng.integers(0, width, size=n_noise, dtype=np.uint16)
        noise["y"] = rng.integers(0, height, size=n_noise, dtype=np.uint16)
        noise["p"] = rng.choice(np.array([-1, 1], dtype=np.int8), size=n_noise)
        ev = np.concatenate([ev, noise])

    order = np.argsort(ev["t"], kind="stable")
    return EventStream(width=width, height=height, events=ev[order])


# ---------------------------------------------------------------------------
# container I/O

def write_events(path, stream: EventStream) -> None:
    header = EVENT_MAGIC + struct.pack(
        "<IIIQ", EVENT_VERSION, stream.width, stream.height, len(stream)
    )
    disk = np.zeros(len(stream), dtype=_DISK_DTYPE)
    for name in ("t", "x", "y", "p"):
        disk[name] = stream.events[name]
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(disk.tobytes())


def read_events(path) -> EventStream:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(EVENT_MAGIC)] != EVENT_MAGIC:
        raise EventMagicError(f"{path}: bad magic, not a PORTEVT1 file")
    head_end = len(EVENT_MAGIC) + struct.calcsize("<IIIQ")
    if len(blob) < head_end:
        raise EventTruncatedError(f"{path}: truncated header")
    version, width, height, count = struct.unpack(
        "<IIIQ", blob[len(EVENT_MAGIC) : head_end]
    )
    if version != EVENT_VERSION:
        raise EventSchemaError(f"{path}: unsupported version {version}")
    payload = blob[head_end:]
    if len(payload) < count * _DISK_DTYPE.itemsize:
        raise EventTruncatedError(
            f"{path}: expected {count} records, payload holds "
            f"{len(payload) // _DISK_DTYPE.itemsize}"
        )
    disk = np.frombuffer(
        payload[: count * _DISK_DTYPE.itemsize], dtype=_DISK_DTYPE
    )
    ev = np.empty(count, dtype=EVENT_DTYPE)
    for name in ("t", "x", "y", "p"):
        ev[name] = disk[name]
    return EventStream(width=width, height=height, events=ev)


def read_events_csv(path, width: int, height: int) -> EventStream:
    """Import `t_us,x,y,p` CSV (header required, polarity strictly -1 or 1)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != "t_us,x,y,p":
        raise EventSchemaError(f"{path}: expected header 't_us,x,y,p'")
    rows = len(lines) - 1
    ev = np.empty(rows, dtype=EVENT_DTYPE)
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise EventSchemaError(f"{path}:{i}: expected 4 comma-separated values")
        try:
            t, x, y, p = (int(v.strip()) for v in parts)
        except ValueError:
            raise EventSchemaError(f"{path}:{i}: non-integer field")
        if p not in (-1, 1):
            raise EventSchemaError(f"{path}:{i}: polarity must be -1 or 1, got {p}")
        if t < 0 or x < 0 or y < 0:
            raise EventSchemaError(f"{path}:{i}: negative value")
        ev[i - 2] = (t, x, y, p)
    return EventStream(width=width, height=height, events=ev)
