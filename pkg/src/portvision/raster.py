"""Binary image plumbing between the filters and the ellipse fitter.

Mask images are float arrays in [0, 1]; binary images are bool arrays.
Pixel (x, y) = (column, row); arrays are indexed [row, column].
"""

from __future__ import annotations

import numpy as np


class RasterError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PGM I/O (binary P5, 8-bit)

def write_pgm(path, image) -> None:
    """Write a grayscale image as binary PGM.

    Float inputs are clipped to [0, 1] and scaled to 0..255; bool inputs map
    to {0, 255}; uint8 passes through, so write(read(f)) is byte-identical.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise RasterError("PGM writer expects a 2D image")
    if img.dtype == np.uint8:
        data = img
    elif img.dtype == bool:
        data = img.astype(np.uint8) * 255
    else:
        data = np.rint(np.clip(img.astype(float), 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM into floats in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise RasterError(f"{path}: not a binary PGM (P5) file")
    # header is three whitespace-separated tokens after the magic, with
    # optional comment lines
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RasterError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise RasterError(f"{path}: malformed PGM header")
    if maxval != 255:
        raise RasterError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    need = width * height
    raw = blob[pos : pos + need]
    if len(raw) != need:
        raise RasterError(f"{path}: truncated PGM payload")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    return img.astype(float) / 255.0


def read_pgm_u8(path) -> np.ndarray:
    """Raw uint8 variant of read_pgm for bit-exact round trips."""
    img = read_pgm(path)
    return np.rint(img * 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# binarize / gate / coordinates

def binarize(mask, threshold: float = 0.5) -> np.ndarray:
    """Pixels with value >= threshold become active."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise RasterError("binarize expects a 2D mask")
    if not (0.0 <= threshold <= 1.0):
        raise RasterError("threshold must lie in [0, 1]")
    return m >= threshold


def active_pixels(binary) -> np.ndarray:
    """(x, y) float coordinates of active pixels, row-major order."""
    b = np.asarray(binary, dtype=bool)
    rows, cols = np.nonzero(b)
    return np.stack([cols.astype(float), rows.astype(float)], axis=1)


def gate(binary, gamma_s: int) -> bool:
    """Frame proceeds only when enough skeleton pixels survive."""
    if gamma_s < 0:
        raise RasterError("gamma_s must be non-negative")
    return int(np.count_nonzero(binary)) >= gamma_s


# ---------------------------------------------------------------------------
# skeletonization (Zhang-Suen two-subiteration thinning)

def _neighbors(padded):
    # P2..P9 clockwise from north, as views into the padded array
    p2 = padded[:-2, 1:-1]
    p3 = padded[:-2, 2:]
    p4 = padded[1:-1, 2:]
    p5 = padded[2:, 2:]
    p6 = padded[2:, 1:-1]
    p7 = padded[2:, :-2]
    p8 = padded[1:-1, :-2]
    p9 = padded[:-2, :-2]
    return p2, p3, p4, p5, p6, p7, p8, p9


# ---------------------------------------------------------------------------
# convex polygon rasterization (shared by GT masks and yaw scoring)

def convex_polygon_span_arrays(corners, width: int, height: int):
    """Scanline spans of a convex polygon as arrays (rows, x0s, x1s).

    A pixel belongs to the polygon iff its center lies inside (boundary
    inclusive).  Spans are clipped to the image; rows outside are dropped;
    x1 is exclusive.  Rows are processed as a batch: per edge, the crossing
    abscissa is evaluated for every candidate row at once.
    """
    pts = np.asarray(corners, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise RasterError("polygon needs at least 3 (x, y) corners")
    empty = (np.zeros(0, dtype=int),) * 3
    ys = pts[:, 1]
    row_lo = max(int(np.ceil(ys.min() - 1e-9)), 0)
    row_hi = min(int(np.floor(ys.max() + 1e-9)), height - 1)
    if row_hi < row_lo:
        return empty
    rows = np.arange(row_lo, row_hi + 1, dtype=float)
    xmin = np.full(rows.shape, np.inf)
    xmax = np.full(rows.shape, -np.inf)
    n = len(pts)
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        if ay == by:
            hit = np.abs(ay - rows) < 1e-12
            if hit.any():
                lo, hi = (ax, bx) if ax < bx else (bx, ax)
                np.minimum(xmin, np.where(hit, lo, np.inf), out=xmin)
                np.maximum(xmax, np.where(hit, hi, -np.inf), out=xmax)
            continue
        lo, hi = (ay, by) if ay < by else (by, ay)
        hit = (rows >= lo - 1e-12) & (rows <= hi + 1e-12)
        if not hit.any():
            continue
        x = ax + (rows - ay) * ((bx - ax) / (by - ay))
        np.minimum(xmin, np.where(hit, x, np.inf), out=xmin)
        np.maximum(xmax, np.where(hit, x, -np.inf), out=xmax)
    covered = np.isfinite(xmin)
    if not covered.any():
        return empty
    x0 = np.maximum(np.ceil(xmin - 1e-9).astype(int), 0)
    x1 = np.minimum(np.floor(xmax + 1e-9), width - 1.0).astype(int)
    keep = covered & (x0 <= x1)
    return rows[keep].astype(int), x0[keep], x1[keep] + 1


def convex_polygon_spans(corners, width: int, height: int) -> list:
    """Scanline spans of a convex polygon, as (row, x0, x1) with x1 exclusive."""
    rows, x0s, x1s = convex_polygon_span_arrays(corners, width, height)
    return [(int(r), int(a), int(b)) for r, a, b in zip(rows, x0s, x1s)]


def fill_convex_polygon(mask, corners) -> None:
    """Set mask pixels covered by the polygon to 1/True, in place."""
    height, width = mask.shape
    one = True if mask.dtype == bool else 1.0
    for row, x0, x1 in convex_polygon_spans(corners, width, height):
        mask[row, x0:x1] = one


def skeletonize(binary) -> np.ndarray:
    """Thin a binary image to one-pixel-wide strokes.

    Classic two-pass thinning: each pass deletes simultaneously every active
    pixel with 2..6 active neighbors, exactly one 0->1 transition around the
    neighborhood, and the pass-specific corner conditions; repeats until a
    full pass deletes nothing.  Deleting simultaneously (not in scan order)
    is what keeps the result connectivity-preserving and idempotent.
    """
    img = np.asarray(binary, dtype=bool).copy()
    if img.ndim != 2:
        raise RasterError("skeletonize expects a 2D binary image")
    while True:
        changed = False
        for phase in (0, 1):
            padded = np.zeros((img.shape[0] + 2, img.shape[1] + 2), dtype=bool)
            padded[1:-1, 1:-1] = img
            p2, p3, p4, p5, p6, p7, p8, p9 = _neighbors(padded)
            seq = (p2, p3, p4, p5, p6, p7, p8, p9, p2)
            b = sum(n.astype(np.uint8) for n in seq[:-1])
            a = sum((~seq[i] & seq[i + 1]).astype(np.uint8) for i in range(8))
            cond = img & (b >= 2) & (b <= 6) & (a == 1)
            if phase == 0:
                cond &= ~(p2 & p4 & p6) & ~(p4 & p6 & p8)
            else:
                cond &= ~(p2 & p4 & p8) & ~(p2 & p6 & p8)
            if np.any(cond):
                img[cond] = False
                changed = True
        if not changed:
            return img
