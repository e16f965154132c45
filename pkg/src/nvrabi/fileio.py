"""Stack files and CSV tables.

Stack file layout: an ASCII header of ``key=value`` lines opened by the magic
line ``NVSTACK1`` and closed by ``END``, followed by nx*ny*ntau 32-bit floats
ordered x-major, then y, then tau (C order of an (nx, ny, ntau) array)::

    NVSTACK1
    nx=4
    ny=3
    ntau=100
    um_per_pixel=1.5
    tau_start=1e-07
    tau_step=2e-08
    byte_order=little
    END
    <payload>

CSV tables use ``.`` decimals, shortest round-trip float formatting, UTF-8
and LF line endings, with a mandatory header row.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mapping import ContrastStack

MAGIC = b"NVSTACK1"
_INT_KEYS = ("nx", "ny", "ntau")
_FLOAT_KEYS = ("um_per_pixel", "tau_start", "tau_step")
_DTYPES = {"little": "<f4", "big": ">f4"}


class StackFormatError(ValueError):
    pass


def stack_to_bytes(stack: ContrastStack, byte_order: str = "little") -> bytes:
    if byte_order not in _DTYPES:
        raise ValueError(f"byte_order must be 'little' or 'big', got {byte_order!r}")
    nx, ny, nt = stack.shape
    header = [MAGIC.decode(), f"nx={nx}", f"ny={ny}", f"ntau={nt}",
              f"um_per_pixel={float(stack.um_per_pixel)!r}",
              f"tau_start={float(stack.tau_start)!r}", f"tau_step={float(stack.tau_step)!r}",
              f"byte_order={byte_order}", "END", ""]
    payload = np.ascontiguousarray(stack.contrast, dtype=np.float32).astype(_DTYPES[byte_order])
    return "\n".join(header).encode("ascii") + payload.tobytes()


def stack_from_bytes(data: bytes) -> ContrastStack:
    for i, expected in enumerate(MAGIC):
        if i >= len(data) or data[i] != expected:
            raise StackFormatError(f"bad magic: byte offset {i} does not match {MAGIC!r}")
    end = data.find(b"\nEND\n")
    if end < 0:
        raise StackFormatError("header is not terminated by an END line")
    fields = {}
    for line in data[len(MAGIC) + 1:end].decode("ascii", errors="replace").split("\n"):
        key, sep, value = line.partition("=")
        if not sep:
            raise StackFormatError(f"malformed header line {line!r}")
        fields[key.strip()] = value.strip()
    try:
        dims = [int(fields[k]) for k in _INT_KEYS]
        um, t0, dt = (float(fields[k]) for k in _FLOAT_KEYS)
        order = fields["byte_order"]
    except KeyError as e:
        raise StackFormatError(f"missing header field {e.args[0]!r}") from None
    except ValueError as e:
        raise StackFormatError(f"bad header value: {e}") from None
    if min(dims) <= 0:
        raise StackFormatError(f"dimensions must be positive, got {dims}")
    if order not in _DTYPES:
        raise StackFormatError(f"unknown byte_order {order!r}")
    payload = data[end + len(b"\nEND\n"):]
    expected = 4 * dims[0] * dims[1] * dims[2]
    if len(payload) != expected:
        raise StackFormatError(f"payload length mismatch: expected {expected} bytes, got {len(payload)}")
    contrast = np.frombuffer(payload, dtype=_DTYPES[order]).reshape(dims).astype(np.float32)
    try:
        return ContrastStack(contrast, um, t0, dt)
    except ValueError as e:
        raise StackFormatError(str(e)) from None


def write_stack(path, stack: ContrastStack, byte_order: str = "little") -> None:
    Path(path).write_bytes(stack_to_bytes(stack, byte_order))


def read_stack(path) -> ContrastStack:
    return stack_from_bytes(Path(path).read_bytes())


def fmt(x) -> str:
    """Shortest string that round-trips the float exactly."""
    return repr(float(x))


def write_table(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table(path, required=()) -> dict:
    """Read a CSV with a header row into a dict of float arrays."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from None
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return {h: data[:, i] for i, h in enumerate(header)}


def write_curve_csv(path, curve) -> None:
    tau, contrast = (curve.tau_values, curve.contrast_values) if hasattr(curve, "tau_values") else curve
    write_table(path, ["tau_s", "contrast"], zip(tau, contrast))


def read_curve_csv(path):
    cols = read_table(path, required=("tau_s", "contrast"))
    return cols["tau_s"], cols["contrast"]
