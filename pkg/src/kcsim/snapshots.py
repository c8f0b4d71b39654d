"""Binary state snapshots, magic "KCS1".

Layout (little-endian):
    magic       4 bytes  b"KCS1"
    solver tag  1 byte   b"G" (grid) or b"P" (particles)
    d           uint32
    geometry    grid:      nx uint32, nv uint32, lx f64, lv f64
                particles: n uint64, mass f64
    t           f64
    sigma       f64
    payload_len uint64   number of f64 values: nx*nv or n*2d
    payload     f64[payload_len], row-major (grid: x-major; particles: all
                positions then all velocities)

Round-trips are bit-exact, including t and sigma.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import SnapshotFormatError
from .grid import PhaseGrid
from .particles import ParticleEnsemble

MAGIC = b"KCS1"

_GRID_HEAD = struct.Struct("<4scIIIddddQ")
_PART_HEAD = struct.Struct("<4scIQdddQ")


def write_snapshot(state, path) -> None:
    """Serialize a PhaseGrid or ParticleEnsemble; sigma rides along from the
    state's `sigma` attribute if present, else 0 (callers may pass a tagged
    state via `tag_sigma`)."""
    sigma = getattr(state, "snapshot_sigma", 0.0)
    if isinstance(state, PhaseGrid):
        payload = np.ascontiguousarray(state.values, dtype="<f8")
        head = _GRID_HEAD.pack(MAGIC, b"G", 1, state.nx, state.nv,
                               state.lx, state.lv, state.t, sigma,
                               payload.size)
    elif isinstance(state, ParticleEnsemble):
        payload = np.concatenate([state.x.ravel(), state.v.ravel()]).astype("<f8")
        head = _PART_HEAD.pack(MAGIC, b"P", state.d, state.n, state.mass,
                               state.t, sigma, payload.size)
    else:
        raise TypeError(f"cannot snapshot {type(state).__name__}")
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(payload.tobytes())


def tag_sigma(state, sigma: float):
    """Attach the run's noise strength so write_snapshot records it."""
    object.__setattr__(state, "snapshot_sigma", float(sigma))
    return state


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise SnapshotFormatError(f"truncated snapshot while reading {what}")
    return buf


def read_snapshot(path):
    """Inverse of write_snapshot; returns the state with `snapshot_sigma` set."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        tag = _read_exact(fh, 1, "solver tag")
        if tag == b"G":
            rest = _read_exact(fh, _GRID_HEAD.size - 5, "grid header")
            d, nx, nv, lx, lv, t, sigma, n_payload = struct.unpack("<IIIddddQ", rest)
            if n_payload != nx * nv:
                raise SnapshotFormatError(
                    f"grid payload length {n_payload} != nx*nv = {nx * nv}")
            data = np.frombuffer(
                _read_exact(fh, 8 * n_payload, "grid payload"), dtype="<f8")
            state = PhaseGrid(data.reshape(nx, nv), lx, lv, t)
        elif tag == b"P":
            rest = _read_exact(fh, _PART_HEAD.size - 5, "particle header")
            d, n, mass, t, sigma, n_payload = struct.unpack("<IQdddQ", rest)
            if n_payload != n * 2 * d:
                raise SnapshotFormatError(
                    f"particle payload length {n_payload} != N*2d = {n * 2 * d}")
            data = np.frombuffer(
                _read_exact(fh, 8 * n_payload, "particle payload"), dtype="<f8")
            half = n * d
            state = ParticleEnsemble(
                data[:half].reshape(n, d) if n else np.zeros((0, d)),
                data[half:].reshape(n, d) if n else np.zeros((0, d)),
                mass, t)
        else:
            raise SnapshotFormatError(f"unknown solver tag {tag!r}")
        trailing = fh.read(1)
        if trailing:
            raise SnapshotFormatError("trailing bytes after payload")
    return tag_sigma(state, sigma)


def describe_snapshot(path) -> str:
    """Human-readable header summary for the `inspect` subcommand."""
    state = read_snapshot(path)
    if isinstance(state, PhaseGrid):
        return (f"grid snapshot: {state.nx} x {state.nv} on "
                f"[-{state.lx}, {state.lx}] x [-{state.lv}, {state.lv}], "
                f"t={state.t:.6g}, sigma={state.snapshot_sigma:.6g}, "
                f"mass={state.mass():.6g}")
    return (f"particle snapshot: N={state.n}, d={state.d}, "
            f"t={state.t:.6g}, sigma={state.snapshot_sigma:.6g}, "
            f"mass={state.mass:.6g}")
