"""Synthetic residual-statics problem and its stacking-power objective.

Traces are copies of one base trace delayed by ``s_i + r_j`` (source plus
receiver static).  Stacking power sums, over every midpoint gather and every
ordered pair of distinct offsets, the cross-correlation of the two traces
evaluated at the difference of their trial statics.  Correlations are
tabulated on integer lags and interpolated with a C1 cubic, so the objective
is differentiable in the statics.

Statics are carried in seconds; objective coordinates are in samples.
"""

from __future__ import annotations

import json
import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .objective import Bounds, ObjectiveSpec
from .rhc import DOMAIN_STATICS, substream

MAGIC = b"STAT1\0"
HEADER = struct.Struct("<6sIIIdd")
HEADER_SIZE = 64


@dataclass(frozen=True)
class StaticsGeometry:
    """Recording layout.

    Standard layout: source i records channels c = 0..n_channels-1 into
    receiver j = i + c; midpoint index y = i + j, offset index h = c.
    ``single_gather`` instead puts ``n_channels`` traces in one midpoint with
    one static each, the first held at zero.
    """

    n_sources: int = 20
    n_channels: int = 16
    single_gather: bool = False

    def __post_init__(self):
        if self.n_channels < 1 or self.n_sources < 1:
            raise ValueError("n_sources and n_channels must be positive")
        if self.single_gather and self.n_channels < 2:
            raise ValueError("a single gather needs at least two traces")

    @classmethod
    def three_traces(cls) -> "StaticsGeometry":
        return cls(n_sources=1, n_channels=3, single_gather=True)

    @property
    def n_receivers(self) -> int:
        return 0 if self.single_gather else self.n_sources + self.n_channels - 1

    @property
    def n_traces(self) -> int:
        return self.n_channels if self.single_gather else self.n_sources * self.n_channels

    @property
    def n_source_statics(self) -> int:
        return self.n_channels if self.single_gather else self.n_sources

    @property
    def n_unknowns(self) -> int:
        if self.single_gather:
            return self.n_channels - 1
        return self.n_sources + self.n_receivers

    def traces(self) -> list[tuple[int, int, int, int]]:
        """(source, receiver, midpoint, offset) for every trace in file order."""
        if self.single_gather:
            return [(c, -1, 0, c) for c in range(self.n_channels)]
        return [(i, i + c, 2 * i + c, c)
                for i in range(self.n_sources) for c in range(self.n_channels)]

    @property
    def trace_index(self) -> dict[tuple[int, int], tuple[int, int]]:
        return {(y, h): (i, j) for i, j, y, h in self.traces()}

    def pairs(self) -> np.ndarray:
        """Unordered trace pairs (a < b) sharing a midpoint, shape (P, 2)."""
        groups: dict[int, list[int]] = {}
        for t, (_, _, y, _) in enumerate(self.traces()):
            groups.setdefault(y, []).append(t)
        out = [(a, b) for y in sorted(groups) for n, a in enumerate(groups[y])
               for b in groups[y][n + 1:]]
        return np.array(out, dtype=np.int64).reshape(-1, 2)

    def static_map(self) -> np.ndarray:
        """(n_traces, n_source_statics + n_receivers) 0/1 matrix: trace static
        = map @ concat(s, r)."""
        M = np.zeros((self.n_traces, self.n_source_statics + self.n_receivers))
        for t, (i, j, _, _) in enumerate(self.traces()):
            M[t, i] = 1.0
            if j >= 0:
                M[t, self.n_source_statics + j] = 1.0
        return M

    def unpack(self, m) -> tuple[np.ndarray, np.ndarray]:
        """Objective coordinates to (s, r)."""
        m = np.asarray(m, dtype=float)
        if self.single_gather:
            return np.concatenate([[0.0], m]), np.zeros(0)
        return m[: self.n_sources].copy(), m[self.n_sources:].copy()

    def pack(self, s, r) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.single_gather:
            return s[1:] - s[0]
        return np.concatenate([s, np.asarray(r, dtype=float)])

    def as_dict(self) -> dict:
        return {"n_sources": self.n_sources, "n_channels": self.n_channels,
                "single_gather": self.single_gather}


@dataclass(frozen=True)
class WaveletParams:
    peak_frequency: float = 25.0
    n_reflectors: int = 12
    margin: int = 64


@dataclass
class TraceSet:
    sample_rate: float
    n_samples: int
    traces: np.ndarray
    true_source_statics: np.ndarray
    true_receiver_statics: np.ndarray
    max_static: float

    def __post_init__(self):
        self.traces = np.asarray(self.traces, dtype=float)
        if self.traces.ndim != 2 or self.traces.shape[1] != self.n_samples:
            raise ValueError("traces must be (n_traces, n_samples)")
        if not np.all(np.isfinite(self.traces)):
            raise ValueError("trace amplitudes must be finite")
        tol = 1e-12 * max(self.max_static, 1.0)
        for st in (self.true_source_statics, self.true_receiver_statics):
            if np.any(np.abs(st) > self.max_static + tol):
                raise ValueError("true statics exceed max_static")


def ricker(peak_frequency: float, dt: float, half_length: int | None = None) -> np.ndarray:
    if half_length is None:
        half_length = int(math.ceil(1.5 / (peak_frequency * dt)))
    t = np.arange(-half_length, half_length + 1) * dt
    a = (math.pi * peak_frequency * t) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def shift_trace(trace: np.ndarray, delay_samples: float) -> np.ndarray:
    """Delay a trace by a (possibly fractional) number of samples with a
    linear phase shift; the shift is circular."""
    n = trace.size
    spec = np.fft.rfft(trace)
    f = np.fft.rfftfreq(n)
    phase = np.exp(-2j * np.pi * f * delay_samples)
    if n % 2 == 0:
        # Nyquist bin must stay real for a real output
        phase[-1] = np.cos(np.pi * delay_samples)
    return np.fft.irfft(spec * phase, n)


def gaussian_smooth(traces: np.ndarray, sigma_samples: float) -> np.ndarray:
    """Zero-phase Gaussian low-pass (circular) of standard deviation
    ``sigma_samples``; sigma 0 returns the input unchanged."""
    if sigma_samples <= 0:
        return np.array(traces, dtype=float, copy=True)
    n = traces.shape[-1]
    w = 2.0 * np.pi * np.fft.rfftfreq(n)
    gain = np.exp(-0.5 * (w * sigma_samples) ** 2)
    return np.fft.irfft(np.fft.rfft(traces, axis=-1) * gain, n, axis=-1)


def base_trace(n_samples: int, dt: float, wavelet: WaveletParams, noise_level: float,
               rng: np.random.Generator) -> np.ndarray:
    refl = np.zeros(n_samples)
    lo, hi = wavelet.margin, n_samples - wavelet.margin
    if hi <= lo:
        raise ValueError("trace too short for the requested margin")
    pos = rng.choice(np.arange(lo, hi), size=min(wavelet.n_reflectors, hi - lo), replace=False)
    refl[np.sort(pos)] = rng.normal(size=pos.size)
    trace = np.convolve(refl, ricker(wavelet.peak_frequency, dt), mode="same")
    if noise_level > 0:
        rms = math.sqrt(float(np.mean(trace**2)))
        trace = trace + noise_level * rms * rng.normal(size=n_samples)
    return trace / math.sqrt(float(np.sum(trace**2)))


@dataclass
class StaticsProblem:
    geometry: StaticsGeometry
    traces: TraceSet
    correlation_window: int | None = None
    params: dict = field(default_factory=dict)
    _tables: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.traces.traces.shape[0] != self.geometry.n_traces:
            raise ValueError("trace count does not match the geometry")
        if self.correlation_window is None:
            # every lag at which two traces can overlap
            self.correlation_window = self.traces.n_samples - 1
        check_window(self.traces.max_static, self.traces.sample_rate,
                     self.correlation_window)
        self.pair_index = self.geometry.pairs()
        # d tau / d m for every pair, tau in samples
        M = self.geometry.static_map()
        if self.geometry.single_gather:
            M = M[:, 1:]
        self.incidence = M[self.pair_index[:, 0]] - M[self.pair_index[:, 1]]

    @property
    def dimension(self) -> int:
        return self.geometry.n_unknowns

    @property
    def dt(self) -> float:
        return self.traces.sample_rate

    def true_model(self) -> np.ndarray:
        """Ground truth in objective coordinates (samples)."""
        return self.geometry.pack(self.traces.true_source_statics,
                                  self.traces.true_receiver_statics) / self.dt

    def bounds(self) -> Bounds:
        b = self.traces.max_static / self.dt
        return Bounds.box(-b, b, self.dimension)

    def correlation_table(self, sigma_samples: float = 0.0) -> "CorrelationTable":
        key = float(sigma_samples)
        with self._lock:
            if key not in self._tables:
                data = gaussian_smooth(self.traces.traces, key)
                self._tables[key] = CorrelationTable.build(
                    data, self.pair_index, self.correlation_window)
            return self._tables[key]

    def trace_columns(self) -> tuple[np.ndarray, np.ndarray]:
        """Objective column holding each trace's source and receiver static
        (-1 where the trace has none, or its static is held at zero)."""
        geom = self.geometry
        src = np.full(geom.n_traces, -1, dtype=np.int64)
        rec = np.full(geom.n_traces, -1, dtype=np.int64)
        for t, (i, j, _, _) in enumerate(geom.traces()):
            if geom.single_gather:
                src[t] = i - 1
            else:
                src[t] = i
                rec[t] = geom.n_sources + j
        return src, rec

    def objective(self, sigma_samples: float = 0.0) -> ObjectiveSpec:
        """Negated, normalised stacking power over objective coordinates.

        Values are divided by ``2 * sum_pairs sqrt(E_a E_b)`` so they lie in
        [-1, 1] whatever the smoothing.
        """
        table = self.correlation_table(sigma_samples)
        src, rec = self.trace_columns()
        pa = np.ascontiguousarray(self.pair_index[:, 0])
        pb = np.ascontiguousarray(self.pair_index[:, 1])
        phi = table.phi
        W = table.window
        scale = table.scale

        def f(X):
            X = np.ascontiguousarray(X, dtype=float)
            val = np.empty(X.shape[0])
            _stack_kernel(X, src, rec, pa, pb, phi, W, val, np.empty((0, 0)), False)
            return -2.0 * val / scale

        def g(X):
            X = np.ascontiguousarray(X, dtype=float)
            val = np.empty(X.shape[0])
            G = np.zeros_like(X)
            _stack_kernel(X, src, rec, pa, pb, phi, W, val, G, True)
            return -2.0 * G / scale

        Z = null_space(self)

        def canonical(X):
            return X - (X @ Z) @ Z.T if Z.size else X

        kind = "statics" if sigma_samples == 0 else "smoothed-statics"
        return ObjectiveSpec(kind, self.dimension, self.bounds(), f, g,
                             parameters={"sigma_samples": float(sigma_samples),
                                         "scale": float(scale)},
                             canonical=canonical)


@numba.njit(cache=True, nogil=True)
def _stack_kernel(X, src, rec, pa, pb, phi, W, val, G, want_grad):
    """Row-wise sum over pairs of the interpolated correlation (and its
    gradient); same interpolant as :meth:`CorrelationTable.evaluate`."""
    B, n = X.shape
    n_traces = src.shape[0]
    P = pa.shape[0]
    T = np.empty(n_traces)
    lo = 1.0
    hi = 2.0 * W - 1.0
    for row in range(B):
        for t in range(n_traces):
            acc = 0.0
            if src[t] >= 0:
                acc += X[row, src[t]]
            if rec[t] >= 0:
                acc += X[row, rec[t]]
            T[t] = acc
        total = 0.0
        for p in range(P):
            a = pa[p]
            b = pb[p]
            u = T[a] - T[b] + W
            clamped = False
            if u < lo:
                u = lo
                clamped = True
            elif u > hi:
                u = hi
                clamped = True
            k = int(np.floor(u))
            if k > 2 * W - 2:
                k = 2 * W - 2
            t = u - k
            p0 = phi[p, k - 1]
            p1 = phi[p, k]
            p2 = phi[p, k + 1]
            p3 = phi[p, k + 2]
            c1 = p2 - p0
            c2 = 2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3
            c3 = 3.0 * (p1 - p2) + p3 - p0
            total += p1 + 0.5 * t * (c1 + t * (c2 + t * c3))
            if want_grad and not clamped:
                d = 0.5 * (c1 + t * (2.0 * c2 + 3.0 * t * c3))
                if src[a] >= 0:
                    G[row, src[a]] += d
                if rec[a] >= 0:
                    G[row, rec[a]] += d
                if src[b] >= 0:
                    G[row, src[b]] -= d
                if rec[b] >= 0:
                    G[row, rec[b]] -= d
        val[row] = total


@dataclass
class CorrelationTable:
    """Integer-lag cross-correlations for every pair, lags -W..W."""

    phi: np.ndarray
    window: int
    scale: float
    clamped: int = 0

    @classmethod
    def build(cls, traces: np.ndarray, pairs: np.ndarray, window: int) -> "CorrelationTable":
        n = traces.shape[1]
        nfft = 1 << int(math.ceil(math.log2(n + window + 1)))
        spec = np.fft.rfft(traces, nfft, axis=1)
        a, b = pairs[:, 0], pairs[:, 1]
        # phi_ab(tau) = sum_t a(t + tau) b(t)
        full = np.fft.irfft(spec[a] * np.conj(spec[b]), nfft, axis=1)
        lags = np.arange(-window, window + 1)
        phi = full[:, lags % nfft]
        energy = np.sum(traces**2, axis=1)
        scale = 2.0 * float(np.sum(np.sqrt(energy[a] * energy[b])))
        return cls(np.ascontiguousarray(phi), window, scale if scale > 0 else 1.0)

    def evaluate(self, tau: np.ndarray, derivative: bool = False):
        """Catmull-Rom interpolation of each pair's correlation at ``tau``
        (shape (B, P), samples).  Lags outside +-(W-1) are clamped."""
        W = self.window
        u = tau + W
        lo, hi = 1.0, 2.0 * W - 1.0
        out = (u < lo) | (u > hi)
        if np.any(out):
            self.clamped += int(np.count_nonzero(out))
            u = np.clip(u, lo, hi)
        k = np.minimum(np.floor(u).astype(np.int64), 2 * W - 2)
        t = u - k
        width = 2 * W + 1
        base = np.arange(self.phi.shape[0]) * width + k
        flat = self.phi.ravel()
        p0, p1, p2, p3 = (flat[base - 1], flat[base], flat[base + 1], flat[base + 2])
        c1 = p2 - p0
        c2 = 2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3
        c3 = 3.0 * (p1 - p2) + p3 - p0
        val = p1 + 0.5 * t * (c1 + t * (c2 + t * c3))
        if not derivative:
            return val, None
        d = 0.5 * (c1 + t * (2.0 * c2 + 3.0 * t * c3))
        if np.any(out):
            d = np.where(out, 0.0, d)
        return val, d

    def power(self, tau: np.ndarray) -> np.ndarray:
        """Stacking power: ordered pairs, i.e. twice the unordered sum."""
        val, _ = self.evaluate(tau)
        return 2.0 * np.sum(val, axis=1)


def check_window(max_static: float, dt: float, window: int) -> None:
    """Pair lags of the true statics reach 4 * max_static; they must be
    interpolable inside the tabulated window."""
    if window < 2:
        raise ValueError("correlation_window must be >= 2")
    if 4.0 * max_static / dt > window - 1:
        raise ValueError(
            f"max_static {max_static} s gives pair lags up to "
            f"{4 * max_static / dt:.1f} samples, beyond the correlation window "
            f"of {window} samples")


def generate_problem(geometry: StaticsGeometry | None = None, seed: int = 0,
                     wavelet: WaveletParams | None = None, noise_level: float = 0.0,
                     max_static: float = 0.040, sample_rate: float = 0.004,
                     n_samples: int = 512, correlation_window: int | None = None,
                     zero_statics: bool = False) -> StaticsProblem:
    """Synthetic gathers: one base trace delayed by source plus receiver
    statics drawn uniformly on [-max_static, max_static]."""
    geometry = geometry or StaticsGeometry()
    wavelet = wavelet or WaveletParams()
    if correlation_window is None:
        correlation_window = n_samples - 1
    check_window(max_static, sample_rate, correlation_window)
    base = base_trace(n_samples, sample_rate, wavelet, noise_level,
                      substream(seed, 0, DOMAIN_STATICS))
    rng = substream(seed, 1, DOMAIN_STATICS)
    ns, nr = geometry.n_source_statics, geometry.n_receivers
    if zero_statics:
        s, r = np.zeros(ns), np.zeros(nr)
    else:
        s = rng.uniform(-max_static, max_static, ns)
        r = rng.uniform(-max_static, max_static, nr)
        if geometry.single_gather:
            s[0] = 0.0
    T = geometry.static_map() @ np.concatenate([s, r])
    traces = np.array([shift_trace(base, t / sample_rate) for t in T])
    ts = TraceSet(sample_rate, n_samples, traces, s, r, max_static)
    params = {
        "seed": int(seed),
        "geometry": geometry.as_dict(),
        "wavelet": {"peak_frequency": wavelet.peak_frequency,
                    "n_reflectors": wavelet.n_reflectors, "margin": wavelet.margin},
        "noise_level": float(noise_level),
        "max_static": float(max_static),
        "sample_rate": float(sample_rate),
        "n_samples": int(n_samples),
        "correlation_window": int(correlation_window),
        "zero_statics": bool(zero_statics),
    }
    return StaticsProblem(geometry, ts, correlation_window, params)


def stacking_power(problem: StaticsProblem, s, r, sigma_samples: float = 0.0) -> float:
    """Stacking power (to be maximised) for source statics ``s`` and receiver
    statics ``r`` in seconds."""
    geom = problem.geometry
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    if s.shape != (geom.n_source_statics,) or r.shape != (geom.n_receivers,):
        raise ValueError("s and r must match the geometry")
    T = geom.static_map() @ np.concatenate([s, r]) / problem.dt
    pairs = problem.pair_index
    tau = (T[pairs[:, 0]] - T[pairs[:, 1]])[None, :]
    return float(problem.correlation_table(sigma_samples).power(tau)[0])


def null_space(problem: StaticsProblem) -> np.ndarray:
    """Orthonormal basis (columns) of statics changes that leave every pair
    lag unchanged."""
    _, sv, vt = np.linalg.svd(problem.incidence, full_matrices=True)
    rank = int(np.sum(sv > sv.max() * 1e-10)) if sv.size else 0
    return vt[rank:].T


def score_recovery(problem: StaticsProblem, s, r) -> float:
    """RMS error in samples between recovered and true statics after
    removing every component the objective cannot see (the constant gauge
    shift among them)."""
    est = problem.geometry.pack(s, r) / problem.dt
    err = est - problem.true_model()
    Z = null_space(problem)
    if Z.size:
        err = err - Z @ (Z.T @ err)
    return float(np.sqrt(np.mean(err**2)))


# ---------------------------------------------------------------------------
# file format


def write_problem(problem: StaticsProblem, path) -> tuple[Path, Path]:
    """Binary trace file plus JSON sidecar (``<path>.json``)."""
    geom = problem.geometry
    if geom.single_gather:
        raise ValueError("only standard source/receiver layouts can be written")
    ts = problem.traces
    path = Path(path)
    header = HEADER.pack(MAGIC, geom.n_sources, geom.n_channels, ts.n_samples,
                         ts.sample_rate, ts.max_static)
    with open(path, "wb") as fh:
        fh.write(header.ljust(HEADER_SIZE, b"\0"))
        fh.write(np.ascontiguousarray(ts.true_source_statics, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ts.true_receiver_statics, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ts.traces, dtype="<f8").tobytes())
    side = path.with_name(path.name + ".json")
    meta = dict(problem.params)
    meta["correlation_window"] = problem.correlation_window
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, side


def read_problem(path, correlation_window: int | None = None) -> StaticsProblem:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE:
        raise ValueError("file too short for a trace-set header")
    magic, ns, nc, n, dt, max_static = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    geom = StaticsGeometry(ns, nc)
    nr = geom.n_receivers
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE)
    expect = ns + nr + geom.n_traces * n
    if body.size != expect:
        raise ValueError(f"expected {expect} values after the header, found {body.size}")
    s = body[:ns].astype(float)
    r = body[ns:ns + nr].astype(float)
    traces = body[ns + nr:].reshape(geom.n_traces, n).astype(float)
    params = {}
    side = path.with_name(path.name + ".json")
    if side.exists():
        params = json.loads(side.read_text())
    if correlation_window is None:
        correlation_window = params.get("correlation_window")
    ts = TraceSet(dt, n, traces, s, r, max_static)
    return StaticsProblem(geom, ts, correlation_window, params)
