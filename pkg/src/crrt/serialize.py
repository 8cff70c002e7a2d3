"""Flat binary container for fitted transform models.

Layout (all little-endian; ``u32``/``i32`` are 4-byte integers, every
matrix is a row-major block of 8-byte IEEE floats)::

    magic        8 bytes   b"CRRTMODL"
    version      u32       FORMAT_VERSION
    fit_mode     u32       index into FIT_MODES
    ortho_mode   u32       index into ORTHO_MODES
    m            u32       signal dimension
    p            u32       number of terms
    flags        u32       bit 0: rank factors present, bit 1: lifts present
    p x term record:
        n_k        u32     view dimension
        eta_req    i32     requested rank (-1 when unconstrained)
        eta_kept   i32     retained rank  (-1 when unconstrained)
        n_sv       u32     number of recorded singular values
        term_flags u32     bit 0: F_k carries a null-space part
    p x lift record (if flags bit 1):
        kind       u32     LiftKind value
        param      i32
    trace_exx    f64
    f0           m
    mean_x       m
    mean_v_k     n_k                      for every k
    per term k:  F_k (m x n_k), singular values (n_sv), gain (1),
                 B1_k (m x eta_kept), B2_k (eta_kept x n_k) if factors present
    scales       p
    ortho_mode sample_qr:  stack map (N x N), offset (N), N = sum n_k
    otherwise:   whitening W_i (n_i x n_i) for i = 1..p, then
                 C_ik (n_i x n_k) for i = 2..p, k = 1..i-1

The training views are not stored; a loaded model predicts, compresses
and decompresses but cannot recompute its training report.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ModelFormatError
from .lifting import LiftKind, LiftSpec
from .ortho import OrthoMode, OrthoSystem
from .transform import FitMode, Term, TransformModel

MAGIC = b"CRRTMODL"
FORMAT_VERSION = 1
FIT_MODES = list(FitMode)
ORTHO_MODES = list(OrthoMode)
SERIALIZABLE_LIFTS = (LiftKind.IDENTITY, LiftKind.HADAMARD_POWER, LiftKind.COSINE)


def _f64(parts, a):
    parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())


def dumps(model: TransformModel) -> bytes:
    sys = model.ortho
    has_lifts = model.lifts is not None
    if has_lifts and any(s.kind not in SERIALIZABLE_LIFTS for s in model.lifts):
        raise ModelFormatError("only identity, power and cosine lifts can be serialized")
    factorized = model.factorized
    flags = int(factorized) | (int(has_lifts) << 1)
    parts = [MAGIC, struct.pack(
        "<6I", FORMAT_VERSION, FIT_MODES.index(model.mode),
        ORTHO_MODES.index(sys.mode), model.m, model.p, flags,
    )]
    for t, n in zip(model.terms, sys.dims):
        req = -1 if t.eta_requested is None else t.eta_requested
        kept = -1 if t.eta_kept is None else t.eta_kept
        parts.append(struct.pack("<IiiII", n, req, kept, t.singular_values.size,
                                 int(t.has_null_part)))
    if has_lifts:
        for s in model.lifts:
            parts.append(struct.pack("<Ii", int(s.kind), s.param))
    parts.append(struct.pack("<d", model.trace_exx))
    _f64(parts, model.f0)
    _f64(parts, model.mean_x)
    for mv in model.mean_vs:
        _f64(parts, mv)
    for t in model.terms:
        _f64(parts, t.F)
        _f64(parts, t.singular_values)
        _f64(parts, [t.gain])
        if factorized:
            _f64(parts, t.B1)
            _f64(parts, t.B2)
    _f64(parts, sys.scales)
    if sys.mode == OrthoMode.SAMPLE_QR:
        _f64(parts, sys.stack_map)
        _f64(parts, sys.offset)
    else:
        for W in sys.whiten:
            _f64(parts, W)
        for i in range(1, sys.p):
            for k in range(i):
                _f64(parts, sys.coefs[(i, k)])
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise ModelFormatError(
                f"model file truncated at byte {self.pos} (needed {n} more bytes)"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, *shape):
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)
        return a.reshape(shape) if shape else a[0]


def loads(buf: bytes) -> TransformModel:
    r = _Reader(buf)
    magic = bytes(r.take(8))
    if magic != MAGIC:
        raise ModelFormatError(f"not a model file (magic {magic!r}, expected {MAGIC!r})")
    version, fm, om, m, p, flags = r.unpack("<6I")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version} (this build reads version "
            f"{FORMAT_VERSION})"
        )
    if fm >= len(FIT_MODES) or om >= len(ORTHO_MODES) or p == 0 or m == 0:
        raise ModelFormatError(
            f"corrupted header in format version {version}: "
            f"fit_mode={fm} ortho_mode={om} m={m} p={p}"
        )
    mode, omode = FIT_MODES[fm], ORTHO_MODES[om]
    factorized = bool(flags & 1)
    records = [r.unpack("<IiiII") for _ in range(p)]
    dims = tuple(rec[0] for rec in records)
    lifts = None
    if flags & 2:
        lifts = []
        for _ in range(p):
            kind, param = r.unpack("<Ii")
            try:
                lifts.append(LiftSpec(LiftKind(kind), param))
            except ValueError as exc:
                raise ModelFormatError(f"bad lift record: {exc}") from None
    trace_exx = r.floats()
    f0 = r.floats(m)
    mean_x = r.floats(m)
    mean_vs = [r.floats(n) for n in dims]
    terms = []
    for (n, req, kept, n_sv, tflags) in records:
        F = r.floats(m, n)
        sv = r.floats(n_sv)
        gain = float(r.floats(1)[0])
        B1 = B2 = None
        if factorized:
            B1 = r.floats(m, kept)
            B2 = r.floats(kept, n)
        terms.append(Term(F, gain, sv, None if req < 0 else req, None if kept < 0 else kept,
                          B1, B2, bool(tflags & 1)))
    scales = tuple(float(s) for s in r.floats(p))
    coefs, whiten, stack_map, offset = {}, [], None, None
    if omode == OrthoMode.SAMPLE_QR:
        N = sum(dims)
        stack_map = r.floats(N, N)
        offset = r.floats(N)
        whiten = [np.eye(n) for n in dims]
    else:
        whiten = [r.floats(n, n) for n in dims]
        for i in range(1, p):
            for k in range(i):
                coefs[(i, k)] = r.floats(dims[i], dims[k])
    if r.pos != len(r.buf):
        raise ModelFormatError(f"{len(r.buf) - r.pos} trailing bytes after model payload")
    sys = OrthoSystem([], omode, coefs, whiten, dims, scales, stack_map, offset, {})
    return TransformModel(f0, terms, mode, sys, mean_x, mean_vs, trace_exx, lifts)


def save(model: TransformModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load(path) -> TransformModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
