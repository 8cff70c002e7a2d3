"""Command-line driver: ``crrt {fit,apply,compress,decompress,compare,selftest}``.

Matrices are CSV files with one row per vector component and one column
per realization (``--transpose`` flips this for both input and output).
A first row containing any non-numeric cell is treated as a header.

Exit codes: 0 success, 2 input error, 3 numerical error or failed check.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field

import numpy as np

from . import acceptance, baselines, ortho, serialize, transform
from .empirical import Ensemble, mse
from .errors import CRRTError, InputError, NumericalError, SingularCovariance
from .lifting import LiftSpec, apply_lift

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
CODE_MAGIC = "crrt-code"
CODE_VERSION = 1
DEFAULT_TOLS = {
    "identity_rtol": transform.IDENTITY_RTOL,
    "compare_atol": baselines.IDENTITY_ATOL,
}


# ---------------------------------------------------------------- CSV I/O


def read_matrix(path, transpose=False) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    numbered = list(enumerate(rows, start=1))
    if numbered and numbered[0][1] and not _numeric_row(numbered[0][1]):
        numbered = numbered[1:]
    if any(r for _, r in numbered):
        while numbered and not numbered[-1][1]:
            numbered.pop()
    if not numbered:
        raise InputError(f"{path}: no data rows")
    width = len(numbered[0][1])
    out = np.empty((len(numbered), width))
    for i, (line, row) in enumerate(numbered):
        if len(row) != width:
            raise InputError(f"{path}:{line}: expected {width} fields, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise InputError(f"{path}:{line}: cannot parse {cell.strip()!r} as a number") from None
    if not np.all(np.isfinite(out)):
        raise InputError(f"{path}: non-finite values present")
    return out.T.copy() if transpose else out


def _numeric_row(row):
    try:
        [float(c) for c in row]
    except ValueError:
        return False
    return True


def format_matrix(M: np.ndarray, transpose=False) -> str:
    M = np.asarray(M, dtype=float)
    if transpose:
        M = M.T
    buf = io.StringIO()
    for row in M:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


# ---------------------------------------------------------------- config


def _parse_bool(text, key):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"{key}: expected a boolean, got {text!r}")


@dataclass
class PipelineConfig:
    """Settings read from a ``key = value`` file.

    Keys: ``p``, ``etas`` (comma-separated ranks or ``unconstrained``),
    repeated ``lift`` lines ordered by k, ``ortho_mode`` and ``center``
    (sample_qr only) plus ``tol.<name>`` overrides.
    """

    p: int | None = None
    etas: tuple | None = None
    lifts: list | None = None
    ortho_mode: ortho.OrthoMode = ortho.OrthoMode.ORTHOGONAL
    center: bool = True
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLS))

    @classmethod
    def parse(cls, text, source="<config>"):
        cfg = cls()
        lifts = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{source}:{line_no}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            where = f"{source}:{line_no}"
            try:
                if key == "p":
                    cfg.p = int(value)
                elif key == "etas":
                    if value.lower() == "unconstrained":
                        cfg.etas = None
                    else:
                        cfg.etas = tuple(int(v) for v in value.replace(",", " ").split())
                elif key == "lift":
                    lifts.append(LiftSpec.parse(value))
                elif key == "ortho_mode":
                    cfg.ortho_mode = ortho.OrthoMode(value)
                elif key == "center":
                    cfg.center = _parse_bool(value, key)
                elif key.startswith("tol."):
                    cfg.set_tolerance(key[4:], value)
                else:
                    raise InputError(f"unknown key {key!r}")
            except (InputError, ValueError) as exc:
                raise InputError(f"{where}: {exc}") from None
        cfg.lifts = lifts or None
        cfg.validate()
        return cfg

    def set_tolerance(self, name, value):
        if name not in DEFAULT_TOLS:
            raise InputError(f"unknown tolerance {name!r} (known: {', '.join(DEFAULT_TOLS)})")
        self.tolerances[name] = float(value)

    def validate(self):
        n_l = None if self.lifts is None else len(self.lifts)
        n_e = None if self.etas is None else len(self.etas)
        if n_l is not None and n_e is not None and n_l != n_e:
            raise InputError(f"config lists {n_l} lifts but {n_e} etas")
        for name, count in (("lifts", n_l), ("etas", n_e)):
            if self.p is not None and count is not None and count != self.p:
                raise InputError(f"p = {self.p} but config lists {count} {name}")
        if self.p is not None and self.p < 1:
            raise InputError("p must be at least 1")

    def resolved_lifts(self):
        if self.lifts is not None:
            return list(self.lifts)
        p = self.p or (len(self.etas) if self.etas is not None else 1)
        return [LiftSpec.identity()] + [LiftSpec.power(k) for k in range(2, p + 1)]


def load_config(args) -> PipelineConfig:
    if args.config is None:
        cfg = PipelineConfig()
    else:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"{args.config}: {exc.strerror}") from None
        cfg = PipelineConfig.parse(text, args.config)
    for item in (args.tol_overrides or "").split(","):
        if item.strip():
            if "=" not in item:
                raise InputError(f"--tol-overrides: expected name=value, got {item!r}")
            name, value = item.split("=", 1)
            try:
                cfg.set_tolerance(name.strip(), value)
            except ValueError:
                raise InputError(f"--tol-overrides: bad value {value!r}") from None
    return cfg


# ---------------------------------------------------------------- reports


def format_report(rows, header, pairs) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(c).rjust(w) for c, w in zip(r, widths)) for r in [header, *rows]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append("")
    lines.extend(f"{k}: {_fmt(v)}" for k, v in pairs)
    return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(str(e) for e in v)
    return str(v)


def _load_pair(args):
    if args.x is None or args.y is None:
        raise InputError("both --x and --y are required")
    X = read_matrix(args.x, args.transpose)
    Y = read_matrix(args.y, args.transpose)
    if X.shape[1] != Y.shape[1]:
        raise InputError(
            f"{args.x} has {X.shape[1]} realizations but {args.y} has {Y.shape[1]}"
        )
    if X.shape[1] == 0:
        raise InputError("training data needs at least one realization")
    y = Ensemble(Y, label="y")
    return y.with_data(X, "x"), y


def _build_system(cfg, us):
    if cfg.ortho_mode == ortho.OrthoMode.ORTHONORMAL:
        return ortho.orthonormalize(us)
    if cfg.ortho_mode == ortho.OrthoMode.SAMPLE_QR:
        return ortho.qr_orthogonalize(us, center=cfg.center)
    return ortho.orthogonalize(us)


def cmd_fit(args) -> int:
    cfg = load_config(args)
    x, y = _load_pair(args)
    lifts = cfg.resolved_lifts()
    sys_ = _build_system(cfg, [apply_lift(s, y) for s in lifts])
    model = transform.fit(x, sys_, cfg.etas, lifts=lifts)
    rep = transform.error_report(model, x)
    if args.model:
        serialize.save(model, args.model)
    tol = cfg.tolerances["identity_rtol"] * (1.0 + rep.trace_exx)
    rows = [
        (k + 1, str(s), n, _fmt(t.eta_requested), _fmt(t.eta_kept), f"{t.gain:.6g}")
        for k, (s, n, t) in enumerate(zip(lifts, model.dims, model.terms))
    ]
    pairs = [
        ("mode", str(model.mode)), ("ortho_mode", str(sys_.mode)),
        ("m", x.d), ("n", y.d), ("p", model.p), ("q", x.q),
        ("trace_exx", rep.trace_exx),
        ("theoretical_error", rep.theoretical), ("empirical_error", rep.empirical),
        ("identity_residual", rep.identity_residual), ("identity_tolerance", tol),
        ("compression_ratio", rep.compression_ratio),
        ("code_length", transform.code_length(model) if model.factorized else None),
        ("model", args.model),
    ]
    write_text(args.out, format_report(rows, ("k", "lift", "n_k", "eta", "eta_kept", "gain"), pairs))
    if rep.identity_residual > tol:
        print(f"error: identity residual {rep.identity_residual:.3e} exceeds {tol:.3e}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _require(args, *names):
    missing = [f"--{n}" for n in names if getattr(args, n) is None]
    if missing:
        raise InputError(f"{args.command} needs {' and '.join(missing)}")


def cmd_apply(args) -> int:
    _require(args, "model", "y")
    model = serialize.load(args.model)
    Y = read_matrix(args.y, args.transpose)
    xhat = transform.predict(model, Y)
    write_text(args.out, format_matrix(xhat, args.transpose))
    if args.x is not None:
        X = read_matrix(args.x, args.transpose)
        if X.shape != xhat.shape:
            raise InputError(f"{args.x} has shape {X.shape}, predictions have {xhat.shape}")
        err = mse(Ensemble(X), Ensemble(xhat))
        print(f"empirical_error: {err!r}", file=sys.stderr)
    return EXIT_OK


def format_code(code: np.ndarray) -> str:
    total, q = code.shape
    lines = [f"{CODE_MAGIC} {CODE_VERSION} {total} {q}"]
    lines.extend(",".join(repr(float(v)) for v in col) for col in code.T)
    return "\n".join(lines) + "\n"


def read_code(path) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    head = lines[0].split()
    if len(head) != 4 or head[0] != CODE_MAGIC:
        raise InputError(f"{path}:1: not a code file")
    if head[1] != str(CODE_VERSION):
        raise InputError(f"{path}:1: unsupported code file version {head[1]}")
    try:
        total, q = int(head[2]), int(head[3])
    except ValueError:
        raise InputError(f"{path}:1: malformed header") from None
    body = lines[1 : 1 + q]
    if len(body) < q:
        raise InputError(f"{path}: expected {q} realizations, found {len(body)}")
    code = np.empty((total, q))
    for j, line in enumerate(body):
        cells = line.split(",") if line else []
        if len(cells) != total:
            raise InputError(f"{path}:{j + 2}: expected {total} values, found {len(cells)}")
        try:
            code[:, j] = [float(c) for c in cells]
        except ValueError:
            raise InputError(f"{path}:{j + 2}: non-numeric value") from None
    return code


def cmd_compress(args) -> int:
    _require(args, "model", "y")
    model = serialize.load(args.model)
    code = transform.compress(model, read_matrix(args.y, args.transpose))
    write_text(args.out, format_code(code))
    ratio = transform.compression_ratio(model)
    print(f"code_length: {code.shape[0]}\ncompression_ratio: {ratio!r}", file=sys.stderr)
    return EXIT_OK


def cmd_decompress(args) -> int:
    _require(args, "model", "code")
    model = serialize.load(args.model)
    xhat = transform.decompress(model, read_code(args.code))
    write_text(args.out, format_matrix(xhat, args.transpose))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args)
    x, y = _load_pair(args)
    if cfg.ortho_mode == ortho.OrthoMode.SAMPLE_QR:
        raise InputError("compare supports ortho_mode orthogonal or orthonormal")
    lifts = cfg.resolved_lifts()
    rep = baselines.compare(x, y, budget=cfg.etas, lifts=lifts,
                           mode=cfg.ortho_mode.value, check=False)
    rows = [("wiener", rep.wiener_error), ("T_p unconstrained", rep.tp_error)]
    if rep.klt_error is not None:
        rows += [("klt", rep.klt_error), ("T_p constrained", rep.tp_constrained_error),
                 (f"volterra2 (rank {rep.volterra_rank})", rep.volterra2_error)]
    table = [(name, repr(float(v))) for name, v in rows]
    residuals = rep.residuals()
    pairs = [
        ("p", len(lifts)), ("etas", cfg.etas if cfg.etas is not None else "unconstrained"),
        ("trace_exx", rep.trace_exx), ("wiener_error", rep.wiener_error),
        ("tp_error", rep.tp_error), ("gap_wiener", rep.gap_wiener),
        ("klt_error", rep.klt_error), ("tp_constrained_error", rep.tp_constrained_error),
        ("gap_klt", rep.gap_klt), ("volterra2_error", rep.volterra2_error),
        ("volterra_rank", rep.volterra_rank), ("delta_p", rep.delta_p),
        *residuals.items(),
    ]
    write_text(args.out, format_report(table, ("estimator", "error"), pairs))
    tol = cfg.tolerances["compare_atol"] * max(1.0, rep.trace_exx)
    bad = [k for k, v in residuals.items() if v > tol]
    if bad:
        print(f"error: {', '.join(bad)} above {tol:.3e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = acceptance.run_all(args.seed)
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} suites passed (seed {args.seed})")
    write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_OK if passed == len(results) else EXIT_NUMERICAL


COMMANDS = {
    "fit": (cmd_fit, "fit a transform and write the model file"),
    "apply": (cmd_apply, "predict x from observations with a saved model"),
    "compress": (cmd_compress, "encode observations into rank-reduced codes"),
    "decompress": (cmd_decompress, "reconstruct estimates from a code file"),
    "compare": (cmd_compare, "compare Wiener, KLT, degree-2 Volterra and T_p"),
    "selftest": (cmd_selftest, "run the invariant suites on seeded synthetic data"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crrt", description="Fit, apply and compare combined reduced-rank transforms.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--x", help="reference signal CSV (m rows)")
        p.add_argument("--y", help="observation CSV (n rows)")
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--model", help="model file (written by fit, read otherwise)")
        p.add_argument("--code", help="code file read by decompress")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--transpose", action="store_true",
                       help="CSV rows are realizations instead of components")
        p.add_argument("--seed", type=int, default=0, help="seed for selftest data")
        p.add_argument("--tol-overrides", metavar="NAME=V,...",
                       help=f"override tolerances ({', '.join(DEFAULT_TOLS)})")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except SingularCovariance as exc:
        print(f"error: {exc}\nhint: set 'ortho_mode = orthogonal' in the config", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, CRRTError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
