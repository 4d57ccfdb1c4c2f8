"""Command line driver.

Four commands share one JSON config file:

    psdo check    --config cfg.json
    psdo quantize --config cfg.json [--out DIR]
    psdo index    --config cfg.json [--format csv]
    psdo verify   [--config cfg.json] [--seed N] [--only SUITE]

Config schema (CONFIG_SCHEMA below; every field is optional unless the
command requires it):

    seed      int, default 0
    geometry  descriptor dict, see psdo.geometry.build_geometry
    symbol    DSL source for the generating family or circle symbol
    interior  DSL source overriding the extracted interior symbol
              (check only; lets a config carry an incompatible tuple)
    v         float edge parameter
    sizes     section ladder for index, default [64, 128, 256]
    tau_coef  artifact threshold coefficient, default 1e-4
    tip       DSL source for the winding oracle factor (index only;
              default is the symbol with r, w, eta, x frozen to 0)
    only      suite name filter for verify
    out       output directory
    format    "report" or "csv"

Reports are JSON. Everything outside the "volatile" block (timestamp,
wall times) is deterministic for a fixed config and seed; byte-identity
is checked on the report with that block removed. Files are written
atomically (temp file in the target directory, then rename).

Exit codes: 0 ok, 2 compatibility failure, 3 ellipticity failure,
4 indeterminate sections, 5 index/oracle inconsistency, 64 config or
schema error, 65 DSL parse error (message carries the byte offset),
74 output I/O error. Verification failures exit 1.

PSDO_THREADS caps suite parallelism in verify (default 1).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import struct
import sys
import tempfile
import time
import warnings
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from psdo.fredholm import (
    FredholmError,
    check_elliptic,
    extract_tuple,
    finite_section,
    winding_oracle,
)
from psdo.geometry import (
    Circle,
    Cone,
    Edge,
    GeometryError,
    build_geometry,
    describe_geometry,
)
from psdo.quantize import QuantizeError, op_circle, op_edge, op_mellin
from psdo.symbols import (
    ConeSymbolFamily,
    EdgeSymbol,
    InteriorSymbol,
    SymbolError,
    SymbolTuple,
    compat_check,
)
from psdo.symexpr import Const, ParseError, parse, shape_of, substitute
from psdo.verify import VerifyError, run_suites

__all__ = [
    "CONFIG_SCHEMA",
    "CONTAINER_MAGIC",
    "CONTAINER_VERSION",
    "ConfigError",
    "EXIT_OK",
    "EXIT_COMPAT",
    "EXIT_ELLIPTIC",
    "EXIT_INDETERMINATE",
    "EXIT_INCONSISTENT",
    "EXIT_FAIL",
    "EXIT_CONFIG",
    "EXIT_PARSE",
    "EXIT_IO",
    "canonical_report_bytes",
    "cmd_check",
    "cmd_index",
    "cmd_quantize",
    "cmd_verify",
    "main",
    "read_container",
    "write_container",
]

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_COMPAT = 2
EXIT_ELLIPTIC = 3
EXIT_INDETERMINATE = 4
EXIT_INCONSISTENT = 5
EXIT_CONFIG = 64
EXIT_PARSE = 65
EXIT_IO = 74

CONTAINER_MAGIC = b"PSDO"
CONTAINER_VERSION = 1

CONFIG_SCHEMA = {
    "seed": "int >= 0, default 0",
    "geometry": "geometry descriptor dict (circle / cone / edge)",
    "symbol": "DSL source string",
    "interior": "DSL source string overriding the interior symbol (check)",
    "v": "float edge parameter",
    "sizes": "list of section sizes (index), default [64, 128, 256]",
    "tau_coef": "float artifact threshold coefficient, default 1e-4",
    "tip": "DSL source for the winding oracle factor (index)",
    "only": "suite name (verify)",
    "out": "output directory",
    "format": "'report' or 'csv'",
}

_KNOWN_KEYS = frozenset(CONFIG_SCHEMA)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config and report plumbing


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def make_report(command: str, cfg: dict, seed: int, result: dict, t0: float) -> dict:
    return {
        "command": command,
        "config_digest": config_digest(cfg),
        "seed": seed,
        "result": result,
        "volatile": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "elapsed_s": round(time.perf_counter() - t0, 6),
        },
    }


def canonical_report_bytes(report: dict) -> bytes:
    """Deterministic serialization: the volatile block is dropped."""
    body = {k: v for k, v in report.items() if k != "volatile"}
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".psdo-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# Binary container


def write_container(path: str, op) -> None:
    """magic, u32 LE version, u32 LE descriptor length, descriptor JSON,
    then the matrix row-major as little-endian (re, im) float64 pairs."""
    desc = {
        "geometry": describe_geometry(op.geometry),
        "v": op.v,
        "interior": bool(op.interior),
        "dim": int(op.matrix.shape[0]),
    }
    blob = json.dumps(desc, sort_keys=True, separators=(",", ":")).encode()
    payload = op.matrix.astype("<c16").tobytes(order="C")
    data = (
        CONTAINER_MAGIC
        + struct.pack("<I", CONTAINER_VERSION)
        + struct.pack("<I", len(blob))
        + blob
        + payload
    )
    atomic_write(path, data)


def read_container(path: str) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CONTAINER_MAGIC:
        raise ConfigError("not a PSDO container (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CONTAINER_VERSION:
        raise ConfigError(f"unsupported container version {version}")
    (length,) = struct.unpack_from("<I", data, 8)
    desc = json.loads(data[12 : 12 + length].decode("utf-8"))
    n = int(desc["dim"])
    body = data[12 + length :]
    if len(body) != n * n * 16:
        raise ConfigError("container payload truncated")
    matrix = np.frombuffer(body, dtype="<c16").reshape(n, n).copy()
    return desc, matrix


# ---------------------------------------------------------------------------
# Commands


def _require(cfg: dict, key: str) -> object:
    if key not in cfg:
        raise ConfigError(f"config needs {key!r} for this command")
    return cfg[key]


def _probe_cone(cfg: dict) -> Cone:
    desc = cfg.get(
        "geometry", {"kind": "cone", "T": 6.0, "n_t": 64, "boundary": "interval"}
    )
    g = build_geometry(desc)
    if not isinstance(g, Cone):
        raise ConfigError("this command needs a cone geometry")
    return g


def cmd_check(cfg: dict) -> tuple[dict, int]:
    """compat_check then check_elliptic on the configured tuple."""
    expr = parse(str(_require(cfg, "symbol")))
    cone = _probe_cone(cfg)
    fam = ConeSymbolFamily(expr, q=shape_of(expr))
    if cone.q != fam.q:
        cone = Cone(cone.base, T=cone.T, n_t=cone.n_t, boundary=cone.boundary, q=fam.q)
    t = extract_tuple(fam, cone=cone)
    if "interior" in cfg:
        s0 = InteriorSymbol(parse(str(cfg["interior"])), q=fam.q)
        t = SymbolTuple(s0, EdgeSymbol(fam, cone), tol=t.tol)
    comp = compat_check(t)
    result: dict = {
        "compat": {
            "mismatch": comp.mismatch,
            "tol": comp.tol,
            "passed": comp.passed,
        }
    }
    if not comp.passed:
        result["verdict"] = "incompatible"
        return result, EXIT_COMPAT
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # compat already gated above
        ell = check_elliptic(t)
    result["ellipticity"] = {
        "interior_min": ell.interior_min,
        "conormal_min": ell.conormal_min,
        "large_p_pass": ell.large_p_pass,
        "overall": ell.overall,
    }
    if not ell.overall:
        result["verdict"] = "not elliptic"
        return result, EXIT_ELLIPTIC
    result["verdict"] = "elliptic"
    return result, EXIT_OK


def cmd_quantize(cfg: dict, out_dir: Optional[str]) -> tuple[dict, int]:
    """Quantize the configured symbol and write the container."""
    expr = parse(str(_require(cfg, "symbol")))
    g = build_geometry(_require(cfg, "geometry"))
    v = cfg.get("v")
    if isinstance(g, Circle):
        op = op_circle(g, expr, None if v is None else float(v))
    elif isinstance(g, Cone):
        op = op_mellin(g, expr, v=0.0 if v is None else float(v))
    elif isinstance(g, Edge):
        op = op_edge(g, expr, v=0.0 if v is None else float(v))
    else:
        raise ConfigError("quantization needs a circle, cone, or edge geometry")
    target = os.path.join(out_dir or ".", "operator.psdo")
    try:
        os.makedirs(out_dir or ".", exist_ok=True)
        write_container(target, op)
        with open(target, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()
    except OSError as e:
        return {"verdict": "io-error", "error": str(e)}, EXIT_IO
    result = {
        "container": target,
        "sha256": digest,
        "dim": int(op.matrix.shape[0]),
        "norm": op.norm(),
        "verdict": "written",
    }
    return result, EXIT_OK


def _section_builder(cone: Cone, expr):
    h_t = 2.0 * cone.T / cone.n_t

    def build(n_t: int):
        T = h_t * n_t / 2.0
        g = Cone(cone.base, T=T, n_t=n_t, boundary="interval", q=cone.q)
        return op_mellin(g, expr)

    return build


def cmd_index(cfg: dict) -> tuple[dict, int]:
    """Finite-section ladder with the winding oracle cross-check."""
    expr = parse(str(_require(cfg, "symbol")))
    cone = _probe_cone(cfg)
    if cone.boundary != "interval":
        raise ConfigError("index needs an interval-mode cone geometry")
    sizes = tuple(int(n) for n in cfg.get("sizes", (64, 128, 256)))
    # Coarser than the raw finite_section default so slowly-closing conormal
    # gaps read as indeterminate rather than feeding the oracle a zero crossing.
    tau_coef = float(cfg.get("tau_coef", 1e-4))
    rep = finite_section(_section_builder(cone, expr), sizes=sizes, tau_coef=tau_coef)
    rows = rep.rows()
    result: dict = {
        "rows": [list(r) for r in rows],
        "determinate": rep.determinate,
        "convention": rep.convention,
    }
    if not rep.determinate:
        result["verdict"] = "indeterminate"
        return result, EXIT_INDETERMINATE
    zero = Const(0.0)
    tip_src = cfg.get("tip")
    tip = (
        parse(str(tip_src))
        if tip_src is not None
        else substitute(expr, {"r": zero, "w": zero, "eta": zero, "x": zero})
    )
    try:
        w = winding_oracle(tip)
    except FredholmError as e:
        result["verdict"] = "inconsistent"
        result["oracle_error"] = str(e)
        return result, EXIT_INCONSISTENT
    result["winding"] = w.winding
    result["orientation"] = w.orientation
    if rep.index != w.winding:
        result["verdict"] = "inconsistent"
        return result, EXIT_INCONSISTENT
    result["index"] = rep.index
    result["verdict"] = "consistent"
    return result, EXIT_OK


def index_csv(result: dict) -> str:
    lines = ["N,kernel,cokernel,index"]
    for row in result["rows"]:
        lines.append(",".join(str(int(x)) for x in row))
    return "\n".join(lines) + "\n"


def cmd_verify(
    cfg: dict, seed: int, only: Optional[str], threads: int
) -> tuple[dict, int, dict]:
    """Run the suite battery; timings go to the volatile block."""
    rep = run_suites(seed=seed, only=only, threads=threads)
    code = EXIT_OK if rep.passed else EXIT_FAIL
    return rep.payload(), code, rep.timings()


def verify_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "check", "passed"])
    for s in result["suites"]:
        for c in s["checks"]:
            w.writerow([s["suite"], c["name"], str(c["passed"]).lower()])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psdo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("check", "quantize", "index", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--only", default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", choices=("report", "csv"), default=None)
    return p


def _threads_from_env() -> int:
    raw = os.environ.get("PSDO_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PSDO_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("PSDO_THREADS must be >= 1")
    return n


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config) if args.config else {}
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out_dir = args.out if args.out is not None else cfg.get("out")
    fmt = args.format if args.format is not None else cfg.get("format", "report")
    only = args.only if args.only is not None else cfg.get("only")

    timings: Optional[dict] = None
    try:
        if args.command == "check":
            result, code = cmd_check(cfg)
        elif args.command == "quantize":
            result, code = cmd_quantize(cfg, out_dir)
        elif args.command == "index":
            result, code = cmd_index(cfg)
        else:
            result, code, timings = cmd_verify(cfg, seed, only, _threads_from_env())
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (
        ConfigError,
        FredholmError,
        GeometryError,
        SymbolError,
        QuantizeError,
        VerifyError,
    ) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    report = make_report(args.command, cfg, seed, result, t0)
    if timings is not None:
        report["volatile"]["timings"] = timings

    try:
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            atomic_write(
                os.path.join(out_dir, "report.json"),
                json.dumps(report, indent=2).encode() + b"\n",
            )
            if args.command == "index":
                atomic_write(
                    os.path.join(out_dir, "sections.csv"), index_csv(result).encode()
                )
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO

    if fmt == "csv" and args.command == "index":
        sys.stdout.write(index_csv(result))
    elif fmt == "csv" and args.command == "verify":
        sys.stdout.write(verify_csv(result))
    else:
        json.dump(report, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
