"""Command-line front end: ``cohere {measures,distill,boundcoh}``.

Reports are JSON (sorted keys) or CSV (9 significant digits, bits). The
exit code is 0 only if every requested cell finished with status
``Optimal``; 1 if some cell did not; 2 for input, cap or usage errors.
Output files are written atomically, so a failed run leaves no file.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, boundcoh, config, measures, oneshot, protocol
from . import matcore as mc
from .errors import CapExceeded, CohereError, InvalidState, NumericalFailure

OPTIMAL = "Optimal"
NOT_APPLICABLE = "NotApplicable"
CLASSES = ("MIO_DIO", "SIO", "IO", "DIIO")


@dataclass
class RunConfig:
    command: str
    states: list = field(default_factory=list)
    eps: list = field(default_factory=lambda: [0.0])
    eta: float | None = None
    n_max: int = 2
    classes: tuple = ("MIO_DIO", "SIO", "IO")
    emit_witness: bool = False
    fmt: str = "json"
    threads: int = 1
    out: str | None = None
    allow_large: bool = False

    def __post_init__(self):
        for e in self.eps:
            if not 0 <= e < 1:
                raise ValueError(f"epsilon values must lie in [0, 1), got {e}")
        if self.threads < 1:
            raise ValueError("--threads must be positive")
        bad = [c for c in self.classes if c not in CLASSES]
        if bad:
            raise ValueError(f"unknown class {bad[0]!r}; choose from {', '.join(CLASSES)}")


# --- input ---------------------------------------------------------------------------


def load_state(path) -> np.ndarray:
    """Density matrix from JSON ``{"dim", "re", "im"}`` or pure state ``{"vector": {"re", "im"}}``."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidState(f"{path}: cannot read: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidState(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InvalidState(f"{path}: top level must be a JSON object")
    try:
        if "vector" in data:
            v = data["vector"]
            re = np.asarray(v["re"], dtype=float)
            im = np.asarray(v.get("im", np.zeros_like(re)), dtype=float)
            return mc.PureState(re + 1j * im).projector()
        return mc.DensityMatrix.from_json(data).mat
    except InvalidState as exc:
        raise InvalidState(f"{path}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidState(f"{path}: field 'vector': {exc}") from exc


def _parse_list(text, conv=float):
    return [conv(t) for t in text.split(",") if t.strip()]


# --- cells ------------------------------------------------------------------------------


def _measure_cells(cfg: RunConfig, states):
    cells = []
    for label, rho in states:
        for eps in cfg.eps:
            for name in measures.MEASURES:
                cells.append(lambda label=label, rho=rho, eps=eps, name=name:
                             _measure_cell(cfg, label, rho, eps, name))
    return cells


def _measure_cell(cfg, label, rho, eps, name):
    r = measures.measure_result(name, rho, eps)
    row = {"state": label, "epsilon": eps, "measure": name, "value_bits": r.value_bits,
           "status": r.status}
    if cfg.emit_witness and r.witness is not None:
        row["witness"] = mc.op_to_json(r.witness)
    return row


def _distill_cells(cfg: RunConfig, states):
    cells = []
    for label, rho in states:
        for eps in cfg.eps:
            for cls in cfg.classes:
                cells.append(lambda label=label, rho=rho, eps=eps, cls=cls:
                             _distill_cell(cfg, label, rho, eps, cls))
    return cells


def _distill_cell(cfg, label, rho, eps, cls):
    row = {"state": label, "epsilon": eps, "class": cls}
    if cls == "MIO_DIO":
        r = oneshot.mio_dio_rate(rho, eps)
        row.update(log_M=r.log_M, M_int=r.M_int, continuous=r.continuous, status=r.status)
        if cfg.emit_witness:
            row["witness"] = oneshot._witness_json(r.witness)
    elif cls == "SIO":
        r = oneshot.sio_rate(rho, eps)
        row.update(log_M=r.log_M, M_int=r.M_int, status=r.status)
        if cfg.emit_witness:
            row["witness"] = oneshot._witness_json(r.witness)
    elif cls == "IO":
        eta = cfg.eta if cfg.eta is not None else eps / 4
        if not 0 < eta < eps / 2 < 0.5:
            row.update(lower=None, upper=None, eta=eta, status=NOT_APPLICABLE)
        else:
            lower, upper = oneshot.io_sandwich(rho, eps, eta)
            row.update(lower=lower, upper=upper, eta=eta, status=OPTIMAL)
    elif cls == "DIIO":
        d = rho.shape[0]
        M = min(d, max(2, oneshot.mio_dio_rate(rho, eps).M_int))
        channel, trace = protocol.build_io_distiller(rho, M)
        rep = protocol.verify_achievability(rho, M, channel, trace, theorem=False)
        row.update(M_int=M, log_M=math.log2(M), fidelity=trace.fidelity,
                   hash=list(trace.G.table), status=OPTIMAL if rep["ok"] else "CheckFailed")
    return row


def _boundcoh_cells(cfg: RunConfig):
    if not cfg.allow_large and cfg.n_max > config.CAPS.certify_n:
        raise CapExceeded("--n-max", cfg.n_max, config.CAPS.certify_n,
                          f"use --n-max {config.CAPS.certify_n} or --allow-large")
    return [lambda n=n: _boundcoh_cell(cfg, n) for n in range(1, cfg.n_max + 1)]


def _boundcoh_cell(cfg, n):
    rep = boundcoh.certify_bound(n, allow_large=cfg.allow_large)
    rep.pop("runtime_s")  # keep reports byte-identical across runs
    rep = {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in rep.items()}
    if not rep["within_bound"] and rep["status"] == OPTIMAL:
        rep["status"] = "BoundViolated"
    return rep


# --- output ------------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "%.9g" % v
    if v is None:
        return ""
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    return str(v)


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    rows = report["rows"]
    cols = sorted({k for r in rows for k in r if k != "witness"})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".cohere-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- driver --------------------------------------------------------------------------------


def _cache_key(cfg: RunConfig, states) -> str:
    h = hashlib.sha256()
    h.update(__version__.encode())
    h.update(json.dumps({"command": cfg.command, "eps": cfg.eps, "eta": cfg.eta,
                         "n_max": cfg.n_max, "classes": list(cfg.classes),
                         "emit_witness": cfg.emit_witness, "allow_large": cfg.allow_large,
                         "caps": vars(config.CAPS), "tol": vars(config.TOLERANCES)},
                        sort_keys=True).encode())
    for label, rho in states:
        h.update(label.encode())
        h.update(np.ascontiguousarray(rho).tobytes())
    return h.hexdigest()


def _guarded(cell):
    try:
        return cell()
    except NumericalFailure as exc:
        return {"status": "NumericalFailure", "error": str(exc)}


def run(cfg: RunConfig) -> dict:
    """Compute the report for ``cfg`` (uses ``COHERE_CACHE_DIR`` when set)."""
    states = [(os.path.basename(p), load_state(p)) for p in cfg.states]
    cache_dir = os.environ.get("COHERE_CACHE_DIR")
    cache_path = None
    if cache_dir:
        cache_path = os.path.join(cache_dir, _cache_key(cfg, states) + ".json")
        if os.path.exists(cache_path):
            with open(cache_path) as fh:
                return json.load(fh)
    if cfg.command == "measures":
        cells = _measure_cells(cfg, states)
    elif cfg.command == "distill":
        cells = _distill_cells(cfg, states)
    elif cfg.command == "boundcoh":
        cells = _boundcoh_cells(cfg)
    else:
        raise ValueError(f"unknown command {cfg.command!r}")
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            rows = list(pool.map(_guarded, cells))
    else:
        rows = [_guarded(f) for f in cells]
    ok = all(r["status"] in (OPTIMAL, NOT_APPLICABLE) for r in rows)
    report = {"command": cfg.command, "version": __version__, "ok": ok, "rows": rows}
    if cfg.command == "boundcoh":
        report["bound"] = boundcoh.CEILING
    report = _clean(report)
    if cache_path:
        os.makedirs(cache_dir, exist_ok=True)
        atomic_write(cache_path, json.dumps(report, sort_keys=True))
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json", dest="fmt")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--gap-tol", type=float)
    common.add_argument("--feas-tol", type=float)
    common.add_argument("--config", help="JSON file overriding caps and tolerances")
    common.add_argument("--emit-witness", action="store_true")

    states = argparse.ArgumentParser(add_help=False)
    states.add_argument("--state", action="append", required=True, metavar="FILE",
                        help="state JSON; repeat for several states")
    states.add_argument("--eps", default="0", help="comma-separated smoothing values")

    p = argparse.ArgumentParser(prog="cohere", description="One-shot coherence distillation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("measures", parents=[common, states], help="coherence measures per epsilon")
    d = sub.add_parser("distill", parents=[common, states], help="distillation rates per class")
    d.add_argument("--eta", type=float, help="IO sandwich parameter (default eps/4)")
    d.add_argument("--class", dest="classes", default="MIO_DIO,SIO,IO",
                   help=f"comma-separated subset of {','.join(CLASSES)}")
    b = sub.add_parser("boundcoh", parents=[common], help="SIO ceiling for the bound state")
    b.add_argument("--n-max", type=int, default=2)
    b.add_argument("--allow-large", action="store_true",
                   help="lift the copy cap (also raise c0_blocks via --config)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    with config.override():  # keep caps and tolerances local to this invocation
        return _main(args)


def _main(args) -> int:
    try:
        if args.config:
            config.load_config(args.config)
        overrides = {}
        if args.gap_tol is not None:
            overrides["gap_tol"] = args.gap_tol
        if args.feas_tol is not None:
            overrides["feas_tol"] = args.feas_tol
        config.apply_overrides(overrides)
        cfg = RunConfig(
            command=args.command,
            states=getattr(args, "state", None) or [],
            eps=_parse_list(getattr(args, "eps", "0")),
            eta=getattr(args, "eta", None),
            n_max=getattr(args, "n_max", 2),
            classes=tuple(_parse_list(getattr(args, "classes", "MIO_DIO"), str)),
            emit_witness=args.emit_witness,
            fmt=args.fmt,
            threads=args.threads,
            out=args.out,
            allow_large=getattr(args, "allow_large", False),
        )
        report = run(cfg)
    except (CohereError, ValueError, KeyError, OSError) as exc:
        print(f"cohere: {exc}", file=sys.stderr)
        return 2
    text = render(report, cfg.fmt)
    if cfg.out:
        atomic_write(cfg.out, text)
    else:
        sys.stdout.write(text)
    return 0 if report["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
