"""Command line interface.

Exit codes: 0 success, 1 runtime error or failed reference check, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
import time
from typing import Optional, Sequence

import numpy as np

from pdpum.io.config import ConfigError, SimulationConfig, bundled_config_path, load_config, scaled

log = logging.getLogger("pdpum")

# U_max references and relative tolerances checked by ``reproduce``
REFERENCES = {
    "bar": {"PUM static": (1.235e-4, 0.02)},
    "mode1": {"PUM static": (8.688e-8, 0.02), "PUM dynamic": (8.704e-8, 0.02)},
    "inclined": {},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file or bundled name (bar, mode1, inclined)")
    common.add_argument("--output-dir", default=None, help="directory for VTK, CSV and figures")
    common.add_argument("--threads", type=int, default=None, help="numba thread count")
    common.add_argument("--snapshot-stride", type=int, default=None, help="PD snapshot interval in steps")
    common.add_argument("--scale", type=float, default=1.0, help="desk-scale factor on h_pd, delta, dt and step counts")
    common.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="pdpum", description="Peridynamics and partition-of-unity crack simulations.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("pd-run", parents=[common], help="explicit PD run")
    sub.add_parser("pum-static", parents=[common], help="quasi-static PUM solve")
    sub.add_parser("pum-dyn", parents=[common], help="explicit dynamic PUM run")
    ex = sub.add_parser("extract-crack", parents=[common], help="crack-tip extraction from damage VTK snapshots")
    ex.add_argument("--damage", nargs="+", required=True, help="VTK snapshots with a 'damage' scalar")
    ex.add_argument("--stride", type=int, default=1, help="use snapshots whose step is a multiple of this")
    sub.add_parser("couple", parents=[common], help="global PUM / local PD pipeline")
    rp = sub.add_parser("reproduce", parents=[common], help="run a bundled experiment")
    rp.add_argument("experiment", choices=sorted(REFERENCES))
    return p


def _config(args, default: Optional[str] = None) -> SimulationConfig:
    name = args.config or default
    if name is None:
        raise ConfigError("--config is required")
    path = name if os.path.exists(name) else bundled_config_path(name)
    cfg = scaled(load_config(path), args.scale)
    if args.no_figures:
        cfg.output.figures = False
    if args.output_dir:
        cfg.output.dir = args.output_dir
    return cfg


def _out(cfg: SimulationConfig) -> str:
    os.makedirs(cfg.output.dir, exist_ok=True)
    return cfg.output.dir


def _step_of(path: str, default: int) -> int:
    m = re.search(r"(\d+)(?=\D*$)", os.path.basename(path))
    return int(m.group(1)) if m else default


def cmd_extract(args) -> int:
    from pdpum.crack import DamageSeries
    from pdpum.experiments import extract_crack
    from pdpum.io.tables import write_crack_csv
    from pdpum.io.vtk import read_vtk

    series = None
    for k, path in enumerate(args.damage):
        data = read_vtk(path)
        if "damage" not in data.scalars:
            raise ConfigError(f"{path}: no 'damage' scalar field")
        if series is None:
            series = DamageSeries(data.points)
        elif not np.array_equal(series.positions, data.points):
            raise ConfigError(f"{path}: node positions differ from {args.damage[0]}")
        series.append(_step_of(path, k), data.scalars["damage"])
    out = args.output_dir or "."
    os.makedirs(out, exist_ok=True)
    if args.config:
        cfg = _config(args)
        cfg.extraction.stride = args.stride
        left, right, _, files = extract_crack(cfg, series, out)
    else:
        from pdpum.crack import extract_tip_sequence

        left, right = extract_tip_sequence(series, args.stride), []
        write_crack_csv(left, right, os.path.join(out, "crack.csv"))
        files = [os.path.join(out, "crack.csv")]
    print(f"extracted {len(left)} + {len(right)} tip positions -> {files[0]}")
    return 0


def _check(name: str, summary) -> bool:
    ok = True
    for method, (ref, tol) in REFERENCES.get(name, {}).items():
        try:
            v = summary.value(method)
        except KeyError:
            continue
        rel = abs(v - ref) / ref
        good = rel <= tol
        ok &= good
        print(f"  {method}: {v:.4e} vs reference {ref:.4e} ({100 * rel:.2f}%, tolerance {100 * tol:.0f}%) {'PASS' if good else 'FAIL'}")
    return ok


def cmd_run(args) -> int:
    from pdpum import experiments as ex

    default = args.experiment if args.command == "reproduce" else None
    cfg = _config(args, default)
    out = _out(cfg)
    t0 = time.perf_counter()
    cmd = args.command
    if cmd == "pd-run":
        res = ex.run_pd(cfg, out, args.snapshot_stride)
    elif cmd == "pum-static":
        res = ex.run_pum_static(cfg, out)
    elif cmd == "pum-dyn":
        res = ex.run_pum_dynamic(cfg, out)
    elif cmd == "couple":
        res = ex.run_coupling(cfg, out)
    else:
        res = ex.reproduce(args.experiment, cfg, out, args.snapshot_stride)
    files = res.files + ex.summary_files(res.summary, out)
    print(res.summary.format())
    for r in res.summary.rows:
        if r["method"].startswith("PUM"):
            print(f"U_max = {r['U_max']:.4e}")
            break
    print(f"wrote {len(files)} files to {out} in {time.perf_counter() - t0:.1f} s")
    if cmd == "reproduce":
        return 0 if _check(args.experiment, res.summary) else 1
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        if args.command == "extract-crack":
            return cmd_extract(args)
        return cmd_run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
