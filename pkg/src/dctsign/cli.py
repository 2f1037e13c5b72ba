"""Command-line front end: ``mask``, ``recover``, ``metrics`` and ``bench``.

Exit codes: 0 success, 2 usage error, 3 input format error, 4 solver
failure (including a timeout without any incumbent).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codecmodel import (
    CoeffFormatError,
    CodingConfig,
    encode_image,
    mask_signs,
    read_coeff_file,
    write_coeff_file,
    write_truth_file,
)
from .imagecore import PgmFormatError, read_pgm, write_pgm
from .metrics import laplacian_b_mle, neighbor_differences, psnr, ssim
from .recovery import ALIGNMENTS, METHODS, RecoveryConfig, RecoveryError, recover
from .solver import BACKENDS, DEFAULT_TIME_LIMIT
from .transform import QuantTable, basis_for, load_quant_table, scale_quant_table

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_SOLVER = 0, 2, 3, 4

CSV_COLUMNS = ["image", "U", "QF", "dcpred", "depmode", "method", "region", "align", "T",
               "ssim", "psnr", "seconds", "status"]

log = logging.getLogger("dctsign")


class UsageError(Exception):
    pass


class InputFormatError(Exception):
    pass


# --------------------------------------------------------------------------
# argument helpers

def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _region(text):
    try:
        h, w = text.lower().split("x")
        h, w = int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"region must look like 32x32, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("region sides must be positive")
    return (h, w)


def _qf(text):
    if text is None or str(text).lower() == "none":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"quality factor must be 1..100 or none, got {text!r}") from None
    if not 1 <= value <= 100:
        raise argparse.ArgumentTypeError(f"quality factor must be in 1..100, got {value}")
    return value


def _nonneg_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text!r}")
    return value


def _quant_table(qf, table_path, n):
    if table_path is not None:
        base = load_quant_table(Path(table_path).read_text(), n)
        return base if qf is None else scale_quant_table(base, qf)
    if qf is None:
        return None
    if n != 8:
        raise UsageError("--qf without --quant-table needs the 8x8 standard table (block size 8)")
    return scale_quant_table(QuantTable.standard(), qf)


def _coding_config(qf, twos, level_shift, dcpred, threshold, relax_x, relax_y, quant):
    if twos and quant is None:
        raise UsageError("--twos needs quantization (--qf or --quant-table)")
    return CodingConfig(level_shift=level_shift, quant=quant, qf=qf, dc_prediction_mode=dcpred,
                        twos_complement=twos, threshold=threshold, relax_x=relax_x,
                        relax_y=relax_y)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _finite(value):
    return None if value is None or not math.isfinite(value) else value


# --------------------------------------------------------------------------
# mask

def cmd_mask(args):
    img = read_pgm(Path(args.input).read_bytes())
    n = args.block_size
    if img.height % n or img.width % n:
        raise InputFormatError(f"image {img.width}x{img.height} is not a multiple of the block size {n}")
    if args.u > n * n:
        raise UsageError(f"--u must be at most {n * n} for block size {n}")
    quant = _quant_table(args.qf, args.quant_table, n)
    cfg = _coding_config(args.qf, args.twos, args.level_shift, args.dc_pred, args.threshold,
                         not args.no_relax_x, args.relax_y, quant)
    coeffs, chain = encode_image(img, cfg, basis_for(n))
    mask = mask_signs(coeffs, args.u, cfg, chain)
    out = Path(args.out)
    out.write_text(write_coeff_file(coeffs, mask, chain, cfg))
    truth = Path(args.truth) if args.truth else out.with_name(out.name + ".truth")
    truth.write_text(write_truth_file(mask))
    print(json.dumps({"command": "mask", "input": str(args.input), "output": str(out),
                      "truth": str(truth), "unknowns": len(mask),
                      "forced_zero": len(mask.forced_zero)}))
    return EXIT_OK


# --------------------------------------------------------------------------
# recover

def _recovery_config(args, method=None):
    return RecoveryConfig(
        method=method or args.method,
        threshold=args.threshold,
        zero_sign_strategy=args.zero_strategy,
        bernoulli_p=args.bernoulli_p,
        region_size=args.region,
        dependency_mode=args.dep_mode,
        alignment=args.align,
        milp_time_limit=args.timeout,
        seed=args.seed,
        backend=args.backend,
        jobs=args.jobs,
    )


def cmd_recover(args):
    coeffs, mask, chain, cfg = read_coeff_file(Path(args.input).read_text())
    rcfg = _recovery_config(args)
    start = time.perf_counter()
    result = recover(coeffs, mask, chain, cfg, rcfg)
    seconds = time.perf_counter() - start
    Path(args.out).write_bytes(write_pgm(result.image))
    record = {
        "command": "recover",
        "input": str(args.input),
        "output": str(args.out),
        "method": rcfg.method,
        "knobs": {
            "threshold": rcfg.effective_threshold,
            "zero_sign_strategy": rcfg.zero_sign_strategy,
            "bernoulli_p": rcfg.bernoulli_p,
            "region": f"{rcfg.region_size[0]}x{rcfg.region_size[1]}",
            "dependency_mode": rcfg.dependency_mode,
            "alignment": rcfg.alignment,
            "timeout": rcfg.milp_time_limit,
            "seed": rcfg.seed,
            "backend": rcfg.backend,
            "jobs": rcfg.jobs,
            "dcpred": cfg.dc_prediction_mode,
            "qf": cfg.qf,
            "twos": cfg.twos_complement,
            "level_shift": cfg.level_shift,
        },
        "objective": _finite(result.objective),
        "status": result.status,
        "seconds": seconds,
        "solver": result.stats,
    }
    if args.ref:
        ref = read_pgm(Path(args.ref).read_bytes())
        record["psnr"] = _finite(psnr(ref, result.image))
        record["ssim"] = ssim(ref, result.image)
    line = json.dumps(record, default=_json_default, sort_keys=True)
    if args.record:
        with open(args.record, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    else:
        print(line)
    return EXIT_OK


# --------------------------------------------------------------------------
# metrics

def cmd_metrics(args):
    ref = read_pgm(Path(args.ref).read_bytes())
    test = read_pgm(Path(args.test).read_bytes())
    if ref.shape != test.shape:
        raise UsageError(f"image sizes differ: {ref.width}x{ref.height} vs {test.width}x{test.height}")
    out = {"psnr": _finite(psnr(ref, test)), "ssim": ssim(ref, test)}
    if args.laplacian:
        out["laplacian_b"] = laplacian_b_mle(neighbor_differences(test))
    print(json.dumps(out))
    return EXIT_OK


# --------------------------------------------------------------------------
# bench

SWEEP_KEYS = {
    # key: (parser, default list)
    "U": (int, [3]),
    "QF": (_qf, [None]),
    "dcpred": (int, [0]),
    "depmode": (int, [0]),
    "method": (str, ["relaxed-lp"]),
    "region": (_region, [(32, 32)]),
    "align": (str, ["global-milp"]),
    "T": (lambda t: None if t == "default" else _nonneg_float(t), [None]),
    "twos": (lambda t: bool(int(t)), [False]),
    "level_shift": (lambda t: bool(int(t)), [False]),
    "zero_strategy": (int, [1]),
}
SWEEP_ORDER = list(SWEEP_KEYS)


def parse_sweep(text):
    """Parse ``key=v1,v2`` lines (``#`` comments allowed) into value lists."""
    sweep = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputFormatError(f"sweep line {lineno}: expected key=value[,value...]")
        key, values = (part.strip() for part in line.split("=", 1))
        if key not in SWEEP_KEYS:
            raise InputFormatError(f"sweep line {lineno}: unknown key {key!r}; "
                                   f"valid keys: {', '.join(SWEEP_ORDER)}")
        if key in sweep:
            raise InputFormatError(f"sweep line {lineno}: key {key!r} given twice")
        items = [v.strip() for v in values.strip("[]").split(",") if v.strip()]
        if not items:
            raise InputFormatError(f"sweep line {lineno}: no values for {key!r}")
        parser = SWEEP_KEYS[key][0]
        try:
            sweep[key] = [parser(v) for v in items]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise InputFormatError(f"sweep line {lineno}: bad value for {key!r}: {exc}") from None
    for method in sweep.get("method", []):
        if method not in METHODS:
            raise InputFormatError(f"sweep: unknown method {method!r}; valid: {', '.join(METHODS)}")
    for align in sweep.get("align", []):
        if align not in ALIGNMENTS:
            raise InputFormatError(f"sweep: unknown alignment {align!r}; valid: {', '.join(ALIGNMENTS)}")
    return sweep


def expand_sweep(sweep):
    """Cartesian product of the sweep lists in a fixed key order."""
    lists = [sweep.get(key, SWEEP_KEYS[key][1]) for key in SWEEP_ORDER]
    return [dict(zip(SWEEP_ORDER, combo)) for combo in itertools.product(*lists)]


def run_seed(master, image_name, config_index):
    digest = hashlib.sha256(f"{master}|{image_name}|{config_index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFF


@dataclass(frozen=True)
class BenchJob:
    image_name: str
    pgm: bytes
    config: dict
    config_index: int
    seed: int
    timeout: float
    backend: str
    save_dir: str | None


def run_bench_job(job: BenchJob):
    """mask -> recover -> metrics for one (image, config); returns a result dict."""
    cfgd = job.config
    img = read_pgm(job.pgm)
    quant = _quant_table(cfgd["QF"], None, 8)
    cfg = _coding_config(cfgd["QF"], cfgd["twos"], cfgd["level_shift"], cfgd["dcpred"], 0.0,
                         True, False, quant)
    rcfg = RecoveryConfig(method=cfgd["method"], threshold=cfgd["T"],
                          zero_sign_strategy=cfgd["zero_strategy"], region_size=cfgd["region"],
                          dependency_mode=cfgd["depmode"], alignment=cfgd["align"],
                          milp_time_limit=job.timeout, seed=job.seed, backend=job.backend)
    coeffs, chain = encode_image(img, cfg)
    mask = mask_signs(coeffs, cfgd["U"], cfg, chain)
    observed_coeffs, observed_mask, observed_chain, observed_cfg = read_coeff_file(
        write_coeff_file(coeffs, mask, chain, cfg))
    start = time.perf_counter()
    try:
        result = recover(observed_coeffs, observed_mask, observed_chain, observed_cfg, rcfg)
    except RecoveryError as exc:
        return {"ssim": None, "psnr": None, "seconds": time.perf_counter() - start,
                "status": exc.status, "T": rcfg.effective_threshold}
    seconds = time.perf_counter() - start
    if job.save_dir is not None:
        name = f"{Path(job.image_name).stem}__cfg{job.config_index:03d}.pgm"
        (Path(job.save_dir) / name).write_bytes(write_pgm(result.image))
    return {"ssim": ssim(img, result.image), "psnr": psnr(img, result.image),
            "seconds": seconds, "status": result.status, "T": rcfg.effective_threshold}


def _fmt_num(value, digits=6):
    if value is None:
        return ""
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}f}"


def _config_cells(cfgd, threshold):
    qf = "none" if cfgd["QF"] is None else str(cfgd["QF"])
    return {"U": str(cfgd["U"]), "QF": qf, "dcpred": str(cfgd["dcpred"]),
            "depmode": str(cfgd["depmode"]), "method": cfgd["method"],
            "region": f"{cfgd['region'][0]}x{cfgd['region'][1]}", "align": cfgd["align"],
            "T": f"{threshold:g}"}


def _aggregate(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return ""
    mean = math.inf if any(math.isinf(v) for v in vals) else statistics.fmean(vals)
    return f"{_fmt_num(mean)};{_fmt_num(statistics.median(vals))}"


def bench_rows(image_names, configs, results, record_time):
    """CSV rows: per config, one row per image then one aggregate row.

    The aggregate row's image cell is ``mean;median`` and its metric cells
    hold ``<mean>;<median>`` over the images that produced a result.
    """
    rows = []
    for ci, cfgd in enumerate(configs):
        block = [results[(name, ci)] for name in image_names]
        cells = _config_cells(cfgd, block[0]["T"])
        for name, res in zip(image_names, block):
            rows.append({"image": name, **cells, "ssim": _fmt_num(res["ssim"]),
                         "psnr": _fmt_num(res["psnr"]),
                         "seconds": _fmt_num(res["seconds"], 3) if record_time else "",
                         "status": res["status"]})
        ok = sum(1 for res in block if res["ssim"] is not None)
        rows.append({"image": "mean;median", **cells,
                     "ssim": _aggregate([r["ssim"] for r in block]),
                     "psnr": _aggregate([r["psnr"] for r in block]),
                     "seconds": _aggregate([r["seconds"] for r in block]) if record_time else "",
                     "status": f"ok={ok}/{len(block)}"})
    return rows


def cmd_bench(args):
    image_dir = Path(args.images)
    if not image_dir.is_dir():
        raise UsageError(f"{image_dir} is not a directory")
    paths = sorted(p for p in image_dir.iterdir() if p.suffix.lower() == ".pgm")
    if not paths:
        raise UsageError(f"no .pgm images in {image_dir}")
    sweep = parse_sweep(Path(args.sweep).read_text())
    configs = expand_sweep(sweep)
    images = {p.name: p.read_bytes() for p in paths}
    for name, data in images.items():
        img = read_pgm(data)
        if img.height % 8 or img.width % 8:
            raise InputFormatError(f"{name}: {img.width}x{img.height} is not a multiple of 8")
    if args.save_images:
        Path(args.save_images).mkdir(parents=True, exist_ok=True)
    jobs = [BenchJob(name, images[name], cfgd, ci, run_seed(args.seed, name, ci), args.timeout,
                     args.backend, args.save_images)
            for ci, cfgd in enumerate(configs) for name in images]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            outcomes = list(pool.map(run_bench_job, jobs))
    else:
        outcomes = [run_bench_job(job) for job in jobs]
    results = {(job.image_name, job.config_index): res for job, res in zip(jobs, outcomes)}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(bench_rows(list(images), configs, results, args.record_time))
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def _add_recovery_flags(p, with_method=True):
    if with_method:
        p.add_argument("--method", choices=METHODS, default="relaxed-lp",
                       help="recovery method (default: relaxed-lp)")
    p.add_argument("--threshold", type=_nonneg_float, default=None,
                   help="zero unknowns smaller than T (default: 5 for relaxed-lp, 0 otherwise)")
    p.add_argument("--zero-strategy", type=int, choices=(1, 2, 3, 4), default=1,
                   help="relaxed-lp sign when the relaxed value is 0: 1 zero, 2 positive, "
                        "3 negative, 4 random (default: 1)")
    p.add_argument("--bernoulli-p", type=float, default=0.5,
                   help="probability of the positive candidate for --zero-strategy 4 (default: 0.5)")
    p.add_argument("--region", type=_region, default=(32, 32),
                   help="hier-milp region size HxW in pixels (default: 32x32)")
    p.add_argument("--dep-mode", type=int, choices=(0, 1, 2), default=0,
                   help="cross-region DC dependency mode for hier-milp (default: 0)")
    p.add_argument("--align", choices=ALIGNMENTS, default="global-milp",
                   help="hier-milp brightness alignment (default: global-milp)")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIME_LIMIT,
                   help=f"per-MILP time limit in seconds (default: {DEFAULT_TIME_LIMIT:g})")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--backend", choices=BACKENDS, default="auto",
                   help="solver backend (default: auto)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dctsign", description="Recover hidden sign bits of blockwise DCT coefficients.",
        epilog="Set SBR_SOLVER_LOG=1 to print solver progress.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="code an image and hide coefficient signs")
    p.add_argument("--in", dest="input", required=True, help="input PGM (P5)")
    p.add_argument("--out", required=True, help="output SBC1 coefficient file")
    p.add_argument("--truth", help="truth sidecar path (default: <out>.truth)")
    p.add_argument("--u", type=_positive_int, required=True,
                   help="number of leading zigzag positions whose sign is hidden (>= 1)")
    p.add_argument("--dc-pred", type=int, choices=(0, 1, 2, 3), default=0,
                   help="DC prediction mode: 0 none, 1 same row, 2 raster, 3 average (default: 0)")
    p.add_argument("--qf", type=_qf, default=None,
                   help="JPEG quality factor 1..100 for the quantization table (default: none)")
    p.add_argument("--quant-table", help="file with N*N integer base quantization steps")
    p.add_argument("--twos", action="store_true", help="JPEG magnitude-category coding")
    p.add_argument("--level-shift", action="store_true", help="subtract 128 before the DCT")
    p.add_argument("--threshold", type=_nonneg_float, default=0.0,
                   help="zero unknowns smaller than T at coding time (default: 0)")
    p.add_argument("--no-relax-x", action="store_true",
                   help="do not widen pixel bounds by the quantization error")
    p.add_argument("--relax-y", action="store_true",
                   help="let known coefficients move within half a quantization step")
    p.add_argument("--block-size", type=_positive_int, default=8, help="block side N (default: 8)")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("recover", help="recover signs and decode to a PGM")
    p.add_argument("--in", dest="input", required=True, help="input SBC1 coefficient file")
    p.add_argument("--out", required=True, help="output PGM")
    p.add_argument("--ref", help="original PGM; adds PSNR/SSIM to the run record")
    p.add_argument("--record", help="append the JSON-lines run record here (default: stdout)")
    p.add_argument("--jobs", type=_positive_int, default=1,
                   help="worker threads for independent regions (default: 1)")
    _add_recovery_flags(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("metrics", help="PSNR and SSIM between two PGMs")
    p.add_argument("--ref", required=True, help="reference PGM")
    p.add_argument("--test", required=True, help="test PGM")
    p.add_argument("--laplacian", action="store_true",
                   help="also fit the neighbour-difference Laplacian scale of --test")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="sweep configurations over a directory of PGMs")
    p.add_argument("--images", required=True, help="directory of PGM images")
    p.add_argument("--sweep", required=True,
                   help=f"key=v1,v2 file; keys: {', '.join(SWEEP_ORDER)}")
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.add_argument("--save-images", help="write every recovered PGM into this directory")
    p.add_argument("--record-time", action="store_true",
                   help="fill the seconds column (wall times make the CSV run-dependent)")
    p.add_argument("--jobs", type=_positive_int, default=1,
                   help="images processed concurrently (default: 1)")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIME_LIMIT,
                   help=f"per-MILP time limit in seconds (default: {DEFAULT_TIME_LIMIT:g})")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--backend", choices=BACKENDS, default="auto",
                   help="solver backend (default: auto)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dctsign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputFormatError, PgmFormatError, CoeffFormatError) as exc:
        print(f"dctsign: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except RecoveryError as exc:
        print(f"dctsign: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"dctsign: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"dctsign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
