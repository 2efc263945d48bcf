"""Command-line front end for building, querying, and measuring indexes.

Subcommands: build an index from a key file or generated keys, query or
verify a stored index, run a parameter grid benchmark, tabulate the
survival and bound curves, and run the baseline coders. bench and analyze
write a CSV plus a PNG rendering of the same data next to it; the CSV
column layouts are documented in docs/FORMATS.md.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import statistics
import struct
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, mphf
from .baselines import min_build, uni_build
from .consensus import Failure
from .mixing import MASK64
from .oracle import SyntheticOracle

_KEY_CHARS = np.frombuffer(
    b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789",
    dtype=np.uint8,
)


class CliError(Exception):
    """Data or runtime failure; reported on stderr with exit code 1."""


# ---------------------------------------------------------------------------
# key files


def random_keys(n: int, seed: int) -> list[bytes]:
    """n distinct alphanumeric strings of uniform random length 10 to 50."""
    rng = np.random.default_rng(seed)
    out: list[bytes] = []
    seen = set()
    while len(out) < n:
        lens = rng.integers(10, 51, size=n - len(out))
        chars = _KEY_CHARS[rng.integers(0, len(_KEY_CHARS), size=int(lens.sum()))]
        pos = 0
        for length in lens:
            key = chars[pos : pos + length].tobytes()
            pos += int(length)
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


def load_keys(path: str, binary: bool) -> list[bytes]:
    """Read a key file, rejecting duplicates with their position.

    Text files hold one UTF-8 key per line; binary files hold records of a
    little-endian u32 byte length followed by that many key bytes.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise CliError(f"cannot read {path}: {err}") from err
    keys = _parse_binary(data, path) if binary else _parse_text(data, path)
    unit = "record" if binary else "line"
    seen: dict[bytes, int] = {}
    for number, key in enumerate(keys, start=1):
        first = seen.setdefault(key, number)
        if first != number:
            raise CliError(
                f"{path}: duplicate key at {unit} {number} "
                f"(first seen at {unit} {first}): {key[:40]!r}"
            )
    if not keys:
        raise CliError(f"{path}: no keys")
    return keys


def _parse_text(data: bytes, path: str) -> list[bytes]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as err:
        raise CliError(f"{path}: not UTF-8 text ({err}); try --binary") from err
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.encode("utf-8") for line in lines]


def _parse_binary(data: bytes, path: str) -> list[bytes]:
    keys = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise CliError(f"{path}: truncated length prefix at byte {pos}")
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + length > len(data):
            raise CliError(f"{path}: record at byte {pos - 4} overruns the file")
        keys.append(data[pos : pos + length])
        pos += length
    return keys


def write_binary_keys(path: str, keys) -> None:
    with open(path, "wb") as handle:
        for key in keys:
            handle.write(struct.pack("<I", len(key)))
            handle.write(key)


# ---------------------------------------------------------------------------
# argument plumbing


def _eps_arg(text: str) -> float:
    try:
        eps = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not 0 < eps <= 1:
        raise argparse.ArgumentTypeError(f"epsilon {text} outside (0, 1]")
    return eps


def _k_arg(text: str):
    if text == "auto":
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer or 'auto'")
    if k < 2 or k & (k - 1):
        raise argparse.ArgumentTypeError(f"bucket size {k} is not a power of two >= 2")
    return k


def _seed_arg(text: str) -> int:
    try:
        return int(text, 0) & MASK64
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")


def _float_list(text: str) -> list[float]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty list")
    return [float(p) for p in parts]


def _eps_list(text: str) -> list[float]:
    values = _float_list(text)
    for eps in values:
        if not 0 < eps <= 1:
            raise argparse.ArgumentTypeError(f"epsilon {eps} outside (0, 1]")
    return values


def _k_list(text: str) -> list[int]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty list")
    out = []
    for p in parts:
        k = _k_arg(p)
        if k == "auto":
            raise argparse.ArgumentTypeError("'auto' is not allowed in a grid")
        out.append(k)
    return out


def _prob_arg(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number")
    if not 0 < p <= 1:
        raise argparse.ArgumentTypeError(f"probability {text} outside (0, 1]")
    return p


def resolve_seed(explicit: int | None) -> int:
    """Explicit --seed wins; else the CONSENSUS_SEED variable; else zero."""
    if explicit is not None:
        return explicit
    env = os.environ.get("CONSENSUS_SEED")
    if env is None:
        return 0
    try:
        return int(env, 0) & MASK64
    except ValueError:
        raise CliError(f"CONSENSUS_SEED is not an integer: {env!r}")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as err:
        raise CliError(f"cannot write {path}: {err}") from err


def _save_plot(csv_path: str, draw) -> Path:
    """Render the figure for a CSV to the sibling PNG path."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    draw(ax)
    fig.tight_layout()
    png = Path(csv_path).with_suffix(".png")
    fig.savefig(png, dpi=120)
    plt.close(fig)
    return png


# ---------------------------------------------------------------------------
# build and query


def _gather_keys(args) -> list[bytes]:
    if args.input is not None:
        return load_keys(args.input, args.binary)
    return random_keys(args.random, resolve_seed(args.seed))


def cmd_build(args) -> int:
    keys = _gather_keys(args)
    index, report = mphf.build_bucketed(
        keys,
        eps=args.epsilon,
        k=args.k,
        master_seed=resolve_seed(args.seed),
    )
    blob = mphf.serialize(index)
    try:
        Path(args.output).write_bytes(blob)
    except OSError as err:
        raise CliError(f"cannot write {args.output}: {err}") from err
    print(f"n = {report.n}")
    print(f"k = {index.k}")
    print(f"eps = {report.eps:g}")
    print(f"bits_per_key = {report.bits_per_key:.4f}")
    print(f"trials_per_key = {report.trials_per_key:.3f}")
    print(f"retries = {report.retries}")
    print(f"build_seconds = {report.seconds:.3f}")
    print(f"index_bytes = {len(blob)}")
    print(f"wrote {args.output}")
    return 0


def _load_index(path: str) -> mphf.MphfIndex:
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise CliError(f"cannot read {path}: {err}") from err
    try:
        return mphf.deserialize(blob)
    except ValueError as err:
        raise CliError(f"{path}: {err}") from err


def cmd_query(args) -> int:
    index = _load_index(args.mphf)
    if args.key is not None:
        print(mphf.query(index, args.key))
        return 0
    keys = load_keys(args.verify_input, args.binary)
    if len(keys) != index.n:
        raise CliError(
            f"bijection FAILED: index holds {index.n} keys, file has {len(keys)}"
        )
    values = mphf.query_batch(index, keys)
    counts = np.bincount(values, minlength=index.n + 1)
    if counts[0] or (counts[1:] != 1).any():
        missing = int(np.nonzero(counts[1:] != 1)[0][0]) + 1
        raise CliError(f"bijection FAILED: value {missing} not hit exactly once")
    print(f"bijection OK, n = {index.n}")
    return 0


# ---------------------------------------------------------------------------
# bench


def _median_query_ns(index, keys) -> float:
    digests = mphf.query_batch(index, keys)  # warm the kernel and caches
    del digests
    samples = []
    for _ in range(5):
        start = time.perf_counter()
        mphf.query_batch(index, keys)
        samples.append((time.perf_counter() - start) * 1e9 / len(keys))
    return statistics.median(samples)


def cmd_bench(args) -> int:
    seed = resolve_seed(args.seed)
    keys = random_keys(args.n, seed)
    # a throwaway build compiles the kernels so timings below exclude that
    mphf.build_bucketed(random_keys(256, seed + 1), eps=0.5, k=16)
    rows = []
    for eps in args.grid:
        for k in args.k_list:
            index, report = mphf.build_bucketed(
                keys, eps=eps, k=k, master_seed=seed
            )
            rows.append(
                [
                    f"{eps:g}",
                    k,
                    f"{report.bits_per_key:.4f}",
                    f"{report.seconds * 1e9 / report.n:.1f}",
                    f"{_median_query_ns(index, keys):.1f}",
                    f"{report.trials_per_key:.3f}",
                ]
            )
            print(
                f"eps={eps:g} k={k}: {report.bits_per_key:.4f} bits/key, "
                f"{report.trials_per_key:.1f} trials/key"
            )
    header = ["eps", "k", "bits_per_key", "build_ns_per_key", "query_ns", "trials_per_key"]
    _write_csv(args.csv, header, rows)

    def draw(ax):
        for k in args.k_list:
            eps_vals = [float(r[0]) for r in rows if r[1] == k]
            bits = [float(r[2]) for r in rows if r[1] == k]
            order = np.argsort(eps_vals)
            ax.plot(
                np.array(eps_vals)[order],
                np.array(bits)[order],
                marker="o",
                label=f"k = {k}",
            )
        ax.set_xlabel("eps")
        ax.set_ylabel("bits per key")
        ax.set_title(f"space against slack, n = {args.n}")
        ax.legend()

    png = _save_plot(args.csv, draw)
    print(f"wrote {args.csv} and {png}")
    return 0


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(args) -> int:
    if args.mode == "qcurve":
        return _analyze_qcurve(args)
    if args.mode == "fixedpoint":
        return _analyze_fixedpoint(args)
    return _analyze_bounds(args)


def _analyze_qcurve(args) -> int:
    probs = [args.p] * args.n
    ks = [args.k] * args.n
    # uniform instance, so the interval feasibility band reduces to one
    # per-process inequality
    need = math.log2(1.0 / args.p) + args.eps
    have = math.log2(args.k)
    if have < need:
        print(
            "warning: instance falls outside the feasibility band "
            f"(per process, log2 k = {have:.3f} is below "
            f"log2(1/p) + eps = {need:.3f}); survival floors do not apply",
            file=sys.stderr,
        )
    curve = analysis.q_curve(probs, ks)
    rows = [[i + 1, f"{q:.6g}"] for i, q in enumerate(curve.q)]
    _write_csv(args.csv, ["i", "q"], rows)

    def draw(ax):
        ax.plot(np.arange(1, len(curve.q) + 1), curve.q)
        ax.set_xlabel("process index i")
        ax.set_ylabel("survival q_i")
        ax.set_ylim(0, 1.05)
        ax.set_title(f"survival curve, p = {args.p:g}, k = {args.k:g}")

    png = _save_plot(args.csv, draw)
    print(f"q_1 = {curve.q_at(1):.4f}")
    print(f"wrote {args.csv} and {png}")
    return 0


def _analyze_fixedpoint(args) -> int:
    trace = analysis.fixed_point_trace(args.p, args.k, args.x0, args.steps)
    rows = [[step, f"{x:.10g}"] for step, x in enumerate(trace)]
    _write_csv(args.csv, ["step", "x"], rows)

    def draw(ax):
        ax.plot(np.arange(len(trace)), trace, marker=".")
        ax.set_xlabel("iteration")
        ax.set_ylabel("x")
        ax.set_title(
            f"x -> 1 - (1 - {args.p:g} x)^{args.k:g} from x0 = {args.x0:g}"
        )

    png = _save_plot(args.csv, draw)
    print(f"final x = {trace[-1]:.6f}")
    print(f"wrote {args.csv} and {png}")
    return 0


def _analyze_bounds(args) -> int:
    probs = args.p_list
    rows = []
    for i, p in enumerate(probs, start=1):
        opt_bits = math.log2(1.0 / p)
        min_bits = opt_bits + (1.0 - p)
        rows.append(
            [i, f"{p:g}", f"{opt_bits:.6g}", f"{analysis.t_opt(p):.6g}", f"{min_bits:.6g}"]
        )
    _write_csv(args.csv, ["i", "p", "opt_bits", "opt_trials", "min_bits"], rows)

    def draw(ax):
        idx = np.arange(1, len(probs) + 1)
        opt = [float(r[2]) for r in rows]
        low = [float(r[4]) for r in rows]
        ax.bar(idx - 0.2, opt, width=0.4, label="optimal bits")
        ax.bar(idx + 0.2, low, width=0.4, label="smallest-seed floor")
        ax.set_xlabel("process index")
        ax.set_ylabel("bits")
        ax.set_title("per-process space bounds")
        ax.legend()

    png = _save_plot(args.csv, draw)
    print(f"m_opt = {analysis.m_opt(probs):.6f} bits")
    print(f"min_baseline = {analysis.min_entropy_lower_bound(probs):.6f} bits")
    print(f"uni_expected_work = {analysis.uni_expected_work(probs):.6g} trials")
    print(f"wrote {args.csv} and {png}")
    return 0


# ---------------------------------------------------------------------------
# baseline


def cmd_baseline(args) -> int:
    seed = resolve_seed(args.seed)
    oracle = SyntheticOracle.uniform(args.n, args.p, master_seed=seed)
    if args.mode == "min":
        code = min_build(oracle)
        header = ["mode", "n", "p", "bits_per_seed", "entropy_per_seed", "trials_per_seed"]
        row = [
            "min",
            args.n,
            f"{args.p:g}",
            f"{code.bits_per_seed:.4f}",
            f"{analysis.min_baseline_entropy(code.probs) / args.n:.4f}",
            f"{oracle.total_trials() / args.n:.4f}",
        ]
        summary = f"min: bits_per_seed = {code.bits_per_seed:.4f}"
    else:
        result = uni_build(oracle, work_cap=args.work_cap)
        if isinstance(result, Failure):
            raise CliError(
                f"uni: no shared seed within work cap {args.work_cap}; "
                "raise --work-cap or shrink the instance"
            )
        header = ["mode", "n", "p", "s_star", "steps", "expected_work"]
        row = [
            "uni",
            args.n,
            f"{args.p:g}",
            result.s_star,
            result.steps,
            f"{analysis.uni_expected_work(oracle.prob(i) for i in range(1, args.n + 1)):.6g}",
        ]
        summary = f"uni: s_star = {result.s_star}"
    if args.csv is not None:
        _write_csv(args.csv, header, [row])
        print(summary)
        print(f"wrote {args.csv}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerow(row)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seedenc",
        description="Build, query, and measure seed-encoded minimal perfect hash indexes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="build an index and write it to a file")
    source = build.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", help="key file (one UTF-8 key per line)")
    source.add_argument(
        "--random", type=int, metavar="N", help="generate N random keys instead"
    )
    build.add_argument(
        "--binary", action="store_true", help="input file uses u32-length-prefixed records"
    )
    build.add_argument("--epsilon", type=_eps_arg, required=True, help="slack in (0, 1]")
    build.add_argument(
        "--k", type=_k_arg, default="auto", help="bucket size, a power of two or 'auto'"
    )
    build.add_argument("--output", required=True, help="where to write the index blob")
    build.add_argument("--seed", type=_seed_arg, default=None, help="master seed")
    build.set_defaults(func=cmd_build)

    query = sub.add_parser("query", help="look up keys in a stored index")
    query.add_argument("--mphf", required=True, help="index blob from build")
    what = query.add_mutually_exclusive_group(required=True)
    what.add_argument("--key", help="print the value of one key")
    what.add_argument(
        "--verify-input", help="check that a key file maps onto 1..n exactly"
    )
    query.add_argument(
        "--binary", action="store_true", help="key file uses u32-length-prefixed records"
    )
    query.set_defaults(func=cmd_query)

    bench = sub.add_parser("bench", help="time builds and queries over a parameter grid")
    bench.add_argument(
        "--grid", type=_eps_list, required=True, help="comma-separated epsilon values"
    )
    bench.add_argument(
        "--k-list", type=_k_list, required=True, help="comma-separated bucket sizes"
    )
    bench.add_argument("--n", type=int, default=100_000, help="key count per cell")
    bench.add_argument("--csv", required=True, help="output CSV (PNG written alongside)")
    bench.add_argument("--seed", type=_seed_arg, default=None, help="master seed")
    bench.set_defaults(func=cmd_bench)

    analyze = sub.add_parser("analyze", help="tabulate survival curves and bounds")
    analyze.add_argument("mode", choices=["qcurve", "fixedpoint", "bounds"])
    analyze.add_argument("--p", type=_prob_arg, default=0.25, help="success probability")
    analyze.add_argument("--k", type=float, default=5.0, help="branch count")
    analyze.add_argument("--n", type=int, default=100, help="process count (qcurve)")
    analyze.add_argument(
        "--eps", type=float, default=0.25, help="slack for the feasibility check"
    )
    analyze.add_argument("--x0", type=float, default=1.0, help="fixed point start")
    analyze.add_argument("--steps", type=int, default=64, help="fixed point iterations")
    analyze.add_argument(
        "--p-list", type=_float_list, default=[0.5, 0.25, 0.125], help="bounds mode probabilities"
    )
    analyze.add_argument("--csv", required=True, help="output CSV (PNG written alongside)")
    analyze.set_defaults(func=cmd_analyze)

    baseline = sub.add_parser("baseline", help="run the smallest-seed or shared-seed coder")
    baseline.add_argument("mode", choices=["min", "uni"])
    baseline.add_argument("--p", type=_prob_arg, default=0.25, help="success probability")
    baseline.add_argument("--n", type=int, default=1000, help="process count")
    baseline.add_argument(
        "--work-cap", type=int, default=10_000_000, help="uni trial budget"
    )
    baseline.add_argument("--csv", default=None, help="output CSV (stdout when omitted)")
    baseline.add_argument("--seed", type=_seed_arg, default=None, help="master seed")
    baseline.set_defaults(func=cmd_baseline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "n", 1) < 1:
        parser.error("n must be positive")
    if getattr(args, "random", 1) is not None and getattr(args, "random", 1) < 1:
        parser.error("--random needs a positive count")
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
