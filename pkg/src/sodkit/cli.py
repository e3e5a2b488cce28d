"""Command-line front end.

Subcommands: clap-plan, cctm-check, boost-table, boost-train, score-stats.
Every subcommand accepts --config FILE with plain ``key = value`` lines;
command-line flags override file values. Exit codes: 0 success, 1 contract
violation (bad arguments, malformed input), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from . import fusion, harness, tiling
from .boost import weight_table
from .errors import SodkitError, TrainingError

GRAD_CHECK_TOL = 1e-4

_UNSET = object()


class CliError(SodkitError):
    """Bad command line or config file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


@dataclass(frozen=True)
class Opt:
    flag: str
    parse: callable
    default: object = None
    required: bool = False
    help: str = ""

    @property
    def dest(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


def _pair(s):
    """'1024x768' -> (1024.0, 768.0), first extent x second."""
    a, _, b = s.partition("x")
    if not b:
        raise ValueError(f"expected AxB, got {s!r}")
    return float(a), float(b)


def _pairs(s):
    return [_pair(p) for p in s.split(",") if p]


def floats(s):
    return [float(v) for v in s.split(",") if v]


def _ints3(s):
    parts = [int(v) for v in s.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected B,C,L, got {s!r}")
    return tuple(parts)


COMMANDS: dict[str, list[Opt]] = {
    "clap-plan": [
        Opt("--width", int, required=True, help="input width"),
        Opt("--height", int, required=True, help="input height"),
        Opt("--patch-w", int, required=True, help="patch width"),
        Opt("--patch-h", int, required=True, help="patch height"),
        Opt("--out", str, help="write CSV here instead of stdout"),
    ],
    "cctm-check": [
        Opt("--seed", int, default=0, help="RNG seed"),
        Opt("--shape", _ints3, default=(1, 3, 5), help="tensor shape B,C,L"),
        Opt("--out", str, help="write CSV here instead of stdout"),
    ],
    "boost-table": [
        Opt("--image", _pair, default=(1024.0, 1024.0), help="image size HxW"),
        Opt("--sizes", _pairs, required=True, help="object sizes, e.g. 2x2,8x8"),
        Opt("--gamma", float, default=0.25, help="focusing exponent"),
        Opt("--betas", floats, default=[0.05, 0.1, 0.25, 1.0], help="beta values"),
        Opt("--out", str, help="write CSV here instead of stdout"),
    ],
    "boost-train": [
        Opt("--loss", str, default="boost", help="boost or focal"),
        Opt("--alpha", float, default=0.25),
        Opt("--beta", float, default=1.0),
        Opt("--gamma", float, default=2.0),
        Opt("--epochs", int, default=200),
        Opt("--lr", float, default=0.5),
        Opt("--seed", int, default=0),
        Opt("--n", int, default=5000, help="synthetic dataset size"),
        Opt("--out", str, help="write metrics CSV here instead of stdout"),
    ],
    "score-stats": [
        Opt("--in", str, required=True, help="COCO results JSON"),
        Opt("--threshold", float, default=0.4),
        Opt("--edges", floats, default=list(harness.DEFAULT_STAT_EDGES)),
        Opt("--out", str, help="write CSV here instead of stdout"),
    ],
}


def _load_config(path: str, opts: list[Opt]) -> dict:
    known = {o.dest: o for o in opts}
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key = key.strip().replace("-", "_")
            if key not in known:
                raise CliError(f"{path}:{lineno}: unknown option {key!r}")
            try:
                values[key] = known[key].parse(value.strip())
            except ValueError as exc:
                raise CliError(f"{path}:{lineno}: {exc}") from None
    return values


def _resolve(args, opts: list[Opt]) -> argparse.Namespace:
    merged = {o.dest: o.default for o in opts}
    if args.config:
        merged.update(_load_config(args.config, opts))
    for o in opts:
        raw = getattr(args, o.dest)
        if raw is not _UNSET:
            try:
                merged[o.dest] = o.parse(raw)
            except ValueError as exc:
                raise CliError(f"{o.flag}: {exc}") from None
    for o in opts:
        if o.required and merged[o.dest] is None:
            raise CliError(f"{o.flag} is required")
    return argparse.Namespace(**merged)


def _emit(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_clap_plan(ns) -> int:
    grid = tiling.plan_grid(W=ns.width, H=ns.height, W_o=ns.patch_w, H_o=ns.patch_h)
    _emit([grid.csv_row()], ns.out)
    return 0


def _cmd_cctm_check(ns) -> int:
    err = fusion.gradient_check(ns.seed, ns.shape)
    ok = err < GRAD_CHECK_TOL
    shape = "x".join(str(v) for v in ns.shape)
    _emit([f"{ns.seed},{shape},{err:.6e},{'pass' if ok else 'fail'}"], ns.out)
    return 0 if ok else 2


def _cmd_boost_table(ns) -> int:
    img_h, img_w = ns.image
    table = weight_table(ns.sizes, H=img_h, W=img_w, gamma=ns.gamma, betas=ns.betas)
    _emit(table.csv_lines(), ns.out)
    return 0


def _cmd_boost_train(ns) -> int:
    cfg = harness.RunConfig(
        loss=ns.loss, alpha=ns.alpha, beta=ns.beta, gamma=ns.gamma,
        epochs=ns.epochs, lr=ns.lr, seed=ns.seed, n=ns.n, out=ns.out,
    )
    cfg.validate()
    data = harness.synth_dataset(cfg.seed, cfg.n)
    metrics = harness.train_toy(data, cfg)
    _emit(metrics.csv_lines(), cfg.out)
    return 0


def _cmd_score_stats(ns) -> int:
    dets = harness.ingest_coco_results(getattr(ns, "in"))
    stats = harness.score_stats(dets, ns.threshold, tuple(ns.edges))
    _emit(stats.csv_lines(), ns.out)
    return 0


_DISPATCH = {
    "clap-plan": _cmd_clap_plan,
    "cctm-check": _cmd_cctm_check,
    "boost-table": _cmd_boost_table,
    "boost-train": _cmd_boost_train,
    "score-stats": _cmd_score_stats,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="sodkit", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        sub = subs.add_parser(name)
        sub.add_argument("--config", default=None, help="key = value option file")
        for o in opts:
            sub.add_argument(o.flag, default=_UNSET, help=o.help)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        ns = _resolve(args, COMMANDS[args.command])
        return _DISPATCH[args.command](ns)
    except TrainingError as exc:
        print(f"sodkit: {exc}", file=sys.stderr)
        return 2
    except (SodkitError, OSError, ValueError) as exc:
        print(f"sodkit: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
