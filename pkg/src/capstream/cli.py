"""Command line interface: ``capstream {sample,merge,estimate,simulate}``."""

from __future__ import annotations

import argparse
import sys
from functools import reduce

from .continuous import ContinuousConfig, ContinuousSample, ContinuousSampler
from .continuous_est import estimate_continuous_1pass
from .core import (
    ALL,
    INF,
    FrequencyFunction,
    HashRange,
    InputError,
    KeySet,
    format_float,
    parse_float,
    read_stream,
)
from .discrete import DiscreteConfig, DiscreteSample, DiscreteSampler
from .discrete_est import estimate_discrete_1pass
from .harness import ExperimentConfig, diagonal_dominance_report, run_error_grid
from .twopass import PassOneConfig, PassOneSummary, TwoPassSample, merge_pass_one, pass_one, pass_two

SCHEMES = {"d": "discrete", "c": "continuous", "discrete": "discrete", "continuous": "continuous"}


def _float_list(text: str) -> list:
    return [parse_float(t) for t in text.split(",") if t]


def _ell(text: str) -> float:
    v = parse_float(text)
    return v if v == INF or v != int(v) else int(v)


def parse_segment(spec: str):
    """``all``, ``file:PATH`` (one key per line) or ``range:a:b[:seed]``."""
    if spec == "all":
        return ALL
    kind, _, rest = spec.partition(":")
    if kind == "file" and rest:
        with open(rest) as fh:
            return KeySet((line.rstrip("\r\n") for line in fh if line.strip()), spec)
    if kind == "range":
        parts = rest.split(":")
        if len(parts) in (2, 3):
            seg = HashRange(float(parts[0]), float(parts[1]), int(parts[2]) if len(parts) == 3 else 0)
            seg.spec = spec
            return seg
    raise InputError(f"bad segment spec {spec!r}")


def _read_weights(path: str) -> dict:
    weights = {}
    with open(path) as fh:
        for key, w in read_stream(fh):
            weights[key] = weights.get(key, 0.0) + w
    return weights


def _open_stream(path):
    if path is None or path == "-":
        return list(read_stream(sys.stdin))
    with open(path) as fh:
        return list(read_stream(fh))


def cmd_sample(args) -> int:
    scheme = SCHEMES[args.scheme]
    if (args.k is None) == (args.tau is None):
        raise InputError("give exactly one of --k and --tau")
    if args.mode is not None and args.mode != ("k" if args.k is not None else "tau"):
        raise InputError(f"--mode {args.mode} does not match the size option given")
    stream = _open_stream(args.input)
    ell = _ell(args.ell)
    if args.two_pass or args.pass1:
        cfg = PassOneConfig(scheme, ell, tau=args.tau, k=args.k, hash_seed=args.seed)
        summary = pass_one(stream, cfg, shard=args.shard)
        if args.two_pass:
            weights = pass_two(stream, summary.entries)
            with open(args.two_pass, "w") as fh:
                fh.writelines(f"{x}\t{format_float(w)}\n" for x, w in weights.items())
        sys.stdout.write(summary.dumps())
        return 0
    if scheme == "discrete":
        cfg = DiscreteConfig(ell=ell, tau=args.tau, k=args.k, seed=args.seed)
        sample = DiscreteSampler(cfg).process(stream).result()
    else:
        cfg = ContinuousConfig(ell=ell, tau=args.tau, k=args.k, delta=args.delta, seed=args.seed)
        sample = ContinuousSampler(cfg).process(stream).result()
    sys.stdout.write(sample.dumps())
    return 0


def cmd_merge(args) -> int:
    summaries = []
    for path in args.summaries:
        with open(path) as fh:
            summaries.append(PassOneSummary.loads(fh.read()))
    sys.stdout.write(reduce(merge_pass_one, summaries).dumps())
    return 0


def load_sample(text: str):
    head = text.split(None, 1)[0] if text.strip() else ""
    if head == "#pass1":
        return PassOneSummary.loads(text)
    if head == "#shl-discrete":
        return DiscreteSample.loads(text)
    if head == "#shl-continuous":
        return ContinuousSample.loads(text)
    raise InputError("unrecognized sample file header")


def cmd_estimate(args) -> int:
    with open(args.sample) as fh:
        sample = load_sample(fh.read())
    f = FrequencyFunction.parse(args.f)
    segment = parse_segment(args.segment)
    if isinstance(sample, PassOneSummary):
        if not args.two_pass:
            raise InputError("a pass-I summary needs --two-pass weights:PATH")
        kind, _, path = args.two_pass.partition(":")
        if kind != "weights" or not path:
            raise InputError("--two-pass expects weights:PATH")
        weights = _read_weights(path)
        missing = sample.keys - set(weights)
        if missing:
            raise InputError(f"{len(missing)} sampled keys have no weight in {path}")
        cfg = sample.config
        tp = TwoPassSample(cfg.scheme, cfg.ell, sample.tau, {x: weights[x] for x in sample.entries})
        q = tp.estimate(f, segment)
        tau, ell, keys = sample.tau, cfg.ell, sample.entries
    else:
        if args.two_pass:
            raise InputError("--two-pass needs a pass-I summary (sample --two-pass)")
        if isinstance(sample, DiscreteSample):
            q = estimate_discrete_1pass(sample, f, segment)
        else:
            q = estimate_continuous_1pass(sample, f, segment)
        tau, ell, keys = sample.tau, sample.ell, sample.counts
    n = sum(1 for x in keys if x in segment)
    print(
        f"Q_hat={format_float(q)} tau={format_float(float(tau))} ell={format_float(float(ell))} "
        f"f={f.spec} segment={segment.spec} n_sampled={n}"
    )
    return 0


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig(
        scheme=SCHEMES[args.scheme],
        k=args.k,
        ells=_float_list(args.ells),
        caps=_float_list(args.caps),
        alpha=args.alpha,
        m=args.m,
        rep=args.rep,
        seed=args.seed,
        universe=args.universe,
    )
    progress = None
    if args.verbose:
        def progress(done, total):
            print(f"rep {done}/{total}", file=sys.stderr)
    grid = run_error_grid(cfg, workers=args.workers, progress=progress)
    text = grid.report(args.format)
    checks = diagonal_dominance_report(grid)
    hits = sum(c.ok for c in checks)
    text += f"\n# diagonal: argmin ell within one grid step for {hits}/{len(checks)} T values\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="capstream", description="SH_l stream sampling and estimation")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample a key<TAB>weight stream from stdin or --input")
    s.add_argument("--scheme", choices=sorted(SCHEMES), required=True)
    s.add_argument("--mode", choices=["k", "tau"])
    s.add_argument("--k", type=int)
    s.add_argument("--tau", type=parse_float)
    s.add_argument("--ell", required=True, help="cap parameter l (number or inf)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--delta", type=float, default=0.0, help="continuous batch eviction fraction")
    s.add_argument("--input", help="stream file (default stdin)")
    s.add_argument("--pass1", action="store_true", help="emit a mergeable pass-I summary only")
    s.add_argument("--shard", type=int, default=0, help="shard number for pass-I randomness")
    s.add_argument("--two-pass", metavar="WEIGHTS_OUT", help="also run pass II, writing weights here")
    s.set_defaults(func=cmd_sample)

    m = sub.add_parser("merge", help="merge pass-I summaries")
    m.add_argument("summaries", nargs="+")
    m.set_defaults(func=cmd_merge)

    e = sub.add_parser("estimate", help="estimate Q(f, H) from a sample")
    e.add_argument("--sample", required=True)
    e.add_argument("--f", required=True, help="cap:T | sum | distinct | moment:p")
    e.add_argument("--segment", default="all", help="all | file:PATH | range:a:b[:seed]")
    e.add_argument("--two-pass", help="weights:PATH with exact weights of the sampled keys")
    e.set_defaults(func=cmd_estimate)

    g = sub.add_parser("simulate", help="error grid over (l, T) on Zipf streams")
    g.add_argument("--scheme", choices=sorted(SCHEMES), required=True)
    g.add_argument("--k", type=int, default=100)
    g.add_argument("--alpha", type=float, required=True)
    g.add_argument("--m", type=int, default=100_000)
    g.add_argument("--rep", type=int, default=200)
    g.add_argument("--ells", default="1,5,20,50,100,500,1000,10000")
    g.add_argument("--caps", default="1,5,20,50,100,500,1000,10000")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--universe", type=int, help="finite Zipf universe size (default unbounded)")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--format", choices=["tsv", "markdown"], default="tsv")
    g.add_argument("--out")
    g.add_argument("--verbose", action="store_true")
    g.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError, OSError) as e:
        print(f"capstream: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
