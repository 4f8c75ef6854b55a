"""Command-line entry point: ``bench run | gen | stats``."""
import argparse
import logging
import sys

import numpy as np

from . import bench, kernels
from .data import dataset_stats, generate_synthetic, parse_libsvm, parse_spec_string, write_libsvm


def _cmd_run(args):
    cfg = bench.load_config(args.config)
    out = args.out or cfg.out
    rows = bench.run_experiment(cfg)
    if out:
        bench.emit_csv(rows, out)
    print(f"{'solver':<10} {'seed':>4} {'eta':>12} {'passes':>8} {'objective':>14} {'est_error':>12}")
    for r in bench.summarize(rows):
        flag = " (diverged)" if r.diverged else ""
        print(f"{r.solver:<10} {r.seed:>4} {r.eta:>12.4g} {r.passes:>8.2f} "
              f"{r.objective:>14.6g} {r.est_error:>12.4g}{flag}")
    if out:
        print(f"wrote {len(rows)} rows to {out}")
    return 0


def _cmd_gen(args):
    spec = parse_spec_string(args.spec)
    ds, truth = generate_synthetic(spec)
    write_libsvm(ds, args.out)
    if args.truth:
        np.savetxt(args.truth, truth.x_star, fmt="%.17g")
    print(f"wrote n={ds.n} d={ds.d} nnz={ds.nnz} to {args.out}")
    return 0


def _cmd_stats(args):
    st = dataset_stats(parse_libsvm(args.data, normalize=False))
    print(f"n={st.n}")
    print(f"d={st.d}")
    print(f"nnz={st.nnz}")
    print(f"density={st.density:.6g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="bench", description="Sparse-constrained solver benchmark")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True, help="experiment config file")
    r.add_argument("--out", help="CSV output path (overrides the config's out key)")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("gen", help="write a synthetic instance in SVMlight format")
    g.add_argument("--spec", required=True,
                   help="comma-separated key=value list, e.g. n=500,d=1000,s_star=50,noise_variance=0.01")
    g.add_argument("--out", required=True, help="SVMlight output path")
    g.add_argument("--truth", help="also write the true parameter vector, one value per line")
    g.set_defaults(func=_cmd_gen)

    s = sub.add_parser("stats", help="print n, d, nnz and density of an SVMlight file")
    s.add_argument("--data", required=True)
    s.set_defaults(func=_cmd_stats)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger(__name__).debug("kernel backend: %s", kernels.backend_name())
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except (OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
