"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 timeout.
All stochastic output is reproducible from the master seed alone and is
independent of --threads; wall-clock columns are the one exception.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from . import estimators
from .errors import HardSphereError, SamplerTimeoutError, UsageError
from .geometry import METRICS, SpaceSpec
from .radius import ConstantRadius, RadiusLaw, TwoPointRadius, UniformRadius
from .seeding import spawn_rng


def parse_radius(spec: str, d: int) -> RadiusLaw:
    """Parse a radius law spec.

    const:R sets a fixed radius R.  unif:LO,HI draws R uniformly.
    twopoint:V1,V2,P gives the volume variable R**d the value V1 with
    probability P, else V2 (values are of R**d; the radius itself is
    V**(1/d) for the given dimension).
    """
    try:
        kind, _, rest = spec.partition(":")
        parts = [float(x) for x in rest.split(",")] if rest else []
        if kind == "const" and len(parts) == 1:
            return ConstantRadius(parts[0])
        if kind == "unif" and len(parts) == 2:
            return UniformRadius(parts[0], parts[1])
        if kind == "twopoint" and len(parts) == 3:
            v1, v2, p = parts
            if not (0.0 < v1 < v2):
                raise UsageError("twopoint needs 0 < v1 < v2")
            return TwoPointRadius(v1 ** (1.0 / d), v2 ** (1.0 / d), p)
    except ValueError:
        pass
    raise UsageError(
        f"bad radius spec {spec!r}; use const:R | twopoint:V1,V2,P | unif:LO,HI")


def radius_spec_string(law: RadiusLaw, d: int) -> str:
    if isinstance(law, ConstantRadius):
        return f"const:{law.value:.17g}"
    if isinstance(law, UniformRadius):
        return f"unif:{law.lo:.17g},{law.hi:.17g}"
    return (f"twopoint:{law.a_low**d:.17g},{law.a_high**d:.17g},"
            f"{law.p_low:.17g}")


def canonical_model_string(space: SpaceSpec) -> str:
    return (f"d={space.d} metric={space.metric} lambda={space.lam:.17g} "
            f"eta={space.eta:.17g} radius={radius_spec_string(space.radius_law, space.d)}")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=2, help="dimension (default 2)")
    p.add_argument("--metric", choices=METRICS, default="torus")
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="total intensity")
    p.add_argument("--eta", type=float, required=True, help="radius exponent")
    p.add_argument("--radius", default="const:1.0",
                   help="radius law: const:R | twopoint:V1,V2,P | unif:LO,HI "
                        "(twopoint values are of R**d)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for replicates (default $HARDSPHERE_THREADS or 1)")
    p.add_argument("--output", default="-", help="output path, '-' for stdout")


def _threads(ns) -> int:
    if ns.threads is not None:
        return max(1, ns.threads)
    import os
    return max(1, int(os.environ.get("HARDSPHERE_THREADS", "1")))


def _space(ns) -> SpaceSpec:
    return SpaceSpec(ns.d, ns.metric, ns.lam, ns.eta, parse_radius(ns.radius, ns.d))


def _emit(ns, text: str) -> None:
    if ns.output == "-":
        sys.stdout.write(text)
    else:
        with open(ns.output, "w") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hardsphere",
                                 description="perfect samplers for hard-sphere models")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("sample", help="emit perfect samples as CSV sphere rows")
    _add_model_args(p)
    _add_common(p)
    p.add_argument("--sampler", choices=estimators.SAMPLER_IDS, default="naive-ar")
    p.add_argument("--T", type=int, default=1, help="number of samples")
    p.add_argument("--rho", type=float, default=None, help="twist target (rr-is)")
    p.add_argument("--delta", type=float, default=0.5, help="partition fraction (rr-is)")
    p.add_argument("--max-iterations", type=int, default=None,
                   help="abort a sample after this many AR iterations "
                        "(window events for dcftp samplers)")

    p = sub.add_parser("pno", help="estimate the non-overlap probability")
    _add_model_args(p)
    _add_common(p)
    p.add_argument("--n", type=int, default=None, help="fixed sphere count (default Poisson)")
    p.add_argument("--trials", type=int, default=100_000)

    p = sub.add_parser("work", help="spheres generated per sample")
    _add_model_args(p)
    _add_common(p)
    p.add_argument("--samplers", default="naive-ar",
                   help="comma-separated sampler ids")
    p.add_argument("--T", type=int, default=200)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--delta", type=float, default=0.5)

    p = sub.add_parser("insertion", help="steady-state insertion probability")
    _add_model_args(p)
    _add_common(p)
    p.add_argument("--sampler", choices=estimators.SAMPLER_IDS, default="naive-ar")
    p.add_argument("--T", type=int, default=10_000)

    p = sub.add_parser("experiment", help="run a comparison preset")
    _add_common(p)
    p.add_argument("--preset", choices=sorted(estimators.PRESETS), required=True)
    p.add_argument("--T", type=int, default=200)

    p = sub.add_parser("validate", help="cross-sampler validation battery")
    _add_common(p)
    p.add_argument("--quick", action="store_true", help="smaller sample sizes")
    return ap


def _cmd_sample(ns) -> int:
    space = _space(ns)
    threads = _threads(ns)
    opts = {}
    if ns.sampler == "rr-is":
        opts = {"rho": ns.rho, "delta": ns.delta}
    if ns.max_iterations is not None:
        if ns.sampler.startswith("dcftp-"):
            opts["max_events"] = ns.max_iterations
        else:
            opts["max_iterations"] = ns.max_iterations
    sampler = estimators.make_sampler(space, ns.sampler, **opts)
    results = estimators._run_replicates(sampler, ns.T, ns.seed, (0,), threads)
    header = "sample_id," + ",".join(f"x{i+1}" for i in range(space.d)) + ",radius"
    lines = [header]
    for sid, (cfg, _) in enumerate(results):
        for sph in cfg.spheres:
            coords = ",".join(format(c, ".9g") for c in sph.center)
            lines.append(f"{sid},{coords},{format(sph.radius, '.9g')}")
    _emit(ns, "\n".join(lines) + "\n")
    return 0


def _cmd_pno(ns) -> int:
    est = estimators.estimate_pno(_space(ns), ns.trials, n=ns.n, seed=ns.seed)
    _emit(ns, "value,std_error,n_samples,seed\n"
          f"{est.value:.9g},{est.std_error:.9g},{est.n_samples},{est.seed}\n")
    return 0


def _cmd_work(ns) -> int:
    space = _space(ns)
    threads = _threads(ns)
    ids = [s.strip() for s in ns.samplers.split(",") if s.strip()]
    rows = []
    for si, sid in enumerate(ids):
        if sid not in estimators.SAMPLER_IDS:
            raise UsageError(f"unknown sampler {sid!r}")
        opts = {"rho": ns.rho, "delta": ns.delta} if sid == "rr-is" else {}
        rows.append(estimators.work_per_sample(space, sid, ns.T, seed=ns.seed,
                                               key=(si,), threads=threads, **opts))
    res = estimators.ExperimentResult(preset="custom", rows=rows)
    _emit(ns, res.to_csv())
    return 0


def _cmd_insertion(ns) -> int:
    est = estimators.insertion_probability(_space(ns), ns.sampler, ns.T,
                                           seed=ns.seed, threads=_threads(ns))
    _emit(ns, "value,std_error,n_samples,seed\n"
          f"{est.value:.9g},{est.std_error:.9g},{est.n_samples},{est.seed}\n")
    return 0


def _cmd_experiment(ns) -> int:
    res = estimators.run_experiment(ns.preset, T=ns.T, seed=ns.seed,
                                    threads=_threads(ns))
    _emit(ns, res.to_csv())
    return 0


def _cmd_validate(ns) -> int:
    T = 1500 if ns.quick else 5000
    iters = 20_000 if ns.quick else 100_000
    checks = estimators.validation_battery(seed=ns.seed, T=T,
                                           identity_iters=iters,
                                           threads=_threads(ns))
    lines = []
    all_ok = True
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        all_ok &= c.passed
        lines.append(f"{status} {c.name} ({c.detail})")
    lines.append("VALIDATION " + ("PASSED" if all_ok else "FAILED"))
    _emit(ns, "\n".join(lines) + "\n")
    return 0 if all_ok else 1


_COMMANDS = {
    "sample": _cmd_sample,
    "pno": _cmd_pno,
    "work": _cmd_work,
    "insertion": _cmd_insertion,
    "experiment": _cmd_experiment,
    "validate": _cmd_validate,
}


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _COMMANDS[ns.cmd](ns)
    except SamplerTimeoutError as exc:
        print(f"timeout: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HardSphereError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
