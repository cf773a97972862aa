"""Batch front end: ``polyconc <command> --config <path> [--seed N] [--out DIR]``.

Config files are line-oriented ``key = value`` pairs; ``#`` starts a comment.

Commands and their keys (defaults in brackets):

  norms   tensor=<path>  q [1]  restarts [20]
  bound   tensor=<path> | polynomial=<path>;  q | alpha;  dist;  M;
          kind [hanson_wright for matrices, chaos otherwise]
          (hanson_wright | chaos | chaos_alpha);  t_min, t_max, points [200]
  verify  dist;  q | alpha;  n [20];  tensor=<path> [all-ones minus identity];
          polynomial=<path>;  form [chaos] (chaos | polynomial | norm);
          kind [hanson_wright];  N [100000];  M;  C_max [1e6]
  clt     graph (complete | star | complete_bipartite | regular | custom);
          n; m1; m2; degree; adjacency=<path>;  dist;  reps [100000]
  orlicz  dist;  alpha [family default];  N [100000]

Every command accepts ``seed`` [0] and ``out`` [polyconc_out].  Distributions
are written like ``gaussian``, ``weibull:0.5``, ``poisson:2`` or ``bernoulli:0.5``.

Exit codes: 0 success, 1 runtime error, 2 unreadable config, 3 invalid value.
The environment variable TOOL_THREADS caps the BLAS thread pools.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

COMMANDS = ("norms", "bound", "verify", "clt", "orlicz")
EXIT_RUNTIME, EXIT_PARSE, EXIT_VALIDATION = 1, 2, 3
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class ConfigParseError(Exception):
    pass


class ConfigValidationError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigParseError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


# -- validation -------------------------------------------------------------------------

_SCHEMA = {
    "norms": {"tensor", "q", "restarts"},
    "bound": {"tensor", "polynomial", "q", "alpha", "dist", "M", "kind", "t_min", "t_max", "points"},
    "verify": {"dist", "q", "alpha", "n", "tensor", "polynomial", "form", "kind", "N", "M", "C_max"},
    "clt": {"graph", "n", "m1", "m2", "degree", "adjacency", "dist", "reps"},
    "orlicz": {"dist", "alpha", "N"},
}
_COMMON = {"command", "seed", "out"}


class Params:
    """Typed access to config values; every failure names its key."""

    def __init__(self, raw: dict[str, str], command: str):
        allowed = _SCHEMA[command] | _COMMON
        for key in raw:
            if key not in allowed:
                raise ConfigValidationError(key, f"unknown key for command {command!r}")
        self.raw = raw

    def has(self, key):
        return key in self.raw

    def text(self, key, default=None, choices=None):
        if key not in self.raw:
            if default is None:
                raise ConfigValidationError(key, "required")
            return default
        v = self.raw[key]
        if choices is not None and v not in choices:
            raise ConfigValidationError(key, f"must be one of {', '.join(choices)}")
        return v

    def integer(self, key, default=None, minimum=None):
        if key not in self.raw:
            if default is None:
                raise ConfigValidationError(key, "required")
            return default
        try:
            v = int(self.raw[key])
        except ValueError:
            raise ConfigValidationError(key, f"not an integer: {self.raw[key]!r}") from None
        if minimum is not None and v < minimum:
            raise ConfigValidationError(key, f"must be >= {minimum}")
        return v

    def real(self, key, default=None, positive=False):
        if key not in self.raw:
            return default
        try:
            v = float(self.raw[key])
        except ValueError:
            raise ConfigValidationError(key, f"not a number: {self.raw[key]!r}") from None
        if not math.isfinite(v) or (positive and v <= 0):
            raise ConfigValidationError(key, "must be a finite positive number" if positive else "must be finite")
        return v

    def path(self, key, required=True):
        if key not in self.raw:
            if required:
                raise ConfigValidationError(key, "required")
            return None
        p = Path(self.raw[key])
        if not p.is_file():
            raise ConfigValidationError(key, f"file not found: {p}")
        return p

    def dist(self, key="dist", required=True):
        from .distributions import DistributionError, parse_distribution

        if key not in self.raw:
            if required:
                raise ConfigValidationError(key, "required")
            return None
        try:
            return parse_distribution(self.raw[key])
        except DistributionError as exc:
            raise ConfigValidationError(key, str(exc)) from None

    def mode(self):
        """(q, alpha) with exactly one set."""
        if self.has("q") == self.has("alpha"):
            raise ConfigValidationError("q" if self.has("q") else "alpha", "give exactly one of q or alpha")
        if self.has("q"):
            return self.integer("q", minimum=1), None
        a = self.real("alpha", positive=True)
        if not (a <= 1 or a == 2):
            raise ConfigValidationError("alpha", "must lie in (0, 1] or equal 2")
        return None, a


def _read_tensor(params: Params, key="tensor"):
    from .tensors import TensorError, read_tensor

    try:
        return read_tensor(params.path(key))
    except (TensorError, ValueError) as exc:
        raise ConfigValidationError(key, str(exc)) from None


def _read_polynomial(params: Params, key="polynomial"):
    from .polynomial import Polynomial, PolynomialError

    try:
        return Polynomial.parse(params.path(key).read_text())
    except PolynomialError as exc:
        raise ConfigValidationError(key, str(exc)) from None


# -- output -------------------------------------------------------------------------------


def _clean(obj):
    """Convert numpy scalars and arrays to plain JSON values; non-finite floats become strings."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_clean(data), sort_keys=True, indent=2) + "\n")


def _cell(v) -> str:
    if isinstance(v, float) or type(v).__name__.startswith("float"):
        return "%.17g" % v
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


# -- commands -----------------------------------------------------------------------------


def cmd_norms(p: Params, out: Path, seed: int) -> dict:
    from .partition_norms import all_partition_norms

    A = _read_tensor(p)
    q = p.integer("q", 1, minimum=1)
    restarts = p.integer("restarts", 20, minimum=0)
    if q * A.order > 8:
        raise ConfigValidationError("q", f"q * order must be at most 8 (order {A.order})")
    norms = all_partition_norms(A, q, restarts=restarts, seed=seed)
    classes: dict = {}
    for J, res in norms.items():
        entry = classes.setdefault(str(res.decomposition), {"members": [], "res": res})
        entry["members"].append(str(J))
    rows = []
    for dec in sorted(classes, key=lambda k: (-len(classes[k]["res"].decomposition), k)):
        e = classes[dec]
        rows.append((dec, e["members"][0], len(e["members"]), float(e["res"].value), e["res"].method))
    write_csv(out / "norms.csv", ["decomposition", "representative", "partitions", "value", "method"], rows)
    write_csv(out / "plot.csv", ["x", "y"], [(i, r[3]) for i, r in enumerate(rows)])
    return {
        "order": A.order, "dim": A.dim, "q": q, "classes": len(rows),
        "norms": [{"decomposition": r[0], "value": r[3], "method": r[4]} for r in rows],
    }


def _bound_from_config(p: Params):
    import numpy as np

    from .bounds import chaos_tail_bound, chaos_tail_bound_alpha, hanson_wright, polynomial_tail_bound
    from .orlicz import psi_norm_exact

    q, alpha = p.mode()
    dist = p.dist(required=False)
    M = p.real("M", positive=True)
    if M is None:
        if dist is None:
            raise ConfigValidationError("M", "required when no dist is given")
        M = psi_norm_exact(dist.with_alpha(alpha if alpha is not None else 2.0 / q)).value
    if p.has("tensor") == p.has("polynomial"):
        raise ConfigValidationError("tensor", "give exactly one of tensor or polynomial")
    if p.has("polynomial"):
        f = _read_polynomial(p)
        dists = [dist] * f.n if dist is not None else None
        if dists is None:
            raise ConfigValidationError("dist", "required for polynomial bounds")
        return polynomial_tail_bound(f, dists, q=q, alpha=alpha, M=M), M
    A = _read_tensor(p)
    kind = p.text("kind", "hanson_wright" if A.order == 2 else "chaos", ("hanson_wright", "chaos", "chaos_alpha"))
    if kind == "hanson_wright":
        variances = None if dist is None else np.full(A.dim, dist.variance)
        return hanson_wright(A, M, q=q, alpha=alpha, variances=variances), M
    if kind == "chaos":
        if q is None:
            raise ConfigValidationError("q", "kind = chaos needs q")
        return chaos_tail_bound(A, q, M), M
    if alpha is None:
        raise ConfigValidationError("alpha", "kind = chaos_alpha needs alpha")
    return chaos_tail_bound_alpha(A, alpha, M), M


def cmd_bound(p: Params, out: Path, seed: int) -> dict:
    import numpy as np

    bound, M = _bound_from_config(p)
    points = p.integer("points", 200, minimum=2)
    scales = [s for s, _ in bound.terms] or [1.0]
    t_min = p.real("t_min", min(scales) / 100, positive=True)
    t_max = p.real("t_max", max(scales + bound.crossovers()) * 1000, positive=True)
    if t_max <= t_min:
        raise ConfigValidationError("t_max", "must exceed t_min")
    t = np.geomspace(t_min, t_max, points)
    b = bound.probability(t)
    write_csv(out / "tail.csv", ["t", "bound"], zip(t.tolist(), b.tolist()))
    write_csv(out / "plot.csv", ["x", "y"], zip(t.tolist(), b.tolist()))
    return {
        "M": M, "terms": bound.to_records(), "crossovers": bound.crossovers(),
        "centering": bound.meta.get("centering"),
    }


def cmd_verify(p: Params, out: Path, seed: int) -> dict:
    from .simulate import Experiment, verify_domination
    from .tensors import ones_minus_identity

    dist = p.dist()
    q, alpha = p.mode()
    form = p.text("form", "chaos", ("chaos", "polynomial", "norm"))
    N = p.integer("N", 100_000, minimum=10_000)
    tensor = poly = None
    if form == "polynomial":
        poly = _read_polynomial(p)
        n = poly.n
    else:
        if p.has("tensor"):
            tensor = _read_tensor(p)
            n = tensor.dim
        else:
            n = p.integer("n", 20, minimum=2)
            tensor = ones_minus_identity(n)
    exp = Experiment(
        dist=dist, n=n, form=form, tensor=tensor, polynomial=poly, q=q, alpha=alpha, N=N, seed=seed,
        bound_kind=p.text("kind", "hanson_wright", ("hanson_wright", "chaos", "chaos_alpha")),
        M=p.real("M", positive=True), C_max=p.real("C_max", 1e6, positive=True),
    )
    report = verify_domination(exp)
    rows = report.rows()
    write_csv(out / "tail.csv", ["t", "empirical_survival", "bound_at_C"], rows)
    write_csv(out / "plot.csv", ["x", "y"], [(t, s) for t, s, _ in rows])
    return {"dist": p.raw["dist"], "n": n, "form": form, **report.summary()}


def _graph(p: Params):
    import numpy as np

    from .simulate import GraphSpec

    kind = p.text("graph", choices=("complete", "star", "complete_bipartite", "regular", "custom"))
    if kind == "complete":
        return GraphSpec.complete(p.integer("n", minimum=2))
    if kind == "star":
        return GraphSpec.star(p.integer("n", minimum=2))
    if kind == "complete_bipartite":
        return GraphSpec.complete_bipartite(p.integer("m1", minimum=1), p.integer("m2", minimum=1))
    if kind == "regular":
        return GraphSpec.regular(p.integer("n", minimum=2), p.integer("degree", minimum=1))
    try:
        return GraphSpec.custom(np.loadtxt(p.path("adjacency"), ndmin=2))
    except ValueError as exc:
        raise ConfigValidationError("adjacency", str(exc)) from None


def cmd_clt(p: Params, out: Path, seed: int) -> dict:
    import numpy as np
    from scipy import stats

    from .simulate import simulate_edge_weight_clt

    G = _graph(p)
    dist = p.dist()
    if not dist.is_nonnegative:
        raise ConfigValidationError("dist", "edge weights need a nonnegative distribution")
    reps = p.integer("reps", 100_000, minimum=2)
    res = simulate_edge_weight_clt(G, dist, reps, seed)
    write_csv(out / "samples.csv", ["sample"], ((v,) for v in res.normalized_samples.tolist()))
    x = np.linspace(-4, 4, 161)
    ecdf = np.searchsorted(np.sort(res.normalized_samples), x, side="right") / reps
    write_csv(out / "plot.csv", ["x", "y", "normal_cdf"], zip(x.tolist(), ecdf.tolist(), stats.norm.cdf(x).tolist()))
    return {"graph": G.kind, "n": G.n, "dist": p.raw["dist"], "reps": reps, **res.summary()}


def cmd_orlicz(p: Params, out: Path, seed: int) -> dict:
    import numpy as np

    from .orlicz import InfinitePsiNormError, psi_norm_empirical, psi_norm_exact, psi_norm_moment_sandwich
    from .simulate import sample

    dist = p.dist()
    alpha = p.real("alpha", dist.alpha, positive=True)
    d = dist.with_alpha(alpha)
    N = p.integer("N", 100_000, minimum=1)
    result: dict = {"dist": p.raw["dist"], "alpha": alpha}
    try:
        exact = psi_norm_exact(d).value
    except InfinitePsiNormError:
        exact = math.inf
    result["exact"] = exact
    result["empirical"] = psi_norm_empirical(sample(d, N, seed), alpha).value
    if alpha < 1:
        result["sandwich_lower"], result["sandwich_upper"] = psi_norm_moment_sandwich(d.lp_norm, alpha)
    rows = []
    if math.isfinite(exact):
        for t in np.geomspace(exact / 2, exact * 4, 60).tolist():
            rows.append((t, d.log_psi_objective(t)))
    write_csv(out / "plot.csv", ["x", "y"], rows)
    return result


_DISPATCH = {"norms": cmd_norms, "bound": cmd_bound, "verify": cmd_verify, "clt": cmd_clt, "orlicz": cmd_orlicz}


# -- entry point --------------------------------------------------------------------------


def _apply_thread_cap() -> None:
    cap = os.environ.get("TOOL_THREADS")
    if cap is None:
        return
    if not cap.isdigit() or int(cap) < 1:
        raise ConfigValidationError("TOOL_THREADS", "must be a positive integer")
    for var in THREAD_VARS:
        os.environ[var] = cap


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="polyconc", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key = value file")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--out", help="output directory (overrides the config)")
    return ap


def run(command: str, config_path: str, seed=None, out=None) -> int:
    try:
        _apply_thread_cap()
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            raise ConfigParseError(f"cannot read config: {exc}") from None
        raw = parse_config(text)
        if raw.get("command", command) != command:
            raise ConfigValidationError("command", f"config is for {raw['command']!r}, not {command!r}")
        params = Params(raw, command)
        seed = seed if seed is not None else params.integer("seed", 0, minimum=0)
        if seed < 0:
            raise ConfigValidationError("seed", "must be >= 0")
        out_dir = Path(out or params.text("out", "polyconc_out"))
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigValidationError("out", f"cannot create output directory: {exc}") from None
        summary = _DISPATCH[command](params, out_dir, seed)
    except ConfigParseError as exc:
        print(f"polyconc: config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigValidationError as exc:
        print(f"polyconc: invalid value for {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"polyconc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_json(out_dir / "result.json", {"command": command, "seed": seed, "config": raw, **summary})
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
