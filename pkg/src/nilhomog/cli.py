"""Config-driven command line: ``nilhomog <subcommand> --config FILE --out DIR``.

Config files are flat ``section.key = value`` lines; ``#`` starts a comment.
Lists are comma-separated, points in a list of points are separated by ``;``
and fractions such as ``1/16`` are accepted wherever a number is.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BoundedSearchError, HomogError, InputError, NonconvergenceError, RangeError, ResolutionError

log = logging.getLogger("nilhomog")

SUBCOMMANDS = ("check-model", "potential", "beta", "growth", "cc-dist", "pansu", "lbar", "homogenize", "cell")
NEEDS_SEED = ("cc-dist", "lbar", "pansu")


def _num(s: str) -> float:
    try:
        return float(Fraction(s.strip()))
    except (ValueError, ZeroDivisionError):
        raise InputError(f"not a number: {s!r}") from None


def _int(s: str) -> int:
    try:
        return int(s.strip())
    except ValueError:
        raise InputError(f"not an integer: {s!r}") from None


def _nums(s: str) -> list:
    return [_num(t) for t in s.split(",") if t.strip()]


def _points(s: str) -> list:
    return [_nums(p) for p in s.split(";") if p.strip()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise InputError(f"not a boolean: {s!r}")


def _str(s: str) -> str:
    return s.strip().strip('"').strip("'")


# key -> (parser, default)
SCHEMA = {
    "model.kind": (_str, "kinetic"),
    "model.dimension": (_int, 1),
    "model.potential": (_str, "cos"),  # cos | fourier
    "model.amplitude": (_num, 1.0),
    "model.fourier": (_points, []),  # k1[,k2],a,b ; ...
    "model.a_max": (_num, 4.0),
    "model.normalize": (_bool, False),
    "group.tag": (_str, "Z1"),
    "group.generators": (_points, []),
    "group.include_center": (_bool, False),
    "group.norm": (_str, "l2"),
    "discretization.h_x": (_num, 0.05),
    "discretization.h_t": (_num, 0.1),
    "discretization.h_v": (_num, 0.01),
    "discretization.r_box": (_num, 10.0),
    "discretization.quadrature": (_str, "midpoint"),
    "tolerance.tau_beta": (_num, 1e-3),
    "tolerance.tau_opt": (_num, 1e-3),
    "tolerance.residual": (_num, 1e-4),
    "tolerance.c_conv": (_num, 1e-6),
    "experiment.eps_list": (_nums, [0.25, 0.125, 0.0625]),
    "experiment.R": (_num, 2.0),
    "experiment.T": (_num, 1.0),
    "experiment.T_grid": (_nums, [1.0]),
    "experiment.T_list": (_nums, [4.0, 8.0, 16.0]),
    "experiment.h_max": (_num, 2.0),
    "experiment.dh": (_num, 0.25),
    "experiment.p_list": (_nums, [0.0, 0.5, 1.0]),
    "experiment.targets": (_points, []),
    "experiment.y": (_nums, [0.0]),
    "experiment.x0": (_nums, [0.0]),
    "experiment.datum": (_str, "cone"),  # cone | linear | zero
    "experiment.datum_coef": (_nums, [1.0]),
    "experiment.net": (_int, 33),
    "experiment.r_max": (_int, 10),
    "experiment.n_pieces": (_int, 32),
    "experiment.restarts": (_int, 4),
    "experiment.seed": (_int, -1),
    "experiment.every": (_int, 1),
    "output.dir": (_str, "out"),
}


@dataclass
class ExperimentConfig:
    values: dict
    explicit: dict = field(default_factory=dict)  # key -> raw text as written

    def __getitem__(self, key):
        return self.values[key]

    @property
    def hash(self) -> str:
        canon = "\n".join(f"{k}={self.explicit[k]}" for k in sorted(self.explicit))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config(text: str) -> ExperimentConfig:
    values = {k: d for k, (_, d) in SCHEMA.items()}
    explicit = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"line {n}: expected 'section.key = value'")
        key, raw = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA:
            raise InputError(f"line {n}: unknown key {key!r}")
        if key in explicit:
            raise InputError(f"line {n}: duplicate key {key!r}")
        values[key] = SCHEMA[key][0](raw)
        explicit[key] = " ".join(raw.split())
    return ExperimentConfig(values, explicit)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


# ---------------------------------------------------------------- builders


def build_model(cfg: ExperimentConfig):
    from .lagrangian import FourierPotential, kinetic, mechanical

    dim, a_max = cfg["model.dimension"], cfg["model.a_max"]
    kind = cfg["model.kind"]
    if kind == "kinetic":
        return kinetic(dim, a_max)
    if kind == "mechanical":
        if cfg["model.potential"] == "cos":
            pot = FourierPotential.cosine(dim, cfg["model.amplitude"])
        elif cfg["model.potential"] == "fourier":
            terms = []
            for row in cfg["model.fourier"]:
                if len(row) != dim + 2:
                    raise InputError("fourier rows are k_1..k_n, a, b")
                terms.append((tuple(int(k) for k in row[:dim]), row[dim], row[dim + 1]))
            pot = FourierPotential(tuple(terms))
        else:
            raise InputError(f"unknown potential {cfg['model.potential']!r}")
        model = mechanical(pot, dim, a_max)
        if cfg["model.normalize"]:
            from .effective import normalize_model

            model = normalize_model(model)
        return model
    raise InputError(f"model kind {kind!r} cannot be built from a config")


def build_spec(cfg: ExperimentConfig):
    from .mane import DiscretizationSpec

    return DiscretizationSpec(cfg["discretization.h_x"], cfg["discretization.h_t"], cfg["discretization.r_box"],
                              cfg["discretization.h_v"], cfg["discretization.quadrature"])


def build_presentation(cfg: ExperimentConfig):
    from .group import GroupPresentation

    gens = [tuple(int(c) for c in g) for g in cfg["group.generators"]] or None
    return GroupPresentation.from_tag(cfg["group.tag"], gens, cfg["group.include_center"])


def build_carnot(cfg: ExperimentConfig):
    from .carnot import CarnotGroup

    tag = cfg["group.tag"].upper()
    if tag == "H3":
        return CarnotGroup.heisenberg(cfg["group.norm"])
    if tag.startswith("Z"):
        return CarnotGroup.abelian(int(tag[1:]), cfg["group.norm"])
    raise InputError(f"unknown group {tag!r}")


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


class Writer:
    def __init__(self, out: Path, cfg: ExperimentConfig, sub: str, seed):
        self.out, self.cfg, self.sub, self.seed = out, cfg, sub, seed
        out.mkdir(parents=True, exist_ok=True)

    def header(self) -> str:
        return (f"# config_hash={self.cfg.hash}\n# code_version={__version__}\n"
                f"# provenance=nilhomog {self.sub} seed={self.seed}\n")

    def write(self, name: str, text: str):
        path = self.out / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
        log.info("wrote %s", path)

    def csv(self, name: str, columns: list, rows):
        buf = io.StringIO()
        buf.write(self.header())
        buf.write(",".join(columns) + "\n")
        for r in rows:
            buf.write(",".join(_fmt(v) for v in r) + "\n")
        self.write(name, buf.getvalue())


# ---------------------------------------------------------------- subcommands


def cmd_check_model(cfg, w, seed):
    from .lagrangian import SampleSpec, check_tonelli

    model = build_model(cfg)
    rep = check_tonelli(model, SampleSpec(c_conv=cfg["tolerance.c_conv"]))
    rows = [("valid", int(rep.valid)), ("convexity_modulus", rep.convexity_modulus), ("invariant", int(rep.invariant))]
    rows += [(f"B({a:g})", b) for a, b in sorted(rep.superlinearity.items())]
    w.csv("check.csv", ["metric", "value"], rows)
    print("valid" if rep.valid else "invalid: " + "; ".join(rep.problems))
    if not rep.valid:
        raise InputError("model fails the Tonelli checks")


def cmd_potential(cfg, w, seed):
    from .mane import cache_key, mane_potential, write_table_cache

    model, spec = build_model(cfg), build_spec(cfg)
    y = np.asarray(cfg["experiment.y"], dtype=float)
    table = mane_potential(model, y, spec, cfg["experiment.T"])
    tmp = w.out / "potential.body.tmp"
    table.to_csv(tmp, every=cfg["experiment.every"])
    w.write("potential.csv", w.header() + tmp.read_text())
    tmp.unlink()
    key = cache_key(model, spec, y) or cfg.hash
    write_table_cache(table, w.out / f"potential-{key[:16]}.bin")
    print(f"tau_dp={table.tau_dp:.3g}")


def cmd_beta(cfg, w, seed):
    from .effective import convexify, effective_hamiltonian, midpoint_violation, sample_beta

    model, spec = build_model(cfg), build_spec(cfg)
    h_max, dh = cfg["experiment.h_max"], cfg["experiment.dh"]
    m = int(round(h_max / dh))
    axes = tuple(dh * np.arange(-m, m + 1) for _ in range(model.dim))
    beta = sample_beta(model, axes, cfg["experiment.T_list"], spec, tol=cfg["tolerance.tau_beta"])
    viol = midpoint_violation(beta)
    cb = convexify(beta)
    cols = ["h"] if model.dim == 1 else [f"h{i + 1}" for i in range(model.dim)]
    rows = [(*p, v, e) for p, v, e in zip(beta.points(), beta.values.reshape(-1), beta.errors.reshape(-1))]
    w.csv("beta.csv", cols + ["beta", "error"], rows)
    ps = np.asarray(cfg["experiment.p_list"], dtype=float)
    slopes = ps[:, None] if model.dim == 1 else ps.reshape(-1, model.dim)
    ham = effective_hamiltonian(cb, slopes, raw=True)
    pc = ["p"] if model.dim == 1 else [f"p{i + 1}" for i in range(model.dim)]
    w.csv("alpha.csv", pc + ["alpha"], [(*p, a) for p, a in zip(ham.slopes, ham.values)])
    print(f"offset={beta.offset!r} midpoint_violation={viol:.3g}")


def cmd_growth(cfg, w, seed):
    from .group import ball_growth

    pres = build_presentation(cfg)
    tab = ball_growth(pres, cfg["experiment.r_max"])
    w.csv("growth.csv", ["r", "count"], zip(tab.radii, tab.counts))
    print(f"fitted_exponent={tab.fitted_exponent:.4f} bass_dimension={tab.bass_dimension}")


def cmd_cc_dist(cfg, w, seed):
    from .carnot import cc_distance

    g = build_carnot(cfg)
    rows = []
    for t in cfg["experiment.targets"]:
        d = cc_distance(g, np.zeros(g.dim), t, cfg["experiment.n_pieces"], cfg["experiment.restarts"], seed,
                        cfg["tolerance.residual"])
        rows.append((*t, d))
    cols = [f"q{i + 1}" for i in range(g.dim)]
    w.csv("ccdist.csv", cols + ["distance"], rows)


def cmd_pansu(cfg, w, seed):
    from .carnot import cc_distance, rescale_map_h, stable_norm_group
    from .group import word_norms

    pres = build_presentation(cfg)
    g = build_carnot(cfg)
    limit_group = stable_norm_group(pres)
    rows = []
    for t in cfg["experiment.targets"]:
        lim = cc_distance(limit_group, np.zeros(g.dim), t, cfg["experiment.n_pieces"],
                          cfg["experiment.restarts"], seed)
        gammas = {e: rescale_map_h(g, pres, e, t) for e in cfg["experiment.eps_list"]}
        cap = int(max(6 * (sum(abs(c) for c in gm.coords) + 1) for gm in gammas.values()))
        norms = word_norms(pres, list(gammas.values()), cap)
        for e, gm in gammas.items():
            rows.append((*t, e, e * norms[gm.coords], lim))
    cols = [f"x{i + 1}" for i in range(g.dim)]
    w.csv("pansu.csv", cols + ["eps", "scaled_word_norm", "limit"], rows)


def _beta_for(cfg, g):
    from .effective import BetaFunction
    from .homogenize import default_beta

    model = build_model(cfg)
    if model.kind == "kinetic":
        return BetaFunction.quadratic(g.v1_dim)
    if model.dim != g.v1_dim:
        raise InputError("model dimension must equal dim V1")
    return default_beta(model, build_spec(cfg), cfg["experiment.h_max"], cfg["experiment.dh"],
                        cfg["experiment.T_list"])


def cmd_lbar(cfg, w, seed):
    from .effective import time_beta

    g = build_carnot(cfg)
    beta = _beta_for(cfg, g)
    T = cfg["experiment.T"]
    rows = []
    for t in cfg["experiment.targets"]:
        v = time_beta(beta, g, t, T, n_pieces=cfg["experiment.n_pieces"], restarts=cfg["experiment.restarts"],
                      seed=seed, tol=cfg["tolerance.residual"])
        rows.append((*t, T, v))
    cols = [f"x{i + 1}" for i in range(g.dim)]
    w.csv("lbar.csv", cols + ["T", "lbar"], rows)


def cmd_homogenize(cfg, w, seed):
    from .carnot import CarnotGroup
    from .homogenize import InitialData, convergence_sweep, default_beta

    t0 = time.perf_counter()
    model, spec = build_model(cfg), build_spec(cfg)
    g = CarnotGroup.abelian(model.dim)
    datum = cfg["experiment.datum"]
    if datum == "cone":
        data = InitialData.cone(g, cfg["experiment.datum_coef"][0])
    elif datum == "linear":
        data = InitialData.linear(g, cfg["experiment.datum_coef"])
    elif datum == "zero":
        data = InitialData.zero(g)
    else:
        raise InputError(f"unknown datum {datum!r}")
    t1 = time.perf_counter()
    beta = default_beta(model, spec, cfg["experiment.h_max"], cfg["experiment.dh"], cfg["experiment.T_list"])
    t2 = time.perf_counter()
    rep = convergence_sweep(model, data, cfg["experiment.eps_list"], cfg["experiment.R"], cfg["experiment.T_grid"],
                            spec, beta, x0=cfg["experiment.x0"], n_net=cfg["experiment.net"])
    t3 = time.perf_counter()
    rep.meta.update(config_hash=cfg.hash, code_version=__version__, provenance="nilhomog homogenize")
    w.write("report.json", rep.to_json() + "\n")
    w.csv("errors.csv", ["eps", "T", "sup_error"], rep.error_rows())
    prof = [("setup", t1 - t0), ("beta", t2 - t1)]
    prof += [(f"solve eps={e}", s) for e, s in rep.runtimes.items()]
    prof += [("sweep_total", t3 - t2)]
    w.csv("profile.csv", ["stage", "seconds"], prof)
    for e, t, err in rep.error_rows():
        print(f"eps={e:g} T={t:g} sup_error={err:.5f}")
    if not rep.complete:
        exc = {"RangeError": RangeError, "ResolutionError": ResolutionError,
               "NonconvergenceError": NonconvergenceError, "BoundedSearchError": BoundedSearchError,
               "InputError": InputError}.get(rep.meta.get("exception"), HomogError)
        raise exc(rep.failure)
    if not rep.monotone:
        print("warning: sup errors not monotone in eps", file=sys.stderr)


def cmd_cell(cfg, w, seed):
    from .homogenize import cell_problem_check

    model, spec = build_model(cfg), build_spec(cfg)
    rows = []
    for p in cfg["experiment.p_list"]:
        rep = cell_problem_check(model, p, cfg["experiment.T_list"], spec)
        rows.append((p, rep.hbar_evolution, rep.hbar_alpha, rep.residual))
    w.csv("cell.csv", ["p", "hbar_evolution", "hbar_alpha", "residual"], rows)


HANDLERS = {
    "check-model": cmd_check_model, "potential": cmd_potential, "beta": cmd_beta, "growth": cmd_growth,
    "cc-dist": cmd_cc_dist, "pansu": cmd_pansu, "lbar": cmd_lbar, "homogenize": cmd_homogenize, "cell": cmd_cell,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, InputError):
        return 2
    if isinstance(exc, (ResolutionError, RangeError)):
        return 3
    if isinstance(exc, NonconvergenceError):
        return 4
    if isinstance(exc, (BoundedSearchError, MemoryError)):
        return 5
    return 1


def run(subcommand: str, config_path, out=None, seed: int | None = None, threads: int | None = None) -> int:
    """Run one subcommand; returns the process exit status."""
    try:
        if subcommand not in HANDLERS:
            raise InputError(f"unknown subcommand {subcommand!r}")
        cfg = load_config(config_path)
        if seed is None:
            seed = cfg["experiment.seed"]
        if seed is not None and seed >= 2**64:
            raise InputError("seed must fit in 64 bits")
        if subcommand in NEEDS_SEED and (seed is None or seed < 0):
            raise InputError(f"{subcommand} uses random restarts and needs a seed")
        if threads is not None:
            if threads < 1:
                raise InputError("--threads must be positive")
            import numba

            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        outdir = Path(out if out is not None else cfg["output.dir"])
        HANDLERS[subcommand](cfg, Writer(outdir, cfg, subcommand, seed), seed)
        return 0
    except (HomogError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nilhomog", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return run(args.subcommand, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
