"""Command line front end: ``piecelab <subcommand> [flags]``.

Potential specs: ``step:<u0>:<M>`` (U = u0 on |x| <= M), ``table:<path>``
(two columns x, U(x), piecewise linear, zero beyond the last row) or ``zero``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 infeasible instance.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .chains import decompose, model_params
from .densities import density_comparison
from .disorder import ks_exponential, max_piece_length, piece_length_histogram, sample_pieces
from .errors import InfeasibleError, InvalidArgument, PiecelabError
from .optimizer import build_level_pool, greedy_fill
from .spectra import (AsymptoticFit, Potential, SolverConfig, default_sigma_grid, fit_asymptotics, fit_gamma,
                      fit_sigma)
from .thermo import (SPEC_VERSION, build_test_occupation, counting_comparison, fermi_data,
                     free_energy_per_particle, occupation_energy)

COMMANDS = ("sample", "decompose", "levels", "fit", "ground", "counting", "fermi", "compare",
            "densities", "sweep")


def parse_seeds(text: str) -> list[int]:
    """``7``, ``1,3,5`` or ``1..10`` (inclusive); forms can be mixed with commas."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                a, b = part.split("..")
                a, b = int(a), int(b)
                if b < a:
                    raise InvalidArgument(f"empty seed range {part!r}")
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise InvalidArgument(f"bad seed list {text!r}") from exc
    if not out:
        raise InvalidArgument("seed list is empty")
    return out


def parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise InvalidArgument(f"bad number list {text!r}") from exc


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on.  JSON schema: the field names below, ``solver`` nested."""
    rho: float = 0.05
    box_length: float = 1e4
    seeds: tuple[int, ...] = (1,)
    potential: str = "step:1:1"
    p: int = 2
    delta: float = 0.5
    solver: dict = field(default_factory=lambda: {"n_modes": None, "quad_nodes": 48, "eig_tol": 1e-9})
    output_dir: str = "."
    fits: str | None = None
    adjacency: str = "exact"
    leftover: str = "merge"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self) -> None:
        if not self.rho > 0:
            raise InvalidArgument("rho must be positive")
        if not self.box_length > 0:
            raise InvalidArgument("box_length must be positive")
        if not self.seeds:
            raise InvalidArgument("seeds must be non-empty")
        if self.p < 1:
            raise InvalidArgument("p must be >= 1")
        if not 0 < self.delta < 1:
            raise InvalidArgument("delta must lie in (0, 1)")
        unknown = set(self.solver) - {"n_modes", "quad_nodes", "eig_tol"}
        if unknown:
            raise InvalidArgument(f"unknown solver keys {sorted(unknown)}")
        if self.solver.get("eig_tol", 1e-9) <= 0 or self.solver.get("quad_nodes", 48) <= 0:
            raise InvalidArgument("tolerances must be positive")
        n = self.solver.get("n_modes")
        if n is not None and n < 2:
            raise InvalidArgument("n_modes must be >= 2")
        if self.adjacency not in ("exact", "continuum"):
            raise InvalidArgument("adjacency must be exact or continuum")
        if self.leftover not in ("merge", "overflow"):
            raise InvalidArgument("leftover must be merge or overflow")
        Potential.from_spec(self.potential)

    @property
    def U(self) -> Potential:
        return Potential.from_spec(self.potential)

    @property
    def solver_config(self) -> SolverConfig:
        s = {"quad_nodes": 48, "eig_tol": 1e-9, **self.solver}
        return SolverConfig(n_modes=s.get("n_modes"), quad_nodes=int(s["quad_nodes"]),
                            eig_tol=float(s["eig_tol"]))

    def to_json(self) -> str:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["spec_version"] = SPEC_VERSION
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        d = json.loads(text)
        d.pop("spec_version", None)
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidArgument(f"unknown config keys {sorted(unknown)}")
        if "solver" in d:
            d["solver"] = {"n_modes": None, "quad_nodes": 48, "eig_tol": 1e-9, **d["solver"]}
        return cls(**d)


def _emit(text: str, out_dir: str | None, name: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        Path(out_dir, name).write_text(text if text.endswith("\n") else text + "\n")


def _dump(doc: dict) -> str:
    doc = dict(doc)
    doc["spec_version"] = SPEC_VERSION
    return json.dumps(doc, sort_keys=True)


def _load_fits(cfg: RunConfig) -> AsymptoticFit:
    U = cfg.U
    if U.is_zero:
        return AsymptoticFit.zero()
    if cfg.fits:
        try:
            return AsymptoticFit.from_json(Path(cfg.fits).read_text())
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise InvalidArgument(f"cannot read fits {cfg.fits!r}: {exc}") from exc
    return fit_asymptotics(U, cfg=cfg.solver_config)


def _prepare(cfg: RunConfig, seed: int):
    U = cfg.U
    params = model_params(cfg.rho, U.range if not U.is_zero else 0.0)
    pieces = sample_pieces(cfg.box_length, seed)
    return U, params, decompose(pieces, params, cfg.p)


# ---------------------------------------------------------------- subcommands

def cmd_sample(cfg: RunConfig, args) -> int:
    seed = cfg.seeds[0]
    pieces = sample_pieces(cfg.box_length, seed)
    edges = parse_floats(args.bins) if args.bins else list(np.arange(0.0, 8.5, 0.5))
    hist = piece_length_histogram(pieces, edges)
    ks, pv = ks_exponential(pieces)
    summary = {"L": cfg.box_length, "seed": seed, "piece_count": pieces.piece_count,
               "max_length": max_piece_length(pieces), "stub": pieces.stub,
               "ks_statistic": ks, "ks_pvalue": pv}
    _emit(_dump(summary), args.out_dir, f"sample_{seed}.json")
    if args.out_dir is not None:
        Path(args.out_dir, f"histogram_{seed}.csv").write_text(hist.to_csv())
    return 0


def cmd_decompose(cfg: RunConfig, args) -> int:
    _, _, dec = _prepare(cfg, cfg.seeds[0])
    _emit(dec.to_json(), args.out_dir, f"decomposition_{cfg.seeds[0]}.json")
    return 0


def cmd_levels(cfg: RunConfig, args) -> int:
    U, _, dec = _prepare(cfg, cfg.seeds[0])
    pool = build_level_pool(dec, U, cfg.p, cfg.solver_config)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chain", "kappa", "value", "position", "feasible"])
    for c, k, v, pos, ok in zip(pool.chain_ids, pool.kappas, pool.values, pool.positions, pool.feasible):
        w.writerow([int(c), int(k), repr(float(v)), int(pos), int(ok)])
    _emit(buf.getvalue(), args.out_dir, f"levels_{cfg.seeds[0]}.csv")
    return 0


def cmd_fit(cfg: RunConfig, args) -> int:
    U = cfg.U
    lengths = parse_floats(args.lengths)
    scfg = cfg.solver_config
    fit = fit_gamma(U, lengths, scfg.n_modes, scfg)
    if args.sigma:
        d_grid = parse_floats(args.d_grid) if args.d_grid else None
        fit = fit.combine(fit_sigma(U, d_grid or default_sigma_grid(U.range), lengths, args.a,
                                    scfg.n_modes, scfg))
    _emit(fit.to_csv(), args.out_dir, "fit.csv")
    if args.out_dir is not None:
        Path(args.out_dir, "fits.json").write_text(fit.to_json() + "\n")
    return 0


def cmd_ground(cfg: RunConfig, args) -> int:
    U, params, dec = _prepare(cfg, cfg.seeds[0])
    n = int(round(cfg.rho * cfg.box_length))
    pool = build_level_pool(dec, U, cfg.p, cfg.solver_config)
    gs = greedy_fill(pool, n, dec, cfg.leftover)
    counts = gs.occupation.counts
    doc = {"rho": cfg.rho, "L": cfg.box_length, "seed": cfg.seeds[0], "n": n, "p": cfg.p,
           "potential": cfg.potential, "mode": gs.mode,
           "energy": gs.energy, "energy_per_particle": gs.energy / n if n else 0.0,
           "energy_P": gs.energy_P, "energy_N": gs.energy_N,
           "occupied_pieces": int(np.count_nonzero(counts)),
           "particles_in_N": gs.n_leftover, "pool_size": len(pool),
           "occupation_histogram": {str(k): int(v) for k, v in
                                    zip(*np.unique(counts[counts > 0], return_counts=True))},
           "free_energy_per_particle": free_energy_per_particle(cfg.rho)}
    _emit(_dump(doc), args.out_dir, f"ground_{cfg.seeds[0]}.json")
    return 0


def cmd_counting(cfg: RunConfig, args) -> int:
    U, params, dec = _prepare(cfg, cfg.seeds[0])
    fits = _load_fits(cfg)
    pool = build_level_pool(dec, U, cfg.p, cfg.solver_config)
    vals = pool.values[pool.feasible]
    lo = args.lam_min if args.lam_min is not None else 0.9 * float(vals.min())
    hi = args.lam_max if args.lam_max is not None else float(np.quantile(vals, 0.9))
    cf = counting_comparison(pool, cfg.box_length, np.linspace(lo, hi, args.points), params, fits,
                             cfg.adjacency)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "empirical", "closed_form"])
    for x, e, j in zip(cf.grid, cf.empirical, cf.closed_form):
        w.writerow([repr(float(x)), repr(float(e)), repr(float(j))])
    _emit(buf.getvalue(), args.out_dir, f"counting_{cfg.seeds[0]}.csv")
    sys.stdout.write(_dump({"sup_gap": cf.sup_gap, "sup_gap_over_rho": cf.sup_gap / cfg.rho}) + "\n")
    return 0


def cmd_fermi(cfg: RunConfig, args) -> int:
    U = cfg.U
    fits = _load_fits(cfg)
    params, fermi, JJ = fermi_data(cfg.rho, U, fits, cfg.adjacency)
    doc = {"rho": cfg.rho, "M": params.interaction_range, "lambda_rho": fermi.lambda_rho,
           "delta_rho": fermi.delta_rho, "residual": fermi.residual,
           "fermi_length": params.fermi_length, "minimal_length": params.minimal_length,
           "fermi_energy": params.fermi_energy, "J_lambda_over_rho": JJ / cfg.rho,
           "adjacency": cfg.adjacency, "gamma": fits.gamma}
    _emit(_dump(doc), args.out_dir, "fermi.json")
    return 0


def compare_seed(cfg: RunConfig, seed: int, fits: AsymptoticFit, with_densities: bool = True) -> dict:
    """One row of the compare table: greedy and test energies, 𝒥 reference, trace-norm gaps."""
    U, params, dec = _prepare(cfg, seed)
    scfg = cfg.solver_config
    n = int(round(cfg.rho * cfg.box_length))
    _, fermi, JJ = fermi_data(cfg.rho, U, fits, cfg.adjacency)
    pool = build_level_pool(dec, U, cfg.p, scfg)
    gs = greedy_fill(pool, n, dec, cfg.leftover)
    row = {"rho": cfg.rho, "L": cfg.box_length, "seed": int(seed), "n": n,
           "E_greedy_per_n": gs.energy / n, "J_lambda_over_rho": JJ / cfg.rho,
           "lambda_rho": fermi.lambda_rho, "delta_rho": fermi.delta_rho,
           "particles_in_N": gs.n_leftover}
    if cfg.p == 2:
        try:
            test = build_test_occupation(dec, fermi, fits, n)
        except InfeasibleError as exc:
            # finite-size: N_2 too small for the completion; keep the row, mark it
            row["test_status"] = f"infeasible: {exc}"
            return row
        row["test_status"] = "ok"
        row["E_test_per_n"] = occupation_energy(dec, test.occupation, U, scfg) / n
        if with_densities:
            dc = density_comparison(dec, gs.occupation, test.occupation, U, scfg)
            row["gamma1_distance_per_n"] = dc.gamma1_distance / n
            row["gamma2_upper_per_n2"] = dc.gamma2_upper / n**2
            row["gamma2_lower_per_n2"] = dc.gamma2_lower / n**2
    return row


def _table(rows: list[dict]) -> str:
    keys = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    w = csv.DictWriter(buf, keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def cmd_compare(cfg: RunConfig, args) -> int:
    fits = _load_fits(cfg)
    rows = [compare_seed(cfg, s, fits) for s in cfg.seeds]
    _emit(_table(rows), args.out_dir, "compare.csv")
    return 0


def cmd_densities(cfg: RunConfig, args) -> int:
    fits = _load_fits(cfg)
    U, params, dec = _prepare(cfg, cfg.seeds[0])
    scfg = cfg.solver_config
    n = int(round(cfg.rho * cfg.box_length))
    _, fermi, _ = fermi_data(cfg.rho, U, fits, cfg.adjacency)
    gs = greedy_fill(build_level_pool(dec, U, cfg.p, scfg), n, dec, cfg.leftover)
    test = build_test_occupation(dec, fermi, fits, n)
    dc = density_comparison(dec, gs.occupation, test.occupation, U, scfg)
    doc = dc.to_dict()
    doc.update({"seed": cfg.seeds[0], "rho": cfg.rho, "L": cfg.box_length,
                "gamma1_distance_per_n": dc.gamma1_distance / n,
                "gamma2_upper_per_n2": dc.gamma2_upper / n**2,
                "bound_gamma1": 10 * cfg.rho ** (2 - cfg.delta),
                "bound_gamma2": 45 * cfg.rho ** (2 - cfg.delta)})
    _emit(_dump(doc), args.out_dir, f"densities_{cfg.seeds[0]}.json")
    if args.out_dir is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pieces", "distance"])
        for pieces, d in dc.block_distances:
            w.writerow([" ".join(map(str, pieces)), repr(d)])
        Path(args.out_dir, f"density_blocks_{cfg.seeds[0]}.csv").write_text(buf.getvalue())
    return 0


def _sweep_shard(job):
    cfg_json, rho, seed, fits_json = job
    cfg = replace(RunConfig.from_json(cfg_json), rho=rho)
    return (rho, seed), compare_seed(cfg, seed, AsymptoticFit.from_json(fits_json), with_densities=False)


def cmd_sweep(cfg: RunConfig, args) -> int:
    rhos = parse_floats(args.rhos) if args.rhos else [cfg.rho]
    fits = _load_fits(cfg)
    jobs = [(cfg.to_json(), r, s, fits.to_json()) for r in rhos for s in cfg.seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            results = dict(ex.map(_sweep_shard, jobs))
    else:
        results = dict(map(_sweep_shard, jobs))
    rows = [results[k] for k in sorted(results)]
    _emit(_table(rows), args.out_dir, "sweep.csv")
    return 0


# ---------------------------------------------------------------- parsing

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="piecelab",
        description="Interacting fermions on Poisson pieces: sampling, chain levels, greedy ground "
                    "states, counting functions and density comparisons.",
        epilog="Potential specs: step:<u0>:<M> | table:<path> | zero.  Seeds: 7, 1,3,5 or 1..10.",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"piecelab {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig; flags override its values")
    common.add_argument("--rho", type=float)
    common.add_argument("--L", dest="box_length", type=float)
    common.add_argument("--seed", dest="seeds_single")
    common.add_argument("--seeds", help="7 | 1,3,5 | 1..10")
    common.add_argument("--potential", help="step:<u0>:<M> | table:<path> | zero")
    common.add_argument("--p", type=int)
    common.add_argument("--delta", type=float)
    common.add_argument("--n-modes", dest="n_modes", type=int)
    common.add_argument("--quad-nodes", dest="quad_nodes", type=int)
    common.add_argument("--eig-tol", dest="eig_tol", type=float)
    common.add_argument("--fits", help="AsymptoticFit JSON (from `fit --sigma --out-dir`)")
    common.add_argument("--adjacency", choices=("exact", "continuum"))
    common.add_argument("--leftover", choices=("merge", "overflow"))
    common.add_argument("--out-dir", dest="out_dir", help="also write artifacts here")

    p = sub.add_parser("sample", parents=[common], help="sample pieces; length histogram and KS test")
    p.add_argument("--bins", help="comma-separated bin edges")
    sub.add_parser("decompose", parents=[common], help="chain decomposition as JSON")
    sub.add_parser("levels", parents=[common], help="sorted level pool as CSV")
    p = sub.add_parser("fit", parents=[common], help="fit gamma (and sigma) from pair solves")
    p.add_argument("--lengths", default="20,40,80")
    p.add_argument("--sigma", action="store_true", help="also fit sigma(d)")
    p.add_argument("--d-grid", dest="d_grid")
    p.add_argument("--a", type=float, default=1.0, help="length ratio of the two pieces")
    sub.add_parser("ground", parents=[common], help="greedy ground state summary as JSON")
    p = sub.add_parser("counting", parents=[common], help="empirical counting function against J")
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--lam-min", dest="lam_min", type=float)
    p.add_argument("--lam-max", dest="lam_max", type=float)
    sub.add_parser("fermi", parents=[common], help="Fermi level lambda_rho and delta_rho")
    sub.add_parser("compare", parents=[common], help="greedy vs test energies and density gaps per seed")
    sub.add_parser("densities", parents=[common], help="trace-norm comparison for one seed")
    p = sub.add_parser("sweep", parents=[common], help="energies over (rho, seed) shards")
    p.add_argument("--rhos", help="comma-separated densities")
    p.add_argument("--workers", type=int, default=1)
    return ap


def config_from_args(args) -> RunConfig:
    base = RunConfig()
    if args.config:
        try:
            base = RunConfig.from_json(Path(args.config).read_text())
        except OSError as exc:
            raise InvalidArgument(f"cannot read config {args.config!r}: {exc}") from exc
        except (json.JSONDecodeError, TypeError) as exc:
            raise InvalidArgument(f"bad config {args.config!r}: {exc}") from exc
    upd = {}
    for name in ("rho", "box_length", "potential", "p", "delta", "fits", "adjacency", "leftover"):
        v = getattr(args, name, None)
        if v is not None:
            upd[name] = v
    if args.seeds is not None:
        upd["seeds"] = tuple(parse_seeds(args.seeds))
    if args.seeds_single is not None:
        upd["seeds"] = tuple(parse_seeds(args.seeds_single))
    solver = dict(base.solver)
    for name in ("n_modes", "quad_nodes", "eig_tol"):
        v = getattr(args, name, None)
        if v is not None:
            solver[name] = v
    upd["solver"] = solver
    if args.out_dir is not None:
        upd["output_dir"] = args.out_dir
    return replace(base, **upd)


HANDLERS = {
    "sample": cmd_sample, "decompose": cmd_decompose, "levels": cmd_levels, "fit": cmd_fit,
    "ground": cmd_ground, "counting": cmd_counting, "fermi": cmd_fermi, "compare": cmd_compare,
    "densities": cmd_densities, "sweep": cmd_sweep,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
        return HANDLERS[args.command](cfg, args)
    except PiecelabError as exc:
        sys.stderr.write(f"piecelab {args.command}: {exc}\n")
        return exc.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
