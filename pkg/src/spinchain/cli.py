"""Command-line experiment runner.

Configs are TOML files with every physical parameter spelled out::

    [grid]
    dt = 0.2
    n_steps = 15

    [truncation]
    m_bar = 1
    n_bar = 2

    [spin]                 # template shared by all spins (or use [[spins]])
    epsilon = 1.0
    delta = 1.0
    beta = 5.0
    initial_state = [1.0, 0.0]
    bath = { xi = 0.2, omega_c = 2.5, omega_max = 10.0, n_modes = 400 }

    [chain]
    n_spins = 5

    [coupling]             # template (or [[couplings]])
    jz = 0.04

Optional tables: ``[tensornet]`` (``eta``, ``max_bond``), ``[ttm]``
(``k_max``, ``stride``, ``horizon``), ``[output]`` (``dir``, ``observables``).
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import tensornet as tn
from .bath import CorrelationTable, SpectralDensity
from .contour import ContourGrid
from .errors import DependencyError, NonFiniteError
from .inchworm import Truncation
from .model import PAULI, ChainConfig, CouplingSpec, CouplingTerm, SpinBosonUnit, SpinParams

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("spinchain")

CSV_SCHEMA = 1


class ConfigError(ValueError):
    pass


@dataclass
class TTMSettings:
    k_max: int
    stride: int = 1
    horizon: int | None = None


@dataclass
class RunConfig:
    chain: ChainConfig
    dt: float
    n_steps: int
    truncation: Truncation
    eta: float = 0.0
    max_bond: int | None = None
    ttm: TTMSettings | None = None
    out_dir: Path = Path("out")
    observables: list = field(default_factory=lambda: ["z"])
    threads: int = 1
    cache: Path | None = None

    @property
    def grid(self) -> ContourGrid:
        return ContourGrid(self.dt, self.n_steps)

    @property
    def policy(self) -> tn.CompressionPolicy:
        return tn.CompressionPolicy(self.eta, self.max_bond)

    def metadata(self) -> dict:
        return {"dt": self.dt, "n_steps": self.n_steps, "m_bar": self.truncation.m_bar,
                "n_bar": self.truncation.n_bar, "eta": self.eta, "n_spins": self.chain.n_spins}


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing '{key}' in [{where}]")
    return table[key]


def _unit(d: dict, where: str) -> SpinBosonUnit:
    bath = _need(d, "bath", where)
    sd = SpectralDensity(float(_need(bath, "xi", where + ".bath")),
                         float(_need(bath, "omega_c", where + ".bath")),
                         float(_need(bath, "omega_max", where + ".bath")),
                         int(_need(bath, "n_modes", where + ".bath")))
    state = tuple(complex(x) for x in _need(d, "initial_state", where))
    return SpinBosonUnit(SpinParams(float(_need(d, "epsilon", where)), float(_need(d, "delta", where))),
                         sd, float(_need(d, "beta", where)), state)


def _coupling(d: dict) -> CouplingSpec:
    if "terms" in d:
        return CouplingSpec(tuple(CouplingTerm(t["label"], float(t["strength"]), t["axis"])
                                  for t in d["terms"]))
    return CouplingSpec.heisenberg(float(d.get("jx", 0.0)), float(d.get("jy", 0.0)),
                                   float(d.get("jz", 0.0)))


def parse_config(raw: dict) -> RunConfig:
    """Validate a parsed TOML document. Physics has no defaults."""
    grid = _need(raw, "grid", "root")
    trunc = _need(raw, "truncation", "root")
    if "spins" in raw:
        units = [_unit(s, f"spins.{i}") for i, s in enumerate(raw["spins"])]
    else:
        n = int(_need(_need(raw, "chain", "root"), "n_spins", "chain"))
        units = [_unit(_need(raw, "spin", "root"), "spin")] * n
    if "couplings" in raw:
        cpl = [_coupling(c) for c in raw["couplings"]]
    elif len(units) > 1:
        cpl = [_coupling(_need(raw, "coupling", "root"))] * (len(units) - 1)
    else:
        cpl = []
    chain = ChainConfig(units, cpl)
    tnet = raw.get("tensornet", {})
    ttm = None
    if "ttm" in raw and raw["ttm"].get("enabled", True):
        t = raw["ttm"]
        ttm = TTMSettings(int(_need(t, "k_max", "ttm")), int(t.get("stride", 1)),
                          int(t["horizon"]) if "horizon" in t else None)
    out = raw.get("output", {})
    return RunConfig(chain, float(_need(grid, "dt", "grid")), int(_need(grid, "n_steps", "grid")),
                     Truncation(int(_need(trunc, "m_bar", "truncation")),
                                int(_need(trunc, "n_bar", "truncation"))),
                     float(tnet.get("eta", 0.0)), tnet.get("max_bond"), ttm,
                     Path(out.get("dir", "out")), list(out.get("observables", ["z"])))


def load_config(path, overrides: argparse.Namespace | None = None) -> RunConfig:
    with open(path, "rb") as fh:
        cfg = parse_config(tomllib.load(fh))
    env_threads = os.environ.get("SPINCHAIN_THREADS")
    env_cache = os.environ.get("SPINCHAIN_CACHE")
    if env_threads:
        cfg.threads = int(env_threads)
    if env_cache:
        cfg.cache = Path(env_cache)
    if overrides is not None:
        if getattr(overrides, "threads", None):
            cfg.threads = overrides.threads
        if getattr(overrides, "cache", None):
            cfg.cache = Path(overrides.cache)
        if getattr(overrides, "out", None):
            cfg.out_dir = Path(overrides.out)
    return cfg


def write_csv(path: Path, kind: str, header: list, rows, meta: dict | None = None) -> Path:
    """CSV with a versioned comment header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# spinchain-csv v{CSV_SCHEMA} kind={kind} version={__version__}\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return path


def read_csv(path) -> tuple[list, np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.array([[float(x) for x in ln.strip().split(",")] for ln in lines[1:]])
    return header, data.reshape(-1, len(header))


def _observable_rows(states, ops):
    from .summation import observable
    rows = []
    for cs in states:
        if cs.t == 0.0:
            continue
        for name in ops:
            for k in range(cs.rho.n_sites):
                v = observable(cs, k, PAULI[name])
                rows.append((cs.t, k + 1, v.real, v.imag))
    return rows


def run_simulate(cfg: RunConfig) -> list:
    """Chain states at every step; writes ``observables.csv``."""
    from .summation import evolve
    states = evolve(cfg.chain, cfg.grid, cfg.truncation, cfg.policy, "density",
                    n_threads=cfg.threads, cache_dir=cfg.cache)
    for cs in states:
        if not all(np.all(np.isfinite(c)) for c in cs.rho.cores):
            raise NonFiniteError(f"non-finite chain state at t={cs.t}")
    rows = _observable_rows(states, cfg.observables)
    write_csv(cfg.out_dir / "observables.csv", "observables",
              ["t", "spin_index", "obs_re", "obs_im"], rows, cfg.metadata())
    write_csv(cfg.out_dir / "trace.csv", "trace", ["t", "trace_re", "trace_im", "max_bond"],
              [(cs.t, cs.trace().real, cs.trace().imag, tn.max_bond(cs.rho)) for cs in states],
              cfg.metadata())
    return states


def run_ttm(cfg: RunConfig):
    """Maps up to ``k_max``, transfer tensors, propagation to the horizon."""
    from . import ttm
    from .summation import ChainState, product_density_train
    if cfg.ttm is None:
        raise ConfigError("[ttm] section required")
    s = cfg.ttm
    grid = ContourGrid(cfg.dt, s.k_max * s.stride)
    maps = ttm.dynamical_maps(cfg.chain, grid, cfg.truncation, cfg.policy, s.k_max, s.stride,
                              n_threads=cfg.threads, cache_dir=cfg.cache)
    tts = ttm.extract_transfer(maps, s.k_max, cfg.policy)
    rho0 = product_density_train(cfg.chain)
    hist = [tn.compress(ttm.apply_map(m.map, rho0), cfg.policy) for m in maps]
    horizon = s.horizon if s.horizon is not None else 2 * s.k_max
    traj = ttm.propagate(tts, hist, horizon, cfg.policy)
    dtt = s.stride * cfg.dt
    states = [ChainState(n * dtt, r, "schrodinger") for n, r in enumerate(traj.states)]
    meta = cfg.metadata() | {"k_max": s.k_max, "stride": s.stride}
    write_csv(cfg.out_dir / "ttm_observables.csv", "observables",
              ["t", "spin_index", "obs_re", "obs_im"], _observable_rows(states, cfg.observables), meta)
    write_csv(cfg.out_dir / "ttm_diagnostics.csv", "ttm_diagnostics",
              ["step", "frobenius_T", "max_bond_E", "max_bond_T", "trace_re", "trace_im"],
              [(d.step, d.frobenius_T, d.max_bond_E, d.max_bond_T, d.trace_re, d.trace_im)
               for d in traj.diagnostics], meta)
    write_csv(cfg.out_dir / "transfer_norms.csv", "transfer_norms", ["n", "frobenius_T"],
              [(n + 1, v) for n, v in enumerate(ttm.transfer_norm_decay(tts))], meta)
    return states, tts


def run_oracle(cfg: RunConfig) -> list:
    """Dense reference observables (closed chains, or one spin via the Dyson series)."""
    from . import oracle
    rows = []
    k = cfg.chain.n_spins
    for l in range(1, cfg.n_steps + 1):
        t = l * cfg.dt
        if all(u.bath.xi == 0.0 for u in cfg.chain.units):
            rho = oracle.unitary_chain_evolution(cfg.chain, t)
        elif k == 1:
            from .model import propagator, system_hamiltonian
            rho_i = oracle.dyson_brute_force(cfg.chain.units[0], min(4, 2 * (cfg.truncation.m_bar // 2 + 1)),
                                             cfg.grid, t)
            u = propagator(system_hamiltonian(cfg.chain.units[0].spin), t)
            rho = u @ rho_i @ u.conj().T
        else:
            raise ConfigError("oracle needs xi = 0 for every spin, or a single spin")
        for name in cfg.observables:
            for i in range(k):
                op = np.kron(np.kron(np.eye(2 ** i), PAULI[name]), np.eye(2 ** (k - 1 - i)))
                v = np.trace(op @ rho)
                rows.append((t, i + 1, v.real, v.imag))
    write_csv(cfg.out_dir / "oracle_observables.csv", "observables",
              ["t", "spin_index", "obs_re", "obs_im"], rows, cfg.metadata())
    return rows


SWEEPABLE = ("m_bar", "n_bar", "dt", "eta", "k_max")


def _with(cfg: RunConfig, param: str, value) -> RunConfig:
    import copy
    new = copy.copy(cfg)
    if param == "m_bar":
        new.truncation = Truncation(int(value), cfg.truncation.n_bar)
    elif param == "n_bar":
        new.truncation = Truncation(cfg.truncation.m_bar, int(value))
    elif param == "dt":
        horizon = cfg.dt * cfg.n_steps
        new.dt = float(value)
        new.n_steps = int(round(horizon / new.dt))
    elif param == "eta":
        new.eta = float(value)
    elif param == "k_max":
        if cfg.ttm is None:
            raise ConfigError("k_max sweeps need a [ttm] section")
        new.ttm = TTMSettings(int(value), cfg.ttm.stride, cfg.ttm.horizon)
    else:
        raise ConfigError(f"cannot sweep {param}")
    return new


def run_convergence(cfg: RunConfig, param: str, values) -> dict:
    """One labelled series per value; max pairwise deviation on common times."""
    series = {}
    rows = []
    for v in values:
        sub = _with(cfg, param, v)
        if param == "k_max":
            states, _ = run_ttm_inmemory(sub)
        else:
            from .summation import evolve
            states = evolve(sub.chain, sub.grid, sub.truncation, sub.policy, "density",
                            n_threads=sub.threads, cache_dir=sub.cache)
        obs = {}
        for t, k, re, im in _observable_rows(states, sub.observables):
            obs[(round(t, 10), k)] = re
            rows.append((v, t, k, re, im))
        series[v] = obs
    write_csv(cfg.out_dir / f"convergence_{param}.csv", "convergence",
              ["value", "t", "spin_index", "obs_re", "obs_im"], rows, cfg.metadata())
    summary = {}
    vals = list(values)
    for i, a in enumerate(vals):
        for b in vals[i + 1:]:
            common = set(series[a]) & set(series[b])
            summary[(a, b)] = max((abs(series[a][c] - series[b][c]) for c in common), default=float("nan"))
    return summary


def run_ttm_inmemory(cfg: RunConfig):
    import copy
    sub = copy.copy(cfg)
    sub.out_dir = cfg.out_dir / f"ttm_kmax_{cfg.ttm.k_max}"
    return run_ttm(sub)


def run_benchmark(cfg: RunConfig, l_values, label_counts) -> list:
    """Wall clock and integrand counts of a two-spin run per ``(L, |A|)``."""
    from .summation import ChainTables, chain_state
    unit = cfg.chain.units[0]
    couplings = {1: CouplingSpec.heisenberg(jz=0.04), 2: CouplingSpec.heisenberg(0.1, 0.1, 0.0),
                 3: CouplingSpec.heisenberg(0.1, 0.1, 0.04)}
    horizon = cfg.dt * cfg.n_steps
    rows = []
    for a in label_counts:
        for L in l_values:
            chain = ChainConfig([unit, unit], [couplings[a]])
            grid = ContourGrid(horizon / L, L)
            t0 = time.perf_counter()
            tabs = ChainTables(chain, grid, cfg.truncation, "density", 1)
            counter = {}
            chain_state(tabs, L, counter=counter)
            rows.append((L, a, time.perf_counter() - t0, tabs.integrand_evaluations))
    write_csv(cfg.out_dir / "benchmark.csv", "benchmark",
              ["L", "n_labels", "seconds", "evaluations"], rows, cfg.metadata())
    return rows


def slopes(rows) -> dict:
    out = {}
    for a in sorted({r[1] for r in rows}):
        sel = [r for r in rows if r[1] == a and r[3] > 0]
        if len(sel) >= 2:
            out[a] = float(np.polyfit(np.log([r[0] for r in sel]), np.log([r[3] for r in sel]), 1)[0])
    return out


def run_dump_bath(cfg: RunConfig, spin_index: int = 0) -> Path:
    unit = cfg.chain.units[spin_index]
    corr = CorrelationTable(unit.bath, unit.beta, cfg.dt, cfg.n_steps)
    rows = [(m * cfg.dt, v.real, v.imag) for m, v in zip(corr.offsets, corr.samples)]
    return write_csv(cfg.out_dir / "bath.csv", "bstar", ["dtau", "re", "im"], rows, cfg.metadata())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinchain", description="Spin-boson chain dynamics.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--cache", type=Path)
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("simulate", help="observables from the full pipeline"))
    common(sub.add_parser("ttm", help="transfer-tensor propagation"))
    common(sub.add_parser("oracle", help="dense reference observables"))
    c = common(sub.add_parser("convergence", help="parameter sweep"))
    c.add_argument("--param", required=True, choices=SWEEPABLE)
    c.add_argument("--values", required=True, nargs="+", type=float)
    b = common(sub.add_parser("benchmark", help="cost scaling"))
    b.add_argument("--L", dest="l_values", nargs="+", type=int, default=[8, 16, 32])
    b.add_argument("--labels", nargs="+", type=int, default=[1, 2], choices=[1, 2, 3])
    d = common(sub.add_parser("dump-bath", help="write B* samples"))
    d.add_argument("--spin", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args)
        if args.command == "simulate":
            run_simulate(cfg)
        elif args.command == "ttm":
            run_ttm(cfg)
        elif args.command == "oracle":
            run_oracle(cfg)
        elif args.command == "convergence":
            vals = [int(v) if args.param in ("m_bar", "n_bar", "k_max") else v for v in args.values]
            for (a, b), dev in run_convergence(cfg, args.param, vals).items():
                print(f"{args.param} {a} vs {b}: max deviation {dev:.3e}")
        elif args.command == "benchmark":
            rows = run_benchmark(cfg, args.l_values, args.labels)
            for a, s in slopes(rows).items():
                print(f"|A|={a}: log-log slope {s:.3f}")
        elif args.command == "dump-bath":
            run_dump_bath(cfg, args.spin - 1)
    except (ConfigError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NonFiniteError, DependencyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
