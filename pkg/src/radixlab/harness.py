"""Command line experiments.

Every run is deterministic given its configuration: replication ``r`` uses
string streams keyed by ``(seed, r)`` and results are reduced in replication
order.  Each output directory gets a ``manifest.json`` echoing the config.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import __version__
from .analytic import F_value, classify_linear, m_value, mh_profile, rho_profile, write_profile_csv
from .ensemble import grand_average_moments, grand_average_sample, worst_case_solve
from .errors import CapReached, NotLinearFamily, SpecError
from .limits import cov_H, simulate_H_grid, sup_stats, var_G
from .selector import batch_rank_costs, batch_select, batch_z_cost
from .source import MarkovSource, MarkovSpec, StringBatch, TailedString, validate_spec

EXPERIMENTS = ("lln", "clt-marginal", "quantile-process", "grand-average", "worst-case",
               "nontight", "plot-mh", "plot-rho", "limit-sim")
TRIE_EXPERIMENTS = {"lln", "clt-marginal", "quantile-process", "grand-average", "worst-case", "nontight"}
AUX_KEY = 2 ** 31  # spawn key for per-replication helper streams


@dataclass
class ExperimentConfig:
    experiment: str
    spec: dict
    n: int = 4096
    reps: int = 2000
    depth: int = 12
    tol: float = 1e-9
    seed: int = 42
    grid: int = 512
    out: str = "out"
    points: list = field(default_factory=list)
    t: float = 0.5
    init: Optional[int] = None
    rho_tol: float = 1e-4

    def validate(self) -> MarkovSource:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.experiment in TRIE_EXPERIMENTS and self.n < 2:
            raise ValueError("n must be >= 2")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.depth < 1 or self.grid < 2 or self.tol <= 0:
            raise ValueError("depth >= 1, grid >= 2 and tol > 0 are required")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        source = validate_spec(MarkovSpec.from_dict(self.spec))
        if self.init is not None and not 0 <= self.init < source.b:
            raise ValueError(f"init row {self.init} outside the alphabet")
        return source


def _batch(cfg: ExperimentConfig, source: MarkovSource, rep: int, n: Optional[int] = None) -> StringBatch:
    return StringBatch(source, cfg.n if n is None else n, (cfg.seed, rep), cfg.init)


def _aux_rng(cfg: ExperimentConfig, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.seed, rep), spawn_key=(AUX_KEY,)))


def _points(cfg: ExperimentConfig, source: MarkovSource, default: list) -> list:
    labels = cfg.points or default
    return [TailedString.parse(p, source.b) for p in labels]


def _write_rows(path: str, header: list, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _summary(path: str, rows: list) -> None:
    _write_rows(path, ["stat", "estimate", "stderr"], rows)


def _mean_se(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    se = x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else float("nan")
    return float(x.mean()), se


def _var_se(x: np.ndarray):
    """Sample variance and its delta-method standard error."""
    x = np.asarray(x, dtype=float)
    v = x.var(ddof=1) if x.size > 1 else float("nan")
    c = x - x.mean()
    se = math.sqrt(max((c ** 4).mean() - v * v, 0.0) / x.size) if x.size > 1 else float("nan")
    return float(v), se


# ---------------------------------------------------------------------------
# experiments

def _lln(cfg, source, out):
    v = _points(cfg, source, ["0"])[0]
    k = math.floor(cfg.t * cfg.n) + 1
    rows = []
    for r in range(cfg.reps):
        batch = _batch(cfg, source, r)
        z = batch_z_cost(batch, v)
        y = batch_select(batch, min(k, cfg.n))[1]
        rows.append((r, z / cfg.n, y / cfg.n))
    _write_rows(os.path.join(out, "reps.csv"), ["rep", "z_over_n", "y_over_n"], rows)
    arr = np.array(rows)
    m_v = m_value(source, cfg.init, v, cfg.tol)
    prof = mh_profile(source, [cfg.t], cfg.init, cfg.tol)[0]
    mz, sz = _mean_se(arr[:, 1])
    my, sy = _mean_se(arr[:, 2])
    _summary(os.path.join(out, "summary.csv"), [
        ("mean_z_over_n", mz, sz), ("m_v", m_v, None), ("dev_z", mz - m_v, sz),
        ("mean_y_over_n", my, sy), ("mh_t", prof[1], None), ("dev_y", my - prof[1], sy)])


def _clt_marginal(cfg, source, out):
    pts = _points(cfg, source, ["0101010101", "0"])
    ms = np.array([m_value(source, cfg.init, v, cfg.tol) for v in pts])
    sq = math.sqrt(cfg.n)
    rows = []
    for r in range(cfg.reps):
        batch = _batch(cfg, source, r)
        rows.append([r] + [(batch_z_cost(batch, v) - m * cfg.n) / sq for v, m in zip(pts, ms)])
    labels = [str(v) for v in pts]
    _write_rows(os.path.join(out, "reps.csv"), ["rep"] + [f"x_{lab}" for lab in labels], rows)
    X = np.array(rows)[:, 1:]
    summ = []
    for i, lab in enumerate(labels):
        summ.append((f"mean[{lab}]", *_mean_se(X[:, i])))
        summ.append((f"var[{lab}]", *_var_se(X[:, i])))
        summ.append((f"cov_H[{lab}]", cov_H(source, cfg.init, pts[i], pts[i]), None))
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            c = np.cov(X[:, i], X[:, j])[0, 1]
            summ.append((f"cov[{labels[i]},{labels[j]}]", c, None))
            summ.append((f"cov_H[{labels[i]},{labels[j]}]", cov_H(source, cfg.init, pts[i], pts[j]), None))
    _summary(os.path.join(out, "summary.csv"), summ)


def _quantile_process(cfg, source, out):
    rep = classify_linear(source)
    if not rep.fully_linear:
        raise NotLinearFamily("quantile-process needs a fully linear source")
    ts = np.linspace(0.0, 1.0, cfg.grid)
    ks = np.minimum(np.floor(ts * cfg.n).astype(int) + 1, cfg.n)  # Y(n+1) := Y(n)
    sq = math.sqrt(cfg.n)
    X = np.empty((cfg.reps, ts.size))
    for r in range(cfg.reps):
        _, Y = batch_rank_costs(_batch(cfg, source, r))
        X[r] = (Y[ks - 1] - (rep.alpha * ts + rep.gamma) * cfg.n) / sq
    _write_rows(os.path.join(out, "reps.csv"), ["rep", "t", "value"],
                ((r, ts[i], X[r, i]) for r in range(cfg.reps) for i in range(ts.size)))
    summ = []
    for i, t in enumerate(ts):
        v, se = _var_se(X[:, i])
        summ.append((f"var[{float(t)!r}]", v, se))
        summ.append((f"var_G[{float(t)!r}]", var_G(rep.beta, source.b, float(t)), None))
    _summary(os.path.join(out, "summary.csv"), summ)


def _grand_average(cfg, source, out):
    rows = []
    for r in range(cfg.reps):
        rank = int(_aux_rng(cfg, r).integers(1, cfg.n + 1))
        y = batch_select(_batch(cfg, source, r), rank)[1]
        rows.append((r, rank, y / cfg.n))
    _write_rows(os.path.join(out, "reps.csv"), ["rep", "rank", "y_over_n"], rows)
    y = np.array([row[2] for row in rows])
    ref = grand_average_sample(source, cfg.reps, (cfg.seed, AUX_KEY), cfg.init)
    lo, hi = min(y.min(), ref.min()), max(y.max(), ref.max())
    edges = np.linspace(lo, hi + 1e-12, 41)
    h_emp, _ = np.histogram(y, edges)
    h_ref, _ = np.histogram(ref, edges)
    _write_rows(os.path.join(out, "histogram.csv"), ["bin_left", "bin_right", "empirical", "reference"],
                ((edges[i], edges[i + 1], h_emp[i], h_ref[i]) for i in range(edges.size - 1)))
    mom = grand_average_moments(source, cfg.init)
    my, sy = _mean_se(y)
    summ = [("mean_y_over_n", my, sy), ("EZ", mom.EZ, None),
            ("mean_m_reference", *_mean_se(ref)),
            ("ks_two_sample_p", stats.ks_2samp(y, ref).pvalue, None)]
    lin = classify_linear(source)
    if lin.fully_linear and lin.beta == 1.0:
        b = source.b
        std = (y * cfg.n - b / (b - 1) * cfg.n) / (math.sqrt(b * cfg.n) / (b - 1))
        summ.append(("var_y_over_n", float(np.var(y * cfg.n, ddof=1) / cfg.n), None))
        summ.append(("ks_normal_p", stats.kstest(std, "norm").pvalue, None))
    _summary(os.path.join(out, "summary.csv"), summ)


def _worst_case(cfg, source, out):
    report = worst_case_solve(source, cfg.init, tie_tol=max(cfg.tol, 1e-12))
    with open(os.path.join(out, "worst_case.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    sq = math.sqrt(cfg.n)
    emp = np.empty(cfg.reps)
    for r in range(cfg.reps):
        _, Y = batch_rank_costs(_batch(cfg, source, r))
        emp[r] = (Y.max() - report.m_max * cfg.n) / sq
    field_ = simulate_H_grid(source, cfg.init, cfg.depth, (cfg.seed, AUX_KEY), cfg.reps)
    sim = sup_stats(field_, report)
    _write_rows(os.path.join(out, "reps.csv"), ["rep", "empirical", "simulated"],
                ((r, emp[r], sim[r]) for r in range(cfg.reps)))
    _summary(os.path.join(out, "summary.csv"), [
        ("mean_empirical", *_mean_se(emp)), ("var_empirical", *_var_se(emp)),
        ("mean_simulated", *_mean_se(sim)), ("var_simulated", *_var_se(sim)),
        ("m_max", report.m_max, None), ("residual_std_bound", field_.residual_std_bound, None)])


def _nontight(cfg, source, out, window: float = 0.02):
    v = _points(cfg, source, ["1"])[0]
    t0 = F_value(source, cfg.init, v, cfg.tol)
    k = min(math.floor(t0 * cfg.n) + 1, cfg.n)
    right = m_value(source, cfg.init, v, cfg.tol)
    left = m_value(source, cfg.init, v.minus(), cfg.tol)
    vals = np.array([batch_select(_batch(cfg, source, r), k)[1] / cfg.n for r in range(cfg.reps)])
    _write_rows(os.path.join(out, "reps.csv"), ["rep", "y_over_n"], enumerate(vals))
    near_r = np.abs(vals - right) <= window
    near_l = np.abs(vals - left) <= window
    _summary(os.path.join(out, "summary.csv"), [
        ("t0", t0, None), ("atom_right", right, None), ("atom_left", left, None),
        ("mass_right", *_mean_se(near_r)), ("mass_left", *_mean_se(near_l)),
        ("weight_right", 0.5, None), ("weight_left", 0.5, None)])


def _plot_mh(cfg, source, out):
    rows = mh_profile(source, np.linspace(0.0, 1.0, cfg.grid), cfg.init, cfg.tol)
    write_profile_csv(os.path.join(out, "mh.csv"), rows, ["t", "mh", "mh_left"])


def _plot_rho(cfg, source, out):
    rows = rho_profile(source, np.linspace(0.0, 1.0, cfg.grid), cfg.rho_tol, cfg.init)
    write_profile_csv(os.path.join(out, "rho.csv"), rows, ["t", "rho"])


def _limit_sim(cfg, source, out):
    field_ = simulate_H_grid(source, cfg.init, cfg.depth, cfg.seed, cfg.reps)
    field_.to_jsonl(os.path.join(out, "field.jsonl"))
    summ = [("residual_std_bound", field_.residual_std_bound, None)]
    for i in sorted({0, field_.values.shape[1] // 2, field_.values.shape[1] - 1}):
        v = field_.string(i)
        summ.append((f"var[{field_.label(i)}]", *_var_se(field_.values[:, i])))
        summ.append((f"cov_H[{field_.label(i)}]", cov_H(source, cfg.init, v, v), None))
    summ.append(("mean_sup", *_mean_se(sup_stats(field_))))
    _summary(os.path.join(out, "summary.csv"), summ)


_RUNNERS = {"lln": _lln, "clt-marginal": _clt_marginal, "quantile-process": _quantile_process,
            "grand-average": _grand_average, "worst-case": _worst_case, "nontight": _nontight,
            "plot-mh": _plot_mh, "plot-rho": _plot_rho, "limit-sim": _limit_sim}


def code_version() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _digest(out: str, skip=("manifest.json",)) -> dict:
    digests = {}
    for name in sorted(os.listdir(out)):
        if name in skip:
            continue
        with open(os.path.join(out, name), "rb") as fh:
            digests[name] = hashlib.sha256(fh.read()).hexdigest()
    return digests


def emit_manifest(cfg: ExperimentConfig, digests: dict, wall_time: float) -> str:
    path = os.path.join(cfg.out, "manifest.json")
    doc = {"config": asdict(cfg), "seed": cfg.seed, "version": code_version(),
           "wall_time_s": round(wall_time, 3), "outputs": digests}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one experiment and return {file name: sha256} of its outputs."""
    source = cfg.validate()
    if not os.path.isdir(cfg.out):
        parent = os.path.dirname(os.path.abspath(cfg.out))
        if not os.path.isdir(parent):
            raise FileNotFoundError(f"output parent directory does not exist: {parent}")
        os.mkdir(cfg.out)
    start = time.perf_counter()
    try:
        _RUNNERS[cfg.experiment](cfg, source, cfg.out)
    except CapReached as exc:
        with open(os.path.join(cfg.out, "cap_reached.json"), "w") as fh:
            json.dump({"error": str(exc), "config": asdict(cfg)}, fh)
        raise
    digests = _digest(cfg.out)
    emit_manifest(cfg, digests, time.perf_counter() - start)
    return digests


def _parse_init(text: str) -> Optional[int]:
    if text in ("global", "mu", ""):
        return None
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radixlab", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="source JSON: {\"b\":..,\"mu\":..,\"P\":..}")
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--depth", type=int, default=12)
    ap.add_argument("--tol", type=float, default=1e-9)
    ap.add_argument("--grid", type=int, default=512)
    ap.add_argument("--out", default="out")
    ap.add_argument("--point", action="append", default=[],
                    help="string such as 0101 (zeros tail) or 01:max; repeatable")
    ap.add_argument("--t", type=float, default=0.5)
    ap.add_argument("--init", type=_parse_init, default=None, help="'global' or a row index")
    ap.add_argument("--rho-tol", type=float, default=1e-4)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with open(args.config) as fh:
        spec = json.load(fh)
    cfg = ExperimentConfig(args.experiment, spec, args.n, args.reps, args.depth, args.tol,
                           args.seed, args.grid, args.out, list(args.point), args.t, args.init,
                           args.rho_tol)
    try:
        digests = run_experiment(cfg)
    except (SpecError, ValueError, FileNotFoundError, CapReached) as exc:
        print(f"radixlab: error: {exc}", file=sys.stderr)
        return 2
    for name in digests:
        print(os.path.join(cfg.out, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
