"""Experiment stages: simulate, train, evaluate, reproduce.

Output directory layout::

    snapshots/<set>/ic_000.oimx   full-order snapshots (training, test1, test2)
    pod/basis.oimx, pod/sigma.oimx
    operators/<method>_r<r_max>.oimx   O = [A_hat, F_hat]
    results/*.csv
    figures/<figure>/              data behind one figure plus README.md
    manifest.json
"""

import itertools
import json
import logging
import shutil
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import IC_PARAMETERS, ConfigError
from .io import read_matrix, read_snapshot, sha256_file, write_csv, write_matrix, write_snapshot
from .metrics import TrajectoryPair, field_autocorrelation, nace, relative_state_error
from .opinf import ReducedModel, SingularKKTError, assemble_lsq, ep_opinf, intrusive_reduce, standard_opinf
from .pde import Grid1D, assemble_burgers, assemble_kse, burgers_ic, integrate, kse_ic, simulate_batch
from .pod import PODBasis, compute_pod, energy_lost, energy_retained, project
from .tensor_ops import build_constraint_matrix, ep_violation

log = logging.getLogger(__name__)

TEST_SETS = {"test1": "inside", "test2": "outside"}
_REGION_CODE = {"inside": 1, "outside": 2}

FIGURES = {
    "burgers-error": ("burgers", ("error",)),
    "burgers-violation": ("burgers", ("violation",)),
    "kse-autocorr": ("kse", ("autocorr",)),
    "kse-nace": ("kse", ("autocorr",)),
    "kse-violation": ("kse", ("violation",)),
}


class MissingInputError(FileNotFoundError):
    """A stage needs files that an earlier stage has not produced."""


# Problem setup ---------------------------------------------------------------

def build_model(cfg):
    grid = Grid1D(cfg.grid.n, cfg.grid.L)
    assemble = assemble_burgers if cfg.problem == "burgers" else assemble_kse
    return grid, assemble(grid, cfg.mu)


def initial_state(cfg, grid, params):
    if cfg.problem == "burgers":
        return burgers_ic(grid, params["A"], params["f"], params["phi"])
    return kse_ic(grid, params["a"], params["b"])


def training_ics(cfg):
    names = list(IC_PARAMETERS[cfg.problem])
    return [dict(zip(names, values))
            for values in itertools.product(*(cfg.training_ics[k] for k in names))]


def _draw_outside(rng, inner, outer):
    (ilo, ihi), (olo, ohi) = inner, outer
    left, right = ilo - olo, ohi - ihi
    while True:
        u = rng.uniform(0.0, left + right)
        x = olo + u if u < left else ihi + (u - left)
        if not ilo <= x <= ihi:
            return x


def sample_ic(cfg, region, index, seed=None):
    """Test IC ``index`` of a region, drawn from an RNG keyed by (seed, region, index)."""
    seed = cfg.test_ics.seed if seed is None else seed
    rng = np.random.default_rng([int(seed), _REGION_CODE[region], int(index)])
    spec = getattr(cfg.test_ics, region)
    params = {}
    for name, kind in IC_PARAMETERS[cfg.problem].items():
        if kind == "discrete":
            params[name] = int(rng.choice(spec[name]))
        elif region == "inside":
            params[name] = float(rng.uniform(*spec[name]))
        else:
            params[name] = float(_draw_outside(rng, cfg.test_ics.inside[name], spec[name]))
    return params


def sample_test_ics(cfg, region):
    return [sample_ic(cfg, region, i) for i in range(cfg.test_ics.count)]


# Manifest --------------------------------------------------------------------

def _update_manifest(cfg, out, stage, seconds, extra=None):
    out = Path(out)
    path = out / "manifest.json"
    manifest = {}
    if path.exists():
        manifest = json.loads(path.read_text())
        if manifest.get("config_hash") != cfg.hash():
            manifest = {}
    manifest["config_hash"] = cfg.hash()
    manifest["toolkit_version"] = __version__
    manifest.setdefault("timings", {})[stage] = round(seconds, 3)
    if extra:
        manifest.setdefault("diagnostics", {})[stage] = extra
    manifest["files"] = {
        str(p.relative_to(out)): sha256_file(p)
        for p in sorted(out.rglob("*")) if p.is_file() and p.name != "manifest.json"
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# Stages ----------------------------------------------------------------------

def _snapshot_dir(out, name):
    return Path(out) / "snapshots" / name


def _write_set(out, name, sets):
    d = _snapshot_dir(out, name)
    if d.exists():
        shutil.rmtree(d)
    for i, snap in enumerate(sets):
        write_snapshot(d / f"ic_{i:03d}.oimx", snap)


def load_snapshots(out, name="training"):
    files = sorted(_snapshot_dir(out, name).glob("ic_*.oimx"))
    if not files:
        raise MissingInputError(f"no snapshot files in {_snapshot_dir(out, name)}; run `simulate` first")
    return [read_snapshot(f) for f in files]


def _simulate_ics(cfg, ics):
    grid, model = build_model(cfg)
    x0s = [initial_state(cfg, grid, p) for p in ics]
    return simulate_batch(model, x0s, cfg.dt, cfg.T, cfg.stride, cfg.scheme,
                          cfg.derivative_mode, ics)


def run_simulate(cfg, out):
    """Simulate every training IC; one snapshot file per IC."""
    t0 = time.perf_counter()
    sets = _simulate_ics(cfg, training_ics(cfg))
    _write_set(out, "training", sets)
    log.info("simulated %d training trajectories with %d snapshots each", len(sets), sets[0].K)
    _update_manifest(cfg, out, "simulate", time.perf_counter() - t0,
                     {"num_ics": len(sets), "snapshots_per_ic": sets[0].K})
    return sets


def operator_path(out, method, r_max):
    return Path(out) / "operators" / f"{method}_r{r_max}.oimx"


def run_train(cfg, out):
    """POD basis plus one operator file per method, all at r_max."""
    t0 = time.perf_counter()
    sets = load_snapshots(out, "training")
    basis = compute_pod(sets, cfg.r_max)
    write_matrix(Path(out) / "pod" / "basis.oimx", basis.V)
    write_matrix(Path(out) / "pod" / "sigma.oimx", basis.sigma)
    write_csv(Path(out) / "results" / "energy_spectrum.csv", ["r", "retained", "lost"],
              [(r, energy_retained(basis.sigma, r), energy_lost(basis.sigma, r))
               for r in range(1, basis.sigma.size + 1)])

    diagnostics = {"energy_retained_r_max": energy_retained(basis.sigma, cfg.r_max)}
    models = {}
    sys = None
    for method in cfg.method_list:
        if method == "intrusive":
            _, fom = build_model(cfg)
            model = intrusive_reduce(fom, basis, cfg.r_max)
        else:
            if sys is None:
                sys = assemble_lsq(project(basis, sets, cfg.r_max))
            if method == "opinf":
                model = standard_opinf(sys, cfg.ridge)
            else:
                try:
                    model = ep_opinf(sys, build_constraint_matrix(cfg.r_max), cfg.ridge)
                except SingularKKTError as exc:
                    raise SingularKKTError(f"{exc} (set `ridge` > 0 in the config)") from exc
        write_matrix(operator_path(out, method, cfg.r_max), model.operator)
        models[method] = model
        diagnostics[method] = {k: float(v) for k, v in model.diagnostics.items()
                               if np.isscalar(v) and not isinstance(v, str)}
        diagnostics[method]["ep_violation"] = model.ep_violation()
    _update_manifest(cfg, out, "train", time.perf_counter() - t0, diagnostics)
    return basis, models


def load_trained(cfg, out):
    out = Path(out)
    if not (out / "pod" / "basis.oimx").exists():
        raise MissingInputError(f"no POD basis in {out / 'pod'}; run `train` first")
    basis = PODBasis(V=read_matrix(out / "pod" / "basis.oimx"),
                     sigma=read_matrix(out / "pod" / "sigma.oimx")[:, 0])
    models = {}
    for method in cfg.method_list:
        path = operator_path(out, method, cfg.r_max)
        if not path.exists():
            raise MissingInputError(f"missing operator file {path}; run `train` first")
        models[method] = ReducedModel.from_operator(read_matrix(path), method)
    return basis, models


def _eval_sets(cfg, out):
    """Full-order trajectories per evaluation set (test sets cached on disk)."""
    sets = {"training": load_snapshots(out, "training")}
    if cfg.test_ics.count > 0:
        for name, region in TEST_SETS.items():
            try:
                sets[name] = load_snapshots(out, name)
            except MissingInputError:
                sets[name] = _simulate_ics(cfg, sample_test_ics(cfg, region))
                _write_set(out, name, sets[name])
    return sets


def evaluate_rom(cfg, model, basis, r, full_sets, autocorr=None):
    """Integrate the size-r submodel from every IC of one set and score it.

    Returns a dict with ``error`` (inf on blow-up), ``blowups`` and, when
    ``autocorr`` is given as the list of full-model series, ``nace`` and the
    mean reduced autocorrelation ``rho``.
    """
    sub = model.submodel(r)
    V = basis.Vr(r)
    X0 = np.column_stack([s.X[:, 0] for s in full_sets])
    states, blowup = integrate(sub.to_quadratic_model(), V.T @ X0, cfg.dt, cfg.T,
                               cfg.stride, cfg.scheme, strict=False)
    blown = sum(b is not None for b in blowup)
    res = {"blowups": blown, "error": np.inf, "nace": np.inf, "rho": None}
    if blown:
        return res
    pairs = [TrajectoryPair(s.X, states[:, :, j], V) for j, s in enumerate(full_sets)]
    res["error"] = relative_state_error(pairs)
    if autocorr is not None:
        red = [field_autocorrelation(p.reconstruction(), cfg.metrics.k_max, "reduced",
                                     cfg.metrics.burn_in) for p in pairs]
        res["nace"] = nace(autocorr, red)
        res["rho"] = np.mean([a.rho for a in red], axis=0)
    return res


def _violation_table(cfg, models, out):
    rows = [[r] + [ep_violation(models[m].submodel(r).F_hat) for m in cfg.method_list]
            for r in range(1, cfg.r_max + 1)]
    write_csv(Path(out) / "results" / "violation_vs_r.csv", ["r", *cfg.method_list], rows)
    return rows


def run_evaluate(cfg, out, what=("violation", "error", "autocorr")):
    """Extract, integrate and score reduced models for every r in ``r_list``."""
    t0 = time.perf_counter()
    out = Path(out)
    basis, models = load_trained(cfg, out)
    results = out / "results"
    summary = {}
    if "violation" in what:
        _violation_table(cfg, models, out)
    want_ac = "autocorr" in what and cfg.metrics.autocorrelation
    if "error" not in what and not want_ac:
        _update_manifest(cfg, out, "evaluate", time.perf_counter() - t0)
        return summary

    for set_name, full_sets in _eval_sets(cfg, out).items():
        full_ac = None
        if want_ac:
            full_ac = [field_autocorrelation(s.X, cfg.metrics.k_max, "full", cfg.metrics.burn_in)
                       for s in full_sets]
        table = {}
        for method in cfg.method_list:
            for r in cfg.r_list:
                table[method, r] = evaluate_rom(cfg, models[method], basis, r, full_sets, full_ac)
                log.info("%s %s r=%d error=%.3e", set_name, method, r, table[method, r]["error"])
        header = ["r", *cfg.method_list]
        write_csv(results / f"{set_name}_error_vs_r.csv", header,
                  [[r] + [table[m, r]["error"] for m in cfg.method_list] for r in cfg.r_list])
        write_csv(results / f"{set_name}_rom_runs.csv",
                  ["method", "r", "relative_state_error", "nace", "blowups"],
                  [[m, r, table[m, r]["error"], table[m, r]["nace"], table[m, r]["blowups"]]
                   for m in cfg.method_list for r in cfg.r_list])
        if want_ac:
            write_csv(results / f"{set_name}_nace_vs_r.csv", header,
                      [[r] + [table[m, r]["nace"] for m in cfg.method_list] for r in cfg.r_list])
            rho_full = np.mean([a.rho for a in full_ac], axis=0)
            for r in cfg.metrics.autocorr_r:
                if r not in cfg.r_list:
                    for m in cfg.method_list:
                        table[m, r] = evaluate_rom(cfg, models[m], basis, r, full_sets, full_ac)
                cols = [rho_full] + [table[m, r]["rho"] if table[m, r]["rho"] is not None
                                     else np.full_like(rho_full, np.inf) for m in cfg.method_list]
                write_csv(results / f"{set_name}_autocorr_r{r}.csv", ["lag", "full", *cfg.method_list],
                          [[k] + [float(c[k]) for c in cols] for k in range(rho_full.size)])
        summary[set_name] = {f"{m}:{r}": v["error"] for (m, r), v in table.items()}
    _update_manifest(cfg, out, "evaluate", time.perf_counter() - t0)
    return summary


_FIGURE_README = {
    "burgers-error": ("Relative state error of the reduced models vs reduced dimension r.\n"
                      "Files: <set>_error_vs_r.csv for set in training/test1/test2.\n"
                      "x axis: r. y axis: mean over ICs of ||X - Vr Xbar||_F^2 / ||X||_F^2 "
                      "(log scale); one column per method, inf marks a blown-up ROM."),
    "burgers-violation": ("Energy-preserving constraint violation vs reduced dimension r.\n"
                          "File: violation_vs_r.csv. x axis: r. y axis: "
                          "sum |h_ijk + h_jik + h_kji| (log scale); one column per method."),
    "kse-autocorr": ("Space-averaged sample autocorrelation vs time lag, averaged over ICs.\n"
                     "Files: <set>_autocorr_r<r>.csv. x axis: lag in stored samples "
                     "(multiply by dt*stride for time). y axis: rho(k); columns full and one per method."),
    "kse-nace": ("Normalized autocorrelation error vs reduced dimension r.\n"
                 "Files: <set>_nace_vs_r.csv. x axis: r. y axis: mean over ICs of "
                 "||rho - rhobar||^2 / ||rho||^2 (log scale); inf marks a blown-up ROM."),
    "kse-violation": ("Energy-preserving constraint violation vs reduced dimension r.\n"
                      "File: violation_vs_r.csv. x axis: r. y axis: "
                      "sum |h_ijk + h_jik + h_kji| (log scale); one column per method."),
}

_FIGURE_FILES = {
    "burgers-error": "*_error_vs_r.csv",
    "burgers-violation": "violation_vs_r.csv",
    "kse-autocorr": "*_autocorr_r*.csv",
    "kse-nace": "*_nace_vs_r.csv",
    "kse-violation": "violation_vs_r.csv",
}


def run_reproduce(figure, cfg, out):
    """Run the stages behind one figure and collect its data files."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {sorted(FIGURES)}")
    problem, what = FIGURES[figure]
    if cfg.problem != problem:
        raise ConfigError(f"figure {figure} needs a {problem} config, got {cfg.problem}")
    t0 = time.perf_counter()
    out = Path(out)
    run_simulate(cfg, out)
    run_train(cfg, out)
    run_evaluate(cfg, out, what)
    fig_dir = out / "figures" / figure
    if fig_dir.exists():
        shutil.rmtree(fig_dir)
    fig_dir.mkdir(parents=True)
    files = sorted((out / "results").glob(_FIGURE_FILES[figure]))
    for f in files:
        shutil.copyfile(f, fig_dir / f.name)
    (fig_dir / "README.md").write_text(f"# {figure}\n\n{_FIGURE_README[figure]}\n")
    _update_manifest(cfg, out, f"reproduce:{figure}", time.perf_counter() - t0)
    return [fig_dir / f.name for f in files]
