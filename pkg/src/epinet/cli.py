"""Command-line entry point: ``epinet {simulate,fit,bootstrap,evaluate,roc,convert}``.

Settings resolve in the order command-line flag, ``EPINET_THREADS`` (for
``threads`` only), TOML config table named after the subcommand, built-in
default. Every run writes a ``manifest.json`` next to its outputs.
"""
import argparse
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("epinet")


class UsageError(Exception):
    pass


_FIT = dict(input=None, map=None, estep="gibbs", select="ebic", gamma=0.5, n_lambda=30,
            min_ratio=0.05, sweeps=1000, burn_in=1000, em_iter=10, em_tol=1e-3,
            init="normal_scores", penalize_diagonal=True, subsamples=20, instability=0.05,
            max_missing=0.5, diagnose=0, seed=0, threads=1, out=".")
_SIM = dict(p=90, n=360, k=3, groups=5, alpha=0.01, beta=0.02, latent="normal", seed=0, out=".")

DEFAULTS = {
    "simulate": dict(_SIM),
    "fit": dict(_FIT),
    "bootstrap": dict(_FIT, replicates=50),
    "evaluate": dict(est=None, true=None, method="estimate", seed=0, out="metrics.tsv"),
    "roc": dict(_SIM, seeds=20, methods="gibbs,approx,npn-tau,npn-ns", gamma=0.5, n_lambda=30,
                min_ratio=0.05, sweeps=100, burn_in=20, em_iter=10, em_tol=1e-3,
                init="normal_scores", penalize_diagonal=True, threads=1),
    "convert": dict(input=None, output=None, map=None, kind="auto"),
}


def derive_seed(seed, *counter):
    """Independent 32-bit seed for subtask ``counter`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([int(seed), *map(int, counter)]).generate_state(1)[0])


def _bool(text):
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add(parser, name, typ=None, aliases=(), **kw):
    flag = "--" + name.replace("_", "-")
    if typ is not None:
        kw["type"] = typ
    parser.add_argument(flag, *aliases, dest=name, default=argparse.SUPPRESS, **kw)


def _sim_options(p):
    _add(p, "p", int, help="number of markers")
    _add(p, "n", int, help="number of individuals")
    _add(p, "k", int, help="genotype states per marker")
    _add(p, "groups", int, help="linkage groups (chromosomes)")
    _add(p, "alpha", float, help="extra intra-chromosomal edge probability")
    _add(p, "beta", float, help="trans-chromosomal edge probability")
    _add(p, "latent", choices=["normal", "t3"])


def _em_options(p):
    _add(p, "gamma", float, help="eBIC gamma")
    _add(p, "n_lambda", int, help="penalty grid size")
    _add(p, "min_ratio", float, help="smallest penalty as a fraction of the largest")
    _add(p, "sweeps", int, help="Gibbs sweeps kept per individual")
    _add(p, "burn_in", int, help="Gibbs burn-in sweeps")
    _add(p, "em_iter", int, help="maximum EM iterations per penalty")
    _add(p, "em_tol", float, help="relative Frobenius tolerance on theta")
    _add(p, "init", choices=["normal_scores", "identity"])
    _add(p, "penalize_diagonal", _bool)


def _fit_options(p):
    _add(p, "input", aliases=("--in",), help="genotype CSV/TSV (header = marker names)")
    _add(p, "map", help="marker map TSV (marker, chromosome, position)")
    _add(p, "estep", choices=["gibbs", "approx"])
    _add(p, "select", choices=["ebic", "stars"])
    _em_options(p)
    _add(p, "subsamples", int, help="StARS subsamples")
    _add(p, "instability", float, help="StARS instability cut")
    _add(p, "max_missing", float, help="drop markers above this missing rate")
    _add(p, "diagnose", int, help="run stationarity tests on this many individuals' chains")


def build_parser():
    parser = argparse.ArgumentParser(prog="epinet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"epinet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {
        "simulate": "simulate a planted network and genotype data",
        "fit": "fit a sparse copula graphical model to genotype data",
        "bootstrap": "bootstrap edge frequencies of the fitted network",
        "evaluate": "compare an estimated edge list with the true network",
        "roc": "simulation benchmark: ROC curves and recovery metrics per method",
        "convert": "convert genotype tables or edge lists between formats",
    }
    parsers = {}
    for name, text in subs.items():
        p = sub.add_parser(name, help=text, description=text)
        _add(p, "config", help="TOML file; the table named after the subcommand is used")
        p.add_argument("-v", "--verbose", action="store_true", default=False)
        parsers[name] = p
    _sim_options(parsers["simulate"])
    for name in ("simulate", "fit", "bootstrap", "roc"):
        _add(parsers[name], "seed", int, help="master seed")
    for name in ("simulate", "fit", "bootstrap", "roc"):
        _add(parsers[name], "out", help="output directory")
    for name in ("fit", "bootstrap"):
        _fit_options(parsers[name])
        _add(parsers[name], "threads", int, help="worker processes (env EPINET_THREADS)")
    _add(parsers["bootstrap"], "replicates", int, help="bootstrap replicates B")
    ev = parsers["evaluate"]
    _add(ev, "est", help="estimated edge list TSV")
    _add(ev, "true", help="true edge list TSV")
    _add(ev, "method", help="method label for the metrics row")
    _add(ev, "seed", int, help="seed label for the metrics row")
    _add(ev, "out", help="metrics TSV path")
    roc = parsers["roc"]
    _sim_options(roc)
    _em_options(roc)
    _add(roc, "seeds", int, help="number of simulated replicates")
    _add(roc, "methods", help="comma-separated subset of gibbs,approx,npn-tau,npn-ns")
    _add(roc, "threads", int, help="worker processes (env EPINET_THREADS)")
    conv = parsers["convert"]
    _add(conv, "input", aliases=("--in",), help="genotype table or edge list")
    _add(conv, "output", help="target file; format from extension (.csv .tsv .graphml .dot)")
    _add(conv, "map", help="marker map for chromosome colours")
    _add(conv, "kind", choices=["auto", "genotypes", "edges"])
    return parser


def _load_toml(path):
    import tomli

    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"malformed config {path}: {exc}") from None


def resolve_config(command, flags, environ=None):
    """Merge defaults, the TOML table ``[command]``, ``EPINET_THREADS`` and flags."""
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS[command])
    flags = dict(flags)
    path = flags.pop("config", None)
    if path is not None:
        table = _load_toml(path).get(command, {})
        if not isinstance(table, dict):
            raise UsageError(f"config entry [{command}] must be a table")
        for key, value in table.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r} in [{command}]")
            default = DEFAULTS[command][key]
            if default is not None and not isinstance(value, type(default)) and not (
                isinstance(default, float) and isinstance(value, int)
            ):
                raise UsageError(f"config key {key!r} must be {type(default).__name__}")
            cfg[key] = value
    if "threads" in cfg and "threads" not in flags and environ.get("EPINET_THREADS"):
        try:
            cfg["threads"] = int(environ["EPINET_THREADS"])
        except ValueError:
            raise UsageError("EPINET_THREADS must be an integer") from None
    cfg.update({k: v for k, v in flags.items() if k in cfg})
    if "threads" in cfg and cfg["threads"] < 1:
        raise UsageError("threads must be >= 1")
    return cfg


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")
        if key in ("input", "est", "true", "map") and not Path(cfg[key]).exists():
            raise UsageError(f"input file not found: {cfg[key]}")
    if cfg.get("map") is not None and not Path(cfg["map"]).exists():
        raise UsageError(f"input file not found: {cfg['map']}")


def _em_config(cfg, seed):
    from .em import EMConfig
    from .latent import GibbsConfig

    return EMConfig(e_step=cfg.get("estep", "gibbs"), em_max_iter=cfg["em_iter"], em_tol=cfg["em_tol"],
                    gibbs=GibbsConfig(cfg["sweeps"], cfg["burn_in"], seed), init=cfg["init"],
                    penalize_diagonal=cfg["penalize_diagonal"])


def cmd_simulate(cfg):
    from .data import write_genotypes, write_map
    from .io import write_edge_list
    from .simulate import SimulationSpec, simulate

    spec = SimulationSpec(p=cfg["p"], n=cfg["n"], k=cfg["k"], groups=cfg["groups"], alpha=cfg["alpha"],
                          beta=cfg["beta"], latent=cfg["latent"], seed=cfg["seed"])
    net, g, _ = simulate(spec)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "genotypes.csv", out / "map.tsv", out / "truth.tsv"]
    write_genotypes(g, files[0])
    write_map(net.marker_map(g.names), files[1])
    write_edge_list(files[2], net.theta, g.names)
    return [], files, [cfg["seed"]]


def _load_input(cfg):
    from .data import load_genotypes, prepare, validate

    g, marker_map = load_genotypes(cfg["input"], map_path=cfg.get("map"))
    report = validate(g, marker_map, cfg["max_missing"])
    for issue in report.issues:
        log.warning(issue)
    g, keep = prepare(g, cfg["max_missing"])
    chrom = None if marker_map is None else [marker_map.chromosomes[j] for j in keep]
    inputs = [cfg["input"]] + ([cfg["map"]] if cfg.get("map") else [])
    return g, chrom, inputs


def cmd_fit(cfg):
    from .data import estimate_cutpoints
    from .em import deviance_test, ebic_select, fit_path, partial_correlations, stars_select
    from .io import write_dense, write_dot, write_edge_list, write_graphml, write_table

    _require(cfg, "input")
    g, chrom, inputs = _load_input(cfg)
    seeds = {"estep": derive_seed(cfg["seed"], 0), "stars": derive_seed(cfg["seed"], 1)}
    em_cfg = _em_config(cfg, seeds["estep"])
    cuts = estimate_cutpoints(g)
    path = fit_path(g, cuts, cfg=em_cfg, n_lambda=cfg["n_lambda"], min_ratio=cfg["min_ratio"])
    if cfg["select"] == "ebic":
        k = ebic_select(path, cfg["gamma"])
    else:
        k = stars_select(g, cuts, path.lambdas, em_cfg, cfg["subsamples"], cfg["instability"],
                         seed=seeds["stars"], n_jobs=cfg["threads"]).index
    entry = path[k]
    diag = deviance_test(entry, g.n)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    files = {name: out / name for name in ("edges.tsv", "theta.tsv", "partial.tsv", "network.graphml",
                                           "network.dot", "path.tsv", "diagnostics.tsv")}
    write_edge_list(files["edges.tsv"], entry.theta, g.names)
    write_dense(files["theta.tsv"], entry.theta, g.names)
    write_dense(files["partial.tsv"], partial_correlations(entry.theta), g.names)
    write_graphml(files["network.graphml"], entry.theta, g.names, chrom)
    write_dot(files["network.dot"], entry.theta, g.names, chrom)
    ebic = path.ebic(cfg["gamma"])
    write_table(files["path.tsv"], ["lambda", "df", "loglik", "ebic", "em_iterations", "selected", "error"],
                [[e.lam, e.df, np.nan if e.failed else e.diagnostics.loglik, ebic[i],
                  0 if e.failed else e.diagnostics.em_iterations, int(i == k), e.error or ""]
                 for i, e in enumerate(path.entries)])
    write_table(files["diagnostics.tsv"], ["statistic", "value"],
                [["lambda", entry.lam], ["df", entry.df], ["Q", diag.q], ["H", diag.h],
                 ["loglik", diag.loglik], ["deviance", diag.deviance],
                 ["deviance_df", diag.deviance_df], ["p_value", diag.p_value],
                 ["em_iterations", diag.em_iterations], ["converged", int(diag.converged)]])
    outputs = list(files.values())
    if cfg["diagnose"] > 0:
        outputs.append(_stationarity(g, cuts, entry.theta, em_cfg, cfg["diagnose"], out))
    results = {"lambdas": [float(x) for x in path.lambdas],
               "ebic": [None if not np.isfinite(x) else float(x) for x in ebic],
               "selected_index": int(k), "selected_lambda": float(entry.lam)}
    return inputs, outputs, seeds, results


def _stationarity(g, cuts, theta, em_cfg, count, out):
    from .diagnostics import heidelberger_welch, write_reports
    from .em import copula_scale
    from .latent import GibbsConfig, sample_truncated_mvn

    lower, upper = cuts.bounds(g)
    cov = np.linalg.inv(copula_scale(theta))
    reports = []
    for i in range(min(count, g.n)):
        gc = GibbsConfig(max(em_cfg.gibbs.sweeps, 100), em_cfg.gibbs.burn_in, derive_seed(em_cfg.gibbs.seed, i))
        samples, _ = sample_truncated_mvn(np.zeros(g.p), cov, lower[i], upper[i], gc)
        reports.extend(heidelberger_welch(samples[:, j]) for j in range(g.p))
    path = out / "stationarity.tsv"
    write_reports(reports, path)
    return path


def cmd_bootstrap(cfg):
    from .evaluation import bootstrap_network
    from .io import write_dense

    _require(cfg, "input")
    g, _, inputs = _load_input(cfg)
    seed = derive_seed(cfg["seed"], 2)
    summary = bootstrap_network(g, cfg["replicates"], _em_config(cfg, derive_seed(cfg["seed"], 0)),
                                cfg["select"], cfg["gamma"], seed=seed, n_jobs=cfg["threads"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "frequency.tsv", out / "positive.tsv", out / "negative.tsv", out / "theta.tsv"]
    write_dense(files[0], summary.frequency, g.names)
    write_dense(files[1], summary.positive, g.names)
    write_dense(files[2], summary.negative, g.names)
    write_dense(files[3], summary.theta, g.names)
    return inputs, files, {"bootstrap": seed, "estep": derive_seed(cfg["seed"], 0)}


def cmd_evaluate(cfg):
    from .evaluation import confusion_metrics
    from .io import read_edge_list, write_table

    _require(cfg, "est", "true")
    names_t, adj_t, _ = read_edge_list(cfg["true"])
    names_e, adj_e, _ = read_edge_list(cfg["est"])
    if set(names_e) != set(names_t):
        raise UsageError("estimated and true edge lists cover different markers")
    order = [names_e.index(n) for n in names_t]
    m = confusion_metrics(adj_e[np.ix_(order, order)], adj_t)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table(out, ["method", "seed", "F1", "SEN", "SPE", "AUC", "TP", "FP", "FN", "TN"],
                [[cfg["method"], cfg["seed"], m.f1, m.sen, m.spe, "NA", m.tp, m.fp, m.fn, m.tn]])
    return [cfg["est"], cfg["true"]], [out], [cfg["seed"]]


METHODS = ("gibbs", "approx", "npn-tau", "npn-ns")


def benchmark_replicate(cfg, seed, methods):
    """One simulated data set scored by every method: metric rows and ROC rows."""
    from .data import estimate_cutpoints, prepare
    from .em import ebic_select, fit_path
    from .evaluation import confusion_metrics, gaussian_path, npn_ns, npn_tau, oracle_f1, roc_curve
    from .simulate import SimulationSpec, simulate

    spec = SimulationSpec(p=cfg["p"], n=cfg["n"], k=cfg["k"], groups=cfg["groups"], alpha=cfg["alpha"],
                          beta=cfg["beta"], latent=cfg["latent"], seed=seed)
    net, g, _ = simulate(spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g, keep = prepare(g)
    true = net.adjacency[np.ix_(keep, keep)]
    cuts = estimate_cutpoints(g)
    metrics, roc = [], []
    for method in methods:
        if method in ("gibbs", "approx"):
            em_cfg = _em_config(dict(cfg, estep=method), derive_seed(seed, 0))
            path = fit_path(g, cuts, cfg=em_cfg, n_lambda=cfg["n_lambda"], min_ratio=cfg["min_ratio"])
        else:
            corr = npn_tau(g) if method == "npn-tau" else npn_ns(g)
            path = gaussian_path(corr, g.n, n_lambda=cfg["n_lambda"], min_ratio=cfg["min_ratio"])
        k = ebic_select(path, cfg["gamma"])
        m = confusion_metrics(path[k].adjacency, true)
        fpr, tpr, auc = roc_curve(path, true)
        metrics.append([method, seed, m.f1, m.sen, m.spe, auc, oracle_f1(path, true), path[k].df, path[k].lam])
        roc.extend([method, seed, a, b] for a, b in zip(fpr, tpr))
    return metrics, roc


def _pinned_replicate(cfg, seed, methods):
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        return benchmark_replicate(cfg, seed, methods)


def cmd_roc(cfg):
    from joblib import Parallel, delayed

    from .io import write_table

    methods = [m.strip() for m in cfg["methods"].split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown methods {bad}; choose from {','.join(METHODS)}")
    seeds = [derive_seed(cfg["seed"], r) for r in range(cfg["seeds"])]
    results = Parallel(n_jobs=cfg["threads"])(delayed(_pinned_replicate)(cfg, s, methods) for s in seeds)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "metrics.tsv", out / "roc.tsv"]
    write_table(files[0], ["method", "seed", "F1", "SEN", "SPE", "AUC", "F1_oracle", "df", "lambda"],
                [row for rows, _ in results for row in rows])
    write_table(files[1], ["method", "seed", "fpr", "tpr"], [row for _, rows in results for row in rows])
    return [], files, seeds


def cmd_convert(cfg):
    from .data import load_genotypes, load_map, write_genotypes
    from .io import read_edge_list, write_dense, write_dot, write_graphml

    _require(cfg, "input", "output")
    src, dst = Path(cfg["input"]), Path(cfg["output"])
    kind = cfg["kind"]
    if kind == "auto":
        with open(src, encoding="utf-8") as fh:
            head = fh.readline()
        kind = "edges" if head.startswith("#nodes") or head.startswith("marker_i") else "genotypes"
    ext = dst.suffix.lower()
    if kind == "genotypes":
        if ext not in (".csv", ".tsv"):
            raise UsageError("genotype tables convert to .csv or .tsv")
        g, _ = load_genotypes(src)
        write_genotypes(g, dst, ext[1:])
    else:
        names, adj, theta = read_edge_list(src)
        chrom = None
        if cfg.get("map"):
            mm = load_map(cfg["map"])
            lookup = dict(zip(mm.names, mm.chromosomes))
            chrom = [lookup.get(n, "NA") for n in names]
        # edge lists carry off-diagonals only; a unit diagonal keeps the signs readable
        full = theta.copy()
        np.fill_diagonal(full, 1.0)
        if ext == ".graphml":
            write_graphml(dst, full, names, chrom)
        elif ext == ".dot":
            write_dot(dst, full, names, chrom)
        elif ext == ".tsv":
            write_dense(dst, adj.astype(int), names)
        else:
            raise UsageError("edge lists convert to .graphml, .dot or .tsv (dense adjacency)")
    inputs = [src] + ([cfg["map"]] if cfg.get("map") else [])
    return inputs, [dst], []


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "bootstrap": cmd_bootstrap,
            "evaluate": cmd_evaluate, "roc": cmd_roc, "convert": cmd_convert}


def _manifest_path(command, cfg, outputs):
    if command in ("evaluate", "convert"):
        return Path(outputs[0]).parent / "manifest.json"
    return Path(cfg["out"]) / "manifest.json"


def main(argv=None):
    from threadpoolctl import threadpool_limits

    from .io import write_manifest

    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    verbose = args.pop("verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.time()
    try:
        cfg = resolve_config(command, args)
        # single-threaded BLAS keeps results independent of the worker count
        with threadpool_limits(limits=1):
            inputs, outputs, seeds, *extra = COMMANDS[command](cfg)
        manifest = _manifest_path(command, cfg, outputs)
        write_manifest(manifest, command, cfg, seeds, inputs, outputs, time.time() - start,
                       extra[0] if extra else None)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"epinet {command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: message, not a traceback
        if verbose:
            raise
        print(f"epinet {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
