"""Experiment runner: scheme x dataset matrices, ECDFs of NLL differences,
area-under-ECDF scores, the jitter/noise study, and LOO tables.

Rows are keyed by (scheme, dataset, repetition) and every cell derives its
RNG deterministically from the master seed, the scheme's seed field, and the
cell key, so reruns are bit-reproducible.  Schemes sharing a seed field share
perturbation streams, which makes nested multi-start budgets directly
comparable.  Wall times go to a separate table so result files stay
byte-identical across reruns.
"""

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import linalg, testbed
from .errors import ConfigError, GpError, MissingReference
from .kernels import MATERN, KernelSpec, ParamVector, covariance_matrix
from .likelihood import nll
from .optimize import (
    SOFT,
    STRICT,
    InitStrategy,
    RestartPolicy,
    SchemeConfig,
    StoppingRule,
    fit,
)
from .predict import fit_gp, loo_refit, normalized_interp_error

RESULT_COLUMNS = (
    "scheme",
    "dataset",
    "repetition",
    "status",
    "nll",
    "termination",
    "n_nll_evals",
    "n_grad_evals",
    "params",
    "error",
)
TIMING_COLUMNS = ("scheme", "dataset", "repetition", "wall_time")

JITTER_COLUMNS = (
    "ratio",
    "kappa",
    "kappa_logdet",
    "delta_quad",
    "delta_logdet",
    "nll",
    "normalized_interp_error",
)

LOO_COLUMNS = ("index", "status", "nll", "squared_error", "params", "error")


def default_scheme(seed=0):
    """GPy-like defaults: invsoftplus reparam, constant init, soft stopping."""
    return SchemeConfig(
        init=InitStrategy.constant(),
        reparam="invsoftplus",
        stopping=SOFT,
        restart=RestartPolicy.none(),
        seed=seed,
    )


def improved_scheme(seed=0, n_opt=5):
    """Recommended combination: log reparam, grid-search init, soft stopping,
    a small number of restarts."""
    return SchemeConfig(
        init=InitStrategy.grid(),
        reparam="log",
        stopping=SOFT,
        restart=RestartPolicy.restart(n_opt),
        seed=seed,
    )


def reference_scheme(seed=0, n_opt=50):
    """Brute-force reference: large multi-start budget, strict stopping."""
    return SchemeConfig(
        init=InitStrategy.grid(),
        reparam="log",
        stopping=STRICT,
        restart=RestartPolicy.multistart(n_opt),
        seed=seed,
    )


PRESETS = {
    "default": default_scheme,
    "improved": improved_scheme,
    "reference": reference_scheme,
}


def _multistart_budget(scheme):
    return scheme.restart.n_opt if scheme.restart.kind == "multistart" else 1


@dataclass(frozen=True)
class ExperimentMatrix:
    """Schemes to compare, the brute-force reference, datasets, repetitions."""

    schemes: tuple  # of (name, SchemeConfig)
    reference: tuple  # (name, SchemeConfig)
    datasets: tuple  # of (dataset_id, Dataset)
    repetitions: int = 1
    nu: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "datasets", tuple(self.datasets))
        names = [name for name, _ in self.schemes]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate scheme names: {names}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        ref_budget = _multistart_budget(self.reference[1])
        worst = max((_multistart_budget(s) for _, s in self.schemes), default=1)
        if worst > ref_budget:
            raise ConfigError(
                f"reference multi-start budget {ref_budget} is below a scheme's budget {worst}"
            )


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    dataset: str
    repetition: int
    status: str
    nll: float
    termination: str
    n_nll_evals: int
    n_grad_evals: int
    params: str  # JSON
    error: str
    wall_time: float


def params_to_json(params):
    return json.dumps(
        {
            "mu": params.mu,
            "noise_var": params.noise_var,
            "rho": [float(v) for v in params.rho],
            "sigma2": params.sigma2,
        },
        sort_keys=True,
    )


def params_from_json(text):
    obj = json.loads(text)
    return ParamVector(
        sigma2=obj["sigma2"], rho=np.asarray(obj["rho"]), noise_var=obj["noise_var"], mu=obj["mu"]
    )


def derive_seed(*parts):
    """Deterministic 63-bit seed from arbitrary hashable parts."""
    digest = hashlib.sha256("|".join(repr(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _run_cell(payload):
    scheme_name, scheme, nu, dataset_id, dataset, rep = payload
    spec = KernelSpec(family=MATERN, dim=dataset.dim, nu=nu)
    try:
        result = fit(scheme, spec, dataset)
        return ResultRow(
            scheme=scheme_name,
            dataset=dataset_id,
            repetition=rep,
            status="ok",
            nll=result.nll,
            termination=result.per_run_trace[result.best_run].termination,
            n_nll_evals=result.n_nll_evals,
            n_grad_evals=result.n_grad_evals,
            params=params_to_json(result.params),
            error="",
            wall_time=result.wall_time,
        )
    except GpError as exc:
        return ResultRow(
            scheme=scheme_name,
            dataset=dataset_id,
            repetition=rep,
            status="error",
            nll=float("nan"),
            termination="",
            n_nll_evals=0,
            n_grad_evals=0,
            params="",
            error=str(exc),
            wall_time=0.0,
        )


def run_matrix(matrix, master_seed=0, jobs=1):
    """Run every (scheme, dataset, repetition) cell plus the reference cells.

    The reference runs once per dataset; stochastic (multi-start) schemes run
    ``matrix.repetitions`` times, deterministic schemes once.  Failures become
    rows with status ``error`` and never abort the matrix.  Rows come back
    sorted by cell key regardless of execution order.
    """
    payloads = []
    entries = [matrix.reference] + list(matrix.schemes)
    for scheme_name, scheme in entries:
        is_reference = scheme_name == matrix.reference[0]
        stochastic = scheme.restart.kind == "multistart"
        reps = 1 if is_reference or not stochastic else matrix.repetitions
        for dataset_id, dataset in matrix.datasets:
            for rep in range(reps):
                cell_seed = derive_seed(master_seed, scheme.seed, dataset_id, rep)
                payloads.append(
                    (scheme_name, replace(scheme, seed=cell_seed), matrix.nu, dataset_id, dataset, rep)
                )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, payloads))
    else:
        rows = [_run_cell(p) for p in payloads]
    rows.sort(key=lambda r: (r.scheme, r.dataset, r.repetition))
    return rows


@dataclass(frozen=True)
class EcdfReport:
    """Sample of NLL differences to the reference, with its ECDF and area."""

    scheme: str
    diffs: np.ndarray  # sorted ascending; +inf marks failed cells
    area: float
    negative_count: int
    n_failed: int

    def ecdf(self, t):
        """Right-continuous empirical CDF evaluated at t (scalar or array)."""
        t = np.asarray(t, dtype=float)
        values = np.searchsorted(self.diffs, t, side="right") / self.diffs.size
        return float(values) if values.ndim == 0 else values

    def points(self):
        """Step coordinates (x, ECDF(x)) at each finite sample value."""
        finite = self.diffs[np.isfinite(self.diffs)]
        xs = np.unique(finite)
        return [(float(x), self.ecdf(x)) for x in xs]


def area_under_ecdf(diffs_or_report, nll_max=100.0):
    """Integral of the ECDF over [0, nll_max], reported on the 0-100 scale.

    Exact for step functions: each sample contributes
    (nll_max - clip(e, 0, nll_max)) / m, so differences <= 0 earn full credit
    and differences >= nll_max (or failures) earn none.
    """
    diffs = diffs_or_report.diffs if isinstance(diffs_or_report, EcdfReport) else np.asarray(diffs_or_report, dtype=float)
    contributions = nll_max - np.clip(diffs, 0.0, nll_max)
    return float(np.mean(contributions) * (100.0 / nll_max))


def ecdf_of_differences(rows, scheme, reference, aggregate="pool"):
    """Differences e = NLL_scheme - NLL_reference across datasets.

    Repetitions of stochastic schemes are pooled into the sample by default;
    ``aggregate="mean"`` instead averages the NLL over repetitions first,
    yielding one difference per dataset.  Raises MissingReference if some
    dataset covered by the scheme has no successful reference row.  Failed
    scheme cells enter the sample as +inf.
    """
    if aggregate not in ("pool", "mean"):
        raise ValueError(f"unknown aggregate mode: {aggregate!r}")
    ref_nll = {
        r.dataset: r.nll for r in rows if r.scheme == reference and r.status == "ok"
    }
    per_dataset = {}
    n_failed = 0
    for row in rows:
        if row.scheme != scheme:
            continue
        if row.dataset not in ref_nll:
            raise MissingReference(f"no reference row for dataset {row.dataset!r}")
        if row.status == "ok":
            value = row.nll - ref_nll[row.dataset]
        else:
            n_failed += 1
            value = float("inf")
        per_dataset.setdefault(row.dataset, []).append(value)
    if not per_dataset:
        raise MissingReference(f"no rows for scheme {scheme!r}")
    if aggregate == "pool":
        diffs = [v for values in per_dataset.values() for v in values]
    else:
        diffs = [float(np.mean(values)) for values in per_dataset.values()]
    diffs = np.sort(np.asarray(diffs, dtype=float))
    return EcdfReport(
        scheme=scheme,
        diffs=diffs,
        area=area_under_ecdf(diffs),
        negative_count=int(np.sum(diffs < -1e-6)),
        n_failed=n_failed,
    )


def fit_scenario(function="branin", n=20, seed=0, scheme=None, nu=2.5, min_kappa=None):
    """Fit one test-function dataset; returns (spec, fitted params, dataset).

    With ``min_kappa`` set, the returned parameters are moved up the profiled
    long-range ridge (ranges doubled, mean/variance re-profiled) until the
    covariance condition number reaches the target.  A noisy-gradient engine
    stalls on that ridge, which is the regime the jitter study quantifies; a
    clean refit alone lands at the better-conditioned optimum.
    """
    fn = testbed.get_function(function)
    dataset = testbed.make_dataset(fn, testbed.DesignSpec(kind=testbed.LHS_MDU, n=n, seed=seed))
    spec = KernelSpec(family=MATERN, dim=fn.dim, nu=nu)
    scheme = scheme if scheme is not None else improved_scheme(seed=derive_seed("scenario", seed))
    result = fit(scheme, spec, dataset)
    params = result.params
    if min_kappa is not None:
        params = _walk_ridge_to_kappa(spec, params, dataset, min_kappa)
    return spec, params, dataset


def _walk_ridge_to_kappa(spec, params, data, min_kappa, max_doublings=24):
    from .likelihood import profile_mean_var

    best = params
    scale = 1.0
    for _ in range(max_doublings):
        lam = np.linalg.eigvalsh(covariance_matrix(spec, best, data.X))
        kappa = float("inf") if lam[0] <= 0 else lam[-1] / lam[0]
        if kappa >= min_kappa:
            return best
        scale *= 2.0
        try:
            rho = params.rho * scale
            mu, sigma2 = profile_mean_var(spec, rho, 0.0, data)
            best = ParamVector(sigma2=sigma2, rho=rho, noise_var=0.0, mu=mu)
        except GpError:
            break
    return best


def jitter_study(spec, params, data, ratios, num_points=100):
    """Table of conditioning / noise / accuracy columns across noise ratios.

    For each ratio, the noise variance is set to ratio * sigma2 and the table
    reports the condition numbers of the covariance matrix, the measured
    relative noise on the quadratic form and the log-determinant (quadratic
    regression residuals on a short log-range transect), the NLL, and the
    normalized interpolation error.
    """
    rows = []
    center = float(np.log(params.rho[0]))
    half_width = 1e-5 * max(1.0, abs(center))
    for ratio in ratios:
        p = ParamVector(
            sigma2=params.sigma2,
            rho=params.rho,
            noise_var=float(ratio) * params.sigma2,
            mu=params.mu,
        )
        report = linalg.conditioning_report(covariance_matrix(spec, p, data.X))

        def with_rho1(t):
            rho = p.rho.copy()
            rho[0] = np.exp(t)
            return ParamVector(sigma2=p.sigma2, rho=rho, noise_var=p.noise_var, mu=p.mu)

        def quad_form(t):
            q = with_rho1(t)
            chol = linalg.cholesky_with_jitter(
                covariance_matrix(spec, q, data.X), q.sigma2
            )
            resid = data.z - q.mu
            return float(resid @ linalg.solve(chol, resid))

        def logdet(t):
            q = with_rho1(t)
            chol = linalg.cholesky_with_jitter(
                covariance_matrix(spec, q, data.X), q.sigma2
            )
            return linalg.log_det(chol)

        delta_quad = linalg.measure_numerical_noise(
            quad_form, center, half_width, num_points, transect="log_rho_1", quantity="quadratic_form"
        ).delta
        delta_logdet = linalg.measure_numerical_noise(
            logdet, center, half_width, num_points, transect="log_rho_1", quantity="log_det"
        ).delta
        model = fit_gp(spec, p, data)
        rows.append(
            {
                "ratio": float(ratio),
                "kappa": report.kappa,
                "kappa_logdet": report.kappa_logdet,
                "delta_quad": delta_quad,
                "delta_logdet": delta_logdet,
                "nll": nll(spec, p, data),
                "normalized_interp_error": normalized_interp_error(model),
            }
        )
    return rows


def loo_table(scheme, spec, data):
    """Leave-one-out refit records as emission-ready dicts."""
    rows = []
    for record in loo_refit(scheme, spec, data):
        ok = record.error is None
        rows.append(
            {
                "index": record.index,
                "status": "ok" if ok else "error",
                "nll": record.nll,
                "squared_error": record.squared_error,
                "params": params_to_json(record.params) if ok else "",
                "error": record.error or "",
            }
        )
    return rows


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows, path, columns):
    """Write dict rows as CSV: fixed column order, shortest-roundtrip floats,
    LF line endings.  Byte-stable given identical inputs."""
    import csv

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])


def emit_json(obj, path):
    """Write JSON with sorted keys and LF line endings."""
    with open(path, "w", newline="") as handle:
        json.dump(obj, handle, sort_keys=True, indent=2)
        handle.write("\n")


def rows_to_dicts(rows):
    return [
        {
            "scheme": r.scheme,
            "dataset": r.dataset,
            "repetition": r.repetition,
            "status": r.status,
            "nll": r.nll,
            "termination": r.termination,
            "n_nll_evals": r.n_nll_evals,
            "n_grad_evals": r.n_grad_evals,
            "params": r.params,
            "error": r.error,
            "wall_time": r.wall_time,
        }
        for r in rows
    ]


def write_result_tables(rows, out_dir):
    """Write results.csv (deterministic) and timings.csv (wall times)."""
    import os

    dicts = rows_to_dicts(rows)
    results = os.path.join(out_dir, "results.csv")
    timings = os.path.join(out_dir, "timings.csv")
    emit_csv(dicts, results, RESULT_COLUMNS)
    emit_csv(dicts, timings, TIMING_COLUMNS)
    return results, timings


def read_result_rows(path):
    """Read rows written by :func:`write_result_tables` (results.csv)."""
    import csv

    rows = []
    with open(path) as handle:
        for record in csv.DictReader(handle):
            rows.append(
                ResultRow(
                    scheme=record["scheme"],
                    dataset=record["dataset"],
                    repetition=int(record["repetition"]),
                    status=record["status"],
                    nll=float(record["nll"]),
                    termination=record["termination"],
                    n_nll_evals=int(record["n_nll_evals"]),
                    n_grad_evals=int(record["n_grad_evals"]),
                    params=record["params"],
                    error=record["error"],
                    wall_time=0.0,
                )
            )
    return rows


_SCHEME_KEYS = ("name", "preset", "init", "reparam", "stopping", "restart", "seed", "bounds")
_INIT_KEYS = ("kind", "noise_ratio", "grid_size", "scale_min", "scale_max")
_RESTART_KEYS = ("kind", "n_opt", "sigma_eta", "exhaust_budget")
_STOPPING_KEYS = ("maxiter", "factr", "pgtol")
_DATASET_KEYS = ("function", "n", "n_mult", "design", "seed")
_TOP_KEYS = ("seed", "repetitions", "datasets", "schemes", "reference", "nu")


def _check_keys(obj, allowed, context):
    if not isinstance(obj, dict):
        raise ConfigError(f"{context}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")


def _parse_stopping(value, context):
    if value is None:
        return SOFT
    if isinstance(value, str):
        if value == "soft":
            return SOFT
        if value == "strict":
            return STRICT
        raise ConfigError(f"{context}: unknown stopping preset {value!r}")
    _check_keys(value, _STOPPING_KEYS, context)
    base = {"maxiter": 1000, "factr": 1e7, "pgtol": 1e-5}
    base.update(value)
    return StoppingRule(maxiter=int(base["maxiter"]), factr=float(base["factr"]), pgtol=float(base["pgtol"]))


def _parse_init(value, context):
    if value is None:
        return InitStrategy.grid()
    _check_keys(value, _INIT_KEYS, context)
    kind = value.get("kind", "grid")
    if kind == "constant":
        return InitStrategy.constant()
    if kind == "moment":
        return InitStrategy.moment()
    if kind == "profiled":
        return InitStrategy.profiled(noise_ratio=float(value.get("noise_ratio", 0.0)))
    if kind == "grid":
        return InitStrategy.grid(
            grid_size=int(value.get("grid_size", 5)),
            scale_min=float(value.get("scale_min", 1.0 / 50.0)),
            scale_max=float(value.get("scale_max", 2.0)),
            noise_ratio=float(value.get("noise_ratio", 0.0)),
        )
    raise ConfigError(f"{context}: unknown init kind {kind!r}")


def _parse_restart(value, context):
    if value is None:
        return RestartPolicy.none()
    _check_keys(value, _RESTART_KEYS, context)
    kind = value.get("kind", "none")
    if kind == "none":
        return RestartPolicy.none()
    if kind == "restart":
        return RestartPolicy.restart(
            n_opt=int(value.get("n_opt", 5)), exhaust_budget=bool(value.get("exhaust_budget", False))
        )
    if kind == "multistart":
        return RestartPolicy.multistart(
            n_opt=int(value.get("n_opt", 20)),
            sigma_eta=float(value.get("sigma_eta", RestartPolicy.multistart(1).sigma_eta)),
        )
    raise ConfigError(f"{context}: unknown restart kind {kind!r}")


def _parse_scheme(obj, index):
    context = f"schemes[{index}]"
    _check_keys(obj, _SCHEME_KEYS, context)
    name = obj.get("name")
    if not name:
        raise ConfigError(f"{context}: missing scheme name")
    if "preset" in obj:
        preset = obj["preset"]
        if preset not in PRESETS:
            raise ConfigError(f"{context}: unknown preset {preset!r}; known: {sorted(PRESETS)}")
        scheme = PRESETS[preset](seed=int(obj.get("seed", 0)))
        for key in ("init", "reparam", "stopping", "restart", "bounds"):
            if key in obj:
                raise ConfigError(f"{context}: {key!r} cannot be combined with a preset")
        return name, scheme
    bounds = obj.get("bounds")
    if bounds is not None:
        bounds = tuple(
            (None if lo is None else float(lo), None if hi is None else float(hi)) for lo, hi in bounds
        )
    scheme = SchemeConfig(
        init=_parse_init(obj.get("init"), context),
        reparam=obj.get("reparam", "log"),
        stopping=_parse_stopping(obj.get("stopping"), context),
        restart=_parse_restart(obj.get("restart"), context),
        bounds=bounds,
        seed=int(obj.get("seed", 0)),
    )
    return name, scheme


def _parse_dataset(obj, index):
    context = f"datasets[{index}]"
    _check_keys(obj, _DATASET_KEYS, context)
    if "function" not in obj:
        raise ConfigError(f"{context}: missing 'function'")
    try:
        fn = testbed.get_function(obj["function"])
    except KeyError as exc:
        raise ConfigError(f"{context}: {exc}") from None
    if ("n" in obj) == ("n_mult" in obj):
        raise ConfigError(f"{context}: give exactly one of 'n' or 'n_mult'")
    n = int(obj["n"]) if "n" in obj else int(obj["n_mult"]) * fn.dim
    kind = obj.get("design", testbed.LHS_MDU)
    seed = int(obj.get("seed", 0))
    try:
        dataset = testbed.make_dataset(fn, testbed.DesignSpec(kind=kind, n=n, seed=seed))
    except (ValueError, GpError) as exc:
        raise ConfigError(f"{context}: {exc}") from None
    return f"{fn.name}-n{n}-s{seed}", dataset


def parse_config(cfg):
    """Build an ExperimentMatrix from a JSON config dict; unknown keys reject."""
    _check_keys(cfg, _TOP_KEYS, "config")
    if "datasets" not in cfg or not cfg["datasets"]:
        raise ConfigError("config: 'datasets' must be a non-empty list")
    if "schemes" not in cfg or not cfg["schemes"]:
        raise ConfigError("config: 'schemes' must be a non-empty list")
    datasets = [_parse_dataset(d, i) for i, d in enumerate(cfg["datasets"])]
    schemes = [_parse_scheme(s, i) for i, s in enumerate(cfg["schemes"])]
    if "reference" in cfg and cfg["reference"] is not None:
        reference = _parse_scheme(cfg["reference"], -1)
    else:
        reference = ("reference", reference_scheme())
    matrix = ExperimentMatrix(
        schemes=tuple(schemes),
        reference=reference,
        datasets=tuple(datasets),
        repetitions=int(cfg.get("repetitions", 1)),
        nu=float(cfg.get("nu", 2.5)),
    )
    return matrix, int(cfg.get("seed", 0))
