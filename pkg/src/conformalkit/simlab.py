"""Monte Carlo harness comparing conformal bounds and sets to baselines.

Replicate k of a run draws its data from a dedicated counter-based substream
keyed on (seed, k), so results are byte-identical however the replicate range
is partitioned. Within a replicate every method sees the same data, which
makes the excess-versus-oracle metric a paired comparison.

Continuous runs score one-sided upper bounds (coverage of a fresh draw and
mean exceedance over the population quantile); categorical runs score label
sets (coverage and mean size minus the randomized-oracle size).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtr, ndtri, stdtrit

from .categorical import LabelCounts, PopulationPMF
from .core import DomainError, InputError, LevelLike, ScoreBag, exact_level
from .engine import RandomizedSet
from . import _kernels
from .pac import regularized_incomplete_beta

__all__ = [
    "Normal",
    "StudentT",
    "MixtureComponent",
    "NormalMixture",
    "Multinomial",
    "GeneratorSpec",
    "ExperimentConfig",
    "MetricRow",
    "student_t_quantile",
    "population_quantile",
    "parametric_normal_bound",
    "plugin_bound",
    "dirichlet_bayes_predictive",
    "trivial_randomized_set",
    "substream_uniforms",
    "run_continuous_experiment",
    "run_categorical_experiment",
    "run_experiment",
    "config_from_dict",
    "config_to_dict",
]

_CONTINUOUS_METHODS = {
    "conformal",
    "oracle",
    "plugin",
    "parametric_normal",
    "trivial_randomized",
}
_CATEGORICAL_METHODS = {
    "conformal",
    "oracle",
    "plugin",
    "dirichlet_bayes",
    "trivial_randomized",
}

_MIXTURE_QUANTILE_TOL = 1e-10
_U_FLOOR = 1e-300  # random() can emit exactly 0, which inverse CDFs reject


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise DomainError("sigma must be positive and finite")


@dataclass(frozen=True)
class StudentT:
    nu: float

    def __post_init__(self) -> None:
        if not self.nu > 0 or not math.isfinite(self.nu):
            raise DomainError("nu must be positive and finite")


@dataclass(frozen=True)
class MixtureComponent:
    mu: float
    var: float
    weight: float

    def __post_init__(self) -> None:
        if not self.var > 0 or not math.isfinite(self.var):
            raise DomainError("component variance must be positive and finite")
        if not 0 < self.weight <= 1:
            raise DomainError("component weight must lie in (0, 1]")


@dataclass(frozen=True)
class NormalMixture:
    components: tuple[MixtureComponent, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if not comps:
            raise DomainError("mixture needs at least one component")
        total = math.fsum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"mixture weights sum to {total}, not 1")
        object.__setattr__(self, "components", comps)


@dataclass(frozen=True)
class Multinomial:
    pmf: PopulationPMF


GeneratorSpec = Union[Normal, StudentT, NormalMixture, Multinomial]


def _is_continuous(gen: GeneratorSpec) -> bool:
    return not isinstance(gen, Multinomial)


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorSpec
    n_grid: tuple[int, ...]
    alpha: float
    replicates: int
    seed: int
    methods: tuple[str, ...]

    def __post_init__(self) -> None:
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(n < 1 for n in grid):
            raise DomainError("n_grid must list positive sample sizes")
        object.__setattr__(self, "n_grid", grid)
        level = exact_level(self.alpha)
        if not 0 < level < 1:
            raise DomainError(f"alpha {self.alpha} outside (0, 1)")
        if int(self.replicates) < 1:
            raise DomainError("replicates must be >= 1")
        object.__setattr__(self, "replicates", int(self.replicates))
        if int(self.seed) < 0:
            raise DomainError("seed must be nonnegative")
        object.__setattr__(self, "seed", int(self.seed))
        methods = tuple(str(m) for m in self.methods)
        if not methods:
            raise DomainError("methods must be nonempty")
        allowed = (
            _CONTINUOUS_METHODS if _is_continuous(self.generator) else _CATEGORICAL_METHODS
        )
        for m in methods:
            if m not in allowed:
                kind = "continuous" if _is_continuous(self.generator) else "categorical"
                raise DomainError(f"method {m!r} not available for {kind} generators")
        if len(set(methods)) != len(methods):
            raise DomainError("duplicate method names")
        object.__setattr__(self, "methods", methods)


@dataclass(frozen=True)
class MetricRow:
    """One (method, n) cell: Monte Carlo coverage and excess with their
    standard errors. Excess is NaN where undefined (trivial set, continuous)."""

    method: str
    n: int
    coverage: float
    coverage_se: float
    excess: float
    excess_se: float


def student_t_quantile(p: LevelLike, df: float) -> float:
    """Quantile of Student's t via bisection on the incomplete-beta tail.

    For t >= 0 the CDF is 1 - I_x(df/2, 1/2)/2 with x = df/(df + t^2); the
    incomplete beta is the package's own continued-fraction kernel.
    """
    prob = float(exact_level(p))
    if not 0 < prob < 1:
        raise DomainError(f"quantile level {p} outside (0, 1)")
    if not df > 0 or not math.isfinite(df):
        raise DomainError("df must be positive and finite")
    if prob == 0.5:
        return 0.0
    if prob < 0.5:
        return -student_t_quantile(1.0 - prob, df)
    target = 2.0 * (1.0 - prob)  # I_x(df/2, 1/2) at the solution
    lo, hi = 0.0, 1.0  # I_x is increasing in x; solution in (0, 1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if regularized_incomplete_beta(mid, df / 2.0, 0.5) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    x = 0.5 * (lo + hi)
    return math.sqrt(df * (1.0 - x) / x)


def _mixture_cdf(gen: NormalMixture, y: float) -> float:
    return float(
        math.fsum(
            c.weight * ndtr((y - c.mu) / math.sqrt(c.var)) for c in gen.components
        )
    )


def population_quantile(gen: GeneratorSpec, tau: LevelLike) -> float:
    """Population quantile of a continuous generator; the mixture case is a
    bisection on its CDF to 1e-10."""
    prob = float(exact_level(tau))
    if not 0 < prob < 1:
        raise DomainError(f"quantile level {tau} outside (0, 1)")
    if isinstance(gen, Normal):
        return gen.mu + gen.sigma * float(ndtri(prob))
    if isinstance(gen, StudentT):
        return student_t_quantile(prob, gen.nu)
    if isinstance(gen, NormalMixture):
        lo, hi = -1.0, 1.0
        while _mixture_cdf(gen, lo) > prob:
            lo *= 2.0
        while _mixture_cdf(gen, hi) < prob:
            hi *= 2.0
        while hi - lo > _MIXTURE_QUANTILE_TOL:
            mid = 0.5 * (lo + hi)
            if _mixture_cdf(gen, mid) < prob:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    raise DomainError("population_quantile needs a continuous generator")


def parametric_normal_bound(y_values: ScoreBag, alpha: LevelLike) -> float:
    """Gaussian predictive upper bound: mean + t_{1-alpha, n-1} sd sqrt(1+1/n)."""
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    n = y_values.n
    if n < 2:
        raise DomainError("parametric bound needs n >= 2")
    mean = float(np.mean(y_values.values))
    sd = float(np.std(y_values.values, ddof=1))
    tq = student_t_quantile(1 - level, n - 1)
    return mean + tq * sd * math.sqrt(1.0 + 1.0 / n)


def plugin_bound(y_values: ScoreBag, alpha: LevelLike) -> float:
    """Uncorrected empirical quantile at 1 - alpha (no n+1 adjustment)."""
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    rank = math.ceil((1 - level) * y_values.n)
    return float(y_values.sorted_values[max(rank, 1) - 1])


def dirichlet_bayes_predictive(counts: LabelCounts) -> PopulationPMF:
    """Posterior predictive under a uniform Dirichlet prior: (1 + n_k)/(k + n)."""
    n = counts.n
    k = counts.k
    return PopulationPMF(tuple((1.0 + c) / (k + n) for c in counts.counts))


def trivial_randomized_set(u: float, alpha: LevelLike) -> RandomizedSet:
    """Full outcome space iff u <= 1 - alpha: valid coverage, useless sets."""
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    if not 0.0 <= float(u) <= 1.0:
        raise DomainError(f"uniform {u} outside [0, 1]")
    return RandomizedSet(full=float(u) <= 1.0 - float(level), alpha=float(level))


def substream_uniforms(seed: int, start: int, stop: int, count: int) -> np.ndarray:
    """Uniforms for replicates [start, stop): row j comes entirely from the
    Philox substream keyed on (seed, start + j)."""
    if stop < start or start < 0:
        raise DomainError("bad replicate range")
    out = np.empty((stop - start, count), dtype=np.float64)
    for j in range(stop - start):
        key = np.random.SeedSequence([seed, start + j]).generate_state(2, np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        out[j] = gen.random(count)
    return out


def _continuous_draws(
    gen: GeneratorSpec, seed: int, replicates: int, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """(replicates, n+1) outcomes plus one auxiliary uniform per replicate.

    Outcomes come from inverse CDFs applied to the substream uniforms; the
    mixture consumes a second block for component selection. The layout is
    fixed per generator kind so the method list never shifts the stream.
    """
    if isinstance(gen, NormalMixture):
        cols = 2 * (n + 1) + 1
    else:
        cols = (n + 1) + 1
    u = substream_uniforms(seed, 0, replicates, cols)
    aux = u[:, -1].copy()
    if isinstance(gen, Normal):
        body = np.maximum(u[:, : n + 1], _U_FLOOR)
        return gen.mu + gen.sigma * ndtri(body), aux
    if isinstance(gen, StudentT):
        body = np.maximum(u[:, : n + 1], _U_FLOOR)
        return stdtrit(gen.nu, body), aux
    if isinstance(gen, NormalMixture):
        weights = np.array([c.weight for c in gen.components])
        mus = np.array([c.mu for c in gen.components])
        sds = np.sqrt(np.array([c.var for c in gen.components]))
        cum = np.cumsum(weights)
        pick = np.minimum(
            np.searchsorted(cum, u[:, : n + 1], side="right"), weights.size - 1
        )
        z = ndtri(np.maximum(u[:, n + 1 : 2 * (n + 1)], _U_FLOOR))
        return mus[pick] + sds[pick] * z, aux
    raise DomainError("continuous draws need a continuous generator")


def _se_of_mean(values: np.ndarray) -> float:
    if values.size < 2 or not np.all(np.isfinite(values)):
        return math.nan
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def _coverage_row(method: str, n: int, covered: np.ndarray, excess: np.ndarray) -> MetricRow:
    cov = float(np.mean(covered))
    cov_se = math.sqrt(cov * (1.0 - cov) / covered.size)
    if excess.size and np.all(np.isnan(excess)):
        exc, exc_se = math.nan, math.nan
    else:
        exc = float(np.mean(excess))
        exc_se = _se_of_mean(excess)
    return MetricRow(
        method=method, n=n, coverage=cov, coverage_se=cov_se, excess=exc, excess_se=exc_se
    )


def run_continuous_experiment(config: ExperimentConfig) -> list[MetricRow]:
    """Monte Carlo comparison of one-sided upper bounds for a continuous
    generator; see the module docstring for metric definitions."""
    gen = config.generator
    if not _is_continuous(gen):
        raise DomainError("run_continuous_experiment needs a continuous generator")
    level = exact_level(config.alpha)
    alpha_f = float(level)
    reps = config.replicates
    rows: list[MetricRow] = []
    for n in config.n_grid:
        if "parametric_normal" in config.methods and n < 2:
            raise DomainError("parametric_normal needs n >= 2")
        draws, aux_u = _continuous_draws(gen, config.seed, reps, n)
        cal = draws[:, :n]
        y_new = draws[:, n]
        oracle_q = population_quantile(gen, 1 - level)

        conf_rank = math.ceil((1 - level) * (n + 1))
        plug_rank = max(math.ceil((1 - level) * n), 1)
        wanted = [plug_rank] + ([conf_rank] if conf_rank <= n else [])
        stats = _kernels.row_order_stats(cal, np.array(wanted, dtype=np.int64))

        bounds: dict[str, np.ndarray] = {}
        if "conformal" in config.methods:
            if conf_rank <= n:
                bounds["conformal"] = stats[:, 1]
            else:
                bounds["conformal"] = np.full(reps, math.inf)
        if "plugin" in config.methods:
            bounds["plugin"] = stats[:, 0]
        if "parametric_normal" in config.methods:
            tq = student_t_quantile(1 - level, n - 1)
            mean = cal.mean(axis=1)
            sd = cal.std(axis=1, ddof=1)
            bounds["parametric_normal"] = mean + tq * sd * math.sqrt(1.0 + 1.0 / n)
        if "oracle" in config.methods:
            bounds["oracle"] = np.full(reps, oracle_q)

        for method in config.methods:
            if method == "trivial_randomized":
                covered = aux_u <= 1.0 - alpha_f
                excess = np.full(reps, math.nan)
            else:
                bound = bounds[method]
                covered = y_new <= bound
                excess = bound - oracle_q
            rows.append(_coverage_row(method, n, covered, excess))
    return rows


def _randomized_rule_members(
    est: np.ndarray, u_test: np.ndarray, alpha_f: float
) -> np.ndarray:
    """Vectorized randomized oracle construction: keep label y iff the
    estimated mass strictly after y (descending order, ties by label index)
    plus est_y * u exceeds alpha."""
    order = np.argsort(-est, axis=1, kind="stable")
    sorted_est = np.take_along_axis(est, order, axis=1)
    suffix = np.cumsum(sorted_est[:, ::-1], axis=1)[:, ::-1]
    tail_after = np.concatenate(
        [suffix[:, 1:], np.zeros((est.shape[0], 1))], axis=1
    )
    keep_sorted = tail_after + sorted_est * u_test[:, None] > alpha_f
    members = np.empty_like(keep_sorted)
    np.put_along_axis(members, order, keep_sorted, axis=1)
    return members


def run_categorical_experiment(config: ExperimentConfig) -> list[MetricRow]:
    """Monte Carlo comparison of label prediction sets for multinomial data.

    The conformal set inverts the closed-form p-values; oracle, plug-in, and
    Dirichlet-Bayes all apply the randomized oracle construction to their
    respective pmfs (true, maximum likelihood, posterior predictive), sharing
    the test point's uniform. Excess is measured against the randomized
    oracle's set size.
    """
    gen = config.generator
    if _is_continuous(gen):
        raise DomainError("run_categorical_experiment needs a multinomial generator")
    level = exact_level(config.alpha)
    alpha_f = float(level)
    reps = config.replicates
    probs = np.asarray(gen.pmf.probabilities)
    k = probs.size
    cum = np.cumsum(probs)
    rows: list[MetricRow] = []
    rep_idx = np.arange(reps)
    for n in config.n_grid:
        u = substream_uniforms(config.seed, 0, reps, 2 * (n + 1))
        labels = np.minimum(
            np.searchsorted(cum, u[:, : n + 1], side="right"), k - 1
        ).astype(np.int64)
        tie_u = u[:, n + 1 :]
        u_test = tie_u[:, n]
        y_new = labels[:, n]
        cal_labels = labels[:, :n]

        member: dict[str, np.ndarray] = {}
        numerators = _kernels.categorical_numerators(
            cal_labels, tie_u[:, :n], u_test, k
        )
        cutoff = math.floor(level * (n + 1)) + 1  # smallest integer > alpha(n+1)
        member["conformal"] = numerators >= cutoff
        member["oracle"] = _randomized_rule_members(
            np.broadcast_to(probs, (reps, k)), u_test, alpha_f
        )
        if "plugin" in config.methods or "dirichlet_bayes" in config.methods:
            counts = (cal_labels[:, :, None] == np.arange(k)).sum(axis=1)
            if "plugin" in config.methods:
                member["plugin"] = _randomized_rule_members(
                    counts / n, u_test, alpha_f
                )
            if "dirichlet_bayes" in config.methods:
                member["dirichlet_bayes"] = _randomized_rule_members(
                    (1.0 + counts) / (k + n), u_test, alpha_f
                )
        oracle_size = member["oracle"].sum(axis=1)

        for method in config.methods:
            if method == "trivial_randomized":
                full = u_test <= 1.0 - alpha_f
                covered = full
                sizes = np.where(full, k, 0)
            else:
                keep = member[method]
                covered = keep[rep_idx, y_new]
                sizes = keep.sum(axis=1)
            excess = (sizes - oracle_size).astype(np.float64)
            rows.append(_coverage_row(method, n, covered, excess))
    return rows


def run_experiment(config: ExperimentConfig) -> list[MetricRow]:
    if _is_continuous(config.generator):
        return run_continuous_experiment(config)
    return run_categorical_experiment(config)


def _generator_from_dict(spec: dict) -> GeneratorSpec:
    kind = spec.get("kind")
    try:
        if kind == "normal":
            return Normal(mu=float(spec["mu"]), sigma=float(spec["sigma"]))
        if kind == "student_t":
            return StudentT(nu=float(spec["nu"]))
        if kind == "normal_mixture":
            comps = tuple(
                MixtureComponent(
                    mu=float(c["mu"]), var=float(c["var"]), weight=float(c["weight"])
                )
                for c in spec["components"]
            )
            return NormalMixture(components=comps)
        if kind == "multinomial":
            return Multinomial(pmf=PopulationPMF(tuple(float(p) for p in spec["pmf"])))
    except KeyError as exc:
        raise InputError(f"generator spec missing field {exc}") from exc
    raise InputError(f"unknown generator kind {kind!r}")


def _generator_to_dict(gen: GeneratorSpec) -> dict:
    if isinstance(gen, Normal):
        return {"kind": "normal", "mu": gen.mu, "sigma": gen.sigma}
    if isinstance(gen, StudentT):
        return {"kind": "student_t", "nu": gen.nu}
    if isinstance(gen, NormalMixture):
        return {
            "kind": "normal_mixture",
            "components": [
                {"mu": c.mu, "var": c.var, "weight": c.weight} for c in gen.components
            ],
        }
    return {"kind": "multinomial", "pmf": list(gen.pmf.probabilities)}


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            generator=_generator_from_dict(data["generator"]),
            n_grid=tuple(int(n) for n in data["n_grid"]),
            alpha=float(data["alpha"]),
            replicates=int(data["replicates"]),
            seed=int(data["seed"]),
            methods=tuple(str(m) for m in data["methods"]),
        )
    except KeyError as exc:
        raise InputError(f"experiment config missing field {exc}") from exc
    except (TypeError, ValueError, DomainError) as exc:
        raise InputError(f"bad experiment config: {exc}") from exc


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "generator": _generator_to_dict(config.generator),
        "n_grid": list(config.n_grid),
        "alpha": config.alpha,
        "replicates": config.replicates,
        "seed": config.seed,
        "methods": list(config.methods),
    }
