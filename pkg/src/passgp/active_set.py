"""Active-set training: alternate hyperparameter optimization, EP fits
and predictive-probability-driven set updates.

Two update rules are provided. Threshold mode ("pass") adds inactive
points whose predictive probability falls below p_inc and drops active
points whose cavity predictive probability exceeds p_del, letting the
data decide the final set size. Fixed-budget mode ("fpass") swaps the
most confidently classified active points against the least confident
candidates, keeping the set size constant. A random-selection baseline
and a plain full-data mode round out the options.

Each outer pass re-partitions the data into subsets; within a subset
iteration the removal and inclusion rules are both evaluated against the
currently fitted state, applied together, and EP is refit once at the
next iteration.
"""

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import hyperopt
from .ep import EPConfig, cavity_predictive_all, ep_fit, predictive_prob
from .errors import ConfigError
from .kernels import kernel_diag, kernel_matrix

logger = logging.getLogger(__name__)


class Mode(enum.Enum):
    PASS = "pass"
    FPASS = "fpass"
    RANDOM = "random"
    FULL = "full"


@dataclass
class PassConfig:
    """Active-set selection parameters.

    n_init is the initial active-set size; in fpass mode it must equal
    m_budget (the set size never changes). hyperopt_every=k optimizes the
    hyperparameters on every k-th subset iteration only, which pays off
    on large data.
    """

    n_init: int
    n_sub: int = 10
    n_pass: int = 2
    mode: Mode = Mode.PASS
    p_inc: float = 0.6
    p_del: float = 0.99
    m_budget: int = 0
    p_exc: float = 0.02
    hyperopt_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)
        if self.n_sub < 1 or self.n_pass < 1:
            raise ConfigError("n_sub and n_pass must be >= 1")
        if self.hyperopt_every < 1:
            raise ConfigError("hyperopt_every must be >= 1")
        if self.mode is Mode.PASS:
            if not 0.0 < self.p_inc <= 1.0:
                raise ConfigError("p_inc must be in (0, 1]")
            if not 0.0 < self.p_del < 1.0:
                raise ConfigError("p_del must be in (0, 1)")
            if self.p_del <= self.p_inc:
                raise ConfigError("p_del must exceed p_inc (close to one)")
            if self.n_init < 1:
                raise ConfigError("n_init must be >= 1")
        if self.mode is Mode.FPASS:
            if self.m_budget < 1:
                raise ConfigError("fpass mode needs m_budget >= 1")
            if not 0.0 < self.p_exc < 1.0:
                raise ConfigError("p_exc must be in (0, 1)")
            if math.ceil(self.p_exc * self.m_budget) < 1:
                raise ConfigError("p_exc * m_budget must round up to >= 1")
            if self.n_init != self.m_budget:
                raise ConfigError("fpass mode requires n_init == m_budget")
        if self.mode is Mode.RANDOM and self.m_budget < 1:
            raise ConfigError("random mode needs m_budget >= 1")

    @property
    def min_active(self):
        """Removal floor: the rule never shrinks the set below this."""
        return max(2, self.n_init // 10)


@dataclass
class IterationRecord:
    pass_idx: int
    subset_idx: int
    active_size: int
    n_add: int
    n_del: int
    log_z_ep_a: float
    log_theta: tuple
    added: np.ndarray
    removed: np.ndarray
    added_probs: np.ndarray
    removed_probs: np.ndarray


@dataclass
class ActiveSetModel:
    """A fitted classifier restricted to its active subset."""

    active_idx: np.ndarray
    ep_state: object
    kernel: object
    config: PassConfig
    history: list = field(default_factory=list)
    X_active: np.ndarray = None
    y_active: np.ndarray = None
    target_class: int | None = None

    @property
    def active_size(self):
        return len(self.active_idx)


def split_subsets(n, n_sub, seed):
    """Disjoint near-equal index subsets covering range(n), seeded shuffle."""
    if not 1 <= n_sub <= n:
        raise ValueError(f"need 1 <= n_sub <= n, got n_sub={n_sub}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.asarray(part, dtype=np.int64) for part in np.array_split(perm, n_sub)]


def removal_rule(state, y_A, p_del, min_active=2):
    """Local indices whose cavity predictive probability exceeds p_del.

    Capped so the active set keeps at least min_active members; when the
    cap binds, the most confident candidates are removed first.
    """
    probs = cavity_predictive_all(state, y_A)
    cand = np.nonzero(probs > p_del)[0]
    allowed = max(0, state.n - min_active)
    if len(cand) > allowed:
        order = np.lexsort((cand, -probs[cand]))
        cand = cand[order[:allowed]]
    return np.sort(cand)


def inclusion_rule(model, X, y, subset, p_inc):
    """Subset indices predicted with probability below p_inc (non-active only).

    Probabilities are strictly below one mathematically but can round to
    1.0, so the p_inc = 1 boundary admits every candidate explicitly.
    """
    cand = _inactive_candidates(model, subset)
    if cand.size == 0 or p_inc >= 1.0:
        return cand
    probs = _predictive_probs(model, X, y, cand)
    return cand[probs < p_inc]


def fpass_exchange(model, X, y, subset, p_exc):
    """Fixed-budget swap: equally many deletions and additions.

    Deletes the active points with the highest cavity predictive
    probability and adds the subset points with the lowest predictive
    probability. The exchange count is ceil(p_exc * budget), shrunk when
    the subset offers fewer candidates. Ties break on ascending index.
    """
    m_budget = model.config.m_budget
    if model.active_size != m_budget:
        raise ValueError(
            f"active set size {model.active_size} != budget {m_budget}"
        )
    cand = _inactive_candidates(model, subset)
    n_exc = min(math.ceil(p_exc * m_budget), cand.size, model.active_size)
    if n_exc < math.ceil(p_exc * m_budget):
        logger.info(
            "exchange shrunk to %d (subset offers %d candidates)", n_exc, cand.size
        )
    if n_exc == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty

    cav = cavity_predictive_all(model.ep_state, model.y_active)
    del_order = np.lexsort((model.active_idx, -cav))
    delete = np.sort(model.active_idx[del_order[:n_exc]])

    probs = _predictive_probs(model, X, y, cand)
    add_order = np.lexsort((cand, probs))
    add = np.sort(cand[add_order[:n_exc]])
    return delete, add


def _inactive_candidates(model, subset):
    subset = np.asarray(subset, dtype=np.int64)
    mask = ~np.isin(subset, model.active_idx)
    return np.sort(subset[mask])


def _predictive_probs(model, X, y, cand):
    """Probability of each candidate's own label under the current model."""
    K_star = kernel_matrix(model.kernel, X[cand], model.X_active)
    k_ss = kernel_diag(model.kernel, X[cand], training=True)
    return predictive_prob(model.ep_state, K_star, k_ss, y[cand])


def _stratified_init(y, size, rng):
    """Uniform draw forced to contain at least one point of each class."""
    n = len(y)
    draw = rng.choice(n, size=size, replace=False)
    classes = np.unique(y)
    present = np.unique(y[draw])
    for cls in classes:
        if cls not in present:
            pool = np.nonzero(y == cls)[0]
            draw[rng.integers(size)] = pool[rng.integers(len(pool))]
    return np.sort(draw)


def _pass_seed(seed, pass_idx):
    # deterministic per-pass re-partition stream
    return seed + 100003 * (pass_idx + 1)


def fit(X, y, kernel0, config, opt=None, ep_config=None, fixed_theta=False):
    """Run the full alternating selection loop and return the model.

    fixed_theta skips all hyperparameter optimization (used when reusing
    hyperparameters found on other data, e.g. augmented retraining).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n = len(y)
    if X.ndim != 2 or X.shape[0] != n:
        raise ValueError("X must be (n, d) matching y")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    if config.mode in (Mode.PASS, Mode.FPASS) and config.n_init > n:
        raise ConfigError(f"n_init={config.n_init} exceeds dataset size {n}")
    if config.mode in (Mode.FPASS, Mode.RANDOM) and config.m_budget > n:
        raise ConfigError(f"m_budget={config.m_budget} exceeds dataset size {n}")
    opt = opt if opt is not None else hyperopt.OptimizerConfig()
    ep_config = ep_config if ep_config is not None else EPConfig()

    rng = np.random.default_rng(config.seed)
    if config.mode is Mode.FULL:
        active = np.arange(n, dtype=np.int64)
    elif config.mode is Mode.RANDOM:
        active = np.sort(rng.choice(n, size=config.m_budget, replace=False))
        while len(np.unique(y[active])) < 2:
            active = np.sort(rng.choice(n, size=config.m_budget, replace=False))
    else:
        active = _stratified_init(y, config.n_init, rng)

    model = ActiveSetModel(
        active_idx=active,
        ep_state=None,
        kernel=kernel0,
        config=config,
        history=[],
        X_active=X[active],
        y_active=y[active],
    )

    if config.mode in (Mode.RANDOM, Mode.FULL):
        _refit(model, opt, ep_config, do_hyperopt=not fixed_theta, kernel0=kernel0)
        model.history.append(
            IterationRecord(
                pass_idx=0,
                subset_idx=0,
                active_size=model.active_size,
                n_add=0,
                n_del=0,
                log_z_ep_a=model.ep_state.log_z_ep,
                log_theta=model.kernel.log_theta,
                added=np.empty(0, dtype=np.int64),
                removed=np.empty(0, dtype=np.int64),
                added_probs=np.empty(0),
                removed_probs=np.empty(0),
            )
        )
        return model

    it = 0
    for pass_idx in range(config.n_pass):
        subsets = split_subsets(n, config.n_sub, _pass_seed(config.seed, pass_idx))
        for subset_idx, subset in enumerate(subsets):
            do_hyperopt = (not fixed_theta) and it % config.hyperopt_every == 0
            _refit(model, opt, ep_config, do_hyperopt=do_hyperopt, kernel0=kernel0)
            state = model.ep_state

            if config.mode is Mode.PASS:
                del_local = removal_rule(state, model.y_active, config.p_del,
                                         config.min_active)
                removed = model.active_idx[del_local]
                removed_probs = cavity_predictive_all(state, model.y_active)[del_local]
                cand = _inactive_candidates(model, subset)
                if cand.size:
                    cand_probs = _predictive_probs(model, X, y, cand)
                    # strictly-below-one probabilities can round to 1.0, so
                    # the p_inc = 1 boundary takes every candidate
                    picked = (cand_probs < config.p_inc) if config.p_inc < 1.0 \
                        else np.ones(cand.size, dtype=bool)
                    added = cand[picked]
                    added_probs = cand_probs[picked]
                else:
                    added = cand
                    added_probs = np.empty(0)
            else:
                removed, added = fpass_exchange(model, X, y, subset, config.p_exc)
                cav = cavity_predictive_all(state, model.y_active)
                removed_probs = cav[np.searchsorted(model.active_idx, removed)]
                added_probs = (
                    _predictive_probs(model, X, y, added) if added.size else np.empty(0)
                )

            new_active = np.setdiff1d(model.active_idx, removed, assume_unique=True)
            new_active = np.union1d(new_active, added)
            # keep both classes represented: resurrect the least confident
            # removal of a class the update would otherwise wipe out (and in
            # fpass mode drop the least informative addition to hold the budget)
            if len(np.unique(y[new_active])) < 2 and removed.size:
                for cls in np.unique(y):
                    if cls in y[new_active]:
                        continue
                    of_cls_mask = y[removed] == cls
                    if not np.any(of_cls_mask):
                        continue
                    keep = removed[of_cls_mask][np.argmin(removed_probs[of_cls_mask])]
                    new_active = np.union1d(new_active, [keep])
                    drop_mask = removed != keep
                    removed, removed_probs = removed[drop_mask], removed_probs[drop_mask]
                    logger.warning(
                        "kept point %d to preserve class %s in the active set",
                        keep, cls,
                    )
                    if config.mode is Mode.FPASS and added.size:
                        drop = added[np.argmax(added_probs)]
                        new_active = np.setdiff1d(new_active, [drop])
                        add_mask = added != drop
                        added, added_probs = added[add_mask], added_probs[add_mask]

            model.active_idx = new_active.astype(np.int64)
            model.X_active = X[model.active_idx]
            model.y_active = y[model.active_idx]
            model.history.append(
                IterationRecord(
                    pass_idx=pass_idx,
                    subset_idx=subset_idx,
                    active_size=model.active_size,
                    n_add=len(added),
                    n_del=len(removed),
                    log_z_ep_a=state.log_z_ep,
                    log_theta=model.kernel.log_theta,
                    added=added,
                    removed=removed,
                    added_probs=added_probs,
                    removed_probs=removed_probs,
                )
            )
            it += 1

    # the loop's last update left the state one step behind the set
    _refit(model, opt, ep_config, do_hyperopt=False)
    return model


def _refit(model, opt, ep_config, do_hyperopt, kernel0=None):
    if do_hyperopt:
        if len(np.unique(model.y_active)) < 2:
            logger.warning("active set is single-class; skipping hyperopt")
        else:
            start = model.kernel if opt.warm_start or kernel0 is None else kernel0
            model.kernel = hyperopt.optimize(
                model.X_active, model.y_active, start, opt, ep_config
            )
    K_A = kernel_matrix(model.kernel, model.X_active, symmetric=True)
    model.ep_state = ep_fit(K_A, model.y_active, ep_config)


def history_tsv(history):
    """One tab-separated record per subset iteration, with header."""
    lines = ["pass\tsubset\tactive_size\tn_add\tn_del\tlog_z_ep_a\tlog_theta"]
    for rec in history:
        theta = ",".join(repr(v) for v in rec.log_theta)
        lines.append(
            f"{rec.pass_idx}\t{rec.subset_idx}\t{rec.active_size}\t"
            f"{rec.n_add}\t{rec.n_del}\t{rec.log_z_ep_a!r}\t{theta}"
        )
    return "\n".join(lines) + "\n"
