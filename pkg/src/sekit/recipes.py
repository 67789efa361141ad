"""Named presets of the unified objective reproducing classical algorithms,
plus the equivalence-check harness that compares each preset against an
independent oracle implementation.

Each recipe is a frozen configuration template; `run_recipe` instantiates it
against a problem bundle, and `check_equivalence` compares the result to the
named oracle under that pair's comparison contract.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from . import oracles
from .adversarial import (Discriminator, adversarial_run,
                          reweighted_discriminator_gradient,
                          discriminator_gradient, tilted_q)
from .bundles import ProblemBundle
from .core import Dist, Domain, normalize_log
from .divergence import CE, JS, KL, DivergenceFn, divergence
from .experience import (Dataset, ExperienceFn, combine, f_active, f_data,
                         f_data_augmented, f_data_self, f_data_weighted,
                         f_model_mimic, f_rule, raml_kernel,
                         selection_distribution)
from .mdp import exact_policy_gradient, f_reward, q_function, visitation
from .models import (ConditionalSoftmaxModel, MixtureModel, SoftmaxModel,
                     grad_expected_log_prob)
from .solver import (DEFAULT_EPSILON, SEConfig, Segment, Trace, mw_update,
                     run, schedule, teacher_closed_form)


class NotFound(KeyError):
    pass


class IncompatiblePair(ValueError):
    pass


@dataclass(frozen=True)
class Recipe:
    """A named point in the algorithm space.

    requires lists the bundle fields the recipe validates before running;
    contract is the comparison mode its default oracle uses.
    """

    name: str
    description: str
    requires: Tuple[str, ...]
    config: SEConfig
    default_oracle: str
    contract: str  # fixed-point | per-iteration | gradient-direction | trajectory | adversarial | smoke


_BASE = SEConfig()


def registry() -> List[Recipe]:
    """All built-in recipes; names are the CLI vocabulary."""
    eps = DEFAULT_EPSILON
    return [
        Recipe("supervised-mle",
               "Cross-entropy fit to labeled data: alpha=1, beta=epsilon, "
               "f = log empirical frequency; fixed point is the empirical "
               "distribution.",
               ("dataset",), SEConfig(alpha=1.0, beta=eps),
               "direct-mle", "fixed-point"),
        Recipe("self-supervised-mle",
               "Supervised fit on (x, y) pairs carved out of raw observations "
               "by a deterministic split.",
               ("dataset", "product_domain"), SEConfig(alpha=1.0, beta=eps),
               "direct-mle", "fixed-point"),
        Recipe("unsupervised-mle",
               "Latent-variable likelihood via the q(x,y) = data(x) q(y|x) "
               "decomposition at alpha=beta=1: exactly EM.",
               ("dataset",), SEConfig(alpha=1.0, beta=1.0,
                                      q_decomposition="fixed_x_marginal"),
               "hand-em", "per-iteration"),
        Recipe("data-reweighting",
               "Instance-weighted MLE: f = log(weighted empirical frequency).",
               ("dataset",), SEConfig(alpha=1.0, beta=eps),
               "weighted-mle", "fixed-point"),
        Recipe("data-augmentation",
               "Payoff-kernel-smoothed MLE; with kernel exp{R} the teacher is "
               "the exponentiated-payoff distribution.",
               ("dataset", "payoff"), SEConfig(alpha=1.0, beta=eps),
               "enumeration", "fixed-point"),
        Recipe("active-learning",
               "Oracle-labeled pool experience with an uncertainty bonus "
               "lambda u(x); selection follows empirical(x) exp(lambda u).",
               ("pool", "oracle_labels", "utility"),
               SEConfig(alpha=1.0, beta=eps),
               "enumeration", "fixed-point"),
        Recipe("posterior-regularization",
               "Rule-constrained posterior at alpha=beta=1: "
               "q(y|x) tilts the model posterior by exp(lambda rule).",
               ("dataset", "rule"),
               SEConfig(alpha=1.0, beta=1.0, q_decomposition="fixed_x_marginal"),
               "enumeration", "per-iteration"),
        Recipe("unified-em",
               "EM with a free entropy weight alpha; alpha=1 is classical EM, "
               "other alphas anneal the posterior.",
               ("dataset",), SEConfig(alpha=1.0, beta=1.0,
                                      q_decomposition="fixed_x_marginal"),
               "hand-em", "smoke"),
        Recipe("policy-gradient",
               "f = log Q at alpha=beta=1: the student gradient is the exact "
               "policy gradient scaled by 1/Z.",
               ("mdp",), SEConfig(alpha=1.0, beta=1.0),
               "exact-pg", "gradient-direction"),
        Recipe("intrinsic-reward",
               "f = log(Q_extrinsic + Q_intrinsic): reward shaping inside the "
               "same teacher.",
               ("mdp",), SEConfig(alpha=1.0, beta=1.0),
               "enumeration", "per-iteration"),
        Recipe("rl-as-inference",
               "f = Q at alpha=beta=rho: the teacher is the exponentiated-Q "
               "posterior p exp(Q/rho)/Z.",
               ("mdp",), SEConfig(alpha=1.0, beta=1.0),
               "enumeration", "per-iteration"),
        Recipe("knowledge-distillation",
               "f scores (x, y) by a frozen source model's log-likelihood on "
               "observed inputs; the student mimics the source.",
               ("dataset", "source_model"), SEConfig(alpha=1.0, beta=eps),
               "enumeration", "fixed-point"),
        Recipe("vanilla-gan",
               "alpha=0, beta=1, JS divergence, classifier discriminator.",
               ("p_data",), SEConfig(alpha=0.0, beta=1.0),
               "gan-optimum", "adversarial"),
        Recipe("wgan",
               "alpha=0, beta=1, Wasserstein-1 with a Lipschitz critic.",
               ("p_data",), SEConfig(alpha=0.0, beta=1.0),
               "brute-w1", "adversarial"),
        Recipe("ppo-gan",
               "alpha=0+, beta=1, KL; importance-reweighted discriminator and "
               "an exact tilt step for the model.",
               ("p_data",), SEConfig(alpha=0.0, beta=1.0),
               "reweighted-identity", "fixed-point"),
        Recipe("multiplicative-weights",
               "Online expert weighting p <- p exp(reward/alpha)/Z; identical "
               "to Hedge.",
               ("rewards",), SEConfig(alpha=1.0, beta=1.0),
               "hedge", "trajectory"),
        Recipe("interpolation-schedule",
               "Anneal from data experience (beta=epsilon) through payoff "
               "augmentation to pure reward (beta=1).",
               ("dataset", "payoff"), SEConfig(alpha=1.0, beta=eps),
               "none", "smoke"),
    ]


_REGISTRY: Dict[str, Recipe] = {}


def get_recipe(name: str) -> Recipe:
    global _REGISTRY
    if not _REGISTRY:
        _REGISTRY = {r.name: r for r in registry()}
    try:
        return _REGISTRY[name]
    except KeyError:
        raise NotFound(f"no recipe named {name!r}") from None


# ---------------------------------------------------------------------------
# Recipe runners
# ---------------------------------------------------------------------------

@dataclass
class RecipeResult:
    model: object
    trace: Trace
    final_dist: Optional[Dist] = None
    extras: Optional[dict] = None


def _mle_like(config: SEConfig, fn: ExperienceFn, seed: int,
              reference: Optional[Dist] = None, iters: int = 25) -> RecipeResult:
    from dataclasses import replace
    config = replace(config, experience=fn, seed=seed, max_iters=iters)
    model = SoftmaxModel.zeros(fn.domain)
    model, trace = run(config, model, fn.domain, reference=reference)
    return RecipeResult(model, trace, model.dist())


def _run_supervised(bundle: ProblemBundle, seed: int, **params) -> RecipeResult:
    bundle.require("dataset")
    rec = get_recipe("supervised-mle")
    ref = Dist.from_probs(bundle.dataset.empirical())
    return _mle_like(rec.config, f_data(bundle.dataset), seed, reference=ref)


def _default_split(domain: Domain) -> Callable[[int], Tuple[int, int]]:
    return domain.unpair


def _run_self_supervised(bundle: ProblemBundle, seed: int, **params) -> RecipeResult:
    bundle.require("dataset", "product_domain")
    rec = get_recipe("self-supervised-mle")
    fn = f_data_self(bundle.dataset, _default_split(bundle.product_domain),
                     bundle.product_domain)
    return _mle_like(rec.config, fn, seed)


def _run_unsupervised(bundle: ProblemBundle, seed: int, iters: int = 20,
                      alpha: float = 1.0, init_mix=None, init_comp=None,
                      **params) -> RecipeResult:
    """EM as teacher-student: dataset over X, K-component mixture model."""
    from dataclasses import replace
    bundle.require("dataset")
    k = bundle.n_components
    nx = bundle.dataset.domain.size
    prod = Domain.product(bundle.dataset.domain.labels,
                          tuple(f"k{j}" for j in range(k)))
    p_x = bundle.dataset.empirical()
    # f(x, y) = log empirical(x), constant in the latent coordinate
    f_vec = np.repeat(np.where(p_x > 0, np.log(np.where(p_x > 0, p_x, 1.0)), -np.inf), k)
    fn = ExperienceFn.from_vector(prod, f_vec, name="data-unsup")
    rec = get_recipe("unsupervised-mle")
    config = replace(rec.config, alpha=alpha, experience=fn, seed=seed,
                     max_iters=iters, objective_tol=0.0)
    rng = np.random.default_rng(seed)
    mix = np.log(rng.dirichlet(np.ones(k))) if init_mix is None else np.asarray(init_mix, dtype=float)
    comp = (np.log(rng.dirichlet(np.ones(nx), size=k)) if init_comp is None
            else np.asarray(init_comp, dtype=float))
    model = MixtureModel(mix, comp, prod)
    history = []

    def record(n, q, m):
        history.append((q, m))

    model, trace = run(config, model, prod, p_x=p_x, callback=record)
    return RecipeResult(model, trace, extras={"history": history, "p_x": p_x})


def _run_reweighting(bundle: ProblemBundle, seed: int, **params) -> RecipeResult:
    bundle.require("dataset")
    rec = get_recipe("data-reweighting")
    return _mle_like(rec.config, f_data_weighted(bundle.dataset), seed)


def _run_augmentation(bundle: ProblemBundle, seed: int, **params) -> RecipeResult:
    bundle.require("dataset", "payoff")
    rec = get_recipe("data-augmentation")
    kernel = raml_kernel(bundle.payoff)
    fn = f_data_augmented(bundle.dataset, kernel)
    result = _mle_like(rec.config, fn, seed)
    # first teacher from a uniform model: the model term is constant, so this
    # is the pure exponentiated-payoff mixture
    uniform = SoftmaxModel.zeros(fn.domain)
    q0 = teacher_closed_form(uniform.dist(), fn.values(), 1.0, DEFAULT_EPSILON)
    result.extras = {"first_teacher": q0, "kernel": kernel}
    return result


def _run_active(bundle: ProblemBundle, seed: int, n_labels: Optional[int] = None,
                **params) -> RecipeResult:
    bundle.require("pool", "oracle_labels", "utility")
    labels = bundle.oracle_labels
    ny = n_labels if n_labels is not None else int(labels.max()) + 1
    prod = Domain.product(bundle.pool.domain.labels,
                          tuple(f"y{j}" for j in range(ny)))
    fn = f_active(bundle.pool, lambda x: int(labels[x]), bundle.utility,
                  bundle.select_lambda, prod)
    rec = get_recipe("active-learning")
    result = _mle_like(rec.config, fn, seed)
    result.extras = {
        "selection": selection_distribution(bundle.pool, bundle.utility,
                                            bundle.select_lambda),
        "product_domain": prod,
    }
    return result


def _run_posterior_reg(bundle: ProblemBundle, seed: int, iters: int = 10,
                       **params) -> RecipeResult:
    """Rule-tilted conditional learning on a product domain."""
    from dataclasses import replace
    bundle.require("dataset", "rule")
    prod = bundle.product_domain
    if prod is None:
        raise IncompatiblePair("posterior regularization needs a product domain")
    nx, ny = prod.factor_sizes
    counts_x = bundle.dataset.counts
    if counts_x.size != nx:
        raise IncompatiblePair("dataset must live on the X factor")
    p_x = counts_x / counts_x.sum()
    from .experience import eval_soft_logic
    rule_vals = eval_soft_logic(bundle.rule, bundle.atoms, prod.size)
    fn = ExperienceFn.from_vector(prod, bundle.rule_weight * rule_vals, name="rule")
    rec = get_recipe("posterior-regularization")
    config = replace(rec.config, experience=fn, seed=seed, max_iters=iters,
                     objective_tol=0.0, student="gradient", student_steps=40)
    rng = np.random.default_rng(seed)
    model = ConditionalSoftmaxModel(rng.normal(size=(nx, ny)) * 0.1, prod)
    history = []
    model, trace = run(config, model, prod, p_x=p_x,
                       callback=lambda n, q, m: history.append((q, m)))
    return RecipeResult(model, trace,
                        extras={"history": history, "p_x": p_x,
                                "rule_values": rule_vals})


def _run_unified_em(bundle: ProblemBundle, seed: int, alpha: float = 1.0,
                    iters: int = 20, **params) -> RecipeResult:
    return _run_unsupervised(bundle, seed, iters=iters, alpha=alpha, **params)


def _sa_model_dist(mdp, policy) -> Dist:
    """The policy's state-action distribution: normalized visitation times pi."""
    mu = visitation(mdp, policy)
    joint = mu[:, None] * policy.probs()
    return Dist.from_probs((joint / joint.sum()).ravel())


def _run_policy_gradient(bundle: ProblemBundle, seed: int, **params) -> RecipeResult:
    """One teacher step at f = log Q; returns the student gradient and Z."""
    bundle.require("mdp")
    mdp = bundle.mdp
    rng = np.random.default_rng(seed)
    dom = mdp.domain()
    policy = ConditionalSoftmaxModel(rng.normal(size=mdp.rewards.shape) * 0.3, dom)
    fn = f_reward(mdp, "log_q")
    f_vals = fn.values(policy)
    p_sa = _sa_model_dist(mdp, policy)
    q = teacher_closed_form(p_sa, f_vals, 1.0, 1.0)
    se_grad = grad_expected_log_prob(policy, q)
    # Z = sum_sa mu(s) pi(a|s) exp f(s,a) over the unnormalized visitation, so
    # that the student gradient times Z is the exact policy gradient
    mu = visitation(mdp, policy)
    z = float(np.sum((mu[:, None] * policy.probs()).ravel() * np.exp(f_vals)))
    trace = Trace()
    trace.diagnostics.update(fn.diagnostics)
    return RecipeResult(policy, trace,
                        extras={"se_grad": se_grad, "q": q, "z": z,
                                "p_sa": p_sa, "f_vals": f_vals,
                                "offset": fn.diagnostics.get("reward_offset", 0.0)})


def _run_intrinsic(bundle: ProblemBundle, seed: int, **params) -> RecipeResult:
    bundle.require("mdp")
    mdp = bundle.mdp
    intrinsic = np.asarray(bundle.extras.get("intrinsic_rewards",
                                             np.ones_like(mdp.rewards) * 0.1),
                           dtype=float).reshape(mdp.rewards.shape)
    rng = np.random.default_rng(seed)
    policy = ConditionalSoftmaxModel(rng.normal(size=mdp.rewards.shape) * 0.3,
                                     mdp.domain())
    fn = f_reward(mdp, "q_plus_intrinsic", intrinsic_rewards=intrinsic)
    f_vals = fn.values(policy)
    p_sa = _sa_model_dist(mdp, policy)
    q = teacher_closed_form(p_sa, f_vals, 1.0, 1.0)
    trace = Trace()
    trace.diagnostics.update(fn.diagnostics)
    return RecipeResult(policy, trace,
                        extras={"q": q, "p_sa": p_sa, "intrinsic": intrinsic,
                                "offset": fn.diagnostics.get("reward_offset", 0.0)})


def _run_rl_inference(bundle: ProblemBundle, seed: int, rho: Optional[float] = None,
                      **params) -> RecipeResult:
    bundle.require("mdp")
    mdp = bundle.mdp
    rho = bundle.rho if rho is None else rho
    rng = np.random.default_rng(seed)
    policy = ConditionalSoftmaxModel(rng.normal(size=mdp.rewards.shape) * 0.3,
                                     mdp.domain())
    fn = f_reward(mdp, "q")
    f_vals = fn.values(policy)
    p_sa = _sa_model_dist(mdp, policy)
    q = teacher_closed_form(p_sa, f_vals, rho, rho)
    return RecipeResult(policy, Trace(),
                        extras={"q": q, "p_sa": p_sa, "rho": rho,
                                "f_vals": f_vals})


def _run_distillation(bundle: ProblemBundle, seed: int, **params) -> RecipeResult:
    bundle.require("dataset", "source_model")
    fn = f_model_mimic(bundle.dataset, bundle.source_model)
    rec = get_recipe("knowledge-distillation")
    result = _mle_like(rec.config, fn, seed)
    result.extras = {"source": bundle.source_model}
    return result


def _run_gan(bundle: ProblemBundle, seed: int, recipe: str = "vanilla_gan",
             iters: int = 5000, **params) -> RecipeResult:
    bundle.require("p_data")
    n = bundle.p_data.size
    rng = np.random.default_rng(seed)
    model = SoftmaxModel(rng.normal(size=n) * 0.5, Domain.of_size(n))
    res = adversarial_run(recipe, bundle.p_data, model, iters=iters,
                          coords=bundle.coords, **params)
    return RecipeResult(res.model, res.trace, res.model.dist(),
                        extras={"discriminator": res.discriminator,
                                "converged": res.converged})


def _run_mw(bundle: ProblemBundle, seed: int, alpha: Optional[float] = None,
            **params) -> RecipeResult:
    bundle.require("rewards")
    rows = bundle.rewards
    T, K = rows.shape
    if alpha is None:
        alpha = float(np.sqrt(T / (2.0 * np.log(K))))
    p = Dist.uniform(K)
    history = []
    for r in rows:
        p = mw_update(p, r, alpha)
        history.append(p.p.copy())
    trace = Trace()
    trace.diagnostics["alpha"] = alpha
    return RecipeResult(None, trace, p, extras={"history": history,
                                                "alpha": alpha})


def _run_interpolation(bundle: ProblemBundle, seed: int, iters_per_stage: int = 10,
                       **params) -> RecipeResult:
    from dataclasses import replace
    bundle.require("dataset", "payoff")
    dom = bundle.dataset.domain
    reward = np.asarray(bundle.extras.get("reward", bundle.payoff.mean(axis=0)),
                        dtype=float)
    fn_data = f_data(bundle.dataset)
    fn_aug = f_data_augmented(bundle.dataset, raml_kernel(bundle.payoff))
    fn_reward = ExperienceFn.from_vector(dom, reward, name="reward")
    base = replace(get_recipe("interpolation-schedule").config, seed=seed)
    k = iters_per_stage
    plan = [
        Segment(1, k, {"experience": fn_data, "beta": DEFAULT_EPSILON}),
        Segment(k + 1, 2 * k, {"experience": fn_aug, "beta": DEFAULT_EPSILON}),
        Segment(2 * k + 1, 3 * k, {"experience": fn_reward, "beta": 1.0}),
    ]
    model = SoftmaxModel.zeros(dom)
    model, trace = schedule(base, plan, model, dom)
    return RecipeResult(model, trace, model.dist())


_RUNNERS: Dict[str, Callable[..., RecipeResult]] = {
    "supervised-mle": _run_supervised,
    "self-supervised-mle": _run_self_supervised,
    "unsupervised-mle": _run_unsupervised,
    "data-reweighting": _run_reweighting,
    "data-augmentation": _run_augmentation,
    "active-learning": _run_active,
    "posterior-regularization": _run_posterior_reg,
    "unified-em": _run_unified_em,
    "policy-gradient": _run_policy_gradient,
    "intrinsic-reward": _run_intrinsic,
    "rl-as-inference": _run_rl_inference,
    "knowledge-distillation": _run_distillation,
    "vanilla-gan": lambda b, s, **kw: _run_gan(b, s, "vanilla_gan", **kw),
    "wgan": lambda b, s, **kw: _run_gan(b, s, "wgan", **kw),
    "ppo-gan": lambda b, s, **kw: _run_gan(b, s, "ppo_gan", **kw),
    "multiplicative-weights": _run_mw,
    "interpolation-schedule": _run_interpolation,
}


def run_recipe(name: str, bundle: ProblemBundle, seed: int = 0,
               **params) -> RecipeResult:
    get_recipe(name)  # raises NotFound on unknown names
    return _RUNNERS[name](bundle, seed, **params)


# ---------------------------------------------------------------------------
# Equivalence checks
# ---------------------------------------------------------------------------

def _report(recipe: str, oracle: str, contract: str, tolerance: float,
            deviation: float, details: Optional[dict] = None) -> dict:
    return {
        "recipe": recipe,
        "oracle": oracle,
        "contract": contract,
        "tolerance": tolerance,
        "max_deviation": deviation,
        "passed": bool(deviation <= tolerance),
        "details": details or {},
    }


def _check_supervised(bundle, tol, seed):
    res = run_recipe("supervised-mle", bundle, seed)
    target = oracles.direct_mle(bundle.dataset.counts)
    dev = res.final_dist.tv(Dist.from_probs(target))
    return dev, {"final_tv": dev}


def _check_self_supervised(bundle, tol, seed):
    res = run_recipe("self-supervised-mle", bundle, seed)
    # independent count: re-split observations by hand
    prod = bundle.product_domain
    counts = np.zeros(prod.size)
    for t, m in enumerate(bundle.dataset.counts):
        counts[t] += m  # identity split on the pair domain
    target = oracles.direct_mle(counts)
    dev = res.final_dist.tv(Dist.from_probs(target))
    return dev, {"final_tv": dev}


def _check_em(bundle, tol, seed, iters=20):
    rng = np.random.default_rng(seed)
    k = bundle.n_components
    nx = bundle.dataset.domain.size
    pi0 = rng.dirichlet(np.ones(k))
    comp0 = rng.dirichlet(np.ones(nx), size=k)
    res = run_recipe("unsupervised-mle", bundle, seed, iters=iters,
                     init_mix=np.log(pi0), init_comp=np.log(comp0))
    pi, comp = pi0.copy(), comp0.copy()
    counts = bundle.dataset.counts
    p_x = res.extras["p_x"]
    worst = 0.0
    lls = []
    for it, (q, model) in enumerate(res.extras["history"]):
        # oracle E-step from the parameters entering iteration `it`
        joint = comp.T * pi[None, :]
        marg = joint.sum(axis=1)
        lls.append(float(counts[counts > 0] @ np.log(marg[counts > 0])))
        resp = np.where(marg[:, None] > 0, joint / np.where(marg[:, None] > 0, marg[:, None], 1.0), 0.0)
        oracle_q = (p_x[:, None] * resp).ravel()
        worst = max(worst, float(np.max(np.abs(q.p - oracle_q))))
        # oracle M-step
        pi_new, comp_new, _ = oracles.hand_em(counts, pi, comp, 1)
        pi, comp = pi_new, comp_new
        model_pi = np.exp(model.mixture_logits - logsumexp(model.mixture_logits))
        model_comp = np.exp(model.component_logits -
                            logsumexp(model.component_logits, axis=1, keepdims=True))
        worst = max(worst, float(np.max(np.abs(model_pi - pi))))
        worst = max(worst, float(np.max(np.abs(model_comp - comp))))
    nll = [-v for v in lls]
    monotone = all(nll[i + 1] <= nll[i] + 1e-12 for i in range(len(nll) - 1))
    if not monotone:
        worst = np.inf
    return worst, {"iterations": iters, "nll": nll, "nll_monotone": monotone}


def _check_reweighting(bundle, tol, seed):
    res = run_recipe("data-reweighting", bundle, seed)
    target = oracles.weighted_mle(bundle.dataset.counts, bundle.dataset.weights)
    dev = res.final_dist.tv(Dist.from_probs(target))
    return dev, {"final_tv": dev}


def _check_augmentation(bundle, tol, seed):
    res = run_recipe("data-augmentation", bundle, seed)
    # enumeration oracle: q(t) = sum_{t*} emp(t*) exp(R[t*,t]) / Z_{t*}
    emp = bundle.dataset.counts / bundle.dataset.counts.sum()
    R = bundle.payoff
    expR = np.exp(R - R.max(axis=1, keepdims=True))
    rows = expR / expR.sum(axis=1, keepdims=True)
    target = emp @ rows
    target = target / target.sum()
    q0 = res.extras["first_teacher"]
    dev = float(np.max(np.abs(q0.p - target)))
    return dev, {"teacher_max_abs": dev}


def _check_active(bundle, tol, seed):
    res = run_recipe("active-learning", bundle, seed)
    prod = res.extras["product_domain"]
    nx, ny = prod.factor_sizes
    # enumeration oracle: joint = selection(x) delta(y = label(x))
    sel_unnorm = (bundle.pool.counts / bundle.pool.counts.sum()) * \
        np.exp(bundle.select_lambda * bundle.utility)
    sel = sel_unnorm / sel_unnorm.sum()
    target = np.zeros(prod.size)
    for x in range(nx):
        target[prod.pair(x, int(bundle.oracle_labels[x]))] = sel[x]
    dev = res.final_dist.tv(Dist.from_probs(target))
    sel_dev = float(np.max(np.abs(res.extras["selection"] - sel)))
    return max(dev, sel_dev), {"final_tv": dev, "selection_max_abs": sel_dev}


def _check_posterior_reg(bundle, tol, seed):
    res = run_recipe("posterior-regularization", bundle, seed, iters=5)
    lam = bundle.rule_weight
    rule = res.extras["rule_values"]
    p_x = res.extras["p_x"]
    prod = bundle.product_domain
    nx, ny = prod.factor_sizes
    worst = 0.0
    # per-iteration check: replay with an independently coded loop that tracks
    # its own parameters, so each q comparison is against the oracle's state
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(nx, ny)) * 0.1
    from .models import ConditionalSoftmaxModel as CSM, fit_to as _fit
    rule_mat = (lam * rule).reshape(nx, ny)
    for q, model_after in res.extras["history"]:
        cond = np.exp(theta - logsumexp(theta, axis=1, keepdims=True))
        tilt = cond * np.exp(rule_mat)
        tilt = tilt / tilt.sum(axis=1, keepdims=True)
        oracle_q = (p_x[:, None] * tilt).ravel()
        worst = max(worst, float(np.max(np.abs(q.p - oracle_q))))
        model = _fit(CSM(theta, prod), Dist.from_probs(oracle_q / oracle_q.sum()),
                     steps=40, step_size=1.0)
        theta = model.theta.copy()
        worst = max(worst, float(np.max(np.abs(
            np.exp(model_after.log_probs()) - np.exp(model.log_probs())))))
    return worst, {"iterations": len(res.extras["history"])}


def _check_unified_em(bundle, tol, seed):
    res = run_recipe("unified-em", bundle, seed, alpha=bundle.extras.get("alpha", 0.5),
                     iters=10)
    finite = all(np.isfinite(r.total) for r in res.trace.records)
    return (0.0 if finite else np.inf), {"iterations": len(res.trace.records)}


def _check_policy_gradient(bundle, tol, seed):
    res = run_recipe("policy-gradient", bundle, seed)
    se = res.extras["se_grad"].ravel()
    pg = exact_policy_gradient(bundle.mdp, res.model).ravel()
    cos = float(se @ pg / (np.linalg.norm(se) * np.linalg.norm(pg)))
    z = res.extras["z"]
    ratio_dev = float(np.max(np.abs(se * z - pg)) / max(np.max(np.abs(pg)), 1e-300))
    dev = max(1.0 - cos, ratio_dev)
    return dev, {"cosine": cos, "z": z, "ratio_max_rel": ratio_dev}


def _check_intrinsic(bundle, tol, seed):
    res = run_recipe("intrinsic-reward", bundle, seed)
    mdp = bundle.mdp
    q_ex = q_function(mdp, res.model).q
    from .mdp import TabularMDP
    in_mdp = TabularMDP(mdp.transitions, res.extras["intrinsic"], mdp.gamma, mdp.p0)
    q_in = q_function(in_mdp, res.model).q
    total = q_ex + q_in + res.extras["offset"] / (1.0 - mdp.gamma)
    target = res.extras["p_sa"].p * total.ravel()
    target = target / target.sum()
    dev = float(np.max(np.abs(res.extras["q"].p - target)))
    return dev, {"teacher_max_abs": dev}


def _check_rl_inference(bundle, tol, seed):
    worst = 0.0
    per_rho = {}
    for rho in (0.1, 1.0, 10.0):
        res = run_recipe("rl-as-inference", bundle, seed, rho=rho)
        logits = res.extras["p_sa"].logp + res.extras["f_vals"] / rho
        target = np.exp(logits - logsumexp(logits))
        dev = float(np.max(np.abs(res.extras["q"].p - target)))
        per_rho[rho] = dev
        worst = max(worst, dev)
    return worst, {"per_rho": {str(k): v for k, v in per_rho.items()}}


def _check_distillation(bundle, tol, seed):
    res = run_recipe("knowledge-distillation", bundle, seed)
    emp = bundle.dataset.counts / bundle.dataset.counts.sum()
    target = (emp[:, None] * np.exp(bundle.source_model.log_probs())).ravel()
    dev = res.final_dist.tv(Dist.from_probs(target))
    return dev, {"final_tv": dev}


def _check_vanilla_gan(bundle, tol, seed, iters=5000):
    res = run_recipe("vanilla-gan", bundle, seed, iters=iters)
    disc = res.extras["discriminator"]
    tv = res.final_dist.tv(bundle.p_data)
    sigma = disc.sigma()
    target = oracles.gan_optimum(bundle.p_data.p, res.final_dist.p)
    sigma_dev = float(np.max(np.abs(sigma - target)))
    return max(tv, sigma_dev), {"final_tv": tv, "sigma_max_abs": sigma_dev,
                                "converged": res.extras["converged"]}


def _check_wgan(bundle, tol, seed, iters=3000):
    res = run_recipe("wgan", bundle, seed, iters=iters, tol=1e-3,
                     disc_steps=30, model_step_size=0.3)
    disc = res.extras["discriminator"]
    f = disc.f_values()
    critic_obj = float(bundle.p_data.p @ f - res.final_dist.p @ f)
    coords = (bundle.coords if bundle.coords is not None
              else np.arange(bundle.p_data.size, dtype=float))
    exact = oracles.brute_force_w1(res.final_dist.p, bundle.p_data.p, coords)
    rel = abs(critic_obj - exact) / max(exact, 1e-12) if exact > 1e-9 else abs(critic_obj - exact)
    return rel, {"critic_objective": critic_obj, "exact_w1": exact,
                 "final_tv": res.final_dist.tv(bundle.p_data)}


def _check_ppo_gan(bundle, tol, seed, instances=100):
    """Reweighted-vs-explicit discriminator gradient identity on random pairs."""
    rng = np.random.default_rng(seed)
    n = bundle.p_data.size
    worst = 0.0
    for _ in range(instances):
        model = SoftmaxModel(rng.normal(size=n), Domain.of_size(n))
        disc = Discriminator(rng.normal(size=n), "classifier")
        p_d = Dist.from_probs(rng.dirichlet(np.ones(n)))
        g1 = reweighted_discriminator_gradient(disc, p_d, model)
        g2 = discriminator_gradient(disc, p_d, tilted_q(model, disc), "separation")
        worst = max(worst, float(np.max(np.abs(g1 - g2))))
    return worst, {"instances": instances}


def _check_mw(bundle, tol, seed):
    res = run_recipe("multiplicative-weights", bundle, seed)
    _, oracle_hist = oracles.hedge(np.full(bundle.rewards.shape[1],
                                           1.0 / bundle.rewards.shape[1]),
                                   bundle.rewards, res.extras["alpha"])
    worst = 0.0
    for mine, theirs in zip(res.extras["history"], oracle_hist):
        worst = max(worst, float(np.max(np.abs(mine - theirs))))
    return worst, {"rounds": len(oracle_hist), "alpha": res.extras["alpha"]}


def _check_interpolation(bundle, tol, seed):
    res = run_recipe("interpolation-schedule", bundle, seed)
    iters = [r.iteration for r in res.trace.records]
    contiguous = iters == list(range(1, len(iters) + 1))
    return (0.0 if contiguous else np.inf), {"iterations": len(iters)}


_CHECKS: Dict[Tuple[str, str], Callable] = {
    ("supervised-mle", "direct-mle"): _check_supervised,
    ("self-supervised-mle", "direct-mle"): _check_self_supervised,
    ("unsupervised-mle", "hand-em"): _check_em,
    ("data-reweighting", "weighted-mle"): _check_reweighting,
    ("data-augmentation", "enumeration"): _check_augmentation,
    ("active-learning", "enumeration"): _check_active,
    ("posterior-regularization", "enumeration"): _check_posterior_reg,
    ("unified-em", "hand-em"): _check_unified_em,
    ("policy-gradient", "exact-pg"): _check_policy_gradient,
    ("policy-gradient", "reinforce"): _check_policy_gradient,
    ("intrinsic-reward", "enumeration"): _check_intrinsic,
    ("rl-as-inference", "enumeration"): _check_rl_inference,
    ("knowledge-distillation", "enumeration"): _check_distillation,
    ("vanilla-gan", "gan-optimum"): _check_vanilla_gan,
    ("wgan", "brute-w1"): _check_wgan,
    ("ppo-gan", "reweighted-identity"): _check_ppo_gan,
    ("multiplicative-weights", "hedge"): _check_mw,
    ("interpolation-schedule", "none"): _check_interpolation,
}


def check_equivalence(recipe: str, oracle: str, bundle: ProblemBundle,
                      tolerance: float, seed: int = 0, **params) -> dict:
    """Run the recipe and its oracle, compare per the pair's contract, and
    return a report with the worst deviation and a pass/fail verdict."""
    rec = get_recipe(recipe)
    key = (recipe, oracle)
    if key not in _CHECKS:
        raise IncompatiblePair(f"no equivalence contract for {recipe!r} vs {oracle!r}")
    deviation, details = _CHECKS[key](bundle, tolerance, seed, **params)
    return _report(recipe, oracle, rec.contract, tolerance, deviation, details)
