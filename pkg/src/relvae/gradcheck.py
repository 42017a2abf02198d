"""Finite-difference verification of analytic gradients.

Every suite builds its loss in double precision and compares each analytic
gradient entry against a central difference (step ``h``).  A comparison is
scored by relative error, falling back to absolute error when both values
are negligible; frozen parameter rows are skipped, mirroring the optimizer.

``run_all()`` backs the ``relvae gradcheck`` CLI subcommand and the
acceptance suite: it checks every primitive op and the full
labeled-plus-unlabeled objective of a tiny model.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor, backward
from .rng import SeededRng

FD_STEP = 1e-5
TOL_SMOOTH = 1e-6
TOL_COMPOSED = 1e-4


def rel_error(a: float, n: float, floor: float = 1e-5) -> float:
    """Relative disagreement between an analytic and a numeric derivative.

    Entries smaller than ``floor`` in both are compared absolutely: a
    central difference carries rounding noise of order eps * |loss| / (2h)
    no matter how small the true derivative is, so ratios of near-zero
    values would measure roundoff, not gradient correctness.
    """
    scale = max(abs(a), abs(n))
    if scale < floor:
        return abs(a - n)
    return abs(a - n) / scale


def _frozen_mask(p: Tensor) -> np.ndarray:
    mask = np.zeros(p.data.shape, dtype=bool)
    if isinstance(p, Parameter) and p.frozen_rows:
        mask[list(p.frozen_rows)] = True
    return mask


def check_gradients(build_loss, wrt, h: float = FD_STEP,
                    tol: float = TOL_COMPOSED) -> float:
    """Max relative error between analytic and numeric d(loss)/d(wrt).

    ``build_loss`` must be a deterministic zero-argument function returning
    a scalar Tensor (reseed any RNG it uses internally).  ``wrt`` is the
    list of tensors to differentiate with respect to.  ``tol`` is the
    threshold the caller will compare against; it sets the scale below
    which entries are too noise-dominated to ratio-compare.
    """
    for t in wrt:
        if isinstance(t, Parameter):
            t.zero_grad()
        else:
            t.grad = None
    with Tape() as tape:
        loss = build_loss()
    backward(loss, tape)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in wrt]

    # the difference quotient carries rounding noise of a few ulps of the
    # loss divided by 2h; entries whose noise-to-size ratio exceeds tol
    # cannot be ratio-compared and fall back to an absolute comparison
    eps = float(np.finfo(np.float64).eps)
    noise = 4.0 * eps * abs(float(loss.data)) / (2.0 * h)
    floor = max(1e-5, noise / tol)

    worst = 0.0
    for t, ana in zip(wrt, analytic):
        skip = _frozen_mask(t)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            if skip.reshape(-1)[i]:
                continue
            orig = flat[i]
            flat[i] = orig + h
            up = float(build_loss().data)
            flat[i] = orig - h
            down = float(build_loss().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            worst = max(worst, rel_error(float(ana.reshape(-1)[i]), numeric, floor))
    return worst


def _t(rng, *shape, name=None):
    data = rng.normal(shape, dtype=np.float64)
    if name:
        return Parameter(name, data, dtype=np.float64)
    return Tensor(data, dtype=np.float64)


def primitive_checks(seed: int = 11):
    """(name, max_rel_err, tolerance) for every primitive op."""
    rng = SeededRng(seed)
    results = []

    def run(name, build, wrt, tol=TOL_SMOOTH):
        results.append((name, check_gradients(build, wrt, tol=tol), tol))

    a = _t(rng, 3, 4)
    b = _t(rng, 4, 2)
    run("matmul", lambda: ad.tsum(ad.matmul(a, b) * ad.matmul(a, b)), [a, b])

    x = _t(rng, 2, 7, 3)
    w = _t(rng, 3, 3, 4)
    bias = _t(rng, 4)
    run("conv1d_valid",
        lambda: ad.tsum(ad.conv1d(x, w, bias, "valid") * ad.conv1d(x, w, bias, "valid")),
        [x, w, bias])
    run("conv1d_same",
        lambda: ad.tsum(ad.conv1d(x, w, bias, "same") * ad.conv1d(x, w, bias, "same")),
        [x, w, bias])

    mp = _t(rng, 6, 3)
    run("max_pool_time", lambda: ad.tsum(max_pool_weighted(mp)), [mp])

    for kind in ad.ACTIVATIONS:
        z = _t(rng, 5, 4)
        run(f"activation_{kind}",
            lambda z=z, kind=kind: ad.tsum(ad.activation(z, kind) * ad.activation(z, kind)),
            [z], tol=1e-7 if kind != "relu" else TOL_COMPOSED)

    logits = _t(rng, 5)
    run("softmax", lambda: ad.tsum(ad.softmax(logits) * ad.softmax(logits)), [logits])
    run("softmax_cross_entropy",
        lambda: ad.cross_entropy(ad.softmax(logits), 2), [logits])

    rows = _t(rng, 4, 6)
    targets = np.array([1, 0, 5, 3])
    run("nll_rows", lambda: ad.tsum(ad.nll_rows(ad.softmax(rows), targets)), [rows])

    dx = _t(rng, 6, 5)
    run("dropout",
        lambda: ad.tsum(
            ad.dropout(dx, 0.4, SeededRng(99), training=True)
            * ad.dropout(dx, 0.4, SeededRng(7), training=True)
        ),
        [dx])

    table = Parameter("table", SeededRng(3).normal((9, 4), np.float64), dtype=np.float64)
    idx = np.array([[1, 4, 4], [0, 8, 2]])
    run("embedding_lookup",
        lambda: ad.tsum(ad.embedding_lookup(table, idx) * ad.embedding_lookup(table, idx)),
        [table])

    lx = _t(rng, 2, 3)
    lh = _t(rng, 2, 4)
    lc = _t(rng, 2, 4)
    lw = _t(rng, 3, 16)
    lu = _t(rng, 4, 16)
    lb = _t(rng, 16)

    def lstm_loss():
        h, c = ad.lstm_step(lx, lh, lc, lw, lu, lb)
        h2, c2 = ad.lstm_step(lx, h, c, lw, lu, lb)
        return ad.tsum(h2 * h2) + ad.tsum(c2)

    run("lstm_step", lstm_loss, [lx, lh, lc, lw, lu, lb], tol=1e-5)

    mu = _t(rng, 2, 4)
    lv = _t(rng, 2, 4)
    run("gaussian_sample",
        lambda: ad.tsum(ad.gaussian_sample(mu, lv, SeededRng(5))
                        * ad.gaussian_sample(mu, lv, SeededRng(5))),
        [mu, lv])
    run("kl_gaussian", lambda: ad.tsum(ad.kl_gaussian(mu, lv)), [mu, lv])

    e1 = _t(rng, 3, 2)
    e2 = _t(rng, 3, 4)
    run("elementwise_mix",
        lambda: ad.tmean(ad.log(ad.softmax(ad.concat([e1, e2], axis=1)),
                                eps=ad.EPS_LOG)
                         * ad.transpose2d(ad.reshape(ad.concat([e1, e2], axis=1),
                                                     (6, 3)))),
        [e1, e2])

    return results


def max_pool_weighted(mp: Tensor) -> Tensor:
    # weight the pooled vector so each filter's gradient path is distinct
    pooled = ad.max_pool_time(mp)
    weights = Tensor(np.arange(1.0, pooled.data.shape[0] + 1.0), dtype=np.float64)
    return pooled * weights


def model_checks(seed: int = 23):
    """Full-objective check on a tiny model; the model lives in
    relvae.semivae, imported lazily to avoid a circular import."""
    from .semivae import tiny_model_gradient_check

    return [("joint_objective", tiny_model_gradient_check(seed), TOL_COMPOSED)]


def run_all(include_model: bool = True):
    results = list(primitive_checks())
    if include_model:
        results.extend(model_checks())
    return results


def report(results, out=None) -> bool:
    """Print one PASS/FAIL line per check; True when everything passed."""
    import sys

    out = out or sys.stdout
    ok = True
    for name, err, tol in results:
        good = err < tol
        ok &= good
        print(f"{'PASS' if good else 'FAIL'}  {name:<24s} max_rel_err={err:.3e}  tol={tol:.0e}",
              file=out)
    return ok
