"""Numeric property audit behind the ``losscheck`` subcommand.

Runs the documented behavior checks of the similarity measures (functional
form on scaled pairs, limits, bounds, symmetry, scale sensitivity versus
cosine) plus finite-difference gradient audits for all ten loss kinds, and
collects everything into a machine-readable report.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .losses import (
    LossKind,
    cosine_similarity,
    covariance_loss,
    jcc_loss,
    jfip,
    jvs,
    cc_loss,
    vector_loss,
)

K_GRID = (-100.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 100.0)
GRAD_TOL = 1e-4


def _check(name, measured, threshold, passed=None):
    if passed is None:
        passed = bool(measured < threshold)
    return {
        "name": name,
        "measured": float(measured),
        "threshold": float(threshold),
        "passed": bool(passed),
    }


def _random_spd(rng, dim, scale=1.0):
    m = rng.standard_normal((dim, dim))
    return scale * (m @ m.T) / dim + 0.1 * scale * np.eye(dim)


def functional_form_checks(rng, n_vectors=100, dim=16):
    checks = []
    worst = 0.0
    worst_k2 = 0.0
    for _ in range(n_vectors):
        z = rng.standard_normal(dim)
        for k in K_GRID:
            err = abs(jvs(z, k * z) - 2.0 * k / (k * k + 1.0))
            worst = max(worst, err)
            if k == 2.0:
                worst_k2 = max(worst_k2, err)
    checks.append(_check("jvs_functional_form_2k_over_k2p1", worst, 1e-9))
    checks.append(_check("jvs_at_k2_vs_0.8", worst_k2, 1e-9))

    z = rng.standard_normal(dim)
    big = max(abs(jvs(z, 1e6 * z)), abs(jvs(z, -1e6 * z)))
    checks.append(_check("jvs_limit_abs_k_1e6", big, 2.1e-6))
    checks.append(_check("jvs_at_zero_vector", abs(jvs(z, np.zeros(dim))), 1e-300,
                         passed=jvs(z, np.zeros(dim)) == 0.0))

    cos_err = 0.0
    for k in (-3.0, -1.0, 0.01, 5.0):
        cos_err = max(cos_err, abs(cosine_similarity(z, k * z) - np.sign(k)))
    checks.append(_check("cosine_sign_of_k", cos_err, 1e-12))
    return checks


def bound_and_symmetry_checks(rng, trials=10_000, dim=8):
    checks = []
    max_abs_jvs = 0.0
    sym_jvs = 0.0
    for _ in range(trials):
        scale_a = 10.0 ** rng.uniform(-9, 9)
        scale_b = 10.0 ** rng.uniform(-9, 9)
        a = rng.standard_normal(dim) * scale_a
        b = rng.standard_normal(dim) * scale_b
        s = jvs(a, b)
        max_abs_jvs = max(max_abs_jvs, abs(s))
        sym_jvs = max(sym_jvs, abs(s - jvs(b, a)))
    checks.append(_check("jvs_bound_abs_le_1", max_abs_jvs, 1.0 + 1e-15,
                         passed=max_abs_jvs <= 1.0))
    checks.append(_check("jvs_symmetry", sym_jvs, 1e-12))

    lo, hi, sym_fip = 1.0, 0.0, 0.0
    for _ in range(200):
        scale_a = 10.0 ** rng.uniform(-9, 9)
        scale_b = 10.0 ** rng.uniform(-9, 9)
        ca = _random_spd(rng, 4, scale_a)
        cb = _random_spd(rng, 4, scale_b)
        s = jfip(ca, cb)
        lo, hi = min(lo, s), max(hi, s)
        sym_fip = max(sym_fip, abs(s - jfip(cb, ca)))
    checks.append(_check("jfip_bound_in_unit_interval", max(hi - 1.0, -lo), 1e-15,
                         passed=(0.0 <= lo and hi <= 1.0)))
    checks.append(_check("jfip_symmetry", sym_fip, 1e-12))

    sym_jcc = 0.0
    for _ in range(50):
        za = rng.standard_normal((6, 4))
        zb = rng.standard_normal((6, 4))
        sym_jcc = max(sym_jcc, abs(jcc_loss(za, zb) - jcc_loss(zb, za)))
    checks.append(_check("jcc_symmetry", sym_jcc, 1e-12))
    return checks


def scale_sensitivity_check(rng, dim=16):
    """JVS strictly decreases as the scale factor leaves 1; cosine stays 1."""
    z = rng.standard_normal(dim)
    ks_up = np.linspace(1.0, 8.0, 30)
    ks_down = np.linspace(1.0, 0.05, 30)
    jvs_up = np.array([jvs(z, k * z) for k in ks_up])
    jvs_down = np.array([jvs(z, k * z) for k in ks_down])
    cos_vals = np.array([cosine_similarity(z, k * z) for k in ks_up])
    monotone = bool(np.all(np.diff(jvs_up) < 0) and np.all(np.diff(jvs_down) < 0))
    cos_flat = float(np.abs(cos_vals - 1.0).max())
    return [
        _check("jvs_scale_sensitivity_monotone", 0.0 if monotone else 1.0, 0.5,
               passed=monotone),
        _check("cosine_scale_insensitive", cos_flat, 1e-12),
    ]


def gradient_checks(rng, points=5):
    """Max finite-difference error per loss kind at random non-degenerate points."""
    checks = []
    for kind in LossKind:
        worst = 0.0
        for _ in range(points):
            if kind.family == "vector":
                args = [rng.standard_normal(5) + 0.1, rng.standard_normal(5) + 0.1]
                fn = lambda a, b, k=kind: vector_loss(k, a, b)
                h = 1e-6
            elif kind is LossKind.CC:
                args = [rng.standard_normal((4, 3)), rng.standard_normal((4, 3))]
                fn = lambda a, b: cc_loss(a, b)
                h = 1e-6
            elif kind is LossKind.JCC:
                args = [rng.standard_normal((4, 3)), rng.standard_normal((4, 3))]
                fn = lambda a, b: jcc_loss(a, b)
                h = 1e-6
            else:
                args = [_random_spd(rng, 3), _random_spd(rng, 3)]
                fn = lambda a, b, k=kind: covariance_loss(k, a, b)
                h = 1e-5 if kind is LossKind.BD else 1e-6
            worst = max(worst, ad.grad_check(fn, args, h=h))
        checks.append(_check(f"grad_{kind.value}", worst, GRAD_TOL))
    return checks


def run_loss_audit(seed=0) -> dict:
    """Full property suite; returns {'checks': [...], 'all_passed': bool}."""
    rng = np.random.default_rng(seed)
    checks = []
    checks += functional_form_checks(rng)
    checks += bound_and_symmetry_checks(rng)
    checks += scale_sensitivity_check(rng)
    checks += gradient_checks(rng)
    return {"checks": checks, "all_passed": all(c["passed"] for c in checks)}
