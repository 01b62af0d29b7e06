"""Acceptance checks, one test per criterion.

Each test records a ``[PASS]``/``[FAIL]`` line; the lines are printed in the
terminal summary (see ``conftest.py``) and also immediately with ``-s``.
Expected values are frozen from independent scalar or closed-form
computations, never from the code under test.

The split-MNIST runs use the bundled 10k subset under ``data/``; if the
official training files are found under ``CLASSP_DATA_DIR`` they are used
instead.
"""
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from classp.cli import main
from classp.config import build_run_config, load_config
from classp.data import load_idx, write_idx
from classp.errors import FormatError
from classp.harness import forgetting_rate, run_sequence
from classp.mlp import MLPParams, cross_entropy_loss, init_mlp, mlp_backward, mlp_forward, param_count
from classp.numeric import Pcg32, finite_diff_grad, max_relative_error
from classp.optim import ClasspConfig, ClasspState, adagrad_step, aux_memory_count, classp_step, make_optimizer

from conftest import BUNDLED_DATA, REPO

RESULTS = []  # read by the terminal-summary hook


def report(num, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {name} ({detail})"
    RESULTS.append(line)
    print("\n" + line)
    assert ok, line


# 1 -------------------------------------------------------------------------


def test_c01_adagrad_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    n = 200
    a = rng.normal(size=(n, n))
    h = a @ a.T / n + np.eye(n)  # symmetric positive definite
    b = rng.normal(size=n)
    w0 = rng.normal(size=n)
    cfg = ClasspConfig(alpha=0.1, threshold=0.0, p=2, apply_decay=True, epsilon=1e-8)
    wc, state = w0.copy(), ClasspState.zeros(n)
    wa, accum = w0.copy(), np.zeros(n)
    worst = 0.0
    for _ in range(100):
        gc = h @ wc - b
        ga = h @ wa - b
        classp_step(wc, gc, state, cfg)
        adagrad_step(wa, ga, accum, 0.1, 1e-8)
        worst = max(worst, float(np.max(np.abs(wc - wa))))
    elapsed = time.perf_counter() - t0
    report(1, "p=2 ungated CLASSP equals AdaGrad", worst <= 1e-12 and elapsed < 1.0,
           f"max |diff| {worst:.2e} over 100 steps, {elapsed:.3f} s")


# 2 -------------------------------------------------------------------------


def test_c02_backward_matches_finite_differences():
    t0 = time.perf_counter()
    errs = []
    for seed in range(5):
        rng = Pcg32(seed)
        p = init_mlp((16, 8, 3), rng)
        for _, bias in p.layers:
            bias[...] = 0.1 * rng.standard_normal(bias.size).reshape(bias.shape)
        x = rng.standard_normal(8 * 16).reshape(8, 16)
        y = rng.random_u32(8) % 3
        logits, cache = mlp_forward(p, x)
        _, d = cross_entropy_loss(logits, y)
        analytic = mlp_backward(p, cache, d).flat

        def f(w):
            return cross_entropy_loss(mlp_forward(MLPParams(p.sizes, w), x)[0], y)[0]

        numeric = finite_diff_grad(f, p.flat.copy(), 1e-5)
        errs.append(max_relative_error(analytic, numeric, floor=1e-6))
    elapsed = time.perf_counter() - t0
    worst = max(errs)
    report(2, "backprop vs central differences, 16-8-3, batch 8", worst < 1e-4 and elapsed < 5.0,
           f"worst relative error {worst:.2e} over 5 seeds, {elapsed:.2f} s")


# 3 -------------------------------------------------------------------------

# 1.0 - 0.1 * 2.0 / (1e-8 + 2.0)**1, evaluated with 50-digit mpmath.
SCALAR_ORACLE = 0.9000000005


def test_c03_scalar_oracle():
    w = np.array([1.0])
    classp_step(w, np.array([2.0]), ClasspState.zeros(1),
                ClasspConfig(alpha=0.1, threshold=0.5, p=1, apply_decay=True, epsilon=1e-8))
    err = abs(w[0] - SCALAR_ORACLE)
    report(3, "single-weight update", err <= 1e-12, f"w = {float(w[0])!r}, |err| {err:.1e}")


# 4 -------------------------------------------------------------------------


def test_c04_gate_properties():
    rng = np.random.default_rng(404)
    cfg = ClasspConfig(alpha=0.2, p=1, apply_decay=True)
    frozen_ok = True
    subset_ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 64))
        g = rng.normal(scale=rng.uniform(0.01, 3.0), size=n)
        w = rng.normal(size=n)
        s0 = np.abs(rng.normal(size=n))

        # threshold above every g^2: weights and accumulator untouched
        w1, st = w.copy(), ClasspState(s0.copy())
        classp_step(w1, g, st, cfg.with_overrides(threshold=float(np.max(g * g)) * 1.0001 + 1e-300))
        frozen_ok &= bool(np.array_equal(w1, w) and np.array_equal(st.grad_sum, s0))

        # raising the threshold can only shrink the set of changed elements
        t_lo, t_hi = np.sort(rng.uniform(0, float(np.max(g * g)) * 1.2, size=2))
        sets = []
        for t in (t_lo, t_hi):
            wt, stt = w.copy(), ClasspState(s0.copy())
            classp_step(wt, g, stt, cfg.with_overrides(threshold=float(t)))
            sets.append(wt != w)
        subset_ok &= bool(np.all(~sets[1] | sets[0]))
    report(4, "gate freezes everything above max g^2; updated sets nest", frozen_ok and subset_ok,
           f"1000 random vectors, freeze={'ok' if frozen_ok else 'broken'}, "
           f"nesting={'ok' if subset_ok else 'broken'}")


# 5 and 6: split-MNIST ordering ---------------------------------------------

ARMS = {"classp": "classp.toml", "adagrad": "classp_adagrad.toml", "sgd": "sgd.toml", "ewc": "ewc.toml"}


def _official_pair():
    root = os.environ.get("CLASSP_DATA_DIR")
    if not root:
        return None
    for sub in ("mnist", "MNIST/raw", ""):
        for ext in ("", ".gz"):
            ip = Path(root) / sub / f"train-images-idx3-ubyte{ext}"
            lp = Path(root) / sub / f"train-labels-idx1-ubyte{ext}"
            if ip.is_file() and lp.is_file():
                return ip, lp
    return None


@pytest.fixture(scope="module")
def split_mnist_runs():
    """Run every arm on the same 10 paired seeds; returns (retention, task2, seconds)."""
    overrides = []
    pair = _official_pair()
    if pair:
        overrides = [("dataset.mnist.images", str(pair[0].resolve())),
                     ("dataset.mnist.labels", str(pair[1].resolve()))]
    old = os.environ.get("CLASSP_DATA_DIR")
    os.environ["CLASSP_DATA_DIR"] = str(BUNDLED_DATA)
    t0 = time.process_time()
    retention, task2 = {}, {}
    try:
        for arm, fname in ARMS.items():
            path = REPO / "configs" / fname
            flat = load_config(path, overrides + [("seed", 0), ("repeats", 10)])
            res = run_sequence(build_run_config(flat, path))
            retention[arm] = [r.retention for r in res.repeats]
            task2[arm] = [r.phases[-1].accuracy["task2"] for r in res.repeats]
    finally:
        if old is None:
            os.environ.pop("CLASSP_DATA_DIR", None)
        else:
            os.environ["CLASSP_DATA_DIR"] = old
    return retention, task2, time.process_time() - t0


def _fmt_means(values):
    return ", ".join(f"{k} {np.mean(v):.1f}" for k, v in values.items())


@pytest.mark.slow
def test_c05_split_mnist_ordering(split_mnist_runs):
    retention, task2, cpu = split_mnist_runs
    r = {k: np.asarray(v) for k, v in retention.items()}
    ordered = int(np.sum((r["classp"] > r["adagrad"]) & (r["adagrad"] > r["sgd"])))
    arms = ("classp", "adagrad", "sgd")
    worst_t2 = min(min(task2[a]) for a in arms)
    t2 = ", ".join(f"{a} {min(task2[a]):.1f}" for a in arms)
    ok = ordered >= 8 and worst_t2 >= 80.0 and cpu < 600
    report(5, "retention CLASSP > AdaGrad-instance > SGD", ok,
           f"ordering held in {ordered}/10 seeds; min task-2 accuracy per arm: {t2}; "
           f"task-1 retention means: {_fmt_means({a: retention[a] for a in arms})}; "
           f"{cpu:.0f} s CPU for all arms")


@pytest.mark.slow
def test_c06_ewc_comparison(split_mnist_runs):
    retention, _, _ = split_mnist_runs
    finished = len(retention["ewc"]) == 10 and all(math.isfinite(v) for v in retention["ewc"])
    wins = int(np.sum(np.asarray(retention["classp"]) >= np.asarray(retention["ewc"])))
    report(6, "CLASSP retains at least as much as EWC", finished and wins >= 7,
           f"EWC completed={finished}; CLASSP >= EWC in {wins}/10 seeds; "
           f"means: {_fmt_means({a: retention[a] for a in ('classp', 'ewc')})}")


# 7 -------------------------------------------------------------------------


def test_c07_memory_counts():
    checks = []
    for sizes in [(16, 8, 3), (784, 128, 10), (50, 40, 30, 20)]:
        n = param_count(sizes)
        expected = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        checks.append(
            n == expected
            and aux_memory_count("classp", n) == n
            and aux_memory_count("ewc", n) == 2 * n
            and make_optimizer("classp", n).aux_memory == n
            and make_optimizer("ewc", n).aux_memory == 2 * n
        )
    report(7, "CLASSP keeps N extra reals, EWC keeps 2N", all(checks),
           f"{sum(checks)}/3 model sizes exact")


# 8 -------------------------------------------------------------------------

# 100 * (99.07 - 66.04) / 99.07, by hand: 3303 / 99.07 = 33.3400625...
FORGETTING_ORACLE = 33.34006258


def test_c08_forgetting_rate():
    got = forgetting_rate(99.07, 66.04)
    ok = abs(got - 33.34) <= 0.05 and abs(got - FORGETTING_ORACLE) < 1e-8
    report(8, "forgetting rate of 99.07 -> 66.04", ok, f"{got:.6f}%")


# 9 -------------------------------------------------------------------------


def test_c09_run_is_byte_deterministic(tmp_path, capsys):
    cfg = REPO / "configs" / "classp.toml"
    env_before = os.environ.get("CLASSP_DATA_DIR")
    os.environ["CLASSP_DATA_DIR"] = str(BUNDLED_DATA)
    try:
        codes = [main(["run", str(cfg), "--repeats", "2", "--out", str(tmp_path / d)]) for d in "ab"]
    finally:
        if env_before is None:
            os.environ.pop("CLASSP_DATA_DIR", None)
        else:
            os.environ["CLASSP_DATA_DIR"] = env_before
    capsys.readouterr()
    a = (tmp_path / "a" / "results.csv").read_bytes()
    b = (tmp_path / "b" / "results.csv").read_bytes()
    report(9, "two runs of the same config give identical CSV", codes == [0, 0] and a == b and len(a) > 0,
           f"exit codes {codes}, {len(a)} vs {len(b)} bytes, identical={a == b}")


# 10 ------------------------------------------------------------------------


def test_c10_idx_loader(tmp_path):
    problems = []
    imgs = np.arange(3 * 4 * 5, dtype=np.uint8).reshape(3, 4, 5) * 4
    labels = np.array([7, 0, 9], dtype=np.uint8)
    for compress in (False, True):
        ip, lp = tmp_path / f"i{compress}", tmp_path / f"l{compress}"
        write_idx(imgs, labels, ip, lp, compress=compress)
        d = load_idx(ip, lp)
        if d.x.shape != (3, 20) or not np.array_equal(d.x, imgs.reshape(3, 20) / 255.0):
            problems.append("pixel scaling")
        if not np.array_equal(d.y, labels):
            problems.append("labels")
    raw = (tmp_path / "iFalse").read_bytes()
    if raw[:16] != bytes.fromhex("00000803 00000003 00000004 00000005".replace(" ", "")):
        problems.append("header bytes")
    (tmp_path / "bad").write_bytes(b"\x00\x00\x08\x01" + raw[4:])
    for broken in (tmp_path / "bad",):
        try:
            load_idx(broken, tmp_path / "lFalse")
            problems.append("bad magic accepted")
        except FormatError:
            pass
    (tmp_path / "short").write_bytes(raw[:-1])
    try:
        load_idx(tmp_path / "short", tmp_path / "lFalse")
        problems.append("truncated body accepted")
    except FormatError:
        pass

    detail = "synthetic fixtures exact" if not problems else "; ".join(problems)
    pair = _official_pair()
    if pair:
        d = load_idx(*pair)
        real_ok = d.x.shape == (60000, 784) and d.y.min() >= 0 and d.y.max() < 10
        if not real_ok:
            problems.append(f"official files gave {d.x.shape}")
        detail += f"; official MNIST {d.x.shape}"
    else:
        detail += "; official MNIST not present, real-file check skipped"
    report(10, "IDX loader", not problems, detail)
