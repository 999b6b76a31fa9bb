"""End-to-end acceptance suite.

One test per headline guarantee, each printing a single PASS line on
success (visible with `pytest -s`; under `pytest -v` the test name and
verdict serve the same purpose).  Heavyweight runs are shared through
session fixtures so the whole file stays inside its runtime budgets.
"""

import time
from itertools import groupby

import numpy as np
import pytest

from gpfuse import evolve as ev
from gpfuse import operators as ops
from gpfuse.datamodel import SynthConfig, generate_synthetic
from gpfuse.fitness import stack_dataset
from gpfuse.metrics import confusion, mcc, sov, weighted_prf
from gpfuse.program import Program, complexity_terms, from_text, random_tree


def report(name):
    print(f"[ACCEPTANCE] {name}: PASS")


# --------------------------------------------------------------------------
# Shared benchmark run: 200 proteins, L=50, D=24, N=100, G=30


@pytest.fixture(scope="session")
def benchmark_splits():
    cfg = SynthConfig(n_proteins=200, length=50, dim=24)
    vcfg = SynthConfig(**{**cfg.__dict__, "split": "validation", "n_proteins": 100})
    train = stack_dataset(generate_synthetic(cfg, 42))
    validation = stack_dataset(generate_synthetic(vcfg, 43))
    return train, validation


@pytest.fixture(scope="session")
def benchmark_run(benchmark_splits):
    train, validation = benchmark_splits
    cfg = ev.EvolveConfig(population=100, generations=30, seed=42)
    started = time.perf_counter()
    archive, stats = ev.run_mogp(
        cfg, train, validation, workers=1, attach_metrics=False
    )
    return archive, stats, time.perf_counter() - started


# --------------------------------------------------------------------------
# Independent oracles, written from the metric definitions


def prf_oracle(pred, truth, mask):
    pred = pred[mask]
    truth = truth[mask]
    total = len(truth)
    precision = recall = f1 = 0.0
    for k in range(8):
        tp = int(np.sum((pred == k) & (truth == k)))
        fp = int(np.sum((pred == k) & (truth != k)))
        fn = int(np.sum((pred != k) & (truth == k)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        w = (tp + fn) / total
        precision += w * p
        recall += w * r
        f1 += w * f
    return precision, recall, f1


def mcc_oracle(cm):
    """Triple-loop covariance form of the multiclass coefficient."""
    n = cm.shape[0]
    num = 0.0
    for k in range(n):
        for l in range(n):
            for m in range(n):
                num += cm[k, k] * cm[l, m] - cm[k, l] * cm[m, k]
    t = cm.sum(axis=1)  # true counts
    p = cm.sum(axis=0)  # predicted counts
    s = cm.sum()
    d1 = s * s - float(p @ p)
    d2 = s * s - float(t @ t)
    if d1 <= 0 or d2 <= 0:
        return 0.0
    return num / np.sqrt(d1 * d2)


def sov_oracle(pred, truth, mask):
    obs = list(np.asarray(truth)[mask])
    pre = list(np.asarray(pred)[mask])

    def runs(seq):
        out, i = [], 0
        for label, grp in groupby(seq):
            n = len(list(grp))
            out.append((label, i, i + n - 1))
            i += n
        return out

    num = norm = 0.0
    for lab_o, s1, e1 in runs(obs):
        partners = [
            (s2, e2)
            for lab_p, s2, e2 in runs(pre)
            if lab_p == lab_o and not (e2 < s1 or s2 > e1)
        ]
        len_o = e1 - s1 + 1
        if not partners:
            norm += len_o
            continue
        norm += len_o * len(partners)
        for s2, e2 in partners:
            len_p = e2 - s2 + 1
            minov = min(e1, e2) - max(s1, s2) + 1
            maxov = max(e1, e2) - min(s1, s2) + 1
            delta = min(maxov - minov, minov, len_o // 2, len_p // 2)
            num += len_o * (minov + delta) / maxov
    return 100.0 * num / norm


# --------------------------------------------------------------------------


def test_metric_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        length = int(rng.integers(5, 41))
        truth = rng.integers(8, size=length)
        pred = np.where(
            rng.random(length) < 0.6, truth, rng.integers(8, size=length)
        )
        mask = rng.random(length) < 0.9
        if not mask.any():
            mask[0] = True
        cm = confusion(pred, truth, mask)
        got = weighted_prf(cm)
        expected = prf_oracle(pred, truth, mask)
        np.testing.assert_allclose(got, expected, atol=1e-9)
        # weighted recall is exactly the Q8 accuracy
        q8 = np.trace(cm) / cm.sum()
        assert abs(got[1] - q8) < 1e-12
        assert abs(mcc(cm) - mcc_oracle(cm)) < 1e-9
        assert abs(
            sov(pred, truth, mask) - sov_oracle(pred, truth, mask)
        ) < 1e-9
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    report(f"metric oracles (1000 instances, {elapsed:.1f}s)")


def test_complexity_formula():
    p = from_text("(Root1 T5_CNN2)")
    assert complexity_terms(p).q_c == pytest.approx(11.2)
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        program = Program(random_tree("grow", int(rng.integers(2, 7)), rng))
        terms = complexity_terms(program)
        terminals = [n.terminal for n in program.root.walk() if n.is_terminal]
        f = len(set(terminals))
        v = len({t.view for t in terminals})
        nodes = sum(1 for _ in program.root.walk())
        assert terms.q_c == f + 10 * v + 0.1 * nodes
    report("complexity formula (10^4 programs, exact)")


def test_operator_suite():
    started = time.perf_counter()
    rng = np.random.default_rng(11)
    for sigma in (1, 2, 3, 4):
        assert abs(ops.log_kernel(sigma).sum()) < 1e-12
    for _ in range(300):
        l = int(rng.integers(2, 24))
        d = int(rng.integers(2, 33))
        a = rng.normal(size=(l, d)) * 10.0 ** int(rng.integers(-2, 3))
        b = rng.normal(size=(l, int(rng.integers(2, 33))))
        n1, n2 = (ops.sample_erc("weight_n", rng) for _ in range(2))
        for tag in ops.BINARY_TAGS:
            ercs = (n1, n2) if tag in ("W_Add", "W_Sub") else ()
            out = ops.apply_operator(tag, [a, b], ercs)
            assert out.shape == (l, max(d, b.shape[1]))
            assert np.isfinite(out).all()
        for tag in ops.UNARY_SIMPLE_TAGS:
            out = ops.apply_operator(tag, [a], ())
            assert out.shape == (l, d) and np.isfinite(out).all()
        out = ops.logf(a, ops.sample_erc("sigma", rng))
        assert out.shape == (l, d) and np.isfinite(out).all()
        # DFT magnitude against the naive transform
        out = ops.fft_mag(a, ops.ErcValue("fft_mode", 1))
        assert out.shape == (l, d // 2 + 1) and np.isfinite(out).all()
        row = a[0]
        for k in range(d // 2 + 1):
            acc = sum(
                row[t] * np.exp(-2j * np.pi * k * t / d) for t in range(d)
            )
            assert abs(out[0, k] - abs(acc)) < 1e-9
        # pooling and concatenation against brute force
        pooled = ops.maxp(a)
        for j in range(0, d - 1, 2):
            np.testing.assert_array_equal(
                pooled[:, j // 2], np.maximum(a[:, j], a[:, j + 1])
            )
        if d % 2:
            np.testing.assert_array_equal(pooled[:, -1], a[:, -1])
        cat = ops.root_concat([a, b])
        np.testing.assert_array_equal(cat[:, :d], a)
        np.testing.assert_array_equal(cat[:, d:], b)
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    report(f"operator suite (shape/totality/DFT/LoG/pool/concat, {elapsed:.1f}s)")


def test_nsga2_soundness(benchmark_run):
    from gpfuse.fitness import FitnessPair

    rng = np.random.default_rng(5)
    fits = [
        FitnessPair(float(rng.random()), float(rng.integers(10, 80)))
        for _ in range(200)
    ]
    remaining = set(range(200))
    expected = []
    while remaining:
        front = [
            i
            for i in remaining
            if not any(
                j != i and ev.dominates(fits[j], fits[i]) for j in remaining
            )
        ]
        expected.append(sorted(front))
        remaining -= set(front)
    got = [sorted(f) for f in ev.fast_nondominated_sort(fits)]
    assert got == expected

    archive, _, _ = benchmark_run
    pairs = [ind.fit for ind in archive.entries]
    for i, a in enumerate(pairs):
        for j, b in enumerate(pairs):
            assert i == j or not ev.dominates(a, b)
    report("NSGA-II fronts match O(n^3) oracle; archive non-dominated")


def test_evolution_behavior(benchmark_splits, benchmark_run):
    train, validation = benchmark_splits
    archive, stats, elapsed = benchmark_run
    assert elapsed < 600.0

    singles = ev.single_terminal_baselines(train, validation)
    best_single = max(singles.values())
    best_evolved = max(ind.fit.q_a for ind in archive.entries)
    assert best_evolved > best_single

    best_per_gen = [s.best_q_a for s in stats]
    assert all(b >= a for a, b in zip(best_per_gen, best_per_gen[1:]))
    assert all(0.5 <= s.mu <= 1.0 for s in stats)

    cfg = ev.EvolveConfig(population=100, generations=30, seed=42)
    threaded, _ = ev.run_mogp(
        cfg, train, validation, workers=4, attach_metrics=False
    )
    assert threaded.export_lines() == archive.export_lines()
    report(
        "evolution behavior (best {:.4f} > single {:.4f}; monotone; "
        "mu in range; worker-invariant; {:.0f}s)".format(
            best_evolved, best_single, elapsed
        )
    )


def test_knowledge_transfer_efficacy():
    rows = []
    for seed in range(5):
        cfg = SynthConfig(n_proteins=60, length=40, dim=16, noise_scale=0.5)
        vcfg = SynthConfig(
            **{**cfg.__dict__, "split": "validation", "n_proteins": 30}
        )
        train = stack_dataset(generate_synthetic(cfg, 1000 + seed))
        validation = stack_dataset(generate_synthetic(vcfg, 2000 + seed))
        scfg = ev.EvolveConfig(population=30, generations=4, seed=seed)
        pool = ev.run_sogp(scfg, train, validation, runs=2, picks_per_run=5)
        priors = [ind.program for ind in pool]
        mcfg = ev.EvolveConfig(population=40, generations=8, seed=seed)
        with_kt, _ = ev.run_mogp(
            mcfg, train, validation, priors=priors, attach_metrics=False
        )
        without_kt, _ = ev.run_mogp(
            mcfg, train, validation, priors=[], attach_metrics=False
        )
        rows.append(
            (
                seed,
                max(i.fit.q_a for i in with_kt.entries),
                max(i.fit.q_a for i in without_kt.entries),
            )
        )
    print("\nseed  with-KT  without-KT")
    for seed, kt, no_kt in rows:
        print(f"{seed:>4}  {kt:.4f}   {no_kt:.4f}")
    mean_kt = float(np.mean([r[1] for r in rows]))
    mean_no = float(np.mean([r[2] for r in rows]))
    print(f"mean  {mean_kt:.4f}   {mean_no:.4f}")
    assert mean_kt >= mean_no
    report(f"KT efficacy over 5 seeds (mean {mean_kt:.4f} >= {mean_no:.4f})")


def test_fixed_fusion_ordering(benchmark_splits, benchmark_run):
    train, validation = benchmark_splits
    archive, _, _ = benchmark_run
    best_evolved = max(ind.fit.q_a for ind in archive.entries)
    reports = ev.fixed_fusion_baselines(train, validation)
    for name in ("Add", "Max", "Min", "Mul", "Concatenation"):
        assert best_evolved >= reports[name]["Q8"], name
    assert reports["Mul"]["Q8"] < reports["Add"]["Q8"]
    report(
        "fixed-fusion ordering (evolved {:.4f} >= all baselines; "
        "Mul {:.4f} < Add {:.4f})".format(
            best_evolved, reports["Mul"]["Q8"], reports["Add"]["Q8"]
        )
    )


def test_checkpoint_resume(tmp_path):
    cfg = SynthConfig(n_proteins=40, length=30, dim=12)
    vcfg = SynthConfig(
        **{**cfg.__dict__, "split": "validation", "n_proteins": 20}
    )
    train = stack_dataset(generate_synthetic(cfg, 8))
    validation = stack_dataset(generate_synthetic(vcfg, 9))
    ecfg = ev.EvolveConfig(population=20, generations=6, seed=4)

    full_dir = tmp_path / "full"
    archive_full, _ = ev.run_mogp(
        ecfg, train, validation,
        checkpoint_dir=str(full_dir), attach_metrics=False,
    )
    (tmp_path / "full.txt").write_text(archive_full.export_lines())

    # simulate a kill after generation 3, then resume
    part_dir = tmp_path / "part"
    part_dir.mkdir()
    for g in range(4):
        name = f"gen_{g:04d}.json"
        (part_dir / name).write_bytes((full_dir / name).read_bytes())
    archive_resumed, _ = ev.run_mogp(
        ecfg, train, validation,
        checkpoint_dir=str(part_dir), resume=True, attach_metrics=False,
    )
    (tmp_path / "resumed.txt").write_text(archive_resumed.export_lines())

    assert (tmp_path / "full.txt").read_bytes() == (
        tmp_path / "resumed.txt"
    ).read_bytes()
    report("checkpoint resume (byte-identical archive)")
