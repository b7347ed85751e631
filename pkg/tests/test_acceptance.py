"""Acceptance suite: one test per headline criterion, each printing a single
PASS/FAIL line. The heavyweight training runs are shared module-scope
fixtures; everything is seeded and deterministic.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from catride import data, evaluation, geometry, losses, metrics, trainer
from catride.adversary import PerturbationConfig, pgd_perturb, phase_targets
from catride.cli import main as cli_main
from catride.evaluation import ars_general, ars_ranking_paper
from catride.manifest import read_manifest
from catride.model import EmbeddingModel
from catride.triplets import TripletBatch

from conftest import central_diff, rel_error, rng, unit_rows


def _announce(capsys, label, ok):
    with capsys.disabled():
        print(f"[{label}] {'PASS' if ok else 'FAIL'}")


# -- shared training runs ---------------------------------------------------

ENTANGLED = data.SynthSpec(
    class_count=8, per_class=40, dim=32,
    cluster_spread=0.12, center_separation=0.22, seed=7,
)


def _train(mode, epochs, seed):
    cfg = trainer.TrainConfig(mode=mode, epochs=epochs, batch_size=32,
                              eta0=1.6, attention=200.0, seed=seed)
    start = time.perf_counter()
    result = trainer.run_training(_train.dataset, cfg)
    return result, time.perf_counter() - start


_train.dataset = data.generate_clusters(ENTANGLED)


@pytest.fixture(scope="module")
def benign30():
    return _train("benign", 30, 0)


@pytest.fixture(scope="module")
def tride30():
    return _train("tride", 30, 0)


@pytest.fixture(scope="module")
def catride30():
    return _train("ca-tride", 30, 0)


@pytest.fixture(scope="module")
def benign100():
    return _train("benign", 100, 1)


@pytest.fixture(scope="module")
def catride100():
    return _train("ca-tride", 100, 1)


def _late_third(log):
    return log[2 * len(log) // 3:]


def _final_dbar(log):
    last_epoch = log[-1]["epoch"]
    return float(np.mean([r["d_bar"] for r in log if r["epoch"] == last_epoch]))


# -- 1: gradient correctness ------------------------------------------------

def test_criterion_1_gradient_correctness(capsys):
    start = time.perf_counter()
    loss_names = ("triplet", "cap", "anp", "hm")
    worst = 0.0
    for case in range(100):
        g = rng((case, 0xACC1))
        model = EmbeddingModel.initialize([6, 12, 6], seed=case)
        x_a = g.uniform(size=(4, 6))
        x_p = g.uniform(size=(4, 6))
        x_n = g.uniform(size=(4, 6))
        emb_a = model.forward(x_a)
        emb_p = model.forward(x_p)
        emb_n = model.forward(x_n)
        name = loss_names[case % 4]

        if name == "triplet":
            _, ga, gp, gn = losses.triplet_loss_grad(emb_a, emb_p, emb_n, 2.5)

            def value(ea, ep, en):
                dp = float(np.mean(metrics.aligned_distances(ea, ep)))
                dn = float(np.mean(metrics.aligned_distances(ea, en)))
                return dp - dn + 2.5
        elif name == "cap":
            wp, wn = losses.frozen_weights(emb_a, emb_p, emb_n, 5.0)
            _, ga, gp, gn = losses.cap_loss_grad(emb_a, emb_p, emb_n, 5.0,
                                                 clip=False)

            def value(ea, ep, en):
                return losses.cap_loss_frozen(ea, ep, en, wp, wn, clip=False)
        elif name == "anp":
            a0 = emb_a.copy()
            wp, wn = losses.frozen_weights(emb_a, emb_p, emb_n, 5.0)
            _, nv = losses.top_rank_split(emb_a, emb_p, emb_n)
            _, ga, gp, gn = losses.anp_loss_grad(emb_a, emb_p, emb_n, a0, 5.0,
                                                 clip=False)

            def value(ea, ep, en):
                return losses.anp_loss_frozen(ea, ep, en, a0, wp, wn, nv,
                                              clip=False)
        else:
            _, ga, gp, gn = losses.hm_loss_grad(emb_a, emb_p, emb_n, 0.3)

            def value(ea, ep, en):
                return losses.hm_loss_frozen(ea, ep, en, 0.3)

        # chain to input space through the model, then compare against
        # central finite differences of the frozen composite function
        analytic = [
            model.backward(x_a, ga).input_grads,
            model.backward(x_p, gp).input_grads,
            model.backward(x_n, gn).input_grads,
        ]
        inputs = [x_a, x_p, x_n]
        for which in range(3):
            def composite(x):
                xs = list(inputs)
                xs[which] = x
                return value(model.forward(xs[0]), model.forward(xs[1]),
                             model.forward(xs[2]))

            numeric = central_diff(composite, inputs[which], h=1e-6)
            worst = max(worst, rel_error(analytic[which], numeric))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 60.0
    _announce(capsys, "criterion 1: gradient correctness", ok)
    assert worst < 1e-4, f"worst finite-difference relative error {worst}"
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeds 60s"


# -- 2: collapseness reduces to hardness ------------------------------------

def test_criterion_2_collapseness_reduction(capsys):
    ok = True
    for case in range(1000):
        g = rng((case, 0xACC2))
        b = int(g.integers(2, 12))
        d = int(g.integers(2, 16))
        a = unit_rows(g, b, d)
        p = unit_rows(g, b, d)
        n = unit_rows(g, b, d)
        if metrics.collapseness(a, p, n, 0.0) != metrics.hardness(a, p, n):
            ok = False
            break
    _announce(capsys, "criterion 2: collapseness reduction", ok)
    assert ok, "collapseness at zero attention differed from hardness"


# -- 3: geometry oracle -----------------------------------------------------

def test_criterion_3_geometry_oracle(capsys):
    start = time.perf_counter()
    g = rng(0xACC3)
    worst_rel = 0.0
    worst_ratio = 0.0
    for _ in range(50):
        theta = float(g.uniform(0.3, np.pi))
        dh = float(g.uniform(1e-5, 1e-3))
        measured = {}
        for method in geometry.METHODS:
            spec = geometry.TripletGeometry(theta, dh, method)
            cf = geometry.closed_form_shift(spec)
            m = geometry.numeric_shift_oracle(spec)
            measured[method] = m
            worst_rel = max(worst_rel, abs(m - cf) / cf)
        for decoupled in ("cap", "anp"):
            ratio = measured[decoupled] / measured["sip"]
            worst_ratio = max(worst_ratio, abs(ratio - 2.0))
    elapsed = time.perf_counter() - start
    ok = worst_rel < 1e-3 and worst_ratio <= 0.01 and elapsed < 60.0
    _announce(capsys, "criterion 3: geometry oracle", ok)
    assert worst_rel < 1e-3, f"worst oracle relative error {worst_rel}"
    assert worst_ratio <= 0.01, f"shift ratio off by {worst_ratio}"
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeds 60s"


# -- 4: budget invariants ---------------------------------------------------

def test_criterion_4_budget_invariants(capsys):
    model = EmbeddingModel.initialize([32, 24, 12], seed=4)
    dataset = _train.dataset
    tol = 1e-12
    ok = True
    detail = ""
    for seed in range(6):
        g = rng((seed, 0xACC4))
        cls = g.permutation(dataset.class_count)
        anchors, positives, negatives = [], [], []
        for k in range(8):
            members = np.flatnonzero(dataset.labels == cls[k % len(cls)])
            a, p = g.choice(members, size=2, replace=False)
            n = int(g.choice(np.flatnonzero(dataset.labels != cls[k % len(cls)])))
            anchors.append(int(a))
            positives.append(int(p))
            negatives.append(n)
        batch = TripletBatch.from_indices(dataset.inputs, anchors, positives,
                                          negatives)
        for phase in ("cap", "anp", "sip"):
            for kind in ("ca", "naive"):
                cfg = PerturbationConfig(epsilon=8 / 255, alpha=1 / 255,
                                         max_steps=16, phase=phase,
                                         loss_kind=kind)
                res = pgd_perturb(model, batch, cfg, attention=200.0)
                deltas = (res.delta_a, res.delta_p, res.delta_n)
                for delta in deltas:
                    if np.abs(delta).max() > cfg.epsilon + tol:
                        ok, detail = False, f"{phase}/{kind}: budget exceeded"
                for x in (res.batch.inputs_a, res.batch.inputs_p,
                          res.batch.inputs_n):
                    if x.min() < 0.0 or x.max() > 1.0:
                        ok, detail = False, f"{phase}/{kind}: left the input box"
                moves = phase_targets(phase)
                clean = (batch.inputs_a, batch.inputs_p, batch.inputs_n)
                out = (res.batch.inputs_a, res.batch.inputs_p,
                       res.batch.inputs_n)
                for moved, before, after in zip(moves, clean, out):
                    if not moved and not np.array_equal(before, after):
                        ok, detail = False, f"{phase}/{kind}: purity violated"
    _announce(capsys, "criterion 4: budget invariants", ok)
    assert ok, detail


# -- 5: collapse dichotomy --------------------------------------------------

def test_criterion_5_collapse_dichotomy(capsys, benign30, tride30, catride30):
    benign_dbar = _final_dbar(benign30[0].log)

    tride_sep = float(np.median([r["separability"]
                                 for r in _late_third(tride30[0].log)]))
    tride_dbar = _final_dbar(tride30[0].log)
    ca_sep = float(np.median([r["separability"]
                              for r in _late_third(catride30[0].log)]))
    ca_dbar = _final_dbar(catride30[0].log)

    naive_collapses = tride_sep <= 0.0 and tride_dbar <= 0.5 * benign_dbar
    ca_survives = ca_sep > 0.0 and ca_dbar >= 0.5 * benign_dbar
    ok = naive_collapses and ca_survives
    _announce(capsys, "criterion 5: collapse dichotomy", ok)
    assert naive_collapses, (
        f"naive run did not collapse: sep={tride_sep:+.3f}, "
        f"d_bar={tride_dbar:.3f} vs benign {benign_dbar:.3f}")
    assert ca_survives, (
        f"collapse-aware run collapsed: sep={ca_sep:+.3f}, "
        f"d_bar={ca_dbar:.3f} vs benign {benign_dbar:.3f}")


# -- 6: stronger adversary --------------------------------------------------

def test_criterion_6_stronger_adversary(capsys, catride30):
    late = _late_third(catride30[0].log)
    by_phase = {
        phase: float(np.mean([r["mean_shift"] for r in late
                              if r["phase"] == phase and r["n_perturbed"]]))
        for phase in ("cap", "anp")
    }
    sip = float(np.mean([r["mean_shift_sip"] for r in late
                         if "mean_shift_sip" in r]))
    ok = by_phase["cap"] >= 1.2 * sip and by_phase["anp"] >= 1.2 * sip
    _announce(capsys, "criterion 6: stronger adversary", ok)
    assert by_phase["cap"] >= 1.2 * sip, (
        f"cap shift {by_phase['cap']:.3f} < 1.2 x sip {sip:.3f}")
    assert by_phase["anp"] >= 1.2 * sip, (
        f"anp shift {by_phase['anp']:.3f} < 1.2 x sip {sip:.3f}")


# -- 7: robustness ordering -------------------------------------------------

def test_criterion_7_robustness_ordering(capsys, benign100, catride100):
    dataset = _train.dataset
    cfg = PerturbationConfig(epsilon=8 / 255, alpha=1 / 255, max_steps=16)
    start = time.perf_counter()
    benign_report = evaluation.run_attack_suite(
        benign100[0].model, dataset.inputs, dataset.labels,
        evaluation.ATTACK_KINDS, 50, cfg, seed=3)
    ca_report = evaluation.run_attack_suite(
        catride100[0].model, dataset.inputs, dataset.labels,
        evaluation.ATTACK_KINDS, 50, cfg, seed=3)
    elapsed = (time.perf_counter() - start) + benign100[1] + catride100[1]

    gap = ca_report["overall_ars"] - benign_report["overall_ars"]
    benign_recall_ars = benign_report["per_attack_ars"]["recall"]
    ok = gap >= 15.0 and benign_recall_ars <= 20.0 and elapsed < 600.0
    _announce(capsys, "criterion 7: robustness ordering", ok)
    assert gap >= 15.0, (
        f"overall ARS gap {gap:+.1f}pp < 15pp "
        f"(ca-tride {ca_report['overall_ars']:.1f}, "
        f"benign {benign_report['overall_ars']:.1f})")
    assert benign_recall_ars <= 20.0, (
        f"benign recall ARS {benign_recall_ars:.1f} > 20")
    assert elapsed < 600.0, f"runtime {elapsed:.1f}s exceeds 600s"


# -- 8: ARS algebra ---------------------------------------------------------

def test_criterion_8_ars_algebra(capsys):
    g = rng(0xACC8)
    ok = True
    for _ in range(10000):
        o_i = float(g.integers(1, 1000))
        o_g = float(g.integers(0, 1000))
        if o_g == o_i:
            continue
        o_r = float(g.integers(0, 1000))
        if ars_general(o_i, o_i, o_g) != 100.0:       # no impact
            ok = False
        if ars_general(o_i, o_g, o_g) != 0.0:         # goal reached
            ok = False
        r = int(o_i)
        r_tilde = int(g.integers(0, r + 1))           # r~ <= r
        if ars_ranking_paper(r, r_tilde) != ars_general(r, r_tilde, 0.0):
            ok = False
        if not ok:
            break
    _announce(capsys, "criterion 8: ars algebra", ok)
    assert ok, "ARS fixed point or ranking identity violated"


# -- 9: schedule endpoints --------------------------------------------------

def test_criterion_9_schedule_endpoints(capsys):
    eta0, n_total = 1.6, 37
    endpoints = (
        trainer.eta_schedule(0, n_total, eta0) == eta0
        and trainer.eta_schedule(n_total, n_total, eta0) == 0.75 * eta0
        and trainer.alpha_fraction(n_total, n_total) == 1.0
    )
    alternation = trainer.phase_for_batch("ca-tride", 0) == "cap"
    for total in (999, 1000):
        phases = [trainer.phase_for_batch("ca-tride", b) for b in range(total)]
        if phases.count("cap") - phases.count("anp") not in (0, 1):
            alternation = False
    ok = endpoints and alternation
    _announce(capsys, "criterion 9: schedule endpoints", ok)
    assert endpoints, "eta/alpha schedule endpoints are not exact"
    assert alternation, "cap/anp alternation is unbalanced"


# -- 10: reproducibility ----------------------------------------------------

def test_criterion_10_reproducibility(capsys, tmp_path):
    base = tmp_path / "first"
    replay = tmp_path / "replay"

    runs = {}
    assert cli_main(["gen-data", "--preset", "entangled", "--k", "4",
                     "--per-class", "8", "--dim", "6", "--seed", "7",
                     "--out", str(base / "data")]) == 0
    runs["gen-data"] = base / "data"
    csv = str(base / "data" / "dataset.csv")

    assert cli_main(["train", "--data", csv, "--mode", "ca-tride",
                     "--epochs", "2", "--batch-size", "8", "--seed", "5",
                     "--out", str(base / "train")]) == 0
    runs["train"] = base / "train"
    ckpt = str(base / "train" / "checkpoint_last.json")

    assert cli_main(["attack", "--checkpoint", ckpt, "--data", csv,
                     "--attacks", "ca+,qa-,recall", "--trials", "3",
                     "--steps", "4", "--seed", "2",
                     "--out", str(base / "attack")]) == 0
    runs["attack"] = base / "attack"

    assert cli_main(["eval", "--checkpoint", ckpt, "--data", csv,
                     "--out", str(base / "eval")]) == 0
    runs["eval"] = base / "eval"

    assert cli_main(["geometry-check", "--grid-points", "5",
                     "--out", str(base / "geo")]) == 0
    runs["geometry-check"] = base / "geo"

    assert cli_main(["report", "--log",
                     str(base / "train" / "collapse_log.jsonl"),
                     "--out", str(base / "report")]) == 0
    runs["report"] = base / "report"

    ok = True
    detail = ""
    for name, out_dir in runs.items():
        manifest = read_manifest(out_dir / "manifest.json")
        redo = replay / name
        code = cli_main(["rerun", "--manifest", str(out_dir / "manifest.json"),
                         "--out", str(redo)])
        if code != 0:
            ok, detail = False, f"{name}: rerun exited {code}"
            continue
        for key, path in manifest["outputs"].items():
            original = out_dir / Path(path).name
            if original.read_bytes() != (redo / original.name).read_bytes():
                ok, detail = False, f"{name}: output {key} differs on rerun"
    _announce(capsys, "criterion 10: reproducibility", ok)
    assert ok, detail
