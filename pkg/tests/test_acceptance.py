"""Exit criteria, one test each; the summary prints a PASS/FAIL/SKIP line per criterion.

C7 needs a GTD extract: set GTD_CSV to its path. Set GTD_FULL_GRID=1 as well
to train the whole grid and report the directional claims (slow).
"""
import os
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest

from gradcheck import check_grads, check_model_grads, weighted_sum
from metagraph_forecast.dataset import split_series
from metagraph_forecast.evaluate import element_wise, empirical_top_set, predicted_top_set, set_wise
from metagraph_forecast.features import (CentralitySeries, FeatureCatalog, degree_centrality, meta_graph,
                                         normalize_centrality)
from metagraph_forecast.harness import ExperimentConfig, read_predictions, run_grid
from metagraph_forecast.models import MODEL_KINDS, ModelSpec, build
from metagraph_forecast.nn import tensor as T
from metagraph_forecast.synth import planted_rule_spec, synthesize

POLICE, MILITARY, BUSINESS = 0, 1, 2


def brute_force(D):
    """Pairwise same-day co-occurrence weights and off-diagonal degree, by loops."""
    rows, n = len(D), len(D[0])
    G = [[sum(D[t][i] * D[t][j] for t in range(rows)) for j in range(n)] for i in range(n)]
    degree = [sum(G[i][j] for j in range(n) if j != i) for i in range(n)]
    top = max(degree)
    norm = [Fraction(p, top) if top else Fraction(0) for p in degree]
    return G, degree, norm


@pytest.mark.acceptance("C1 meta-graph oracle equivalence")
def test_c1_meta_graph_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        D = rng.integers(0, 10, size=(2, n))
        G = meta_graph(D)
        degree = degree_centrality(G)
        norm = normalize_centrality(degree)
        G_ref, degree_ref, norm_ref = brute_force(D.tolist())
        assert G.tolist() == G_ref
        assert degree.tolist() == degree_ref
        assert np.abs(norm - np.array([float(f) for f in norm_ref])).max(initial=0) <= 1e-12
    assert time.perf_counter() - t0 < 5.0


@pytest.mark.acceptance("C2 sample weapons slice")
def test_c2_sample_slice():
    D = np.array([[5, 1, 0], [1, 0, 2]])
    G = meta_graph(D)
    assert G.tolist() == [[26, 5, 2], [5, 1, 0], [2, 0, 4]]
    degree = degree_centrality(G)
    assert degree.tolist() == [7, 5, 2]
    exact = [Fraction(int(p), int(degree.max())) for p in degree]
    assert exact == [Fraction(1), Fraction(5, 7), Fraction(2, 7)]
    assert normalize_centrality(degree).tolist() == [float(f) for f in exact]


@pytest.mark.acceptance("C3 gradient suite")
def test_c3_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    x3 = rng.standard_normal((2, 5, 3))
    unary = [T.relu, T.tanh, T.sigmoid, T.identity, T.flatten, lambda a: T.flip(a, 1),
             lambda a: a[:, 1:4], lambda a: T.reshape(a, (2, -1)), lambda a: T.maxpool1d(a, 2)]
    for op in unary:
        check_grads(lambda a: weighted_sum(op(a)), [x3])
    a, b = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    for op in (T.add, T.sub, T.mul):
        check_grads(lambda p, q: weighted_sum(op(p, q)), [a, b])
    check_grads(T.mse_loss, [a, b])
    check_grads(lambda p, q: weighted_sum(T.bias_add(p, q)), [a, rng.standard_normal(3)])
    check_grads(lambda p, q: weighted_sum(T.matmul(p, q)), [x3, rng.standard_normal((3, 4))])
    check_grads(lambda p, q: weighted_sum(T.concat([p, q], axis=-1)), [a, b])

    F, Y = 6, 3
    for w in (4, 5):
        x = rng.random((3, w, F))
        y = rng.random((3, Y))
        for kind in MODEL_KINDS[1:]:
            model = build(ModelSpec(kind, w, F, Y, units=3, seed=w))
            check_model_grads(model, x, y)
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.acceptance("C4 metric hand cases")
def test_c4_metrics():
    assert empirical_top_set([1.0, 0.7, 0.7, 0.0]) == {0, 1}
    assert empirical_top_set([0.0, 0.0, 0.0]) == frozenset()
    assert empirical_top_set([0.0, 0.4, 0.0]) == {1}
    assert predicted_top_set([0.05, 0.05, 0.05], 0.1) == frozenset()
    assert predicted_top_set([0.9, 0.08, 0.5]) == {0, 2}
    assert predicted_top_set([0.11, 0.02, 0.01]) == {0, 1}
    actual, predicted = {POLICE, MILITARY}, {POLICE, BUSINESS}
    assert element_wise(actual, predicted) == 1 and set_wise(actual, predicted) == 0.5
    assert element_wise(actual, actual) == 1 and set_wise(actual, actual) == 1.0
    assert set_wise({POLICE}, predicted) == 1.0
    # both no-attack branches
    assert element_wise(set(), {POLICE}) == 0 and set_wise(set(), {POLICE}) == 0.0
    assert element_wise(set(), set()) == 1 and set_wise(set(), set()) == 1.0

    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(2, 10))
        truth = np.where(rng.random(n) < 0.4, 0.0, rng.random(n))
        pred = rng.uniform(-0.2, 1.2, n) * rng.choice([0.05, 1.0])
        actual, predicted = empirical_top_set(truth), predicted_top_set(pred)
        assert set_wise(actual, predicted) <= element_wise(actual, predicted)


@pytest.mark.acceptance("C5 split arithmetic")
def test_c5_split():
    cat = FeatureCatalog(("a",), ("b",), ("c", "d"))
    s = CentralitySeries("meta_graph", np.zeros((3287, 4)), cat, np.zeros(3287, int), None)
    assert [len(p) for p in split_series(s)] == [2300, 658, 329]


@pytest.mark.acceptance("C6 synthetic end-to-end")
def test_c6_synthetic(tmp_path):
    t0 = time.perf_counter()
    spec = planted_rule_spec(n_units=600, n_events=5000)
    syn = synthesize(spec, 0)
    cfg = ExperimentConfig(country=spec.country, window_start=spec.start.isoformat(),
                           window_end=spec.end.isoformat(), min_presence=10,
                           models=["baseline", "fnn"], widths=[1], output_dir=str(tmp_path))
    report = run_grid(cfg, syn.events)
    cells = {(c["model"], c["mode"]): c for c in report["cells"] if c["status"] == "run"}

    fnn = cells[("fnn", "meta_graph")]
    assert fnn["set_accuracy"] >= 0.8

    # hand oracle: the target pairs are disjoint, so persistence scores 1 exactly
    # when the regime did not change between the previous and the labelled unit
    base = cells[("baseline", "meta_graph")]
    units, _, _ = read_predictions(tmp_path / base["artifacts"] / "predictions.csv")
    regime = syn.regimes[1:]  # regime of unit u
    expected = np.mean([regime[u] == regime[u - 1] for u in units])
    assert base["set_accuracy"] == expected

    (row,) = report["comparison"]
    assert row["model"] == "fnn" and row["delta_set_accuracy"] > 0
    assert time.perf_counter() - t0 < 300


TABLE2_BASELINE = {
    "Afghanistan": {"set_accuracy": 0.1570, "element_accuracy": 0.3140, "mse": 0.7733},
    "Iraq": {"set_accuracy": 0.0701, "element_accuracy": 0.1371, "mse": 0.2371},
}


@pytest.mark.acceptance("C7 GTD baseline reproduction")
def test_c7_gtd(tmp_path):
    path = os.environ.get("GTD_CSV")
    if not path:
        pytest.skip("GTD_CSV not set; the GTD extract is not redistributable")
    full = os.environ.get("GTD_FULL_GRID") == "1"
    misses = []
    for country, target in TABLE2_BASELINE.items():
        cfg = ExperimentConfig(gtd_csv=path, country=country, output_dir=str(tmp_path / country),
                               **({} if full else {"models": ["baseline"], "widths": [1],
                                                   "modes": ["meta_graph"]}))
        report = run_grid(cfg)
        base = next(c for c in report["cells"] if c["model"] == "baseline" and c["status"] == "run")
        for k, v in target.items():
            print(f"{country} baseline {k}: {base[k]:.4f} (table {v:.4f})")
            if abs(base[k] - v) > 0.02:
                misses.append(f"{country} {k} {base[k]:.4f} vs {v:.4f}")
        if full:
            _flag_directional_claims(country, report)
    assert not misses, "; ".join(misses)


def _flag_directional_claims(country, report):
    if country == "Afghanistan":
        for row in report["comparison"]:
            if row["delta_set_accuracy"] <= 0:
                warnings.warn(f"flag: {row['model']} w={row['width']} meta minus shallow "
                              f"set accuracy is {row['delta_set_accuracy']:.4f}")
    best = {}
    for c in report["cells"]:
        if c["status"] == "run" and c["mode"] == "meta_graph":
            best[c["model"]] = max(best.get(c["model"], -1.0), c["set_accuracy"])
    leader = max(best, key=best.get)
    if leader != "bilstm":
        warnings.warn(f"flag: best set accuracy in {country} comes from {leader}, not bilstm")


@pytest.mark.acceptance("C8 determinism")
def test_c8_determinism(tmp_path):
    spec = planted_rule_spec(n_units=100, n_events=800)
    events = synthesize(spec, 3).events
    outputs = []
    for name in ("first", "second"):
        cfg = ExperimentConfig(country=spec.country, window_start=spec.start.isoformat(),
                               window_end=spec.end.isoformat(), min_presence=1, widths=[1, 5],
                               epochs=3, units=4, output_dir=str(tmp_path / name))
        run_grid(cfg, events)
        outputs.append((tmp_path / name / "grid_report.json").read_bytes())
    assert outputs[0] == outputs[1]
