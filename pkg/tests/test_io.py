import json
import math

import numpy as np
import pytest

from fairtax import io as fio
from fairtax.core import (
    InputFormatError,
    RankingLists,
    RankingProbabilities,
    ScoreMatrix,
    TradeoffPoint,
)

from .conftest import feasible_probs, random_scores


def test_dense_single_row(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("0,1,2\n0.2,0.7,0.1\n", encoding="utf-8")
    scores = fio.load_scores(path, format="dense")
    assert np.array_equal(scores.w, [[0.2, 0.7, 0.1]])
    assert np.array_equal(scores.gamma, np.ones(3))


def test_dense_round_trip_bitwise(rng, tmp_path):
    scores = random_scores(rng, 5, 7)
    path = tmp_path / "scores.csv"
    fio.save_scores(scores, path)
    again = fio.load_scores(path, format="dense")
    assert np.array_equal(scores.w, again.w)


def test_dense_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,1\n0.5,0.5\n0.5\n", encoding="utf-8")
    with pytest.raises(InputFormatError, match=r"bad\.csv:3"):
        fio.load_scores(path, format="dense")
    path.write_text("0,1\n0.5,oops\n", encoding="utf-8")
    with pytest.raises(InputFormatError, match=r"bad\.csv:2"):
        fio.load_scores(path, format="dense")


def test_ctr_range_enforced(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("0,1\n0.5,1.5\n", encoding="utf-8")
    with pytest.raises(InputFormatError, match="outside"):
        fio.load_scores(path, format="dense", mode="ctr")
    scores = fio.load_scores(path, format="dense", mode="exposure")
    assert scores.w[0, 1] == 1.5


def test_triplet_zero_fill_and_mapping(tmp_path):
    path = tmp_path / "triplet.csv"
    path.write_text(
        "user_id,item_id,score\n10,7,0.5\n10,3,0.25\n11,3,0.75\n",
        encoding="utf-8")
    scores = fio.load_scores(path, format="triplet")
    # ids sorted numerically: users [10, 11], items [3, 7]
    assert np.array_equal(scores.w, [[0.25, 0.5], [0.75, 0.0]])
    mapping = json.loads((tmp_path / "triplet.csv.mapping.json").read_text())
    assert mapping == {"users": ["10", "11"], "items": ["3", "7"]}


def test_triplet_duplicate_rejected(tmp_path):
    path = tmp_path / "triplet.csv"
    path.write_text("user_id,item_id,score\n1,2,0.5\n1,2,0.6\n", encoding="utf-8")
    with pytest.raises(InputFormatError, match="duplicate"):
        fio.load_scores(path, format="triplet")


def test_triplet_mapping_reused_on_reload(tmp_path):
    path = tmp_path / "triplet.csv"
    path.write_text("user_id,item_id,score\n2,9,0.5\n1,8,0.25\n", encoding="utf-8")
    first = fio.load_scores(path, format="triplet")
    again = fio.load_scores(path, format="triplet")  # sidecar now authoritative
    assert np.array_equal(first.w, again.w)
    assert fio.read_mapping(path)["items"] == ["8", "9"]


def test_bids_natural_log(tmp_path):
    path = tmp_path / "bids.csv"
    path.write_text(f"item_id,bid\n0,{math.e}\n1,{math.e ** 2}\n", encoding="utf-8")
    bids = fio.load_bids(path, 2)
    scores = fio.attach_bids(ScoreMatrix(w=np.ones((1, 2)), gamma=np.ones(2)), bids)
    assert scores.gamma[0] == pytest.approx(1.0)
    assert scores.gamma[1] == pytest.approx(2.0)
    assert np.array_equal(scores.bids, bids)


def test_unit_bids_rejected_without_override(tmp_path):
    path = tmp_path / "bids.csv"
    path.write_text("item_id,bid\n0,1\n1,1\n", encoding="utf-8")
    bids = fio.load_bids(path, 2)
    base = ScoreMatrix(w=np.ones((1, 2)), gamma=np.ones(2))
    with pytest.raises(InputFormatError, match="gamma override"):
        fio.attach_bids(base, bids)
    scores = fio.attach_bids(base, bids, gamma_override=1.0)
    assert np.array_equal(scores.gamma, np.ones(2))


def test_bids_catalog_scale_shape(tmp_path):
    path = tmp_path / "bids.csv"
    rows = "\n".join(f"{i},{(i % 7) + 2}" for i in range(149))
    path.write_text("item_id,bid\n" + rows + "\n", encoding="utf-8")
    assert fio.load_bids(path, 149).shape == (149,)


def test_bids_errors(tmp_path):
    path = tmp_path / "bids.csv"
    path.write_text("item_id,bid\n0,-3\n", encoding="utf-8")
    with pytest.raises(InputFormatError, match="must be finite and > 0"):
        fio.load_bids(path, 1)
    path.write_text("item_id,bid\n9,2\n", encoding="utf-8")
    with pytest.raises(InputFormatError, match="unknown item"):
        fio.load_bids(path, 1)
    path.write_text("item_id,bid\n0,2\n", encoding="utf-8")
    with pytest.raises(InputFormatError, match="missing bid"):
        fio.load_bids(path, 2)


def test_lists_round_trip(rng, tmp_path):
    lists = RankingLists(np.array([rng.choice(9, size=3, replace=False) for _ in range(6)]))
    path = tmp_path / "lists.csv"
    fio.save_lists(lists, path)
    assert path.read_text(encoding="utf-8").startswith("user_id,rank,item_id\n")
    again = fio.load_lists(path)
    assert np.array_equal(lists.lists, again.lists)


def test_probs_round_trip_12_digits(rng, tmp_path):
    probs = feasible_probs(rng, 4, 6, 2)
    path = tmp_path / "probs.csv"
    fio.save_probs(probs, path)
    again = fio.load_probs(path)
    assert np.abs(probs.x - again.x).max() < 1e-11


def test_tradeoff_table_empty_and_single(tmp_path):
    path = tmp_path / "sweep.csv"
    fio.save_tradeoff_points([], path)
    assert path.read_text(encoding="utf-8") == "t,ecn,ecpm,gini,pot\n"
    point = TradeoffPoint(tax_rate=0.0, ecn=1.25, ecpm=None, gini=0.5, pot=0.0)
    fio.save_tradeoff_points([point], path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[1] == "0,1.25,,0.5,0"
    loaded = fio.load_tradeoff_points(path)
    assert loaded == [point]


def test_tradeoff_table_with_bound_column(tmp_path):
    path = tmp_path / "sweep.csv"
    pts = [TradeoffPoint(tax_rate=1.0, ecn=2.0, ecpm=3.0, gini=0.25, pot=0.125)]
    fio.save_tradeoff_points(pts, path, pot_bounds=[0.5])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,ecn,ecpm,gini,pot,pot_bound"
    assert lines[1].endswith(",0.5")
    assert fio.load_tradeoff_points(path) == pts


def test_save_results_dispatch(rng, tmp_path):
    probs = feasible_probs(rng, 2, 4, 1)
    fio.save_results(probs, tmp_path / "p.csv")
    assert fio.load_probs(tmp_path / "p.csv").x.shape == (2, 4)
    lists = RankingLists(np.array([[0, 1]]))
    fio.save_results(lists, tmp_path / "l.csv")
    assert fio.load_lists(tmp_path / "l.csv").k == 2
    fio.save_results([TradeoffPoint(0.0, 1.0, None, 0.0, 0.0)], tmp_path / "t.csv")
    assert len(fio.load_tradeoff_points(tmp_path / "t.csv")) == 1
    with pytest.raises(Exception):
        fio.save_results(object(), tmp_path / "x.csv")


def test_missing_file_raises_with_path(tmp_path):
    missing = tmp_path / "nope.csv"
    with pytest.raises(FileNotFoundError, match="nope"):
        fio.load_scores(missing, format="dense")
