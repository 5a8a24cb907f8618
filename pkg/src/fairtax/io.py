"""CSV ingestion and persistence for score matrices, bids, ranking
outputs and trade-off tables.

All files are UTF-8 with a mandatory header row and "\\n" line endings.
Numbers are written with locale-independent decimal formatting: score
matrices at full precision (bitwise round-trip), everything else at 12
significant digits. Triplet score files get an id<->index mapping persisted
alongside (<path>.mapping.json) so repeated loads stay aligned.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Optional, Sequence

import numpy as np

from .core import (
    InputFormatError,
    Mode,
    RankingLists,
    RankingProbabilities,
    ScoreMatrix,
    TradeoffPoint,
    ValidationError,
    check_mode,
)

_FORMATS = ("dense", "triplet")


def _fmt_full(x: float) -> str:
    return repr(float(x))


def _fmt_12g(x: float) -> str:
    return format(float(x), ".12g")


def _open_read(path):
    return open(path, "r", newline="", encoding="utf-8")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _sorted_ids(ids) -> list[str]:
    ids = list(ids)
    try:
        return sorted(ids, key=int)
    except ValueError:
        return sorted(ids)


def _mapping_path(path) -> str:
    return f"{path}.mapping.json"


def _check_score_value(value: float, mode: Mode, path, lineno: int) -> None:
    if not np.isfinite(value) or value < 0:
        raise InputFormatError(
            f"{path}:{lineno}: score {value!r} must be finite and >= 0")
    if mode == "ctr" and value > 1.0 + 1e-12:
        raise InputFormatError(
            f"{path}:{lineno}: score {value!r} outside [0, 1] in ctr mode")


def _parse_float(token: str, path, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise InputFormatError(
            f"{path}:{lineno}: cannot parse {token!r} as a number") from None


def _load_dense(path, mode: Mode) -> ScoreMatrix:
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise InputFormatError(f"{path}: missing header row")
        width = len(header)
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != width:
                raise InputFormatError(
                    f"{path}:{lineno}: expected {width} fields, got {len(rec)}")
            vals = [_parse_float(tok, path, lineno) for tok in rec]
            for val in vals:
                _check_score_value(val, mode, path, lineno)
            rows.append(vals)
    if not rows:
        raise InputFormatError(f"{path}: no data rows")
    return ScoreMatrix(w=np.array(rows), gamma=np.ones(width))


def _load_triplet(path, mode: Mode) -> ScoreMatrix:
    entries: dict[tuple[str, str], float] = {}
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user_id", "item_id", "score"]:
            raise InputFormatError(
                f"{path}: triplet header must be user_id,item_id,score, got {header}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise InputFormatError(
                    f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            user, item, tok = rec
            value = _parse_float(tok, path, lineno)
            _check_score_value(value, mode, path, lineno)
            if (user, item) in entries:
                raise InputFormatError(
                    f"{path}:{lineno}: duplicate triplet for user {user!r}, item {item!r}")
            entries[(user, item)] = value
    if not entries:
        raise InputFormatError(f"{path}: no data rows")

    mapping_file = _mapping_path(path)
    if os.path.exists(mapping_file):
        with open(mapping_file, "r", encoding="utf-8") as fh:
            mapping = json.load(fh)
        users, items = list(mapping["users"]), list(mapping["items"])
    else:
        users = _sorted_ids({u for u, _ in entries})
        items = _sorted_ids({i for _, i in entries})
        with open(mapping_file, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"users": users, "items": items}, fh, indent=1)
            fh.write("\n")

    user_index = {u: r for r, u in enumerate(users)}
    item_index = {i: c for c, i in enumerate(items)}
    w = np.zeros((len(users), len(items)))  # missing pairs contribute nothing
    for (user, item), value in entries.items():
        if user not in user_index:
            raise InputFormatError(f"{path}: user id {user!r} not in persisted mapping")
        if item not in item_index:
            raise InputFormatError(f"{path}: item id {item!r} not in persisted mapping")
        w[user_index[user], item_index[item]] = value
    return ScoreMatrix(w=w, gamma=np.ones(len(items)))


def read_mapping(scores_path) -> Optional[dict]:
    """Return the persisted id<->index mapping of a triplet file, if any."""
    mapping_file = _mapping_path(scores_path)
    if not os.path.exists(mapping_file):
        return None
    with open(mapping_file, "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_scores(path, format: str = "dense", mode: Mode = "ctr") -> ScoreMatrix:
    """Load a score matrix from a dense or triplet CSV file."""
    check_mode(mode)
    if format not in _FORMATS:
        raise ValidationError(f"unknown format {format!r}; expected one of {_FORMATS}")
    if format == "dense":
        return _load_dense(path, mode)
    return _load_triplet(path, mode)


def save_scores(scores: ScoreMatrix, path, item_ids: Optional[Sequence] = None) -> None:
    """Write a dense score CSV (full float precision, bitwise round-trip)."""
    ids = [str(i) for i in (item_ids if item_ids is not None else range(scores.num_items))]
    if len(ids) != scores.num_items:
        raise ValidationError(
            f"item axis mismatch: {len(ids)} ids for {scores.num_items} items")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _writer(fh)
        writer.writerow(ids)
        for row in scores.w:
            writer.writerow([_fmt_full(x) for x in row])


def load_bids(path, num_items: int, item_ids: Optional[Sequence] = None) -> np.ndarray:
    """Load per-item bids aligned to the item index mapping.

    item_ids gives the id of each dense index (defaults to stringified
    indices). Every item must receive exactly one positive bid.
    """
    ids = [str(i) for i in (item_ids if item_ids is not None else range(num_items))]
    index = {item_id: pos for pos, item_id in enumerate(ids)}
    bids = np.full(num_items, np.nan)
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["item_id", "bid"]:
            raise InputFormatError(
                f"{path}: bids header must be item_id,bid, got {header}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise InputFormatError(
                    f"{path}:{lineno}: expected 2 fields, got {len(rec)}")
            item, tok = rec
            if item not in index:
                raise InputFormatError(f"{path}:{lineno}: unknown item id {item!r}")
            value = _parse_float(tok, path, lineno)
            if not np.isfinite(value) or value <= 0:
                raise InputFormatError(
                    f"{path}:{lineno}: bid {value!r} must be finite and > 0")
            if not np.isnan(bids[index[item]]):
                raise InputFormatError(f"{path}:{lineno}: duplicate bid for item {item!r}")
            bids[index[item]] = value
    missing = np.flatnonzero(np.isnan(bids))
    if missing.size:
        raise InputFormatError(
            f"{path}: missing bid for item id {ids[missing[0]]!r}")
    return bids


def attach_bids(scores: ScoreMatrix, bids: np.ndarray,
                gamma_override=None) -> ScoreMatrix:
    """Return a copy of scores carrying the bids, with gamma = log(bid)
    unless an override (scalar or vector) is supplied."""
    bids = np.asarray(bids, dtype=float)
    if gamma_override is None:
        gamma = np.log(bids)
        if np.any(gamma <= 0):
            raise InputFormatError("log-bid weights are zero; supply gamma override")
    else:
        gamma = np.broadcast_to(np.asarray(gamma_override, dtype=float),
                                (scores.num_items,)).copy()
    return ScoreMatrix(w=scores.w, gamma=gamma, bids=bids)


def save_lists(lists: RankingLists, path) -> None:
    """Write lists as user_id,rank,item_id rows; rank is 1-based."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _writer(fh)
        writer.writerow(["user_id", "rank", "item_id"])
        for user, row in enumerate(lists.lists):
            for rank, item in enumerate(row, start=1):
                writer.writerow([user, rank, int(item)])


def load_lists(path) -> RankingLists:
    rows: dict[int, dict[int, int]] = {}
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user_id", "rank", "item_id"]:
            raise InputFormatError(
                f"{path}: lists header must be user_id,rank,item_id, got {header}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise InputFormatError(
                    f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            try:
                user, rank, item = (int(tok) for tok in rec)
            except ValueError:
                raise InputFormatError(
                    f"{path}:{lineno}: cannot parse {rec!r} as integers") from None
            rows.setdefault(user, {})[rank] = item
    if not rows:
        raise InputFormatError(f"{path}: no data rows")
    users = sorted(rows)
    if users != list(range(len(users))):
        raise InputFormatError(f"{path}: user ids must be contiguous from 0")
    k = len(rows[users[0]])
    out = np.empty((len(users), k), dtype=np.int64)
    for user in users:
        ranks = rows[user]
        if sorted(ranks) != list(range(1, k + 1)):
            raise InputFormatError(
                f"{path}: user {user} does not have ranks 1..{k}")
        out[user] = [ranks[r] for r in range(1, k + 1)]
    return RankingLists(out)


def save_probs(probs: RankingProbabilities, path,
               item_ids: Optional[Sequence] = None) -> None:
    """Write ranking probabilities as a dense CSV at 12 significant digits."""
    ids = [str(i) for i in (item_ids if item_ids is not None else range(probs.num_items))]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _writer(fh)
        writer.writerow(ids)
        for row in probs.x:
            writer.writerow([_fmt_12g(x) for x in row])


def load_probs(path) -> RankingProbabilities:
    dense = _load_dense(path, "exposure")  # probabilities are <= 1 but skip ctr checks
    return RankingProbabilities(dense.w)


def save_tradeoff_points(points: Sequence[TradeoffPoint], path,
                         pot_bounds: Optional[Sequence[float]] = None) -> None:
    """Write a trade-off table t,ecn,ecpm,gini,pot (+ optional pot_bound)."""
    if pot_bounds is not None and len(pot_bounds) != len(points):
        raise ValidationError(
            f"{len(pot_bounds)} bound values for {len(points)} trade-off points")
    header = ["t", "ecn", "ecpm", "gini", "pot"]
    if pot_bounds is not None:
        header.append("pot_bound")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _writer(fh)
        writer.writerow(header)
        for idx, pt in enumerate(points):
            row = [_fmt_12g(pt.tax_rate), _fmt_12g(pt.ecn),
                   "" if pt.ecpm is None else _fmt_12g(pt.ecpm),
                   _fmt_12g(pt.gini), _fmt_12g(pt.pot)]
            if pot_bounds is not None:
                row.append(_fmt_12g(pot_bounds[idx]))
            writer.writerow(row)


def load_tradeoff_points(path) -> list[TradeoffPoint]:
    points = []
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != ["t", "ecn", "ecpm", "gini", "pot"]:
            raise InputFormatError(
                f"{path}: trade-off header must start with t,ecn,ecpm,gini,pot")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) < 5:
                raise InputFormatError(
                    f"{path}:{lineno}: expected at least 5 fields, got {len(rec)}")
            t, ecn_s, ecpm_s, gini_s, pot_s = rec[:5]
            points.append(TradeoffPoint(
                tax_rate=_parse_float(t, path, lineno),
                ecn=_parse_float(ecn_s, path, lineno),
                ecpm=None if ecpm_s == "" else _parse_float(ecpm_s, path, lineno),
                gini=_parse_float(gini_s, path, lineno),
                pot=_parse_float(pot_s, path, lineno)))
    return points


def save_results(obj, path) -> None:
    """Persist lists, probabilities or trade-off points by type."""
    if isinstance(obj, RankingLists):
        save_lists(obj, path)
    elif isinstance(obj, RankingProbabilities):
        save_probs(obj, path)
    elif isinstance(obj, (list, tuple)) and all(isinstance(p, TradeoffPoint) for p in obj):
        save_tradeoff_points(obj, path)
    else:
        raise ValidationError(f"cannot save object of type {type(obj).__name__}")
