"""Dataset ingestion, synthesis, and per-task matrix construction.

A dataset holds per-station flows shaped [stations x 10 x years], where
the 10 columns are (timestamp, direction) pairs in a fixed order: the
five timestamps early, am, mid, pm, late, each split into entry and
exit. One prediction task targets a single pair; the other four
timestamps (8 pairs) are its features.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ContractError,
    DataError,
    GenerationError,
    UnknownStationError,
)
from .graphs import BaseGraph, Hypergraph, build_khop

__all__ = [
    "TIMESTAMP_NAMES",
    "DIRECTIONS",
    "pair_index",
    "task_label",
    "parse_task",
    "SocialFeatures",
    "SyntheticRule",
    "StationDataset",
    "TaskMatrix",
    "load_dataset",
    "save_dataset",
    "synthesize_dataset",
    "build_task",
    "social_diff_features",
    "social_diff_matrix",
    "coupling_signals",
]

TIMESTAMP_NAMES = ("early", "am", "mid", "pm", "late")
DIRECTIONS = ("entry", "exit")

TRAFFIC_HEADER = ["station_id", "year", "direction", "timestamp", "flow"]
SOCIAL_HEADER = ["station_id", "zone", "housing_price", "life_expectancy"]
EDGES_HEADER = ["station_id_a", "station_id_b"]
LINES_HEADER = ["line_id", "station_id"]


def pair_index(timestamp: int, direction: str) -> int:
    """Column of the (timestamp, direction) pair in the traffic tensor:
    (timestamp-1)*2 for entry, +1 for exit."""
    if not 1 <= timestamp <= 5:
        raise ContractError(f"timestamp must be 1..5, got {timestamp}")
    if direction not in DIRECTIONS:
        raise ContractError(
            f"direction must be one of {DIRECTIONS}, got '{direction}'"
        )
    return (timestamp - 1) * 2 + DIRECTIONS.index(direction)


def task_label(timestamp: int, direction: str) -> str:
    pair_index(timestamp, direction)
    return f"{TIMESTAMP_NAMES[timestamp - 1]}_{direction}"


def parse_task(label: str) -> tuple[int, str]:
    """Parse 'late_entry' or '5_entry' into (timestamp, direction)."""
    parts = label.strip().lower().rsplit("_", 1)
    if len(parts) != 2 or parts[1] not in DIRECTIONS:
        raise ContractError(
            f"task label must look like 'late_entry' or '5_entry', got '{label}'"
        )
    name, direction = parts
    if name in TIMESTAMP_NAMES:
        return TIMESTAMP_NAMES.index(name) + 1, direction
    try:
        ts = int(name)
    except ValueError:
        raise ContractError(f"unknown timestamp '{name}' in task '{label}'") from None
    pair_index(ts, direction)
    return ts, direction


@dataclass(eq=False)
class SocialFeatures:
    """Per-station zone (small integer), average housing price, and
    average life expectancy."""

    zone: np.ndarray
    housing_price: np.ndarray
    life_expectancy: np.ndarray

    def __post_init__(self):
        self.zone = np.asarray(self.zone, dtype=np.int64).reshape(-1)
        self.housing_price = np.asarray(self.housing_price, dtype=np.float64).reshape(-1)
        self.life_expectancy = np.asarray(self.life_expectancy, dtype=np.float64).reshape(-1)
        n = self.zone.size
        if self.housing_price.size != n or self.life_expectancy.size != n:
            raise DataError(
                f"social feature lengths disagree: {n} zones, "
                f"{self.housing_price.size} prices, "
                f"{self.life_expectancy.size} life expectancies"
            )

    @property
    def n(self) -> int:
        return self.zone.size

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([
            self.zone.astype(np.float64),
            self.housing_price,
            self.life_expectancy,
        ])

    def diff_scales(self) -> np.ndarray:
        """Per-feature population std over stations, floored at tiny
        values so constant features standardize to zero, not inf."""
        scales = self.as_matrix().std(axis=0)
        scales[scales < 1e-12] = 1.0
        return scales

    def triple(self, i: int) -> tuple[int, float, float]:
        return (int(self.zone[i]), float(self.housing_price[i]),
                float(self.life_expectancy[i]))

    def __eq__(self, other):
        if not isinstance(other, SocialFeatures):
            return NotImplemented
        return (np.array_equal(self.zone, other.zone)
                and np.array_equal(self.housing_price, other.housing_price)
                and np.array_equal(self.life_expectancy, other.life_expectancy))


@dataclass(frozen=True)
class SyntheticRule:
    """The generating rule of a synthetic dataset's late-timestamp flows:
    late = (alpha[dir] * neighbor_signal + beta[dir] * self_signal) * noise,
    where self_signal is a station's mean over the 8 non-late pairs and
    neighbor_signal averages neighbor self_signals within coupling_hops,
    weighted by exp(-sum of standardized absolute social differences)."""

    alpha: dict
    beta: dict
    coupling_hops: int
    noise_sigma: float


@dataclass(eq=False)
class StationDataset:
    """Immutable-by-convention container for one city's data."""

    stations: tuple[str, ...]
    years: tuple[int, ...]
    traffic: np.ndarray
    social: SocialFeatures
    line_ids: tuple[str, ...]
    line_members: tuple[tuple[int, ...], ...]
    base_graph: BaseGraph
    rule: SyntheticRule | None = None

    def __post_init__(self):
        self.stations = tuple(self.stations)
        self.years = tuple(int(y) for y in self.years)
        self.traffic = np.asarray(self.traffic, dtype=np.float64)
        self.line_ids = tuple(self.line_ids)
        self.line_members = tuple(tuple(m) for m in self.line_members)
        n, ny = len(self.stations), len(self.years)
        if len(set(self.stations)) != n:
            raise DataError("duplicate station ids")
        if len(set(self.years)) != ny or list(self.years) != sorted(self.years):
            raise DataError("years must be distinct and ascending")
        if self.traffic.shape != (n, 10, ny):
            raise DataError(
                f"traffic must be shaped ({n}, 10, {ny}), got {self.traffic.shape}"
            )
        if not np.isfinite(self.traffic).all():
            raise DataError("traffic contains non-finite entries")
        if self.traffic.size and self.traffic.min() < 0:
            bad = np.argwhere(self.traffic < 0)[0]
            raise DataError(
                f"negative flow for station '{self.stations[bad[0]]}'"
            )
        if self.social.n != n:
            raise DataError(
                f"social features cover {self.social.n} stations, dataset has {n}"
            )
        if self.base_graph.n != n:
            raise DataError(
                f"base graph has {self.base_graph.n} stations, dataset has {n}"
            )
        if len(self.line_ids) != len(self.line_members):
            raise DataError("line ids and member lists disagree in length")
        for lid, members in zip(self.line_ids, self.line_members):
            for m in members:
                if not 0 <= m < n:
                    raise DataError(f"line '{lid}' references station index {m}")

    @property
    def n(self) -> int:
        return len(self.stations)

    @property
    def n_years(self) -> int:
        return len(self.years)

    def station_index(self, station) -> int:
        if isinstance(station, (int, np.integer)):
            if not 0 <= int(station) < self.n:
                raise UnknownStationError(
                    f"station index {station} outside [0, {self.n})"
                )
            return int(station)
        try:
            return self.stations.index(station)
        except ValueError:
            raise UnknownStationError(f"unknown station '{station}'") from None

    def year_index(self, year: int) -> int:
        try:
            return self.years.index(int(year))
        except ValueError:
            raise DataError(
                f"year {year} not in dataset (have {self.years[0]}..{self.years[-1]})"
            ) from None

    def hypergraph(self) -> Hypergraph:
        """Metro lines as hyperedges over stations."""
        m = np.zeros((self.n, len(self.line_ids)), dtype=np.int8)
        for e, members in enumerate(self.line_members):
            m[list(members), e] = 1
        return Hypergraph.unit_weights(m, self.stations, self.line_ids)

    def subset(self, indices) -> "StationDataset":
        """Induced dataset on a station subset (diagnostics). Lines are
        restricted to surviving members; lines with fewer than 2 are
        dropped, so some stations may end up line-less."""
        idx = np.asarray([self.station_index(i) for i in indices], dtype=np.intp)
        if idx.size < 2:
            raise ContractError("a subset needs at least 2 stations")
        if np.unique(idx).size != idx.size:
            raise ContractError("subset indices must be distinct")
        remap = {int(old): new for new, old in enumerate(idx)}
        sub_adj = self.base_graph.adj[np.ix_(idx, idx)]
        lines, lids = [], []
        for lid, members in zip(self.line_ids, self.line_members):
            kept = tuple(remap[m] for m in members if m in remap)
            if len(kept) >= 2:
                lines.append(kept)
                lids.append(lid)
        return StationDataset(
            stations=tuple(self.stations[i] for i in idx),
            years=self.years,
            traffic=self.traffic[idx],
            social=SocialFeatures(self.social.zone[idx],
                                  self.social.housing_price[idx],
                                  self.social.life_expectancy[idx]),
            line_ids=tuple(lids),
            line_members=tuple(lines),
            base_graph=BaseGraph(tuple(self.stations[i] for i in idx), sub_adj),
        )

    def __eq__(self, other):
        if not isinstance(other, StationDataset):
            return NotImplemented
        return (self.stations == other.stations
                and self.years == other.years
                and np.array_equal(self.traffic, other.traffic)
                and self.social == other.social
                and self.line_ids == other.line_ids
                and self.line_members == other.line_members
                and np.array_equal(self.base_graph.adj, other.base_graph.adj))


@dataclass(frozen=True)
class TaskMatrix:
    """Feature/target matrices of one (timestamp, direction) task for
    one year. X columns are the 8 non-target-timestamp pairs in
    ascending pair_index order (feature_pairs documents them)."""

    X: np.ndarray
    y: np.ndarray
    timestamp: int
    direction: str
    year: int
    feature_pairs: tuple[tuple[int, str], ...]


def build_task(dataset: StationDataset, year: int, timestamp: int,
               direction: str) -> TaskMatrix:
    target = pair_index(timestamp, direction)
    yi = dataset.year_index(year)
    pairs = [(t, d) for t in range(1, 6) for d in DIRECTIONS if t != timestamp]
    cols = [pair_index(t, d) for t, d in pairs]
    return TaskMatrix(
        X=dataset.traffic[:, cols, yi].copy(),
        y=dataset.traffic[:, target, yi].reshape(-1, 1).copy(),
        timestamp=timestamp,
        direction=direction,
        year=int(year),
        feature_pairs=tuple(pairs),
    )


def social_diff_features(dataset: StationDataset, station_a,
                         station_b) -> np.ndarray:
    """Standardized absolute social differences (|dzone|, |dprice|,
    |dlife|) between two stations; symmetric."""
    a = dataset.station_index(station_a)
    b = dataset.station_index(station_b)
    mat = dataset.social.as_matrix()
    return np.abs(mat[a] - mat[b]) / dataset.social.diff_scales()


def social_diff_matrix(social: SocialFeatures, src, dst) -> np.ndarray:
    """E x 3 standardized absolute diffs for aligned index arrays."""
    mat = social.as_matrix()
    scales = social.diff_scales()
    return np.abs(mat[np.asarray(src)] - mat[np.asarray(dst)]) / scales


def coupling_signals(dataset: StationDataset,
                     coupling_hops: int | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """The synthetic rule's regressors, recomputed from recorded data.

    Returns (self_signal, neighbor_signal), both [n x years]:
    self_signal is the mean over the 8 non-late pairs; neighbor_signal
    is the social-similarity-weighted average of neighbor self_signals
    within coupling_hops.
    """
    if coupling_hops is None:
        coupling_hops = dataset.rule.coupling_hops if dataset.rule else 3
    self_signal = dataset.traffic[:, 0:8, :].mean(axis=1)
    reach = build_khop(dataset.base_graph, coupling_hops).adj.astype(np.float64)
    diffs = social_diff_matrix_full(dataset.social)
    w = np.exp(-diffs) * reach
    row_sums = w.sum(axis=1, keepdims=True)
    row_sums[row_sums == 0] = 1.0
    neighbor_signal = (w / row_sums) @ self_signal
    return self_signal, neighbor_signal


def social_diff_matrix_full(social: SocialFeatures) -> np.ndarray:
    """n x n matrix of summed standardized absolute social diffs."""
    mat = social.as_matrix() / social.diff_scales()
    return np.abs(mat[:, None, :] - mat[None, :, :]).sum(axis=2)


# ---------------------------------------------------------------------------
# synthesis


def synthesize_dataset(n_stations: int = 40, n_years: int = 13,
                       n_lines: int = 4, seed: int = 0, *,
                       alpha: dict | None = None,
                       beta: dict | None = None,
                       coupling_hops: int = 3,
                       noise_sigma: float = 0.05,
                       start_year: int = 2010) -> StationDataset:
    """Seeded city generator with a documented, recoverable flow rule.

    Lines are paths; every line after the first starts at a random
    already-placed station (an interchange), so the graph is connected.
    The late-timestamp flows follow the rule recorded in the returned
    dataset's ``rule`` field, which couples each station to its
    social-similar neighbors within ``coupling_hops``.
    """
    if n_stations < 4:
        raise ContractError(f"need at least 4 stations, got {n_stations}")
    if n_lines < 1:
        raise ContractError(f"need at least 1 line, got {n_lines}")
    if n_years < 1:
        raise ContractError(f"need at least 1 year, got {n_years}")
    if n_stations < n_lines + 1:
        raise GenerationError(
            f"{n_lines} lines need at least {n_lines + 1} stations "
            f"(2 on the first line, 1 fresh per further line), got {n_stations}"
        )
    alpha = dict(alpha) if alpha else {"entry": 0.60, "exit": 0.45}
    beta = dict(beta) if beta else {"entry": 0.50, "exit": 0.65}
    rng = np.random.default_rng(seed)
    stations = tuple(f"S{i:03d}" for i in range(n_stations))

    # fresh-station counts per line: first line >= 2, others >= 1
    # (n >= n_lines + 1 guarantees this after remainder distribution)
    fresh = [n_stations // n_lines] * n_lines
    for i in range(n_stations - sum(fresh)):
        fresh[i % n_lines] += 1

    members, edges = [], []
    placed = 0
    for li, count in enumerate(fresh):
        block = list(range(placed, placed + count))
        if li == 0:
            path = block
        else:
            anchor = int(rng.integers(0, placed))
            path = [anchor] + block
        members.append(tuple(path))
        edges.extend((path[i], path[i + 1]) for i in range(len(path) - 1))
        placed += count
    line_ids = tuple(f"L{i + 1}" for i in range(n_lines))
    adj = np.zeros((n_stations, n_stations), dtype=np.int8)
    for a, b in edges:
        adj[a, b] = adj[b, a] = 1
    base = BaseGraph(stations, adj)

    # zones: quantile bins of hop distance from the busiest station
    dist = _bfs_distances(adj, int(np.argmax(adj.sum(axis=1))))
    qs = np.quantile(dist, [0.25, 0.5, 0.75])
    zone = 1 + (dist[:, None] > qs[None, :]).sum(axis=1)
    price = np.maximum(1400.0 - 260.0 * zone + rng.normal(0, 110, n_stations), 80.0)
    life = 74.5 + 1.1 * zone + rng.normal(0, 0.7, n_stations)
    social = SocialFeatures(zone, price, life)

    years = tuple(range(start_year, start_year + n_years))
    size = rng.lognormal(mean=np.log(600.0), sigma=0.5, size=n_stations)
    profile = np.array([[0.32, 0.28],   # early
                        [1.45, 1.05],   # am
                        [0.78, 0.82],   # mid
                        [1.18, 1.38]])  # pm
    growth = 1.028 ** np.arange(n_years) * np.exp(rng.normal(0, 0.012, n_years))

    traffic = np.zeros((n_stations, 10, n_years))
    for t in range(4):
        for d in range(2):
            noise = np.exp(rng.normal(0, 0.08, (n_stations, n_years)))
            traffic[:, t * 2 + d, :] = (
                size[:, None] * profile[t, d] * growth[None, :] * noise
            )

    rule = SyntheticRule(alpha=alpha, beta=beta, coupling_hops=coupling_hops,
                         noise_sigma=noise_sigma)
    partial = StationDataset(stations, years, traffic, social, line_ids,
                             tuple(members), base, rule)
    self_signal, neighbor_signal = coupling_signals(partial, coupling_hops)
    for d, dname in enumerate(DIRECTIONS):
        noise = np.exp(rng.normal(0, noise_sigma, (n_stations, n_years)))
        traffic[:, 8 + d, :] = (
            alpha[dname] * neighbor_signal + beta[dname] * self_signal
        ) * noise
    return StationDataset(stations, years, traffic, social, line_ids,
                          tuple(members), base, rule)


def _bfs_distances(adj: np.ndarray, start: int) -> np.ndarray:
    n = adj.shape[0]
    dist = np.full(n, n, dtype=np.int64)
    dist[start] = 0
    frontier = [start]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for v in frontier:
            for j in np.flatnonzero(adj[v]):
                if dist[j] > d:
                    dist[j] = d
                    nxt.append(int(j))
        frontier = nxt
    return dist


# ---------------------------------------------------------------------------
# CSV serialization


def _read_rows(path, expected_header: list[str]) -> list[tuple[int, list[str]]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows or rows[0] != expected_header:
        raise DataError(
            f"{path}: expected header {','.join(expected_header)}, "
            f"got {','.join(rows[0]) if rows else '(empty file)'}"
        )
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(expected_header):
            raise DataError(
                f"{path} row {lineno}: expected {len(expected_header)} "
                f"fields, got {len(row)}"
            )
        out.append((lineno, row))
    return out


def _parse_int(value: str, what: str, path, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise DataError(f"{path} row {lineno}: {what} '{value}' is not an integer") from None


def _parse_float(value: str, what: str, path, lineno: int) -> float:
    try:
        v = float(value)
    except ValueError:
        raise DataError(f"{path} row {lineno}: {what} '{value}' is not a number") from None
    if not np.isfinite(v):
        raise DataError(f"{path} row {lineno}: {what} must be finite, got '{value}'")
    return v


def load_dataset(traffic_csv, social_csv, edges_csv, lines_csv) -> StationDataset:
    """Load and cross-validate the four CSV files.

    The social file fixes the station order. Traffic must cover every
    (station, pair, year) exactly once; edges and lines may only
    reference known stations; every line needs >= 2 stations and every
    station >= 1 line.
    """
    social_rows = _read_rows(social_csv, SOCIAL_HEADER)
    stations, zones, prices, lives = [], [], [], []
    seen = set()
    for lineno, (sid, zone, price, life) in social_rows:
        if sid in seen:
            raise DataError(f"{social_csv} row {lineno}: duplicate station '{sid}'")
        seen.add(sid)
        stations.append(sid)
        zones.append(_parse_int(zone, "zone", social_csv, lineno))
        prices.append(_parse_float(price, "housing_price", social_csv, lineno))
        lives.append(_parse_float(life, "life_expectancy", social_csv, lineno))
    if not stations:
        raise DataError(f"{social_csv}: no stations")
    index = {s: i for i, s in enumerate(stations)}
    n = len(stations)

    traffic_rows = _read_rows(traffic_csv, TRAFFIC_HEADER)
    years = sorted({_parse_int(r[1], "year", traffic_csv, ln)
                    for ln, r in traffic_rows})
    if not years:
        raise DataError(f"{traffic_csv}: no data rows")
    y_index = {y: i for i, y in enumerate(years)}
    traffic = np.full((n, 10, len(years)), np.nan)
    for lineno, (sid, year, direction, timestamp, flow) in traffic_rows:
        if sid not in index:
            raise UnknownStationError(
                f"{traffic_csv} row {lineno}: station '{sid}' not in {social_csv}"
            )
        if direction not in DIRECTIONS:
            raise DataError(
                f"{traffic_csv} row {lineno}: direction must be entry or "
                f"exit, got '{direction}'"
            )
        ts = _parse_int(timestamp, "timestamp", traffic_csv, lineno)
        if not 1 <= ts <= 5:
            raise DataError(
                f"{traffic_csv} row {lineno}: timestamp must be 1..5, got {ts}"
            )
        value = _parse_float(flow, "flow", traffic_csv, lineno)
        if value < 0:
            raise DataError(
                f"{traffic_csv} row {lineno}: negative flow {value} for "
                f"station '{sid}'"
            )
        yi = y_index[_parse_int(year, "year", traffic_csv, lineno)]
        pi = pair_index(ts, direction)
        if not np.isnan(traffic[index[sid], pi, yi]):
            raise DataError(
                f"{traffic_csv} row {lineno}: duplicate entry for station "
                f"'{sid}', year {year}, timestamp {ts}, {direction}"
            )
        traffic[index[sid], pi, yi] = value
    missing = np.argwhere(np.isnan(traffic))
    if missing.size:
        s, p, y = missing[0]
        t, d = divmod(int(p), 2)
        raise DataError(
            f"{traffic_csv}: missing flow for station '{stations[s]}', year "
            f"{years[y]}, timestamp {t + 1}, {DIRECTIONS[d]}"
        )

    edge_rows = _read_rows(edges_csv, EDGES_HEADER)
    pairs = []
    for lineno, (a, b) in edge_rows:
        for sid in (a, b):
            if sid not in index:
                raise UnknownStationError(
                    f"{edges_csv} row {lineno}: station '{sid}' not in {social_csv}"
                )
        pairs.append((a, b))
    base = BaseGraph.from_edges(stations, pairs)

    line_rows = _read_rows(lines_csv, LINES_HEADER)
    line_ids, line_members = [], {}
    for lineno, (lid, sid) in line_rows:
        if sid not in index:
            raise UnknownStationError(
                f"{lines_csv} row {lineno}: station '{sid}' not in {social_csv}"
            )
        if lid not in line_members:
            line_ids.append(lid)
            line_members[lid] = []
        if index[sid] in line_members[lid]:
            raise DataError(
                f"{lines_csv} row {lineno}: station '{sid}' listed twice "
                f"on line '{lid}'"
            )
        line_members[lid].append(index[sid])
    for lid in line_ids:
        if len(line_members[lid]) < 2:
            raise DataError(f"{lines_csv}: line '{lid}' has fewer than 2 stations")
    covered = {m for lid in line_ids for m in line_members[lid]}
    for i, sid in enumerate(stations):
        if i not in covered:
            raise DataError(f"{lines_csv}: station '{sid}' belongs to no line")

    return StationDataset(
        stations=tuple(stations),
        years=tuple(years),
        traffic=traffic,
        social=SocialFeatures(zones, prices, lives),
        line_ids=tuple(line_ids),
        line_members=tuple(tuple(line_members[lid]) for lid in line_ids),
        base_graph=base,
    )


def save_dataset(dataset: StationDataset, out_dir) -> dict[str, Path]:
    """Write the four CSV files (deterministic, round-trips losslessly).
    Returns the written paths keyed by kind."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "traffic": out / "traffic.csv",
        "social": out / "social.csv",
        "edges": out / "edges.csv",
        "lines": out / "lines.csv",
    }
    with paths["traffic"].open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRAFFIC_HEADER)
        for i, sid in enumerate(dataset.stations):
            for yi, year in enumerate(dataset.years):
                for ts in range(1, 6):
                    for d in DIRECTIONS:
                        flow = float(dataset.traffic[i, pair_index(ts, d), yi])
                        w.writerow([sid, year, d, ts, repr(flow)])
    with paths["social"].open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(SOCIAL_HEADER)
        for i, sid in enumerate(dataset.stations):
            w.writerow([sid, int(dataset.social.zone[i]),
                        repr(float(dataset.social.housing_price[i])),
                        repr(float(dataset.social.life_expectancy[i]))])
    with paths["edges"].open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(EDGES_HEADER)
        adj = dataset.base_graph.adj
        for a in range(dataset.n):
            for b in range(a + 1, dataset.n):
                if adj[a, b]:
                    w.writerow([dataset.stations[a], dataset.stations[b]])
    with paths["lines"].open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(LINES_HEADER)
        for lid, members in zip(dataset.line_ids, dataset.line_members):
            for m in members:
                w.writerow([lid, dataset.stations[m]])
    if dataset.rule is not None:
        (out / "rule.json").write_text(json.dumps({
            "alpha": dataset.rule.alpha,
            "beta": dataset.rule.beta,
            "coupling_hops": dataset.rule.coupling_hops,
            "noise_sigma": dataset.rule.noise_sigma,
        }, indent=2) + "\n", encoding="utf-8")
    return paths


def load_dataset_dir(data_dir) -> StationDataset:
    """Load a directory written by save_dataset."""
    d = Path(data_dir)
    return load_dataset(d / "traffic.csv", d / "social.csv",
                        d / "edges.csv", d / "lines.csv")
