"""The experiment surface: a seeded variants x hops x tasks grid runner
and the over-smoothing diagnostic that contrasts GCN with mean-aggregator
convolution on a near-complete wide-hop subgraph."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DiagnosticError, MetroflowError
from .data import (
    StationDataset,
    _bfs_distances,
    build_task,
    pair_index,
    parse_task,
    task_label,
)
from .graphs import build_khop, neighbor_sets, neighborhood_overlap
from .model import Model, ModelConfig, assemble, predict_task
from .layers import sage_forward_decomposed
from .tensor import Tensor
from .training import split_years, train

__all__ = [
    "GridSpec",
    "ResultRow",
    "ExperimentResult",
    "SummaryRow",
    "run_grid",
    "best_hop_summary",
    "OversmoothingReport",
    "oversmoothing_diagnostic",
    "RESULT_HEADER",
    "parse_results_csv",
]

RESULT_HEADER = ("variant,sampling_rate,k,task,seed,"
                 "best_val_mape,test_mape,best_epoch,status")


def _parse_variant_token(token: str) -> tuple[str, float | None]:
    """'kh@0.9' -> ('kh', 0.9); 'main_body' -> ('main_body', None)."""
    name, sep, rate = token.partition("@")
    name = name.strip()
    if not sep:
        return name, None
    try:
        return name, float(rate)
    except ValueError:
        raise ConfigError(f"bad sampling rate in variant '{token}'") from None


def _variant_label(name: str, rate: float | None) -> str:
    return name if rate is None else f"{name}@{rate:g}"


@dataclass(frozen=True)
class GridSpec:
    """One experiment grid: each (variant, hop, task, seed) is a cell."""

    variants: tuple[tuple[str, float | None], ...]
    hops: tuple[int, ...]
    tasks: tuple[str, ...]
    seeds: tuple[int, ...]
    epochs: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "variants",
                           tuple((str(n), None if r is None else float(r))
                                 for n, r in self.variants))
        object.__setattr__(self, "hops", tuple(int(h) for h in self.hops))
        object.__setattr__(self, "tasks", tuple(str(t) for t in self.tasks))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not (self.variants and self.hops and self.tasks and self.seeds):
            raise ConfigError("grid spec needs at least one variant, hop, "
                              "task and seed")
        for name, rate in self.variants:
            # reuse the per-variant rate rules
            ModelConfig(variant=name, k=1, sampling_rate=rate)
        for h in self.hops:
            if not 1 <= h <= 10:
                raise ConfigError(f"hops must lie in 1..10, got {h}")
        for t in self.tasks:
            parse_task(t)
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")

    @classmethod
    def default(cls) -> "GridSpec":
        return cls(
            variants=(("main_body", None), ("kt", None), ("kh", 0.9),
                      ("kth", 0.9), ("sage_baseline", None),
                      ("gcn_baseline", None)),
            hops=tuple(range(1, 7)),
            tasks=("late_entry", "late_exit"),
            seeds=(0, 1, 2),
            epochs=1000,
        )

    @property
    def size(self) -> int:
        return (len(self.variants) * len(self.hops) * len(self.tasks)
                * len(self.seeds))

    def cells(self):
        """Cells in canonical order: variant, hop, task, seed."""
        for name, rate in self.variants:
            for k in self.hops:
                for task in self.tasks:
                    for seed in self.seeds:
                        yield name, rate, k, task, seed

    def to_config_file(self, path) -> None:
        lines = [
            "variants=" + ",".join(_variant_label(n, r)
                                   for n, r in self.variants),
            "hops=" + ",".join(str(h) for h in self.hops),
            "tasks=" + ",".join(self.tasks),
            "seeds=" + ",".join(str(s) for s in self.seeds),
            f"epochs={self.epochs}",
        ]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_config_file(cls, path) -> "GridSpec":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read grid config {path}: {exc}") from exc
        known = {"variants", "hops", "tasks", "seeds", "epochs"}
        values: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path} line {lineno}: expected key=value, got '{line}'"
                )
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ConfigError(f"{path} line {lineno}: unknown key '{key}'")
            values[key] = value.strip()
        missing = sorted(known - {"epochs"} - set(values))
        if missing:
            raise ConfigError(f"{path}: missing keys {missing}")
        return cls(
            variants=tuple(_parse_variant_token(t)
                           for t in values["variants"].split(",") if t.strip()),
            hops=_parse_int_list(values["hops"], path, "hops"),
            tasks=tuple(t.strip() for t in values["tasks"].split(",")
                        if t.strip()),
            seeds=_parse_int_list(values["seeds"], path, "seeds"),
            epochs=int(values.get("epochs", 1000)),
        )


def _parse_int_list(text: str, path, key: str) -> tuple[int, ...]:
    """Comma list ('1,2,3') or inclusive range ('1..6')."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            return tuple(range(int(lo), int(hi) + 1))
        except ValueError:
            raise ConfigError(f"{path}: bad range for {key}: '{text}'") from None
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"{path}: bad integer list for {key}: '{text}'") from None


@dataclass(frozen=True)
class ResultRow:
    """One grid cell's outcome. Failed cells keep their position with
    empty metrics and a status naming the error category."""

    variant: str
    sampling_rate: float | None
    k: int
    task: str
    seed: int
    best_val_mape: float | None
    test_mape: float | None
    best_epoch: int | None
    status: str = "ok"
    wall_time: float | None = field(default=None, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def label(self) -> str:
        return _variant_label(self.variant, self.sampling_rate)

    def csv_row(self) -> str:
        def num(v):
            return "" if v is None else repr(v)

        rate = "" if self.sampling_rate is None else f"{self.sampling_rate:g}"
        epoch = "" if self.best_epoch is None else str(self.best_epoch)
        return (f"{self.variant},{rate},{self.k},{self.task},{self.seed},"
                f"{num(self.best_val_mape)},{num(self.test_mape)},"
                f"{epoch},{self.status}")

    @classmethod
    def from_csv_row(cls, line: str) -> "ResultRow":
        parts = line.split(",")
        if len(parts) != 9:
            raise ContractError(
                f"result row needs 9 columns, got {len(parts)}: '{line}'"
            )
        (variant, rate, k, task, seed,
         best_val, test, best_epoch, status) = parts
        return cls(
            variant=variant,
            sampling_rate=float(rate) if rate else None,
            k=int(k),
            task=task,
            seed=int(seed),
            best_val_mape=float(best_val) if best_val else None,
            test_mape=float(test) if test else None,
            best_epoch=int(best_epoch) if best_epoch else None,
            status=status,
        )


@dataclass
class ExperimentResult:
    """Append-only collection of grid rows in canonical cell order."""

    rows: tuple[ResultRow, ...]
    spec: GridSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        self.rows = tuple(self.rows)

    @property
    def completed(self) -> int:
        return sum(1 for r in self.rows if r.ok)

    @property
    def failed(self) -> int:
        return len(self.rows) - self.completed

    def to_csv(self, path) -> None:
        lines = [RESULT_HEADER] + [r.csv_row() for r in self.rows]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "ExperimentResult":
        return cls(rows=parse_results_csv(path))


def parse_results_csv(path) -> tuple[ResultRow, ...]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != RESULT_HEADER:
        raise ContractError(
            f"{path} is not a grid result table (bad or missing header)"
        )
    return tuple(ResultRow.from_csv_row(ln) for ln in lines[1:])


@dataclass(frozen=True)
class SummaryRow:
    """Best hop for one (variant, task), by median test MAPE over seeds."""

    variant: str
    sampling_rate: float | None
    task: str
    best_hop: int
    median_test_mape: float

    def label(self) -> str:
        return _variant_label(self.variant, self.sampling_rate)


def best_hop_summary(result: ExperimentResult) -> list[SummaryRow]:
    """Minimum-over-hops of the median-over-seeds test MAPE, per variant
    and task. Failed cells are skipped; hops with no completed seed do
    not compete."""
    groups: dict[tuple, dict[int, list[float]]] = {}
    order: list[tuple] = []
    for row in result.rows:
        if not row.ok:
            continue
        key = (row.variant, row.sampling_rate, row.task)
        if key not in groups:
            groups[key] = {}
            order.append(key)
        groups[key].setdefault(row.k, []).append(row.test_mape)
    out = []
    for key in order:
        variant, rate, task = key
        medians = {k: float(np.median(v)) for k, v in groups[key].items()}
        best_hop = min(medians, key=lambda k: (medians[k], k))
        out.append(SummaryRow(variant, rate, task, best_hop, medians[best_hop]))
    return out


# ---------------------------------------------------------------------------
# grid execution

_WORKER_DATASET: StationDataset | None = None


def _worker_init(dataset: StationDataset) -> None:
    global _WORKER_DATASET
    _WORKER_DATASET = dataset


def _train_cell(dataset: StationDataset, name: str, rate: float | None,
                k: int, task: str, seed: int, epochs: int) -> ResultRow:
    started = time.perf_counter()
    try:
        config = ModelConfig(variant=name, k=k, sampling_rate=rate,
                             seed=seed, epochs=epochs)
        model = assemble(config, dataset.base_graph,
                         hypergraph=dataset.hypergraph(),
                         social=dataset.social)
        split = split_years(dataset.years, seed=seed)
        report = train(model, dataset, task, split, epochs=epochs)
    except MetroflowError as exc:
        return ResultRow(name, rate, k, task, seed, None, None, None,
                         status=f"failed:{exc.category}",
                         wall_time=time.perf_counter() - started)
    return ResultRow(name, rate, k, task, seed,
                     best_val_mape=report.best_val_mape,
                     test_mape=report.test_mape,
                     best_epoch=report.best_epoch,
                     wall_time=time.perf_counter() - started)


def _pool_cell(args: tuple) -> ResultRow:
    return _train_cell(_WORKER_DATASET, *args)


def run_grid(spec: GridSpec, dataset: StationDataset, *, workers: int = 1,
             log: bool = False) -> ExperimentResult:
    """Train and evaluate every cell of the grid.

    Cells are independent and deterministic, so any execution order and
    any worker count produce the same rows; the returned rows follow the
    spec's canonical cell order. A cell that raises a library error is
    recorded as a failed row and the grid continues.
    """
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")
    cells = list(spec.cells())
    if workers == 1:
        rows = []
        for i, cell in enumerate(cells):
            row = _train_cell(dataset, *cell, spec.epochs)
            rows.append(row)
            if log:
                metric = ("-" if row.test_mape is None
                          else f"{row.test_mape:.3f}%")
                print(f"[{i + 1}/{len(cells)}] {row.label()} k={row.k} "
                      f"{row.task} seed={row.seed}: {row.status} "
                      f"test_mape={metric} ({row.wall_time:.1f}s)")
    else:
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_worker_init,
                                 initargs=(dataset,)) as pool:
            rows = list(pool.map(
                _pool_cell, [cell + (spec.epochs,) for cell in cells]))
            if log:
                for i, row in enumerate(rows):
                    print(f"[{i + 1}/{len(cells)}] {row.label()} k={row.k} "
                          f"{row.task} seed={row.seed}: {row.status}")
    return ExperimentResult(rows=tuple(rows), spec=spec)


# ---------------------------------------------------------------------------
# over-smoothing diagnostic

_DIAG_EPOCHS = 300
_DIAG_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class OversmoothingReport:
    """Structural and empirical record of representation collapse on a
    wide-hop subgraph.

    ``closed_groups`` lists vertex groups whose closed neighborhoods in
    the k-hop graph are identical (these receive identical GCN outputs);
    ``twin_pairs`` lists vertex pairs with identical open neighborhoods
    (these receive identical mean-aggregated neighbor parts). Indices
    refer to ``stations``. Predictions, truth and the self/neighbor
    decomposition come from the first seed's trained models evaluated on
    ``eval_year``.
    """

    stations: tuple[str, ...]
    k: int
    task: str
    seeds: tuple[int, ...]
    eval_year: int
    overlap_by_hop: dict[int, dict[str, float]]
    closed_groups: tuple[tuple[int, ...], ...]
    twin_pairs: tuple[tuple[int, int], ...]
    truth: np.ndarray
    gcn_predictions: np.ndarray
    sage_predictions: np.ndarray
    self_parts: np.ndarray
    neighbor_parts: np.ndarray
    gcn_test_mapes: tuple[float, ...]
    sage_test_mapes: tuple[float, ...]

    @property
    def sage_wins(self) -> int:
        return sum(1 for s, g in zip(self.sage_test_mapes, self.gcn_test_mapes)
                   if s < g)

    def to_json_dict(self) -> dict:
        return {
            "stations": list(self.stations),
            "k": self.k,
            "task": self.task,
            "seeds": list(self.seeds),
            "eval_year": self.eval_year,
            "overlap_by_hop": {str(h): s for h, s in self.overlap_by_hop.items()},
            "closed_groups": [list(g) for g in self.closed_groups],
            "twin_pairs": [list(p) for p in self.twin_pairs],
            "truth": self.truth.tolist(),
            "gcn_predictions": self.gcn_predictions.tolist(),
            "sage_predictions": self.sage_predictions.tolist(),
            "self_parts": self.self_parts.tolist(),
            "neighbor_parts": self.neighbor_parts.tolist(),
            "gcn_test_mapes": list(self.gcn_test_mapes),
            "sage_test_mapes": list(self.sage_test_mapes),
            "sage_wins": self.sage_wins,
        }


def _resolve_selector(dataset: StationDataset, selector) -> list[int]:
    if callable(selector):
        return [dataset.station_index(s) for s in selector(dataset)]
    if isinstance(selector, str):
        token = selector.strip()
        if token == "all":
            return list(range(len(dataset.stations)))
        if token.startswith("zone:"):
            try:
                zone = int(token.split(":", 1)[1])
            except ValueError:
                raise DiagnosticError(
                    f"bad zone selector '{selector}' (expected zone:<int>)"
                ) from None
            picked = np.flatnonzero(dataset.social.zone == zone)
            return [int(i) for i in picked]
        return [dataset.station_index(s.strip())
                for s in token.split(",") if s.strip()]
    return [dataset.station_index(s) for s in selector]


def _neighbor_index_sets(graph) -> list[frozenset]:
    return [frozenset(j for j, _ in row) for row in neighbor_sets(graph)]


def oversmoothing_diagnostic(dataset: StationDataset, subgraph_selector,
                             k: int = 10, *, task: str = "late_entry",
                             seeds=_DIAG_SEEDS,
                             epochs: int = _DIAG_EPOCHS) -> OversmoothingReport:
    """Contrast one-layer GCN and one-layer mean-aggregator convolution
    on the k-hop graph of a selected subregion.

    ``subgraph_selector`` may be "all", "zone:<z>", a comma list of
    station ids, a sequence of stations, or a callable mapping the
    dataset to stations. The induced base graph must be connected.
    """
    indices = _resolve_selector(dataset, subgraph_selector)
    if len(indices) < 3:
        raise DiagnosticError(
            f"diagnostic needs at least 3 stations, selector gave {len(indices)}"
        )
    sub = dataset.subset(indices)
    reach = _bfs_distances(sub.base_graph.adj, 0)
    if reach.max() >= len(sub.stations):
        orphan = sub.stations[int(np.argmax(reach))]
        raise DiagnosticError(
            f"selected subgraph is disconnected ('{orphan}' unreachable "
            f"from '{sub.stations[0]}')"
        )
    timestamp, direction = parse_task(task)
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ContractError("diagnostic needs at least one seed")

    khop = build_khop(sub.base_graph, k)
    nbr = _neighbor_index_sets(khop)
    n = len(sub.stations)

    by_closed: dict[frozenset, list[int]] = {}
    for v in range(n):
        by_closed.setdefault(nbr[v] | {v}, []).append(v)
    closed_groups = tuple(tuple(g) for g in by_closed.values() if len(g) > 1)
    twin_pairs = tuple((u, v) for u in range(n) for v in range(u + 1, n)
                       if nbr[u] == nbr[v])

    overlap_by_hop = {}
    for hop in range(1, k + 1):
        g = build_khop(sub.base_graph, hop)
        pairs = [neighborhood_overlap(g, u, v)
                 for u in range(n) for v in range(u + 1, n)]
        arr = np.asarray(pairs)
        overlap_by_hop[hop] = {
            "mean": float(arr.mean()),
            "min": float(arr.min()),
            "max": float(arr.max()),
            "frac_full": float(np.mean(arr == 1.0)),
        }

    gcn_mapes, sage_mapes = [], []
    first_models: list[Model] = []
    eval_year = None
    for seed in seeds:
        split = split_years(sub.years, seed=seed)
        pair = []
        for variant, agg in (("gcn_baseline", "max_pool"),
                             ("sage_baseline", "mean")):
            config = ModelConfig(variant=variant, k=k, num_sage_layers=1,
                                 aggregator=agg, seed=seed, epochs=epochs)
            model = assemble(config, sub.base_graph, social=sub.social)
            report = train(model, sub, (timestamp, direction), split,
                           epochs=epochs)
            pair.append((model, report))
        gcn_mapes.append(pair[0][1].test_mape)
        sage_mapes.append(pair[1][1].test_mape)
        if seed == seeds[0]:
            first_models = [pair[0][0], pair[1][0]]
            eval_year = split.test_years[0]

    gcn_model, sage_model = first_models
    truth = sub.traffic[:, pair_index(timestamp, direction),
                        sub.year_index(eval_year)].copy()
    gcn_pred = predict_task(gcn_model, sub, eval_year, (timestamp, direction))
    sage_pred = predict_task(sage_model, sub, eval_year, (timestamp, direction))

    xs = sage_model.feature_std.transform(
        build_task(sub, eval_year, timestamp, direction).X)
    self_t, neigh_t = sage_forward_decomposed(
        sage_model.conv_layers[0], Tensor(xs), sage_model.khop_index)

    return OversmoothingReport(
        stations=sub.stations,
        k=k,
        task=task_label(timestamp, direction),
        seeds=seeds,
        eval_year=int(eval_year),
        overlap_by_hop=overlap_by_hop,
        closed_groups=closed_groups,
        twin_pairs=twin_pairs,
        truth=truth,
        gcn_predictions=gcn_pred,
        sage_predictions=sage_pred,
        self_parts=self_t.values,
        neighbor_parts=neigh_t.values,
        gcn_test_mapes=tuple(gcn_mapes),
        sage_test_mapes=tuple(sage_mapes),
    )
